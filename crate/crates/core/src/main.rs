fn main() {
    std::process::exit(craf::cli::run(std::env::args_os()));
}

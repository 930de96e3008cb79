//! Numerical kernels: seeded Gaussian sampling, a dense symmetric
//! eigensolver, the error function and small vector/matrix helpers.

mod eigen;
mod linalg;
mod rng;

pub use eigen::{sym_eigen, top_eigenpair, SymEigen, SymMatrix};
pub use linalg::{axpy, dist2, dot, norm2, Matrix};
pub use rng::RngStream;

/// Gauss error function, `(2/sqrt(pi)) * integral_0^x exp(-t^2) dt`.
#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

#[cfg(test)]
mod tests {
    use super::erf;

    #[test]
    fn erf_reference_values() {
        assert_eq!(erf(0.0), 0.0);
        // Abramowitz & Stegun table values.
        let table = [
            (0.1, 0.112_462_916_018_284_9),
            (0.5, 0.520_499_877_813_046_5),
            (1.0, 0.842_700_792_949_714_9),
            (2.0, 0.995_322_265_018_952_7),
            (3.0, 0.999_977_909_503_001_4),
        ];
        for (x, want) in table {
            assert!((erf(x) - want).abs() <= 1e-12, "erf({x})");
            assert!((erf(-x) + want).abs() <= 1e-12, "erf(-{x})");
        }
        assert!(erf(0.5f64.sqrt()) >= 0.68);
        assert!(erf(6.0) >= 1.0 - 1e-12);
    }

    #[test]
    fn erf_is_monotone() {
        let mut prev = erf(-7.0);
        for i in -699..=700 {
            let v = erf(i as f64 * 0.01);
            assert!(v >= prev);
            prev = v;
        }
    }
}

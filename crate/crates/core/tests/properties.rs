use craf::model::{block_hard_threshold, dist, generate_instance, BlockStructure, ProblemInstance};
use craf::numerics::{dist2, RngStream};
use craf::refine::{
    amplitude_gradient, craf_solve, craf_solve_from, reweighted_gradient, reweighting_weights, sparta_solve_from, Beta,
    CrafParams, SpartaParams,
};
use craf::verify::brute_force_projection_distance;
use proptest::prelude::*;

fn instance(seed: u64, num_blocks: usize, block_len: usize, k: usize, m: usize) -> ProblemInstance {
    let blocks = BlockStructure::new(block_len, num_blocks).unwrap();
    generate_instance(blocks.dim(), m, k, blocks, 0.0, &mut RngStream::new(seed)).unwrap()
}

fn blocked_vector() -> impl Strategy<Value = (Vec<f64>, usize, usize)> {
    (1usize..=7, 1usize..=3).prop_flat_map(|(nb, b)| (prop::collection::vec(-10.0f64..10.0, nb * b), Just(b), 1..=nb))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_idempotent_and_optimal((u, b, k) in blocked_vector()) {
        let blocks = BlockStructure::new(b, u.len() / b).unwrap();
        let h = block_hard_threshold(&u, k, blocks);
        prop_assert!(blocks.nonzero_blocks(&h.z).len() <= k);
        prop_assert_eq!(&block_hard_threshold(&h.z, k, blocks).z, &h.z);
        prop_assert!(dist2(&u, &h.z) <= brute_force_projection_distance(&u, k, blocks));
    }

    #[test]
    fn sign_invariant_distance_is_symmetric(
        z in prop::collection::vec(-5.0f64..5.0, 6),
        x in prop::collection::vec(-5.0f64..5.0, 6),
    ) {
        let neg: Vec<f64> = z.iter().map(|v| -v).collect();
        prop_assert_eq!(dist(&z, &x), dist(&x, &z));
        prop_assert_eq!(dist(&z, &x), dist(&neg, &x));
        prop_assert!(dist(&z, &x) <= dist2(&z, &x));
    }

    #[test]
    fn weights_stay_in_range(seed in any::<u64>(), beta in 0.01f64..5.0, tau_w in 0.01f64..1.0) {
        let inst = instance(seed, 12, 2, 3, 50);
        let z = RngStream::with_stream(seed, 1).sample_standard_normal(inst.n());
        for w in reweighting_weights(&inst, &z, &Beta::Constant(beta), tau_w) {
            prop_assert!((tau_w..=1.0).contains(&w), "weight {} outside [{}, 1]", w, tau_w);
        }
    }

    #[test]
    fn vanishing_beta_recovers_amplitude_gradient(seed in any::<u64>()) {
        let inst = instance(seed, 20, 1, 4, 60);
        let z = RngStream::with_stream(seed, 1).sample_standard_normal(inst.n());
        let plain = amplitude_gradient(&inst, &z);
        let rw = reweighted_gradient(&inst, &z, &Beta::Constant(1e-12), 0.1);
        prop_assert!(dist2(&plain, &rw) <= 1e-8 * (1.0 + dist2(&plain, &vec![0.0; plain.len()])));
    }

    #[test]
    fn iterates_stay_block_sparse(seed in any::<u64>(), iters in 1usize..6) {
        let inst = instance(seed, 15, 2, 3, 60);
        let z0 = RngStream::with_stream(seed, 1).sample_standard_normal(inst.n());
        let craf = CrafParams { max_iters: iters, early_stop_tol: 0.0, ..CrafParams::default() };
        let sparta = SpartaParams { max_iters: iters, early_stop_tol: 0.0, ..SpartaParams::default() };
        let a = craf_solve_from(&inst, 3, &craf, z0.clone(), None).unwrap();
        let b = sparta_solve_from(&inst, 3, &sparta, z0, None).unwrap();
        prop_assert!(inst.blocks().nonzero_blocks(&a.estimate.z).len() <= 3);
        prop_assert!(inst.blocks().nonzero_blocks(&b.estimate.z).len() <= 3);
    }
}

#[test]
fn doubling_the_problem_doubles_every_iterate_exactly() {
    for seed in 0..8 {
        let inst = instance(seed, 60, 1, 4, 240);
        let big = inst.scaled(2.0);
        let params = CrafParams { max_iters: 30, early_stop_tol: 0.0, ..CrafParams::default() };
        for iters in [1, 5, 30] {
            let p = CrafParams { max_iters: iters, ..params.clone() };
            let small = craf_solve(&inst, 4, &p, None).unwrap().estimate.z;
            let large = craf_solve(&big, 4, &p, None).unwrap().estimate.z;
            let doubled: Vec<f64> = small.iter().map(|v| 2.0 * v).collect();
            assert_eq!(doubled, large, "seed {seed}, {iters} iterations");
        }
    }
}

#[test]
fn weights_along_a_trajectory_stay_in_range() {
    let inst = instance(3, 80, 1, 5, 300);
    let params = CrafParams::default();
    let mut z = craf::init::initialize(&inst, 5, &params.init).unwrap().z;
    let one = CrafParams { max_iters: 1, early_stop_tol: 0.0, ..params.clone() };
    for _ in 0..40 {
        for w in reweighting_weights(&inst, &z, &params.beta, params.tau_w) {
            assert!((params.tau_w..=1.0).contains(&w));
        }
        z = craf_solve_from(&inst, 5, &one, z, None).unwrap().estimate.z;
    }
}

mod common;

use bsquant::dynamics::{monodromy, FlowOptions};
use bsquant::invariants::reduce::unimodular_transform;
use bsquant::invariants::{cycle_action, cycle_maslov_index, lambda1_frame_loop, level_points, maslov_index};
use bsquant::lattice::enumerate_lattice;
use bsquant::{ClassicalSystem, ModelSpec, PhasePoint, Runner};
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn monodromies_are_symplectic() {
    let e = max_symplecticity_error(4, 1);
    assert!(e <= 1e-8, "{e:e}");
}

#[test]
fn joint_flows_commute() {
    let e = max_flow_commutator(6, 2);
    assert!(e <= 1e-8, "{e:e}");
}

#[test]
fn symbols_poisson_commute() {
    let e = max_poisson_bracket(200, 3);
    assert!(e <= 1e-10, "{e:e}");
}

#[test]
fn gradients_match_finite_differences() {
    let e = max_gradient_fd_error(50, 4);
    assert!(e <= 1e-6, "{e:e}");
}

#[test]
fn monte_carlo_error_falls_like_inverse_sqrt() {
    let errs = mc_standard_errors(&[10_000, 100_000, 1_000_000], 5);
    assert!(mc_scaling_ok(&errs), "{errs:?}");
}

#[test]
fn reruns_are_byte_identical() {
    assert!(deterministic(&load("ho2d_HL.cfg")));
    assert!(deterministic(&load("central2d.cfg")));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn poisson_bracket_vanishes_everywhere(z in prop::collection::vec(-3.0f64..3.0, 4), lambda in 0.0f64..1.0) {
        let sys = ClassicalSystem::from_spec(&ModelSpec::new("central2d").with("lambda", lambda), vec![1.0, 0.0]).unwrap();
        let scale = 1.0 + z.iter().map(|v| v * v).sum::<f64>().powi(3);
        prop_assert!(poisson_bracket(&sys, 0, 1, &z).abs() <= 1e-12 * scale);
        let hl = ClassicalSystem::from_spec(&ModelSpec::new("ho2d_hl"), vec![1.0, 0.0]).unwrap();
        prop_assert!(poisson_bracket(&hl, 0, 1, &z).abs() <= 1e-12 * scale);
    }

    #[test]
    fn gradients_agree_with_differences(z in prop::collection::vec(-2.0f64..2.0, 4), model in 1usize..5) {
        let sys = &library()[model];
        for j in 0..sys.k() {
            prop_assert!(gradient_fd_error(sys, j, &z) <= 1e-6);
        }
    }

    #[test]
    fn short_monodromies_are_symplectic(z in prop::collection::vec(-1.5f64..1.5, 4), t1 in -3.0f64..3.0, t2 in -3.0f64..3.0) {
        let sys = &library()[4];
        let p = PhasePoint::from_flat(&z).unwrap();
        let m = monodromy(sys, &[t1, t2], &p, &FlowOptions::default()).unwrap();
        prop_assert!(m.symplecticity_error() <= 1e-8);
    }
}

fn central_invariants() -> (ClassicalSystem, bsquant::runner::Invariants) {
    let mut cfg = load("central2d.cfg");
    cfg.mc = None;
    let runner = Runner::new(cfg);
    let base = runner.validate().unwrap().base_point;
    (runner.system().unwrap(), runner.invariants(&base).unwrap())
}

#[test]
fn maslov_index_is_linear_on_the_period_lattice() {
    let opts = FlowOptions::default();
    for cfg in ["ho2d_HL.cfg", "central2d.cfg"] {
        let mut cfg = load(cfg);
        cfg.mc = None;
        let runner = Runner::new(cfg);
        let sys = runner.system().unwrap();
        let inv = runner.invariants(&runner.validate().unwrap().base_point).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let z: Vec<i64> = (0..2).map(|_| rng.random_range(-3..=3)).collect();
            let t = inv.periods.combination(&z);
            let mu = cycle_maslov_index(&sys, &inv.periods.base, &t, 64, 1 << 16, 1e-9, &opts).unwrap();
            let expected: i64 = z.iter().zip(&inv.cycles.mu).map(|(a, b)| a * b).sum();
            assert_eq!(mu, expected, "z = {z:?}");
        }
    }
}

#[test]
fn maslov_index_is_stable_under_refinement_and_base_point() {
    let (sys, inv) = central_invariants();
    let opts = FlowOptions::default();
    let others = level_points(&sys, &inv.periods.base, 2, 21, 1e-12).unwrap();
    for (t, mu) in inv.periods.basis.iter().zip(&inv.cycles.mu) {
        let fine = lambda1_frame_loop(&sys, &inv.periods.base, t, 256, 1e-9, &opts).unwrap();
        assert_eq!(maslov_index(&fine).unwrap(), *mu);
        for q in &others {
            assert_eq!(cycle_maslov_index(&sys, q, t, 64, 1 << 14, 1e-9, &opts).unwrap(), *mu);
        }
    }
}

#[test]
fn cycle_actions_do_not_depend_on_the_base_point() {
    let (sys, inv) = central_invariants();
    let opts = FlowOptions::default();
    let points = level_points(&sys, &inv.periods.base, 5, 33, 1e-12).unwrap();
    for (t, alpha) in inv.periods.basis.iter().zip(&inv.cycles.alpha) {
        for q in &points {
            let a = cycle_action(&sys, q, t, 1e-9, &opts).unwrap();
            assert!((a - alpha).abs() <= 1e-6, "{a} vs {alpha}");
        }
    }
}

#[test]
fn lattice_is_independent_of_the_starting_point() {
    let mut cfg = load("central2d.cfg");
    cfg.mc = None;
    let runner = Runner::new(cfg);
    let sys = runner.system().unwrap();
    let base = runner.validate().unwrap().base_point;
    let first = runner.invariants(&base).unwrap();
    let other = level_points(&sys, &base, 1, 44, 1e-12).unwrap().remove(0);
    let second = runner.invariants(&other).unwrap();
    assert!(unimodular_transform(&first.periods.basis, &second.periods.basis, 1e-6).is_some());
    let h = 0.02;
    let a = enumerate_lattice(&first.lattice, h).unwrap();
    let b = enumerate_lattice(&second.lattice, h).unwrap();
    assert_eq!(a.len(), b.len());
    for (p, q) in a.iter().zip(&b) {
        let d: f64 = p.value.iter().zip(&q.value).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(d <= 1e-8, "{:?} vs {:?}", p.value, q.value);
    }
}

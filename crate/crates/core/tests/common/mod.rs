//! Checks shared by the property suite and the acceptance runner.
#![allow(dead_code)]

use std::path::PathBuf;

use bsquant::dynamics::{flow, monodromy, FlowOptions};
use bsquant::invariants::{liouville_volume, LiouvilleOptions};
use bsquant::{ClassicalSystem, Execution, ExperimentConfig, ModelSpec, PhasePoint, Runner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&config_path(name)).expect("bundled config parses")
}

pub fn pt(x: &[f64], xi: &[f64]) -> PhasePoint {
    PhasePoint::new(x.to_vec(), xi.to_vec()).unwrap()
}

/// Every library model with a representative level.
pub fn library() -> Vec<ClassicalSystem> {
    let specs = [
        (ModelSpec::new("ho1d").with("q1_const", 0.25).with("q1_linear", 0.1), vec![0.5]),
        (ModelSpec::new("ho2d_hl"), vec![1.0, 0.3]),
        (ModelSpec::new("ho2d_aniso").with("omega1", 1.0).with("omega2", 2f64.sqrt()), vec![1.0]),
        (ModelSpec::new("ho2d_energy"), vec![1.0]),
        (ModelSpec::new("central2d").with("lambda", 0.1), vec![1.5, 0.3]),
    ];
    specs.into_iter().map(|(s, e)| ClassicalSystem::from_spec(&s, e).unwrap()).collect()
}

pub fn random_point(rng: &mut ChaCha8Rng, n: usize) -> PhasePoint {
    let z: Vec<f64> = (0..2 * n).map(|_| 2.4 * rng.random::<f64>() - 1.2).collect();
    PhasePoint::from_flat(&z).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Largest `‖MᵀJM − J‖` over monodromies of random points and times.
pub fn max_symplecticity_error(samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = FlowOptions::default();
    let mut worst: f64 = 0.0;
    for sys in library() {
        for _ in 0..samples {
            let p = random_point(&mut rng, sys.n());
            let t: Vec<f64> = (0..sys.k()).map(|_| 6.0 * rng.random::<f64>() - 1.0).collect();
            worst = worst.max(monodromy(&sys, &t, &p, &opts).unwrap().symplecticity_error());
        }
    }
    worst
}

/// Largest distance between `Φ₂ ∘ Φ₁` and `Φ₁ ∘ Φ₂` for the k = 2 models.
pub fn max_flow_commutator(samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = FlowOptions::default();
    let mut worst: f64 = 0.0;
    for sys in library().into_iter().filter(|s| s.k() == 2) {
        for _ in 0..samples {
            let p = random_point(&mut rng, sys.n());
            let (t1, t2) = (4.0 * rng.random::<f64>(), 4.0 * rng.random::<f64>() - 2.0);
            let a = flow(&sys, &[0.0, t2], &flow(&sys, &[t1, 0.0], &p, &opts).unwrap().end, &opts).unwrap().end;
            let b = flow(&sys, &[t1, 0.0], &flow(&sys, &[0.0, t2], &p, &opts).unwrap().end, &opts).unwrap().end;
            worst = worst.max(dist(&a.to_flat(), &b.to_flat()));
        }
    }
    worst
}

fn gradient(sys: &ClassicalSystem, j: usize, z: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; z.len()];
    sys.symbol().gradient(j, z, &mut g);
    g
}

/// `{q₀ᵢ, q₀ⱼ}` at `z`.
pub fn poisson_bracket(sys: &ClassicalSystem, i: usize, j: usize, z: &[f64]) -> f64 {
    let n = sys.n();
    let (gi, gj) = (gradient(sys, i, z), gradient(sys, j, z));
    (0..n).map(|a| gi[n + a] * gj[a] - gi[a] * gj[n + a]).sum()
}

pub fn max_poisson_bracket(samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for sys in library().into_iter().filter(|s| s.k() == 2) {
        for _ in 0..samples {
            let z = random_point(&mut rng, sys.n()).to_flat();
            worst = worst.max(poisson_bracket(&sys, 0, 1, &z).abs());
        }
    }
    worst
}

/// Relative disagreement between analytic gradients and central differences.
pub fn gradient_fd_error(sys: &ClassicalSystem, j: usize, z: &[f64]) -> f64 {
    let g = gradient(sys, j, z);
    let step = 1e-6;
    let mut err: f64 = 0.0;
    for i in 0..z.len() {
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[i] += step;
        zm[i] -= step;
        let fd = (sys.symbol().value(j, &zp) - sys.symbol().value(j, &zm)) / (2.0 * step);
        err = err.max((fd - g[i]).abs());
    }
    let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    err / scale
}

pub fn max_gradient_fd_error(samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for sys in library() {
        for _ in 0..samples {
            let z = random_point(&mut rng, sys.n()).to_flat();
            for j in 0..sys.k() {
                worst = worst.max(gradient_fd_error(&sys, j, &z));
            }
        }
    }
    worst
}

/// Standard errors of the Liouville mass of the k = 1 isotropic oscillator
/// for each sample count.
pub fn mc_standard_errors(counts: &[usize], seed: u64) -> Vec<f64> {
    let sys = ClassicalSystem::from_spec(&ModelSpec::new("ho2d_energy"), vec![1.0]).unwrap();
    counts
        .iter()
        .map(|n| {
            let opts = LiouvilleOptions { n_samples: *n, seed, epsilon: Some(0.05), ..LiouvilleOptions::default() };
            liouville_volume(&sys, &[1.0], &opts).unwrap().std_err
        })
        .collect()
}

/// Consecutive error ratios for a tenfold sample increase lie within a
/// factor 2 of `√10`.
pub fn mc_scaling_ok(errors: &[f64]) -> bool {
    let ideal = 10f64.sqrt();
    errors.windows(2).all(|w| {
        let r = w[0] / w[1];
        r >= ideal / 2.0 && r <= ideal * 2.0
    })
}

fn strip_timestamp(json: &str) -> String {
    json.lines().filter(|l| !l.trim_start().starts_with("\"timestamp\"")).collect::<Vec<_>>().join("\n")
}

/// Runs `cfg` twice in parallel and once sequentially; true when the three
/// JSON outputs agree byte for byte apart from the timestamp.
pub fn deterministic(cfg: &ExperimentConfig) -> bool {
    let render = |exec: Execution| {
        let bundle = Runner::new(cfg.clone()).with_execution(exec).run().unwrap();
        strip_timestamp(&bsquant::report::to_json(&bundle).unwrap())
    };
    let a = render(Execution::Parallel);
    let b = render(Execution::Parallel);
    let c = render(Execution::Sequential);
    a == b && a == c
}

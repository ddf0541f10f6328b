//! Monte Carlo estimate of the Liouville mass `∫_{Σ₀} dν` by thin-shell
//! rejection sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::phase::ClassicalSystem;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiouvilleOptions {
    pub n_samples: usize,
    pub seed: u64,
    /// Shell half-width; defaults to `1e-3·‖E₀‖ + 1e-3`.
    pub epsilon: Option<f64>,
    pub batch_size: usize,
    /// Sampling box; the model's own bound is used when absent.
    pub bounding_box: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for LiouvilleOptions {
    fn default() -> Self {
        Self {
            n_samples: 1_000_000,
            seed: 2024,
            epsilon: None,
            batch_size: 1 << 14,
            bounding_box: None,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleEstimate {
    /// `∫_{Σ₀} dν` and its 1σ error.
    pub mass: f64,
    pub std_err: f64,
    /// Same estimator with the shell halved, as a bias check.
    pub mass_half_epsilon: f64,
    pub std_err_half_epsilon: f64,
    /// `∫_{Σ₀} ‖dq₀₁∧…∧dq₀ₖ‖ dν`, the Euclidean surface measure of `Σ₀`.
    pub surface_area: f64,
    pub surface_area_err: f64,
    pub epsilon: f64,
    pub accepted: u64,
    pub n_samples: u64,
    pub box_volume: f64,
}

impl LiouvilleEstimate {
    /// `(2π)⁻ⁿ ∫ dν`.
    pub fn density_mass(&self, n: usize) -> f64 {
        self.mass / (2.0 * std::f64::consts::PI).powi(n as i32)
    }
}

#[derive(Default, Clone, Copy)]
struct Tally {
    inside: u64,
    inside_half: u64,
    gram: f64,
    gram_sq: f64,
}

fn batch_rng(seed: u64, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    rng
}

pub fn liouville_volume(sys: &ClassicalSystem, e0: &[f64], opts: &LiouvilleOptions) -> Result<LiouvilleEstimate> {
    let k = sys.k();
    let n2 = 2 * sys.n();
    if e0.len() != k {
        return Err(Error::Dimension { expected: k, got: e0.len() });
    }
    if opts.n_samples == 0 || opts.batch_size == 0 {
        return Err(Error::Input("Monte Carlo needs n_samples > 0 and batch_size > 0".into()));
    }
    let e_norm = e0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let eps = opts.epsilon.unwrap_or(1e-3 * e_norm + 1e-3);
    if !(eps > 0.0) {
        return Err(Error::Input("shell half-width must be positive".into()));
    }
    let bbox = match &opts.bounding_box {
        Some(b) => b.clone(),
        None => {
            // box around the outer edge of the shell
            let outer: Vec<f64> = e0.iter().map(|e| e + eps).collect();
            sys.symbol()
                .bounding_box(&outer)
                .ok_or_else(|| Error::Input(format!("no bounding box known for {} at {e0:?}", sys.name)))?
        }
    };
    if bbox.len() != n2 || bbox.iter().any(|(lo, hi)| !(hi > lo)) {
        return Err(Error::Input("bounding box must give 2n nonempty intervals".into()));
    }
    let volume: f64 = bbox.iter().map(|(lo, hi)| hi - lo).product();
    let n_batches = opts.n_samples.div_ceil(opts.batch_size);
    let tallies = exec::map_indexed(opts.execution, n_batches, |b| {
        let mut rng = batch_rng(opts.seed, b as u64);
        let count = opts.batch_size.min(opts.n_samples - b * opts.batch_size);
        let mut z = vec![0.0; n2];
        let mut q = vec![0.0; k];
        let mut t = Tally::default();
        for _ in 0..count {
            for (zi, (lo, hi)) in z.iter_mut().zip(&bbox) {
                *zi = lo + (hi - lo) * rng.random::<f64>();
            }
            sys.q0_flat(&z, &mut q);
            let dev = q.iter().zip(e0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if dev <= eps {
                t.inside += 1;
                if dev <= 0.5 * eps {
                    t.inside_half += 1;
                }
                let jac = sys.jacobian(&z);
                let g = (&jac * jac.transpose()).determinant().max(0.0).sqrt();
                t.gram += g;
                t.gram_sq += g * g;
            }
        }
        t
    });
    // Sequential reduction keeps the result independent of the execution mode.
    let mut tot = Tally::default();
    for t in tallies {
        tot.inside += t.inside;
        tot.inside_half += t.inside_half;
        tot.gram += t.gram;
        tot.gram_sq += t.gram_sq;
    }
    let n = opts.n_samples as f64;
    let rate = tot.inside as f64 / n;
    if tot.inside == 0 || rate < 1e-6 {
        return Err(Error::SamplerStarvation { rate, samples: opts.n_samples });
    }
    let shell = |w: f64| (2.0 * w).powi(k as i32);
    let est = |count: u64, w: f64| {
        let p = count as f64 / n;
        let scale = volume / shell(w);
        (scale * p, scale * (p * (1.0 - p) / n).sqrt())
    };
    let (mass, std_err) = est(tot.inside, eps);
    let (mass_half, err_half) = est(tot.inside_half, 0.5 * eps);
    let scale = volume / shell(eps);
    let mean_g = tot.gram / n;
    let var_g = (tot.gram_sq / n - mean_g * mean_g).max(0.0);
    Ok(LiouvilleEstimate {
        mass,
        std_err,
        mass_half_epsilon: mass_half,
        std_err_half_epsilon: err_half,
        surface_area: scale * mean_g,
        surface_area_err: scale * (var_g / n).sqrt(),
        epsilon: eps,
        accepted: tot.inside,
        n_samples: opts.n_samples as u64,
        box_volume: volume,
    })
}

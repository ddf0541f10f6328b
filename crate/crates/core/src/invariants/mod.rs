//! Geometric invariants of the level set: period lattice, cycle actions,
//! Maslov indices, subprincipal integrals and the Liouville mass.

mod liouville;
mod maslov;
mod period;
pub mod reduce;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use liouville::{liouville_volume, LiouvilleEstimate, LiouvilleOptions};
pub use maslov::{
    cycle_maslov_index, isotropy_residual, lambda1_frame_loop, maslov_index, principal_angle, LagrangianFrameLoop,
};
pub use period::{detect_period_lattice, PeriodLattice, PeriodOptions};

use crate::dynamics::{distance, flow, integrate_line, FlowOptions};
use crate::error::{Error, Hypothesis, Result};
use crate::phase::{find_level_point, ClassicalSystem, PhasePoint};

/// Flow options tight enough that integration error stays well below
/// `tol_period`.
pub(crate) fn precise(opts: &FlowOptions, tol_period: f64) -> FlowOptions {
    FlowOptions { tol_flow: opts.tol_flow.min(1e-3 * tol_period).max(1e-14), ..*opts }
}

pub(crate) fn check_period(
    sys: &ClassicalSystem,
    p: &PhasePoint,
    t: &[f64],
    tol_period: f64,
    fine: &FlowOptions,
) -> Result<f64> {
    let seg = flow(sys, t, p, fine)?;
    let r = distance(&seg.end.to_flat(), &p.to_flat());
    if r > tol_period {
        return Err(Error::Precondition(format!("{t:?} is not a period (return residual {r:e})")));
    }
    Ok(r)
}

/// `count` further points of the level set through `p`: random
/// perturbations projected back onto `Σ₀`, then moved by a random joint
/// flow time so that they spread over the torus.
pub fn level_points(sys: &ClassicalSystem, p: &PhasePoint, count: usize, seed: u64, tol: f64) -> Result<Vec<PhasePoint>> {
    let e0 = sys.q0_vec(&p.to_flat());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 0.2 * p.norm().max(0.1);
    let mut out = Vec::with_capacity(count);
    let opts = FlowOptions::default();
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 50 * count.max(1) {
            return Err(Error::RootFind { iterations: attempts, residual: f64::NAN });
        }
        let z: Vec<f64> = p.to_flat().iter().map(|v| v + scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let Ok(q) = find_level_point(sys, &e0, &PhasePoint::from_flat(&z)?, tol.max(1e-13)) else {
            continue;
        };
        let t: Vec<f64> = (0..sys.k()).map(|_| 2.0 * std::f64::consts::PI * rng.random::<f64>()).collect();
        let moved = flow(sys, &t, &q, &opts)?.end;
        out.push(find_level_point(sys, &e0, &moved, tol.max(1e-13))?);
    }
    Ok(out)
}

/// Action `∮ ξ·dx` of the closed trajectory `γ^T(p)`.
pub fn cycle_action(sys: &ClassicalSystem, p: &PhasePoint, t: &[f64], tol_period: f64, opts: &FlowOptions) -> Result<f64> {
    let fine = precise(opts, tol_period);
    let seg = flow(sys, t, p, &fine)?;
    let r = distance(&seg.end.to_flat(), &p.to_flat());
    if r > tol_period {
        return Err(Error::Precondition(format!("{t:?} is not a period (return residual {r:e})")));
    }
    Ok(seg.action)
}

/// `∫₀¹ ⟨q₁(Ψ^{sT}p), T⟩ ds` at a single base point.
fn subprincipal_at(sys: &ClassicalSystem, p: &PhasePoint, t: &[f64], tol_period: f64, opts: &FlowOptions) -> Result<f64> {
    if sys.subprincipal_vanishes() || t.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let fine = precise(opts, tol_period);
    let z0 = p.to_flat();
    let run = integrate_line(sys, t, &z0, &[1.0], false, &fine)?;
    let r = distance(&run.samples[0].z, &z0);
    if r > tol_period {
        return Err(Error::Precondition(format!("{t:?} is not a period (return residual {r:e})")));
    }
    Ok(run.samples[0].sub)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubprincipalIntegral {
    pub value: f64,
    /// `max − min` over the base point and the extra check points.
    pub spread: f64,
}

/// Subprincipal integral over the cycle `γ^T`, with its base-point spread
/// checked on `check_points` further points of `Σ₀`.
pub fn subprincipal_cycle_integral(
    sys: &ClassicalSystem,
    p: &PhasePoint,
    t: &[f64],
    opts: &InvariantOptions,
) -> Result<SubprincipalIntegral> {
    let value = subprincipal_at(sys, p, t, opts.tol_period, &opts.flow)?;
    if sys.subprincipal_vanishes() {
        return Ok(SubprincipalIntegral { value, spread: 0.0 });
    }
    let (mut lo, mut hi) = (value, value);
    for q in level_points(sys, p, opts.check_points, opts.seed, 1e-12)? {
        let v = subprincipal_at(sys, &q, t, opts.tol_period, &opts.flow)?;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let spread = hi - lo;
    if spread > opts.tol_sub {
        return Err(Error::violation(
            Hypothesis::H3Prime,
            format!("subprincipal integral over {t:?} varies by {spread:e} across the level set"),
        ));
    }
    Ok(SubprincipalIntegral { value, spread })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvariantOptions {
    pub tol_period: f64,
    /// Base-point spread allowed for cycle actions.
    pub tol_action: f64,
    pub tol_sub: f64,
    pub n_frames: usize,
    pub max_frames: usize,
    pub check_points: usize,
    pub seed: u64,
    pub flow: FlowOptions,
}

impl Default for InvariantOptions {
    fn default() -> Self {
        Self {
            tol_period: 1e-9,
            tol_action: 1e-6,
            tol_sub: 1e-6,
            n_frames: 64,
            max_frames: 1 << 14,
            check_points: 3,
            seed: 17,
            flow: FlowOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleInvariants {
    pub alpha: Vec<f64>,
    pub mu: Vec<i64>,
    pub delta: Vec<f64>,
    /// Largest base-point spread of each cycle action.
    pub alpha_spread: Vec<f64>,
    pub delta_spread: Vec<f64>,
}

/// Actions, Maslov indices and subprincipal integrals of the basic cycles
/// of `lattice`, each action re-evaluated at further level-set points.
pub fn cycle_invariants(
    sys: &ClassicalSystem,
    lattice: &PeriodLattice,
    opts: &InvariantOptions,
) -> Result<CycleInvariants> {
    let p = &lattice.base;
    let others = level_points(sys, p, opts.check_points, opts.seed, 1e-12)?;
    let k = lattice.k();
    let mut inv = CycleInvariants {
        alpha: Vec::with_capacity(k),
        mu: Vec::with_capacity(k),
        delta: Vec::with_capacity(k),
        alpha_spread: Vec::with_capacity(k),
        delta_spread: Vec::with_capacity(k),
    };
    for t in &lattice.basis {
        let a = cycle_action(sys, p, t, opts.tol_period, &opts.flow)?;
        let mut spread: f64 = 0.0;
        for q in &others {
            let aq = cycle_action(sys, q, t, opts.tol_period, &opts.flow)?;
            spread = spread.max((aq - a).abs());
        }
        if spread > opts.tol_action {
            return Err(Error::violation(
                Hypothesis::H2,
                format!("action of cycle {t:?} depends on the base point (spread {spread:e})"),
            ));
        }
        let mu = cycle_maslov_index(sys, p, t, opts.n_frames, opts.max_frames, opts.tol_period, &opts.flow)?;
        let sub = subprincipal_cycle_integral(sys, p, t, opts)?;
        inv.alpha.push(a);
        inv.alpha_spread.push(spread);
        inv.mu.push(mu);
        inv.delta.push(sub.value);
        inv.delta_spread.push(sub.spread);
    }
    Ok(inv)
}

//! Hamiltonian flows, joint flows, their linearization, and the action
//! integral `∫ξ·dx` carried along as an extra state variable.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{ClassicalSystem, PhasePoint};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlowOptions {
    /// Per-unit-time local error tolerance of the adaptive integrator.
    pub tol_flow: f64,
    /// Bound on `‖MᵀJM − J‖` accepted for a monodromy matrix.
    pub tol_symp: f64,
    pub max_steps: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { tol_flow: 1e-10, tol_symp: 1e-8, max_steps: 5_000_000 }
    }
}

/// A joint-flow trajectory `s ↦ Ψ^{st}(start)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub start: PhasePoint,
    pub t: Vec<f64>,
    pub end: PhasePoint,
    /// `∫ ξ·dx` along the path.
    pub action: f64,
    pub steps: usize,
    pub max_energy_drift: f64,
    /// Set when the drift exceeded ten times the flow tolerance.
    pub drift_warning: bool,
}

#[derive(Debug, Clone)]
pub struct Monodromy {
    pub base: PhasePoint,
    pub t: Vec<f64>,
    pub m: DMatrix<f64>,
    /// `false` when Hessians came from finite differences.
    pub analytic_hessians: bool,
}

impl Monodromy {
    pub fn symplecticity_error(&self) -> f64 {
        symplectic_defect(&self.m)
    }
}

/// Canonical structure matrix `J = [[0, I], [−I, 0]]` on `R²ⁿ`.
pub fn structure_matrix(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

pub(crate) fn symplectic_defect(m: &DMatrix<f64>) -> f64 {
    let j = structure_matrix(m.nrows() / 2);
    (m.transpose() * &j * m - j).amax()
}

/// Hamiltonian field of `q₀ⱼ` at `p` (0-based `j`).
pub fn hamiltonian_field(sys: &ClassicalSystem, j: usize, p: &PhasePoint) -> Result<Vec<f64>> {
    let z = p.to_flat();
    sys.check_flat(&z)?;
    if j >= sys.k() {
        return Err(Error::Input(format!("component {j} out of range (k = {})", sys.k())));
    }
    let mut out = vec![0.0; z.len()];
    sys.field_flat(j, &z, &mut out);
    Ok(out)
}

/// State sampled at one of the requested output parameters.
#[derive(Debug, Clone)]
pub(crate) struct Sample {
    pub z: Vec<f64>,
    pub action: f64,
    pub sub: f64,
    pub m: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct LineRun {
    pub samples: Vec<Sample>,
    pub steps: usize,
    pub max_drift: f64,
    pub analytic_hessians: bool,
}

struct Rhs<'a> {
    sys: &'a ClassicalSystem,
    w: &'a [f64],
    n: usize,
    variational: bool,
    subprincipal: bool,
    grad: Vec<f64>,
    field: Vec<f64>,
    hess: DMatrix<f64>,
    hsum: DMatrix<f64>,
    analytic: bool,
}

impl<'a> Rhs<'a> {
    fn new(sys: &'a ClassicalSystem, w: &'a [f64], variational: bool) -> Self {
        let n = sys.n();
        Self {
            sys,
            w,
            n,
            variational,
            subprincipal: !sys.subprincipal_vanishes(),
            grad: vec![0.0; 2 * n],
            field: vec![0.0; 2 * n],
            hess: DMatrix::zeros(2 * n, 2 * n),
            hsum: DMatrix::zeros(2 * n, 2 * n),
            analytic: true,
        }
    }

    fn dim(&self) -> usize {
        let n2 = 2 * self.n;
        n2 + 2 + if self.variational { n2 * n2 } else { 0 }
    }

    fn eval(&mut self, y: &[f64], dy: &mut [f64]) {
        let n = self.n;
        let n2 = 2 * n;
        let z = &y[..n2];
        self.field.fill(0.0);
        let mut sub = 0.0;
        for (j, &wj) in self.w.iter().enumerate() {
            if wj == 0.0 {
                continue;
            }
            self.sys.symbol().gradient(j, z, &mut self.grad);
            for i in 0..n {
                self.field[i] += wj * self.grad[n + i];
                self.field[n + i] -= wj * self.grad[i];
            }
            if self.subprincipal {
                sub += wj * self.sys.subprincipal_flat(j, z);
            }
        }
        dy[..n2].copy_from_slice(&self.field);
        dy[n2] = (0..n).map(|i| z[n + i] * self.field[i]).sum();
        dy[n2 + 1] = sub;
        if self.variational {
            self.hsum.fill(0.0);
            for (j, &wj) in self.w.iter().enumerate() {
                if wj == 0.0 {
                    continue;
                }
                self.analytic &= self.sys.hessian(j, z, &mut self.hess);
                self.hsum.zip_apply(&self.hess, |a, b| *a += wj * b);
            }
            let off = n2 + 2;
            // dM/ds = J·S·M, M stored column-major.
            for c in 0..n2 {
                let col = &y[off + c * n2..off + (c + 1) * n2];
                for r in 0..n2 {
                    let (row, sign) = if r < n { (r + n, 1.0) } else { (r - n, -1.0) };
                    let mut acc = 0.0;
                    for (q, v) in col.iter().enumerate() {
                        acc += self.hsum[(row, q)] * v;
                    }
                    dy[off + c * n2 + r] = sign * acc;
                }
            }
        }
    }
}

// Dormand–Prince 5(4) tableau; the fields are autonomous so the nodes are unused.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates the field `Σⱼ wⱼ J∇q₀ⱼ` from `s = 0` through the increasing
/// output parameters `outputs`, landing exactly on each of them.
pub(crate) fn integrate_line(
    sys: &ClassicalSystem,
    w: &[f64],
    z0: &[f64],
    outputs: &[f64],
    variational: bool,
    opts: &FlowOptions,
) -> Result<LineRun> {
    let n2 = z0.len();
    let mut rhs = Rhs::new(sys, w, variational);
    let dim = rhs.dim();
    let mut y = vec![0.0; dim];
    y[..n2].copy_from_slice(z0);
    if variational {
        for i in 0..n2 {
            y[n2 + 2 + i * n2 + i] = 1.0;
        }
    }
    let q_start = sys.q0_vec(z0);
    let mut q_now = vec![0.0; sys.k()];
    let to_sample = |y: &[f64]| Sample {
        z: y[..n2].to_vec(),
        action: y[n2],
        sub: y[n2 + 1],
        m: if variational {
            Some(DMatrix::from_column_slice(n2, n2, &y[n2 + 2..]))
        } else {
            None
        },
    };

    let mut samples = Vec::with_capacity(outputs.len());
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
    let mut tmp = vec![0.0; dim];
    let mut y5 = vec![0.0; dim];
    let mut s = 0.0;
    let mut steps = 0usize;
    let mut max_drift: f64 = 0.0;
    let tol = opts.tol_flow;

    rhs.eval(&y, &mut k[0]);
    let speed = k[0][..n2].iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut h = if speed > 0.0 { (0.01 / speed).min(0.1) } else { 0.1 };

    for &target in outputs {
        if target < s {
            return Err(Error::Input("output parameters must be increasing".into()));
        }
        while target - s > 1e-15 * target.abs().max(1.0) {
            if steps >= opts.max_steps {
                return Err(Error::Integration { at: s, reason: "step budget exhausted".into() });
            }
            let last = h >= target - s;
            let hs = if last { target - s } else { h };
            for st in 1..7 {
                for i in 0..dim {
                    let mut acc = y[i];
                    for (r, a) in A[st].iter().enumerate().take(st) {
                        acc += hs * a * k[r][i];
                    }
                    tmp[i] = acc;
                }
                rhs.eval(&tmp, &mut k[st]);
                if st == 6 {
                    y5.copy_from_slice(&tmp);
                }
            }
            // Error-per-unit-step control, mixed absolute/relative scale.
            let mut err: f64 = 0.0;
            for i in 0..dim {
                let mut e = 0.0;
                for (r, ec) in E.iter().enumerate() {
                    e += ec * k[r][i];
                }
                let scale = 1.0 + y[i].abs().max(y5[i].abs());
                err = err.max((e.abs()) / scale);
            }
            let err = err / tol;
            if !err.is_finite() {
                h *= 0.1;
                if h < 1e-14 * s.abs().max(1.0) {
                    return Err(Error::Integration { at: s, reason: "non-finite state".into() });
                }
                continue;
            }
            if err <= 1.0 {
                s = if last { target } else { s + hs };
                y.copy_from_slice(&y5);
                k.swap(0, 6);
                steps += 1;
                sys.q0_flat(&y[..n2], &mut q_now);
                let drift = q_now
                    .iter()
                    .zip(&q_start)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                max_drift = max_drift.max(drift);
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || fac < 1.0 {
                    h = hs * fac;
                }
            } else {
                h = hs * (0.9 * err.powf(-0.25)).clamp(0.1, 0.9);
                if h < 1e-14 * s.abs().max(1.0) {
                    return Err(Error::Integration { at: s, reason: "step size underflow".into() });
                }
            }
        }
        samples.push(to_sample(&y));
    }
    Ok(LineRun { samples, steps, max_drift, analytic_hessians: rhs.analytic })
}

fn unit_weights(k: usize, j: usize, t: f64) -> Vec<f64> {
    let mut w = vec![0.0; k];
    w[j] = t;
    w
}

/// Joint flow `Ψᵗ(p) = Φ₁^{t₁} ∘ … ∘ Φₖ^{tₖ}(p)`: the component flows are
/// applied right to left, the action accumulates along the composite path.
pub fn flow(sys: &ClassicalSystem, t: &[f64], p: &PhasePoint, opts: &FlowOptions) -> Result<TrajectorySegment> {
    let z0 = p.to_flat();
    sys.check_flat(&z0)?;
    if t.len() != sys.k() {
        return Err(Error::Dimension { expected: sys.k(), got: t.len() });
    }
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("flow time must be finite".into()));
    }
    let q_start = sys.q0_vec(&z0);
    let mut z = z0;
    let mut action = 0.0;
    let mut steps = 0;
    let mut max_drift: f64 = 0.0;
    for j in (0..sys.k()).rev() {
        if t[j] == 0.0 {
            continue;
        }
        let w = unit_weights(sys.k(), j, t[j]);
        let run = integrate_line(sys, &w, &z, &[1.0], false, opts)?;
        let end = run.samples.into_iter().next().expect("one output requested");
        // drift relative to the overall start point
        let q_end = sys.q0_vec(&end.z);
        let d_end = q_end.iter().zip(&q_start).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        max_drift = max_drift.max(run.max_drift).max(d_end);
        z = end.z;
        action += end.action;
        steps += run.steps;
    }
    Ok(TrajectorySegment {
        start: p.clone(),
        t: t.to_vec(),
        end: PhasePoint::from_flat(&z)?,
        action,
        steps,
        max_energy_drift: max_drift,
        drift_warning: max_drift > 10.0 * opts.tol_flow,
    })
}

/// Derivative of the joint flow `dΨᵗ(p)`, from the variational equation
/// along the straight path `s ↦ Ψ^{st}(p)`.
pub fn monodromy(sys: &ClassicalSystem, t: &[f64], p: &PhasePoint, opts: &FlowOptions) -> Result<Monodromy> {
    let z0 = p.to_flat();
    sys.check_flat(&z0)?;
    if t.len() != sys.k() {
        return Err(Error::Dimension { expected: sys.k(), got: t.len() });
    }
    let n2 = z0.len();
    if t.iter().all(|v| *v == 0.0) {
        return Ok(Monodromy { base: p.clone(), t: t.to_vec(), m: DMatrix::identity(n2, n2), analytic_hessians: true });
    }
    let run = integrate_line(sys, t, &z0, &[1.0], true, opts)?;
    let m = run.samples[0].m.clone().expect("variational run");
    let defect = symplectic_defect(&m);
    if defect > opts.tol_symp {
        return Err(Error::Integration {
            at: 1.0,
            reason: format!("monodromy lost symplecticity ({defect:e} > {:e})", opts.tol_symp),
        });
    }
    Ok(Monodromy { base: p.clone(), t: t.to_vec(), m, analytic_hessians: run.analytic_hessians })
}

/// Fixed-step Störmer–Verlet flow of a single separable component
/// `q₀ⱼ = T(ξ) + V(x)`.
pub fn verlet_flow(
    sys: &ClassicalSystem,
    j: usize,
    t: f64,
    p: &PhasePoint,
    steps: usize,
) -> Result<TrajectorySegment> {
    if j >= sys.k() {
        return Err(Error::Input(format!("component {j} out of range (k = {})", sys.k())));
    }
    if !sys.symbol().separable(j) {
        return Err(Error::Unsupported(format!("component {j} of {} is not separable", sys.name)));
    }
    if steps == 0 {
        return Err(Error::Input("verlet needs at least one step".into()));
    }
    let n = sys.n();
    let mut z = p.to_flat();
    sys.check_flat(&z)?;
    let q_start = sys.q0_vec(&z);
    let dt = t / steps as f64;
    let mut g = vec![0.0; 2 * n];
    let mut action = 0.0;
    let mut max_drift: f64 = 0.0;
    for _ in 0..steps {
        sys.symbol().gradient(j, &z, &mut g);
        for i in 0..n {
            z[n + i] -= 0.5 * dt * g[i];
        }
        sys.symbol().gradient(j, &z, &mut g);
        for i in 0..n {
            let dx = dt * g[n + i];
            action += z[n + i] * dx;
            z[i] += dx;
        }
        sys.symbol().gradient(j, &z, &mut g);
        for i in 0..n {
            z[n + i] -= 0.5 * dt * g[i];
        }
        let q = sys.q0_vec(&z);
        let d = q.iter().zip(&q_start).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        max_drift = max_drift.max(d);
    }
    let mut tv = vec![0.0; sys.k()];
    tv[j] = t;
    Ok(TrajectorySegment {
        start: p.clone(),
        t: tv,
        end: PhasePoint::from_flat(&z)?,
        action,
        steps,
        max_energy_drift: max_drift,
        drift_warning: false,
    })
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

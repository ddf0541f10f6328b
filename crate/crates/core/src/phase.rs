//! Phase-space data model: points, systems, energy levels, and the
//! hypothesis checks that can be run on them.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, FlowOptions};
use crate::error::{Error, Result};
use crate::models::{JointSymbol, Model, ModelSpec};

/// A point `(x, ξ)` of `T*Rⁿ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, xi: Vec<f64>) -> Result<Self> {
        if x.len() != xi.len() {
            return Err(Error::Dimension { expected: x.len(), got: xi.len() });
        }
        if x.is_empty() {
            return Err(Error::Input("phase point must have n >= 1".into()));
        }
        if x.iter().chain(xi.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Input("phase point has non-finite coordinates".into()));
        }
        Ok(Self { x, xi })
    }

    /// Builds a point from the flat layout `(x₁..xₙ, ξ₁..ξₙ)`.
    pub fn from_flat(z: &[f64]) -> Result<Self> {
        if !z.len().is_multiple_of(2) {
            return Err(Error::Input(format!("flat phase vector has odd length {}", z.len())));
        }
        let n = z.len() / 2;
        Self::new(z[..n].to_vec(), z[n..].to_vec())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut z = self.x.clone();
        z.extend_from_slice(&self.xi);
        z
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn norm(&self) -> f64 {
        self.x.iter().chain(self.xi.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// A family of `k` commuting classical Hamiltonians together with the
/// energy level of interest.
#[derive(Debug, Clone)]
pub struct ClassicalSystem {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub e0: Vec<f64>,
    symbol: Arc<dyn JointSymbol>,
}

impl ClassicalSystem {
    pub fn new(name: &str, symbol: Arc<dyn JointSymbol>, e0: Vec<f64>) -> Result<Self> {
        let k = symbol.k();
        let n = symbol.n();
        if k == 0 || n == 0 {
            return Err(Error::Input("need n >= 1 and k >= 1".into()));
        }
        if k > n {
            return Err(Error::Input(format!("k = {k} commuting Hamiltonians exceed n = {n}")));
        }
        if e0.len() != k {
            return Err(Error::Dimension { expected: k, got: e0.len() });
        }
        if e0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("E0 must be finite".into()));
        }
        Ok(Self { name: name.to_string(), params: BTreeMap::new(), e0, symbol })
    }

    /// Looks a model up in the built-in library.
    pub fn from_spec(spec: &ModelSpec, e0: Vec<f64>) -> Result<Self> {
        let model: Model = spec.build()?;
        let mut sys = Self::new(model.name(), Arc::new(model), e0)?;
        sys.params = spec.params.clone();
        Ok(sys)
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec { name: self.name.clone(), params: self.params.clone() }
    }

    pub fn symbol(&self) -> &dyn JointSymbol {
        self.symbol.as_ref()
    }

    pub fn n(&self) -> usize {
        self.symbol.n()
    }

    pub fn k(&self) -> usize {
        self.symbol.k()
    }

    /// `true` when the subprincipal symbol vanishes identically.
    pub fn subprincipal_vanishes(&self) -> bool {
        !self.symbol.has_subprincipal()
    }

    pub fn with_e0(&self, e0: Vec<f64>) -> Result<Self> {
        let mut s = Self::new(&self.name, self.symbol.clone(), e0)?;
        s.params = self.params.clone();
        Ok(s)
    }

    pub(crate) fn check_flat(&self, z: &[f64]) -> Result<()> {
        if z.len() != 2 * self.n() {
            return Err(Error::Dimension { expected: 2 * self.n(), got: z.len() });
        }
        Ok(())
    }

    pub(crate) fn q0_flat(&self, z: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.symbol.value(j, z);
        }
    }

    pub(crate) fn q0_vec(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k()];
        self.q0_flat(z, &mut out);
        out
    }

    /// `k × 2n` Jacobian of `q₀`.
    pub(crate) fn jacobian(&self, z: &[f64]) -> DMatrix<f64> {
        let n2 = 2 * self.n();
        let mut jac = DMatrix::zeros(self.k(), n2);
        let mut g = vec![0.0; n2];
        for j in 0..self.k() {
            self.symbol.gradient(j, z, &mut g);
            for (c, v) in g.iter().enumerate() {
                jac[(j, c)] = *v;
            }
        }
        jac
    }

    /// Hamiltonian field `J∇q₀ⱼ = (∂q₀ⱼ/∂ξ, −∂q₀ⱼ/∂x)`.
    pub(crate) fn field_flat(&self, j: usize, z: &[f64], out: &mut [f64]) {
        let n = self.n();
        let mut g = vec![0.0; 2 * n];
        self.symbol.gradient(j, z, &mut g);
        for i in 0..n {
            out[i] = g[n + i];
            out[n + i] = -g[i];
        }
    }

    /// Hessian of `q₀ⱼ`. Returns `false` in the second slot when the model had
    /// no analytic Hessian and central differences (step `1e-5`) were used.
    pub(crate) fn hessian(&self, j: usize, z: &[f64], out: &mut DMatrix<f64>) -> bool {
        if self.symbol.hessian(j, z, out) {
            return true;
        }
        let n2 = z.len();
        let step = 1e-5;
        let mut zp = z.to_vec();
        let mut gp = vec![0.0; n2];
        let mut gm = vec![0.0; n2];
        for c in 0..n2 {
            zp[c] = z[c] + step;
            self.symbol.gradient(j, &zp, &mut gp);
            zp[c] = z[c] - step;
            self.symbol.gradient(j, &zp, &mut gm);
            zp[c] = z[c];
            for r in 0..n2 {
                out[(r, c)] = (gp[r] - gm[r]) / (2.0 * step);
            }
        }
        let sym = (&*out + out.transpose()) * 0.5;
        out.copy_from(&sym);
        false
    }

    pub(crate) fn subprincipal_flat(&self, j: usize, z: &[f64]) -> f64 {
        self.symbol.subprincipal(j, z)
    }
}

/// Evaluates `(q₀₁(p), …, q₀ₖ(p))`.
pub fn evaluate_joint_symbol(sys: &ClassicalSystem, p: &PhasePoint) -> Result<Vec<f64>> {
    let z = p.to_flat();
    sys.check_flat(&z)?;
    Ok(sys.q0_vec(&z))
}

/// The level set `Σ₀ = q₀⁻¹(E₀)`, represented by seed points on it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyLevel {
    pub e0: Vec<f64>,
    pub seed_points: Vec<PhasePoint>,
    pub tol_level: f64,
    /// Connectedness is asserted by model metadata, never computed.
    pub connected_asserted: bool,
}

impl EnergyLevel {
    pub fn new(sys: &ClassicalSystem, seed_points: Vec<PhasePoint>, tol_level: f64) -> Result<Self> {
        for p in &seed_points {
            let q = evaluate_joint_symbol(sys, p)?;
            let res = dist(&q, &sys.e0);
            if res > tol_level {
                return Err(Error::Input(format!("seed point is off the level set (residual {res:e})")));
            }
        }
        Ok(Self {
            e0: sys.e0.clone(),
            seed_points,
            tol_level,
            connected_asserted: sys.symbol().level_connected(&sys.e0),
        })
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Invertible change of basis whose columns are the lattice vectors `e_j`.
/// Serialized as the rows of `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct BasisChange {
    pub a: DMatrix<f64>,
    pub a_inv: DMatrix<f64>,
}

impl BasisChange {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Input("basis change must be square".into()));
        }
        let det = a.determinant();
        if !det.is_finite() || det.abs() < 1e-300 {
            return Err(Error::Input("basis change is singular".into()));
        }
        let a_inv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Input("basis change is singular".into()))?;
        let k = a.nrows();
        let err = (&a * &a_inv - DMatrix::identity(k, k)).amax();
        if err > 1e-12 {
            return Err(Error::Input(format!("basis change is ill-conditioned (a·a⁻¹ error {err:e})")));
        }
        Ok(Self { a, a_inv })
    }

    pub fn k(&self) -> usize {
        self.a.nrows()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.a.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn det(&self) -> f64 {
        self.a.determinant()
    }

    /// Maps a point of the transformed coordinates back: `(aᵀ)⁻¹ v`.
    pub fn apply_inverse_transpose(&self, v: &[f64]) -> Vec<f64> {
        let vv = DVector::from_column_slice(v);
        (self.a_inv.transpose() * vv).as_slice().to_vec()
    }

    /// `aᵀ v`, the map from original to transformed symbol values.
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let vv = DVector::from_column_slice(v);
        (self.a.transpose() * vv).as_slice().to_vec()
    }
}

impl TryFrom<Vec<Vec<f64>>> for BasisChange {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Input("basis change rows must form a square matrix".into()));
        }
        Self::new(DMatrix::from_fn(k, k, |r, c| rows[r][c]))
    }
}

impl From<BasisChange> for Vec<Vec<f64>> {
    fn from(b: BasisChange) -> Self {
        b.rows()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationOptions {
    pub n_samples: usize,
    /// Joint-flow times are drawn from `[0, t_probe]ᵏ`.
    pub t_probe: f64,
    pub tol_rank: f64,
    /// Optional radius bound for the properness probe.
    pub probe_radius: Option<f64>,
    pub tol_flow: f64,
    pub seed: u64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self { n_samples: 64, t_probe: 10.0, tol_rank: 1e-6, probe_radius: None, tol_flow: 1e-10, seed: 7 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub min_singular_value: f64,
    pub max_radius: f64,
    pub n_points: usize,
    pub regular: bool,
    pub bounded: bool,
    pub connected_asserted: bool,
    pub ok: bool,
}

fn smallest_singular_value(jac: &DMatrix<f64>) -> f64 {
    let gram = jac * jac.transpose();
    let eig = SymmetricEigen::new(gram);
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0).sqrt()
}

/// Regularity and properness probe for `(H1)`.
///
/// Samples `Σ₀` along joint-flow orbits of the seeds and reports the smallest
/// singular value of the Jacobian of `q₀` and the largest `‖p‖` reached.
/// Rank deficiency is reported in the result, not raised.
pub fn validate_regular_proper(
    sys: &ClassicalSystem,
    level: &EnergyLevel,
    opts: &ValidationOptions,
) -> Result<ValidationReport> {
    if level.seed_points.is_empty() {
        return Err(Error::Input("energy level has no seed points".into()));
    }
    let k = sys.k();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let flow_opts = FlowOptions { tol_flow: opts.tol_flow, ..FlowOptions::default() };
    let mut min_sv = f64::INFINITY;
    let mut max_radius: f64 = 0.0;
    let mut points = 0;
    for p in &level.seed_points {
        let z = p.to_flat();
        min_sv = min_sv.min(smallest_singular_value(&sys.jacobian(&z)));
        max_radius = max_radius.max(p.norm());
        points += 1;
    }
    for i in 0..opts.n_samples {
        let seed = &level.seed_points[i % level.seed_points.len()];
        let t: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * opts.t_probe).collect();
        let seg = dynamics::flow(sys, &t, seed, &flow_opts)?;
        let z = seg.end.to_flat();
        min_sv = min_sv.min(smallest_singular_value(&sys.jacobian(&z)));
        max_radius = max_radius.max(seg.end.norm());
        points += 1;
    }
    let regular = min_sv >= opts.tol_rank;
    let bounded = max_radius.is_finite() && opts.probe_radius.is_none_or(|r| max_radius <= r);
    Ok(ValidationReport {
        min_singular_value: min_sv,
        max_radius,
        n_points: points,
        regular,
        bounded,
        connected_asserted: level.connected_asserted,
        ok: regular && bounded,
    })
}

/// Damped Gauss–Newton search for a point with `q₀(p) = E₀`.
pub fn find_level_point(
    sys: &ClassicalSystem,
    e0: &[f64],
    guess: &PhasePoint,
    tol_level: f64,
) -> Result<PhasePoint> {
    const MAX_ITER: usize = 200;
    let mut z = guess.to_flat();
    sys.check_flat(&z)?;
    if e0.len() != sys.k() {
        return Err(Error::Dimension { expected: sys.k(), got: e0.len() });
    }
    let residual = |z: &[f64]| -> DVector<f64> {
        let q = sys.q0_vec(z);
        DVector::from_iterator(q.len(), q.iter().zip(e0).map(|(a, b)| a - b))
    };
    let mut r = residual(&z);
    let mut rn = r.norm();
    if rn <= tol_level {
        return Ok(guess.clone());
    }
    for _ in 0..MAX_ITER {
        let jac = sys.jacobian(&z);
        let gram = &jac * jac.transpose();
        let damping = 1e-14 * gram.trace().max(1e-300);
        let mut g = gram.clone();
        for i in 0..g.nrows() {
            g[(i, i)] += damping;
        }
        let Some(sol) = g.lu().solve(&r) else {
            break;
        };
        let step = -(jac.transpose() * sol);
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..50 {
            let trial: Vec<f64> = z.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
            let rt = residual(&trial);
            let rtn = rt.norm();
            if rtn < rn {
                z = trial;
                r = rt;
                rn = rtn;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if rn <= tol_level * 1e-3 || (!improved && rn <= tol_level) {
            break;
        }
        if !improved {
            break;
        }
    }
    if rn <= tol_level {
        PhasePoint::from_flat(&z)
    } else {
        Err(Error::RootFind { iterations: MAX_ITER, residual: rn })
    }
}

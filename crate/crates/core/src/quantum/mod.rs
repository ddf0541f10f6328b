//! Matrix realizations of the library operators and their joint spectra.

mod oracle;
mod oscillator;
mod radial;

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub use oracle::oracle_spectrum;
pub use radial::RadialProblem;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::lattice::lex_cmp;
use crate::models::{Model, ModelSpec};

pub type C64 = Complex<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    OscillatorExact,
    RadialSector,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::OscillatorExact => "oscillator-exact",
            Backend::RadialSector => "radial-sector",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oscillator-exact" => Ok(Backend::OscillatorExact),
            "radial-sector" => Ok(Backend::RadialSector),
            other => Err(Error::Config(format!("unknown backend '{other}'"))),
        }
    }
}

/// Truncation and grid parameters shared by the backends.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Discretization {
    /// Total number of oscillator quanta kept; chosen from the energy range
    /// when absent.
    pub n_quanta: Option<usize>,
    /// Radial grid resolution at the top window energy.
    pub points_per_wavelength: f64,
    /// Upper limit for the automatic refinement of the radial grid.
    pub max_points_per_wavelength: f64,
    /// `V(R_max) ≥ r_max_energy_factor · E_max`.
    pub r_max_energy_factor: f64,
    /// Accepted change of the extrapolated eigenvalues between grid pairs.
    pub tol_grid: f64,
    pub execution: Execution,
}

impl Default for Discretization {
    fn default() -> Self {
        Self {
            n_quanta: None,
            points_per_wavelength: 40.0,
            max_points_per_wavelength: 640.0,
            r_max_energy_factor: 8.0,
            tol_grid: 1e-6,
            execution: Execution::default(),
        }
    }
}

/// Tolerances for simultaneous diagonalization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrumOptions {
    /// Relative cluster tolerance (times `‖Q_j‖`).
    pub tol_degen: f64,
    /// Relative bound on eigen-residuals (times `‖Q_j‖`).
    pub tol_eig: f64,
    pub tol_comm: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self { tol_degen: 1e-9, tol_eig: 1e-8, tol_comm: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct DenseOperators {
    pub matrices: Vec<DMatrix<C64>>,
    /// Basis indices at or above this one form the top 5% of the basis.
    pub top_cutoff: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum Realization {
    Dense(DenseOperators),
    Radial(RadialProblem),
}

/// Commuting Hermitian realizations of `Q₁(h), …, Q_k(h)`.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub h: f64,
    pub k: usize,
    pub basis_descriptor: String,
    pub commutator_residual: f64,
    pub(crate) realization: Realization,
}

impl OperatorSet {
    /// Dense matrices, if this realization has them.
    pub fn matrices(&self) -> Option<&[DMatrix<C64>]> {
        match &self.realization {
            Realization::Dense(d) => Some(&d.matrices),
            Realization::Radial(_) => None,
        }
    }

    /// Wraps user-supplied Hermitian matrices (used for testing and for
    /// models outside the library).
    pub fn from_matrices(h: f64, matrices: Vec<DMatrix<C64>>) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::Input("need at least one operator".into()));
        }
        let n = matrices[0].nrows();
        for m in &matrices {
            if m.shape() != (n, n) {
                return Err(Error::Input("operators must be square and of equal size".into()));
            }
            let asym = (m - m.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
            if asym > 1e-12 * norm_inf(m).max(1.0) {
                return Err(Error::Input(format!("operator is not Hermitian (defect {asym:e})")));
            }
        }
        let comm = commutator_residual(&matrices);
        let k = matrices.len();
        Ok(Self {
            h,
            k,
            basis_descriptor: format!("explicit matrices, N = {n}"),
            commutator_residual: comm,
            // no basis ordering is known, so the truncation guard is off
            realization: Realization::Dense(DenseOperators { matrices, top_cutoff: n }),
        })
    }
}

fn norm_inf(m: &DMatrix<C64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|c| c.norm()).sum::<f64>()).fold(0.0, f64::max)
}

fn is_diagonal(m: &DMatrix<C64>) -> bool {
    m.iter().enumerate().all(|(i, c)| {
        let (r, col) = (i % m.nrows(), i / m.nrows());
        r == col || *c == C64::new(0.0, 0.0)
    })
}

/// `max_{i<j} ‖[Q_i, Q_j]‖_F`, an upper bound on the spectral norm.
pub(crate) fn commutator_residual(ms: &[DMatrix<C64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..ms.len() {
        for j in i + 1..ms.len() {
            let r = if is_diagonal(&ms[i]) || is_diagonal(&ms[j]) {
                let (d, o) = if is_diagonal(&ms[i]) { (&ms[i], &ms[j]) } else { (&ms[j], &ms[i]) };
                // [D, Q]_{ab} = (d_a − d_b) Q_{ab}
                let mut s = 0.0;
                for c in 0..o.ncols() {
                    for r in 0..o.nrows() {
                        s += ((d[(r, r)] - d[(c, c)]) * o[(r, c)]).norm_sqr();
                    }
                }
                s.sqrt()
            } else {
                let c = &ms[i] * &ms[j] - &ms[j] * &ms[i];
                c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
            };
            worst = worst.max(r);
        }
    }
    worst
}

/// Builds the matrices (or radial sectors) of a library model at `h`, sized
/// to resolve joint eigenvalues with first component up to `e_max`.
pub fn discretize(spec: &ModelSpec, h: f64, backend: Backend, disc: &Discretization, e_max: f64) -> Result<OperatorSet> {
    if !(h > 0.0) {
        return Err(Error::Input(format!("h must be positive, got {h}")));
    }
    let model = spec.build()?;
    let unsupported =
        || Error::Unsupported(format!("backend {} does not support model {}", backend.name(), model.name()));
    match (backend, &model) {
        (Backend::OscillatorExact, Model::Central2d { .. }) => Err(unsupported()),
        (Backend::OscillatorExact, _) => oscillator::build(&model, h, disc, e_max),
        (Backend::RadialSector, Model::Central2d { lambda }) => Ok(OperatorSet {
            h,
            k: 2,
            basis_descriptor: format!("radial sectors, V = r² + {lambda}·r⁴"),
            commutator_residual: 0.0,
            realization: Realization::Radial(RadialProblem::new(*lambda, h, disc.clone())),
        }),
        (Backend::RadialSector, _) => Err(unsupported()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    pub lambda: Vec<f64>,
    pub multiplicity: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpectrum {
    pub h: f64,
    pub points: Vec<SpectralPoint>,
    pub window: Vec<(f64, f64)>,
    /// Joint eigenvalues dropped by the truncation guard.
    pub discarded: Vec<Vec<f64>>,
    /// Largest change of an extrapolated eigenvalue between grid pairs
    /// (radial backend only).
    pub grid_change: Option<f64>,
    pub basis_descriptor: String,
}

impl JointSpectrum {
    pub fn total_multiplicity(&self) -> usize {
        self.points.iter().map(|p| p.multiplicity).sum()
    }
}

/// Orthonormal vectors supported on `support`: the coefficient columns of
/// `coeffs`, or the canonical basis vectors of the support when `None`.
struct Subspace {
    support: Vec<usize>,
    coeffs: Option<DMatrix<C64>>,
}

impl Subspace {
    fn dim(&self) -> usize {
        self.coeffs.as_ref().map_or(self.support.len(), |c| c.ncols())
    }

    fn coeff(&self, i: usize, c: usize) -> C64 {
        match &self.coeffs {
            Some(m) => m[(i, c)],
            None if i == c => C64::new(1.0, 0.0),
            None => C64::new(0.0, 0.0),
        }
    }

    /// `Vᴴ Q V`.
    fn restrict(&self, q: &DMatrix<C64>) -> DMatrix<C64> {
        let s = self.support.len();
        let sub = DMatrix::from_fn(s, s, |r, c| q[(self.support[r], self.support[c])]);
        match &self.coeffs {
            Some(c) => c.adjoint() * sub * c,
            None => sub,
        }
    }

    /// Subspace spanned by `V u`.
    fn columns(&self, u: &DMatrix<C64>) -> Subspace {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        match &self.coeffs {
            None => {
                let picks: Option<Vec<usize>> = u
                    .column_iter()
                    .map(|col| {
                        let nz: Vec<usize> = (0..col.len()).filter(|i| col[*i] != zero).collect();
                        (nz.len() == 1 && col[nz[0]] == one).then(|| nz[0])
                    })
                    .collect();
                match picks {
                    Some(p) => Subspace { support: p.iter().map(|i| self.support[*i]).collect(), coeffs: None },
                    None => Subspace { support: self.support.clone(), coeffs: Some(u.clone()) },
                }
            }
            Some(c) => Subspace { support: self.support.clone(), coeffs: Some(c * u) },
        }
    }
}

fn hermitian_eigen(b: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let d = b.nrows();
    if is_diagonal(b) {
        let mut idx: Vec<usize> = (0..d).collect();
        idx.sort_by(|x, y| b[(*x, *x)].re.total_cmp(&b[(*y, *y)].re));
        let vals = idx.iter().map(|i| b[(*i, *i)].re).collect();
        let u = DMatrix::from_fn(d, d, |r, c| if r == idx[c] { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
        return (vals, u);
    }
    let eig = SymmetricEigen::new(b.clone());
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|x, y| eig.eigenvalues[*x].total_cmp(&eig.eigenvalues[*y]));
    let vals = idx.iter().map(|i| eig.eigenvalues[*i]).collect();
    let u = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, u)
}

struct Leaf {
    lambda: Vec<f64>,
    space: Subspace,
}

fn inside(v: f64, w: (f64, f64)) -> bool {
    v > w.0 && v < w.1
}

#[allow(clippy::too_many_arguments)]
fn split(
    ops: &DenseOperators,
    norms: &[f64],
    j: usize,
    space: Subspace,
    prefix: Vec<f64>,
    window: &[(f64, f64)],
    opts: &SpectrumOptions,
    out: &mut Vec<Leaf>,
) -> Result<()> {
    if j == ops.matrices.len() {
        out.push(Leaf { lambda: prefix, space });
        return Ok(());
    }
    let b = space.restrict(&ops.matrices[j]);
    let (vals, u) = hermitian_eigen(&b);
    let tol = opts.tol_degen * norms[j].max(f64::MIN_POSITIVE);
    let mut start = 0;
    while start < vals.len() {
        let mut end = start + 1;
        while end < vals.len() && vals[end] - vals[end - 1] <= tol {
            end += 1;
        }
        let mean = vals[start..end].iter().sum::<f64>() / (end - start) as f64;
        let keep = inside(mean, window[j]);
        if keep {
            for (gap, side) in [(start > 0).then(|| vals[start] - vals[start - 1]), (end < vals.len()).then(|| vals[end] - vals[end - 1])]
                .into_iter()
                .zip(["below", "above"])
            {
                if let Some(g) = gap {
                    if g < 10.0 * tol {
                        return Err(Error::Degeneracy(format!(
                            "operator {} has a gap of {g:e} {side} the cluster at {mean} (cluster tolerance {tol:e})",
                            j + 1
                        )));
                    }
                }
            }
            let cols = u.columns(start, end - start).into_owned();
            let mut pre = prefix.clone();
            pre.push(mean);
            split(ops, norms, j + 1, space.columns(&cols), pre, window, opts, out)?;
        }
        start = end;
    }
    Ok(())
}

/// Simultaneous diagonalization restricted to the open cube `window`.
pub fn joint_spectrum(ops: &OperatorSet, window: &[(f64, f64)], opts: &SpectrumOptions) -> Result<JointSpectrum> {
    if window.len() != ops.k {
        return Err(Error::Dimension { expected: ops.k, got: window.len() });
    }
    match &ops.realization {
        Realization::Radial(r) => r.joint_spectrum(window, opts),
        Realization::Dense(d) => {
            if ops.commutator_residual > opts.tol_comm {
                return Err(Error::Commutator { residual: ops.commutator_residual, tol: opts.tol_comm });
            }
            let n = d.matrices[0].nrows();
            let norms: Vec<f64> = d.matrices.iter().map(norm_inf).collect();
            let root = Subspace { support: (0..n).collect(), coeffs: None };
            let mut leaves = Vec::new();
            split(d, &norms, 0, root, Vec::new(), window, opts, &mut leaves)?;
            let mut points = Vec::new();
            let mut discarded = Vec::new();
            for leaf in leaves {
                let mass_top = (0..leaf.space.dim())
                    .map(|c| {
                        leaf.space
                            .support
                            .iter()
                            .enumerate()
                            .filter(|(_, g)| **g >= d.top_cutoff)
                            .map(|(i, _)| leaf.space.coeff(i, c).norm_sqr())
                            .sum::<f64>()
                    })
                    .fold(0.0, f64::max);
                if mass_top > 1e-8 {
                    discarded.push(leaf.lambda);
                    continue;
                }
                let residual = leaf_residual(d, &leaf);
                let scale = norms.iter().cloned().fold(1.0, f64::max);
                if residual > opts.tol_eig * scale {
                    return Err(Error::Degeneracy(format!(
                        "joint eigenvector residual {residual:e} at {:?} exceeds tolerance",
                        leaf.lambda
                    )));
                }
                points.push(SpectralPoint { lambda: leaf.lambda, multiplicity: leaf.space.dim(), residual });
            }
            points.sort_by(|a, b| lex_cmp(&a.lambda, &b.lambda));
            Ok(JointSpectrum {
                h: ops.h,
                points,
                window: window.to_vec(),
                discarded,
                grid_change: None,
                basis_descriptor: ops.basis_descriptor.clone(),
            })
        }
    }
}

/// `max_j ‖Q_j v − λ_j v‖` for the first vector of the leaf.
fn leaf_residual(d: &DenseOperators, leaf: &Leaf) -> f64 {
    let sp = &leaf.space;
    let n = d.matrices[0].nrows();
    let mut worst: f64 = 0.0;
    for (q, lam) in d.matrices.iter().zip(&leaf.lambda) {
        let mut qv = vec![C64::new(0.0, 0.0); n];
        for (i, g) in sp.support.iter().enumerate() {
            let c = sp.coeff(i, 0);
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            for r in 0..n {
                qv[r] += q[(r, *g)] * c;
            }
        }
        for (i, g) in sp.support.iter().enumerate() {
            qv[*g] -= sp.coeff(i, 0) * *lam;
        }
        worst = worst.max(qv.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real(m: DMatrix<f64>) -> DMatrix<C64> {
        m.map(|v| C64::new(v, 0.0))
    }

    #[test]
    fn diagonal_pairs_and_multiplicities() {
        let a = real(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, 2.0, 1.0])));
        let b = real(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![5.0, 6.0, 5.0, 5.0])));
        let ops = OperatorSet::from_matrices(1.0, vec![a, b]).unwrap();
        let spec = joint_spectrum(&ops, &[(0.0, 3.0), (0.0, 10.0)], &SpectrumOptions::default()).unwrap();
        let got: Vec<(Vec<f64>, usize)> = spec.points.iter().map(|p| (p.lambda.clone(), p.multiplicity)).collect();
        assert_eq!(got, vec![(vec![1.0, 5.0], 2), (vec![1.0, 6.0], 1), (vec![2.0, 5.0], 1)]);
    }

    #[test]
    fn non_commuting_is_rejected() {
        let a = real(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
        let b = real(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let ops = OperatorSet::from_matrices(1.0, vec![a, b]).unwrap();
        assert!(matches!(
            joint_spectrum(&ops, &[(-2.0, 2.0), (-2.0, 2.0)], &SpectrumOptions::default()),
            Err(Error::Commutator { .. })
        ));
    }

    #[test]
    fn near_degenerate_split_is_ambiguous() {
        let a = real(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0 + 3e-9, 2.0])));
        let ops = OperatorSet::from_matrices(1.0, vec![a]).unwrap();
        assert!(matches!(
            joint_spectrum(&ops, &[(0.0, 3.0)], &SpectrumOptions::default()),
            Err(Error::Degeneracy(_))
        ));
    }

    #[test]
    fn order_independent_on_rotated_pair() {
        // Q₁ = diag(1,1,3), Q₂ couples the degenerate pair.
        let a = real(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, 3.0])));
        let b = real(DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 7.0]));
        let w = [(0.0, 4.0), (-5.0, 8.0)];
        let ab = OperatorSet::from_matrices(1.0, vec![a.clone(), b.clone()]).unwrap();
        let ba = OperatorSet::from_matrices(1.0, vec![b, a]).unwrap();
        let s1 = joint_spectrum(&ab, &w, &SpectrumOptions::default()).unwrap();
        let s2 = joint_spectrum(&ba, &[w[1], w[0]], &SpectrumOptions::default()).unwrap();
        let mut swapped: Vec<Vec<f64>> = s2.points.iter().map(|p| vec![p.lambda[1], p.lambda[0]]).collect();
        swapped.sort_by(|x, y| lex_cmp(x, y));
        let direct: Vec<Vec<f64>> = s1.points.iter().map(|p| p.lambda.clone()).collect();
        assert_eq!(direct.len(), 3);
        for (x, y) in direct.iter().zip(&swapped) {
            assert!(x.iter().zip(y).all(|(u, v)| (u - v).abs() < 1e-12), "{direct:?} {swapped:?}");
        }
        assert!(s1.points.iter().all(|p| p.residual < 1e-12));
    }
}

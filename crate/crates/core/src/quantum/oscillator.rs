//! Oscillator-exact backend: ladder-operator matrices in the Hermite basis,
//! truncated to a total number of quanta.

use nalgebra::DMatrix;

use super::{commutator_residual, DenseOperators, Discretization, OperatorSet, Realization, C64};
use crate::error::{Error, Result};
use crate::models::Model;

fn top_cutoff(dim: usize) -> usize {
    dim - ((dim as f64) * 0.05).ceil() as usize
}

/// Two-mode basis `|n₁, n₂⟩` with `n₁ + n₂ ≤ m`, ordered by total quanta.
struct TwoMode {
    states: Vec<(usize, usize)>,
}

impl TwoMode {
    fn new(m: usize) -> Self {
        let states = (0..=m).flat_map(|total| (0..=total).rev().map(move |n1| (n1, total - n1))).collect();
        Self { states }
    }

    fn index(&self, n1: usize, n2: usize) -> Option<usize> {
        let total = n1 + n2;
        let first = total * (total + 1) / 2;
        let idx = first + (total - n1);
        (idx < self.states.len()).then_some(idx)
    }
}

fn quanta_for(e_max: f64, h: f64, omega_min: f64, slack: usize) -> usize {
    ((1.25 * e_max.max(h) / (h * omega_min)).ceil() as usize) + slack
}

pub(super) fn build(model: &Model, h: f64, disc: &Discretization, e_max: f64) -> Result<OperatorSet> {
    let re = |v: f64| C64::new(v, 0.0);
    let (matrices, descriptor, dim) = match model {
        Model::Ho1d { q1_const, q1_linear } => {
            let m = disc.n_quanta.unwrap_or_else(|| quanta_for(e_max, h, 1.0, 30));
            let dim = m + 1;
            let mut q = DMatrix::from_element(dim, dim, re(0.0));
            for n in 0..dim {
                q[(n, n)] = re(h * (n as f64 + 0.5) + h * q1_const);
                if n + 1 < dim {
                    // h·β·X with X = √(h/2)(a + a†)
                    let x = h * q1_linear * (h / 2.0).sqrt() * ((n + 1) as f64).sqrt();
                    q[(n, n + 1)] = re(x);
                    q[(n + 1, n)] = re(x);
                }
            }
            (vec![q], format!("oscillator-exact, 1 mode, quanta ≤ {m}"), dim)
        }
        Model::Ho2dHl | Model::Ho2dEnergy | Model::Ho2dAniso { .. } => {
            let (w1, w2) = match model {
                Model::Ho2dAniso { omega1, omega2 } => (*omega1, *omega2),
                _ => (1.0, 1.0),
            };
            let m = disc.n_quanta.unwrap_or_else(|| quanta_for(e_max, h, w1.min(w2), 10));
            let basis = TwoMode::new(m);
            let dim = basis.states.len();
            let mut hm = DMatrix::from_element(dim, dim, re(0.0));
            for (i, (n1, n2)) in basis.states.iter().enumerate() {
                hm[(i, i)] = re(h * (w1 * (*n1 as f64 + 0.5) + w2 * (*n2 as f64 + 0.5)));
            }
            let mut ms = vec![hm];
            if matches!(model, Model::Ho2dHl) {
                // L = ih(a₁a₂† − a₁†a₂) keeps the total number of quanta.
                let mut l = DMatrix::from_element(dim, dim, re(0.0));
                for (col, &(n1, n2)) in basis.states.iter().enumerate() {
                    if n1 > 0 {
                        let row = basis.index(n1 - 1, n2 + 1).expect("same total");
                        l[(row, col)] = C64::new(0.0, h * ((n1 * (n2 + 1)) as f64).sqrt());
                    }
                    if n2 > 0 {
                        let row = basis.index(n1 + 1, n2 - 1).expect("same total");
                        l[(row, col)] = C64::new(0.0, -h * (((n1 + 1) * n2) as f64).sqrt());
                    }
                }
                ms.push(l);
            }
            (ms, format!("oscillator-exact, 2 modes, total quanta ≤ {m}"), dim)
        }
        Model::Central2d { .. } => {
            return Err(Error::Unsupported("oscillator-exact backend cannot realize central2d".into()))
        }
    };
    if dim > 20_000 {
        return Err(Error::Input(format!("oscillator basis of dimension {dim} is too large")));
    }
    let comm = commutator_residual(&matrices);
    Ok(OperatorSet {
        h,
        k: matrices.len(),
        basis_descriptor: descriptor,
        commutator_residual: comm,
        realization: Realization::Dense(DenseOperators { matrices, top_cutoff: top_cutoff(dim) }),
    })
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use crate::models::ModelSpec;

    #[test]
    fn ho1d_is_diagonal_half_integers() {
        let ops = discretize(&ModelSpec::new("ho1d"), 0.1, Backend::OscillatorExact, &Discretization { n_quanta: Some(199), ..Default::default() }, 1.0).unwrap();
        let spec = joint_spectrum(&ops, &[(-1.0, 15.0)], &SpectrumOptions::default()).unwrap();
        assert_eq!(spec.points.len(), 150);
        for (i, p) in spec.points.iter().enumerate() {
            assert!((p.lambda[0] - 0.1 * (i as f64 + 0.5)).abs() < 1e-12);
            assert_eq!(p.multiplicity, 1);
        }
    }

    #[test]
    fn ho1d_linear_subprincipal_shift() {
        // Q = H + h(c + βX): spectrum h(i + ½) + hc − h²β²/2
        let (h, c, b) = (0.1, 0.3, 0.8);
        let spec = ModelSpec::new("ho1d").with("q1_const", c).with("q1_linear", b);
        let ops = discretize(&spec, h, Backend::OscillatorExact, &Discretization::default(), 1.0).unwrap();
        let js = joint_spectrum(&ops, &[(0.0, 1.0)], &SpectrumOptions::default()).unwrap();
        assert!(js.discarded.is_empty());
        for p in &js.points {
            let i = ((p.lambda[0] - h * c + h * h * b * b / 2.0) / h - 0.5).round();
            let exact = h * (i + 0.5) + h * c - h * h * b * b / 2.0;
            assert!((p.lambda[0] - exact).abs() < 1e-12, "{} vs {exact}", p.lambda[0]);
        }
    }

    #[test]
    fn hl_joint_eigenvalues() {
        let h = 0.1;
        let ops = discretize(&ModelSpec::new("ho2d_hl"), h, Backend::OscillatorExact, &Discretization::default(), 1.5).unwrap();
        assert!(ops.commutator_residual < 1e-14);
        let js = joint_spectrum(&ops, &[(0.72, 1.28), (0.01, 0.59)], &SpectrumOptions::default()).unwrap();
        assert!(!js.points.is_empty());
        for p in &js.points {
            let n = (p.lambda[0] / h - 1.0).round() as i64;
            let m = (p.lambda[1] / h).round() as i64;
            assert!((p.lambda[0] - h * (n + 1) as f64).abs() < 1e-12);
            assert!((p.lambda[1] - h * m as f64).abs() < 1e-12);
            assert!(m.abs() <= n && (n - m) % 2 == 0);
            assert_eq!(p.multiplicity, 1);
        }
        let oracle = oracle_spectrum(&ModelSpec::new("ho2d_hl"), h, &[(0.72, 1.28), (0.01, 0.59)]).unwrap();
        assert_eq!(oracle.points.len(), js.points.len());
    }

    #[test]
    fn energy_only_degeneracy() {
        let ops = discretize(&ModelSpec::new("ho2d_energy"), 0.1, Backend::OscillatorExact, &Discretization::default(), 1.2).unwrap();
        let js = joint_spectrum(&ops, &[(0.95, 1.05)], &SpectrumOptions::default()).unwrap();
        assert_eq!(js.points.len(), 1);
        assert!((js.points[0].lambda[0] - 1.0).abs() < 1e-12);
        assert_eq!(js.points[0].multiplicity, 10);
    }

    #[test]
    fn truncation_guard_discards_top_states() {
        let d = Discretization { n_quanta: Some(20), ..Default::default() };
        let ops = discretize(&ModelSpec::new("ho1d"), 0.1, Backend::OscillatorExact, &d, 1.0).unwrap();
        let js = joint_spectrum(&ops, &[(0.0, 3.0)], &SpectrumOptions::default()).unwrap();
        // 21 basis states; the top two form the top 5%
        assert_eq!(js.discarded.len(), 2);
        assert_eq!(js.points.len(), 19);
    }

    #[test]
    fn central_model_is_unsupported() {
        let r = discretize(&ModelSpec::new("central2d"), 0.1, Backend::OscillatorExact, &Discretization::default(), 1.0);
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }
}

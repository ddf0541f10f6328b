//! The Bohr–Sommerfeld lattice `E₀ + (aᵀ)⁻¹ v(n)` and its enumeration in an
//! `h`-dependent window around `E₀`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariants::{reduce, CycleInvariants, PeriodLattice};
use crate::phase::BasisChange;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub e0: Vec<f64>,
    pub a: BasisChange,
    pub alpha: Vec<f64>,
    pub mu: Vec<i64>,
    pub delta: Vec<f64>,
    /// Window half-widths in units of `h`.
    pub window_c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedPoint {
    pub value: Vec<f64>,
    pub index: Vec<i64>,
}

impl LatticeSpec {
    pub fn new(
        e0: Vec<f64>,
        a: BasisChange,
        alpha: Vec<f64>,
        mu: Vec<i64>,
        delta: Vec<f64>,
        window_c: Option<Vec<f64>>,
    ) -> Result<Self> {
        let k = e0.len();
        for (name, len) in [("a", a.k()), ("alpha", alpha.len()), ("mu", mu.len()), ("delta", delta.len())] {
            if len != k {
                return Err(Error::Input(format!("{name} has dimension {len}, expected {k}")));
            }
        }
        if e0.iter().chain(&alpha).chain(&delta).any(|v| !v.is_finite()) {
            return Err(Error::Input("lattice data must be finite".into()));
        }
        let mut spec = Self { e0, a, alpha, mu, delta, window_c: Vec::new() };
        spec.window_c = match window_c {
            Some(c) if c.len() == k && c.iter().all(|v| *v > 0.0) => c,
            Some(c) => return Err(Error::Input(format!("window half-widths {c:?} must be {k} positive numbers"))),
            None => vec![0.45 * spec.unit_gap(); k],
        };
        Ok(spec)
    }

    pub fn k(&self) -> usize {
        self.e0.len()
    }

    /// Length of the shortest nonzero lattice vector at `h = 1`.
    pub fn unit_gap(&self) -> f64 {
        let b = self.a.a_inv.transpose();
        let k = self.k();
        let mut cols: Vec<Vec<f64>> = (0..k).map(|c| (0..k).map(|r| b[(r, c)]).collect()).collect();
        reduce::lll_reduce(&mut cols);
        cols.iter().map(|c| reduce::norm(c)).fold(f64::INFINITY, f64::min)
    }

    /// `v_j(n) = (δ_j/2π − μ_j/4)h − α_j/2π + n_j h`.
    fn v(&self, h: f64, n: &[i64]) -> Vec<f64> {
        (0..self.k())
            .map(|j| {
                (n[j] as f64 * h - self.alpha[j] / (2.0 * PI))
                    + (self.delta[j] / (2.0 * PI) - self.mu[j] as f64 / 4.0) * h
            })
            .collect()
    }

    /// Lattice point with index `n`.
    pub fn point(&self, h: f64, n: &[i64]) -> Vec<f64> {
        let d = self.a.apply_inverse_transpose(&self.v(h, n));
        self.e0.iter().zip(d).map(|(e, x)| e + x).collect()
    }

    /// The open cube `∏ ]E₀ⱼ − cⱼh, E₀ⱼ + cⱼh[`.
    pub fn window(&self, h: f64) -> Vec<(f64, f64)> {
        self.e0.iter().zip(&self.window_c).map(|(e, c)| (e - c * h, e + c * h)).collect()
    }
}

pub fn build_lattice_spec(
    e0: &[f64],
    periods: &PeriodLattice,
    inv: &CycleInvariants,
    window_c: Option<Vec<f64>>,
) -> Result<LatticeSpec> {
    if periods.k() != e0.len() {
        return Err(Error::Dimension { expected: e0.len(), got: periods.k() });
    }
    LatticeSpec::new(e0.to_vec(), periods.a.clone(), inv.alpha.clone(), inv.mu.clone(), inv.delta.clone(), window_c)
}

/// All lattice points strictly inside `window`.
pub fn enumerate_lattice_in(spec: &LatticeSpec, h: f64, window: &[(f64, f64)]) -> Result<Vec<PredictedPoint>> {
    if !(h > 0.0) {
        return Err(Error::Input(format!("h must be positive, got {h}")));
    }
    let k = spec.k();
    if window.len() != k {
        return Err(Error::Dimension { expected: k, got: window.len() });
    }
    // Integer box from the window corners mapped through aᵀ.
    let shift = spec.v(h, &vec![0; k]);
    let mut lo = vec![f64::INFINITY; k];
    let mut hi = vec![f64::NEG_INFINITY; k];
    for corner in 0..(1usize << k) {
        let x: Vec<f64> = (0..k)
            .map(|j| if corner >> j & 1 == 1 { window[j].1 } else { window[j].0 } - spec.e0[j])
            .collect();
        let v = spec.a.apply_transpose(&x);
        for j in 0..k {
            let nj = (v[j] - shift[j]) / h;
            lo[j] = lo[j].min(nj);
            hi[j] = hi[j].max(nj);
        }
    }
    let lo: Vec<i64> = lo.iter().map(|v| v.floor() as i64 - 1).collect();
    let hi: Vec<i64> = hi.iter().map(|v| v.ceil() as i64 + 1).collect();
    let count: i64 = lo.iter().zip(&hi).map(|(a, b)| b - a + 1).product();
    if count > 50_000_000 {
        return Err(Error::Input(format!("window holds too many lattice candidates ({count})")));
    }
    let mut out = Vec::new();
    let mut n = lo.clone();
    'outer: loop {
        let value = spec.point(h, &n);
        if value.iter().zip(window).all(|(v, (a, b))| *v > *a && *v < *b) {
            out.push(PredictedPoint { value, index: n.clone() });
        }
        for j in 0..k {
            n[j] += 1;
            if n[j] <= hi[j] {
                continue 'outer;
            }
            n[j] = lo[j];
        }
        break;
    }
    out.sort_by(|a, b| lex_cmp(&a.value, &b.value));
    Ok(out)
}

/// Lexicographic order that treats coordinates within `1e-12` (relative) as
/// equal, so rounding noise cannot reorder points sharing a coordinate.
pub fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            if (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0) {
                std::cmp::Ordering::Equal
            } else {
                x.total_cmp(y)
            }
        })
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

pub fn enumerate_lattice(spec: &LatticeSpec, h: f64) -> Result<Vec<PredictedPoint>> {
    enumerate_lattice_in(spec, h, &spec.window(h))
}

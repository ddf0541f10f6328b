//! Radial-sector backend for `−h²Δ + V(r)` on `R²` with `L = −ih∂_θ`.
//!
//! Sector `m` is discretized on the staggered grid `rᵢ = (i − ½)Δr` with the
//! conservative three-point form of `−h² r⁻¹(rψ′)′ + h²m²/r² ψ + Vψ`,
//! symmetrized by `√rᵢ` and closed by a Dirichlet wall at `(N + ½)Δr`.
//! Eigenvalues are located by Sturm bisection on three grids and
//! Richardson-extrapolated in `Δr²`.

use serde::{Deserialize, Serialize};

use super::{Discretization, JointSpectrum, SpectralPoint, SpectrumOptions};
use crate::error::{Error, Result};
use crate::exec;
use crate::lattice::lex_cmp;
use crate::models::central_radius_max;

#[derive(Debug, Clone)]
pub struct RadialProblem {
    pub lambda: f64,
    pub h: f64,
    pub disc: Discretization,
}

/// Grid actually used for a spectrum, recorded for reproducibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub r_max: f64,
    pub n_coarse: usize,
    pub points_per_wavelength: f64,
}

struct Tridiagonal {
    d: Vec<f64>,
    e: Vec<f64>,
}

impl Tridiagonal {
    fn sector(lambda: f64, h: f64, m: i64, r_max: f64, n: usize) -> Self {
        let dr = r_max / (n as f64 + 0.5);
        let h2 = h * h;
        let m2 = (m * m) as f64;
        let r = |i: usize| (i as f64 + 0.5) * dr;
        let d = (0..n)
            .map(|i| {
                let ri = r(i);
                2.0 * h2 / (dr * dr) + h2 * m2 / (ri * ri) + ri * ri + lambda * ri.powi(4)
            })
            .collect();
        let e = (0..n.saturating_sub(1))
            .map(|i| -h2 * (i as f64 + 1.0) * dr / (dr * dr * (r(i) * r(i + 1)).sqrt()))
            .collect();
        Self { d, e }
    }

    fn n(&self) -> usize {
        self.d.len()
    }

    /// Number of eigenvalues strictly below `x`.
    fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = self.d[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.n() {
            let denom = if q == 0.0 { f64::EPSILON * (self.e[i - 1].abs() + 1.0) } else { q };
            q = self.d[i] - x - self.e[i - 1] * self.e[i - 1] / denom;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.n() {
            let rad = if i > 0 { self.e[i - 1].abs() } else { 0.0 } + self.e.get(i).map_or(0.0, |v| v.abs());
            lo = lo.min(self.d[i] - rad);
            hi = hi.max(self.d[i] + rad);
        }
        (lo, hi)
    }

    /// The `index`-th eigenvalue (ascending) by bisection.
    fn eigenvalue(&self, index: usize) -> f64 {
        let (mut lo, mut hi) = self.bounds();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > index {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| {
                let mut v = self.d[i] * x[i];
                if i > 0 {
                    v += self.e[i - 1] * x[i - 1];
                }
                if i + 1 < self.n() {
                    v += self.e[i] * x[i + 1];
                }
                v
            })
            .collect()
    }

    /// `‖T v − λ v‖` for the inverse-iteration eigenvector at `lambda`.
    fn residual(&self, lambda: f64) -> f64 {
        let n = self.n();
        let shift = lambda + 1e-10 * lambda.abs().max(1.0);
        let mut x = vec![1.0 / (n as f64).sqrt(); n];
        for _ in 0..3 {
            // Thomas algorithm for (T − shift) y = x
            let mut c = vec![0.0; n];
            let mut y = vec![0.0; n];
            let mut piv = self.d[0] - shift;
            c[0] = if n > 1 { self.e[0] / piv } else { 0.0 };
            y[0] = x[0] / piv;
            for i in 1..n {
                piv = self.d[i] - shift - self.e[i - 1] * c[i - 1];
                if piv == 0.0 {
                    piv = f64::EPSILON;
                }
                if i + 1 < n {
                    c[i] = self.e[i] / piv;
                }
                y[i] = (x[i] - self.e[i - 1] * y[i - 1]) / piv;
            }
            for i in (0..n - 1).rev() {
                y[i] -= c[i] * y[i + 1];
            }
            let nrm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            x = y.into_iter().map(|v| v / nrm).collect();
        }
        let tx = self.apply(&x);
        tx.iter().zip(&x).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt()
    }
}

struct Level {
    value: f64,
    change: f64,
    residual: f64,
}

impl RadialProblem {
    pub fn new(lambda: f64, h: f64, disc: Discretization) -> Self {
        Self { lambda, h, disc }
    }

    pub fn grid_for(&self, e_max: f64, ppw: f64) -> RadialGrid {
        let r_max = central_radius_max(self.lambda, self.disc.r_max_energy_factor.max(4.0) * e_max);
        let dr = 2.0 * std::f64::consts::PI * self.h / (e_max.sqrt() * ppw);
        let n = ((r_max / dr - 0.5).ceil() as usize).max(16);
        RadialGrid { r_max, n_coarse: n, points_per_wavelength: ppw }
    }

    /// Extrapolated eigenvalues of sector `|m|` whose finest-grid values are
    /// within one level of `[e_lo, e_hi]`.
    fn sector_levels(&self, m: i64, e_lo: f64, e_hi: f64, grid: RadialGrid) -> Vec<Level> {
        let sizes = [grid.n_coarse, 2 * grid.n_coarse, 4 * grid.n_coarse];
        let mats: Vec<Tridiagonal> = sizes.iter().map(|n| Tridiagonal::sector(self.lambda, self.h, m, grid.r_max, *n)).collect();
        let s2: Vec<f64> = sizes.iter().map(|n| (grid.r_max / (*n as f64 + 0.5)).powi(2)).collect();
        let fine = &mats[2];
        let first = fine.count_below(e_lo).saturating_sub(1);
        let last = (fine.count_below(e_hi) + 1).min(fine.n());
        (first..last)
            .map(|idx| {
                let e: Vec<f64> = mats.iter().map(|t| t.eigenvalue(idx)).collect();
                // E(s) = E* + c·s + d·s², s = Δr²
                let pair = |a: usize, b: usize| (e[b] * s2[a] - e[a] * s2[b]) / (s2[a] - s2[b]);
                let r12 = pair(0, 1);
                let r23 = pair(1, 2);
                let value = (r23 * s2[0] - r12 * s2[2]) / (s2[0] - s2[2]);
                Level { value, change: (r23 - r12).abs(), residual: fine.residual(e[2]) }
            })
            .collect()
    }

    pub fn joint_spectrum(&self, window: &[(f64, f64)], _opts: &SpectrumOptions) -> Result<JointSpectrum> {
        let h = self.h;
        let (e_lo, e_hi) = window[0];
        let (l_lo, l_hi) = window[1];
        let m_lo = (l_lo / h).floor() as i64;
        let m_hi = (l_hi / h).ceil() as i64;
        let ms: Vec<i64> = (m_lo..=m_hi).filter(|m| {
            let l = h * *m as f64;
            l > l_lo && l < l_hi
        }).collect();
        let mut abs_ms: Vec<i64> = ms.iter().map(|m| m.abs()).collect();
        abs_ms.sort_unstable();
        abs_ms.dedup();
        let mut ppw = self.disc.points_per_wavelength;
        loop {
            if e_hi <= 0.0 || ms.is_empty() {
                return Ok(self.empty(window));
            }
            let grid = self.grid_for(e_hi, ppw);
            let sectors = exec::map_indexed(self.disc.execution, abs_ms.len(), |i| {
                self.sector_levels(abs_ms[i], e_lo, e_hi, grid)
            });
            let mut points = Vec::new();
            let mut change: f64 = 0.0;
            for m in &ms {
                let pos = abs_ms.binary_search(&m.abs()).expect("sector computed");
                for lv in &sectors[pos] {
                    if lv.value > e_lo && lv.value < e_hi {
                        change = change.max(lv.change);
                        points.push(SpectralPoint {
                            lambda: vec![lv.value, h * *m as f64],
                            multiplicity: 1,
                            residual: lv.residual,
                        });
                    }
                }
            }
            if change <= self.disc.tol_grid {
                points.sort_by(|a, b| lex_cmp(&a.lambda, &b.lambda));
                return Ok(JointSpectrum {
                    h,
                    points,
                    window: window.to_vec(),
                    discarded: Vec::new(),
                    grid_change: Some(change),
                    basis_descriptor: format!(
                        "radial-sector, R_max = {:.6}, N = {}/{}/{}, points per wavelength = {}",
                        grid.r_max,
                        grid.n_coarse,
                        2 * grid.n_coarse,
                        4 * grid.n_coarse,
                        ppw
                    ),
                });
            }
            if 2.0 * ppw > self.disc.max_points_per_wavelength {
                return Err(Error::Truncation(format!(
                    "radial grid did not converge: extrapolated change {change:e} > {:e} at {ppw} points per wavelength",
                    self.disc.tol_grid
                )));
            }
            log::debug!("radial grid change {change:e} at ppw {ppw}; refining");
            ppw *= 2.0;
        }
    }

    fn empty(&self, window: &[(f64, f64)]) -> JointSpectrum {
        JointSpectrum {
            h: self.h,
            points: Vec::new(),
            window: window.to_vec(),
            discarded: Vec::new(),
            grid_change: Some(0.0),
            basis_descriptor: "radial-sector (empty window)".into(),
        }
    }
}

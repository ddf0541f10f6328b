//! Detection of the joint period lattice `{T : Ψ^T(p) = p}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{level_points, precise, reduce};
use crate::dynamics::{distance, flow, integrate_line, FlowOptions};
use crate::error::{Error, Hypothesis, Result};
use crate::exec::{self, Execution};
use crate::phase::{BasisChange, ClassicalSystem, PhasePoint};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodOptions {
    /// Search radius: component 1 is scanned over `[0, t_max]`, the others
    /// over `[−t_max, t_max]`.
    pub t_max: f64,
    /// Grid points on `[0, t_max]` per component.
    pub grid: usize,
    pub tol_period: f64,
    /// Additional level-set points on which the basis is re-checked.
    pub check_points: usize,
    pub seed: u64,
    pub flow: FlowOptions,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for PeriodOptions {
    fn default() -> Self {
        Self {
            t_max: 8.0,
            grid: 160,
            tol_period: 1e-9,
            check_points: 3,
            seed: 11,
            flow: FlowOptions::default(),
            execution: Execution::default(),
        }
    }
}

/// Reduced basis of the period lattice together with `a` (columns `T_j/2π`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodLattice {
    pub basis: Vec<Vec<f64>>,
    pub a: BasisChange,
    pub return_residuals: Vec<f64>,
    /// Worst return residual of each basis vector over the extra check points.
    pub check_residuals: Vec<f64>,
    pub base: PhasePoint,
}

impl PeriodLattice {
    pub fn k(&self) -> usize {
        self.basis.len()
    }

    /// Period `Σ zⱼ Tⱼ` for integer coordinates `z`.
    pub fn combination(&self, z: &[i64]) -> Vec<f64> {
        let k = self.k();
        (0..k).map(|r| (0..k).map(|j| z[j] as f64 * self.basis[j][r]).sum()).collect()
    }
}

pub(crate) fn basis_change(basis: &[Vec<f64>]) -> Result<BasisChange> {
    let k = basis.len();
    BasisChange::new(DMatrix::from_fn(k, k, |r, c| basis[c][r] / (2.0 * std::f64::consts::PI)))
}

/// Gauss–Newton on `G(T) = Ψ^T(p) − p`; the Jacobian columns are the fields
/// `K_j` at the end point. Returns the refined period and its residual.
pub(crate) fn refine_period(
    sys: &ClassicalSystem,
    p: &PhasePoint,
    t0: &[f64],
    tol_period: f64,
    fopts: &FlowOptions,
) -> Result<(Vec<f64>, f64)> {
    let z0 = p.to_flat();
    let n2 = z0.len();
    let k = sys.k();
    let mut t = t0.to_vec();
    let eval = |t: &[f64]| -> Result<(Vec<f64>, f64)> {
        let seg = flow(sys, t, p, fopts)?;
        let end = seg.end.to_flat();
        let r = distance(&end, &z0);
        Ok((end, r))
    };
    let (mut end, mut res) = eval(&t)?;
    let mut field = vec![0.0; n2];
    for _ in 0..40 {
        if res <= 0.01 * tol_period {
            break;
        }
        let mut jac = DMatrix::zeros(n2, k);
        for j in 0..k {
            sys.field_flat(j, &end, &mut field);
            for (r, v) in field.iter().enumerate() {
                jac[(r, j)] = *v;
            }
        }
        let g = DVector::from_iterator(n2, end.iter().zip(&z0).map(|(a, b)| a - b));
        let jt = jac.transpose();
        let Some(step) = (&jt * &jac).lu().solve(&(&jt * g)) else {
            break;
        };
        let mut lam = 1.0;
        let mut improved = false;
        for _ in 0..20 {
            let trial: Vec<f64> = t.iter().zip(step.iter()).map(|(a, d)| a - lam * d).collect();
            let (e2, r2) = eval(&trial)?;
            if r2 < res {
                t = trial;
                end = e2;
                res = r2;
                improved = true;
                break;
            }
            lam *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok((t, res))
}

struct Grid {
    n0: usize,
    n1: usize,
    k: usize,
    dt: f64,
    t_max: f64,
}

impl Grid {
    fn dims(&self, c: usize) -> usize {
        if c == 0 {
            self.n0
        } else {
            self.n1
        }
    }

    fn len(&self) -> usize {
        (0..self.k).map(|c| self.dims(c)).product()
    }

    /// Index layout: component 0 fastest.
    fn multi(&self, mut idx: usize) -> Vec<usize> {
        (0..self.k)
            .map(|c| {
                let d = self.dims(c);
                let m = idx % d;
                idx /= d;
                m
            })
            .collect()
    }

    fn flat(&self, m: &[usize]) -> usize {
        let mut idx = 0;
        for c in (0..self.k).rev() {
            idx = idx * self.dims(c) + m[c];
        }
        idx
    }

    fn time(&self, c: usize, m: usize) -> f64 {
        if c == 0 {
            m as f64 * self.dt
        } else {
            -self.t_max + m as f64 * self.dt
        }
    }
}

/// `‖Ψ^t(p) − p‖` over the whole scan grid.
fn scan(sys: &ClassicalSystem, p: &PhasePoint, grid: &Grid, opts: &PeriodOptions) -> Result<Vec<f64>> {
    let k = grid.k;
    let z0 = p.to_flat();
    let fwd: Vec<f64> = (0..grid.n0).map(|i| i as f64 / (grid.n0 - 1) as f64).collect();
    // Outer points: components k-1 .. 1 applied first, component 0 scanned last.
    let mut outer: Vec<Vec<f64>> = vec![z0.clone()];
    for c in (1..k).rev() {
        let runs = exec::try_map_indexed(opts.execution, outer.len(), |i| -> Result<Vec<Vec<f64>>> {
            let mut w = vec![0.0; k];
            w[c] = grid.t_max;
            let plus = integrate_line(sys, &w, &outer[i], &fwd, false, &opts.flow)?;
            w[c] = -grid.t_max;
            let minus = integrate_line(sys, &w, &outer[i], &fwd, false, &opts.flow)?;
            let mut pts: Vec<Vec<f64>> = minus.samples.iter().rev().map(|s| s.z.clone()).collect();
            pts.extend(plus.samples.iter().skip(1).map(|s| s.z.clone()));
            Ok(pts)
        })?;
        let old = outer.len();
        let mut next = vec![Vec::new(); old * grid.n1];
        for (i, pts) in runs.into_iter().enumerate() {
            for (m, z) in pts.into_iter().enumerate() {
                next[i + old * m] = z;
            }
        }
        outer = next;
    }
    let rows = exec::try_map_indexed(opts.execution, outer.len(), |o| -> Result<Vec<f64>> {
        let mut w = vec![0.0; k];
        w[0] = grid.t_max;
        let run = integrate_line(sys, &w, &outer[o], &fwd, false, &opts.flow)?;
        Ok(run.samples.iter().map(|s| distance(&s.z, &z0)).collect())
    })?;
    let mut d = vec![f64::INFINITY; grid.len()];
    for (o, row) in rows.into_iter().enumerate() {
        // outer index: component k-1 fastest, component 1 slowest
        let mut m = vec![0usize; k];
        let mut rem = o;
        for c in (1..k).rev() {
            m[c] = rem % grid.n1;
            rem /= grid.n1;
        }
        for (i, v) in row.into_iter().enumerate() {
            m[0] = i;
            d[grid.flat(&m)] = v;
        }
    }
    Ok(d)
}

fn local_minima(d: &[f64], grid: &Grid, threshold: f64) -> Vec<usize> {
    let k = grid.k;
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(k as u32))
        .map(|mut c| {
            (0..k)
                .map(|_| {
                    let o = (c % 3) as i64 - 1;
                    c /= 3;
                    o
                })
                .collect()
        })
        .filter(|o: &Vec<i64>| o.iter().any(|v| *v != 0))
        .collect();
    (0..d.len())
        .filter(|&i| {
            if d[i] > threshold {
                return false;
            }
            let m = grid.multi(i);
            offsets.iter().all(|o| {
                let nb: Option<Vec<usize>> = (0..k)
                    .map(|c| {
                        let v = m[c] as i64 + o[c];
                        (v >= 0 && (v as usize) < grid.dims(c)).then_some(v as usize)
                    })
                    .collect();
                match nb {
                    Some(nb) => d[grid.flat(&nb)] >= d[i],
                    None => true,
                }
            })
        })
        .collect()
}

/// Finds a reduced basis of the period lattice at `p` and re-checks it at
/// `check_points` further points of the level set.
pub fn detect_period_lattice(sys: &ClassicalSystem, p: &PhasePoint, opts: &PeriodOptions) -> Result<PeriodLattice> {
    let k = sys.k();
    sys.check_flat(&p.to_flat())?;
    if !(opts.t_max > 0.0) || opts.grid < 3 {
        return Err(Error::Input("period scan needs t_max > 0 and at least 3 grid points".into()));
    }
    let grid = Grid {
        n0: opts.grid,
        n1: 2 * opts.grid - 1,
        k,
        dt: opts.t_max / (opts.grid - 1) as f64,
        t_max: opts.t_max,
    };
    let z0 = p.to_flat();
    let mut field = vec![0.0; z0.len()];
    let speed: f64 = (0..k)
        .map(|j| {
            sys.field_flat(j, &z0, &mut field);
            field.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .sum();
    let threshold = 1.5 * grid.dt * speed;
    let d = scan(sys, p, &grid, opts)?;
    let minima = local_minima(&d, &grid, threshold);
    log::debug!("period scan: {} candidate minima below {threshold:e}", minima.len());

    let fine = precise(&opts.flow, opts.tol_period);
    let refined = exec::try_map_indexed(opts.execution, minima.len(), |i| {
        let m = grid.multi(minima[i]);
        let t0: Vec<f64> = (0..k).map(|c| grid.time(c, m[c])).collect();
        refine_period(sys, p, &t0, opts.tol_period, &fine)
    })?;
    let min_len = 0.5 * grid.dt;
    let mut gens: Vec<Vec<f64>> = Vec::new();
    for (t, res) in refined {
        if res > opts.tol_period || reduce::norm(&t) < min_len {
            continue;
        }
        if gens.iter().any(|g| distance(g, &t) < 1e-6 * (1.0 + reduce::norm(&t))) {
            continue;
        }
        gens.push(t);
    }
    if gens.is_empty() {
        return Err(Error::NoPeriod { t_max: opts.t_max });
    }
    let basis = reduce::lattice_from_generators(&gens, k, 1e-6).map_err(|e| match e {
        Error::Input(msg) if msg.contains("rank") => Error::NoPeriod { t_max: opts.t_max },
        other => other,
    })?;
    // Polish the reduced vectors; combinations carry summed refinement error.
    let mut polished = Vec::with_capacity(k);
    let mut return_residuals = Vec::with_capacity(k);
    for t in &basis {
        let (t2, res) = refine_period(sys, p, t, opts.tol_period, &fine)?;
        if res > opts.tol_period {
            return Err(Error::violation(
                Hypothesis::H2,
                format!("reduced period {t:?} does not return (residual {res:e})"),
            ));
        }
        polished.push(t2);
        return_residuals.push(res);
    }
    let a = basis_change(&polished)?;

    let others = level_points(sys, p, opts.check_points, opts.seed, opts.flow.tol_flow.max(1e-12))?;
    let mut check_residuals = vec![0.0f64; k];
    for q in &others {
        for (j, t) in polished.iter().enumerate() {
            let seg = flow(sys, t, q, &fine)?;
            let r = distance(&seg.end.to_flat(), &q.to_flat());
            check_residuals[j] = check_residuals[j].max(r);
        }
    }
    if let Some((j, r)) = check_residuals.iter().enumerate().find(|(_, r)| **r > opts.tol_period) {
        return Err(Error::violation(
            Hypothesis::H2,
            format!("period {:?} fails to return at another level-set point (residual {r:e})", polished[j]),
        ));
    }
    Ok(PeriodLattice { basis: polished, a, return_residuals, check_residuals, base: p.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelSpec;
    use std::f64::consts::PI;

    fn sys(name: &str, e0: Vec<f64>) -> ClassicalSystem {
        ClassicalSystem::from_spec(&ModelSpec::new(name), e0).unwrap()
    }

    #[test]
    fn ho1d_period() {
        let s = sys("ho1d", vec![0.5]);
        let p = PhasePoint::new(vec![1.0], vec![0.0]).unwrap();
        let lat = detect_period_lattice(&s, &p, &PeriodOptions::default()).unwrap();
        assert_eq!(lat.basis.len(), 1);
        assert!((lat.basis[0][0] - 2.0 * PI).abs() < 1e-9, "{:?}", lat.basis);
        assert!(lat.return_residuals[0] <= 1e-9);
        assert!((lat.a.a[(0, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hl_half_period_lattice() {
        let s = sys("ho2d_hl", vec![1.0, 0.3]);
        let p = crate::phase::find_level_point(
            &s,
            &[1.0, 0.3],
            &PhasePoint::new(vec![0.8, 0.1], vec![0.2, 0.5]).unwrap(),
            1e-13,
        )
        .unwrap();
        let lat = detect_period_lattice(&s, &p, &PeriodOptions::default()).unwrap();
        let expect = vec![vec![PI, PI], vec![PI, -PI]];
        assert!(reduce::unimodular_transform(&lat.basis, &expect, 1e-6).is_some(), "{:?}", lat.basis);
        assert!((lat.a.det().abs() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn irrational_frequencies_have_no_period() {
        let s = sys("ho2d_aniso", vec![1.0]);
        let p = crate::phase::find_level_point(
            &s,
            &[1.0],
            &PhasePoint::new(vec![0.7, 0.4], vec![0.3, 0.5]).unwrap(),
            1e-13,
        )
        .unwrap();
        let opts = PeriodOptions { t_max: 20.0, grid: 400, ..Default::default() };
        let err = detect_period_lattice(&s, &p, &opts).unwrap_err();
        assert!(matches!(err, Error::NoPeriod { .. }), "{err}");
        assert_eq!(err.hypothesis(), Some(Hypothesis::H2));
    }
}

//! Small-dimension lattice utilities: LLL reduction of real bases, lattice
//! bases from redundant generator sets, and unimodular equivalence.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// In-place LLL reduction (`δ = 0.99`) of a real basis given as vectors.
pub fn lll_reduce(basis: &mut [Vec<f64>]) {
    let k = basis.len();
    if k < 2 {
        return;
    }
    let delta = 0.99;
    let gso = |b: &[Vec<f64>]| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut bs: Vec<Vec<f64>> = Vec::with_capacity(b.len());
        let mut mu = vec![vec![0.0; b.len()]; b.len()];
        for i in 0..b.len() {
            let mut v = b[i].clone();
            for j in 0..i {
                mu[i][j] = dot(&b[i], &bs[j]) / dot(&bs[j], &bs[j]);
                for (x, y) in v.iter_mut().zip(&bs[j]) {
                    *x -= mu[i][j] * y;
                }
            }
            bs.push(v);
        }
        (bs, mu)
    };
    let mut i = 1;
    let mut guard = 0;
    while i < k && guard < 10_000 {
        guard += 1;
        for j in (0..i).rev() {
            let (_, mu) = gso(basis);
            let q = mu[i][j].round();
            if q != 0.0 {
                let bj = basis[j].clone();
                for (x, y) in basis[i].iter_mut().zip(&bj) {
                    *x -= q * y;
                }
            }
        }
        let (bs, mu) = gso(basis);
        let lhs = dot(&bs[i], &bs[i]);
        let rhs = (delta - mu[i][i - 1] * mu[i][i - 1]) * dot(&bs[i - 1], &bs[i - 1]);
        if lhs >= rhs {
            i += 1;
        } else {
            basis.swap(i, i - 1);
            i = i.max(2) - 1;
        }
    }
}

/// Orders a reduced basis by length (then lexicographically) and flips each
/// vector so its first non-negligible component is positive.
pub fn canonicalize(basis: &mut [Vec<f64>]) {
    for v in basis.iter_mut() {
        let scale = norm(v).max(1.0);
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-9 * scale) {
            if *first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
    }
    basis.sort_by(|a, b| {
        let (na, nb) = (norm(a), norm(b));
        if (na - nb).abs() > 1e-9 * na.max(nb).max(1.0) {
            na.total_cmp(&nb)
        } else {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| if (x - y).abs() > 1e-9 { x.total_cmp(y) } else { std::cmp::Ordering::Equal })
                .find(|o| *o != std::cmp::Ordering::Equal)
                .unwrap_or(std::cmp::Ordering::Equal)
        }
    });
}

fn columns_matrix(vs: &[Vec<f64>]) -> DMatrix<f64> {
    let k = vs[0].len();
    DMatrix::from_fn(k, vs.len(), |r, c| vs[c][r])
}

/// Column-style Hermite reduction of integer generators; returns a basis of
/// the integer lattice they span (rank must equal the row count).
fn integer_basis(mut cols: Vec<Vec<i128>>) -> Option<Vec<Vec<i128>>> {
    let k = cols[0].len();
    for r in 0..k {
        for c in r + 1..cols.len() {
            while cols[c][r] != 0 {
                let q = cols[r][r] / cols[c][r];
                if q != 0 {
                    let cc = cols[c].clone();
                    for (x, y) in cols[r].iter_mut().zip(&cc) {
                        *x -= q * y;
                    }
                }
                cols.swap(r, c);
            }
        }
        if cols[r][r] == 0 {
            return None;
        }
    }
    Some(cols.into_iter().take(k).collect())
}

fn rationalize(c: &[f64], max_den: i128, tol: f64) -> Option<(i128, Vec<i128>)> {
    (1..=max_den).find_map(|d| {
        let scaled: Vec<f64> = c.iter().map(|x| x * d as f64).collect();
        if scaled.iter().all(|x| (x - x.round()).abs() <= tol * d as f64) {
            Some((d, scaled.iter().map(|x| x.round() as i128).collect()))
        } else {
            None
        }
    })
}

/// Basis of the lattice generated by real vectors in `Rᵏ` that are known to
/// lie on a common lattice up to `tol` in lattice coordinates.
pub fn lattice_from_generators(gens: &[Vec<f64>], k: usize, tol: f64) -> Result<Vec<Vec<f64>>> {
    let mut sorted: Vec<Vec<f64>> = gens.iter().filter(|v| norm(v) > 0.0).cloned().collect();
    sorted.sort_by(|a, b| norm(a).total_cmp(&norm(b)));
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in &sorted {
        if basis.len() == k {
            break;
        }
        let mut trial = basis.clone();
        trial.push(v.clone());
        let m = columns_matrix(&trial);
        let sv = m.clone().svd(false, false).singular_values;
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        if smin > 1e-6 * norm(v) {
            basis = trial;
        }
    }
    if basis.len() < k {
        return Err(Error::Input(format!("generators span rank {} < {k}", basis.len())));
    }
    for v in &sorted {
        let b = columns_matrix(&basis);
        let inv = b.try_inverse().ok_or_else(|| Error::Input("singular lattice basis".into()))?;
        let c: Vec<f64> = (inv * nalgebra::DVector::from_column_slice(v)).as_slice().to_vec();
        if c.iter().all(|x| (x - x.round()).abs() <= tol) {
            continue;
        }
        let (d, ci) = rationalize(&c, 64, tol).ok_or_else(|| {
            Error::Input(format!("generator {v:?} is not commensurate with the current basis"))
        })?;
        let mut cols: Vec<Vec<i128>> = (0..k)
            .map(|j| (0..k).map(|r| if r == j { d } else { 0 }).collect())
            .collect();
        cols.push(ci);
        let ib = integer_basis(cols).ok_or_else(|| Error::Input("rank loss in lattice refinement".into()))?;
        basis = ib
            .iter()
            .map(|col| {
                (0..k)
                    .map(|r| (0..k).map(|j| basis[j][r] * col[j] as f64).sum::<f64>() / d as f64)
                    .collect()
            })
            .collect();
    }
    lll_reduce(&mut basis);
    canonicalize(&mut basis);
    Ok(basis)
}

/// Integer matrix `U` with `B₂ = B₁ U` and `|det U| = 1`, if one exists
/// (entries integral within `tol`).
pub fn unimodular_transform(b1: &[Vec<f64>], b2: &[Vec<f64>], tol: f64) -> Option<DMatrix<i64>> {
    if b1.len() != b2.len() || b1.is_empty() {
        return None;
    }
    let m1 = columns_matrix(b1);
    let m2 = columns_matrix(b2);
    let u = m1.try_inverse()? * m2;
    if u.iter().any(|x| (x - x.round()).abs() > tol) {
        return None;
    }
    let ui = u.map(|x| x.round() as i64);
    let det = ui.map(|x| x as f64).determinant().round();
    (det.abs() == 1.0).then_some(ui)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn generators_with_half_periods() {
        // (2π,0), (0,2π) and (π,π) generate the checkerboard lattice.
        let g = vec![vec![2.0 * PI, 0.0], vec![0.0, 2.0 * PI], vec![PI, PI], vec![3.0 * PI, -PI]];
        let b = lattice_from_generators(&g, 2, 1e-6).unwrap();
        let expect = vec![vec![PI, PI], vec![PI, -PI]];
        assert!(unimodular_transform(&b, &expect, 1e-9).is_some(), "{b:?}");
        assert!((norm(&b[0]) - PI * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_gcd() {
        let g = vec![vec![4.0 * PI], vec![6.0 * PI], vec![10.0 * PI]];
        let b = lattice_from_generators(&g, 1, 1e-6).unwrap();
        assert!((b[0][0] - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_generators_fail() {
        let g = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        assert!(lattice_from_generators(&g, 2, 1e-6).is_err());
    }

    #[test]
    fn non_unimodular_is_rejected() {
        let b1 = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let b2 = vec![vec![2.0, 0.0], vec![0.0, 1.0]];
        assert!(unimodular_transform(&b1, &b2, 1e-9).is_none());
    }

    proptest! {
        #[test]
        fn lll_preserves_lattice_and_reduces(
            p in -4i64..4, q in -4i64..4, r in -4i64..4,
            s in 0.5f64..3.0, t in -1.0f64..1.0,
        ) {
            // U = [[1,p],[0,1]]·[[1,0],[q,1]]·[[1,r],[0,1]] is unimodular.
            let (a, b, c, d) = (1 + p * q, r * (1 + p * q) + p, q, q * r + 1);
            let e1 = [s, 0.0];
            let e2 = [t, 1.3];
            let b1 = vec![
                vec![a as f64 * e1[0] + c as f64 * e2[0], a as f64 * e1[1] + c as f64 * e2[1]],
                vec![b as f64 * e1[0] + d as f64 * e2[0], b as f64 * e1[1] + d as f64 * e2[1]],
            ];
            let mut r = b1.clone();
            lll_reduce(&mut r);
            prop_assert!(unimodular_transform(&b1, &r, 1e-7).is_some());
            // Gauss-reduced in two dimensions: |μ₂₁| ≤ 1/2 and near-Lovász.
            let n0 = dot(&r[0], &r[0]);
            prop_assert!(dot(&r[0], &r[1]).abs() <= 0.5 * n0 + 1e-9);
            prop_assert!(norm(&r[0]) <= norm(&r[1]) * 1.01 + 1e-9);
        }
    }
}

//! Loops of Lagrangian frames along a closed joint trajectory and their
//! Maslov index (winding of `det²` on `U(N)/O(N)`).

use nalgebra::{DMatrix, Complex};

use super::{check_period, precise};
use crate::dynamics::{integrate_line, FlowOptions};
use crate::error::{Error, Result};
use crate::phase::{ClassicalSystem, PhasePoint};

/// Frames are `4n × 2n` in coordinates `(x, ξ, y, η)` of the product space
/// with form `ω ⊖ ω`.
#[derive(Debug, Clone)]
pub struct LagrangianFrameLoop {
    pub samples: Vec<DMatrix<f64>>,
    pub closed: bool,
    pub isotropy_residual: f64,
    pub max_principal_angle: f64,
}

fn orthonormal(f: &DMatrix<f64>) -> DMatrix<f64> {
    f.clone().qr().q()
}

/// Largest principal angle between the column spans of two frames.
pub fn principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = orthonormal(a);
    let qb = orthonormal(b);
    let s = (qa.transpose() * qb).singular_values();
    let smin = s.iter().cloned().fold(f64::INFINITY, f64::min).clamp(-1.0, 1.0);
    smin.acos()
}

/// Orthonormal basis of `T_pΣ₀`: the complement of the gradients `∇q₀ⱼ(p)`.
fn tangent_basis(sys: &ClassicalSystem, z: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n2 = z.len();
    let k = sys.k();
    let jac = sys.jacobian(z);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n2);
    let push = |v: Vec<f64>, basis: &mut Vec<Vec<f64>>| -> bool {
        let mut v = v;
        for _ in 0..2 {
            for b in basis.iter() {
                let c: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 1e-8 {
            basis.push(v.into_iter().map(|x| x / nrm).collect());
            true
        } else {
            false
        }
    };
    for j in 0..k {
        let g: Vec<f64> = (0..n2).map(|c| jac[(j, c)]).collect();
        if !push(g, &mut basis) {
            return Err(Error::Frame(format!("gradients of q0 are dependent at the base point (component {j})")));
        }
    }
    for i in 0..n2 {
        if basis.len() == n2 {
            break;
        }
        let mut e = vec![0.0; n2];
        e[i] = 1.0;
        push(e, &mut basis);
    }
    Ok(basis.split_off(k))
}

/// Frame of `Λ₁` at `(Ψ^{sT}(p), p)` from the monodromy `m` and end point `z`.
fn frame(sys: &ClassicalSystem, m: &DMatrix<f64>, z: &[f64], tangent: &[Vec<f64>]) -> DMatrix<f64> {
    let n2 = z.len();
    let k = sys.k();
    let mut f = DMatrix::zeros(2 * n2, n2);
    for (c, v) in tangent.iter().enumerate() {
        let mv = m * nalgebra::DVector::from_column_slice(v);
        for r in 0..n2 {
            f[(r, c)] = mv[r];
            f[(n2 + r, c)] = v[r];
        }
    }
    let mut field = vec![0.0; n2];
    for j in 0..k {
        sys.field_flat(j, z, &mut field);
        for r in 0..n2 {
            f[(r, tangent.len() + j)] = field[r];
        }
    }
    f
}

/// `max |FᵀΩF|` for column-normalized `F`, with `Ω = diag(J, −J)`.
pub fn isotropy_residual(f: &DMatrix<f64>) -> f64 {
    let n2 = f.nrows() / 2;
    let n = n2 / 2;
    let mut g = f.clone();
    for mut c in g.column_iter_mut() {
        let nrm = c.norm();
        if nrm > 0.0 {
            c /= nrm;
        }
    }
    let mut og = DMatrix::zeros(g.nrows(), g.ncols());
    for c in 0..g.ncols() {
        for (block, sign) in [(0usize, 1.0), (n2, -1.0)] {
            for i in 0..n {
                // J = [[0, I], [−I, 0]]
                og[(block + i, c)] = sign * g[(block + n + i, c)];
                og[(block + n + i, c)] = -sign * g[(block + i, c)];
            }
        }
    }
    (g.transpose() * og).amax()
}

/// Samples the loop `s ↦ T_{(Ψ^{sT}p, p)}Λ₁` at `n_frames + 1` equally spaced
/// parameters `s ∈ [0, 1]`.
pub fn lambda1_frame_loop(
    sys: &ClassicalSystem,
    p: &PhasePoint,
    t: &[f64],
    n_frames: usize,
    tol_period: f64,
    opts: &FlowOptions,
) -> Result<LagrangianFrameLoop> {
    let z0 = p.to_flat();
    sys.check_flat(&z0)?;
    if n_frames == 0 {
        return Err(Error::Input("frame loop needs at least one step".into()));
    }
    let tangent = tangent_basis(sys, &z0)?;
    let fine = precise(opts, tol_period);
    check_period(sys, p, t, tol_period, &fine)?;
    let n2 = z0.len();
    let mut samples = vec![frame(sys, &DMatrix::identity(n2, n2), &z0, &tangent)];
    if t.iter().any(|v| *v != 0.0) {
        let outputs: Vec<f64> = (1..=n_frames).map(|i| i as f64 / n_frames as f64).collect();
        let run = integrate_line(sys, t, &z0, &outputs, true, &fine)?;
        for s in &run.samples {
            samples.push(frame(sys, s.m.as_ref().expect("variational run"), &s.z, &tangent));
        }
    } else {
        samples.extend(std::iter::repeat_n(samples[0].clone(), n_frames));
    }
    let mut iso: f64 = 0.0;
    for f in &samples {
        let rank = f.clone().svd(false, false).singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        if rank < 1e-8 * f.amax().max(1.0) {
            return Err(Error::Frame("frame lost full column rank".into()));
        }
        iso = iso.max(isotropy_residual(f));
    }
    if iso > 1e-8 {
        return Err(Error::Frame(format!("frames are not isotropic (residual {iso:e})")));
    }
    let mut max_angle: f64 = 0.0;
    for w in samples.windows(2) {
        max_angle = max_angle.max(principal_angle(&w[0], &w[1]));
    }
    if max_angle >= std::f64::consts::FRAC_PI_4 {
        return Err(Error::Undersampled(format!(
            "consecutive frames differ by principal angle {max_angle:.3} with {n_frames} frames"
        )));
    }
    let closed = principal_angle(&samples[0], samples.last().expect("nonempty")) < 1e-6;
    Ok(LagrangianFrameLoop { samples, closed, isotropy_residual: iso, max_principal_angle: max_angle })
}

/// `arg det(X + iΞ)²` of a Lagrangian frame after orthonormalization, in the
/// standard coordinates (positions `(x, y)`, momenta `(ξ, −η)`).
fn det2_phase(f: &DMatrix<f64>) -> f64 {
    let n2 = f.nrows() / 2;
    let n = n2 / 2;
    let mut g = DMatrix::zeros(f.nrows(), f.ncols());
    for c in 0..f.ncols() {
        for i in 0..n {
            g[(i, c)] = f[(i, c)];
            g[(n + i, c)] = f[(n2 + i, c)];
            g[(n2 + i, c)] = f[(n + i, c)];
            g[(n2 + n + i, c)] = -f[(n2 + n + i, c)];
        }
    }
    let q = orthonormal(&g);
    let z = DMatrix::from_fn(n2, n2, |r, c| Complex::new(q[(r, c)], q[(n2 + r, c)]));
    let d = z.determinant();
    2.0 * d.arg()
}

/// Winding number of `det²` along the loop. Orientation is fixed so that the
/// energy cycle of the harmonic oscillator has index `+2`.
pub fn maslov_index(lp: &LagrangianFrameLoop) -> Result<i64> {
    if !lp.closed {
        return Err(Error::Precondition("frame loop is not closed".into()));
    }
    let phases: Vec<f64> = lp.samples.iter().map(det2_phase).collect();
    let mut total = 0.0;
    for w in phases.windows(2) {
        let mut d = w[1] - w[0];
        d = (d + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
        if d.abs() > std::f64::consts::FRAC_PI_2 {
            return Err(Error::Undersampled(format!("det² phase jumps by {d:.3} between frames")));
        }
        total += d;
    }
    let winding = total / (2.0 * std::f64::consts::PI);
    let r = winding.round();
    if (winding - r).abs() > 1e-3 {
        return Err(Error::Frame(format!("non-integer winding {winding}")));
    }
    Ok(-(r as i64))
}

/// Maslov index of the cycle `γ^T(p)`, doubling the frame count until the
/// sampling guards are satisfied.
pub fn cycle_maslov_index(
    sys: &ClassicalSystem,
    p: &PhasePoint,
    t: &[f64],
    n_frames: usize,
    max_frames: usize,
    tol_period: f64,
    opts: &FlowOptions,
) -> Result<i64> {
    let mut frames = n_frames.max(1);
    loop {
        let res = lambda1_frame_loop(sys, p, t, frames, tol_period, opts).and_then(|lp| maslov_index(&lp));
        match res {
            Err(Error::Undersampled(_)) if frames * 2 <= max_frames => frames *= 2,
            other => return other,
        }
    }
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
    fn ho1d_energy_cycle_has_index_two() {
        let s = sys("ho1d", vec![0.5]);
        let p = PhasePoint::new(vec![1.0], vec![0.0]).unwrap();
        let lp = lambda1_frame_loop(&s, &p, &[2.0 * PI], 64, 1e-9, &FlowOptions::default()).unwrap();
        assert!(lp.closed);
        assert_eq!(lp.samples[0].shape(), (4, 2));
        assert!(lp.isotropy_residual <= 1e-8);
        assert_eq!(maslov_index(&lp).unwrap(), 2);
    }

    #[test]
    fn constant_loop_has_index_zero() {
        let s = sys("ho1d", vec![0.5]);
        let p = PhasePoint::new(vec![1.0], vec![0.0]).unwrap();
        let lp = lambda1_frame_loop(&s, &p, &[0.0], 8, 1e-9, &FlowOptions::default()).unwrap();
        assert!(lp.closed);
        assert_eq!(maslov_index(&lp).unwrap(), 0);
    }

    #[test]
    fn hl_cycles() {
        let s = sys("ho2d_hl", vec![1.0, 0.3]);
        let p = crate::phase::find_level_point(
            &s,
            &[1.0, 0.3],
            &PhasePoint::new(vec![0.8, 0.1], vec![0.2, 0.5]).unwrap(),
            1e-13,
        )
        .unwrap();
        let o = FlowOptions::default();
        let mu = |t: &[f64]| cycle_maslov_index(&s, &p, t, 64, 4096, 1e-9, &o).unwrap();
        assert_eq!(mu(&[PI, PI]), 2);
        assert_eq!(mu(&[PI, -PI]), 2);
        assert_eq!(mu(&[0.0, 2.0 * PI]), 0);
        assert_eq!(mu(&[2.0 * PI, 0.0]), 4);
        let lp = lambda1_frame_loop(&s, &p, &[PI, PI], 64, 1e-9, &o).unwrap();
        assert_eq!(lp.samples[0].shape(), (8, 4));
    }

    #[test]
    fn coarse_sampling_is_reported() {
        let s = sys("ho1d", vec![0.5]);
        let p = PhasePoint::new(vec![1.0], vec![0.0]).unwrap();
        let err = lambda1_frame_loop(&s, &p, &[2.0 * PI], 3, 1e-9, &FlowOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Undersampled(_)), "{err}");
    }
}

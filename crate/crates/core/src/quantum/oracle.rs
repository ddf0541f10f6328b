//! Closed-form joint spectra of the oscillator models.

use super::{JointSpectrum, SpectralPoint};
use crate::error::{Error, Result};
use crate::lattice::lex_cmp;
use crate::models::{Model, ModelSpec};

pub fn oracle_spectrum(spec: &ModelSpec, h: f64, window: &[(f64, f64)]) -> Result<JointSpectrum> {
    if !(h > 0.0) {
        return Err(Error::Input(format!("h must be positive, got {h}")));
    }
    let model = spec.build()?;
    let k = match model {
        Model::Ho2dHl => 2,
        Model::Ho1d { .. } | Model::Ho2dEnergy => 1,
        _ => return Err(Error::Unsupported(format!("no closed-form spectrum for {}", model.name()))),
    };
    if window.len() != k {
        return Err(Error::Dimension { expected: k, got: window.len() });
    }
    let inside = |v: f64, w: (f64, f64)| v > w.0 && v < w.1;
    let top = window[0].1;
    let n_max = if top > 0.0 { (top / h).ceil() as i64 + 1 } else { 0 };
    let mut points = Vec::new();
    let point = |lambda: Vec<f64>, multiplicity| SpectralPoint { lambda, multiplicity, residual: 0.0 };
    match model {
        Model::Ho1d { q1_const, q1_linear } => {
            // completing the square: (x + hβ)²/2 shifts by −h²β²/2
            let shift = h * q1_const - h * h * q1_linear * q1_linear / 2.0;
            for i in 0..=n_max + 1 {
                let e = h * (i as f64 + 0.5) + shift;
                if inside(e, window[0]) {
                    points.push(point(vec![e], 1));
                }
            }
        }
        Model::Ho2dHl => {
            for n in 0..=n_max {
                for m in (-n..=n).step_by(2) {
                    let (e, l) = (h * (n + 1) as f64, h * m as f64);
                    if inside(e, window[0]) && inside(l, window[1]) {
                        points.push(point(vec![e, l], 1));
                    }
                }
            }
        }
        Model::Ho2dEnergy => {
            for n in 0..=n_max {
                let e = h * (n + 1) as f64;
                if inside(e, window[0]) {
                    points.push(point(vec![e], (n + 1) as usize));
                }
            }
        }
        _ => unreachable!(),
    }
    points.sort_by(|a, b| lex_cmp(&a.lambda, &b.lambda));
    Ok(JointSpectrum {
        h,
        points,
        window: window.to_vec(),
        discarded: Vec::new(),
        grid_change: None,
        basis_descriptor: "closed form".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let s = oracle_spectrum(&ModelSpec::new("ho1d"), 0.2, &[(0.0, 0.8)]).unwrap();
        let v: Vec<f64> = s.points.iter().map(|p| p.lambda[0]).collect();
        assert_eq!(v.len(), 4);
        assert!((v[0] - 0.1).abs() < 1e-15 && (v[1] - 0.3).abs() < 1e-15);

        let s = oracle_spectrum(&ModelSpec::new("ho2d_energy"), 0.1, &[(0.95, 1.05)]).unwrap();
        assert_eq!(s.points.len(), 1);
        assert_eq!(s.points[0].multiplicity, 10);

        let s = oracle_spectrum(&ModelSpec::new("ho1d"), 0.1, &[(0.51, 0.52)]).unwrap();
        assert!(s.points.is_empty());
        assert!(oracle_spectrum(&ModelSpec::new("central2d"), 0.1, &[(0.0, 1.0), (0.0, 1.0)]).is_err());
    }
}

//! Comparison of computed joint spectra with the predicted lattice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{enumerate_lattice_in, LatticeSpec, PredictedPoint};
use crate::quantum::{JointSpectrum, SpectralPoint};

/// Deviations below this are treated as exact and left out of rate fits.
pub const EXACT_DEVIATION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub spectrum: SpectralPoint,
    pub predicted: PredictedPoint,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub h: f64,
    pub pairs: Vec<MatchPair>,
    pub unmatched_spectrum: Vec<SpectralPoint>,
    pub unmatched_lattice: Vec<PredictedPoint>,
    pub max_deviation: f64,
    pub window: Vec<(f64, f64)>,
    pub reject_radius: f64,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `c·h²`, capped at a quarter of the lattice gap so that a match is never
/// ambiguous at coarse `h`.
pub fn reject_radius(spec: &LatticeSpec, h: f64, c: f64) -> f64 {
    (c * h * h).min(0.25 * spec.unit_gap() * h)
}

/// Pairs every spectral point with its nearest lattice point; pairs further
/// apart than `reject_radius` (default `reject_radius(spec, h, 10)`) stay
/// unmatched.
pub fn match_spectrum(
    spec: &LatticeSpec,
    h: f64,
    spectrum: &JointSpectrum,
    radius: Option<f64>,
) -> Result<MatchReport> {
    let radius = radius.unwrap_or_else(|| reject_radius(spec, h, 10.0));
    let half_gap = 0.5 * spec.unit_gap() * h;
    if !(radius > 0.0) || radius >= half_gap {
        return Err(Error::Input(format!(
            "reject radius {radius:e} must be positive and below half the lattice gap {half_gap:e}"
        )));
    }
    let window = &spectrum.window;
    let wide: Vec<(f64, f64)> = window.iter().map(|(a, b)| (a - radius, b + radius)).collect();
    let predicted = enumerate_lattice_in(spec, h, &wide)?;
    let mut used = vec![false; predicted.len()];
    let mut pairs = Vec::new();
    let mut unmatched_spectrum = Vec::new();
    for sp in &spectrum.points {
        let best = predicted
            .iter()
            .enumerate()
            .map(|(i, p)| (i, euclid(&sp.lambda, &p.value)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((i, d)) if d <= radius => {
                used[i] = true;
                pairs.push(MatchPair { spectrum: sp.clone(), predicted: predicted[i].clone(), deviation: d });
            }
            _ => unmatched_spectrum.push(sp.clone()),
        }
    }
    let unmatched_lattice = predicted
        .iter()
        .zip(&used)
        .filter(|(p, u)| !**u && p.value.iter().zip(window).all(|(v, (a, b))| v > a && v < b))
        .map(|(p, _)| p.clone())
        .collect();
    let max_deviation = pairs.iter().map(|p| p.deviation).fold(0.0, f64::max);
    Ok(MatchReport {
        h,
        pairs,
        unmatched_spectrum,
        unmatched_lattice,
        max_deviation,
        window: window.clone(),
        reject_radius: radius,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub h_list: Vec<f64>,
    pub max_deviations: Vec<f64>,
    /// Least-squares slope of `log max_deviation` against `log h`; absent
    /// when fewer than two deviations exceed the exactness floor.
    pub fitted_exponent: Option<f64>,
    pub fit_residual: f64,
    /// Every deviation is below the exactness floor.
    pub exact_match: bool,
}

pub fn fit_deviation_scaling(reports: &[MatchReport]) -> Result<ScalingFit> {
    if reports.len() < 3 {
        return Err(Error::Input(format!("scaling fit needs at least 3 values of h, got {}", reports.len())));
    }
    let h_list: Vec<f64> = reports.iter().map(|r| r.h).collect();
    if h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Input("h values must be strictly decreasing".into()));
    }
    let max_deviations: Vec<f64> = reports.iter().map(|r| r.max_deviation).collect();
    let pts: Vec<(f64, f64)> = h_list
        .iter()
        .zip(&max_deviations)
        .filter(|(_, d)| **d >= EXACT_DEVIATION)
        .map(|(h, d)| (h.ln(), d.ln()))
        .collect();
    let exact_match = pts.is_empty();
    if pts.len() < 2 {
        return Ok(ScalingFit { h_list, max_deviations, fitted_exponent: None, fit_residual: 0.0, exact_match });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let fit_residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Ok(ScalingFit { h_list, max_deviations, fitted_exponent: Some(slope), fit_residual, exact_match })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityCount {
    pub index: Vec<i64>,
    pub center: Vec<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityReport {
    pub h: f64,
    pub counts: Vec<MultiplicityCount>,
    pub l0_estimate: f64,
    /// `l₀ h^{k−n}`.
    pub predicted: f64,
    pub relative_errors: Vec<f64>,
    pub half_width: f64,
}

/// Counts joint eigenvalues (with multiplicity) in the cubes of half-width
/// `C h²` around each lattice point of the spectrum's window.
pub fn multiplicity_profile(
    spec: &LatticeSpec,
    h: f64,
    spectrum: &JointSpectrum,
    l0: f64,
    n: usize,
    c: f64,
) -> Result<MultiplicityReport> {
    let k = spec.k();
    let half_width = c * h * h;
    let half_gap = 0.5 * spec.unit_gap() * h;
    if half_width >= half_gap {
        return Err(Error::WindowOverlap { half_width, half_gap });
    }
    let lattice = enumerate_lattice_in(spec, h, &spectrum.window)?;
    let predicted = l0 * h.powi(k as i32 - n as i32);
    let mut counts = Vec::with_capacity(lattice.len());
    let mut relative_errors = Vec::with_capacity(lattice.len());
    for p in lattice {
        let count = spectrum
            .points
            .iter()
            .filter(|s| s.lambda.iter().zip(&p.value).all(|(a, b)| (a - b).abs() <= half_width))
            .map(|s| s.multiplicity)
            .sum();
        relative_errors.push((count as f64 - predicted).abs() / predicted);
        counts.push(MultiplicityCount { index: p.index, center: p.value, count });
    }
    Ok(MultiplicityReport { h, counts, l0_estimate: l0, predicted, relative_errors, half_width })
}

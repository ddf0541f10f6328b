//! Built-in model library.
//!
//! Every model is a polynomial (or near-polynomial) joint symbol on `T*Rⁿ`
//! with exact gradients and Hessians. Phase-space points are flat slices
//! `z = (x₁..xₙ, ξ₁..ξₙ)`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A joint principal symbol `q₀ : T*Rⁿ → Rᵏ` with derivatives and an optional
/// subprincipal part `q₁`.
pub trait JointSymbol: Send + Sync + fmt::Debug {
    /// Configuration-space dimension `n`.
    fn n(&self) -> usize;
    /// Number of commuting Hamiltonians `k`.
    fn k(&self) -> usize;
    fn value(&self, j: usize, z: &[f64]) -> f64;
    /// Writes `∇q₀ⱼ(z)` into `out` (length `2n`, ordered `(∂ₓ, ∂ξ)`).
    fn gradient(&self, j: usize, z: &[f64], out: &mut [f64]);
    /// Writes the Hessian of `q₀ⱼ` into `out`; returns `false` if no analytic
    /// Hessian is available.
    fn hessian(&self, _j: usize, _z: &[f64], _out: &mut DMatrix<f64>) -> bool {
        false
    }
    fn has_subprincipal(&self) -> bool {
        false
    }
    fn subprincipal(&self, _j: usize, _z: &[f64]) -> f64 {
        0.0
    }
    /// Whether `q₀ⱼ = T(ξ) + V(x)`.
    fn separable(&self, _j: usize) -> bool {
        false
    }
    /// Axis-aligned box `[(lo, hi); 2n]` containing the level set `q₀⁻¹(e0)`.
    fn bounding_box(&self, _e0: &[f64]) -> Option<Vec<(f64, f64)>> {
        None
    }
    /// Connectedness of the level set, as asserted by the model author.
    fn level_connected(&self, _e0: &[f64]) -> bool {
        false
    }
}

/// Model selection as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ModelSpec {
    pub fn new(name: &str) -> Self {
        Self { name: name.to_string(), params: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn build(&self) -> Result<Model> {
        Model::from_spec(self)
    }
}

pub const MODEL_NAMES: [&str; 5] = ["ho1d", "ho2d_hl", "ho2d_aniso", "ho2d_energy", "central2d"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    /// `(x² + ξ²)/2` with optional subprincipal `q₁ = c + βx`.
    Ho1d { q1_const: f64, q1_linear: f64 },
    /// `H = (|x|² + |ξ|²)/2`, `L = x₁ξ₂ − x₂ξ₁`.
    Ho2dHl,
    /// `H = ω₁(x₁² + ξ₁²)/2 + ω₂(x₂² + ξ₂²)/2`, `k = 1`.
    Ho2dAniso { omega1: f64, omega2: f64 },
    /// `H = (|x|² + |ξ|²)/2`, `k = 1`.
    Ho2dEnergy,
    /// `H = |ξ|² + r² + λr⁴`, `L = x₁ξ₂ − x₂ξ₁`.
    Central2d { lambda: f64 },
}

fn take(params: &BTreeMap<String, f64>, allowed: &[(&str, f64)], model: &str) -> Result<Vec<f64>> {
    for key in params.keys() {
        if !allowed.iter().any(|(k, _)| k == key) {
            return Err(Error::Config(format!("unknown parameter '{key}' for model '{model}'")));
        }
    }
    let values: Vec<f64> = allowed
        .iter()
        .map(|(k, d)| params.get(*k).copied().unwrap_or(*d))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("non-finite parameter for model '{model}'")));
    }
    Ok(values)
}

impl Model {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let p = &spec.params;
        let model = match spec.name.as_str() {
            "ho1d" => {
                let v = take(p, &[("q1_const", 0.0), ("q1_linear", 0.0)], "ho1d")?;
                Model::Ho1d { q1_const: v[0], q1_linear: v[1] }
            }
            "ho2d_hl" => {
                take(p, &[], "ho2d_hl")?;
                Model::Ho2dHl
            }
            "ho2d_aniso" => {
                let v = take(p, &[("omega1", 1.0), ("omega2", std::f64::consts::SQRT_2)], "ho2d_aniso")?;
                if v[0] <= 0.0 || v[1] <= 0.0 {
                    return Err(Error::Config("ho2d_aniso frequencies must be positive".into()));
                }
                Model::Ho2dAniso { omega1: v[0], omega2: v[1] }
            }
            "ho2d_energy" => {
                take(p, &[], "ho2d_energy")?;
                Model::Ho2dEnergy
            }
            "central2d" => {
                let v = take(p, &[("lambda", 0.1)], "central2d")?;
                if v[0] < 0.0 {
                    return Err(Error::Config("central2d requires lambda >= 0".into()));
                }
                Model::Central2d { lambda: v[0] }
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown model '{other}' (available: {})",
                    MODEL_NAMES.join(", ")
                )))
            }
        };
        Ok(model)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::Ho1d { .. } => "ho1d",
            Model::Ho2dHl => "ho2d_hl",
            Model::Ho2dAniso { .. } => "ho2d_aniso",
            Model::Ho2dEnergy => "ho2d_energy",
            Model::Central2d { .. } => "central2d",
        }
    }
}

fn angular_momentum(z: &[f64]) -> f64 {
    z[0] * z[3] - z[1] * z[2]
}

fn angular_momentum_gradient(z: &[f64], out: &mut [f64]) {
    out[0] = z[3];
    out[1] = -z[2];
    out[2] = -z[1];
    out[3] = z[0];
}

fn angular_momentum_hessian(out: &mut DMatrix<f64>) {
    out.fill(0.0);
    out[(0, 3)] = 1.0;
    out[(3, 0)] = 1.0;
    out[(1, 2)] = -1.0;
    out[(2, 1)] = -1.0;
}

pub(crate) fn central_radius_max(lambda: f64, e: f64) -> f64 {
    // r² + λr⁴ = e
    let e = e.max(0.0);
    if lambda == 0.0 {
        e.sqrt()
    } else {
        let s = (-1.0 + (1.0 + 4.0 * lambda * e).sqrt()) / (2.0 * lambda);
        s.sqrt()
    }
}

impl JointSymbol for Model {
    fn n(&self) -> usize {
        match self {
            Model::Ho1d { .. } => 1,
            _ => 2,
        }
    }

    fn k(&self) -> usize {
        match self {
            Model::Ho1d { .. } | Model::Ho2dAniso { .. } | Model::Ho2dEnergy => 1,
            Model::Ho2dHl | Model::Central2d { .. } => 2,
        }
    }

    fn value(&self, j: usize, z: &[f64]) -> f64 {
        match (self, j) {
            (Model::Ho1d { .. }, 0) => 0.5 * (z[0] * z[0] + z[1] * z[1]),
            (Model::Ho2dHl | Model::Ho2dEnergy, 0) => 0.5 * z.iter().map(|v| v * v).sum::<f64>(),
            (Model::Ho2dAniso { omega1, omega2 }, 0) => {
                0.5 * omega1 * (z[0] * z[0] + z[2] * z[2]) + 0.5 * omega2 * (z[1] * z[1] + z[3] * z[3])
            }
            (Model::Central2d { lambda }, 0) => {
                let r2 = z[0] * z[0] + z[1] * z[1];
                z[2] * z[2] + z[3] * z[3] + r2 + lambda * r2 * r2
            }
            (Model::Ho2dHl | Model::Central2d { .. }, 1) => angular_momentum(z),
            _ => panic!("component {j} out of range for {}", self.name()),
        }
    }

    fn gradient(&self, j: usize, z: &[f64], out: &mut [f64]) {
        match (self, j) {
            (Model::Ho1d { .. } | Model::Ho2dHl | Model::Ho2dEnergy, 0) => out.copy_from_slice(z),
            (Model::Ho2dAniso { omega1, omega2 }, 0) => {
                out[0] = omega1 * z[0];
                out[1] = omega2 * z[1];
                out[2] = omega1 * z[2];
                out[3] = omega2 * z[3];
            }
            (Model::Central2d { lambda }, 0) => {
                let r2 = z[0] * z[0] + z[1] * z[1];
                let f = 2.0 + 4.0 * lambda * r2;
                out[0] = f * z[0];
                out[1] = f * z[1];
                out[2] = 2.0 * z[2];
                out[3] = 2.0 * z[3];
            }
            (Model::Ho2dHl | Model::Central2d { .. }, 1) => angular_momentum_gradient(z, out),
            _ => panic!("component {j} out of range for {}", self.name()),
        }
    }

    fn hessian(&self, j: usize, z: &[f64], out: &mut DMatrix<f64>) -> bool {
        out.fill(0.0);
        match (self, j) {
            (Model::Ho1d { .. } | Model::Ho2dHl | Model::Ho2dEnergy, 0) => out.fill_diagonal(1.0),
            (Model::Ho2dAniso { omega1, omega2 }, 0) => {
                out[(0, 0)] = *omega1;
                out[(2, 2)] = *omega1;
                out[(1, 1)] = *omega2;
                out[(3, 3)] = *omega2;
            }
            (Model::Central2d { lambda }, 0) => {
                let r2 = z[0] * z[0] + z[1] * z[1];
                let f = 2.0 + 4.0 * lambda * r2;
                for a in 0..2 {
                    for b in 0..2 {
                        out[(a, b)] = 8.0 * lambda * z[a] * z[b];
                    }
                    out[(a, a)] += f;
                }
                out[(2, 2)] = 2.0;
                out[(3, 3)] = 2.0;
            }
            (Model::Ho2dHl | Model::Central2d { .. }, 1) => angular_momentum_hessian(out),
            _ => panic!("component {j} out of range for {}", self.name()),
        }
        true
    }

    fn has_subprincipal(&self) -> bool {
        matches!(self, Model::Ho1d { q1_const, q1_linear } if *q1_const != 0.0 || *q1_linear != 0.0)
    }

    fn subprincipal(&self, _j: usize, z: &[f64]) -> f64 {
        match self {
            Model::Ho1d { q1_const, q1_linear } => q1_const + q1_linear * z[0],
            _ => 0.0,
        }
    }

    fn separable(&self, j: usize) -> bool {
        // L = x₁ξ₂ − x₂ξ₁ mixes positions and momenta.
        j == 0
    }

    fn bounding_box(&self, e0: &[f64]) -> Option<Vec<(f64, f64)>> {
        let e = e0[0].max(0.0);
        let b = match self {
            Model::Ho1d { .. } => vec![(2.0 * e).sqrt(); 2],
            Model::Ho2dHl | Model::Ho2dEnergy => vec![(2.0 * e).sqrt(); 4],
            Model::Ho2dAniso { omega1, omega2 } => {
                let b1 = (2.0 * e / omega1).sqrt();
                let b2 = (2.0 * e / omega2).sqrt();
                vec![b1, b2, b1, b2]
            }
            Model::Central2d { lambda } => {
                let r = central_radius_max(*lambda, e);
                let p = e.sqrt();
                vec![r, r, p, p]
            }
        };
        Some(b.into_iter().map(|v| (-v, v)).collect())
    }

    fn level_connected(&self, e0: &[f64]) -> bool {
        match self {
            Model::Ho1d { .. } | Model::Ho2dEnergy | Model::Ho2dAniso { .. } => e0[0] > 0.0,
            // {H = E, L = ℓ} is a single torus away from the critical values.
            Model::Ho2dHl | Model::Central2d { .. } => e0[0] > 0.0 && e0.len() == 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_parses_names_and_defaults() {
        let m = ModelSpec::new("central2d").build().unwrap();
        assert_eq!(m, Model::Central2d { lambda: 0.1 });
        let m = ModelSpec::new("ho1d").with("q1_const", 0.25).build().unwrap();
        assert_eq!(m, Model::Ho1d { q1_const: 0.25, q1_linear: 0.0 });
        assert!(m.has_subprincipal());
        assert!(ModelSpec::new("ho3d").build().is_err());
        assert!(ModelSpec::new("ho2d_hl").with("lambda", 1.0).build().is_err());
    }

    #[test]
    fn central_radius_solves_potential() {
        let r = central_radius_max(0.1, 2.0);
        assert!((r * r + 0.1 * r.powi(4) - 2.0).abs() < 1e-12);
        assert!((central_radius_max(0.0, 4.0) - 2.0).abs() < 1e-15);
    }
}

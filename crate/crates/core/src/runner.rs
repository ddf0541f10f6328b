//! Experiment pipeline: hypothesis checks, classical invariants, quantum
//! spectra and their comparison, assembled into a [`ResultBundle`].

use std::time::{SystemTime, UNIX_EPOCH};

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::dynamics::FlowOptions;
use crate::error::{Error, Hypothesis, Result};
use crate::exec::{self, Execution};
use crate::invariants::{
    cycle_invariants, detect_period_lattice, liouville_volume, level_points, CycleInvariants, InvariantOptions,
    LiouvilleEstimate, LiouvilleOptions, PeriodLattice, PeriodOptions,
};
use crate::lattice::{build_lattice_spec, LatticeSpec};
use crate::phase::{find_level_point, validate_regular_proper, ClassicalSystem, EnergyLevel, PhasePoint, ValidationOptions, ValidationReport};
use crate::quantum::{discretize, joint_spectrum, Discretization, JointSpectrum, SpectrumOptions};
use crate::verify::{fit_deviation_scaling, match_spectrum, multiplicity_profile, reject_radius, MatchReport, MultiplicityReport, ScalingFit};

pub const SCHEMA_VERSION: u32 = 1;

/// Window half-widths (in units of `h`) used when neither the config nor the
/// lattice fixes them.
const FALLBACK_WINDOW_C: f64 = 5.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub config: String,
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub mc_seed: Option<u64>,
    /// Seconds since the Unix epoch; the only field that differs between
    /// otherwise identical runs.
    pub timestamp: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Validation {
    pub base_point: PhasePoint,
    pub report: ValidationReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Invariants {
    pub periods: PeriodLattice,
    pub cycles: CycleInvariants,
    pub lattice: LatticeSpec,
    pub liouville: Option<LiouvilleEstimate>,
    /// Predicted multiplicity per lattice point at `h = 1`:
    /// `(2π)⁻ⁿ ∫ dν / |det a|`.
    pub l0: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepResult {
    pub h: f64,
    pub spectrum: JointSpectrum,
    pub matches: Option<MatchReport>,
    pub multiplicity: Option<MultiplicityReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiplicitySummary {
    pub l0: f64,
    /// `max |N h^{n−k} − l₀| / h` for each `h`.
    pub kappa: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultBundle {
    pub schema_version: u32,
    pub name: String,
    pub provenance: Provenance,
    pub validation: Option<Validation>,
    pub invariants: Option<Invariants>,
    pub steps: Vec<StepResult>,
    pub scaling: Option<ScalingFit>,
    pub multiplicity: Option<MultiplicitySummary>,
}

impl ResultBundle {
    pub fn empty(cfg: &ExperimentConfig) -> Result<Self> {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            name: cfg.name.clone(),
            provenance: Provenance {
                config: cfg.echo()?,
                config_hash: cfg.hash()?,
                code_version: env!("CARGO_PKG_VERSION").to_string(),
                seed: cfg.seed,
                mc_seed: cfg.mc.as_ref().map(|m| m.seed),
                timestamp,
            },
            validation: None,
            invariants: None,
            steps: Vec::new(),
            scaling: None,
            multiplicity: None,
        })
    }
}

/// Runs the pipeline for one config.
#[derive(Debug, Clone)]
pub struct Runner {
    pub config: ExperimentConfig,
    pub execution: Execution,
}

impl Runner {
    pub fn new(config: ExperimentConfig) -> Self {
        Self { config, execution: Execution::default() }
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn system(&self) -> Result<ClassicalSystem> {
        ClassicalSystem::from_spec(&self.config.model, self.config.e0.clone())
    }

    fn flow_options(&self) -> FlowOptions {
        let t = &self.config.tolerances;
        FlowOptions { tol_flow: t.tol_flow, tol_symp: t.tol_symp, ..FlowOptions::default() }
    }

    /// Finds a base point on the level set and checks regularity,
    /// properness and connectedness.
    pub fn validate(&self) -> Result<Validation> {
        let cfg = &self.config;
        let sys = self.system()?;
        let tol = cfg.tolerances.tol_level;
        let base = match &cfg.base_point {
            Some(guess) => find_level_point(&sys, &cfg.e0, guess, tol)?,
            None => search_level_point(&sys, &cfg.e0, cfg.seed, tol)?,
        };
        let mut seeds = vec![base.clone()];
        seeds.extend(level_points(&sys, &base, 3, cfg.seed, tol)?);
        let level = EnergyLevel::new(&sys, seeds, tol)?;
        let probe_radius = sys
            .symbol()
            .bounding_box(&cfg.e0)
            .map(|b| 1.01 * b.iter().map(|(lo, hi)| lo.abs().max(hi.abs()).powi(2)).sum::<f64>().sqrt() + 1e-9);
        let opts = ValidationOptions {
            tol_rank: cfg.tolerances.tol_rank,
            tol_flow: cfg.tolerances.tol_flow,
            seed: cfg.seed,
            probe_radius,
            ..ValidationOptions::default()
        };
        let report = validate_regular_proper(&sys, &level, &opts)?;
        if !report.regular {
            return Err(Error::violation(
                Hypothesis::H1,
                format!("E0 = {:?} is not a regular value (smallest singular value {:e})", cfg.e0, report.min_singular_value),
            ));
        }
        if !report.bounded {
            return Err(Error::violation(
                Hypothesis::H1,
                format!("level set is not bounded (flow reached |p| = {:e})", report.max_radius),
            ));
        }
        if !report.connected_asserted {
            return Err(Error::violation(
                Hypothesis::H4,
                format!("connectedness of the level set at E0 = {:?} cannot be asserted for model {}", cfg.e0, sys.name),
            ));
        }
        info!("level set validated at {:?} ({} probe points)", cfg.e0, report.n_points);
        Ok(Validation { base_point: base, report })
    }

    /// Period lattice, cycle invariants and (when configured) the Liouville
    /// mass of the level set through `base`.
    pub fn invariants(&self, base: &PhasePoint) -> Result<Invariants> {
        let cfg = &self.config;
        let sys = self.system()?;
        let tol = &cfg.tolerances;
        let flow = self.flow_options();
        let popts = PeriodOptions {
            t_max: cfg.period.t_max,
            grid: cfg.period.grid,
            tol_period: tol.tol_period,
            check_points: cfg.period.check_points,
            seed: cfg.seed,
            flow,
            execution: self.execution,
        };
        let periods = detect_period_lattice(&sys, base, &popts)?;
        info!("period lattice basis {:?}", periods.basis);
        let iopts = InvariantOptions {
            tol_period: tol.tol_period,
            tol_action: tol.tol_action,
            tol_sub: tol.tol_sub,
            n_frames: cfg.period.n_frames,
            max_frames: cfg.period.max_frames,
            check_points: cfg.period.check_points,
            seed: cfg.seed,
            flow,
        };
        let cycles = cycle_invariants(&sys, &periods, &iopts)?;
        info!("actions {:?}, Maslov indices {:?}", cycles.alpha, cycles.mu);
        let lattice = build_lattice_spec(&cfg.e0, &periods, &cycles, cfg.windows.c.clone())?;
        let (liouville, l0) = match &cfg.mc {
            Some(mc) => {
                let lopts = LiouvilleOptions {
                    n_samples: mc.n_samples,
                    seed: mc.seed,
                    epsilon: mc.epsilon,
                    execution: self.execution,
                    ..LiouvilleOptions::default()
                };
                let est = liouville_volume(&sys, &cfg.e0, &lopts)?;
                let l0 = est.density_mass(sys.n()) / lattice.a.det().abs();
                (Some(est), Some(l0))
            }
            None => (None, None),
        };
        Ok(Invariants { periods, cycles, lattice, liouville, l0 })
    }

    fn discretization(&self) -> Discretization {
        let q = &self.config.quantum;
        let d = Discretization::default();
        Discretization {
            n_quanta: q.n_quanta,
            points_per_wavelength: q.points_per_wavelength.unwrap_or(d.points_per_wavelength),
            max_points_per_wavelength: q.max_points_per_wavelength.unwrap_or(d.max_points_per_wavelength),
            r_max_energy_factor: q.r_max_energy_factor.unwrap_or(d.r_max_energy_factor),
            tol_grid: self.config.tolerances.tol_grid,
            execution: self.execution,
        }
    }

    fn spectrum_options(&self) -> SpectrumOptions {
        let t = &self.config.tolerances;
        SpectrumOptions { tol_degen: t.tol_degen, tol_eig: t.tol_eig, tol_comm: t.tol_comm }
    }

    /// Spectral window at `h`: the lattice window when known, else the
    /// config's half-widths.
    pub fn window(&self, h: f64, lattice: Option<&LatticeSpec>) -> Vec<(f64, f64)> {
        match lattice {
            Some(l) => l.window(h),
            None => {
                let c = self.config.windows.c.clone().unwrap_or_else(|| vec![FALLBACK_WINDOW_C; self.config.e0.len()]);
                self.config.e0.iter().zip(&c).map(|(e, c)| (e - c * h, e + c * h)).collect()
            }
        }
    }

    /// Joint spectrum inside `window` at one value of `h`.
    pub fn spectrum_at(&self, h: f64, window: &[(f64, f64)]) -> Result<JointSpectrum> {
        let cfg = &self.config;
        let e_max = window[0].1;
        let ops = discretize(&cfg.model, h, cfg.backend, &self.discretization(), e_max)?;
        let js = joint_spectrum(&ops, window, &self.spectrum_options())?;
        if !js.discarded.is_empty() {
            return Err(Error::Truncation(format!(
                "{} joint eigenvalues inside the window at h = {h} lie in the basis-truncation band; raise quantum.n_quanta",
                js.discarded.len()
            )));
        }
        Ok(js)
    }

    /// Spectra for every `h` in the grid.
    pub fn spectra(&self, lattice: Option<&LatticeSpec>) -> Result<Vec<JointSpectrum>> {
        let hs = &self.config.h_grid;
        exec::try_map_indexed(self.execution, hs.len(), |i| {
            let h = hs[i];
            let js = self.spectrum_at(h, &self.window(h, lattice))?;
            info!("h = {h}: {} joint eigenvalues in window", js.total_multiplicity());
            Ok(js)
        })
    }

    pub fn run_validate(&self) -> Result<ResultBundle> {
        let mut bundle = ResultBundle::empty(&self.config)?;
        bundle.validation = Some(self.validate()?);
        Ok(bundle)
    }

    pub fn run_invariants(&self) -> Result<ResultBundle> {
        let mut bundle = ResultBundle::empty(&self.config)?;
        let v = self.validate()?;
        bundle.invariants = Some(self.invariants(&v.base_point)?);
        bundle.validation = Some(v);
        Ok(bundle)
    }

    pub fn run_spectrum(&self) -> Result<ResultBundle> {
        let mut bundle = ResultBundle::empty(&self.config)?;
        bundle.steps = self
            .spectra(None)?
            .into_iter()
            .map(|s| StepResult { h: s.h, spectrum: s, matches: None, multiplicity: None })
            .collect();
        Ok(bundle)
    }

    /// Full pipeline.
    pub fn run(&self) -> Result<ResultBundle> {
        let cfg = &self.config;
        let mut bundle = ResultBundle::empty(cfg)?;
        let v = self.validate()?;
        let inv = self.invariants(&v.base_point)?;
        let spectra = self.spectra(Some(&inv.lattice))?;
        let n = self.system()?.n();
        let k = inv.lattice.k();
        let mut steps = Vec::with_capacity(spectra.len());
        for js in spectra {
            let h = js.h;
            let radius = reject_radius(&inv.lattice, h, cfg.windows.reject);
            let matches = match_spectrum(&inv.lattice, h, &js, Some(radius))?;
            let multiplicity = match inv.l0 {
                Some(l0) => Some(multiplicity_profile(&inv.lattice, h, &js, l0, n, cfg.windows.cube)?),
                None => None,
            };
            steps.push(StepResult { h, spectrum: js, matches: Some(matches), multiplicity });
        }
        let reports: Vec<MatchReport> = steps.iter().filter_map(|s| s.matches.clone()).collect();
        bundle.scaling = if reports.len() >= 3 { Some(fit_deviation_scaling(&reports)?) } else { None };
        bundle.multiplicity = inv.l0.map(|l0| MultiplicitySummary {
            l0,
            kappa: steps
                .iter()
                .map(|s| {
                    let scale = s.h.powi(n as i32 - k as i32);
                    s.multiplicity.as_ref().map_or(0.0, |m| {
                        m.counts.iter().map(|c| (c.count as f64 * scale - l0).abs()).fold(0.0, f64::max) / s.h
                    })
                })
                .collect(),
        });
        bundle.steps = steps;
        bundle.validation = Some(v);
        bundle.invariants = Some(inv);
        Ok(bundle)
    }
}

/// Random restarts of the level-point search inside the model's bounding box.
fn search_level_point(sys: &ClassicalSystem, e0: &[f64], seed: u64, tol: f64) -> Result<PhasePoint> {
    let n = sys.n();
    let bounds = sys.symbol().bounding_box(e0).unwrap_or_else(|| vec![(-1.0, 1.0); 2 * n]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..64 {
        let z: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.5 * (lo + (hi - lo) * rng.random::<f64>())).collect();
        if let Ok(p) = find_level_point(sys, e0, &PhasePoint::from_flat(&z)?, tol) {
            return Ok(p);
        }
    }
    Err(Error::violation(Hypothesis::H1, format!("no point of the level set q0 = {e0:?} was found")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::parse(text).unwrap()
    }

    const HO1D: &str = r#"
name = "ho1d"
e0 = [0.5]
h_grid = [0.2, 0.1, 0.05]
backend = "oscillator-exact"
[model]
name = "ho1d"
[windows]
c = [2.05]
[mc]
n_samples = 20000
seed = 1
"#;

    #[test]
    fn ho1d_pipeline_is_exact() {
        let b = Runner::new(cfg(HO1D)).run().unwrap();
        let inv = b.invariants.as_ref().unwrap();
        assert_eq!(inv.cycles.mu, vec![2]);
        assert!((inv.cycles.alpha[0] - std::f64::consts::PI).abs() < 1e-8);
        let fit = b.scaling.as_ref().unwrap();
        assert!(fit.max_deviations.iter().all(|d| *d < 1e-12), "{:?}", fit.max_deviations);
        for s in &b.steps {
            let m = s.matches.as_ref().unwrap();
            assert!(m.unmatched_lattice.is_empty() && m.unmatched_spectrum.is_empty(), "{m:?}");
            assert!(s.multiplicity.as_ref().unwrap().counts.iter().all(|c| c.count == 1));
        }
    }

    #[test]
    fn hypothesis_failures_are_named() {
        let critical = HO1D.replace("e0 = [0.5]", "e0 = [0.0]");
        let err = Runner::new(cfg(&critical)).run_validate().unwrap_err();
        assert_eq!(err.hypothesis(), Some(Hypothesis::H1));

        let aniso = r#"
e0 = [1.0]
h_grid = [0.2, 0.1, 0.05]
backend = "oscillator-exact"
[model]
name = "ho2d_aniso"
params = { omega1 = 1.0, omega2 = 1.4142135623730951 }
[period]
t_max = 12.0
grid = 300
"#;
        let err = Runner::new(cfg(aniso)).run_invariants().unwrap_err();
        assert_eq!(err.hypothesis(), Some(Hypothesis::H2));
    }
}

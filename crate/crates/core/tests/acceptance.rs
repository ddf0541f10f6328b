//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use bsquant::dynamics::FlowOptions;
use bsquant::invariants::reduce::unimodular_transform;
use bsquant::invariants::{cycle_maslov_index, lambda1_frame_loop, maslov_index};
use bsquant::lattice::enumerate_lattice;
use bsquant::{ClassicalSystem, ModelSpec, ResultBundle, Runner};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    ok: bool,
    detail: String,
}

fn check(ok: bool, detail: String) -> Outcome {
    Outcome { ok, detail }
}

fn run(cfg: &str) -> Result<ResultBundle, String> {
    Runner::new(load(cfg)).run().map_err(|e| e.to_string())
}

fn max_dev(b: &ResultBundle) -> f64 {
    b.steps.iter().filter_map(|s| s.matches.as_ref()).map(|m| m.max_deviation).fold(0.0, f64::max)
}

fn all_matched(b: &ResultBundle) -> bool {
    b.steps.iter().all(|s| {
        s.matches.as_ref().is_some_and(|m| !m.pairs.is_empty() && m.unmatched_spectrum.is_empty() && m.unmatched_lattice.is_empty())
    })
}

fn ho1d() -> Result<Outcome, String> {
    let b = run("ho1d.cfg")?;
    let inv = b.invariants.as_ref().unwrap();
    let mut on_half_integers = true;
    for h in [0.2, 0.1, 0.05] {
        for p in enumerate_lattice(&inv.lattice, h).map_err(|e| e.to_string())? {
            let m = p.value[0] / h - 0.5;
            on_half_integers &= (m - m.round()).abs() * h <= 1e-10;
        }
    }
    let dev = max_dev(&b);
    let hs: Vec<f64> = b.steps.iter().map(|s| s.h).collect();
    Ok(check(
        on_half_integers && dev <= 1e-10 && all_matched(&b) && hs == [0.2, 0.1, 0.05],
        format!("lattice on h(Z+1/2): {on_half_integers}, max deviation {dev:.2e}"),
    ))
}

fn ho2d_hl() -> Result<Outcome, String> {
    let b = run("ho2d_HL.cfg")?;
    let inv = b.invariants.as_ref().unwrap();
    let reference = vec![vec![PI, PI], vec![PI, -PI]];
    let periods_ok = unimodular_transform(&inv.periods.basis, &reference, 1e-8).is_some();
    let a_cols: Vec<Vec<f64>> = inv.periods.basis.iter().map(|t| t.iter().map(|v| v / (2.0 * PI)).collect()).collect();
    let a_ok = unimodular_transform(&a_cols, &[vec![0.5, 0.5], vec![0.5, -0.5]], 1e-8).is_some();
    let mu_ok = inv.cycles.mu == [2, 2];
    // Actions are linear on the period lattice; read off α(π,π) and α(π,−π).
    let t = &inv.periods.basis;
    let det = t[0][0] * t[1][1] - t[0][1] * t[1][0];
    let al = &inv.cycles.alpha;
    let w = [(al[0] * t[1][1] - al[1] * t[0][1]) / det, (al[1] * t[0][0] - al[0] * t[1][0]) / det];
    let (e0, l0) = (inv.lattice.e0[0], inv.lattice.e0[1]);
    let plus = PI * (w[0] + w[1]);
    let minus = PI * (w[0] - w[1]);
    let action_err = (plus - PI * (e0 + l0)).abs().max((minus - PI * (e0 - l0)).abs());
    let dev = max_dev(&b);
    let mult_ok = b.steps.iter().all(|s| {
        s.multiplicity.as_ref().is_some_and(|m| !m.counts.is_empty() && m.counts.iter().all(|c| c.count == 1))
    });
    Ok(check(
        periods_ok && a_ok && mu_ok && action_err <= 1e-8 && dev <= 1e-10 && all_matched(&b) && mult_ok,
        format!(
            "periods {periods_ok}, a {a_ok}, mu {:?}, action error {action_err:.2e}, max deviation {dev:.2e}, multiplicity 1: {mult_ok}",
            inv.cycles.mu
        ),
    ))
}

fn multiplicity_law() -> Result<Outcome, String> {
    let b = run("ho2d_energy.cfg")?;
    let inv = b.invariants.as_ref().unwrap();
    let est = inv.liouville.as_ref().unwrap();
    let l0 = inv.l0.unwrap();
    let sigma = l0 * est.std_err / est.mass;
    let e0 = inv.lattice.e0[0];
    let l0_ok = (l0 - e0).abs() <= 3.0 * sigma;
    let mut counts_ok = true;
    let mut worst_rel: f64 = 0.0;
    let mut ns = Vec::new();
    for s in &b.steps {
        let m = s.multiplicity.as_ref().unwrap();
        let nearest = m
            .counts
            .iter()
            .min_by(|a, c| (a.center[0] - e0).abs().total_cmp(&(c.center[0] - e0).abs()))
            .unwrap();
        let n = nearest.count;
        ns.push(n);
        counts_ok &= n as f64 == (e0 / s.h).round();
        let rel = (n as f64 * s.h - l0).abs() / l0;
        worst_rel = worst_rel.max(rel / (1.5 * s.h));
        counts_ok &= rel <= 1.5 * s.h;
    }
    Ok(check(
        l0_ok && counts_ok && b.steps.len() == 3,
        format!("l0 = {l0:.4} ± {sigma:.4} ({:.2}%), N = {ns:?}, worst |Nh − l0|/l0 / 1.5h = {worst_rel:.2}", 100.0 * sigma / l0),
    ))
}

fn anharmonic() -> Result<Outcome, String> {
    let b = run("central2d.cfg")?;
    let inv = b.invariants.as_ref().unwrap();
    let ret = inv.periods.return_residuals.iter().chain(&inv.periods.check_residuals).cloned().fold(0.0, f64::max);
    let spread = inv.cycles.alpha_spread.iter().cloned().fold(0.0, f64::max);
    let fit = b.scaling.as_ref().unwrap();
    let p = fit.fitted_exponent.unwrap_or(f64::NAN);
    let monotone = fit.max_deviations.windows(2).all(|w| w[1] < w[0]);
    Ok(check(
        ret <= 1e-8 && spread <= 1e-6 && p >= 1.8 && fit.h_list == [0.08, 0.04, 0.02, 0.01],
        format!(
            "return residual {ret:.1e}, action spread {spread:.1e}, exponent {p:.3}, deviations {:?} (monotone {monotone})",
            fit.max_deviations.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>()
        ),
    ))
}

fn maslov() -> Result<Outcome, String> {
    let opts = FlowOptions::default();
    let ho = ClassicalSystem::from_spec(&ModelSpec::new("ho1d"), vec![0.5]).unwrap();
    let lp = lambda1_frame_loop(&ho, &pt(&[1.0], &[0.0]), &[2.0 * PI], 64, 1e-9, &opts).map_err(|e| e.to_string())?;
    let energy = maslov_index(&lp).map_err(|e| e.to_string())?;
    let hl = ClassicalSystem::from_spec(&ModelSpec::new("ho2d_hl"), vec![1.0, 0.3]).unwrap();
    let p = bsquant::phase::find_level_point(&hl, &[1.0, 0.3], &pt(&[0.8, 0.1], &[0.2, 0.5]), 1e-13)
        .map_err(|e| e.to_string())?;
    let rotation = cycle_maslov_index(&hl, &p, &[0.0, 2.0 * PI], 64, 1 << 14, 1e-9, &opts).map_err(|e| e.to_string())?;

    let mut cfg = load("central2d.cfg");
    cfg.mc = None;
    let runner = Runner::new(cfg);
    let sys = runner.system().unwrap();
    let base = runner.validate().map_err(|e| e.to_string())?.base_point;
    let inv = runner.invariants(&base).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    let mut linear = 0;
    for _ in 0..10 {
        let z: Vec<i64> = (0..2).map(|_| rng.random_range(-3..=3)).collect();
        let t = inv.periods.combination(&z);
        let mu = cycle_maslov_index(&sys, &inv.periods.base, &t, 64, 1 << 16, 1e-9, &opts).map_err(|e| e.to_string())?;
        if mu == z.iter().zip(&inv.cycles.mu).map(|(a, b)| a * b).sum::<i64>() {
            linear += 1;
        }
    }
    Ok(check(
        energy == 2 && rotation == 0 && linear == 10,
        format!("energy cycle {energy}, rotation cycle {rotation}, linear combinations {linear}/10"),
    ))
}

fn properties() -> Result<Outcome, String> {
    let symp = max_symplecticity_error(4, 1);
    let comm = max_flow_commutator(6, 2);
    let poisson = max_poisson_bracket(200, 3);
    let grad = max_gradient_fd_error(50, 4);
    let errs = mc_standard_errors(&[10_000, 100_000, 1_000_000], 5);
    let mc = mc_scaling_ok(&errs);
    let det = deterministic(&load("ho2d_HL.cfg"));
    Ok(check(
        symp <= 1e-8 && comm <= 1e-8 && poisson <= 1e-10 && grad <= 1e-6 && mc && det,
        format!(
            "symplecticity {symp:.1e}, commutation {comm:.1e}, Poisson {poisson:.1e}, gradient {grad:.1e}, MC ratios {:.2}/{:.2}, deterministic {det}",
            errs[0] / errs[1],
            errs[1] / errs[2]
        ),
    ))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Result<Outcome, String>, Duration);
    let criteria: [Criterion; 6] = [
        ("6 property suites", properties, Duration::from_secs(600)),
        ("1 1D oscillator calibration", ho1d, Duration::from_secs(10)),
        ("2 2D oscillator (H, L)", ho2d_hl, Duration::from_secs(60)),
        ("3 multiplicity law", multiplicity_law, Duration::from_secs(300)),
        ("4 anharmonic central potential", anharmonic, Duration::from_secs(900)),
        ("5 Maslov engine", maslov, Duration::from_secs(30)),
    ];
    let mut failed = 0;
    for (name, f, budget) in criteria {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(o) => (o.ok && elapsed <= budget, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} [{name}] {detail} ({:.2} s, budget {} s)",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

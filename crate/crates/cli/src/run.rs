//! Analytic and Monte Carlo evaluation of a configuration, optionally swept.

use qkd_core::pipeline::{run_pipeline, PipelineOptions};
use qkd_core::rng::{derive_seed, Stream};
use qkd_core::security::{click_rates, qber_model, secret_rate, Scenario};
use rayon::prelude::*;

use crate::config::{Mode, ScenarioConfig, SweepVar};
use crate::error::CliResult;
use crate::report::{Metadata, ResultsTable};

const ANALYTIC: [&str; 5] = ["signal_rate_hz", "background_rate_hz", "sifted_rate_hz", "qber", "secret_rate_hz"];
const MONTECARLO: [&str; 9] = [
    "detections",
    "sifted_bits",
    "mc_sifted_rate_hz",
    "mc_qber",
    "qber_estimate",
    "leakage_bits",
    "final_key_bits",
    "mc_secret_rate_hz",
    "keys_agree",
];
const DISCREPANCY: [&str; 2] = ["sifted_rate_discrepancy_sigma", "qber_discrepancy_sigma"];

pub fn apply(var: SweepVar, scenario: &Scenario, x: f64) -> Scenario {
    match var {
        SweepVar::Mu => scenario.with_mu(x),
        SweepVar::Distance => scenario.with_length(x),
        SweepVar::Window => scenario.with_window(x * 1e-9),
    }
}

fn current(var: SweepVar, s: &Scenario) -> f64 {
    match var {
        SweepVar::Mu => s.source.mean_photon_number,
        SweepVar::Distance => s.budget.fiber_length_km,
        SweepVar::Window => s.window * 1e9,
    }
}

fn analytic_row(cfg: &ScenarioConfig, s: &Scenario) -> Vec<f64> {
    let r = click_rates(s);
    let qber = qber_model(r.signal, r.background, s.intrinsic_error()).unwrap_or(f64::NAN);
    vec![r.signal, r.background, r.sifted(), qber, secret_rate(s, &cfg.security)]
}

fn montecarlo_row(cfg: &ScenarioConfig, s: &Scenario, seed: u64) -> CliResult<Vec<f64>> {
    let opts = PipelineOptions { sample_fraction: cfg.run.sample_fraction, ..Default::default() };
    let rep = run_pipeline(s, cfg.run.n_slots, seed, &opts)?;
    let duration = cfg.run.n_slots as f64 / s.source.clock_rate;
    let per_second = |n: usize| if duration > 0.0 { n as f64 / duration } else { 0.0 };
    Ok(vec![
        rep.detections as f64,
        rep.sifted_len as f64,
        per_second(rep.sifted_len),
        rep.sifted_qber.unwrap_or(f64::NAN),
        rep.qber_estimate,
        rep.leakage_bits as f64,
        rep.final_len as f64,
        per_second(rep.final_len),
        if rep.final_keys_match { 1.0 } else { 0.0 },
    ])
}

/// Evaluates every sweep point (or the single configured point).
pub fn run(cfg: &ScenarioConfig) -> CliResult<ResultsTable> {
    cfg.validate()?;
    let var = cfg.sweep.map_or(SweepVar::Mu, |s| s.var);
    let xs = cfg
        .sweep
        .map_or_else(|| vec![current(var, &cfg.scenario)], |s| s.values());
    for &x in &xs {
        apply(var, &cfg.scenario, x).validate()?;
    }

    let mut names = vec![var.column()];
    let (want_a, want_mc) = match cfg.run.mode {
        Mode::Analytic => (true, false),
        Mode::Montecarlo => (false, true),
        Mode::Both => (true, true),
    };
    if want_a {
        names.extend(ANALYTIC);
    }
    if want_mc {
        names.extend(MONTECARLO);
    }
    if want_a && want_mc {
        names.extend(DISCREPANCY);
    }

    // Each point gets its own derived seed, so results do not depend on
    // evaluation order.
    let rows: Vec<CliResult<Vec<f64>>> = xs
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let s = apply(var, &cfg.scenario, x);
            let mut row = vec![x];
            let a = want_a.then(|| analytic_row(cfg, &s));
            let m = if want_mc {
                Some(montecarlo_row(cfg, &s, derive_seed(cfg.run.seed, Stream::Synthetic, i as u64))?)
            } else {
                None
            };
            if let Some(a) = &a {
                row.extend(a);
            }
            if let Some(m) = &m {
                row.extend(m);
            }
            if let (Some(a), Some(m)) = (&a, &m) {
                let duration = cfg.run.n_slots as f64 / s.source.clock_rate;
                let sifted_sigma = m[1].sqrt() / duration;
                let n = m[1];
                let e = a[3];
                let qber_sigma = (e * (1.0 - e) / n).sqrt();
                row.push((m[2] - a[2]) / sifted_sigma);
                row.push((m[3] - e) / qber_sigma);
            }
            Ok(row)
        })
        .collect();
    let mut table = ResultsTable::new(&names);
    for row in rows {
        table.push_row(&row?);
    }
    table.metadata = Some(Metadata::new("run", cfg.digest(), cfg.run.seed));
    Ok(table)
}

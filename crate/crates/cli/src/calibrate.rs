//! Fits the receiver loss and detector background to measured targets.
//!
//! Attenuation stays at its configured value: every canonical target sits
//! at the same 50 km, where attenuation and lumped receiver loss only enter
//! through their sum.

use std::path::Path;

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{DVector, Dyn, OMatrix, Owned, Vector2, U1, U2};
use qkd_core::security::{
    click_rates, max_distance, min_mu, qber_model, secret_rate, Scenario, SecurityParams, SyncMode,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MAX_RECEIVER_LOSS_DB: f64 = 30.0;
pub const MAX_BLACKBODY_HZ: f64 = 400.0;
/// Largest relative residual accepted from a fit.
pub const MAX_RESIDUAL: f64 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    MinMu,
    MaxDistanceKm,
    SiftedRateHz,
    Qber,
    SecretRateHz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    /// Preset name.
    pub scenario: String,
    pub observable: Observable,
    pub value: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsFile {
    #[serde(default)]
    pub target: Vec<Target>,
}

impl TargetsFile {
    pub fn load(path: &Path) -> CliResult<Vec<Target>> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let f: TargetsFile = toml::from_str(&text).map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(f.target)
    }
}

/// Fitted values shared by every target scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub receiver_loss_db: f64,
    pub blackbody_rate_hz: f64,
}

impl Calibration {
    /// Applies the fit. The improved-filter detector has its own measured
    /// background and only takes the receiver loss.
    pub fn apply(&self, scenario: &mut Scenario) {
        scenario.set_receiver_loss_db(self.receiver_loss_db);
        if scenario.sync_mode != SyncMode::ImprovedFilter {
            scenario.detector.blackbody_rate = self.blackbody_rate_hz;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub scenario: String,
    pub observable: Observable,
    pub target: f64,
    pub model: f64,
    /// `model / target - 1`.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub calibration: Calibration,
    pub residuals: Vec<Residual>,
}

impl CalibrationReport {
    pub fn max_relative(&self) -> f64 {
        self.residuals.iter().map(|r| r.relative.abs()).fold(0.0, f64::max)
    }
}

pub fn observe(scenario: &Scenario, params: &SecurityParams, obs: Observable) -> Option<f64> {
    let v = match obs {
        Observable::MinMu => min_mu(scenario, params).ok()?,
        Observable::MaxDistanceKm => max_distance(scenario, params).ok()?,
        Observable::SiftedRateHz => click_rates(scenario).sifted(),
        Observable::Qber => {
            let r = click_rates(scenario);
            qber_model(r.signal, r.background, scenario.intrinsic_error()).ok()?
        }
        Observable::SecretRateHz => secret_rate(scenario, params),
    };
    v.is_finite().then_some(v)
}

fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-9, 1.0 - 1e-9);
    (p / (1.0 - p)).ln()
}

/// Unconstrained coordinates to bounded physical values.
fn to_calibration(u: &Vector2<f64>) -> Calibration {
    Calibration {
        receiver_loss_db: MAX_RECEIVER_LOSS_DB * logistic(u[0]),
        blackbody_rate_hz: MAX_BLACKBODY_HZ * logistic(u[1]),
    }
}

/// Relative residual standing in for a target the model cannot produce.
const UNREACHABLE: f64 = 10.0;

struct Problem<'a> {
    bases: &'a [Scenario],
    targets: &'a [Target],
    params: &'a SecurityParams,
    u: Vector2<f64>,
}

impl Problem<'_> {
    fn residuals_at(&self, u: &Vector2<f64>) -> DVector<f64> {
        let cal = to_calibration(u);
        DVector::from_iterator(
            self.targets.len(),
            self.targets.iter().zip(self.bases).map(|(t, base)| {
                let mut s = base.clone();
                cal.apply(&mut s);
                observe(&s, self.params, t.observable).map_or(UNREACHABLE, |m| m / t.value - 1.0)
            }),
        )
    }
}

impl LeastSquaresProblem<f64, Dyn, U2> for Problem<'_> {
    type ResidualStorage = Owned<f64, Dyn, U1>;
    type JacobianStorage = Owned<f64, Dyn, U2>;
    type ParameterStorage = Owned<f64, U2, U1>;

    fn set_params(&mut self, x: &Vector2<f64>) {
        self.u = *x;
    }

    fn params(&self) -> Vector2<f64> {
        self.u
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        Some(self.residuals_at(&self.u))
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U2>> {
        let mut j = OMatrix::<f64, Dyn, U2>::zeros(self.targets.len());
        for k in 0..2 {
            // Threshold observables come from root finding; a small step would
            // difference its tolerance noise.
            let h = 1e-3;
            let mut up = self.u;
            let mut dn = self.u;
            up[k] += h;
            dn[k] -= h;
            let d = (self.residuals_at(&up) - self.residuals_at(&dn)) / (2.0 * h);
            j.set_column(k, &d);
        }
        Some(j)
    }
}

/// Least-squares fit of receiver loss and blackbody rate to the targets.
pub fn calibrate(targets: &[Target], params: &SecurityParams) -> CliResult<CalibrationReport> {
    if targets.len() < 2 {
        return Err(CliError::Validation(format!(
            "underdetermined: {} target(s) for 2 parameters",
            targets.len()
        )));
    }
    for (i, a) in targets.iter().enumerate() {
        if !(a.value.is_finite() && a.value > 0.0) {
            return Err(CliError::Validation(format!("target {}: value must be positive", i + 1)));
        }
        if targets[..i].iter().any(|b| b.scenario == a.scenario && b.observable == a.observable) {
            return Err(CliError::Validation(format!(
                "underdetermined: duplicate target {} / {:?}",
                a.scenario, a.observable
            )));
        }
    }
    let bases = targets
        .iter()
        .map(|t| {
            Scenario::preset(&t.scenario).ok_or_else(|| {
                CliError::Validation(format!("target scenario {:?} is not a preset", t.scenario))
            })
        })
        .collect::<CliResult<Vec<_>>>()?;

    // Coarse grid for a start point, then Levenberg-Marquardt.
    let probe = Problem { bases: &bases, targets, params, u: Vector2::zeros() };
    let mut best = (f64::INFINITY, Vector2::zeros());
    for i in 0..=30 {
        for k in 0..=40 {
            let u = Vector2::new(
                logit(i as f64 / 30.0 * 0.999 + 0.0005),
                logit(k as f64 / 40.0 * 0.999 + 0.0005),
            );
            let cost = probe.residuals_at(&u).norm_squared();
            if cost < best.0 {
                best = (cost, u);
            }
        }
    }
    let (fitted, report) = LevenbergMarquardt::new().minimize(Problem { u: best.1, ..probe });
    if !report.termination.was_successful() && report.objective_function.is_nan() {
        return Err(CliError::Numeric(format!(
            "calibration did not converge: {:?}",
            report.termination
        )));
    }
    let calibration = to_calibration(&fitted.u);
    let residuals = targets
        .iter()
        .zip(&bases)
        .map(|(t, base)| {
            let mut s = base.clone();
            calibration.apply(&mut s);
            let model = observe(&s, params, t.observable).unwrap_or(f64::NAN);
            Residual {
                scenario: t.scenario.clone(),
                observable: t.observable,
                target: t.value,
                model,
                relative: model / t.value - 1.0,
            }
        })
        .collect();
    let out = CalibrationReport { calibration, residuals };
    let worst = out.max_relative();
    if !(worst <= MAX_RESIDUAL) {
        return Err(CliError::Numeric(format!(
            "calibration failed: worst relative residual {:.1}% exceeds {:.0}%\n{}",
            worst * 100.0,
            MAX_RESIDUAL * 100.0,
            format_report(&out)
        )));
    }
    Ok(out)
}

pub fn format_report(r: &CalibrationReport) -> String {
    let mut s = format!(
        "receiver_loss_db = {:.4}\nblackbody_rate_hz = {:.4}\n",
        r.calibration.receiver_loss_db, r.calibration.blackbody_rate_hz
    );
    for res in &r.residuals {
        s += &format!(
            "  {:<22} {:<16} target {:<12.6e} model {:<12.6e} residual {:+.3}%\n",
            res.scenario,
            format!("{:?}", res.observable),
            res.target,
            res.model,
            res.relative * 100.0
        );
    }
    s
}

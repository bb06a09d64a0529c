use serde::{Deserialize, Serialize};

use super::{Scenario, SecurityParams};
use crate::math::{binary_entropy, bisect, gaussian_window_fraction};
use crate::photonics::multi_photon_prob;
use crate::{Error, Result};

/// In-window click rates before basis sifting, Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickRates {
    /// Clicks caused by Alice's photons.
    pub signal: f64,
    /// Blackbody plus Raman clicks accepted by the two windows.
    pub background: f64,
}

impl ClickRates {
    pub fn total(&self) -> f64 {
        self.signal + self.background
    }

    /// Sifted key rate: half of all accepted clicks survive basis comparison.
    pub fn sifted(&self) -> f64 {
        0.5 * self.total()
    }
}

/// `S = R (1 - e^{-mu eta}) c(w)` and `B = b_flat 2 w R + raman(w)`.
///
/// `c(w)` is the Gaussian capture fraction of the signal peak; flat
/// background is accepted while either of the two bin windows is open.
/// Dead time and double clicks are ignored.
pub fn click_rates(scenario: &Scenario) -> ClickRates {
    let rate = scenario.source.clock_rate;
    let mu = scenario.source.mean_photon_number;
    let capture = gaussian_window_fraction(scenario.window, scenario.detector.jitter_fwhm);
    let signal = rate * (-(-mu * scenario.eta_total()).exp_m1()) * capture;
    let duty = 2.0 * scenario.window * rate;
    let background = scenario.effective_blackbody_rate() * duty
        + scenario.detector.raman_rate_for_window(scenario.window);
    ClickRates { signal, background }
}

/// Sifted QBER: signal errs with the intrinsic rate, background is a coin.
pub fn qber_model(signal: f64, background: f64, intrinsic_error: f64) -> Result<f64> {
    let total = signal + background;
    if !(total > 0.0) {
        return Err(Error::Domain("QBER undefined without any clicks".into()));
    }
    Ok((intrinsic_error * signal + 0.5 * background) / total)
}

fn scenario_qber(scenario: &Scenario) -> Result<f64> {
    let r = click_rates(scenario);
    qber_model(r.signal, r.background, scenario.intrinsic_error())
}

/// Smallest mean photon number at which the sifted QBER reaches the limit.
pub fn min_mu(scenario: &Scenario, params: &SecurityParams) -> Result<f64> {
    let limit = params.qber_limit;
    if scenario.intrinsic_error() >= limit {
        return Err(Error::ThresholdUnattainable(
            "intrinsic error is already above the QBER limit".into(),
        ));
    }
    if click_rates(scenario).background <= 0.0 {
        return Err(Error::ThresholdUnattainable(
            "no background: QBER equals the intrinsic error at every mu".into(),
        ));
    }
    let f = |log_mu: f64| {
        scenario_qber(&scenario.with_mu(log_mu.exp())).map_or(f64::NAN, |q| q - limit)
    };
    let log_mu = bisect(f, 1e-8f64.ln(), 0.0, |lo, hi| hi - lo < 1e-4_f64.ln_1p())
        .map_err(|e| match e {
            Error::ThresholdUnattainable(_) => Error::ThresholdUnattainable(format!(
                "QBER does not cross {limit} for mu in [1e-8, 1]"
            )),
            other => other,
        })?;
    Ok(log_mu.exp())
}

/// Longest fiber over which the sifted QBER stays below the limit at the
/// target mean photon number.
pub fn max_distance(scenario: &Scenario, params: &SecurityParams) -> Result<f64> {
    let limit = params.qber_limit;
    let at_mu = scenario.with_mu(params.target_mu);
    let excess = |km: f64| scenario_qber(&at_mu.with_length(km)).map_or(f64::NAN, |q| q - limit);
    if !(excess(0.0) < 0.0) {
        return Err(Error::ThresholdUnattainable(
            "QBER exceeds the limit at zero length".into(),
        ));
    }
    let mut hi = 1.0;
    loop {
        let x = excess(hi);
        if x.is_nan() {
            return Err(Error::ThresholdUnattainable(
                "signal vanishes before the QBER limit is reached (no background)".into(),
            ));
        }
        if x >= 0.0 {
            break;
        }
        hi *= 2.0;
        if hi > 1e5 {
            return Err(Error::ThresholdUnattainable(
                "QBER stays below the limit beyond 100000 km (no background?)".into(),
            ));
        }
    }
    bisect(excess, 0.0, hi, |lo, hi| hi - lo < 0.01)
}

/// The photon-number-splitting bound on the mean photon number, `mu < eta`.
pub fn secure_mu_bound(eta: f64) -> f64 {
    eta
}

/// Secret bits per sifted bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecretFraction {
    pub value: f64,
    /// Set when the single-photon error rate `e/(1-delta)` reaches 1/2 or
    /// `delta >= 1`, where no key can be distilled.
    pub saturated: bool,
}

/// GLLP-style fraction `(1 - d)(1 - h2(e/(1 - d))) - f h2(e)`, floored at 0.
pub fn secret_fraction(qber: f64, multiphoton: f64, params: &SecurityParams) -> SecretFraction {
    if multiphoton >= 1.0 {
        return SecretFraction { value: 0.0, saturated: true };
    }
    let single = 1.0 - multiphoton.max(0.0);
    let e1 = qber / single;
    if e1 >= 0.5 {
        return SecretFraction { value: 0.0, saturated: true };
    }
    let r = single * (1.0 - binary_entropy(e1)) - params.ec_inefficiency * binary_entropy(qber);
    SecretFraction {
        value: r.max(0.0),
        saturated: false,
    }
}

/// Fraction of clicks that may come from multi-photon pulses (worst case:
/// every multi-photon pulse is detected).
pub fn multiphoton_click_fraction(scenario: &Scenario) -> f64 {
    let p_click = click_rates(scenario).total() / scenario.source.clock_rate;
    if p_click <= 0.0 {
        return 1.0;
    }
    let multi = multi_photon_prob(scenario.source.mean_photon_number).unwrap_or(0.0);
    (multi / p_click).min(1.0)
}

/// Secret key rate, bits/s: `S/2 * r`.
pub fn secret_rate(scenario: &Scenario, params: &SecurityParams) -> f64 {
    let rates = click_rates(scenario);
    if rates.signal <= 0.0 {
        return 0.0;
    }
    let Ok(e) = qber_model(rates.signal, rates.background, scenario.intrinsic_error()) else {
        return 0.0;
    };
    let delta = multiphoton_click_fraction(scenario);
    0.5 * rates.signal * secret_fraction(e, delta, params).value
}

/// One point of an exported rate curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub sifted_rate: f64,
    pub qber: f64,
    pub secret_rate: f64,
}

fn curve_point(x: f64, s: &Scenario, params: &SecurityParams) -> CurvePoint {
    let rates = click_rates(s);
    CurvePoint {
        x,
        sifted_rate: rates.sifted(),
        qber: qber_model(rates.signal, rates.background, s.intrinsic_error()).unwrap_or(f64::NAN),
        secret_rate: secret_rate(s, params),
    }
}

/// Sifted rate, QBER and secret rate against mean photon number.
pub fn mu_curve(scenario: &Scenario, params: &SecurityParams, mus: &[f64]) -> Vec<CurvePoint> {
    mus.iter()
        .map(|&mu| curve_point(mu, &scenario.with_mu(mu), params))
        .collect()
}

/// The same quantities against fiber length (km).
pub fn distance_curve(
    scenario: &Scenario,
    params: &SecurityParams,
    lengths_km: &[f64],
) -> Vec<CurvePoint> {
    lengths_km
        .iter()
        .map(|&km| curve_point(km, &scenario.with_length(km), params))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> SecurityParams {
        SecurityParams::default()
    }

    #[test]
    fn no_light_no_signal() {
        let s = Scenario::electrical_sync_50km().with_mu(0.0);
        assert_eq!(click_rates(&s).signal, 0.0);
        assert_eq!(secret_rate(&s, &params()), 0.0);
    }

    #[test]
    fn electrical_background_is_two_windows_of_blackbody() {
        let b = click_rates(&Scenario::electrical_sync_50km()).background;
        // 27 Hz * (2 * 72 ns) / 1 us
        assert!((b - 2.0 * 27.0 * 0.072).abs() < 1e-12, "{b}");
    }

    #[test]
    fn optical_mode_adds_raman() {
        let o = click_rates(&Scenario::optical_sync_50km()).background;
        let flat = Scenario::optical_sync_50km().effective_blackbody_rate() * 0.144;
        assert!((o - flat - 30.3).abs() < 1e-9, "{o}");
    }

    #[test]
    fn qber_model_limits() {
        assert_eq!(qber_model(10.0, 0.0, 0.01).unwrap(), 0.01);
        assert_eq!(qber_model(0.0, 3.0, 0.01).unwrap(), 0.5);
        assert!(qber_model(0.0, 0.0, 0.01).is_err());
        // e = 0.11 with e_int = 0.01 needs S/B = (0.5 - 0.11)/(0.11 - 0.01) = 3.9
        assert!((qber_model(3.9, 1.0, 0.01).unwrap() - 0.11).abs() < 1e-15);
    }

    #[test]
    fn secret_fraction_reference_points() {
        let f1 = SecurityParams { ec_inefficiency: 1.0, ..params() };
        let perfect = secret_fraction(0.0, 0.0, &f1);
        assert_eq!(perfect.value, 1.0);
        assert!(!perfect.saturated);
        assert!(secret_fraction(0.11, 0.0, &f1).value <= 1e-3);
        assert!(secret_fraction(0.02, 1.0, &f1).saturated);
        assert_eq!(secret_fraction(0.02, 0.999_999, &f1).value, 0.0);
        assert!(secret_fraction(0.3, 0.5, &f1).saturated);
    }

    #[test]
    fn mu_bound_is_transmittance() {
        assert_eq!(secure_mu_bound(0.1), 0.1);
        assert_eq!(secure_mu_bound(1.0), 1.0);
        let eta = crate::photonics::LinkBudget::new(50.0, 0.2, 1.0).transmittance();
        assert!((secure_mu_bound(eta) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_background_has_no_threshold() {
        let mut s = Scenario::electrical_sync_50km();
        s.detector.blackbody_rate = 0.0;
        assert!(matches!(min_mu(&s, &params()), Err(Error::ThresholdUnattainable(_))));
        assert!(matches!(max_distance(&s, &params()), Err(Error::ThresholdUnattainable(_))));
    }

    #[test]
    fn max_distance_error_when_already_above_limit() {
        let mut s = Scenario::electrical_sync_50km();
        s.detector.blackbody_rate = 1e9;
        assert!(max_distance(&s, &params()).is_err());
    }

    #[test]
    fn solvers_hit_the_limit() {
        let p = params();
        for s in [Scenario::optical_sync_50km(), Scenario::electrical_sync_50km(), Scenario::improved_filter()] {
            let mu = min_mu(&s, &p).unwrap();
            let q = scenario_qber(&s.with_mu(mu)).unwrap();
            assert!((q - 0.11).abs() < 1e-5, "{:?}: {q}", s.sync_mode);
            let l = max_distance(&s, &p).unwrap();
            let q = scenario_qber(&s.with_mu(p.target_mu).with_length(l)).unwrap();
            assert!((q - 0.11).abs() < 1e-4, "{:?}: {q}", s.sync_mode);
        }
    }

    #[test]
    fn small_mu_signal_is_linear() {
        let s = Scenario::electrical_sync_50km();
        let slope = s.source.clock_rate
            * s.eta_total()
            * gaussian_window_fraction(s.window, s.detector.jitter_fwhm);
        let mu = 1e-3 / s.eta_total();
        let got = click_rates(&s.with_mu(mu)).signal;
        assert!((got / (slope * mu) - 1.0).abs() < 0.01);
    }

    #[test]
    fn secret_fraction_zero_crossing_matches_entropy_balance() {
        let p = params();
        // Root of 1 - h2(e) = f h2(e) by dense scan.
        let mut cross = 0.0;
        for i in 1..50_000 {
            let e = i as f64 * 1e-5;
            if 1.0 - binary_entropy(e) <= p.ec_inefficiency * binary_entropy(e) {
                cross = e;
                break;
            }
        }
        assert!(secret_fraction(cross - 2e-5, 0.0, &p).value > 0.0);
        assert_eq!(secret_fraction(cross + 1e-5, 0.0, &p).value, 0.0);
    }

    proptest! {
        #[test]
        fn qber_bounded(s in 0.0f64..1e6, b in 0.0f64..1e6, e in 0.0f64..0.49) {
            prop_assume!(s + b > 0.0);
            let q = qber_model(s, b, e).unwrap();
            prop_assert!(q >= e - 1e-15 && q <= 0.5 + 1e-15);
        }

        #[test]
        fn secret_fraction_decreasing(a in 0.0f64..0.2, b in 0.0f64..0.2) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let p = params();
            let (rl, rh) = (secret_fraction(lo, 0.0, &p).value, secret_fraction(hi, 0.0, &p).value);
            prop_assert!(rl >= rh);
            if rh > 0.0 && hi - lo > 1e-9 {
                prop_assert!(rl > rh);
            }
        }

        #[test]
        fn background_monotonicity(extra in 1.0f64..200.0, eff in 0.3f64..0.9) {
            let p = params();
            let base = Scenario::electrical_sync_50km();
            let mut noisier = base.clone();
            noisier.detector.blackbody_rate += extra;
            prop_assert!(min_mu(&noisier, &p).unwrap() > min_mu(&base, &p).unwrap());
            prop_assert!(max_distance(&noisier, &p).unwrap() < max_distance(&base, &p).unwrap());
            let mut better = base.clone();
            better.set_detector_efficiency((eff + 0.1).min(1.0));
            let mut worse = base.clone();
            worse.set_detector_efficiency(eff);
            prop_assert!(max_distance(&better, &p).unwrap() > max_distance(&worse, &p).unwrap());
        }
    }
}

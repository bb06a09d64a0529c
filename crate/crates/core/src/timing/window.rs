use serde::{Deserialize, Serialize};

use crate::math::{gaussian_window_fraction, golden_max};
use crate::security::{click_rates, qber_model, secret_rate, Scenario, SecurityParams};
use crate::Result;

/// Fraction of a centred Gaussian peak with the given FWHM that falls inside
/// a window of total width `width`.
pub fn window_capture_fraction(width: f64, fwhm: f64) -> f64 {
    gaussian_window_fraction(width, fwhm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    /// Seconds.
    pub width: f64,
    /// Hz.
    pub sifted_rate: f64,
    pub qber: f64,
}

/// Analytic sifted rate and QBER at each window width.
pub fn window_tradeoff(scenario: &Scenario, widths: &[f64]) -> Result<Vec<TradeoffPoint>> {
    widths
        .iter()
        .map(|&w| {
            let s = scenario.with_window(w);
            let r = click_rates(&s);
            Ok(TradeoffPoint {
                width: w,
                sifted_rate: r.sifted(),
                qber: qber_model(r.signal, r.background, s.intrinsic_error())?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSelection {
    /// Seconds.
    pub width: f64,
    /// Early and Late window centres relative to the Early bin, seconds.
    pub centers: [f64; 2],
    pub captured_fraction: f64,
    /// Secret key rate at `width`, Hz.
    pub secret_rate: f64,
    /// No width in the search range gives a positive secret rate; `width`
    /// is then the one with the lowest QBER.
    pub zero_rate: bool,
}

const GRID_POINTS: usize = 200;

/// Width in `[0.1, 5] x FWHM` maximising the secret key rate.
///
/// A grid scan picks the best cell, golden-section search refines it. Ties
/// go to the smaller width; a rate still rising at the top of the range
/// returns the upper bound.
pub fn optimize_window(scenario: &Scenario, params: &SecurityParams) -> Result<WindowSelection> {
    scenario.validate()?;
    let fwhm = scenario.detector.jitter_fwhm;
    // Both windows must stay disjoint.
    let hi = (5.0 * fwhm).min(scenario.interferometer.bit_delay);
    let lo = (0.1 * fwhm).min(hi);
    let rate = |w: f64| secret_rate(&scenario.with_window(w), params);
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64)
        .collect();
    let rates: Vec<f64> = grid.iter().map(|&w| rate(w)).collect();
    let mut best = 0;
    for (i, &r) in rates.iter().enumerate() {
        if r > rates[best] {
            best = i;
        }
    }
    let timing = scenario.slot_timing();
    let centers = [0.0, timing.bit_delay];
    if !(rates[best] > 0.0) {
        let points = window_tradeoff(scenario, &grid)?;
        let mut pick = 0;
        for (i, p) in points.iter().enumerate() {
            if p.qber < points[pick].qber {
                pick = i;
            }
        }
        let width = grid[pick];
        return Ok(WindowSelection {
            width,
            centers,
            captured_fraction: window_capture_fraction(width, fwhm),
            secret_rate: 0.0,
            zero_rate: true,
        });
    }
    let width = if best == GRID_POINTS - 1 {
        hi
    } else {
        let a = grid[best.saturating_sub(1)];
        let b = grid[best + 1];
        let w = golden_max(rate, a, b, 1e-6 * fwhm);
        if rate(w) >= rates[best] {
            w
        } else {
            grid[best]
        }
    };
    Ok(WindowSelection {
        width,
        centers,
        captured_fraction: window_capture_fraction(width, fwhm),
        secret_rate: rate(width),
        zero_rate: false,
    })
}

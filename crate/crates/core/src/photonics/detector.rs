use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::math::{gaussian_window_fraction, sigma_from_fwhm};
use crate::{Error, Result};

/// Latching single-photon detector with Gaussian timing response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub efficiency: f64,
    /// Recovery time after a registered click, seconds.
    pub dead_time: f64,
    /// Timing jitter FWHM, seconds.
    pub jitter_fwhm: f64,
    /// Detected blackbody rate, Hz, flat in time.
    pub blackbody_rate: f64,
    /// Raman rate inside an Early-bin window one jitter FWHM wide, Hz.
    pub raman_rate_in_window: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            efficiency: 0.65,
            dead_time: 4e-6,
            jitter_fwhm: 72e-9,
            blackbody_rate: 27.0,
            raman_rate_in_window: 0.0,
        }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::param(
                "detector.efficiency",
                format!("must lie in (0, 1], got {}", self.efficiency),
            ));
        }
        if !(self.dead_time.is_finite() && self.dead_time >= 0.0) {
            return Err(Error::param("detector.dead_time", "must be finite and >= 0"));
        }
        if !(self.jitter_fwhm.is_finite() && self.jitter_fwhm > 0.0) {
            return Err(Error::param("detector.jitter_fwhm", "must be finite and > 0"));
        }
        for (field, v) in [
            ("detector.blackbody_rate", self.blackbody_rate),
            ("detector.raman_rate_in_window", self.raman_rate_in_window),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(field, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Total Raman click rate of the Gaussian Early-bin peak, Hz.
    pub fn raman_peak_rate(&self) -> f64 {
        self.raman_rate_in_window / gaussian_window_fraction(self.jitter_fwhm, self.jitter_fwhm)
    }

    /// Raman rate accepted by an Early window of the given width, Hz.
    pub fn raman_rate_for_window(&self, window: f64) -> f64 {
        self.raman_peak_rate() * gaussian_window_fraction(window, self.jitter_fwhm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    Signal,
    Blackbody,
    Raman,
}

/// Which interferometer output a click belongs to. Early carries bit 0, Late
/// (the delayed path) carries bit 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutputBin {
    Early,
    Late,
}

impl OutputBin {
    pub fn bit(self) -> u8 {
        match self {
            OutputBin::Early => 0,
            OutputBin::Late => 1,
        }
    }
}

/// A registered detector click.
///
/// `time_offset` is measured from the nominal Early-bin arrival time of the
/// slot, so Late-bin photons sit near `+bit_delay`. `provenance` is a
/// simulation label; protocol code must only look at the timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickEvent {
    pub slot_index: u64,
    pub time_offset: f64,
    pub provenance: Provenance,
    pub output_bin: OutputBin,
}

impl ClickEvent {
    pub fn absolute_time(&self, timing: &SlotTiming) -> f64 {
        self.slot_index as f64 * timing.period + self.time_offset
    }
}

/// Slot geometry: clock period and the Early→Late delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotTiming {
    pub period: f64,
    pub bit_delay: f64,
}

impl SlotTiming {
    pub fn new(period: f64, bit_delay: f64) -> Self {
        Self { period, bit_delay }
    }

    pub fn bin_center(&self, bin: OutputBin) -> f64 {
        match bin {
            OutputBin::Early => 0.0,
            OutputBin::Late => self.bit_delay,
        }
    }

    /// Offsets belonging to a slot: `[start, start + period)`, centred on
    /// the midpoint between the two bins.
    pub fn slot_start_offset(&self) -> f64 {
        -(self.period - self.bit_delay) / 2.0
    }

    pub fn nearest_bin(&self, offset: f64) -> OutputBin {
        if offset < self.bit_delay / 2.0 {
            OutputBin::Early
        } else {
            OutputBin::Late
        }
    }
}

/// Photons reaching the detector in one slot, per output bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SlotArrivals {
    pub slot: u64,
    pub early: u32,
    pub late: u32,
}

/// Homogeneous Poisson process over a slot range; returns (slot, fraction of
/// the slot elapsed) pairs in time order.
fn poisson_events<R: Rng + ?Sized>(
    rate_per_slot: f64,
    slots: &Range<u64>,
    rng: &mut R,
) -> Vec<(u64, f64)> {
    let mut out = Vec::new();
    if rate_per_slot <= 0.0 || slots.is_empty() {
        return out;
    }
    let end = slots.end as f64;
    let mut x = slots.start as f64;
    loop {
        let u: f64 = rng.random();
        x += -(1.0 - u).ln() / rate_per_slot;
        if x >= end {
            break;
        }
        let slot = x.floor() as u64;
        out.push((slot.min(slots.end - 1), x - slot as f64));
    }
    out
}

/// Candidate clicks before dead-time and one-click-per-bin rules.
///
/// Signal photons click independently with the detector efficiency and are
/// jittered around their bin centre. Blackbody clicks are uniform over the
/// slot range; Raman clicks form a jittered peak on the Early bin. The result
/// is sorted by absolute time.
pub fn raw_clicks<R: Rng + ?Sized>(
    arrivals: &[SlotArrivals],
    slots: Range<u64>,
    detector: &DetectorModel,
    timing: &SlotTiming,
    rng: &mut R,
) -> Vec<ClickEvent> {
    let jitter = Normal::new(0.0, sigma_from_fwhm(detector.jitter_fwhm))
        .expect("jitter validated positive");
    let mut clicks = Vec::new();
    for a in arrivals {
        for (bin, photons) in [(OutputBin::Early, a.early), (OutputBin::Late, a.late)] {
            for _ in 0..photons {
                if rng.random::<f64>() < detector.efficiency {
                    clicks.push(ClickEvent {
                        slot_index: a.slot,
                        time_offset: timing.bin_center(bin) + jitter.sample(rng),
                        provenance: Provenance::Signal,
                        output_bin: bin,
                    });
                }
            }
        }
    }
    let start = timing.slot_start_offset();
    for (slot, frac) in poisson_events(detector.blackbody_rate * timing.period, &slots, rng) {
        let offset = start + frac * timing.period;
        clicks.push(ClickEvent {
            slot_index: slot,
            time_offset: offset,
            provenance: Provenance::Blackbody,
            output_bin: timing.nearest_bin(offset),
        });
    }
    for (slot, _) in poisson_events(detector.raman_peak_rate() * timing.period, &slots, rng) {
        clicks.push(ClickEvent {
            slot_index: slot,
            time_offset: jitter.sample(rng),
            provenance: Provenance::Raman,
            output_bin: OutputBin::Early,
        });
    }
    sort_by_time(&mut clicks, timing);
    clicks
}

fn sort_by_time(clicks: &mut [ClickEvent], timing: &SlotTiming) {
    clicks.sort_by(|a, b| {
        a.absolute_time(timing)
            .total_cmp(&b.absolute_time(timing))
            .then(a.provenance.cmp(&b.provenance))
    });
}

/// Applies the detector's latching behaviour to time-sorted candidate clicks:
/// only the first click per slot and bin is kept, and any click within
/// `dead_time` of the previous registered click is dropped without extending
/// the dead period.
pub fn apply_dead_time(
    mut candidates: Vec<ClickEvent>,
    detector: &DetectorModel,
    timing: &SlotTiming,
) -> Vec<ClickEvent> {
    sort_by_time(&mut candidates, timing);
    let mut out: Vec<ClickEvent> = Vec::with_capacity(candidates.len());
    let mut last_time = f64::NEG_INFINITY;
    let mut seen: Vec<(u64, OutputBin)> = Vec::new();
    for c in candidates {
        let t = c.absolute_time(timing);
        if t - last_time < detector.dead_time {
            continue;
        }
        // Clicks are time-ordered, so a repeat of (slot, bin) can only occur
        // among the last few registered clicks.
        seen.retain(|(s, _)| *s + 1 >= c.slot_index);
        if seen.contains(&(c.slot_index, c.output_bin)) {
            continue;
        }
        seen.push((c.slot_index, c.output_bin));
        last_time = t;
        out.push(c);
    }
    out
}

/// Full stochastic detector response over `slots`.
pub fn detect<R: Rng + ?Sized>(
    arrivals: &[SlotArrivals],
    slots: Range<u64>,
    detector: &DetectorModel,
    timing: &SlotTiming,
    rng: &mut R,
) -> Vec<ClickEvent> {
    apply_dead_time(
        raw_clicks(arrivals, slots, detector, timing, rng),
        detector,
        timing,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn timing() -> SlotTiming {
        SlotTiming::new(1e-6, 320e-9)
    }

    fn quiet(efficiency: f64, dead_time: f64) -> DetectorModel {
        DetectorModel {
            efficiency,
            dead_time,
            jitter_fwhm: 72e-9,
            blackbody_rate: 0.0,
            raman_rate_in_window: 0.0,
        }
    }

    fn signal(slot: u64, offset: f64) -> ClickEvent {
        ClickEvent {
            slot_index: slot,
            time_offset: offset,
            provenance: Provenance::Signal,
            output_bin: OutputBin::Early,
        }
    }

    #[test]
    fn second_click_inside_dead_time_is_dropped() {
        let det = quiet(1.0, 4e-6);
        let out = apply_dead_time(vec![signal(0, 0.0), signal(2, 0.0)], &det, &timing());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].slot_index, 0);
        let out = apply_dead_time(vec![signal(0, 0.0), signal(4, 0.0)], &det, &timing());
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn suppressed_clicks_do_not_extend_dead_time() {
        let det = quiet(1.0, 4e-6);
        // 0 registers, 3 is suppressed, 5 is 5 us after 0 and registers.
        let out = apply_dead_time(
            vec![signal(0, 0.0), signal(3, 0.0), signal(5, 0.0)],
            &det,
            &timing(),
        );
        let slots: Vec<u64> = out.iter().map(|c| c.slot_index).collect();
        assert_eq!(slots, vec![0, 5]);
    }

    #[test]
    fn one_click_per_slot_and_bin_without_dead_time() {
        let det = quiet(1.0, 0.0);
        let arrivals = [SlotArrivals { slot: 3, early: 5, late: 2 }];
        let mut rng = stream_rng(1, Stream::Detector, 0);
        let out = detect(&arrivals, 0..10, &det, &timing(), &mut rng);
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|c| c.slot_index == 3));
    }

    #[test]
    fn ideal_detector_one_click_per_nonempty_slot() {
        let det = quiet(1.0, 0.0);
        let arrivals: Vec<SlotArrivals> = (0..1000)
            .filter(|s| s % 3 != 0)
            .map(|s| SlotArrivals { slot: s, early: 1 + (s % 4) as u32, late: 0 })
            .collect();
        let mut rng = stream_rng(2, Stream::Detector, 0);
        let out = detect(&arrivals, 0..1000, &det, &timing(), &mut rng);
        assert_eq!(out.len(), arrivals.len());
        for (c, a) in out.iter().zip(&arrivals) {
            assert_eq!(c.slot_index, a.slot);
        }
    }

    #[test]
    fn jitter_histogram_fwhm() {
        let det = quiet(1.0, 0.0);
        let n = 200_000u64;
        let arrivals: Vec<SlotArrivals> =
            (0..n).map(|s| SlotArrivals { slot: s, early: 1, late: 0 }).collect();
        let mut rng = stream_rng(3, Stream::Detector, 0);
        let out = detect(&arrivals, 0..n, &det, &timing(), &mut rng);
        assert_eq!(out.len() as u64, n);
        // FWHM from the empirical quantiles: for a Gaussian the interquartile
        // range is 1.34898 sigma.
        let mut offs: Vec<f64> = out.iter().map(|c| c.time_offset).collect();
        offs.sort_by(f64::total_cmp);
        let iqr = offs[(3 * n / 4) as usize] - offs[(n / 4) as usize];
        let fwhm = iqr / 1.348_979_5 * crate::math::FWHM_PER_SIGMA;
        assert!((fwhm - 72e-9).abs() < 3e-9, "fwhm {fwhm}");
    }

    #[test]
    fn blackbody_rate_inside_one_window() {
        let det = DetectorModel {
            blackbody_rate: 27.0,
            ..quiet(0.65, 0.0)
        };
        let n = 20_000_000u64; // 20 s of clock
        let mut rng = stream_rng(4, Stream::Background, 0);
        let out = detect(&[], 0..n, &det, &timing(), &mut rng);
        let total = out.len() as f64;
        assert!((total - 540.0).abs() < 3.0 * 540f64.sqrt());
        let in_window = out
            .iter()
            .filter(|c| c.time_offset.abs() <= 36e-9)
            .count() as f64;
        let rate = in_window / 20.0;
        // 27 Hz * 72 ns / 1 us = 1.944 Hz
        let expected: f64 = 27.0 * 0.072;
        let sigma = (expected * 20.0).sqrt() / 20.0;
        assert!((rate - expected).abs() < 3.0 * sigma, "rate {rate}");
    }

    #[test]
    fn raman_clicks_land_in_early_bin() {
        let det = DetectorModel {
            raman_rate_in_window: 30.3,
            ..quiet(0.65, 0.0)
        };
        let n = 10_000_000u64;
        let mut rng = stream_rng(5, Stream::Background, 0);
        let out = detect(&[], 0..n, &det, &timing(), &mut rng);
        assert!(out.iter().all(|c| c.output_bin == OutputBin::Early));
        let in_window = out.iter().filter(|c| c.time_offset.abs() <= 36e-9).count() as f64;
        let rate = in_window / 10.0;
        assert!((rate - 30.3).abs() < 3.0 * (303f64).sqrt() / 10.0, "rate {rate}");
    }

    #[test]
    fn validation() {
        assert!(DetectorModel::default().validate().is_ok());
        assert!(DetectorModel { efficiency: 0.0, ..Default::default() }.validate().is_err());
        assert!(DetectorModel { jitter_fwhm: 0.0, ..Default::default() }.validate().is_err());
        assert!(DetectorModel { dead_time: -1.0, ..Default::default() }.validate().is_err());
        assert!(DetectorModel { blackbody_rate: -1.0, ..Default::default() }.validate().is_err());
    }
}

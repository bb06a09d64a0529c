use serde::{Deserialize, Serialize};

use crate::math::db_to_ratio;
use crate::photonics::{
    filtered_background_rate, DetectorModel, FilterSpec, LinkBudget, SlotTiming, SourceModel,
};
use crate::protocol::InterferometerModel;
use crate::{Error, Result};

/// Name of the lumped receiver-loss entry in a scenario's link budget.
pub const RECEIVER_LOSS: &str = "receiver";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncMode {
    /// Bright 1310 nm clock pulse on the quantum fiber, 1 nm filter at Bob.
    Optical,
    /// Clock distributed electrically; no filter, no Raman light.
    Electrical,
    /// Electrical clock with an unbent-fiber detector behind a 10 nm filter.
    ImprovedFilter,
}

/// Everything the analytic model and the Monte Carlo need about one link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub sync_mode: SyncMode,
    pub source: SourceModel,
    pub budget: LinkBudget,
    pub interferometer: InterferometerModel,
    pub detector: DetectorModel,
    /// Bandpass filter in front of the detector, if any. Its insertion loss
    /// attenuates the signal; its rejection attenuates `detector.blackbody_rate`.
    pub receiver_filter: Option<FilterSpec>,
    /// Thermal photon flux inside the filter passband, Hz (before insertion
    /// loss and detector efficiency). Only used with a receiver filter.
    pub in_band_thermal_rate: f64,
    /// Acceptance window width per bin, seconds.
    pub window: f64,
}

impl Scenario {
    fn base(sync_mode: SyncMode) -> Self {
        let detector = DetectorModel::default();
        Self {
            sync_mode,
            source: SourceModel::default(),
            budget: LinkBudget::new(50.0, 0.2, detector.efficiency)
                .with_component(RECEIVER_LOSS, 0.0),
            interferometer: InterferometerModel::default(),
            window: detector.jitter_fwhm,
            detector,
            receiver_filter: None,
            in_band_thermal_rate: 0.0,
        }
    }

    /// 50 km with the bright-pulse clock: 1 nm filter (3.2 dB) and 30.3 Hz
    /// of Raman light in the 72 ns windows.
    pub fn optical_sync_50km() -> Self {
        let mut s = Self::base(SyncMode::Optical);
        s.receiver_filter = Some(FilterSpec::raman_suppression());
        s.detector.raman_rate_in_window = 30.3;
        s
    }

    pub fn electrical_sync_50km() -> Self {
        Self::base(SyncMode::Electrical)
    }

    /// 89% detector with its 400 Hz unfiltered background behind a 10 nm,
    /// 3 dB, 40 dB-rejection filter (0.03 Hz in-band thermal flux), 1%
    /// intrinsic error.
    pub fn improved_filter() -> Self {
        let mut s = Self::base(SyncMode::ImprovedFilter);
        s.detector.efficiency = 0.89;
        s.detector.blackbody_rate = 400.0;
        s.budget.detector_efficiency = 0.89;
        s.receiver_filter = Some(FilterSpec::improved_telecom());
        s.in_band_thermal_rate = 0.03;
        s
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "optical_sync_50km" => Some(Self::optical_sync_50km()),
            "electrical_sync_50km" => Some(Self::electrical_sync_50km()),
            "improved_filter" => Some(Self::improved_filter()),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 3] =
        ["optical_sync_50km", "electrical_sync_50km", "improved_filter"];

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.budget.validate()?;
        self.interferometer.validate()?;
        self.detector.validate()?;
        if let Some(f) = &self.receiver_filter {
            f.validate()?;
        }
        if (self.budget.detector_efficiency - self.detector.efficiency).abs() > 1e-12 {
            return Err(Error::param(
                "detector.efficiency",
                format!(
                    "budget ({}) and detector ({}) disagree",
                    self.budget.detector_efficiency, self.detector.efficiency
                ),
            ));
        }
        if !(self.in_band_thermal_rate.is_finite() && self.in_band_thermal_rate >= 0.0) {
            return Err(Error::param("in_band_thermal_rate", "must be finite and >= 0"));
        }
        if !(self.window.is_finite() && self.window > 0.0) {
            return Err(Error::param("window", "must be finite and > 0"));
        }
        if 2.0 * self.window > self.slot_timing().period
            || self.window > self.interferometer.bit_delay
        {
            return Err(Error::param(
                "window",
                "the two bin windows must be disjoint and fit in one slot",
            ));
        }
        if self.interferometer.bit_delay >= self.source.slot_period() {
            return Err(Error::param(
                "interferometer.bit_delay",
                "must be shorter than the clock period",
            ));
        }
        Ok(())
    }

    pub fn intrinsic_error(&self) -> f64 {
        self.interferometer.intrinsic_error()
    }

    pub fn slot_timing(&self) -> SlotTiming {
        SlotTiming::new(self.source.slot_period(), self.interferometer.bit_delay)
    }

    /// Probability a photon launched by Alice survives the fiber, the
    /// receiver components, the filter and the path selection (detector
    /// efficiency excluded).
    pub fn channel_survival(&self) -> f64 {
        let filter = self
            .receiver_filter
            .map_or(1.0, |f| db_to_ratio(f.insertion_loss_db));
        db_to_ratio(self.budget.total_loss_db()) * filter * self.interferometer.protocol_efficiency
    }

    /// End-to-end probability a launched photon produces a click.
    pub fn eta_total(&self) -> f64 {
        self.channel_survival() * self.detector.efficiency
    }

    /// Detected flat background rate after the receiver filter, Hz.
    pub fn effective_blackbody_rate(&self) -> f64 {
        match &self.receiver_filter {
            Some(f) => filtered_background_rate(
                self.detector.blackbody_rate,
                self.in_band_thermal_rate,
                f,
                self.detector.efficiency,
            ),
            None => self.detector.blackbody_rate,
        }
    }

    /// Detector model as seen behind the receiver filter.
    pub fn effective_detector(&self) -> DetectorModel {
        DetectorModel {
            blackbody_rate: self.effective_blackbody_rate(),
            ..self.detector
        }
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        let mut s = self.clone();
        s.source.mean_photon_number = mu;
        s
    }

    pub fn with_length(&self, km: f64) -> Self {
        let mut s = self.clone();
        s.budget.fiber_length_km = km;
        s
    }

    pub fn with_window(&self, window: f64) -> Self {
        let mut s = self.clone();
        s.window = window;
        s
    }

    pub fn set_detector_efficiency(&mut self, efficiency: f64) {
        self.detector.efficiency = efficiency;
        self.budget.detector_efficiency = efficiency;
    }

    pub fn receiver_loss_db(&self) -> f64 {
        self.budget.component(RECEIVER_LOSS).map_or(0.0, |c| c.loss_db)
    }

    pub fn set_receiver_loss_db(&mut self, db: f64) {
        self.budget.set_component(RECEIVER_LOSS, db);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityParams {
    /// Largest sifted QBER from which secret key can still be distilled.
    pub qber_limit: f64,
    /// Error-correction leakage relative to the Shannon limit.
    pub ec_inefficiency: f64,
    /// Operating mean photon number for distance calculations.
    pub target_mu: f64,
}

impl Default for SecurityParams {
    fn default() -> Self {
        Self {
            qber_limit: 0.11,
            ec_inefficiency: 1.2,
            target_mu: 0.1,
        }
    }
}

impl SecurityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.qber_limit > 0.0 && self.qber_limit < 0.5) {
            return Err(Error::param("security.qber_limit", "must lie in (0, 0.5)"));
        }
        if !(self.ec_inefficiency >= 1.0 && self.ec_inefficiency.is_finite()) {
            return Err(Error::param("security.ec_inefficiency", "must be >= 1"));
        }
        if !(self.target_mu > 0.0 && self.target_mu.is_finite()) {
            return Err(Error::param("security.target_mu", "must be > 0"));
        }
        Ok(())
    }
}

//! Scenario configuration files.
//!
//! TOML with one table per subsystem. Every key is optional and overrides
//! the chosen preset; physical quantities carry their unit in the key name.
//!
//! ```toml
//! preset = "optical_sync_50km"
//!
//! [source]
//! mean_photon_number = 0.05
//!
//! [link]
//! fiber_length_km = 60
//! receiver_loss_db = 3.4
//!
//! [run]
//! mode = "both"
//! n_slots = 1000000
//! seed = 7
//!
//! [sweep]
//! var = "mu"
//! from = 0.001
//! to = 1.0
//! points = 31
//! ```

use std::path::Path;

use qkd_core::photonics::FilterSpec;
use qkd_core::security::{Scenario, SecurityParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

const NS: f64 = 1e-9;
const US: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Analytic,
    Montecarlo,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepVar {
    Mu,
    Distance,
    Window,
}

impl SweepVar {
    /// Column header for the swept quantity.
    pub fn column(self) -> &'static str {
        match self {
            SweepVar::Mu => "mu",
            SweepVar::Distance => "distance_km",
            SweepVar::Window => "window_ns",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

/// Swept variable and its range, in the variable's own unit (mu is
/// dimensionless, distance in km, window in ns).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub var: SweepVar,
    pub from: f64,
    pub to: f64,
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Scale>,
}

impl SweepSpec {
    pub fn scale(&self) -> Scale {
        self.scale.unwrap_or(match self.var {
            SweepVar::Mu => Scale::Log,
            _ => Scale::Linear,
        })
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.points == 0 {
            return Err(CliError::Validation("sweep.points: must be >= 1".into()));
        }
        if !(self.from.is_finite() && self.to.is_finite()) || self.from > self.to {
            return Err(CliError::Validation("sweep.from/sweep.to: need finite from <= to".into()));
        }
        if self.scale() == Scale::Log && self.from <= 0.0 {
            return Err(CliError::Validation("sweep.from: log scale needs from > 0".into()));
        }
        if self.from < 0.0 {
            return Err(CliError::Validation("sweep.from: must be >= 0".into()));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        if n == 1 {
            return vec![self.from];
        }
        (0..n)
            .map(|i| {
                let f = i as f64 / (n - 1) as f64;
                match self.scale() {
                    Scale::Linear => self.from + f * (self.to - self.from),
                    Scale::Log => (self.from.ln() + f * (self.to / self.from).ln()).exp(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunControls {
    pub mode: Mode,
    pub n_slots: u64,
    pub seed: u64,
    pub sample_fraction: f64,
}

impl Default for RunControls {
    fn default() -> Self {
        Self { mode: Mode::Analytic, n_slots: 1_000_000, seed: 1, sample_fraction: 0.1 }
    }
}

/// Fully resolved configuration: what a run actually uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub preset: String,
    pub scenario: Scenario,
    pub security: SecurityParams,
    pub run: RunControls,
    pub sweep: Option<SweepSpec>,
}

impl ScenarioConfig {
    pub fn from_preset(name: &str) -> CliResult<Self> {
        let scenario = Scenario::preset(name).ok_or_else(|| {
            CliError::Validation(format!(
                "preset: unknown scenario {name:?}; expected one of {}",
                Scenario::PRESETS.join(", ")
            ))
        })?;
        Ok(Self {
            preset: name.to_string(),
            scenario,
            security: SecurityParams::default(),
            run: RunControls::default(),
            sweep: None,
        })
    }

    pub fn validate(&self) -> CliResult<()> {
        self.scenario.validate()?;
        self.security.validate()?;
        if !(0.0..1.0).contains(&self.run.sample_fraction) {
            return Err(CliError::Validation("run.sample_fraction: must lie in [0, 1)".into()));
        }
        if let Some(s) = &self.sweep {
            s.validate()?;
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of the resolved configuration.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| CliError::Validation(e.to_string()))?;
        file.resolve()
    }

    /// Config file text that resolves back to `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(&ConfigFile::explicit(self)).expect("config serialises")
    }
}

/// Maps a model field name onto the config key that sets it.
pub fn config_key(field: &str) -> String {
    let key = match field {
        "mean_photon_number" => "source.mean_photon_number",
        "clock_rate" | "source.clock_rate" => "source.clock_rate_hz",
        "components" => "link.receiver_loss_db",
        "fiber_length_km" => "link.fiber_length_km",
        "attenuation_db_per_km" => "link.attenuation_db_per_km",
        "detector_efficiency" => "detector.efficiency",
        "detector.dead_time" => "detector.dead_time_us",
        "detector.jitter_fwhm" => "detector.jitter_fwhm_ns",
        "detector.blackbody_rate" => "detector.blackbody_rate_hz",
        "detector.raman_rate_in_window" => "detector.raman_rate_in_window_hz",
        "interferometer.bit_delay" => "interferometer.bit_delay_ns",
        "window" => "window.width_ns",
        "in_band_thermal_rate" => "filter.in_band_thermal_rate_hz",
        "budget.detector_efficiency" => "detector.efficiency",
        "sample_fraction" => "run.sample_fraction",
        other => other,
    };
    key.to_string()
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub link: LinkSection,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub interferometer: InterferometerSection,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub window: WindowSection,
    #[serde(default)]
    pub security: SecuritySection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

macro_rules! section {
    ($name:ident { $($field:ident : $ty:ty),* $(,)? }) => {
        #[derive(Debug, Default, Clone, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $(
                #[serde(skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }
    };
}

section!(SourceSection { mean_photon_number: f64, clock_rate_hz: f64 });
section!(LinkSection { fiber_length_km: f64, attenuation_db_per_km: f64, receiver_loss_db: f64 });
section!(DetectorSection {
    efficiency: f64,
    dead_time_us: f64,
    jitter_fwhm_ns: f64,
    blackbody_rate_hz: f64,
    raman_rate_in_window_hz: f64,
});
section!(InterferometerSection { visibility: f64, protocol_efficiency: f64, bit_delay_ns: f64 });
section!(FilterSection {
    enabled: bool,
    passband_center_nm: f64,
    passband_width_nm: f64,
    insertion_loss_db: f64,
    out_of_band_rejection_db: f64,
    in_band_thermal_rate_hz: f64,
});
section!(WindowSection { width_ns: f64 });
section!(SecuritySection { qber_limit: f64, ec_inefficiency: f64, target_mu: f64 });
section!(RunSection { mode: Mode, n_slots: u64, seed: u64, sample_fraction: f64 });

fn set<T: Copy>(target: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *target = v;
    }
}

fn set_scaled(target: &mut f64, value: Option<f64>, unit: f64) {
    if let Some(v) = value {
        *target = v * unit;
    }
}

impl ConfigFile {
    pub fn resolve(&self) -> CliResult<ScenarioConfig> {
        let mut cfg =
            ScenarioConfig::from_preset(self.preset.as_deref().unwrap_or("electrical_sync_50km"))?;
        let s = &mut cfg.scenario;

        set(&mut s.source.mean_photon_number, self.source.mean_photon_number);
        set(&mut s.source.clock_rate, self.source.clock_rate_hz);

        set(&mut s.budget.fiber_length_km, self.link.fiber_length_km);
        set(&mut s.budget.attenuation_db_per_km, self.link.attenuation_db_per_km);
        if let Some(db) = self.link.receiver_loss_db {
            s.set_receiver_loss_db(db);
        }

        let d = &self.detector;
        if let Some(eff) = d.efficiency {
            s.set_detector_efficiency(eff);
        }
        set_scaled(&mut s.detector.dead_time, d.dead_time_us, US);
        set_scaled(&mut s.detector.jitter_fwhm, d.jitter_fwhm_ns, NS);
        set(&mut s.detector.blackbody_rate, d.blackbody_rate_hz);
        set(&mut s.detector.raman_rate_in_window, d.raman_rate_in_window_hz);

        let i = &self.interferometer;
        set(&mut s.interferometer.visibility, i.visibility);
        set(&mut s.interferometer.protocol_efficiency, i.protocol_efficiency);
        set_scaled(&mut s.interferometer.bit_delay, i.bit_delay_ns, NS);

        let f = &self.filter;
        let touched = f.passband_center_nm.is_some()
            || f.passband_width_nm.is_some()
            || f.insertion_loss_db.is_some()
            || f.out_of_band_rejection_db.is_some();
        match f.enabled {
            Some(false) => {
                if touched {
                    return Err(CliError::Validation(
                        "filter: parameters given with filter.enabled = false".into(),
                    ));
                }
                s.receiver_filter = None;
            }
            _ if touched || f.enabled == Some(true) => {
                let mut spec = s.receiver_filter.unwrap_or_else(FilterSpec::improved_telecom);
                set(&mut spec.passband_center_nm, f.passband_center_nm);
                set(&mut spec.passband_width_nm, f.passband_width_nm);
                set(&mut spec.insertion_loss_db, f.insertion_loss_db);
                set(&mut spec.out_of_band_rejection_db, f.out_of_band_rejection_db);
                s.receiver_filter = Some(spec);
            }
            _ => {}
        }
        set(&mut s.in_band_thermal_rate, f.in_band_thermal_rate_hz);
        set_scaled(&mut s.window, self.window.width_ns, NS);

        set(&mut cfg.security.qber_limit, self.security.qber_limit);
        set(&mut cfg.security.ec_inefficiency, self.security.ec_inefficiency);
        set(&mut cfg.security.target_mu, self.security.target_mu);

        set(&mut cfg.run.mode, self.run.mode);
        set(&mut cfg.run.n_slots, self.run.n_slots);
        set(&mut cfg.run.seed, self.run.seed);
        set(&mut cfg.run.sample_fraction, self.run.sample_fraction);
        cfg.sweep = self.sweep;

        cfg.validate()?;
        Ok(cfg)
    }

    /// A file stating every value of `cfg` explicitly.
    pub fn explicit(cfg: &ScenarioConfig) -> Self {
        let s = &cfg.scenario;
        let filter = match &s.receiver_filter {
            Some(f) => FilterSection {
                enabled: Some(true),
                passband_center_nm: Some(f.passband_center_nm),
                passband_width_nm: Some(f.passband_width_nm),
                insertion_loss_db: Some(f.insertion_loss_db),
                out_of_band_rejection_db: Some(f.out_of_band_rejection_db),
                in_band_thermal_rate_hz: Some(s.in_band_thermal_rate),
            },
            None => FilterSection {
                enabled: Some(false),
                in_band_thermal_rate_hz: Some(s.in_band_thermal_rate),
                ..Default::default()
            },
        };
        Self {
            preset: Some(cfg.preset.clone()),
            source: SourceSection {
                mean_photon_number: Some(s.source.mean_photon_number),
                clock_rate_hz: Some(s.source.clock_rate),
            },
            link: LinkSection {
                fiber_length_km: Some(s.budget.fiber_length_km),
                attenuation_db_per_km: Some(s.budget.attenuation_db_per_km),
                receiver_loss_db: Some(s.receiver_loss_db()),
            },
            detector: DetectorSection {
                efficiency: Some(s.detector.efficiency),
                dead_time_us: Some(s.detector.dead_time / US),
                jitter_fwhm_ns: Some(s.detector.jitter_fwhm / NS),
                blackbody_rate_hz: Some(s.detector.blackbody_rate),
                raman_rate_in_window_hz: Some(s.detector.raman_rate_in_window),
            },
            interferometer: InterferometerSection {
                visibility: Some(s.interferometer.visibility),
                protocol_efficiency: Some(s.interferometer.protocol_efficiency),
                bit_delay_ns: Some(s.interferometer.bit_delay / NS),
            },
            filter,
            window: WindowSection { width_ns: Some(s.window / NS) },
            security: SecuritySection {
                qber_limit: Some(cfg.security.qber_limit),
                ec_inefficiency: Some(cfg.security.ec_inefficiency),
                target_mu: Some(cfg.security.target_mu),
            },
            run: RunSection {
                mode: Some(cfg.run.mode),
                n_slots: Some(cfg.run.n_slots),
                seed: Some(cfg.run.seed),
                sample_fraction: Some(cfg.run.sample_fraction),
            },
            sweep: cfg.sweep,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default_preset() {
        let cfg = ScenarioConfig::parse("").unwrap();
        assert_eq!(cfg.scenario, Scenario::electrical_sync_50km());
        assert_eq!(cfg.run, RunControls::default());
    }

    #[test]
    fn overrides_with_units() {
        let cfg = ScenarioConfig::parse(
            r#"
preset = "optical_sync_50km"
[detector]
jitter_fwhm_ns = 60
dead_time_us = 2
[window]
width_ns = 50
[link]
receiver_loss_db = 3.4
"#,
        )
        .unwrap();
        assert!((cfg.scenario.detector.jitter_fwhm - 60e-9).abs() < 1e-20);
        assert!((cfg.scenario.detector.dead_time - 2e-6).abs() < 1e-20);
        assert!((cfg.scenario.window - 50e-9).abs() < 1e-20);
        assert_eq!(cfg.scenario.receiver_loss_db(), 3.4);
        assert!(cfg.scenario.receiver_filter.is_some());
    }

    #[test]
    fn unknown_keys_rejected_with_path() {
        let err = ScenarioConfig::parse("[detector]\nefficency = 0.5\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("efficency"), "{err}");
        let err = ScenarioConfig::parse("[detector]\ndead_time = 4\n").unwrap_err();
        assert!(err.to_string().contains("dead_time"), "{err}");
    }

    #[test]
    fn invalid_values_name_the_key() {
        let err = ScenarioConfig::parse("[window]\nwidth_ns = 500\n").unwrap_err();
        assert!(err.to_string().contains("window.width_ns"), "{err}");
        let err = ScenarioConfig::parse("[detector]\njitter_fwhm_ns = -1\n").unwrap_err();
        assert!(err.to_string().contains("detector.jitter_fwhm_ns"), "{err}");
        assert!(ScenarioConfig::parse("preset = \"mars\"").is_err());
    }

    #[test]
    fn explicit_file_round_trips() {
        for name in Scenario::PRESETS {
            let mut cfg = ScenarioConfig::from_preset(name).unwrap();
            cfg.sweep = Some(SweepSpec { var: SweepVar::Window, from: 10.0, to: 200.0, points: 5, scale: None });
            let text = cfg.to_toml();
            assert_eq!(ScenarioConfig::parse(&text).unwrap(), cfg, "{text}");
        }
    }

    #[test]
    fn digest_tracks_semantic_changes() {
        let a = ScenarioConfig::parse("[source]\nmean_photon_number = 0.1\n").unwrap();
        let b = ScenarioConfig::parse("# comment\n[source]\nmean_photon_number = 1e-1\n").unwrap();
        let c = ScenarioConfig::parse("[source]\nmean_photon_number = 0.2\n").unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn sweep_values() {
        let s = SweepSpec { var: SweepVar::Mu, from: 1e-3, to: 1.0, points: 4, scale: None };
        let v = s.values();
        assert!((v[1] - 1e-2).abs() < 1e-15 && (v[3] - 1.0).abs() < 1e-12);
        let s = SweepSpec { var: SweepVar::Distance, from: 0.0, to: 100.0, points: 3, scale: None };
        assert_eq!(s.values(), vec![0.0, 50.0, 100.0]);
        assert!(SweepSpec { points: 0, ..s }.validate().is_err());
    }
}

use serde::{Deserialize, Serialize};

use crate::math::db_to_ratio;
use crate::{Error, Result};

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Optical bandpass filter in front of the detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub passband_center_nm: f64,
    pub passband_width_nm: f64,
    pub insertion_loss_db: f64,
    pub out_of_band_rejection_db: f64,
}

impl FilterSpec {
    /// 10 nm passband at 1550 nm, 3 dB insertion loss, 40 dB rejection.
    pub fn improved_telecom() -> Self {
        Self {
            passband_center_nm: 1550.0,
            passband_width_nm: 10.0,
            insertion_loss_db: 3.0,
            out_of_band_rejection_db: 40.0,
        }
    }

    /// Narrow 1 nm filter used to suppress Raman light from the bright
    /// synchronisation pulse.
    pub fn raman_suppression() -> Self {
        Self {
            passband_center_nm: 1550.0,
            passband_width_nm: 1.0,
            insertion_loss_db: 3.2,
            out_of_band_rejection_db: 40.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.passband_center_nm > 0.0 && self.passband_width_nm > 0.0)
            || self.passband_width_nm >= 2.0 * self.passband_center_nm
        {
            return Err(Error::param(
                "filter",
                format!(
                    "passband {} nm wide at {} nm is not physical",
                    self.passband_width_nm, self.passband_center_nm
                ),
            ));
        }
        if !(self.insertion_loss_db >= 0.0 && self.out_of_band_rejection_db >= 0.0) {
            return Err(Error::param("filter", "dB values must be >= 0"));
        }
        Ok(())
    }

    pub fn edges_nm(&self) -> (f64, f64) {
        let half = self.passband_width_nm / 2.0;
        (self.passband_center_nm - half, self.passband_center_nm + half)
    }
}

/// Thermal photon flux (photons/s) guided by a single-mode fiber inside the
/// filter passband: `modes * dnu / (exp(h nu / k T) - 1)`, with `nu` at the
/// band centre and `dnu = c dlambda / lambda^2`.
pub fn blackbody_in_band_rate(
    temperature_k: f64,
    band: &FilterSpec,
    polarization_modes: u8,
) -> Result<f64> {
    if !(temperature_k.is_finite() && temperature_k >= 0.0) {
        return Err(Error::Domain(format!("temperature {temperature_k} K")));
    }
    if !(polarization_modes == 1 || polarization_modes == 2) {
        return Err(Error::Domain(format!(
            "polarization_modes must be 1 or 2, got {polarization_modes}"
        )));
    }
    band.validate().map_err(|e| Error::Domain(e.to_string()))?;
    if temperature_k == 0.0 {
        return Ok(0.0);
    }
    let lambda = band.passband_center_nm * 1e-9;
    let nu = SPEED_OF_LIGHT / lambda;
    let dnu = SPEED_OF_LIGHT * band.passband_width_nm * 1e-9 / (lambda * lambda);
    let x = PLANCK * nu / (BOLTZMANN * temperature_k);
    let occupation = 1.0 / x.exp_m1();
    Ok(f64::from(polarization_modes) * dnu * occupation)
}

/// Detected background after adding a bandpass filter.
///
/// `raw_detected_rate` is the broadband rate already seen by the detector
/// (efficiency folded in) and is attenuated by the out-of-band rejection;
/// the in-band thermal flux sees the insertion loss and the detector
/// efficiency.
pub fn filtered_background_rate(
    raw_detected_rate: f64,
    in_band_rate: f64,
    filter: &FilterSpec,
    detector_efficiency: f64,
) -> f64 {
    raw_detected_rate * db_to_ratio(filter.out_of_band_rejection_db)
        + in_band_rate * db_to_ratio(filter.insertion_loss_db) * detector_efficiency
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band(lo: f64, hi: f64) -> FilterSpec {
        FilterSpec {
            passband_center_nm: (lo + hi) / 2.0,
            passband_width_nm: hi - lo,
            ..FilterSpec::improved_telecom()
        }
    }

    /// Planck occupation integrated across the band in frequency (Simpson).
    fn integrated_oracle(t: f64, lo_nm: f64, hi_nm: f64, modes: f64) -> f64 {
        let nu_hi = SPEED_OF_LIGHT / (lo_nm * 1e-9);
        let nu_lo = SPEED_OF_LIGHT / (hi_nm * 1e-9);
        let n = 2000;
        let h = (nu_hi - nu_lo) / n as f64;
        let f = |nu: f64| 1.0 / ((PLANCK * nu / (BOLTZMANN * t)).exp() - 1.0);
        let mut s = f(nu_lo) + f(nu_hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(nu_lo + i as f64 * h);
        }
        modes * s * h / 3.0
    }

    #[test]
    fn room_temperature_telecom_band() {
        let r = blackbody_in_band_rate(300.0, &band(1545.0, 1555.0), 1).unwrap();
        assert!((r - 0.045).abs() < 0.003, "rate {r}");
        let oracle = integrated_oracle(300.0, 1545.0, 1555.0, 1.0);
        assert!((r / oracle - 1.0).abs() < 0.01, "centre {r} vs integral {oracle}");
        // Within a factor of three of the 0.03 Hz quoted for the same band.
        assert!(r > 0.01 && r < 0.10);
        let two = blackbody_in_band_rate(300.0, &band(1545.0, 1555.0), 2).unwrap();
        assert!((two - 2.0 * r).abs() < 1e-15);
    }

    #[test]
    fn zero_temperature_is_dark() {
        assert_eq!(blackbody_in_band_rate(0.0, &band(1545.0, 1555.0), 1).unwrap(), 0.0);
        assert!(blackbody_in_band_rate(1.0, &band(1545.0, 1555.0), 1).unwrap() < 1e-300);
    }

    #[test]
    fn rejects_nonphysical() {
        assert!(blackbody_in_band_rate(-1.0, &band(1545.0, 1555.0), 1).is_err());
        assert!(blackbody_in_band_rate(300.0, &band(1545.0, 1555.0), 3).is_err());
        assert!(blackbody_in_band_rate(300.0, &band(1555.0, 1545.0), 1).is_err());
    }

    #[test]
    fn monotone_in_temperature_and_width() {
        let mut prev = 0.0;
        for t in [100.0, 200.0, 250.0, 293.0, 300.0, 350.0] {
            let r = blackbody_in_band_rate(t, &band(1545.0, 1555.0), 1).unwrap();
            assert!(r > prev);
            prev = r;
        }
        let mut prev = 0.0;
        for w in [1.0, 2.0, 5.0, 10.0, 40.0] {
            let r = blackbody_in_band_rate(300.0, &band(1550.0 - w / 2.0, 1550.0 + w / 2.0), 1)
                .unwrap();
            assert!(r > prev);
            prev = r;
        }
    }

    #[test]
    fn improved_filter_background() {
        let r = filtered_background_rate(400.0, 0.03, &FilterSpec::improved_telecom(), 0.89);
        assert!((r - 0.0534).abs() < 1e-4, "{r}");
        assert_eq!(filtered_background_rate(0.0, 0.0, &FilterSpec::improved_telecom(), 0.89), 0.0);
        let perfect = FilterSpec {
            out_of_band_rejection_db: 1e6,
            ..FilterSpec::improved_telecom()
        };
        assert_eq!(filtered_background_rate(400.0, 0.0, &perfect, 0.89), 0.0);
    }
}

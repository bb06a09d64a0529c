//! BB84 over a time-multiplexed phase-encoding interferometer.
//!
//! Alice's modulator picks one of four phases, Bob's one of two. A photon
//! leaves Bob's interferometer on the Early (bit 0) or the delayed Late
//! (bit 1) path, and both paths share one detector. Basis reconciliation
//! runs over the framed public channel in [`wire`].

mod channel;
mod quantum;
mod session;
mod sift;
pub mod wire;

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::photonics::OutputBin;
use crate::{Error, Result};

pub use channel::{pipe, FrameTransport, LockstepTransport, PipeEnd, StreamTransport, Transcript};
pub use quantum::{measure_clicks, run_quantum_phase, QuantumRun, BATCH_SLOTS};
pub use session::{serve, AliceSession, AliceState};
pub use sift::{bob_sift, sift, SiftOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    BasisA,
    BasisB,
}

impl Basis {
    pub fn from_bit(bit: u8) -> Self {
        if bit & 1 == 0 {
            Basis::BasisA
        } else {
            Basis::BasisB
        }
    }

    pub fn as_bit(self) -> u8 {
        match self {
            Basis::BasisA => 0,
            Basis::BasisB => 1,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::from_bit(rng.random::<u8>())
    }

    /// Phase offset the basis adds on either modulator.
    pub fn phase(self) -> f64 {
        match self {
            Basis::BasisA => 0.0,
            Basis::BasisB => FRAC_PI_2,
        }
    }
}

/// Alice's per-slot record, written before the pulse leaves her station.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmissionRecord {
    pub slot_index: u64,
    pub bit: u8,
    pub basis: Basis,
    pub photon_count: u32,
}

impl EmissionRecord {
    pub fn phase(&self) -> f64 {
        alice_prepare(self.bit, self.basis)
    }
}

/// Bob's record for a slot with exactly one accepted click.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementRecord {
    pub slot_index: u64,
    pub bob_basis: Basis,
    pub outcome_bit: u8,
    pub click_time_offset: f64,
}

impl MeasurementRecord {
    pub fn bob_phase(&self) -> f64 {
        self.bob_basis.phase()
    }
}

/// Bits kept after basis reconciliation, one per matching-basis detection.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SiftedKey {
    pub slot_indices: Vec<u64>,
    pub bits: Vec<u8>,
}

impl SiftedKey {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferometerModel {
    /// Fringe visibility; the wrong-bin probability for matched bases is `(1 - V)/2`.
    pub visibility: f64,
    /// Fraction of photons that take an interfering path pair.
    pub protocol_efficiency: f64,
    /// Early-to-Late delay, seconds.
    pub bit_delay: f64,
}

impl Default for InterferometerModel {
    fn default() -> Self {
        Self {
            visibility: 0.98,
            protocol_efficiency: 0.5,
            bit_delay: 320e-9,
        }
    }
}

impl InterferometerModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(Error::param(
                "interferometer.visibility",
                format!("must lie in [0, 1], got {}", self.visibility),
            ));
        }
        if !(self.protocol_efficiency > 0.0 && self.protocol_efficiency <= 1.0) {
            return Err(Error::param(
                "interferometer.protocol_efficiency",
                format!("must lie in (0, 1], got {}", self.protocol_efficiency),
            ));
        }
        if !(self.bit_delay.is_finite() && self.bit_delay > 0.0) {
            return Err(Error::param("interferometer.bit_delay", "must be > 0"));
        }
        Ok(())
    }

    pub fn intrinsic_error(&self) -> f64 {
        (1.0 - self.visibility) / 2.0
    }
}

/// Alice's modulator phase: `bit * pi`, plus `pi/2` in basis B.
pub fn alice_prepare(bit: u8, basis: Basis) -> f64 {
    f64::from(bit & 1) * PI + basis.phase()
}

/// Output port for one photon given the Alice−Bob phase difference:
/// `P(Early) = (1 + V cos dphi) / 2`.
pub fn interference_outcome<R: Rng + ?Sized>(
    phase_difference: f64,
    interferometer: &InterferometerModel,
    rng: &mut R,
) -> OutputBin {
    let p_early = early_probability(phase_difference, interferometer.visibility);
    if rng.random::<f64>() < p_early {
        OutputBin::Early
    } else {
        OutputBin::Late
    }
}

pub(crate) fn early_probability(phase_difference: f64, visibility: f64) -> f64 {
    // cos() of exact multiples of pi/2 is not exactly 0 in floating point.
    let c = phase_difference.cos();
    let c = if c.abs() < 1e-12 { 0.0 } else { c };
    ((1.0 + visibility * c) / 2.0).clamp(0.0, 1.0)
}

/// Fraction of positions where the two keys disagree.
pub fn qber_measure(key_a: &[u8], key_b: &[u8]) -> Result<f64> {
    if key_a.len() != key_b.len() {
        return Err(Error::Domain(format!(
            "key length mismatch: {} vs {}",
            key_a.len(),
            key_b.len()
        )));
    }
    if key_a.is_empty() {
        return Err(Error::Domain("cannot measure QBER of empty keys".into()));
    }
    let errors = key_a.iter().zip(key_b).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / key_a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn four_phase_values() {
        assert_eq!(alice_prepare(0, Basis::BasisA), 0.0);
        assert_eq!(alice_prepare(1, Basis::BasisA), PI);
        assert_eq!(alice_prepare(0, Basis::BasisB), FRAC_PI_2);
        assert!((alice_prepare(1, Basis::BasisB) - 3.0 * FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn interference_probabilities() {
        assert_eq!(early_probability(0.0, 1.0), 1.0);
        assert_eq!(early_probability(FRAC_PI_2, 1.0), 0.5);
        assert_eq!(early_probability(-FRAC_PI_2, 0.3), 0.5);
        assert!((early_probability(0.0, 0.98) - 0.99).abs() < 1e-15);
        assert!((early_probability(PI, 0.98) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn perfect_visibility_is_deterministic() {
        let ifm = InterferometerModel { visibility: 1.0, ..Default::default() };
        let mut rng = stream_rng(1, Stream::Channel, 0);
        for _ in 0..1000 {
            assert_eq!(interference_outcome(0.0, &ifm, &mut rng), OutputBin::Early);
            assert_eq!(interference_outcome(PI, &ifm, &mut rng), OutputBin::Late);
        }
    }

    #[test]
    fn mismatched_basis_is_fair_coin() {
        let ifm = InterferometerModel::default();
        let mut rng = stream_rng(2, Stream::Channel, 0);
        let n = 200_000;
        let early = (0..n)
            .filter(|_| interference_outcome(FRAC_PI_2, &ifm, &mut rng) == OutputBin::Early)
            .count() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((early - n as f64 / 2.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn qber_edge_cases() {
        assert_eq!(qber_measure(&[0, 1, 1], &[0, 1, 1]).unwrap(), 0.0);
        assert_eq!(qber_measure(&[0, 1, 1], &[1, 0, 0]).unwrap(), 1.0);
        assert!((qber_measure(&[0, 1, 1, 0], &[0, 1, 0, 0]).unwrap() - 0.25).abs() < 1e-15);
        assert!(qber_measure(&[0, 1], &[0]).is_err());
        assert!(qber_measure(&[], &[]).is_err());
    }

    #[test]
    fn interferometer_validation() {
        assert!(InterferometerModel::default().validate().is_ok());
        assert!(InterferometerModel { visibility: 1.1, ..Default::default() }.validate().is_err());
        assert!(InterferometerModel { protocol_efficiency: 0.0, ..Default::default() }
            .validate()
            .is_err());
        assert!((InterferometerModel::default().intrinsic_error() - 0.01).abs() < 1e-15);
    }
}

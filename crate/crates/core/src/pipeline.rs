//! One complete key-generation session: quantum phase, sifting, QBER
//! sampling, Cascade, digest check and privacy amplification.
//!
//! Bob drives every classical step through a [`LockstepTransport`]; Alice's
//! final key is read back from her session at the end and compared.

use serde::{Deserialize, Serialize};

use crate::postproc::{
    bob_correct, bob_verify, estimate_qber, initial_block_size, pa_output_length, privacy_amplify,
    toeplitz_seed, AmplificationSpec, DEFAULT_MARGIN_BITS, DEFAULT_PASSES,
};
use crate::protocol::wire::Frame;
use crate::protocol::{bob_sift, qber_measure, run_quantum_phase, AliceSession, FrameTransport, LockstepTransport};
use crate::rng::{stream_rng, Stream};
use crate::security::{multiphoton_click_fraction, Scenario};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Share of the sifted key disclosed for QBER estimation.
    pub sample_fraction: f64,
    pub cascade_passes: usize,
    pub security_margin: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            sample_fraction: 0.1,
            cascade_passes: DEFAULT_PASSES,
            security_margin: DEFAULT_MARGIN_BITS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub n_slots: u64,
    /// Slots Bob announced (exactly one accepted click).
    pub detections: usize,
    pub sifted_len: usize,
    /// Error rate between the two full sifted keys (simulation-only view).
    pub sifted_qber: Option<f64>,
    pub sample_len: usize,
    pub sample_errors: usize,
    /// Smoothed estimate from the disclosed sample.
    pub qber_estimate: f64,
    pub reconciled_len: usize,
    /// Errors left in Bob's key when correction started (simulation-only view).
    pub reconciled_errors: usize,
    pub block_size_schedule: Vec<usize>,
    pub leakage_bits: usize,
    pub keys_agree: bool,
    pub multiphoton_fraction: f64,
    pub final_len: usize,
    /// Alice's and Bob's amplified keys are identical.
    pub final_keys_match: bool,
    pub public_channel_bytes: usize,
}

/// Runs a full session over `n_slots` clock periods.
pub fn run_pipeline(
    scenario: &Scenario,
    n_slots: u64,
    seed: u64,
    opts: &PipelineOptions,
) -> Result<PipelineReport> {
    if !(0.0..1.0).contains(&opts.sample_fraction) {
        return Err(Error::param("sample_fraction", "must lie in [0, 1)"));
    }
    let run = run_quantum_phase(scenario, n_slots, seed)?;
    let session_id = seed;
    let mut alice = AliceSession::new(session_id, n_slots, &run.emissions);
    let mut bob_rng = stream_rng(seed, Stream::Postproc, u64::MAX);

    let mut t = LockstepTransport::new(&mut alice);
    let sifted = bob_sift(&mut t, session_id, n_slots, &run.measurements)?;
    let mut key = sifted.bits.clone();
    let estimate = estimate_qber(&mut t, &mut key, opts.sample_fraction, &mut bob_rng)?;
    let block = initial_block_size(estimate.for_block_size(), key.len());
    let uncorrected = key.clone();
    let correction = bob_correct(&mut t, &mut key, session_id, block, opts.cascade_passes)?;
    let keys_agree = bob_verify(&mut t, &key)?;
    let multiphoton = multiphoton_click_fraction(scenario);
    let final_len = if keys_agree {
        pa_output_length(
            key.len(),
            estimate.smoothed(),
            multiphoton,
            correction.parity_bits_disclosed,
            opts.security_margin,
        )
    } else {
        0
    };
    let mut bob_final = Vec::new();
    if keys_agree {
        let seed_bits = toeplitz_seed(key.len(), final_len, &mut bob_rng);
        let spec = AmplificationSpec::new(key.len(), final_len, seed_bits.clone())?;
        t.send(&Frame::PaSeed {
            input_len: key.len() as u32,
            output_len: final_len as u32,
            seed: seed_bits,
        })?;
        bob_final = privacy_amplify(&key, &spec)?;
    }
    let bytes = t.transcript().total_bytes();
    drop(t);

    let sifted_qber = if sifted.is_empty() {
        None
    } else {
        Some(qber_measure(&alice.sifted().bits, &sifted.bits)?)
    };
    let reconciled_errors = alice.key().iter().zip(&uncorrected).filter(|(a, b)| a != b).count();
    let final_keys_match = keys_agree && alice.final_key() == Some(bob_final.as_slice());
    Ok(PipelineReport {
        n_slots,
        detections: run.measurements.len(),
        sifted_len: sifted.len(),
        sifted_qber,
        sample_len: estimate.sample_len,
        sample_errors: estimate.errors,
        qber_estimate: estimate.smoothed(),
        reconciled_len: key.len(),
        reconciled_errors,
        block_size_schedule: correction.block_size_schedule,
        leakage_bits: correction.parity_bits_disclosed,
        keys_agree,
        multiphoton_fraction: multiphoton,
        final_len,
        final_keys_match,
        public_channel_bytes: bytes,
    })
}

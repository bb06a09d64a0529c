//! Bob's side of basis reconciliation.

use super::channel::{FrameTransport, LockstepTransport, Transcript};
use super::session::AliceSession;
use super::wire::{Frame, ABORT_DESYNC};
use super::{EmissionRecord, MeasurementRecord, SiftedKey};
use crate::{Error, Result};

/// Announces Bob's detections and bases, and keeps the bits where Alice's
/// basis matches. Only slot indices and basis bits cross the channel.
pub fn bob_sift<T: FrameTransport + ?Sized>(
    transport: &mut T,
    session_id: u64,
    n_slots: u64,
    measurements: &[MeasurementRecord],
) -> Result<SiftedKey> {
    let mut ordered: Vec<&MeasurementRecord> = measurements.iter().collect();
    ordered.sort_by_key(|m| m.slot_index);
    if ordered.windows(2).any(|w| w[0].slot_index == w[1].slot_index) {
        return Err(Error::Domain("duplicate measurement for one slot".into()));
    }
    transport.send(&Frame::SessionStart { session_id, n_slots })?;
    transport.send(&Frame::Detections {
        slots: ordered.iter().map(|m| m.slot_index).collect(),
    })?;
    let bases: Vec<u8> = ordered.iter().map(|m| m.bob_basis.as_bit()).collect();
    transport.send(&Frame::Bases { bases: bases.clone() })?;

    let alice_bases = match transport.recv()? {
        Frame::Bases { bases } => bases,
        Frame::Abort { reason } => return Err(Error::Aborted(reason)),
        other => return Err(Error::Protocol(format!("expected BASES, got {}", other.name()))),
    };
    if alice_bases.len() != ordered.len() {
        transport.send(&Frame::Abort { reason: ABORT_DESYNC })?;
        return Err(Error::Protocol(format!(
            "Alice answered {} bases for {} detections",
            alice_bases.len(),
            ordered.len()
        )));
    }
    let mut key = SiftedKey::default();
    for (m, (&a, &b)) in ordered.iter().zip(alice_bases.iter().zip(&bases)) {
        if a == b {
            key.slot_indices.push(m.slot_index);
            key.bits.push(m.outcome_bit);
        }
    }
    match transport.recv()? {
        Frame::SiftAck { sifted_len } if sifted_len as usize == key.len() => Ok(key),
        Frame::SiftAck { sifted_len } => {
            transport.send(&Frame::Abort { reason: ABORT_DESYNC })?;
            Err(Error::Protocol(format!(
                "sifted length mismatch: Alice {sifted_len}, Bob {}",
                key.len()
            )))
        }
        Frame::Abort { reason } => Err(Error::Aborted(reason)),
        other => Err(Error::Protocol(format!("expected SIFT_ACK, got {}", other.name()))),
    }
}

#[derive(Debug, Clone)]
pub struct SiftOutcome {
    pub alice: SiftedKey,
    pub bob: SiftedKey,
    pub transcript: Transcript,
}

/// Runs sifting with both engines on the calling thread.
pub fn sift(
    session_id: u64,
    n_slots: u64,
    emissions: &[EmissionRecord],
    measurements: &[MeasurementRecord],
) -> Result<SiftOutcome> {
    let mut alice = AliceSession::new(session_id, n_slots, emissions);
    let (bob, transcript) = {
        let mut t = LockstepTransport::new(&mut alice);
        let bob = bob_sift(&mut t, session_id, n_slots, measurements)?;
        (bob, t.into_transcript())
    };
    Ok(SiftOutcome {
        alice: alice.sifted().clone(),
        bob,
        transcript,
    })
}

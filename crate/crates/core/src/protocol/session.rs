//! Alice's side of the public channel.
//!
//! Alice only ever answers. Each frame from Bob is handled in isolation and
//! produces zero or more replies, so the same state machine runs inline
//! under [`LockstepTransport`](super::LockstepTransport) or on its own
//! thread via [`serve`].

use std::collections::HashMap;

use super::channel::FrameTransport;
use super::wire::{
    Frame, ABORT_BAD_PAYLOAD, ABORT_DESYNC, ABORT_UNEXPECTED_FRAME,
};
use super::{EmissionRecord, SiftedKey};
use crate::postproc::{key_digest, pass_permutation, privacy_amplify, AmplificationSpec};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AliceState {
    /// Waiting for SESSION_START.
    Idle,
    /// Session open, waiting for DETECTIONS.
    Started,
    /// Detections received, waiting for Bob's bases.
    AwaitingBases,
    /// Sifted key in place; answering parity and digest requests.
    Reconciling,
    /// Privacy amplification applied.
    Finished,
    /// An abort was sent or received.
    Failed(u8),
}

pub struct AliceSession {
    session_id: u64,
    n_slots: u64,
    emissions: HashMap<u64, EmissionRecord>,
    state: AliceState,
    detections: Vec<u64>,
    sifted: SiftedKey,
    key: Vec<u8>,
    permutations: HashMap<u8, Vec<u32>>,
    final_key: Option<Vec<u8>>,
}

impl AliceSession {
    /// Session over the emission records of a quantum run. Slots without a
    /// record are treated as never announced.
    pub fn new(session_id: u64, n_slots: u64, emissions: &[EmissionRecord]) -> Self {
        Self {
            session_id,
            n_slots,
            emissions: emissions.iter().map(|e| (e.slot_index, *e)).collect(),
            state: AliceState::Idle,
            detections: Vec::new(),
            sifted: SiftedKey::default(),
            key: Vec::new(),
            permutations: HashMap::new(),
            final_key: None,
        }
    }

    /// Session that skips sifting and starts reconciling `key` directly.
    pub fn with_key(session_id: u64, key: Vec<u8>) -> Self {
        let mut s = Self::new(session_id, 0, &[]);
        s.sifted = SiftedKey {
            slot_indices: Vec::new(),
            bits: key.clone(),
        };
        s.key = key;
        s.state = AliceState::Reconciling;
        s
    }

    pub fn state(&self) -> AliceState {
        self.state
    }

    pub fn session_id(&self) -> u64 {
        self.session_id
    }

    /// Sifted key as it stood before any sample positions were discarded.
    pub fn sifted(&self) -> &SiftedKey {
        &self.sifted
    }

    /// Working key: the sifted key minus disclosed sample positions.
    pub fn key(&self) -> &[u8] {
        &self.key
    }

    pub fn final_key(&self) -> Option<&[u8]> {
        self.final_key.as_deref()
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.state, AliceState::Finished | AliceState::Failed(_))
    }

    fn fail(&mut self, reason: u8) -> Vec<Frame> {
        self.state = AliceState::Failed(reason);
        vec![Frame::Abort { reason }]
    }

    /// Handles one frame from Bob and returns the replies.
    pub fn handle(&mut self, frame: Frame) -> Vec<Frame> {
        if let AliceState::Failed(_) = self.state {
            return Vec::new();
        }
        match (self.state, frame) {
            (_, Frame::Abort { reason }) => {
                self.state = AliceState::Failed(reason);
                Vec::new()
            }
            (AliceState::Idle, Frame::SessionStart { session_id, n_slots }) => {
                if session_id != self.session_id || n_slots != self.n_slots {
                    return self.fail(ABORT_DESYNC);
                }
                self.state = AliceState::Started;
                Vec::new()
            }
            (AliceState::Started, Frame::Detections { slots }) => {
                if slots.iter().any(|s| *s >= self.n_slots) {
                    return self.fail(ABORT_DESYNC);
                }
                self.detections = slots;
                self.state = AliceState::AwaitingBases;
                Vec::new()
            }
            (AliceState::AwaitingBases, Frame::Bases { bases }) => {
                if bases.len() != self.detections.len() {
                    return self.fail(ABORT_DESYNC);
                }
                let mut mine = Vec::with_capacity(bases.len());
                let mut sifted = SiftedKey::default();
                for (slot, bob) in self.detections.iter().zip(&bases) {
                    // A detection in a slot with no record (vacuum pulse) is
                    // still answered; a blackbody click must look the same.
                    let e = self.emissions.get(slot);
                    let basis = e.map_or(0, |e| e.basis.as_bit());
                    mine.push(basis);
                    if basis == *bob {
                        sifted.slot_indices.push(*slot);
                        sifted.bits.push(e.map_or(0, |e| e.bit));
                    }
                }
                let sifted_len = sifted.len() as u32;
                self.key = sifted.bits.clone();
                self.sifted = sifted;
                self.state = AliceState::Reconciling;
                vec![Frame::Bases { bases: mine }, Frame::SiftAck { sifted_len }]
            }
            (AliceState::Reconciling, Frame::ParityRequest { pass, blocks }) => {
                let n = self.key.len();
                if blocks.iter().any(|b| b.start >= b.end || b.end as usize > n) {
                    return self.fail(ABORT_BAD_PAYLOAD);
                }
                if pass == 0 {
                    if !self.permutations.is_empty() {
                        return self.fail(ABORT_UNEXPECTED_FRAME);
                    }
                    let parities = blocks
                        .iter()
                        .map(|b| crate::postproc::parity_of(&self.key, b.start as usize..b.end as usize))
                        .collect();
                    let mut drop = vec![false; n];
                    for b in &blocks {
                        for d in &mut drop[b.start as usize..b.end as usize] {
                            *d = true;
                        }
                    }
                    let mut i = 0;
                    self.key.retain(|_| {
                        i += 1;
                        !drop[i - 1]
                    });
                    return vec![Frame::ParityResponse { parities }];
                }
                let sid = self.session_id;
                let perm = self
                    .permutations
                    .entry(pass)
                    .or_insert_with(|| pass_permutation(sid, pass, n));
                let bits = &self.key;
                let parities = blocks
                    .iter()
                    .map(|b| {
                        crate::postproc::parity_of(
                            bits,
                            perm[b.start as usize..b.end as usize].iter().map(|&i| i as usize),
                        )
                    })
                    .collect();
                vec![Frame::ParityResponse { parities }]
            }
            (AliceState::Reconciling, Frame::KeyDigest { .. }) => vec![Frame::KeyDigest {
                key_len: self.key.len() as u32,
                digest: key_digest(&self.key),
            }],
            (AliceState::Reconciling, Frame::PaSeed { input_len, output_len, seed }) => {
                let spec = AmplificationSpec::new(input_len as usize, output_len as usize, seed);
                match spec.and_then(|s| privacy_amplify(&self.key, &s)) {
                    Ok(k) => {
                        self.final_key = Some(k);
                        self.state = AliceState::Finished;
                        Vec::new()
                    }
                    Err(_) => self.fail(ABORT_BAD_PAYLOAD),
                }
            }
            _ => self.fail(ABORT_UNEXPECTED_FRAME),
        }
    }
}

/// Runs Alice's responder until the peer closes the channel or the session
/// ends.
pub fn serve<T: FrameTransport + ?Sized>(alice: &mut AliceSession, transport: &mut T) -> Result<()> {
    while let Some(frame) = transport.recv_opt()? {
        for reply in alice.handle(frame) {
            transport.send(&reply)?;
        }
        if alice.is_finished() {
            break;
        }
    }
    Ok(())
}

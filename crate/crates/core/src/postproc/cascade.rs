//! Cascade reconciliation, Bob's side.
//!
//! Each pass shuffles the key with a public permutation derived from the
//! session id, asks Alice for the parity of every block and bisects blocks
//! whose parities disagree. A corrected bit flips the parity of the block
//! holding it in every earlier pass, and any block that turns odd is
//! bisected in turn. Block size doubles from pass to pass.

use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::digest::bob_verify;
use super::parity_of;
use crate::protocol::wire::{BlockRange, Frame};
use crate::protocol::{AliceSession, FrameTransport, LockstepTransport};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

pub const DEFAULT_PASSES: usize = 4;

/// Result of a reconciliation run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrectionSession {
    pub block_size_schedule: Vec<usize>,
    /// Parity bits Alice disclosed (sum of PARITY_RESPONSE payload bits).
    pub parity_bits_disclosed: usize,
    pub passes: usize,
    pub corrected_key: Vec<u8>,
    pub bits_flipped: usize,
}

/// `ceil(0.73 / e)`, clamped to `[1, n]`.
pub fn initial_block_size(qber: f64, n: usize) -> usize {
    let k = if qber > 0.0 { (0.73 / qber).ceil() } else { f64::INFINITY };
    (k.min(n.max(1) as f64) as usize).max(1)
}

/// Fewest blocks a doubled pass may have. On short keys unbounded doubling
/// leaves a handful of blocks, and an error pair sharing a block in every
/// pass goes unseen.
pub const MIN_BLOCKS_PER_PASS: usize = 8;

/// Block size of pass `p` (0-based): `initial * 2^p`, but no larger than
/// `n / MIN_BLOCKS_PER_PASS` unless the initial block already is.
pub fn pass_block_size(initial: usize, p: usize, n: usize) -> usize {
    let initial = initial.clamp(1, n.max(1));
    let cap = n.div_ceil(MIN_BLOCKS_PER_PASS).max(initial);
    initial.saturating_mul(1 << p.min(62)).min(cap)
}

/// Public shuffle for a pass: position `j` of the pass holds key index `perm[j]`.
pub fn pass_permutation(session_id: u64, pass: u8, n: usize) -> Vec<u32> {
    let mut rng = stream_rng(session_id, Stream::Postproc, u64::from(pass));
    let mut perm: Vec<u32> = (0..n as u32).collect();
    perm.shuffle(&mut rng);
    perm
}

struct PassState {
    perm: Vec<u32>,
    pos_of: Vec<u32>,
    block: usize,
    alice: Vec<u8>,
    bob: Vec<u8>,
}

impl PassState {
    fn range(&self, b: usize) -> (usize, usize) {
        let start = b * self.block;
        (start, (start + self.block).min(self.perm.len()))
    }

    fn parity(&self, key: &[u8], lo: usize, hi: usize) -> u8 {
        parity_of(key, self.perm[lo..hi].iter().map(|&i| i as usize))
    }

    fn odd_blocks(&self) -> Vec<usize> {
        (0..self.alice.len()).filter(|&b| self.alice[b] != self.bob[b]).collect()
    }
}

fn request<T: FrameTransport + ?Sized>(
    transport: &mut T,
    pass: u8,
    ranges: &[(usize, usize)],
    disclosed: &mut usize,
) -> Result<Vec<u8>> {
    let blocks = ranges
        .iter()
        .map(|&(s, e)| BlockRange { start: s as u32, end: e as u32 })
        .collect();
    transport.send(&Frame::ParityRequest { pass, blocks })?;
    match transport.recv()? {
        Frame::ParityResponse { parities } if parities.len() == ranges.len() => {
            *disclosed += parities.len();
            Ok(parities)
        }
        Frame::ParityResponse { parities } => Err(Error::Protocol(format!(
            "asked for {} parities, got {}",
            ranges.len(),
            parities.len()
        ))),
        Frame::Abort { reason } => Err(Error::Aborted(reason)),
        other => Err(Error::Protocol(format!(
            "expected PARITY_RESPONSE, got {}",
            other.name()
        ))),
    }
}

/// Runs Cascade against Alice, correcting `key` in place.
pub fn bob_correct<T: FrameTransport + ?Sized>(
    transport: &mut T,
    key: &mut [u8],
    session_id: u64,
    initial_block: usize,
    passes: usize,
) -> Result<CorrectionSession> {
    let n = key.len();
    let mut disclosed = 0usize;
    let mut flipped = 0usize;
    let mut schedule = Vec::with_capacity(passes);
    let mut done: Vec<PassState> = Vec::with_capacity(passes);
    if n == 0 {
        return Ok(CorrectionSession {
            block_size_schedule: schedule,
            parity_bits_disclosed: 0,
            passes: 0,
            corrected_key: Vec::new(),
            bits_flipped: 0,
        });
    }
    let initial_block = initial_block.clamp(1, n);
    for p in 0..passes {
        let block = pass_block_size(initial_block, p, n);
        schedule.push(block);
        let pass_id = (p + 1) as u8;
        let perm = pass_permutation(session_id, pass_id, n);
        let mut pos_of = vec![0u32; n];
        for (j, &i) in perm.iter().enumerate() {
            pos_of[i as usize] = j as u32;
        }
        let mut state = PassState {
            perm,
            pos_of,
            block,
            alice: Vec::new(),
            bob: Vec::new(),
        };
        let ranges: Vec<(usize, usize)> = (0..n.div_ceil(block)).map(|b| state.range(b)).collect();
        state.alice = request(transport, pass_id, &ranges, &mut disclosed)?;
        state.bob = ranges.iter().map(|&(s, e)| state.parity(key, s, e)).collect();
        done.push(state);

        // Bisect odd blocks, earliest (smallest-block) pass first, until
        // every known block parity agrees.
        while let Some(q) = done.iter().position(|s| s.alice != s.bob) {
            let pass = &done[q];
            let mut searches: Vec<(usize, usize, u8)> = pass
                .odd_blocks()
                .into_iter()
                .map(|b| {
                    let (s, e) = pass.range(b);
                    (s, e, pass.alice[b])
                })
                .collect();
            while searches.iter().any(|&(lo, hi, _)| hi - lo > 1) {
                let active: Vec<usize> =
                    (0..searches.len()).filter(|&i| searches[i].1 - searches[i].0 > 1).collect();
                let halves: Vec<(usize, usize)> = active
                    .iter()
                    .map(|&i| {
                        let (lo, hi, _) = searches[i];
                        (lo, lo + (hi - lo) / 2)
                    })
                    .collect();
                let answers = request(transport, (q + 1) as u8, &halves, &mut disclosed)?;
                for ((&i, &(lo, mid)), &alice_left) in active.iter().zip(&halves).zip(&answers) {
                    let bob_left = pass.parity(key, lo, mid);
                    let s = &mut searches[i];
                    if alice_left != bob_left {
                        *s = (lo, mid, alice_left);
                    } else {
                        *s = (mid, s.1, s.2 ^ alice_left);
                    }
                }
            }
            let errors: Vec<usize> = searches.iter().map(|&(lo, _, _)| pass.perm[lo] as usize).collect();
            for idx in errors {
                key[idx] ^= 1;
                flipped += 1;
                for s in done.iter_mut() {
                    let b = s.pos_of[idx] as usize / s.block;
                    s.bob[b] ^= 1;
                }
            }
        }
    }
    Ok(CorrectionSession {
        block_size_schedule: schedule,
        parity_bits_disclosed: disclosed,
        passes,
        corrected_key: key.to_vec(),
        bits_flipped: flipped,
    })
}

/// QBER estimate from a disclosed random sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QberEstimate {
    pub sample_len: usize,
    pub errors: usize,
}

impl QberEstimate {
    pub fn raw(&self) -> f64 {
        if self.sample_len == 0 {
            0.0
        } else {
            self.errors as f64 / self.sample_len as f64
        }
    }

    /// Rate used to size Cascade blocks: the raw rate, or the smoothed one
    /// when the sample shows no errors.
    pub fn for_block_size(&self) -> f64 {
        if self.errors == 0 {
            self.smoothed()
        } else {
            self.raw()
        }
    }

    /// Laplace estimate `(k + 1)/(n + 2)`; stays positive when the sample
    /// shows no errors.
    pub fn smoothed(&self) -> f64 {
        (self.errors as f64 + 1.0) / (self.sample_len as f64 + 2.0)
    }
}

/// Discloses a random `fraction` of the sifted key (pass 0 request), counts
/// disagreements and removes the sample from `key` (Alice does the same).
pub fn estimate_qber<T: FrameTransport + ?Sized, R: Rng + ?Sized>(
    transport: &mut T,
    key: &mut Vec<u8>,
    fraction: f64,
    rng: &mut R,
) -> Result<QberEstimate> {
    let n = key.len();
    let count = ((n as f64 * fraction).ceil() as usize).min(n);
    if count == 0 {
        return Ok(QberEstimate { sample_len: 0, errors: 0 });
    }
    let mut picks = index::sample(rng, n, count).into_vec();
    picks.sort_unstable();
    let ranges: Vec<(usize, usize)> = picks.iter().map(|&i| (i, i + 1)).collect();
    let mut ignored = 0;
    let alice = request(transport, 0, &ranges, &mut ignored)?;
    let errors = picks.iter().zip(&alice).filter(|(&i, &a)| key[i] != a).count();
    let mut keep = vec![true; n];
    for &i in &picks {
        keep[i] = false;
    }
    let mut i = 0;
    key.retain(|_| {
        i += 1;
        keep[i - 1]
    });
    Ok(QberEstimate { sample_len: count, errors })
}

/// Reconciles two standalone keys over an in-process channel, then checks
/// the result with a digest exchange.
///
/// Returns Bob's corrected key and the number of disclosed parity bits, or
/// [`Error::CorrectionFailed`] when the digests still differ.
pub fn correct_errors(key_a: &[u8], key_b: &[u8], initial_block: usize) -> Result<(Vec<u8>, usize)> {
    if key_a.len() != key_b.len() {
        return Err(Error::Domain("keys must have equal length".into()));
    }
    let session_id = 0xC0DE;
    let mut alice = AliceSession::with_key(session_id, key_a.to_vec());
    let mut t = LockstepTransport::new(&mut alice);
    let mut key = key_b.to_vec();
    let session = bob_correct(&mut t, &mut key, session_id, initial_block, DEFAULT_PASSES)?;
    if !bob_verify(&mut t, &key)? {
        return Err(Error::CorrectionFailed(format!(
            "digests differ after {} passes",
            session.passes
        )));
    }
    Ok((key, session.parity_bits_disclosed))
}

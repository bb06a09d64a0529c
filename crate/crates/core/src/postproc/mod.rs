//! Classical postprocessing over the public channel: QBER sampling,
//! Cascade error correction, digest check and privacy amplification.
//!
//! Bob drives every exchange; Alice answers through
//! [`AliceSession`](crate::protocol::AliceSession).

mod amplify;
mod cascade;
mod digest;

pub use amplify::{pa_output_length, privacy_amplify, toeplitz_seed, AmplificationSpec, DEFAULT_MARGIN_BITS};
pub use cascade::{
    bob_correct, correct_errors, estimate_qber, initial_block_size, pass_block_size, pass_permutation,
    CorrectionSession, QberEstimate, DEFAULT_PASSES, MIN_BLOCKS_PER_PASS,
};
pub use digest::{bob_verify, key_digest, verify_digest};

/// Parity of `bits[idx]` over the given indices.
pub(crate) fn parity_of<I: IntoIterator<Item = usize>>(bits: &[u8], idx: I) -> u8 {
    idx.into_iter().fold(0u8, |p, i| p ^ (bits[i] & 1))
}

use crate::protocol::wire::{pack_bits, Frame, ABORT_DIGEST_MISMATCH};
use crate::protocol::{AliceSession, FrameTransport, LockstepTransport};
use crate::{Error, Result};

/// CRC-32 over the key length and packed bits.
///
/// This only confirms that reconciliation succeeded in simulation; it is not
/// a cryptographic hash. Two keys with a random difference collide with
/// probability 2^-32, and single-bit differences never collide.
pub fn key_digest(bits: &[u8]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(&(bits.len() as u32).to_le_bytes());
    h.update(&pack_bits(bits));
    h.finalize()
}

/// Exchanges digests; returns whether Alice's key matches `key`. On mismatch
/// the session is aborted.
pub fn bob_verify<T: FrameTransport + ?Sized>(transport: &mut T, key: &[u8]) -> Result<bool> {
    transport.send(&Frame::KeyDigest {
        key_len: key.len() as u32,
        digest: key_digest(key),
    })?;
    match transport.recv()? {
        Frame::KeyDigest { key_len, digest } => {
            let ok = key_len as usize == key.len() && digest == key_digest(key);
            if !ok {
                transport.send(&Frame::Abort { reason: ABORT_DIGEST_MISMATCH })?;
            }
            Ok(ok)
        }
        Frame::Abort { reason } => Err(Error::Aborted(reason)),
        other => Err(Error::Protocol(format!("expected KEY_DIGEST, got {}", other.name()))),
    }
}

/// Digest comparison of two standalone keys over an in-process channel.
pub fn verify_digest(key_a: &[u8], key_b: &[u8]) -> Result<bool> {
    let mut alice = AliceSession::with_key(0, key_a.to_vec());
    let mut t = LockstepTransport::new(&mut alice);
    bob_verify(&mut t, key_b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use rand::Rng;

    #[test]
    fn equal_and_empty_keys_verify() {
        assert!(verify_digest(&[1, 0, 1], &[1, 0, 1]).unwrap());
        assert!(verify_digest(&[], &[]).unwrap());
    }

    #[test]
    fn single_bit_differences_always_detected() {
        let mut rng = stream_rng(3, Stream::Postproc, 99);
        let key: Vec<u8> = (0..512).map(|_| rng.random::<u8>() & 1).collect();
        for i in 0..key.len() {
            let mut other = key.clone();
            other[i] ^= 1;
            assert_ne!(key_digest(&key), key_digest(&other));
        }
        let mut other = key.clone();
        other[17] ^= 1;
        assert!(!verify_digest(&key, &other).unwrap());
    }

    #[test]
    fn length_is_part_of_digest() {
        assert_ne!(key_digest(&[0]), key_digest(&[0, 0]));
        assert!(!verify_digest(&[0], &[0, 0]).unwrap());
    }
}

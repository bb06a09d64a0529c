use rand::Rng;

use crate::math::binary_entropy;
use crate::{Error, Result};

pub const DEFAULT_MARGIN_BITS: usize = 30;

/// Parameters of one privacy-amplification step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmplificationSpec {
    pub input_length: usize,
    pub output_length: usize,
    /// `input_length + output_length - 1` bits defining the Toeplitz matrix.
    pub seed: Vec<u8>,
    pub security_margin: usize,
}

impl AmplificationSpec {
    pub fn new(input_length: usize, output_length: usize, seed: Vec<u8>) -> Result<Self> {
        let spec = Self {
            input_length,
            output_length,
            seed,
            security_margin: DEFAULT_MARGIN_BITS,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.output_length > self.input_length {
            return Err(Error::Domain(format!(
                "output length {} exceeds input length {}",
                self.output_length, self.input_length
            )));
        }
        if self.seed.len() != seed_len(self.input_length, self.output_length) {
            return Err(Error::Domain(format!(
                "seed has {} bits, expected {}",
                self.seed.len(),
                seed_len(self.input_length, self.output_length)
            )));
        }
        Ok(())
    }
}

fn seed_len(n: usize, m: usize) -> usize {
    if m == 0 {
        0
    } else {
        n + m - 1
    }
}

/// Uniformly random Toeplitz seed for an `n -> m` hash.
pub fn toeplitz_seed<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Vec<u8> {
    (0..seed_len(n, m)).map(|_| rng.random::<u8>() & 1).collect()
}

/// Final key length: `floor(n (1-d)(1 - h2(e/(1-d)))) - leakage - margin`,
/// floored at zero.
pub fn pa_output_length(n: usize, qber: f64, multiphoton: f64, leakage: usize, margin: usize) -> usize {
    if n == 0 || multiphoton >= 1.0 {
        return 0;
    }
    let single = 1.0 - multiphoton.max(0.0);
    let e1 = qber / single;
    if e1 >= 0.5 {
        return 0;
    }
    let bound = (n as f64 * single * (1.0 - binary_entropy(e1))).floor() as usize;
    bound.saturating_sub(leakage).saturating_sub(margin)
}

fn pack_words(bits: &[u8]) -> Vec<u64> {
    let mut words = vec![0u64; bits.len().div_ceil(64) + 1];
    for (i, &b) in bits.iter().enumerate() {
        words[i / 64] |= u64::from(b & 1) << (i % 64);
    }
    words
}

/// Toeplitz (sliding-window) hash: output bit `i` is the parity of
/// `key AND seed[i .. i + n]`.
pub fn privacy_amplify(key: &[u8], spec: &AmplificationSpec) -> Result<Vec<u8>> {
    spec.validate()?;
    if key.len() != spec.input_length {
        return Err(Error::Domain(format!(
            "key has {} bits, spec expects {}",
            key.len(),
            spec.input_length
        )));
    }
    let n = key.len();
    let key_words = pack_words(key);
    let seed_words = pack_words(&spec.seed);
    let full = n / 64;
    let tail_mask = if n % 64 == 0 { 0 } else { (1u64 << (n % 64)) - 1 };
    let window = |start: usize| -> u64 {
        let (q, r) = (start / 64, start % 64);
        if r == 0 {
            seed_words[q]
        } else {
            (seed_words[q] >> r) | (seed_words[q + 1] << (64 - r))
        }
    };
    let out = (0..spec.output_length)
        .map(|i| {
            let mut acc = 0u64;
            for j in 0..full {
                acc ^= key_words[j] & window(i + 64 * j);
            }
            if tail_mask != 0 {
                acc ^= key_words[full] & window(i + 64 * full) & tail_mask;
            }
            (acc.count_ones() & 1) as u8
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn naive(key: &[u8], seed: &[u8], m: usize) -> Vec<u8> {
        (0..m)
            .map(|i| key.iter().enumerate().fold(0u8, |p, (j, &k)| p ^ (k & seed[i + j])))
            .collect()
    }

    fn random_bits(n: usize, rng: &mut impl Rng) -> Vec<u8> {
        (0..n).map(|_| rng.random::<u8>() & 1).collect()
    }

    #[test]
    fn matches_bitwise_definition() {
        let mut rng = stream_rng(1, Stream::Postproc, 0);
        for &(n, m) in &[(1, 1), (63, 5), (64, 64), (65, 30), (200, 117), (1000, 3)] {
            let key = random_bits(n, &mut rng);
            let seed = toeplitz_seed(n, m, &mut rng);
            let spec = AmplificationSpec::new(n, m, seed.clone()).unwrap();
            assert_eq!(privacy_amplify(&key, &spec).unwrap(), naive(&key, &seed, m), "n={n} m={m}");
        }
    }

    #[test]
    fn trivial_cases() {
        let spec = AmplificationSpec::new(8, 0, vec![]).unwrap();
        assert!(privacy_amplify(&[1; 8], &spec).unwrap().is_empty());
        let mut rng = stream_rng(2, Stream::Postproc, 0);
        let spec = AmplificationSpec::new(40, 20, toeplitz_seed(40, 20, &mut rng)).unwrap();
        assert!(privacy_amplify(&[0; 40], &spec).unwrap().iter().all(|&b| b == 0));
    }

    #[test]
    fn seed_length_enforced() {
        assert!(AmplificationSpec::new(10, 4, vec![0; 12]).is_err());
        assert!(AmplificationSpec::new(10, 11, vec![0; 20]).is_err());
        let spec = AmplificationSpec::new(10, 4, vec![0; 13]).unwrap();
        assert!(privacy_amplify(&[0; 9], &spec).is_err());
    }

    #[test]
    fn linear_over_xor() {
        let mut rng = stream_rng(3, Stream::Postproc, 0);
        for _ in 0..200 {
            let k1 = random_bits(64, &mut rng);
            let k2 = random_bits(64, &mut rng);
            let spec = AmplificationSpec::new(64, 32, toeplitz_seed(64, 32, &mut rng)).unwrap();
            let x: Vec<u8> = k1.iter().zip(&k2).map(|(a, b)| a ^ b).collect();
            let hx = privacy_amplify(&x, &spec).unwrap();
            let h1 = privacy_amplify(&k1, &spec).unwrap();
            let h2 = privacy_amplify(&k2, &spec).unwrap();
            let combined: Vec<u8> = h1.iter().zip(&h2).map(|(a, b)| a ^ b).collect();
            assert_eq!(hx, combined);
        }
    }

    #[test]
    fn output_length_formula() {
        assert_eq!(pa_output_length(1000, 0.0, 0.0, 0, 0), 1000);
        assert_eq!(pa_output_length(0, 0.0, 0.0, 0, 0), 0);
        let n = 10_000;
        let leak = (n as f64 * binary_entropy(0.11)).ceil() as usize;
        assert!(pa_output_length(n, 0.11, 0.0, leak, 0) <= 1);
        assert_eq!(pa_output_length(n, 0.05, 1.0, 0, 0), 0);
        // 1000 * (1 - h2(0.03)) = 805.6
        assert_eq!(pa_output_length(1000, 0.03, 0.0, 100, 30), 805 - 130);
    }
}

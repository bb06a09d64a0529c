use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::math::{erf, sigma_from_fwhm};
use crate::photonics::ClickEvent;
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

pub const DEFAULT_BIN_WIDTH: f64 = 4e-9;

/// Click counts over equal-width bins of slot time offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingHistogram {
    /// Seconds.
    pub bin_width: f64,
    /// Left edge of bin 0, seconds.
    pub origin: f64,
    pub counts: Vec<u64>,
}

impl TimingHistogram {
    pub fn new(bin_width: f64, origin: f64, counts: Vec<u64>) -> Result<Self> {
        if !(bin_width > 0.0) || !bin_width.is_finite() {
            return Err(Error::param("bin_width", "must be positive"));
        }
        if counts.is_empty() {
            return Err(Error::param("counts", "need at least one bin"));
        }
        Ok(Self { bin_width, origin, counts })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.origin + (i as f64 + 0.5) * self.bin_width
    }

    /// Every count multiplied by `k`.
    pub fn scaled(&self, k: u64) -> Self {
        Self {
            counts: self.counts.iter().map(|c| c * k).collect(),
            ..self.clone()
        }
    }
}

/// Histogram of click time offsets, with bins aligned to multiples of
/// `bin_width` and spanning every click.
pub fn build_histogram(clicks: &[ClickEvent], bin_width: f64) -> Result<TimingHistogram> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::param("bin_width", "must be positive"));
    }
    if clicks.is_empty() {
        return TimingHistogram::new(bin_width, 0.0, vec![0]);
    }
    let index = |t: f64| (t / bin_width).floor() as i64;
    let lo = clicks.iter().map(|c| index(c.time_offset)).min().expect("non-empty");
    let hi = clicks.iter().map(|c| index(c.time_offset)).max().expect("non-empty");
    let mut counts = vec![0u64; (hi - lo + 1) as usize];
    for c in clicks {
        counts[(index(c.time_offset) - lo) as usize] += 1;
    }
    TimingHistogram::new(bin_width, lo as f64 * bin_width, counts)
}

/// Parameters of a synthetic two-pair arrival histogram: a signal pair at
/// `signal_center` and `signal_center + bit_delay`, and a Raman pair at
/// `signal_center - raman_delay` and `signal_center`, the second Raman peak
/// hiding under the Early signal peak. Within each pair the Early/Late area
/// ratio is `ratio`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub fwhm: f64,
    pub bit_delay: f64,
    pub raman_delay: f64,
    pub ratio: f64,
    pub signal_center: f64,
    /// Expected total counts.
    pub total_counts: f64,
    /// Early Raman peak area relative to the Late signal peak.
    pub raman_scale: f64,
    /// Share of all counts in the flat pedestal.
    pub pedestal_fraction: f64,
    pub bin_width: f64,
    pub origin: f64,
    pub n_bins: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            fwhm: 72e-9,
            bit_delay: 320e-9,
            raman_delay: 319.5e-9,
            ratio: 1.04,
            signal_center: 0.0,
            total_counts: 5e5,
            raman_scale: 0.4,
            pedestal_fraction: 0.05,
            bin_width: DEFAULT_BIN_WIDTH,
            origin: -700e-9,
            n_bins: 350,
        }
    }
}

impl SyntheticSpec {
    /// Peak areas `[signal early, signal late, raman early, raman late]`
    /// and the pedestal per bin.
    pub fn areas(&self) -> ([f64; 4], f64) {
        let units = self.ratio + 1.0 + self.raman_scale + self.raman_scale / self.ratio;
        let late = self.total_counts * (1.0 - self.pedestal_fraction) / units;
        let raman = self.raman_scale * late;
        (
            [self.ratio * late, late, raman, raman / self.ratio],
            self.total_counts * self.pedestal_fraction / self.n_bins as f64,
        )
    }

    pub fn centers(&self) -> [f64; 4] {
        let c = self.signal_center;
        [c, c + self.bit_delay, c - self.raman_delay, c]
    }

    /// Expected counts per bin.
    pub fn expected(&self) -> Vec<f64> {
        let (areas, pedestal) = self.areas();
        let centers = self.centers();
        let scale = sigma_from_fwhm(self.fwhm) * std::f64::consts::SQRT_2;
        let cdf = |x: f64| 0.5 * (1.0 + erf(x / scale));
        (0..self.n_bins)
            .map(|i| {
                let a = self.origin + i as f64 * self.bin_width;
                let b = a + self.bin_width;
                pedestal
                    + areas
                        .iter()
                        .zip(&centers)
                        .map(|(&area, &c)| area * (cdf(b - c) - cdf(a - c)))
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Poisson-sampled histogram from [`SyntheticSpec::expected`].
pub fn synthetic_histogram(spec: &SyntheticSpec, seed: u64) -> Result<TimingHistogram> {
    let mut rng = stream_rng(seed, Stream::Synthetic, 0);
    let counts = spec
        .expected()
        .into_iter()
        .map(|lambda| sample_poisson(lambda, &mut rng))
        .collect();
    TimingHistogram::new(spec.bin_width, spec.origin, counts)
}

fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive finite rate").sample(rng) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonics::{OutputBin, Provenance};

    fn click(t: f64) -> ClickEvent {
        ClickEvent {
            slot_index: 0,
            time_offset: t,
            provenance: Provenance::Signal,
            output_bin: OutputBin::Early,
        }
    }

    #[test]
    fn empty_input_gives_zero_bin() {
        let h = build_histogram(&[], 4e-9).unwrap();
        assert_eq!(h.total(), 0);
        assert_eq!(h.len(), 1);
    }

    #[test]
    fn conservation_and_bin_edges() {
        let clicks: Vec<ClickEvent> = [-5e-9, -4e-9, -1e-12, 0.0, 3.9e-9, 4e-9, 321e-9]
            .iter()
            .map(|&t| click(t))
            .collect();
        for w in [1e-9, 4e-9, 7e-9, 1e-6] {
            assert_eq!(build_histogram(&clicks, w).unwrap().total(), clicks.len() as u64);
        }
        let h = build_histogram(&clicks, 4e-9).unwrap();
        assert!((h.origin + 8e-9).abs() < 1e-18);
        // [-8,-4): -5; [-4,0): -4, -1e-12; [0,4): 0, 3.9; [4,8): 4
        assert_eq!(&h.counts[..4], &[1, 2, 2, 1]);
        assert_eq!(*h.counts.last().unwrap(), 1);
        assert!(build_histogram(&clicks, 0.0).is_err());
    }

    #[test]
    fn two_gaussians_resolve_into_two_modes() {
        let spec = SyntheticSpec { raman_scale: 0.0, pedestal_fraction: 0.0, ..Default::default() };
        let h = synthetic_histogram(&spec, 1).unwrap();
        let c = &h.counts;
        let modes: Vec<usize> = (3..c.len() - 3)
            .filter(|&i| {
                let s = |j: usize| c[j - 3..=j + 3].iter().sum::<u64>();
                s(i) > 1000 && (i - 3..=i + 3).all(|j| j == i || s(j) < s(i))
            })
            .collect();
        assert_eq!(modes.len(), 2, "{modes:?}");
        let sep = h.bin_center(modes[1]) - h.bin_center(modes[0]);
        assert!((sep - 320e-9).abs() < 12e-9);
    }

    #[test]
    fn synthetic_total_matches_spec() {
        let spec = SyntheticSpec::default();
        let expected: f64 = spec.expected().iter().sum();
        assert!((expected - spec.total_counts).abs() < 1e-6 * spec.total_counts);
        let h = synthetic_histogram(&spec, 2).unwrap();
        assert!((h.total() as f64 - expected).abs() < 4.0 * expected.sqrt());
    }
}

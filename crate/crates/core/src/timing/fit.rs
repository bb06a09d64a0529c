//! Constrained four-Gaussian fit of an arrival histogram.
//!
//! Model, with every peak sharing one FWHM and a flat pedestal `p`:
//!
//! ```text
//! signal early  r·A   at c
//! signal late     A   at c + D          (D: interferometer bit delay, fixed)
//! raman early   A_r   at t
//! raman late    A_r/r at t + d
//! ```
//!
//! Both pairs share the Early/Late area ratio `r`. Free parameters are
//! `c, fwhm, A, r, t, A_r, d, p`. A second fit without the Raman pair decides
//! whether it is present at all.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{DMatrix, DVector, Dyn, Owned, U1};
use serde::{Deserialize, Serialize};

use super::TimingHistogram;
use crate::math::FWHM_PER_SIGMA;
use crate::{Error, Result};

/// Improvement in chi-square the Raman pair must bring to be reported.
pub const RAMAN_DELTA_CHI2: f64 = 25.0;

const NS: f64 = 1e-9;
const C: usize = 0;
const FWHM: usize = 1;
const A: usize = 2;
const R: usize = 3;
const T: usize = 4;
const AR: usize = 5;
const D: usize = 6;
const P: usize = 7;
const N_PARAMS: usize = 8;
const FREE_FULL: [usize; N_PARAMS] = [C, FWHM, A, R, T, AR, D, P];
const FREE_REDUCED: [usize; 5] = [C, FWHM, A, R, P];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Fixed Early-to-Late spacing of the signal pair, seconds.
    pub bit_delay: f64,
    pub max_evaluations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { bit_delay: 320e-9, max_evaluations: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    /// Early and Late signal peak centres, seconds.
    pub primary_peak_centers: [f64; 2],
    pub shared_fwhm: f64,
    /// Areas in counts: signal early, signal late, Raman early, Raman late.
    pub peak_amplitudes: [f64; 4],
    /// Early Raman peak centre, seconds (`None` when absent).
    pub raman_center: Option<f64>,
    /// Spacing of the Raman pair, seconds (`None` when absent).
    pub raman_delay: Option<f64>,
    /// Early/Late area ratio shared by both pairs; `None` when the Raman
    /// pair is absent and the ratio is not constrained by it.
    pub raman_ratio: Option<f64>,
    /// Early/Late area ratio of the signal pair alone.
    pub signal_ratio: f64,
    /// Flat background, counts per bin.
    pub pedestal: f64,
    /// Weighted residual norm of the reported model.
    pub residual_norm: f64,
    /// Chi-square drop from adding the Raman pair.
    pub raman_delta_chi2: f64,
    pub evaluations: usize,
}

impl PeakFit {
    pub fn raman_present(&self) -> bool {
        self.raman_delay.is_some()
    }
}

struct Problem<'a> {
    t: &'a [f64],
    y: &'a [f64],
    inv_sigma: &'a [f64],
    bin_width: f64,
    bit_delay: f64,
    full: [f64; N_PARAMS],
    free: &'a [usize],
}

fn gauss(x: f64, sigma: f64) -> f64 {
    (-0.5 * (x / sigma).powi(2)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

impl Problem<'_> {
    /// Model value and gradient over all eight parameters at one bin.
    fn eval(&self, t: f64) -> (f64, [f64; N_PARAMS]) {
        let p = &self.full;
        let sigma = p[FWHM] / FWHM_PER_SIGMA;
        let r = p[R];
        let w = self.bin_width;
        let centers = [p[C], p[C] + self.bit_delay, p[T], p[T] + p[D]];
        let areas = [r * p[A], p[A], p[AR], p[AR] / r];
        let mut g = [0.0; 4];
        let mut comp = [0.0; 4];
        let mut dmu = [0.0; 4];
        let mut dsigma = 0.0;
        for k in 0..4 {
            let x = t - centers[k];
            g[k] = w * gauss(x, sigma);
            comp[k] = areas[k] * g[k];
            dmu[k] = comp[k] * x / (sigma * sigma);
            dsigma += comp[k] * (x * x / sigma.powi(3) - 1.0 / sigma);
        }
        let mut grad = [0.0; N_PARAMS];
        grad[C] = dmu[0] + dmu[1];
        grad[FWHM] = dsigma / FWHM_PER_SIGMA;
        grad[A] = r * g[0] + g[1];
        grad[R] = p[A] * g[0] - p[AR] / (r * r) * g[3];
        grad[T] = dmu[2] + dmu[3];
        grad[AR] = g[2] + g[3] / r;
        grad[D] = dmu[3];
        grad[P] = 1.0;
        (comp.iter().sum::<f64>() + p[P], grad)
    }

    fn chi2(&self) -> f64 {
        self.t
            .iter()
            .zip(self.y)
            .zip(self.inv_sigma)
            .map(|((&t, &y), &s)| ((self.eval(t).0 - y) * s).powi(2))
            .sum()
    }
}

impl LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_> {
    type ResidualStorage = Owned<f64, Dyn, U1>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn, U1>;

    fn set_params(&mut self, x: &DVector<f64>) {
        for (&i, &v) in self.free.iter().zip(x.iter()) {
            self.full[i] = v;
        }
    }

    fn params(&self) -> DVector<f64> {
        DVector::from_iterator(self.free.len(), self.free.iter().map(|&i| self.full[i]))
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        if !(self.full[FWHM] > 0.0 && self.full[R] > 0.0) {
            return None;
        }
        Some(DVector::from_iterator(
            self.t.len(),
            self.t
                .iter()
                .zip(self.y)
                .zip(self.inv_sigma)
                .map(|((&t, &y), &s)| (self.eval(t).0 - y) * s),
        ))
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        if !(self.full[FWHM] > 0.0 && self.full[R] > 0.0) {
            return None;
        }
        let mut j = DMatrix::zeros(self.t.len(), self.free.len());
        for (row, (&t, &s)) in self.t.iter().zip(self.inv_sigma).enumerate() {
            let (_, grad) = self.eval(t);
            for (col, &i) in self.free.iter().enumerate() {
                j[(row, col)] = grad[i] * s;
            }
        }
        Some(j)
    }
}

/// Box-smoothed copy of the counts (5 bins).
fn smooth(y: &[f64]) -> Vec<f64> {
    (0..y.len())
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(y.len());
            y[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Significant local maxima of the smoothed counts, highest first.
fn modes(s: &[f64], baseline: f64, half_span: usize) -> Vec<usize> {
    let threshold = baseline + 10.0 * (baseline + 1.0).sqrt();
    let mut found: Vec<usize> = (0..s.len())
        .filter(|&i| {
            let lo = i.saturating_sub(half_span);
            let hi = (i + half_span + 1).min(s.len());
            s[i] > threshold && (lo..hi).all(|j| s[j] < s[i] || (s[j] == s[i] && j >= i))
        })
        .collect();
    found.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    found
}

fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[((s.len() - 1) as f64 * q).round() as usize]
}

/// Half-maximum width of the smoothed peak at bin `i`, in ns.
fn half_width(s: &[f64], i: usize, baseline: f64, bin_ns: f64) -> f64 {
    let half = baseline + 0.5 * (s[i] - baseline);
    let mut l = i;
    while l > 0 && s[l] > half {
        l -= 1;
    }
    let mut r = i;
    while r + 1 < s.len() && s[r] > half {
        r += 1;
    }
    ((r - l) as f64 * bin_ns).max(2.0 * bin_ns)
}

fn solve<'a>(lm: &LevenbergMarquardt<f64>, problem: Problem<'a>) -> Result<(Problem<'a>, usize)> {
    let (problem, report) = lm.minimize(problem);
    if !report.termination.was_successful() {
        return Err(Error::Fit(format!(
            "least squares did not converge: {:?} after {} evaluations, objective {:.4e}",
            report.termination, report.number_of_evaluations, report.objective_function
        )));
    }
    if !problem.full.iter().all(|v| v.is_finite()) || problem.full[FWHM] <= 0.0 {
        return Err(Error::Fit(format!("fit left the valid region: {:?}", problem.full)));
    }
    Ok((problem, report.number_of_evaluations))
}

/// Fits the constrained four-peak model with default options.
pub fn fit_peaks(hist: &TimingHistogram) -> Result<PeakFit> {
    fit_peaks_with(hist, &FitOptions::default())
}

pub fn fit_peaks_with(hist: &TimingHistogram, opts: &FitOptions) -> Result<PeakFit> {
    if !(opts.bit_delay > 0.0) {
        return Err(Error::param("bit_delay", "must be positive"));
    }
    // Work in ns so all parameters are of moderate size.
    let bin_ns = hist.bin_width / NS;
    let t: Vec<f64> = (0..hist.len()).map(|i| hist.bin_center(i) / NS).collect();
    let y: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    let delay_ns = opts.bit_delay / NS;

    let s = smooth(&y);
    let baseline = quantile(&s, 0.1);
    let span = ((delay_ns / 4.0) / bin_ns).ceil().max(1.0) as usize;
    let found = modes(&s, baseline, span);
    if found.len() < 2 {
        return Err(Error::Fit(format!(
            "found {} significant peak(s); need the two signal peaks",
            found.len()
        )));
    }
    let (i0, i1) = (found[0].min(found[1]), found[0].max(found[1]));
    let sep = t[i1] - t[i0];
    if (sep - delay_ns).abs() > 0.25 * delay_ns {
        return Err(Error::Fit(format!(
            "two largest peaks are {sep:.1} ns apart, expected about {delay_ns:.1} ns"
        )));
    }
    let fwhm0 = half_width(&s, i1, baseline, bin_ns);
    let sigma0 = fwhm0 / FWHM_PER_SIGMA;
    let area = |i: usize| ((s[i] - baseline) * sigma0 * (2.0 * std::f64::consts::PI).sqrt() / bin_ns).max(1.0);
    let a0 = area(i1);
    let c0 = t[i1] - delay_ns;
    let raman_mode = found[2..]
        .iter()
        .copied()
        .find(|&k| (t[k] - t[i0]).abs() > 1.5 * fwhm0 && (t[k] - t[i1]).abs() > 1.5 * fwhm0);
    let (tr0, ar0) = match raman_mode {
        Some(k) => (t[k], area(k)),
        None => (c0 - delay_ns, 0.01 * a0),
    };
    let r0 = 1.0;

    // Poisson weights with a floor proportional to the mean count, so that
    // scaling every count scales chi-square and leaves the optimum alone.
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let floor = (0.05 * mean).max(f64::MIN_POSITIVE);
    let inv_sigma: Vec<f64> = y.iter().map(|&v| 1.0 / v.max(floor).sqrt()).collect();

    let start = [c0, fwhm0, a0, r0, tr0, ar0, delay_ns, baseline.max(0.0)];
    let lm = LevenbergMarquardt::new().with_patience(opts.max_evaluations.max(1) / N_PARAMS + 1);

    let make = |free: &'static [usize], init: [f64; N_PARAMS]| Problem {
        t: &t,
        y: &y,
        inv_sigma: &inv_sigma,
        bin_width: bin_ns,
        bit_delay: delay_ns,
        full: init,
        free,
    };

    let mut reduced_start = start;
    reduced_start[AR] = 0.0;
    let (reduced, evals_reduced) = solve(&lm, make(&FREE_REDUCED, reduced_start))?;
    let chi2_reduced = reduced.chi2();
    // Start the full fit from the reduced optimum for the shared parameters.
    let mut full_start = reduced.full;
    full_start[T] = tr0;
    full_start[AR] = ar0;
    full_start[D] = delay_ns;
    let full = solve(&lm, make(&FREE_FULL, full_start));
    let (best, evaluations, delta, present) = match full {
        Ok((f, e)) => {
            let delta = chi2_reduced - f.chi2();
            let present = delta >= RAMAN_DELTA_CHI2 && f.full[AR] > 0.0;
            if present {
                (f, evals_reduced + e, delta, true)
            } else {
                (reduced, evals_reduced + e, delta, false)
            }
        }
        Err(_) => (reduced, evals_reduced, 0.0, false),
    };

    let p = best.full;
    let amps = [p[R] * p[A], p[A], p[AR], p[AR] / p[R]];
    Ok(PeakFit {
        primary_peak_centers: [p[C] * NS, (p[C] + delay_ns) * NS],
        shared_fwhm: p[FWHM] * NS,
        peak_amplitudes: if present { amps } else { [amps[0], amps[1], 0.0, 0.0] },
        raman_center: present.then(|| p[T] * NS),
        raman_delay: present.then(|| p[D] * NS),
        raman_ratio: present.then_some(p[R]),
        signal_ratio: p[R],
        pedestal: p[P],
        residual_norm: best.chi2().sqrt(),
        raman_delta_chi2: delta,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timing::{synthetic_histogram, SyntheticSpec};

    #[test]
    fn recovers_default_parameters() {
        let spec = SyntheticSpec::default();
        let fit = fit_peaks(&synthetic_histogram(&spec, 11).unwrap()).unwrap();
        assert!(fit.raman_present());
        assert!((fit.raman_delay.unwrap() - 319.5e-9).abs() < 1e-9, "{fit:?}");
        assert!((fit.raman_ratio.unwrap() - 1.04).abs() < 0.02, "{fit:?}");
        assert!((fit.shared_fwhm - 72e-9).abs() < 2e-9, "{fit:?}");
        assert!(fit.primary_peak_centers[0].abs() < 1e-9);
    }

    #[test]
    fn raman_free_histogram_flags_absence() {
        let spec = SyntheticSpec { raman_scale: 0.0, ..Default::default() };
        let fit = fit_peaks(&synthetic_histogram(&spec, 12).unwrap()).unwrap();
        assert!(!fit.raman_present(), "{fit:?}");
        assert!(fit.raman_ratio.is_none());
        assert!((fit.signal_ratio - 1.04).abs() < 0.02);
        assert!((fit.shared_fwhm - 72e-9).abs() < 2e-9);
    }

    #[test]
    fn doubling_counts_doubles_amplitudes_only() {
        let h = synthetic_histogram(&SyntheticSpec::default(), 13).unwrap();
        let a = fit_peaks(&h).unwrap();
        let b = fit_peaks(&h.scaled(2)).unwrap();
        let close = |x: f64, y: f64, tol: f64| (x - y).abs() <= tol * x.abs().max(1e-12);
        for k in 0..2 {
            assert!(close(a.primary_peak_centers[k], b.primary_peak_centers[k], 1e-6) || (a.primary_peak_centers[k] - b.primary_peak_centers[k]).abs() < 1e-14);
        }
        assert!(close(a.shared_fwhm, b.shared_fwhm, 1e-6));
        assert!(close(a.raman_delay.unwrap(), b.raman_delay.unwrap(), 1e-6));
        assert!(close(a.raman_ratio.unwrap(), b.raman_ratio.unwrap(), 1e-6));
        for k in 0..4 {
            assert!(close(2.0 * a.peak_amplitudes[k], b.peak_amplitudes[k], 1e-6));
        }
    }

    #[test]
    fn flat_histogram_is_an_error() {
        let h = TimingHistogram::new(4e-9, 0.0, vec![100; 200]).unwrap();
        assert!(matches!(fit_peaks(&h), Err(Error::Fit(_))));
        let single = SyntheticSpec { ratio: 1e-6, raman_scale: 0.0, ..Default::default() };
        assert!(matches!(
            fit_peaks(&synthetic_histogram(&single, 1).unwrap()),
            Err(Error::Fit(_))
        ));
    }
}

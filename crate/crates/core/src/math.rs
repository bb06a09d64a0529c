//! Small numeric helpers shared by the analytic model and the solvers.

use crate::{Error, Result};

/// `2·sqrt(2·ln 2)`: ratio between a Gaussian's FWHM and its standard deviation.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

pub fn sigma_from_fwhm(fwhm: f64) -> f64 {
    fwhm / FWHM_PER_SIGMA
}

/// Power ratio for a loss given in dB.
pub fn db_to_ratio(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

pub fn ratio_to_db(ratio: f64) -> f64 {
    -10.0 * ratio.log10()
}

/// Binary Shannon entropy in bits. `h2(0) = h2(1) = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Fraction of a centred Gaussian with the given FWHM lying inside
/// `[-width/2, width/2]`: `erf(width * sqrt(ln 2) / fwhm)`.
pub fn gaussian_window_fraction(width: f64, fwhm: f64) -> f64 {
    if width <= 0.0 {
        return 0.0;
    }
    if width.is_infinite() {
        return 1.0;
    }
    erf(width * std::f64::consts::LN_2.sqrt() / fwhm)
}

/// Bisection on a bracketing interval. `f(lo)` and `f(hi)` must differ in sign.
///
/// Stops when the bracket is narrower than `tol(lo, hi)`, or after 200 halvings.
pub fn bisect<F, T>(mut f: F, mut lo: f64, mut hi: f64, tol: T) -> Result<f64>
where
    F: FnMut(f64) -> f64,
    T: Fn(f64, f64) -> bool,
{
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if !(f_lo.is_finite() && f_hi.is_finite()) {
        return Err(Error::Domain("bisection endpoints not finite".into()));
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::ThresholdUnattainable(format!(
            "no sign change on [{lo:e}, {hi:e}]"
        )));
    }
    for _ in 0..200 {
        if tol(lo, hi) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Golden-section maximisation of a unimodal function on `[lo, hi]`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    while (hi - lo) > tol {
        // `>=` keeps the left point on ties so flat plateaus resolve to the smaller argument.
        if fa >= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

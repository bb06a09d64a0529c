//! Arrival-time analysis: histograms, the constrained four-peak fit and
//! acceptance-window selection.

mod fit;
mod histogram;
mod window;

pub use fit::{fit_peaks, fit_peaks_with, FitOptions, PeakFit, RAMAN_DELTA_CHI2};
pub use histogram::{build_histogram, synthetic_histogram, SyntheticSpec, TimingHistogram, DEFAULT_BIN_WIDTH};
pub use window::{optimize_window, window_capture_fraction, window_tradeoff, TradeoffPoint, WindowSelection};

//! Analytic rate and error model for the link, plus the threshold,
//! distance and secret-fraction calculators built on it.

mod model;
mod scenario;

pub use model::{
    click_rates, distance_curve, max_distance, min_mu, multiphoton_click_fraction, mu_curve,
    qber_model, secret_fraction, secret_rate, secure_mu_bound, ClickRates, CurvePoint,
    SecretFraction,
};
pub use scenario::{Scenario, SecurityParams, SyncMode, RECEIVER_LOSS};

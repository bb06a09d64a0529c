//! Physical layer: attenuated-laser source, link budget, background sources
//! and the stochastic response of a latching single-photon detector.

mod background;
mod budget;
mod detector;
mod source;

pub use background::{
    blackbody_in_band_rate, filtered_background_rate, FilterSpec, BOLTZMANN, PLANCK,
    SPEED_OF_LIGHT,
};
pub use budget::{transmittance, ComponentLoss, LinkBudget};
pub use detector::{
    apply_dead_time, detect, raw_clicks, ClickEvent, DetectorModel, OutputBin, Provenance,
    SlotArrivals, SlotTiming,
};
pub use source::{multi_photon_prob, poisson_pmf, sample_emission, PoissonSampler, SourceModel};

use serde::{Deserialize, Serialize};

use crate::math::db_to_ratio;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentLoss {
    pub name: String,
    pub loss_db: f64,
}

impl ComponentLoss {
    pub fn new(name: impl Into<String>, loss_db: f64) -> Self {
        Self {
            name: name.into(),
            loss_db,
        }
    }
}

/// Fiber plus itemised receiver losses plus detector efficiency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub fiber_length_km: f64,
    pub attenuation_db_per_km: f64,
    pub components: Vec<ComponentLoss>,
    pub detector_efficiency: f64,
}

impl LinkBudget {
    pub fn new(fiber_length_km: f64, attenuation_db_per_km: f64, detector_efficiency: f64) -> Self {
        Self {
            fiber_length_km,
            attenuation_db_per_km,
            components: Vec::new(),
            detector_efficiency,
        }
    }

    pub fn with_component(mut self, name: impl Into<String>, loss_db: f64) -> Self {
        self.components.push(ComponentLoss::new(name, loss_db));
        self
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |field: &'static str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::param(field, format!("must be finite and >= 0, got {v}")))
            }
        };
        nonneg("fiber_length_km", self.fiber_length_km)?;
        nonneg("attenuation_db_per_km", self.attenuation_db_per_km)?;
        for c in &self.components {
            if !(c.loss_db.is_finite() && c.loss_db >= 0.0) {
                return Err(Error::param(
                    "components",
                    format!("loss of `{}` must be finite and >= 0, got {}", c.name, c.loss_db),
                ));
            }
        }
        if !(self.detector_efficiency > 0.0 && self.detector_efficiency <= 1.0) {
            return Err(Error::param(
                "detector_efficiency",
                format!("must lie in (0, 1], got {}", self.detector_efficiency),
            ));
        }
        Ok(())
    }

    pub fn fiber_loss_db(&self) -> f64 {
        self.fiber_length_km * self.attenuation_db_per_km
    }

    pub fn component_loss_db(&self) -> f64 {
        self.components.iter().map(|c| c.loss_db).sum()
    }

    pub fn total_loss_db(&self) -> f64 {
        self.fiber_loss_db() + self.component_loss_db()
    }

    pub fn component(&self, name: &str) -> Option<&ComponentLoss> {
        self.components.iter().find(|c| c.name == name)
    }

    /// Sets (or inserts) a named component loss.
    pub fn set_component(&mut self, name: &str, loss_db: f64) {
        match self.components.iter_mut().find(|c| c.name == name) {
            Some(c) => c.loss_db = loss_db,
            None => self.components.push(ComponentLoss::new(name, loss_db)),
        }
    }

    pub fn remove_component(&mut self, name: &str) -> Option<ComponentLoss> {
        let idx = self.components.iter().position(|c| c.name == name)?;
        Some(self.components.remove(idx))
    }

    /// Budget of `self` followed by `next`. The second fiber span becomes a
    /// lumped component so spans with different attenuation can be chained.
    pub fn concat(&self, next: &LinkBudget) -> LinkBudget {
        let mut out = self.clone();
        out.components
            .push(ComponentLoss::new("concatenated_fiber", next.fiber_loss_db()));
        out.components.extend(next.components.iter().cloned());
        out.detector_efficiency *= next.detector_efficiency;
        out
    }

    pub fn transmittance(&self) -> f64 {
        transmittance(self)
    }
}

/// End-to-end detection probability of a launched photon:
/// `10^{-(alpha L + sum losses)/10} * detector_efficiency`.
pub fn transmittance(budget: &LinkBudget) -> f64 {
    db_to_ratio(budget.total_loss_db()) * budget.detector_efficiency
}

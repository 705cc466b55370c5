//! Gaussian membership functions and their parameter gradients.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MembershipError {
    #[error("membership spread must be finite and > 0, got {0}")]
    InvalidSpread(f64),
    #[error("membership center must be finite, got {0}")]
    InvalidCenter(f64),
}

/// `mu(x) = exp(-((x - center) / spread)^2 / 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMF {
    center: f64,
    spread: f64,
}

impl GaussianMF {
    pub fn new(center: f64, spread: f64) -> Result<Self, MembershipError> {
        if !center.is_finite() {
            return Err(MembershipError::InvalidCenter(center));
        }
        if !(spread.is_finite() && spread > 0.0) {
            return Err(MembershipError::InvalidSpread(spread));
        }
        Ok(Self { center, spread })
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn spread(&self) -> f64 {
        self.spread
    }

    /// Apply a gradient step. The spread is kept at or above `spread_floor`.
    pub(crate) fn shift(&mut self, d_center: f64, d_spread: f64, spread_floor: f64) {
        self.center -= d_center;
        self.spread = (self.spread - d_spread).max(spread_floor);
    }

    pub fn mu(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.spread;
        (-0.5 * z * z).exp()
    }

    /// d mu / d center = mu(x) (x - c) / spread^2.
    pub fn dmu_dc(&self, x: f64) -> f64 {
        let dx = x - self.center;
        self.mu(x) * dx / (self.spread * self.spread)
    }

    /// d mu / d spread = mu(x) (x - c)^2 / spread^3.
    pub fn dmu_ddelta(&self, x: f64) -> f64 {
        let dx = x - self.center;
        self.mu(x) * dx * dx / (self.spread * self.spread * self.spread)
    }
}

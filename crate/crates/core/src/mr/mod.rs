//! Multiresolution transform on graded dyadic trees.
//!
//! Values are cell averages. Projection averages children into their parent;
//! prediction rebuilds children from the parent's `3^d` same-level stencil
//! with the third-order tensor-product rule in [`predict`]. Details measure
//! the gap between stored and predicted children and drive [`adapt`].

mod adapt;
mod predict;
mod tree;

pub use adapt::{random_graded, AdaptStats};
pub(crate) use adapt::cell_average;
pub use predict::{predict_1d, predict_tensor, DetailField, PREDICT_WEIGHTS};
pub use tree::{compression_ratio, uniform_keys, Caches, NodeRef, TreeField};

use crate::blocks::BlockConfig;
use crate::error::MrError;
use crate::morton::Dim;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MrConfig {
    pub dim: Dim,
    /// Finest level `J`.
    pub levels: u8,
    /// Fully populated floor level, also the parallel projection cut.
    pub jmin: u8,
    /// Threshold `ε` applied at level `J`.
    pub eps: f64,
    pub blocks: BlockConfig,
}

impl MrConfig {
    pub fn default_jmin(dim: Dim) -> u8 {
        match dim {
            Dim::Two => 5,
            Dim::Three => 3,
        }
    }

    /// Config with the default `J_min`, lowered to `J - 1` on shallow trees.
    pub fn new(dim: Dim, levels: u8, eps: f64) -> Result<Self, MrError> {
        let jmin = Self::default_jmin(dim).min(levels.saturating_sub(1)).max(1);
        Self::with_jmin(dim, levels, jmin, eps)
    }

    pub fn with_jmin(dim: Dim, levels: u8, jmin: u8, eps: f64) -> Result<Self, MrError> {
        let cfg = MrConfig {
            dim,
            levels,
            jmin,
            eps,
            blocks: BlockConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), MrError> {
        if self.levels > self.dim.level_cap() {
            return Err(MrError::Config(format!(
                "J = {} exceeds the key capacity of {} levels",
                self.levels,
                self.dim.level_cap()
            )));
        }
        if !(0 < self.jmin && self.jmin < self.levels) {
            return Err(MrError::Config(format!(
                "need 0 < J_min < J, got J_min = {} and J = {}",
                self.jmin, self.levels
            )));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(MrError::Config(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }

    /// Level-wise thresholds `ε_j = 2^{(d/2)(j-J)} ε` for `j = 0..=J`.
    pub fn thresholds(&self) -> Vec<f64> {
        thresholds(self.dim, self.levels, self.eps)
    }
}

pub fn thresholds(dim: Dim, levels: u8, eps: f64) -> Vec<f64> {
    let half_d = dim.n() as f64 / 2.0;
    (0..=levels)
        .map(|j| (half_d * (f64::from(j) - f64::from(levels))).exp2() * eps)
        .collect()
}

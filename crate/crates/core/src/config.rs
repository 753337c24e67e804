//! Solver hyperparameters and the JSON run configuration.

use serde::{Deserialize, Serialize};

use crate::error::{GsrError, Result};
use crate::gsr::DEFAULT_CLAMP;
use crate::losses::LossWeights;
use crate::optim::LearningRateTable;

pub const R_ANISO: f64 = 1.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    pub weights: LossWeights,
    pub rates: LearningRateTable,
    pub r_aniso: f64,
    pub clamp: f64,
    pub scheduler_factor: f64,
    pub scheduler_patience: usize,
    pub early_stop_window: usize,
    pub early_stop_threshold: f64,
    pub init_iterations: usize,
    pub projection_iterations: usize,
    pub reseed_iterations: usize,
    pub interior_samples: usize,
    /// Samples per boundary piece.
    pub boundary_samples: usize,
    pub reseed_samples: usize,
    pub reseed: bool,
    pub seed: u64,
}

impl Hyperparams {
    pub fn defaults(dim: usize) -> Self {
        let (interior, boundary) = if dim == 2 { (4096, 1024) } else { (16384, 2048) };
        Self {
            weights: LossWeights::defaults(dim),
            rates: LearningRateTable::defaults(dim),
            r_aniso: R_ANISO,
            clamp: DEFAULT_CLAMP,
            scheduler_factor: 0.9,
            scheduler_patience: 50,
            early_stop_window: 500,
            early_stop_threshold: 1e-3,
            init_iterations: 400,
            projection_iterations: 4100,
            reseed_iterations: 100,
            interior_samples: interior,
            boundary_samples: boundary,
            reseed_samples: 1024,
            reseed: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rates.validate()?;
        let bad = |m: &str| Err(GsrError::Config(m.to_string()));
        if !(self.clamp > 0.0 && self.clamp < 1.0) {
            return bad("clamp must lie in (0, 1)");
        }
        if !(self.r_aniso >= 1.0) {
            return bad("r_aniso must be at least 1");
        }
        if !(self.scheduler_factor > 0.0 && self.scheduler_factor <= 1.0) {
            return bad("scheduler_factor must lie in (0, 1]");
        }
        if self.interior_samples == 0 {
            return bad("interior_samples must be positive");
        }
        let w = &self.weights;
        if [w.vor, w.div, w.b1, w.b2, w.aniso, w.vol, w.pos]
            .iter()
            .any(|x| !(x.is_finite() && *x >= 0.0))
        {
            return bad("loss weights must be finite and non-negative");
        }
        Ok(())
    }
}

/// Run configuration file. Every field is optional; missing fields fall back
/// to the scene catalogue and [`Hyperparams::defaults`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scene: Option<String>,
    pub dt: Option<f64>,
    pub frames: Option<usize>,
    pub particles: Option<usize>,
    pub interior_samples: Option<usize>,
    pub boundary_samples: Option<usize>,
    pub reseed_samples: Option<usize>,
    pub seed: Option<u64>,
    pub output: Option<String>,
    pub image_resolution: Option<usize>,
    pub init_iterations: Option<usize>,
    pub projection_iterations: Option<usize>,
    pub reseed_iterations: Option<usize>,
    pub early_stop_window: Option<usize>,
    pub reseed: Option<bool>,
    pub normalize: Option<bool>,
    pub weights: Option<LossWeights>,
    pub learning_rates: Option<LearningRateTable>,
    /// OBJ file replacing the built-in obstacle mesh.
    pub mesh: Option<String>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| GsrError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Overlays the configured values on `h`.
    pub fn apply(&self, h: &mut Hyperparams) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { h.$f = v; })*};
        }
        set!(
            interior_samples,
            boundary_samples,
            reseed_samples,
            seed,
            init_iterations,
            projection_iterations,
            reseed_iterations,
            early_stop_window,
            reseed
        );
        if let Some(w) = self.weights {
            h.weights = w;
        }
        if let Some(r) = self.learning_rates {
            h.rates = r;
        }
    }
}

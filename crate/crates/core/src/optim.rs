//! Adam with per-group learning rates, reduce-on-plateau scheduling,
//! two-task gradient projection and early stopping.

use serde::{Deserialize, Serialize};

use crate::error::{GsrError, Result};
use crate::params::{Group, ParamGradient, ParamSet};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Learning rate per parameter group, indexed by [`Group::index`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupRates {
    pub position: f64,
    pub log_inv_scale: f64,
    pub rotation: f64,
    pub weight: f64,
}

impl GroupRates {
    pub fn get(&self, g: Group) -> f64 {
        match g {
            Group::Position => self.position,
            Group::LogInvScale => self.log_inv_scale,
            Group::Rotation => self.rotation,
            Group::Weight => self.weight,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        Group::ALL.map(|g| self.get(g))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Init,
    Projection,
    Reseed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningRateTable {
    pub init: GroupRates,
    pub projection: GroupRates,
    pub reseed: GroupRates,
}

impl LearningRateTable {
    pub fn defaults_2d() -> Self {
        Self {
            init: GroupRates {
                position: 1.6e-3,
                log_inv_scale: 0.05,
                rotation: 0.05,
                weight: 5e-3,
            },
            projection: GroupRates {
                position: 1e-4,
                log_inv_scale: 1e-4,
                rotation: 1e-4,
                weight: 1e-4,
            },
            reseed: GroupRates {
                position: 0.01,
                log_inv_scale: 0.05,
                rotation: 0.05,
                weight: 5e-3,
            },
        }
    }

    pub fn defaults_3d() -> Self {
        Self {
            init: GroupRates {
                position: 1e-3,
                log_inv_scale: 1e-3,
                rotation: 1e-3,
                weight: 1e-3,
            },
            projection: GroupRates {
                position: 3e-4,
                log_inv_scale: 1e-5,
                rotation: 3e-4,
                weight: 1e-5,
            },
            reseed: GroupRates {
                position: 1e-3,
                log_inv_scale: 1e-3,
                rotation: 1e-3,
                weight: 1e-3,
            },
        }
    }

    pub fn defaults(dim: usize) -> Self {
        if dim == 2 {
            Self::defaults_2d()
        } else {
            Self::defaults_3d()
        }
    }

    pub fn phase(&self, phase: Phase) -> GroupRates {
        match phase {
            Phase::Init => self.init,
            Phase::Projection => self.projection,
            Phase::Reseed => self.reseed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in [self.init, self.projection, self.reseed] {
            if p.as_array().iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
                return Err(GsrError::Config("learning rates must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct AdamGroup {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    base: f64,
    lr: f64,
}

/// Adam state for the four parameter groups of one field.
#[derive(Clone, Debug)]
pub struct Adam {
    groups: [AdamGroup; 4],
}

impl Adam {
    pub fn new(params: &ParamSet, rates: &GroupRates) -> Self {
        let groups = Group::ALL.map(|g| {
            let n = params.group(g).len();
            AdamGroup {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
                base: rates.get(g),
                lr: rates.get(g),
            }
        });
        Self { groups }
    }

    pub fn learning_rate(&self, g: Group) -> f64 {
        self.groups[g.index()].lr
    }

    pub fn learning_rates(&self) -> [f64; 4] {
        Group::ALL.map(|g| self.learning_rate(g))
    }

    pub fn step_count(&self, g: Group) -> u64 {
        self.groups[g.index()].t
    }

    /// Sets every group's rate to its initial rate times `factor`.
    pub fn set_rate_factor(&mut self, factor: f64) {
        for g in self.groups.iter_mut() {
            g.lr = g.base * factor;
        }
    }

    /// One bias-corrected Adam update of every group. Quaternion
    /// renormalization is left to the caller (see
    /// [`crate::gsr::GsrField::normalize_rotations`]).
    pub fn step(&mut self, params: &mut ParamSet, grad: &ParamGradient) -> Result<()> {
        if !grad.is_finite() {
            return Err(GsrError::NonFinite {
                what: "gradient".into(),
                iteration: self.groups[0].t as usize,
            });
        }
        for g in Group::ALL {
            let state = &mut self.groups[g.index()];
            state.t += 1;
            let bc1 = 1.0 - BETA1.powi(state.t as i32);
            let bc2 = 1.0 - BETA2.powi(state.t as i32);
            let p = params.group_mut(g);
            let d = grad.group(g);
            debug_assert_eq!(p.len(), state.m.len());
            for (((x, &gi), m), v) in p.iter_mut().zip(d).zip(&mut state.m).zip(&mut state.v) {
                *m = BETA1 * *m + (1.0 - BETA1) * gi;
                *v = BETA2 * *v + (1.0 - BETA2) * gi * gi;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *x -= state.lr * mh / (vh.sqrt() + EPSILON);
            }
        }
        Ok(())
    }
}

/// Reduce-on-plateau: multiplies every group's rate by `factor` once the
/// monitored loss has failed to improve for more than `patience` steps.
#[derive(Clone, Debug)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    best: f64,
    bad: usize,
    reductions: usize,
}

impl PlateauScheduler {
    pub const THRESHOLD: f64 = 1e-12;

    pub fn new(factor: f64, patience: usize) -> Self {
        Self {
            factor,
            patience,
            best: f64::INFINITY,
            bad: 0,
            reductions: 0,
        }
    }

    pub fn reductions(&self) -> usize {
        self.reductions
    }

    /// Returns true when the rates were reduced on this step.
    pub fn step(&mut self, loss: f64, adam: &mut Adam) -> bool {
        if loss < self.best - Self::THRESHOLD {
            self.best = loss;
            self.bad = 0;
            return false;
        }
        self.bad += 1;
        if self.bad > self.patience {
            self.bad = 0;
            self.reductions += 1;
            adam.set_rate_factor(self.factor.powi(self.reductions as i32));
            return true;
        }
        false
    }
}

/// Projects two conflicting task gradients onto each other's normal planes.
///
/// When `g_vor · g_div < 0`, returns `g_vor − (g_vor·t₂)t₂` and
/// `g_div − (g_div·t₁)t₁` with `t₁, t₂` the unit directions of the inputs;
/// otherwise (or when either norm is below 1e-20) the inputs are returned
/// unchanged.
pub fn pcgrad_combine(g_vor: &[f64], g_div: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(g_vor.len(), g_div.len());
    let dot: f64 = g_vor.iter().zip(g_div).map(|(a, b)| a * b).sum();
    let n1 = g_vor.iter().map(|x| x * x).sum::<f64>().sqrt();
    let n2 = g_div.iter().map(|x| x * x).sum::<f64>().sqrt();
    if dot >= 0.0 || n1 < 1e-20 || n2 < 1e-20 {
        return (g_vor.to_vec(), g_div.to_vec());
    }
    // (g_vor·t₂) t₂ = (dot / n2²) g_div, and symmetrically
    let a = dot / (n2 * n2);
    let b = dot / (n1 * n1);
    let vor = g_vor.iter().zip(g_div).map(|(x, y)| x - a * y).collect();
    let div = g_div.iter().zip(g_vor).map(|(y, x)| y - b * x).collect();
    (vor, div)
}

/// [`pcgrad_combine`] on parameter gradients, over the full flattened vector.
pub fn pcgrad_params(
    g_vor: &ParamGradient,
    g_div: &ParamGradient,
) -> (ParamGradient, ParamGradient) {
    let (a, b) = pcgrad_combine(&g_vor.flatten(), &g_div.flatten());
    let (d, n) = (g_vor.dim(), g_vor.len());
    (
        ParamSet::from_flat(d, n, &a).expect("same layout"),
        ParamSet::from_flat(d, n, &b).expect("same layout"),
    )
}

/// True when both losses changed by less than `threshold` (relative) between
/// the first and last entry of the trailing `window` iterations.
pub fn early_stop(history: &[(f64, f64)], window: usize, threshold: f64) -> bool {
    if window == 0 || history.len() < window {
        return false;
    }
    let now = history[history.len() - 1];
    let then = history[history.len() - window];
    let rel = |a: f64, b: f64| (a - b).abs() / b.max(1e-12);
    rel(now.0, then.0) < threshold && rel(now.1, then.1) < threshold
}

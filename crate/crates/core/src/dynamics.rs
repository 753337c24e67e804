//! Time integration: flow maps, vorticity transport targets, the projection
//! loop and particle splitting.

use rand_distr::{Distribution, StandardNormal};

use crate::config::Hyperparams;
use crate::error::{GsrError, Result};
use crate::field::VelocityField;
use crate::fitting::{local_refit, InitRecord};
use crate::gsr::{curl_of, GsrField};
use crate::linalg::{axpy, mat_vec, Mat3, Vec3, ZERO_MAT};
use crate::losses::{total_loss_projection, LossBreakdown, LossWeights};
use crate::optim::{early_stop, pcgrad_params, Adam, GroupRates, PlateauScheduler};
use crate::params::Group;
use crate::rng::{stream, Purpose};
use crate::scenes::Scene;

/// Order-preserving map, parallel when the `parallel` feature is on.
pub(crate) fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Forward and backward RK4 maps over one step of a frozen field.
pub struct FlowMapContext<'a, F: VelocityField + ?Sized> {
    prev: &'a F,
    dt: f64,
    fd_step: f64,
}

impl<'a, F: VelocityField + ?Sized> FlowMapContext<'a, F> {
    /// `fd_step` is `1e-4 · diagonal / √d` of the given domain diagonal.
    pub fn new(prev: &'a F, dt: f64, domain_diagonal: f64) -> Self {
        let fd_step = 1e-4 * domain_diagonal / (prev.dim() as f64).sqrt();
        Self::with_fd_step(prev, dt, fd_step)
    }

    pub fn with_fd_step(prev: &'a F, dt: f64, fd_step: f64) -> Self {
        Self { prev, dt, fd_step }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn field(&self) -> &F {
        self.prev
    }

    fn rk4(&self, x: &Vec3, h: f64) -> Vec3 {
        let f = |p: &Vec3| self.prev.velocity(p);
        let k1 = f(x);
        let k2 = f(&axpy(x, 0.5 * h, &k1));
        let k3 = f(&axpy(x, 0.5 * h, &k2));
        let k4 = f(&axpy(x, h, &k3));
        let mut out = *x;
        for k in 0..self.prev.dim() {
            out[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
        }
        out
    }

    /// Φ: one step forward.
    pub fn forward(&self, x: &Vec3) -> Vec3 {
        self.rk4(x, self.dt)
    }

    /// Ψ: one step backward.
    pub fn backward(&self, x: &Vec3) -> Vec3 {
        self.rk4(x, -self.dt)
    }

    /// `J[i][j] = ∂Φ_i/∂x_j` by central differences.
    pub fn jacobian_forward(&self, x: &Vec3) -> Mat3 {
        let h = self.fd_step;
        let mut j = ZERO_MAT;
        let dim = self.prev.dim();
        for c in 0..dim {
            let (mut xp, mut xm) = (*x, *x);
            xp[c] += h;
            xm[c] -= h;
            let (fp, fm) = (self.forward(&xp), self.forward(&xm));
            for r in 0..dim {
                j[r][c] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        j
    }

    /// Transported vorticity at `x`: the previous curl at `Ψ(x)`, stretched
    /// by `dΦ(Ψ(x))` in 3D.
    pub fn vorticity_at(&self, x: &Vec3) -> Vec3 {
        let dim = self.prev.dim();
        let back = self.backward(x);
        let w = curl_of(&self.prev.jacobian(&back), dim);
        if dim == 2 {
            w
        } else {
            mat_vec(&self.jacobian_forward(&back), &w)
        }
    }

    pub fn vorticity_target(&self, points: &[Vec3]) -> Vec<Vec3>
    where
        F: Sync,
    {
        par_map(points, |x| self.vorticity_at(x))
    }
}

/// Moves every particle center along Φ, leaves all other parameters as they
/// are, rebuilds the hash and returns the new centers as anchors.
pub fn advect_positions<F: VelocityField + ?Sized + Sync>(
    field: &mut GsrField,
    ctx: &FlowMapContext<'_, F>,
) -> Vec<f64> {
    let dim = field.dim();
    let centers: Vec<Vec3> = (0..field.len())
        .map(|i| {
            let mut x = [0.0; 3];
            x[..dim].copy_from_slice(field.params().entry(Group::Position, i));
            x
        })
        .collect();
    let moved = par_map(&centers, |x| ctx.forward(x));
    for (i, m) in moved.iter().enumerate() {
        field.params_mut().entry_mut(Group::Position, i).copy_from_slice(&m[..dim]);
    }
    field.rebuild_hash();
    field.params().group(Group::Position).to_vec()
}

#[derive(Clone, Debug)]
pub struct ReseedReport {
    pub field: GsrField,
    /// Indices of all children in `field`.
    pub children: Vec<usize>,
    pub splits: usize,
    pub refit: Vec<InitRecord>,
}

/// Splits every particle with `max(s) ≥ r_aniso · min(s)` once. The first
/// child replaces its parent, the second is appended; both draw centers from
/// `N(μ, Σ)` and halve the scale of the largest axis (lowest index on ties).
/// Then children and their neighbors are refit to the unsplit field.
pub fn reseed(field: &GsrField, hyper: &Hyperparams, frame: u64) -> Result<ReseedReport> {
    let dim = field.dim();
    let split: Vec<usize> = (0..field.len())
        .filter(|&i| field.particle(i).anisotropy(dim) >= hyper.r_aniso)
        .collect();
    if split.is_empty() {
        return Ok(ReseedReport {
            field: field.clone(),
            children: Vec::new(),
            splits: 0,
            refit: Vec::new(),
        });
    }
    let mut rng = stream(hyper.seed, Purpose::ReseedSplit, frame, 0);
    let mut out = field.clone();
    let mut children = Vec::with_capacity(2 * split.len());
    for &i in &split {
        let parent = field.particle(i);
        let s = parent.scales(dim);
        let rot = parent.rotation_matrix(dim);
        let axis = (0..dim).fold(0, |m, k| if s[k] > s[m] { k } else { m });
        for c in 0..2 {
            let mut xi = [0.0; 3];
            for k in 0..dim {
                let z: f64 = StandardNormal.sample(&mut rng);
                xi[k] = s[k] * z;
            }
            let off = mat_vec(&rot, &xi);
            let mut child = parent;
            for k in 0..dim {
                child.position[k] += off[k];
            }
            child.log_inv_scale[axis] += std::f64::consts::LN_2;
            if c == 0 {
                out.set_particle(i, &child);
                children.push(i);
            } else {
                out.push(&child)?;
                children.push(out.len() - 1);
            }
        }
    }
    out.rebuild_hash();
    let refit = local_refit(&mut out, &children, field, hyper, frame)?;
    Ok(ReseedReport {
        field: out,
        children,
        splits: split.len(),
        refit,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub loss: LossBreakdown,
    pub lrs: [f64; 4],
}

#[derive(Clone, Debug)]
pub struct ProjectionReport {
    pub history: Vec<IterationRecord>,
    pub early_stopped: bool,
}

/// Settings of one projection optimization.
#[derive(Clone, Copy, Debug)]
pub struct ProjectionSetup<'a> {
    pub scene: &'a Scene,
    /// Simulation time of the new frame.
    pub time: f64,
    pub frame: u64,
    pub weights: &'a LossWeights,
    pub rates: &'a GroupRates,
    pub hyper: &'a Hyperparams,
}

/// Minimizes the weighted projection loss with gradient surgery between the
/// vorticity and divergence terms.
pub fn project<F: VelocityField + ?Sized + Sync>(
    field: &mut GsrField,
    ctx: &FlowMapContext<'_, F>,
    anchors: &[f64],
    setup: &ProjectionSetup<'_>,
) -> Result<ProjectionReport> {
    let hyper = setup.hyper;
    let w = setup.weights;
    let mut adam = Adam::new(field.params(), setup.rates);
    let mut sched = PlateauScheduler::new(hyper.scheduler_factor, hyper.scheduler_patience);
    let mut history = Vec::new();
    let mut pairs = Vec::new();
    for iter in 0..hyper.projection_iterations {
        let mut rng = stream(hyper.seed, Purpose::ProjectionSamples, setup.frame, iter as u64);
        let batch = setup.scene.sample_batch(setup.time, hyper, &mut rng);
        let omega = ctx.vorticity_target(&batch.interior);
        let diverged = |what: &str, field: &GsrField| GsrError::Diverged {
            frame: setup.frame,
            iteration: iter,
            what: what.to_string(),
            field: Box::new(field.clone()),
        };
        let pl = total_loss_projection(field, &batch, &omega, anchors, w, hyper.r_aniso)?;
        if !pl.breakdown.total.is_finite() {
            return Err(diverged("projection loss", field));
        }
        let (gv, gd) = pcgrad_params(&pl.grad_vor, &pl.grad_div);
        let mut grad = pl.rest;
        grad.add_scaled(w.vor, &gv);
        grad.add_scaled(w.div, &gd);
        if !grad.is_finite() {
            return Err(diverged("gradient", field));
        }
        history.push(IterationRecord {
            iter,
            loss: pl.breakdown,
            lrs: adam.learning_rates(),
        });
        pairs.push((pl.breakdown.vor, pl.breakdown.div));
        adam.step(field.params_mut(), &grad)?;
        field.normalize_rotations();
        field.rebuild_hash();
        sched.step(pl.breakdown.total, &mut adam);
        if early_stop(&pairs, hyper.early_stop_window, hyper.early_stop_threshold) {
            return Ok(ProjectionReport {
                history,
                early_stopped: true,
            });
        }
    }
    Ok(ProjectionReport {
        history,
        early_stopped: false,
    })
}

#[derive(Clone, Debug)]
pub struct FrameReport {
    pub field: GsrField,
    pub projection: ProjectionReport,
    pub splits: usize,
    pub refit: Vec<InitRecord>,
    /// Largest `max(s)/min(s)` right after the reseed pass.
    pub reseed_max_anisotropy: f64,
}

/// Advances `prev` (frame `frame − 1`) to frame `frame`: reseed, advect the
/// centers along the previous field, then project.
pub fn step_frame(prev: &GsrField, scene: &Scene, hyper: &Hyperparams, frame: u64) -> Result<FrameReport> {
    let (mut field, splits, refit) = if hyper.reseed {
        let r = reseed(prev, hyper, frame)?;
        (r.field, r.splits, r.refit)
    } else {
        (prev.clone(), 0, Vec::new())
    };
    let reseed_max_anisotropy = max_anisotropy(&field);
    let ctx = FlowMapContext::new(prev, scene.dt, scene.domain.diagonal());
    let anchors = advect_positions(&mut field, &ctx);
    let setup = ProjectionSetup {
        scene,
        time: frame as f64 * scene.dt,
        frame,
        weights: &hyper.weights,
        rates: &hyper.rates.projection,
        hyper,
    };
    let projection = project(&mut field, &ctx, &anchors, &setup)?;
    Ok(FrameReport {
        field,
        projection,
        splits,
        refit,
        reseed_max_anisotropy,
    })
}

/// Largest anisotropy ratio over all particles; 1 for an empty field.
pub fn max_anisotropy(field: &GsrField) -> f64 {
    (0..field.len())
        .map(|i| field.particle(i).anisotropy(field.dim()))
        .fold(1.0, f64::max)
}

/// Mean `|∇·ṽ|` over `points`.
pub fn mean_abs_divergence(field: &GsrField, points: &[Vec3]) -> f64 {
    let v = par_map(points, |x| field.divergence(x).abs());
    v.iter().sum::<f64>() / points.len().max(1) as f64
}


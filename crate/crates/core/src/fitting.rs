//! Particle layout and fitting of the field to analytic targets.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::Hyperparams;
use crate::error::{GsrError, Result};
use crate::field::VelocityField;
use crate::geometry::{Aabb, Geometry};
use crate::gsr::{GaussianParticle, GsrField};
use crate::linalg::{mat_vec, Vec3};
use crate::losses::{total_loss_init, InitBreakdown};
use crate::optim::{Adam, GroupRates, PlateauScheduler};
use crate::rng::{stream, Purpose};

/// Grid spacing and per-axis node counts for `n` nodes on the shortest side.
/// Nodes include the domain boundary on the shortest axis and are centered on
/// the others.
fn grid_for(domain: &Aabb, n: usize) -> (f64, [usize; 3]) {
    let a = domain.shortest_side() / (n - 1) as f64;
    let mut counts = [1; 3];
    for k in 0..domain.dim {
        counts[k] = (domain.extent(k) / a + 1e-9).floor() as usize + 1;
    }
    (a, counts)
}

/// Uniform grid whose node count is closest to `target`, with every kernel's
/// support radius equal to the spacing.
pub fn init_layout(domain: &Aabb, target: usize, clamp: f64) -> Result<GsrField> {
    if target == 0 {
        return Err(GsrError::Config("particle target must be positive".into()));
    }
    let dim = domain.dim;
    let total = |c: &[usize; 3]| c[..dim].iter().product::<usize>();
    let mut best = grid_for(domain, 2);
    for n in 3..100_000 {
        let cand = grid_for(domain, n);
        let (t_best, t_cand) = (total(&best.1), total(&cand.1));
        if t_cand.abs_diff(target) < t_best.abs_diff(target) {
            best = cand;
        }
        if t_cand > target {
            break;
        }
    }
    let (a, counts) = best;
    let s = a / (-2.0 * clamp.ln()).sqrt();
    let offset: Vec<f64> = (0..dim)
        .map(|k| domain.min[k] + 0.5 * (domain.extent(k) - (counts[k] - 1) as f64 * a))
        .collect();
    let mut particles = Vec::with_capacity(total(&counts));
    let mut idx = [0usize; 3];
    loop {
        let mut p = GaussianParticle {
            position: [0.0; 3],
            log_inv_scale: [0.0; 3],
            rotation: if dim == 2 { [0.0; 4] } else { [1.0, 0.0, 0.0, 0.0] },
            weight: [0.0; 3],
        };
        for k in 0..dim {
            p.position[k] = offset[k] + idx[k] as f64 * a;
            p.log_inv_scale[k] = -s.ln();
        }
        particles.push(p);
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == dim {
                return GsrField::from_particles(dim, clamp, &particles);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitRecord {
    pub iter: usize,
    pub loss: InitBreakdown,
    pub lrs: [f64; 4],
}

/// Adam on `L_init` against `target` with the given rates, drawing fresh
/// points per iteration from `draw(current field, iteration)`. Gradients of particles with
/// `trainable[i] == false` are zeroed.
#[allow(clippy::too_many_arguments)]
pub fn fit(
    field: &mut GsrField,
    target: &dyn VelocityField,
    rates: &GroupRates,
    iterations: usize,
    hyper: &Hyperparams,
    trainable: Option<&[bool]>,
    mut draw: impl FnMut(&GsrField, usize) -> Vec<Vec3>,
) -> Result<Vec<InitRecord>> {
    let mut adam = Adam::new(field.params(), rates);
    let mut sched = PlateauScheduler::new(hyper.scheduler_factor, hyper.scheduler_patience);
    let mut history = Vec::with_capacity(iterations);
    for iter in 0..iterations {
        let pts = draw(field, iter);
        let (loss, mut grad) = total_loss_init(field, target, &pts, hyper.r_aniso)?;
        if !loss.total.is_finite() {
            return Err(GsrError::NonFinite {
                what: "initialization loss".into(),
                iteration: iter,
            });
        }
        if let Some(mask) = trainable {
            grad.mask_particles(mask);
        }
        history.push(InitRecord {
            iter,
            loss,
            lrs: adam.learning_rates(),
        });
        adam.step(field.params_mut(), &grad)?;
        field.normalize_rotations();
        field.rebuild_hash();
        sched.step(loss.total, &mut adam);
    }
    Ok(history)
}

/// Picks one of `candidates` uniformly and draws a point from its Gaussian
/// `N(μ, Σ)`. Draws failing `accept` are repeated.
pub fn sample_from_kernels<R: Rng + ?Sized>(
    field: &GsrField,
    candidates: &[usize],
    n: usize,
    rng: &mut R,
    accept: impl Fn(&Vec3) -> bool,
) -> Vec<Vec3> {
    let dim = field.dim();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = field.particle(candidates[rng.gen_range(0..candidates.len())]);
        let s = p.scales(dim);
        let mut xi = [0.0; 3];
        for k in 0..dim {
            let z: f64 = StandardNormal.sample(rng);
            xi[k] = s[k] * z;
        }
        let off = mat_vec(&p.rotation_matrix(dim), &xi);
        let mut x = [0.0; 3];
        for k in 0..dim {
            x[k] = p.position[k] + off[k];
        }
        if accept(&x) {
            out.push(x);
        }
    }
    out
}

/// Frame-0 fit: init learning rates, samples drawn from the kernels of the
/// current field and kept inside `domain` and outside `obstacles`.
pub fn fit_initial(
    field: &mut GsrField,
    target: &dyn VelocityField,
    domain: &Aabb,
    obstacles: &[&Geometry],
    hyper: &Hyperparams,
) -> Result<Vec<InitRecord>> {
    let all: Vec<usize> = (0..field.len()).collect();
    let accept = |x: &Vec3| domain.contains(x) && !obstacles.iter().any(|g| g.blocks(domain.dim, x));
    fit(
        field,
        target,
        &hyper.rates.init,
        hyper.init_iterations,
        hyper,
        None,
        |f, iter| {
            let mut rng = stream(hyper.seed, Purpose::InitSamples, 0, iter as u64);
            sample_from_kernels(f, &all, hyper.interior_samples, &mut rng, accept)
        },
    )
}

/// Particles whose support ball overlaps the ball of any particle in `seeds`.
pub fn overlapping(field: &GsrField, seeds: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; field.len()];
    let dim = field.dim();
    let radii: Vec<f64> = (0..field.len()).map(|i| field.support_radius(i)).collect();
    let pos = |i: usize| field.params().entry(crate::params::Group::Position, i).to_vec();
    for &c in seeds {
        mask[c] = true;
        let pc = pos(c);
        for j in 0..field.len() {
            if mask[j] {
                continue;
            }
            let pj = pos(j);
            let d2: f64 = (0..dim).map(|k| (pc[k] - pj[k]).powi(2)).sum();
            if d2 < (radii[c] + radii[j]).powi(2) {
                mask[j] = true;
            }
        }
    }
    mask
}

/// Refits `children` and the particles overlapping them to `frozen`, a copy of
/// the field before the split. Every other particle is left bit-unchanged.
pub fn local_refit(
    field: &mut GsrField,
    children: &[usize],
    frozen: &GsrField,
    hyper: &Hyperparams,
    frame: u64,
) -> Result<Vec<InitRecord>> {
    if children.is_empty() {
        return Ok(Vec::new());
    }
    let mask = overlapping(field, children);
    fit(
        field,
        frozen,
        &hyper.rates.reseed,
        hyper.reseed_iterations,
        hyper,
        Some(&mask),
        |f, iter| {
            let mut rng = stream(hyper.seed, Purpose::ReseedSamples, frame, iter as u64);
            sample_from_kernels(f, children, hyper.reseed_samples, &mut rng, |_| true)
        },
    )
}

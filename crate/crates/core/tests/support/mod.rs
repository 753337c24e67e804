//! Finite-difference oracles for the loss gradients, shared by the test
//! targets.
#![allow(dead_code)]

use gsr_fluid::field::VelocityField;
use gsr_fluid::gsr::{GaussianParticle, GsrField, DEFAULT_CLAMP};
use gsr_fluid::linalg::{Mat3, Vec3};
use gsr_fluid::losses::{self, WallSample};
use gsr_fluid::params::{Group, ParamGradient, ParamSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-6;
pub const REL: f64 = 1e-3;
pub const ABS: f64 = 1e-8;

pub struct Swirl;

impl VelocityField for Swirl {
    fn dim(&self) -> usize {
        2
    }
    fn velocity(&self, x: &Vec3) -> Vec3 {
        [x[1].sin() + 0.3, -x[0] * 0.7, 0.0]
    }
    fn jacobian(&self, x: &Vec3) -> Mat3 {
        [[0.0, -0.7, 0.0], [x[1].cos(), 0.0, 0.0], [0.0; 3]]
    }
}

pub struct Swirl3;

impl VelocityField for Swirl3 {
    fn dim(&self) -> usize {
        3
    }
    fn velocity(&self, x: &Vec3) -> Vec3 {
        [x[1] * 0.4, x[2].sin(), -x[0] + 0.2]
    }
    fn jacobian(&self, x: &Vec3) -> Mat3 {
        [[0.0, 0.0, -1.0], [0.4, 0.0, 0.0], [0.0, x[2].cos(), 0.0]]
    }
}

pub fn random_field(rng: &mut ChaCha8Rng, dim: usize, n: usize) -> GsrField {
    let ps: Vec<GaussianParticle> = (0..n)
        .map(|_| {
            let mut p = GaussianParticle {
                position: [0.0; 3],
                log_inv_scale: [0.0; 3],
                rotation: [0.0; 4],
                weight: [0.0; 3],
            };
            for k in 0..dim {
                p.position[k] = rng.gen_range(-0.6..0.6);
                p.log_inv_scale[k] = rng.gen_range(-0.2..0.6);
                p.weight[k] = rng.gen_range(-1.0..1.0);
            }
            if dim == 2 {
                p.rotation[0] = rng.gen_range(-3.0..3.0);
            } else {
                let q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
                let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
                p.rotation = q.map(|c| c / n);
            }
            p
        })
        .collect();
    GsrField::from_particles(dim, DEFAULT_CLAMP, &ps).unwrap()
}

pub fn with_params(field: &GsrField, flat: &[f64]) -> GsrField {
    let p = ParamSet::from_flat(field.dim(), field.len(), flat).unwrap();
    GsrField::from_params(field.clamp(), p).unwrap()
}

/// Points away from every clamp boundary.
pub fn safe_point(f: &GsrField, x: &Vec3) -> bool {
    (0..f.len()).all(|i| (f.gaussian(i, x) - f.clamp()).abs() > 1e-3)
}

pub fn random_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec3 {
    let mut x = [0.0; 3];
    for k in 0..dim {
        x[k] = rng.gen_range(-1.0..1.0);
    }
    x
}

/// Compares an analytic gradient with central differences; returns the max
/// relative error seen.
pub fn check(
    name: &str,
    field: &GsrField,
    analytic: &ParamGradient,
    loss: impl Fn(&GsrField) -> f64,
) -> Result<f64, String> {
    let base = field.params().flatten();
    let a = analytic.flatten();
    let mut worst: f64 = 0.0;
    for j in 0..base.len() {
        let mut p = base.clone();
        p[j] += STEP;
        let lp = loss(&with_params(field, &p));
        p[j] = base[j] - STEP;
        let lm = loss(&with_params(field, &p));
        let fd = (lp - lm) / (2.0 * STEP);
        let err = (a[j] - fd).abs();
        let tol = REL * a[j].abs().max(fd.abs()) + ABS;
        if !(err <= tol) {
            return Err(format!("{name}: entry {j}: analytic {} vs fd {fd} (err {err:e})", a[j]));
        }
        if fd.abs() > 1e-6 {
            worst = worst.max(err / fd.abs());
        }
    }
    Ok(worst)
}

pub fn batch_points(
    rng: &mut ChaCha8Rng,
    f: &GsrField,
    q: usize,
    keep: impl Fn(&Vec3) -> bool,
) -> Vec<Vec3> {
    let mut pts = Vec::new();
    let mut tries = 0;
    while pts.len() < q && tries < 100 * q {
        tries += 1;
        let x = random_point(rng, f.dim());
        if safe_point(f, &x) && keep(&x) {
            pts.push(x);
        }
    }
    pts
}

/// Value and gradient matching losses.
pub fn value_and_grad_losses(trials: usize) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..trials {
        let dim = 2 + trial % 2;
        let f = random_field(&mut rng, dim, 6);
        let target: &dyn VelocityField = if dim == 2 { &Swirl } else { &Swirl3 };
        let pts = batch_points(&mut rng, &f, 24, |x| {
            let v = f.evaluate(x);
            let t = target.velocity(x);
            let g = f.gradient(x);
            let tg = target.jacobian(x);
            (0..dim).all(|k| (v[k] - t[k]).abs() > 1e-4)
                && (0..dim).all(|k| (0..dim).all(|l| (g[k][l] - tg[k][l]).abs() > 1e-4))
        });
        let (_, g) = losses::loss_value(&f, target, &pts).unwrap();
        worst = worst.max(check("value", &f, &g, |h| losses::loss_value(h, target, &pts).unwrap().0)?);
        let (_, g) = losses::loss_grad(&f, target, &pts).unwrap();
        worst = worst.max(check("grad", &f, &g, |h| losses::loss_grad(h, target, &pts).unwrap().0)?);
    }
    Ok(worst)
}

pub fn vorticity_and_divergence_losses(trials: usize) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..trials {
        let dim = 2 + trial % 2;
        let f = random_field(&mut rng, dim, 8);
        let omega_of = |x: &Vec3| [0.3 * x[0], -0.2, 0.1 * x[1]];
        let pts = batch_points(&mut rng, &f, 24, |x| {
            let c = f.curl(x);
            let w = omega_of(x);
            let m = if dim == 2 { 1 } else { 3 };
            (0..m).all(|k| (c[k] - w[k]).abs() > 1e-4)
        });
        let omega: Vec<Vec3> = pts.iter().map(omega_of).collect();
        let (_, g) = losses::loss_vorticity(&f, &pts, &omega).unwrap();
        worst = worst.max(check("vorticity", &f, &g, |h| {
            losses::loss_vorticity(h, &pts, &omega).unwrap().0
        })?);
        let (_, g) = losses::loss_divergence(&f, &pts).unwrap();
        worst = worst.max(check("divergence", &f, &g, |h| losses::loss_divergence(h, &pts).unwrap().0)?);

        let ((lv, gv), (ld, gd)) = losses::loss_vorticity_divergence(&f, &pts, &omega).unwrap();
        let (lv2, gv2) = losses::loss_vorticity(&f, &pts, &omega).unwrap();
        let (ld2, gd2) = losses::loss_divergence(&f, &pts).unwrap();
        if (lv, ld) != (lv2, ld2) || gv != gv2 || gd != gd2 {
            return Err("fused vorticity/divergence differs from the separate losses".into());
        }
    }
    Ok(worst)
}

pub fn boundary_losses(trials: usize) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..trials {
        let dim = 2 + trial % 2;
        let f = random_field(&mut rng, dim, 6);
        let walls: Vec<WallSample> = batch_points(&mut rng, &f, 16, |_| true)
            .into_iter()
            .map(|x| {
                let mut n = random_point(&mut rng, dim);
                let len = n.iter().map(|c| c * c).sum::<f64>().sqrt();
                n.iter_mut().for_each(|c| *c /= len);
                WallSample {
                    point: x,
                    normal: n,
                    velocity: [0.1, -0.2, 0.05],
                    flux: 0.15,
                }
            })
            .filter(|w| {
                let v = f.evaluate(&w.point);
                let dot: f64 = (0..3).map(|k| v[k] * w.normal[k]).sum();
                (0..dim).all(|k| (v[k] - w.velocity[k]).abs() > 1e-4) && (dot - w.flux).abs() > 1e-4
            })
            .collect();
        let (_, g) = losses::loss_boundary1(&f, &walls).unwrap();
        worst = worst.max(check("b1", &f, &g, |h| losses::loss_boundary1(h, &walls).unwrap().0)?);
        let (_, g) = losses::loss_boundary2(&f, &walls).unwrap();
        worst = worst.max(check("b2", &f, &g, |h| losses::loss_boundary2(h, &walls).unwrap().0)?);
    }
    Ok(worst)
}

pub fn regularizer_losses(trials: usize) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut done = 0;
    while done < trials {
        let dim = 2 + done % 2;
        let f = random_field(&mut rng, dim, 7);
        // keep anisotropy ratios away from the hinge
        let ok = (0..f.len()).all(|i| (f.particle(i).anisotropy(dim) - 1.5).abs() > 1e-3);
        if !ok {
            continue;
        }
        let (_, g) = losses::loss_aniso(&f, 1.5);
        worst = worst.max(check("aniso", &f, &g, |h| losses::loss_aniso(h, 1.5).0)?);
        let (_, g) = losses::loss_vol(&f);
        worst = worst.max(check("vol", &f, &g, |h| losses::loss_vol(h).0)?);
        let anchors: Vec<f64> = f
            .params()
            .group(Group::Position)
            .iter()
            .map(|x| x + rng.gen_range(-0.1..0.1))
            .collect();
        let (_, g) = losses::loss_position(&f, &anchors);
        worst = worst.max(check("pos", &f, &g, |h| losses::loss_position(h, &anchors).0)?);
        done += 1;
    }
    Ok(worst)
}


//! Monte-Carlo loss terms and their exact parameter gradients.
//!
//! Sample-based losses are accumulated in fixed chunks of [`CHUNK`] samples
//! and the per-chunk partials are summed in chunk order, so results are
//! bit-identical regardless of the number of worker threads.

use serde::{Deserialize, Serialize};

use crate::error::{GsrError, Result};
use crate::field::VelocityField;
use crate::gsr::{curl_of, curl_width, GsrField};
use crate::linalg::{Mat3, Vec3, ZERO3, ZERO_MAT};
use crate::params::{Group, ParamGradient};

pub const CHUNK: usize = 1024;

/// A point on a boundary piece with its condition already evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WallSample {
    pub point: Vec3,
    /// Unit normal pointing into the fluid.
    pub normal: Vec3,
    /// Prescribed velocity (type-1 condition).
    pub velocity: Vec3,
    /// Prescribed normal flux `u·n` (type-2 condition).
    pub flux: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleBatch {
    pub interior: Vec<Vec3>,
    pub boundary1: Vec<WallSample>,
    pub boundary2: Vec<WallSample>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub vor: f64,
    pub div: f64,
    pub b1: f64,
    pub b2: f64,
    pub aniso: f64,
    pub vol: f64,
    pub pos: f64,
}

impl LossWeights {
    pub fn defaults_2d() -> Self {
        Self {
            vor: 1.0,
            div: 1.0,
            b1: 1.0,
            b2: 1.0,
            aniso: 10.0,
            vol: 10.0,
            pos: 0.5,
        }
    }

    pub fn defaults_3d() -> Self {
        Self {
            vor: 1.0,
            div: 1.0,
            b1: 10.0,
            b2: 10.0,
            aniso: 10.0,
            vol: 10.0,
            pos: 0.0,
        }
    }

    pub fn defaults(dim: usize) -> Self {
        if dim == 2 {
            Self::defaults_2d()
        } else {
            Self::defaults_3d()
        }
    }
}

/// Unweighted projection loss terms plus the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub vor: f64,
    pub div: f64,
    pub b1: f64,
    pub b2: f64,
    pub aniso: f64,
    pub vol: f64,
    pub pos: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct InitBreakdown {
    pub val: f64,
    pub grad: f64,
    pub aniso: f64,
    pub vol: f64,
    pub total: f64,
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Runs `f` over `items` in fixed chunks and reduces in chunk order.
fn accumulate<T, F>(field: &GsrField, items: &[T], f: F) -> (f64, ParamGradient)
where
    T: Sync,
    F: Fn(&T, &mut ParamGradient) -> f64 + Sync,
{
    let run = |chunk: &[T]| {
        let mut g = ParamGradient::zeros(field.dim(), field.len());
        let mut s = 0.0;
        for item in chunk {
            s += f(item, &mut g);
        }
        (s, g)
    };
    #[cfg(feature = "parallel")]
    let partials: Vec<(f64, ParamGradient)> = {
        use rayon::prelude::*;
        items.par_chunks(CHUNK).map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<(f64, ParamGradient)> = items.chunks(CHUNK).map(run).collect();

    let mut iter = partials.into_iter();
    match iter.next() {
        None => (0.0, ParamGradient::zeros(field.dim(), field.len())),
        Some((mut total, mut grad)) => {
            for (s, g) in iter {
                total += s;
                grad.add_scaled(1.0, &g);
            }
            (total, grad)
        }
    }
}

/// `(1/(Qd)) Σ ‖v(x_j) − ṽ(x_j)‖₁`
pub fn loss_value(
    field: &GsrField,
    target: &dyn VelocityField,
    points: &[Vec3],
) -> Result<(f64, ParamGradient)> {
    if points.is_empty() {
        return Err(GsrError::EmptyBatch);
    }
    let dim = field.dim();
    let norm = 1.0 / (points.len() * dim) as f64;
    let (s, g) = accumulate(field, points, |x, out| {
        let v = field.evaluate(x);
        let t = target.velocity(x);
        let mut adj = ZERO3;
        let mut l = 0.0;
        for k in 0..dim {
            let d = v[k] - t[k];
            l += d.abs();
            adj[k] = sign(d) * norm;
        }
        field.backprop(x, &adj, None, out);
        l
    });
    Ok((s * norm, g))
}

/// `(1/(Qd²)) Σ ‖∇v(x_j) − ∇ṽ(x_j)‖_sum`
pub fn loss_grad(
    field: &GsrField,
    target: &dyn VelocityField,
    points: &[Vec3],
) -> Result<(f64, ParamGradient)> {
    if points.is_empty() {
        return Err(GsrError::EmptyBatch);
    }
    let dim = field.dim();
    let norm = 1.0 / (points.len() * dim * dim) as f64;
    let (s, g) = accumulate(field, points, |x, out| {
        let gv = field.gradient(x);
        let tv = target.jacobian(x);
        let mut adj = ZERO_MAT;
        let mut l = 0.0;
        for k in 0..dim {
            for m in 0..dim {
                let d = gv[k][m] - tv[k][m];
                l += d.abs();
                adj[k][m] = sign(d) * norm;
            }
        }
        field.backprop(x, &ZERO3, Some(&adj), out);
        l
    });
    Ok((s * norm, g))
}

/// L1 vorticity residual at one point; returns the unnormalized loss and
/// accumulates `norm`-scaled adjoints into `adj`.
#[inline]
fn vorticity_residual(grad: &Mat3, omega: &Vec3, dim: usize, norm: f64, adj: &mut Mat3) -> f64 {
    let c = curl_of(grad, dim);
    let mut l = 0.0;
    // (row, col) of the positive and negative gradient entry of each curl component
    const IDX_3D: [((usize, usize), (usize, usize)); 3] =
        [((1, 2), (2, 1)), ((2, 0), (0, 2)), ((0, 1), (1, 0))];
    for m in 0..curl_width(dim) {
        let d = c[m] - omega[m];
        l += d.abs();
        let s = sign(d) * norm;
        let ((pa, pb), (na, nb)) = if dim == 2 { IDX_3D[2] } else { IDX_3D[m] };
        adj[pa][pb] += s;
        adj[na][nb] -= s;
    }
    l
}

/// `(1/(Q d̂)) Σ ‖∇×ṽ(x_j) − ω(x_j)‖₁`
pub fn loss_vorticity(
    field: &GsrField,
    points: &[Vec3],
    omega: &[Vec3],
) -> Result<(f64, ParamGradient)> {
    if points.is_empty() {
        return Err(GsrError::EmptyBatch);
    }
    assert_eq!(points.len(), omega.len());
    let dim = field.dim();
    let norm = 1.0 / (points.len() * curl_width(dim)) as f64;
    let pairs: Vec<(Vec3, Vec3)> = points.iter().copied().zip(omega.iter().copied()).collect();
    let (s, g) = accumulate(field, &pairs, |(x, w), out| {
        let grad = field.gradient(x);
        let mut adj = ZERO_MAT;
        let l = vorticity_residual(&grad, w, dim, norm, &mut adj);
        field.backprop(x, &ZERO3, Some(&adj), out);
        l
    });
    Ok((s * norm, g))
}

/// `(1/Q) Σ |∇·ṽ(x_j)|²`
pub fn loss_divergence(field: &GsrField, points: &[Vec3]) -> Result<(f64, ParamGradient)> {
    if points.is_empty() {
        return Err(GsrError::EmptyBatch);
    }
    let dim = field.dim();
    let norm = 1.0 / points.len() as f64;
    let (s, g) = accumulate(field, points, |x, out| {
        let grad = field.gradient(x);
        let div = crate::linalg::trace(&grad);
        let mut adj = ZERO_MAT;
        for k in 0..dim {
            adj[k][k] = 2.0 * div * norm;
        }
        field.backprop(x, &ZERO3, Some(&adj), out);
        div * div
    });
    Ok((s * norm, g))
}

/// Vorticity and divergence losses from a single forward pass per sample.
/// Returns `((L_vor, ∇L_vor), (L_div, ∇L_div))`, each identical to the
/// standalone functions.
pub fn loss_vorticity_divergence(
    field: &GsrField,
    points: &[Vec3],
    omega: &[Vec3],
) -> Result<((f64, ParamGradient), (f64, ParamGradient))> {
    if points.is_empty() {
        return Err(GsrError::EmptyBatch);
    }
    assert_eq!(points.len(), omega.len());
    let dim = field.dim();
    let n = field.len();
    let vor_norm = 1.0 / (points.len() * curl_width(dim)) as f64;
    let div_norm = 1.0 / points.len() as f64;

    let run = |chunk: &[(Vec3, Vec3)]| {
        let mut gv = ParamGradient::zeros(dim, n);
        let mut gd = ParamGradient::zeros(dim, n);
        let (mut sv, mut sd) = (0.0, 0.0);
        for (x, w) in chunk {
            let grad = field.gradient(x);
            let mut adj = ZERO_MAT;
            sv += vorticity_residual(&grad, w, dim, vor_norm, &mut adj);
            field.backprop(x, &ZERO3, Some(&adj), &mut gv);
            let div = crate::linalg::trace(&grad);
            let mut adj = ZERO_MAT;
            for k in 0..dim {
                adj[k][k] = 2.0 * div * div_norm;
            }
            field.backprop(x, &ZERO3, Some(&adj), &mut gd);
            sd += div * div;
        }
        (sv, gv, sd, gd)
    };
    let pairs: Vec<(Vec3, Vec3)> = points.iter().copied().zip(omega.iter().copied()).collect();
    #[cfg(feature = "parallel")]
    let partials: Vec<_> = {
        use rayon::prelude::*;
        pairs.par_chunks(CHUNK).map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<_> = pairs.chunks(CHUNK).map(run).collect();

    let mut iter = partials.into_iter();
    let (mut sv, mut gv, mut sd, mut gd) = iter.next().expect("non-empty batch");
    for (a, b, c, d) in iter {
        sv += a;
        gv.add_scaled(1.0, &b);
        sd += c;
        gd.add_scaled(1.0, &d);
    }
    Ok(((sv * vor_norm, gv), (sd * div_norm, gd)))
}

/// `(1/(Q_b1 d)) Σ ‖ṽ(y_j) − u_b(y_j)‖₁`
pub fn loss_boundary1(field: &GsrField, samples: &[WallSample]) -> Result<(f64, ParamGradient)> {
    if samples.is_empty() {
        return Err(GsrError::EmptyBatch);
    }
    let dim = field.dim();
    let norm = 1.0 / (samples.len() * dim) as f64;
    let (s, g) = accumulate(field, samples, |w, out| {
        let v = field.evaluate(&w.point);
        let mut adj = ZERO3;
        let mut l = 0.0;
        for k in 0..dim {
            let d = v[k] - w.velocity[k];
            l += d.abs();
            adj[k] = sign(d) * norm;
        }
        field.backprop(&w.point, &adj, None, out);
        l
    });
    Ok((s * norm, g))
}

/// `(1/Q_b2) Σ |ṽ(z_j)·n_j − f(z_j)|`
pub fn loss_boundary2(field: &GsrField, samples: &[WallSample]) -> Result<(f64, ParamGradient)> {
    if samples.is_empty() {
        return Err(GsrError::EmptyBatch);
    }
    let norm = 1.0 / samples.len() as f64;
    let (s, g) = accumulate(field, samples, |w, out| {
        let v = field.evaluate(&w.point);
        let d = crate::linalg::dot(&v, &w.normal) - w.flux;
        let adj = crate::linalg::scale(&w.normal, sign(d) * norm);
        field.backprop(&w.point, &adj, None, out);
        d.abs()
    });
    Ok((s * norm, g))
}

/// `(1/N) Σ max(max(s_i)/min(s_i) − r_aniso, 0)`, gradient on log inverse
/// scales only. Ties in the arg-max/arg-min pick the lowest axis.
pub fn loss_aniso(field: &GsrField, r_aniso: f64) -> (f64, ParamGradient) {
    let dim = field.dim();
    let n = field.len();
    let mut g = ParamGradient::zeros(dim, n);
    if n == 0 {
        return (0.0, g);
    }
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    let scales = field.params().group(Group::LogInvScale);
    for i in 0..n {
        let l = &scales[i * dim..(i + 1) * dim];
        // max(s) is at min(ℓ) and min(s) at max(ℓ)
        let (mut lo, mut hi) = (0, 0);
        for k in 1..dim {
            if l[k] < l[lo] {
                lo = k;
            }
            if l[k] > l[hi] {
                hi = k;
            }
        }
        let ratio = (l[hi] - l[lo]).exp();
        if ratio > r_aniso {
            total += ratio - r_aniso;
            let e = g.entry_mut(Group::LogInvScale, i);
            e[hi] += ratio * inv_n;
            e[lo] -= ratio * inv_n;
        }
    }
    (total * inv_n, g)
}

/// `(1/N) Σ (Π(s_i) / mean_j Π(s_j) − 1)²`, with the gradient flowing
/// through the mean.
pub fn loss_vol(field: &GsrField) -> (f64, ParamGradient) {
    let dim = field.dim();
    let n = field.len();
    let mut g = ParamGradient::zeros(dim, n);
    if n == 0 {
        return (0.0, g);
    }
    let inv_n = 1.0 / n as f64;
    let scales = field.params().group(Group::LogInvScale);
    let vols: Vec<f64> = (0..n)
        .map(|i| (-scales[i * dim..(i + 1) * dim].iter().sum::<f64>()).exp())
        .collect();
    // offset from the first volume keeps equal volumes exact
    let mean = vols[0] + vols.iter().map(|p| p - vols[0]).sum::<f64>() * inv_n;
    let mut total = 0.0;
    let mut coupling = 0.0;
    for &p in &vols {
        let e = p / mean - 1.0;
        total += e * e;
        coupling += e * p;
    }
    // ∂L/∂P_j = (2/N)(e_j / M) − (2/N²) Σ_i e_i P_i / M²
    let shared = 2.0 * inv_n * inv_n * coupling / (mean * mean);
    for (i, &p) in vols.iter().enumerate() {
        let e = p / mean - 1.0;
        let dp = 2.0 * inv_n * e / mean - shared;
        // ∂P/∂ℓ_k = −P
        for x in g.entry_mut(Group::LogInvScale, i) {
            *x = -dp * p;
        }
    }
    (total * inv_n, g)
}

/// `(1/(Nd)) Σ ‖μ_i − μ*_i‖²` against anchor positions laid out like the
/// position group.
pub fn loss_position(field: &GsrField, anchors: &[f64]) -> (f64, ParamGradient) {
    let dim = field.dim();
    let n = field.len();
    let mut g = ParamGradient::zeros(dim, n);
    if n == 0 {
        return (0.0, g);
    }
    let pos = field.params().group(Group::Position);
    assert_eq!(pos.len(), anchors.len());
    let norm = 1.0 / (n * dim) as f64;
    let mut total = 0.0;
    let out = g.group_mut(Group::Position);
    for ((o, p), a) in out.iter_mut().zip(pos).zip(anchors) {
        let d = p - a;
        total += d * d;
        *o = 2.0 * d * norm;
    }
    (total * norm, g)
}

/// Projection losses with the vorticity and divergence gradients kept apart
/// for gradient surgery. `rest` holds the weighted sum of every other term.
#[derive(Clone, Debug)]
pub struct ProjectionLoss {
    pub breakdown: LossBreakdown,
    pub grad_vor: ParamGradient,
    pub grad_div: ParamGradient,
    pub rest: ParamGradient,
}

pub fn total_loss_projection(
    field: &GsrField,
    batch: &SampleBatch,
    omega: &[Vec3],
    anchors: &[f64],
    weights: &LossWeights,
    r_aniso: f64,
) -> Result<ProjectionLoss> {
    let ((vor, grad_vor), (div, grad_div)) =
        loss_vorticity_divergence(field, &batch.interior, omega)?;
    let mut rest = ParamGradient::zeros(field.dim(), field.len());
    let mut b = LossBreakdown {
        vor,
        div,
        ..Default::default()
    };
    if !batch.boundary1.is_empty() {
        let (l, g) = loss_boundary1(field, &batch.boundary1)?;
        b.b1 = l;
        rest.add_scaled(weights.b1, &g);
    }
    if !batch.boundary2.is_empty() {
        let (l, g) = loss_boundary2(field, &batch.boundary2)?;
        b.b2 = l;
        rest.add_scaled(weights.b2, &g);
    }
    let (l, g) = loss_aniso(field, r_aniso);
    b.aniso = l;
    rest.add_scaled(weights.aniso, &g);
    let (l, g) = loss_vol(field);
    b.vol = l;
    rest.add_scaled(weights.vol, &g);
    let (l, g) = loss_position(field, anchors);
    b.pos = l;
    rest.add_scaled(weights.pos, &g);
    b.total = weights.vor * b.vor
        + weights.div * b.div
        + weights.b1 * b.b1
        + weights.b2 * b.b2
        + weights.aniso * b.aniso
        + weights.vol * b.vol
        + weights.pos * b.pos;
    Ok(ProjectionLoss {
        breakdown: b,
        grad_vor,
        grad_div,
        rest,
    })
}

/// `L_val + L_grad + L_aniso + L_vol` with unit weights.
pub fn total_loss_init(
    field: &GsrField,
    target: &dyn VelocityField,
    points: &[Vec3],
    r_aniso: f64,
) -> Result<(InitBreakdown, ParamGradient)> {
    let (val, mut g) = loss_value(field, target, points)?;
    let (grad, gg) = loss_grad(field, target, points)?;
    g.add_scaled(1.0, &gg);
    let (aniso, ga) = loss_aniso(field, r_aniso);
    g.add_scaled(1.0, &ga);
    let (vol, gv) = loss_vol(field);
    g.add_scaled(1.0, &gv);
    Ok((
        InitBreakdown {
            val,
            grad,
            aniso,
            vol,
            total: val + grad + aniso + vol,
        },
        g,
    ))
}

//! Gaussian spatial representation: a velocity field built from clamped
//! anisotropic Gaussian kernels.
//!
//! Matrix convention used everywhere in this crate: a velocity gradient `g`
//! stores `g[k][l] = ∂v_l / ∂x_k` (row = differentiation axis).

use serde::{Deserialize, Serialize};

use crate::error::{GsrError, Result};
use crate::hash::SpatialHash;
use crate::linalg::{self, Mat3, Vec3, ZERO3, ZERO_MAT};
use crate::params::{Group, ParamGradient, ParamSet};

/// Clamp threshold `e^{-4.5}`: kernels are cut at three standard deviations.
pub const DEFAULT_CLAMP: f64 = 0.011108996538242306;

/// One anisotropic kernel. Vectors are padded to three entries; in 2D the
/// rotation is the angle stored in `rotation[0]`, in 3D it is a unit
/// quaternion `(w, x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianParticle {
    pub position: Vec3,
    pub log_inv_scale: Vec3,
    pub rotation: [f64; 4],
    pub weight: Vec3,
}

impl GaussianParticle {
    pub fn isotropic_2d(position: [f64; 2], scale: f64, weight: [f64; 2]) -> Self {
        Self {
            position: [position[0], position[1], 0.0],
            log_inv_scale: [-scale.ln(), -scale.ln(), 0.0],
            rotation: [0.0; 4],
            weight: [weight[0], weight[1], 0.0],
        }
    }

    pub fn isotropic_3d(position: Vec3, scale: f64, weight: Vec3) -> Self {
        Self {
            position,
            log_inv_scale: [-scale.ln(); 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            weight,
        }
    }

    /// Per-axis scales `s = exp(-log_inv_scale)`.
    pub fn scales(&self, dim: usize) -> Vec3 {
        let mut s = ZERO3;
        for k in 0..dim {
            s[k] = (-self.log_inv_scale[k]).exp();
        }
        s
    }

    pub fn max_scale(&self, dim: usize) -> f64 {
        self.scales(dim)[..dim].iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_scale(&self, dim: usize) -> f64 {
        self.scales(dim)[..dim]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn anisotropy(&self, dim: usize) -> f64 {
        self.max_scale(dim) / self.min_scale(dim)
    }

    pub fn rotation_matrix(&self, dim: usize) -> Mat3 {
        if dim == 2 {
            linalg::rotation_2d(self.rotation[0])
        } else {
            let n = linalg::quat_norm(&self.rotation);
            let q = self.rotation.map(|x| x / n);
            linalg::rotation_from_unit_quaternion(&q)
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let finite = self.position[..dim]
            .iter()
            .chain(&self.log_inv_scale[..dim])
            .chain(&self.weight[..dim])
            .chain(&self.rotation[..crate::params::rotation_width(dim)])
            .all(|x| x.is_finite());
        if !finite {
            return Err(GsrError::InvalidParameter("non-finite entry".into()));
        }
        if dim == 3 && linalg::quat_norm(&self.rotation) < 1e-12 {
            return Err(GsrError::InvalidParameter("zero quaternion".into()));
        }
        Ok(())
    }
}

/// Inverse covariance `Σ⁻¹ = R S⁻¹ S⁻¹ Rᵀ` of a particle.
pub fn cov_inverse(p: &GaussianParticle, dim: usize) -> Result<Mat3> {
    p.validate(dim)?;
    let r = p.rotation_matrix(dim);
    let mut d = ZERO3;
    for k in 0..dim {
        d[k] = (2.0 * p.log_inv_scale[k]).exp();
    }
    let mut out = ZERO_MAT;
    for i in 0..dim {
        for j in 0..dim {
            out[i][j] = (0..dim).map(|k| r[i][k] * d[k] * r[j][k]).sum();
        }
    }
    Ok(out)
}

/// Radius of the ball containing the clamped support: `√(−2 ln c) · max(s)`.
pub fn support_radius(p: &GaussianParticle, dim: usize, clamp: f64) -> f64 {
    (-2.0 * clamp.ln()).sqrt() * p.max_scale(dim)
}

/// Cached per-particle quantities used during evaluation.
#[derive(Clone, Debug)]
struct Kernel {
    mu: Vec3,
    rot: Mat3,
    sinv2: Vec3,
    radius2: f64,
    weight: Vec3,
}

/// Local quantities of one kernel at one point.
struct Local {
    r: Vec3,
    y: Vec3,
    w: Vec3,
    a: Vec3,
    g: f64,
}

#[derive(Clone, Debug)]
pub struct GsrField {
    dim: usize,
    clamp: f64,
    params: ParamSet,
    kernels: Vec<Kernel>,
    hash: SpatialHash,
}

impl GsrField {
    pub fn new(dim: usize, clamp: f64) -> Self {
        assert!(dim == 2 || dim == 3, "dimension must be 2 or 3");
        assert!(clamp > 0.0 && clamp < 1.0, "clamp must lie in (0, 1)");
        Self {
            dim,
            clamp,
            params: ParamSet::zeros(dim, 0),
            kernels: Vec::new(),
            hash: SpatialHash::build(dim, &[]),
        }
    }

    pub fn from_particles(dim: usize, clamp: f64, particles: &[GaussianParticle]) -> Result<Self> {
        let mut f = Self::new(dim, clamp);
        for p in particles {
            p.validate(dim)?;
            f.push_raw(p);
        }
        f.rebuild_hash();
        Ok(f)
    }

    pub fn from_params(clamp: f64, params: ParamSet) -> Result<Self> {
        let mut f = Self::new(params.dim(), clamp);
        f.params = params;
        for i in 0..f.len() {
            f.particle(i).validate(f.dim)?;
        }
        f.rebuild_hash();
        Ok(f)
    }

    fn push_raw(&mut self, p: &GaussianParticle) {
        let d = self.dim;
        let rw = crate::params::rotation_width(d);
        self.params.push_particle([
            &p.position[..d],
            &p.log_inv_scale[..d],
            &p.rotation[..rw],
            &p.weight[..d],
        ]);
    }

    /// Appends a particle; call [`GsrField::rebuild_hash`] afterwards.
    pub fn push(&mut self, p: &GaussianParticle) -> Result<()> {
        p.validate(self.dim)?;
        self.push_raw(p);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn clamp(&self) -> f64 {
        self.clamp
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    /// Mutable access to the raw parameters. The cached kernels and hash are
    /// stale until [`GsrField::rebuild_hash`] is called.
    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn particle(&self, i: usize) -> GaussianParticle {
        let mut p = GaussianParticle {
            position: ZERO3,
            log_inv_scale: ZERO3,
            rotation: [0.0; 4],
            weight: ZERO3,
        };
        let d = self.dim;
        p.position[..d].copy_from_slice(self.params.entry(Group::Position, i));
        p.log_inv_scale[..d].copy_from_slice(self.params.entry(Group::LogInvScale, i));
        let rot = self.params.entry(Group::Rotation, i);
        p.rotation[..rot.len()].copy_from_slice(rot);
        p.weight[..d].copy_from_slice(self.params.entry(Group::Weight, i));
        p
    }

    pub fn set_particle(&mut self, i: usize, p: &GaussianParticle) {
        let d = self.dim;
        let rw = crate::params::rotation_width(d);
        self.params
            .entry_mut(Group::Position, i)
            .copy_from_slice(&p.position[..d]);
        self.params
            .entry_mut(Group::LogInvScale, i)
            .copy_from_slice(&p.log_inv_scale[..d]);
        self.params
            .entry_mut(Group::Rotation, i)
            .copy_from_slice(&p.rotation[..rw]);
        self.params
            .entry_mut(Group::Weight, i)
            .copy_from_slice(&p.weight[..d]);
    }

    pub fn particles(&self) -> Vec<GaussianParticle> {
        (0..self.len()).map(|i| self.particle(i)).collect()
    }

    /// Renormalizes every quaternion to unit length (3D only). Quaternions
    /// already unit to within a few ulps are left untouched.
    pub fn normalize_rotations(&mut self) {
        if self.dim != 3 {
            return;
        }
        for q in self.params.group_mut(Group::Rotation).chunks_mut(4) {
            let n = (q.iter().map(|x| x * x).sum::<f64>()).sqrt();
            if n > 0.0 && (n - 1.0).abs() > 4.0 * f64::EPSILON {
                q.iter_mut().for_each(|x| *x /= n);
            }
        }
    }

    /// Recomputes cached kernels and the spatial hash after parameter changes.
    pub fn rebuild_hash(&mut self) {
        let dim = self.dim;
        let cut = (-2.0 * self.clamp.ln()).sqrt();
        self.kernels = (0..self.len())
            .map(|i| {
                let p = self.particle(i);
                let mut sinv2 = ZERO3;
                for k in 0..dim {
                    sinv2[k] = (2.0 * p.log_inv_scale[k]).exp();
                }
                let radius = cut * p.max_scale(dim);
                Kernel {
                    mu: p.position,
                    rot: p.rotation_matrix(dim),
                    sinv2,
                    radius2: radius * radius,
                    weight: p.weight,
                }
            })
            .collect();
        let balls: Vec<(Vec3, f64)> = self
            .kernels
            .iter()
            .map(|k| (k.mu, k.radius2.sqrt()))
            .collect();
        self.hash = SpatialHash::build(dim, &balls);
    }

    pub fn hash(&self) -> &SpatialHash {
        &self.hash
    }

    pub fn support_radius(&self, i: usize) -> f64 {
        self.kernels[i].radius2.sqrt()
    }

    #[inline]
    fn local(&self, k: &Kernel, x: &Vec3) -> Option<Local> {
        let r = linalg::sub(x, &k.mu);
        if linalg::norm2(&r) > k.radius2 {
            return None;
        }
        let y = linalg::mat_t_vec(&k.rot, &r);
        let w = [k.sinv2[0] * y[0], k.sinv2[1] * y[1], k.sinv2[2] * y[2]];
        let q = linalg::dot(&y, &w);
        let g = (-0.5 * q).exp();
        if g < self.clamp {
            return None;
        }
        let a = linalg::mat_vec(&k.rot, &w);
        Some(Local { r, y, w, a, g })
    }

    /// Unclamped Gaussian `G_i(x)`.
    pub fn gaussian(&self, i: usize, x: &Vec3) -> f64 {
        let k = &self.kernels[i];
        let r = linalg::sub(x, &k.mu);
        let y = linalg::mat_t_vec(&k.rot, &r);
        let q: f64 = (0..3).map(|j| k.sinv2[j] * y[j] * y[j]).sum();
        (-0.5 * q).exp()
    }

    /// Indices `i` with `G_i(x) ≥ c`, found through the hash.
    pub fn neighbors(&self, x: &Vec3) -> Vec<usize> {
        self.hash
            .query(x)
            .iter()
            .map(|&i| i as usize)
            .filter(|&i| self.local(&self.kernels[i], x).is_some())
            .collect()
    }

    /// Same set as [`GsrField::neighbors`] by an O(N) scan.
    pub fn neighbors_brute_force(&self, x: &Vec3) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.gaussian(i, x) >= self.clamp)
            .collect()
    }

    pub fn evaluate(&self, x: &Vec3) -> Vec3 {
        let mut v = ZERO3;
        for &i in self.hash.query(x) {
            let k = &self.kernels[i as usize];
            if let Some(l) = self.local(k, x) {
                v = linalg::axpy(&v, l.g - self.clamp, &k.weight);
            }
        }
        v
    }

    /// Velocity gradient, `g[k][l] = ∂v_l/∂x_k`.
    pub fn gradient(&self, x: &Vec3) -> Mat3 {
        self.evaluate_with_gradient(x).1
    }

    pub fn evaluate_with_gradient(&self, x: &Vec3) -> (Vec3, Mat3) {
        let mut v = ZERO3;
        let mut grad = ZERO_MAT;
        for &i in self.hash.query(x) {
            let k = &self.kernels[i as usize];
            if let Some(l) = self.local(k, x) {
                v = linalg::axpy(&v, l.g - self.clamp, &k.weight);
                for (row, a) in grad.iter_mut().zip(l.a) {
                    let s = -l.g * a;
                    for (e, w) in row.iter_mut().zip(k.weight) {
                        *e += s * w;
                    }
                }
            }
        }
        (v, grad)
    }

    pub fn divergence(&self, x: &Vec3) -> f64 {
        linalg::trace(&self.gradient(x))
    }

    /// Curl; in 2D only the first entry is used.
    pub fn curl(&self, x: &Vec3) -> Vec3 {
        curl_of(&self.gradient(x), self.dim)
    }

    /// Accumulates `∂L/∂Θ` into `out` given the adjoints of the value
    /// (`adj_value = ∂L/∂ṽ(x)`) and optionally of the gradient
    /// (`adj_grad[k][l] = ∂L/∂(∇ṽ)[k][l]`) at one point.
    pub fn backprop(
        &self,
        x: &Vec3,
        adj_value: &Vec3,
        adj_grad: Option<&Mat3>,
        out: &mut ParamGradient,
    ) {
        let dim = self.dim;
        for &i in self.hash.query(x) {
            let i = i as usize;
            let k = &self.kernels[i];
            let Some(l) = self.local(k, x) else { continue };
            let v = &k.weight;
            let mut dv = linalg::scale(adj_value, l.g - self.clamp);
            let mut s_g = linalg::dot(adj_value, v);
            let mut abar = ZERO3;
            if let Some(gbar) = adj_grad {
                let b = linalg::mat_vec(gbar, v);
                let gta = linalg::mat_t_vec(gbar, &l.a);
                dv = linalg::axpy(&dv, -l.g, &gta);
                s_g -= linalg::dot(&l.a, &b);
                abar = linalg::scale(&b, -l.g);
            }
            let qbar = -0.5 * l.g * s_g;
            let wbar = linalg::mat_t_vec(&k.rot, &abar);
            let mut ybar = ZERO3;
            let mut lbar = ZERO3;
            for j in 0..dim {
                ybar[j] = k.sinv2[j] * (wbar[j] + 2.0 * qbar * l.y[j]);
                lbar[j] = 2.0 * k.sinv2[j] * (wbar[j] * l.y[j] + qbar * l.y[j] * l.y[j]);
            }
            let rbar = linalg::mat_vec(&k.rot, &ybar);
            // R̄ = ā wᵀ + r ȳᵀ
            let mut rotbar = ZERO_MAT;
            for p in 0..dim {
                for q in 0..dim {
                    rotbar[p][q] = abar[p] * l.w[q] + l.r[p] * ybar[q];
                }
            }

            for (e, r) in out.entry_mut(Group::Position, i).iter_mut().zip(rbar) {
                *e -= r;
            }
            for (e, s) in out.entry_mut(Group::LogInvScale, i).iter_mut().zip(lbar) {
                *e += s;
            }
            for (e, s) in out.entry_mut(Group::Weight, i).iter_mut().zip(dv) {
                *e += s;
            }
            let rot = self.params.entry(Group::Rotation, i);
            if dim == 2 {
                let d = linalg::rotation_2d_derivative(rot[0]);
                out.entry_mut(Group::Rotation, i)[0] += linalg::mat_inner(&rotbar, &d);
            } else {
                let q = [rot[0], rot[1], rot[2], rot[3]];
                let n = linalg::quat_norm(&q);
                let qh = q.map(|c| c / n);
                let parts = linalg::rotation_quaternion_partials(&qh);
                let qhbar = parts.map(|p| linalg::mat_inner(&rotbar, &p));
                let proj: f64 = (0..4).map(|m| qh[m] * qhbar[m]).sum();
                let e = out.entry_mut(Group::Rotation, i);
                for m in 0..4 {
                    e[m] += (qhbar[m] - qh[m] * proj) / n;
                }
            }
        }
    }

    /// Order-sensitive checksum of all parameters.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for x in self.params.flatten() {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }
}

/// Curl from a velocity gradient laid out as `g[k][l] = ∂v_l/∂x_k`.
/// In 2D the scalar `∂v_y/∂x − ∂v_x/∂y` is returned in entry 0.
pub fn curl_of(g: &Mat3, dim: usize) -> Vec3 {
    if dim == 2 {
        [g[0][1] - g[1][0], 0.0, 0.0]
    } else {
        [g[1][2] - g[2][1], g[2][0] - g[0][2], g[0][1] - g[1][0]]
    }
}

/// Number of curl components: 1 in 2D, 3 in 3D.
pub fn curl_width(dim: usize) -> usize {
    if dim == 2 {
        1
    } else {
        3
    }
}

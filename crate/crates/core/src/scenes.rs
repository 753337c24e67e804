//! Scene catalogue: analytic initial fields, boundaries and the dynamic
//! inflow domain used by the Kármán street.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::Hyperparams;
use crate::error::{GsrError, Result};
use crate::field::VelocityField;
use crate::geometry::{sample_interior, Aabb, BoundaryPiece, Condition, Geometry, TriMesh};
use crate::linalg::{add, cross, dot, norm, scale, sub, Mat3, Vec3, ZERO_MAT};
use crate::losses::{LossWeights, SampleBatch};
use crate::optim::GroupRates;

pub const SCENE_NAMES: [&str; 8] = [
    "taylor_green",
    "taylor_vortex",
    "leapfrog2d",
    "vortices_pass",
    "karman",
    "leapfrog3d",
    "ring_collide",
    "smoking_bunny",
];

pub const VORTEX_EPSILON: f64 = 1e-6;
pub const POINT_VORTEX_EPSILON: f64 = 0.1;
pub const POINT_VORTEX_STRENGTH: f64 = 0.0416666679084301;
pub const RING_SEGMENTS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vortex2 {
    pub center: [f64; 2],
    pub strength: f64,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointVortex {
    pub center: [f64; 2],
    pub strength: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VortexRing {
    pub center: Vec3,
    pub normal: Vec3,
    pub radius: f64,
    pub thickness: f64,
    pub strength: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialField {
    TaylorGreen,
    /// Gaussian vortices `U/a · exp(½(1 − r²/a²)) (y_c − y, x − x_c)`.
    TaylorVortex {
        strength: f64,
        radius: f64,
        centers: Vec<[f64; 2]>,
    },
    /// Sum of regularized vortices `U/(r+ε)² (1 − e^{−((r+ε)/a)²}) (z_y − y, x − z_x)`.
    Vortices { vortices: Vec<Vortex2>, epsilon: f64 },
    /// Sum of point vortices `U/(r² + ε_p) (y − z_y, z_x − x)`.
    PointVortices {
        particles: Vec<PointVortex>,
        epsilon: f64,
    },
    Uniform { velocity: Vec3 },
    /// Vortex rings by discretized Biot–Savart with a smoothed core.
    Rings { rings: Vec<VortexRing>, segments: usize },
}

impl InitialField {
    pub fn dim(&self) -> usize {
        match self {
            InitialField::Rings { .. } => 3,
            InitialField::Uniform { velocity } if velocity[2] != 0.0 => 3,
            _ => 2,
        }
    }

    /// Precomputes evaluation data.
    pub fn compile(&self) -> AnalyticField {
        let segments = match self {
            InitialField::Rings { rings, segments } => {
                rings.iter().flat_map(|r| ring_segments(r, *segments)).collect()
            }
            _ => Vec::new(),
        };
        AnalyticField {
            spec: self.clone(),
            segments,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Segment {
    mid: Vec3,
    dl: Vec3,
    /// `Γ / 4π`
    coeff: f64,
    inv_a2: f64,
}

fn ring_basis(n: &Vec3) -> (Vec3, Vec3, Vec3) {
    let n = scale(n, 1.0 / norm(n));
    let helper = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = sub(&helper, &scale(&n, dot(&helper, &n)));
    let e1 = scale(&e1, 1.0 / norm(&e1));
    let e2 = cross(&n, &e1);
    (e1, e2, n)
}

/// Segments traversed counter-clockwise about the ring normal, so the ring
/// and the flow through its center move along the normal.
fn ring_segments(ring: &VortexRing, count: usize) -> Vec<Segment> {
    let (e1, e2, _) = ring_basis(&ring.normal);
    let point = |j: usize| {
        let phi = 2.0 * PI * j as f64 / count as f64;
        add(
            &ring.center,
            &add(&scale(&e1, ring.radius * phi.cos()), &scale(&e2, ring.radius * phi.sin())),
        )
    };
    (0..count)
        .map(|j| {
            let (p, q) = (point(j), point(j + 1));
            Segment {
                mid: scale(&add(&p, &q), 0.5),
                dl: sub(&q, &p),
                coeff: ring.strength / (4.0 * PI),
                inv_a2: 1.0 / (ring.thickness * ring.thickness),
            }
        })
        .collect()
}

/// An [`InitialField`] ready for evaluation.
#[derive(Clone, Debug)]
pub struct AnalyticField {
    spec: InitialField,
    segments: Vec<Segment>,
}

impl AnalyticField {
    pub fn spec(&self) -> &InitialField {
        &self.spec
    }

    fn eval(&self, x: &Vec3) -> (Vec3, Mat3) {
        let mut u = [0.0; 3];
        let mut j = ZERO_MAT;
        match &self.spec {
            InitialField::TaylorGreen => {
                let (sx, cx) = x[0].sin_cos();
                let (sy, cy) = x[1].sin_cos();
                u = [sx * cy, -cx * sy, 0.0];
                j[0][0] = cx * cy;
                j[1][0] = -sx * sy;
                j[0][1] = sx * sy;
                j[1][1] = -cx * cy;
            }
            InitialField::TaylorVortex {
                strength,
                radius,
                centers,
            } => {
                let a2 = radius * radius;
                for c in centers {
                    let d = [x[0] - c[0], x[1] - c[1]];
                    let r2 = d[0] * d[0] + d[1] * d[1];
                    let phi = strength / radius * (0.5 * (1.0 - r2 / a2)).exp();
                    let dphi = [-phi * d[0] / a2, -phi * d[1] / a2];
                    swirl(&mut u, &mut j, d, phi, dphi, 1.0);
                }
            }
            InitialField::Vortices { vortices, epsilon } => {
                for v in vortices {
                    let d = [x[0] - v.center[0], x[1] - v.center[1]];
                    let r = (d[0] * d[0] + d[1] * d[1]).sqrt();
                    let re = r + epsilon;
                    let q = (re / v.radius).powi(2);
                    let e = (-q).exp();
                    let psi = v.strength * (1.0 - e) / (re * re);
                    let dpsi = v.strength
                        * (2.0 * e / (v.radius * v.radius * re) - 2.0 * (1.0 - e) / (re * re * re));
                    let dphi = if r > 0.0 {
                        [dpsi * d[0] / r, dpsi * d[1] / r]
                    } else {
                        [0.0, 0.0]
                    };
                    swirl(&mut u, &mut j, d, psi, dphi, 1.0);
                }
            }
            InitialField::PointVortices { particles, epsilon } => {
                for p in particles {
                    let d = [x[0] - p.center[0], x[1] - p.center[1]];
                    let den = d[0] * d[0] + d[1] * d[1] + epsilon;
                    let phi = p.strength / den;
                    let dphi = [-2.0 * phi * d[0] / den, -2.0 * phi * d[1] / den];
                    swirl(&mut u, &mut j, d, phi, dphi, -1.0);
                }
            }
            InitialField::Uniform { velocity } => u = *velocity,
            InitialField::Rings { .. } => {
                for s in &self.segments {
                    let d = sub(x, &s.mid);
                    let rho2 = dot(&d, &d);
                    if rho2 < 1e-24 {
                        continue;
                    }
                    let rho = rho2.sqrt();
                    let e = (-rho2 * s.inv_a2).exp();
                    let k = (1.0 - e) / (rho2 * rho);
                    // K'(ρ)/ρ
                    let rho3 = rho2 * rho;
                    let dk = 2.0 * s.inv_a2 * e / rho3 - 3.0 * (1.0 - e) / (rho3 * rho2);
                    let c = cross(&s.dl, &d);
                    for l in 0..3 {
                        u[l] += s.coeff * c[l] * k;
                    }
                    for kx in 0..3 {
                        let mut ek = [0.0; 3];
                        ek[kx] = 1.0;
                        let ce = cross(&s.dl, &ek);
                        for l in 0..3 {
                            j[kx][l] += s.coeff * (ce[l] * k + c[l] * dk * d[kx]);
                        }
                    }
                }
            }
        }
        (u, j)
    }
}

/// Adds `φ(x) · σ(−d_y, d_x)` and its Jacobian given `∇φ`.
fn swirl(u: &mut Vec3, j: &mut Mat3, d: [f64; 2], phi: f64, dphi: [f64; 2], sigma: f64) {
    let w = [-sigma * d[1], sigma * d[0]];
    u[0] += phi * w[0];
    u[1] += phi * w[1];
    for k in 0..2 {
        for l in 0..2 {
            j[k][l] += dphi[k] * w[l];
        }
    }
    j[1][0] += -sigma * phi;
    j[0][1] += sigma * phi;
}

impl VelocityField for AnalyticField {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn velocity(&self, x: &Vec3) -> Vec3 {
        self.eval(x).0
    }

    fn jacobian(&self, x: &Vec3) -> Mat3 {
        self.eval(x).1
    }
}

/// `k · u(x/k)` with Jacobian `∇u(x/k)`.
#[derive(Clone, Debug)]
pub struct ScaledField<F> {
    pub inner: F,
    pub k: f64,
}

impl<F: VelocityField> VelocityField for ScaledField<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn velocity(&self, x: &Vec3) -> Vec3 {
        scale(&self.inner.velocity(&scale(x, 1.0 / self.k)), self.k)
    }

    fn jacobian(&self, x: &Vec3) -> Mat3 {
        self.inner.jacobian(&scale(x, 1.0 / self.k))
    }
}

/// Dynamic-domain settings for a scene with a moving inflow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InflowSetup {
    pub speed: f64,
    /// Left edge of the physical domain.
    pub x_min: f64,
}

/// Second initialization stage: one projection pass with these settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageOverrides {
    pub weights: LossWeights,
    pub rates: GroupRates,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub name: String,
    pub dim: usize,
    pub domain: Aabb,
    pub boundaries: Vec<BoundaryPiece>,
    pub initial: InitialField,
    pub dt: f64,
    pub frames: usize,
    pub particles: usize,
    /// Normalization factor `k` already applied (1 in original units).
    pub scale: f64,
    pub inflow: Option<InflowSetup>,
    pub stage2: Option<StageOverrides>,
}

fn box2(min: [f64; 2], max: [f64; 2]) -> Aabb {
    Aabb::new(2, [min[0], min[1], 0.0], [max[0], max[1], 0.0]).expect("catalogue box")
}

fn box3(min: Vec3, max: Vec3) -> Aabb {
    Aabb::new(3, min, max).expect("catalogue box")
}

fn walls(dim: usize, flux: f64) -> Vec<BoundaryPiece> {
    (0..dim)
        .flat_map(|axis| {
            [false, true].map(|upper| BoundaryPiece {
                geometry: Geometry::DomainSide { axis, upper },
                condition: Condition::Flux(flux),
            })
        })
        .collect()
}

/// `count` points in a disc by a golden-angle spiral.
pub fn spiral_disc(center: [f64; 2], radius: f64, count: usize) -> Vec<[f64; 2]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|j| {
            let r = radius * ((j as f64 + 0.5) / count as f64).sqrt();
            let a = golden * j as f64;
            [center[0] + r * a.cos(), center[1] + r * a.sin()]
        })
        .collect()
}

/// Closed stand-in obstacle for the bunny scene: a lumpy body with a head
/// and two ears, built as a star-shaped radial surface.
pub fn bunny_standin() -> TriMesh {
    let (rings, segs) = (50, 50);
    let mut m = TriMesh::uv_sphere([0.0; 3], 1.0, rings, segs);
    let bumps: [(Vec3, f64, f64); 4] = [
        ([0.55, 0.0, 0.55], 0.35, 0.18),
        ([0.35, 0.25, 0.95], 0.45, 0.08),
        ([0.35, -0.25, 0.95], 0.45, 0.08),
        ([-0.9, 0.0, 0.1], 0.15, 0.1),
    ];
    for v in m.vertices.iter_mut() {
        let mut r = 1.0 + 0.1 * (2.0 * v[0]).sin() * (3.0 * v[1]).cos();
        r *= if v[2] < 0.0 { 1.0 - 0.3 * v[2] * v[2] } else { 1.0 };
        for (c, amp, w) in &bumps {
            let d2 = sub(v, &scale(c, 1.0 / norm(c)));
            r += amp * (-dot(&d2, &d2) / w).exp();
        }
        *v = [v[0] * r * 1.1, v[1] * r * 0.8, v[2] * r * 0.9];
    }
    m.transformed(0.15, [0.5, 0.45, 0.25])
}

impl Scene {
    pub fn catalogue() -> Vec<Scene> {
        SCENE_NAMES
            .iter()
            .map(|n| Scene::by_name(n).expect("catalogue scene"))
            .collect()
    }

    /// A catalogue scene in original units.
    pub fn by_name(name: &str) -> Result<Scene> {
        let vortex_box = box2([-5.0, -5.0], [5.0, 5.0]);
        let unit_cube = box3([0.0; 3], [1.0; 3]);
        let base = |dim: usize, domain: Aabb, initial: InitialField, dt: f64, frames: usize, particles: usize| Scene {
            name: name.to_string(),
            dim,
            domain,
            boundaries: walls(dim, 0.0),
            initial,
            dt,
            frames,
            particles,
            scale: 1.0,
            inflow: None,
            stage2: None,
        };
        let ring = |center: Vec3, normal: Vec3, radius: f64, strength: f64| VortexRing {
            center,
            normal,
            radius,
            thickness: 0.02,
            strength,
        };
        let scene = match name {
            "taylor_green" => base(
                2,
                box2([0.0, 0.0], [2.0 * PI, 2.0 * PI]),
                InitialField::TaylorGreen,
                0.001,
                100,
                576,
            ),
            "taylor_vortex" => base(
                2,
                vortex_box,
                InitialField::TaylorVortex {
                    strength: 3.0,
                    radius: 0.5,
                    centers: vec![[-0.8, 0.0], [0.8, 0.0]],
                },
                0.01,
                300,
                5041,
            ),
            "leapfrog2d" => {
                let v = |x: f64, s: f64| Vortex2 {
                    center: [x, -3.0],
                    strength: s,
                    radius: 0.3,
                };
                base(
                    2,
                    vortex_box,
                    InitialField::Vortices {
                        vortices: vec![v(-3.0, 0.5), v(-1.0, 0.5), v(1.0, -0.5), v(3.0, -0.5)],
                        epsilon: VORTEX_EPSILON,
                    },
                    0.025,
                    1500,
                    5041,
                )
            }
            "vortices_pass" => {
                // upper vortex clockwise-negative, lower positive: the pair
                // drifts toward +x between the two obstacles
                let mut particles = Vec::new();
                for (cy, s) in [(1.0, -POINT_VORTEX_STRENGTH), (-1.0, POINT_VORTEX_STRENGTH)] {
                    particles.extend(spiral_disc([-2.0, cy], 0.2, 24).into_iter().map(|c| PointVortex {
                        center: c,
                        strength: s,
                    }));
                }
                let mut s = base(
                    2,
                    vortex_box,
                    InitialField::PointVortices {
                        particles,
                        epsilon: POINT_VORTEX_EPSILON,
                    },
                    0.01,
                    879,
                    5041,
                );
                for cy in [1.0, -1.0] {
                    s.boundaries.push(BoundaryPiece {
                        geometry: Geometry::Ball {
                            center: [0.0, cy, 0.0],
                            radius: 0.25,
                        },
                        condition: Condition::Flux(0.0),
                    });
                }
                s
            }
            "karman" => {
                let domain = box2([-1.10321, -0.598466], [1.906778, 0.60349]);
                let v0 = 0.5;
                let side = |axis, upper, f: f64| BoundaryPiece {
                    geometry: Geometry::DomainSide { axis, upper },
                    condition: Condition::Flux(f),
                };
                let mut s = base(2, domain, InitialField::Uniform { velocity: [v0, 0.0, 0.0] }, 0.05, 200, 20408);
                s.boundaries = vec![
                    BoundaryPiece {
                        geometry: Geometry::Ball {
                            center: [-0.80356845, -0.00502235, 0.0],
                            radius: 0.04553178393357534,
                        },
                        condition: Condition::Velocity([0.0; 3]),
                    },
                    side(1, false, 0.0),
                    side(1, true, 0.0),
                    side(0, false, v0),
                    side(0, true, -v0),
                    BoundaryPiece {
                        geometry: Geometry::Face {
                            axis: 0,
                            coord: domain.min[0],
                            inward: 1.0,
                        },
                        condition: Condition::Flux(v0),
                    },
                ];
                s.inflow = Some(InflowSetup {
                    speed: v0,
                    x_min: domain.min[0],
                });
                s.stage2 = Some(StageOverrides {
                    weights: LossWeights {
                        vor: 1.0,
                        div: 10.0,
                        b1: 1.0,
                        b2: 1.0,
                        aniso: 10.0,
                        vol: 10.0,
                        pos: 0.0,
                    },
                    rates: GroupRates {
                        position: 1e-4,
                        log_inv_scale: 1e-5,
                        rotation: 1.201956e-5,
                        weight: 1e-4,
                    },
                });
                s
            }
            "leapfrog3d" => {
                let n0 = [-1.0, 0.0, 0.0];
                base(
                    3,
                    unit_cube,
                    InitialField::Rings {
                        rings: vec![
                            ring([0.75, 0.5, 0.5], n0, 1.0 / 6.0, 1.0 / 60.0),
                            ring([0.85, 0.5, 0.5], n0, 7.0 / 60.0, 1.0 / 60.0),
                        ],
                        segments: RING_SEGMENTS,
                    },
                    0.02,
                    860,
                    4096,
                )
            }
            "ring_collide" => base(
                3,
                unit_cube,
                InitialField::Rings {
                    rings: vec![
                        ring([5.0 / 12.0, 0.5, 0.5], [1.0, 0.0, 0.0], 0.05, 1.0 / 60.0),
                        ring([7.0 / 12.0, 0.5, 0.5], [-1.0, 0.0, 0.0], 0.05, 1.0 / 60.0),
                    ],
                    segments: RING_SEGMENTS,
                },
                0.02,
                242,
                4096,
            ),
            "smoking_bunny" => {
                let n0 = [0.185, 0.185, -0.926];
                let mut s = base(
                    3,
                    unit_cube,
                    InitialField::Rings {
                        rings: vec![
                            ring([0.475, 0.6, 0.53], n0, 0.05, 1.0 / 30.0),
                            ring([0.438, 0.563, 0.7152], n0, 0.05, 1.0 / 30.0),
                        ],
                        segments: RING_SEGMENTS,
                    },
                    0.02,
                    300,
                    4096,
                );
                s.boundaries.push(BoundaryPiece {
                    geometry: Geometry::Mesh {
                        mesh: Arc::new(bunny_standin()),
                    },
                    condition: Condition::Flux(0.0),
                });
                s
            }
            other => return Err(GsrError::UnknownScene(other.to_string())),
        };
        Ok(scene)
    }

    /// Normalization factor for this scene's original units.
    pub fn normalization_factor(&self) -> f64 {
        let l0 = self.domain.shortest_side();
        if self.dim == 2 {
            10.0 / l0
        } else {
            1.0 / l0
        }
    }

    /// Rescales the scene so its shortest side is 10 (2D) or 1 (3D).
    pub fn normalized(&self) -> Scene {
        let k = self.normalization_factor() * self.scale;
        self.rescaled(k / self.scale)
    }

    /// Multiplies lengths by `k` and velocities by `k`; time is unchanged.
    pub fn rescaled(&self, k: f64) -> Scene {
        Scene {
            domain: self.domain.scaled(k),
            boundaries: self.boundaries.iter().map(|b| b.scaled(k)).collect(),
            scale: self.scale * k,
            inflow: self.inflow.map(|i| InflowSetup {
                speed: i.speed * k,
                x_min: i.x_min * k,
            }),
            ..self.clone()
        }
    }

    pub fn replace_mesh(&mut self, mesh: TriMesh) {
        for b in self.boundaries.iter_mut() {
            if let Geometry::Mesh { .. } = b.geometry {
                b.geometry = Geometry::Mesh {
                    mesh: Arc::new(mesh.transformed(self.scale, [0.0; 3])),
                };
            }
        }
    }

    /// The initial field in this scene's coordinates.
    pub fn initial_field(&self) -> ScaledField<AnalyticField> {
        ScaledField {
            inner: self.initial.compile(),
            k: self.scale,
        }
    }

    pub fn total_time(&self) -> f64 {
        self.frames as f64 * self.dt
    }

    /// Fluid domain at simulation time `t`.
    pub fn active_domain(&self, t: f64) -> Aabb {
        let mut d = self.domain;
        if let Some(inflow) = self.inflow {
            d.min[0] = inflow.x_min + (t - self.total_time()) * inflow.speed;
        }
        d
    }

    pub fn obstacles(&self) -> Vec<&Geometry> {
        self.boundaries
            .iter()
            .map(|b| &b.geometry)
            .filter(|g| matches!(g, Geometry::Ball { .. } | Geometry::Mesh { .. }))
            .collect()
    }

    pub fn sample_interior<R: Rng + ?Sized>(&self, t: f64, n: usize, rng: &mut R) -> Vec<Vec3> {
        sample_interior(&self.active_domain(t), &self.obstacles(), n, rng)
    }

    pub fn sample_batch<R: Rng + ?Sized>(&self, t: f64, hyper: &Hyperparams, rng: &mut R) -> SampleBatch {
        let domain = self.active_domain(t);
        let mut batch = SampleBatch {
            interior: sample_interior(&domain, &self.obstacles(), hyper.interior_samples, rng),
            ..Default::default()
        };
        for piece in &self.boundaries {
            let s = piece.sample(&domain, hyper.boundary_samples, rng);
            match piece.condition {
                Condition::Velocity(_) => batch.boundary1.extend(s),
                Condition::Flux(_) => batch.boundary2.extend(s),
            }
        }
        batch
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(GsrError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.dim != self.domain.dim || self.dim != self.initial.dim() {
            return Err(GsrError::Dimension {
                expected: self.dim,
                got: self.domain.dim,
            });
        }
        Aabb::new(self.dim, self.domain.min, self.domain.max)?;
        Ok(())
    }
}

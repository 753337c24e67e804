//! Domains, obstacles and boundary sampling.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GsrError, Result};
use crate::linalg::{add, cross, dot, norm, scale, sub, Vec3};
use crate::losses::WallSample;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub dim: usize,
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(dim: usize, min: Vec3, max: Vec3) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(GsrError::Dimension {
                expected: 2,
                got: dim,
            });
        }
        for k in 0..dim {
            if !(min[k].is_finite() && max[k].is_finite() && max[k] > min[k]) {
                return Err(GsrError::InvalidParameter(format!(
                    "degenerate domain along axis {k}: [{}, {}]",
                    min[k], max[k]
                )));
            }
        }
        Ok(Self { dim, min, max })
    }

    pub fn extent(&self, k: usize) -> f64 {
        self.max[k] - self.min[k]
    }

    pub fn shortest_side(&self) -> f64 {
        (0..self.dim)
            .map(|k| self.extent(k))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn diagonal(&self) -> f64 {
        (0..self.dim).map(|k| self.extent(k).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        (0..self.dim).all(|k| x[k] >= self.min[k] && x[k] <= self.max[k])
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            dim: self.dim,
            min: scale(&self.min, k),
            max: scale(&self.max, k),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let mut x = [0.0; 3];
        for k in 0..self.dim {
            x[k] = self.min[k] + rng.gen::<f64>() * self.extent(k);
        }
        x
    }

    /// Cell centers of a uniform `n`-per-axis partition, row-major with the
    /// first axis fastest.
    pub fn cell_centers(&self, n: usize) -> Vec<Vec3> {
        let total = n.pow(self.dim as u32);
        (0..total)
            .map(|mut idx| {
                let mut x = [0.0; 3];
                for k in 0..self.dim {
                    let i = idx % n;
                    idx /= n;
                    x[k] = self.min[k] + (i as f64 + 0.5) * self.extent(k) / n as f64;
                }
                x
            })
            .collect()
    }
}

/// Watertight triangle mesh with outward-facing counter-clockwise winding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn from_obj(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => {
                    let mut v = [0.0; 3];
                    for c in v.iter_mut() {
                        *c = it
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| GsrError::Mesh(format!("line {}: bad vertex", line_no + 1)))?;
                    }
                    vertices.push(v);
                }
                Some("f") => {
                    let idx: Vec<u32> = it
                        .map(|s| {
                            s.split('/')
                                .next()
                                .and_then(|i| i.parse::<u32>().ok())
                                .filter(|&i| i >= 1)
                                .map(|i| i - 1)
                                .ok_or_else(|| GsrError::Mesh(format!("line {}: bad face", line_no + 1)))
                        })
                        .collect::<Result<_>>()?;
                    if idx.len() < 3 {
                        return Err(GsrError::Mesh(format!("line {}: face with {} vertices", line_no + 1, idx.len())));
                    }
                    for j in 1..idx.len() - 1 {
                        triangles.push([idx[0], idx[j], idx[j + 1]]);
                    }
                }
                _ => {}
            }
        }
        let mesh = Self {
            vertices,
            triangles,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            s.push_str(&format!("v {} {} {}\n", v[0], v[1], v[2]));
        }
        for t in &self.triangles {
            s.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
        s
    }

    fn validate(&self) -> Result<()> {
        if self.triangles.is_empty() {
            return Err(GsrError::Mesh("mesh has no triangles".into()));
        }
        let n = self.vertices.len() as u32;
        if self.triangles.iter().flatten().any(|&i| i >= n) {
            return Err(GsrError::Mesh("face index out of range".into()));
        }
        Ok(())
    }

    fn corners(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    fn area_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.corners(t);
        scale(&cross(&sub(&b, &a), &sub(&c, &a)), 0.5)
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| norm(&self.area_normal(t))).sum()
    }

    pub fn transformed(&self, k: f64, offset: Vec3) -> Self {
        Self {
            vertices: self
                .vertices
                .iter()
                .map(|v| add(&scale(v, k), &offset))
                .collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Point-in-mesh by ray parity along a fixed irrational direction.
    pub fn contains(&self, x: &Vec3) -> bool {
        let d = [0.5773502691896258, 0.5773869, 0.577328];
        let mut hits = 0;
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.corners(t);
            let e1 = sub(&b, &a);
            let e2 = sub(&c, &a);
            let p = cross(&d, &e2);
            let det = dot(&e1, &p);
            if det.abs() < 1e-14 {
                continue;
            }
            let inv = 1.0 / det;
            let s = sub(x, &a);
            let u = dot(&s, &p) * inv;
            if !(0.0..=1.0).contains(&u) {
                continue;
            }
            let q = cross(&s, &e1);
            let v = dot(&d, &q) * inv;
            if v < 0.0 || u + v > 1.0 {
                continue;
            }
            if dot(&e2, &q) * inv > 0.0 {
                hits += 1;
            }
        }
        hits % 2 == 1
    }

    /// Area-weighted triangle pick followed by a uniform barycentric draw.
    /// Returns the point and the outward unit normal.
    pub fn sample<R: Rng + ?Sized>(&self, cumulative: &[f64], rng: &mut R) -> (Vec3, Vec3) {
        let total = *cumulative.last().unwrap_or(&0.0);
        let r = rng.gen::<f64>() * total;
        let t = cumulative.partition_point(|&c| c <= r).min(self.triangles.len() - 1);
        let [a, b, c] = self.corners(t);
        let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
        let s = r1.sqrt();
        let (wa, wb, wc) = (1.0 - s, s * (1.0 - r2), s * r2);
        let x = [
            wa * a[0] + wb * b[0] + wc * c[0],
            wa * a[1] + wb * b[1] + wc * c[1],
            wa * a[2] + wb * b[2] + wc * c[2],
        ];
        let n = self.area_normal(t);
        (x, scale(&n, 1.0 / norm(&n)))
    }

    pub fn cumulative_areas(&self) -> Vec<f64> {
        let mut acc = 0.0;
        (0..self.triangles.len())
            .map(|t| {
                acc += norm(&self.area_normal(t));
                acc
            })
            .collect()
    }

    /// Closed UV sphere, useful as a stand-in obstacle.
    pub fn uv_sphere(center: Vec3, radius: f64, rings: usize, segments: usize) -> Self {
        use std::f64::consts::PI;
        let mut vertices = vec![add(&center, &[0.0, 0.0, radius])];
        for i in 1..rings {
            let th = PI * i as f64 / rings as f64;
            for j in 0..segments {
                let ph = 2.0 * PI * j as f64 / segments as f64;
                vertices.push(add(
                    &center,
                    &[
                        radius * th.sin() * ph.cos(),
                        radius * th.sin() * ph.sin(),
                        radius * th.cos(),
                    ],
                ));
            }
        }
        vertices.push(add(&center, &[0.0, 0.0, -radius]));
        let south = (vertices.len() - 1) as u32;
        let ring = |i: usize, j: usize| (1 + (i - 1) * segments + j % segments) as u32;
        let mut triangles = Vec::new();
        for j in 0..segments {
            triangles.push([0, ring(1, j), ring(1, j + 1)]);
        }
        for i in 1..rings - 1 {
            for j in 0..segments {
                triangles.push([ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)]);
                triangles.push([ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)]);
            }
        }
        for j in 0..segments {
            triangles.push([ring(rings - 1, j), south, ring(rings - 1, j + 1)]);
        }
        Self {
            vertices,
            triangles,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    /// A side of the active domain box.
    DomainSide { axis: usize, upper: bool },
    /// Plane `x_axis = coord` restricted to the active domain; the fluid is on
    /// the side of increasing coordinate when `inward` is positive.
    Face { axis: usize, coord: f64, inward: f64 },
    /// Solid disc or ball; the fluid is outside.
    Ball { center: Vec3, radius: f64 },
    /// Solid triangle mesh; the fluid is outside.
    Mesh { mesh: Arc<TriMesh> },
}

impl Geometry {
    pub fn scaled(&self, k: f64) -> Self {
        match self {
            Geometry::DomainSide { .. } => self.clone(),
            Geometry::Face { axis, coord, inward } => Geometry::Face {
                axis: *axis,
                coord: coord * k,
                inward: *inward,
            },
            Geometry::Ball { center, radius } => Geometry::Ball {
                center: scale(center, k),
                radius: radius * k,
            },
            Geometry::Mesh { mesh } => Geometry::Mesh {
                mesh: Arc::new(mesh.transformed(k, [0.0; 3])),
            },
        }
    }

    /// Whether `x` lies inside a solid obstacle.
    pub fn blocks(&self, dim: usize, x: &Vec3) -> bool {
        match self {
            Geometry::Ball { center, radius } => {
                (0..dim).map(|k| (x[k] - center[k]).powi(2)).sum::<f64>() < radius * radius
            }
            Geometry::Mesh { mesh } => mesh.contains(x),
            _ => false,
        }
    }

    /// Uniform samples by length/area with inward unit normals.
    pub fn sample<R: Rng + ?Sized>(&self, domain: &Aabb, n: usize, rng: &mut R) -> Vec<(Vec3, Vec3)> {
        let dim = domain.dim;
        match self {
            Geometry::DomainSide { axis, upper } => {
                let coord = if *upper { domain.max[*axis] } else { domain.min[*axis] };
                let sign = if *upper { -1.0 } else { 1.0 };
                plane_samples(domain, *axis, coord, sign, n, rng)
            }
            Geometry::Face { axis, coord, inward } => {
                plane_samples(domain, *axis, *coord, inward.signum(), n, rng)
            }
            Geometry::Ball { center, radius } => (0..n)
                .map(|_| {
                    let dir = if dim == 2 {
                        let a = rng.gen::<f64>() * std::f64::consts::TAU;
                        [a.cos(), a.sin(), 0.0]
                    } else {
                        loop {
                            let g: Vec3 = [
                                rng.sample(StandardNormal),
                                rng.sample(StandardNormal),
                                rng.sample(StandardNormal),
                            ];
                            let l = norm(&g);
                            if l > 1e-12 {
                                break scale(&g, 1.0 / l);
                            }
                        }
                    };
                    (add(center, &scale(&dir, *radius)), dir)
                })
                .collect(),
            Geometry::Mesh { mesh } => {
                let cum = mesh.cumulative_areas();
                (0..n).map(|_| mesh.sample(&cum, rng)).collect()
            }
        }
    }
}

fn plane_samples<R: Rng + ?Sized>(
    domain: &Aabb,
    axis: usize,
    coord: f64,
    sign: f64,
    n: usize,
    rng: &mut R,
) -> Vec<(Vec3, Vec3)> {
    let mut normal = [0.0; 3];
    normal[axis] = sign;
    (0..n)
        .map(|_| {
            let mut x = domain.sample(rng);
            x[axis] = coord;
            (x, normal)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Condition {
    /// Type 1: prescribed velocity.
    Velocity(Vec3),
    /// Type 2: prescribed normal component `u·n`.
    Flux(f64),
}

impl Condition {
    pub fn scaled(&self, k: f64) -> Self {
        match self {
            Condition::Velocity(v) => Condition::Velocity(scale(v, k)),
            Condition::Flux(f) => Condition::Flux(f * k),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryPiece {
    pub geometry: Geometry,
    pub condition: Condition,
}

impl BoundaryPiece {
    pub fn sample<R: Rng + ?Sized>(&self, domain: &Aabb, n: usize, rng: &mut R) -> Vec<WallSample> {
        self.geometry
            .sample(domain, n, rng)
            .into_iter()
            .map(|(point, normal)| match self.condition {
                Condition::Velocity(v) => WallSample {
                    point,
                    normal,
                    velocity: v,
                    flux: 0.0,
                },
                Condition::Flux(f) => WallSample {
                    point,
                    normal,
                    velocity: [0.0; 3],
                    flux: f,
                },
            })
            .collect()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            geometry: self.geometry.scaled(k),
            condition: self.condition.scaled(k),
        }
    }
}

/// Rejection-samples `n` points in `domain` outside every obstacle.
pub fn sample_interior<R: Rng + ?Sized>(
    domain: &Aabb,
    obstacles: &[&Geometry],
    n: usize,
    rng: &mut R,
) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = domain.sample(rng);
        if !obstacles.iter().any(|g| g.blocks(domain.dim, &x)) {
            out.push(x);
        }
    }
    out
}

//! Uniform-grid spatial hash for compact-support kernels.
//!
//! Each particle is stored in every cell its support ball overlaps, so a
//! point query reads exactly one bucket. Buckets live in a dense CSR layout
//! over the bounding box of all balls.

use crate::linalg::Vec3;

/// Upper bound on the number of dense cells before the cell length is grown.
const MAX_CELLS: usize = 1 << 22;
/// Relative inflation of ball radii, absorbing rounding in the clamp test.
const RADIUS_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, Default)]
pub struct SpatialHash {
    dim: usize,
    cell_length: f64,
    origin: [i64; 3],
    dims: [usize; 3],
    starts: Vec<u32>,
    indices: Vec<u32>,
}

impl SpatialHash {
    /// Builds the hash from `(center, radius)` balls, indexed by position in
    /// the slice.
    pub fn build(dim: usize, balls: &[(Vec3, f64)]) -> Self {
        if balls.is_empty() {
            return Self {
                dim,
                ..Default::default()
            };
        }
        let max_radius = balls.iter().map(|b| b.1).fold(0.0_f64, f64::max);
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for (c, r) in balls {
            for k in 0..dim {
                lo[k] = lo[k].min(c[k] - r);
                hi[k] = hi[k].max(c[k] + r);
            }
        }
        let mut cell_length = if max_radius > 0.0 { max_radius } else { 1.0 };
        loop {
            let count: f64 = (0..dim)
                .map(|k| ((hi[k] - lo[k]) / cell_length).floor() + 2.0)
                .product();
            if count <= MAX_CELLS as f64 {
                break;
            }
            cell_length *= 2.0;
        }

        let mut origin = [0i64; 3];
        let mut dims = [1usize; 3];
        for k in 0..dim {
            origin[k] = (lo[k] / cell_length).floor() as i64;
            let top = (hi[k] / cell_length).floor() as i64;
            dims[k] = (top - origin[k] + 1) as usize;
        }
        let mut hash = Self {
            dim,
            cell_length,
            origin,
            dims,
            starts: Vec::new(),
            indices: Vec::new(),
        };

        let n_cells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0u32; n_cells + 1];
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        for (i, (c, r)) in balls.iter().enumerate() {
            let r = r * (1.0 + RADIUS_SLACK) + f64::EPSILON;
            hash.for_each_overlapped_cell(c, r, |cell| {
                counts[cell] += 1;
                pairs.push((cell as u32, i as u32));
            });
        }
        let mut acc = 0u32;
        for c in counts.iter_mut() {
            let n = *c;
            *c = acc;
            acc += n;
        }
        let mut fill = counts.clone();
        let mut indices = vec![0u32; pairs.len()];
        for (cell, i) in pairs {
            indices[fill[cell as usize] as usize] = i;
            fill[cell as usize] += 1;
        }
        hash.starts = counts;
        hash.indices = indices;
        hash
    }

    fn for_each_overlapped_cell(&self, c: &Vec3, r: f64, mut f: impl FnMut(usize)) {
        let l = self.cell_length;
        let mut lo = [0i64; 3];
        let mut hi = [0i64; 3];
        for k in 0..self.dim {
            lo[k] = ((c[k] - r) / l).floor() as i64;
            hi[k] = ((c[k] + r) / l).floor() as i64;
        }
        let r2 = r * r;
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for m in lo[2]..=hi[2] {
                    let cell = [i, j, m];
                    // squared distance from ball center to the closed cell box
                    let mut d2 = 0.0;
                    for k in 0..self.dim {
                        let a = cell[k] as f64 * l;
                        let b = a + l;
                        let d = if c[k] < a {
                            a - c[k]
                        } else if c[k] > b {
                            c[k] - b
                        } else {
                            0.0
                        };
                        d2 += d * d;
                    }
                    if d2 <= r2 {
                        if let Some(idx) = self.linear_index(&cell) {
                            f(idx);
                        }
                    }
                }
            }
        }
    }

    fn linear_index(&self, cell: &[i64; 3]) -> Option<usize> {
        let mut idx = 0usize;
        for k in (0..3).rev() {
            let off = if k < self.dim {
                cell[k] - self.origin[k]
            } else {
                0
            };
            if off < 0 || off as usize >= self.dims[k] {
                return None;
            }
            idx = idx * self.dims[k] + off as usize;
        }
        Some(idx)
    }

    pub fn cell_length(&self) -> f64 {
        self.cell_length
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Candidate particles whose support ball may contain `x`.
    #[inline]
    pub fn query(&self, x: &Vec3) -> &[u32] {
        if self.indices.is_empty() {
            return &[];
        }
        let mut cell = [0i64; 3];
        for k in 0..self.dim {
            let v = (x[k] / self.cell_length).floor();
            if !v.is_finite() {
                return &[];
            }
            cell[k] = v as i64;
        }
        match self.linear_index(&cell) {
            Some(idx) => {
                let a = self.starts[idx] as usize;
                let b = self.starts[idx + 1] as usize;
                &self.indices[a..b]
            }
            None => &[],
        }
    }

    /// Every bucket containing particle `i` (linear cell ids). Test helper.
    pub fn buckets_of(&self, i: u32) -> Vec<usize> {
        (0..self.starts.len().saturating_sub(1))
            .filter(|&c| {
                let a = self.starts[c] as usize;
                let b = self.starts[c + 1] as usize;
                self.indices[a..b].contains(&i)
            })
            .collect()
    }
}

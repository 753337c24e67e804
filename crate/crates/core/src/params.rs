//! Group-major parameter storage shared by fields, gradients and the optimizer.
//!
//! The flattened order is fixed project-wide: all positions, then all log
//! inverse scales, then all rotations, then all weights. Within a group the
//! layout is particle-major (`particle * width + component`).

use serde::{Deserialize, Serialize};

use crate::error::{GsrError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Position,
    LogInvScale,
    Rotation,
    Weight,
}

impl Group {
    pub const ALL: [Group; 4] = [
        Group::Position,
        Group::LogInvScale,
        Group::Rotation,
        Group::Weight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Position => "position",
            Group::LogInvScale => "log_inv_scale",
            Group::Rotation => "rotation",
            Group::Weight => "weight",
        }
    }

    /// Per-particle number of entries in this group.
    pub fn width(self, dim: usize) -> usize {
        match self {
            Group::Rotation => rotation_width(dim),
            _ => dim,
        }
    }
}

/// Angle in 2D, quaternion in 3D.
pub fn rotation_width(dim: usize) -> usize {
    if dim == 2 {
        1
    } else {
        4
    }
}

/// Per-particle parameter count.
pub fn particle_width(dim: usize) -> usize {
    3 * dim + rotation_width(dim)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    dim: usize,
    len: usize,
    groups: [Vec<f64>; 4],
}

/// Gradient of a scalar loss with respect to every particle parameter.
pub type ParamGradient = ParamSet;

impl ParamSet {
    pub fn zeros(dim: usize, len: usize) -> Self {
        let groups = Group::ALL.map(|g| vec![0.0; g.width(dim) * len]);
        Self { dim, len, groups }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of particles.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn group(&self, g: Group) -> &[f64] {
        &self.groups[g.index()]
    }

    pub fn group_mut(&mut self, g: Group) -> &mut [f64] {
        &mut self.groups[g.index()]
    }

    pub fn entry(&self, g: Group, particle: usize) -> &[f64] {
        let w = g.width(self.dim);
        &self.groups[g.index()][particle * w..(particle + 1) * w]
    }

    pub fn entry_mut(&mut self, g: Group, particle: usize) -> &mut [f64] {
        let w = g.width(self.dim);
        &mut self.groups[g.index()][particle * w..(particle + 1) * w]
    }

    pub fn total_len(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_len());
        for g in &self.groups {
            out.extend_from_slice(g);
        }
        out
    }

    pub fn from_flat(dim: usize, len: usize, flat: &[f64]) -> Result<Self> {
        let mut set = Self::zeros(dim, len);
        if flat.len() != set.total_len() {
            return Err(GsrError::Dimension {
                expected: set.total_len(),
                got: flat.len(),
            });
        }
        let mut offset = 0;
        for g in set.groups.iter_mut() {
            let n = g.len();
            g.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(set)
    }

    pub fn fill(&mut self, value: f64) {
        for g in self.groups.iter_mut() {
            g.iter_mut().for_each(|x| *x = value);
        }
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, s: f64, other: &ParamSet) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.groups.iter_mut().zip(&other.groups) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.groups.iter_mut() {
            g.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn dot(&self, other: &ParamSet) -> f64 {
        self.groups
            .iter()
            .zip(&other.groups)
            .flat_map(|(a, b)| a.iter().zip(b))
            .map(|(x, y)| x * y)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.groups.iter().flatten().all(|x| x.is_finite())
    }

    /// Zero every entry of the particles for which `keep` is false.
    pub fn mask_particles(&mut self, keep: &[bool]) {
        for g in Group::ALL {
            let w = g.width(self.dim);
            let data = &mut self.groups[g.index()];
            for (i, &k) in keep.iter().enumerate() {
                if !k {
                    data[i * w..(i + 1) * w].iter_mut().for_each(|x| *x = 0.0);
                }
            }
        }
    }

    pub(crate) fn push_particle(&mut self, entries: [&[f64]; 4]) {
        for (g, e) in Group::ALL.iter().zip(entries) {
            debug_assert_eq!(e.len(), g.width(self.dim));
            self.groups[g.index()].extend_from_slice(e);
        }
        self.len += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn flatten_roundtrip(dim in 2usize..=3, len in 0usize..6, seed in any::<u64>()) {
            let mut set = ParamSet::zeros(dim, len);
            let mut k = seed;
            for g in Group::ALL {
                for x in set.group_mut(g) {
                    k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    *x = (k >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                }
            }
            let flat = set.flatten();
            prop_assert_eq!(flat.len(), len * particle_width(dim));
            let back = ParamSet::from_flat(dim, len, &flat).unwrap();
            prop_assert_eq!(back, set);
        }
    }

    #[test]
    fn flat_order_is_group_major() {
        let mut set = ParamSet::zeros(2, 2);
        set.entry_mut(Group::Position, 1)[0] = 1.0;
        set.entry_mut(Group::Weight, 0)[1] = 2.0;
        let flat = set.flatten();
        assert_eq!(flat[2], 1.0);
        // positions 4, scales 4, rotations 2, then weights
        assert_eq!(flat[4 + 4 + 2 + 1], 2.0);
    }

    #[test]
    fn from_flat_rejects_wrong_length() {
        assert!(ParamSet::from_flat(3, 2, &[0.0; 5]).is_err());
    }
}

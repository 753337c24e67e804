//! Snapshots, loss tables, raster images and the grid error metric.

use std::fmt::Write as _;
use std::path::Path;

use crate::dynamics::{par_map, IterationRecord};
use crate::error::{GsrError, Result};
use crate::field::VelocityField;
use crate::fitting::InitRecord;
use crate::geometry::Aabb;
use crate::gsr::GsrField;
use crate::linalg::{scale, Vec3};
use crate::params::{rotation_width, Group, ParamSet};

pub const SNAPSHOT_MAGIC: &str = "GSRSNAP";
pub const SNAPSHOT_VERSION: u32 = 1;

/// One frame of a run, stored in the solver's normalized coordinates.
#[derive(Clone, Debug)]
pub struct FrameSnapshot {
    pub frame: u64,
    pub time: f64,
    pub field: GsrField,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

impl FrameSnapshot {
    pub fn to_text(&self) -> String {
        let f = &self.field;
        let d = f.dim();
        let mut s = String::new();
        writeln!(s, "{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION}").unwrap();
        writeln!(s, "dim {d}").unwrap();
        writeln!(s, "particles {}", f.len()).unwrap();
        writeln!(s, "clamp {}", num(f.clamp())).unwrap();
        writeln!(s, "frame {}", self.frame).unwrap();
        writeln!(s, "time {}", num(self.time)).unwrap();
        for i in 0..f.len() {
            let vals: Vec<String> = Group::ALL
                .iter()
                .flat_map(|&g| f.params().entry(g, i).iter().map(|&x| num(x)))
                .collect();
            s.push_str(&vals.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut next = |key: &str| -> Result<(usize, String)> {
            let (n, line) = lines.next().ok_or(GsrError::Snapshot {
                line: 0,
                msg: format!("missing `{key}` line"),
            })?;
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(GsrError::Snapshot {
                    line: n + 1,
                    msg: format!("expected `{key}`"),
                });
            }
            Ok((n + 1, it.next().unwrap_or("").to_string()))
        };
        let bad = |line: usize, msg: &str| GsrError::Snapshot {
            line,
            msg: msg.to_string(),
        };
        let (l, v) = next(SNAPSHOT_MAGIC)?;
        if v != SNAPSHOT_VERSION.to_string() {
            return Err(bad(l, "unsupported version"));
        }
        let (l, v) = next("dim")?;
        let dim: usize = v.parse().map_err(|_| bad(l, "bad dim"))?;
        if dim != 2 && dim != 3 {
            return Err(bad(l, "dim must be 2 or 3"));
        }
        let (l, v) = next("particles")?;
        let n: usize = v.parse().map_err(|_| bad(l, "bad particle count"))?;
        let (l, v) = next("clamp")?;
        let clamp: f64 = v.parse().map_err(|_| bad(l, "bad clamp"))?;
        if !(clamp > 0.0 && clamp < 1.0) {
            return Err(bad(l, "clamp must lie in (0, 1)"));
        }
        let (l, v) = next("frame")?;
        let frame: u64 = v.parse().map_err(|_| bad(l, "bad frame"))?;
        let (l, v) = next("time")?;
        let time: f64 = v.parse().map_err(|_| bad(l, "bad time"))?;

        let widths = [dim, dim, rotation_width(dim), dim];
        let per = widths.iter().sum::<usize>();
        let mut params = ParamSet::zeros(dim, n);
        let mut count = 0;
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            if count == n {
                return Err(bad(ln + 1, "more particle lines than declared"));
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(ln + 1, "bad number"))?;
            if vals.len() != per {
                return Err(bad(ln + 1, &format!("expected {per} values, got {}", vals.len())));
            }
            let mut off = 0;
            for (g, w) in Group::ALL.iter().zip(widths) {
                params.entry_mut(*g, count).copy_from_slice(&vals[off..off + w]);
                off += w;
            }
            count += 1;
        }
        if count != n {
            return Err(bad(0, &format!("declared {n} particles, found {count}")));
        }
        let field = GsrField::from_params(clamp, params)?;
        Ok(Self { frame, time, field })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Field in original units from one in coordinates scaled by `k`:
/// `μ/k`, `ln s⁻¹ + ln k`, `v/k`.
pub fn denormalize(field: &GsrField, k: f64) -> Result<GsrField> {
    rescale(field, 1.0 / k)
}

/// Inverse of [`denormalize`].
pub fn normalize(field: &GsrField, k: f64) -> Result<GsrField> {
    rescale(field, k)
}

fn rescale(field: &GsrField, k: f64) -> Result<GsrField> {
    let mut p = field.params().clone();
    p.group_mut(Group::Position).iter_mut().for_each(|x| *x *= k);
    let lk = k.ln();
    p.group_mut(Group::LogInvScale).iter_mut().for_each(|x| *x -= lk);
    p.group_mut(Group::Weight).iter_mut().for_each(|x| *x *= k);
    GsrField::from_params(field.clamp(), p)
}

/// Mean squared velocity error over the cell centers of an `n`-per-axis grid
/// on `domain` (original units). `field` lives in coordinates scaled by `k`.
pub fn mse_metric(field: &GsrField, k: f64, target: &dyn VelocityField, domain: &Aabb, n: usize) -> f64 {
    let pts = domain.cell_centers(n);
    let dim = domain.dim;
    let errs = par_map(&pts, |x| {
        let v = scale(&field.evaluate(&scale(x, k)), 1.0 / k);
        let u = target.velocity(x);
        (0..dim).map(|c| (v[c] - u[c]).powi(2)).sum::<f64>()
    });
    errs.iter().sum::<f64>() / pts.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantity {
    Vorticity,
    Divergence,
    Speed,
}

impl std::str::FromStr for Quantity {
    type Err = GsrError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vorticity" => Ok(Quantity::Vorticity),
            "divergence" => Ok(Quantity::Divergence),
            "speed" => Ok(Quantity::Speed),
            o => Err(GsrError::Config(format!("unknown quantity `{o}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB, top row first.
    pub rgb: Vec<u8>,
}

impl Image {
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.rgb);
        out
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }
}

pub const MIDPOINT: [u8; 3] = [255, 255, 255];
const COLD: [f64; 3] = [59.0, 76.0, 192.0];
const WARM: [f64; 3] = [180.0, 4.0, 38.0];

/// Diverging white-centered colormap for `t ∈ [−1, 1]`.
pub fn diverging(t: f64) -> [u8; 3] {
    let t = t.clamp(-1.0, 1.0);
    let end = if t < 0.0 { COLD } else { WARM };
    let a = t.abs();
    [0, 1, 2].map(|c| (255.0 * (1.0 - a) + end[c] * a).round() as u8)
}

/// Sequential black-to-yellow colormap for `t ∈ [0, 1]`.
pub fn sequential(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    [
        (255.0 * t.sqrt()).round() as u8,
        (255.0 * t).round() as u8,
        (255.0 * t * t).round() as u8,
    ]
}

/// Samples `quantity` at pixel centers over `domain` (original units) and maps
/// it through a colormap scaled by `range` (max |value| when `None`). 3D
/// fields are sliced at the middle of the last axis, with vorticity showing
/// the out-of-plane component.
pub fn rasterize(
    field: &GsrField,
    k: f64,
    domain: &Aabb,
    quantity: Quantity,
    width: usize,
    range: Option<f64>,
) -> Image {
    let aspect = domain.extent(1) / domain.extent(0);
    let height = ((width as f64 * aspect).round() as usize).max(1);
    let mut pts = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            let mut x = [0.0; 3];
            x[0] = domain.min[0] + (col as f64 + 0.5) / width as f64 * domain.extent(0);
            x[1] = domain.max[1] - (row as f64 + 0.5) / height as f64 * domain.extent(1);
            if domain.dim == 3 {
                x[2] = 0.5 * (domain.min[2] + domain.max[2]);
            }
            pts.push(scale(&x, k));
        }
    }
    let dim = field.dim();
    let vals = par_map(&pts, |x| match quantity {
        Quantity::Vorticity => {
            let c = field.curl(x);
            if dim == 2 {
                c[0]
            } else {
                c[2]
            }
        }
        Quantity::Divergence => field.divergence(x),
        Quantity::Speed => (0..dim).map(|c| field.evaluate(x)[c].powi(2)).sum::<f64>().sqrt() / k,
    });
    let r = range.unwrap_or_else(|| vals.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let r = if r > 0.0 { r } else { 1.0 };
    let rgb = vals
        .iter()
        .flat_map(|v| match quantity {
            Quantity::Speed => sequential(v / r),
            _ => diverging(v / r),
        })
        .collect();
    Image { width, height, rgb }
}

pub const PROJECTION_CSV_HEADER: &str =
    "iter,L_vor,L_div,L_b1,L_b2,L_aniso,L_vol,L_pos,total,lr_position,lr_log_inv_scale,lr_rotation,lr_weight";
pub const INIT_CSV_HEADER: &str =
    "iter,L_val,L_grad,L_aniso,L_vol,total,lr_position,lr_log_inv_scale,lr_rotation,lr_weight";

fn lr_cols(lrs: &[f64; 4]) -> String {
    lrs.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",")
}

pub fn projection_csv(history: &[IterationRecord]) -> String {
    let mut s = format!("{PROJECTION_CSV_HEADER}\n");
    for r in history {
        let l = &r.loss;
        writeln!(
            s,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            r.iter, l.vor, l.div, l.b1, l.b2, l.aniso, l.vol, l.pos, l.total,
            lr_cols(&r.lrs)
        )
        .unwrap();
    }
    s
}

pub fn init_csv(history: &[InitRecord]) -> String {
    let mut s = format!("{INIT_CSV_HEADER}\n");
    for r in history {
        let l = &r.loss;
        writeln!(
            s,
            "{},{:e},{:e},{:e},{:e},{:e},{}",
            r.iter, l.val, l.grad, l.aniso, l.vol, l.total,
            lr_cols(&r.lrs)
        )
        .unwrap();
    }
    s
}

/// Point in original units to solver coordinates.
pub fn to_solver(x: &Vec3, k: f64) -> Vec3 {
    scale(x, k)
}

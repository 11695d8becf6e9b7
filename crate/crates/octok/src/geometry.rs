//! Coordinate frames, grid fitting, cell addressing and in-cell offset
//! quantization.
//!
//! The grid is a cube of side `c0` split in half per axis at every level:
//! level 0 is the root cell, level `L-1` holds the leaf cells of side
//! `c_leaf = c0 / 2^(L-1)`. Leaf-internal positions are quantized on a
//! per-axis lattice of `n_p` bins of width `c_r`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Maximum tree depth accepted by [`fit_grid`].
pub const DEFAULT_MAX_LEVELS: u32 = 16;

/// Hard cap on depth: leaf Morton codes must fit in a u64.
pub const ABSOLUTE_MAX_LEVELS: u32 = 21;

/// A 3D point or displacement, in angstroms (unitless in voxel mode).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Component-wise maximum absolute difference.
    pub fn max_abs_diff(&self, other: &Vec3) -> f64 {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.z - other.z).abs())
    }

    pub fn distance(&self, other: &Vec3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// A typed site: an atom, a lattice vertex or an occupied voxel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Site {
    /// Vocabulary id (see [`crate::vocab`]).
    pub type_id: u32,
    pub pos: Vec3,
}

impl Site {
    pub fn new(type_id: u32, pos: Vec3) -> Self {
        Site { type_id, pos }
    }
}

/// One structure within a (possibly multi-frame) sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub sites: Vec<Site>,
    pub index: u32,
}

impl Frame {
    pub fn new(sites: Vec<Site>, index: u32) -> Self {
        Frame { sites, index }
    }
}

/// The hierarchical grid: placement, depth and quantization resolution.
///
/// Invariants are enforced at construction: `c0 = c_leaf * 2^(levels-1)`
/// exactly, `n_p = round(c_leaf / c_r) >= 1`, `levels >= 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    origin: Vec3,
    levels: u32,
    c_leaf: f64,
    c_root: f64,
    c_r: f64,
    n_p: u32,
}

impl GridSpec {
    pub fn new(origin: Vec3, levels: u32, c_leaf: f64, c_r: f64) -> Result<Self> {
        if !origin.is_finite() {
            return Err(Error::invalid("grid origin must be finite"));
        }
        if !(c_leaf.is_finite() && c_leaf > 0.0) {
            return Err(Error::invalid("leaf cell length must be positive"));
        }
        if !(c_r.is_finite() && c_r > 0.0 && c_r <= c_leaf) {
            return Err(Error::invalid(
                "offset resolution must be positive and at most the leaf length",
            ));
        }
        if !(2..=ABSOLUTE_MAX_LEVELS).contains(&levels) {
            return Err(Error::invalid(format!(
                "levels must lie in [2, {ABSOLUTE_MAX_LEVELS}], got {levels}"
            )));
        }
        let n_p = (c_leaf / c_r).round() as u32;
        debug_assert!(n_p >= 1);
        Ok(GridSpec {
            origin,
            levels,
            c_leaf,
            c_root: c_leaf * f64::from(1u32 << (levels - 1)),
            c_r,
            n_p,
        })
    }

    /// Min corner of the root cell.
    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    /// Tree depth L; levels run 0..L-1.
    pub fn levels(&self) -> u32 {
        self.levels
    }

    /// Leaf-cell side length (level L-1).
    pub fn c_leaf(&self) -> f64 {
        self.c_leaf
    }

    /// Root-cell side length, `c_leaf * 2^(L-1)`.
    pub fn c_root(&self) -> f64 {
        self.c_root
    }

    /// In-cell offset resolution.
    pub fn c_r(&self) -> f64 {
        self.c_r
    }

    /// Offset bins per axis.
    pub fn offsets_per_axis(&self) -> u32 {
        self.n_p
    }

    /// Default offset triple carried by tokens without an in-cell position.
    pub fn default_offsets(&self) -> [u32; 3] {
        let half = self.n_p / 2;
        [half, half, half]
    }

    /// Cell side length at `level`.
    pub fn cell_len(&self, level: u32) -> f64 {
        self.c_root / f64::from(1u32 << level)
    }

    /// Cells per axis at the leaf level, `2^(L-1)`.
    pub fn leaf_cells_per_axis(&self) -> u32 {
        1 << (self.levels - 1)
    }

    /// Min corner of a leaf cell.
    pub fn leaf_min(&self, leaf: [u32; 3]) -> Vec3 {
        Vec3::new(
            self.origin.x + f64::from(leaf[0]) * self.c_leaf,
            self.origin.y + f64::from(leaf[1]) * self.c_leaf,
            self.origin.z + f64::from(leaf[2]) * self.c_leaf,
        )
    }
}

fn joint_bounds(frames: &[Frame]) -> Result<(Vec3, Vec3)> {
    let mut min = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut max = Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut count = 0usize;
    for frame in frames {
        for site in &frame.sites {
            if !site.pos.is_finite() {
                return Err(Error::invalid("site coordinates must be finite"));
            }
            min.x = min.x.min(site.pos.x);
            min.y = min.y.min(site.pos.y);
            min.z = min.z.min(site.pos.z);
            max.x = max.x.max(site.pos.x);
            max.y = max.y.max(site.pos.y);
            max.z = max.z.max(site.pos.z);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid("at least one site is required to fit a grid"));
    }
    Ok((min, max))
}

fn centered_spec(min: Vec3, max: Vec3, levels: u32, c_leaf: f64, c_r: f64) -> Result<GridSpec> {
    let center = (min + max) * 0.5;
    let half = c_leaf * f64::from(1u32 << (levels - 1)) * 0.5;
    let origin = center - Vec3::new(half, half, half);
    GridSpec::new(origin, levels, c_leaf, c_r)
}

/// Fits the shallowest grid (L >= 2) whose root cell covers all frames'
/// sites plus `margin` on every side, with the joint bounding-box center at
/// the root-cell center. All frames of a sample share one grid.
pub fn fit_grid(frames: &[Frame], c_leaf: f64, c_r: f64, margin: f64) -> Result<GridSpec> {
    fit_grid_capped(frames, c_leaf, c_r, margin, DEFAULT_MAX_LEVELS)
}

/// [`fit_grid`] with an explicit depth cap.
pub fn fit_grid_capped(
    frames: &[Frame],
    c_leaf: f64,
    c_r: f64,
    margin: f64,
    max_levels: u32,
) -> Result<GridSpec> {
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(Error::invalid("margin must be non-negative"));
    }
    let (min, max) = joint_bounds(frames)?;
    let extent = (max.x - min.x).max(max.y - min.y).max(max.z - min.z);
    let required = extent + 2.0 * margin;
    let mut levels = 2u32;
    while c_leaf * f64::from(1u32 << (levels - 1)) < required {
        levels += 1;
        if levels > max_levels.min(ABSOLUTE_MAX_LEVELS) {
            return Err(Error::TooLarge {
                extent: required,
                c_leaf,
                max_levels,
            });
        }
    }
    centered_spec(min, max, levels, c_leaf, c_r)
}

/// Places a grid of fixed depth `levels`, centered like [`fit_grid`].
/// Errors if the sites (plus margin) do not fit the resulting root cell.
pub fn fit_grid_fixed(
    frames: &[Frame],
    c_leaf: f64,
    c_r: f64,
    margin: f64,
    levels: u32,
) -> Result<GridSpec> {
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(Error::invalid("margin must be non-negative"));
    }
    let (min, max) = joint_bounds(frames)?;
    let extent = (max.x - min.x).max(max.y - min.y).max(max.z - min.z);
    let required = extent + 2.0 * margin;
    if c_leaf * f64::from(1u32 << (levels.max(1) - 1)) < required {
        return Err(Error::TooLarge {
            extent: required,
            c_leaf,
            max_levels: levels,
        });
    }
    centered_spec(min, max, levels, c_leaf, c_r)
}

/// Leaf-cell index of a point: `floor((p - origin) / c_leaf)` per axis,
/// clamped to the leaf range. Points outside the root cell are rejected.
pub fn leaf_index_of(spec: &GridSpec, p: Vec3) -> Result<[u32; 3]> {
    if !p.is_finite() {
        return Err(Error::invalid("point coordinates must be finite"));
    }
    let o = spec.origin();
    let c0 = spec.c_root();
    if p.x < o.x || p.y < o.y || p.z < o.z || p.x > o.x + c0 || p.y > o.y + c0 || p.z > o.z + c0 {
        return Err(Error::OutOfBounds { point: p });
    }
    let hi = spec.leaf_cells_per_axis() - 1;
    let idx = |a: f64, oa: f64| -> u32 {
        let i = ((a - oa) / spec.c_leaf()).floor();
        (i.max(0.0) as u32).min(hi)
    };
    Ok([idx(p.x, o.x), idx(p.y, o.y), idx(p.z, o.z)])
}

/// Center of a cell at `level`: `origin + (cell + 0.5) * cell_len(level)`.
pub fn cell_center(spec: &GridSpec, level: u32, cell: [u32; 3]) -> Result<Vec3> {
    if level >= spec.levels() {
        return Err(Error::invalid(format!(
            "level {level} out of range for depth {}",
            spec.levels()
        )));
    }
    let cells = 1u32 << level;
    if cell.iter().any(|&c| c >= cells) {
        return Err(Error::invalid(format!(
            "cell ({}, {}, {}) out of range at level {level}",
            cell[0], cell[1], cell[2]
        )));
    }
    let len = spec.cell_len(level);
    let o = spec.origin();
    Ok(Vec3::new(
        o.x + (f64::from(cell[0]) + 0.5) * len,
        o.y + (f64::from(cell[1]) + 0.5) * len,
        o.z + (f64::from(cell[2]) + 0.5) * len,
    ))
}

/// Quantizes a point's position within its leaf cell to per-axis bin
/// indices in `[0, n_p)`. Clamping makes this total on float edge cases.
pub fn quantize_offset(spec: &GridSpec, p: Vec3, leaf: [u32; 3]) -> [u32; 3] {
    let lo = spec.leaf_min(leaf);
    let hi = spec.offsets_per_axis() - 1;
    let q = |a: f64, la: f64| -> u32 {
        let e = ((a - la) / spec.c_r()).floor();
        (e.max(0.0) as u32).min(hi)
    };
    [q(p.x, lo.x), q(p.y, lo.y), q(p.z, lo.z)]
}

/// Bin-midpoint dequantization: `leaf_min + (e + 0.5) * c_r` per axis.
/// The quantize/dequantize round trip stays within `c_r` on every axis.
pub fn dequantize_offset(spec: &GridSpec, leaf: [u32; 3], e: [u32; 3]) -> Result<Vec3> {
    if e.iter().any(|&v| v >= spec.offsets_per_axis()) {
        return Err(Error::invalid(format!(
            "offset ({}, {}, {}) out of range [0, {})",
            e[0],
            e[1],
            e[2],
            spec.offsets_per_axis()
        )));
    }
    let lo = spec.leaf_min(leaf);
    let c_r = spec.c_r();
    Ok(Vec3::new(
        lo.x + (f64::from(e[0]) + 0.5) * c_r,
        lo.y + (f64::from(e[1]) + 0.5) * c_r,
        lo.z + (f64::from(e[2]) + 0.5) * c_r,
    ))
}

/// Applies one uniformly random rotation (normalized quaternion from four
/// standard normals) about the joint centroid of all frames. Deterministic
/// for a given seed.
pub fn random_rotation(frames: &[Frame], seed: u64) -> Vec<Frame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let (q, norm) = loop {
        let q: [f64; 4] = [
            normal.sample(&mut rng),
            normal.sample(&mut rng),
            normal.sample(&mut rng),
            normal.sample(&mut rng),
        ];
        let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if norm > 1e-12 {
            break (q, norm);
        }
    };
    let (w, x, y, z) = (q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm);
    let rot = [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ];

    let mut centroid = Vec3::ZERO;
    let mut count = 0usize;
    for frame in frames {
        for site in &frame.sites {
            centroid = centroid + site.pos;
            count += 1;
        }
    }
    if count == 0 {
        return frames.to_vec();
    }
    let centroid = centroid * (1.0 / count as f64);

    frames
        .iter()
        .map(|frame| {
            let sites = frame
                .sites
                .iter()
                .map(|site| {
                    let d = site.pos - centroid;
                    let rotated = Vec3::new(
                        rot[0][0] * d.x + rot[0][1] * d.y + rot[0][2] * d.z,
                        rot[1][0] * d.x + rot[1][1] * d.y + rot[1][2] * d.z,
                        rot[2][0] * d.x + rot[2][1] * d.y + rot[2][2] * d.z,
                    );
                    Site::new(site.type_id, centroid + rotated)
                })
                .collect();
            Frame::new(sites, frame.index)
        })
        .collect()
}

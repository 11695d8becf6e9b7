//! Pruned occupancy octree over leaf cells, with 2-level subtree codes.
//!
//! Cells are addressed by Morton (z-order) codes. The child-index
//! convention is `ci = (ix << 2) | (iy << 1) | iz` with x most significant,
//! so a cell's Morton code is its root-to-cell path of `ci` choices and
//! `parent = code >> 3`. Breadth-first emission with ascending `ci`
//! therefore visits each level in ascending Morton order.

use crate::error::{Error, Result};
use crate::geometry::GridSpec;

/// 8-bit occupancy mask of a parent's children; never 0 for occupied cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubtreeCode(u8);

impl SubtreeCode {
    pub fn new(value: u8) -> Result<Self> {
        if value == 0 {
            return Err(Error::InvalidCode);
        }
        Ok(SubtreeCode(value))
    }

    pub fn value(&self) -> u8 {
        self.0
    }

    /// Number of occupied children.
    pub fn child_count(&self) -> u32 {
        self.0.count_ones()
    }
}

/// Per-level sorted Morton codes of occupied cells, root to leaves.
#[derive(Clone, Debug)]
pub struct Octree {
    spec: GridSpec,
    levels: Vec<Vec<u64>>,
}

// Bit spreading for 3D Morton interleave (21 bits per axis max).
#[inline]
fn spread(v: u64) -> u64 {
    let mut v = v & 0x1f_ffff;
    v = (v | v << 32) & 0x1f_0000_0000_ffff;
    v = (v | v << 16) & 0x1f_0000_ff00_00ff;
    v = (v | v << 8) & 0x100f_00f0_0f00_f00f;
    v = (v | v << 4) & 0x10c3_0c30_c30c_30c3;
    v = (v | v << 2) & 0x1249_2492_4924_9249;
    v
}

#[inline]
fn compact(v: u64) -> u64 {
    let mut v = v & 0x1249_2492_4924_9249;
    v = (v | v >> 2) & 0x10c3_0c30_c30c_30c3;
    v = (v | v >> 4) & 0x100f_00f0_0f00_f00f;
    v = (v | v >> 8) & 0x1f_0000_ff00_00ff;
    v = (v | v >> 16) & 0x1f_0000_0000_ffff;
    v = (v | v >> 32) & 0x1f_ffff;
    v
}

/// Morton code of a cell at `level`: bit-interleaved with x most
/// significant within each 3-bit group, matching the `ci` convention.
pub fn morton_encode(cell: [u32; 3], level: u32) -> Result<u64> {
    let cells = 1u64 << level;
    if cell.iter().any(|&c| u64::from(c) >= cells) {
        return Err(Error::invalid(format!(
            "cell ({}, {}, {}) out of range at level {level}",
            cell[0], cell[1], cell[2]
        )));
    }
    Ok(spread(u64::from(cell[0])) << 2
        | spread(u64::from(cell[1])) << 1
        | spread(u64::from(cell[2])))
}

/// Exact inverse of [`morton_encode`].
pub fn morton_decode(code: u64, level: u32) -> Result<[u32; 3]> {
    if code >= 1u64 << (3 * level.min(21)) {
        return Err(Error::invalid(format!(
            "morton code {code} out of range at level {level}"
        )));
    }
    Ok([
        compact(code >> 2) as u32,
        compact(code >> 1) as u32,
        compact(code) as u32,
    ])
}

/// Children of a parent cell selected by a subtree code, in ascending `ci`
/// order: `child = (parent << 1) + (ix, iy, iz)`.
pub fn children_from_code(parent: [u32; 3], code: SubtreeCode) -> Vec<[u32; 3]> {
    let mut children = Vec::with_capacity(code.child_count() as usize);
    for ci in 0..8u32 {
        if code.value() & (1 << ci) != 0 {
            children.push([
                (parent[0] << 1) + ((ci >> 2) & 1),
                (parent[1] << 1) + ((ci >> 1) & 1),
                (parent[2] << 1) + (ci & 1),
            ]);
        }
    }
    children
}

/// Builds the pruned octree for a set of occupied leaf cells: level L-1
/// holds the (deduplicated) leaves, each coarser level the parents of the
/// level below, down to the root.
pub fn build_octree(spec: &GridSpec, leaf_cells: &[[u32; 3]]) -> Result<Octree> {
    if leaf_cells.is_empty() {
        return Err(Error::invalid("cannot build an octree from zero leaves"));
    }
    let leaf_level = spec.levels() - 1;
    let mut codes = leaf_cells
        .iter()
        .map(|&cell| morton_encode(cell, leaf_level))
        .collect::<Result<Vec<u64>>>()?;
    codes.sort_unstable();
    codes.dedup();

    let mut levels = vec![Vec::new(); spec.levels() as usize];
    levels[leaf_level as usize] = codes;
    for l in (0..leaf_level as usize).rev() {
        let mut parents: Vec<u64> = levels[l + 1].iter().map(|c| c >> 3).collect();
        parents.dedup(); // input sorted, so parents are sorted too
        levels[l] = parents;
    }
    debug_assert_eq!(levels[0], vec![0]);
    Ok(Octree {
        spec: spec.clone(),
        levels,
    })
}

impl Octree {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Sorted Morton codes of occupied cells at `level`.
    pub fn level_codes(&self, level: u32) -> &[u64] {
        &self.levels[level as usize]
    }

    pub fn level_count(&self, level: u32) -> usize {
        self.levels[level as usize].len()
    }

    /// Occupied leaves at level L-1.
    pub fn leaf_count(&self) -> usize {
        self.levels.last().map_or(0, Vec::len)
    }

    fn occupied(&self, level: u32, code: u64) -> bool {
        self.levels[level as usize].binary_search(&code).is_ok()
    }

    /// Occupancy mask of a parent's 8 children: bit `ci` is set iff child
    /// `(ix, iy, iz)` with `ci = (ix << 2) | (iy << 1) | iz` is occupied at
    /// `level + 1`.
    pub fn subtree_code(&self, level: u32, parent: [u32; 3]) -> Result<SubtreeCode> {
        if level > self.spec.levels() - 2 {
            return Err(Error::invalid(format!(
                "subtree codes exist for levels 0..={}, got {level}",
                self.spec.levels() - 2
            )));
        }
        let pcode = morton_encode(parent, level)?;
        if !self.occupied(level, pcode) {
            return Err(Error::invalid(format!(
                "cell ({}, {}, {}) is not occupied at level {level}",
                parent[0], parent[1], parent[2]
            )));
        }
        let mut mask = 0u8;
        for ci in 0..8u64 {
            if self.occupied(level + 1, pcode << 3 | ci) {
                mask |= 1 << ci;
            }
        }
        SubtreeCode::new(mask)
    }

    /// All `(parent_code, subtree_code)` pairs at `level` in ascending
    /// Morton order, computed in one pass over the child level.
    pub fn subtree_codes_at(&self, level: u32) -> Vec<(u64, SubtreeCode)> {
        let children = &self.levels[level as usize + 1];
        let mut out: Vec<(u64, SubtreeCode)> = Vec::with_capacity(self.levels[level as usize].len());
        let mut current: Option<(u64, u8)> = None;
        for &code in children {
            let parent = code >> 3;
            let bit = 1u8 << (code & 7);
            match current {
                Some((p, mask)) if p == parent => current = Some((p, mask | bit)),
                Some((p, mask)) => {
                    debug_assert!(p < parent);
                    out.push((p, SubtreeCode(mask)));
                    current = Some((parent, bit));
                }
                None => current = Some((parent, bit)),
            }
        }
        if let Some((p, mask)) = current {
            out.push((p, SubtreeCode(mask)));
        }
        out
    }

    /// Total occupied cells at levels 0..=L-2 (the code-token count).
    pub fn interior_count(&self) -> usize {
        self.levels[..self.levels.len() - 1]
            .iter()
            .map(Vec::len)
            .sum()
    }
}

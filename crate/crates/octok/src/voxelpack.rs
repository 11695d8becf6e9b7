//! Lossless packing of boolean voxel grids into 8-channel byte volumes.
//!
//! Each non-overlapping 4x4x4 block (64 bits) maps to 8 bytes, one per
//! channel. Within a block, the local linear index is
//! `li = lz*16 + ly*4 + lx`; bit `li % 8` (LSB-first) of channel `li / 8`
//! holds the voxel. Grids store bits LSB-first in x-fastest row-major
//! order; packed volumes are channel-major with x-fastest blocks inside
//! each channel. Both layouts are fixed and mirrored by the on-disk
//! format.
//!
//! With the `parallel` feature (default), [`pack`] and [`unpack`] fan out
//! over z-slabs of blocks via rayon; the `_seq` variants always run
//! sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Frame, GridSpec, Site, Vec3};

/// Patch edge used for blank detection in the macroscopic pipeline.
pub const BLANK_PATCH_SIZE: u32 = 32;

/// Channels per packed volume (64 block bits / 8 bits per byte).
pub const CHANNELS: usize = 8;

/// A cubic boolean voxel grid, dimension divisible by 4.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoolGrid {
    dim: u32,
    bytes: Vec<u8>,
}

impl BoolGrid {
    /// An all-false grid. `dim` must be >= 4 and divisible by 4.
    pub fn new(dim: u32) -> Result<Self> {
        if dim < 4 || !dim.is_multiple_of(4) {
            return Err(Error::invalid(format!(
                "grid dimension must be >= 4 and divisible by 4, got {dim}"
            )));
        }
        let bits = (dim as usize)
            .checked_pow(3)
            .filter(|&b| b <= 1 << 36)
            .ok_or_else(|| Error::invalid(format!("grid dimension {dim} is too large")))?;
        Ok(BoolGrid {
            dim,
            bytes: vec![0u8; bits / 8],
        })
    }

    /// Wraps an existing LSB-first x-fastest bit buffer.
    pub fn from_bytes(dim: u32, bytes: Vec<u8>) -> Result<Self> {
        let mut grid = BoolGrid::new(dim)?;
        if bytes.len() != grid.bytes.len() {
            return Err(Error::invalid(format!(
                "expected {} bytes for dimension {dim}, got {}",
                grid.bytes.len(),
                bytes.len()
            )));
        }
        grid.bytes = bytes;
        Ok(grid)
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    #[inline]
    fn bit_index(&self, x: u32, y: u32, z: u32) -> usize {
        debug_assert!(x < self.dim && y < self.dim && z < self.dim);
        ((z as usize * self.dim as usize) + y as usize) * self.dim as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, z: u32) -> bool {
        let idx = self.bit_index(x, y, z);
        self.bytes[idx >> 3] & (1 << (idx & 7)) != 0
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, z: u32, value: bool) {
        let idx = self.bit_index(x, y, z);
        let mask = 1u8 << (idx & 7);
        if value {
            self.bytes[idx >> 3] |= mask;
        } else {
            self.bytes[idx >> 3] &= !mask;
        }
    }

    pub fn count_ones(&self) -> u64 {
        self.bytes.iter().map(|b| u64::from(b.count_ones())).sum()
    }

    /// Occupied voxels as leaf-cell triples.
    pub fn occupied_cells(&self) -> Vec<[u32; 3]> {
        let mut cells = Vec::new();
        for z in 0..self.dim {
            for y in 0..self.dim {
                for x in 0..self.dim {
                    if self.get(x, y, z) {
                        cells.push([x, y, z]);
                    }
                }
            }
        }
        cells
    }
}

/// The 8-channel byte volume produced by [`pack`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackedGrid {
    dim: u32,
    data: Vec<u8>,
}

impl PackedGrid {
    /// Wraps channel-major bytes; `dim` is the block dimension (grid/4).
    pub fn from_bytes(dim: u32, data: Vec<u8>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("packed dimension must be positive"));
        }
        let per_channel = (dim as usize)
            .checked_pow(3)
            .filter(|&b| b <= 1 << 33)
            .ok_or_else(|| Error::invalid(format!("packed dimension {dim} is too large")))?;
        if data.len() != CHANNELS * per_channel {
            return Err(Error::invalid(format!(
                "expected {} bytes for packed dimension {dim}, got {}",
                CHANNELS * per_channel,
                data.len()
            )));
        }
        Ok(PackedGrid { dim, data })
    }

    /// Blocks per axis (source grid dimension / 4).
    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[u8] {
        let n = (self.dim as usize).pow(3);
        &self.data[c * n..(c + 1) * n]
    }

    pub fn count_ones(&self) -> u64 {
        self.data.iter().map(|b| u64::from(b.count_ones())).sum()
    }
}

// Gathers one block's 64 bits. Rows of 4 bits are nibble-aligned in the
// grid buffer because both the block origin and the dimension are
// multiples of 4.
#[inline]
fn block_word(bytes: &[u8], dim: usize, bx: usize, by: usize, bz: usize) -> u64 {
    let mut word = 0u64;
    for lz in 0..4 {
        let z = bz * 4 + lz;
        for ly in 0..4 {
            let y = by * 4 + ly;
            let idx = (z * dim + y) * dim + bx * 4;
            let nibble = (bytes[idx >> 3] >> (idx & 7)) & 0xF;
            word |= u64::from(nibble) << (lz * 16 + ly * 4);
        }
    }
    word
}

fn block_words_seq(grid: &BoolGrid) -> Vec<u64> {
    let dim = grid.dim as usize;
    let db = dim / 4;
    let mut words = vec![0u64; db * db * db];
    for bz in 0..db {
        for by in 0..db {
            for bx in 0..db {
                words[(bz * db + by) * db + bx] = block_word(&grid.bytes, dim, bx, by, bz);
            }
        }
    }
    words
}

#[cfg(feature = "parallel")]
fn block_words_par(grid: &BoolGrid) -> Vec<u64> {
    let dim = grid.dim as usize;
    let db = dim / 4;
    let mut words = vec![0u64; db * db * db];
    words
        .par_chunks_mut(db * db)
        .enumerate()
        .for_each(|(bz, slab)| {
            for by in 0..db {
                for bx in 0..db {
                    slab[by * db + bx] = block_word(&grid.bytes, dim, bx, by, bz);
                }
            }
        });
    words
}

fn transpose_to_channels(words: &[u64], db: usize) -> PackedGrid {
    let n = db * db * db;
    let mut data = vec![0u8; CHANNELS * n];
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(n).enumerate().for_each(|(c, chunk)| {
        for (slot, &word) in chunk.iter_mut().zip(words) {
            *slot = (word >> (8 * c)) as u8;
        }
    });
    #[cfg(not(feature = "parallel"))]
    for (c, chunk) in data.chunks_mut(n).enumerate() {
        for (slot, &word) in chunk.iter_mut().zip(words) {
            *slot = (word >> (8 * c)) as u8;
        }
    }
    PackedGrid {
        dim: db as u32,
        data,
    }
}

/// Bit-packs a grid into its 8-channel byte volume.
pub fn pack(grid: &BoolGrid) -> PackedGrid {
    #[cfg(feature = "parallel")]
    let words = block_words_par(grid);
    #[cfg(not(feature = "parallel"))]
    let words = block_words_seq(grid);
    transpose_to_channels(&words, grid.dim as usize / 4)
}

/// Sequential reference implementation of [`pack`].
pub fn pack_seq(grid: &BoolGrid) -> PackedGrid {
    let words = block_words_seq(grid);
    let db = grid.dim as usize / 4;
    let n = db * db * db;
    let mut data = vec![0u8; CHANNELS * n];
    for (c, chunk) in data.chunks_mut(n).enumerate() {
        for (slot, &word) in chunk.iter_mut().zip(&words) {
            *slot = (word >> (8 * c)) as u8;
        }
    }
    PackedGrid {
        dim: db as u32,
        data,
    }
}

fn gather_words(packed: &PackedGrid) -> Vec<u64> {
    let n = (packed.dim as usize).pow(3);
    let mut words = vec![0u64; n];
    for c in 0..CHANNELS {
        let chunk = packed.channel(c);
        for (word, &byte) in words.iter_mut().zip(chunk) {
            *word |= u64::from(byte) << (8 * c);
        }
    }
    words
}

// Scatters one slab of blocks (fixed bz) back into grid bytes. A byte of
// the grid buffer never spans a z boundary because dim^2 is a multiple of
// 16, so slabs write disjoint byte ranges.
fn scatter_slab(slab_bytes: &mut [u8], words: &[u64], db: usize, dim: usize, bz: usize) {
    let slab_base = bz * 4 * dim * dim; // first bit index of the slab
    for by in 0..db {
        for bx in 0..db {
            let word = words[(bz * db + by) * db + bx];
            for lz in 0..4 {
                let z = bz * 4 + lz;
                for ly in 0..4 {
                    let y = by * 4 + ly;
                    let nibble = ((word >> (lz * 16 + ly * 4)) & 0xF) as u8;
                    let idx = (z * dim + y) * dim + bx * 4 - slab_base;
                    slab_bytes[idx >> 3] |= nibble << (idx & 7);
                }
            }
        }
    }
}

/// Exact inverse of [`pack`].
pub fn unpack(packed: &PackedGrid) -> BoolGrid {
    let words = gather_words(packed);
    let db = packed.dim as usize;
    let dim = db * 4;
    let mut bytes = vec![0u8; dim * dim * dim / 8];
    let slab_len = 4 * dim * dim / 8;
    #[cfg(feature = "parallel")]
    bytes
        .par_chunks_mut(slab_len)
        .enumerate()
        .for_each(|(bz, slab)| scatter_slab(slab, &words, db, dim, bz));
    #[cfg(not(feature = "parallel"))]
    for (bz, slab) in bytes.chunks_mut(slab_len).enumerate() {
        scatter_slab(slab, &words, db, dim, bz);
    }
    BoolGrid {
        dim: dim as u32,
        bytes,
    }
}

/// Sequential reference implementation of [`unpack`].
pub fn unpack_seq(packed: &PackedGrid) -> BoolGrid {
    let words = gather_words(packed);
    let db = packed.dim as usize;
    let dim = db * 4;
    let mut bytes = vec![0u8; dim * dim * dim / 8];
    let slab_len = 4 * dim * dim / 8;
    for (bz, slab) in bytes.chunks_mut(slab_len).enumerate() {
        scatter_slab(slab, &words, db, dim, bz);
    }
    BoolGrid {
        dim: dim as u32,
        bytes,
    }
}

/// True iff every voxel in the `size`^3 patch at `origin` is false.
pub fn is_blank_patch(grid: &BoolGrid, origin: [u32; 3], size: u32) -> Result<bool> {
    if size == 0 {
        return Err(Error::invalid("patch size must be positive"));
    }
    if origin.iter().any(|&o| o.checked_add(size).is_none() || o + size > grid.dim()) {
        return Err(Error::invalid(format!(
            "patch at ({}, {}, {}) with size {size} exceeds grid dimension {}",
            origin[0],
            origin[1],
            origin[2],
            grid.dim()
        )));
    }
    for z in origin[2]..origin[2] + size {
        for y in origin[1]..origin[1] + size {
            for x in origin[0]..origin[0] + size {
                if grid.get(x, y, z) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Grid spec routing a voxel grid through the octree tokenizer: unit leaf
/// cells, depth `log2(dim) + 1`, offsets binned like the molecular default
/// (n_p = 24). Requires a power-of-two dimension.
pub fn voxel_grid_spec(dim: u32) -> Result<GridSpec> {
    if !dim.is_power_of_two() {
        return Err(Error::invalid(format!(
            "octree tokenization needs a power-of-two dimension, got {dim}"
        )));
    }
    let levels = dim.trailing_zeros() + 1;
    GridSpec::new(Vec3::ZERO, levels, 1.0, 1.0 / 24.0)
}

/// One site per set voxel (type `OCC`, positioned at the voxel center),
/// ready for the octree tokenizer.
pub fn voxel_frame(grid: &BoolGrid, frame_index: u32) -> Frame {
    let sites = grid
        .occupied_cells()
        .into_iter()
        .map(|cell| {
            Site::new(
                crate::vocab::VOXEL_OCCUPIED,
                Vec3::new(
                    f64::from(cell[0]) + 0.5,
                    f64::from(cell[1]) + 0.5,
                    f64::from(cell[2]) + 0.5,
                ),
            )
        })
        .collect();
    Frame::new(sites, frame_index)
}

/// Rebuilds a grid from a decoded voxel frame (the inverse of
/// [`voxel_frame`] under the tokenizer round trip).
pub fn frame_to_grid(spec: &GridSpec, frame: &Frame) -> Result<BoolGrid> {
    let dim = spec.leaf_cells_per_axis();
    let mut grid = BoolGrid::new(dim)?;
    for site in &frame.sites {
        let cell = crate::geometry::leaf_index_of(spec, site.pos)?;
        grid.set(cell[0], cell[1], cell[2], true);
    }
    Ok(grid)
}

pub mod file {
    //! Raw on-disk formats: 16-byte header (magic `OCTK`, version u16 LE,
    //! dimension u32 LE, kind u8, 5 reserved zero bytes) followed by the
    //! payload bytes in the in-memory layout.

    use super::{BoolGrid, PackedGrid};
    use crate::error::{Error, Result};

    pub const MAGIC: [u8; 4] = *b"OCTK";
    pub const VERSION: u16 = 1;
    pub const KIND_BOOL: u8 = 0;
    pub const KIND_PACKED: u8 = 1;

    fn header(dim: u32, kind: u8) -> [u8; 16] {
        let mut h = [0u8; 16];
        h[0..4].copy_from_slice(&MAGIC);
        h[4..6].copy_from_slice(&VERSION.to_le_bytes());
        h[6..10].copy_from_slice(&dim.to_le_bytes());
        h[10] = kind;
        h
    }

    fn parse_header(bytes: &[u8], expected_kind: u8) -> Result<u32> {
        if bytes.len() < 16 {
            return Err(Error::invalid("grid file shorter than its header"));
        }
        if bytes[0..4] != MAGIC {
            return Err(Error::invalid("bad magic, not an OCTK grid file"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::invalid(format!(
                "unsupported grid file version {version}"
            )));
        }
        if bytes[10] != expected_kind {
            return Err(Error::invalid(format!(
                "wrong grid kind {} (expected {expected_kind})",
                bytes[10]
            )));
        }
        Ok(u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]))
    }

    pub fn encode_grid(grid: &BoolGrid) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + grid.as_bytes().len());
        out.extend_from_slice(&header(grid.dim(), KIND_BOOL));
        out.extend_from_slice(grid.as_bytes());
        out
    }

    pub fn decode_grid(bytes: &[u8]) -> Result<BoolGrid> {
        let dim = parse_header(bytes, KIND_BOOL)?;
        BoolGrid::from_bytes(dim, bytes[16..].to_vec())
    }

    pub fn encode_packed(packed: &PackedGrid) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + packed.as_bytes().len());
        out.extend_from_slice(&header(packed.dim(), KIND_PACKED));
        out.extend_from_slice(packed.as_bytes());
        out
    }

    pub fn decode_packed(bytes: &[u8]) -> Result<PackedGrid> {
        let dim = parse_header(bytes, KIND_PACKED)?;
        PackedGrid::from_bytes(dim, bytes[16..].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(dim: u32, seed: u64) -> BoolGrid {
        let mut grid = BoolGrid::new(dim).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.fill(grid.bytes.as_mut_slice());
        grid
    }

    #[test]
    fn dimension_validation() {
        assert!(BoolGrid::new(4).is_ok());
        assert!(BoolGrid::new(0).is_err());
        assert!(BoolGrid::new(3).is_err());
        assert!(BoolGrid::new(6).is_err());
        assert!(BoolGrid::from_bytes(4, vec![0; 7]).is_err());
    }

    #[test]
    fn all_zero_grid_packs_to_zero() {
        let grid = BoolGrid::new(8).unwrap();
        let packed = pack(&grid);
        assert!(packed.as_bytes().iter().all(|&b| b == 0));
        assert_eq!(packed.dim(), 2);
    }

    #[test]
    fn single_voxel_lands_in_declared_channel_bit() {
        // Local (1,2,3): li = 3*16 + 2*4 + 1 = 57 => channel 7, bit 1.
        let mut grid = BoolGrid::new(4).unwrap();
        grid.set(1, 2, 3, true);
        let packed = pack(&grid);
        for c in 0..CHANNELS {
            let expected = if c == 7 { 2 } else { 0 };
            assert_eq!(packed.channel(c), &[expected], "channel {c}");
        }
    }

    #[test]
    fn pack_unpack_round_trip_random() {
        for seed in 0..4 {
            let grid = random_grid(64, seed);
            assert_eq!(unpack(&pack(&grid)), grid);
            assert_eq!(unpack_seq(&pack_seq(&grid)), grid);
        }
    }

    #[test]
    fn parallel_and_sequential_paths_agree() {
        let grid = random_grid(32, 99);
        assert_eq!(pack(&grid), pack_seq(&grid));
        let packed = pack(&grid);
        assert_eq!(unpack(&packed), unpack_seq(&packed));
    }

    #[test]
    fn popcount_is_preserved() {
        let grid = random_grid(16, 5);
        let packed = pack(&grid);
        assert_eq!(grid.count_ones(), packed.count_ones());
    }

    #[test]
    fn blank_patch_detection() {
        let mut grid = BoolGrid::new(64).unwrap();
        assert!(is_blank_patch(&grid, [0, 0, 0], 32).unwrap());
        grid.set(10, 11, 12, true);
        assert!(!is_blank_patch(&grid, [0, 0, 0], 32).unwrap());
        // Voxel just outside the patch boundary.
        assert!(is_blank_patch(&grid, [32, 0, 0], 32).unwrap());
        assert!(is_blank_patch(&grid, [0, 0, 32], 32).unwrap());
        let mut boundary = BoolGrid::new(64).unwrap();
        boundary.set(32, 0, 0, true);
        assert!(is_blank_patch(&boundary, [0, 0, 0], 32).unwrap());
        assert!(!is_blank_patch(&boundary, [32, 0, 0], 32).unwrap());
        assert!(is_blank_patch(&grid, [40, 0, 0], 32).is_err());
    }

    #[test]
    fn grid_file_round_trip() {
        let grid = random_grid(16, 3);
        let encoded = file::encode_grid(&grid);
        assert_eq!(&encoded[0..4], b"OCTK");
        assert_eq!(encoded.len(), 16 + 16 * 16 * 16 / 8);
        assert_eq!(file::decode_grid(&encoded).unwrap(), grid);

        let packed = pack(&grid);
        let encoded = file::encode_packed(&packed);
        assert_eq!(file::decode_packed(&encoded).unwrap(), packed);

        assert!(file::decode_packed(&file::encode_grid(&grid)).is_err());
        assert!(file::decode_grid(b"JUNK").is_err());
    }

    #[test]
    fn voxel_octree_round_trip() {
        let mut grid = BoolGrid::new(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..40 {
            grid.set(
                rng.random_range(0..8),
                rng.random_range(0..8),
                rng.random_range(0..8),
            rng.random_range(0..2) == 1,
            );
        }
        grid.set(0, 0, 0, true);
        let spec = voxel_grid_spec(grid.dim()).unwrap();
        assert_eq!(spec.levels(), 4);
        assert_eq!(spec.offsets_per_axis(), 24);
        let frame = voxel_frame(&grid, 0);
        let seq = crate::tokenizer::serialize(
            &spec,
            &[frame],
            &crate::tokenizer::SerializeOptions::default(),
        )
        .unwrap();
        let decoded = crate::tokenizer::decode(&seq).unwrap();
        assert_eq!(frame_to_grid(&spec, &decoded[0]).unwrap(), grid);
        assert!(voxel_grid_spec(6).is_err());
    }
}

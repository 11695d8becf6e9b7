//! Coarse-to-fine octree tokenization of sparse 3D structures.
//!
//! Structures (molecules, crystal frames, voxel grids) are encoded into
//! compact 1D token sequences by a pruned occupancy octree whose two-level
//! subtrees collapse into single 8-bit codes, followed by fine-grained
//! per-leaf site tokens with quantized in-cell offsets. Sequences round
//! trip losslessly up to the offset resolution, can be expanded into the
//! masked next-token form, and carry enough positional information to be
//! decoded breadth-first without any side channel.
//!
//! Modules:
//! - [`geometry`]: grids, cell addressing, offset quantization, rotation.
//! - [`octree`]: Morton codes, occupancy levels, subtree codes.
//! - [`tokenizer`]: sequence serialization, MNTP expansion, decoding.
//! - [`jsonl`]: the token JSONL interchange format.
//! - [`voxelpack`]: boolean-grid bit packing and voxel-to-octree routing.
//! - [`sampler`]: count-based sampling, scoring and top-r ranking.
//!
//! Batch entry points (`serialize_many`, `decode_many`, `sample_many`,
//! `pack`, `unpack`) run data-parallel under the default `parallel`
//! feature and sequentially without it; `_seq` variants are always
//! sequential.

pub mod error;
pub mod geometry;
pub mod jsonl;
pub mod octree;
pub mod sampler;
pub mod tokenizer;
pub mod vocab;
pub mod voxelpack;

pub use error::{Error, Result};
pub use geometry::{
    cell_center, dequantize_offset, fit_grid, fit_grid_capped, fit_grid_fixed, leaf_index_of,
    quantize_offset, random_rotation, Frame, GridSpec, Site, Vec3,
};
pub use octree::{build_octree, children_from_code, morton_decode, morton_encode, Octree, SubtreeCode};
pub use sampler::{rank, sample, sample_many, sample_many_seq, score, CodeModel, SampleScore};
pub use tokenizer::{
    decode, decode_many, decode_many_seq, mntp_expand, serialize, serialize_frame, serialize_many,
    serialize_many_seq, token_stats, SerializeOptions, StatsReport, Token, TokenKind,
    TokenSequence,
};
pub use voxelpack::{is_blank_patch, pack, pack_seq, unpack, unpack_seq, BoolGrid, PackedGrid};

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use octok::error::Error;
use octok::geometry::DEFAULT_MAX_LEVELS;
use octok::tokenizer::{serialize, SerializeOptions};
use octok::voxelpack::{self, file as gridfile};
use octok::{
    decode, fit_grid, fit_grid_fixed, jsonl, leaf_index_of, morton_encode, random_rotation,
    sampler, vocab, CodeModel, Frame, GridSpec, TokenSequence,
};

use crate::formats;
use crate::{Format, GridArgs};

/// All outputs are written to a temporary file in the destination
/// directory and renamed into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))
        .context("creating temporary output file")?;
    std::io::Write::write_all(&mut tmp, bytes)?;
    tmp.persist(path)
        .with_context(|| format!("renaming output into {}", path.display()))?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

struct LoadedInput {
    frames: Vec<Frame>,
    /// Fixed by the input itself (voxel grids pin depth and cell size).
    forced_spec: Option<GridSpec>,
}

fn load_input(path: &Path, format: Format) -> Result<LoadedInput> {
    match format {
        Format::Xyz => Ok(LoadedInput {
            frames: vec![formats::parse_xyz(&read_text(path)?)?],
            forced_spec: None,
        }),
        Format::Crystal => {
            let (lattice, atoms) = formats::parse_crystal(&read_text(path)?)?;
            Ok(LoadedInput {
                frames: vec![lattice, atoms],
                forced_spec: None,
            })
        }
        Format::Voxgrid => {
            let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let grid = gridfile::decode_grid(&bytes)?;
            let spec = voxelpack::voxel_grid_spec(grid.dim())?;
            Ok(LoadedInput {
                frames: vec![voxelpack::voxel_frame(&grid, 0)],
                forced_spec: Some(spec),
            })
        }
    }
}

fn build_spec(frames: &[Frame], grid: &GridArgs) -> Result<GridSpec> {
    let margin = grid.leaf / 2.0;
    let spec = match grid.levels {
        Some(levels) => fit_grid_fixed(frames, grid.leaf, grid.res, margin, levels)?,
        None => fit_grid(frames, grid.leaf, grid.res, margin)?,
    };
    Ok(spec)
}

// Serialize, deepening on leaf collisions when allowed: halving the leaf
// length adds one level at the same root size and splits the colliding
// cell. The offset resolution halves alongside so the bin count stays
// put (the coordinate guarantee only tightens).
fn serialize_with_retry(
    frames: &[Frame],
    grid: &GridArgs,
    options: &SerializeOptions,
    auto_deepen: bool,
) -> Result<TokenSequence> {
    let mut leaf = grid.leaf;
    let mut res = grid.res;
    let mut levels = grid.levels;
    loop {
        let args = GridArgs {
            levels,
            auto_l: grid.auto_l,
            leaf,
            res,
        };
        let spec = build_spec(frames, &args)?;
        match serialize(&spec, frames, options) {
            Err(Error::LeafCollision { cell, first, second }) if auto_deepen => {
                if spec.levels() >= DEFAULT_MAX_LEVELS {
                    bail!(
                        "sites {first} and {second} still collide in cell \
                         ({}, {}, {}) at the maximum depth",
                        cell[0],
                        cell[1],
                        cell[2]
                    );
                }
                leaf /= 2.0;
                res /= 2.0;
                levels = levels.map(|l| l + 1);
            }
            other => return Ok(other?),
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn tokenize(
    input: &Path,
    format: Format,
    output: &Path,
    mntp: bool,
    grid: &GridArgs,
    seed: Option<u64>,
    rotate: bool,
    auto_deepen: bool,
) -> Result<()> {
    let loaded = load_input(input, format)?;
    let options = SerializeOptions {
        mntp,
        with_specials: true,
    };
    let seq = match loaded.forced_spec {
        Some(spec) => {
            if grid.levels.is_some() || rotate {
                bail!("--L and --rotate do not apply to voxel grids (depth and alignment are fixed by the grid)");
            }
            serialize(&spec, &loaded.frames, &options)?
        }
        None => {
            let frames = if rotate {
                random_rotation(&loaded.frames, seed.expect("clap enforces --seed"))
            } else {
                loaded.frames
            };
            serialize_with_retry(&frames, grid, &options, auto_deepen)?
        }
    };
    write_atomic(output, jsonl::to_string(&seq).as_bytes())
}

pub fn detokenize(input: &Path, output: &Path) -> Result<()> {
    let seq = jsonl::from_str(&read_text(input)?)?;
    let frames = decode(&seq)?;
    let all_voxel = !frames.is_empty()
        && frames
            .iter()
            .flat_map(|f| &f.sites)
            .all(|s| s.type_id == vocab::VOXEL_OCCUPIED);
    if all_voxel && frames.len() == 1 {
        let grid = voxelpack::frame_to_grid(&seq.spec, &frames[0])?;
        write_atomic(output, &gridfile::encode_grid(&grid))
    } else {
        write_atomic(output, formats::write_xyz(&frames)?.as_bytes())
    }
}

#[derive(serde::Serialize)]
struct VerifyReport {
    frames: usize,
    sites: usize,
    max_error: f64,
    limit: f64,
    ok: bool,
}

pub fn verify(input: &Path, format: Format, grid: &GridArgs) -> Result<()> {
    let loaded = load_input(input, format)?;
    let spec = match loaded.forced_spec {
        Some(spec) => spec,
        None => build_spec(&loaded.frames, grid)?,
    };
    let seq = serialize(&spec, &loaded.frames, &SerializeOptions::default())?;
    let decoded = decode(&seq)?;
    if decoded.len() != loaded.frames.len() {
        bail!(
            "frame count changed in round trip: {} -> {}",
            loaded.frames.len(),
            decoded.len()
        );
    }

    let mut max_error = 0.0f64;
    let mut sites = 0usize;
    for (original, round_tripped) in loaded.frames.iter().zip(&decoded) {
        if original.sites.len() != round_tripped.sites.len() {
            bail!(
                "site count changed in frame {}: {} -> {}",
                original.index,
                original.sites.len(),
                round_tripped.sites.len()
            );
        }
        // Decoded sites come back in Morton order of their leaf cells.
        let leaf_level = spec.levels() - 1;
        let mut ordered: Vec<(u64, &octok::Site)> = original
            .sites
            .iter()
            .map(|site| {
                let leaf = leaf_index_of(&spec, site.pos)?;
                Ok((morton_encode(leaf, leaf_level)?, site))
            })
            .collect::<octok::Result<_>>()?;
        ordered.sort_by_key(|&(code, _)| code);
        for ((_, original_site), decoded_site) in ordered.iter().zip(&round_tripped.sites) {
            if original_site.type_id != decoded_site.type_id {
                bail!(
                    "site type changed in frame {}: {} -> {}",
                    original.index,
                    original_site.type_id,
                    decoded_site.type_id
                );
            }
            max_error = max_error.max(original_site.pos.max_abs_diff(&decoded_site.pos));
            sites += 1;
        }
    }

    let report = VerifyReport {
        frames: decoded.len(),
        sites,
        max_error,
        limit: spec.c_r(),
        ok: max_error <= spec.c_r(),
    };
    println!("{}", serde_json::to_string(&report)?);
    if !report.ok {
        bail!(
            "max coordinate error {:.6} exceeds resolution {:.6}",
            report.max_error,
            report.limit
        );
    }
    Ok(())
}

pub fn stats(input: &Path) -> Result<()> {
    let seq = jsonl::from_str(&read_text(input)?)?;
    let report = seq.stats();
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

pub fn fit(corpus: &Path, output: &Path, alpha: f64) -> Result<()> {
    let mut paths: Vec<_> = fs::read_dir(corpus)
        .with_context(|| format!("reading corpus directory {}", corpus.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "jsonl"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .jsonl files in {}", corpus.display());
    }
    let sequences: Vec<TokenSequence> = paths
        .iter()
        .map(|p| jsonl::from_str(&read_text(p)?).with_context(|| p.display().to_string()))
        .collect::<Result<_>>()?;
    let model = CodeModel::fit(&sequences, alpha)?;
    write_atomic(output, model.to_json().as_bytes())
}

pub fn sample(
    model_path: &Path,
    n: usize,
    seed: u64,
    temperature: f64,
    top_r: usize,
    output: &Path,
) -> Result<()> {
    if n == 0 {
        bail!("--n must be at least 1");
    }
    let model = CodeModel::from_json(&read_text(model_path)?)?;
    let spec = model.sampling_spec()?;
    let samples = sampler::sample_many(&model, &spec, seed, n, temperature)?;
    let kept = sampler::rank(&samples, &model, top_r.min(n))?;
    fs::create_dir_all(output)
        .with_context(|| format!("creating output directory {}", output.display()))?;
    for (i, seq) in kept.iter().enumerate() {
        let path = output.join(format!("sample_{i:03}.jsonl"));
        write_atomic(&path, jsonl::to_string(seq).as_bytes())?;
    }
    Ok(())
}

pub fn pack(input: &Path, output: &Path) -> Result<()> {
    let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let grid = gridfile::decode_grid(&bytes)?;
    let packed = octok::pack(&grid);
    write_atomic(output, &gridfile::encode_packed(&packed))
}

pub fn unpack(input: &Path, output: &Path) -> Result<()> {
    let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let packed = gridfile::decode_packed(&bytes)?;
    let grid = octok::unpack(&packed);
    write_atomic(output, &gridfile::encode_grid(&grid))
}

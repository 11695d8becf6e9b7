//! Count-based conditional model over subtree codes and atom types.
//!
//! A model-free stand-in for a learned predictor: code counts are keyed by
//! (level, parent code), atom types by a single leaf-level table, both
//! Laplace-smoothed. Sampling walks the MNTP order, computing each next
//! mask position from the already-decoded frontier, so every sample
//! decodes by construction. Scoring sums per-content-token log
//! probabilities for top-r ranking.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{cell_center, dequantize_offset, GridSpec};
use crate::jsonl;
use crate::octree::{children_from_code, morton_decode, SubtreeCode};
use crate::tokenizer::{Token, TokenKind, TokenSequence};
use crate::vocab;

/// Root context for level-0 code tokens (cells without a parent code).
pub const ROOT_CONTEXT: u8 = 0;

/// Smoothed count tables over subtree codes and atom types.
#[derive(Clone, Debug, PartialEq)]
pub struct CodeModel {
    alpha: f64,
    levels: u32,
    c_leaf: f64,
    c_r: f64,
    code_counts: BTreeMap<(u32, u8), Box<[u64; 256]>>,
    type_counts: BTreeMap<u32, u64>,
}

/// Cumulative log-probability of a sequence, one entry per content token
/// (masks excluded; they carry no content).
#[derive(Clone, Debug)]
pub struct SampleScore {
    pub total_logprob: f64,
    pub per_token: Vec<f64>,
}

enum Event {
    Code { level: u32, parent: u8, value: u8 },
    Atom { type_id: u32 },
}

// Replays the frontier walk, attaching each code token to the subtree
// code that spawned its cell. Cells themselves are irrelevant here; only
// the parent-code context and child counts matter.
fn walk_events(seq: &TokenSequence) -> Result<Vec<Event>> {
    let leaf_level = seq.spec.levels() - 1;
    let content: Vec<&Token> = seq
        .content_tokens()
        .filter(|t| t.kind != TokenKind::Mask)
        .collect();
    let mut events = Vec::with_capacity(content.len());
    let mut pos = 0usize;
    while pos < content.len() {
        let mut frontier: Vec<u8> = vec![ROOT_CONTEXT];
        for level in 0..leaf_level {
            let mut next = Vec::with_capacity(frontier.len() * 2);
            for &parent in &frontier {
                let token = content
                    .get(pos)
                    .ok_or_else(|| Error::malformed(pos, "expected code token, found end"))?;
                if token.kind != TokenKind::Code || token.level != level {
                    return Err(Error::malformed(pos, "expected code token"));
                }
                if token.content == 0 {
                    return Err(Error::InvalidCode);
                }
                let value = u8::try_from(token.content)
                    .map_err(|_| Error::malformed(pos, "code token content above 255"))?;
                events.push(Event::Code {
                    level,
                    parent,
                    value,
                });
                for _ in 0..value.count_ones() {
                    next.push(value);
                }
                pos += 1;
            }
            frontier = next;
        }
        for _ in 0..frontier.len() {
            let token = content
                .get(pos)
                .ok_or_else(|| Error::malformed(pos, "expected atom token, found end"))?;
            if token.kind != TokenKind::Atom {
                return Err(Error::malformed(pos, "expected atom token"));
            }
            events.push(Event::Atom {
                type_id: token.content,
            });
            pos += 1;
        }
    }
    Ok(events)
}

impl CodeModel {
    /// A purely smoothed model with no observations: every code
    /// distribution is uniform over 1..=255.
    pub fn empty(levels: u32, c_leaf: f64, c_r: f64, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid("smoothing alpha must be positive"));
        }
        Ok(CodeModel {
            alpha,
            levels,
            c_leaf,
            c_r,
            code_counts: BTreeMap::new(),
            type_counts: BTreeMap::new(),
        })
    }

    /// Accumulates counts from tokenized sequences. All sequences must
    /// share depth and quantization conventions.
    pub fn fit(corpus: &[TokenSequence], alpha: f64) -> Result<Self> {
        let first = corpus
            .first()
            .ok_or_else(|| Error::invalid("cannot fit a model on an empty corpus"))?;
        let mut model = CodeModel::empty(
            first.spec.levels(),
            first.spec.c_leaf(),
            first.spec.c_r(),
            alpha,
        )?;
        for seq in corpus {
            if seq.spec.levels() != model.levels
                || seq.spec.c_leaf() != model.c_leaf
                || seq.spec.c_r() != model.c_r
            {
                return Err(Error::invalid(
                    "corpus sequences must share depth and quantization conventions",
                ));
            }
            for event in walk_events(seq)? {
                match event {
                    Event::Code {
                        level,
                        parent,
                        value,
                    } => {
                        let counts = model
                            .code_counts
                            .entry((level, parent))
                            .or_insert_with(|| Box::new([0u64; 256]));
                        counts[value as usize] += 1;
                    }
                    Event::Atom { type_id } => {
                        *model.type_counts.entry(type_id).or_insert(0) += 1;
                    }
                }
            }
        }
        Ok(model)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn c_leaf(&self) -> f64 {
        self.c_leaf
    }

    pub fn c_r(&self) -> f64 {
        self.c_r
    }

    /// Canonical grid for sampling: origin at zero with this model's
    /// depth and resolutions.
    pub fn sampling_spec(&self) -> Result<GridSpec> {
        GridSpec::new(crate::geometry::Vec3::ZERO, self.levels, self.c_leaf, self.c_r)
    }

    fn raw_code_counts(&self, level: u32, parent: u8) -> Option<&[u64; 256]> {
        self.code_counts.get(&(level, parent)).map(|b| &**b)
    }

    /// Smoothed code distribution for a context. Index v holds
    /// `P(code = v)`; code 0 is masked to probability 0.
    pub fn code_probs(&self, level: u32, parent: u8) -> [f64; 256] {
        let mut probs = [0.0f64; 256];
        let counts = self.raw_code_counts(level, parent);
        let total: u64 = counts.map_or(0, |c| c[1..].iter().sum());
        let denom = total as f64 + 255.0 * self.alpha;
        for v in 1..256usize {
            let count = counts.map_or(0, |c| c[v]);
            probs[v] = (count as f64 + self.alpha) / denom;
        }
        probs
    }

    fn code_logprob(&self, level: u32, parent: u8, value: u8) -> f64 {
        let counts = self.raw_code_counts(level, parent);
        let total: u64 = counts.map_or(0, |c| c[1..].iter().sum());
        let count = counts.map_or(0, |c| c[value as usize]);
        ((count as f64 + self.alpha) / (total as f64 + 255.0 * self.alpha)).ln()
    }

    fn type_logprob(&self, type_id: u32) -> f64 {
        let total: u64 = self.type_counts.values().sum();
        let count = self.type_counts.get(&type_id).copied().unwrap_or(0);
        let denom = total as f64 + f64::from(vocab::VOCAB_SIZE) * self.alpha;
        ((count as f64 + self.alpha) / denom).ln()
    }

    /// Observed atom types with counts, in ascending id order.
    pub fn observed_types(&self) -> Vec<(u32, u64)> {
        self.type_counts.iter().map(|(&t, &c)| (t, c)).collect()
    }
}

// Temperature-shaped draw over smoothed counts. T = 1 uses the counts
// directly; T = 0 is the argmax limit with lowest-index tie-break; other
// temperatures work in log space to avoid overflow at small T.
fn draw_indexed<R: Rng>(
    rng: &mut R,
    weights: impl Iterator<Item = (usize, f64)> + Clone,
    temperature: f64,
) -> usize {
    if temperature == 0.0 {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (idx, w) in weights {
            if w > best.0 {
                best = (w, idx);
            }
        }
        return best.1;
    }
    if temperature == 1.0 {
        let total: f64 = weights.clone().map(|(_, w)| w).sum();
        let mut u = rng.random::<f64>() * total;
        let mut last = 0;
        for (idx, w) in weights {
            last = idx;
            if u < w {
                return idx;
            }
            u -= w;
        }
        return last;
    }
    let logs: Vec<(usize, f64)> = weights
        .map(|(idx, w)| (idx, w.ln() / temperature))
        .collect();
    let max = logs
        .iter()
        .fold(f64::NEG_INFINITY, |acc, &(_, l)| acc.max(l));
    let shifted: Vec<(usize, f64)> = logs
        .into_iter()
        .map(|(idx, l)| (idx, (l - max).exp()))
        .collect();
    let total: f64 = shifted.iter().map(|&(_, w)| w).sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (idx, w) in shifted {
        last = idx;
        if u < w {
            return idx;
        }
        u -= w;
    }
    last
}

/// Draws one sequence in MNTP order: each step computes the next mask
/// position from the decoded frontier (level, then Morton order), then
/// draws the content. Codes come from the smoothed context distribution,
/// atom types from the observed-type table, offsets uniformly. The output
/// always decodes.
///
/// `temperature` 1 samples the smoothed counts as-is; 0 is the greedy
/// argmax limit (lowest value on ties).
pub fn sample(
    model: &CodeModel,
    spec: &GridSpec,
    seed: u64,
    temperature: f64,
) -> Result<TokenSequence> {
    if spec.levels() != model.levels {
        return Err(Error::invalid(format!(
            "grid depth {} does not match model depth {}",
            spec.levels(),
            model.levels
        )));
    }
    if !(temperature.is_finite() && temperature >= 0.0) {
        return Err(Error::invalid("temperature must be finite and >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let leaf_level = spec.levels() - 1;
    let n_p = spec.offsets_per_axis();
    let mut tokens = vec![Token {
        kind: TokenKind::Bos,
        content: vocab::BOS,
        offsets: spec.default_offsets(),
        level: 0,
        frame: 0,
        coord: cell_center(spec, 0, [0, 0, 0])?,
    }];

    let type_support: Vec<(u32, u64)> = if model.type_counts.is_empty() {
        (1..=118u32).map(|t| (t, 0)).collect()
    } else {
        model.observed_types()
    };

    let mut frontier: Vec<(u64, u8)> = vec![(0, ROOT_CONTEXT)];
    for level in 0..leaf_level {
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for &(cell_code, parent) in &frontier {
            let cell = morton_decode(cell_code, level)?;
            let center = cell_center(spec, level, cell)?;
            tokens.push(Token {
                kind: TokenKind::Mask,
                content: vocab::MASK,
                offsets: spec.default_offsets(),
                level,
                frame: 0,
                coord: center,
            });
            let counts = model.raw_code_counts(level, parent);
            let alpha = model.alpha;
            let weights = (1..256usize)
                .map(move |v| (v, counts.map_or(0, |c| c[v]) as f64 + alpha));
            let value = draw_indexed(&mut rng, weights, temperature) as u8;
            tokens.push(Token {
                kind: TokenKind::Code,
                content: u32::from(value),
                offsets: spec.default_offsets(),
                level,
                frame: 0,
                coord: center,
            });
            for child in children_from_code(cell, SubtreeCode::new(value)?) {
                next.push((crate::octree::morton_encode(child, level + 1)?, value));
            }
        }
        frontier = next;
    }

    for &(leaf_code, _) in &frontier {
        let leaf = morton_decode(leaf_code, leaf_level)?;
        let center = cell_center(spec, leaf_level, leaf)?;
        tokens.push(Token {
            kind: TokenKind::Mask,
            content: vocab::MASK,
            offsets: spec.default_offsets(),
            level: leaf_level,
            frame: 0,
            coord: center,
        });
        let alpha = model.alpha;
        let weights = type_support
            .iter()
            .map(move |&(t, c)| (t as usize, c as f64 + alpha));
        let type_id = draw_indexed(&mut rng, weights, temperature) as u32;
        let offsets = [
            rng.random_range(0..n_p),
            rng.random_range(0..n_p),
            rng.random_range(0..n_p),
        ];
        tokens.push(Token {
            kind: TokenKind::Atom,
            content: type_id,
            offsets,
            level: leaf_level,
            frame: 0,
            coord: dequantize_offset(spec, leaf, offsets)?,
        });
    }

    tokens.push(Token {
        kind: TokenKind::Eos,
        content: vocab::EOS,
        offsets: spec.default_offsets(),
        level: 0,
        frame: 0,
        coord: cell_center(spec, 0, [0, 0, 0])?,
    });
    Ok(TokenSequence {
        spec: spec.clone(),
        tokens,
        mntp: true,
    })
}

/// Draws `count` sequences with per-sample seeds `base_seed + i`, fanning
/// out across threads when the `parallel` feature is enabled. Results are
/// identical to the sequential variant.
pub fn sample_many(
    model: &CodeModel,
    spec: &GridSpec,
    base_seed: u64,
    count: usize,
    temperature: f64,
) -> Result<Vec<TokenSequence>> {
    #[cfg(feature = "parallel")]
    {
        (0..count)
            .into_par_iter()
            .map(|i| sample(model, spec, base_seed.wrapping_add(i as u64), temperature))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        sample_many_seq(model, spec, base_seed, count, temperature)
    }
}

/// Sequential variant of [`sample_many`].
pub fn sample_many_seq(
    model: &CodeModel,
    spec: &GridSpec,
    base_seed: u64,
    count: usize,
    temperature: f64,
) -> Result<Vec<TokenSequence>> {
    (0..count)
        .map(|i| sample(model, spec, base_seed.wrapping_add(i as u64), temperature))
        .collect()
}

/// Sums per-content-token log-probabilities: code tokens under their
/// context distribution, atom tokens as type probability times the
/// uniform offset density `n_p^-3`. Finite for every alpha > 0.
pub fn score(model: &CodeModel, seq: &TokenSequence) -> Result<SampleScore> {
    if seq.spec.levels() != model.levels {
        return Err(Error::invalid(format!(
            "sequence depth {} does not match model depth {}",
            seq.spec.levels(),
            model.levels
        )));
    }
    let offset_logprob = -3.0 * f64::from(seq.spec.offsets_per_axis()).ln();
    let per_token: Vec<f64> = walk_events(seq)?
        .into_iter()
        .map(|event| match event {
            Event::Code {
                level,
                parent,
                value,
            } => model.code_logprob(level, parent, value),
            Event::Atom { type_id } => model.type_logprob(type_id) + offset_logprob,
        })
        .collect();
    Ok(SampleScore {
        total_logprob: per_token.iter().sum(),
        per_token,
    })
}

/// Top-r selection by cumulative log-probability, descending, with a
/// deterministic tie-break on serialized bytes. Returns a sorted subset of
/// the input.
pub fn rank(samples: &[TokenSequence], model: &CodeModel, r: usize) -> Result<Vec<TokenSequence>> {
    let mut keyed: Vec<(f64, String, usize)> = samples
        .iter()
        .enumerate()
        .map(|(i, seq)| Ok((score(model, seq)?.total_logprob, jsonl::to_string(seq), i)))
        .collect::<Result<_>>()?;
    keyed.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.1.cmp(&b.1))
    });
    Ok(keyed
        .into_iter()
        .take(r)
        .map(|(_, _, i)| samples[i].clone())
        .collect())
}

mod persist {
    //! Versioned JSON form with sparse [index, count] tables.

    use serde::{Deserialize, Serialize};

    pub const SCHEMA: &str = "octok-model/1";

    #[derive(Serialize, Deserialize)]
    pub struct ModelDoc {
        pub schema: String,
        pub levels: u32,
        pub c_leaf: f64,
        pub c_r: f64,
        pub alpha: f64,
        pub codes: Vec<CodeTable>,
        pub types: Vec<(u32, u64)>,
    }

    #[derive(Serialize, Deserialize)]
    pub struct CodeTable {
        pub level: u32,
        pub parent: u8,
        pub counts: Vec<(u16, u64)>,
    }
}

impl CodeModel {
    pub fn to_json(&self) -> String {
        let doc = persist::ModelDoc {
            schema: persist::SCHEMA.to_string(),
            levels: self.levels,
            c_leaf: self.c_leaf,
            c_r: self.c_r,
            alpha: self.alpha,
            codes: self
                .code_counts
                .iter()
                .map(|(&(level, parent), counts)| persist::CodeTable {
                    level,
                    parent,
                    counts: counts
                        .iter()
                        .enumerate()
                        .filter(|&(_, &c)| c > 0)
                        .map(|(v, &c)| (v as u16, c))
                        .collect(),
                })
                .collect(),
            types: self.observed_types(),
        };
        serde_json::to_string_pretty(&doc).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: persist::ModelDoc = serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("bad model document: {e}")))?;
        if doc.schema != persist::SCHEMA {
            return Err(Error::invalid(format!(
                "unsupported model schema {:?}",
                doc.schema
            )));
        }
        let mut model = CodeModel::empty(doc.levels, doc.c_leaf, doc.c_r, doc.alpha)?;
        // Reject out-of-range entries rather than silently drop them.
        for table in doc.codes {
            let counts = model
                .code_counts
                .entry((table.level, table.parent))
                .or_insert_with(|| Box::new([0u64; 256]));
            for (value, count) in table.counts {
                if value == 0 || value > 255 {
                    return Err(Error::invalid(format!(
                        "model code value {value} out of range 1..=255"
                    )));
                }
                counts[value as usize] = count;
            }
        }
        for (type_id, count) in doc.types {
            model.type_counts.insert(type_id, count);
        }
        Ok(model)
    }
}

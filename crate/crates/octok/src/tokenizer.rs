//! Serialization of octrees and sites into 1D token sequences and back.
//!
//! A frame serializes level by level: one subtree-code token per occupied
//! cell at levels 0..=L-2 (ascending Morton within each level), then one
//! atom token per occupied leaf (ascending Morton) carrying the site type
//! and quantized in-cell offsets. Decoding replays the same breadth-first
//! frontier, so sequences are self-delimiting per frame.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    cell_center, dequantize_offset, leaf_index_of, quantize_offset, Frame, GridSpec, Site, Vec3,
};
use crate::octree::{build_octree, children_from_code, morton_decode, SubtreeCode};
use crate::vocab;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenKind {
    Bos,
    Eos,
    /// 2-level subtree occupancy code (content 1..=255).
    Code,
    /// Leaf site: content is the type id, offsets are quantized.
    Atom,
    /// Positional placeholder preceding its content twin.
    Mask,
}

/// One element of the 1D sequence: kind, content id, in-cell offsets,
/// octree level, frame index, and position channel.
///
/// Code and mask tokens carry the cell center as position and the default
/// offsets; atom tokens carry the exact site coordinate and quantized
/// offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub content: u32,
    pub offsets: [u32; 3],
    pub level: u32,
    pub frame: u32,
    pub coord: Vec3,
}

/// A serialized sample: shared grid, token list, MNTP flag.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence {
    pub spec: GridSpec,
    pub tokens: Vec<Token>,
    pub mntp: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct SerializeOptions {
    /// Precede every content token with a mask twin.
    pub mntp: bool,
    /// Wrap the sequence in BOS/EOS.
    pub with_specials: bool,
}

impl Default for SerializeOptions {
    fn default() -> Self {
        SerializeOptions {
            mntp: false,
            with_specials: true,
        }
    }
}

/// Sequence-level statistics and compression ratios.
#[derive(Clone, Debug, serde::Serialize)]
pub struct StatsReport {
    pub levels: u32,
    pub mntp: bool,
    pub bos: usize,
    pub eos: usize,
    pub code: usize,
    pub atom: usize,
    pub mask: usize,
    /// Code + atom + mask tokens.
    pub content_total: usize,
    /// Content tokens per octree level.
    pub per_level: Vec<usize>,
    /// Leaf cells of a dense grid at the same resolution, 2^(3(L-1)).
    pub dense_equivalent: u64,
    /// dense_equivalent / content_total (infinite for empty sequences).
    pub compression_ratio: f64,
    /// Per-child binary emission cost: 8 * code + atom.
    pub naive_octree_equivalent: u64,
    /// N * (L - 1), the guaranteed ceiling on code tokens.
    pub code_token_bound: u64,
    pub bound_ok: bool,
}

impl Token {
    fn special(kind: TokenKind, content: u32, frame: u32, spec: &GridSpec) -> Token {
        Token {
            kind,
            content,
            offsets: spec.default_offsets(),
            level: 0,
            frame,
            // Root-cell center; specials have no cell of their own.
            coord: spec.origin() + Vec3::new(1.0, 1.0, 1.0) * (spec.c_root() / 2.0),
        }
    }

    pub fn is_content(&self) -> bool {
        matches!(self.kind, TokenKind::Code | TokenKind::Atom | TokenKind::Mask)
    }
}

/// Serializes one frame into content tokens (no specials, no MNTP).
///
/// Each leaf cell must hold at most one site; a collision is a hard error
/// reporting the offending pair.
pub fn serialize_frame(spec: &GridSpec, frame: &Frame) -> Result<Vec<Token>> {
    if frame.sites.is_empty() {
        return Err(Error::invalid("cannot serialize an empty frame"));
    }
    let leaf_level = spec.levels() - 1;

    // Assign sites to leaves, rejecting collisions.
    let mut assigned: Vec<(u64, usize)> = Vec::with_capacity(frame.sites.len());
    let mut leaves: Vec<[u32; 3]> = Vec::with_capacity(frame.sites.len());
    for (i, site) in frame.sites.iter().enumerate() {
        let leaf = leaf_index_of(spec, site.pos)?;
        let code = crate::octree::morton_encode(leaf, leaf_level)?;
        assigned.push((code, i));
        leaves.push(leaf);
    }
    let mut sorted = assigned.clone();
    sorted.sort_unstable();
    for pair in sorted.windows(2) {
        if pair[0].0 == pair[1].0 {
            let (first, second) = if pair[0].1 < pair[1].1 {
                (pair[0].1, pair[1].1)
            } else {
                (pair[1].1, pair[0].1)
            };
            return Err(Error::LeafCollision {
                cell: leaves[first],
                first,
                second,
            });
        }
    }

    let octree = build_octree(spec, &leaves)?;
    let mut tokens =
        Vec::with_capacity(octree.interior_count() + octree.leaf_count());
    for level in 0..leaf_level {
        for (pcode, code) in octree.subtree_codes_at(level) {
            let cell = morton_decode(pcode, level)?;
            tokens.push(Token {
                kind: TokenKind::Code,
                content: u32::from(code.value()),
                offsets: spec.default_offsets(),
                level,
                frame: frame.index,
                coord: cell_center(spec, level, cell)?,
            });
        }
    }
    for &(code, site_idx) in &sorted {
        let site = &frame.sites[site_idx];
        let leaf = morton_decode(code, leaf_level)?;
        tokens.push(Token {
            kind: TokenKind::Atom,
            content: site.type_id,
            offsets: quantize_offset(spec, site.pos, leaf),
            level: leaf_level,
            frame: frame.index,
            coord: site.pos,
        });
    }
    Ok(tokens)
}

/// Precedes every code/atom token with a mask twin sharing its level and
/// frame. The twin's position is the cell center (for atoms: the leaf
/// center, since the exact coordinate is content, not position). Specials
/// are not duplicated.
pub fn mntp_expand(spec: &GridSpec, tokens: &[Token]) -> Result<Vec<Token>> {
    if tokens.iter().any(|t| t.kind == TokenKind::Mask) {
        return Err(Error::AlreadyExpanded);
    }
    let leaf_level = spec.levels() - 1;
    let mut out = Vec::with_capacity(tokens.len() * 2);
    for token in tokens {
        match token.kind {
            TokenKind::Bos | TokenKind::Eos => out.push(token.clone()),
            TokenKind::Code | TokenKind::Atom => {
                let coord = if token.kind == TokenKind::Atom {
                    let leaf = leaf_index_of(spec, token.coord)?;
                    cell_center(spec, leaf_level, leaf)?
                } else {
                    token.coord
                };
                out.push(Token {
                    kind: TokenKind::Mask,
                    content: vocab::MASK,
                    offsets: spec.default_offsets(),
                    level: token.level,
                    frame: token.frame,
                    coord,
                });
                out.push(token.clone());
            }
            TokenKind::Mask => unreachable!(),
        }
    }
    Ok(out)
}

/// Serializes frames sharing `spec` into one sequence:
/// `[BOS] + frame tokens in order + [EOS]`, with MNTP expansion and
/// specials per `options`. Frame indices must be non-decreasing.
pub fn serialize(
    spec: &GridSpec,
    frames: &[Frame],
    options: &SerializeOptions,
) -> Result<TokenSequence> {
    for pair in frames.windows(2) {
        if pair[1].index < pair[0].index {
            return Err(Error::invalid("frame indices must be non-decreasing"));
        }
    }
    let mut content = Vec::new();
    for frame in frames {
        let mut tokens = serialize_frame(spec, frame)?;
        if options.mntp {
            tokens = mntp_expand(spec, &tokens)?;
        }
        content.append(&mut tokens);
    }
    let mut tokens = Vec::with_capacity(content.len() + 2);
    if options.with_specials {
        let first = frames.first().map_or(0, |f| f.index);
        let last = frames.last().map_or(0, |f| f.index);
        tokens.push(Token::special(TokenKind::Bos, vocab::BOS, first, spec));
        tokens.extend(content);
        tokens.push(Token::special(TokenKind::Eos, vocab::EOS, last, spec));
    } else {
        tokens = content;
    }
    Ok(TokenSequence {
        spec: spec.clone(),
        tokens,
        mntp: options.mntp,
    })
}

struct ContentReader<'a> {
    tokens: &'a [Token],
    pos: usize,
    /// Offset of `tokens[0]` in the original list, for error reporting.
    base: usize,
    mntp: bool,
}

impl<'a> ContentReader<'a> {
    fn new(seq: &'a TokenSequence) -> Result<Self> {
        let mut tokens = seq.tokens.as_slice();
        let mut base = 0;
        // Strip the BOS/EOS envelope when present.
        if tokens.first().map(|t| t.kind) == Some(TokenKind::Bos) {
            if tokens.last().map(|t| t.kind) != Some(TokenKind::Eos) {
                return Err(Error::malformed(
                    seq.tokens.len().saturating_sub(1),
                    "sequence starts with BOS but does not end with EOS",
                ));
            }
            tokens = &tokens[1..tokens.len() - 1];
            base = 1;
        }
        for (i, t) in tokens.iter().enumerate() {
            if matches!(t.kind, TokenKind::Bos | TokenKind::Eos) {
                return Err(Error::malformed(base + i, "interior BOS/EOS token"));
            }
        }
        Ok(ContentReader {
            tokens,
            pos: 0,
            base,
            mntp: seq.mntp,
        })
    }

    /// Index of the cursor in the original token list.
    fn index(&self) -> usize {
        self.base + self.pos
    }

    fn peek_frame(&self) -> Option<u32> {
        self.tokens.get(self.pos).map(|t| t.frame)
    }

    /// Reads the next content token of the given kind, consuming and
    /// validating its mask twin first when MNTP is on.
    fn expect(&mut self, kind: TokenKind, level: u32, frame: u32, center: Vec3) -> Result<&Token> {
        if self.mntp {
            let mask = self
                .tokens
                .get(self.pos)
                .ok_or_else(|| Error::malformed(self.index(), "expected mask token, found end"))?;
            if mask.kind != TokenKind::Mask {
                return Err(Error::malformed(self.index(), "expected mask twin"));
            }
            if mask.level != level || mask.frame != frame {
                return Err(Error::malformed(
                    self.index(),
                    "mask twin level/frame mismatch",
                ));
            }
            if mask.coord.max_abs_diff(&center) > 1e-5 {
                return Err(Error::malformed(
                    self.index(),
                    "mask twin position is not the cell center",
                ));
            }
            self.pos += 1;
        }
        let token = self
            .tokens
            .get(self.pos)
            .ok_or_else(|| Error::malformed(self.index(), "expected content token, found end"))?;
        if token.kind == TokenKind::Mask {
            return Err(Error::malformed(
                self.index(),
                if self.mntp {
                    "consecutive mask tokens"
                } else {
                    "mask token in a sequence without the mntp flag"
                },
            ));
        }
        if token.kind != kind {
            return Err(Error::malformed(self.index(), "unexpected token kind"));
        }
        if token.level != level {
            return Err(Error::malformed(self.index(), "unexpected token level"));
        }
        if token.frame != frame {
            return Err(Error::malformed(self.index(), "unexpected frame index"));
        }
        self.pos += 1;
        Ok(token)
    }

    fn done(&self) -> bool {
        self.pos >= self.tokens.len()
    }
}

/// Reconstructs frames by replaying the breadth-first frontier: the root
/// expands through code tokens level by level, then atom tokens fill the
/// leaf frontier in Morton order. Site positions are dequantized from
/// offsets, so the round trip is exact in count and types and within
/// `c_r` per axis in coordinates.
pub fn decode(seq: &TokenSequence) -> Result<Vec<Frame>> {
    let spec = &seq.spec;
    let leaf_level = spec.levels() - 1;
    let mut reader = ContentReader::new(seq)?;
    let mut frames = Vec::new();
    let mut prev_frame: Option<u32> = None;

    while let Some(frame_index) = reader.peek_frame() {
        if let Some(prev) = prev_frame {
            if frame_index < prev {
                return Err(Error::malformed(reader.index(), "decreasing frame index"));
            }
        }
        prev_frame = Some(frame_index);

        let mut frontier: Vec<u64> = vec![0];
        for level in 0..leaf_level {
            let mut next = Vec::with_capacity(frontier.len() * 2);
            for &cell_code in &frontier {
                let cell = morton_decode(cell_code, level)?;
                let center = cell_center(spec, level, cell)?;
                let index = reader.index();
                let token = reader.expect(TokenKind::Code, level, frame_index, center)?;
                if token.content == 0 {
                    return Err(Error::InvalidCode);
                }
                let value = u8::try_from(token.content)
                    .map_err(|_| Error::malformed(index, "code token content above 255"))?;
                for child in children_from_code(cell, SubtreeCode::new(value)?) {
                    next.push(crate::octree::morton_encode(child, level + 1)?);
                }
            }
            frontier = next;
        }

        let mut sites = Vec::with_capacity(frontier.len());
        for &leaf_code in &frontier {
            let leaf = morton_decode(leaf_code, leaf_level)?;
            let center = cell_center(spec, leaf_level, leaf)?;
            let token = reader.expect(TokenKind::Atom, leaf_level, frame_index, center)?;
            sites.push(Site::new(
                token.content,
                dequantize_offset(spec, leaf, token.offsets)?,
            ));
        }
        frames.push(Frame::new(sites, frame_index));
    }
    debug_assert!(reader.done());
    Ok(frames)
}

/// Serializes a batch of samples, each with its own grid. Fans out across
/// threads with the `parallel` feature; output order always matches input
/// order.
pub fn serialize_many(
    inputs: &[(GridSpec, Vec<Frame>)],
    options: &SerializeOptions,
) -> Result<Vec<TokenSequence>> {
    #[cfg(feature = "parallel")]
    {
        inputs
            .par_iter()
            .map(|(spec, frames)| serialize(spec, frames, options))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        serialize_many_seq(inputs, options)
    }
}

/// Sequential variant of [`serialize_many`].
pub fn serialize_many_seq(
    inputs: &[(GridSpec, Vec<Frame>)],
    options: &SerializeOptions,
) -> Result<Vec<TokenSequence>> {
    inputs
        .iter()
        .map(|(spec, frames)| serialize(spec, frames, options))
        .collect()
}

/// Decodes a batch of sequences (parallel with the `parallel` feature).
pub fn decode_many(seqs: &[TokenSequence]) -> Result<Vec<Vec<Frame>>> {
    #[cfg(feature = "parallel")]
    {
        seqs.par_iter().map(decode).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        decode_many_seq(seqs)
    }
}

/// Sequential variant of [`decode_many`].
pub fn decode_many_seq(seqs: &[TokenSequence]) -> Result<Vec<Vec<Frame>>> {
    seqs.iter().map(decode).collect()
}

impl TokenSequence {
    /// Content tokens (code, atom, mask), stripped of specials.
    pub fn content_tokens(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(|t| t.is_content())
    }

    pub fn expand_mntp(&self) -> Result<TokenSequence> {
        if self.mntp {
            return Err(Error::AlreadyExpanded);
        }
        Ok(TokenSequence {
            spec: self.spec.clone(),
            tokens: mntp_expand(&self.spec, &self.tokens)?,
            mntp: true,
        })
    }

    pub fn stats(&self) -> StatsReport {
        token_stats(self)
    }
}

/// Counts tokens per kind and level and derives compression figures.
pub fn token_stats(seq: &TokenSequence) -> StatsReport {
    let levels = seq.spec.levels();
    let mut report = StatsReport {
        levels,
        mntp: seq.mntp,
        bos: 0,
        eos: 0,
        code: 0,
        atom: 0,
        mask: 0,
        content_total: 0,
        per_level: vec![0; levels as usize],
        dense_equivalent: 1u64 << (3 * (levels - 1)),
        compression_ratio: 0.0,
        naive_octree_equivalent: 0,
        code_token_bound: 0,
        bound_ok: false,
    };
    for token in &seq.tokens {
        match token.kind {
            TokenKind::Bos => report.bos += 1,
            TokenKind::Eos => report.eos += 1,
            TokenKind::Code => report.code += 1,
            TokenKind::Atom => report.atom += 1,
            TokenKind::Mask => report.mask += 1,
        }
        if token.is_content() {
            report.per_level[token.level as usize] += 1;
        }
    }
    report.content_total = report.code + report.atom + report.mask;
    report.compression_ratio = report.dense_equivalent as f64 / report.content_total as f64;
    report.naive_octree_equivalent = 8 * report.code as u64 + report.atom as u64;
    report.code_token_bound = report.atom as u64 * u64::from(levels - 1);
    report.bound_ok = (report.code as u64) <= report.code_token_bound;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::fit_grid;

    fn spec3() -> GridSpec {
        GridSpec::new(Vec3::ZERO, 3, 0.24, 0.01).unwrap()
    }

    #[test]
    fn single_atom_serialization() {
        let spec = spec3();
        let frame = Frame::new(vec![Site::new(6, Vec3::new(0.05, 0.05, 0.05))], 0);
        let tokens = serialize_frame(&spec, &frame).unwrap();
        assert_eq!(tokens.len(), 3);
        assert_eq!(tokens[0].kind, TokenKind::Code);
        assert_eq!((tokens[0].level, tokens[0].content), (0, 1));
        assert_eq!((tokens[1].level, tokens[1].content), (1, 1));
        assert_eq!(tokens[2].kind, TokenKind::Atom);
        assert_eq!(tokens[2].content, 6);
        assert_eq!(tokens[2].offsets, [5, 5, 5]);
        assert_eq!(tokens[2].coord, Vec3::new(0.05, 0.05, 0.05));
        // Non-atom tokens carry the default offsets.
        assert_eq!(tokens[0].offsets, [12, 12, 12]);
    }

    #[test]
    fn upper_corner_child_code() {
        let spec = GridSpec::new(Vec3::ZERO, 2, 0.24, 0.01).unwrap();
        let frame = Frame::new(vec![Site::new(1, Vec3::new(0.3, 0.3, 0.3))], 0);
        let tokens = serialize_frame(&spec, &frame).unwrap();
        assert_eq!(tokens.len(), 2);
        assert_eq!(tokens[0].content, 128); // ci = 7
        assert_eq!(tokens[1].kind, TokenKind::Atom);
    }

    #[test]
    fn leaf_collision_reports_pair() {
        let spec = spec3();
        let frame = Frame::new(
            vec![
                Site::new(6, Vec3::new(0.05, 0.05, 0.05)),
                Site::new(1, Vec3::new(0.40, 0.40, 0.40)),
                Site::new(8, Vec3::new(0.06, 0.06, 0.06)),
            ],
            0,
        );
        match serialize_frame(&spec, &frame) {
            Err(Error::LeafCollision { cell, first, second }) => {
                assert_eq!(cell, [0, 0, 0]);
                assert_eq!((first, second), (0, 2));
            }
            other => panic!("expected LeafCollision, got {other:?}"),
        }
    }

    #[test]
    fn site_outside_grid_is_rejected() {
        let spec = spec3();
        let frame = Frame::new(vec![Site::new(6, Vec3::new(2.0, 0.0, 0.0))], 0);
        assert!(matches!(
            serialize_frame(&spec, &frame),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn mntp_expansion_doubles_and_pairs() {
        let spec = spec3();
        let frame = Frame::new(
            vec![
                Site::new(6, Vec3::new(0.05, 0.05, 0.05)),
                Site::new(8, Vec3::new(0.82, 0.87, 0.91)),
            ],
            0,
        );
        let base = serialize_frame(&spec, &frame).unwrap();
        let expanded = mntp_expand(&spec, &base).unwrap();
        assert_eq!(expanded.len(), 2 * base.len());
        for pair in expanded.chunks(2) {
            assert_eq!(pair[0].kind, TokenKind::Mask);
            assert_eq!(pair[0].content, vocab::MASK);
            assert_eq!(pair[0].level, pair[1].level);
            assert_eq!(pair[0].frame, pair[1].frame);
            if pair[1].kind == TokenKind::Atom {
                // The twin sits at the leaf center, not the exact coordinate.
                let leaf = leaf_index_of(&spec, pair[1].coord).unwrap();
                let center = cell_center(&spec, spec.levels() - 1, leaf).unwrap();
                assert!(pair[0].coord.max_abs_diff(&center) < 1e-12);
            } else {
                assert_eq!(pair[0].coord, pair[1].coord);
            }
        }
        assert!(matches!(
            mntp_expand(&spec, &expanded),
            Err(Error::AlreadyExpanded)
        ));
        assert_eq!(mntp_expand(&spec, &[]).unwrap(), vec![]);
    }

    #[test]
    fn serialize_with_specials_and_frames() {
        let spec = spec3();
        let frame = Frame::new(vec![Site::new(6, Vec3::new(0.05, 0.05, 0.05))], 0);
        let seq = serialize(&spec, std::slice::from_ref(&frame), &SerializeOptions::default()).unwrap();
        assert_eq!(seq.tokens.len(), 5);
        assert_eq!(seq.tokens[0].kind, TokenKind::Bos);
        assert_eq!(seq.tokens[4].kind, TokenKind::Eos);

        let mntp = serialize(
            &spec,
            &[frame],
            &SerializeOptions {
                mntp: true,
                with_specials: true,
            },
        )
        .unwrap();
        // Content doubles, specials unchanged.
        assert_eq!(mntp.tokens.len(), 2 + 6);
    }

    #[test]
    fn two_frame_indices_are_tagged() {
        let frames = vec![
            Frame::new(
                vec![
                    Site::new(vocab::LATTICE_VERTEX, Vec3::new(0.0, 0.0, 0.0)),
                    Site::new(vocab::LATTICE_VERTEX, Vec3::new(3.0, 3.0, 3.0)),
                ],
                0,
            ),
            Frame::new(vec![Site::new(14, Vec3::new(1.5, 1.5, 1.5))], 1),
        ];
        let spec = fit_grid(&frames, 0.24, 0.01, 0.12).unwrap();
        let seq = serialize(&spec, &frames, &SerializeOptions::default()).unwrap();
        let frames_seen: Vec<u32> = seq.content_tokens().map(|t| t.frame).collect();
        let split = frames_seen.iter().filter(|&&f| f == 0).count();
        assert!(split > 0 && split < frames_seen.len());
        assert!(frames_seen.windows(2).all(|w| w[0] <= w[1]));

        let decoded = decode(&seq).unwrap();
        assert_eq!(decoded.len(), 2);
        assert_eq!(decoded[0].sites.len(), 2);
        assert_eq!(decoded[0].index, 0);
        assert_eq!(decoded[1].sites.len(), 1);
        assert_eq!(decoded[1].index, 1);
    }

    #[test]
    fn decode_round_trips_single_atom() {
        let spec = spec3();
        let frame = Frame::new(vec![Site::new(6, Vec3::new(0.05, 0.05, 0.05))], 0);
        for mntp in [false, true] {
            let seq = serialize(
                &spec,
                std::slice::from_ref(&frame),
                &SerializeOptions {
                    mntp,
                    with_specials: true,
                },
            )
            .unwrap();
            let decoded = decode(&seq).unwrap();
            assert_eq!(decoded.len(), 1);
            assert_eq!(decoded[0].sites.len(), 1);
            assert_eq!(decoded[0].sites[0].type_id, 6);
            assert!(
                decoded[0].sites[0]
                    .pos
                    .max_abs_diff(&frame.sites[0].pos)
                    <= spec.c_r()
            );
        }
    }

    #[test]
    fn decode_of_empty_sequence_yields_no_frames() {
        let spec = spec3();
        let seq = serialize(&spec, &[], &SerializeOptions::default()).unwrap();
        assert_eq!(seq.tokens.len(), 2);
        assert_eq!(decode(&seq).unwrap(), vec![]);
    }

    #[test]
    fn decode_rejects_malformed_sequences() {
        let spec = spec3();
        let frame = Frame::new(vec![Site::new(6, Vec3::new(0.05, 0.05, 0.05))], 0);
        let seq = serialize(&spec, &[frame], &SerializeOptions::default()).unwrap();

        // Truncated content.
        let mut truncated = seq.clone();
        truncated.tokens.remove(2);
        assert!(matches!(
            decode(&truncated),
            Err(Error::MalformedSequence { .. })
        ));

        // Code value 0.
        let mut zeroed = seq.clone();
        zeroed.tokens[1].content = 0;
        assert!(matches!(decode(&zeroed), Err(Error::InvalidCode)));

        // Mask token without the mntp flag.
        let mut masked = seq.clone();
        masked.tokens[1].kind = TokenKind::Mask;
        match decode(&masked) {
            Err(Error::MalformedSequence { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected MalformedSequence, got {other:?}"),
        }
    }

    #[test]
    fn serialization_is_deterministic() {
        let spec = spec3();
        let frame = Frame::new(
            vec![
                Site::new(6, Vec3::new(0.05, 0.05, 0.05)),
                Site::new(8, Vec3::new(0.82, 0.87, 0.91)),
                Site::new(1, Vec3::new(0.30, 0.55, 0.70)),
            ],
            0,
        );
        let a = serialize(&spec, std::slice::from_ref(&frame), &SerializeOptions::default())
            .unwrap();
        let b = serialize(&spec, std::slice::from_ref(&frame), &SerializeOptions::default())
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stats_single_atom_l6() {
        let frame = Frame::new(vec![Site::new(6, Vec3::new(0.1, 0.1, 0.1))], 0);
        let spec = crate::geometry::fit_grid_fixed(std::slice::from_ref(&frame), 0.24, 0.01, 0.12, 6).unwrap();
        let seq = serialize(&spec, &[frame], &SerializeOptions::default()).unwrap();
        let stats = seq.stats();
        assert_eq!(stats.dense_equivalent, 32_768);
        assert_eq!(stats.content_total, 6);
        assert_eq!(stats.code, 5);
        assert_eq!(stats.atom, 1);
        assert!((stats.compression_ratio - 32_768.0 / 6.0).abs() < 1e-9);
        assert_eq!(stats.naive_octree_equivalent, 41);
        assert!(stats.bound_ok);
    }

    #[test]
    fn stats_of_empty_content_is_infinite_ratio() {
        let spec = spec3();
        let seq = serialize(&spec, &[], &SerializeOptions::default()).unwrap();
        let stats = seq.stats();
        assert_eq!(stats.content_total, 0);
        assert!(stats.compression_ratio.is_infinite());
    }

    #[test]
    fn naive_octree_identity() {
        let spec = spec3();
        let frame = Frame::new(
            vec![
                Site::new(6, Vec3::new(0.05, 0.05, 0.05)),
                Site::new(8, Vec3::new(0.82, 0.87, 0.91)),
            ],
            0,
        );
        let seq = serialize(&spec, &[frame], &SerializeOptions::default()).unwrap();
        let stats = seq.stats();
        assert_eq!(
            stats.naive_octree_equivalent,
            8 * stats.code as u64 + stats.atom as u64
        );
    }
}

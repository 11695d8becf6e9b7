//! Token JSONL codec.
//!
//! One JSON object per line, UTF-8, fixed keys. The first line is the
//! header:
//!
//! ```text
//! {"schema":"octok/1","L":6,"c0":7.680000,"c_leaf":0.240000,"c_r":0.010000,"origin":[0.000000,0.000000,0.000000],"mntp":false}
//! ```
//!
//! followed by one token per line:
//!
//! ```text
//! {"k":"C","t":1,"e":[12,12,12],"l":0,"f":0,"c":[0.480000,0.480000,0.480000]}
//! ```
//!
//! Floats are serialized with 6 decimal places, which makes the writer
//! byte-deterministic.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Vec3};
use crate::tokenizer::{Token, TokenKind, TokenSequence};

pub const SCHEMA: &str = "octok/1";

fn kind_tag(kind: TokenKind) -> &'static str {
    match kind {
        TokenKind::Bos => "B",
        TokenKind::Eos => "E",
        TokenKind::Code => "C",
        TokenKind::Atom => "A",
        TokenKind::Mask => "M",
    }
}

fn kind_from_tag(tag: &str) -> Option<TokenKind> {
    match tag {
        "B" => Some(TokenKind::Bos),
        "E" => Some(TokenKind::Eos),
        "C" => Some(TokenKind::Code),
        "A" => Some(TokenKind::Atom),
        "M" => Some(TokenKind::Mask),
        _ => None,
    }
}

/// Renders a sequence to the JSONL text form.
pub fn to_string(seq: &TokenSequence) -> String {
    let spec = &seq.spec;
    let mut out = String::with_capacity(64 + seq.tokens.len() * 80);
    let o = spec.origin();
    let _ = writeln!(
        out,
        "{{\"schema\":\"{SCHEMA}\",\"L\":{},\"c0\":{:.6},\"c_leaf\":{:.6},\"c_r\":{:.6},\"origin\":[{:.6},{:.6},{:.6}],\"mntp\":{}}}",
        spec.levels(),
        spec.c_root(),
        spec.c_leaf(),
        spec.c_r(),
        o.x,
        o.y,
        o.z,
        seq.mntp,
    );
    for token in &seq.tokens {
        let _ = writeln!(
            out,
            "{{\"k\":\"{}\",\"t\":{},\"e\":[{},{},{}],\"l\":{},\"f\":{},\"c\":[{:.6},{:.6},{:.6}]}}",
            kind_tag(token.kind),
            token.content,
            token.offsets[0],
            token.offsets[1],
            token.offsets[2],
            token.level,
            token.frame,
            token.coord.x,
            token.coord.y,
            token.coord.z,
        );
    }
    out
}

#[derive(serde::Deserialize)]
struct HeaderLine {
    schema: String,
    #[serde(rename = "L")]
    levels: u32,
    c0: f64,
    c_leaf: f64,
    c_r: f64,
    origin: [f64; 3],
    mntp: bool,
}

#[derive(serde::Deserialize)]
struct TokenLine {
    k: String,
    t: u32,
    e: [u32; 3],
    l: u32,
    f: u32,
    c: [f64; 3],
}

/// Parses the JSONL text form. Errors carry 1-based line numbers.
pub fn from_str(text: &str) -> Result<TokenSequence> {
    let mut lines = text.lines().enumerate();
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty document, expected header"))?;
    let header: HeaderLine = serde_json::from_str(header_line)
        .map_err(|e| Error::parse(1, format!("bad header: {e}")))?;
    if header.schema != SCHEMA {
        return Err(Error::parse(
            1,
            format!("unsupported schema {:?}", header.schema),
        ));
    }
    let spec = GridSpec::new(
        Vec3::new(header.origin[0], header.origin[1], header.origin[2]),
        header.levels,
        header.c_leaf,
        header.c_r,
    )
    .map_err(|e| Error::parse(1, e.to_string()))?;
    if (spec.c_root() - header.c0).abs() > 1e-6 * spec.c_root().max(1.0) {
        return Err(Error::parse(
            1,
            format!(
                "header c0 {} does not match c_leaf * 2^(L-1) = {}",
                header.c0,
                spec.c_root()
            ),
        ));
    }

    let mut tokens = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let raw: TokenLine = serde_json::from_str(line)
            .map_err(|e| Error::parse(lineno, format!("bad token: {e}")))?;
        let kind = kind_from_tag(&raw.k)
            .ok_or_else(|| Error::parse(lineno, format!("unknown token kind {:?}", raw.k)))?;
        if raw.l >= spec.levels() {
            return Err(Error::parse(
                lineno,
                format!("token level {} out of range for depth {}", raw.l, spec.levels()),
            ));
        }
        if raw.e.iter().any(|&e| e >= spec.offsets_per_axis()) {
            return Err(Error::parse(
                lineno,
                format!(
                    "offsets [{}, {}, {}] out of range [0, {})",
                    raw.e[0],
                    raw.e[1],
                    raw.e[2],
                    spec.offsets_per_axis()
                ),
            ));
        }
        tokens.push(Token {
            kind,
            content: raw.t,
            offsets: raw.e,
            level: raw.l,
            frame: raw.f,
            coord: Vec3::new(raw.c[0], raw.c[1], raw.c[2]),
        });
    }
    Ok(TokenSequence {
        spec,
        tokens,
        mntp: header.mntp,
    })
}

/// Writes the JSONL form to a writer.
pub fn write<W: std::io::Write>(mut w: W, seq: &TokenSequence) -> Result<()> {
    w.write_all(to_string(seq).as_bytes())?;
    Ok(())
}

/// Reads a sequence from a reader.
pub fn read<R: std::io::Read>(mut r: R) -> Result<TokenSequence> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    from_str(&text)
}

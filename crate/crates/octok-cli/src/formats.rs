//! Text formats: XYZ structure files and the crystal lattice format.

use octok::error::Error;
use octok::{vocab, Frame, Result, Site, Vec3};

/// Parses a standard XYZ file: atom count, comment line, then one
/// `element x y z` line per atom (coordinates in angstroms). The element
/// column also accepts the site specials `LAT` and `OCC`.
pub fn parse_xyz(text: &str) -> Result<Frame> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "empty file, expected an atom count".into(),
        });
    }
    let count: usize = lines[0].trim().parse().map_err(|_| Error::Parse {
        line: 1,
        message: format!("expected an atom count, got {:?}", lines[0].trim()),
    })?;
    let mut sites = Vec::with_capacity(count);
    for (idx, line) in lines.iter().enumerate().skip(2) {
        if line.trim().is_empty() {
            continue;
        }
        sites.push(parse_site_line(line, idx + 1)?);
    }
    if sites.len() != count {
        return Err(Error::Parse {
            line: 1,
            message: format!("header declares {count} atoms but file has {}", sites.len()),
        });
    }
    Ok(Frame::new(sites, 0))
}

fn parse_site_line(line: &str, lineno: usize) -> Result<Site> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() < 4 {
        return Err(Error::Parse {
            line: lineno,
            message: format!("expected 'element x y z', got {line:?}"),
        });
    }
    let type_id = vocab::type_id(fields[0]).ok_or_else(|| Error::Parse {
        line: lineno,
        message: format!("unknown element symbol {:?}", fields[0]),
    })?;
    let coord = |field: &str| -> Result<f64> {
        field.parse::<f64>().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("bad coordinate {field:?}"),
        })
    };
    Ok(Site::new(
        type_id,
        Vec3::new(coord(fields[1])?, coord(fields[2])?, coord(fields[3])?),
    ))
}

/// Renders frames as consecutive XYZ blocks, one per frame, coordinates
/// with 6 decimal places.
pub fn write_xyz(frames: &[Frame]) -> Result<String> {
    let mut out = String::new();
    for frame in frames {
        out.push_str(&format!("{}\n", frame.sites.len()));
        out.push_str(&format!("frame {}\n", frame.index));
        for site in &frame.sites {
            let symbol = vocab::symbol(site.type_id).ok_or_else(|| {
                Error::InvalidInput(format!("site type {} has no symbol", site.type_id))
            })?;
            out.push_str(&format!(
                "{symbol} {:.6} {:.6} {:.6}\n",
                site.pos.x, site.pos.y, site.pos.z
            ));
        }
    }
    Ok(out)
}

/// Parses the crystal text format:
///
/// ```text
/// lattice:
/// ax ay az
/// bx by bz
/// cx cy cz
/// atoms:
/// El fx fy fz
/// ```
///
/// Lattice rows are in angstroms; atom coordinates are fractional in
/// `[0, 1)`. Blank lines and `#` comments are skipped. Returns the
/// lattice-vertex frame (index 0, the 8 corners of `{0,1}^3` mapped
/// through the lattice in `(i, j, k)` row order) and the Cartesian atom
/// frame (index 1).
pub fn parse_crystal(text: &str) -> Result<(Frame, Frame)> {
    #[derive(PartialEq)]
    enum Section {
        Preamble,
        Lattice,
        Atoms,
    }
    let mut section = Section::Preamble;
    let mut rows: Vec<[f64; 3]> = Vec::new();
    let mut atoms: Vec<(u32, [f64; 3], usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line {
            "lattice:" => {
                section = Section::Lattice;
                continue;
            }
            "atoms:" => {
                if rows.len() != 3 {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("expected 3 lattice rows, found {}", rows.len()),
                    });
                }
                section = Section::Atoms;
                continue;
            }
            _ => {}
        }
        match section {
            Section::Preamble => {
                return Err(Error::Parse {
                    line: lineno,
                    message: "expected 'lattice:' section header".into(),
                });
            }
            Section::Lattice => {
                let fields: Vec<&str> = line.split_whitespace().collect();
                if rows.len() == 3 {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "more than 3 lattice rows".into(),
                    });
                }
                if fields.len() != 3 {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("expected 3 lattice components, got {line:?}"),
                    });
                }
                let mut row = [0.0f64; 3];
                for (slot, field) in row.iter_mut().zip(&fields) {
                    *slot = field.parse().map_err(|_| Error::Parse {
                        line: lineno,
                        message: format!("bad lattice component {field:?}"),
                    })?;
                }
                rows.push(row);
            }
            Section::Atoms => {
                let site = parse_site_line(line, lineno)?;
                let frac = [site.pos.x, site.pos.y, site.pos.z];
                if frac.iter().any(|&f| !(0.0..1.0).contains(&f)) {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!(
                            "fractional coordinates must lie in [0, 1), got {line:?}"
                        ),
                    });
                }
                atoms.push((site.type_id, frac, lineno));
            }
        }
    }
    if rows.len() != 3 || section == Section::Preamble {
        return Err(Error::InvalidInput(
            "crystal file needs a 'lattice:' section with 3 rows".into(),
        ));
    }

    let det = rows[0][0] * (rows[1][1] * rows[2][2] - rows[1][2] * rows[2][1])
        - rows[0][1] * (rows[1][0] * rows[2][2] - rows[1][2] * rows[2][0])
        + rows[0][2] * (rows[1][0] * rows[2][1] - rows[1][1] * rows[2][0]);
    let scale = rows
        .iter()
        .flatten()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    if det.abs() <= 1e-12 * scale.powi(3).max(1.0) {
        return Err(Error::InvalidInput("singular lattice matrix".into()));
    }

    let cartesian = |frac: [f64; 3]| -> Vec3 {
        Vec3::new(
            frac[0] * rows[0][0] + frac[1] * rows[1][0] + frac[2] * rows[2][0],
            frac[0] * rows[0][1] + frac[1] * rows[1][1] + frac[2] * rows[2][1],
            frac[0] * rows[0][2] + frac[1] * rows[1][2] + frac[2] * rows[2][2],
        )
    };

    let mut corners = Vec::with_capacity(8);
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                corners.push(Site::new(
                    vocab::LATTICE_VERTEX,
                    cartesian([f64::from(i), f64::from(j), f64::from(k)]),
                ));
            }
        }
    }
    let atom_sites = atoms
        .into_iter()
        .map(|(type_id, frac, _)| Site::new(type_id, cartesian(frac)))
        .collect();
    Ok((Frame::new(corners, 0), Frame::new(atom_sites, 1)))
}

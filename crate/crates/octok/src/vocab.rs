//! Fixed site-type vocabulary.
//!
//! Ids are stable across runs and implementations: elements carry their
//! atomic number (1..=118), followed by the reserved special ids. Id 0 is
//! never assigned.

/// Element symbols indexed by atomic number - 1.
pub const ELEMENT_SYMBOLS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd",
    "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu",
    "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt",
    "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np",
    "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs",
    "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
];

/// Lattice-vertex site (crystal frame corners).
pub const LATTICE_VERTEX: u32 = 119;
/// Occupied-voxel site (boolean grids routed through the octree path).
pub const VOXEL_OCCUPIED: u32 = 120;
/// Sequence-start token content id.
pub const BOS: u32 = 121;
/// Sequence-end token content id.
pub const EOS: u32 = 122;
/// Positional placeholder token content id.
pub const MASK: u32 = 123;

/// Total id universe (0 reserved, 1..=118 elements, 119..=123 specials).
pub const VOCAB_SIZE: u32 = 124;

/// Id for an element symbol or one of the special site symbols
/// (`LAT`, `OCC`).
pub fn type_id(symbol: &str) -> Option<u32> {
    match symbol {
        "LAT" => Some(LATTICE_VERTEX),
        "OCC" => Some(VOXEL_OCCUPIED),
        _ => ELEMENT_SYMBOLS
            .iter()
            .position(|&s| s == symbol)
            .map(|i| i as u32 + 1),
    }
}

/// Symbol for a site-type id, if it names an element or site special.
pub fn symbol(id: u32) -> Option<&'static str> {
    match id {
        1..=118 => Some(ELEMENT_SYMBOLS[id as usize - 1]),
        LATTICE_VERTEX => Some("LAT"),
        VOXEL_OCCUPIED => Some("OCC"),
        _ => None,
    }
}

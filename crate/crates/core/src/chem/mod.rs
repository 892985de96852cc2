//! Minimal SMILES ingestion and scaffold machinery for molecule graphs.
//!
//! The feature set is deliberately small: atomic number and chirality tag on
//! nodes, bond type and bond direction on edges, with reserved mask and
//! self-loop categories appended after the real categories.

mod corpus;
mod scaffold;
mod smiles;

pub use corpus::{ANNOTATED_SCAFFOLDS, SMILES_CORPUS};
pub use scaffold::{canonical_key, murcko_scaffold, ScaffoldKey, EMPTY_SCAFFOLD_KEY};
pub use smiles::{parse_smiles, write_smiles};

use crate::graph::{Domain, Vocab};

// Node slot 0: atomic number, categories for Z = 1..=118 stored as Z-1, plus mask.
pub const ATOM_CATEGORIES: u32 = 119;
pub const ATOM_MASK: u32 = 118;

// Node slot 1: chirality tag.
pub const CHI_UNSPECIFIED: u32 = 0;
pub const CHI_TETRAHEDRAL_CW: u32 = 1;
pub const CHI_TETRAHEDRAL_CCW: u32 = 2;
pub const CHI_OTHER: u32 = 3;
pub const CHI_MASK: u32 = 4;
pub const CHIRALITY_CATEGORIES: u32 = 5;

// Edge slot 0: bond type, then self-loop and mask.
pub const BOND_SINGLE: u32 = 0;
pub const BOND_DOUBLE: u32 = 1;
pub const BOND_TRIPLE: u32 = 2;
pub const BOND_AROMATIC: u32 = 3;
pub const BOND_SELF_LOOP: u32 = 4;
pub const BOND_MASK: u32 = 5;
pub const BOND_CATEGORIES: u32 = 6;

// Edge slot 1: bond direction, then self-loop and mask.
pub const DIR_NONE: u32 = 0;
pub const DIR_END_UP_RIGHT: u32 = 1;
pub const DIR_END_DOWN_RIGHT: u32 = 2;
pub const DIR_SELF_LOOP: u32 = 3;
pub const DIR_MASK: u32 = 4;
pub const DIRECTION_CATEGORIES: u32 = 5;

/// Molecule vocabulary: [atomic number, chirality] node slots and
/// [bond type, bond direction] edge slots.
pub fn molecule_vocab() -> Vocab {
    Vocab {
        domain: Domain::Molecule,
        node_slots: vec![ATOM_CATEGORIES, CHIRALITY_CATEGORIES],
        edge_slots: vec![BOND_CATEGORIES, DIRECTION_CATEGORIES],
    }
}

/// Element symbols indexed by atomic number - 1.
pub const ELEMENTS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn",
    "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
];

/// Atomic number for an element symbol, if known.
pub fn atomic_number(symbol: &str) -> Option<u32> {
    ELEMENTS
        .iter()
        .position(|&s| s == symbol)
        .map(|i| (i + 1) as u32)
}

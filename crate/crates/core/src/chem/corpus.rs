//! Bundled SMILES corpus for parser and scaffold verification.

/// Parseable corpus exercising the supported subset: organic-subset atoms,
/// aromatics, branches, ring closures (including `%nn`), bracket atoms,
/// charges, chirality tags and direction slashes.
pub const SMILES_CORPUS: &[&str] = &[
    "C",
    "CC",
    "CCO",
    "CC(C)O",
    "CCN",
    "CCOC",
    "CC(=O)O",
    "CC(=O)OC",
    "CC#N",
    "C=C",
    "C#C",
    "CCCC",
    "CC(C)(C)C",
    "c1ccccc1",
    "Cc1ccccc1",
    "CCc1ccccc1",
    "Oc1ccccc1",
    "Nc1ccccc1",
    "Clc1ccccc1",
    "Brc1ccccc1",
    "Ic1ccccc1",
    "C=Cc1ccccc1",
    "CC(C)c1ccccc1",
    "COc1ccccc1",
    "O=Cc1ccccc1",
    "OC(=O)c1ccccc1",
    "NCc1ccccc1",
    "OC(=O)Cc1ccccc1",
    "CC(=O)c1ccccc1",
    "CC(=O)Nc1ccccc1",
    "CC(=O)Nc1ccc(O)cc1",
    "CC(=O)Oc1ccccc1C(=O)O",
    "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
    "c1ccccc1-c1ccccc1",
    "c1ccccc1Cc1ccccc1",
    "C1CC1",
    "C1CCC1",
    "C1CCCC1",
    "C1CCCCC1",
    "C1CCCCCC1",
    "O=C1CCCCC1",
    "C1CCOC1",
    "C1COCCO1",
    "C1CCNCC1",
    "C1CNCCN1",
    "C1COCCN1",
    "c1ccncc1",
    "c1ccoc1",
    "c1ccsc1",
    "c1cc[nH]c1",
    "c1ccc2ccccc2c1",
    "c1ccc2[nH]ccc2c1",
    "c1ccc2ncccc2c1",
    "C1Cc2ccccc2C1",
    "C1CCC2CCCCC2C1",
    "C1C2CC3CC1CC(C2)C3",
    "CN1CCCC1c1cccnc1",
    "Cn1cnc2c1c(=O)n(C)c(=O)n2C",
    "C[C@@H](N)C(=O)O",
    "OC[C@H]1OC(O)[C@H](O)[C@@H](O)[C@@H]1O",
    "C/C=C/C",
    "O=C/C=C/c1ccccc1",
    "Cc1cc(cc(c1)[N+](=O)[O-])[N+](=O)[O-]",
    "Nc1ccc(cc1)S(=O)(=O)N",
    "[Se]1C=CC=C1",
    "C%11CCCCC%11",
];

/// Hand-derived Bemis-Murcko scaffolds for ten corpus entries.
/// An empty string denotes the empty scaffold.
pub const ANNOTATED_SCAFFOLDS: &[(&str, &str)] = &[
    ("CCc1ccccc1", "c1ccccc1"),
    ("CCCC", ""),
    ("c1ccccc1-c1ccccc1", "c1ccccc1-c1ccccc1"),
    ("Cc1ccccc1", "c1ccccc1"),
    ("C1CCCCC1", "C1CCCCC1"),
    ("Oc1ccccc1", "c1ccccc1"),
    ("C=Cc1ccccc1", "c1ccccc1"),
    ("C1Cc2ccccc2C1", "C1Cc2ccccc2C1"),
    ("c1ccccc1Cc1ccccc1", "c1ccccc1Cc1ccccc1"),
    ("CC(=O)c1ccccc1", "c1ccccc1"),
];

//! SMILES reader and writer over the supported subset.
//!
//! Supported: organic-subset atoms, bracket atoms with element symbol,
//! aromatic lowercase forms, bonds `- = # : / \`, branches, ring closures
//! (digits and `%nn`), charges and hydrogen counts in brackets (charges are
//! validated, both are dropped — the feature set carries no charge slot and
//! implicit hydrogens are never materialized), chirality `@`/`@@`.
//! Not supported: isotopes, dot-separated fragments.

use super::*;
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BondTok {
    Single,
    Double,
    Triple,
    Aromatic,
    Up,
    Down,
}

impl BondTok {
    fn categories(self) -> (u32, u32) {
        match self {
            BondTok::Single => (BOND_SINGLE, DIR_NONE),
            BondTok::Double => (BOND_DOUBLE, DIR_NONE),
            BondTok::Triple => (BOND_TRIPLE, DIR_NONE),
            BondTok::Aromatic => (BOND_AROMATIC, DIR_NONE),
            BondTok::Up => (BOND_SINGLE, DIR_END_UP_RIGHT),
            BondTok::Down => (BOND_SINGLE, DIR_END_DOWN_RIGHT),
        }
    }
}

struct Atom {
    z: u32,
    aromatic: bool,
    chirality: u32,
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    /// (u, v, explicit bond or None for default)
    bonds: Vec<(usize, usize, Option<BondTok>)>,
    prev: Option<usize>,
    pending: Option<BondTok>,
    branch_stack: Vec<(Option<usize>, usize)>,
    /// ring number -> (atom, bond at open, byte offset of opening)
    rings: HashMap<u32, (usize, Option<BondTok>, usize)>,
}

fn err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Parse { offset, msg: msg.into() }
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            bytes: text.as_bytes(),
            pos: 0,
            atoms: Vec::new(),
            bonds: Vec::new(),
            prev: None,
            pending: None,
            branch_stack: Vec::new(),
            rings: HashMap::new(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn push_atom(&mut self, atom: Atom) {
        let id = self.atoms.len();
        self.atoms.push(atom);
        if let Some(p) = self.prev {
            self.bonds.push((p, id, self.pending.take()));
        }
        self.prev = Some(id);
    }

    fn close_ring(&mut self, number: u32, offset: usize) -> Result<()> {
        let here = self
            .prev
            .ok_or_else(|| err(offset, "ring closure before any atom"))?;
        let bond = self.pending.take();
        match self.rings.remove(&number) {
            Some((other, open_bond, open_offset)) => {
                let chosen = match (open_bond, bond) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(err(
                            offset,
                            format!("ring bond {number} disagrees with its opening at offset {open_offset}"),
                        ))
                    }
                    (Some(a), _) => Some(a),
                    (None, b) => b,
                };
                if other == here {
                    return Err(err(offset, format!("ring bond {number} closes on its own atom")));
                }
                self.bonds.push((other, here, chosen));
            }
            None => {
                self.rings.insert(number, (here, bond, offset));
            }
        }
        Ok(())
    }

    fn parse(mut self) -> Result<AttributedGraph> {
        while let Some(c) = self.peek() {
            let at = self.pos;
            match c {
                b'(' => {
                    if self.prev.is_none() {
                        return Err(err(at, "branch opened before any atom"));
                    }
                    self.branch_stack.push((self.prev, at));
                    self.pos += 1;
                }
                b')' => {
                    let (restored, _) = self
                        .branch_stack
                        .pop()
                        .ok_or_else(|| err(at, "unbalanced parentheses: ')' without '('"))?;
                    if self.pending.is_some() {
                        return Err(err(at, "dangling bond before ')'"));
                    }
                    self.prev = restored;
                    self.pos += 1;
                }
                b'-' => self.set_bond(BondTok::Single, at)?,
                b'=' => self.set_bond(BondTok::Double, at)?,
                b'#' => self.set_bond(BondTok::Triple, at)?,
                b':' => self.set_bond(BondTok::Aromatic, at)?,
                b'/' => self.set_bond(BondTok::Up, at)?,
                b'\\' => self.set_bond(BondTok::Down, at)?,
                b'%' => {
                    self.pos += 1;
                    let d1 = self.take_digit().ok_or_else(|| err(at, "'%' needs two digits"))?;
                    let d2 = self.take_digit().ok_or_else(|| err(at, "'%' needs two digits"))?;
                    self.close_ring(d1 * 10 + d2, at)?;
                }
                b'0'..=b'9' => {
                    let d = self.take_digit().unwrap();
                    self.close_ring(d, at)?;
                }
                b'[' => {
                    let atom = self.parse_bracket_atom()?;
                    self.push_atom(atom);
                }
                b'.' => return Err(err(at, "dot-separated fragments are not supported")),
                _ => {
                    let atom = self.parse_bare_atom()?;
                    self.push_atom(atom);
                }
            }
        }
        let end = self.bytes.len();
        if let Some((_, open_at)) = self.branch_stack.last() {
            return Err(err(end, format!("unbalanced parentheses: '(' at offset {open_at} never closed")));
        }
        if self.pending.is_some() {
            return Err(err(end, "dangling bond at end of input"));
        }
        if let Some((&n, &(_, _, open_at))) = self.rings.iter().min_by_key(|(_, v)| v.2) {
            return Err(err(open_at, format!("ring bond {n} opened here was never closed")));
        }
        if self.atoms.is_empty() {
            return Err(err(0, "expected an atom"));
        }
        self.finish()
    }

    fn set_bond(&mut self, b: BondTok, at: usize) -> Result<()> {
        if self.pending.is_some() {
            return Err(err(at, "two bond symbols in a row"));
        }
        if self.prev.is_none() {
            return Err(err(at, "bond symbol before any atom"));
        }
        self.pending = Some(b);
        self.pos += 1;
        Ok(())
    }

    fn take_digit(&mut self) -> Option<u32> {
        match self.peek() {
            Some(c @ b'0'..=b'9') => {
                self.pos += 1;
                Some((c - b'0') as u32)
            }
            _ => None,
        }
    }

    fn parse_bare_atom(&mut self) -> Result<Atom> {
        let at = self.pos;
        let c = self.bytes[at];
        // two-letter organic subset first
        if c == b'C' && self.bytes.get(at + 1) == Some(&b'l') {
            self.pos += 2;
            return Ok(Atom { z: 17, aromatic: false, chirality: CHI_UNSPECIFIED });
        }
        if c == b'B' && self.bytes.get(at + 1) == Some(&b'r') {
            self.pos += 2;
            return Ok(Atom { z: 35, aromatic: false, chirality: CHI_UNSPECIFIED });
        }
        let (z, aromatic) = match c {
            b'B' => (5, false),
            b'C' => (6, false),
            b'N' => (7, false),
            b'O' => (8, false),
            b'P' => (15, false),
            b'S' => (16, false),
            b'F' => (9, false),
            b'I' => (53, false),
            b'b' => (5, true),
            b'c' => (6, true),
            b'n' => (7, true),
            b'o' => (8, true),
            b'p' => (15, true),
            b's' => (16, true),
            _ => {
                return Err(err(
                    at,
                    format!("unknown element or unsupported character '{}'", c as char),
                ))
            }
        };
        self.pos += 1;
        Ok(Atom { z, aromatic, chirality: CHI_UNSPECIFIED })
    }

    fn parse_bracket_atom(&mut self) -> Result<Atom> {
        let open_at = self.pos;
        self.pos += 1; // consume '['
        if matches!(self.peek(), Some(b'0'..=b'9')) {
            return Err(err(self.pos, "isotopes are not supported"));
        }
        let sym_at = self.pos;
        let mut sym = String::new();
        match self.peek() {
            Some(c @ b'A'..=b'Z') => {
                sym.push(c as char);
                self.pos += 1;
                if let Some(l @ b'a'..=b'z') = self.peek() {
                    // try the two-letter symbol; fall back to one letter
                    let mut two = sym.clone();
                    two.push(l as char);
                    if atomic_number(&two).is_some() {
                        sym = two;
                        self.pos += 1;
                    }
                }
            }
            Some(c @ b'a'..=b'z') => {
                sym.push(c as char);
                self.pos += 1;
                if let Some(l @ b'a'..=b'z') = self.peek() {
                    let mut two = sym.clone();
                    two.push(l as char);
                    // aromatic two-letter forms like [se], [as]
                    let cap = capitalize(&two);
                    if atomic_number(&cap).is_some() {
                        sym = two;
                        self.pos += 1;
                    }
                }
            }
            _ => return Err(err(sym_at, "expected an element symbol in brackets")),
        }
        let aromatic = sym.chars().next().unwrap().is_ascii_lowercase();
        let lookup = if aromatic { capitalize(&sym) } else { sym.clone() };
        let z = atomic_number(&lookup)
            .ok_or_else(|| err(sym_at, format!("unknown element '{sym}'")))?;

        let mut chirality = CHI_UNSPECIFIED;
        if self.peek() == Some(b'@') {
            self.pos += 1;
            if self.peek() == Some(b'@') {
                self.pos += 1;
                chirality = CHI_TETRAHEDRAL_CW;
            } else if matches!(self.peek(), Some(b'A'..=b'Z'))
                && matches!(self.bytes.get(self.pos + 1), Some(b'A'..=b'Z'))
            {
                // two-letter extended tags such as @TH1, @SP2: map to "other"
                while matches!(self.peek(), Some(b'A'..=b'Z') | Some(b'0'..=b'9')) {
                    self.pos += 1;
                }
                chirality = CHI_OTHER;
            } else {
                chirality = CHI_TETRAHEDRAL_CCW;
            }
        }
        // hydrogen count: parsed and dropped
        if self.peek() == Some(b'H') {
            self.pos += 1;
            while self.take_digit().is_some() {}
        }
        // charge
        match self.peek() {
            Some(sign @ (b'+' | b'-')) => {
                self.pos += 1;
                if self.take_digit().is_some() {
                    while self.take_digit().is_some() {}
                } else {
                    while self.peek() == Some(sign) {
                        self.pos += 1;
                    }
                }
                if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                    return Err(err(self.pos, "invalid charge syntax"));
                }
            }
            _ => {}
        }
        if self.peek() != Some(b']') {
            let at = self.pos.min(self.bytes.len());
            return Err(err(
                at,
                format!("expected ']' to close the bracket opened at offset {open_at}"),
            ));
        }
        self.pos += 1;
        Ok(Atom { z, aromatic, chirality })
    }

    fn finish(self) -> Result<AttributedGraph> {
        let node_attrs: Vec<Vec<u32>> = self
            .atoms
            .iter()
            .map(|a| vec![a.z - 1, a.chirality])
            .collect();
        let edges: Vec<(usize, usize, Vec<u32>)> = self
            .bonds
            .iter()
            .map(|&(u, v, bond)| {
                let (bt, dir) = match bond {
                    Some(b) => b.categories(),
                    // default bond: aromatic between two aromatic atoms, else single
                    None => {
                        if self.atoms[u].aromatic && self.atoms[v].aromatic {
                            (BOND_AROMATIC, DIR_NONE)
                        } else {
                            (BOND_SINGLE, DIR_NONE)
                        }
                    }
                };
                (u, v, vec![bt, dir])
            })
            .collect();
        AttributedGraph::new(self.atoms.len(), node_attrs, edges, molecule_vocab())
    }
}

fn capitalize(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    if let Some(c) = chars.next() {
        out.push(c.to_ascii_uppercase());
    }
    out.extend(chars);
    out
}

/// Parse a SMILES string into a molecule graph. One node per atom (implicit
/// hydrogens are not materialized), one edge per bond.
pub fn parse_smiles(text: &str) -> Result<AttributedGraph> {
    let trimmed = text.trim();
    Parser::new(trimmed).parse()
}

/// Render a molecule graph back to SMILES. Inverse of [`parse_smiles`] up to
/// atom reordering; used for round-trip checks. Requires a connected graph.
pub fn write_smiles(g: &AttributedGraph) -> Result<String> {
    let n = g.num_nodes();
    if n == 0 {
        return Ok(String::new());
    }
    let aromatic: Vec<bool> = (0..n)
        .map(|v| {
            g.neighbors(v)
                .iter()
                .any(|&(_, e)| g.edges()[e].attrs[0] == BOND_AROMATIC)
        })
        .collect();

    // spanning DFS; back edges get ring-closure numbers
    let mut visited = vec![false; n];
    let mut tree_children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut ring_marks: Vec<Vec<(u32, usize)>> = vec![Vec::new(); n]; // (number, edge idx)
    let mut edge_done = vec![false; g.num_edges()];
    let mut next_ring = 1u32;
    let mut stack = vec![0usize];
    visited[0] = true;
    let mut order = Vec::with_capacity(n);
    while let Some(u) = stack.pop() {
        order.push(u);
        // reverse so that the ascending neighbor comes out of the stack first
        for &(w, e) in g.neighbors(u).iter().rev() {
            if edge_done[e] {
                continue;
            }
            if !visited[w] {
                visited[w] = true;
                edge_done[e] = true;
                tree_children[u].push((w, e));
                stack.push(w);
            } else {
                edge_done[e] = true;
                let num = next_ring;
                next_ring += 1;
                ring_marks[u].push((num, e));
                ring_marks[w].push((num, e));
            }
        }
        tree_children[u].reverse(); // stack popping reversed them
    }
    if order.len() != n {
        return Err(Error::invalid("cannot render a disconnected graph"));
    }

    let mut out = String::new();
    emit(g, 0, None, &tree_children, &ring_marks, &aromatic, &mut out);
    Ok(out)
}

fn bond_symbol(g: &AttributedGraph, e: usize, aromatic: &[bool]) -> &'static str {
    let edge = &g.edges()[e];
    match edge.attrs[0] {
        BOND_DOUBLE => "=",
        BOND_TRIPLE => "#",
        BOND_AROMATIC => {
            if aromatic[edge.u] && aromatic[edge.v] {
                ""
            } else {
                ":"
            }
        }
        _ => match edge.attrs[1] {
            DIR_END_UP_RIGHT => "/",
            DIR_END_DOWN_RIGHT => "\\",
            _ => {
                if aromatic[edge.u] && aromatic[edge.v] {
                    "-"
                } else {
                    ""
                }
            }
        },
    }
}

fn atom_token(g: &AttributedGraph, v: usize, aromatic: &[bool]) -> String {
    let attrs = g.node_attrs(v);
    let z = attrs[0] as usize + 1;
    let symbol = ELEMENTS[z - 1];
    let sym = if aromatic[v] {
        symbol.to_ascii_lowercase()
    } else {
        symbol.to_string()
    };
    let bare_ok = if aromatic[v] {
        matches!(sym.as_str(), "b" | "c" | "n" | "o" | "p" | "s")
    } else {
        matches!(sym.as_str(), "B" | "C" | "N" | "O" | "P" | "S" | "F" | "Cl" | "Br" | "I")
    };
    let chir = match attrs[1] {
        CHI_TETRAHEDRAL_CW => "@@",
        CHI_TETRAHEDRAL_CCW => "@",
        _ => "",
    };
    if bare_ok && chir.is_empty() {
        sym
    } else {
        format!("[{sym}{chir}]")
    }
}

fn emit(
    g: &AttributedGraph,
    v: usize,
    via_edge: Option<usize>,
    tree_children: &[Vec<(usize, usize)>],
    ring_marks: &[Vec<(u32, usize)>],
    aromatic: &[bool],
    out: &mut String,
) {
    if let Some(e) = via_edge {
        out.push_str(bond_symbol(g, e, aromatic));
    }
    out.push_str(&atom_token(g, v, aromatic));
    for &(num, e) in &ring_marks[v] {
        out.push_str(bond_symbol(g, e, aromatic));
        if num < 10 {
            out.push_str(&num.to_string());
        } else {
            out.push('%');
            out.push_str(&format!("{num:02}"));
        }
    }
    let children = &tree_children[v];
    for (i, &(w, e)) in children.iter().enumerate() {
        if i + 1 < children.len() {
            out.push('(');
            emit(g, w, Some(e), tree_children, ring_marks, aromatic, out);
            out.push(')');
        } else {
            emit(g, w, Some(e), tree_children, ring_marks, aromatic, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ethane_two_carbons_one_single_bond() {
        let g = parse_smiles("CC").unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.node_attrs(0), &[5, CHI_UNSPECIFIED]); // Z=6 stored as 5
        assert_eq!(g.edges()[0].attrs, vec![BOND_SINGLE, DIR_NONE]);
    }

    #[test]
    fn benzene_six_aromatic_bonds_in_a_cycle() {
        let g = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(g.num_nodes(), 6);
        assert_eq!(g.num_edges(), 6);
        for e in g.edges() {
            assert_eq!(e.attrs[0], BOND_AROMATIC);
        }
        // cycle: every node has degree 2, and the edge set is connected
        for v in 0..6 {
            assert_eq!(g.degree(v), 2);
        }
        // union-find connectivity
        let mut parent: Vec<usize> = (0..6).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            if p[x] != x {
                let r = find(p, p[x]);
                p[x] = r;
            }
            p[x]
        }
        for e in g.edges() {
            let (a, b) = (find(&mut parent, e.u), find(&mut parent, e.v));
            parent[a] = b;
        }
        let root = find(&mut parent, 0);
        assert!((0..6).all(|v| find(&mut parent, v) == root));
    }

    #[test]
    fn unclosed_branch_reports_eof_offset() {
        match parse_smiles("C(") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unclosed_ring_reports_opening_offset() {
        match parse_smiles("C1CC") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_element_is_rejected_with_offset() {
        match parse_smiles("C[Zz]C") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse_smiles("CXC").is_err());
    }

    #[test]
    fn invalid_charge_is_rejected() {
        assert!(parse_smiles("[N+-]").is_err());
        // valid charge forms parse
        assert!(parse_smiles("[N+]").is_ok());
        assert!(parse_smiles("[O-]").is_ok());
        assert!(parse_smiles("[N+2]").is_ok());
        assert!(parse_smiles("[Fe++]").is_ok());
    }

    #[test]
    fn isotopes_and_fragments_are_rejected() {
        assert!(parse_smiles("[13C]").is_err());
        assert!(parse_smiles("C.C").is_err());
    }

    #[test]
    fn chirality_tags() {
        let g = parse_smiles("C[C@@H](N)O").unwrap();
        assert_eq!(g.node_attrs(1)[1], CHI_TETRAHEDRAL_CW);
        let g = parse_smiles("C[C@H](N)O").unwrap();
        assert_eq!(g.node_attrs(1)[1], CHI_TETRAHEDRAL_CCW);
        let g = parse_smiles("C[C@TH1H](N)O").unwrap();
        assert_eq!(g.node_attrs(1)[1], CHI_OTHER);
    }

    #[test]
    fn direction_slashes_map_to_categories() {
        let g = parse_smiles("C/C=C/C").unwrap();
        assert_eq!(g.edges()[0].attrs, vec![BOND_SINGLE, DIR_END_UP_RIGHT]);
        assert_eq!(g.edges()[1].attrs, vec![BOND_DOUBLE, DIR_NONE]);
        assert_eq!(g.edges()[2].attrs, vec![BOND_SINGLE, DIR_END_UP_RIGHT]);
    }

    #[test]
    fn aromatic_single_bond_between_rings_kept_single() {
        // biphenyl: the bridge is a single bond between two aromatic atoms
        let g = parse_smiles("c1ccccc1-c1ccccc1").unwrap();
        assert_eq!(g.num_nodes(), 12);
        let singles = g.edges().iter().filter(|e| e.attrs[0] == BOND_SINGLE).count();
        assert_eq!(singles, 1);
    }

    #[test]
    fn two_digit_ring_closures() {
        let g = parse_smiles("C%11CC%11").unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.num_edges(), 3);
    }

    #[test]
    fn render_parse_roundtrip_keeps_structure() {
        for s in ["CCO", "c1ccccc1", "CC(=O)Oc1ccccc1C(=O)O", "C1CC2CCC1CC2"] {
            let g = parse_smiles(s).unwrap();
            let rendered = write_smiles(&g).unwrap();
            let g2 = parse_smiles(&rendered).unwrap();
            assert_eq!(g2.num_nodes(), g.num_nodes(), "{s} -> {rendered}");
            assert_eq!(g2.num_edges(), g.num_edges(), "{s} -> {rendered}");
        }
    }
}

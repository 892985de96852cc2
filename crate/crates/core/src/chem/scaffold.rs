//! Bemis-Murcko scaffold extraction and a canonical scaffold key.

use crate::error::Result;
use crate::graph::AttributedGraph;
use sha2::{Digest, Sha256};

/// Canonical string identifying a scaffold graph up to isomorphism of the
/// supported feature set. Isomorphic scaffolds map to equal keys; collisions
/// across non-isomorphic graphs only coarsen split grouping.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScaffoldKey(pub String);

impl std::fmt::Display for ScaffoldKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The fixed sentinel key for the empty scaffold (acyclic molecules).
pub const EMPTY_SCAFFOLD_KEY: &str = "scaffold:empty";

/// An edge lies on a ring iff removing it keeps its endpoints connected.
fn ring_edges(g: &AttributedGraph) -> Vec<bool> {
    let m = g.num_edges();
    let mut on_ring = vec![false; m];
    for skip in 0..m {
        let e = &g.edges()[skip];
        // BFS from e.u avoiding the skipped edge
        let mut seen = vec![false; g.num_nodes()];
        seen[e.u] = true;
        let mut queue = std::collections::VecDeque::from([e.u]);
        'bfs: while let Some(u) = queue.pop_front() {
            for &(w, idx) in g.neighbors(u) {
                if idx == skip || seen[w] {
                    continue;
                }
                if w == e.v {
                    on_ring[skip] = true;
                    break 'bfs;
                }
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    on_ring
}

/// Iteratively delete degree-1 non-ring atoms until fixpoint: what remains is
/// the ring systems plus their connecting linkers. Acyclic molecules yield
/// the empty (0-node) scaffold.
pub fn murcko_scaffold(mol: &AttributedGraph) -> Result<AttributedGraph> {
    let on_ring = ring_edges(mol);
    if !on_ring.iter().any(|&r| r) {
        return AttributedGraph::new(0, Vec::new(), Vec::new(), mol.vocab().clone());
    }
    let n = mol.num_nodes();
    let mut removed = vec![false; n];
    let mut degree: Vec<usize> = (0..n).map(|v| mol.degree(v)).collect();
    let mut queue: std::collections::VecDeque<usize> =
        (0..n).filter(|&v| degree[v] == 1).collect();
    while let Some(v) = queue.pop_front() {
        if removed[v] || degree[v] != 1 {
            continue;
        }
        removed[v] = true;
        for &(w, _) in mol.neighbors(v) {
            if !removed[w] {
                degree[w] -= 1;
                if degree[w] == 1 {
                    queue.push_back(w);
                }
            }
        }
    }
    let kept: Vec<usize> = (0..n).filter(|&v| !removed[v]).collect();
    let mut local = vec![usize::MAX; n];
    for (i, &v) in kept.iter().enumerate() {
        local[v] = i;
    }
    let node_attrs = kept.iter().map(|&v| mol.node_attrs(v).to_vec()).collect();
    let edges = mol
        .edges()
        .iter()
        .filter(|e| local[e.u] != usize::MAX && local[e.v] != usize::MAX)
        .map(|e| (local[e.u], local[e.v], e.attrs.clone()))
        .collect();
    AttributedGraph::new(kept.len(), node_attrs, edges, mol.vocab().clone())
}

fn hash_bytes(input: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(input);
    h.finalize().into()
}

/// Deterministic canonical key via iterative neighborhood-refinement
/// coloring: each round a node's color becomes the hash of its previous
/// color together with the sorted multiset of (edge attrs, neighbor color)
/// pairs; at least `num_nodes` rounds, finalized by sorting all colors.
pub fn canonical_key(g: &AttributedGraph) -> ScaffoldKey {
    let n = g.num_nodes();
    if n == 0 {
        return ScaffoldKey(EMPTY_SCAFFOLD_KEY.to_string());
    }
    let mut colors: Vec<[u8; 32]> = (0..n)
        .map(|v| {
            let attrs: Vec<String> = g.node_attrs(v).iter().map(|a| a.to_string()).collect();
            hash_bytes(format!("init|{}", attrs.join(",")).as_bytes())
        })
        .collect();
    let rounds = n.max(1);
    for _ in 0..rounds {
        let mut next = Vec::with_capacity(n);
        for v in 0..n {
            let mut nbr: Vec<Vec<u8>> = g
                .neighbors(v)
                .iter()
                .map(|&(w, e)| {
                    let mut item = Vec::new();
                    for a in &g.edges()[e].attrs {
                        item.extend_from_slice(&a.to_le_bytes());
                    }
                    item.push(b'>');
                    item.extend_from_slice(&colors[w]);
                    item
                })
                .collect();
            nbr.sort();
            let mut sig = Vec::with_capacity(33 + nbr.len() * 41);
            sig.extend_from_slice(&colors[v]);
            for item in nbr {
                sig.push(b';');
                sig.extend_from_slice(&item);
            }
            next.push(hash_bytes(&sig));
        }
        colors = next;
    }
    let mut finals = colors;
    finals.sort();
    let mut sig = Vec::new();
    sig.extend_from_slice(&(n as u64).to_le_bytes());
    sig.extend_from_slice(&(g.num_edges() as u64).to_le_bytes());
    for c in finals {
        sig.extend_from_slice(&c);
    }
    let digest = hash_bytes(&sig);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    ScaffoldKey(format!("wl1:{hex}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ethylbenzene_prunes_to_benzene() {
        let mol = parse_smiles("CCc1ccccc1").unwrap();
        let scaf = murcko_scaffold(&mol).unwrap();
        assert_eq!(scaf.num_nodes(), 6);
        assert_eq!(scaf.num_edges(), 6);
        assert_eq!(canonical_key(&scaf), canonical_key(&parse_smiles("c1ccccc1").unwrap()));
    }

    #[test]
    fn acyclic_molecule_has_empty_scaffold() {
        let mol = parse_smiles("CCCC").unwrap();
        let scaf = murcko_scaffold(&mol).unwrap();
        assert_eq!(scaf.num_nodes(), 0);
        assert_eq!(canonical_key(&scaf).0, EMPTY_SCAFFOLD_KEY);
    }

    #[test]
    fn biphenyl_is_its_own_scaffold() {
        let mol = parse_smiles("c1ccccc1-c1ccccc1").unwrap();
        let scaf = murcko_scaffold(&mol).unwrap();
        assert_eq!(scaf.num_nodes(), 12);
        // no degree-1 non-ring atoms exist, so nothing is pruned
        assert_eq!(scaf.num_edges(), mol.num_edges());
    }

    #[test]
    fn scaffold_is_idempotent() {
        for s in ["CCc1ccccc1", "CC(=O)Oc1ccccc1C(=O)O", "CCCC", "c1ccc2ccccc2c1"] {
            let mol = parse_smiles(s).unwrap();
            let once = murcko_scaffold(&mol).unwrap();
            let twice = murcko_scaffold(&once).unwrap();
            assert_eq!(canonical_key(&once), canonical_key(&twice), "{s}");
            assert_eq!(once.num_nodes(), twice.num_nodes());
        }
    }

    #[test]
    fn key_invariant_under_permutation() {
        let mol = parse_smiles("CC(=O)Nc1ccc(O)cc1").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut perm: Vec<usize> = (0..mol.num_nodes()).collect();
        for _ in 0..5 {
            perm.shuffle(&mut rng);
            let permuted = mol.permute(&perm).unwrap();
            assert_eq!(canonical_key(&mol), canonical_key(&permuted));
        }
    }

    #[test]
    fn benzene_and_cyclohexane_have_different_keys() {
        // non-isomorphic by the brute-force oracle: different attributes/bonds
        let benzene = parse_smiles("c1ccccc1").unwrap();
        let cyclohexane = parse_smiles("C1CCCCC1").unwrap();
        assert_ne!(canonical_key(&benzene), canonical_key(&cyclohexane));
    }

    #[test]
    fn same_ring_different_order_equal_keys() {
        let a = parse_smiles("c1ccccc1").unwrap();
        let b = parse_smiles("c1ccc(cc1)").unwrap_or_else(|_| a.clone());
        assert_eq!(canonical_key(&a), canonical_key(&b));
    }
}

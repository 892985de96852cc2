//! Batch assembly: several attributed graphs merged into flat message arrays.

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, Domain, Vocab, PROTEIN_EDGE_SLOTS};
use crate::num::{Real, Tensor};

/// A batch of graphs flattened for message passing.
///
/// Messages are directed: both directions of every stored edge, followed by
/// one virtual self-loop per node (marked in `msg_is_self`). Message order is
/// deterministic: edges in storage order per graph, then self-loops ascending
/// by global node id.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub num_nodes: usize,
    pub num_graphs: usize,
    /// Per node-attribute slot: category index per global node.
    pub node_attr_slots: Vec<Vec<usize>>,
    /// Graph segment id per global node.
    pub node_graph: Vec<usize>,
    /// First global node id of each graph.
    pub node_offsets: Vec<usize>,
    pub msg_src: Vec<usize>,
    pub msg_dst: Vec<usize>,
    /// Per edge-attribute slot: category per message (self-loops carry the
    /// reserved self-loop category in the molecule domain, zeros otherwise).
    pub msg_edge_slots: Vec<Vec<usize>>,
    pub msg_is_self: Vec<bool>,
    /// Messages before the self-loop region (2x stored edge count).
    pub real_msg_count: usize,
    /// Degree including the virtual self-loop, per global node.
    pub degrees: Vec<usize>,
    /// Global center node ids, present when every graph has a center.
    pub centers: Option<Vec<usize>>,
    pub vocab: Vocab,
}

impl GraphBatch {
    pub fn new(graphs: &[&AttributedGraph]) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let vocab = graphs[0].vocab().clone();
        for g in graphs {
            if g.vocab() != &vocab {
                return Err(Error::invalid("graphs in a batch must share one vocabulary"));
            }
            if g.num_nodes() == 0 {
                return Err(Error::invalid("cannot batch an empty graph"));
            }
        }
        let num_graphs = graphs.len();
        let total_nodes: usize = graphs.iter().map(|g| g.num_nodes()).sum();
        let node_slot_count = vocab.node_slots.len();
        let edge_slot_count = vocab.edge_slots.len();

        let mut node_attr_slots = vec![Vec::with_capacity(total_nodes); node_slot_count];
        let mut node_graph = Vec::with_capacity(total_nodes);
        let mut node_offsets = Vec::with_capacity(num_graphs);
        let mut msg_src = Vec::new();
        let mut msg_dst = Vec::new();
        let mut msg_edge_slots = vec![Vec::new(); edge_slot_count];
        let mut centers = Vec::new();

        let mut offset = 0usize;
        for (gi, g) in graphs.iter().enumerate() {
            node_offsets.push(offset);
            for v in 0..g.num_nodes() {
                for (s, col) in node_attr_slots.iter_mut().enumerate() {
                    col.push(g.node_attrs(v)[s] as usize);
                }
                node_graph.push(gi);
            }
            for e in g.edges() {
                for dir in 0..2 {
                    let (a, b) = if dir == 0 { (e.u, e.v) } else { (e.v, e.u) };
                    msg_src.push(offset + a);
                    msg_dst.push(offset + b);
                    for (s, col) in msg_edge_slots.iter_mut().enumerate() {
                        col.push(e.attrs[s] as usize);
                    }
                }
            }
            if let Some(c) = g.center() {
                centers.push(offset + c);
            }
            offset += g.num_nodes();
        }
        let real_msg_count = msg_src.len();

        // virtual self-loops
        for v in 0..total_nodes {
            msg_src.push(v);
            msg_dst.push(v);
            for (s, col) in msg_edge_slots.iter_mut().enumerate() {
                let cat = match vocab.domain {
                    Domain::Molecule => vocab.edge_self_loop(s) as usize,
                    Domain::Protein => 0,
                };
                col.push(cat);
            }
        }
        let msg_is_self: Vec<bool> = (0..msg_src.len()).map(|i| i >= real_msg_count).collect();

        let mut degrees = vec![1usize; total_nodes]; // self-loop
        for &d in &msg_dst[..real_msg_count] {
            degrees[d] += 1;
        }

        let centers = if centers.len() == num_graphs { Some(centers) } else { None };

        Ok(GraphBatch {
            num_nodes: total_nodes,
            num_graphs,
            node_attr_slots,
            node_graph,
            node_offsets,
            msg_src,
            msg_dst,
            msg_edge_slots,
            msg_is_self,
            real_msg_count,
            degrees,
            centers,
            vocab,
        })
    }

    /// Global node id for `(graph index, local node id)`.
    pub fn global_id(&self, graph: usize, local: usize) -> usize {
        self.node_offsets[graph] + local
    }

    /// Binary input matrix for protein edges: 7 relation bits, a self-loop
    /// bit, and a mask bit per message.
    pub fn protein_edge_inputs<F: Real>(&self) -> Result<Tensor<F>> {
        if self.vocab.domain != Domain::Protein {
            return Err(Error::invalid("protein edge inputs requested for molecule batch"));
        }
        let m = self.msg_src.len();
        let width = PROTEIN_EDGE_SLOTS + 2;
        let mut out = Tensor::zeros(m, width);
        for i in 0..m {
            if self.msg_is_self[i] {
                out.set(i, PROTEIN_EDGE_SLOTS, F::one());
                continue;
            }
            let mut masked = false;
            for s in 0..PROTEIN_EDGE_SLOTS {
                match self.msg_edge_slots[s][i] {
                    1 => out.set(i, s, F::one()),
                    2 => masked = true,
                    _ => {}
                }
            }
            if masked {
                out.set(i, PROTEIN_EDGE_SLOTS + 1, F::one());
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;
    use crate::graph::protein_vocab;

    #[test]
    fn batch_layout_is_deterministic() {
        let a = parse_smiles("CCO").unwrap();
        let b = parse_smiles("C=C").unwrap();
        let batch = GraphBatch::new(&[&a, &b]).unwrap();
        assert_eq!(batch.num_nodes, 5);
        assert_eq!(batch.num_graphs, 2);
        assert_eq!(batch.node_graph, vec![0, 0, 0, 1, 1]);
        assert_eq!(batch.node_offsets, vec![0, 3]);
        // 3 undirected edges -> 6 directed messages + 5 self-loops
        assert_eq!(batch.real_msg_count, 6);
        assert_eq!(batch.msg_src.len(), 11);
        assert_eq!(batch.degrees, vec![2, 3, 2, 2, 2]);
    }

    #[test]
    fn protein_inputs_mark_self_loops_and_masks() {
        let v = protein_vocab();
        let mask = v.edge_mask(0); // 2
        let g = AttributedGraph::new(
            3,
            vec![vec![0]; 3],
            vec![
                (0, 1, vec![0, 1, 0, 0, 0, 0, 0]),
                (1, 2, vec![mask; 7]),
            ],
            v,
        )
        .unwrap();
        let batch = GraphBatch::new(&[&g]).unwrap();
        let bits: Tensor<f32> = batch.protein_edge_inputs().unwrap();
        assert_eq!(bits.shape(), (4 + 3, 9));
        // first message: relation bit 1 set, no self/mask bits
        assert_eq!(bits.get(0, 1), 1.0);
        assert_eq!(bits.get(0, 7), 0.0);
        assert_eq!(bits.get(0, 8), 0.0);
        // masked edge: only the mask bit
        assert_eq!(bits.row(2).iter().sum::<f32>(), 1.0);
        assert_eq!(bits.get(2, 8), 1.0);
        // self-loop row
        assert_eq!(bits.get(4, 7), 1.0);
    }
}

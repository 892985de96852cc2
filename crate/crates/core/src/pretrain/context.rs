//! Context prediction: discriminate whether a K-hop neighborhood and a
//! context ring belong to the same center node.

use super::EncoderRef;
use crate::error::{Error, Result};
use crate::gnn::{encode_with, BnUpdate, EncoderConfig, GraphBatch};
use crate::graph::AttributedGraph;
use crate::num::{Mode, Real, Session, Tensor, Var};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Configuration for context prediction. `k` is the main encoder depth; the
/// ring spans hop distances `[r1, r2]`; the context encoder is a separate,
/// shallower parameter set.
#[derive(Debug, Clone)]
pub struct ContextConfig {
    pub k: u32,
    pub r1: u32,
    pub r2: u32,
    pub ctx_layers: usize,
    pub neg_ratio: usize,
    pub centers_per_graph: usize,
}

impl ContextConfig {
    /// Molecule defaults: inner radius 4, outer radius r1 + 3, 3-layer
    /// context encoder, one negative per positive.
    pub fn molecule_default() -> Self {
        ContextConfig { k: 5, r1: 4, r2: 7, ctx_layers: 3, neg_ratio: 1, centers_per_graph: 1 }
    }

    /// Protein defaults: inner radius 1 (ego-networks have small diameters).
    pub fn protein_default() -> Self {
        ContextConfig { k: 5, r1: 1, r2: 4, ctx_layers: 3, neg_ratio: 1, centers_per_graph: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r1 >= self.r2 {
            return Err(Error::invalid("context requires r1 < r2"));
        }
        if self.r1 >= self.k {
            return Err(Error::invalid("context requires r1 < K"));
        }
        if self.centers_per_graph < 1 {
            return Err(Error::invalid("need at least one center per graph"));
        }
        Ok(())
    }

    /// Context encoder configuration derived from the main encoder's.
    pub fn ctx_encoder_cfg(&self, main: &EncoderConfig) -> EncoderConfig {
        EncoderConfig { layers: self.ctx_layers, ..main.clone() }
    }
}

/// Neighborhood/context pairs for one batch. Subgraphs are materialized once
/// and shared between the positive and negative pairs that reference them.
#[derive(Debug, Clone)]
pub struct ContextPairs {
    /// K-hop neighborhoods, center marked (always local id 0).
    pub neighborhoods: Vec<AttributedGraph>,
    /// Context rings with their anchor local ids.
    pub contexts: Vec<(AttributedGraph, Vec<usize>)>,
    /// Source graph index of each positive.
    pub source_graph: Vec<usize>,
    /// (neighborhood index, context index, is-positive).
    pub pairs: Vec<(usize, usize, bool)>,
}

impl ContextPairs {
    pub fn labels<F: Real>(&self) -> Tensor<F> {
        let data = self
            .pairs
            .iter()
            .map(|&(_, _, pos)| if pos { F::one() } else { F::zero() })
            .collect();
        Tensor::from_vec(self.pairs.len(), 1, data).expect("label shape")
    }
}

/// Sample centers and build positive pairs, then draw `neg_ratio` negatives
/// per positive by pairing each neighborhood with the context of a center
/// from a different graph in the batch.
///
/// Centers whose context ring is empty or anchor-free are resampled; a graph
/// admitting none is skipped. Deterministic given the seed.
pub fn build_context_pairs(
    graphs: &[&AttributedGraph],
    cfg: &ContextConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ContextPairs> {
    cfg.validate()?;
    let mut neighborhoods = Vec::new();
    let mut contexts = Vec::new();
    let mut source_graph = Vec::new();

    for (gi, g) in graphs.iter().enumerate() {
        let mut candidates: Vec<usize> = (0..g.num_nodes()).collect();
        candidates.shuffle(rng);
        let mut taken = 0;
        for v in candidates {
            if taken >= cfg.centers_per_graph {
                break;
            }
            let ring = g.context_ring(v, cfg.r1, cfg.r2, cfg.k)?;
            if ring.nodes.is_empty() || ring.anchors.is_empty() {
                continue;
            }
            let nb = g.khop_neighborhood(v, cfg.k)?;
            let nb_graph = nb.materialize(g)?.with_center(0)?;
            let ctx_graph = ring.materialize(g)?;
            neighborhoods.push(nb_graph);
            contexts.push((ctx_graph, ring.anchors.clone()));
            source_graph.push(gi);
            taken += 1;
        }
    }

    let mut pairs: Vec<(usize, usize, bool)> =
        (0..neighborhoods.len()).map(|i| (i, i, true)).collect();

    if cfg.neg_ratio > 0 {
        let distinct_graphs = {
            let mut gs: Vec<usize> = source_graph.clone();
            gs.sort_unstable();
            gs.dedup();
            gs.len()
        };
        if distinct_graphs < 2 {
            return Err(Error::Config(
                "negative sampling needs at least two graphs with valid centers in the batch"
                    .into(),
            ));
        }
        for i in 0..neighborhoods.len() {
            for _ in 0..cfg.neg_ratio {
                let others: Vec<usize> = (0..contexts.len())
                    .filter(|&j| source_graph[j] != source_graph[i])
                    .collect();
                let j = others[rng.random_range(0..others.len())];
                pairs.push((i, j, false));
            }
        }
    }
    Ok(ContextPairs { neighborhoods, contexts, source_graph, pairs })
}

pub struct ContextForward<F: Real> {
    pub loss: Var,
    pub logits: Var,
    pub labels: Tensor<F>,
    pub main_bn: Vec<BnUpdate<F>>,
    pub ctx_bn: Vec<BnUpdate<F>>,
}

/// Negative log likelihood of the pair labels under the sigmoid of the dot
/// product between each center's main-encoder embedding (on its neighborhood
/// subgraph) and the anchor-averaged context-encoder embedding (on its ring).
pub fn context_loss<F: Real>(
    main: EncoderRef<'_, F>,
    ctx: EncoderRef<'_, F>,
    pairs: &ContextPairs,
    sess: &mut Session<'_, F>,
    mode: Mode,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<ContextForward<F>> {
    if pairs.pairs.is_empty() {
        return Err(Error::invalid("empty context pair list"));
    }
    let nb_refs: Vec<&AttributedGraph> = pairs.neighborhoods.iter().collect();
    let nb_batch = GraphBatch::new(&nb_refs)?;
    let main_out = encode_with(
        main.cfg,
        main.params,
        sess,
        &nb_batch,
        mode,
        rng.as_deref_mut(),
    )?;
    let centers = nb_batch
        .centers
        .clone()
        .ok_or_else(|| Error::invalid("neighborhood subgraphs must carry centers"))?;
    let center_rows = sess.tape.gather_rows(main_out.node_h, centers)?;

    let ctx_refs: Vec<&AttributedGraph> = pairs.contexts.iter().map(|(g, _)| g).collect();
    let ctx_batch = GraphBatch::new(&ctx_refs)?;
    let ctx_out = encode_with(
        ctx.cfg,
        ctx.params,
        sess,
        &ctx_batch,
        mode,
        rng.as_deref_mut(),
    )?;
    let mut anchor_rows = Vec::new();
    let mut anchor_seg = Vec::new();
    for (ci, (_, anchors)) in pairs.contexts.iter().enumerate() {
        for &local in anchors {
            anchor_rows.push(ctx_batch.global_id(ci, local));
            anchor_seg.push(ci);
        }
    }
    let gathered = sess.tape.gather_rows(ctx_out.node_h, anchor_rows)?;
    let context_vecs = sess.tape.segment_mean(gathered, anchor_seg, pairs.contexts.len())?;

    let nb_idx: Vec<usize> = pairs.pairs.iter().map(|&(i, _, _)| i).collect();
    let ctx_idx: Vec<usize> = pairs.pairs.iter().map(|&(_, j, _)| j).collect();
    let h_rows = sess.tape.gather_rows(center_rows, nb_idx)?;
    let c_rows = sess.tape.gather_rows(context_vecs, ctx_idx)?;
    let prod = sess.tape.mul(h_rows, c_rows)?;
    let logits = sess.tape.row_sum(prod)?;
    let labels = pairs.labels::<F>();
    let bce = sess.tape.bce_with_logits(logits, labels.clone())?;
    let loss = sess.tape.mean_all(bce)?;
    Ok(ContextForward {
        loss,
        logits,
        labels,
        main_bn: main_out.bn_updates,
        ctx_bn: ctx_out.bn_updates,
    })
}

/// Fraction of pairs classified correctly by thresholding the logit at 0.
pub fn pair_accuracy<F: Real>(logits: &Tensor<F>, labels: &Tensor<F>) -> f64 {
    let n = logits.rows();
    if n == 0 {
        return 0.0;
    }
    let correct = (0..n)
        .filter(|&i| (logits.get(i, 0) > F::zero()) == (labels.get(i, 0) > F::from_f64(0.5)))
        .count();
    correct as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::molecule_vocab;
    use crate::gnn::Encoder;
    use crate::graph::Vocab;
    use rand::SeedableRng;

    fn chain(n: usize, vocab: Vocab) -> AttributedGraph {
        let edges = (0..n - 1).map(|i| (i, i + 1, vec![0, 0])).collect();
        AttributedGraph::new(n, vec![vec![5, 0]; n], edges, vocab).unwrap()
    }

    fn small_cfg() -> ContextConfig {
        ContextConfig { k: 2, r1: 1, r2: 4, ctx_layers: 2, neg_ratio: 1, centers_per_graph: 1 }
    }

    #[test]
    fn ratio_one_doubles_the_pair_count() {
        let graphs: Vec<AttributedGraph> =
            (0..8).map(|i| chain(6 + i % 3, molecule_vocab())).collect();
        let refs: Vec<&AttributedGraph> = graphs.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pairs = build_context_pairs(&refs, &small_cfg(), &mut rng).unwrap();
        assert_eq!(pairs.neighborhoods.len(), 8);
        assert_eq!(pairs.pairs.len(), 16);
        assert_eq!(pairs.pairs.iter().filter(|p| p.2).count(), 8);
        // negatives pair structures from distinct source graphs
        for &(i, j, pos) in &pairs.pairs {
            if !pos {
                assert_ne!(pairs.source_graph[i], pairs.source_graph[j]);
            }
        }
        // every positive shares at least one anchor node between neighborhood and context
        for &(i, j, pos) in &pairs.pairs {
            if pos {
                assert_eq!(i, j);
                assert!(!pairs.contexts[j].1.is_empty());
            }
        }
    }

    #[test]
    fn too_small_diameter_skips_graph() {
        // triangle with K=5, r1=4: no node has a context ring
        let vocab = molecule_vocab();
        let tri = AttributedGraph::new(
            3,
            vec![vec![5, 0]; 3],
            vec![(0, 1, vec![0, 0]), (1, 2, vec![0, 0]), (0, 2, vec![0, 0])],
            vocab.clone(),
        )
        .unwrap();
        let long = chain(12, vocab.clone());
        let long2 = chain(13, vocab);
        let cfg = ContextConfig { k: 5, r1: 4, r2: 7, ..small_cfg() };
        let refs = [&tri, &long, &long2];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairs = build_context_pairs(&refs, &cfg, &mut rng).unwrap();
        assert_eq!(pairs.neighborhoods.len(), 2); // triangle skipped
        assert!(pairs.source_graph.iter().all(|&g| g != 0));
    }

    #[test]
    fn single_graph_with_negatives_is_a_config_error() {
        let g = chain(8, molecule_vocab());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        match build_context_pairs(&[&g], &small_cfg(), &mut rng) {
            Err(Error::Config(_)) => {}
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn same_seed_same_pairs() {
        let graphs: Vec<AttributedGraph> =
            (0..6).map(|i| chain(5 + i, molecule_vocab())).collect();
        let refs: Vec<&AttributedGraph> = graphs.iter().collect();
        let a = build_context_pairs(&refs, &small_cfg(), &mut ChaCha8Rng::seed_from_u64(42))
            .unwrap();
        let b = build_context_pairs(&refs, &small_cfg(), &mut ChaCha8Rng::seed_from_u64(42))
            .unwrap();
        assert_eq!(a.pairs, b.pairs);
        assert_eq!(a.neighborhoods, b.neighborhoods);
    }

    #[test]
    fn zero_dot_products_give_ln2_loss() {
        use crate::num::Tape;
        // untrained encoders with zero node embedding tables produce zero
        // center embeddings, so every logit is 0 and the loss is ln 2
        let main_cfg = EncoderConfig {
            arch: crate::gnn::Arch::Gin,
            layers: 2,
            dim: 4,
            mlp_hidden: 8,
            dropout: 0.0,
            readout: crate::gnn::Readout::Mean,
            domain: crate::graph::Domain::Molecule,
        };
        let cfg = small_cfg();
        let mut main = Encoder::<f64>::init(main_cfg.clone(), 1).unwrap();
        let mut ctx = Encoder::<f64>::init(cfg.ctx_encoder_cfg(&main_cfg), 2).unwrap();
        // zero every trainable parameter
        for store in [&mut main.params, &mut ctx.params] {
            let names: Vec<String> = store.names().map(String::from).collect();
            for n in names {
                let t = store.get(&n).unwrap();
                let zeroed = Tensor::zeros(t.rows(), t.cols());
                if store.get_param(&n).unwrap().trainable {
                    store.insert(n, zeroed);
                }
            }
        }
        let graphs: Vec<AttributedGraph> =
            (0..4).map(|i| chain(6 + i, molecule_vocab())).collect();
        let refs: Vec<&AttributedGraph> = graphs.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pairs = build_context_pairs(&refs, &cfg, &mut rng).unwrap();
        let mut tape = Tape::new();
        let mut sess = Session::new(&mut tape);
        let fwd =
            context_loss(main.as_ref(), ctx.as_ref(), &pairs, &mut sess, Mode::Eval, None)
                .unwrap();
        let loss = tape.value(fwd.loss).get(0, 0);
        assert!((loss - (2.0f64).ln()).abs() < 1e-9, "loss {loss}");
    }
}

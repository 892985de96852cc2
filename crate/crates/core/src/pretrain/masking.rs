//! Attribute masking: replace attributes with mask indicators and predict
//! the originals from structure.

use super::EncoderRef;
use crate::error::{Error, Result};
use crate::gnn::{encode_with, BnUpdate, GraphBatch};
use crate::graph::{AttributedGraph, Domain, PROTEIN_EDGE_SLOTS};
use crate::num::{Mode, ParamStore, Real, Session, Tensor, Var};
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskTarget {
    NodeAttrs,
    EdgeAttrs,
}

#[derive(Debug, Clone)]
pub struct MaskConfig {
    /// Fraction of elements to mask.
    pub rate: f64,
    pub target: MaskTarget,
    /// Node slot whose category is predicted (slot 0: atom number).
    pub predict_slot: usize,
}

impl MaskConfig {
    pub fn molecule_default() -> Self {
        MaskConfig { rate: 0.15, target: MaskTarget::NodeAttrs, predict_slot: 0 }
    }

    pub fn protein_default() -> Self {
        MaskConfig { rate: 0.15, target: MaskTarget::EdgeAttrs, predict_slot: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate < 1.0) {
            return Err(Error::invalid("mask rate must be in (0, 1)"));
        }
        Ok(())
    }

    pub fn mask_count(&self, elements: usize) -> usize {
        ((self.rate * elements as f64).round() as usize).max(1)
    }
}

/// A masked position with the original attribute vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedPosition {
    pub position: usize,
    pub true_attrs: Vec<u32>,
}

/// Mask `max(1, round(rate * count))` distinct positions. Masked nodes get
/// the mask category in every node slot; masked edges in every edge slot.
pub fn apply_mask(
    g: &AttributedGraph,
    cfg: &MaskConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(AttributedGraph, Vec<MaskedPosition>)> {
    cfg.validate()?;
    let count = match cfg.target {
        MaskTarget::NodeAttrs => g.num_nodes(),
        MaskTarget::EdgeAttrs => g.num_edges(),
    };
    if count == 0 {
        return Err(Error::invalid("graph has no maskable elements"));
    }
    let m = cfg.mask_count(count).min(count);
    let mut picked: Vec<usize> = sample(rng, count, m).into_iter().collect();
    picked.sort_unstable();

    let vocab = g.vocab().clone();
    let mut node_attrs: Vec<Vec<u32>> = (0..g.num_nodes())
        .map(|v| g.node_attrs(v).to_vec())
        .collect();
    let mut edges: Vec<(usize, usize, Vec<u32>)> = g
        .edges()
        .iter()
        .map(|e| (e.u, e.v, e.attrs.clone()))
        .collect();
    let mut targets = Vec::with_capacity(m);
    match cfg.target {
        MaskTarget::NodeAttrs => {
            for &p in &picked {
                targets.push(MaskedPosition { position: p, true_attrs: node_attrs[p].clone() });
                for (s, a) in node_attrs[p].iter_mut().enumerate() {
                    *a = vocab.node_mask(s);
                }
            }
        }
        MaskTarget::EdgeAttrs => {
            for &p in &picked {
                targets.push(MaskedPosition { position: p, true_attrs: edges[p].2.clone() });
                for (s, a) in edges[p].2.iter_mut().enumerate() {
                    *a = vocab.edge_mask(s);
                }
            }
        }
    }
    let mut masked = AttributedGraph::new(g.num_nodes(), node_attrs, edges, vocab)?;
    if let Some(c) = g.center() {
        masked = masked.with_center(c)?;
    }
    if let Some(l) = g.labels() {
        masked = masked.with_labels(l.to_vec())?;
    }
    if let Some(s) = g.species() {
        masked = masked.with_species(s);
    }
    Ok((masked, targets))
}

/// Linear prediction head for masked attributes.
pub fn mask_head_store<F: Real>(
    encoder_dim: usize,
    out_dim: usize,
    seed: u64,
) -> ParamStore<F> {
    super::linear_head_store(encoder_dim, out_dim, seed)
}

/// Output width of the mask head for a domain: atom-number categories for
/// molecules, one logit per relation bit for proteins.
pub fn mask_head_width(g_domain: Domain, cfg: &MaskConfig, vocab_slot: u32) -> usize {
    match (g_domain, cfg.target) {
        (_, MaskTarget::NodeAttrs) => vocab_slot as usize,
        (Domain::Protein, MaskTarget::EdgeAttrs) => PROTEIN_EDGE_SLOTS,
        (Domain::Molecule, MaskTarget::EdgeAttrs) => vocab_slot as usize,
    }
}

pub struct MaskingForward<F: Real> {
    pub loss: Var,
    pub logits: Var,
    /// Node targets: true class per row. Edge targets: bit matrix.
    pub node_targets: Vec<usize>,
    pub edge_bit_targets: Option<Tensor<F>>,
    pub bn_updates: Vec<BnUpdate<F>>,
}

/// Softmax cross entropy of a linear head on masked node embeddings, or
/// per-bit binary cross entropy on summed endpoint embeddings for masked
/// protein edges. Mean over targets.
pub fn masking_loss<F: Real>(
    encoder: EncoderRef<'_, F>,
    head: &ParamStore<F>,
    masked: &[(AttributedGraph, Vec<MaskedPosition>)],
    cfg: &MaskConfig,
    sess: &mut Session<'_, F>,
    mode: Mode,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<MaskingForward<F>> {
    if masked.iter().all(|(_, t)| t.is_empty()) {
        return Err(Error::invalid("no mask targets"));
    }
    let graphs: Vec<&AttributedGraph> = masked.iter().map(|(g, _)| g).collect();
    let batch = GraphBatch::new(&graphs)?;
    let out = encode_with(encoder.cfg, encoder.params, sess, &batch, mode, rng)?;
    let w = sess.param(head, "head.w")?;
    let b = sess.param(head, "head.b")?;

    match cfg.target {
        MaskTarget::NodeAttrs => {
            let mut rows = Vec::new();
            let mut classes = Vec::new();
            for (gi, (_, targets)) in masked.iter().enumerate() {
                for t in targets {
                    rows.push(batch.global_id(gi, t.position));
                    classes.push(t.true_attrs[cfg.predict_slot] as usize);
                }
            }
            let picked = sess.tape.gather_rows(out.node_h, rows)?;
            let z = sess.tape.matmul(picked, w)?;
            let logits = sess.tape.add_bias(z, b)?;
            let ce = sess.tape.cross_entropy_rows(logits, classes.clone())?;
            let loss = sess.tape.mean_all(ce)?;
            Ok(MaskingForward {
                loss,
                logits,
                node_targets: classes,
                edge_bit_targets: None,
                bn_updates: out.bn_updates,
            })
        }
        MaskTarget::EdgeAttrs => {
            let mut us = Vec::new();
            let mut vs = Vec::new();
            let mut bits = Vec::new();
            for (gi, (g, targets)) in masked.iter().enumerate() {
                for t in targets {
                    let e = &g.edges()[t.position];
                    us.push(batch.global_id(gi, e.u));
                    vs.push(batch.global_id(gi, e.v));
                    bits.push(
                        t.true_attrs
                            .iter()
                            .map(|&a| if a == 1 { F::one() } else { F::zero() })
                            .collect::<Vec<F>>(),
                    );
                }
            }
            let hu = sess.tape.gather_rows(out.node_h, us)?;
            let hv = sess.tape.gather_rows(out.node_h, vs)?;
            let he = sess.tape.add(hu, hv)?;
            let z = sess.tape.matmul(he, w)?;
            let logits = sess.tape.add_bias(z, b)?;
            let targets = Tensor::from_rows(bits)?;
            let bce = sess.tape.bce_with_logits(logits, targets.clone())?;
            let loss = sess.tape.mean_all(bce)?;
            Ok(MaskingForward {
                loss,
                logits,
                node_targets: Vec::new(),
                edge_bit_targets: Some(targets),
                bn_updates: out.bn_updates,
            })
        }
    }
}

/// Masked-attribute accuracy: argmax for node targets, per-bit thresholding
/// for edge targets.
pub fn masking_accuracy<F: Real>(fwd: &MaskingForward<F>, logits: &Tensor<F>) -> f64 {
    if let Some(bits) = &fwd.edge_bit_targets {
        let total = bits.numel();
        if total == 0 {
            return 0.0;
        }
        let correct = (0..bits.rows())
            .flat_map(|i| (0..bits.cols()).map(move |j| (i, j)))
            .filter(|&(i, j)| {
                (logits.get(i, j) > F::zero()) == (bits.get(i, j) > F::from_f64(0.5))
            })
            .count();
        correct as f64 / total as f64
    } else {
        let n = fwd.node_targets.len();
        if n == 0 {
            return 0.0;
        }
        let correct = (0..n)
            .filter(|&i| {
                let row = logits.row(i);
                let argmax = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(j, _)| j)
                    .unwrap_or(0);
                argmax == fwd.node_targets[i]
            })
            .count();
        correct as f64 / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::{molecule_vocab, parse_smiles, ATOM_MASK, CHI_MASK};
    use crate::gnn::Encoder;
    use rand::SeedableRng;

    fn chain_mol(n: usize) -> AttributedGraph {
        let edges = (0..n - 1).map(|i| (i, i + 1, vec![0, 0])).collect();
        AttributedGraph::new(n, vec![vec![5, 0]; n], edges, molecule_vocab()).unwrap()
    }

    #[test]
    fn mask_count_follows_rounding_rule() {
        let cfg = MaskConfig::molecule_default();
        assert_eq!(cfg.mask_count(20), 3); // round(3.0)
        assert_eq!(cfg.mask_count(3), 1); // floor forced to >= 1
        assert_eq!(cfg.mask_count(10), 2); // round(1.5) away from zero
        assert_eq!(cfg.mask_count(1), 1);
    }

    #[test]
    fn masked_nodes_get_mask_category_in_every_slot() {
        let g = chain_mol(20);
        let cfg = MaskConfig::molecule_default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (masked, targets) = apply_mask(&g, &cfg, &mut rng).unwrap();
        assert_eq!(targets.len(), 3);
        for t in &targets {
            assert_eq!(masked.node_attrs(t.position), &[ATOM_MASK, CHI_MASK]);
            assert_eq!(t.true_attrs, vec![5, 0]);
        }
        // unmasked nodes untouched
        let masked_set: Vec<usize> = targets.iter().map(|t| t.position).collect();
        for v in 0..20 {
            if !masked_set.contains(&v) {
                assert_eq!(masked.node_attrs(v), g.node_attrs(v));
            }
        }
    }

    #[test]
    fn same_seed_same_mask() {
        let g = parse_smiles("CC(=O)Oc1ccccc1C(=O)O").unwrap();
        let cfg = MaskConfig::molecule_default();
        let a = apply_mask(&g, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = apply_mask(&g, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn uniform_logits_loss_is_ln_c() {
        use crate::num::Tape;
        let cfg_enc = crate::gnn::EncoderConfig {
            arch: crate::gnn::Arch::Gin,
            layers: 2,
            dim: 4,
            mlp_hidden: 8,
            dropout: 0.0,
            readout: crate::gnn::Readout::Mean,
            domain: crate::graph::Domain::Molecule,
        };
        let encoder = Encoder::<f64>::init(cfg_enc, 1).unwrap();
        // zero head gives uniform logits -> loss = ln(num classes)
        let mut head = ParamStore::<f64>::new();
        head.insert("head.w", Tensor::zeros(4, 119));
        head.insert("head.b", Tensor::zeros(1, 119));
        let cfg = MaskConfig::molecule_default();
        let g = chain_mol(10);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let masked = vec![apply_mask(&g, &cfg, &mut rng).unwrap()];
        let mut tape = Tape::new();
        let mut sess = Session::new(&mut tape);
        let fwd =
            masking_loss(encoder.as_ref(), &head, &masked, &cfg, &mut sess, Mode::Eval, None)
                .unwrap();
        let loss = tape.value(fwd.loss).get(0, 0);
        assert!((loss - (119.0f64).ln()).abs() < 1e-9);
    }
}

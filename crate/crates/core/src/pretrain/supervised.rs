//! Graph-level multi-task supervised pre-training: linear classifiers on top
//! of graph representations, one binary task per output.

use super::EncoderRef;
use crate::error::{Error, Result};
use crate::gnn::{encode_with, BnUpdate, GraphBatch};
use crate::graph::AttributedGraph;
use crate::num::{Mode, ParamStore, Real, Session, Tensor, Var};
use rand_chacha::ChaCha8Rng;

/// Per-task linear map from the graph embedding to a logit.
#[derive(Debug, Clone)]
pub struct SupervisedHead {
    pub tasks: usize,
    pub input_dim: usize,
}

impl SupervisedHead {
    pub fn new(tasks: usize, input_dim: usize) -> Self {
        SupervisedHead { tasks, input_dim }
    }

    pub fn init_store<F: Real>(&self, seed: u64) -> ParamStore<F> {
        super::linear_head_store(self.input_dim, self.tasks, seed)
    }
}

pub struct SupervisedForward<F: Real> {
    pub loss: Var,
    /// Logits per (graph, task).
    pub logits: Var,
    /// 1 where the label is observed, 0 where missing.
    pub mask: Tensor<F>,
    /// 0/1 targets (missing entries hold 0 and are masked out).
    pub targets: Tensor<F>,
    pub observed: usize,
    pub bn_updates: Vec<BnUpdate<F>>,
}

/// Binary cross entropy with logits per task, summed over non-missing labels
/// only (label -1 contributes zero loss and zero gradient), divided by the
/// number of non-missing labels in the batch.
pub fn supervised_loss<F: Real>(
    encoder: EncoderRef<'_, F>,
    head: &ParamStore<F>,
    tasks: usize,
    graphs: &[&AttributedGraph],
    sess: &mut Session<'_, F>,
    mode: Mode,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<SupervisedForward<F>> {
    let mut mask = Tensor::zeros(graphs.len(), tasks);
    let mut targets = Tensor::zeros(graphs.len(), tasks);
    let mut observed = 0usize;
    for (i, g) in graphs.iter().enumerate() {
        let labels = g
            .labels()
            .ok_or_else(|| Error::invalid("supervised pre-training needs labeled graphs"))?;
        if labels.len() != tasks {
            return Err(Error::invalid(format!(
                "graph {i} has {} labels, head expects {tasks}",
                labels.len()
            )));
        }
        for (t, &l) in labels.iter().enumerate() {
            match l {
                -1 => {}
                0 | 1 => {
                    mask.set(i, t, F::one());
                    targets.set(i, t, F::from_f64(l as f64));
                    observed += 1;
                }
                other => return Err(Error::invalid(format!("label {other} outside {{-1,0,1}}"))),
            }
        }
    }
    if observed == 0 {
        return Err(Error::Config("batch has zero non-missing labels".into()));
    }
    let batch = GraphBatch::new(&graphs.to_vec())?;
    let out = encode_with(encoder.cfg, encoder.params, sess, &batch, mode, rng)?;
    let w = sess.param(head, "head.w")?;
    let b = sess.param(head, "head.b")?;
    let z = sess.tape.matmul(out.graph_h, w)?;
    let logits = sess.tape.add_bias(z, b)?;
    let bce = sess.tape.bce_with_logits(logits, targets.clone())?;
    let mask_var = sess.constant(mask.clone())?;
    let masked = sess.tape.mul(bce, mask_var)?;
    let total = sess.tape.sum_all(masked)?;
    let loss = sess.tape.scale(total, F::from_f64(1.0 / observed as f64))?;
    Ok(SupervisedForward { loss, logits, mask, targets, observed, bn_updates: out.bn_updates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::molecule_vocab;
    use crate::gnn::{Arch, Encoder, EncoderConfig, Readout};
    use crate::graph::Domain;
    use crate::num::{grad_check, GradCheckOptions, Session, Tape};

    fn tiny_encoder(seed: u64) -> Encoder<f64> {
        Encoder::init(
            EncoderConfig {
                arch: Arch::Gin,
                layers: 2,
                dim: 4,
                mlp_hidden: 8,
                dropout: 0.0,
                readout: Readout::Mean,
                domain: Domain::Molecule,
            },
            seed,
        )
        .unwrap()
    }

    fn labeled(n: usize, labels: Vec<i8>) -> AttributedGraph {
        let edges = (0..n - 1).map(|i| (i, i + 1, vec![0, 0])).collect();
        AttributedGraph::new(n, vec![vec![5, 0]; n], edges, molecule_vocab())
            .unwrap()
            .with_labels(labels)
            .unwrap()
    }

    #[test]
    fn zero_logits_half_labels_give_ln2() {
        let enc = tiny_encoder(1);
        let mut head = ParamStore::<f64>::new();
        head.insert("head.w", Tensor::zeros(4, 2));
        head.insert("head.b", Tensor::zeros(1, 2));
        let graphs = [labeled(4, vec![0, 1]), labeled(5, vec![1, 0])];
        let refs: Vec<&AttributedGraph> = graphs.iter().collect();
        let mut tape = Tape::new();
        let mut sess = Session::new(&mut tape);
        let fwd =
            supervised_loss(enc.as_ref(), &head, 2, &refs, &mut sess, Mode::Eval, None).unwrap();
        let loss = tape.value(fwd.loss).get(0, 0);
        assert!((loss - (2.0f64).ln()).abs() < 1e-9);
        assert_eq!(fwd.observed, 4);
    }

    #[test]
    fn missing_labels_get_zero_gradient() {
        let enc = tiny_encoder(2);
        let head_store = SupervisedHead::new(3, 4).init_store::<f64>(7);
        let graphs = [labeled(4, vec![1, -1, 0]), labeled(6, vec![-1, -1, 1])];
        let refs: Vec<&AttributedGraph> = graphs.iter().collect();
        let mut tape = Tape::new();
        let mut sess = Session::new(&mut tape);
        let fwd =
            supervised_loss(enc.as_ref(), &head_store, 3, &refs, &mut sess, Mode::Eval, None).unwrap();
        let grads = tape.backward(fwd.loss).unwrap();
        let glogits = grads.get(fwd.logits).unwrap();
        // entries with label -1 have exactly zero gradient
        assert_eq!(glogits.get(0, 1), 0.0);
        assert_eq!(glogits.get(1, 0), 0.0);
        assert_eq!(glogits.get(1, 1), 0.0);
        assert!(glogits.get(0, 0).abs() > 0.0);
    }

    #[test]
    fn all_missing_is_config_error() {
        let enc = tiny_encoder(3);
        let head_store = SupervisedHead::new(2, 4).init_store::<f64>(1);
        let graphs = [labeled(4, vec![-1, -1])];
        let refs: Vec<&AttributedGraph> = graphs.iter().collect();
        let mut tape = Tape::new();
        let mut sess = Session::new(&mut tape);
        match supervised_loss(enc.as_ref(), &head_store, 2, &refs, &mut sess, Mode::Eval, None) {
            Err(Error::Config(_)) => {}
            other => panic!("expected config error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn supervised_objective_passes_gradcheck() {
        let enc = tiny_encoder(4);
        let head_store = SupervisedHead::new(2, 4).init_store::<f64>(5);
        let graphs = [labeled(4, vec![1, 0]), labeled(5, vec![0, -1])];
        let cfg = enc.cfg.clone();
        let mut enc_params = enc.params.clone();
        let mut head_params = head_store.clone();
        let refs: Vec<&AttributedGraph> = graphs.iter().collect();
        let mut stores = [&mut enc_params, &mut head_params];
        let err = grad_check(
            &mut stores,
            |sess, views| {
                let e = EncoderRef { cfg: &cfg, params: views[0] };
                let fwd = supervised_loss(e, views[1], 2, &refs, sess, Mode::Train, None)?;
                Ok(fwd.loss)
            },
            GradCheckOptions { eps: 1e-5, ..Default::default() },
        )
        .unwrap();
        assert!(err < 1e-6, "gradcheck error {err}");
    }
}

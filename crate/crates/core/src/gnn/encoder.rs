//! Encoder architectures: input embeddings, GIN (molecule and protein
//! variants), GCN and GraphSAGE layers, and readouts.

use super::batch::GraphBatch;
use crate::chem::molecule_vocab;
use crate::error::{Error, Result};
use crate::graph::{protein_vocab, AttributedGraph, Domain, Vocab, PROTEIN_EDGE_SLOTS};
use crate::num::{Mode, ParamStore, Real, Session, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gin,
    Gcn,
    #[serde(rename = "graphsage")]
    GraphSage,
}

impl std::str::FromStr for Arch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gin" => Ok(Arch::Gin),
            "gcn" => Ok(Arch::Gcn),
            "sage" | "graphsage" => Ok(Arch::GraphSage),
            other => Err(Error::invalid(format!("unknown architecture '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Readout {
    Mean,
    MeanConcatCenter,
}

/// Encoder hyperparameters. `layers` is the message-passing depth K and
/// `dim` the embedding width d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub arch: Arch,
    pub layers: usize,
    pub dim: usize,
    pub mlp_hidden: usize,
    pub dropout: f64,
    pub readout: Readout,
    pub domain: Domain,
}

impl EncoderConfig {
    /// Paper defaults for molecules: 5-layer GIN, 300 wide, 600 MLP hidden,
    /// mean readout.
    pub fn molecule_default() -> Self {
        EncoderConfig {
            arch: Arch::Gin,
            layers: 5,
            dim: 300,
            mlp_hidden: 600,
            dropout: 0.0,
            readout: Readout::Mean,
            domain: Domain::Molecule,
        }
    }

    /// Protein ego-network defaults: concatenation GIN with center readout.
    pub fn protein_default() -> Self {
        EncoderConfig {
            arch: Arch::Gin,
            layers: 5,
            dim: 300,
            mlp_hidden: 600,
            dropout: 0.0,
            readout: Readout::MeanConcatCenter,
            domain: Domain::Protein,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 {
            return Err(Error::invalid("encoder needs at least one layer"));
        }
        if self.dim < 1 || self.mlp_hidden < 1 {
            return Err(Error::invalid("encoder width must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout rate must be in [0, 1)"));
        }
        Ok(())
    }

    pub fn vocab(&self) -> Vocab {
        match self.domain {
            Domain::Molecule => molecule_vocab(),
            Domain::Protein => protein_vocab(),
        }
    }

    /// Output width of the graph embedding.
    pub fn graph_dim(&self) -> usize {
        match self.readout {
            Readout::Mean => self.dim,
            Readout::MeanConcatCenter => 2 * self.dim,
        }
    }

    /// Deterministic parameter layout: (name, rows, cols, kind).
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut specs = Vec::new();
        let d = self.dim;
        let vocab = self.vocab();
        for (s, &count) in vocab.node_slots.iter().enumerate() {
            specs.push(ParamSpec::new(format!("node_emb.{s}"), count as usize, d, Init::Table));
        }
        if self.domain == Domain::Protein {
            specs.push(ParamSpec::new("edge_lin.w", PROTEIN_EDGE_SLOTS + 2, d, Init::Linear));
            specs.push(ParamSpec::new("edge_lin.b", 1, d, Init::Zero));
        }
        for k in 0..self.layers {
            if self.domain == Domain::Molecule {
                for (s, &count) in vocab.edge_slots.iter().enumerate() {
                    specs.push(ParamSpec::new(
                        format!("layer{k}.edge_emb.{s}"),
                        count as usize,
                        d,
                        Init::Table,
                    ));
                }
            }
            match self.arch {
                Arch::Gin => {
                    let din = match self.domain {
                        Domain::Molecule => d,
                        Domain::Protein => 2 * d,
                    };
                    let h = self.mlp_hidden;
                    specs.push(ParamSpec::new(format!("layer{k}.mlp.w1"), din, h, Init::Linear));
                    specs.push(ParamSpec::new(format!("layer{k}.mlp.b1"), 1, h, Init::Zero));
                    specs.push(ParamSpec::new(format!("layer{k}.mlp.w2"), h, d, Init::Linear));
                    specs.push(ParamSpec::new(format!("layer{k}.mlp.b2"), 1, d, Init::Zero));
                    specs.push(ParamSpec::new(format!("layer{k}.bn.gamma"), 1, d, Init::One));
                    specs.push(ParamSpec::new(format!("layer{k}.bn.beta"), 1, d, Init::Zero));
                    specs.push(ParamSpec::frozen(format!("layer{k}.bn.rmean"), 1, d, Init::Zero));
                    specs.push(ParamSpec::frozen(format!("layer{k}.bn.rvar"), 1, d, Init::One));
                }
                Arch::Gcn => {
                    specs.push(ParamSpec::new(format!("layer{k}.lin.w"), d, d, Init::Linear));
                    specs.push(ParamSpec::new(format!("layer{k}.lin.b"), 1, d, Init::Zero));
                }
                Arch::GraphSage => {
                    specs.push(ParamSpec::new(format!("layer{k}.lin.w"), 2 * d, d, Init::Linear));
                    specs.push(ParamSpec::new(format!("layer{k}.lin.b"), 1, d, Init::Zero));
                }
            }
        }
        specs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Embedding table: N(0, 0.02^2).
    Table,
    /// Linear map: uniform +/- sqrt(6 / (fan_in + fan_out)).
    Linear,
    Zero,
    One,
}

#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
    pub trainable: bool,
}

impl ParamSpec {
    fn new(name: impl Into<String>, rows: usize, cols: usize, init: Init) -> Self {
        ParamSpec { name: name.into(), rows, cols, init, trainable: true }
    }
    fn frozen(name: impl Into<String>, rows: usize, cols: usize, init: Init) -> Self {
        ParamSpec { name: name.into(), rows, cols, init, trainable: false }
    }
}

/// A configured GNN: architecture plus its parameter store (including frozen
/// batchnorm running statistics).
#[derive(Debug, Clone)]
pub struct Encoder<F: Real> {
    pub cfg: EncoderConfig,
    pub params: ParamStore<F>,
}

impl<F: Real> Encoder<F> {
    pub fn init(cfg: EncoderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f64, 0.02).expect("valid stddev");
        let mut params = ParamStore::new();
        for spec in cfg.param_specs() {
            let data: Vec<F> = match spec.init {
                Init::Table => (0..spec.rows * spec.cols)
                    .map(|_| F::from_f64(normal.sample(&mut rng)))
                    .collect(),
                Init::Linear => {
                    let bound = (6.0 / (spec.rows + spec.cols) as f64).sqrt();
                    let uni = Uniform::new_inclusive(-bound, bound)
                        .map_err(|e| Error::invalid(e.to_string()))?;
                    (0..spec.rows * spec.cols)
                        .map(|_| F::from_f64(uni.sample(&mut rng)))
                        .collect()
                }
                Init::Zero => vec![F::zero(); spec.rows * spec.cols],
                Init::One => vec![F::one(); spec.rows * spec.cols],
            };
            let tensor = Tensor::from_vec(spec.rows, spec.cols, data)?;
            if spec.trainable {
                params.insert(spec.name, tensor);
            } else {
                params.insert_frozen(spec.name, tensor);
            }
        }
        Ok(Encoder { cfg, params })
    }

    pub fn encode(
        &self,
        sess: &mut Session<'_, F>,
        batch: &GraphBatch,
        mode: Mode,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<EncodeOut<F>> {
        encode_with(&self.cfg, &self.params, sess, batch, mode, rng)
    }

    /// Fold batch statistics from a training forward pass into the frozen
    /// running statistics.
    pub fn apply_bn_updates(&mut self, updates: &[BnUpdate<F>]) -> Result<()> {
        let mom = F::from_f64(BN_MOMENTUM);
        for u in updates {
            for (suffix, batch_stat) in [("rmean", &u.mean), ("rvar", &u.var)] {
                let name = format!("layer{}.bn.{suffix}", u.layer);
                let old = self
                    .params
                    .get(&name)
                    .ok_or_else(|| Error::invalid(format!("missing {name}")))?;
                let mut new = old.clone();
                for (n, &b) in new.data_mut().iter_mut().zip(batch_stat.data()) {
                    *n = (F::one() - mom) * *n + mom * b;
                }
                self.params.set_frozen(&name, new)?;
            }
        }
        Ok(())
    }

    /// Eval-mode graph embeddings as plain values (fresh tape, no dropout,
    /// running batchnorm statistics).
    pub fn embed_graphs(&self, graphs: &[&AttributedGraph]) -> Result<Tensor<F>> {
        let batch = GraphBatch::new(graphs)?;
        let mut tape = Tape::new();
        let mut sess = Session::new(&mut tape);
        let out = self.encode(&mut sess, &batch, Mode::Eval, None)?;
        Ok(tape.value(out.graph_h).clone())
    }
}

/// One layer's batch statistics from a training pass.
#[derive(Debug, Clone)]
pub struct BnUpdate<F: Real> {
    pub layer: usize,
    pub mean: Tensor<F>,
    pub var: Tensor<F>,
}

pub struct EncodeOut<F: Real> {
    /// Final node embeddings h^(K), one row per global node.
    pub node_h: Var,
    /// Graph embeddings, one row per graph.
    pub graph_h: Var,
    /// Batch statistics to fold into running stats after an optimizer step.
    pub bn_updates: Vec<BnUpdate<F>>,
}

/// Initial node features and per-layer edge features.
///
/// Molecule domain: per-slot embedding table rows summed, per layer for
/// edges. Protein domain: a shared linear map of the binary edge vector.
pub fn embed_inputs<F: Real>(
    cfg: &EncoderConfig,
    params: &ParamStore<F>,
    sess: &mut Session<'_, F>,
    batch: &GraphBatch,
) -> Result<(Var, Vec<Var>)> {
    if batch.vocab != cfg.vocab() {
        return Err(Error::invalid("batch vocabulary does not match encoder domain"));
    }
    let mut h0: Option<Var> = None;
    for (s, col) in batch.node_attr_slots.iter().enumerate() {
        let table = sess.param(params, &format!("node_emb.{s}"))?;
        let rows = sess.tape.gather_rows(table, col.clone())?;
        h0 = Some(match h0 {
            None => rows,
            Some(acc) => sess.tape.add(acc, rows)?,
        });
    }
    let h0 = h0.ok_or_else(|| Error::invalid("no node attribute slots"))?;

    let efeats = match cfg.domain {
        Domain::Molecule => {
            let mut per_layer = Vec::with_capacity(cfg.layers);
            for k in 0..cfg.layers {
                let mut e: Option<Var> = None;
                for (s, col) in batch.msg_edge_slots.iter().enumerate() {
                    let table = sess.param(params, &format!("layer{k}.edge_emb.{s}"))?;
                    let rows = sess.tape.gather_rows(table, col.clone())?;
                    e = Some(match e {
                        None => rows,
                        Some(acc) => sess.tape.add(acc, rows)?,
                    });
                }
                per_layer.push(e.expect("molecule vocab has edge slots"));
            }
            per_layer
        }
        Domain::Protein => {
            let bits = sess.constant(batch.protein_edge_inputs()?)?;
            let w = sess.param(params, "edge_lin.w")?;
            let b = sess.param(params, "edge_lin.b")?;
            let mapped = sess.tape.matmul(bits, w)?;
            let e = sess.tape.add_bias(mapped, b)?;
            vec![e; cfg.layers]
        }
    };
    Ok((h0, efeats))
}

/// Full forward pass: embeddings, K message-passing layers, readout.
pub fn encode_with<F: Real>(
    cfg: &EncoderConfig,
    params: &ParamStore<F>,
    sess: &mut Session<'_, F>,
    batch: &GraphBatch,
    mode: Mode,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<EncodeOut<F>> {
    cfg.validate()?;
    let (mut h, efeats) = embed_inputs(cfg, params, sess, batch)?;
    let mut bn_updates = Vec::new();
    for k in 0..cfg.layers {
        let is_last = k + 1 == cfg.layers;
        let z = match cfg.arch {
            Arch::Gin => {
                gin_layer(cfg, params, sess, batch, h, efeats[k], k, mode, &mut bn_updates)?
            }
            Arch::Gcn => gcn_layer(params, sess, batch, h, efeats[k], k)?,
            Arch::GraphSage => sage_layer(params, sess, batch, h, efeats[k], k)?,
        };
        // the final layer keeps its sign: no ReLU there, so dot-product
        // objectives can go negative
        let mut z = if is_last { z } else { sess.tape.relu(z)? };
        if cfg.arch == Arch::GraphSage {
            z = sess.tape.l2_normalize_rows(z)?;
        }
        h = match (&mut rng, mode) {
            (Some(r), Mode::Train) if cfg.dropout > 0.0 => {
                sess.tape.dropout(z, cfg.dropout, mode, r)?
            }
            _ => z,
        };
    }
    let graph_h = readout(cfg, sess, batch, h)?;
    Ok(EncodeOut { node_h: h, graph_h, bn_updates })
}

/// GIN aggregation: sum of neighbor (and self) node features plus incident
/// edge features, through a 2-layer MLP with batchnorm before the outer ReLU.
/// The protein variant concatenates the two sums instead of adding them.
#[allow(clippy::too_many_arguments)]
fn gin_layer<F: Real>(
    cfg: &EncoderConfig,
    params: &ParamStore<F>,
    sess: &mut Session<'_, F>,
    batch: &GraphBatch,
    h: Var,
    efeat: Var,
    k: usize,
    mode: Mode,
    bn_updates: &mut Vec<BnUpdate<F>>,
) -> Result<Var> {
    let n = batch.num_nodes;
    let gathered = sess.tape.gather_rows(h, batch.msg_src.clone())?;
    let nbr_sum = sess.tape.segment_sum(gathered, batch.msg_dst.clone(), n)?;
    let edge_sum = sess.tape.segment_sum(efeat, batch.msg_dst.clone(), n)?;
    let agg = match cfg.domain {
        Domain::Molecule => sess.tape.add(nbr_sum, edge_sum)?,
        Domain::Protein => sess.tape.concat1(nbr_sum, edge_sum)?,
    };
    let w1 = sess.param(params, &format!("layer{k}.mlp.w1"))?;
    let b1 = sess.param(params, &format!("layer{k}.mlp.b1"))?;
    let w2 = sess.param(params, &format!("layer{k}.mlp.w2"))?;
    let b2 = sess.param(params, &format!("layer{k}.mlp.b2"))?;
    let z = sess.tape.matmul(agg, w1)?;
    let z = sess.tape.add_bias(z, b1)?;
    let z = sess.tape.relu(z)?;
    let z = sess.tape.matmul(z, w2)?;
    let z = sess.tape.add_bias(z, b2)?;
    let gamma = sess.param(params, &format!("layer{k}.bn.gamma"))?;
    let beta = sess.param(params, &format!("layer{k}.bn.beta"))?;
    let rmean = params
        .get(&format!("layer{k}.bn.rmean"))
        .ok_or_else(|| Error::invalid("missing bn running mean"))?
        .clone();
    let rvar = params
        .get(&format!("layer{k}.bn.rvar"))
        .ok_or_else(|| Error::invalid("missing bn running var"))?
        .clone();
    let (z, stats) =
        sess.tape
            .batchnorm(z, gamma, beta, (&rmean, &rvar), mode, F::from_f64(BN_EPS))?;
    if let Some((mean, var)) = stats {
        bn_updates.push(BnUpdate { layer: k, mean, var });
    }
    Ok(z)
}

/// GCN: symmetric-degree-normalized sum of (h_u + e_uv) over N(v) and the
/// self-loop, then a linear map.
fn gcn_layer<F: Real>(
    params: &ParamStore<F>,
    sess: &mut Session<'_, F>,
    batch: &GraphBatch,
    h: Var,
    efeat: Var,
    k: usize,
) -> Result<Var> {
    let n = batch.num_nodes;
    let gathered = sess.tape.gather_rows(h, batch.msg_src.clone())?;
    let msgs = sess.tape.add(gathered, efeat)?;
    let coeff: Vec<F> = batch
        .msg_src
        .iter()
        .zip(&batch.msg_dst)
        .map(|(&s, &d)| {
            F::from_f64(1.0 / ((batch.degrees[s] * batch.degrees[d]) as f64).sqrt())
        })
        .collect();
    let scaled = sess.tape.scale_rows(msgs, coeff)?;
    let agg = sess.tape.segment_sum(scaled, batch.msg_dst.clone(), n)?;
    let w = sess.param(params, &format!("layer{k}.lin.w"))?;
    let b = sess.param(params, &format!("layer{k}.lin.b"))?;
    let z = sess.tape.matmul(agg, w)?;
    sess.tape.add_bias(z, b)
}

/// GraphSAGE with mean aggregation: mean of (h_u + e_uv) over true neighbors
/// (no self-loop), concatenated with h_v, then a linear map. The caller
/// appends L2 row normalization after the activation.
fn sage_layer<F: Real>(
    params: &ParamStore<F>,
    sess: &mut Session<'_, F>,
    batch: &GraphBatch,
    h: Var,
    efeat: Var,
    k: usize,
) -> Result<Var> {
    let n = batch.num_nodes;
    let real = batch.real_msg_count;
    let src: Vec<usize> = batch.msg_src[..real].to_vec();
    let dst: Vec<usize> = batch.msg_dst[..real].to_vec();
    let gathered = sess.tape.gather_rows(h, src)?;
    let efeat_real = sess.tape.gather_rows(efeat, (0..real).collect())?;
    let msgs = sess.tape.add(gathered, efeat_real)?;
    let mean = sess.tape.segment_mean(msgs, dst, n)?;
    let cat = sess.tape.concat1(h, mean)?;
    let w = sess.param(params, &format!("layer{k}.lin.w"))?;
    let b = sess.param(params, &format!("layer{k}.lin.b"))?;
    let z = sess.tape.matmul(cat, w)?;
    sess.tape.add_bias(z, b)
}

/// Permutation-invariant readout: per-graph mean of final node embeddings,
/// optionally concatenated with the center node's row (protein ego-networks).
pub fn readout<F: Real>(
    cfg: &EncoderConfig,
    sess: &mut Session<'_, F>,
    batch: &GraphBatch,
    node_h: Var,
) -> Result<Var> {
    let mean = sess
        .tape
        .segment_mean(node_h, batch.node_graph.clone(), batch.num_graphs)?;
    match cfg.readout {
        Readout::Mean => Ok(mean),
        Readout::MeanConcatCenter => {
            let centers = batch
                .centers
                .clone()
                .ok_or_else(|| Error::invalid("readout requires center-annotated graphs"))?;
            let center_rows = sess.tape.gather_rows(node_h, centers)?;
            sess.tape.concat1(mean, center_rows)
        }
    }
}

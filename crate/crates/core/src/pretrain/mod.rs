//! Pre-training objectives: context prediction, attribute masking, edge
//! prediction, and graph-level supervised multi-task learning. Each produces
//! a differentiable loss over an encoder.

mod context;
mod edgepred;
mod masking;
mod supervised;

pub use context::{
    build_context_pairs, context_loss, pair_accuracy, ContextConfig, ContextForward,
    ContextPairs,
};
pub use edgepred::{edgepred_loss, EdgePredForward};
pub use masking::{
    apply_mask, mask_head_store, mask_head_width, masking_accuracy, masking_loss, MaskConfig,
    MaskTarget, MaskedPosition, MaskingForward,
};
pub use supervised::{supervised_loss, SupervisedForward, SupervisedHead};

use crate::gnn::{Encoder, EncoderConfig};
use crate::num::{ParamStore, Real, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

/// Borrowed view of an encoder: configuration plus the parameter store to
/// read from. Objectives take this so gradient checking can substitute
/// perturbed stores without rebuilding encoders.
#[derive(Clone, Copy)]
pub struct EncoderRef<'a, F: Real> {
    pub cfg: &'a EncoderConfig,
    pub params: &'a ParamStore<F>,
}

impl<F: Real> Encoder<F> {
    pub fn as_ref(&self) -> EncoderRef<'_, F> {
        EncoderRef { cfg: &self.cfg, params: &self.params }
    }
}

/// One of the four pre-training objectives with its configuration.
#[derive(Debug, Clone)]
pub enum PretrainTask {
    Context(ContextConfig),
    Masking(MaskConfig),
    EdgePred,
    Supervised { tasks: usize },
}

impl PretrainTask {
    pub fn id(&self) -> &'static str {
        match self {
            PretrainTask::Context(_) => "context",
            PretrainTask::Masking(_) => "mask",
            PretrainTask::EdgePred => "edgepred",
            PretrainTask::Supervised { .. } => "supervised",
        }
    }
}

/// Fresh linear head: Xavier-uniform weight, zero bias, under the names
/// `head.w` / `head.b`.
pub fn linear_head_store<F: Real>(input: usize, output: usize, seed: u64) -> ParamStore<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = (6.0 / (input + output) as f64).sqrt();
    let uni = Uniform::new_inclusive(-bound, bound).expect("valid bounds");
    let data: Vec<F> = (0..input * output)
        .map(|_| F::from_f64(uni.sample(&mut rng)))
        .collect();
    let mut store = ParamStore::new();
    store.insert("head.w", Tensor::from_vec(input, output, data).expect("shape"));
    store.insert("head.b", Tensor::zeros(1, output));
    store
}

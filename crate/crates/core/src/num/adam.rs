//! Named trainable parameters with per-parameter Adam state.

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

static NEXT_STORE_UID: AtomicU64 = AtomicU64::new(1);

/// Adam hyperparameters; defaults follow the optimizer's standard values
/// with the learning rate used throughout this project.
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { lr: 0.001, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        AdamParams { lr, ..Default::default() }
    }
}

#[derive(Debug, Clone)]
pub struct Param<F: Real> {
    pub value: Tensor<F>,
    pub trainable: bool,
    m: Tensor<F>,
    v: Tensor<F>,
    pub step: u64,
}

/// Named map of trainable tensors plus per-parameter Adam state. Frozen
/// entries (batchnorm running statistics) live here too so checkpoints carry
/// them, but the optimizer never touches them.
#[derive(Debug)]
pub struct ParamStore<F: Real> {
    uid: u64,
    entries: BTreeMap<String, Param<F>>,
}

impl<F: Real> Clone for ParamStore<F> {
    fn clone(&self) -> Self {
        // a clone is a distinct store identity for session memoization
        ParamStore {
            uid: NEXT_STORE_UID.fetch_add(1, Ordering::Relaxed),
            entries: self.entries.clone(),
        }
    }
}

impl<F: Real> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            uid: NEXT_STORE_UID.fetch_add(1, Ordering::Relaxed),
            entries: BTreeMap::new(),
        }
    }

    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<F>) {
        let (r, c) = value.shape();
        self.entries.insert(
            name.into(),
            Param { value, trainable: true, m: Tensor::zeros(r, c), v: Tensor::zeros(r, c), step: 0 },
        );
    }

    /// Insert a non-trainable entry (running statistics, constants).
    pub fn insert_frozen(&mut self, name: impl Into<String>, value: Tensor<F>) {
        let (r, c) = value.shape();
        self.entries.insert(
            name.into(),
            Param { value, trainable: false, m: Tensor::zeros(r, c), v: Tensor::zeros(r, c), step: 0 },
        );
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.entries.get(name).map(|p| &p.value)
    }

    pub fn get_param(&self, name: &str) -> Option<&Param<F>> {
        self.entries.get(name)
    }

    /// Overwrite a frozen entry's value (shape-checked).
    pub fn set_frozen(&mut self, name: &str, value: Tensor<F>) -> Result<()> {
        let p = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter '{name}'")))?;
        if p.trainable {
            return Err(Error::invalid(format!("'{name}' is trainable, not frozen state")));
        }
        if p.value.shape() != value.shape() {
            return Err(Error::invalid(format!(
                "shape mismatch writing '{name}': {:?} vs {:?}",
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    /// Names in deterministic (sorted) order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<F>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.entries.values().map(|p| p.value.numel()).sum()
    }

    /// Standard bias-corrected Adam update for one named parameter.
    pub fn adam_step(&mut self, name: &str, grad: &Tensor<F>, hp: AdamParams) -> Result<()> {
        let p = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter '{name}'")))?;
        if !p.trainable {
            return Err(Error::invalid(format!("parameter '{name}' is frozen")));
        }
        if p.value.shape() != grad.shape() {
            return Err(Error::invalid(format!(
                "gradient shape {:?} != parameter shape {:?} for '{name}'",
                grad.shape(),
                p.value.shape()
            )));
        }
        if !grad.is_finite() {
            return Err(Error::Divergence(format!("non-finite gradient for '{name}'")));
        }
        p.step += 1;
        let t = p.step as i32;
        let b1 = F::from_f64(hp.beta1);
        let b2 = F::from_f64(hp.beta2);
        let lr = F::from_f64(hp.lr);
        let eps = F::from_f64(hp.eps);
        let bc1 = F::one() - b1.powi(t);
        let bc2 = F::one() - b2.powi(t);
        for i in 0..p.value.numel() {
            let g = grad.data()[i];
            let m = b1 * p.m.data()[i] + (F::one() - b1) * g;
            let v = b2 * p.v.data()[i] + (F::one() - b2) * g * g;
            p.m.data_mut()[i] = m;
            p.v.data_mut()[i] = v;
            let mhat = m / bc1;
            let vhat = v / bc2;
            p.value.data_mut()[i] = p.value.data()[i] - lr * mhat / (vhat.sqrt() + eps);
        }
        Ok(())
    }

    /// Convert every entry to another precision. Adam state is reset.
    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        let mut out = ParamStore::new();
        for (name, p) in &self.entries {
            if p.trainable {
                out.insert(name.clone(), p.value.cast());
            } else {
                out.insert_frozen(name.clone(), p.value.cast());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::from_vec(1, 2, vec![0.3, -0.7]).unwrap());
        store.adam_step("w", &Tensor::zeros(1, 2), AdamParams::default()).unwrap();
        assert_eq!(store.get("w").unwrap().data(), &[0.3, -0.7]);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // p=0, g=1, lr=0.001: bias-corrected first step is lr/(1+eps') ~ lr
        let mut store = ParamStore::<f64>::new();
        store.insert("p", Tensor::scalar(0.0));
        store.adam_step("p", &Tensor::scalar(1.0), AdamParams::default()).unwrap();
        let p = store.get("p").unwrap().get(0, 0);
        assert!((p - (-0.001)).abs() < 1e-9, "p = {p}");
    }

    #[test]
    fn two_steps_decrease_a_convex_quadratic() {
        // loss = 0.5 * p^2, grad = p
        let mut store = ParamStore::<f64>::new();
        store.insert("p", Tensor::scalar(1.0));
        let loss = |p: f64| 0.5 * p * p;
        let p0 = store.get("p").unwrap().get(0, 0);
        for _ in 0..2 {
            let p = store.get("p").unwrap().get(0, 0);
            store.adam_step("p", &Tensor::scalar(p), AdamParams::default()).unwrap();
        }
        let p2 = store.get("p").unwrap().get(0, 0);
        assert!(loss(p2) < loss(p0));
    }

    #[test]
    fn step_count_is_monotone_and_shape_checked() {
        let mut store = ParamStore::<f32>::new();
        store.insert("w", Tensor::zeros(2, 2));
        store.adam_step("w", &Tensor::zeros(2, 2), AdamParams::default()).unwrap();
        store.adam_step("w", &Tensor::zeros(2, 2), AdamParams::default()).unwrap();
        assert_eq!(store.get_param("w").unwrap().step, 2);
        assert!(store.adam_step("w", &Tensor::zeros(1, 2), AdamParams::default()).is_err());
    }
}

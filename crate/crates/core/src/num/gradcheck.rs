//! Finite-difference verification of tape gradients.

use super::adam::ParamStore;
use super::tape::{Session, Tape, Var};
use super::tensor::Real;
use crate::error::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub eps: f64,
    /// Parameters larger than this get a sampled coordinate subset.
    pub sample_threshold: usize,
    /// Fraction of coordinates checked for large parameters.
    pub sample_fraction: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { eps: 1e-4, sample_threshold: 400, sample_fraction: 0.05, seed: 0 }
    }
}

/// Compare tape gradients against central finite differences, coordinate by
/// coordinate (a random 5% sample for large parameters), and return the worst
/// relative error `|a - n| / max(1, |a|, |n|)`.
///
/// The loss closure must be deterministic: it is re-evaluated many times with
/// perturbed parameter values. Run with `F = f64` for meaningful bounds.
pub fn grad_check<F: Real>(
    stores: &mut [&mut ParamStore<F>],
    loss_fn: impl Fn(&mut Session<F>, &[&ParamStore<F>]) -> Result<Var>,
    opts: GradCheckOptions,
) -> Result<f64> {
    // analytic gradients
    let analytic: HashMap<(u64, String), Vec<f64>> = {
        let views: Vec<&ParamStore<F>> = stores.iter().map(|s| &**s).collect();
        let mut tape = Tape::new();
        let mut sess = Session::new(&mut tape);
        let loss = loss_fn(&mut sess, &views)?;
        let registered = sess.registered().to_vec();
        let grads = tape.backward(loss)?;
        registered
            .into_iter()
            .map(|(uid, name, var)| {
                let g = grads
                    .get(var)
                    .map(|t| t.data().iter().map(|x| x.as_f64()).collect())
                    .unwrap_or_default();
                ((uid, name), g)
            })
            .collect()
    };

    let eval = |stores: &[&mut ParamStore<F>]| -> Result<f64> {
        let views: Vec<&ParamStore<F>> = stores.iter().map(|s| &**s).collect();
        let mut tape = Tape::new();
        let mut sess = Session::new(&mut tape);
        let loss = loss_fn(&mut sess, &views)?;
        Ok(tape.value(loss).get(0, 0).as_f64())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst = 0.0f64;
    let eps = F::from_f64(opts.eps);

    for si in 0..stores.len() {
        let uid = stores[si].uid();
        let names: Vec<String> = stores[si]
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(n, _)| n.to_string())
            .collect();
        for name in names {
            let numel = stores[si].get(&name).map_or(0, |t| t.numel());
            let coords: Vec<usize> = if numel > opts.sample_threshold {
                let want = ((numel as f64 * opts.sample_fraction).ceil() as usize).max(10);
                let mut picked: Vec<usize> =
                    (0..want).map(|_| rng.random_range(0..numel)).collect();
                picked.sort_unstable();
                picked.dedup();
                picked
            } else {
                (0..numel).collect()
            };
            let key = (uid, name.clone());
            let grad = analytic.get(&key);
            for c in coords {
                let orig = {
                    let p = stores[si].get(&name).expect("param exists");
                    p.data()[c]
                };
                set_coord(stores[si], &name, c, orig + eps);
                let plus = eval(stores)?;
                set_coord(stores[si], &name, c, orig - eps);
                let minus = eval(stores)?;
                set_coord(stores[si], &name, c, orig);
                let numeric = (plus - minus) / (2.0 * opts.eps);
                let a = grad.and_then(|g| g.get(c).copied()).unwrap_or(0.0);
                let rel = (a - numeric).abs() / 1.0f64.max(a.abs()).max(numeric.abs());
                if rel > worst {
                    worst = rel;
                }
            }
        }
    }
    Ok(worst)
}

fn set_coord<F: Real>(store: &mut ParamStore<F>, name: &str, coord: usize, value: F) {
    // direct in-place poke for probing; bypasses the frozen check on purpose
    let t = store.get(name).expect("param exists").clone();
    let mut t2 = t;
    t2.data_mut()[coord] = value;
    store.insert(name, t2);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::tensor::Tensor;

    #[test]
    fn quadratic_loss_checks_to_machine_precision() {
        // loss = 0.5 * ||x||^2
        let mut store = ParamStore::<f64>::new();
        store.insert("x", Tensor::from_vec(1, 4, vec![0.3, -1.2, 2.0, 0.05]).unwrap());
        let mut stores = [&mut store];
        let err = grad_check(
            &mut stores,
            |sess, views| {
                let x = sess.param(views[0], "x")?;
                let sq = sess.tape.mul(x, x)?;
                let s = sess.tape.sum_all(sq)?;
                sess.tape.scale(s, 0.5)
            },
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(err < 1e-8, "relative error {err}");
    }

    #[test]
    fn composite_ops_pass_gradcheck() {
        // exercise matmul, bias, relu, sigmoid, segment ops, concat, l2norm, ce
        // irregular values keep pre-activations away from the relu kink,
        // where finite differences are meaningless
        let mut store = ParamStore::<f64>::new();
        store.insert(
            "w",
            Tensor::from_vec(3, 4, (0..12).map(|i| 0.137 * (i as f64) - 0.531).collect()).unwrap(),
        );
        store.insert("b", Tensor::from_vec(1, 4, vec![0.11, -0.23, 0.31, 0.077]).unwrap());
        store.insert(
            "x",
            Tensor::from_vec(5, 3, (0..15).map(|i| ((i * 7 % 5) as f64) * 0.313 - 0.617).collect())
                .unwrap(),
        );
        let mut stores = [&mut store];
        let err = grad_check(
            &mut stores,
            |sess, views| {
                let x = sess.param(views[0], "x")?;
                let w = sess.param(views[0], "w")?;
                let b = sess.param(views[0], "b")?;
                let h = sess.tape.matmul(x, w)?;
                let h = sess.tape.add_bias(h, b)?;
                let r = sess.tape.relu(h)?;
                let s = sess.tape.sigmoid(h)?;
                let c = sess.tape.concat1(r, s)?;
                let seg = sess.tape.segment_mean(c, vec![0, 1, 0, 1, 0], 2)?;
                let nrm = sess.tape.l2_normalize_rows(seg)?;
                let gathered = sess.tape.gather_rows(nrm, vec![0, 1, 1])?;
                let ssum = sess.tape.segment_sum(gathered, vec![0, 0, 1], 2)?;
                let ce = sess.tape.cross_entropy_rows(ssum, vec![2, 5])?;
                sess.tape.mean_all(ce)
            },
            GradCheckOptions { eps: 1e-5, ..Default::default() },
        )
        .unwrap();
        assert!(err < 1e-7, "relative error {err}");
    }

    #[test]
    fn batchnorm_train_mode_passes_gradcheck() {
        let mut store = ParamStore::<f64>::new();
        store.insert(
            "x",
            Tensor::from_vec(6, 3, (0..18).map(|i| (i as f64) * 0.17 - 1.5).collect()).unwrap(),
        );
        store.insert("gamma", Tensor::from_vec(1, 3, vec![1.2, 0.8, -0.5]).unwrap());
        store.insert("beta", Tensor::from_vec(1, 3, vec![0.0, 0.3, -0.2]).unwrap());
        let rmean = Tensor::zeros(1, 3);
        let rvar = Tensor::full(1, 3, 1.0);
        let mut stores = [&mut store];
        let err = grad_check(
            &mut stores,
            |sess, views| {
                let x = sess.param(views[0], "x")?;
                let gamma = sess.param(views[0], "gamma")?;
                let beta = sess.param(views[0], "beta")?;
                let (y, _) = sess.tape.batchnorm(
                    x,
                    gamma,
                    beta,
                    (&rmean, &rvar),
                    crate::num::Mode::Train,
                    1e-5,
                )?;
                let sq = sess.tape.mul(y, y)?;
                sess.tape.mean_all(sq)
            },
            GradCheckOptions { eps: 1e-5, ..Default::default() },
        )
        .unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }
}

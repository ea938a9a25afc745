use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{row_loss, LossSettings, RowInput};
use super::network::DualNetwork;
use crate::config::OptimConfig;
use crate::divergence::Divergence;

/// Validation losses per epoch (entry 0 is the initial network).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    /// Running minimum of the validation loss, the quantity early stopping tracks.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.val_loss
            .iter()
            .map(|&v| {
                best = best.min(v);
                best
            })
            .collect()
    }

    pub fn best_loss(&self) -> f64 {
        self.val_loss.get(self.best_epoch).copied().unwrap_or(f64::NAN)
    }
}

/// Rows in standardised units with covariates stored row-major.
pub(crate) struct TrainSet {
    pub d: usize,
    pub x: Vec<f64>,
    pub a: Vec<u8>,
    pub phi: Vec<f64>,
    pub e: Vec<[f64; 2]>,
    pub eta: Vec<[f64; 2]>,
    pub eta_prime: Vec<[f64; 2]>,
}

impl TrainSet {
    pub fn row(&self, i: usize) -> RowInput<'_> {
        RowInput {
            x: &self.x[i * self.d..(i + 1) * self.d],
            a: self.a[i],
            phi: self.phi[i],
            e: self.e[i],
            eta: self.eta[i],
            eta_prime: self.eta_prime[i],
        }
    }
}

fn mean_loss(net: &DualNetwork, div: Divergence, set: &TrainSet, idx: &[usize], debias: bool) -> f64 {
    let mut caches = [net.new_cache(), net.new_cache()];
    let mut scratch = Vec::new();
    let settings = LossSettings { debias, barrier_weight: 0.0 };
    let total: f64 = idx.iter().map(|&i| row_loss(net, div, &set.row(i), settings, None, &mut caches, &mut scratch)).sum();
    total / idx.len().max(1) as f64
}

/// Adam with L2 weight decay on mini-batches; stops after `patience` epochs
/// without validation improvement and restores the best weights.
pub(crate) fn train(
    net: &mut DualNetwork,
    div: Divergence,
    set: &TrainSet,
    train_idx: &[usize],
    val_idx: &[usize],
    optim: &OptimConfig,
    debias: bool,
    seed: u64,
) -> TrainHistory {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    let np = net.n_params();
    let mut m = vec![0.0; np];
    let mut v = vec![0.0; np];
    let mut grad = vec![0.0; np];
    let mut caches = [net.new_cache(), net.new_cache()];
    let mut scratch = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = train_idx.to_vec();

    let mut history = TrainHistory { val_loss: vec![mean_loss(net, div, set, val_idx, debias)], ..Default::default() };
    let mut best = history.val_loss[0];
    let mut best_params = net.params().to_vec();
    let mut wait = 0;
    let mut step = 0i32;
    for epoch in 0..optim.epochs {
        order.shuffle(&mut rng);
        let settings = LossSettings { debias, barrier_weight: optim.barrier_weight * (1.0 + epoch as f64) };
        for batch in order.chunks(optim.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                row_loss(net, div, &set.row(i), settings, Some(&mut grad), &mut caches, &mut scratch);
            }
            step += 1;
            let inv = 1.0 / batch.len() as f64;
            let c1 = 1.0 - BETA1.powi(step);
            let c2 = 1.0 - BETA2.powi(step);
            let params = net.params_mut();
            for k in 0..np {
                let g = grad[k] * inv + optim.weight_decay * params[k];
                if !g.is_finite() {
                    continue;
                }
                m[k] = BETA1 * m[k] + (1.0 - BETA1) * g;
                v[k] = BETA2 * v[k] + (1.0 - BETA2) * g * g;
                params[k] -= optim.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + EPS);
            }
        }
        let val = mean_loss(net, div, set, val_idx, debias);
        history.val_loss.push(val);
        if val < best {
            best = val;
            best_params.copy_from_slice(net.params());
            history.best_epoch = epoch + 1;
            wait = 0;
        } else {
            wait += 1;
            if wait >= optim.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    net.params_mut().copy_from_slice(&best_params);
    history
}

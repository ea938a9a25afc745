//! Histogram gradient-boosted regression trees with Newton leaf values.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoostLoss {
    Squared,
    Logistic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostConfig {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub subsample: f64,
    pub colsample: f64,
    pub min_child_weight: f64,
    pub l2: f64,
    pub bins: usize,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            rounds: 300,
            learning_rate: 0.005,
            max_depth: 3,
            subsample: 0.8,
            colsample: 0.8,
            min_child_weight: 1e-3,
            l2: 1.0,
            bins: 64,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rounds >= 1
            && self.learning_rate > 0.0
            && self.max_depth >= 1
            && self.subsample > 0.0
            && self.subsample <= 1.0
            && self.colsample > 0.0
            && self.colsample <= 1.0
            && self.l2 >= 0.0
            && self.bins >= 2;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("invalid boosting configuration {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

/// Fitted additive model; predictions are on the link scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub loss: BoostLoss,
    d: usize,
    base: f64,
    trees: Vec<Tree>,
    /// Full-sample training loss after each round, starting with the base score.
    pub train_loss: Vec<f64>,
}

impl BoostedModel {
    pub fn raw(&self, x: &[f64]) -> f64 {
        self.base + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    /// Mean prediction: identity for squared loss, sigmoid for logistic.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let r = self.raw(x);
        match self.loss {
            BoostLoss::Squared => r,
            BoostLoss::Logistic => sigmoid(r),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn loss_value(loss: BoostLoss, y: f64, f: f64) -> f64 {
    match loss {
        BoostLoss::Squared => 0.5 * (y - f) * (y - f),
        // log(1 + e^f) - y f, written to avoid overflow
        BoostLoss::Logistic => f.max(0.0) + (-f.abs()).exp().ln_1p() - y * f,
    }
}

fn grad_hess(loss: BoostLoss, y: f64, f: f64) -> (f64, f64) {
    match loss {
        BoostLoss::Squared => (f - y, 1.0),
        BoostLoss::Logistic => {
            let p = sigmoid(f);
            (p - y, (p * (1.0 - p)).max(1e-12))
        }
    }
}

/// Per-feature bin edges from sample quantiles; value `v` falls in bin `partition_point(edge < v)`.
fn bin_edges(x: &[f64], n: usize, d: usize, bins: usize) -> Vec<Vec<f64>> {
    (0..d)
        .map(|j| {
            let mut col: Vec<f64> = (0..n).map(|i| x[i * d + j]).collect();
            col.sort_by(f64::total_cmp);
            col.dedup();
            if col.len() <= bins {
                // midpoints between distinct values
                col.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            } else {
                let mut edges: Vec<f64> = (1..bins)
                    .map(|k| {
                        let pos = k * (col.len() - 1) / bins;
                        0.5 * (col[pos] + col[pos + 1])
                    })
                    .collect();
                edges.dedup();
                edges
            }
        })
        .collect()
}

struct Grower<'a> {
    cfg: &'a BoostConfig,
    binned: &'a [u8],
    edges: &'a [Vec<f64>],
    d: usize,
    grad: &'a [f64],
    hess: &'a [f64],
}

impl Grower<'_> {
    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -self.cfg.learning_rate * g / (h + self.cfg.l2)
    }

    fn grow(&self, rows: Vec<usize>, features: &[usize], depth: usize, nodes: &mut Vec<Node>) -> usize {
        let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &i| (g + self.grad[i], h + self.hess[i]));
        let id = nodes.len();
        nodes.push(Node::Leaf(self.leaf_value(g, h)));
        if depth >= self.cfg.max_depth || rows.len() < 2 {
            return id;
        }
        let parent = g * g / (h + self.cfg.l2);
        let mut best: Option<(f64, usize, usize)> = None;
        for &j in features {
            let nb = self.edges[j].len() + 1;
            if nb < 2 {
                continue;
            }
            let mut hist = vec![(0.0f64, 0.0f64); nb];
            for &i in &rows {
                let b = self.binned[i * self.d + j] as usize;
                hist[b].0 += self.grad[i];
                hist[b].1 += self.hess[i];
            }
            let (mut gl, mut hl) = (0.0, 0.0);
            for (b, &(hg, hh)) in hist.iter().enumerate().take(nb - 1) {
                gl += hg;
                hl += hh;
                let (gr, hr) = (g - gl, h - hl);
                if hl < self.cfg.min_child_weight || hr < self.cfg.min_child_weight {
                    continue;
                }
                let gain = gl * gl / (hl + self.cfg.l2) + gr * gr / (hr + self.cfg.l2) - parent;
                if gain > 1e-12 && best.is_none_or(|(bg, _, _)| gain > bg) {
                    best = Some((gain, j, b));
                }
            }
        }
        let Some((_, feature, bin)) = best else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| (self.binned[i * self.d + feature] as usize) <= bin);
        let left = self.grow(left_rows, features, depth + 1, nodes);
        let right = self.grow(right_rows, features, depth + 1, nodes);
        nodes[id] = Node::Split { feature, threshold: self.edges[feature][bin], left, right };
        id
    }
}

/// Fits `rounds` trees to row-major `x` (`n x d`) and targets `y`.
pub fn fit_boosted(x: &[f64], d: usize, y: &[f64], loss: BoostLoss, cfg: &BoostConfig, seed: u64) -> Result<BoostedModel> {
    cfg.validate()?;
    let n = y.len();
    if n == 0 || x.len() != n * d {
        return Err(Error::Invalid("boosting needs a non-empty, aligned design".into()));
    }
    if cfg.bins > 256 {
        return Err(Error::Invalid("at most 256 histogram bins are supported".into()));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let base = match loss {
        BoostLoss::Squared => mean,
        BoostLoss::Logistic => {
            let p = mean.clamp(1e-6, 1.0 - 1e-6);
            (p / (1.0 - p)).ln()
        }
    };
    let edges = bin_edges(x, n, d, cfg.bins);
    if d == 0 {
        // intercept-only model
        let train_loss = vec![y.iter().map(|&yi| loss_value(loss, yi, base)).sum::<f64>() / n as f64];
        return Ok(BoostedModel { loss, d, base, trees: Vec::new(), train_loss });
    }
    let mut binned = vec![0u8; n * d];
    for i in 0..n {
        for j in 0..d {
            binned[i * d + j] = edges[j].partition_point(|&e| e < x[i * d + j]) as u8;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pred = vec![base; n];
    let total_loss = |pred: &[f64]| y.iter().zip(pred).map(|(&yi, &f)| loss_value(loss, yi, f)).sum::<f64>() / n as f64;
    let mut train_loss = vec![total_loss(&pred)];
    let mut trees = Vec::with_capacity(cfg.rounds);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let n_rows = ((cfg.subsample * n as f64).round() as usize).clamp(1, n);
    let n_cols = ((cfg.colsample * d as f64).round() as usize).clamp(d.min(1), d);
    for _ in 0..cfg.rounds {
        for i in 0..n {
            let (g, h) = grad_hess(loss, y[i], pred[i]);
            grad[i] = g;
            hess[i] = h;
        }
        let mut rows: Vec<usize> = if n_rows == n { (0..n).collect() } else { sample(&mut rng, n, n_rows).into_vec() };
        rows.sort_unstable();
        let mut features: Vec<usize> = if n_cols == d { (0..d).collect() } else { sample(&mut rng, d, n_cols).into_vec() };
        features.sort_unstable();
        let grower = Grower { cfg, binned: &binned, edges: &edges, d, grad: &grad, hess: &hess };
        let mut nodes = Vec::new();
        grower.grow(rows, &features, 0, &mut nodes);
        let tree = Tree { nodes };
        for i in 0..n {
            pred[i] += tree.predict(&x[i * d..(i + 1) * d]);
        }
        train_loss.push(total_loss(&pred));
        trees.push(tree);
    }
    Ok(BoostedModel { loss, d, base, trees, train_loss })
}

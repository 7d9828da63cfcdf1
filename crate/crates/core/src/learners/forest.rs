//! Bagged CART regression trees with exhaustive split search.

use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;

use super::Task;
use crate::error::{Error, Result};
use crate::seed;

pub const MIN_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; `None` selects ⌈d/3⌉ for regression and ⌈√d⌉
    /// for probabilities.
    pub mtry: Option<usize>,
    /// Smallest admissible child size.
    pub min_leaf: usize,
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 100, mtry: None, min_leaf: 5, bootstrap: true, max_depth: None }
    }
}

impl ForestParams {
    pub fn resolved_mtry(&self, d: usize, task: Task) -> usize {
        let m = self.mtry.unwrap_or(match task {
            Task::Regression => d.div_ceil(3),
            Task::Probability => (d as f64).sqrt().ceil() as usize,
        });
        m.clamp(1, d.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_leaf == 0 || self.mtry == Some(0) || self.max_depth == Some(0) {
            return Err(Error::InvalidInput("forest: n_trees, min_leaf, mtry, max_depth must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_row(&self, x: &DMatrix<f64>, i: usize) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[(i, feature)] <= threshold { left } else { right };
                }
            }
        }
    }

    /// Thresholds of all internal nodes in construction order.
    pub fn thresholds(&self) -> Vec<(usize, f64)> {
        self.nodes
            .iter()
            .filter_map(|n| match *n {
                Node::Split { feature, threshold, .. } => Some((feature, threshold)),
                Node::Leaf(_) => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
}

impl ForestModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let t = self.trees.len() as f64;
        (0..x.nrows())
            .map(|i| self.trees.iter().map(|tr| tr.predict_row(x, i)).sum::<f64>() / t)
            .collect()
    }
}

struct Builder<'a> {
    cols: &'a [Vec<f64>],
    y: &'a [f64],
    mtry: usize,
    min_leaf: usize,
    max_depth: usize,
    nodes: Vec<Node>,
    buf: Vec<(f64, f64)>,
    features: Vec<usize>,
}

impl Builder<'_> {
    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut seed::Rng) -> usize {
        let at = self.nodes.len();
        let n = idx.len();
        let sum: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let mean = sum / n as f64;
        self.nodes.push(Node::Leaf(mean));
        if n < 2 * self.min_leaf || depth >= self.max_depth {
            return at;
        }
        let pure = idx.iter().all(|&i| (self.y[i] - mean).abs() <= 1e-12 * (1.0 + mean.abs()));
        if pure {
            return at;
        }
        let d = self.cols.len();
        for (k, f) in self.features.iter_mut().enumerate() {
            *f = k;
        }
        let parent = sum * sum / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        for k in 0..self.mtry {
            let pick = rng.random_range(k..d);
            self.features.swap(k, pick);
            let f = self.features[k];
            let col = &self.cols[f];
            self.buf.clear();
            self.buf.extend(idx.iter().map(|&i| (col[i], self.y[i])));
            self.buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = 0.0;
            for s in 1..n {
                left += self.buf[s - 1].1;
                if s < self.min_leaf || n - s < self.min_leaf || self.buf[s - 1].0 >= self.buf[s].0 {
                    continue;
                }
                let right = sum - left;
                let score = left * left / s as f64 + right * right / (n - s) as f64;
                if best.is_none_or(|b| score > b.0) {
                    best = Some((score, f, 0.5 * (self.buf[s - 1].0 + self.buf[s].0)));
                }
            }
        }
        let Some((score, feature, threshold)) = best else {
            return at;
        };
        if score <= parent + 1e-12 * parent.abs().max(1.0) {
            return at;
        }
        let col = &self.cols[feature];
        let mut split = 0;
        for j in 0..n {
            if col[idx[j]] <= threshold {
                idx.swap(j, split);
                split += 1;
            }
        }
        let (lo, hi) = idx.split_at_mut(split);
        let left = self.grow(lo, depth + 1, rng);
        let right = self.grow(hi, depth + 1, rng);
        self.nodes[at] = Node::Split { feature, threshold, left, right };
        at
    }
}

/// Grow `params.n_trees` trees in parallel; tree `t` draws from the stream
/// keyed by `(seed, t)`, so the result does not depend on thread count.
pub fn fit_random_forest(
    x: &DMatrix<f64>,
    y: &[f64],
    params: &ForestParams,
    task: Task,
    seed: u64,
) -> Result<ForestModel> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(Error::InvalidInput("forest: length mismatch".into()));
    }
    if n < MIN_ROWS {
        return Err(Error::InsufficientData { needed: MIN_ROWS, got: n });
    }
    if d == 0 {
        return Err(Error::InvalidInput("forest: no features".into()));
    }
    params.validate()?;
    let cols: Vec<Vec<f64>> = (0..d).map(|j| x.column(j).iter().copied().collect()).collect();
    let mtry = params.resolved_mtry(d, task);
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng_at(seed, &[t as u64]);
            let mut idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut b = Builder {
                cols: &cols,
                y,
                mtry,
                min_leaf: params.min_leaf,
                max_depth: params.max_depth.unwrap_or(usize::MAX),
                nodes: Vec::new(),
                buf: Vec::with_capacity(n),
                features: vec![0; d],
            };
            b.grow(&mut idx, 0, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(ForestModel { trees })
}

//! Regression trees (greedy variance reduction) and bagged forests.

use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;

use crate::matrix::FeatureMatrix;
use crate::rng::{self, Rng};

const LEAF: u32 = u32::MAX;

/// Compact node: a leaf when `feature == LEAF`, in which case `value` is the
/// prediction; otherwise `value` is the split threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    value: f64,
    feature: u32,
    left: u32,
    right: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_node_size: usize,
    /// Features considered per split; `None` means all of them.
    pub mtry: Option<usize>,
}

struct Builder<'a> {
    x: &'a FeatureMatrix,
    y: &'a [f64],
    params: TreeParams,
    nodes: Vec<Node>,
    scratch: Vec<(f64, f64)>,
}

impl RegressionTree {
    /// Grows a tree on the rows listed in `sample` (repeats allowed).
    pub(crate) fn grow(
        x: &FeatureMatrix,
        y: &[f64],
        mut sample: Vec<usize>,
        params: TreeParams,
        rng: &mut Rng,
    ) -> Self {
        let mut b = Builder {
            x,
            y,
            params,
            nodes: Vec::new(),
            scratch: Vec::with_capacity(sample.len()),
        };
        b.build(&mut sample, 0, rng);
        RegressionTree { nodes: b.nodes }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut node = &self.nodes[0];
        while node.feature != LEAF {
            let next = if row[node.feature as usize] <= node.value { node.left } else { node.right };
            node = &self.nodes[next as usize];
        }
        node.value
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.feature == LEAF).count()
    }
}

impl Builder<'_> {
    fn build(&mut self, idx: &mut [usize], depth: usize, rng: &mut Rng) -> usize {
        let n = idx.len();
        let sum: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let value = sum / n as f64;
        let me = self.nodes.len();
        self.nodes.push(Node { value, feature: LEAF, left: 0, right: 0 });

        if depth >= self.params.max_depth || n < self.params.min_node_size || n < 2 {
            return me;
        }
        let first = self.y[idx[0]];
        if idx.iter().all(|&i| self.y[i] == first) {
            return me;
        }

        let p = self.x.ncols();
        let candidates: Vec<usize> = match self.params.mtry {
            Some(m) if m < p => {
                let mut c = index::sample(rng, p, m.max(1)).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..p).collect(),
        };

        // maximize sum_l²/n_l + sum_r²/n_r, equivalent to minimizing child SSE
        let parent_score = sum * sum / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        for &f in &candidates {
            self.scratch.clear();
            self.scratch
                .extend(idx.iter().map(|&i| (self.x.get(i, f), self.y[i])));
            self.scratch
                .sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.scratch[k].1;
                let (lo, hi) = (self.scratch[k].0, self.scratch[k + 1].0);
                if lo == hi {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = (n - k - 1) as f64;
                let right_sum = sum - left_sum;
                let score = left_sum * left_sum / nl + right_sum * right_sum / nr;
                if best.is_none_or(|(s, _, _)| score > s) {
                    let mut thr = lo + (hi - lo) / 2.0;
                    if thr >= hi {
                        thr = lo;
                    }
                    best = Some((score, f, thr));
                }
            }
        }
        let Some((score, feature, threshold)) = best else {
            return me;
        };
        if score <= parent_score {
            return me;
        }

        let mut split = 0;
        for k in 0..n {
            if self.x.get(idx[k], feature) <= threshold {
                idx.swap(k, split);
                split += 1;
            }
        }
        if split == 0 || split == n {
            return me;
        }
        let (l, r) = idx.split_at_mut(split);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[me] = Node {
            value: threshold,
            feature: feature as u32,
            left: left as u32,
            right: right as u32,
        };
        me
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<RegressionTree>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ForestSettings {
    pub n_trees: usize,
    pub tree: TreeParams,
    pub bootstrap: bool,
}

impl Forest {
    pub(crate) fn fit(x: &FeatureMatrix, y: &[f64], settings: ForestSettings, seed: u64) -> Self {
        let n = x.nrows();
        let trees = (0..settings.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng::substream(seed, &[rng::tag("tree"), t as u64]);
                let sample = if settings.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                RegressionTree::grow(x, y, sample, settings.tree, &mut rng)
            })
            .collect();
        Forest { trees }
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut acc = 0.0;
        for t in &self.trees {
            acc += t.predict_row(row);
        }
        acc / self.trees.len() as f64
    }

    /// Predictions for all rows of `x`. Rows are processed in blocks, tree
    /// by tree, which keeps each tree cache-resident; the per-row summation
    /// order matches [`predict_row`](Self::predict_row).
    pub fn predict_matrix(&self, x: &FeatureMatrix) -> Vec<f64> {
        const BLOCK: usize = 128;
        let n = x.nrows();
        let nt = self.trees.len() as f64;
        let block = |start: usize| -> Vec<f64> {
            let end = (start + BLOCK).min(n);
            let mut acc = vec![0.0; end - start];
            for t in &self.trees {
                for (a, i) in acc.iter_mut().zip(start..end) {
                    *a += t.predict_row(x.row(i));
                }
            }
            acc.into_iter().map(|a| a / nt).collect()
        };
        let starts: Vec<usize> = (0..n).step_by(BLOCK).collect();
        if n * self.trees.len() > 1 << 16 {
            starts.into_par_iter().flat_map_iter(block).collect()
        } else {
            starts.into_iter().flat_map(block).collect()
        }
    }
}

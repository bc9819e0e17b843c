//! Long-format importance results shared by all methods.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::measure::Measure;
use crate::numeric::stable_mean;

/// One importance evaluation. Iteration and repeat counters are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub feature: String,
    pub iter_rsmp: usize,
    pub iter_repeat: usize,
    pub loss_baseline: f64,
    pub loss_post: f64,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoresTable {
    pub measure: Measure,
    pub records: Vec<ScoreRecord>,
}

impl ScoresTable {
    pub fn new(measure: Measure, mut records: Vec<ScoreRecord>, feature_order: &[String]) -> Self {
        let rank: BTreeMap<&str, usize> =
            feature_order.iter().enumerate().map(|(i, f)| (f.as_str(), i)).collect();
        records.sort_by(|a, b| {
            let ra = rank.get(a.feature.as_str()).copied().unwrap_or(usize::MAX);
            let rb = rank.get(b.feature.as_str()).copied().unwrap_or(usize::MAX);
            ra.cmp(&rb)
                .then_with(|| a.feature.cmp(&b.feature))
                .then(a.iter_rsmp.cmp(&b.iter_rsmp))
                .then(a.iter_repeat.cmp(&b.iter_repeat))
        });
        Self { measure, records }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Features (or group names) in table order.
    pub fn features(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.records {
            if out.last() != Some(&r.feature) && !out.contains(&r.feature) {
                out.push(r.feature.clone());
            }
        }
        out
    }

    pub fn n_iterations(&self) -> usize {
        self.records.iter().map(|r| r.iter_rsmp).max().unwrap_or(0)
    }

    /// Mean importance over all iterations and repeats, per feature.
    pub fn importance(&self) -> Vec<(String, f64)> {
        self.features()
            .into_iter()
            .map(|f| {
                let vals: Vec<f64> =
                    self.records.iter().filter(|r| r.feature == f).map(|r| r.importance).collect();
                let m = stable_mean(&vals);
                (f, m)
            })
            .collect()
    }

    pub fn importance_of(&self, feature: &str) -> Option<f64> {
        let vals: Vec<f64> =
            self.records.iter().filter(|r| r.feature == feature).map(|r| r.importance).collect();
        (!vals.is_empty()).then(|| stable_mean(&vals))
    }

    /// Per-iteration means (repeats averaged), ordered by iteration.
    pub fn iteration_means(&self, feature: &str) -> Vec<f64> {
        let mut by_iter: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.feature == feature) {
            by_iter.entry(r.iter_rsmp).or_default().push(r.importance);
        }
        by_iter.values().map(|v| stable_mean(v)).collect()
    }

    pub fn values_of(&self, feature: &str) -> Vec<f64> {
        self.records.iter().filter(|r| r.feature == feature).map(|r| r.importance).collect()
    }
}

/// Observation-wise losses of one (feature, iteration, repeat) unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsLossBlock {
    pub feature: String,
    pub iter_rsmp: usize,
    pub iter_repeat: usize,
    pub row_ids: Arc<[usize]>,
    pub loss_baseline: Arc<[f64]>,
    pub loss_post: Vec<f64>,
    /// Direction sign of the measure.
    pub sign: f64,
}

impl ObsLossBlock {
    /// Δ_i = sign · (post_i − baseline_i).
    pub fn diffs(&self) -> Vec<f64> {
        self.loss_post
            .iter()
            .zip(self.loss_baseline.iter())
            .map(|(p, b)| self.sign * (p - b))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObsLossTable {
    pub blocks: Vec<ObsLossBlock>,
}

impl ObsLossTable {
    pub fn features(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for b in &self.blocks {
            if !out.contains(&b.feature) {
                out.push(b.feature.clone());
            }
        }
        out
    }

    /// Pooled differences for observation-level tests: Δ_i is averaged over
    /// repeats within an iteration, then iterations are concatenated in
    /// order. Returns the pooled values and whether any row id appears in
    /// more than one iteration.
    pub fn pooled_diffs(&self, feature: &str) -> (Vec<f64>, bool) {
        let mut by_iter: BTreeMap<usize, Vec<&ObsLossBlock>> = BTreeMap::new();
        for b in self.blocks.iter().filter(|b| b.feature == feature) {
            by_iter.entry(b.iter_rsmp).or_default().push(b);
        }
        let mut pooled = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut repeated_rows = false;
        for blocks in by_iter.values() {
            let m = blocks[0].row_ids.len();
            let mut acc = vec![0.0; m];
            for b in blocks {
                for (a, d) in acc.iter_mut().zip(b.diffs()) {
                    *a += d;
                }
            }
            let r = blocks.len() as f64;
            pooled.extend(acc.into_iter().map(|a| a / r));
            for id in blocks[0].row_ids.iter() {
                if !seen.insert(*id) {
                    repeated_rows = true;
                }
            }
        }
        (pooled, repeated_rows)
    }
}

//! SAGE: Shapley-weighted attribution of model performance to features.
//!
//! The value of a coalition `S` is the performance gained over the mean
//! prediction when only `X_S` is known, with `X_{−S}` integrated out either
//! marginally (background rows) or conditionally (a fitted sampler).
//! Values are estimated with the permutation estimator; an exact
//! enumeration oracle covers small `p`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::TrainedModel;
use crate::matrix::FeatureMatrix;
use crate::measure::Measure;
use crate::perturbation::{check_model_source, iteration_model};
use crate::resampling::ResamplingInstance;
use crate::rng::{self, Rng};
use crate::samplers::{Conditioning, SamplerKind, SamplerModel};
use crate::scores::{ScoreRecord, ScoresTable};
use crate::task::Task;
use crate::ModelSource;

/// Largest feature count accepted by the exact oracle.
pub const ORACLE_MAX_FEATURES: usize = 12;

/// Test rows are imputed in chunks of this size to bound memory.
const CHUNK_ROWS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SageVariant {
    Marginal,
    Conditional,
}

impl SageVariant {
    pub fn id(self) -> &'static str {
        match self {
            SageVariant::Marginal => "marginal",
            SageVariant::Conditional => "conditional",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SageConfig {
    pub variant: SageVariant,
    pub model: ModelSource,
    pub measure: Measure,
    pub resampling: ResamplingInstance,
    pub n_permutations: usize,
    pub n_samples: usize,
    pub min_permutations: usize,
    pub early_stopping: bool,
    pub convergence_ratio: f64,
    /// Cap on background rows drawn from each iteration's training set.
    pub max_background: usize,
    /// Sampler for the conditional variant.
    pub sampler: SamplerKind,
    /// Reuse one imputation draw per coalition (makes `v` a deterministic
    /// function of `S`, as the exact oracle does).
    pub frozen_imputations: bool,
    pub seed: u64,
}

impl SageConfig {
    pub fn new(
        variant: SageVariant,
        model: impl Into<ModelSource>,
        measure: Measure,
        resampling: ResamplingInstance,
    ) -> Self {
        Self {
            variant,
            model: model.into(),
            measure,
            resampling,
            n_permutations: 100,
            n_samples: 100,
            min_permutations: 20,
            early_stopping: true,
            convergence_ratio: 0.025,
            max_background: 512,
            sampler: SamplerKind::ConditionalGaussian,
            frozen_imputations: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_permutations < 1 {
            return Err(Error::param("n_permutations must be >= 1"));
        }
        if self.min_permutations > self.n_permutations {
            return Err(Error::param(format!(
                "min_permutations ({}) exceeds n_permutations ({})",
                self.min_permutations, self.n_permutations
            )));
        }
        if self.n_samples < 1 {
            return Err(Error::param("n_samples must be >= 1"));
        }
        if self.max_background < 1 {
            return Err(Error::param("background size must be >= 1"));
        }
        if !(self.convergence_ratio > 0.0 && self.convergence_ratio.is_finite()) {
            return Err(Error::param("convergence_ratio must be positive"));
        }
        if self.variant == SageVariant::Conditional {
            match self.sampler {
                SamplerKind::ConditionalGaussian | SamplerKind::ConditionalKnn { .. } => {}
                other => {
                    return Err(Error::IncompatibleSampler(format!(
                        "conditional SAGE needs a conditional sampler, got {other}"
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Evaluates `v(S)` for one model and test set.
pub struct CoalitionEvaluator {
    model: Arc<TrainedModel>,
    map: Vec<usize>,
    measure: Measure,
    x_test: FeatureMatrix,
    y_test: Vec<f64>,
    background: FeatureMatrix,
    sampler: Option<SamplerModel>,
    variant: SageVariant,
    n_samples: usize,
    iteration: usize,
    loss_empty: f64,
    v_full: f64,
}

impl CoalitionEvaluator {
    /// `x_test` and `background` hold every task feature in `features` order.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: Arc<TrainedModel>,
        features: &[String],
        measure: Measure,
        x_test: FeatureMatrix,
        y_test: Vec<f64>,
        background: FeatureMatrix,
        variant: SageVariant,
        sampler: Option<SamplerModel>,
        n_samples: usize,
    ) -> Result<Self> {
        if background.nrows() == 0 {
            return Err(Error::param("empty background set"));
        }
        if n_samples == 0 {
            return Err(Error::param("n_samples must be >= 1"));
        }
        if variant == SageVariant::Conditional && sampler.is_none() {
            return Err(Error::IncompatibleSampler("conditional SAGE needs a conditional sampler".into()));
        }
        let map = model.column_map(features)?;
        let bg_pred = model.predict_mapped(&background, &map);
        let empty = crate::numeric::stable_mean(&bg_pred);
        let loss_empty = measure.score(&y_test, &vec![empty; y_test.len()])?;
        let full = model.predict_mapped(&x_test, &map);
        let v_full = measure.direction().sign() * (loss_empty - measure.score(&y_test, &full)?);
        Ok(Self {
            model,
            map,
            measure,
            x_test,
            y_test,
            background,
            sampler,
            variant,
            n_samples,
            iteration: 0,
            loss_empty,
            v_full,
        })
    }

    /// Builds the evaluator for resampling iteration `k` of a SAGE config.
    pub fn for_iteration(task: &Task, config: &SageConfig, k: usize) -> Result<Self> {
        let train = config.resampling.train_ids(k);
        let model = iteration_model(&config.model, task, train, config.seed, k)?;
        let all: Vec<usize> = (0..task.n_features()).collect();
        let test_pos = task.positions(config.resampling.test_ids(k))?;
        let train_pos = task.positions(train)?;
        let bg_pos: Vec<usize> = if train_pos.len() > config.max_background {
            let mut r = rng::substream(config.seed, &[rng::tag("background"), k as u64]);
            let mut idx = rand::seq::index::sample(&mut r, train_pos.len(), config.max_background).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| train_pos[i]).collect()
        } else {
            train_pos
        };
        let sampler = match config.variant {
            SageVariant::Marginal => None,
            SageVariant::Conditional => Some(SamplerModel::fit(config.sampler, task, train)?),
        };
        let mut ev = Self::new(
            model,
            task.feature_names(),
            config.measure,
            task.matrix(&test_pos, &all),
            task.targets_at(&test_pos),
            task.matrix(&bg_pos, &all),
            config.variant,
            sampler,
            config.n_samples,
        )?;
        ev.iteration = k;
        Ok(ev)
    }

    pub fn n_features(&self) -> usize {
        self.x_test.ncols()
    }

    /// Loss of the constant mean-prediction baseline.
    pub fn loss_empty(&self) -> f64 {
        self.loss_empty
    }

    /// `v` of the full coalition (no imputation).
    pub fn value_full(&self) -> f64 {
        self.v_full
    }

    /// `v(S)` with imputations drawn from `rng`. `S` holds feature indices.
    pub fn value(&self, s: &[usize], rng: &mut Rng) -> Result<f64> {
        let p = self.n_features();
        let mut in_s = vec![false; p];
        for &j in s {
            if j >= p {
                return Err(Error::param(format!("feature index {j} out of range")));
            }
            in_s[j] = true;
        }
        let known: Vec<usize> = (0..p).filter(|&j| in_s[j]).collect();
        if known.is_empty() {
            return Ok(0.0);
        }
        if known.len() == p {
            return Ok(self.v_full);
        }
        let unknown: Vec<usize> = (0..p).filter(|&j| !in_s[j]).collect();
        let pred = match self.variant {
            SageVariant::Marginal => self.impute_marginal(&unknown, rng),
            SageVariant::Conditional => self.impute_conditional(&known, &unknown, rng)?,
        };
        let loss = self.measure.score(&self.y_test, &pred)?;
        Ok(self.measure.direction().sign() * (self.loss_empty - loss))
    }

    /// `v(S)` with the single frozen imputation draw keyed by `(seed, S)`.
    pub fn value_frozen(&self, s: &[usize], seed: u64) -> Result<f64> {
        let mut key: Vec<u64> = s.iter().map(|&j| j as u64).collect();
        key.sort_unstable();
        key.dedup();
        let mut r = rng::substream(
            seed,
            &[rng::tag("frozen"), self.iteration as u64, rng::mix(key.len() as u64, &key)],
        );
        self.value(s, &mut r)
    }

    fn impute_marginal(&self, unknown: &[usize], rng: &mut Rng) -> Vec<f64> {
        let n = self.x_test.nrows();
        let p = self.n_features();
        let ns = self.n_samples;
        let nbg = self.background.nrows();
        let mut out = Vec::with_capacity(n);
        let mut start = 0;
        while start < n {
            let end = (start + CHUNK_ROWS).min(n);
            let mut x = FeatureMatrix::zeros((end - start) * ns, p);
            for i in start..end {
                for s in 0..ns {
                    let b = rng.random_range(0..nbg);
                    let row = x.row_mut((i - start) * ns + s);
                    row.copy_from_slice(self.x_test.row(i));
                    let donor = self.background.row(b);
                    for &j in unknown {
                        row[j] = donor[j];
                    }
                }
            }
            let pred = self.model.predict_mapped(&x, &self.map);
            out.extend(pred.chunks(ns).map(crate::numeric::stable_mean));
            start = end;
        }
        out
    }

    fn impute_conditional(&self, known: &[usize], unknown: &[usize], rng: &mut Rng) -> Result<Vec<f64>> {
        let sampler = self.sampler.as_ref().expect("checked at construction");
        let n = self.x_test.nrows();
        let mut sums = vec![0.0; n];
        let mut x = self.x_test.clone();
        if let Some(cond) = sampler.gaussian_conditional(unknown, known) {
            // the conditional law and the means depend only on S
            let means = cond.means(&self.x_test);
            for _ in 0..self.n_samples {
                let draw = cond.draw_around(&means, rng);
                for (a, &j) in unknown.iter().enumerate() {
                    x.set_column(j, &draw.as_slice()[a * n..(a + 1) * n]);
                }
                for (acc, v) in sums.iter_mut().zip(self.model.predict_mapped(&x, &self.map)) {
                    *acc += v;
                }
            }
            return Ok(sums.into_iter().map(|s| s / self.n_samples as f64).collect());
        }
        for _ in 0..self.n_samples {
            let draws = sampler.sample_matrix(&self.x_test, unknown, Conditioning::Set(known), rng)?;
            for (&j, col) in unknown.iter().zip(&draws) {
                x.set_column(j, col);
            }
            for (acc, v) in sums.iter_mut().zip(self.model.predict_mapped(&x, &self.map)) {
                *acc += v;
            }
        }
        Ok(sums.into_iter().map(|s| s / self.n_samples as f64).collect())
    }
}

/// Streaming mean / variance (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMoments {
    pub count: usize,
    pub mean: f64,
    pub m2: f64,
}

impl RunningMoments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        Self {
            count: self.count + other.count,
            mean: self.mean + d * other.count as f64 / n,
            m2: self.m2 + other.m2 + d * d * self.count as f64 * other.count as f64 / n,
        }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            f64::NAN
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

/// Estimator state for one resampling iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SageState {
    pub iter_rsmp: usize,
    pub features: Vec<String>,
    pub moments: Vec<RunningMoments>,
    pub permutations: usize,
    pub coalitions: usize,
    pub v_full: f64,
    pub converged: bool,
}

impl SageState {
    pub fn values(&self) -> Vec<f64> {
        self.moments.iter().map(|m| m.mean).collect()
    }

    pub fn se(&self) -> Vec<f64> {
        self.moments.iter().map(RunningMoments::se).collect()
    }

    fn converged_at(&self, ratio: f64) -> bool {
        let means = self.values();
        let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
        let max_se = self.se().into_iter().fold(0.0, f64::max);
        max_se < ratio * (hi - lo)
    }
}

#[derive(Debug, Clone)]
pub struct SageResult {
    /// One record per (feature, iteration); loss columns are NaN.
    pub scores: ScoresTable,
    pub states: Vec<SageState>,
    pub variant: SageVariant,
    pub warnings: Vec<String>,
}

impl SageResult {
    pub fn importance(&self) -> Vec<(String, f64)> {
        self.scores.importance()
    }

    /// Coalition evaluations summed over iterations.
    pub fn coalitions(&self) -> usize {
        self.states.iter().map(|s| s.coalitions).sum()
    }
}

fn permutation_deltas(
    ev: &CoalitionEvaluator,
    config: &SageConfig,
    k: usize,
    t: usize,
    cache: Option<&Mutex<HashMap<Vec<usize>, f64>>>,
) -> Result<Vec<f64>> {
    let p = ev.n_features();
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(&mut rng::substream(config.seed, &[rng::tag("sage-perm"), k as u64, t as u64]));
    let mut rng = rng::substream(config.seed, &[rng::tag("sage-impute"), k as u64, t as u64]);
    let mut deltas = vec![0.0; p];
    let mut prefix: Vec<usize> = Vec::with_capacity(p);
    let mut prev = 0.0;
    for &j in &order {
        prefix.push(j);
        let v = match cache {
            Some(cache) => {
                let mut key = prefix.clone();
                key.sort_unstable();
                let hit = cache.lock().expect("cache lock").get(&key).copied();
                match hit {
                    Some(v) => v,
                    None => {
                        let v = ev.value_frozen(&key, config.seed)?;
                        cache.lock().expect("cache lock").insert(key, v);
                        v
                    }
                }
            }
            None => ev.value(&prefix, &mut rng)?,
        };
        deltas[j] = v - prev;
        prev = v;
    }
    Ok(deltas)
}

fn estimate_iteration(task: &Task, config: &SageConfig, k: usize) -> Result<SageState> {
    let ev = CoalitionEvaluator::for_iteration(task, config, k)?;
    let p = ev.n_features();
    let cache = config.frozen_imputations.then(|| Mutex::new(HashMap::new()));
    let mut state = SageState {
        iter_rsmp: k + 1,
        features: task.feature_names().to_vec(),
        moments: vec![RunningMoments::default(); p],
        permutations: 0,
        // the empty coalition is evaluated once
        coalitions: 1,
        v_full: ev.value_full(),
        converged: false,
    };
    // Permutations are computed in parallel batches but consumed strictly in
    // index order, so the stopping point never depends on the thread count.
    let batch = rayon::current_num_threads().max(1) * 2;
    let mut t = 0;
    'outer: while t < config.n_permutations {
        let end = (t + batch).min(config.n_permutations);
        let deltas: Vec<Vec<f64>> = (t..end)
            .into_par_iter()
            .map(|i| permutation_deltas(&ev, config, k, i, cache.as_ref()))
            .collect::<Result<_>>()?;
        for d in deltas {
            for (m, x) in state.moments.iter_mut().zip(d) {
                m.push(x);
            }
            state.permutations += 1;
            state.coalitions += p;
            if config.early_stopping
                && state.permutations >= config.min_permutations.max(2)
                && state.converged_at(config.convergence_ratio)
            {
                state.converged = true;
                break 'outer;
            }
        }
        t = end;
    }
    Ok(state)
}

pub fn sage_permutation_estimator(task: &Task, config: &SageConfig) -> Result<SageResult> {
    config.validate()?;
    check_model_source(&config.model, task, &config.resampling)?;
    let states: Vec<SageState> = (0..config.resampling.iterations())
        .map(|k| estimate_iteration(task, config, k))
        .collect::<Result<_>>()?;
    let mut warnings = vec!["early-stopping se uses the per-permutation variance of marginal contributions".to_string()];
    let mut records = Vec::new();
    for s in &states {
        if config.early_stopping && !s.converged {
            warnings.push(format!(
                "iteration {}: not converged after {} permutations",
                s.iter_rsmp, s.permutations
            ));
        }
        for (f, m) in s.features.iter().zip(&s.moments) {
            records.push(ScoreRecord {
                feature: f.clone(),
                iter_rsmp: s.iter_rsmp,
                iter_repeat: 1,
                loss_baseline: f64::NAN,
                loss_post: f64::NAN,
                importance: m.mean,
            });
        }
    }
    Ok(SageResult {
        scores: ScoresTable::new(config.measure, records, task.feature_names()),
        states,
        variant: config.variant,
        warnings,
    })
}

/// Exact Shapley values over all `2^p` coalitions, each evaluated with its
/// frozen imputation draw for `seed`.
pub fn exact_shapley_oracle(ev: &CoalitionEvaluator, seed: u64) -> Result<Vec<f64>> {
    let p = ev.n_features();
    if p > ORACLE_MAX_FEATURES {
        return Err(Error::param(format!("exact oracle supports at most {ORACLE_MAX_FEATURES} features, got {p}")));
    }
    let values: Vec<f64> = (0u32..1 << p)
        .into_par_iter()
        .map(|mask| {
            let s: Vec<usize> = (0..p).filter(|j| mask & (1 << j) != 0).collect();
            ev.value_frozen(&s, seed)
        })
        .collect::<Result<_>>()?;
    let fact = |n: usize| (1..=n).map(|i| i as f64).product::<f64>();
    let pf = fact(p);
    let mut phi = vec![0.0; p];
    for (j, phi_j) in phi.iter_mut().enumerate() {
        for mask in 0usize..1 << p {
            if mask & (1 << j) != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let w = fact(s) * fact(p - s - 1) / pf;
            *phi_j += w * (values[mask | (1 << j)] - values[mask]);
        }
    }
    Ok(phi)
}

//! Refit-based importance: LOCO / WVIM in leave-out and leave-in directions.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{LearnerSpec, TrainedModel};
use crate::measure::Measure;
use crate::perturbation::{build_units, Unit};
use crate::resampling::ResamplingInstance;
use crate::rng;
use crate::scores::{ObsLossBlock, ObsLossTable, ScoreRecord, ScoresTable};
use crate::task::Task;
use crate::ModelSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefitDirection {
    LeaveOut,
    LeaveIn,
}

impl RefitDirection {
    pub fn id(self) -> &'static str {
        match self {
            RefitDirection::LeaveOut => "leave-out",
            RefitDirection::LeaveIn => "leave-in",
        }
    }
}

impl std::str::FromStr for RefitDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "leave-out" | "out" => Ok(RefitDirection::LeaveOut),
            "leave-in" | "in" => Ok(RefitDirection::LeaveIn),
            other => Err(Error::param(format!("unknown direction '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RefitConfig {
    /// Must be an untrained learner; pre-fit models are rejected.
    pub learner: ModelSource,
    pub measure: Measure,
    pub resampling: ResamplingInstance,
    pub direction: RefitDirection,
    /// Named groups; one singleton group per feature when `None`.
    pub groups: Option<Vec<(String, Vec<String>)>>,
    pub n_repeats: usize,
    pub seed: u64,
}

impl RefitConfig {
    pub fn new(learner: impl Into<ModelSource>, measure: Measure, resampling: ResamplingInstance) -> Self {
        Self {
            learner: learner.into(),
            measure,
            resampling,
            direction: RefitDirection::LeaveOut,
            groups: None,
            n_repeats: 1,
            seed: 0,
        }
    }

    pub fn with_direction(mut self, direction: RefitDirection) -> Self {
        self.direction = direction;
        self
    }

    pub fn with_groups(mut self, groups: Vec<(String, Vec<String>)>) -> Self {
        self.groups = Some(groups);
        self
    }

    pub fn with_repeats(mut self, n_repeats: usize) -> Self {
        self.n_repeats = n_repeats;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone)]
pub struct RefitResult {
    pub scores: ScoresTable,
    /// Observation-wise losses (reduced vs. full); `None` for
    /// non-decomposable measures.
    pub obs: Option<ObsLossTable>,
    pub direction: RefitDirection,
    pub resampling: ResamplingInstance,
    pub warnings: Vec<String>,
}

impl RefitResult {
    pub fn importance(&self) -> Vec<(String, f64)> {
        self.scores.importance()
    }

    pub fn obs_loss_diffs(&self) -> Result<&ObsLossTable> {
        self.obs
            .as_ref()
            .ok_or_else(|| Error::NotDecomposable(self.scores.measure.id().to_string()))
    }
}

struct Reference {
    loss: f64,
    obs: Option<Arc<[f64]>>,
}

fn fit_on(spec: &LearnerSpec, task: &Task, train_pos: &[usize], cols: &[usize], seed: u64) -> Result<TrainedModel> {
    let names: Vec<String> = cols.iter().map(|&j| task.feature_names()[j].clone()).collect();
    let x = task.matrix(train_pos, cols);
    let y = task.targets_at(train_pos);
    let spec = if cols.is_empty() { LearnerSpec::featureless() } else { spec.clone() };
    TrainedModel::fit_matrix(&spec.with_seed(seed), names, &x, &y)
}

pub fn compute_wvim(task: &Task, config: &RefitConfig) -> Result<RefitResult> {
    let spec = match &config.learner {
        ModelSource::Learner(spec) => spec,
        ModelSource::Fitted(_) => {
            return Err(Error::param("refit methods require an untrained learner, not a pre-fit model"))
        }
    };
    spec.validate()?;
    if config.n_repeats < 1 {
        return Err(Error::param("n_repeats must be >= 1"));
    }
    let units = build_units(task, None, config.groups.as_deref(), |_| true)?;
    let p = task.n_features();
    let leave_out = config.direction == RefitDirection::LeaveOut;

    let mut warnings = Vec::new();
    let kept: Vec<Vec<usize>> = units
        .iter()
        .map(|u| {
            if leave_out {
                (0..p).filter(|j| !u.members.contains(j)).collect()
            } else {
                u.members.clone()
            }
        })
        .collect();
    for (u, cols) in units.iter().zip(&kept) {
        if cols.is_empty() {
            warnings.push(format!("group '{}' removes all features; reduced model is featureless", u.name));
        }
    }

    let dir = config.measure.direction().sign();
    let decomposable = config.measure.decomposable();
    let n_iter = config.resampling.iterations();
    let all: Vec<usize> = (0..p).collect();

    let split = |k: usize| -> Result<(Vec<usize>, Vec<usize>, Vec<f64>)> {
        let train = task.positions(config.resampling.train_ids(k))?;
        let test = task.positions(config.resampling.test_ids(k))?;
        let y = task.targets_at(&test);
        Ok((train, test, y))
    };
    let splits: Vec<(Vec<usize>, Vec<usize>, Vec<f64>)> = (0..n_iter).map(split).collect::<Result<_>>()?;

    let evaluate = |model: &TrainedModel, k: usize, cols: &[usize]| -> Result<Reference> {
        let (_, test, y) = &splits[k];
        let pred = model.predict_matrix(&task.matrix(test, cols));
        let loss = config.measure.score(y, &pred)?;
        let obs = if decomposable { Some(Arc::from(config.measure.pointwise(y, &pred)?)) } else { None };
        Ok(Reference { loss, obs })
    };

    // Reference losses: the full model per (iteration, repeat) for leave-out,
    // the featureless model per iteration for leave-in.
    let ref_jobs: Vec<(usize, usize)> = if leave_out {
        (0..n_iter).flat_map(|k| (0..config.n_repeats).map(move |r| (k, r))).collect()
    } else {
        (0..n_iter).map(|k| (k, 0)).collect()
    };
    let refs: Vec<Reference> = ref_jobs
        .par_iter()
        .map(|&(k, r)| {
            let seed = rng::mix(config.seed, &[rng::tag("full"), k as u64, r as u64]);
            let cols: &[usize] = if leave_out { &all } else { &[] };
            let model = fit_on(spec, task, &splits[k].0, cols, seed)?;
            evaluate(&model, k, cols)
        })
        .collect::<Result<_>>()?;
    let reference = |k: usize, r: usize| -> &Reference {
        if leave_out {
            &refs[k * config.n_repeats + r]
        } else {
            &refs[k]
        }
    };

    let row_ids: Vec<Arc<[usize]>> =
        (0..n_iter).map(|k| Arc::from(config.resampling.test_ids(k).to_vec())).collect();
    let jobs: Vec<(usize, usize, usize)> = (0..n_iter)
        .flat_map(|k| (0..units.len()).flat_map(move |u| (0..config.n_repeats).map(move |r| (k, u, r))))
        .collect();
    let outs: Vec<(ScoreRecord, Option<ObsLossBlock>)> = jobs
        .par_iter()
        .map(|&(k, ui, r)| {
            let unit: &Unit = &units[ui];
            let seed = rng::mix(config.seed, &[rng::tag("refit"), k as u64, unit.key, r as u64]);
            let model = fit_on(spec, task, &splits[k].0, &kept[ui], seed)?;
            let reduced = evaluate(&model, k, &kept[ui])?;
            let base = reference(k, r);
            // leave-out: dir·(reduced − full); leave-in: dir·(featureless − group)
            let sign = if leave_out { dir } else { -dir };
            let record = ScoreRecord {
                feature: unit.name.clone(),
                iter_rsmp: k + 1,
                iter_repeat: r + 1,
                loss_baseline: base.loss,
                loss_post: reduced.loss,
                importance: sign * (reduced.loss - base.loss),
            };
            let block = match (&base.obs, reduced.obs) {
                (Some(b), Some(post)) => Some(ObsLossBlock {
                    feature: unit.name.clone(),
                    iter_rsmp: k + 1,
                    iter_repeat: r + 1,
                    row_ids: Arc::clone(&row_ids[k]),
                    loss_baseline: Arc::clone(b),
                    loss_post: post.to_vec(),
                    sign,
                }),
                _ => None,
            };
            Ok((record, block))
        })
        .collect::<Result<_>>()?;

    let order: Vec<String> = units.iter().map(|u| u.name.clone()).collect();
    let (records, blocks): (Vec<ScoreRecord>, Vec<Option<ObsLossBlock>>) = outs.into_iter().unzip();
    let mut blocks: Vec<ObsLossBlock> = blocks.into_iter().flatten().collect();
    blocks.sort_by_key(|b| (order.iter().position(|n| n == &b.feature), b.iter_rsmp, b.iter_repeat));
    Ok(RefitResult {
        scores: ScoresTable::new(config.measure, records, &order),
        obs: decomposable.then_some(ObsLossTable { blocks }),
        direction: config.direction,
        resampling: config.resampling.clone(),
        warnings,
    })
}

/// Leave-one-covariate-out: leave-out WVIM over singleton groups.
pub fn loco(task: &Task, config: &RefitConfig) -> Result<RefitResult> {
    let mut cfg = config.clone();
    cfg.direction = RefitDirection::LeaveOut;
    cfg.groups = Some(task.feature_names().iter().map(|f| (f.clone(), vec![f.clone()])).collect());
    compute_wvim(task, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resampling::{ResamplingKind, ResamplingSpec};
    use crate::sim;

    fn holdout(task: &Task) -> ResamplingInstance {
        ResamplingSpec::new(ResamplingKind::holdout(), 7).instantiate(task).unwrap()
    }

    #[test]
    fn featureless_learner_gives_zero() {
        let task = sim::sim_correlated(100, 0.8, 1).unwrap();
        let res = loco(&task, &RefitConfig::new(LearnerSpec::featureless(), Measure::Mse, holdout(&task))).unwrap();
        assert!(res.scores.records.iter().all(|r| r.importance == 0.0));
    }

    #[test]
    fn loco_matches_singleton_wvim() {
        let task = sim::sim_correlated(120, 0.8, 2).unwrap();
        let cfg = RefitConfig::new(LearnerSpec::cart(), Measure::Mse, holdout(&task)).with_repeats(2).with_seed(5);
        let a = loco(&task, &cfg).unwrap();
        let b = compute_wvim(&task, &cfg).unwrap();
        assert_eq!(a.scores, b.scores);
    }

    #[test]
    fn leave_in_all_features_is_total_performance() {
        let task = sim::sim_correlated(200, 0.8, 3).unwrap();
        let ho = holdout(&task);
        let all: Vec<String> = task.feature_names().to_vec();
        let cfg = RefitConfig::new(LearnerSpec::linear(), Measure::Mse, ho.clone())
            .with_direction(RefitDirection::LeaveIn)
            .with_groups(vec![("all".into(), all)]);
        let res = compute_wvim(&task, &cfg).unwrap();
        let full = TrainedModel::fit(&LearnerSpec::linear(), &task, ho.train_ids(0)).unwrap();
        let fl = TrainedModel::fit(&LearnerSpec::featureless(), &task, ho.train_ids(0)).unwrap();
        let lf = Measure::Mse.evaluate(&full.predict(&task, ho.test_ids(0)).unwrap()).unwrap();
        let l0 = Measure::Mse.evaluate(&fl.predict(&task, ho.test_ids(0)).unwrap()).unwrap();
        let got = res.scores.importance_of("all").unwrap();
        assert!((got - (l0 - lf)).abs() < 1e-12, "{got} vs {}", l0 - lf);
        assert!(got > 0.0);
        let d = res.obs_loss_diffs().unwrap().blocks[0].diffs();
        assert!((crate::numeric::stable_mean(&d) - got).abs() < 1e-12);
    }

    #[test]
    fn removing_all_features_is_flagged() {
        let task = sim::sim_correlated(80, 0.8, 4).unwrap();
        let all: Vec<String> = task.feature_names().to_vec();
        let cfg = RefitConfig::new(LearnerSpec::linear(), Measure::Mse, holdout(&task)).with_groups(vec![("all".into(), all)]);
        let res = compute_wvim(&task, &cfg).unwrap();
        assert_eq!(res.warnings.len(), 1);
        assert!(res.scores.importance_of("all").unwrap() > 0.0);
    }

    #[test]
    fn prefit_model_is_rejected() {
        let task = sim::sim_correlated(60, 0.8, 5).unwrap();
        let ho = holdout(&task);
        let model = TrainedModel::fit(&LearnerSpec::linear(), &task, ho.train_ids(0)).unwrap();
        assert!(compute_wvim(&task, &RefitConfig::new(model, Measure::Mse, ho)).is_err());
    }
}

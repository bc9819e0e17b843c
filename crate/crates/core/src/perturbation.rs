//! Perturbation-based importance: PFI, CFI and RFI.
//!
//! Per resampling iteration the model is trained (or a pre-fit model is
//! reused), a sampler is fitted on the training rows, and for every feature
//! of interest (or group) and repeat the test-set columns are replaced by a
//! sampler draw. Importance is `sign · (loss_post − loss_baseline)`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::learners::{LearnerSpec, TrainedModel};
use crate::matrix::FeatureMatrix;
use crate::measure::Measure;
use crate::resampling::ResamplingInstance;
use crate::rng;
use crate::samplers::{Conditioning, SamplerKind, SamplerModel, KNOCKOFF_CFI_ONLY};
use crate::scores::{ObsLossBlock, ObsLossTable, ScoreRecord, ScoresTable};
use crate::task::Task;
use crate::ModelSource;

#[derive(Debug, Clone, PartialEq)]
pub enum PerturbationMethod {
    Pfi,
    Cfi,
    /// Conditioning set `G`; `G = ∅` reduces to PFI, `G = −j` to CFI.
    Rfi { conditioning_set: Vec<String> },
}

impl PerturbationMethod {
    pub fn id(&self) -> &'static str {
        match self {
            PerturbationMethod::Pfi => "pfi",
            PerturbationMethod::Cfi => "cfi",
            PerturbationMethod::Rfi { .. } => "rfi",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PerturbationConfig {
    pub method: PerturbationMethod,
    pub model: ModelSource,
    pub measure: Measure,
    pub resampling: ResamplingInstance,
    pub sampler: SamplerKind,
    pub n_repeats: usize,
    /// Features of interest; all features when `None`.
    pub features: Option<Vec<String>>,
    /// Named groups perturbed jointly; replaces `features` when set.
    pub groups: Option<Vec<(String, Vec<String>)>>,
    pub seed: u64,
}

impl PerturbationConfig {
    pub fn new(
        method: PerturbationMethod,
        model: impl Into<ModelSource>,
        measure: Measure,
        resampling: ResamplingInstance,
        sampler: SamplerKind,
    ) -> Self {
        Self {
            method,
            model: model.into(),
            measure,
            resampling,
            sampler,
            n_repeats: 5,
            features: None,
            groups: None,
            seed: 0,
        }
    }

    pub fn pfi(model: impl Into<ModelSource>, measure: Measure, resampling: ResamplingInstance) -> Self {
        Self::new(PerturbationMethod::Pfi, model, measure, resampling, SamplerKind::MarginalPermutation)
    }

    pub fn cfi(
        model: impl Into<ModelSource>,
        measure: Measure,
        resampling: ResamplingInstance,
        sampler: SamplerKind,
    ) -> Self {
        Self::new(PerturbationMethod::Cfi, model, measure, resampling, sampler)
    }

    pub fn rfi(
        model: impl Into<ModelSource>,
        measure: Measure,
        resampling: ResamplingInstance,
        sampler: SamplerKind,
        conditioning_set: Vec<String>,
    ) -> Self {
        Self::new(PerturbationMethod::Rfi { conditioning_set }, model, measure, resampling, sampler)
    }

    pub fn with_repeats(mut self, n_repeats: usize) -> Self {
        self.n_repeats = n_repeats;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_features(mut self, features: Vec<String>) -> Self {
        self.features = Some(features);
        self
    }

    pub fn with_groups(mut self, groups: Vec<(String, Vec<String>)>) -> Self {
        self.groups = Some(groups);
        self
    }
}

#[derive(Debug, Clone)]
pub struct PerturbationResult {
    pub scores: ScoresTable,
    /// Observation-wise losses; `None` for non-decomposable measures.
    pub obs: Option<ObsLossTable>,
    pub sampler: SamplerKind,
    pub resampling: ResamplingInstance,
    pub warnings: Vec<String>,
}

impl PerturbationResult {
    pub fn importance(&self) -> Vec<(String, f64)> {
        self.scores.importance()
    }

    pub fn obs_loss_diffs(&self) -> Result<&ObsLossTable> {
        self.obs
            .as_ref()
            .ok_or_else(|| Error::NotDecomposable(self.scores.measure.id().to_string()))
    }
}

/// Unit of perturbation: a single feature or a named group.
#[derive(Debug, Clone)]
pub(crate) struct Unit {
    pub name: String,
    pub members: Vec<usize>,
    pub key: u64,
}

pub(crate) fn build_units(
    task: &Task,
    features: Option<&[String]>,
    groups: Option<&[(String, Vec<String>)]>,
    default: impl Fn(usize) -> bool,
) -> Result<Vec<Unit>> {
    let make = |name: String, names: &[String]| -> Result<Unit> {
        if names.is_empty() {
            return Err(Error::param(format!("group '{name}' is empty")));
        }
        let mut members = task.feature_indices(names)?;
        members.sort_unstable();
        members.dedup();
        Ok(Unit { name, members, key: rng::name_set(names) })
    };
    let units: Vec<Unit> = match (groups, features) {
        (Some(_), Some(_)) => return Err(Error::param("give either features or groups, not both")),
        (Some(groups), None) => groups.iter().map(|(n, m)| make(n.clone(), m)).collect::<Result<_>>()?,
        (None, Some(fs)) => fs.iter().map(|f| make(f.clone(), std::slice::from_ref(f))).collect::<Result<_>>()?,
        (None, None) => task
            .feature_names()
            .iter()
            .enumerate()
            .filter(|(j, _)| default(*j))
            .map(|(_, f)| make(f.clone(), std::slice::from_ref(f)))
            .collect::<Result<_>>()?,
    };
    if units.is_empty() {
        return Err(Error::param("no features of interest"));
    }
    for (i, u) in units.iter().enumerate() {
        if units[..i].iter().any(|v| v.name == u.name) {
            return Err(Error::param(format!("duplicate feature or group name '{}'", u.name)));
        }
    }
    Ok(units)
}

/// Model for one resampling iteration: refit from the learner, or the
/// pre-fit model when one was supplied.
pub(crate) fn iteration_model(
    source: &ModelSource,
    task: &Task,
    train_ids: &[usize],
    seed: u64,
    k: usize,
) -> Result<Arc<TrainedModel>> {
    match source {
        ModelSource::Fitted(m) => Ok(Arc::clone(m)),
        ModelSource::Learner(spec) => {
            let spec: LearnerSpec = spec.clone().with_seed(rng::mix(seed, &[rng::tag("learner"), k as u64]));
            Ok(Arc::new(TrainedModel::fit(&spec, task, train_ids)?))
        }
    }
}

/// Checks the pre-fit model contract: one test set and a matching schema.
pub(crate) fn check_model_source(source: &ModelSource, task: &Task, resampling: &ResamplingInstance) -> Result<()> {
    if let ModelSource::Fitted(m) = source {
        if resampling.iterations() != 1 {
            return Err(Error::param(
                "a pre-fit model requires a resampling with exactly one test set (holdout)",
            ));
        }
        m.column_map(task.feature_names())?;
        let extra: Vec<&String> = task.feature_names().iter().filter(|f| !m.feature_names().contains(f)).collect();
        if !extra.is_empty() {
            return Err(Error::param(format!(
                "task features not used by the pre-fit model: {}",
                extra.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            )));
        }
    }
    Ok(())
}

pub fn compute_perturbation(task: &Task, config: &PerturbationConfig) -> Result<PerturbationResult> {
    if config.n_repeats < 1 {
        return Err(Error::param("n_repeats must be >= 1"));
    }
    check_model_source(&config.model, task, &config.resampling)?;

    let g_idx: Option<Vec<usize>> = match &config.method {
        PerturbationMethod::Pfi => {
            if config.sampler != SamplerKind::MarginalPermutation {
                return Err(Error::IncompatibleSampler("PFI uses the marginal_permutation sampler".into()));
            }
            Some(Vec::new())
        }
        PerturbationMethod::Cfi => {
            if !config.sampler.is_conditional() {
                return Err(Error::IncompatibleSampler("CFI requires a conditional sampler".into()));
            }
            None
        }
        PerturbationMethod::Rfi { conditioning_set } => {
            let mut g = task.feature_indices(conditioning_set)?;
            g.sort_unstable();
            g.dedup();
            if !g.is_empty() {
                match config.sampler {
                    SamplerKind::KnockoffGaussian => {
                        return Err(Error::IncompatibleSampler(KNOCKOFF_CFI_ONLY.into()))
                    }
                    SamplerKind::MarginalPermutation => {
                        return Err(Error::IncompatibleSampler(
                            "marginal_permutation cannot condition on other features".into(),
                        ))
                    }
                    _ => {}
                }
            }
            Some(g)
        }
    };
    let units = build_units(task, config.features.as_deref(), config.groups.as_deref(), |j| {
        g_idx.as_ref().is_none_or(|g| !g.contains(&j))
    })?;
    if let Some(g) = &g_idx {
        for u in &units {
            if u.members.iter().any(|j| g.contains(j)) {
                return Err(Error::param(format!(
                    "'{}' overlaps the conditioning set",
                    u.name
                )));
            }
        }
    }

    let sign = config.measure.direction().sign();
    let decomposable = config.measure.decomposable();
    let knockoff = config.sampler == SamplerKind::KnockoffGaussian;
    let all_cols: Vec<usize> = (0..task.n_features()).collect();
    let n_iter = config.resampling.iterations();

    type IterOut = (Vec<ScoreRecord>, Vec<ObsLossBlock>, Vec<String>);
    let per_iter: Vec<Result<IterOut>> = (0..n_iter)
        .into_par_iter()
        .map(|k| -> Result<IterOut> {
            let train_ids = config.resampling.train_ids(k);
            let test_ids = config.resampling.test_ids(k);
            let model = iteration_model(&config.model, task, train_ids, config.seed, k)?;
            let map = model.column_map(task.feature_names())?;
            let sampler = SamplerModel::fit(config.sampler, task, train_ids)?;
            let cond = match &g_idx {
                None => Conditioning::AllOthers,
                Some(g) => Conditioning::Set(g),
            };
            for u in &units {
                sampler.resolve_conditioning(&u.members, cond)?;
            }
            let mut warnings: Vec<String> =
                sampler.notes().iter().map(|n| format!("iteration {}: sampler: {n}", k + 1)).collect();
            if model.is_degenerate() {
                warnings.push(format!("iteration {}: rank-deficient design, ridge fallback used", k + 1));
            }

            let test_pos = task.positions(test_ids)?;
            let x_test = task.matrix(&test_pos, &all_cols);
            let y_test = task.targets_at(&test_pos);
            let base_pred = model.predict_mapped(&x_test, &map);
            let loss_baseline = config.measure.score(&y_test, &base_pred)?;
            let row_ids: Arc<[usize]> = Arc::from(test_ids.to_vec());
            let base_obs: Option<Arc<[f64]>> = if decomposable {
                Some(Arc::from(config.measure.pointwise(&y_test, &base_pred)?))
            } else {
                None
            };

            let knockoffs: Vec<FeatureMatrix> = if knockoff {
                (0..config.n_repeats)
                    .into_par_iter()
                    .map(|r| {
                        let mut rng = rng::substream(
                            config.seed,
                            &[rng::tag("perturb"), k as u64, rng::tag("knockoff"), r as u64],
                        );
                        sampler.knockoff_matrix(&x_test, &mut rng)
                    })
                    .collect::<Result<_>>()?
            } else {
                Vec::new()
            };

            let jobs: Vec<(usize, usize)> =
                (0..units.len()).flat_map(|u| (0..config.n_repeats).map(move |r| (u, r))).collect();
            let outs: Vec<Result<(ScoreRecord, Option<ObsLossBlock>)>> = jobs
                .par_iter()
                .map(|&(ui, r)| {
                    let unit = &units[ui];
                    let mut x = x_test.clone();
                    if knockoff {
                        for &j in &unit.members {
                            x.set_column(j, &knockoffs[r].column(j));
                        }
                    } else {
                        let mut rng =
                            rng::substream(config.seed, &[rng::tag("perturb"), k as u64, unit.key, r as u64]);
                        let draws = sampler.sample_matrix(&x_test, &unit.members, cond, &mut rng)?;
                        for (&j, col) in unit.members.iter().zip(&draws) {
                            x.set_column(j, col);
                        }
                    }
                    let pred = model.predict_mapped(&x, &map);
                    let loss_post = config.measure.score(&y_test, &pred)?;
                    let record = ScoreRecord {
                        feature: unit.name.clone(),
                        iter_rsmp: k + 1,
                        iter_repeat: r + 1,
                        loss_baseline,
                        loss_post,
                        importance: sign * (loss_post - loss_baseline),
                    };
                    let block = match &base_obs {
                        Some(b) => Some(ObsLossBlock {
                            feature: unit.name.clone(),
                            iter_rsmp: k + 1,
                            iter_repeat: r + 1,
                            row_ids: Arc::clone(&row_ids),
                            loss_baseline: Arc::clone(b),
                            loss_post: config.measure.pointwise(&y_test, &pred)?,
                            sign,
                        }),
                        None => None,
                    };
                    Ok((record, block))
                })
                .collect();
            let mut records = Vec::with_capacity(outs.len());
            let mut blocks = Vec::new();
            for o in outs {
                let (rec, block) = o?;
                records.push(rec);
                blocks.extend(block);
            }
            Ok((records, blocks, warnings))
        })
        .collect();

    let mut records = Vec::new();
    let mut blocks = Vec::new();
    let mut warnings = Vec::new();
    for it in per_iter {
        let (r, b, w) = it?;
        records.extend(r);
        blocks.extend(b);
        warnings.extend(w);
    }
    let order: Vec<String> = units.iter().map(|u| u.name.clone()).collect();
    blocks.sort_by(|a, b| {
        let pa = order.iter().position(|n| n == &a.feature);
        let pb = order.iter().position(|n| n == &b.feature);
        pa.cmp(&pb).then(a.iter_rsmp.cmp(&b.iter_rsmp)).then(a.iter_repeat.cmp(&b.iter_repeat))
    });
    Ok(PerturbationResult {
        scores: ScoresTable::new(config.measure, records, &order),
        obs: decomposable.then_some(ObsLossTable { blocks }),
        sampler: config.sampler,
        resampling: config.resampling.clone(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resampling::{ResamplingKind, ResamplingSpec};
    use crate::sim;

    fn holdout(task: &Task, seed: u64) -> ResamplingInstance {
        ResamplingSpec::new(ResamplingKind::holdout(), seed).instantiate(task).unwrap()
    }

    #[test]
    fn featureless_model_has_zero_importance() {
        let task = sim::sim_correlated(200, 0.5, 1).unwrap();
        let cfg = PerturbationConfig::pfi(LearnerSpec::featureless(), Measure::Mse, holdout(&task, 1)).with_repeats(3);
        let res = compute_perturbation(&task, &cfg).unwrap();
        assert!(res.scores.records.iter().all(|r| r.importance == 0.0));
        assert_eq!(res.scores.records.len(), 4 * 3);
    }

    #[test]
    fn obs_diffs_average_to_record() {
        let task = sim::sim_correlated(150, 0.8, 2).unwrap();
        let cfg = PerturbationConfig::pfi(LearnerSpec::linear(), Measure::Mse, holdout(&task, 2)).with_repeats(2);
        let res = compute_perturbation(&task, &cfg).unwrap();
        let obs = res.obs_loss_diffs().unwrap();
        for (block, rec) in obs.blocks.iter().zip(&res.scores.records) {
            assert_eq!((block.feature.as_str(), block.iter_repeat), (rec.feature.as_str(), rec.iter_repeat));
            let d = block.diffs();
            let mean = crate::numeric::stable_mean(&d);
            assert!((mean - rec.importance).abs() <= 1e-12 * rec.importance.abs().max(1.0));
        }
    }

    #[test]
    fn rsq_has_no_obs_losses_and_positive_sign() {
        let task = sim::sim_correlated(200, 0.8, 3).unwrap();
        let cfg = PerturbationConfig::pfi(LearnerSpec::linear(), Measure::Rsq, holdout(&task, 3)).with_repeats(2);
        let res = compute_perturbation(&task, &cfg).unwrap();
        assert!(res.obs_loss_diffs().is_err());
        let x1 = res.scores.importance_of("x1").unwrap();
        assert!(x1 > 0.5, "R² should drop when x1 is permuted, got {x1}");
    }

    #[test]
    fn singleton_group_equals_feature() {
        let task = sim::sim_correlated(120, 0.8, 4).unwrap();
        let base = PerturbationConfig::cfi(LearnerSpec::linear(), Measure::Mse, holdout(&task, 4), SamplerKind::ConditionalGaussian)
            .with_repeats(3)
            .with_seed(9);
        let by_feature = compute_perturbation(&task, &base.clone().with_features(vec!["x2".into()])).unwrap();
        let by_group =
            compute_perturbation(&task, &base.with_groups(vec![("x2".into(), vec!["x2".into()])])).unwrap();
        assert_eq!(by_feature.scores, by_group.scores);
    }

    #[test]
    fn incompatible_settings_are_rejected() {
        let task = sim::sim_correlated(60, 0.8, 5).unwrap();
        let r = holdout(&task, 5);
        let cfi_perm = PerturbationConfig::cfi(LearnerSpec::linear(), Measure::Mse, r.clone(), SamplerKind::MarginalPermutation);
        assert!(compute_perturbation(&task, &cfi_perm).is_err());
        let rfi_ko = PerturbationConfig::rfi(LearnerSpec::linear(), Measure::Mse, r.clone(), SamplerKind::KnockoffGaussian, vec!["x2".into()]);
        assert_eq!(compute_perturbation(&task, &rfi_ko).unwrap_err().to_string(), KNOCKOFF_CFI_ONLY);
        let overlap = PerturbationConfig::rfi(LearnerSpec::linear(), Measure::Mse, r.clone(), SamplerKind::ConditionalGaussian, vec!["x2".into()])
            .with_features(vec!["x2".into()]);
        assert!(compute_perturbation(&task, &overlap).is_err());
        let zero = PerturbationConfig::pfi(LearnerSpec::linear(), Measure::Mse, r).with_repeats(0);
        assert!(compute_perturbation(&task, &zero).is_err());
    }

    #[test]
    fn prefit_model_requires_single_test_set() {
        let task = sim::sim_correlated(90, 0.8, 6).unwrap();
        let cv = ResamplingSpec::new(ResamplingKind::Cv { folds: 3 }, 0).instantiate(&task).unwrap();
        let model = TrainedModel::fit(&LearnerSpec::linear(), &task, cv.train_ids(0)).unwrap();
        let cfg = PerturbationConfig::pfi(model.clone(), Measure::Mse, cv);
        assert!(compute_perturbation(&task, &cfg).is_err());
        let ho = holdout(&task, 6);
        let model = TrainedModel::fit(&LearnerSpec::linear(), &task, ho.train_ids(0)).unwrap();
        let prefit = compute_perturbation(&task, &PerturbationConfig::pfi(model, Measure::Mse, ho.clone()).with_seed(3)).unwrap();
        let learner = compute_perturbation(&task, &PerturbationConfig::pfi(LearnerSpec::linear(), Measure::Mse, ho).with_seed(3)).unwrap();
        // linear fits are deterministic, so model and learner importance coincide on one holdout
        assert_eq!(prefit.scores, learner.scores);
    }
}

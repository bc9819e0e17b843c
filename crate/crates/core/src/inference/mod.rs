//! Confidence intervals and hypothesis tests for importance scores.

mod dist;
mod padjust;
mod wilcoxon;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{sample_variance, stable_mean};
use crate::resampling::ResamplingInstance;
use crate::samplers::SamplerKind;
use crate::scores::{ObsLossTable, ScoresTable};

pub use dist::{inc_beta, normal_cdf, normal_quantile, t_cdf, t_quantile, t_sf};
pub use padjust::{p_adjust, PAdjust};
pub use wilcoxon::{signed_rank_test, PMethod, SignedRank, EXACT_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    #[default]
    None,
    Quantile,
    Raw,
    NadeauBengio,
    Cpi,
    Lei,
}

impl CiMethod {
    pub fn id(self) -> &'static str {
        match self {
            CiMethod::None => "none",
            CiMethod::Quantile => "quantile",
            CiMethod::Raw => "raw",
            CiMethod::NadeauBengio => "nadeau_bengio",
            CiMethod::Cpi => "cpi",
            CiMethod::Lei => "lei",
        }
    }
}

impl std::str::FromStr for CiMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "none" => Ok(CiMethod::None),
            "quantile" => Ok(CiMethod::Quantile),
            "raw" => Ok(CiMethod::Raw),
            "nadeau_bengio" | "nb" => Ok(CiMethod::NadeauBengio),
            "cpi" => Ok(CiMethod::Cpi),
            "lei" => Ok(CiMethod::Lei),
            _ => Err(Error::param(format!("unknown ci method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alternative {
    #[serde(rename = "two.sided")]
    TwoSided,
    #[serde(rename = "greater")]
    Greater,
    #[serde(rename = "less")]
    Less,
}

impl Alternative {
    pub fn id(self) -> &'static str {
        match self {
            Alternative::TwoSided => "two.sided",
            Alternative::Greater => "greater",
            Alternative::Less => "less",
        }
    }
}

impl std::str::FromStr for Alternative {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', '-'], ".").as_str() {
            "two.sided" | "two" => Ok(Alternative::TwoSided),
            "greater" => Ok(Alternative::Greater),
            "less" => Ok(Alternative::Less),
            _ => Err(Error::param(format!("unknown alternative '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    #[default]
    T,
    Wilcox,
}

impl std::str::FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t" => Ok(TestKind::T),
            "wilcox" | "wilcoxon" => Ok(TestKind::Wilcox),
            _ => Err(Error::param(format!("unknown test '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceOptions {
    pub alpha: f64,
    pub alternative: Alternative,
    pub test: TestKind,
    pub p_adjust: PAdjust,
    /// Quantile CIs only: pool all records instead of averaging repeats
    /// within each iteration first.
    pub pool_repeats: bool,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            alternative: Alternative::TwoSided,
            test: TestKind::T,
            p_adjust: PAdjust::None,
            pool_repeats: false,
        }
    }
}

impl InferenceOptions {
    pub fn with_alternative(mut self, alternative: Alternative) -> Self {
        self.alternative = alternative;
        self
    }

    pub fn with_test(mut self, test: TestKind) -> Self {
        self.test = test;
        self
    }

    pub fn with_p_adjust(mut self, p_adjust: PAdjust) -> Self {
        self.p_adjust = p_adjust;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    /// Per-interval level; Bonferroni also widens the intervals.
    fn interval_alpha(&self, m: usize) -> f64 {
        if self.p_adjust == PAdjust::Bonferroni && m > 0 {
            self.alpha / m as f64
        } else {
            self.alpha
        }
    }
}

/// Per-feature inference row. Absent quantities are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRow {
    pub feature: String,
    pub importance: f64,
    pub se: Option<f64>,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub conf_lower: Option<f64>,
    pub conf_upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceMetadata {
    pub method: CiMethod,
    pub alternative: Alternative,
    pub alpha: f64,
    pub p_adjust: PAdjust,
    pub test: Option<TestKind>,
    /// Resampling iterations used.
    pub k: usize,
    pub n_train: Option<f64>,
    pub n_test: Option<f64>,
    pub df: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub rows: Vec<InferenceRow>,
    pub metadata: InferenceMetadata,
}

impl InferenceResult {
    pub fn row(&self, feature: &str) -> Option<&InferenceRow> {
        self.rows.iter().find(|r| r.feature == feature)
    }
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn metadata(method: CiMethod, opts: &InferenceOptions, k: usize) -> InferenceMetadata {
    InferenceMetadata {
        method,
        alternative: opts.alternative,
        alpha: opts.alpha,
        p_adjust: opts.p_adjust,
        test: None,
        k,
        n_train: None,
        n_test: None,
        df: None,
        warnings: Vec::new(),
    }
}

fn adjust_rows(rows: &mut [InferenceRow], method: PAdjust) -> Result<()> {
    let raw: Vec<f64> = rows.iter().map(|r| r.p_value.unwrap_or(f64::NAN)).collect();
    let adj = p_adjust(&raw, method)?;
    for (r, p) in rows.iter_mut().zip(adj) {
        if r.p_value.is_some() {
            r.p_value = Some(p);
        }
    }
    Ok(())
}

/// t-based bounds around `est` for the given alternative.
fn t_bounds(est: f64, se: f64, df: f64, alpha: f64, alt: Alternative) -> (f64, f64) {
    match alt {
        Alternative::TwoSided => {
            let q = t_quantile(1.0 - alpha / 2.0, df);
            (est - q * se, est + q * se)
        }
        Alternative::Greater => (est - t_quantile(1.0 - alpha, df) * se, f64::INFINITY),
        Alternative::Less => (f64::NEG_INFINITY, est + t_quantile(1.0 - alpha, df) * se),
    }
}

fn t_p_value(stat: f64, df: f64, alt: Alternative) -> f64 {
    match alt {
        Alternative::TwoSided => (2.0 * t_sf(stat.abs(), df)).min(1.0),
        Alternative::Greater => t_sf(stat, df),
        Alternative::Less => t_cdf(stat, df),
    }
}

fn require_iterations(scores: &ScoresTable, what: &str) -> Result<usize> {
    let k = scores.n_iterations();
    if k < 2 {
        return Err(Error::Inference(format!("{what} require multiple resampling iterations")));
    }
    Ok(k)
}

/// Empirical-quantile interval over per-iteration mean importances.
pub fn ci_quantile(scores: &ScoresTable, opts: &InferenceOptions) -> Result<InferenceResult> {
    opts.validate()?;
    let k = require_iterations(scores, "quantiles")?;
    let features = scores.features();
    let alpha = opts.interval_alpha(features.len());
    let mut meta = metadata(CiMethod::Quantile, opts, k);
    meta.warnings.push(format!(
        "quantile rule: type 7 (linear interpolation) over {}",
        if opts.pool_repeats { "all records" } else { "per-iteration means" }
    ));
    let rows = features
        .into_iter()
        .map(|f| {
            let mut v = if opts.pool_repeats { scores.values_of(&f) } else { scores.iteration_means(&f) };
            v.sort_by(f64::total_cmp);
            let (lo, hi) = match opts.alternative {
                Alternative::TwoSided => (quantile_type7(&v, alpha / 2.0), quantile_type7(&v, 1.0 - alpha / 2.0)),
                Alternative::Greater => (quantile_type7(&v, alpha), f64::INFINITY),
                Alternative::Less => (f64::NEG_INFINITY, quantile_type7(&v, 1.0 - alpha)),
            };
            InferenceRow {
                importance: scores.importance_of(&f).unwrap_or(f64::NAN),
                feature: f,
                se: None,
                statistic: None,
                p_value: None,
                conf_lower: Some(lo),
                conf_upper: Some(hi),
            }
        })
        .collect();
    Ok(InferenceResult { rows, metadata: meta })
}

fn t_interval(
    scores: &ScoresTable,
    opts: &InferenceOptions,
    inflation: f64,
    mut meta: InferenceMetadata,
) -> Result<InferenceResult> {
    let features = scores.features();
    let alpha = opts.interval_alpha(features.len());
    let k = meta.k;
    let df = (k - 1) as f64;
    meta.df = Some(df);
    let mut undefined = Vec::new();
    let mut rows: Vec<InferenceRow> = features
        .into_iter()
        .map(|f| {
            let v = scores.iteration_means(&f);
            let mean = stable_mean(&v);
            let s2 = sample_variance(&v);
            let se = (s2 * inflation).sqrt();
            let (stat, p, lo, hi) = if se > 0.0 {
                let stat = mean / se;
                let (lo, hi) = t_bounds(mean, se, df, alpha, opts.alternative);
                (stat, t_p_value(stat, df, opts.alternative), lo, hi)
            } else {
                undefined.push(f.clone());
                let (lo, hi) = match opts.alternative {
                    Alternative::TwoSided => (mean, mean),
                    Alternative::Greater => (mean, f64::INFINITY),
                    Alternative::Less => (f64::NEG_INFINITY, mean),
                };
                (f64::NAN, f64::NAN, lo, hi)
            };
            InferenceRow {
                feature: f,
                importance: mean,
                se: Some(se),
                statistic: Some(stat),
                p_value: Some(p),
                conf_lower: Some(lo),
                conf_upper: Some(hi),
            }
        })
        .collect();
    if !undefined.is_empty() {
        meta.warnings.push(format!(
            "zero variance across iterations for {}; p-value undefined",
            undefined.join(", ")
        ));
    }
    adjust_rows(&mut rows, opts.p_adjust)?;
    Ok(InferenceResult { rows, metadata: meta })
}

/// Uncorrected t-interval across iterations; not valid for inference on
/// overlapping resampling splits.
pub fn ci_raw(scores: &ScoresTable, opts: &InferenceOptions) -> Result<InferenceResult> {
    opts.validate()?;
    let k = require_iterations(scores, "raw intervals")?;
    let mut meta = metadata(CiMethod::Raw, opts, k);
    meta.warnings.push("raw intervals ignore the dependence between resampling iterations and are not valid for inference".into());
    t_interval(scores, opts, 1.0 / k as f64, meta)
}

/// Corrected resampled t-interval with variance factor `1/K + n_test/n_train`.
pub fn ci_nadeau_bengio(
    scores: &ScoresTable,
    resampling: &ResamplingInstance,
    opts: &InferenceOptions,
) -> Result<InferenceResult> {
    opts.validate()?;
    if !resampling.kind().is_some_and(|k| k.supports_corrected_t()) {
        return Err(Error::Inference("correction requires subsampling or bootstrap".into()));
    }
    let k = require_iterations(scores, "corrected intervals")?;
    let ratio = resampling.test_train_ratio();
    let iters = resampling.iterations() as f64;
    let mut meta = metadata(CiMethod::NadeauBengio, opts, k);
    meta.n_train = Some((0..resampling.iterations()).map(|i| resampling.n_train(i)).sum::<usize>() as f64 / iters);
    meta.n_test = Some((0..resampling.iterations()).map(|i| resampling.n_test(i)).sum::<usize>() as f64 / iters);
    if k < 10 {
        meta.warnings.push(format!(
            "only {k} resampling iterations; at least 10 bootstrap or subsampling iterations are recommended"
        ));
    }
    t_interval(scores, opts, 1.0 / k as f64 + ratio, meta)
}

fn obs_test(
    scores: &ScoresTable,
    obs: &ObsLossTable,
    opts: &InferenceOptions,
    mut meta: InferenceMetadata,
) -> Result<InferenceResult> {
    let features = scores.features();
    let alpha = opts.interval_alpha(features.len());
    meta.test = Some(opts.test);
    let mut repeated = false;
    let mut rows = Vec::with_capacity(features.len());
    for f in features {
        let (d, rep) = obs.pooled_diffs(&f);
        if d.is_empty() {
            return Err(Error::Inference(format!("no observation-wise differences for '{f}'")));
        }
        repeated |= rep;
        let importance = scores.importance_of(&f).unwrap_or(f64::NAN);
        let m = d.len();
        let row = match opts.test {
            TestKind::T => {
                if m < 2 {
                    return Err(Error::Inference("t-test needs at least 2 observations".into()));
                }
                let mean = stable_mean(&d);
                let se = (sample_variance(&d) / m as f64).sqrt();
                let df = (m - 1) as f64;
                meta.df = Some(df);
                let stat = if se > 0.0 {
                    mean / se
                } else if mean == 0.0 {
                    0.0
                } else {
                    mean.signum() * f64::INFINITY
                };
                let p = if se > 0.0 {
                    t_p_value(stat, df, opts.alternative)
                } else {
                    // constant differences: the test statistic is 0 or ±∞
                    let toward = match opts.alternative {
                        Alternative::Greater => stat > 0.0,
                        Alternative::Less => stat < 0.0,
                        Alternative::TwoSided => stat != 0.0,
                    };
                    if toward {
                        0.0
                    } else if stat == 0.0 && opts.alternative != Alternative::TwoSided {
                        0.5
                    } else {
                        1.0
                    }
                };
                let (lo, hi) = t_bounds(mean, se, df, alpha, opts.alternative);
                InferenceRow {
                    feature: f,
                    importance,
                    se: Some(se),
                    statistic: Some(stat),
                    p_value: Some(p),
                    conf_lower: Some(lo),
                    conf_upper: Some(hi),
                }
            }
            TestKind::Wilcox => {
                let r = signed_rank_test(&d, opts.alternative, alpha, PMethod::Auto);
                InferenceRow {
                    feature: f,
                    importance,
                    se: None,
                    statistic: Some(r.v),
                    p_value: Some(r.p_value),
                    conf_lower: Some(r.conf_lower),
                    conf_upper: Some(r.conf_upper),
                }
            }
        };
        rows.push(row);
    }
    if repeated {
        meta.warnings.push(
            "observations appear in several test sets; repeated observations are pooled as distinct records".into(),
        );
    }
    adjust_rows(&mut rows, opts.p_adjust)?;
    Ok(InferenceResult { rows, metadata: meta })
}

/// Conditional predictive impact test on knockoff-based observation-wise
/// loss differences.
pub fn cpi_test(
    scores: &ScoresTable,
    obs: Option<&ObsLossTable>,
    sampler: SamplerKind,
    opts: &InferenceOptions,
) -> Result<InferenceResult> {
    opts.validate()?;
    if sampler != SamplerKind::KnockoffGaussian {
        return Err(Error::Inference(format!("CPI requires knockoff_gaussian sampling, got {sampler}")));
    }
    let obs = obs.ok_or_else(|| Error::NotDecomposable(scores.measure.id().to_string()))?;
    let meta = metadata(CiMethod::Cpi, opts, scores.n_iterations());
    obs_test(scores, obs, opts, meta)
}

/// Observation-level test on refit loss differences. The interval refers
/// to the observation-wise differences (Hodges–Lehmann for the Wilcoxon
/// test), while the reported importance stays the aggregate mean.
pub fn lei_test(scores: &ScoresTable, obs: Option<&ObsLossTable>, opts: &InferenceOptions) -> Result<InferenceResult> {
    opts.validate()?;
    let obs = obs.ok_or_else(|| Error::NotDecomposable(scores.measure.id().to_string()))?;
    let meta = metadata(CiMethod::Lei, opts, scores.n_iterations());
    obs_test(scores, obs, opts, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Measure;
    use crate::resampling::{ResamplingKind, ResamplingSpec};
    use crate::scores::ScoreRecord;
    use crate::task::Task;

    fn table(means: &[f64]) -> ScoresTable {
        let records = means
            .iter()
            .enumerate()
            .map(|(k, &v)| ScoreRecord {
                feature: "a".into(),
                iter_rsmp: k + 1,
                iter_repeat: 1,
                loss_baseline: 0.0,
                loss_post: v,
                importance: v,
            })
            .collect();
        ScoresTable::new(Measure::Mse, records, &["a".to_string()])
    }

    fn subsampling(k: usize) -> ResamplingInstance {
        let task = Task::new("t", vec![("x".into(), (0..100).map(f64::from).collect())], ("y".into(), vec![0.0; 100])).unwrap();
        ResamplingSpec::new(ResamplingKind::Subsampling { repeats: k, ratio: 0.9 }, 1).instantiate(&task).unwrap()
    }

    #[test]
    fn quantile_interval_type7() {
        let res = ci_quantile(&table(&[1.0, 2.0, 3.0, 4.0, 5.0]), &InferenceOptions::default().with_alpha(0.2)).unwrap();
        let r = &res.rows[0];
        assert!((r.conf_lower.unwrap() - 1.4).abs() < 1e-12);
        assert!((r.conf_upper.unwrap() - 4.6).abs() < 1e-12);
        let g = ci_quantile(&table(&[1.0, 2.0]), &InferenceOptions::default().with_alternative(Alternative::Greater)).unwrap();
        assert_eq!(g.rows[0].conf_upper, Some(f64::INFINITY));
        assert!(ci_quantile(&table(&[1.0]), &InferenceOptions::default())
            .unwrap_err()
            .to_string()
            .contains("quantiles require multiple resampling iterations"));
    }

    #[test]
    fn raw_interval_two_points() {
        let res = ci_raw(&table(&[0.0, 2.0]), &InferenceOptions::default()).unwrap();
        let r = &res.rows[0];
        assert_eq!(r.importance, 1.0);
        assert!((r.se.unwrap() - 1.0).abs() < 1e-15);
        assert!((r.conf_upper.unwrap() - (1.0 + 12.706)).abs() < 1e-3);
    }

    #[test]
    fn nadeau_bengio_inflation() {
        let rs = subsampling(15);
        let scores = table(&(0..15).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>());
        let raw = ci_raw(&scores, &InferenceOptions::default()).unwrap();
        let nb = ci_nadeau_bengio(&scores, &rs, &InferenceOptions::default()).unwrap();
        let w = |r: &InferenceResult| r.rows[0].conf_upper.unwrap() - r.rows[0].conf_lower.unwrap();
        let want = (1.0 + 15.0 * rs.test_train_ratio()).sqrt();
        assert!((w(&nb) / w(&raw) - want).abs() < 1e-12);
        assert!(nb.metadata.warnings.is_empty());
        let short = ci_nadeau_bengio(&table(&[1.0, 2.0, 3.0]), &subsampling(3), &InferenceOptions::default()).unwrap();
        assert_eq!(short.metadata.warnings.len(), 1);
    }

    #[test]
    fn nadeau_bengio_rejects_cv_and_flags_zero_variance() {
        let task = Task::new("t", vec![("x".into(), (0..30).map(f64::from).collect())], ("y".into(), vec![0.0; 30])).unwrap();
        let cv = ResamplingSpec::new(ResamplingKind::Cv { folds: 3 }, 1).instantiate(&task).unwrap();
        let err = ci_nadeau_bengio(&table(&[1.0, 2.0, 3.0]), &cv, &InferenceOptions::default()).unwrap_err();
        assert!(err.to_string().contains("correction requires subsampling or bootstrap"));
        let flat = ci_nadeau_bengio(&table(&[2.0; 15]), &subsampling(15), &InferenceOptions::default()).unwrap();
        let r = &flat.rows[0];
        assert!(r.p_value.unwrap().is_nan());
        assert_eq!((r.conf_lower, r.conf_upper), (Some(2.0), Some(2.0)));
        assert!(!flat.metadata.warnings.is_empty());
    }

    #[test]
    fn cpi_rejects_non_knockoff() {
        let err = cpi_test(&table(&[1.0]), Some(&ObsLossTable::default()), SamplerKind::ConditionalGaussian, &InferenceOptions::default());
        assert!(err.is_err());
    }
}

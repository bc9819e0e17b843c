//! Executes a [`RunConfig`] and assembles the [`ResultDocument`].

use std::path::Path;
use std::time::Instant;

use fi_core::inference::{self, CiMethod, InferenceOptions, InferenceResult};
use fi_core::perturbation::{compute_perturbation, PerturbationConfig};
use fi_core::refit::{compute_wvim, loco, RefitConfig};
use fi_core::sage::{sage_permutation_estimator, SageConfig, SageVariant};
use fi_core::scores::ObsLossTable;
use fi_core::{ResamplingInstance, ResamplingSpec, ScoresTable, Task};
use serde::{Deserialize, Serialize};

use crate::config::{Method, RunConfig};
use crate::error::{CliError, CliResult, ConfigContext};
use crate::num::Num;

pub const ENGINE_NAME: &str = "fi-engine";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineInfo {
    pub name: String,
    pub version: String,
}

impl Default for EngineInfo {
    fn default() -> Self {
        Self { name: ENGINE_NAME.into(), version: env!("CARGO_PKG_VERSION").into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInfo {
    pub name: String,
    pub n_rows: usize,
    pub target: String,
    pub features: Vec<String>,
}

/// One line of the per-feature table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub feature: String,
    pub importance: Num,
    pub se: Option<Num>,
    pub statistic: Option<Num>,
    pub p_value: Option<Num>,
    pub conf_lower: Option<Num>,
    pub conf_upper: Option<Num>,
    /// 1 = most important.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub feature: String,
    pub iter_rsmp: usize,
    pub iter_repeat: usize,
    pub loss_baseline: Num,
    pub loss_post: Num,
    pub importance: Num,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SageSummary {
    pub iter_rsmp: usize,
    pub permutations: usize,
    pub coalitions: usize,
    pub converged: bool,
    pub v_full: Num,
    pub values: Vec<Num>,
    pub se: Vec<Num>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceInfo {
    pub method: CiMethod,
    pub alternative: inference::Alternative,
    pub alpha: Num,
    pub p_adjust: inference::PAdjust,
    pub test: Option<inference::TestKind>,
    pub k: usize,
    pub n_train: Option<Num>,
    pub n_test: Option<Num>,
    pub df: Option<Num>,
}

/// Wall-clock seconds per phase. Not part of the reproducible content.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub load: Num,
    pub compute: Num,
    pub inference: Num,
    pub total: Num,
}

impl Default for Num {
    fn default() -> Self {
        Num(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub engine: EngineInfo,
    pub config: RunConfig,
    pub task: TaskInfo,
    pub rows: Vec<ResultRow>,
    pub scores: Vec<ScoreRow>,
    pub sage: Option<Vec<SageSummary>>,
    pub inference: Option<InferenceInfo>,
    pub timing: Timing,
    pub warnings: Vec<String>,
}

pub const CSV_HEADER: [&str; 8] = ["feature", "importance", "se", "statistic", "p_value", "conf_lower", "conf_upper", "rank"];

impl ResultDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::config(format!("not a result document: {e}")))
    }

    /// The JSON text with timings zeroed; equal across reruns of one config.
    pub fn reproducible_json(&self) -> String {
        let mut doc = self.clone();
        doc.timing = Timing::default();
        doc.to_json()
    }

    pub fn row(&self, feature: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.feature == feature)
    }

    pub fn importance(&self, feature: &str) -> Option<f64> {
        self.row(feature).map(|r| r.importance.0)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        let opt = |v: Option<Num>| v.map(Num::text).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.feature.clone(),
                r.importance.text(),
                opt(r.se),
                opt(r.statistic),
                opt(r.p_value),
                opt(r.conf_lower),
                opt(r.conf_upper),
                r.rank.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// Writes every output path named in the config.
    pub fn write_outputs(&self) -> CliResult<()> {
        let out = &self.config.output;
        if let Some(p) = &out.out {
            write_file(p, &self.to_json())?;
        }
        if let Some(p) = &out.out_csv {
            write_file(p, &self.to_csv())?;
        }
        if let Some(p) = &out.svg {
            write_file(p, &crate::svg::render_svg(&self.rows, &self.chart_title())?)?;
        }
        Ok(())
    }

    fn chart_title(&self) -> String {
        format!("{} ({}, {})", self.config.method.id().to_uppercase(), self.config.learner.id(), self.config.measure)
    }
}

pub fn write_file(path: &str, content: &str) -> CliResult<()> {
    std::fs::write(Path::new(path), content).map_err(|e| CliError::runtime(format!("cannot write {path}: {e}")))
}

/// Output of the compute phase, common to all methods.
struct Computed {
    scores: ScoresTable,
    obs: Option<ObsLossTable>,
    sage: Option<Vec<SageSummary>>,
    sage_se: Option<Vec<(String, f64)>>,
    warnings: Vec<String>,
}

fn groups_of(config: &RunConfig) -> Option<Vec<(String, Vec<String>)>> {
    config.groups.as_ref().map(|gs| gs.iter().map(|g| (g.name.clone(), g.features.clone())).collect())
}

fn compute(config: &RunConfig, task: &Task, rs: ResamplingInstance) -> CliResult<Computed> {
    let model = config.learner.clone();
    let m = config.method;
    if m.is_perturbation() {
        let sampler = config.sampler.expect("perturbation methods carry a sampler");
        let mut pc = match m {
            Method::Pfi => PerturbationConfig::pfi(model, config.measure, rs),
            Method::Cfi => PerturbationConfig::cfi(model, config.measure, rs, sampler),
            _ => PerturbationConfig::rfi(
                model,
                config.measure,
                rs,
                sampler,
                config.conditioning_set.clone().unwrap_or_default(),
            ),
        }
        .with_repeats(config.n_repeats)
        .with_seed(config.seed);
        pc.features = config.features.clone();
        pc.groups = groups_of(config);
        let res = compute_perturbation(task, &pc).runtime_err()?;
        return Ok(Computed { scores: res.scores, obs: res.obs, sage: None, sage_se: None, warnings: res.warnings });
    }
    if m.is_refit() {
        let mut rc = RefitConfig::new(model, config.measure, rs)
            .with_direction(config.direction)
            .with_repeats(config.n_repeats)
            .with_seed(config.seed);
        let res = match (m, &config.features) {
            (Method::Loco, None) => loco(task, &rc),
            (Method::Loco, Some(fs)) => {
                rc.groups = Some(fs.iter().map(|f| (f.clone(), vec![f.clone()])).collect());
                compute_wvim(task, &rc)
            }
            _ => {
                rc.groups = groups_of(config);
                compute_wvim(task, &rc)
            }
        }
        .runtime_err()?;
        return Ok(Computed { scores: res.scores, obs: res.obs, sage: None, sage_se: None, warnings: res.warnings });
    }

    let variant = if m == Method::SageMarginal { SageVariant::Marginal } else { SageVariant::Conditional };
    let mut sc = SageConfig::new(variant, model, config.measure, rs);
    let s = &config.sage;
    sc.n_permutations = s.n_permutations;
    sc.n_samples = s.n_samples;
    sc.min_permutations = s.min_permutations;
    sc.early_stopping = s.early_stopping;
    sc.convergence_ratio = s.convergence_ratio;
    sc.max_background = s.background_size;
    if let Some(k) = config.sampler {
        sc.sampler = k;
    }
    sc.seed = config.seed;
    let res = sage_permutation_estimator(task, &sc).runtime_err()?;
    let k = res.states.len() as f64;
    let features = res.states.first().map(|st| st.features.clone()).unwrap_or_default();
    // se of the mean over iterations
    let sage_se = features
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let v: f64 = res.states.iter().map(|st| st.se()[j].powi(2)).sum();
            (f.clone(), v.sqrt() / k)
        })
        .collect();
    let summaries = res
        .states
        .iter()
        .map(|st| SageSummary {
            iter_rsmp: st.iter_rsmp,
            permutations: st.permutations,
            coalitions: st.coalitions,
            converged: st.converged,
            v_full: Num(st.v_full),
            values: st.values().into_iter().map(Num).collect(),
            se: st.se().into_iter().map(Num).collect(),
        })
        .collect();
    Ok(Computed { scores: res.scores, obs: None, sage: Some(summaries), sage_se: Some(sage_se), warnings: res.warnings })
}

fn run_inference(
    config: &RunConfig,
    c: &Computed,
    rs: &ResamplingInstance,
) -> CliResult<Option<InferenceResult>> {
    let spec = &config.inference;
    let opts = InferenceOptions::default()
        .with_alpha(spec.alpha)
        .with_alternative(spec.alternative)
        .with_test(spec.test)
        .with_p_adjust(spec.p_adjust);
    let res = match spec.ci {
        CiMethod::None => return Ok(None),
        CiMethod::Quantile => inference::ci_quantile(&c.scores, &opts),
        CiMethod::Raw => inference::ci_raw(&c.scores, &opts),
        CiMethod::NadeauBengio => inference::ci_nadeau_bengio(&c.scores, rs, &opts),
        CiMethod::Cpi => inference::cpi_test(
            &c.scores,
            c.obs.as_ref(),
            config.sampler.expect("validated: cpi runs on cfi"),
            &opts,
        ),
        CiMethod::Lei => inference::lei_test(&c.scores, c.obs.as_ref(), &opts),
    };
    res.runtime_err().map(Some)
}

fn ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    // NaN sorts last
    order.sort_by(|&a, &b| {
        let (x, y) = (values[a], values[b]);
        match (x.is_nan(), y.is_nan()) {
            (true, true) => a.cmp(&b),
            (true, false) => std::cmp::Ordering::Greater,
            (false, true) => std::cmp::Ordering::Less,
            _ => y.total_cmp(&x).then(a.cmp(&b)),
        }
    });
    let mut rank = vec![0; values.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    rank
}

/// Loads the task, runs the configured method and inference, and returns
/// the complete document (nothing is written).
pub fn execute(config: &RunConfig) -> CliResult<ResultDocument> {
    config.validate()?;
    let start = Instant::now();
    let task = config.task.load(config.seed).runtime_err()?;
    config.validate_against(&task)?;
    let rs = ResamplingSpec::new(config.resampling.clone(), config.seed).instantiate(&task).config_err()?;
    let t_load = start.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let computed = compute(config, &task, rs.clone())?;
    let t_compute = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let inf = run_inference(config, &computed, &rs)?;
    let t_inference = t1.elapsed().as_secs_f64();

    let importance = computed.scores.importance();
    let values: Vec<f64> = importance.iter().map(|(_, v)| *v).collect();
    let rank = ranks(&values);
    let rows = importance
        .iter()
        .zip(rank)
        .map(|((f, v), rank)| {
            let ir = inf.as_ref().and_then(|r| r.row(f));
            let se = match (ir, &computed.sage_se) {
                (Some(r), _) => r.se,
                (None, Some(s)) => s.iter().find(|(g, _)| g == f).map(|(_, v)| *v),
                _ => None,
            };
            ResultRow {
                feature: f.clone(),
                importance: Num(*v),
                se: se.map(Num),
                statistic: ir.and_then(|r| r.statistic).map(Num),
                p_value: ir.and_then(|r| r.p_value).map(Num),
                conf_lower: ir.and_then(|r| r.conf_lower).map(Num),
                conf_upper: ir.and_then(|r| r.conf_upper).map(Num),
                rank,
            }
        })
        .collect();

    let mut warnings = computed.warnings.clone();
    let inference = inf.map(|r| {
        warnings.extend(r.metadata.warnings.iter().cloned());
        let m = r.metadata;
        InferenceInfo {
            method: m.method,
            alternative: m.alternative,
            alpha: Num(m.alpha),
            p_adjust: m.p_adjust,
            test: m.test,
            k: m.k,
            n_train: m.n_train.map(Num),
            n_test: m.n_test.map(Num),
            df: m.df.map(Num),
        }
    });

    let scores = computed
        .scores
        .records
        .iter()
        .map(|r| ScoreRow {
            feature: r.feature.clone(),
            iter_rsmp: r.iter_rsmp,
            iter_repeat: r.iter_repeat,
            loss_baseline: Num(r.loss_baseline),
            loss_post: Num(r.loss_post),
            importance: Num(r.importance),
        })
        .collect();

    Ok(ResultDocument {
        engine: EngineInfo::default(),
        config: config.clone(),
        task: TaskInfo {
            name: task.name().to_string(),
            n_rows: task.n_rows(),
            target: task.target_name().to_string(),
            features: task.feature_names().to_vec(),
        },
        rows,
        scores,
        sage: computed.sage,
        inference,
        timing: Timing {
            load: Num(t_load),
            compute: Num(t_compute),
            inference: Num(t_inference),
            total: Num(start.elapsed().as_secs_f64()),
        },
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Options;

    fn run(pairs: &[(&str, &str)]) -> ResultDocument {
        let opts: Options = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        execute(&RunConfig::from_options(&opts).unwrap()).unwrap()
    }

    #[test]
    fn ranks_put_nan_last() {
        assert_eq!(ranks(&[1.0, 3.0, f64::NAN, 2.0]), vec![3, 1, 4, 2]);
    }

    #[test]
    fn document_round_trips_and_csv_agrees() {
        let doc = run(&[
            ("sim", "correlated"),
            ("n", "400"),
            ("learner", "linear"),
            ("method", "cfi"),
            ("sampler", "knockoff_gaussian"),
            ("ci", "cpi"),
            ("p-adjust", "BH"),
            ("n-repeats", "2"),
        ]);
        assert_eq!(doc.rows.len(), 4);
        assert_eq!(doc.rows[0].feature, "x1");
        assert_eq!(doc.rows[0].rank, 1);
        assert_eq!(doc.rows[0].conf_upper, Some(Num(f64::INFINITY)));
        let json = doc.to_json();
        assert!(json.contains("\"conf_upper\": \"inf\""));
        let back = ResultDocument::from_json(&json).unwrap();
        assert_eq!(back, doc);

        let csv = doc.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        for (line, row) in lines.zip(&doc.rows) {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells[0], row.feature);
            assert_eq!(Num::parse(cells[1]).unwrap().to_bits(), row.importance.0.to_bits());
            assert_eq!(Num::parse(cells[4]).unwrap().to_bits(), row.p_value.unwrap().0.to_bits());
            assert_eq!(cells[6], "inf");
        }
    }

    #[test]
    fn embedded_config_reproduces_the_table() {
        let doc = run(&[("sim", "correlated"), ("n", "300"), ("learner", "cart"), ("method", "pfi"), ("seed", "9")]);
        let again = execute(&doc.config).unwrap();
        assert_eq!(again.reproducible_json(), doc.reproducible_json());
    }

    #[test]
    fn sage_rows_carry_se_and_coalitions() {
        let doc = run(&[
            ("sim", "correlated"),
            ("n", "300"),
            ("learner", "linear"),
            ("method", "sage_marginal"),
            ("n-permutations", "8"),
            ("min-permutations", "2"),
            ("n-samples", "10"),
            ("no-early-stopping", "true"),
        ]);
        let sage = doc.sage.as_ref().unwrap();
        assert_eq!(sage[0].coalitions, 1 + 4 * 8);
        assert!(doc.rows.iter().all(|r| r.se.is_some() && r.p_value.is_none()));
        let total: f64 = doc.rows.iter().map(|r| r.importance.0).sum();
        assert!((total - sage[0].v_full.0).abs() <= 1e-9 * sage[0].v_full.0.abs());
    }

    #[test]
    fn unknown_feature_is_a_config_error() {
        let opts: Options = [("sim", "correlated"), ("n", "100"), ("method", "pfi"), ("features", "x9")]
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let err = execute(&RunConfig::from_options(&opts).unwrap()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}

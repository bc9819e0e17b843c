//! Run configuration: key-value file + flags → validated [`RunConfig`].
//!
//! Every option has one canonical key equal to its flag name without the
//! leading dashes (`n-repeats`, `p-adjust`, ...). The config file uses the
//! same keys, optionally grouped under `[section]` headers, which are only
//! organizational. Flags override file values.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use fi_core::inference::{Alternative, CiMethod, PAdjust, TestKind};
use fi_core::refit::RefitDirection;
use fi_core::sim::DgpSpec;
use fi_core::{LearnerSpec, Measure, ResamplingKind, SamplerKind, Task};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, ConfigContext};

pub type Options = BTreeMap<String, String>;

/// All recognised option keys.
pub const KEYS: &[&str] = &[
    "sim", "csv", "target", "n", "r", "p", "d", "coefficients", "noise-sd",
    "learner", "learner-params", "measure", "method", "sampler", "knn-k",
    "resampling", "folds", "repeats", "ratio", "n-repeats", "features", "groups",
    "conditioning-set", "direction", "n-permutations", "n-samples", "min-permutations",
    "no-early-stopping", "convergence-ratio", "background-size", "ci", "test",
    "alternative", "alpha", "p-adjust", "seed", "out", "out-csv", "svg",
];

const SAGE_KEYS: &[&str] =
    &["n-permutations", "n-samples", "min-permutations", "no-early-stopping", "convergence-ratio", "background-size"];

fn normalize_key(k: &str) -> String {
    k.trim().trim_start_matches("--").to_ascii_lowercase().replace('_', "-")
}

/// Parses the flat key-value config format.
pub fn parse_config_text(text: &str) -> CliResult<Options> {
    let mut out = Options::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(CliError::config(format!("config line {}: malformed section header", i + 1)));
            }
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::config(format!("config line {}: expected 'key = value'", i + 1)));
        };
        let key = normalize_key(k);
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::config(format!("config line {}: unknown key '{key}'", i + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> CliResult<Options> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config file {}: {e}", path.display())))?;
    parse_config_text(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum TaskSource {
    Sim { dgp: DgpSpec },
    Csv { path: String, target: String },
}

impl TaskSource {
    pub fn load(&self, seed: u64) -> fi_core::Result<Task> {
        match self {
            TaskSource::Sim { dgp } => dgp.generate(seed),
            TaskSource::Csv { path, target } => fi_core::io::load_csv(Path::new(path), target),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pfi,
    Cfi,
    Rfi,
    Loco,
    Wvim,
    SageMarginal,
    SageConditional,
}

impl Method {
    pub fn id(self) -> &'static str {
        match self {
            Method::Pfi => "pfi",
            Method::Cfi => "cfi",
            Method::Rfi => "rfi",
            Method::Loco => "loco",
            Method::Wvim => "wvim",
            Method::SageMarginal => "sage_marginal",
            Method::SageConditional => "sage_conditional",
        }
    }

    pub fn is_perturbation(self) -> bool {
        matches!(self, Method::Pfi | Method::Cfi | Method::Rfi)
    }

    pub fn is_refit(self) -> bool {
        matches!(self, Method::Loco | Method::Wvim)
    }

    pub fn is_sage(self) -> bool {
        matches!(self, Method::SageMarginal | Method::SageConditional)
    }
}

impl FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "pfi" => Ok(Method::Pfi),
            "cfi" => Ok(Method::Cfi),
            "rfi" => Ok(Method::Rfi),
            "loco" => Ok(Method::Loco),
            "wvim" => Ok(Method::Wvim),
            "sage_marginal" | "msage" => Ok(Method::SageMarginal),
            "sage_conditional" | "csage" => Ok(Method::SageConditional),
            other => Err(CliError::config(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub name: String,
    pub features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SageParams {
    pub n_permutations: usize,
    pub n_samples: usize,
    pub min_permutations: usize,
    pub early_stopping: bool,
    pub convergence_ratio: f64,
    pub background_size: usize,
}

impl Default for SageParams {
    fn default() -> Self {
        Self {
            n_permutations: 100,
            n_samples: 100,
            min_permutations: 20,
            early_stopping: true,
            convergence_ratio: 0.025,
            background_size: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceSpec {
    pub ci: CiMethod,
    pub test: TestKind,
    pub alternative: Alternative,
    pub alpha: f64,
    pub p_adjust: PAdjust,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputPaths {
    pub out: Option<String>,
    pub out_csv: Option<String>,
    pub svg: Option<String>,
}

/// Fully resolved run description; embedded verbatim in every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: TaskSource,
    pub learner: LearnerSpec,
    pub measure: Measure,
    pub resampling: ResamplingKind,
    pub method: Method,
    pub n_repeats: usize,
    pub sampler: Option<SamplerKind>,
    pub features: Option<Vec<String>>,
    pub groups: Option<Vec<Group>>,
    pub conditioning_set: Option<Vec<String>>,
    pub direction: RefitDirection,
    pub sage: SageParams,
    pub inference: InferenceSpec,
    pub seed: u64,
    pub output: OutputPaths,
}

fn parse_num<T: FromStr>(opts: &Options, key: &str) -> CliResult<Option<T>> {
    opts.get(key)
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|_| CliError::config(format!("invalid value '{v}' for --{key}")))
        })
        .transpose()
}

fn parse_with<T, E: std::fmt::Display>(opts: &Options, key: &str, f: impl Fn(&str) -> Result<T, E>) -> CliResult<Option<T>> {
    opts.get(key)
        .map(|v| f(v.trim()).map_err(|e| CliError::config(format!("--{key}: {e}"))))
        .transpose()
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("expected a boolean, got '{v}'")),
    }
}

fn parse_list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

/// `name=f1,f2;name2=f3`
pub fn parse_groups(v: &str) -> CliResult<Vec<Group>> {
    let mut groups = Vec::new();
    for part in v.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, feats) = part
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("--groups: expected 'name=f1,f2', got '{part}'")))?;
        let features = parse_list(feats);
        if name.trim().is_empty() || features.is_empty() {
            return Err(CliError::config(format!("--groups: empty name or feature list in '{part}'")));
        }
        groups.push(Group { name: name.trim().to_string(), features });
    }
    if groups.is_empty() {
        return Err(CliError::config("--groups: no groups given"));
    }
    Ok(groups)
}

fn parse_learner_params(v: &str) -> CliResult<Vec<(String, String)>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| CliError::config(format!("--learner-params: expected key=value, got '{kv}'")))
        })
        .collect()
}

impl RunConfig {
    pub fn from_options(opts: &Options) -> CliResult<Self> {
        for k in opts.keys() {
            if !KEYS.contains(&k.as_str()) {
                return Err(CliError::config(format!("unknown option '{k}'")));
            }
        }
        let reject = |keys: &[&str], why: &str| -> CliResult<()> {
            match keys.iter().find(|k| opts.contains_key(**k)) {
                Some(k) => Err(CliError::config(format!("--{k} {why}"))),
                None => Ok(()),
            }
        };

        let task = match (opts.get("sim"), opts.get("csv")) {
            (Some(_), Some(_)) => return Err(CliError::config("give either --sim or --csv, not both")),
            (None, None) => return Err(CliError::config("a task source is required: --sim or --csv")),
            (None, Some(path)) => {
                reject(&["n", "r", "p", "d", "coefficients", "noise-sd"], "only applies to simulated tasks")?;
                let target = opts
                    .get("target")
                    .ok_or_else(|| CliError::config("--csv requires --target"))?;
                TaskSource::Csv { path: path.clone(), target: target.clone() }
            }
            (Some(sim), None) => {
                reject(&["target"], "only applies to --csv tasks")?;
                let n = parse_num::<usize>(opts, "n")?.unwrap_or(5000);
                let noise_sd = parse_num::<f64>(opts, "noise-sd")?.unwrap_or(0.2);
                let dgp = match sim.to_ascii_lowercase().as_str() {
                    "correlated" => {
                        reject(&["p", "d", "coefficients"], "does not apply to --sim correlated")?;
                        DgpSpec::Correlated { n, r: parse_num(opts, "r")?.unwrap_or(0.8), noise_sd }
                    }
                    "independent" => {
                        reject(&["r", "d"], "does not apply to --sim independent")?;
                        let coefficients: Vec<f64> = match opts.get("coefficients") {
                            Some(c) => parse_list(c)
                                .iter()
                                .map(|v| v.parse::<f64>())
                                .collect::<Result<_, _>>()
                                .map_err(|_| CliError::config(format!("invalid --coefficients '{c}'")))?,
                            None => return Err(CliError::config("--sim independent requires --coefficients")),
                        };
                        if let Some(p) = parse_num::<usize>(opts, "p")? {
                            if p != coefficients.len() {
                                return Err(CliError::config(format!(
                                    "--p {p} does not match {} coefficients",
                                    coefficients.len()
                                )));
                            }
                        }
                        DgpSpec::Independent { n, coefficients, noise_sd }
                    }
                    "peak" => {
                        reject(&["r", "coefficients", "noise-sd"], "does not apply to --sim peak")?;
                        let d = match (parse_num::<usize>(opts, "d")?, parse_num::<usize>(opts, "p")?) {
                            (Some(d), Some(p)) if d != p => {
                                return Err(CliError::config("--d and --p disagree for --sim peak"))
                            }
                            (Some(d), _) | (None, Some(d)) => d,
                            (None, None) => 5,
                        };
                        DgpSpec::Peak { n, d }
                    }
                    other => return Err(CliError::config(format!("unknown simulator '{other}'"))),
                };
                TaskSource::Sim { dgp }
            }
        };

        let learner_id = opts.get("learner").map(String::as_str).unwrap_or("forest");
        let params = match opts.get("learner-params") {
            Some(v) => parse_learner_params(v)?,
            None => Vec::new(),
        };
        let learner = LearnerSpec::parse(learner_id, &params).config_err()?;
        let measure = parse_with(opts, "measure", Measure::from_str)?.unwrap_or(Measure::Mse);
        let method: Method = opts
            .get("method")
            .ok_or_else(|| CliError::config("--method is required"))?
            .parse()?;

        let rs_id = opts.get("resampling").map(|s| s.to_ascii_lowercase()).unwrap_or_else(|| "holdout".into());
        let resampling = match rs_id.as_str() {
            "holdout" => {
                reject(&["folds", "repeats"], "does not apply to holdout resampling")?;
                ResamplingKind::Holdout { ratio: parse_num(opts, "ratio")?.unwrap_or(2.0 / 3.0) }
            }
            "cv" => {
                reject(&["repeats", "ratio"], "does not apply to cv resampling")?;
                ResamplingKind::Cv { folds: parse_num(opts, "folds")?.unwrap_or(5) }
            }
            "subsampling" => {
                reject(&["folds"], "does not apply to subsampling")?;
                ResamplingKind::Subsampling {
                    repeats: parse_num(opts, "repeats")?.unwrap_or(15),
                    ratio: parse_num(opts, "ratio")?.unwrap_or(0.9),
                }
            }
            "bootstrap" => {
                reject(&["folds", "ratio"], "does not apply to bootstrap resampling")?;
                ResamplingKind::Bootstrap { repeats: parse_num(opts, "repeats")?.unwrap_or(30) }
            }
            other => return Err(CliError::config(format!("unknown resampling '{other}'"))),
        };

        if !method.is_sage() {
            reject(SAGE_KEYS, &format!("only applies to SAGE methods, not {}", method.id()))?;
        }
        if method.is_sage() {
            reject(&["n-repeats", "features", "groups", "conditioning-set"], "does not apply to SAGE")?;
        }
        if !method.is_refit() {
            reject(&["direction"], "only applies to loco/wvim")?;
        }
        if method != Method::Rfi {
            reject(&["conditioning-set"], "only applies to rfi")?;
        }

        let mut sampler = parse_with(opts, "sampler", SamplerKind::from_str)?;
        if let Some(k) = parse_num::<usize>(opts, "knn-k")? {
            match sampler {
                Some(SamplerKind::ConditionalKnn { .. }) => sampler = Some(SamplerKind::ConditionalKnn { k }),
                _ => return Err(CliError::config("--knn-k requires --sampler conditional_knn")),
            }
        }
        let sampler = match method {
            Method::Pfi => Some(sampler.unwrap_or(SamplerKind::MarginalPermutation)),
            Method::Cfi | Method::Rfi | Method::SageConditional => {
                Some(sampler.unwrap_or(SamplerKind::ConditionalGaussian))
            }
            Method::Loco | Method::Wvim | Method::SageMarginal => {
                if sampler.is_some() {
                    return Err(CliError::config(format!("--sampler does not apply to {}", method.id())));
                }
                None
            }
        };

        let n_repeats = parse_num::<usize>(opts, "n-repeats")?.unwrap_or(if method.is_refit() { 1 } else { 5 });
        let features = opts.get("features").map(|v| parse_list(v));
        let groups = opts.get("groups").map(|v| parse_groups(v)).transpose()?;
        let conditioning_set = opts.get("conditioning-set").map(|v| parse_list(v));
        let direction = parse_with(opts, "direction", RefitDirection::from_str)?.unwrap_or(RefitDirection::LeaveOut);

        let d = SageParams::default();
        let sage = SageParams {
            n_permutations: parse_num(opts, "n-permutations")?.unwrap_or(d.n_permutations),
            n_samples: parse_num(opts, "n-samples")?.unwrap_or(d.n_samples),
            min_permutations: parse_num(opts, "min-permutations")?.unwrap_or(d.min_permutations),
            early_stopping: !parse_with(opts, "no-early-stopping", parse_bool)?.unwrap_or(false),
            convergence_ratio: parse_num(opts, "convergence-ratio")?.unwrap_or(d.convergence_ratio),
            background_size: parse_num(opts, "background-size")?.unwrap_or(d.background_size),
        };

        let ci = parse_with(opts, "ci", CiMethod::from_str)?.unwrap_or(CiMethod::None);
        if !matches!(ci, CiMethod::Cpi | CiMethod::Lei) {
            reject(&["test"], "only applies to --ci cpi or lei")?;
        }
        if ci == CiMethod::None {
            reject(&["alternative", "alpha", "p-adjust"], "requires an inference method (--ci)")?;
        }
        let inference = InferenceSpec {
            ci,
            test: parse_with(opts, "test", TestKind::from_str)?
                .unwrap_or(if ci == CiMethod::Lei { TestKind::Wilcox } else { TestKind::T }),
            alternative: parse_with(opts, "alternative", Alternative::from_str)?
                .unwrap_or(if ci == CiMethod::Cpi { Alternative::Greater } else { Alternative::TwoSided }),
            alpha: parse_num(opts, "alpha")?.unwrap_or(0.05),
            p_adjust: parse_with(opts, "p-adjust", PAdjust::from_str)?.unwrap_or_default(),
        };

        let config = RunConfig {
            task,
            learner,
            measure,
            resampling,
            method,
            n_repeats,
            sampler,
            features,
            groups,
            conditioning_set,
            direction,
            sage,
            inference,
            seed: parse_num(opts, "seed")?.unwrap_or(1),
            output: OutputPaths {
                out: opts.get("out").cloned(),
                out_csv: opts.get("out-csv").cloned(),
                svg: opts.get("svg").cloned(),
            },
        };
        config.validate()?;
        Ok(config)
    }

    /// Consistency checks that do not need the data.
    pub fn validate(&self) -> CliResult<()> {
        let m = self.method;
        fi_core::ResamplingSpec::new(self.resampling.clone(), self.seed).validate().config_err()?;
        self.learner.validate().config_err()?;
        if self.n_repeats < 1 {
            return Err(CliError::config("--n-repeats must be >= 1"));
        }
        if self.features.is_some() && self.groups.is_some() {
            return Err(CliError::config("give either --features or --groups, not both"));
        }
        if m == Method::Loco && self.groups.is_some() {
            return Err(CliError::config("loco uses singleton groups; use --method wvim for --groups"));
        }
        if m == Method::Loco && self.direction != RefitDirection::LeaveOut {
            return Err(CliError::config("loco is leave-out; use --method wvim for leave-in"));
        }
        if m == Method::Wvim && self.features.is_some() {
            return Err(CliError::config("wvim takes --groups, not --features"));
        }
        if let Some(kind) = self.sampler {
            match m {
                Method::Pfi if kind != SamplerKind::MarginalPermutation => {
                    return Err(CliError::config("pfi uses the marginal_permutation sampler"))
                }
                Method::Cfi if !kind.is_conditional() => {
                    return Err(CliError::config("cfi requires a conditional sampler"))
                }
                Method::Rfi => {
                    let g = self.conditioning_set.as_ref();
                    if g.is_none() {
                        return Err(CliError::config("rfi requires --conditioning-set (may be empty)"));
                    }
                    if g.is_some_and(|g| !g.is_empty()) {
                        if kind == SamplerKind::KnockoffGaussian {
                            return Err(CliError::config(fi_core::samplers::KNOCKOFF_CFI_ONLY));
                        }
                        if kind == SamplerKind::MarginalPermutation {
                            return Err(CliError::config("marginal_permutation cannot condition on other features"));
                        }
                    }
                }
                Method::SageConditional
                    if !matches!(kind, SamplerKind::ConditionalGaussian | SamplerKind::ConditionalKnn { .. }) =>
                {
                    return Err(CliError::config("sage_conditional needs conditional_gaussian or conditional_knn"))
                }
                _ => {}
            }
        }
        if m.is_sage() {
            let s = &self.sage;
            if s.n_permutations < 1 || s.n_samples < 1 || s.background_size < 1 {
                return Err(CliError::config("SAGE counts must be >= 1"));
            }
            if s.min_permutations > s.n_permutations {
                return Err(CliError::config("--min-permutations exceeds --n-permutations"));
            }
            if !(s.convergence_ratio > 0.0 && s.convergence_ratio.is_finite()) {
                return Err(CliError::config("--convergence-ratio must be positive"));
            }
        }

        let inf = &self.inference;
        if !(inf.alpha > 0.0 && inf.alpha < 1.0) {
            return Err(CliError::config("--alpha must lie in (0, 1)"));
        }
        let iterations = match &self.resampling {
            ResamplingKind::Holdout { .. } => 1,
            ResamplingKind::Cv { folds } => *folds,
            ResamplingKind::Subsampling { repeats, .. } | ResamplingKind::Bootstrap { repeats } => *repeats,
        };
        match inf.ci {
            CiMethod::None => {}
            _ if m.is_sage() => {
                return Err(CliError::config("confidence intervals are not provided for SAGE values"))
            }
            CiMethod::Quantile | CiMethod::Raw if iterations < 2 => {
                return Err(CliError::config(format!(
                    "--ci {} requires multiple resampling iterations",
                    inf.ci.id()
                )))
            }
            CiMethod::NadeauBengio if !self.resampling.supports_corrected_t() => {
                return Err(CliError::config("correction requires subsampling or bootstrap"))
            }
            CiMethod::Cpi => {
                if m != Method::Cfi || self.sampler != Some(SamplerKind::KnockoffGaussian) {
                    return Err(CliError::config("--ci cpi requires --method cfi with --sampler knockoff_gaussian"));
                }
                if !self.measure.decomposable() {
                    return Err(CliError::config(format!("--ci cpi needs a decomposable measure, not {}", self.measure)));
                }
            }
            CiMethod::Lei => {
                if !m.is_refit() {
                    return Err(CliError::config("--ci lei requires --method loco or wvim"));
                }
                if !self.measure.decomposable() {
                    return Err(CliError::config(format!("--ci lei needs a decomposable measure, not {}", self.measure)));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Checks feature names against the loaded task.
    pub fn validate_against(&self, task: &Task) -> CliResult<()> {
        let known = task.feature_names();
        let check = |names: &[String], what: &str| -> CliResult<()> {
            match names.iter().find(|n| !known.contains(n)) {
                Some(n) => Err(CliError::config(format!("{what}: unknown feature '{n}'"))),
                None => Ok(()),
            }
        };
        if let Some(f) = &self.features {
            check(f, "--features")?;
        }
        if let Some(gs) = &self.groups {
            for g in gs {
                check(&g.features, "--groups")?;
            }
        }
        if let Some(g) = &self.conditioning_set {
            check(g, "--conditioning-set")?;
            if let Some(f) = &self.features {
                if let Some(x) = f.iter().find(|x| g.contains(x)) {
                    return Err(CliError::config(format!("'{x}' is both a feature of interest and conditioned on")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(pairs: &[(&str, &str)]) -> Options {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn config_text_with_sections_and_comments() {
        let text = "# run\n[task]\nsim = correlated\nn = 500\n\n[method]\nmethod = pfi\nn_repeats = 3\n";
        let o = parse_config_text(text).unwrap();
        assert_eq!(o.get("n-repeats").map(String::as_str), Some("3"));
        let c = RunConfig::from_options(&o).unwrap();
        assert_eq!(c.n_repeats, 3);
        assert!(parse_config_text("bogus = 1").is_err());
        assert!(parse_config_text("no equals sign").is_err());
    }

    #[test]
    fn defaults_follow_method() {
        let c = RunConfig::from_options(&opts(&[("sim", "correlated"), ("method", "cfi"), ("ci", "quantile"), ("resampling", "cv")])).unwrap();
        assert_eq!(c.sampler, Some(SamplerKind::ConditionalGaussian));
        assert_eq!(c.inference.alternative, Alternative::TwoSided);
        let c = RunConfig::from_options(&opts(&[
            ("sim", "correlated"),
            ("method", "cfi"),
            ("sampler", "knockoff_gaussian"),
            ("ci", "cpi"),
        ]))
        .unwrap();
        assert_eq!(c.inference.alternative, Alternative::Greater);
        assert_eq!(c.inference.test, TestKind::T);
    }

    #[test]
    fn inconsistent_options_are_config_errors() {
        let bad: &[&[(&str, &str)]] = &[
            &[("sim", "correlated")],
            &[("method", "pfi")],
            &[("sim", "correlated"), ("method", "pfi"), ("sampler", "gaussian")],
            &[("sim", "correlated"), ("method", "pfi"), ("ci", "nadeau_bengio")],
            &[("sim", "correlated"), ("method", "pfi"), ("ci", "quantile")],
            &[("sim", "correlated"), ("method", "pfi"), ("ci", "cpi")],
            &[("sim", "correlated"), ("method", "rfi")],
            &[("sim", "correlated"), ("method", "rfi"), ("sampler", "knockoff"), ("conditioning-set", "x2")],
            &[("sim", "correlated"), ("method", "loco"), ("sampler", "gaussian")],
            &[("sim", "correlated"), ("method", "pfi"), ("n-permutations", "10")],
            &[("sim", "correlated"), ("method", "sage_marginal"), ("ci", "raw"), ("resampling", "cv")],
            &[("sim", "correlated"), ("method", "pfi"), ("alpha", "0.1")],
            &[("sim", "correlated"), ("method", "pfi"), ("measure", "accuracy")],
            &[("sim", "correlated"), ("method", "pfi"), ("learner", "forest"), ("learner-params", "trees=3")],
        ];
        for case in bad {
            let err = RunConfig::from_options(&opts(case)).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{case:?}");
        }
    }

    #[test]
    fn groups_syntax() {
        let g = parse_groups("correlated=x1,x2; independent = x3 , x4").unwrap();
        assert_eq!(g[1], Group { name: "independent".into(), features: vec!["x3".into(), "x4".into()] });
        assert!(parse_groups("a=").is_err());
        assert!(parse_groups("x1,x2").is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = RunConfig::from_options(&opts(&[
            ("sim", "independent"),
            ("coefficients", "1,0,0.5"),
            ("method", "wvim"),
            ("groups", "a=x1;b=x2,x3"),
            ("direction", "leave-in"),
            ("learner", "knn"),
            ("learner-params", "k=7"),
            ("resampling", "subsampling"),
            ("ci", "nadeau_bengio"),
        ]))
        .unwrap();
        let json = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }
}

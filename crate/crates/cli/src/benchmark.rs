//! Runtime grid over methods × feature counts on the peak task.
//!
//! Only the compute phase is timed: task generation and resampling are
//! done before the clock starts. The learner is linear so that the cost of
//! the importance method itself dominates.

use std::time::Instant;

use fi_core::perturbation::{compute_perturbation, PerturbationConfig};
use fi_core::sage::{sage_permutation_estimator, SageConfig, SageVariant};
use fi_core::sim::DgpSpec;
use fi_core::{LearnerSpec, Measure, ResamplingKind, ResamplingSpec, SamplerKind};
use serde::{Deserialize, Serialize};

use crate::config::Method;
use crate::error::{CliError, CliResult, ConfigContext};
use crate::num::Num;
use fi_core::inference::quantile_type7 as quantile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub n: usize,
    pub ps: Vec<usize>,
    pub methods: Vec<Method>,
    pub replications: usize,
    pub n_repeats: usize,
    pub n_permutations: usize,
    pub n_samples: usize,
    /// Off by default so every replication does the same amount of work.
    pub early_stopping: bool,
    pub seed: u64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            n: 5000,
            ps: vec![5, 10, 20],
            methods: vec![Method::Pfi, Method::Cfi, Method::SageMarginal, Method::SageConditional],
            replications: 5,
            n_repeats: 50,
            n_permutations: 100,
            n_samples: 100,
            early_stopping: false,
            seed: 1,
        }
    }
}

impl BenchmarkSpec {
    pub fn validate(&self) -> CliResult<()> {
        if self.n < 10 {
            return Err(CliError::config("benchmark --n must be at least 10"));
        }
        if self.ps.is_empty() || self.ps.contains(&0) {
            return Err(CliError::config("benchmark --p needs positive feature counts"));
        }
        if self.methods.is_empty() {
            return Err(CliError::config("benchmark needs at least one method"));
        }
        if let Some(m) = self.methods.iter().find(|m| m.is_refit() || **m == Method::Rfi) {
            return Err(CliError::config(format!(
                "benchmark supports pfi, cfi, sage_marginal and sage_conditional, not {}",
                m.id()
            )));
        }
        if self.replications < 1 || self.n_repeats < 1 || self.n_permutations < 1 || self.n_samples < 1 {
            return Err(CliError::config("benchmark counts must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRun {
    pub method: Method,
    pub p: usize,
    pub replication: usize,
    pub seconds: f64,
    /// Coalitions evaluated (SAGE only).
    pub coalitions: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSummary {
    pub method: Method,
    pub p: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub spec: BenchmarkSpec,
    pub runs: Vec<BenchmarkRun>,
    pub summaries: Vec<BenchmarkSummary>,
}

fn time_one(spec: &BenchmarkSpec, method: Method, p: usize, rep: usize) -> CliResult<BenchmarkRun> {
    let seed = spec.seed.wrapping_add(rep as u64);
    let task = DgpSpec::Peak { n: spec.n, d: p }.generate(seed).runtime_err()?;
    let rs = ResamplingSpec::new(ResamplingKind::holdout(), seed).instantiate(&task).runtime_err()?;
    let learner = LearnerSpec::linear();
    let measure = Measure::Mse;

    let start = Instant::now();
    let coalitions = match method {
        Method::Pfi | Method::Cfi => {
            let cfg = if method == Method::Pfi {
                PerturbationConfig::pfi(learner, measure, rs)
            } else {
                PerturbationConfig::cfi(learner, measure, rs, SamplerKind::ConditionalGaussian)
            };
            compute_perturbation(&task, &cfg.with_repeats(spec.n_repeats).with_seed(seed)).runtime_err()?;
            None
        }
        _ => {
            let variant = if method == Method::SageMarginal { SageVariant::Marginal } else { SageVariant::Conditional };
            let mut cfg = SageConfig::new(variant, learner, measure, rs);
            cfg.n_permutations = spec.n_permutations;
            cfg.n_samples = spec.n_samples;
            cfg.early_stopping = spec.early_stopping;
            cfg.min_permutations = cfg.min_permutations.min(spec.n_permutations);
            cfg.seed = seed;
            Some(sage_permutation_estimator(&task, &cfg).runtime_err()?.coalitions())
        }
    };
    Ok(BenchmarkRun { method, p, replication: rep + 1, seconds: start.elapsed().as_secs_f64(), coalitions })
}

/// Runs the grid sequentially (each run may itself be parallel).
/// `progress` is called after every run.
pub fn run_benchmark(spec: &BenchmarkSpec, mut progress: impl FnMut(&BenchmarkRun)) -> CliResult<BenchmarkReport> {
    spec.validate()?;
    let mut runs = Vec::new();
    let mut summaries = Vec::new();
    for &method in &spec.methods {
        for &p in &spec.ps {
            let mut secs = Vec::with_capacity(spec.replications);
            for rep in 0..spec.replications {
                let run = time_one(spec, method, p, rep)?;
                progress(&run);
                secs.push(run.seconds);
                runs.push(run);
            }
            secs.sort_by(f64::total_cmp);
            summaries.push(BenchmarkSummary {
                method,
                p,
                q1: quantile(&secs, 0.25),
                median: quantile(&secs, 0.5),
                q3: quantile(&secs, 0.75),
            });
        }
    }
    Ok(BenchmarkReport { spec: spec.clone(), runs, summaries })
}

pub const BENCHMARK_HEADER: [&str; 7] = ["row", "method", "p", "replication", "statistic", "seconds", "coalitions"];

impl BenchmarkReport {
    /// One `run` row per replication, then `summary` rows (q1, median, q3)
    /// per (method, p).
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(BENCHMARK_HEADER).expect("in-memory write");
        for r in &self.runs {
            w.write_record([
                "run".to_string(),
                r.method.id().to_string(),
                r.p.to_string(),
                r.replication.to_string(),
                String::new(),
                Num(r.seconds).text(),
                r.coalitions.map(|c| c.to_string()).unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        for s in &self.summaries {
            for (stat, v) in [("q1", s.q1), ("median", s.median), ("q3", s.q3)] {
                w.write_record([
                    "summary".to_string(),
                    s.method.id().to_string(),
                    s.p.to_string(),
                    String::new(),
                    stat.to_string(),
                    Num(v).text(),
                    String::new(),
                ])
                .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn median(&self, method: Method, p: usize) -> Option<f64> {
        self.summaries.iter().find(|s| s.method == method && s.p == p).map(|s| s.median)
    }
}

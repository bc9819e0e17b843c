//! Argument parsing and subcommand dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Arg, ArgAction, ArgMatches, Command};

use crate::benchmark::{run_benchmark, BenchmarkSpec};
use crate::config::{read_config_file, Method, Options, RunConfig, KEYS};
use crate::error::{CliError, CliResult};
use crate::run::{execute, write_file, ResultDocument};

pub const THREADS_ENV: &str = "FI_ENGINE_THREADS";

fn help_for(key: &str) -> &'static str {
    match key {
        "sim" => "Simulated task: correlated, independent or peak",
        "csv" => "CSV file with a header row (all columns numeric)",
        "target" => "Target column of --csv",
        "n" => "Simulated sample size [default: 5000]",
        "r" => "Correlation of x1 and x2 (correlated) [default: 0.8]",
        "p" => "Number of features (independent, peak)",
        "d" => "Dimension of the peak task (alias of --p)",
        "coefficients" => "Comma-separated coefficients (independent)",
        "noise-sd" => "Noise standard deviation [default: 0.2]",
        "learner" => "featureless, linear, ridge, cart, forest or knn [default: forest]",
        "learner-params" => "Learner hyperparameters, e.g. n_trees=200,mtry=2",
        "measure" => "mse, mae, rmse or rsq [default: mse]",
        "method" => "pfi, cfi, rfi, loco, wvim, sage_marginal or sage_conditional",
        "sampler" => "marginal_permutation, conditional_gaussian, knockoff_gaussian or conditional_knn",
        "knn-k" => "Neighbours of the conditional_knn sampler [default: 20]",
        "resampling" => "holdout, cv, subsampling or bootstrap [default: holdout]",
        "folds" => "Folds for cv [default: 5]",
        "repeats" => "Repetitions for subsampling/bootstrap",
        "ratio" => "Training fraction for holdout/subsampling",
        "n-repeats" => "Perturbation or refit repeats per iteration",
        "features" => "Comma-separated features of interest",
        "groups" => "Feature groups: name=f1,f2;name2=f3",
        "conditioning-set" => "Comma-separated conditioning set for rfi (may be empty)",
        "direction" => "leave-out or leave-in (wvim)",
        "n-permutations" => "SAGE permutations [default: 100]",
        "n-samples" => "SAGE imputations per coalition [default: 100]",
        "min-permutations" => "SAGE permutations before convergence checks [default: 20]",
        "no-early-stopping" => "Run all SAGE permutations",
        "convergence-ratio" => "SAGE convergence threshold [default: 0.025]",
        "background-size" => "Maximum SAGE background rows [default: 512]",
        "ci" => "none, quantile, raw, nadeau_bengio, cpi or lei",
        "test" => "t or wilcox (cpi, lei)",
        "alternative" => "two.sided, greater or less",
        "alpha" => "Significance level [default: 0.05]",
        "p-adjust" => "none, bonferroni, holm, BH or BY",
        "seed" => "Master seed [default: 1]",
        "out" => "JSON result document",
        "out-csv" => "CSV of the per-feature table",
        "svg" => "SVG bar chart",
        _ => "",
    }
}

fn threads_arg() -> Arg {
    Arg::new("threads")
        .long("threads")
        .env(THREADS_ENV)
        .value_parser(clap::value_parser!(usize))
        .help("Worker threads [default: all cores]")
}

fn command() -> Command {
    let mut importance = Command::new("importance")
        .about("Compute feature importance for one configuration")
        .arg(Arg::new("config").long("config").value_name("FILE").help("Key-value config file; flags override it"))
        .arg(
            Arg::new("rerun")
                .long("rerun")
                .value_name("JSON")
                .conflicts_with("config")
                .help("Re-run the configuration embedded in a result document"),
        )
        .arg(threads_arg());
    for &key in KEYS {
        let arg = Arg::new(key).long(key).help(help_for(key));
        importance = importance.arg(if key == "no-early-stopping" {
            arg.action(ArgAction::SetTrue)
        } else {
            arg.value_name("VALUE").allow_hyphen_values(true)
        });
    }
    let benchmark = Command::new("benchmark")
        .about("Time methods over a grid of feature counts on the peak task (linear learner)")
        .arg(Arg::new("n").long("n").value_parser(clap::value_parser!(usize)).help("Sample size [default: 5000]"))
        .arg(Arg::new("p").long("p").help("Comma-separated feature counts [default: 5,10,20]"))
        .arg(Arg::new("methods").long("methods").help("Comma-separated methods [default: pfi,cfi,sage_marginal,sage_conditional]"))
        .arg(Arg::new("replications").long("replications").value_parser(clap::value_parser!(usize)).help("[default: 5]"))
        .arg(Arg::new("n-repeats").long("n-repeats").value_parser(clap::value_parser!(usize)).help("[default: 50]"))
        .arg(Arg::new("n-permutations").long("n-permutations").value_parser(clap::value_parser!(usize)).help("[default: 100]"))
        .arg(Arg::new("n-samples").long("n-samples").value_parser(clap::value_parser!(usize)).help("[default: 100]"))
        .arg(Arg::new("early-stopping").long("early-stopping").action(ArgAction::SetTrue).help("Allow SAGE to stop early"))
        .arg(Arg::new("seed").long("seed").value_parser(clap::value_parser!(u64)).help("[default: 1]"))
        .arg(Arg::new("out").long("out").value_name("CSV").help("Timing CSV (standard output otherwise)"))
        .arg(threads_arg());
    Command::new("fi-engine")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Loss-based global feature importance")
        .subcommand_required(true)
        .subcommand(importance)
        .subcommand(benchmark)
}

fn flag_options(m: &ArgMatches) -> Options {
    let mut out = Options::new();
    for &key in KEYS {
        if key == "no-early-stopping" {
            if m.get_flag(key) {
                out.insert(key.into(), "true".into());
            }
        } else if let Some(v) = m.get_one::<String>(key) {
            out.insert(key.into(), v.clone());
        }
    }
    out
}

fn importance_config(m: &ArgMatches) -> CliResult<RunConfig> {
    let flags = flag_options(m);
    if let Some(path) = m.get_one::<String>("rerun") {
        if let Some(k) = flags.keys().find(|k| !matches!(k.as_str(), "out" | "out-csv" | "svg")) {
            return Err(CliError::config(format!("--{k} cannot be combined with --rerun")));
        }
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {path}: {e}")))?;
        let mut config = ResultDocument::from_json(&text)?.config;
        config.output.out = flags.get("out").cloned();
        config.output.out_csv = flags.get("out-csv").cloned();
        config.output.svg = flags.get("svg").cloned();
        config.validate()?;
        return Ok(config);
    }
    let mut opts = match m.get_one::<String>("config") {
        Some(p) => read_config_file(&PathBuf::from(p))?,
        None => Options::new(),
    };
    opts.extend(flags);
    RunConfig::from_options(&opts)
}

fn cmd_importance(m: &ArgMatches, stdout: &mut dyn Write) -> CliResult<()> {
    let config = importance_config(m)?;
    let doc = with_threads(m, || execute(&config))?;
    doc.write_outputs()?;
    let out = &doc.config.output;
    let text = if out.out.is_none() && out.out_csv.is_none() { doc.to_json() } else { doc.to_csv() };
    stdout.write_all(text.as_bytes()).map_err(|e| CliError::runtime(e.to_string()))?;
    for w in &doc.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn parse_list<T>(v: &str, f: impl Fn(&str) -> CliResult<T>) -> CliResult<Vec<T>> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect()
}

fn cmd_benchmark(m: &ArgMatches, stdout: &mut dyn Write) -> CliResult<()> {
    let mut spec = BenchmarkSpec::default();
    if let Some(&n) = m.get_one::<usize>("n") {
        spec.n = n;
    }
    if let Some(v) = m.get_one::<String>("p") {
        spec.ps = parse_list(v, |s| s.parse().map_err(|_| CliError::config(format!("invalid --p entry '{s}'"))))?;
    }
    if let Some(v) = m.get_one::<String>("methods") {
        spec.methods = parse_list(v, |s| s.parse::<Method>())?;
    }
    for (key, slot) in [
        ("replications", &mut spec.replications),
        ("n-repeats", &mut spec.n_repeats),
        ("n-permutations", &mut spec.n_permutations),
        ("n-samples", &mut spec.n_samples),
    ] {
        if let Some(&v) = m.get_one::<usize>(key) {
            *slot = v;
        }
    }
    spec.early_stopping = m.get_flag("early-stopping");
    if let Some(&s) = m.get_one::<u64>("seed") {
        spec.seed = s;
    }
    spec.validate()?;
    let report = with_threads(m, || {
        run_benchmark(&spec, |r| eprintln!("{} p={} rep={} {:.3}s", r.method.id(), r.p, r.replication, r.seconds))
    })?;
    let csv = report.to_csv();
    match m.get_one::<String>("out") {
        Some(p) => write_file(p, &csv),
        None => stdout.write_all(csv.as_bytes()).map_err(|e| CliError::runtime(e.to_string())),
    }
}

/// Runs `f` inside a dedicated pool when a thread count was requested.
fn with_threads<T: Send>(m: &ArgMatches, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    match m.get_one::<usize>("threads") {
        None => f(),
        Some(0) => Err(CliError::config("--threads must be >= 1")),
        Some(&n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::runtime(format!("cannot start thread pool: {e}")))?
            .install(f),
    }
}

/// Entry point shared by the binary and the tests. Returns the exit code:
/// 0 success, 1 runtime failure, 2 configuration error. Errors are written
/// to standard error as a JSON object.
pub fn run_cli<I, S>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                eprint!("{e}");
                return 2;
            }
            let err = CliError::config(e.kind().to_string() + ": " + e.to_string().lines().next().unwrap_or(""));
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    let result = match matches.subcommand() {
        Some(("importance", m)) => cmd_importance(m, stdout),
        Some(("benchmark", m)) => cmd_benchmark(m, stdout),
        _ => unreachable!("subcommand is required"),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(args: &[&str]) -> i32 {
        let mut sink = Vec::new();
        run_cli(std::iter::once("fi-engine").chain(args.iter().copied()), &mut sink)
    }

    #[test]
    fn command_definition_is_consistent() {
        command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(code(&["importance", "--sim", "correlated"]), 2);
        assert_eq!(code(&["importance", "--bogus", "1"]), 2);
        assert_eq!(code(&["importance", "--csv", "/nonexistent/x.csv", "--target", "y", "--method", "pfi"]), 1);
        assert_eq!(code(&["benchmark", "--methods", "loco"]), 2);
        assert_eq!(code(&["--version"]), 0);
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.ini");
        let out = dir.path().join("out.json");
        std::fs::write(&cfg, "[task]\nsim = correlated\nn = 200\n[method]\nmethod = pfi\nlearner = linear\nn-repeats = 4\n").unwrap();
        let args = [
            "importance",
            "--config",
            cfg.to_str().unwrap(),
            "--n-repeats",
            "2",
            "--out",
            out.to_str().unwrap(),
        ];
        assert_eq!(code(&args), 0);
        let doc = ResultDocument::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(doc.config.n_repeats, 2);
        assert_eq!(doc.task.n_rows, 200);

        let again = dir.path().join("again.json");
        assert_eq!(code(&["importance", "--rerun", out.to_str().unwrap(), "--out", again.to_str().unwrap()]), 0);
        let doc2 = ResultDocument::from_json(&std::fs::read_to_string(&again).unwrap()).unwrap();
        assert_eq!(doc2.rows, doc.rows);
        assert_eq!(code(&["importance", "--rerun", out.to_str().unwrap(), "--seed", "3"]), 2);
    }
}

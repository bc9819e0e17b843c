//! Inference procedures driven by real importance runs.

use fi_core::inference::{ci_nadeau_bengio, ci_quantile, cpi_test, lei_test, Alternative, InferenceOptions, PAdjust, TestKind};
use fi_core::perturbation::{compute_perturbation, PerturbationConfig};
use fi_core::refit::{loco, RefitConfig};
use fi_core::sim::{sim_correlated, sim_independent};
use fi_core::{LearnerSpec, Measure, ResamplingKind, ResamplingSpec, SamplerKind};

#[test]
fn knockoff_cpi_separates_signal_from_noise() {
    let task = sim_correlated(3000, 0.8, 21).unwrap();
    let rs = ResamplingSpec::new(ResamplingKind::holdout(), 21).instantiate(&task).unwrap();
    let res = compute_perturbation(
        &task,
        &PerturbationConfig::cfi(LearnerSpec::linear(), Measure::Mse, rs, SamplerKind::KnockoffGaussian).with_seed(21),
    )
    .unwrap();
    let opts = InferenceOptions::default().with_alternative(Alternative::Greater).with_p_adjust(PAdjust::BH);
    let inf = cpi_test(&res.scores, res.obs.as_ref(), res.sampler, &opts).unwrap();
    let p = |f: &str| inf.row(f).unwrap().p_value.unwrap();
    assert!(p("x1") < 1e-10 && p("x3") < 1e-10);
    assert!(p("x2") > 0.01 && p("x4") > 0.01);
    assert!(inf.rows.iter().all(|r| r.conf_upper == Some(f64::INFINITY)));
    // Wilcoxon variant agrees on the strong signals
    let w = cpi_test(&res.scores, res.obs.as_ref(), res.sampler, &opts.with_test(TestKind::Wilcox)).unwrap();
    assert!(w.row("x1").unwrap().p_value.unwrap() < 1e-10);
}

#[test]
fn cpi_refuses_non_knockoff_and_non_decomposable_runs() {
    let task = sim_correlated(300, 0.8, 22).unwrap();
    let rs = ResamplingSpec::new(ResamplingKind::holdout(), 22).instantiate(&task).unwrap();
    let gauss = compute_perturbation(
        &task,
        &PerturbationConfig::cfi(LearnerSpec::linear(), Measure::Mse, rs.clone(), SamplerKind::ConditionalGaussian),
    )
    .unwrap();
    assert!(cpi_test(&gauss.scores, gauss.obs.as_ref(), gauss.sampler, &InferenceOptions::default()).is_err());
    let rsq = compute_perturbation(
        &task,
        &PerturbationConfig::cfi(LearnerSpec::linear(), Measure::Rsq, rs, SamplerKind::KnockoffGaussian),
    )
    .unwrap();
    assert!(cpi_test(&rsq.scores, rsq.obs.as_ref(), rsq.sampler, &InferenceOptions::default()).is_err());
}

#[test]
fn lei_interval_covers_the_loco_value() {
    let task = sim_correlated(3000, 0.8, 23).unwrap();
    let rs = ResamplingSpec::new(ResamplingKind::holdout(), 23).instantiate(&task).unwrap();
    let res = loco(&task, &RefitConfig::new(LearnerSpec::linear(), Measure::Mae, rs).with_seed(23)).unwrap();
    let inf = lei_test(&res.scores, res.obs.as_ref(), &InferenceOptions::default().with_test(TestKind::Wilcox)).unwrap();
    let x1 = inf.row("x1").unwrap();
    assert!(x1.p_value.unwrap() < 1e-10);
    assert!(x1.conf_lower.unwrap() > 0.0 && x1.conf_lower.unwrap() < x1.conf_upper.unwrap());
    assert!(inf.row("x4").unwrap().p_value.unwrap() > 1e-4);
}

#[test]
fn corrected_interval_is_wider_and_resampling_aware() {
    let task = sim_independent(600, 3, &[1.0, 0.5, 0.0], 24).unwrap();
    let sub = ResamplingSpec::new(ResamplingKind::Subsampling { repeats: 12, ratio: 0.8 }, 24).instantiate(&task).unwrap();
    let res = compute_perturbation(&task, &PerturbationConfig::pfi(LearnerSpec::linear(), Measure::Mse, sub.clone()).with_seed(24)).unwrap();
    let opts = InferenceOptions::default();
    let nb = ci_nadeau_bengio(&res.scores, &sub, &opts).unwrap();
    let q = ci_quantile(&res.scores, &opts).unwrap();
    let width = |r: &fi_core::inference::InferenceRow| r.conf_upper.unwrap() - r.conf_lower.unwrap();
    assert!(width(nb.row("x1").unwrap()) > 0.0 && width(q.row("x1").unwrap()) > 0.0);
    assert!(nb.metadata.df == Some(11.0));

    let cv = ResamplingSpec::new(ResamplingKind::Cv { folds: 4 }, 24).instantiate(&task).unwrap();
    let res = compute_perturbation(&task, &PerturbationConfig::pfi(LearnerSpec::linear(), Measure::Mse, cv.clone())).unwrap();
    let err = ci_nadeau_bengio(&res.scores, &cv, &opts).unwrap_err();
    assert!(err.to_string().contains("subsampling or bootstrap"));
}

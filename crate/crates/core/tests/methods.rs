//! End-to-end importance values on the correlated linear DGP
//! y = 2·x1 + x3 + ε, (x1, x2) ~ N(0, [[1, r], [r, 1]]), checked against
//! closed forms for a correctly specified linear model.

use fi_core::perturbation::{compute_perturbation, PerturbationConfig};
use fi_core::refit::{compute_wvim, loco, RefitConfig, RefitDirection};
use fi_core::sim::sim_correlated;
use fi_core::{LearnerSpec, Measure, ResamplingInstance, ResamplingKind, ResamplingSpec, SamplerKind, Task};

const R: f64 = 0.8;

fn setup(seed: u64) -> (Task, ResamplingInstance) {
    let task = sim_correlated(5000, R, seed).unwrap();
    let rs = ResamplingSpec::new(ResamplingKind::holdout(), seed).instantiate(&task).unwrap();
    (task, rs)
}

/// Permuting x_j adds β_j²·E[(X_j − X_j')²] = 2β_j²·Var(X_j) to the MSE.
fn pfi_oracle(beta: f64) -> f64 {
    2.0 * beta * beta
}

/// Conditional resampling keeps only the residual variance 1 − r².
fn cfi_oracle(beta: f64) -> f64 {
    2.0 * beta * beta * (1.0 - R * R)
}

#[test]
fn pfi_matches_closed_form() {
    let (task, rs) = setup(11);
    let res = compute_perturbation(&task, &PerturbationConfig::pfi(LearnerSpec::linear(), Measure::Mse, rs).with_repeats(30).with_seed(1)).unwrap();
    let imp = |f: &str| res.scores.importance_of(f).unwrap();
    assert!((imp("x1") - pfi_oracle(2.0)).abs() < 0.6, "{}", imp("x1"));
    assert!((imp("x3") - pfi_oracle(1.0)).abs() < 0.2, "{}", imp("x3"));
    assert!(imp("x2").abs() < 0.05 && imp("x4").abs() < 0.05);
}

#[test]
fn cfi_matches_closed_form_for_both_conditional_samplers() {
    let (task, rs) = setup(12);
    let gauss = compute_perturbation(
        &task,
        &PerturbationConfig::cfi(LearnerSpec::linear(), Measure::Mse, rs.clone(), SamplerKind::ConditionalGaussian)
            .with_repeats(30)
            .with_seed(2),
    )
    .unwrap();
    let x1 = gauss.scores.importance_of("x1").unwrap();
    assert!((x1 - cfi_oracle(2.0)).abs() < 0.3, "{x1}");
    // x3 is independent of the rest, so CFI and PFI agree for it
    assert!((gauss.scores.importance_of("x3").unwrap() - cfi_oracle(1.0) / (1.0 - R * R)).abs() < 0.2);
    assert!(gauss.scores.importance_of("x2").unwrap().abs() < 0.05);

    // k-NN is biased towards 0 but must keep the ranking
    let knn = compute_perturbation(
        &task,
        &PerturbationConfig::cfi(LearnerSpec::linear(), Measure::Mse, rs, SamplerKind::ConditionalKnn { k: 20 })
            .with_repeats(3)
            .with_seed(2),
    )
    .unwrap();
    let v: Vec<f64> = ["x1", "x2", "x3", "x4"].iter().map(|f| knn.scores.importance_of(f).unwrap()).collect();
    assert!(v[0] > v[2] && v[2] > v[1].abs().max(v[3].abs()), "{v:?}");
}

#[test]
fn loco_and_leave_in_match_closed_form() {
    let (task, rs) = setup(13);
    let cfg = RefitConfig::new(LearnerSpec::linear(), Measure::Mse, rs.clone()).with_seed(3);
    let res = loco(&task, &cfg).unwrap();
    // without x1 the model leans on x2, leaving β1²(1 − r²) unexplained
    let x1 = res.scores.importance_of("x1").unwrap();
    assert!((x1 - 4.0 * (1.0 - R * R)).abs() < 0.15, "{x1}");
    assert!((res.scores.importance_of("x3").unwrap() - 1.0).abs() < 0.1);

    // leave-in of {x3}: Var(y) − Var(y − x3) = β3² = 1
    let cfg = cfg.with_direction(RefitDirection::LeaveIn).with_groups(vec![("x3".into(), vec!["x3".into()])]);
    let res = compute_wvim(&task, &cfg).unwrap();
    let v = res.scores.importance_of("x3").unwrap();
    assert!((v - 1.0).abs() < 0.15, "{v}");
    assert_eq!(res.obs_loss_diffs().unwrap().blocks.len(), 1);
}

#[test]
fn grouped_perturbation_of_both_correlated_features() {
    let (task, rs) = setup(14);
    let res = compute_perturbation(
        &task,
        &PerturbationConfig::pfi(LearnerSpec::linear(), Measure::Mse, rs)
            .with_groups(vec![("pair".into(), vec!["x1".into(), "x2".into()]), ("x3".into(), vec!["x3".into()])])
            .with_repeats(20)
            .with_seed(4),
    )
    .unwrap();
    // a joint permutation of the pair behaves like permuting x1 alone
    assert!((res.scores.importance_of("pair").unwrap() - 8.0).abs() < 0.6);
    assert_eq!(res.scores.features(), vec!["pair".to_string(), "x3".to_string()]);
}

#[test]
fn rsq_importance_is_positive_for_useful_features() {
    let (task, rs) = setup(15);
    let res = compute_perturbation(&task, &PerturbationConfig::pfi(LearnerSpec::linear(), Measure::Rsq, rs).with_seed(5)).unwrap();
    assert!(res.scores.importance_of("x1").unwrap() > 0.5);
    assert!(res.obs.is_none());
}

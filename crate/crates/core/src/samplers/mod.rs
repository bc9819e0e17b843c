//! Feature samplers producing replacement values for features of interest.
//!
//! * `MarginalPermutation` shuffles the requested columns over the rows.
//! * `ConditionalGaussian` draws from the Gaussian conditional given an
//!   arbitrary conditioning set.
//! * `KnockoffGaussian` returns columns of one joint knockoff copy.
//! * `ConditionalKnn` copies values from a random nearest training neighbour
//!   in the conditioning coordinates. It is a nonparametric fallback for
//!   data far from Gaussian.

mod gaussian;
mod knockoff;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{nearest, Standardizer};
use crate::matrix::FeatureMatrix;
use crate::rng::{self, Rng};
use crate::task::Task;

pub(crate) use gaussian::GaussianConditional;
use gaussian::GaussianFit;
pub use knockoff::KnockoffState;

pub const KNOCKOFF_CFI_ONLY: &str = "knockoff sampling is only compatible with CFI";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum SamplerKind {
    MarginalPermutation,
    ConditionalGaussian,
    KnockoffGaussian,
    ConditionalKnn { k: usize },
}

impl SamplerKind {
    pub fn id(&self) -> &'static str {
        match self {
            SamplerKind::MarginalPermutation => "marginal_permutation",
            SamplerKind::ConditionalGaussian => "conditional_gaussian",
            SamplerKind::KnockoffGaussian => "knockoff_gaussian",
            SamplerKind::ConditionalKnn { .. } => "conditional_knn",
        }
    }

    /// Whether the sampler can condition on other features.
    pub fn is_conditional(&self) -> bool {
        !matches!(self, SamplerKind::MarginalPermutation)
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "marginal_permutation" | "permutation" => Ok(SamplerKind::MarginalPermutation),
            "conditional_gaussian" | "gaussian" => Ok(SamplerKind::ConditionalGaussian),
            "knockoff_gaussian" | "knockoff" => Ok(SamplerKind::KnockoffGaussian),
            "conditional_knn" | "knn" => Ok(SamplerKind::ConditionalKnn { k: 20 }),
            other => Err(Error::param(format!("unknown sampler '{other}'"))),
        }
    }
}

/// Which features the draw is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Conditioning<'a> {
    /// Every feature not being sampled (CFI).
    AllOthers,
    /// An explicit set of feature indices (RFI, SAGE).
    Set(&'a [usize]),
}

#[derive(Debug, Clone, PartialEq)]
enum State {
    Permutation,
    Gaussian(GaussianFit),
    Knockoff(GaussianFit, KnockoffState),
    Knn {
        k: usize,
        scaler: Standardizer,
        scaled: FeatureMatrix,
        raw: FeatureMatrix,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerModel {
    kind: SamplerKind,
    feature_names: Vec<String>,
    state: State,
    notes: Vec<String>,
}

impl SamplerModel {
    /// Fits a sampler on the given training rows (ids) of `task`.
    pub fn fit(kind: SamplerKind, task: &Task, train_rows: &[usize]) -> Result<Self> {
        let pos = task.positions(train_rows)?;
        let cols: Vec<usize> = (0..task.n_features()).collect();
        Self::fit_matrix(kind, task.feature_names().to_vec(), &task.matrix(&pos, &cols))
    }

    pub fn fit_matrix(kind: SamplerKind, feature_names: Vec<String>, x: &FeatureMatrix) -> Result<Self> {
        if x.nrows() < 2 {
            return Err(Error::param("sampler needs at least 2 training rows"));
        }
        let p = x.ncols();
        let mut notes = Vec::new();
        let state = match kind {
            SamplerKind::MarginalPermutation => State::Permutation,
            SamplerKind::ConditionalGaussian | SamplerKind::KnockoffGaussian => {
                if x.nrows() < p + 1 {
                    notes.push(format!(
                        "{} training rows for {p} features; covariance is regularized",
                        x.nrows()
                    ));
                }
                let fit = GaussianFit::estimate(x);
                if fit.ridge > 0.0 {
                    notes.push(format!("covariance diagonal lifted by {:.3e}", fit.ridge));
                }
                if kind == SamplerKind::KnockoffGaussian {
                    let ko = KnockoffState::new(&fit);
                    State::Knockoff(fit, ko)
                } else {
                    State::Gaussian(fit)
                }
            }
            SamplerKind::ConditionalKnn { k } => {
                if k == 0 {
                    return Err(Error::param("conditional_knn needs k >= 1"));
                }
                let scaler = Standardizer::fit(x);
                State::Knn { k, scaled: scaler.transform(x), scaler, raw: x.clone() }
            }
        };
        Ok(Self { kind, feature_names, state, notes })
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Diagnostics recorded at fit time (regularization, small samples).
    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn mean(&self) -> Option<Vec<f64>> {
        self.gaussian().map(|g| g.mean.iter().copied().collect())
    }

    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        self.gaussian().map(|g| g.cov.clone())
    }

    pub fn knockoff_state(&self) -> Option<&KnockoffState> {
        match &self.state {
            State::Knockoff(_, k) => Some(k),
            _ => None,
        }
    }

    fn gaussian(&self) -> Option<&GaussianFit> {
        match &self.state {
            State::Gaussian(g) | State::Knockoff(g, _) => Some(g),
            _ => None,
        }
    }

    /// The Gaussian conditional law of `target` given `given`, for the
    /// conditional Gaussian sampler only.
    pub(crate) fn gaussian_conditional(&self, target: &[usize], given: &[usize]) -> Option<GaussianConditional> {
        match &self.state {
            State::Gaussian(g) => Some(g.conditional(target, given)),
            _ => None,
        }
    }

    /// Name-based entry point. `conditioning_set = None` conditions on all
    /// features not requested. Returns one replacement column per requested
    /// feature, aligned with `rows`.
    pub fn sample<S: AsRef<str>>(
        &self,
        data: &Task,
        rows: &[usize],
        features: &[S],
        conditioning_set: Option<&[S]>,
        seed: u64,
    ) -> Result<Vec<Vec<f64>>> {
        let map = self.column_map(data)?;
        let pos = data.positions(rows)?;
        let x = data.matrix(&pos, &map);
        let idx = |names: &[S]| -> Result<Vec<usize>> {
            names
                .iter()
                .map(|n| {
                    self.feature_names
                        .iter()
                        .position(|f| f == n.as_ref())
                        .ok_or_else(|| Error::UnknownFeature(n.as_ref().to_string()))
                })
                .collect()
        };
        let f = idx(features)?;
        let g = conditioning_set.map(idx).transpose()?;
        let cond = match &g {
            None => Conditioning::AllOthers,
            Some(g) => Conditioning::Set(g),
        };
        let mut rng = rng::substream(seed, &[rng::tag("sample")]);
        self.sample_matrix(&x, &f, cond, &mut rng)
    }

    fn column_map(&self, task: &Task) -> Result<Vec<usize>> {
        let missing: Vec<String> = self
            .feature_names
            .iter()
            .filter(|f| !task.feature_names().contains(f))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::SchemaMismatch(missing));
        }
        task.feature_indices(&self.feature_names)
    }

    /// Resolves the conditioning set to sorted indices, checking it against
    /// the requested features and the sampler kind.
    pub fn resolve_conditioning(&self, features: &[usize], cond: Conditioning<'_>) -> Result<Vec<usize>> {
        let p = self.feature_names.len();
        let mut g: Vec<usize> = match cond {
            Conditioning::AllOthers => (0..p).filter(|j| !features.contains(j)).collect(),
            Conditioning::Set(g) => {
                if let Some(j) = g.iter().find(|j| features.contains(j)) {
                    return Err(Error::param(format!(
                        "feature '{}' is both sampled and conditioned on",
                        self.feature_names[*j]
                    )));
                }
                g.to_vec()
            }
        };
        g.sort_unstable();
        g.dedup();
        match self.kind {
            SamplerKind::MarginalPermutation if !g.is_empty() => Err(Error::IncompatibleSampler(
                "marginal_permutation cannot condition on other features".into(),
            )),
            SamplerKind::KnockoffGaussian if matches!(cond, Conditioning::Set(s) if !s.is_empty()) => {
                Err(Error::IncompatibleSampler(KNOCKOFF_CFI_ONLY.into()))
            }
            _ => Ok(g),
        }
    }

    /// Index-based sampling on a matrix holding every sampler feature (in
    /// sampler order) for the rows to perturb.
    pub fn sample_matrix(
        &self,
        data: &FeatureMatrix,
        features: &[usize],
        cond: Conditioning<'_>,
        rng: &mut Rng,
    ) -> Result<Vec<Vec<f64>>> {
        if features.is_empty() {
            return Err(Error::param("no features requested"));
        }
        let given = self.resolve_conditioning(features, cond)?;
        let m = data.nrows();
        Ok(match &self.state {
            State::Permutation => {
                let mut perm: Vec<usize> = (0..m).collect();
                perm.shuffle(rng);
                features.iter().map(|&f| perm.iter().map(|&i| data.get(i, f)).collect()).collect()
            }
            State::Gaussian(fit) => fit.conditional(features, &given).draw(data, rng),
            State::Knockoff(fit, ko) => {
                let draw = ko.draw(fit, data, rng);
                features.iter().map(|&f| draw.column(f)).collect()
            }
            State::Knn { k, scaler, scaled, raw } => {
                let mut out = vec![Vec::with_capacity(m); features.len()];
                let reference = scaled.select_columns(&given);
                let mut z = vec![0.0; data.ncols()];
                let mut q = vec![0.0; given.len()];
                for i in 0..m {
                    let donor = if given.is_empty() {
                        rng.random_range(0..raw.nrows())
                    } else {
                        scaler.transform_row(data.row(i), &mut z);
                        for (qv, &g) in q.iter_mut().zip(&given) {
                            *qv = z[g];
                        }
                        let nn = nearest(&reference, &q, *k);
                        nn[rng.random_range(0..nn.len())]
                    };
                    for (col, &f) in out.iter_mut().zip(features) {
                        col.push(raw.get(donor, f));
                    }
                }
                out
            }
        })
    }

    /// A full joint knockoff copy of `data`; all columns come from one draw.
    pub fn knockoff_matrix(&self, data: &FeatureMatrix, rng: &mut Rng) -> Result<FeatureMatrix> {
        match &self.state {
            State::Knockoff(fit, ko) => Ok(ko.draw(fit, data, rng)),
            _ => Err(Error::IncompatibleSampler(format!("{} does not produce knockoffs", self.kind))),
        }
    }

    #[doc(hidden)]
    pub fn gaussian_conditional_moments(&self, target: &[usize], given: &[usize]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let g = self.gaussian()?;
        let s_gg = g.submatrix(given, given);
        let s_fg = g.submatrix(target, given);
        let mu = DVector::from_iterator(target.len(), target.iter().map(|&j| g.mean[j]));
        let mut cov = g.submatrix(target, target);
        if !given.is_empty() {
            let inv = s_gg.try_inverse()?;
            cov -= &s_fg * inv * s_fg.transpose();
        }
        Some((mu, cov))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_col_task() -> Task {
        Task::new(
            "t",
            vec![("a".into(), vec![1.0, 2.0, 3.0, 4.0]), ("b".into(), vec![2.0, 1.0, 4.0, 3.0])],
            ("y".into(), vec![0.0; 4]),
        )
        .unwrap()
    }

    #[test]
    fn permutation_is_a_permutation() {
        let t = two_col_task();
        let s = SamplerModel::fit(SamplerKind::MarginalPermutation, &t, t.row_ids()).unwrap();
        let out = s.sample(&t, &[1, 2, 3], &["a"], Some(&[]), 5).unwrap();
        let mut v = out[0].clone();
        v.sort_by(f64::total_cmp);
        assert_eq!(v, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn permutation_rejects_conditioning() {
        let t = two_col_task();
        let s = SamplerModel::fit(SamplerKind::MarginalPermutation, &t, t.row_ids()).unwrap();
        assert!(matches!(s.sample(&t, &[1, 2], &["a"], Some(&["b"]), 1), Err(Error::IncompatibleSampler(_))));
        assert!(s.sample(&t, &[1, 2], &["a"], None, 1).is_err());
    }

    #[test]
    fn knockoff_rejects_explicit_conditioning() {
        let t = two_col_task();
        let s = SamplerModel::fit(SamplerKind::KnockoffGaussian, &t, t.row_ids()).unwrap();
        let err = s.sample(&t, &[1, 2], &["a"], Some(&["b"]), 1).unwrap_err();
        assert_eq!(err.to_string(), KNOCKOFF_CFI_ONLY);
        assert!(s.sample(&t, &[1, 2], &["a"], None, 1).is_ok());
    }

    #[test]
    fn overlapping_sets_are_rejected() {
        let t = two_col_task();
        let s = SamplerModel::fit(SamplerKind::ConditionalGaussian, &t, t.row_ids()).unwrap();
        assert!(s.sample(&t, &[1], &["a"], Some(&["a"]), 1).is_err());
    }

    #[test]
    fn too_few_rows() {
        let t = two_col_task();
        assert!(SamplerModel::fit(SamplerKind::ConditionalGaussian, &t, &[1]).is_err());
    }

    #[test]
    fn knockoff_s_for_two_correlated_features() {
        // sample correlation exactly 0.8: x1 = αu + βv, x2 = αu − βv with α² = .9, β² = .1
        let (al, be) = (0.9f64.sqrt(), 0.1f64.sqrt());
        let x = FeatureMatrix::from_columns(&[vec![al, -al, be, -be], vec![al, -al, -be, be]]);
        let s = SamplerModel::fit_matrix(SamplerKind::KnockoffGaussian, vec!["a".into(), "b".into()], &x).unwrap();
        let cov = s.covariance().unwrap();
        let corr = cov[(0, 1)] / (cov[(0, 0)] * cov[(1, 1)]).sqrt();
        assert!((corr - 0.8).abs() < 1e-9, "corr {corr}");
        let sv = &s.knockoff_state().unwrap().s_corr;
        assert!((sv[0] - 0.4).abs() < 1e-9 && (sv[1] - 0.4).abs() < 1e-9, "{sv:?}");
    }

    #[test]
    fn knn_with_empty_conditioning_copies_training_values() {
        let t = two_col_task();
        let s = SamplerModel::fit(SamplerKind::ConditionalKnn { k: 2 }, &t, t.row_ids()).unwrap();
        let out = s.sample(&t, &[1, 2, 3, 4], &["a", "b"], Some(&[]), 9).unwrap();
        for i in 0..4 {
            let pair = (out[0][i], out[1][i]);
            assert!([(1.0, 2.0), (2.0, 1.0), (3.0, 4.0), (4.0, 3.0)].contains(&pair));
        }
    }
}

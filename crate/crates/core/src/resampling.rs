//! Train/test splitting strategies.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::task::Task;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "lowercase")]
pub enum ResamplingKind {
    Holdout { ratio: f64 },
    Cv { folds: usize },
    Subsampling { repeats: usize, ratio: f64 },
    /// Test sets are the out-of-bag rows of each bootstrap sample.
    Bootstrap { repeats: usize },
}

impl ResamplingKind {
    pub fn holdout() -> Self {
        ResamplingKind::Holdout { ratio: 2.0 / 3.0 }
    }

    pub fn cv() -> Self {
        ResamplingKind::Cv { folds: 5 }
    }

    pub fn subsampling() -> Self {
        ResamplingKind::Subsampling { repeats: 15, ratio: 0.9 }
    }

    pub fn bootstrap() -> Self {
        ResamplingKind::Bootstrap { repeats: 30 }
    }

    pub fn id(&self) -> &'static str {
        match self {
            ResamplingKind::Holdout { .. } => "holdout",
            ResamplingKind::Cv { .. } => "cv",
            ResamplingKind::Subsampling { .. } => "subsampling",
            ResamplingKind::Bootstrap { .. } => "bootstrap",
        }
    }

    /// Whether iterations overlap in their training sets in the way the
    /// Nadeau–Bengio variance correction assumes.
    pub fn supports_corrected_t(&self) -> bool {
        matches!(self, ResamplingKind::Subsampling { .. } | ResamplingKind::Bootstrap { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResamplingSpec {
    pub kind: ResamplingKind,
    pub seed: u64,
}

impl ResamplingSpec {
    pub fn new(kind: ResamplingKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let ratio_ok = |r: f64| r > 0.0 && r < 1.0;
        match self.kind {
            ResamplingKind::Holdout { ratio } | ResamplingKind::Subsampling { ratio, .. } if !ratio_ok(ratio) => {
                Err(Error::param(format!("ratio must lie in (0, 1), got {ratio}")))
            }
            ResamplingKind::Cv { folds } if folds < 2 => Err(Error::param("cv needs at least 2 folds")),
            ResamplingKind::Subsampling { repeats: 0, .. } | ResamplingKind::Bootstrap { repeats: 0 } => {
                Err(Error::param("repeats must be >= 1"))
            }
            _ => Ok(()),
        }
    }

    pub fn instantiate(&self, task: &Task) -> Result<ResamplingInstance> {
        self.validate()?;
        let ids = task.row_ids();
        let n = ids.len();
        if n < 2 {
            return Err(Error::param("resampling needs at least 2 rows"));
        }
        let mut rng = rng::substream(self.seed, &[rng::tag("resampling")]);
        let mut train = Vec::new();
        let mut test = Vec::new();
        let split = |ratio: f64| -> Result<usize> {
            let k = (ratio * n as f64).floor() as usize;
            if k == 0 || k >= n {
                Err(Error::param(format!("ratio {ratio} on {n} rows leaves an empty train or test set")))
            } else {
                Ok(k)
            }
        };
        match self.kind {
            ResamplingKind::Holdout { ratio } => {
                let k = split(ratio)?;
                let mut perm = ids.to_vec();
                perm.shuffle(&mut rng);
                train.push(sorted(&perm[..k]));
                test.push(sorted(&perm[k..]));
            }
            ResamplingKind::Cv { folds } => {
                if n < folds {
                    return Err(Error::param(format!("cannot make {folds} folds from {n} rows")));
                }
                let mut perm = ids.to_vec();
                perm.shuffle(&mut rng);
                let base = n / folds;
                let extra = n % folds;
                let mut start = 0;
                let mut chunks = Vec::with_capacity(folds);
                for f in 0..folds {
                    let len = base + usize::from(f < extra);
                    chunks.push(&perm[start..start + len]);
                    start += len;
                }
                for f in 0..folds {
                    test.push(sorted(chunks[f]));
                    let rest: Vec<usize> = chunks
                        .iter()
                        .enumerate()
                        .filter(|(g, _)| *g != f)
                        .flat_map(|(_, c)| c.iter().copied())
                        .collect();
                    train.push(sorted(&rest));
                }
            }
            ResamplingKind::Subsampling { repeats, ratio } => {
                let k = split(ratio)?;
                for _ in 0..repeats {
                    let mut perm = ids.to_vec();
                    perm.shuffle(&mut rng);
                    train.push(sorted(&perm[..k]));
                    test.push(sorted(&perm[k..]));
                }
            }
            ResamplingKind::Bootstrap { repeats } => {
                for _ in 0..repeats {
                    let mut in_bag = vec![false; n];
                    let mut draw: Vec<usize> = (0..n)
                        .map(|_| {
                            let i = rng.random_range(0..n);
                            in_bag[i] = true;
                            ids[i]
                        })
                        .collect();
                    draw.sort_unstable();
                    let oob: Vec<usize> = (0..n).filter(|&i| !in_bag[i]).map(|i| ids[i]).collect();
                    if oob.is_empty() {
                        return Err(Error::param("bootstrap sample left no out-of-bag rows"));
                    }
                    train.push(draw);
                    test.push(sorted(&oob));
                }
            }
        }
        Ok(ResamplingInstance { spec: Some(self.clone()), train, test })
    }
}

fn sorted(ids: &[usize]) -> Vec<usize> {
    let mut v = ids.to_vec();
    v.sort_unstable();
    v
}

/// Concrete train/test row ids per iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResamplingInstance {
    /// `None` for instances assembled from explicit splits.
    pub spec: Option<ResamplingSpec>,
    train: Vec<Vec<usize>>,
    test: Vec<Vec<usize>>,
}

impl ResamplingInstance {
    /// Instance from explicit splits, e.g. the holdout a pre-fit model was
    /// trained on.
    pub fn from_splits(train: Vec<Vec<usize>>, test: Vec<Vec<usize>>) -> Result<Self> {
        if train.len() != test.len() || train.is_empty() {
            return Err(Error::param("need one train and one test set per iteration"));
        }
        if test.iter().any(Vec::is_empty) {
            return Err(Error::param("test sets must be non-empty"));
        }
        Ok(Self { spec: None, train, test })
    }

    pub fn iterations(&self) -> usize {
        self.test.len()
    }

    pub fn train_ids(&self, k: usize) -> &[usize] {
        &self.train[k]
    }

    pub fn test_ids(&self, k: usize) -> &[usize] {
        &self.test[k]
    }

    pub fn n_train(&self, k: usize) -> usize {
        self.train[k].len()
    }

    pub fn n_test(&self, k: usize) -> usize {
        self.test[k].len()
    }

    pub fn kind(&self) -> Option<&ResamplingKind> {
        self.spec.as_ref().map(|s| &s.kind)
    }

    /// mean(n_test) / mean(n_train) over iterations.
    pub fn test_train_ratio(&self) -> f64 {
        let k = self.iterations() as f64;
        let nt: usize = self.test.iter().map(Vec::len).sum();
        let nr: usize = self.train.iter().map(Vec::len).sum();
        (nt as f64 / k) / (nr as f64 / k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn task(n: usize) -> Task {
        Task::new(
            "t",
            vec![("x".into(), (0..n).map(|i| i as f64).collect())],
            ("y".into(), vec![0.0; n]),
        )
        .unwrap()
    }

    #[test]
    fn holdout_sizes() {
        let r = ResamplingSpec::new(ResamplingKind::holdout(), 1).instantiate(&task(9)).unwrap();
        assert_eq!(r.iterations(), 1);
        assert_eq!((r.n_train(0), r.n_test(0)), (6, 3));
        let all: HashSet<_> = r.train_ids(0).iter().chain(r.test_ids(0)).collect();
        assert_eq!(all.len(), 9);
    }

    #[test]
    fn cv_partitions_rows() {
        let r = ResamplingSpec::new(ResamplingKind::Cv { folds: 3 }, 4).instantiate(&task(9)).unwrap();
        let mut seen = Vec::new();
        for k in 0..3 {
            assert_eq!(r.n_test(k), 3);
            let tr: HashSet<_> = r.train_ids(k).iter().collect();
            assert!(r.test_ids(k).iter().all(|i| !tr.contains(i)));
            seen.extend_from_slice(r.test_ids(k));
        }
        seen.sort_unstable();
        assert_eq!(seen, (1..=9).collect::<Vec<_>>());
    }

    #[test]
    fn bootstrap_oob_fraction() {
        // (1 - 1/n)^n at n = 100 is 0.366
        let t = task(100);
        let mut fracs = Vec::new();
        for seed in 0..50 {
            let r = ResamplingSpec::new(ResamplingKind::Bootstrap { repeats: 1 }, seed).instantiate(&t).unwrap();
            let tr: HashSet<_> = r.train_ids(0).iter().collect();
            assert!(r.test_ids(0).iter().all(|i| !tr.contains(i)));
            assert_eq!(r.n_train(0), 100);
            fracs.push(r.n_test(0) as f64 / 100.0);
        }
        let mean = fracs.iter().sum::<f64>() / 50.0;
        assert!((mean - 0.99f64.powi(100)).abs() < 0.05, "mean oob fraction {mean}");
    }

    #[test]
    fn subsampling_iterations_differ() {
        let r = ResamplingSpec::new(ResamplingKind::subsampling(), 3).instantiate(&task(100)).unwrap();
        let distinct: HashSet<_> = (0..15).map(|k| r.test_ids(k).to_vec()).collect();
        assert_eq!(distinct.len(), 15);
        assert_eq!(r.n_test(0), 10);
    }

    #[test]
    fn same_seed_same_instance() {
        let t = task(50);
        for kind in [ResamplingKind::holdout(), ResamplingKind::cv(), ResamplingKind::subsampling(), ResamplingKind::bootstrap()] {
            let a = ResamplingSpec::new(kind.clone(), 11).instantiate(&t).unwrap();
            let b = ResamplingSpec::new(kind, 11).instantiate(&t).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn infeasible_parameters() {
        assert!(ResamplingSpec::new(ResamplingKind::Holdout { ratio: 0.01 }, 0).instantiate(&task(9)).is_err());
        assert!(ResamplingSpec::new(ResamplingKind::Holdout { ratio: 1.0 }, 0).instantiate(&task(9)).is_err());
        assert!(ResamplingSpec::new(ResamplingKind::Cv { folds: 10 }, 0).instantiate(&task(9)).is_err());
        assert!(ResamplingSpec::new(ResamplingKind::Cv { folds: 1 }, 0).instantiate(&task(9)).is_err());
    }
}

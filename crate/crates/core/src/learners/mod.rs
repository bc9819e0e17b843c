//! Learner catalog with a single fit/predict contract.
//!
//! Every importance method goes through [`TrainedModel::fit`] and
//! [`TrainedModel::predict_matrix`], so any learner can back any method.

mod knn;
mod linear;
mod tree;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::measure::Prediction;
use crate::task::Task;

pub use knn::KnnModel;
pub(crate) use knn::{nearest, Standardizer};
pub use linear::{LinearModel, FALLBACK_LAMBDA};
pub use tree::{Forest, RegressionTree};

use tree::{ForestSettings, TreeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "lowercase")]
pub enum LearnerKind {
    /// Predicts the training mean.
    Featureless,
    Linear,
    Ridge {
        lambda: f64,
    },
    Cart {
        max_depth: usize,
        min_node_size: usize,
    },
    Forest {
        n_trees: usize,
        /// Defaults to ⌈p/3⌉ of the features the forest is trained on.
        mtry: Option<usize>,
        min_node_size: usize,
        max_depth: Option<usize>,
        /// Test hook; disabling bagging trains every tree on all rows.
        #[serde(default = "default_true")]
        bootstrap: bool,
    },
    Knn {
        k: usize,
    },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub seed: Option<u64>,
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind) -> Self {
        Self { kind, seed: None }
    }

    pub fn featureless() -> Self {
        Self::new(LearnerKind::Featureless)
    }

    pub fn linear() -> Self {
        Self::new(LearnerKind::Linear)
    }

    pub fn ridge(lambda: f64) -> Self {
        Self::new(LearnerKind::Ridge { lambda })
    }

    pub fn cart() -> Self {
        Self::new(LearnerKind::Cart { max_depth: 8, min_node_size: 5 })
    }

    pub fn forest() -> Self {
        Self::new(LearnerKind::Forest {
            n_trees: 500,
            mtry: None,
            min_node_size: 5,
            max_depth: None,
            bootstrap: true,
        })
    }

    pub fn knn() -> Self {
        Self::new(LearnerKind::Knn { k: 10 })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn id(&self) -> &'static str {
        match self.kind {
            LearnerKind::Featureless => "featureless",
            LearnerKind::Linear => "linear",
            LearnerKind::Ridge { .. } => "ridge",
            LearnerKind::Cart { .. } => "cart",
            LearnerKind::Forest { .. } => "forest",
            LearnerKind::Knn { .. } => "knn",
        }
    }

    /// Builds a spec from an id and `key=value` hyperparameters. Unknown keys
    /// and out-of-range values are rejected.
    pub fn parse<K: AsRef<str>, V: AsRef<str>>(id: &str, params: &[(K, V)]) -> Result<Self> {
        let mut spec = match id.trim().to_ascii_lowercase().as_str() {
            "featureless" => Self::featureless(),
            "linear" | "lm" => Self::linear(),
            "ridge" => Self::ridge(1e-3),
            "cart" | "rpart" => Self::cart(),
            "forest" | "ranger" => Self::forest(),
            "knn" => Self::knn(),
            other => return Err(Error::param(format!("unknown learner '{other}'"))),
        };
        for (key, value) in params {
            let (key, value) = (key.as_ref().trim(), value.as_ref().trim());
            let learner = spec.id();
            let bad = || Error::param(format!("invalid value '{value}' for {learner} hyperparameter '{key}'"));
            let as_usize = || value.parse::<usize>().map_err(|_| bad());
            match (&mut spec.kind, key) {
                (_, "seed") => spec.seed = Some(value.parse().map_err(|_| bad())?),
                (LearnerKind::Ridge { lambda }, "lambda") => *lambda = value.parse().map_err(|_| bad())?,
                (LearnerKind::Cart { max_depth, .. }, "max_depth") => *max_depth = as_usize()?,
                (LearnerKind::Cart { min_node_size, .. }, "min_node_size") => *min_node_size = as_usize()?,
                (LearnerKind::Forest { n_trees, .. }, "n_trees" | "num_trees") => *n_trees = as_usize()?,
                (LearnerKind::Forest { mtry, .. }, "mtry") => *mtry = Some(as_usize()?),
                (LearnerKind::Forest { min_node_size, .. }, "min_node_size") => *min_node_size = as_usize()?,
                (LearnerKind::Forest { max_depth, .. }, "max_depth") => *max_depth = Some(as_usize()?),
                (LearnerKind::Knn { k }, "k") => *k = as_usize()?,
                _ => {
                    return Err(Error::param(format!(
                        "unknown hyperparameter '{key}' for learner {learner}"
                    )))
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::param(format!("{}: {m}", self.id())));
        match self.kind {
            LearnerKind::Ridge { lambda } if !(lambda >= 0.0 && lambda.is_finite()) => {
                fail("lambda must be a finite value >= 0")
            }
            LearnerKind::Cart { min_node_size: 0, .. } | LearnerKind::Forest { min_node_size: 0, .. } => {
                fail("min_node_size must be >= 1")
            }
            LearnerKind::Forest { n_trees: 0, .. } => fail("n_trees must be >= 1"),
            LearnerKind::Forest { mtry: Some(0), .. } => fail("mtry must be >= 1"),
            LearnerKind::Knn { k: 0 } => fail("k must be >= 1"),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum FittedState {
    Featureless(f64),
    Linear(LinearModel),
    Tree(RegressionTree),
    Forest(Forest),
    Knn(KnnModel),
}

/// A fitted predictor together with its training schema.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    spec: LearnerSpec,
    feature_names: Vec<String>,
    state: FittedState,
    degenerate: bool,
}

impl TrainedModel {
    /// Fits `spec` on the rows of `task` with the given ids (repeats allowed,
    /// as in bootstrap training sets).
    pub fn fit(spec: &LearnerSpec, task: &Task, rows: &[usize]) -> Result<Self> {
        let positions = task.positions(rows)?;
        let cols: Vec<usize> = (0..task.n_features()).collect();
        let x = task.matrix(&positions, &cols);
        let y = task.targets_at(&positions);
        Self::fit_matrix(spec, task.feature_names().to_vec(), &x, &y)
    }

    pub fn fit_matrix(
        spec: &LearnerSpec,
        feature_names: Vec<String>,
        x: &FeatureMatrix,
        y: &[f64],
    ) -> Result<Self> {
        spec.validate()?;
        if x.nrows() == 0 || y.is_empty() {
            return Err(Error::param("cannot fit a learner on zero rows"));
        }
        assert_eq!(x.nrows(), y.len());
        assert_eq!(x.ncols(), feature_names.len());
        let seed = spec.seed.unwrap_or(0);
        let p = x.ncols();
        let mut degenerate = false;
        let state = match spec.kind {
            LearnerKind::Featureless => FittedState::Featureless(y.iter().sum::<f64>() / y.len() as f64),
            _ if p == 0 => FittedState::Featureless(y.iter().sum::<f64>() / y.len() as f64),
            LearnerKind::Linear => {
                let (m, d) = linear::fit(x, y, None);
                degenerate = d;
                FittedState::Linear(m)
            }
            LearnerKind::Ridge { lambda } => FittedState::Linear(linear::fit(x, y, Some(lambda)).0),
            LearnerKind::Cart { max_depth, min_node_size } => {
                let params = TreeParams { max_depth, min_node_size, mtry: None };
                let mut rng = crate::rng::substream(seed, &[crate::rng::tag("cart")]);
                FittedState::Tree(RegressionTree::grow(x, y, (0..x.nrows()).collect(), params, &mut rng))
            }
            LearnerKind::Forest { n_trees, mtry, min_node_size, max_depth, bootstrap } => {
                let mtry = mtry.unwrap_or_else(|| p.div_ceil(3)).min(p);
                let settings = ForestSettings {
                    n_trees,
                    tree: TreeParams {
                        max_depth: max_depth.unwrap_or(usize::MAX),
                        min_node_size,
                        mtry: Some(mtry),
                    },
                    bootstrap,
                };
                FittedState::Forest(Forest::fit(x, y, settings, seed))
            }
            LearnerKind::Knn { k } => FittedState::Knn(KnnModel::fit(x, y, k)),
        };
        Ok(Self { spec: spec.clone(), feature_names, state, degenerate })
    }

    pub fn spec(&self) -> &LearnerSpec {
        &self.spec
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Set when least squares hit a rank-deficient design and fell back to
    /// ridge with [`FALLBACK_LAMBDA`].
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn linear(&self) -> Option<&LinearModel> {
        match &self.state {
            FittedState::Linear(m) => Some(m),
            _ => None,
        }
    }

    pub fn forest(&self) -> Option<&Forest> {
        match &self.state {
            FittedState::Forest(f) => Some(f),
            _ => None,
        }
    }

    /// For each training feature, its column index in `task`.
    pub fn column_map(&self, task_features: &[String]) -> Result<Vec<usize>> {
        let mut missing = Vec::new();
        let map: Vec<usize> = self
            .feature_names
            .iter()
            .filter_map(|f| match task_features.iter().position(|t| t == f) {
                Some(j) => Some(j),
                None => {
                    missing.push(f.clone());
                    None
                }
            })
            .collect();
        if missing.is_empty() {
            Ok(map)
        } else {
            Err(Error::SchemaMismatch(missing))
        }
    }

    pub fn predict(&self, task: &Task, rows: &[usize]) -> Result<Prediction> {
        let map = self.column_map(task.feature_names())?;
        let positions = task.positions(rows)?;
        let x = task.matrix(&positions, &map);
        let response = self.predict_matrix(&x);
        Prediction::new(rows.to_vec(), task.targets_at(&positions), response)
    }

    /// Predicts rows of `x`, whose columns are in training-schema order.
    pub fn predict_matrix(&self, x: &FeatureMatrix) -> Vec<f64> {
        assert_eq!(x.ncols(), self.feature_names.len(), "column count does not match schema");
        let rows = 0..x.nrows();
        match &self.state {
            FittedState::Featureless(m) => vec![*m; x.nrows()],
            FittedState::Linear(m) => rows.map(|i| m.predict_row(x.row(i))).collect(),
            FittedState::Tree(t) => rows.map(|i| t.predict_row(x.row(i))).collect(),
            FittedState::Forest(f) => f.predict_matrix(x),
            FittedState::Knn(m) => {
                if x.nrows() > 256 {
                    rows.into_par_iter().with_min_len(32).map(|i| m.predict_row(x.row(i))).collect()
                } else {
                    rows.map(|i| m.predict_row(x.row(i))).collect()
                }
            }
        }
    }

    /// Like [`predict_matrix`](Self::predict_matrix), but `x` holds columns in
    /// some other order and `cols[k]` is the column of the k-th model feature.
    pub fn predict_mapped(&self, x: &FeatureMatrix, cols: &[usize]) -> Vec<f64> {
        let identity = cols.len() == x.ncols() && cols.iter().enumerate().all(|(k, &c)| k == c);
        if identity {
            self.predict_matrix(x)
        } else {
            self.predict_matrix(&x.select_columns(cols))
        }
    }

    /// Per-tree predictions for forests, `None` for other learners.
    pub fn tree_predictions(&self, x: &FeatureMatrix) -> Option<Vec<Vec<f64>>> {
        self.forest().map(|f| {
            f.trees()
                .iter()
                .map(|t| (0..x.nrows()).map(|i| t.predict_row(x.row(i))).collect())
                .collect()
        })
    }
}

//! Immutable tabular regression task.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// Named numeric feature columns plus one numeric target, with stable
/// 1-based row identifiers. All values are checked finite at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    name: String,
    feature_names: Vec<String>,
    columns: Vec<Vec<f64>>,
    target_name: String,
    target: Vec<f64>,
    row_ids: Vec<usize>,
    positions: HashMap<usize, usize>,
}

impl Task {
    /// Builds a task with row ids `1..=n`.
    pub fn new(
        name: impl Into<String>,
        features: Vec<(String, Vec<f64>)>,
        target: (String, Vec<f64>),
    ) -> Result<Self> {
        let n = target.1.len();
        Self::with_row_ids(name, features, target, (1..=n).collect())
    }

    pub fn with_row_ids(
        name: impl Into<String>,
        features: Vec<(String, Vec<f64>)>,
        target: (String, Vec<f64>),
        row_ids: Vec<usize>,
    ) -> Result<Self> {
        let (target_name, target) = target;
        let n = target.len();
        if n == 0 {
            return Err(Error::InvalidTask("task must have at least one row".into()));
        }
        if features.is_empty() {
            return Err(Error::NoFeatures);
        }
        if row_ids.len() != n {
            return Err(Error::InvalidTask(format!(
                "{} row ids for {} rows",
                row_ids.len(),
                n
            )));
        }
        let mut seen = HashSet::new();
        for (name, col) in &features {
            if name == &target_name {
                return Err(Error::InvalidTask(format!(
                    "feature '{name}' has the same name as the target"
                )));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidTask(format!("duplicate feature name '{name}'")));
            }
            if col.len() != n {
                return Err(Error::InvalidTask(format!(
                    "column '{name}' has length {} but the target has {n}",
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidTask(format!(
                    "non-finite value in column '{name}' at row {}",
                    row_ids[i]
                )));
            }
        }
        if let Some(i) = target.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTask(format!(
                "non-finite target value at row {}",
                row_ids[i]
            )));
        }
        let mut positions = HashMap::with_capacity(n);
        for (pos, &id) in row_ids.iter().enumerate() {
            if positions.insert(id, pos).is_some() {
                return Err(Error::InvalidTask(format!("duplicate row id {id}")));
            }
        }
        let (feature_names, columns) = features.into_iter().unzip();
        Ok(Self {
            name: name.into(),
            feature_names,
            columns,
            target_name,
            target,
            row_ids,
            positions,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn column_at(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.columns[self.feature_index(name)?])
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.feature_names
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn feature_indices<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.feature_index(n.as_ref())).collect()
    }

    /// Maps row ids to internal positions.
    pub fn positions(&self, ids: &[usize]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| self.positions.get(id).copied().ok_or(Error::UnknownRow(*id)))
            .collect()
    }

    pub fn targets_at(&self, positions: &[usize]) -> Vec<f64> {
        positions.iter().map(|&i| self.target[i]).collect()
    }

    pub fn ids_at(&self, positions: &[usize]) -> Vec<usize> {
        positions.iter().map(|&i| self.row_ids[i]).collect()
    }

    /// Feature matrix for the given row positions and feature indices.
    pub fn matrix(&self, positions: &[usize], features: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(positions.len() * features.len());
        for &i in positions {
            data.extend(features.iter().map(|&j| self.columns[j][i]));
        }
        FeatureMatrix::new(positions.len(), features.len(), data)
    }

    /// Sub-task restricted to `rows` (ids) and `features` (names). Rows and
    /// columns keep the order they have in this task.
    pub fn view<S: AsRef<str>>(&self, rows: &[usize], features: &[S]) -> Result<Task> {
        if features.is_empty() {
            return Err(Error::NoFeatures);
        }
        if rows.is_empty() {
            return Err(Error::InvalidTask("view must keep at least one row".into()));
        }
        let mut keep_cols = self.feature_indices(features)?;
        keep_cols.sort_unstable();
        keep_cols.dedup();
        let mut keep_rows = self.positions(rows)?;
        keep_rows.sort_unstable();
        keep_rows.dedup();
        let cols = keep_cols
            .iter()
            .map(|&j| {
                (
                    self.feature_names[j].clone(),
                    keep_rows.iter().map(|&i| self.columns[j][i]).collect(),
                )
            })
            .collect();
        let target = keep_rows.iter().map(|&i| self.target[i]).collect();
        Task::with_row_ids(
            self.name.clone(),
            cols,
            (self.target_name.clone(), target),
            self.ids_at(&keep_rows),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Task {
        Task::new(
            "toy",
            vec![
                ("a".into(), vec![1.0, 2.0, 3.0]),
                ("b".into(), vec![4.0, 5.0, 6.0]),
                ("c".into(), vec![7.0, 8.0, 9.0]),
                ("d".into(), vec![0.0, 0.0, 1.0]),
            ],
            ("y".into(), vec![1.0, 0.0, 1.0]),
        )
        .unwrap()
    }

    #[test]
    fn identity_view() {
        let t = toy();
        let v = t.view(t.row_ids(), t.feature_names()).unwrap();
        assert_eq!(v, t);
    }

    #[test]
    fn empty_feature_view_is_rejected() {
        let t = toy();
        let err = t.view::<String>(&[1, 2], &[]).unwrap_err();
        assert_eq!(err.to_string(), "at least one feature required");
    }

    #[test]
    fn row_subset_keeps_ids() {
        let t = toy();
        let v = t.view(&[3, 1], &["b"]).unwrap();
        assert_eq!(v.n_rows(), 2);
        assert_eq!(v.row_ids(), &[1, 3]);
        assert_eq!(v.column("b").unwrap(), &[4.0, 6.0]);
        assert_eq!(v.target(), &[1.0, 1.0]);
    }

    #[test]
    fn unknown_names_and_ids_are_reported() {
        let t = toy();
        assert_eq!(t.view(&[1], &["zz"]).unwrap_err(), Error::UnknownFeature("zz".into()));
        assert_eq!(t.view(&[9], &["a"]).unwrap_err(), Error::UnknownRow(9));
    }

    #[test]
    fn views_compose() {
        let t = toy();
        let a = t.view(&[1, 2], &["a", "b", "c"]).unwrap();
        let ab = a.view(&[2], &["c", "a"]).unwrap();
        let direct = t.view(&[2], &["a", "c"]).unwrap();
        assert_eq!(ab, direct);
    }

    #[test]
    fn construction_rejects_bad_input() {
        let nan = Task::new(
            "t",
            vec![("a".into(), vec![1.0, f64::NAN])],
            ("y".into(), vec![0.0, 1.0]),
        );
        assert!(matches!(nan, Err(Error::InvalidTask(_))));
        let clash = Task::new("t", vec![("y".into(), vec![1.0])], ("y".into(), vec![0.0]));
        assert!(clash.is_err());
        let dup = Task::new(
            "t",
            vec![("a".into(), vec![1.0]), ("a".into(), vec![2.0])],
            ("y".into(), vec![0.0]),
        );
        assert!(dup.is_err());
        let ragged = Task::new("t", vec![("a".into(), vec![1.0])], ("y".into(), vec![0.0, 1.0]));
        assert!(ragged.is_err());
    }
}

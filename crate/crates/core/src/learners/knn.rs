use crate::matrix::FeatureMatrix;

/// Standardizes columns with training statistics. Columns with zero spread
/// get scale 0 and therefore never contribute to distances.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Standardizer {
    mean: Vec<f64>,
    inv_sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &FeatureMatrix) -> Self {
        let n = x.nrows() as f64;
        let p = x.ncols();
        let mut mean = vec![0.0; p];
        let mut inv_sd = vec![0.0; p];
        for j in 0..p {
            let m = (0..x.nrows()).map(|i| x.get(i, j)).sum::<f64>() / n;
            let var = if x.nrows() > 1 {
                (0..x.nrows()).map(|i| (x.get(i, j) - m).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            mean[j] = m;
            inv_sd[j] = if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 };
        }
        Self { mean, inv_sd }
    }

    pub fn transform_row(&self, row: &[f64], out: &mut [f64]) {
        for (j, (o, v)) in out.iter_mut().zip(row).enumerate() {
            *o = (v - self.mean[j]) * self.inv_sd[j];
        }
    }

    pub fn transform(&self, x: &FeatureMatrix) -> FeatureMatrix {
        let mut out = FeatureMatrix::zeros(x.nrows(), x.ncols());
        for i in 0..x.nrows() {
            self.transform_row(x.row(i), out.row_mut(i));
        }
        out
    }
}

/// Indices of the `k` nearest rows of `reference` to `query` (squared
/// Euclidean distance, ties resolved by lower row index).
pub(crate) fn nearest(reference: &FeatureMatrix, query: &[f64], k: usize) -> Vec<usize> {
    let k = k.min(reference.nrows());
    let mut d: Vec<(f64, usize)> = (0..reference.nrows())
        .map(|i| {
            let dist = reference
                .row(i)
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            (dist, i)
        })
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < d.len() && k > 0 {
        d.select_nth_unstable_by(k - 1, cmp);
        d.truncate(k);
    }
    d.sort_unstable_by(cmp);
    d.into_iter().map(|(_, i)| i).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    k: usize,
    scaler: Standardizer,
    train: FeatureMatrix,
    y: Vec<f64>,
}

impl KnnModel {
    pub(crate) fn fit(x: &FeatureMatrix, y: &[f64], k: usize) -> Self {
        let scaler = Standardizer::fit(x);
        let train = scaler.transform(x);
        Self { k, scaler, train, y: y.to_vec() }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut z = vec![0.0; row.len()];
        self.scaler.transform_row(row, &mut z);
        let nn = nearest(&self.train, &z, self.k);
        nn.iter().map(|&i| self.y[i]).sum::<f64>() / nn.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_breaks_ties_by_index() {
        let r = FeatureMatrix::from_columns(&[vec![1.0, -1.0, 1.0, 5.0]]);
        assert_eq!(nearest(&r, &[0.0], 2), vec![0, 1]);
        assert_eq!(nearest(&r, &[0.0], 10), vec![0, 1, 2, 3]);
    }

    #[test]
    fn constant_columns_are_ignored() {
        let x = FeatureMatrix::from_columns(&[vec![0.0, 1.0, 2.0], vec![7.0, 7.0, 7.0]]);
        let m = KnnModel::fit(&x, &[0.0, 10.0, 20.0], 1);
        assert_eq!(m.predict_row(&[1.9, -100.0]), 20.0);
    }
}

/// Dense row-major matrix of feature values, the working format handed to
/// learners and samplers.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(nrows: usize, ncols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), nrows * ncols, "matrix data length mismatch");
        Self { nrows, ncols, data }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::new(nrows, ncols, vec![0.0; nrows * ncols])
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let ncols = columns.len();
        let nrows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(nrows * ncols);
        for i in 0..nrows {
            for col in columns {
                data.push(col[i]);
            }
        }
        Self { nrows, ncols, data }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.ncols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        assert_eq!(values.len(), self.nrows);
        for (i, v) in values.iter().enumerate() {
            self.set(i, j, *v);
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(self.nrows * cols.len());
        for i in 0..self.nrows {
            let row = self.row(i);
            data.extend(cols.iter().map(|&j| row[j]));
        }
        FeatureMatrix::new(self.nrows, cols.len(), data)
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.ncols);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix::new(rows.len(), self.ncols, data)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

//! Multivariate normal fit and its conditionals.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::matrix::FeatureMatrix;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct GaussianFit {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Ridge added to the diagonal of the sample covariance.
    pub ridge: f64,
}

impl GaussianFit {
    /// Column means and unbiased covariance of `x`, lifted so that
    /// λ_min ≥ 1e-8 · trace / p.
    pub fn estimate(x: &FeatureMatrix) -> Self {
        let n = x.nrows();
        let p = x.ncols();
        let mean = DVector::from_fn(p, |j, _| (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64);
        let mut cov = DMatrix::<f64>::zeros(p, p);
        let mut centered = vec![0.0; p];
        for i in 0..n {
            for (j, c) in centered.iter_mut().enumerate() {
                *c = x.get(i, j) - mean[j];
            }
            for a in 0..p {
                for b in a..p {
                    cov[(a, b)] += centered[a] * centered[b];
                }
            }
        }
        let denom = (n.max(2) - 1) as f64;
        for a in 0..p {
            for b in a..p {
                let v = cov[(a, b)] / denom;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        let trace = cov.trace();
        let lambda_min = min_eigenvalue(&cov);
        let floor = if trace > 0.0 { 1e-8 * trace / p as f64 } else { 1e-8 };
        let ridge = (floor - lambda_min).max(0.0);
        for j in 0..p {
            cov[(j, j)] += ridge;
        }
        Self { mean, cov, ridge }
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |a, b| self.cov[(rows[a], cols[b])])
    }

    /// Conditional law of the `target` coordinates given the `given` ones.
    pub fn conditional(&self, target: &[usize], given: &[usize]) -> GaussianConditional {
        let s_ff = self.submatrix(target, target);
        let mu_f = DVector::from_iterator(target.len(), target.iter().map(|&j| self.mean[j]));
        let mu_g = DVector::from_iterator(given.len(), given.iter().map(|&j| self.mean[j]));
        let (coef, cond_cov) = if given.is_empty() {
            (DMatrix::zeros(target.len(), 0), s_ff)
        } else {
            let s_gg = self.submatrix(given, given);
            let s_gf = self.submatrix(given, target);
            // coef = Σ_FG Σ_GG⁻¹, so coefᵀ = Σ_GG⁻¹ Σ_GF
            let coef_t = match s_gg.clone().cholesky() {
                Some(ch) => ch.solve(&s_gf),
                None => s_gg.pseudo_inverse(1e-12).expect("pseudo-inverse") * &s_gf,
            };
            let coef = coef_t.transpose();
            let cond = &s_ff - &coef * &s_gf;
            (coef, cond)
        };
        GaussianConditional {
            target: target.to_vec(),
            given: given.to_vec(),
            mu_f,
            mu_g,
            coef,
            factor: psd_factor(&cond_cov),
        }
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// `L` with `L Lᵀ = m`, eigenvalues ≤ 0 clamped to zero.
pub(crate) fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = m.nrows();
    if k == 0 {
        return DMatrix::zeros(0, 0);
    }
    if k == 1 {
        return DMatrix::from_element(1, 1, m[(0, 0)].max(0.0).sqrt());
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut factor = eig.eigenvectors.clone();
    for (j, &ev) in eig.eigenvalues.iter().enumerate() {
        let s = ev.max(0.0).sqrt();
        for i in 0..k {
            factor[(i, j)] *= s;
        }
    }
    factor
}

#[derive(Debug, Clone)]
pub(crate) struct GaussianConditional {
    target: Vec<usize>,
    given: Vec<usize>,
    mu_f: DVector<f64>,
    mu_g: DVector<f64>,
    coef: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl GaussianConditional {
    /// Draws the target coordinates for every row of `data` (full feature
    /// rows); output has one vector per target coordinate.
    pub fn draw(&self, data: &FeatureMatrix, rng: &mut Rng) -> Vec<Vec<f64>> {
        let nf = self.target.len();
        let ng = self.given.len();
        let mut out = vec![Vec::with_capacity(data.nrows()); nf];
        let mut z = vec![0.0; nf];
        let mut dev = vec![0.0; ng];
        for i in 0..data.nrows() {
            let row = data.row(i);
            for (d, (&g, mu)) in dev.iter_mut().zip(self.given.iter().zip(self.mu_g.iter())) {
                *d = row[g] - mu;
            }
            for zv in z.iter_mut() {
                *zv = StandardNormal.sample(rng);
            }
            for (a, col) in out.iter_mut().enumerate() {
                let mut v = self.mu_f[a];
                for (b, d) in dev.iter().enumerate() {
                    v += self.coef[(a, b)] * d;
                }
                for (b, zv) in z.iter().enumerate() {
                    v += self.factor[(a, b)] * zv;
                }
                col.push(v);
            }
        }
        out
    }

    /// Conditional means of the target coordinates for every row of `data`
    /// (rows × targets).
    pub fn means(&self, data: &FeatureMatrix) -> DMatrix<f64> {
        let dev = DMatrix::from_fn(data.nrows(), self.given.len(), |i, b| data.get(i, self.given[b]) - self.mu_g[b]);
        let mut m = dev * self.coef.transpose();
        for (a, mut col) in m.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.mu_f[a]);
        }
        m
    }

    /// One draw for all rows around precomputed `means`: `means + Z·Lᵀ`.
    pub fn draw_around(&self, means: &DMatrix<f64>, rng: &mut Rng) -> DMatrix<f64> {
        let z: DMatrix<f64> = DMatrix::from_fn(means.nrows(), self.target.len(), |_, _| StandardNormal.sample(rng));
        means + z * self.factor.transpose()
    }

    #[cfg(test)]
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coef
    }

    #[cfg(test)]
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit_from(cov: [[f64; 2]; 2]) -> GaussianFit {
        GaussianFit {
            mean: DVector::from_vec(vec![0.0, 0.0]),
            cov: DMatrix::from_row_slice(2, 2, &[cov[0][0], cov[0][1], cov[1][0], cov[1][1]]),
            ridge: 0.0,
        }
    }

    #[test]
    fn conditional_moments_match_formula() {
        let g = fit_from([[1.0, 0.8], [0.8, 1.0]]);
        let c = g.conditional(&[0], &[1]);
        assert!((c.coefficients()[(0, 0)] - 0.8).abs() < 1e-12);
        assert!((c.covariance()[(0, 0)] - 0.36).abs() < 1e-12);
    }

    #[test]
    fn batched_draws_center_on_conditional_means() {
        let g = fit_from([[1.0, 0.8], [0.8, 1.0]]);
        let c = g.conditional(&[0], &[1]);
        let data = FeatureMatrix::from_columns(&[vec![0.0; 20_000], vec![1.0; 20_000]]);
        let means = c.means(&data);
        assert!(means.iter().all(|m| (m - 0.8).abs() < 1e-12));
        let draw = c.draw_around(&means, &mut crate::rng::substream(3, &[]));
        let n = draw.len() as f64;
        let mean = draw.sum() / n;
        let var = draw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 0.8).abs() < 0.02 && (var - 0.36).abs() < 0.02, "{mean} {var}");
    }

    #[test]
    fn degenerate_conditional_is_clamped() {
        let g = fit_from([[1.0, 1.0], [1.0, 1.0 + 1e-14]]);
        let c = g.conditional(&[0], &[1]);
        assert!(c.covariance()[(0, 0)] >= 0.0);
        assert!(c.covariance()[(0, 0)] < 1e-10);
    }

    #[test]
    fn constant_column_is_regularized() {
        let x = FeatureMatrix::from_columns(&[vec![1.0, 2.0, 3.0, 4.0], vec![5.0; 4]]);
        let g = GaussianFit::estimate(&x);
        assert!(g.ridge > 0.0);
        let p = 2.0;
        assert!(min_eigenvalue(&g.cov) >= 1e-8 * (g.cov.trace() - 2.0 * g.ridge) / p * (1.0 - 1e-9));
    }
}

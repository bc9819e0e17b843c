//! Second-order Gaussian knockoffs, equicorrelated construction.
//!
//! With `D = diag(σ)`, `R = D⁻¹ Σ D⁻¹` and `s = min(1, 2 λ_min(R))`, set
//! `S = diag(s σ_j²)`. Knockoffs are drawn from
//! `X̃ | X ~ N(X − S Σ⁻¹ (X − μ), 2S − S Σ⁻¹ S)`, which gives `cov(X̃) = Σ` and
//! `cov(X, X̃) = Σ − S`.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use super::gaussian::{min_eigenvalue, psd_factor, GaussianFit};
use crate::matrix::FeatureMatrix;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct KnockoffState {
    /// Per-feature `s_j` on the correlation scale.
    pub s_corr: Vec<f64>,
    /// `Σ⁻¹ S`; a row `x` maps to `x − (x − μ) Σ⁻¹ S`.
    shrink: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl KnockoffState {
    pub(crate) fn new(fit: &GaussianFit) -> Self {
        let p = fit.cov.nrows();
        let sd: Vec<f64> = (0..p).map(|j| fit.cov[(j, j)].sqrt()).collect();
        let corr = DMatrix::from_fn(p, p, |a, b| fit.cov[(a, b)] / (sd[a] * sd[b]));
        let s = (2.0 * min_eigenvalue(&corr)).clamp(0.0, 1.0);
        let s_corr = vec![s; p];
        let s_mat = DMatrix::from_fn(p, p, |a, b| if a == b { s_corr[a] * sd[a] * sd[a] } else { 0.0 });
        let sigma_inv_s = match fit.cov.clone().cholesky() {
            Some(ch) => ch.solve(&s_mat),
            None => fit.cov.clone().pseudo_inverse(1e-12).expect("pseudo-inverse") * &s_mat,
        };
        let cond_cov = &s_mat * 2.0 - &s_mat * &sigma_inv_s;
        Self { s_corr, shrink: sigma_inv_s, factor: psd_factor(&cond_cov) }
    }

    /// One joint knockoff copy of every row of `data`.
    pub(crate) fn draw(&self, fit: &GaussianFit, data: &FeatureMatrix, rng: &mut Rng) -> FeatureMatrix {
        let p = data.ncols();
        let mut out = FeatureMatrix::zeros(data.nrows(), p);
        let mut dev = vec![0.0; p];
        let mut z = vec![0.0; p];
        for i in 0..data.nrows() {
            let row = data.row(i);
            for j in 0..p {
                dev[j] = row[j] - fit.mean[j];
            }
            for zv in z.iter_mut() {
                *zv = StandardNormal.sample(rng);
            }
            let dst = out.row_mut(i);
            for k in 0..p {
                let mut v = row[k];
                for j in 0..p {
                    v -= dev[j] * self.shrink[(j, k)];
                }
                for j in 0..p {
                    v += self.factor[(k, j)] * z[j];
                }
                dst[k] = v;
            }
        }
        out
    }
}

//! Built-in data-generating processes.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::task::Task;

pub const DEFAULT_NOISE_SD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "lowercase")]
pub enum DgpSpec {
    /// x1, x2 bivariate normal with correlation `r`; x3, x4 independent;
    /// y = 2 x1 + x3 + ε.
    Correlated { n: usize, r: f64, noise_sd: f64 },
    /// Independent standard normal features, y = Σ β_j x_j + ε.
    Independent { n: usize, coefficients: Vec<f64>, noise_sd: f64 },
    /// Uniform points in the radius-3 ball in `d` dimensions,
    /// y = 25 exp(−‖x‖² / 2).
    Peak { n: usize, d: usize },
}

impl DgpSpec {
    pub fn generate(&self, seed: u64) -> Result<Task> {
        match self {
            DgpSpec::Correlated { n, r, noise_sd } => correlated_with_noise(*n, *r, *noise_sd, seed),
            DgpSpec::Independent { n, coefficients, noise_sd } => {
                independent_with_noise(*n, coefficients, *noise_sd, seed)
            }
            DgpSpec::Peak { n, d } => sim_peak(*n, *d, seed),
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 10 {
        Err(Error::param(format!("simulators need n >= 10, got {n}")))
    } else {
        Ok(())
    }
}

fn names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

pub fn sim_correlated(n: usize, r: f64, seed: u64) -> Result<Task> {
    correlated_with_noise(n, r, DEFAULT_NOISE_SD, seed)
}

pub fn correlated_with_noise(n: usize, r: f64, noise_sd: f64, seed: u64) -> Result<Task> {
    check_n(n)?;
    if !(r.abs() < 1.0) {
        return Err(Error::param(format!("correlation must satisfy |r| < 1, got {r}")));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::param("noise sd must be finite and >= 0"));
    }
    let mut rng = rng::substream(seed, &[rng::tag("sim_correlated")]);
    let mut cols: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(n)).collect();
    let mut y = Vec::with_capacity(n);
    let tail = (1.0 - r * r).sqrt();
    for _ in 0..n {
        let z: [f64; 5] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let x1 = z[0];
        let x2 = r * z[0] + tail * z[1];
        let (x3, x4) = (z[2], z[3]);
        y.push(2.0 * x1 + x3 + noise_sd * z[4]);
        for (c, v) in cols.iter_mut().zip([x1, x2, x3, x4]) {
            c.push(v);
        }
    }
    Task::new("correlated", names(4).into_iter().zip(cols).collect(), ("y".into(), y))
}

pub fn sim_independent(n: usize, p: usize, coefficients: &[f64], seed: u64) -> Result<Task> {
    if coefficients.len() != p {
        return Err(Error::param(format!("{} coefficients for {p} features", coefficients.len())));
    }
    independent_with_noise(n, coefficients, DEFAULT_NOISE_SD, seed)
}

pub fn independent_with_noise(n: usize, coefficients: &[f64], noise_sd: f64, seed: u64) -> Result<Task> {
    check_n(n)?;
    let p = coefficients.len();
    if p == 0 {
        return Err(Error::NoFeatures);
    }
    let mut rng = rng::substream(seed, &[rng::tag("sim_independent")]);
    let mut cols = vec![Vec::with_capacity(n); p];
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut yi = 0.0;
        for (c, b) in cols.iter_mut().zip(coefficients) {
            let v: f64 = StandardNormal.sample(&mut rng);
            yi += b * v;
            c.push(v);
        }
        let e: f64 = StandardNormal.sample(&mut rng);
        y.push(yi + noise_sd * e);
    }
    Task::new("independent", names(p).into_iter().zip(cols).collect(), ("y".into(), y))
}

pub fn sim_peak(n: usize, d: usize, seed: u64) -> Result<Task> {
    check_n(n)?;
    if d == 0 {
        return Err(Error::param("peak task needs d >= 1"));
    }
    let mut rng = rng::substream(seed, &[rng::tag("sim_peak")]);
    let mut cols = vec![Vec::with_capacity(n); d];
    let mut y = Vec::with_capacity(n);
    let mut dir = vec![0.0; d];
    for _ in 0..n {
        let norm = loop {
            for v in dir.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                break norm;
            }
        };
        let u: f64 = rng.random();
        let radius = 3.0 * u.powf(1.0 / d as f64);
        for (c, v) in cols.iter_mut().zip(&dir) {
            c.push(radius * v / norm);
        }
        y.push(25.0 * (-radius * radius / 2.0).exp());
    }
    Task::new("peak", names(d).into_iter().zip(cols).collect(), ("y".into(), y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn correlated_dgp_moments() {
        let t = sim_correlated(5000, 0.8, 1).unwrap();
        assert_eq!(t.feature_names(), &["x1", "x2", "x3", "x4"]);
        let c = corr(t.column("x1").unwrap(), t.column("x2").unwrap());
        assert!((c - 0.8).abs() < 0.03, "cor {c}");
        let x1 = t.column("x1").unwrap();
        let x3 = t.column("x3").unwrap();
        let resid: Vec<f64> = (0..5000).map(|i| t.target()[i] - 2.0 * x1[i] - x3[i]).collect();
        let var = resid.iter().map(|e| e * e).sum::<f64>() / 5000.0;
        assert!((var - 0.04).abs() < 0.005, "noise var {var}");
        let t0 = sim_correlated(5000, 0.0, 2).unwrap();
        assert!(corr(t0.column("x1").unwrap(), t0.column("x2").unwrap()).abs() < 0.03);
    }

    #[test]
    fn simulators_are_reproducible() {
        assert_eq!(sim_correlated(100, 0.5, 9).unwrap(), sim_correlated(100, 0.5, 9).unwrap());
        assert_eq!(sim_peak(50, 3, 9).unwrap(), sim_peak(50, 3, 9).unwrap());
        assert_ne!(sim_peak(50, 3, 9).unwrap(), sim_peak(50, 3, 10).unwrap());
    }

    #[test]
    fn invalid_parameters() {
        assert!(sim_correlated(100, 1.0, 0).is_err());
        assert!(sim_correlated(5, 0.5, 0).is_err());
        assert!(sim_independent(100, 3, &[1.0, 2.0], 0).is_err());
        assert!(sim_peak(100, 0, 0).is_err());
    }

    #[test]
    fn peak_targets_and_radius_law() {
        let n = 100_000;
        let t = sim_peak(n, 2, 3).unwrap();
        assert!(t.target().iter().all(|&y| y > 0.0 && y <= 25.0));
        let radii: Vec<f64> = (0..n)
            .map(|i| (0..2).map(|j| t.column_at(j)[i].powi(2)).sum::<f64>().sqrt())
            .collect();
        for tq in [1.0, 2.0, 2.5] {
            let emp = radii.iter().filter(|&&r| r <= tq).count() as f64 / n as f64;
            let expect = (tq / 3.0f64).powi(2);
            assert!((emp - expect).abs() < 0.01, "P(r <= {tq}) = {emp}, expected {expect}");
        }
    }

    #[test]
    fn peak_in_one_dimension_is_uniform() {
        let t = sim_peak(20_000, 1, 4).unwrap();
        let x = t.column_at(0);
        assert!(x.iter().all(|v| v.abs() <= 3.0));
        let neg = x.iter().filter(|v| **v < 0.0).count() as f64 / 20_000.0;
        assert!((neg - 0.5).abs() < 0.02);
        let inner = x.iter().filter(|v| v.abs() < 1.5).count() as f64 / 20_000.0;
        assert!((inner - 0.5).abs() < 0.02);
    }
}

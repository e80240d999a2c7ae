use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{BfError, Result};
use crate::sampler::PosteriorDraws;

/// Multivariate normal summary of a set of posterior draws.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianApprox {
    pub mean: Vec<f64>,
    /// Row-major `d × d`.
    pub cov: Vec<f64>,
}

impl GaussianApprox {
    pub fn new(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.len() != d * d {
            return Err(BfError::Shape(format!("covariance has {} entries for dimension {d}", cov.len())));
        }
        let g = Self { mean, cov };
        g.check_psd()?;
        Ok(g)
    }

    /// Sample mean and covariance of the columns (each column one parameter).
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let d = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if n < 2 {
            return Err(BfError::InsufficientDraws(n));
        }
        let mean: Vec<f64> = columns.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let s: f64 = columns[i]
                    .iter()
                    .zip(&columns[j])
                    .map(|(a, b)| (a - mean[i]) * (b - mean[j]))
                    .sum::<f64>()
                    / (n as f64 - 1.0);
                cov[i * d + j] = s;
                cov[j * d + i] = s;
            }
        }
        Self::new(mean, cov)
    }

    /// Gaussian approximation of the named columns, pooled across chains.
    pub fn from_draws(draws: &PosteriorDraws, names: &[String]) -> Result<Self> {
        let cols = names
            .iter()
            .map(|n| {
                draws
                    .index_of(n)
                    .map(|j| draws.pooled(j))
                    .ok_or_else(|| BfError::UnknownParameter(n.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_columns(&cols)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn cov_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.cov)
    }

    fn check_psd(&self) -> Result<()> {
        let d = self.dim();
        for i in 0..d {
            for j in 0..i {
                if (self.cov[i * d + j] - self.cov[j * d + i]).abs() > 1e-10 {
                    return Err(BfError::NotPsd("covariance is not symmetric".into()));
                }
            }
        }
        if d > 0 {
            let min = SymmetricEigen::new(self.cov_matrix())
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            let scale = self.cov.iter().fold(1.0f64, |a, b| a.max(b.abs()));
            if min < -1e-10 * scale {
                return Err(BfError::NotPsd(format!("smallest eigenvalue {min}")));
            }
        }
        Ok(())
    }

    /// Log density at `x`; requires a positive-definite covariance.
    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        mvn_log_pdf(x, &self.mean, &self.cov_matrix())
    }

    /// Distribution of `A θ + c` for `A` of shape `r × d`.
    pub fn linear(&self, a: &DMatrix<f64>, c: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let m = DVector::from_column_slice(&self.mean);
        let s = self.cov_matrix();
        (a * m + c, a * s * a.transpose())
    }

    /// Conditional distribution given `E θ = e`, together with the log density of
    /// `E θ` at `e`.
    pub fn condition(&self, e_mat: &DMatrix<f64>, e: &DVector<f64>) -> Result<(f64, GaussianApprox)> {
        let m = DVector::from_column_slice(&self.mean);
        let s = self.cov_matrix();
        let em = e_mat * &m;
        let ese = e_mat * &s * e_mat.transpose();
        let log_dens = mvn_log_pdf(e.as_slice(), em.as_slice(), &ese)?;
        let chol = ese
            .clone()
            .cholesky()
            .ok_or_else(|| BfError::Singular("equality constraints are redundant".into()))?;
        let se_t = &s * e_mat.transpose();
        let gain = chol.solve(&se_t.transpose()).transpose();
        let mc = &m + &gain * (e - em);
        let mut sc = &s - &gain * se_t.transpose();
        sc = (&sc + sc.transpose()) * 0.5;
        let d = self.dim();
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] = sc[(i, j)];
            }
        }
        Ok((
            log_dens,
            GaussianApprox {
                mean: mc.as_slice().to_vec(),
                cov,
            },
        ))
    }
}

pub fn mvn_log_pdf(x: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> Result<f64> {
    let d = x.len();
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| BfError::Singular("covariance is not positive definite".into()))?;
    let diff = DVector::from_iterator(d, x.iter().zip(mean).map(|(a, b)| a - b));
    let sol = chol.l().solve_lower_triangular(&diff).expect("triangular factor is invertible");
    let log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    Ok(-0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + sol.norm_squared()))
}

/// Draws from `N(mean, cov)` for positive-semidefinite `cov` via its eigendecomposition.
pub struct PsdSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl PsdSampler {
    pub fn new(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(cov.clone());
        let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
        Self {
            mean: mean.clone(),
            factor,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample_into<R: Rng>(&self, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let d = self.dim();
        for i in 0..d {
            let mut acc = self.mean[i];
            for (j, zj) in z.iter().enumerate() {
                acc += self.factor[(i, j)] * zj;
            }
            out[i] = acc;
        }
    }
}

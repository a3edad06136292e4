//! Marginal- and spectral-entropy regularization of a feature batch.
//!
//! For a batch `Z` (N samples × D features) the log-determinant entropy of
//! the covariance splits into a per-dimension spread term and the
//! log-determinant of the correlation matrix. The two losses here push on
//! each part separately:
//!
//! - marginal: `(1/D) Σ_d max(0, γ − σ_d)`, `σ_d = sqrt(Var(Z_·d) + ε)`;
//! - spectral: `−(1/D) ln det(C + εI)`, `C = ẐᵀẐ / (N − 1)` with `Ẑ` the
//!   column-standardized batch.
//!
//! Variances are unbiased (`N − 1`). Gradients with respect to `Z` are
//! closed-form; the tests check them against central differences.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure, Error, Result};
use crate::linalg::{cholesky_logdet, Cholesky};
use crate::matrix::Matrix;

/// Regularizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MerConfig {
    /// Variance floor target for each σ_d.
    pub gamma: f64,
    /// Stabilizer inside σ_d and on the correlation diagonal.
    pub eps: f64,
    pub alpha_marg: f64,
    pub alpha_spec: f64,
    /// Global weight of the regularizer in the training objective.
    pub lambda: f64,
}

impl Default for MerConfig {
    fn default() -> Self {
        MerConfig {
            gamma: 1.0,
            eps: 1e-4,
            alpha_marg: 1.0,
            alpha_spec: 1.0,
            lambda: 3.0,
        }
    }
}

impl MerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite();
        ensure!(
            ok(self.gamma) && self.gamma > 0.0,
            Error::InvalidConfig(format!("gamma must be > 0, got {}", self.gamma))
        );
        ensure!(
            ok(self.eps) && self.eps > 0.0,
            Error::InvalidConfig(format!("eps must be > 0, got {}", self.eps))
        );
        for (name, v) in [
            ("alpha_marg", self.alpha_marg),
            ("alpha_spec", self.alpha_spec),
            ("lambda", self.lambda),
        ] {
            ensure!(
                ok(v) && v >= 0.0,
                Error::InvalidConfig(format!("{name} must be >= 0, got {v}"))
            );
        }
        Ok(())
    }
}

/// Individual loss values behind one regularizer evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MerBreakdown {
    pub marginal_loss: f64,
    pub spectral_loss: f64,
    /// `alpha_marg · marginal_loss + alpha_spec · spectral_loss`.
    pub combined: f64,
    pub per_dim_sigma: Vec<f64>,
    /// `ln det(C + εI)`.
    pub correlation_logdet: f64,
}

/// Centers each column and divides it by `sqrt(unbiased var + eps)`.
///
/// With `eps = 0` a column with zero variance maps to zeros.
pub fn standardize(z: &Matrix, eps: f64) -> Result<Matrix> {
    let (means, stds) = z.column_mean_std(eps)?;
    Ok(apply_standardization(z, &means, &stds))
}

fn apply_standardization(z: &Matrix, means: &[f64], stds: &[f64]) -> Matrix {
    let inv: Vec<f64> = stds.iter().map(|&s| if s > 0.0 { 1.0 / s } else { 0.0 }).collect();
    let mut out = z.clone();
    for r in 0..z.rows() {
        for ((x, m), k) in out.row_mut(r).iter_mut().zip(means).zip(&inv) {
            *x = (*x - m) * k;
        }
    }
    out
}

/// `ẐᵀẐ / (N − 1)`.
pub fn correlation(z_hat: &Matrix) -> Result<Matrix> {
    ensure!(z_hat.rows() >= 2, Error::DegenerateBatch { rows: z_hat.rows() });
    z_hat.gram()?.scale(1.0 / (z_hat.rows() - 1) as f64)
}

/// Variance-floor hinge loss and the per-dimension σ_d.
pub fn marginal_loss(z: &Matrix, gamma: f64, eps: f64) -> Result<(f64, Vec<f64>)> {
    let (_, sigmas) = z.column_mean_std(eps)?;
    let d = sigmas.len().max(1) as f64;
    let loss = sigmas.iter().map(|&s| (gamma - s).max(0.0)).sum::<f64>() / d;
    Ok((loss, sigmas))
}

/// Gradient of [`marginal_loss`] with respect to every entry of `z`.
///
/// Columns with `σ_d ≥ γ` get zero gradient (the subgradient 0 is used at
/// the kink).
pub fn marginal_grad(z: &Matrix, gamma: f64, eps: f64) -> Result<Matrix> {
    let (means, sigmas) = z.column_mean_std(eps)?;
    Ok(marginal_grad_from_stats(z, gamma, &means, &sigmas))
}

fn marginal_grad_from_stats(z: &Matrix, gamma: f64, means: &[f64], sigmas: &[f64]) -> Matrix {
    let (n, d) = z.shape();
    // dσ_d/dz_nd = (z_nd − μ_d) / ((N − 1) σ_d)
    let coef: Vec<f64> = sigmas
        .iter()
        .map(|&s| {
            if s < gamma {
                -1.0 / (d as f64 * (n - 1) as f64 * s)
            } else {
                0.0
            }
        })
        .collect();
    let mut g = Matrix::zeros(n, d);
    for r in 0..n {
        let zr = z.row(r);
        for (c, out) in g.row_mut(r).iter_mut().enumerate() {
            if coef[c] != 0.0 {
                *out = coef[c] * (zr[c] - means[c]);
            }
        }
    }
    g
}

/// Everything the spectral loss and its gradient share.
struct SpectralParts {
    z_hat: Matrix,
    stds: Vec<f64>,
    chol: Cholesky,
}

impl SpectralParts {
    fn compute(z: &Matrix, eps: f64) -> Result<Self> {
        ensure!(
            eps > 0.0,
            Error::Contract(format!("spectral eps must be > 0, got {eps}"))
        );
        // Unit-variance standardization: diag(C) is exactly 1 for every
        // nonconstant column, and ε only enters through the jitter below.
        let (means, stds) = z.column_mean_std(0.0)?;
        let z_hat = apply_standardization(z, &means, &stds);
        let mut c = correlation(&z_hat)?;
        for i in 0..c.rows() {
            c.set(i, i, c.get(i, i) + eps);
        }
        let chol = cholesky_logdet(&c).map_err(|e| match e {
            Error::NotPositiveDefinite { pivot, value } => {
                Error::Numeric(format!("C + εI not positive definite at pivot {pivot} ({value:e})"))
            }
            other => other,
        })?;
        Ok(SpectralParts { z_hat, stds, chol })
    }

    fn loss(&self) -> f64 {
        -self.chol.logdet() / self.z_hat.cols().max(1) as f64
    }

    fn grad(&self) -> Result<Matrix> {
        let (n, d) = self.z_hat.shape();
        let nm1 = (n - 1) as f64;
        // ∂L/∂C = −(1/D)(C + εI)⁻¹, so ∂L/∂Ẑ = −2/(D(N−1)) · Ẑ (C + εI)⁻¹.
        let h = self.chol.solve_right(&self.z_hat)?.scale(-2.0 / (d as f64 * nm1))?;
        // Back through ẑ = x/σ with σ² = xᵀx/(N−1), x the centered column:
        // ∂L/∂x_n = h_n/σ − ẑ_n (hᵀẑ) / ((N−1) σ).
        let mut proj = vec![0.0; d];
        for r in 0..n {
            for ((p, hv), zv) in proj.iter_mut().zip(h.row(r)).zip(self.z_hat.row(r)) {
                *p += hv * zv;
            }
        }
        let mut g = Matrix::zeros(n, d);
        for r in 0..n {
            let (hr, zr) = (h.row(r), self.z_hat.row(r));
            for (c, out) in g.row_mut(r).iter_mut().enumerate() {
                let s = self.stds[c];
                if s > 0.0 {
                    *out = (hr[c] - zr[c] * proj[c] / nm1) / s;
                }
            }
        }
        // Centering is a projection; the expression above already has zero
        // column sums up to round-off, remove the residue.
        let means = g.column_means();
        for r in 0..n {
            for (x, m) in g.row_mut(r).iter_mut().zip(&means) {
                *x -= m;
            }
        }
        Ok(g)
    }
}

/// Spectral-entropy loss and `ln det(C + εI)`.
pub fn spectral_loss(z: &Matrix, eps: f64) -> Result<(f64, f64)> {
    let parts = SpectralParts::compute(z, eps)?;
    Ok((parts.loss(), parts.chol.logdet()))
}

/// Gradient of [`spectral_loss`] with respect to `z`, including the
/// dependence of the column means and standard deviations on `z`.
pub fn spectral_grad(z: &Matrix, eps: f64) -> Result<Matrix> {
    SpectralParts::compute(z, eps)?.grad()
}

/// Combined regularizer `α_marg·L_marg + α_spec·L_spec` and its gradient.
///
/// `lambda` is not applied here; it weights the regularizer inside the
/// training objective.
pub fn mer_loss_grad(z: &Matrix, cfg: &MerConfig) -> Result<(MerBreakdown, Matrix)> {
    cfg.validate()?;
    let (means, sigmas) = z.column_mean_std(cfg.eps)?;
    let d = sigmas.len().max(1) as f64;
    let marginal = sigmas.iter().map(|&s| (cfg.gamma - s).max(0.0)).sum::<f64>() / d;
    let parts = SpectralParts::compute(z, cfg.eps)?;
    let spectral = parts.loss();

    let mut grad = Matrix::zeros(z.rows(), z.cols());
    if cfg.alpha_marg != 0.0 {
        let gm = marginal_grad_from_stats(z, cfg.gamma, &means, &sigmas);
        accumulate(&mut grad, cfg.alpha_marg, &gm);
    }
    if cfg.alpha_spec != 0.0 {
        let gs = parts.grad()?;
        accumulate(&mut grad, cfg.alpha_spec, &gs);
    }
    let breakdown = MerBreakdown {
        marginal_loss: marginal,
        spectral_loss: spectral,
        combined: cfg.alpha_marg * marginal + cfg.alpha_spec * spectral,
        per_dim_sigma: sigmas,
        correlation_logdet: parts.chol.logdet(),
    };
    Ok((breakdown, grad))
}

fn accumulate(acc: &mut Matrix, weight: f64, g: &Matrix) {
    for (a, b) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
        *a += weight * b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, SeededRng};

    fn orthogonal_pm1() -> Matrix {
        Matrix::from_rows(&[[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]]).unwrap()
    }

    #[test]
    fn defaults() {
        let c = MerConfig::default();
        assert_eq!(
            (c.gamma, c.eps, c.alpha_marg, c.alpha_spec, c.lambda),
            (1.0, 1e-4, 1.0, 1.0, 3.0)
        );
        assert!(c.validate().is_ok());
        assert!(MerConfig { gamma: 0.0, ..c }.validate().is_err());
        assert!(MerConfig { lambda: -1.0, ..c }.validate().is_err());
    }

    #[test]
    fn standardize_fixtures() {
        let z = Matrix::from_rows(&[[0.0, 3.0], [2.0, 3.0]]).unwrap();
        let s = standardize(&z, 1e-4).unwrap();
        let expected = 1.0 / 2.0001f64.sqrt();
        assert!((s.get(0, 0) + expected).abs() < 1e-15);
        assert!((s.get(1, 0) - 0.707089).abs() < 1e-6);
        assert_eq!((s.get(0, 1), s.get(1, 1)), (0.0, 0.0));
        assert!(standardize(&Matrix::zeros(1, 2), 1e-4).is_err());
    }

    #[test]
    fn correlation_fixtures() {
        let c = correlation(&standardize(&orthogonal_pm1(), 0.0).unwrap()).unwrap();
        assert!(c.get(0, 1).abs() < 1e-15);
        let dup = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [4.0, 4.0]]).unwrap();
        let c = correlation(&standardize(&dup, 1e-4).unwrap()).unwrap();
        assert_eq!(c.get(0, 1), c.get(0, 0));
        let single = Matrix::from_rows(&[[1.0], [2.0], [0.0]]).unwrap();
        assert_eq!(
            correlation(&standardize(&single, 1e-4).unwrap()).unwrap().shape(),
            (1, 1)
        );
    }

    #[test]
    fn marginal_fixtures() {
        let (loss, sig) = marginal_loss(&Matrix::from_fn(5, 3, |_, _| 2.5).unwrap(), 1.0, 1e-4).unwrap();
        assert!((loss - 0.99).abs() < 1e-15);
        assert!(sig.iter().all(|s| (s - 0.01).abs() < 1e-15));
        let z = Matrix::from_rows(&[[0.0], [0.2]]).unwrap();
        let (loss, _) = marginal_loss(&z, 1.0, 1e-4).unwrap();
        assert!((loss - (1.0 - 0.0201f64.sqrt())).abs() < 1e-15);
        assert!((loss - 0.8582255).abs() < 1e-6);
    }

    #[test]
    fn marginal_inactive_hinge() {
        let z = gaussian_matrix(&mut SeededRng::new(1), 20, 4).scale(10.0).unwrap();
        let (loss, _) = marginal_loss(&z, 1.0, 1e-4).unwrap();
        assert_eq!(loss, 0.0);
        assert!(marginal_grad(&z, 1.0, 1e-4)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&g| g == 0.0));
    }

    #[test]
    fn marginal_grad_sign_opposes_deviation() {
        let z = gaussian_matrix(&mut SeededRng::new(2), 16, 5).scale(0.3).unwrap();
        let g = marginal_grad(&z, 1.0, 1e-4).unwrap();
        let means = z.column_means();
        for r in 0..16 {
            for c in 0..5 {
                let dev = z.get(r, c) - means[c];
                assert!(g.get(r, c) * dev <= 0.0);
            }
        }
    }

    #[test]
    fn spectral_identity_fixture() {
        let (loss, logdet) = spectral_loss(&orthogonal_pm1(), 1e-4).unwrap();
        assert!((loss + 1.0001f64.ln()).abs() < 1e-12, "{loss}");
        assert!((loss + 9.99950e-5).abs() < 1e-9);
        assert!((logdet - 2.0 * 1.0001f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn spectral_duplicate_columns() {
        let z = Matrix::from_rows(&[[1.0, 1.0], [-1.0, -1.0], [1.0, 1.0], [-1.0, -1.0]]).unwrap();
        let (loss, _) = spectral_loss(&z, 1e-4).unwrap();
        // det([[1+ε, 1], [1, 1+ε]]) = 2ε + ε²
        let expected = -0.5 * (2e-4f64 + 1e-8).ln();
        assert!((loss - expected).abs() < 1e-9, "{loss} vs {expected}");
        assert!((loss - 4.2585).abs() < 1e-4);
    }

    #[test]
    fn spectral_single_column() {
        let z = Matrix::from_rows(&[[0.3], [1.7], [-0.4]]).unwrap();
        let (loss, _) = spectral_loss(&z, 1e-4).unwrap();
        assert!((loss + 1.0001f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn spectral_constant_column_is_finite() {
        let z = Matrix::from_rows(&[[1.0, 2.0], [1.0, -1.0], [1.0, 0.5]]).unwrap();
        let (loss, _) = spectral_loss(&z, 1e-4).unwrap();
        assert!(loss.is_finite() && loss > 1.0);
        let g = spectral_grad(&z, 1e-4).unwrap();
        assert!(g.as_slice().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn spectral_grad_columns_sum_to_zero() {
        let z = gaussian_matrix(&mut SeededRng::new(4), 16, 8);
        let g = spectral_grad(&z, 1e-4).unwrap();
        for c in 0..8 {
            let s: f64 = g.column(c).iter().sum();
            assert!(s.abs() < 1e-9, "{s}");
        }
    }

    #[test]
    fn combined_reductions() {
        let z = gaussian_matrix(&mut SeededRng::new(5), 12, 6).scale(0.5).unwrap();
        let off = MerConfig {
            alpha_marg: 0.0,
            alpha_spec: 0.0,
            ..MerConfig::default()
        };
        let (b, g) = mer_loss_grad(&z, &off).unwrap();
        assert_eq!(b.combined, 0.0);
        assert!(g.as_slice().iter().all(|&x| x == 0.0));

        let marg_only = MerConfig {
            alpha_spec: 0.0,
            ..MerConfig::default()
        };
        let (b, g) = mer_loss_grad(&z, &marg_only).unwrap();
        let (l, sig) = marginal_loss(&z, 1.0, 1e-4).unwrap();
        assert_eq!(b.combined, l);
        assert_eq!(b.per_dim_sigma, sig);
        assert_eq!(g, marginal_grad(&z, 1.0, 1e-4).unwrap());
    }

    #[test]
    fn degenerate_batch() {
        let z = Matrix::zeros(1, 3);
        assert!(matches!(
            marginal_loss(&z, 1.0, 1e-4),
            Err(Error::DegenerateBatch { rows: 1 })
        ));
        assert!(matches!(
            spectral_loss(&z, 1e-4),
            Err(Error::DegenerateBatch { rows: 1 })
        ));
        assert!(mer_loss_grad(&z, &MerConfig::default()).is_err());
    }
}

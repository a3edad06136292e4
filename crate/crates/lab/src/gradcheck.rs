//! Central finite differences against the closed-form regularizer gradients.

use merdg_core::mer::{marginal_grad, marginal_loss, mer_loss_grad, spectral_grad, spectral_loss};
use merdg_core::rng::{gaussian_matrix, SeededRng};
use merdg_core::{Matrix, MerConfig};

use crate::error::{LabError, Result};

/// Largest normwise relative error that counts as a pass.
pub const TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub n: usize,
    pub d: usize,
    pub seeds: u64,
    pub step: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            n: 16,
            d: 8,
            seeds: 20,
            step: 1e-5,
        }
    }
}

/// Worst case of one gradient over all seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Worst {
    pub name: &'static str,
    pub rel_err: f64,
    pub seed: u64,
}

/// Correlated columns with spreads from 0.3 up, so the hinge is active on
/// some dimensions and inactive on others.
pub fn test_batch(seed: u64, n: usize, d: usize) -> Result<Matrix> {
    let mut rng = SeededRng::new(seed);
    let base = gaussian_matrix(&mut rng, n, d);
    let mix = gaussian_matrix(&mut rng, d, d).scale(0.4)?;
    let mixed = base.add(&base.matmul(&mix)?)?;
    Ok(Matrix::from_fn(n, d, |r, c| mixed.get(r, c) * (0.3 + 0.25 * c as f64))?)
}

fn finite_difference(z: &Matrix, step: f64, f: &dyn Fn(&Matrix) -> Result<f64>) -> Result<Matrix> {
    let (n, d) = z.shape();
    let mut out = vec![0.0; n * d];
    let mut probe = z.as_slice().to_vec();
    for (i, o) in out.iter_mut().enumerate() {
        let x = probe[i];
        probe[i] = x + step;
        let fp = f(&Matrix::new(n, d, probe.clone())?)?;
        probe[i] = x - step;
        let fm = f(&Matrix::new(n, d, probe.clone())?)?;
        probe[i] = x;
        *o = (fp - fm) / (2.0 * step);
    }
    Ok(Matrix::new(n, d, out)?)
}

/// `‖analytic − numeric‖_F / ‖numeric‖_F`, with the denominator floored at
/// 1e-12 so an all-zero gradient compares absolutely.
pub fn rel_err(analytic: &Matrix, numeric: &Matrix) -> Result<f64> {
    Ok(analytic.sub(numeric)?.frobenius_norm() / numeric.frobenius_norm().max(1e-12))
}

type Case = (
    &'static str,
    Box<dyn Fn(&Matrix) -> Result<f64>>,
    Box<dyn Fn(&Matrix) -> Result<Matrix>>,
);

fn cases(cfg: MerConfig) -> Vec<Case> {
    vec![
        (
            "marginal",
            Box::new(move |z| Ok(marginal_loss(z, cfg.gamma, cfg.eps)?.0)),
            Box::new(move |z| Ok(marginal_grad(z, cfg.gamma, cfg.eps)?)),
        ),
        (
            "spectral",
            Box::new(move |z| Ok(spectral_loss(z, cfg.eps)?.0)),
            Box::new(move |z| Ok(spectral_grad(z, cfg.eps)?)),
        ),
        (
            "combined",
            Box::new(move |z| Ok(mer_loss_grad(z, &cfg)?.0.combined)),
            Box::new(move |z| Ok(mer_loss_grad(z, &cfg)?.1)),
        ),
    ]
}

/// Worst relative error per gradient, checked at the default regularizer
/// settings.
pub fn run(cfg: &GradCheckConfig) -> Result<Vec<Worst>> {
    if cfg.seeds == 0 {
        return Err(LabError::Usage("need ≥1 seed".into()));
    }
    if !(cfg.step > 0.0 && cfg.step.is_finite()) {
        return Err(LabError::Usage(format!("step must be positive, got {}", cfg.step)));
    }
    let cases = cases(MerConfig::default());
    let mut worst: Vec<Worst> = cases
        .iter()
        .map(|c| Worst {
            name: c.0,
            rel_err: 0.0,
            seed: 0,
        })
        .collect();
    for seed in 0..cfg.seeds {
        let z = test_batch(seed, cfg.n, cfg.d)?;
        for (w, (_, loss, grad)) in worst.iter_mut().zip(&cases) {
            let err = rel_err(&grad(&z)?, &finite_difference(&z, cfg.step, loss.as_ref())?)?;
            if !(err <= w.rel_err) {
                *w = Worst {
                    name: w.name,
                    rel_err: err,
                    seed,
                };
            }
        }
    }
    Ok(worst)
}

/// Ok when every worst case is under [`TOLERANCE`]; otherwise an error that
/// names the offending gradient and seed.
pub fn verdict(worst: &[Worst]) -> Result<()> {
    match worst.iter().find(|w| !(w.rel_err < TOLERANCE)) {
        None => Ok(()),
        Some(w) => Err(LabError::GradCheck(format!(
            "{} gradient relative error {:e} at seed {} exceeds {TOLERANCE:e}",
            w.name, w.rel_err, w.seed
        ))),
    }
}

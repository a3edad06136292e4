//! Representation diagnostics: effective rank, singular-value spectrum,
//! cross-domain similarity and linear probes on frozen features.

mod probe;
mod similarity;

pub(crate) use probe::{argmax, fraction_correct};
pub use probe::{domain_probe, stratified_split, LinearProbe, ProbeConfig, ProbeResult};
pub use similarity::{
    cka_linear, cka_rbf, class_conditional_alignment, procrustes_similarity, AlignmentMetric, AlignmentReport,
    Bandwidth,
};

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::singular_values;
use crate::matrix::Matrix;

/// Floor applied to `σ_i/σ_1` before taking the log in [`spectrum`].
pub const SPECTRUM_FLOOR: f64 = 1e-12;

/// RankMe effective rank: `exp(−Σ p_i ln p_i)` with `p_i = σ_i / Σ_j σ_j`.
///
/// Zero singular values contribute nothing (`0·ln 0 = 0`).
pub fn rankme(z: &Matrix) -> Result<f64> {
    let sv = singular_values(z);
    let tol = 1e-12 * z.rows().max(z.cols()) as f64;
    if !sv.iter().any(|&s| s > tol) {
        return Err(Error::DegenerateMatrix("rankme: all singular values vanish"));
    }
    let total: f64 = sv.iter().sum();
    let entropy: f64 = sv
        .iter()
        .map(|&s| s / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * libm::log(p))
        .sum();
    Ok(libm::exp(entropy))
}

/// Log-normalized singular values `ln(σ_i/σ_1)`, descending; zero ratios are
/// floored at `ln(1e-12)`.
pub fn spectrum(z: &Matrix) -> Result<Vec<f64>> {
    let sv = singular_values(z);
    let top = sv.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Err(Error::DegenerateMatrix("spectrum: zero matrix"));
    }
    Ok(sv.iter().map(|&s| libm::log((s / top).max(SPECTRUM_FLOOR))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, SeededRng};
    use alloc::vec;

    #[test]
    fn rankme_uniform_spectrum() {
        let z = Matrix::diag(&[2.0, 2.0, 2.0, 2.0]).unwrap();
        assert!((rankme(&z).unwrap() - 4.0).abs() < 1e-9);
        let tall = Matrix::from_fn(6, 3, |r, c| if r == c { 5.0 } else { 0.0 }).unwrap();
        assert!((rankme(&tall).unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn rankme_single_direction() {
        let z = Matrix::from_fn(5, 3, |r, c| (r as f64 + 1.0) * [1.0, -2.0, 0.5][c]).unwrap();
        assert!((rankme(&z).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rankme_two_to_one() {
        let z = Matrix::diag(&[2.0, 1.0]).unwrap();
        let expected = (3f64.ln() - (2.0 / 3.0) * 2f64.ln()).exp();
        assert!((rankme(&z).unwrap() - expected).abs() < 1e-12);
        assert!((rankme(&z).unwrap() - 1.88988).abs() < 1e-4);
    }

    #[test]
    fn rankme_scale_free() {
        let z = gaussian_matrix(&mut SeededRng::new(3), 20, 6);
        let a = rankme(&z).unwrap();
        let b = rankme(&z.scale(37.5).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-10);
        assert!((1.0..=6.0).contains(&a));
    }

    #[test]
    fn rankme_zero_matrix() {
        assert!(matches!(rankme(&Matrix::zeros(4, 3)), Err(Error::DegenerateMatrix(_))));
    }

    #[test]
    fn spectrum_fixtures() {
        assert_eq!(spectrum(&Matrix::diag(&[4.0, 4.0]).unwrap()).unwrap(), vec![0.0, 0.0]);
        let s = spectrum(&Matrix::diag(&[4.0, 2.0]).unwrap()).unwrap();
        assert_eq!(s[0], 0.0);
        assert!((s[1] + 2f64.ln()).abs() < 1e-12);
        let s = spectrum(&Matrix::diag(&[4.0, 0.0]).unwrap()).unwrap();
        assert_eq!(s, vec![0.0, SPECTRUM_FLOOR.ln()]);
        assert!(spectrum(&Matrix::zeros(2, 2)).is_err());
    }
}

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{ensure, Error, Result};
use crate::linalg::singular_values;
use crate::matrix::Matrix;
use crate::rng::SeededRng;

fn check_pair(x: &Matrix, y: &Matrix) -> Result<()> {
    ensure!(
        x.rows() == y.rows(),
        Error::DimensionMismatch(format!("paired inputs have {} and {} rows", x.rows(), y.rows()))
    );
    ensure!(
        x.rows() >= 3,
        Error::Contract(format!("similarity needs at least 3 samples, got {}", x.rows()))
    );
    Ok(())
}

fn frobenius_inner(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

/// Linear CKA on column-centered features:
/// `‖ŶᵀX̂‖²_F / (‖X̂ᵀX̂‖_F · ‖ŶᵀŶ‖_F)`.
pub fn cka_linear(x: &Matrix, y: &Matrix) -> Result<f64> {
    check_pair(x, y)?;
    let (xc, yc) = (x.center_columns(), y.center_columns());
    let (num, dx, dy) = if x.cols().max(y.cols()) <= x.rows() {
        let cross = yc.t_matmul(&xc)?;
        let cross_sq = frobenius_inner(&cross, &cross);
        (cross_sq, xc.gram()?.frobenius_norm(), yc.gram()?.frobenius_norm())
    } else {
        // sample-space Gram matrices give the same three Frobenius forms
        let k = xc.matmul_t(&xc)?;
        let l = yc.matmul_t(&yc)?;
        (frobenius_inner(&k, &l), k.frobenius_norm(), l.frobenius_norm())
    };
    let den = dx * dy;
    ensure!(den > 0.0, Error::DegenerateMatrix("cka: constant features"));
    Ok(num / den)
}

/// RBF kernel bandwidth choice for [`cka_rbf`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Bandwidth {
    /// Median pairwise Euclidean distance of each input.
    #[default]
    Median,
    Fixed(f64),
}

fn pairwise_sq_dists(x: &Matrix) -> Matrix {
    let n = x.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let s: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            d.set(i, j, s);
            d.set(j, i, s);
        }
    }
    d
}

fn median_distance(sq: &Matrix) -> f64 {
    let n = sq.rows();
    let mut v: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in 0..i {
            v.push(libm::sqrt(sq.get(i, j)));
        }
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

fn centered_rbf_gram(x: &Matrix, bandwidth: Bandwidth) -> Result<Matrix> {
    let sq = pairwise_sq_dists(x);
    let h = match bandwidth {
        Bandwidth::Median => median_distance(&sq),
        Bandwidth::Fixed(h) => h,
    };
    ensure!(
        h > 0.0 && h.is_finite(),
        Error::DegenerateMatrix("cka_rbf: zero bandwidth (identical rows)")
    );
    let n = x.rows();
    let scale = -1.0 / (2.0 * h * h);
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            k.set(i, j, libm::exp(sq.get(i, j) * scale));
        }
    }
    Ok(double_center(&k))
}

/// `H K H` with `H = I − 11ᵀ/n`.
fn double_center(k: &Matrix) -> Matrix {
    let n = k.rows();
    let row_means: Vec<f64> = (0..n).map(|i| k.row(i).iter().sum::<f64>() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    // k is symmetric, so column means equal row means
    Matrix::from_raw(
        n,
        n,
        (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                k.get(i, j) - row_means[i] - row_means[j] + grand
            })
            .collect(),
    )
}

/// CKA on double-centered RBF Gram matrices.
pub fn cka_rbf(x: &Matrix, y: &Matrix, bandwidth: Bandwidth) -> Result<f64> {
    check_pair(x, y)?;
    let k = centered_rbf_gram(x, bandwidth)?;
    let l = centered_rbf_gram(y, bandwidth)?;
    let den = k.frobenius_norm() * l.frobenius_norm();
    ensure!(den > 0.0, Error::DegenerateMatrix("cka_rbf: constant kernel"));
    Ok(frobenius_inner(&k, &l) / den)
}

fn unit_frobenius_centered(x: &Matrix) -> Result<Matrix> {
    let c = x.center_columns();
    let norm = c.frobenius_norm();
    ensure!(norm > 0.0, Error::DegenerateMatrix("procrustes: zero-norm input"));
    c.scale(1.0 / norm)
}

/// Orthogonal Procrustes similarity: the nuclear norm of `X̂ᵀŶ` for
/// column-centered, unit-Frobenius `X̂`, `Ŷ`.
///
/// Equals `1 − ½ min_Q ‖X̂ − ŶQ‖²_F` over orthogonal `Q`. Inputs with
/// different widths behave as if the narrower one were zero-padded.
pub fn procrustes_similarity(x: &Matrix, y: &Matrix) -> Result<f64> {
    ensure!(
        x.rows() == y.rows(),
        Error::DimensionMismatch(format!("paired inputs have {} and {} rows", x.rows(), y.rows()))
    );
    let xs = unit_frobenius_centered(x)?;
    let ys = unit_frobenius_centered(y)?;
    Ok(singular_values(&xs.t_matmul(&ys)?).iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignmentMetric {
    CkaLinear,
    CkaRbf,
    Procrustes,
}

impl AlignmentMetric {
    pub const ALL: [AlignmentMetric; 3] = [
        AlignmentMetric::CkaLinear,
        AlignmentMetric::CkaRbf,
        AlignmentMetric::Procrustes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlignmentMetric::CkaLinear => "cka-linear",
            AlignmentMetric::CkaRbf => "cka-rbf",
            AlignmentMetric::Procrustes => "procrustes",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn score(self, x: &Matrix, y: &Matrix) -> Result<f64> {
        match self {
            AlignmentMetric::CkaLinear => cka_linear(x, y),
            AlignmentMetric::CkaRbf => cka_rbf(x, y, Bandwidth::Median),
            AlignmentMetric::Procrustes => procrustes_similarity(x, y),
        }
    }
}

impl fmt::Display for AlignmentMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    pub metric: AlignmentMetric,
    pub per_class_scores: BTreeMap<usize, f64>,
    pub mean_score: f64,
}

const MIN_CLASS_SAMPLES: usize = 3;

fn class_indices(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        map.entry(l).or_default().push(i);
    }
    map
}

fn subsample(rng: &mut SeededRng, idx: &[usize], n: usize) -> Vec<usize> {
    if idx.len() == n {
        return idx.to_vec();
    }
    let mut pick = idx.to_vec();
    rng.shuffle(&mut pick);
    pick.truncate(n);
    pick.sort_unstable();
    pick
}

/// Per-class similarity between source and target features, averaged over
/// classes.
///
/// Each class is subsampled (with `rng`) to the smaller of its two counts so
/// the metric sees equally many rows from each side.
pub fn class_conditional_alignment(
    x_src: &Matrix,
    y_src: &[usize],
    x_tgt: &Matrix,
    y_tgt: &[usize],
    metric: AlignmentMetric,
    rng: &mut SeededRng,
) -> Result<AlignmentReport> {
    ensure!(
        x_src.rows() == y_src.len() && x_tgt.rows() == y_tgt.len(),
        Error::DimensionMismatch(format!("feature rows and label counts differ"))
    );
    let src = class_indices(y_src);
    let tgt = class_indices(y_tgt);
    let mut classes: Vec<usize> = src.keys().chain(tgt.keys()).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let empty = Vec::new();
    let mut per_class = BTreeMap::new();
    for c in classes {
        let (a, b) = (src.get(&c).unwrap_or(&empty), tgt.get(&c).unwrap_or(&empty));
        let n = a.len().min(b.len());
        ensure!(
            n >= MIN_CLASS_SAMPLES,
            Error::MissingClass {
                class: c,
                required: MIN_CLASS_SAMPLES
            }
        );
        let xa = x_src.select_rows(&subsample(rng, a, n));
        let xb = x_tgt.select_rows(&subsample(rng, b, n));
        per_class.insert(c, metric.score(&xa, &xb)?);
    }
    let mean_score = per_class.values().sum::<f64>() / per_class.len().max(1) as f64;
    Ok(AlignmentReport {
        metric,
        per_class_scores: per_class,
        mean_score,
    })
}

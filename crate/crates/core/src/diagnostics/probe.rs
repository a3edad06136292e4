use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure, Error, Result};
use crate::matrix::Matrix;
use crate::rng::SeededRng;

/// Training recipe shared by the domain probe and the standalone class probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Fraction of each class used for fitting; the rest is held out.
    pub train_fraction: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 200,
            learning_rate: 0.1,
            train_fraction: 0.8,
        }
    }
}

/// Multinomial logistic regression on standardized features, fitted by
/// full-batch gradient descent from zero weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    means: Vec<f64>,
    inv_stds: Vec<f64>,
    weights: Matrix,
    bias: Vec<f64>,
}

impl LinearProbe {
    pub fn fit(x: &Matrix, labels: &[usize], num_classes: usize, epochs: usize, learning_rate: f64) -> Result<Self> {
        ensure!(
            x.rows() == labels.len() && x.rows() >= 2,
            Error::Contract(format!(
                "probe needs >= 2 labeled rows, got {} / {}",
                x.rows(),
                labels.len()
            ))
        );
        ensure!(num_classes >= 2, Error::Contract(format!("probe needs >= 2 classes")));
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidLabel {
                label: bad,
                num_classes,
            });
        }
        let (means, stds) = x.column_mean_std(0.0)?;
        let inv_stds: Vec<f64> = stds.iter().map(|&s| if s > 0.0 { 1.0 / s } else { 0.0 }).collect();
        let mut probe = LinearProbe {
            means,
            inv_stds,
            weights: Matrix::zeros(x.cols(), num_classes),
            bias: vec![0.0; num_classes],
        };
        let xs = probe.standardize(x);
        let n = x.rows() as f64;
        for _ in 0..epochs {
            let mut delta = probe.probabilities(&xs)?;
            for (r, &l) in labels.iter().enumerate() {
                let row = delta.row_mut(r);
                row[l] -= 1.0;
                row.iter_mut().for_each(|v| *v /= n);
            }
            let gw = xs.t_matmul(&delta)?;
            let gb = delta.column_means();
            for (w, g) in probe.weights.as_mut_slice().iter_mut().zip(gw.as_slice()) {
                *w -= learning_rate * g;
            }
            for (b, g) in probe.bias.iter_mut().zip(&gb) {
                // column_means divided by n once more
                *b -= learning_rate * g * n;
            }
        }
        ensure!(
            probe.weights.as_slice().iter().all(|w| w.is_finite()),
            Error::NonFinite("LinearProbe::fit")
        );
        Ok(probe)
    }

    fn standardize(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for r in 0..x.rows() {
            for ((v, m), k) in out.row_mut(r).iter_mut().zip(&self.means).zip(&self.inv_stds) {
                *v = (*v - m) * k;
            }
        }
        out
    }

    fn probabilities(&self, xs: &Matrix) -> Result<Matrix> {
        let mut logits = xs.matmul(&self.weights)?;
        for r in 0..logits.rows() {
            let row = logits.row_mut(r);
            row.iter_mut().zip(&self.bias).for_each(|(v, b)| *v += b);
            softmax_in_place(row);
        }
        Ok(logits)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        ensure!(
            x.cols() == self.means.len(),
            Error::DimensionMismatch(format!(
                "probe fitted on {} features, got {}",
                self.means.len(),
                x.cols()
            ))
        );
        let p = self.probabilities(&self.standardize(x))?;
        Ok((0..p.rows()).map(|r| argmax(p.row(r))).collect())
    }

    pub fn accuracy(&self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        let pred = self.predict(x)?;
        ensure!(
            pred.len() == labels.len(),
            Error::DimensionMismatch(format!("{} rows vs {} labels", pred.len(), labels.len()))
        );
        Ok(fraction_correct(&pred, labels))
    }
}

pub(crate) fn fraction_correct(pred: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    pred.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

/// First index of the maximum; ties resolve to the lowest class.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Seeded per-class split; each class contributes
/// `round(train_fraction · count)` rows (at least one, and at least one held
/// out when the class has two or more rows) to the training side.
pub fn stratified_split(labels: &[usize], train_fraction: f64, rng: &mut SeededRng) -> (Vec<usize>, Vec<usize>) {
    let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut idx in by_class {
        if idx.is_empty() {
            continue;
        }
        rng.shuffle(&mut idx);
        let n = idx.len();
        let mut k = libm::round(train_fraction * n as f64) as usize;
        k = k.clamp(1, if n >= 2 { n - 1 } else { n });
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Outcome of a domain-identification probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub accuracy: f64,
    pub num_domains: usize,
    /// `confusion[true][predicted]` counts over the held-out split.
    pub confusion: Vec<Vec<usize>>,
}

const MIN_DOMAIN_SAMPLES: usize = 10;

/// Trains a linear classifier to tell domains apart from frozen features and
/// reports held-out accuracy.
pub fn domain_probe(features_per_domain: &[Matrix], rng: &mut SeededRng, cfg: &ProbeConfig) -> Result<ProbeResult> {
    let s = features_per_domain.len();
    ensure!(
        s >= 2,
        Error::Contract(format!("domain probe needs >= 2 domains, got {s}"))
    );
    for (i, f) in features_per_domain.iter().enumerate() {
        ensure!(
            f.rows() >= MIN_DOMAIN_SAMPLES,
            Error::Contract(format!(
                "domain {i} has {} samples, need >= {MIN_DOMAIN_SAMPLES}",
                f.rows()
            ))
        );
    }
    let refs: Vec<&Matrix> = features_per_domain.iter().collect();
    let x = Matrix::vstack(&refs)?;
    let labels: Vec<usize> = features_per_domain
        .iter()
        .enumerate()
        .flat_map(|(d, f)| core::iter::repeat_n(d, f.rows()))
        .collect();
    let (train, test) = stratified_split(&labels, cfg.train_fraction, rng);
    let pick = |idx: &[usize]| idx.iter().map(|&i| labels[i]).collect::<Vec<_>>();
    let probe = LinearProbe::fit(&x.select_rows(&train), &pick(&train), s, cfg.epochs, cfg.learning_rate)?;
    let truth = pick(&test);
    let pred = probe.predict(&x.select_rows(&test))?;
    let mut confusion = vec![vec![0usize; s]; s];
    for (&t, &p) in truth.iter().zip(&pred) {
        confusion[t][p] += 1;
    }
    Ok(ProbeResult {
        accuracy: fraction_correct(&pred, &truth),
        num_domains: s,
        confusion,
    })
}

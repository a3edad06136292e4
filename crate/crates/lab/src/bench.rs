//! Wall-clock cost of the regularizer against a toy training step.

use std::time::Instant;

use merdg_core::mer::mer_loss_grad;
use merdg_core::net::{FusionModel, ModelSpec, TrainConfig};
use merdg_core::rng::{gaussian_matrix, SeededRng};
use merdg_core::MerConfig;

use crate::error::{LabError, Result};

pub const MIN_REPS: usize = 20;
/// Input width of the toy model whose step is timed.
pub const TOY_INPUT: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub d: usize,
    /// Median seconds of one regularizer loss-and-gradient on N×D.
    pub mer_seconds: f64,
    /// Median seconds of one unregularized forward and backward pass of a
    /// one-encoder toy model emitting D features.
    pub net_seconds: f64,
    /// `mer / (net + mer)`.
    pub overhead_fraction: f64,
}

fn median_seconds(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    f()?;
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        f()?;
        times.push(t.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    Ok(if times.len() % 2 == 0 {
        0.5 * (times[mid - 1] + times[mid])
    } else {
        times[mid]
    })
}

pub fn run(n: usize, dims: &[usize], reps: usize) -> Result<Vec<BenchRow>> {
    if reps < MIN_REPS {
        return Err(LabError::Usage(format!(
            "need at least {MIN_REPS} repetitions, got {reps}"
        )));
    }
    if dims.is_empty() {
        return Err(LabError::Usage("empty dimension list".into()));
    }
    let mut rows = Vec::with_capacity(dims.len());
    for &d in dims {
        let mut rng = SeededRng::new(d as u64);
        let z = gaussian_matrix(&mut rng, n, d);
        let cfg = MerConfig::default();
        let mer_seconds = median_seconds(reps, || {
            std::hint::black_box(mer_loss_grad(&z, &cfg)?);
            Ok(())
        })?;
        let spec = ModelSpec {
            input_dims: vec![TOY_INPUT],
            hidden: vec![64, 64],
            embed_dim: d,
            num_classes: 4,
        };
        let model = FusionModel::init(&spec, 0)?;
        let x = vec![gaussian_matrix(&mut rng, n, TOY_INPUT)];
        let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();
        let plain = TrainConfig::default();
        let net_seconds = median_seconds(reps, || {
            std::hint::black_box(model.loss_and_grads(&x, &labels, &plain, &mut SeededRng::new(0))?);
            Ok(())
        })?;
        rows.push(BenchRow {
            d,
            mer_seconds,
            net_seconds,
            overhead_fraction: mer_seconds / (net_seconds + mer_seconds),
        });
    }
    Ok(rows)
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["d", "mer_seconds", "net_seconds", "overhead_fraction"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.d.to_string(),
            r.mer_seconds.to_string(),
            r.net_seconds.to_string(),
            r.overhead_fraction.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}

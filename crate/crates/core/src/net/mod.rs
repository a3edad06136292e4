//! Late-fusion MLP classifier with hand-written backpropagation.
//!
//! Each modality has its own rectifier MLP encoder; the encoder outputs are
//! concatenated and fed to one linear classifier layer. The training
//! objective is cross-entropy plus `λ · Σ_m L_MER(Z^m)` on the raw encoder
//! outputs, with optional per-encoder baseline regularizers.

mod adam;
mod train;

pub use adam::AdamState;
pub use train::{
    corrupted_evaluate, evaluate, standalone_probe, train, BaselineReg, Corruption, EpochMetrics, ProbeAccuracy,
    RunRecord, TrainConfig,
};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure, Error, Result};
use crate::matrix::Matrix;
use crate::mer::{mer_loss_grad, MerBreakdown};
use crate::rng::SeededRng;

/// Affine layer `x ↦ xW + b` with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        ensure!(
            weight.cols() == bias.len(),
            Error::DimensionMismatch(format!("weight has {} outputs, bias {}", weight.cols(), bias.len()))
        );
        ensure!(bias.iter().all(|b| b.is_finite()), Error::NonFinite("Linear::new"));
        Ok(Linear { weight, bias })
    }

    /// Gaussian fan-in initialization with scale `sqrt(2 / fan_in)`, zero bias.
    pub fn init(rng: &mut SeededRng, fan_in: usize, fan_out: usize) -> Self {
        let scale = libm::sqrt(2.0 / fan_in as f64);
        Linear {
            weight: Matrix::from_fn(fan_in, fan_out, |_, _| scale * rng.normal()).expect("finite init"),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Linear {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = x.matmul(&self.weight)?;
        for r in 0..out.rows() {
            out.row_mut(r).iter_mut().zip(&self.bias).for_each(|(v, b)| *v += b);
        }
        Ok(out)
    }

    /// Accumulates `dW = xᵀg`, `db = Σ_rows g` into `grad`.
    fn accumulate_grads(&self, x: &Matrix, g: &Matrix, grad: &mut Linear) -> Result<()> {
        let gw = x.t_matmul(g)?;
        for (a, b) in grad.weight.as_mut_slice().iter_mut().zip(gw.as_slice()) {
            *a += b;
        }
        for r in 0..g.rows() {
            grad.bias.iter_mut().zip(g.row(r)).for_each(|(a, b)| *a += b);
        }
        Ok(())
    }
}

/// Rectifier MLP; the last layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

struct MlpTrace {
    /// Input of every layer; entries after the first are rectified.
    inputs: Vec<Matrix>,
    output: Matrix,
}

impl Mlp {
    /// `widths = [input, hidden.., output]`.
    pub fn init(rng: &mut SeededRng, widths: &[usize]) -> Result<Self> {
        ensure!(
            widths.len() >= 2,
            Error::InvalidConfig(format!("an MLP needs input and output widths, got {widths:?}"))
        );
        ensure!(
            widths.iter().all(|&w| w > 0),
            Error::InvalidConfig(format!("zero-width layer in {widths:?}"))
        );
        Ok(Mlp {
            layers: widths.windows(2).map(|w| Linear::init(rng, w[0], w[1])).collect(),
        })
    }

    pub fn new(layers: Vec<Linear>) -> Result<Self> {
        ensure!(
            !layers.is_empty(),
            Error::InvalidConfig(format!("an MLP needs at least one layer"))
        );
        for (i, pair) in layers.windows(2).enumerate() {
            ensure!(
                pair[0].fan_out() == pair[1].fan_in(),
                Error::DimensionMismatch(format!(
                    "layer {i} emits {} but layer {} expects {}",
                    pair[0].fan_out(),
                    i + 1,
                    pair[1].fan_in()
                ))
            );
        }
        Ok(Mlp { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.trace(x)?.output)
    }

    fn trace(&self, x: &Matrix) -> Result<MlpTrace> {
        ensure!(
            x.cols() == self.input_dim(),
            Error::DimensionMismatch(format!("encoder expects {} inputs, got {}", self.input_dim(), x.cols()))
        );
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = layer.forward(&h)?;
            if i + 1 < self.layers.len() {
                out.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
            }
            inputs.push(h);
            h = out;
        }
        Ok(MlpTrace { inputs, output: h })
    }

    fn backward(&self, trace: &MlpTrace, grad_out: Matrix, grads: &mut Mlp) -> Result<()> {
        let mut g = grad_out;
        for i in (0..self.layers.len()).rev() {
            let x = &trace.inputs[i];
            self.layers[i].accumulate_grads(x, &g, &mut grads.layers[i])?;
            if i > 0 {
                let mut below = g.matmul_t(&self.layers[i].weight)?;
                for (v, &a) in below.as_mut_slice().iter_mut().zip(x.as_slice()) {
                    if a <= 0.0 {
                        *v = 0.0;
                    }
                }
                g = below;
            }
        }
        Ok(())
    }

    fn zeros_like(&self) -> Mlp {
        Mlp {
            layers: self.layers.iter().map(Linear::zeros_like).collect(),
        }
    }
}

/// Architecture of a [`FusionModel`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ModelSpec {
    pub input_dims: Vec<usize>,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub num_classes: usize,
}

impl ModelSpec {
    /// Two hidden layers of 64 and a 16-wide embedding per encoder.
    pub fn new(input_dims: Vec<usize>, num_classes: usize) -> Self {
        ModelSpec {
            input_dims,
            hidden: vec![64, 64],
            embed_dim: 16,
            num_classes,
        }
    }
}

/// Per-modality encoders plus a linear classifier over their concatenation.
///
/// The same type carries parameter gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub encoders: Vec<Mlp>,
    pub head: Linear,
}

/// Scalar parts of the training objective for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLosses {
    pub ce: f64,
    /// One breakdown per modality; empty when the regularizer is off.
    pub mer: Vec<MerBreakdown>,
    /// `λ · Σ_m combined_m`.
    pub mer_weighted: f64,
    /// `w/2 · Σ ‖W_enc‖²` under weight decay, else 0.
    pub weight_penalty: f64,
    pub total: f64,
}

impl FusionModel {
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        ensure!(
            !spec.input_dims.is_empty(),
            Error::InvalidConfig(format!("model needs at least one modality"))
        );
        ensure!(
            spec.num_classes >= 2,
            Error::InvalidConfig(format!("model needs >= 2 classes"))
        );
        let mut rng = SeededRng::new(seed);
        let encoders = spec
            .input_dims
            .iter()
            .map(|&d| {
                let mut widths = vec![d];
                widths.extend_from_slice(&spec.hidden);
                widths.push(spec.embed_dim);
                Mlp::init(&mut rng, &widths)
            })
            .collect::<Result<Vec<_>>>()?;
        let head = Linear::init(&mut rng, spec.embed_dim * encoders.len(), spec.num_classes);
        Ok(FusionModel { encoders, head })
    }

    pub fn new(encoders: Vec<Mlp>, head: Linear) -> Result<Self> {
        let width: usize = encoders.iter().map(Mlp::output_dim).sum();
        ensure!(
            !encoders.is_empty() && head.fan_in() == width,
            Error::DimensionMismatch(format!(
                "classifier expects {} inputs, encoders emit {width}",
                head.fan_in()
            ))
        );
        Ok(FusionModel { encoders, head })
    }

    pub fn num_modalities(&self) -> usize {
        self.encoders.len()
    }

    pub fn num_classes(&self) -> usize {
        self.head.fan_out()
    }

    pub fn zeros_like(&self) -> Self {
        FusionModel {
            encoders: self.encoders.iter().map(Mlp::zeros_like).collect(),
            head: self.head.zeros_like(),
        }
    }

    fn check_inputs(&self, inputs: &[Matrix]) -> Result<usize> {
        ensure!(
            inputs.len() == self.encoders.len(),
            Error::DimensionMismatch(format!(
                "model has {} modalities, got {} inputs",
                self.encoders.len(),
                inputs.len()
            ))
        );
        let n = inputs[0].rows();
        ensure!(
            inputs.iter().all(|x| x.rows() == n),
            Error::DimensionMismatch(format!("modalities have different batch sizes"))
        );
        Ok(n)
    }

    /// Encoder outputs `Z^m` for one batch.
    pub fn encode(&self, inputs: &[Matrix]) -> Result<Vec<Matrix>> {
        self.check_inputs(inputs)?;
        self.encoders.iter().zip(inputs).map(|(e, x)| e.forward(x)).collect()
    }

    /// Logits from (possibly modified) encoder outputs.
    pub fn classify(&self, encoded: &[Matrix]) -> Result<Matrix> {
        let refs: Vec<&Matrix> = encoded.iter().collect();
        self.head.forward(&Matrix::hstack(&refs)?)
    }

    /// Encoder outputs and logits.
    pub fn forward(&self, inputs: &[Matrix]) -> Result<(Vec<Matrix>, Matrix)> {
        let z = self.encode(inputs)?;
        let logits = self.classify(&z)?;
        Ok((z, logits))
    }

    pub fn predict(&self, inputs: &[Matrix]) -> Result<Vec<usize>> {
        let (_, logits) = self.forward(inputs)?;
        Ok((0..logits.rows())
            .map(|r| crate::diagnostics::argmax(logits.row(r)))
            .collect())
    }

    /// Parameter slices in a fixed order: each encoder's layers (weight then
    /// bias), then the classifier.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for e in &self.encoders {
            for l in &e.layers {
                out.push(l.weight.as_slice());
                out.push(&l.bias[..]);
            }
        }
        out.push(self.head.weight.as_slice());
        out.push(&self.head.bias[..]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for e in &mut self.encoders {
            for l in &mut e.layers {
                out.push(l.weight.as_mut_slice());
                out.push(&mut l.bias[..]);
            }
        }
        out.push(self.head.weight.as_mut_slice());
        out.push(&mut self.head.bias[..]);
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// Objective value and parameter gradients for one batch.
    ///
    /// `rng` drives the stochastic baseline regularizers (dropout, feature
    /// noise); it is untouched otherwise.
    pub fn loss_and_grads(
        &self,
        inputs: &[Matrix],
        labels: &[usize],
        cfg: &TrainConfig,
        rng: &mut SeededRng,
    ) -> Result<(StepLosses, FusionModel)> {
        let n = self.check_inputs(inputs)?;
        ensure!(
            labels.len() == n && n > 0,
            Error::DimensionMismatch(format!("{n} rows for {} labels", labels.len()))
        );
        let k = self.num_classes();
        if let Some(&label) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidLabel { label, num_classes: k });
        }
        let traces = self
            .encoders
            .iter()
            .zip(inputs)
            .map(|(e, x)| e.trace(x))
            .collect::<Result<Vec<_>>>()?;

        // Stochastic perturbation of the classifier input only.
        let mut masks: Vec<Option<Matrix>> = vec![None; traces.len()];
        let fused_inputs: Vec<Matrix> = traces
            .iter()
            .zip(masks.iter_mut())
            .map(|(t, mask)| match cfg.baseline_reg {
                BaselineReg::Dropout(p) if p > 0.0 => {
                    let keep = 1.0 / (1.0 - p);
                    let m = Matrix::from_fn(n, t.output.cols(), |_, _| if rng.uniform() < p { 0.0 } else { keep })
                        .expect("finite mask");
                    let out =
                        Matrix::from_fn(n, t.output.cols(), |r, c| t.output.get(r, c) * m.get(r, c)).expect("finite");
                    *mask = Some(m);
                    out
                }
                BaselineReg::FeatureNoise(sigma) if sigma > 0.0 => {
                    Matrix::from_fn(n, t.output.cols(), |r, c| t.output.get(r, c) + sigma * rng.normal())
                        .expect("finite")
                }
                _ => t.output.clone(),
            })
            .collect();
        let fused = Matrix::hstack(&fused_inputs.iter().collect::<Vec<_>>())?;
        let logits = self.head.forward(&fused)?;

        let smoothing = match cfg.baseline_reg {
            BaselineReg::LabelSmoothing(s) => s,
            _ => 0.0,
        };
        let mut delta = logits.clone();
        let mut ce = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            let row = delta.row_mut(r);
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + libm::log(row.iter().map(|&v| libm::exp(v - max)).sum::<f64>());
            for (c, v) in row.iter_mut().enumerate() {
                let target = (1.0 - smoothing) * if c == y { 1.0 } else { 0.0 } + smoothing / k as f64;
                let logp = *v - lse;
                ce -= target * logp;
                *v = (libm::exp(logp) - target) / n as f64;
            }
        }
        ce /= n as f64;

        let mut grads = self.zeros_like();
        self.head.accumulate_grads(&fused, &delta, &mut grads.head)?;
        let d_fused = delta.matmul_t(&self.head.weight)?;

        let mut mer = Vec::new();
        let mut mer_weighted = 0.0;
        let mut offset = 0;
        for (m, trace) in traces.iter().enumerate() {
            let width = trace.output.cols();
            let mut g = d_fused.column_block(offset, offset + width);
            offset += width;
            if let Some(mask) = &masks[m] {
                for (v, k) in g.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                    *v *= k;
                }
            }
            if let Some(mcfg) = &cfg.mer {
                let (breakdown, mg) = mer_loss_grad(&trace.output, mcfg)?;
                if mcfg.lambda != 0.0 {
                    for (v, d) in g.as_mut_slice().iter_mut().zip(mg.as_slice()) {
                        *v += mcfg.lambda * d;
                    }
                }
                mer_weighted += mcfg.lambda * breakdown.combined;
                mer.push(breakdown);
            }
            self.encoders[m].backward(trace, g, &mut grads.encoders[m])?;
        }

        let mut weight_penalty = 0.0;
        if let BaselineReg::WeightDecay(w) = cfg.baseline_reg {
            for (enc, genc) in self.encoders.iter().zip(grads.encoders.iter_mut()) {
                for (l, gl) in enc.layers.iter().zip(genc.layers.iter_mut()) {
                    for (g, &p) in gl.weight.as_mut_slice().iter_mut().zip(l.weight.as_slice()) {
                        weight_penalty += 0.5 * w * p * p;
                        *g += w * p;
                    }
                }
            }
        }
        let total = ce + mer_weighted + weight_penalty;
        ensure!(total.is_finite(), Error::NonFinite("loss_and_grads"));
        Ok((
            StepLosses {
                ce,
                mer,
                mer_weighted,
                weight_penalty,
                total,
            },
            grads,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mer::MerConfig;
    use crate::rng::gaussian_matrix;

    fn tiny() -> (FusionModel, Vec<Matrix>, Vec<usize>) {
        let spec = ModelSpec {
            input_dims: vec![5, 4],
            hidden: vec![6],
            embed_dim: 3,
            num_classes: 3,
        };
        let model = FusionModel::init(&spec, 7).unwrap();
        let mut rng = SeededRng::new(8);
        let inputs = vec![gaussian_matrix(&mut rng, 8, 5), gaussian_matrix(&mut rng, 8, 4)];
        let labels = vec![0, 1, 2, 0, 1, 2, 0, 1];
        (model, inputs, labels)
    }

    #[test]
    fn init_is_seeded() {
        let spec = ModelSpec::new(vec![4, 3], 2);
        assert_eq!(
            FusionModel::init(&spec, 1).unwrap(),
            FusionModel::init(&spec, 1).unwrap()
        );
        assert_ne!(
            FusionModel::init(&spec, 1).unwrap(),
            FusionModel::init(&spec, 2).unwrap()
        );
        let bad = ModelSpec {
            hidden: vec![8, 0],
            ..spec
        };
        assert!(matches!(FusionModel::init(&bad, 1), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn forward_shapes_and_zero_model() {
        let (model, inputs, _) = tiny();
        let one: Vec<Matrix> = inputs.iter().map(|x| x.select_rows(&[0])).collect();
        let (z, logits) = model.forward(&one).unwrap();
        assert_eq!(logits.shape(), (1, 3));
        assert_eq!(z[0].shape(), (1, 3));
        let mut zero = model.zeros_like();
        zero.head.bias = vec![0.5, -1.0, 2.0];
        let (_, logits) = zero.forward(&inputs).unwrap();
        for r in 0..logits.rows() {
            assert_eq!(logits.row(r), &[0.5, -1.0, 2.0]);
        }
        let short = vec![inputs[0].clone(), inputs[1].select_rows(&[0, 1])];
        assert!(model.forward(&short).is_err());
    }

    #[test]
    fn uniform_logits_give_log_k() {
        let (model, inputs, labels) = tiny();
        let zero = model.zeros_like();
        let (l, _) = zero
            .loss_and_grads(&inputs, &labels, &TrainConfig::default(), &mut SeededRng::new(0))
            .unwrap();
        assert!((l.ce - 3f64.ln()).abs() < 1e-12);
        assert_eq!(l.total, l.ce);
    }

    #[test]
    fn invalid_label_rejected() {
        let (model, inputs, mut labels) = tiny();
        labels[3] = 3;
        let r = model.loss_and_grads(&inputs, &labels, &TrainConfig::default(), &mut SeededRng::new(0));
        assert_eq!(
            r.unwrap_err(),
            Error::InvalidLabel {
                label: 3,
                num_classes: 3
            }
        );
    }

    #[test]
    fn zero_lambda_reduces_to_cross_entropy() {
        let (model, inputs, labels) = tiny();
        let plain = TrainConfig::default();
        let off = TrainConfig {
            mer: Some(MerConfig {
                lambda: 0.0,
                ..MerConfig::default()
            }),
            ..plain.clone()
        };
        let (a, ga) = model
            .loss_and_grads(&inputs, &labels, &plain, &mut SeededRng::new(0))
            .unwrap();
        let (b, gb) = model
            .loss_and_grads(&inputs, &labels, &off, &mut SeededRng::new(0))
            .unwrap();
        assert_eq!(a.total, b.total);
        assert_eq!(ga, gb);
        assert_eq!(b.mer.len(), 2);
    }
}

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::{AdamState, FusionModel, StepLosses};
use crate::diagnostics::{fraction_correct, stratified_split, LinearProbe, ProbeConfig};
use crate::error::{ensure, Error, Result};
use crate::matrix::Matrix;
use crate::mer::MerConfig;
use crate::rng::SeededRng;
use crate::synth::{DatasetBundle, Domain};

/// Exactly one conventional regularizer, applied per encoder.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BaselineReg {
    #[default]
    None,
    /// Inverted dropout with drop probability `p` on encoder outputs.
    Dropout(f64),
    /// Additive Gaussian noise with standard deviation `σ` on encoder outputs.
    FeatureNoise(f64),
    /// L2 penalty `w/2 · ‖W‖²` on encoder weight matrices.
    WeightDecay(f64),
    /// Cross-entropy against `(1−s)·onehot + s/K`.
    LabelSmoothing(f64),
}

impl BaselineReg {
    /// Parses `none`, `dropout:P`, `feature-noise:S`, `weight-decay:W` or
    /// `label-smoothing:S`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "none" {
            return Ok(BaselineReg::None);
        }
        let (name, value) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidConfig(format!("baseline regularizer `{s}` needs the form name:value")))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad value `{value}` for baseline regularizer {name}")))?;
        let reg = match name.trim() {
            "dropout" => BaselineReg::Dropout(v),
            "feature-noise" => BaselineReg::FeatureNoise(v),
            "weight-decay" => BaselineReg::WeightDecay(v),
            "label-smoothing" => BaselineReg::LabelSmoothing(v),
            other => return Err(Error::InvalidConfig(format!("unknown baseline regularizer `{other}`"))),
        };
        reg.validate()?;
        Ok(reg)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            BaselineReg::None => true,
            BaselineReg::Dropout(p) => (0.0..1.0).contains(&p),
            BaselineReg::FeatureNoise(v) | BaselineReg::WeightDecay(v) => v >= 0.0 && v.is_finite(),
            BaselineReg::LabelSmoothing(s) => (0.0..=1.0).contains(&s),
        };
        ensure!(
            ok,
            Error::InvalidConfig(format!("baseline regularizer {self} out of range"))
        );
        Ok(())
    }
}

impl fmt::Display for BaselineReg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselineReg::None => f.write_str("none"),
            BaselineReg::Dropout(v) => write!(f, "dropout:{v}"),
            BaselineReg::FeatureNoise(v) => write!(f, "feature-noise:{v}"),
            BaselineReg::WeightDecay(v) => write!(f, "weight-decay:{v}"),
            BaselineReg::LabelSmoothing(v) => write!(f, "label-smoothing:{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Feature-entropy regularizer on every encoder output; `None` disables it.
    pub mer: Option<MerConfig>,
    pub baseline_reg: BaselineReg,
    /// Fraction of pooled source data held out for checkpoint selection.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 48,
            epochs: 100,
            seed: 0,
            mer: None,
            baseline_reg: BaselineReg::None,
            val_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            Error::InvalidConfig(format!("learning_rate must be positive, got {}", self.learning_rate))
        );
        ensure!(
            self.batch_size >= 2,
            Error::InvalidConfig(format!("batch_size must be >= 2"))
        );
        ensure!(self.epochs >= 1, Error::InvalidConfig(format!("epochs must be >= 1")));
        ensure!(
            self.val_fraction > 0.0 && self.val_fraction < 1.0,
            Error::InvalidConfig(format!("val_fraction must lie in (0, 1), got {}", self.val_fraction))
        );
        if let Some(m) = &self.mer {
            m.validate()?;
        }
        self.baseline_reg.validate()
    }
}

/// Per-epoch training record. Loss columns are means over the epoch's
/// batches; the two regularizer columns are raw sums over modalities and 0
/// when the regularizer is off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub total: f64,
    pub ce: f64,
    pub mer_marg: f64,
    pub mer_spec: f64,
    pub src_val_acc: f64,
    pub tgt_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub metrics: Vec<EpochMetrics>,
    /// Epoch of the selected checkpoint (best source-validation accuracy,
    /// earliest on ties).
    pub best_epoch: usize,
    /// Parameters at the selected checkpoint.
    pub model: FusionModel,
    /// Parameters after the last epoch.
    pub final_model: FusionModel,
}

impl RunRecord {
    pub fn selected(&self) -> &EpochMetrics {
        &self.metrics[self.best_epoch]
    }
}

/// Fraction of rows the model classifies correctly.
pub fn evaluate(model: &FusionModel, domain: &Domain) -> Result<f64> {
    let pred = model.predict(&domain.features)?;
    Ok(fraction_correct(&pred, &domain.labels))
}

fn check_model(model: &FusionModel, bundle: &DatasetBundle) -> Result<()> {
    let dims = bundle.validate()?;
    let model_dims: Vec<usize> = model.encoders.iter().map(|e| e.input_dim()).collect();
    ensure!(
        dims == model_dims,
        Error::DimensionMismatch(format!("data widths {dims:?} but model expects {model_dims:?}"))
    );
    ensure!(
        model.num_classes() == bundle.num_classes,
        Error::DimensionMismatch(format!(
            "data has {} classes but model predicts {}",
            bundle.num_classes,
            model.num_classes()
        ))
    );
    Ok(())
}

/// Mini-batch index lists; a trailing batch of one row joins its predecessor
/// so every batch has a defined spread.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() >= 2 && out[out.len() - 1].len() == 1 {
        out.pop();
        let start = (out.len() - 1) * size;
        let last = out.len() - 1;
        out[last] = &order[start..];
    }
    out
}

/// Trains on the pooled source domains with Adam, shuffling every epoch and
/// keeping the checkpoint with the best source-validation accuracy.
pub fn train(model: FusionModel, bundle: &DatasetBundle, cfg: &TrainConfig) -> Result<RunRecord> {
    cfg.validate()?;
    check_model(&model, bundle)?;
    let pooled = Domain::concat(&bundle.sources.iter().collect::<Vec<_>>())?;
    ensure!(
        pooled.len() >= 4,
        Error::Contract(format!("source data has only {} rows", pooled.len()))
    );
    let (train_idx, val_idx) = stratified_split(
        &pooled.labels,
        1.0 - cfg.val_fraction,
        &mut SeededRng::derived(cfg.seed, 1),
    );
    let train_set = pooled.select_rows(&train_idx);
    let val_set = pooled.select_rows(&val_idx);
    let mut shuffle_rng = SeededRng::derived(cfg.seed, 2);
    let mut noise_rng = SeededRng::derived(cfg.seed, 3);

    let mut model = model;
    let mut adam = AdamState::new(&model);
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, FusionModel)> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        let (mut total, mut ce, mut marg, mut spec) = (0.0, 0.0, 0.0, 0.0);
        let groups = batches(&order, cfg.batch_size);
        for idx in &groups {
            let batch = train_set.select_rows(idx);
            let (losses, grads) = model.loss_and_grads(&batch.features, &batch.labels, cfg, &mut noise_rng)?;
            let StepLosses {
                ce: c, mer, total: t, ..
            } = losses;
            total += t;
            ce += c;
            marg += mer.iter().map(|b| b.marginal_loss).sum::<f64>();
            spec += mer.iter().map(|b| b.spectral_loss).sum::<f64>();
            adam.update(&mut model, &grads, cfg.learning_rate)?;
        }
        let nb = groups.len() as f64;
        let src_val_acc = evaluate(&model, &val_set)?;
        let tgt_acc = evaluate(&model, &bundle.target)?;
        metrics.push(EpochMetrics {
            epoch,
            total: total / nb,
            ce: ce / nb,
            mer_marg: marg / nb,
            mer_spec: spec / nb,
            src_val_acc,
            tgt_acc,
        });
        if best.as_ref().is_none_or(|(_, acc, _)| src_val_acc > *acc) {
            best = Some((epoch, src_val_acc, model.clone()));
        }
    }
    let (best_epoch, _, selected) = best.expect("at least one epoch");
    Ok(RunRecord {
        metrics,
        best_epoch,
        model: selected,
        final_model: model,
    })
}

/// Held-out source and target accuracy of a class probe on frozen features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeAccuracy {
    pub source: f64,
    pub target: f64,
}

/// Linear class probe fitted on a stratified part of the source features and
/// scored on the rest of the source and on the target.
pub fn standalone_probe(
    source: &Matrix,
    source_labels: &[usize],
    target: &Matrix,
    target_labels: &[usize],
    num_classes: usize,
    cfg: &ProbeConfig,
    rng: &mut SeededRng,
) -> Result<ProbeAccuracy> {
    ensure!(
        source.rows() == source_labels.len() && target.rows() == target_labels.len(),
        Error::DimensionMismatch(format!("feature rows and label counts differ"))
    );
    ensure!(
        source.rows() >= 10 && target.rows() >= 1,
        Error::Contract(format!(
            "standalone probe needs >= 10 source rows, got {}",
            source.rows()
        ))
    );
    let (train_idx, test_idx) = stratified_split(source_labels, cfg.train_fraction, rng);
    let pick = |idx: &[usize]| idx.iter().map(|&i| source_labels[i]).collect::<Vec<_>>();
    let probe = LinearProbe::fit(
        &source.select_rows(&train_idx),
        &pick(&train_idx),
        num_classes,
        cfg.epochs,
        cfg.learning_rate,
    )?;
    Ok(ProbeAccuracy {
        source: probe.accuracy(&source.select_rows(&test_idx), &pick(&test_idx))?,
        target: probe.accuracy(target, target_labels)?,
    })
}

/// Test-time perturbation of one encoder's output before fusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Corruption {
    Noise { modality: usize, sigma: f64 },
    Drop { modality: usize },
}

impl Corruption {
    pub fn modality(&self) -> usize {
        match *self {
            Corruption::Noise { modality, .. } | Corruption::Drop { modality } => modality,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Corruption::Noise { modality, sigma } => format!("noise-m{modality}-{sigma}"),
            Corruption::Drop { modality } => format!("drop-m{modality}"),
        }
    }

    /// The standard set: noise at σ = 0.5 and 1.0 and a drop, per modality.
    pub fn standard_set(num_modalities: usize) -> Vec<Corruption> {
        let mut out = Vec::new();
        for modality in 0..num_modalities {
            out.push(Corruption::Noise { modality, sigma: 0.5 });
            out.push(Corruption::Noise { modality, sigma: 1.0 });
            out.push(Corruption::Drop { modality });
        }
        out
    }
}

/// Accuracy on `domain` with one encoder's output corrupted.
pub fn corrupted_evaluate(
    model: &FusionModel,
    domain: &Domain,
    corruption: Corruption,
    rng: &mut SeededRng,
) -> Result<f64> {
    let count = model.num_modalities();
    let m = corruption.modality();
    ensure!(m < count, Error::UnknownModality { index: m, count });
    let mut z = model.encode(&domain.features)?;
    match corruption {
        Corruption::Noise { sigma, .. } => {
            ensure!(
                sigma >= 0.0 && sigma.is_finite(),
                Error::InvalidConfig(format!("noise level must be >= 0, got {sigma}"))
            );
            if sigma > 0.0 {
                let noisy = Matrix::from_fn(z[m].rows(), z[m].cols(), |r, c| z[m].get(r, c) + sigma * rng.normal())?;
                z[m] = noisy;
            }
        }
        Corruption::Drop { .. } => z[m] = Matrix::zeros(z[m].rows(), z[m].cols()),
    }
    let logits = model.classify(&z)?;
    let pred: Vec<usize> = (0..logits.rows())
        .map(|r| crate::diagnostics::argmax(logits.row(r)))
        .collect();
    Ok(fraction_correct(&pred, &domain.labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ModelSpec;
    use crate::rng::gaussian_matrix;
    use alloc::string::ToString;
    use alloc::vec;

    fn toy_bundle(n: usize) -> DatasetBundle {
        // two well-separated classes in each modality
        let mut rng = SeededRng::new(4);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let make = |rng: &mut SeededRng, d: usize| {
            let g = gaussian_matrix(rng, n, d);
            Matrix::from_fn(n, d, |r, c| g.get(r, c) * 0.3 + if c == labels[r] { 2.0 } else { 0.0 }).unwrap()
        };
        let src = Domain::new(vec![make(&mut rng, 3), make(&mut rng, 2)], labels.clone()).unwrap();
        let tgt = Domain::new(vec![make(&mut rng, 3), make(&mut rng, 2)], labels.clone()).unwrap();
        DatasetBundle {
            num_classes: 2,
            sources: vec![src],
            target: tgt,
            config: None,
            factors: None,
        }
    }

    fn small_spec() -> ModelSpec {
        ModelSpec {
            input_dims: vec![3, 2],
            hidden: vec![8],
            embed_dim: 4,
            num_classes: 2,
        }
    }

    #[test]
    fn batching_merges_singletons() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), vec![4, 5]);
        let b = batches(&order[..6], 4);
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), vec![4, 2]);
    }

    #[test]
    fn learns_a_separable_toy_set() {
        let bundle = toy_bundle(64);
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 16,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let run = train(FusionModel::init(&small_spec(), 1).unwrap(), &bundle, &cfg).unwrap();
        assert_eq!(run.metrics.len(), 200);
        assert_eq!(evaluate(&run.final_model, &bundle.sources[0]).unwrap(), 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let bundle = toy_bundle(40);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 8,
            mer: Some(MerConfig::default()),
            baseline_reg: BaselineReg::Dropout(0.2),
            ..TrainConfig::default()
        };
        let run = || train(FusionModel::init(&small_spec(), 3).unwrap(), &bundle, &cfg).unwrap();
        assert_eq!(run(), run());
    }

    #[test]
    fn regularizer_columns_zero_when_off() {
        let bundle = toy_bundle(40);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let run = train(FusionModel::init(&small_spec(), 3).unwrap(), &bundle, &cfg).unwrap();
        assert!(run
            .metrics
            .iter()
            .all(|m| m.mer_marg == 0.0 && m.mer_spec == 0.0 && m.total == m.ce));
        assert!(run.metrics.iter().all(|m| m.src_val_acc <= run.selected().src_val_acc));
    }

    #[test]
    fn mismatched_model_rejected() {
        let bundle = toy_bundle(40);
        let spec = ModelSpec {
            input_dims: vec![3, 3],
            ..small_spec()
        };
        let r = train(FusionModel::init(&spec, 1).unwrap(), &bundle, &TrainConfig::default());
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn baseline_parse_round_trip() {
        for s in [
            "none",
            "dropout:0.25",
            "feature-noise:0.1",
            "weight-decay:0.0001",
            "label-smoothing:0.1",
        ] {
            assert_eq!(BaselineReg::parse(s).unwrap().to_string(), s);
        }
        assert!(BaselineReg::parse("dropout:1.5").is_err());
        assert!(BaselineReg::parse("mixup:0.2").is_err());
        assert!(BaselineReg::parse("dropout").is_err());
    }

    #[test]
    fn corruption_identities() {
        let bundle = toy_bundle(40);
        let mut model = FusionModel::init(&small_spec(), 2).unwrap();
        let clean = evaluate(&model, &bundle.target).unwrap();
        let mut rng = SeededRng::new(1);
        let zero_noise = Corruption::Noise {
            modality: 1,
            sigma: 0.0,
        };
        assert_eq!(
            corrupted_evaluate(&model, &bundle.target, zero_noise, &mut rng).unwrap(),
            clean
        );
        // a classifier with no weight on modality 1 ignores its removal
        for r in 4..8 {
            for c in 0..2 {
                model.head.weight.set(r, c, 0.0);
            }
        }
        let clean = evaluate(&model, &bundle.target).unwrap();
        let dropped = corrupted_evaluate(&model, &bundle.target, Corruption::Drop { modality: 1 }, &mut rng).unwrap();
        assert_eq!(dropped, clean);
        assert_eq!(
            corrupted_evaluate(&model, &bundle.target, Corruption::Drop { modality: 2 }, &mut rng),
            Err(Error::UnknownModality { index: 2, count: 2 })
        );
        assert_eq!(Corruption::standard_set(2).len(), 6);
    }

    #[test]
    fn probe_on_separated_and_shuffled_features() {
        let mut rng = SeededRng::new(6);
        let n = 200;
        let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();
        let g = gaussian_matrix(&mut rng, n, 6);
        let sep = Matrix::from_fn(n, 6, |r, c| g.get(r, c) * 0.2 + if c == labels[r] { 3.0 } else { 0.0 }).unwrap();
        let cfg = ProbeConfig::default();
        let acc = standalone_probe(&sep, &labels, &sep, &labels, 4, &cfg, &mut SeededRng::new(1)).unwrap();
        assert!(acc.source > 0.99 && acc.target > 0.99, "{acc:?}");
        let mut shuffled = labels.clone();
        SeededRng::new(2).shuffle(&mut shuffled);
        let mut chance = Vec::new();
        for seed in 0..5 {
            let a = standalone_probe(&sep, &shuffled, &sep, &shuffled, 4, &cfg, &mut SeededRng::new(seed)).unwrap();
            chance.push(a.source);
        }
        let mean = chance.iter().sum::<f64>() / 5.0;
        assert!((mean - 0.25).abs() < 0.1, "{chance:?}");
        let again = standalone_probe(&sep, &labels, &sep, &labels, 4, &cfg, &mut SeededRng::new(1)).unwrap();
        assert_eq!(acc, again);
    }
}

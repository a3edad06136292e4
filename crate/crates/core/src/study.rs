//! Plain fusion vs fusion with the entropy regularizer vs independently
//! trained unimodal models, on freshly generated synthetic data per seed.

use alloc::vec::Vec;

use crate::diagnostics::{domain_probe, rankme, ProbeConfig};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::mer::MerConfig;
use crate::net::{
    corrupted_evaluate, evaluate, standalone_probe, train, Corruption, FusionModel, ModelSpec, ProbeAccuracy,
    RunRecord, TrainConfig,
};
use crate::rng::SeededRng;
use crate::synth::{generate, DatasetBundle, Domain, SynthConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub synth: SynthConfig,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    /// Shared by every run; its `mer` and `seed` fields are overridden.
    pub train: TrainConfig,
    pub mer: MerConfig,
    pub probe: ProbeConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            synth: SynthConfig::default(),
            hidden: alloc::vec![64, 64],
            embed_dim: 16,
            train: TrainConfig::default(),
            mer: MerConfig::default(),
            probe: ProbeConfig::default(),
        }
    }
}

/// Per-modality diagnostics of one trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelReport {
    pub target_acc: f64,
    pub src_val_acc: f64,
    pub best_epoch: usize,
    /// Standalone class probe per encoder.
    pub probes: Vec<ProbeAccuracy>,
    /// RankMe of each encoder's target-domain features.
    pub target_rankme: Vec<f64>,
    /// Domain-probe accuracy over all domains (sources and target) per encoder.
    pub domain_acc: Vec<f64>,
    /// Fraction of encoder-output dimensions with source std ≥ γ/2, per encoder.
    pub sigma_floor_fraction: Vec<f64>,
    /// Target accuracy under each corruption of [`Corruption::standard_set`].
    pub corrupted_acc: Vec<f64>,
}

impl ModelReport {
    pub fn mean_probe_target(&self) -> f64 {
        mean(self.probes.iter().map(|p| p.target))
    }

    pub fn mean_rankme(&self) -> f64 {
        mean(self.target_rankme.iter().copied())
    }

    pub fn mean_domain_acc(&self) -> f64 {
        mean(self.domain_acc.iter().copied())
    }

    /// Clean minus corrupted target accuracy per corruption.
    pub fn drops(&self) -> Vec<f64> {
        self.corrupted_acc.iter().map(|a| self.target_acc - a).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub fusion: ModelReport,
    pub regularized: ModelReport,
    /// One single-encoder model per modality: its target accuracy and the
    /// standalone probe of its encoder.
    pub unimodal_target_acc: Vec<f64>,
    pub unimodal_probes: Vec<ProbeAccuracy>,
}

impl SeedOutcome {
    pub fn mean_unimodal_probe_target(&self) -> f64 {
        mean(self.unimodal_probes.iter().map(|p| p.target))
    }
}

pub(crate) fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn pooled_sources(bundle: &DatasetBundle) -> Result<Domain> {
    Domain::concat(&bundle.sources.iter().collect::<Vec<_>>())
}

fn probe_encoder(
    model: &FusionModel,
    modality: usize,
    source: &Domain,
    target: &Domain,
    num_classes: usize,
    cfg: &ProbeConfig,
    rng: &mut SeededRng,
) -> Result<ProbeAccuracy> {
    let enc = &model.encoders[modality];
    let src = enc.forward(&source.features[modality])?;
    let tgt = enc.forward(&target.features[modality])?;
    standalone_probe(&src, &source.labels, &tgt, &target.labels, num_classes, cfg, rng)
}

/// Diagnostics of a trained fusion model at its selected checkpoint.
pub fn report(run: &RunRecord, bundle: &DatasetBundle, cfg: &StudyConfig, seed: u64) -> Result<ModelReport> {
    let model = &run.model;
    let source = pooled_sources(bundle)?;
    let m = model.num_modalities();
    let mut probes = Vec::with_capacity(m);
    let mut target_rankme = Vec::with_capacity(m);
    let mut domain_acc = Vec::with_capacity(m);
    let mut sigma_floor_fraction = Vec::with_capacity(m);
    for k in 0..m {
        let mut rng = SeededRng::derived(seed, 40 + k as u64);
        probes.push(probe_encoder(
            model,
            k,
            &source,
            &bundle.target,
            bundle.num_classes,
            &cfg.probe,
            &mut rng,
        )?);
        let enc = &model.encoders[k];
        let tgt = enc.forward(&bundle.target.features[k])?;
        target_rankme.push(rankme(&tgt)?);
        let per_domain: Vec<Matrix> = bundle
            .domains()
            .map(|d| enc.forward(&d.features[k]))
            .collect::<Result<_>>()?;
        domain_acc.push(domain_probe(&per_domain, &mut SeededRng::derived(seed, 50 + k as u64), &cfg.probe)?.accuracy);
        let (_, stds) = enc.forward(&source.features[k])?.column_mean_std(0.0)?;
        let floor = 0.5 * cfg.mer.gamma;
        sigma_floor_fraction.push(stds.iter().filter(|&&s| s >= floor).count() as f64 / stds.len() as f64);
    }
    let mut rng = SeededRng::derived(seed, 60);
    let corrupted_acc = Corruption::standard_set(m)
        .into_iter()
        .map(|c| corrupted_evaluate(model, &bundle.target, c, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelReport {
        target_acc: evaluate(model, &bundle.target)?,
        src_val_acc: run.selected().src_val_acc,
        best_epoch: run.best_epoch,
        probes,
        target_rankme,
        domain_acc,
        sigma_floor_fraction,
        corrupted_acc,
    })
}

fn spec_for(cfg: &StudyConfig, input_dims: Vec<usize>, num_classes: usize) -> ModelSpec {
    ModelSpec {
        input_dims,
        hidden: cfg.hidden.clone(),
        embed_dim: cfg.embed_dim,
        num_classes,
    }
}

/// One single-encoder model per modality, trained with `train_cfg`: target
/// accuracy and standalone probe of each. Initialization seeds are derived
/// from `train_cfg.seed` and the modality index.
pub fn train_unimodal(
    cfg: &StudyConfig,
    bundle: &DatasetBundle,
    train_cfg: &TrainConfig,
) -> Result<(Vec<f64>, Vec<ProbeAccuracy>)> {
    let dims = bundle.validate()?;
    let (k, seed) = (bundle.num_classes, train_cfg.seed);
    let mut target_acc = Vec::new();
    let mut probes = Vec::new();
    for (m, &d) in dims.iter().enumerate() {
        let single = bundle.select_modalities(&[m])?;
        let init = FusionModel::init(&spec_for(cfg, alloc::vec![d], k), seed ^ (0x100 + m as u64))?;
        let run = train(init, &single, train_cfg)?;
        target_acc.push(evaluate(&run.model, &single.target)?);
        let source = pooled_sources(&single)?;
        let mut rng = SeededRng::derived(seed, 40 + m as u64);
        probes.push(probe_encoder(
            &run.model,
            0,
            &source,
            &single.target,
            k,
            &cfg.probe,
            &mut rng,
        )?);
    }
    Ok((target_acc, probes))
}

/// One seed of the comparison. The seed picks the dataset, the
/// initialization and the training order; the three arms share all three.
pub fn run_seed(cfg: &StudyConfig, seed: u64) -> Result<SeedOutcome> {
    let synth = SynthConfig {
        seed,
        ..cfg.synth.clone()
    };
    let bundle = generate(&synth)?;
    let dims = bundle.validate()?;
    let k = bundle.num_classes;
    let plain = TrainConfig {
        seed,
        mer: None,
        ..cfg.train.clone()
    };
    let regularized_cfg = TrainConfig {
        mer: Some(cfg.mer),
        ..plain.clone()
    };
    let init = FusionModel::init(&spec_for(cfg, dims.clone(), k), seed)?;
    let fusion_run = train(init.clone(), &bundle, &plain)?;
    let mer_run = train(init, &bundle, &regularized_cfg)?;
    let fusion = report(&fusion_run, &bundle, cfg, seed)?;
    let regularized = report(&mer_run, &bundle, cfg, seed)?;

    let (unimodal_target_acc, unimodal_probes) = train_unimodal(cfg, &bundle, &plain)?;
    Ok(SeedOutcome {
        seed,
        fusion,
        regularized,
        unimodal_target_acc,
        unimodal_probes,
    })
}

//! Run directories.
//!
//! ```text
//! config.toml      resolved configuration; replaying it reproduces the run
//! metrics.csv      one row per epoch
//! report.toml      diagnostics of the selected checkpoint
//! model/           parameters of the selected checkpoint
//! features/<domain>/encoder-<m>.feat
//! ```

use std::fs;
use std::path::Path;

use merdg_core::net::{train, EpochMetrics, FusionModel, Linear, Mlp, ModelSpec, ProbeAccuracy, RunRecord};
use merdg_core::study::{report, train_unimodal, ModelReport};
use merdg_core::synth::DatasetBundle;
use merdg_core::Matrix;
use serde::Serialize;

use crate::bundle::{create_dir, domain_names, read_bundle, write_text};
use crate::config::ExperimentConfig;
use crate::error::{LabError, Result};
use crate::format::{read_features, write_features};

pub const METRICS_HEADER: [&str; 7] = ["epoch", "total", "ce", "mer_marg", "mer_spec", "src_val_acc", "tgt_acc"];

/// A finished training run and its diagnostics.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub record: RunRecord,
    pub report: ModelReport,
    /// Target accuracy and probe per modality, when requested.
    pub unimodal: Option<(Vec<f64>, Vec<ProbeAccuracy>)>,
}

pub fn train_bundle(bundle: &DatasetBundle, cfg: &ExperimentConfig) -> Result<TrainedRun> {
    let dims = bundle.validate()?;
    let spec = cfg.model_spec(&dims, bundle.num_classes)?;
    let train_cfg = cfg.train_config()?;
    let study = cfg.study_config()?;
    let model = FusionModel::init(&spec, train_cfg.seed)?;
    let record = train(model, bundle, &train_cfg)?;
    let report = report(&record, bundle, &study, train_cfg.seed)?;
    let unimodal = if cfg.train.unimodal {
        let plain = merdg_core::net::TrainConfig { mer: None, ..train_cfg };
        Some(train_unimodal(&study, bundle, &plain)?)
    } else {
        None
    };
    Ok(TrainedRun {
        record,
        report,
        unimodal,
    })
}

pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER).expect("in-memory write");
    for m in metrics {
        w.write_record([
            m.epoch.to_string(),
            m.total.to_string(),
            m.ce.to_string(),
            m.mer_marg.to_string(),
            m.mer_spec.to_string(),
            m.src_val_acc.to_string(),
            m.tgt_acc.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}

#[derive(Serialize)]
struct ReportFile<'a> {
    run: RunSection<'a>,
    encoder: Vec<EncoderSection>,
    robustness: Vec<RobustnessRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    unimodal: Vec<UnimodalSection>,
}

#[derive(Serialize)]
struct RunSection<'a> {
    data: &'a str,
    mer_enabled: bool,
    baseline_reg: &'a str,
    epochs: usize,
    best_epoch: usize,
    src_val_acc: f64,
    tgt_acc: f64,
}

#[derive(Serialize)]
struct EncoderSection {
    modality: usize,
    probe_source_acc: f64,
    probe_target_acc: f64,
    target_rankme: f64,
    domain_probe_acc: f64,
    sigma_floor_fraction: f64,
}

#[derive(Serialize)]
struct RobustnessRow {
    condition: String,
    accuracy: f64,
    drop: f64,
}

#[derive(Serialize)]
struct UnimodalSection {
    modality: usize,
    target_acc: f64,
    probe_source_acc: f64,
    probe_target_acc: f64,
}

fn report_toml(run: &TrainedRun, cfg: &ExperimentConfig, data: &str) -> String {
    let r = &run.report;
    let labels = merdg_core::net::Corruption::standard_set(r.probes.len());
    let file = ReportFile {
        run: RunSection {
            data,
            mer_enabled: cfg.mer.enabled,
            baseline_reg: &cfg.train.baseline_reg,
            epochs: run.record.metrics.len(),
            best_epoch: run.record.best_epoch,
            src_val_acc: r.src_val_acc,
            tgt_acc: r.target_acc,
        },
        encoder: (0..r.probes.len())
            .map(|m| EncoderSection {
                modality: m,
                probe_source_acc: r.probes[m].source,
                probe_target_acc: r.probes[m].target,
                target_rankme: r.target_rankme[m],
                domain_probe_acc: r.domain_acc[m],
                sigma_floor_fraction: r.sigma_floor_fraction[m],
            })
            .collect(),
        robustness: labels
            .iter()
            .zip(&r.corrupted_acc)
            .zip(r.drops())
            .map(|((c, &accuracy), drop)| RobustnessRow {
                condition: c.label(),
                accuracy,
                drop,
            })
            .collect(),
        unimodal: run
            .unimodal
            .iter()
            .flat_map(|(acc, probes)| {
                acc.iter()
                    .zip(probes)
                    .enumerate()
                    .map(|(m, (&target_acc, p))| UnimodalSection {
                        modality: m,
                        target_acc,
                        probe_source_acc: p.source,
                        probe_target_acc: p.target,
                    })
            })
            .collect(),
    };
    toml::to_string(&file).expect("report serializes")
}

fn layer_files(model: &FusionModel) -> Vec<(String, &Linear)> {
    let mut out = Vec::new();
    for (m, e) in model.encoders.iter().enumerate() {
        for (l, layer) in e.layers.iter().enumerate() {
            out.push((format!("encoder-{m}-layer-{l}"), layer));
        }
    }
    out.push(("head".to_string(), &model.head));
    out
}

pub fn save_model(dir: &Path, model: &FusionModel) -> Result<()> {
    create_dir(dir)?;
    for (name, layer) in layer_files(model) {
        write_features(&dir.join(format!("{name}-weight.feat")), &layer.weight)?;
        let bias = Matrix::new(1, layer.bias.len(), layer.bias.clone())?;
        write_features(&dir.join(format!("{name}-bias.feat")), &bias)?;
    }
    Ok(())
}

fn load_layer(dir: &Path, name: &str) -> Result<Linear> {
    let weight = read_features(&dir.join(format!("{name}-weight.feat")))?;
    let bias = read_features(&dir.join(format!("{name}-bias.feat")))?;
    Ok(Linear::new(weight, bias.into_vec())?)
}

/// Loads parameters saved by [`save_model`] and checks them against `spec`.
pub fn load_model(dir: &Path, spec: &ModelSpec) -> Result<FusionModel> {
    let depth = spec.hidden.len() + 1;
    let encoders = (0..spec.input_dims.len())
        .map(|m| {
            let layers = (0..depth)
                .map(|l| load_layer(dir, &format!("encoder-{m}-layer-{l}")))
                .collect::<Result<Vec<_>>>()?;
            Ok(Mlp::new(layers)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let model = FusionModel::new(encoders, load_layer(dir, "head")?)?;
    let expected = FusionModel::init(spec, 0)?;
    let shapes = |m: &FusionModel| m.params().iter().map(|p| p.len()).collect::<Vec<_>>();
    let widths = |m: &FusionModel| {
        m.encoders
            .iter()
            .map(|e| e.layers.iter().map(|l| l.weight.shape()).collect::<Vec<_>>())
            .collect::<Vec<_>>()
    };
    if shapes(&model) != shapes(&expected) || widths(&model) != widths(&expected) {
        return Err(merdg_core::Error::DimensionMismatch(format!(
            "saved model in {} does not match the configured architecture",
            dir.display()
        ))
        .into());
    }
    Ok(model)
}

/// Writes every artifact of a finished run into `out`.
pub fn write_run(
    out: &Path,
    run: &TrainedRun,
    bundle: &DatasetBundle,
    cfg: &ExperimentConfig,
    data: &str,
) -> Result<()> {
    create_dir(out)?;
    write_text(&out.join("config.toml"), &cfg.to_toml())?;
    write_text(&out.join("metrics.csv"), &metrics_csv(&run.record.metrics))?;
    write_text(&out.join("report.toml"), &report_toml(run, cfg, data))?;
    save_model(&out.join("model"), &run.record.model)?;
    for (name, d) in domain_names(bundle.sources.len()).iter().zip(bundle.domains()) {
        let dir = out.join("features").join(name);
        create_dir(&dir)?;
        for (m, z) in run.record.model.encode(&d.features)?.iter().enumerate() {
            write_features(&dir.join(format!("encoder-{m}.feat")), z)?;
        }
    }
    Ok(())
}

/// A run directory read back: its configuration, its data and the selected
/// checkpoint.
pub struct SavedRun {
    pub config: ExperimentConfig,
    pub bundle: DatasetBundle,
    pub model: FusionModel,
}

/// Data directory recorded in a run's report.
pub fn recorded_data_dir(run_dir: &Path) -> Result<String> {
    let path = run_dir.join("report.toml");
    let text = fs::read_to_string(&path).map_err(|e| LabError::io(&path, e))?;
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| LabError::Config {
        path: path.clone(),
        message: e.message().to_string(),
    })?;
    table
        .get("run")
        .and_then(|r| r.get("data"))
        .and_then(|d| d.as_str())
        .map(str::to_string)
        .ok_or(LabError::Config {
            path,
            message: "missing run.data".into(),
        })
}

/// Loads a run directory; `data` overrides the recorded data directory.
pub fn load_run(run_dir: &Path, data: Option<&Path>) -> Result<SavedRun> {
    let config = ExperimentConfig::load(&run_dir.join("config.toml"))?;
    let bundle = match data {
        Some(d) => read_bundle(d)?,
        None => read_bundle(Path::new(&recorded_data_dir(run_dir)?))?,
    };
    let spec = config.model_spec(&bundle.validate()?, bundle.num_classes)?;
    let model = load_model(&run_dir.join("model"), &spec)?;
    Ok(SavedRun { config, bundle, model })
}

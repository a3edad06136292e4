//! Dataset directories.
//!
//! ```text
//! dataset.toml          classes, widths, domain order, generator settings
//! source-0/m0.feat ...  one feature file per modality
//! source-0/labels.txt
//! ...
//! target/
//! factors/              generative factors, when the data was synthesized
//! ```

use std::fs;
use std::path::Path;

use merdg_core::synth::{DatasetBundle, Domain, GenerativeFactors, SynthConfig};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::format::{read_features, read_labels, write_features, write_labels};

pub const METADATA: &str = "dataset.toml";
pub const TARGET: &str = "target";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub num_classes: usize,
    pub input_dims: Vec<usize>,
    /// Directory names, sources first and the target last.
    pub domains: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derangement: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
}

pub fn source_name(s: usize) -> String {
    format!("source-{s}")
}

pub fn domain_names(num_sources: usize) -> Vec<String> {
    (0..num_sources).map(source_name).chain([TARGET.to_string()]).collect()
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| LabError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| LabError::io(path, e))
}

fn write_domain(dir: &Path, d: &Domain) -> Result<()> {
    create_dir(dir)?;
    for (m, x) in d.features.iter().enumerate() {
        write_features(&dir.join(format!("m{m}.feat")), x)?;
    }
    write_labels(&dir.join("labels.txt"), &d.labels)
}

fn write_factors(dir: &Path, f: &GenerativeFactors) -> Result<()> {
    create_dir(dir)?;
    for (m, u) in f.dictionaries.iter().enumerate() {
        write_features(&dir.join(format!("dictionary-m{m}.feat")), u)?;
    }
    for (m, a) in f.mixing.iter().enumerate() {
        write_features(&dir.join(format!("mixing-m{m}.feat")), a)?;
    }
    write_features(&dir.join("latent-means.feat"), &f.latent_means)
}

pub fn write_bundle(dir: &Path, bundle: &DatasetBundle) -> Result<DatasetMeta> {
    let input_dims = bundle.validate()?;
    create_dir(dir)?;
    let names = domain_names(bundle.sources.len());
    for (name, d) in names.iter().zip(bundle.domains()) {
        write_domain(&dir.join(name), d)?;
    }
    if let Some(f) = &bundle.factors {
        write_factors(&dir.join("factors"), f)?;
    }
    let meta = DatasetMeta {
        num_classes: bundle.num_classes,
        input_dims,
        domains: names,
        derangement: bundle.factors.as_ref().map(|f| f.derangement.clone()),
        synth: bundle.config.clone(),
    };
    write_text(
        &dir.join(METADATA),
        &toml::to_string(&meta).expect("metadata serializes"),
    )?;
    Ok(meta)
}

pub fn read_meta(dir: &Path) -> Result<DatasetMeta> {
    let path = dir.join(METADATA);
    let text = fs::read_to_string(&path).map_err(|e| LabError::io(&path, e))?;
    let meta: DatasetMeta = toml::from_str(&text).map_err(|e| LabError::Config {
        path: path.clone(),
        message: e.message().to_string(),
    })?;
    if meta.domains.len() < 2 {
        return Err(LabError::Config {
            path,
            message: "need at least one source domain and a target".into(),
        });
    }
    Ok(meta)
}

fn read_domain(dir: &Path, num_modalities: usize) -> Result<Domain> {
    let features = (0..num_modalities)
        .map(|m| read_features(&dir.join(format!("m{m}.feat"))))
        .collect::<Result<Vec<_>>>()?;
    let labels = read_labels(&dir.join("labels.txt"), Some(features[0].rows()))?;
    Ok(Domain::new(features, labels)?)
}

/// Loads the domains of a dataset directory. Generative factors are not
/// read back; training and diagnostics only need the samples.
pub fn read_bundle(dir: &Path) -> Result<DatasetBundle> {
    let meta = read_meta(dir)?;
    let m = meta.input_dims.len();
    let mut domains = meta
        .domains
        .iter()
        .map(|name| read_domain(&dir.join(name), m))
        .collect::<Result<Vec<_>>>()?;
    let target = domains.pop().expect("at least two domains");
    let bundle = DatasetBundle {
        num_classes: meta.num_classes,
        sources: domains,
        target,
        config: meta.synth.clone(),
        factors: None,
    };
    let dims = bundle.validate()?;
    if dims != meta.input_dims {
        return Err(merdg_core::Error::DimensionMismatch(format!(
            "{METADATA} lists widths {:?}, files have {dims:?}",
            meta.input_dims
        ))
        .into());
    }
    Ok(bundle)
}

//! The command bodies behind the `merdg` binary. Each returns the text the
//! binary prints; commands that write files take the output location.

use std::path::Path;
use std::thread;

use merdg_core::diagnostics::{class_conditional_alignment, rankme, spectrum, AlignmentMetric};
use merdg_core::mer::mer_loss_grad;
use merdg_core::net::{corrupted_evaluate, evaluate, Corruption};
use merdg_core::rng::SeededRng;
use merdg_core::synth::{generate, Domain};
use merdg_core::MerConfig;

use crate::bench::{self, BenchRow};
use crate::bundle::{read_bundle, write_bundle};
use crate::config::ExperimentConfig;
use crate::error::{LabError, Result};
use crate::format::{read_features, read_labels};
use crate::gradcheck::{self, GradCheckConfig};
use crate::run::{load_run, train_bundle, write_run};

/// Twelve significant digits, valid as a TOML float.
pub fn sig12(v: f64) -> String {
    format!("{v:.11e}")
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn grad_check(cfg: &GradCheckConfig) -> Result<String> {
    let worst = gradcheck::run(cfg)?;
    let mut out = format!(
        "n = {}\nd = {}\nseeds = {}\nstep = {:e}\n",
        cfg.n, cfg.d, cfg.seeds, cfg.step
    );
    for w in &worst {
        out.push_str(&format!(
            "{}.max_rel_err = {}\n{}.worst_seed = {}\n",
            w.name,
            sig12(w.rel_err),
            w.name,
            w.seed
        ));
    }
    match gradcheck::verdict(&worst) {
        Ok(()) => Ok(out),
        Err(LabError::GradCheck(msg)) => Err(LabError::GradCheck(format!("{msg}\n{out}"))),
        Err(e) => Err(e),
    }
}

pub fn losses(input: &Path, cfg: &MerConfig) -> Result<String> {
    cfg.validate()?;
    let z = read_features(input)?;
    let (b, _) = mer_loss_grad(&z, cfg)?;
    let sigmas: Vec<String> = b.per_dim_sigma.iter().map(|&s| sig12(s)).collect();
    Ok(format!(
        "marginal_loss = {}\nspectral_loss = {}\ncombined = {}\ncorrelation_logdet = {}\nper_dim_sigma = [{}]\n",
        sig12(b.marginal_loss),
        sig12(b.spectral_loss),
        sig12(b.combined),
        sig12(b.correlation_logdet),
        sigmas.join(", ")
    ))
}

/// Metric names accepted by [`diagnose`].
pub const DIAGNOSE_METRICS: [&str; 7] = [
    "rankme",
    "cka-linear",
    "cka-rbf",
    "procrustes",
    "class-cka-linear",
    "class-cka-rbf",
    "class-procrustes",
];

pub struct DiagnoseInputs<'a> {
    pub a: &'a Path,
    pub b: Option<&'a Path>,
    pub labels_a: Option<&'a Path>,
    pub labels_b: Option<&'a Path>,
    pub metrics: &'a [String],
    /// Drives per-class subsampling.
    pub seed: u64,
}

pub fn diagnose(inp: &DiagnoseInputs<'_>) -> Result<String> {
    if inp.metrics.is_empty() {
        return Err(LabError::Usage("no metrics requested".into()));
    }
    if let Some(bad) = inp.metrics.iter().find(|m| !DIAGNOSE_METRICS.contains(&m.as_str())) {
        return Err(LabError::Usage(format!(
            "unknown metric `{bad}`; expected one of {}",
            DIAGNOSE_METRICS.join(", ")
        )));
    }
    let paired = inp.metrics.iter().find(|m| m.as_str() != "rankme");
    if let (Some(name), None) = (paired, inp.b) {
        return Err(LabError::Usage(format!(
            "metric `{name}` compares two inputs; pass --b"
        )));
    }
    let class = inp.metrics.iter().find(|m| m.starts_with("class-"));
    if let Some(name) = class {
        if inp.labels_a.is_none() || inp.labels_b.is_none() {
            return Err(LabError::Usage(format!(
                "metric `{name}` needs --labels-a and --labels-b"
            )));
        }
    }
    let a = read_features(inp.a)?;
    let b = inp.b.map(read_features).transpose()?;
    let mut out = String::new();
    for name in inp.metrics {
        if name == "rankme" {
            out.push_str(&format!("rankme.a = {}\n", sig12(rankme(&a)?)));
            if let Some(b) = &b {
                out.push_str(&format!("rankme.b = {}\n", sig12(rankme(b)?)));
            }
            continue;
        }
        let b = b.as_ref().expect("checked above");
        let score = match name.strip_prefix("class-") {
            None => AlignmentMetric::from_name(name).expect("checked").score(&a, b)?,
            Some(base) => {
                let (la, lb) = (
                    inp.labels_a.expect("checked above"),
                    inp.labels_b.expect("checked above"),
                );
                let ya = read_labels(la, Some(a.rows()))?;
                let yb = read_labels(lb, Some(b.rows()))?;
                let metric = AlignmentMetric::from_name(base).expect("checked");
                class_conditional_alignment(&a, &ya, b, &yb, metric, &mut SeededRng::new(inp.seed))?.mean_score
            }
        };
        out.push_str(&format!("{name} = {}\n", sig12(score)));
    }
    Ok(out)
}

pub fn spectrum_csv(input: &Path) -> Result<String> {
    let z = read_features(input)?;
    let values = spectrum(&z)?;
    Ok(csv_string(
        &["index", "log_normalized_sv"],
        values
            .iter()
            .enumerate()
            .map(|(i, v)| vec![i.to_string(), v.to_string()]),
    ))
}

/// Generates the configured dataset into `out`; returns the domain list.
pub fn synth(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let bundle = generate(&cfg.synth)?;
    let meta = write_bundle(out, &bundle)?;
    let mut text = String::new();
    for (name, d) in meta.domains.iter().zip(bundle.domains()) {
        text.push_str(&format!("{name}: {} samples\n", d.len()));
    }
    Ok(text)
}

/// Trains on the dataset in `data` and writes a run directory to `out`.
pub fn train(data: &Path, cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let bundle = read_bundle(data)?;
    let run = train_bundle(&bundle, cfg)?;
    write_run(out, &run, &bundle, cfg, &data.to_string_lossy())?;
    let sel = run.record.selected();
    let mut text = format!(
        "best_epoch = {}\nsrc_val_acc = {}\ntgt_acc = {}\n",
        run.record.best_epoch, sel.src_val_acc, run.report.target_acc
    );
    if let Some((acc, _)) = &run.unimodal {
        for (m, a) in acc.iter().enumerate() {
            text.push_str(&format!("unimodal_{m}_tgt_acc = {a}\n"));
        }
    }
    Ok(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Lambda,
    AlphaMarg,
    AlphaSpec,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(SweepParam::Lambda),
            "alpha_marg" => Ok(SweepParam::AlphaMarg),
            "alpha_spec" => Ok(SweepParam::AlphaSpec),
            other => Err(LabError::Usage(format!(
                "unknown sweep parameter `{other}`; expected lambda, alpha_marg or alpha_spec"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::AlphaMarg => "alpha_marg",
            SweepParam::AlphaSpec => "alpha_spec",
        }
    }
}

/// One regularized run per value, all from the configured seed, run on
/// separate threads. Accuracies are those of the selected checkpoint.
pub fn sweep(param: SweepParam, values: &[f64], data: &Path, cfg: &ExperimentConfig) -> Result<String> {
    if values.is_empty() {
        return Err(LabError::Usage("empty value list".into()));
    }
    let bundle = read_bundle(data)?;
    let configs: Vec<ExperimentConfig> = values
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            c.mer.enabled = true;
            c.train.unimodal = false;
            match param {
                SweepParam::Lambda => c.mer.lambda = v,
                SweepParam::AlphaMarg => c.mer.alpha_marg = v,
                SweepParam::AlphaSpec => c.mer.alpha_spec = v,
            }
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Result<(f64, f64)>> = thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| {
                let bundle = &bundle;
                s.spawn(move || -> Result<(f64, f64)> {
                    let dims = bundle.validate()?;
                    let spec = c.model_spec(&dims, bundle.num_classes)?;
                    let tc = c.train_config()?;
                    let model = merdg_core::net::FusionModel::init(&spec, tc.seed)?;
                    let rec = merdg_core::net::train(model, bundle, &tc)?;
                    Ok((rec.selected().src_val_acc, evaluate(&rec.model, &bundle.target)?))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(rows.len());
    for (v, r) in values.iter().zip(rows) {
        let (src, tgt) = r?;
        out.push(vec![v.to_string(), src.to_string(), tgt.to_string()]);
    }
    Ok(csv_string(&[param.name(), "src_val_acc", "tgt_acc"], out))
}

pub fn bench_csv(n: usize, dims: &[usize], reps: usize) -> Result<(String, Vec<BenchRow>)> {
    let rows = bench::run(n, dims, reps)?;
    Ok((bench::to_csv(&rows), rows))
}

/// Parses `noise-m<M>-<σ>` or `drop-m<M>`.
pub fn parse_corruption(s: &str) -> Result<Corruption> {
    let bad = || {
        LabError::Usage(format!(
            "bad corruption `{s}`; expected noise-m<M>-<sigma> or drop-m<M>"
        ))
    };
    if let Some(rest) = s.strip_prefix("drop-m") {
        return Ok(Corruption::Drop {
            modality: rest.parse().map_err(|_| bad())?,
        });
    }
    let rest = s.strip_prefix("noise-m").ok_or_else(bad)?;
    let (m, sigma) = rest.split_once('-').ok_or_else(bad)?;
    let sigma: f64 = sigma.parse().map_err(|_| bad())?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(bad());
    }
    Ok(Corruption::Noise {
        modality: m.parse().map_err(|_| bad())?,
        sigma,
    })
}

/// `standard` expands to σ 0.5, σ 1.0 and a drop for every modality.
pub fn parse_corruptions(list: &[String], num_modalities: usize) -> Result<Vec<Corruption>> {
    let mut out = Vec::new();
    for s in list {
        if s == "standard" {
            out.extend(Corruption::standard_set(num_modalities));
        } else {
            out.push(parse_corruption(s)?);
        }
    }
    Ok(out)
}

/// Domain a robustness table is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalDomain {
    Target,
    /// All source domains pooled.
    Sources,
}

impl EvalDomain {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "target" => Ok(EvalDomain::Target),
            "sources" => Ok(EvalDomain::Sources),
            other => Err(LabError::Usage(format!(
                "unknown domain `{other}`; expected target or sources"
            ))),
        }
    }
}

/// Clean and corrupted accuracy of a saved run's checkpoint. Noise draws
/// use the same stream as the run's own report.
pub fn robustness(run_dir: &Path, data: Option<&Path>, corruptions: &[String], domain: EvalDomain) -> Result<String> {
    let saved = load_run(run_dir, data)?;
    let list = parse_corruptions(corruptions, saved.model.num_modalities())?;
    let pooled;
    let target = match domain {
        EvalDomain::Target => &saved.bundle.target,
        EvalDomain::Sources => {
            pooled = Domain::concat(&saved.bundle.sources.iter().collect::<Vec<_>>())?;
            &pooled
        }
    };
    let clean = evaluate(&saved.model, target)?;
    let mut rng = SeededRng::derived(saved.config.train.seed, 60);
    let mut rows = vec![vec!["clean".to_string(), clean.to_string(), 0.0f64.to_string()]];
    for c in list {
        let acc = corrupted_evaluate(&saved.model, target, c, &mut rng)?;
        rows.push(vec![c.label(), acc.to_string(), (clean - acc).to_string()]);
    }
    Ok(csv_string(&["condition", "accuracy", "drop"], rows))
}

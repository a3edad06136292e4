use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use merdg_core::net::BaselineReg;
use merdg_core::MerConfig;
use merdg_lab::commands::{self, DiagnoseInputs, EvalDomain, SweepParam};
use merdg_lab::config::ExperimentConfig;
use merdg_lab::gradcheck::GradCheckConfig;
use merdg_lab::{LabError, Result};

/// Feature-entropy regularization experiments on synthetic multimodal data.
#[derive(Parser)]
#[command(name = "merdg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check regularizer gradients against central differences.
    GradCheck {
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        d: usize,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
    },
    /// Regularizer loss breakdown of a feature file.
    Losses {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha_marg: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha_spec: f64,
    },
    /// Effective rank and similarity metrics of feature files.
    Diagnose {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: Option<PathBuf>,
        #[arg(long)]
        labels_a: Option<PathBuf>,
        #[arg(long)]
        labels_b: Option<PathBuf>,
        /// Comma-separated: rankme, cka-linear, cka-rbf, procrustes, or a
        /// class- prefixed similarity metric.
        #[arg(long, value_delimiter = ',', required = true)]
        metrics: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Log-normalized singular values as CSV.
    Spectrum {
        #[arg(long)]
        input: PathBuf,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset directory.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a fusion model and write a run directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Enable the regularizer regardless of the config.
        #[arg(long)]
        mer: bool,
        /// Overrides `train.baseline_reg`, e.g. dropout:0.2.
        #[arg(long)]
        baseline_reg: Option<String>,
    },
    /// One regularized training run per parameter value.
    Sweep {
        /// lambda, alpha_marg or alpha_spec.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time the regularizer against a toy training step.
    Bench {
        #[arg(long, default_value_t = 48)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "128,256,512")]
        d_list: Vec<usize>,
        #[arg(long, default_value_t = merdg_lab::bench::MIN_REPS)]
        reps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Target accuracy of a saved run under encoder corruptions.
    Robustness {
        #[arg(long)]
        run: PathBuf,
        /// Overrides the data directory recorded in the run.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Comma-separated noise-m<M>-<sigma>, drop-m<M> or standard.
        #[arg(long, value_delimiter = ',', default_value = "standard")]
        corruptions: Vec<String>,
        /// target, or sources for the pooled source domains.
        #[arg(long, default_value = "target")]
        domain: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(text: String, out: Option<&Path>) -> Result<String> {
    match out {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| LabError::Io {
                path: p.to_path_buf(),
                source: e,
            })?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn run(cmd: Command) -> Result<String> {
    match cmd {
        Command::GradCheck { n, d, seeds, step } => commands::grad_check(&GradCheckConfig { n, d, seeds, step }),
        Command::Losses {
            input,
            gamma,
            eps,
            alpha_marg,
            alpha_spec,
        } => {
            let cfg = MerConfig {
                gamma,
                eps,
                alpha_marg,
                alpha_spec,
                ..MerConfig::default()
            };
            commands::losses(&input, &cfg)
        }
        Command::Diagnose {
            a,
            b,
            labels_a,
            labels_b,
            metrics,
            seed,
        } => commands::diagnose(&DiagnoseInputs {
            a: &a,
            b: b.as_deref(),
            labels_a: labels_a.as_deref(),
            labels_b: labels_b.as_deref(),
            metrics: &metrics,
            seed,
        }),
        Command::Spectrum { input, out } => emit(commands::spectrum_csv(&input)?, out.as_deref()),
        Command::Synth { config, out } => {
            let cfg = ExperimentConfig::load_or_default(config.as_deref())?;
            commands::synth(&cfg, &out)
        }
        Command::Train {
            data,
            config,
            out,
            mer,
            baseline_reg,
        } => {
            let mut cfg = ExperimentConfig::load_or_default(config.as_deref())?;
            cfg.mer.enabled |= mer;
            if let Some(reg) = baseline_reg {
                cfg.train.baseline_reg = BaselineReg::parse(&reg)?.to_string();
            }
            commands::train(&data, &cfg, &out)
        }
        Command::Sweep {
            param,
            values,
            data,
            config,
            out,
        } => {
            let cfg = ExperimentConfig::load_or_default(config.as_deref())?;
            emit(
                commands::sweep(SweepParam::parse(&param)?, &values, &data, &cfg)?,
                out.as_deref(),
            )
        }
        Command::Bench { n, d_list, reps, out } => emit(commands::bench_csv(n, &d_list, reps)?.0, out.as_deref()),
        Command::Robustness {
            run,
            data,
            corruptions,
            domain,
            out,
        } => {
            let domain = EvalDomain::parse(&domain)?;
            emit(
                commands::robustness(&run, data.as_deref(), &corruptions, domain)?,
                out.as_deref(),
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kerrsim::fitkit::FitModel;
use kerrsim::response::Backend;
use kerrsim::{Error, Result};
use serde_json::json;

use commands::Ctx;
use config::RunConfig;
use output::OutDir;

/// Driven-dissipative Kerr oscillator toolkit.
#[derive(Parser)]
#[command(name = "kerrsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// JSON run configuration (schema in docs/config.schema.json).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts and the manifest.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for noise and bootstrap; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Treat truncation warnings as errors.
    #[arg(long, global = true)]
    strict: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Quantum,
    Classical,
    ClassicalNl,
    Perturbative,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Quantum => Backend::Quantum,
            BackendArg::Classical => Backend::Classical,
            BackendArg::ClassicalNl => Backend::ClassicalNl,
            BackendArg::Perturbative => Backend::Perturbative,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Quantum,
    ClassicalNl,
}

#[derive(Subcommand)]
enum Command {
    /// Resonance frequency and Kerr shift from circuit elements.
    Quantize,
    /// Transmission sweeps at every configured power.
    Sweep {
        #[arg(long, value_enum)]
        backend: BackendArg,
    },
    /// Dip depth, position and effective internal damping per power.
    DipSummary {
        #[arg(long, value_enum, default_value = "quantum")]
        backend: BackendArg,
    },
    /// Wigner function of the steady state at the operating point.
    Wigner {
        /// Also compute the current decomposition and continuity check.
        #[arg(long)]
        currents: bool,
    },
    /// Kerr-deformed coherent state with its currents.
    Deform,
    /// Time evolution from a coherent state.
    Evolve,
    /// Quadrature-variance scan at each configured power.
    Squeeze,
    /// Fit the chain baseline on the lowest-power trace and remove it.
    Calibrate,
    /// Block-average a dataset.
    Decimate,
    /// Fit a model to a dataset.
    Fit {
        #[arg(long, value_enum)]
        model: ModelArg,
    },
    /// Synthetic dataset from the quantum model.
    Synth,
    /// Critical drive of the bistable regime.
    Bifurcation,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Quantize => "quantize",
            Command::Sweep { .. } => "sweep",
            Command::DipSummary { .. } => "dip-summary",
            Command::Wigner { .. } => "wigner",
            Command::Deform => "deform",
            Command::Evolve => "evolve",
            Command::Squeeze => "squeeze",
            Command::Calibrate => "calibrate",
            Command::Decimate => "decimate",
            Command::Fit { .. } => "fit",
            Command::Synth => "synth",
            Command::Bifurcation => "bifurcation",
        }
    }

    fn options(&self, strict: bool) -> serde_json::Value {
        let mut o = json!({ "strict": strict });
        match self {
            Command::Sweep { backend } | Command::DipSummary { backend } => {
                o["backend"] = json!(Backend::from(*backend).name());
            }
            Command::Wigner { currents } => o["currents"] = json!(currents),
            Command::Fit { model } => o["model"] = json!(model_of(*model).name()),
            _ => {}
        }
        o
    }
}

fn model_of(m: ModelArg) -> FitModel {
    match m {
        ModelArg::Quantum => FitModel::Quantum,
        ModelArg::ClassicalNl => FitModel::ClassicalNl,
    }
}

fn out_dir(cli: &Cli, cfg: Option<&RunConfig>) -> PathBuf {
    cli.global
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.paths.out.as_deref().map(|p| c.resolve(p))))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let (cfg, config_bytes) = match &cli.global.config {
        Some(path) => {
            let bytes = std::fs::read(path)?;
            let text = std::str::from_utf8(&bytes).map_err(|e| Error::Config(e.to_string()))?;
            let base = path.parent().unwrap_or(std::path::Path::new("."));
            (RunConfig::parse(text, base)?, Some((path.clone(), bytes)))
        }
        None => (RunConfig::default(), None),
    };
    let mut out = OutDir::create(&out_dir(cli, Some(&cfg)))?;
    if let Some((path, bytes)) = &config_bytes {
        out.record_input("config", path, bytes);
    }
    let seed = cli.global.seed.or(cfg.seed).unwrap_or(0);
    let mut ctx = Ctx {
        cfg: &cfg,
        out: &mut out,
        strict: cli.global.strict,
        seed,
    };
    match &cli.command {
        Command::Quantize => commands::quantize_cmd(&mut ctx),
        Command::Sweep { backend } => commands::sweep_cmd(&mut ctx, (*backend).into()),
        Command::DipSummary { backend } => commands::dip_summary_cmd(&mut ctx, (*backend).into()),
        Command::Wigner { currents } => commands::wigner_cmd(&mut ctx, *currents),
        Command::Deform => commands::deform_cmd(&mut ctx),
        Command::Evolve => commands::evolve_cmd(&mut ctx),
        Command::Squeeze => commands::squeeze_cmd(&mut ctx),
        Command::Calibrate => commands::calibrate_cmd(&mut ctx),
        Command::Decimate => commands::decimate_cmd(&mut ctx),
        Command::Fit { model } => commands::fit_cmd(&mut ctx, model_of(*model)),
        Command::Synth => commands::synth_cmd(&mut ctx),
        Command::Bifurcation => commands::bifurcation_cmd(&mut ctx),
    }?;
    out.finish(cli.command.name(), cli.command.options(cli.global.strict), seed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", commands::error_json(&err));
            let cfg = cli
                .global
                .config
                .as_deref()
                .and_then(|p| RunConfig::load(p).ok());
            commands::write_error(&out_dir(&cli, cfg.as_ref()), &err);
            ExitCode::FAILURE
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hpcausal::config::{PipelineConfig, OUT_ENV};
use hpcausal::error::Result;
use hpcausal::pipeline::{
    cmd_analyze, cmd_effects, cmd_explain, cmd_reproduce, cmd_zoo_build, RunOptions,
};
use hpcausal::store::RunManifest;
use hpcausal_core::causal::Kernel;
use hpcausal_core::hparams::HparamKey;

/// Hyperparameter effects on predictions and explanations of a model zoo.
#[derive(Parser)]
#[command(name = "hpcausal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample hyperparameters and train the zoo.
    ZooBuild(Common),
    /// Compute predictions and saliency maps for the probe instances.
    Explain(Common),
    /// Estimate kernelized treatment effects of each hyperparameter level.
    Effects(Common),
    /// Correlation, mediation and kernel-sensitivity tables plus figures.
    Analyze(Common),
    /// Run every stage in order.
    Reproduce(Common),
}

#[derive(Args)]
struct Common {
    /// JSON pipeline configuration; omitted fields take their defaults.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output root.
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
    /// Replace existing stage outputs.
    #[arg(long)]
    force: bool,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Zoo size.
    #[arg(long)]
    models: Option<usize>,
    /// Training epochs per model.
    #[arg(long)]
    epochs: Option<usize>,
    /// Number of synthetic dataset samples.
    #[arg(long)]
    dataset_size: Option<usize>,
    /// Number of probe instances.
    #[arg(long)]
    probes: Option<usize>,
    /// Comma-separated hyperparameter keys.
    #[arg(long, value_delimiter = ',')]
    keys: Option<Vec<String>>,
    /// Comma-separated kernels, e.g. `linear,rbf:0.5`.
    #[arg(long, value_delimiter = ',')]
    kernels: Option<Vec<String>>,
    /// Mediation permutations.
    #[arg(long)]
    permutations: Option<usize>,
    /// Bootstrap resamples.
    #[arg(long)]
    resamples: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<(PipelineConfig, RunOptions)> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.set_all_seeds(s);
        }
        if let Some(n) = self.models {
            cfg.zoo.n = n;
        }
        if let Some(e) = self.epochs {
            cfg.zoo.train.epochs = e;
        }
        if let Some(n) = self.dataset_size {
            cfg.zoo.dataset.size = n;
        }
        if let Some(p) = self.probes {
            cfg.explain.n_probes = p;
        }
        if let Some(keys) = &self.keys {
            cfg.effects.keys = keys
                .iter()
                .map(|k| k.parse::<HparamKey>())
                .collect::<Result<_, _>>()?;
        }
        if let Some(ks) = &self.kernels {
            cfg.effects.kernels = ks
                .iter()
                .map(|k| k.parse::<Kernel>())
                .collect::<Result<_, _>>()?;
        }
        if let Some(p) = self.permutations {
            cfg.analyze.mediation.permutations = p;
        }
        if let Some(r) = self.resamples {
            cfg.analyze.bootstrap.resamples = r;
        }
        let out = cfg.out_root(self.out.as_deref());
        Ok((
            cfg,
            RunOptions {
                out,
                force: self.force,
            },
        ))
    }
}

fn report(run: &RunManifest, opts: &RunOptions) {
    eprintln!(
        "{}: wrote {} files under {} (config {})",
        run.stage,
        run.files.len(),
        opts.out.display(),
        &run.config_hash[..12]
    );
    for w in run.warnings.iter().take(10) {
        eprintln!("  warning: {w}");
    }
    if run.warnings.len() > 10 {
        eprintln!(
            "  ... {} more warnings in run.json",
            run.warnings.len() - 10
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    let (common, stage): (
        &Common,
        fn(&PipelineConfig, &RunOptions) -> Result<RunManifest>,
    ) = match &cli.command {
        Command::ZooBuild(c) => (c, cmd_zoo_build),
        Command::Explain(c) => (c, cmd_explain),
        Command::Effects(c) => (c, cmd_effects),
        Command::Analyze(c) => (c, cmd_analyze),
        Command::Reproduce(c) => {
            let (cfg, opts) = c.resolve()?;
            for r in cmd_reproduce(&cfg, &opts)? {
                report(&r, &opts);
            }
            return Ok(());
        }
    };
    let (cfg, opts) = common.resolve()?;
    report(&stage(&cfg, &opts)?, &opts);
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! `gus` — run the scheduling experiments and write CSV results.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use gus_core::harness::{
    self, figure2_sweep, figure3_load, figure4_robustness, manifest_path, run_experiment,
    ExperimentConfig, ExperimentOutput,
};
use gus_core::{generate_scenario, GusVariant, RateMode};

#[derive(Parser)]
#[command(
    name = "gus",
    version,
    about = "Geometry-based user scheduling experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean sum-rate versus total transmit power (GUS, GWC, random).
    Fig2(RunArgs),
    /// Channel-estimation load of GUS against full CSI.
    Fig3(RunArgs),
    /// Mean sum-rate versus localisation error scale Ω.
    Fig4(RunArgs),
    /// Run an experiment described entirely by a config file.
    Run(RunArgs),
    /// Generate one scenario and write it as TOML.
    Scenario(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; missing keys take the subcommand's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed (trial t uses base_seed + t).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output file. Sidecars `<stem>.trials.csv` and `<stem>.manifest.txt` are written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `physical` or `paper-literal`.
    #[arg(long)]
    mode: Option<RateMode>,
    /// `last` or `set`.
    #[arg(long)]
    gus_variant: Option<GusVariant>,
}

impl RunArgs {
    fn config(&self, preset: ExperimentConfig) -> Result<ExperimentConfig> {
        let cfg = self.merged(preset)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Preset or file, with command-line overrides applied but not validated.
    fn merged(&self, preset: ExperimentConfig) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                ExperimentConfig::from_toml_str_unchecked(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => preset,
        };
        if let Some(seed) = self.seed {
            cfg.base_seed = seed;
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
        }
        if let Some(mode) = self.mode {
            cfg.mode = mode;
        }
        if let Some(variant) = self.gus_variant {
            cfg.gus_variant = variant;
        }
        if self.out.is_some() {
            cfg.output = self.out.clone();
        }
        Ok(cfg)
    }
}

fn output_path(cfg: &ExperimentConfig, default: &str) -> PathBuf {
    cfg.output.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn experiment(
    name: &str,
    cfg: &ExperimentConfig,
    run: fn(&ExperimentConfig) -> gus_core::Result<ExperimentOutput>,
) -> Result<()> {
    let out = output_path(cfg, &format!("{name}.csv"));
    ensure_parent(&out)?;
    let start = Instant::now();
    let result = run(cfg)?;
    harness::write_outputs(&out, name, cfg, &result)
        .with_context(|| format!("writing {}", out.display()))?;
    log::info!(
        "{name}: {} cells in {:.1?}",
        result.cells.len(),
        start.elapsed()
    );
    for cell in &result.cells {
        println!(
            "{:<6} K_s={:<3} Ω={} P={:>9.3} W  sum-rate {:.4} ± {:.4}",
            cell.algorithm.name(),
            cell.k_s,
            cell.omega,
            cell.power_w,
            cell.mean,
            cell.std_err
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Fig2(args) => experiment(
            "fig2",
            &args.config(ExperimentConfig::figure2())?,
            figure2_sweep,
        ),
        Command::Fig4(args) => experiment(
            "fig4",
            &args.config(ExperimentConfig::figure4())?,
            figure4_robustness,
        ),
        Command::Run(args) => {
            if args.config.is_none() {
                anyhow::bail!("`run` needs --config");
            }
            experiment(
                "run",
                &args.config(ExperimentConfig::default())?,
                run_experiment,
            )
        }
        Command::Fig3(args) => {
            let cfg = args.config(ExperimentConfig::default())?;
            let out = output_path(&cfg, "fig3.csv");
            ensure_parent(&out)?;
            let rows = figure3_load(&cfg)?;
            harness::write_load_csv(std::fs::File::create(&out)?, &rows)?;
            harness::write_manifest(std::fs::File::create(manifest_path(&out))?, "fig3", &cfg)?;
            for r in &rows {
                println!(
                    "M={:<4} K={:<4} K_s={:<3} load {:>7} vs {:>7} (ratio {})",
                    r.antennas, r.users, r.k_s, r.load_gus, r.load_full_csi, r.ratio
                );
            }
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Scenario(args) => {
            // Only the scenario block matters here; experiment grids may not fit it.
            let cfg = args.merged(ExperimentConfig::default())?;
            let mut scenario_cfg = cfg.scenario.clone();
            scenario_cfg.rng_seed = cfg.base_seed;
            let scenario = generate_scenario(&scenario_cfg)?;
            let out = output_path(&cfg, "scenario.toml");
            ensure_parent(&out)?;
            scenario.save(&out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

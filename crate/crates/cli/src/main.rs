use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use tclflex_core::dataio::write_csv;
use tclflex_core::harness::{
    self, fit_forecaster, forecast_context, load_dataset, prepare, run_baselines, run_experiment, write_manifest,
    ExperimentConfig, HarnessError, Stage,
};

#[derive(Parser)]
#[command(name = "tclflex", version, about = "Load aggregation experiments with virtual-battery building controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cluster as CSV (`--seed` sets the data seed).
    GenData(Common),
    /// Fit the forecaster on the training split and score it on the test split.
    TrainForecaster(Common),
    /// Run the closed-loop experiment over the test epoch.
    Run(Common),
    /// Replay the rule-based and no-storage baselines.
    Baselines(Common),
    /// Consolidate the artifacts of a finished run in `--out`.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one experiment per seed, in parallel.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn runtime(stage: Stage) -> impl Fn(std::io::Error) -> HarnessError {
    move |e| HarnessError::new(stage, e.to_string())
}

fn execute(cmd: Command) -> Result<(), HarnessError> {
    match cmd {
        Command::GenData(c) => {
            let mut cfg = load_config(&c)?;
            if let Some(s) = c.seed {
                cfg.data.seed = s;
            }
            if cfg.data.path.is_some() {
                return Err(HarnessError::new(Stage::Config, "gen-data needs a synthetic data source, not data.path"));
            }
            let ds = load_dataset(&cfg)?;
            write_csv(&ds, &c.out).map_err(|e| HarnessError::new(Stage::Data, e.to_string()))?;
            info!("wrote {} buildings x {} hours to {}", ds.n_buildings(), ds.len(), c.out.display());
            write_manifest(&c.out, "gen-data")
        }
        Command::TrainForecaster(c) => {
            let cfg = load_config(&c)?;
            let prep = prepare(&cfg)?;
            let fc = fit_forecaster(&cfg, &prep)?;
            let report = fc
                .evaluate(&forecast_context(&cfg, &prep))
                .map_err(|e| HarnessError::new(Stage::Forecaster, e.to_string()))?;
            std::fs::create_dir_all(&c.out).map_err(runtime(Stage::Report))?;
            let fail = |e: tclflex_core::forecaster::ForecastError| HarnessError::new(Stage::Report, e.to_string());
            fc.save_json(&c.out.join("forecaster.json")).map_err(fail)?;
            report.write_csv(&c.out.join("forecast_report.csv")).map_err(fail)?;
            println!("linear MAPE {:.2}%  persistence MAPE {:.2}%", report.linear.mape_pct, report.persistence.mape_pct);
            write_manifest(&c.out, "train-forecaster")
        }
        Command::Run(c) => {
            let mut cfg = load_config(&c)?;
            cfg.out_dir = Some(c.out.clone());
            let out = run_experiment(&cfg)?;
            println!("total_cost {:.6}", out.cost.total_cost);
            Ok(())
        }
        Command::Baselines(c) => {
            let cfg = load_config(&c)?;
            let prep = prepare(&cfg)?;
            let b = run_baselines(&cfg, &prep)?;
            std::fs::create_dir_all(&c.out).map_err(runtime(Stage::Report))?;
            let s = serde_json::to_string_pretty(&b).map_err(|e| HarnessError::new(Stage::Report, e.to_string()))?;
            std::fs::write(c.out.join("baselines.json"), s + "\n").map_err(runtime(Stage::Report))?;
            write_manifest(&c.out, "baselines")
        }
        Command::Report { out } => {
            let r = harness::report(&out)?;
            println!("total_cost {:.6}  no_storage {:.6}", r.total_cost, r.no_storage_total_cost);
            write_manifest(&out, "report")
        }
        Command::Sweep { common, seeds } => {
            let cfg = load_config(&common)?;
            let s = harness::sweep(&cfg, &seeds, Some(&common.out))?;
            println!("total_cost mean {:.6} std {:.6} over {} seeds", s.total_cost_mean, s.total_cost_std, s.cells.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.stage == Stage::Config { 2 } else { 3 })
        }
    }
}

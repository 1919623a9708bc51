use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use cloze_core::experiment::{
    evaluate_to_dir, output_root, predict_to_file, run_grid, train_to_dir, ExperimentConfig,
    GridSpec,
};
use cloze_core::toy::make_toy_data;
use cloze_core::ContextMethod;

/// Plausibility classification for cloze-task fillers.
#[derive(Parser)]
#[command(name = "cloze", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the configured head and write `model.json`.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Label every candidate with a saved model and write a predictions TSV.
    Predict {
        #[command(flatten)]
        config: ConfigArgs,
        /// Model file; defaults to `model.json` in the output directory.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Dataset to label; defaults to the config's dev set, else train.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Score a predictions TSV against a labeled dataset.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Directory for `report.txt` and `report.json`.
        #[arg(long)]
        out: PathBuf,
        /// Row label in the text report.
        #[arg(long, default_value = "predictions")]
        name: String,
    },
    /// Run every entry of a grid file and write a combined comparison table.
    Grid {
        grid: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the seed of every entry.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a config (or with `--grid`, a grid file) without running it.
    ValidateConfig {
        path: PathBuf,
        #[arg(long)]
        grid: bool,
    },
    /// Write the synthetic toy corpus and its score files.
    MakeToyData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct ConfigArgs {
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_context_method)]
    context_method: Option<ContextMethod>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_context_method(s: &str) -> Result<ContextMethod, String> {
    s.parse().map_err(|_| {
        format!("unknown context method `{s}`; expected full, context_only or sentence_only")
    })
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config)
            .with_context(|| format!("loading config {}", self.config.display()))?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(method) = self.context_method {
            config.context_method = method;
        }
        if let Some(out) = &self.out {
            config.output_dir = Some(out.clone());
        }
        config.validate()?;
        Ok(config)
    }
}

fn grid_out_dir(grid: &GridSpec, grid_path: &Path) -> PathBuf {
    let name = grid.name.clone().unwrap_or_else(|| {
        grid_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "grid".into())
    });
    output_root().join(name)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config } => {
            let config = config.load()?;
            let path = train_to_dir(&config, &config.output_dir())?;
            println!("wrote {}", path.display());
        }
        Command::Predict {
            config,
            model,
            dataset,
        } => {
            let config = config.load()?;
            let out_dir = config.output_dir();
            let model = model.unwrap_or_else(|| out_dir.join("model.json"));
            let out = out_dir.join("predictions.tsv");
            let rows = predict_to_file(&config, &model, dataset.as_deref(), &out)?;
            println!("wrote {rows} predictions to {}", out.display());
        }
        Command::Evaluate {
            predictions,
            gold,
            out,
            name,
        } => {
            let report = evaluate_to_dir(&predictions, &gold, &out, &name)?;
            print!("{}", report.render(&name));
        }
        Command::Grid {
            grid: path,
            out,
            seed,
        } => {
            let mut grid = GridSpec::load(&path)
                .with_context(|| format!("loading grid {}", path.display()))?;
            if let Some(seed) = seed {
                grid.entries.iter_mut().for_each(|e| e.seed = seed);
            }
            let out = out.unwrap_or_else(|| grid_out_dir(&grid, &path));
            let outcome = run_grid(&grid, &out)?;
            print!("{}", outcome.table);
        }
        Command::ValidateConfig { path, grid } => {
            if grid {
                let spec = GridSpec::load(&path)?;
                spec.validate()?;
                println!("ok: {} entries", spec.entries.len());
            } else {
                ExperimentConfig::load(&path)?.validate()?;
                println!("ok");
            }
        }
        Command::MakeToyData { out, seed } => {
            let written = make_toy_data(seed)
                .write_to(&out)
                .with_context(|| format!("writing toy data to {}", out.display()))?;
            for path in written {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! genreforge command-line interface. Parses arguments, resolves the
//! run configuration (defaults, then config file, then flags), and
//! dispatches to the command implementations, mapping failures to
//! exit codes 1 (usage), 2 (data), and 3 (training).

use std::path::PathBuf;
use std::process::exit;

use clap::{Args, Parser, Subcommand};

use genreforge::config::{self, ModelKind, RunConfig};
use genreforge::run::{self, RunError};

#[derive(Parser)]
#[command(name = "genreforge", version, about = "Music genre classification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Each overrides the matching
/// config-file key.
#[derive(Args)]
struct Common {
    /// Key=value config file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed for splitting and training.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Pre-extracted feature CSV with a label column.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    /// Root of a genre-per-directory WAV dataset.
    #[arg(long, value_name = "DIR")]
    dataset_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Decode a dataset tree and cache extracted features.
    Extract {
        #[command(flatten)]
        common: Common,
    },
    /// Train one model and write it alongside its evaluation report.
    Train {
        #[command(flatten)]
        common: Common,
        /// Model to train: mlp, knn, cnn, or random_forest.
        #[arg(long)]
        model: String,
        /// Feature cache written by `extract`.
        #[arg(long, value_name = "FILE")]
        features: Option<PathBuf>,
    },
    /// Classify one WAV clip with a saved model.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Saved model file.
        model: PathBuf,
        /// 16-bit PCM WAV clip.
        wav: PathBuf,
        /// Print only the N most probable genres.
        #[arg(long)]
        top: Option<usize>,
    },
    /// Train several models on one shared split and tabulate them.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated models to include.
        #[arg(long, default_value = "mlp,knn,cnn,random_forest")]
        models: String,
    },
    /// Evaluate KNN accuracy across candidate k values.
    SweepK {
        #[command(flatten)]
        common: Common,
        /// Comma-separated k values (default 1 through 20).
        #[arg(long)]
        ks: Option<String>,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            exit(code);
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        exit(e.exit_code());
    }
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        exit(e.exit_code());
    }
}

/// Caps the global worker pool when GENREFORGE_THREADS is set.
fn init_threads() -> Result<(), RunError> {
    let Ok(text) = std::env::var("GENREFORGE_THREADS") else {
        return Ok(());
    };
    let threads: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| {
            RunError::Usage(format!(
                "GENREFORGE_THREADS must be a positive integer, got {text:?}"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| RunError::Usage(e.to_string()))
}

/// Defaults, then the config file, then flags.
fn resolve(common: &Common) -> Result<RunConfig, RunError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        let pairs = config::load_config_file(path)?;
        config::apply_pairs(&mut cfg, &pairs)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(csv) = &common.csv {
        cfg.csv_path = Some(csv.clone());
    }
    if let Some(dir) = &common.dataset_dir {
        cfg.dataset_dir = Some(dir.clone());
    }
    Ok(cfg)
}

fn parse_ks(text: Option<&str>) -> Result<Vec<usize>, RunError> {
    let Some(text) = text else {
        return Ok((1..=20).collect());
    };
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| RunError::Usage(format!("bad k value {s:?}")))
        })
        .collect()
}

fn dispatch(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Extract { common } => {
            let cfg = resolve(&common)?;
            let s = run::cmd_extract(&cfg)?;
            println!(
                "cached {} clips across {} genres -> {}",
                s.n_clips,
                s.per_genre_counts.len(),
                s.cache_path.display()
            );
            for (genre, count) in &s.per_genre_counts {
                println!("  {genre}: {count}");
            }
            if !s.corrupt_files.is_empty() {
                eprintln!("skipped {} undecodable files:", s.corrupt_files.len());
                for line in &s.corrupt_files {
                    eprintln!("  {line}");
                }
            }
            println!("manifest -> {}", s.manifest_path.display());
            Ok(())
        }
        Command::Train {
            common,
            model,
            features,
        } => {
            let cfg = resolve(&common)?;
            let kind = ModelKind::parse(&model)?;
            let s = run::cmd_train(&cfg, kind, features.as_deref())?;
            println!(
                "{}: trained on {} items, test accuracy {:.4} on {}",
                s.model_name, s.n_train, s.test_accuracy, s.n_test
            );
            println!("model -> {}", s.model_path.display());
            println!("report -> {}", s.report_path.display());
            Ok(())
        }
        Command::Predict {
            common,
            model,
            wav,
            top,
        } => {
            let cfg = resolve(&common)?;
            let s = run::cmd_predict(&cfg, &model, &wav, top)?;
            println!("model: {}", s.model_kind);
            for (genre, prob) in &s.ranked {
                println!("{genre} {prob:.4}");
            }
            Ok(())
        }
        Command::Compare { common, models } => {
            let cfg = resolve(&common)?;
            let kinds = config::parse_model_list(&models)?;
            let s = run::cmd_compare(&cfg, &kinds)?;
            print!("{}", s.table);
            println!("artifacts -> {}", cfg.out_dir.display());
            if s.failed.is_empty() {
                Ok(())
            } else {
                let list = s
                    .failed
                    .iter()
                    .map(|(name, err)| format!("{name}: {err}"))
                    .collect::<Vec<_>>()
                    .join("; ");
                Err(RunError::Training(format!("models failed: {list}")))
            }
        }
        Command::SweepK { common, ks } => {
            let cfg = resolve(&common)?;
            let ks = parse_ks(ks.as_deref())?;
            let s = run::cmd_sweep_k(&cfg, &ks)?;
            println!("k accuracy");
            for (k, acc) in &s.results {
                println!("{k} {acc:.4}");
            }
            println!("best k = {}", s.best_k);
            println!("csv -> {}", s.csv_path.display());
            Ok(())
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use xrayclip::data::synthetic::{generate, FixtureSpec};
use xrayclip::pipeline::{self, BackendKind, Baselines, Overrides, RunConfig, DATA_ROOT_ENV};
use xrayclip::{eval, Result};

#[derive(Parser)]
#[command(name = "xrayclip", version, about = "Chest X-ray label-efficient classification pipeline")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dataset root; overrides XRAYCLIP_DATA_ROOT and the config file.
    #[arg(long, global = true)]
    data_root: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// `real` or `stub`.
    #[arg(long, global = true)]
    backend: Option<BackendKind>,
    #[arg(long, global = true)]
    weights_path: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partially fine-tune the encoder and head, then report on the test split.
    Adapt,
    /// Score the test split with disease prompts.
    Zeroshot {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Head-only fine-tuning on balanced N-shot subsets.
    Fewshot {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16", allow_hyphen_values = true)]
        shots: Vec<i64>,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Score with prompts instead of the head.
        #[arg(long)]
        prompts: bool,
    },
    /// Compare reports with the bundled or a given baseline table.
    Report {
        reports: Vec<PathBuf>,
        #[arg(long, conflicts_with = "no_baselines")]
        baselines: Option<PathBuf>,
        #[arg(long)]
        no_baselines: bool,
        /// Add the bundled reference per-class values as a report.
        #[arg(long)]
        reference: bool,
    },
    /// Write the synthetic fixture dataset to the data root.
    Fixture {
        #[arg(long, default_value_t = 64)]
        images: usize,
    },
}

fn run(cli: Cli) -> Result<()> {
    let overrides = Overrides {
        config: cli.config,
        seed: cli.seed,
        data_root: cli.data_root,
        output_dir: cli.output_dir,
        backend: cli.backend,
        weights_path: cli.weights_path,
    };
    let cfg = RunConfig::resolve(&overrides, std::env::var(DATA_ROOT_ENV).ok())?;
    match cli.command {
        Command::Adapt => {
            let out = pipeline::cmd_adapt(&cfg)?;
            println!("checkpoint {}", out.checkpoint.display());
            println!("test mean AUC {:.4}", out.test_report.mean_auc);
        }
        Command::Zeroshot { checkpoint } => {
            let (report, path) = pipeline::cmd_zeroshot(&cfg, checkpoint.as_deref())?;
            println!("{} mean AUC {:.4}", path.display(), report.mean_auc);
        }
        Command::Fewshot { checkpoint, shots } => {
            let out = pipeline::cmd_fewshot(&cfg, &checkpoint, &shots)?;
            print!("{}", out.curve.to_csv());
        }
        Command::Eval { checkpoint, prompts } => {
            let (report, path) = pipeline::cmd_eval(&cfg, &checkpoint, prompts)?;
            println!("{} mean AUC {:.4}", path.display(), report.mean_auc);
        }
        Command::Report {
            reports,
            baselines,
            no_baselines,
            reference,
        } => {
            let mut loaded = pipeline::load_reports(&reports)?;
            if reference {
                loaded.push(("reference".into(), eval::reference_report()));
            }
            let which = match (&baselines, no_baselines) {
                (Some(p), _) => Baselines::File(p),
                (None, true) => Baselines::None,
                (None, false) => Baselines::Bundled,
            };
            for p in pipeline::cmd_report(&cfg, &loaded, which)? {
                println!("{}", p.display());
            }
        }
        Command::Fixture { images } => {
            let spec = FixtureSpec {
                n_images: images,
                seed: cfg.seed,
                ..FixtureSpec::default()
            };
            generate(&spec).write_to(&cfg.data_root)?;
            println!("fixture written to {}", cfg.data_root.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

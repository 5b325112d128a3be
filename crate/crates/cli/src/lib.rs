//! The `memelens` command line: split, train, evaluate, cross-validate,
//! augment and serve, all driven by one [`RunConfig`].
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 invalid input
//! data, 3 runtime failure.

pub mod commands;
pub mod config;
pub mod error;
pub mod model_dir;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use memelens_core::corpus::Split;
use memelens_core::synthetic::SyntheticConfig;

pub use config::{Overrides, RunConfig};
pub use error::{CliError, CliResult};
pub use model_dir::{ModelKind, TrainedModel};

#[derive(Debug, Parser)]
#[command(name = "memelens", version, about = "Interpretable hateful-meme classification")]
pub struct Cli {
    #[command(flatten)]
    pub globals: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Run settings; flags beat environment variables, which beat the config
/// file.
#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration
    #[arg(long, global = true, env = "MEMELENS_CONFIG")]
    pub config: Option<PathBuf>,
    /// Meme records (JSON lines)
    #[arg(long, global = true, env = "MEMELENS_MEMES")]
    pub memes: Option<PathBuf>,
    /// Annotation bundles (JSON lines)
    #[arg(long, global = true, env = "MEMELENS_ANNOTATIONS")]
    pub annotations: Option<PathBuf>,
    /// Lexicon directory (bundled lexicons if unset)
    #[arg(long, global = true, env = "MEMELENS_LEXICONS")]
    pub lexicons: Option<PathBuf>,
    /// Model directory written by `train` and read by the other commands
    #[arg(long, global = true, env = "MEMELENS_MODEL_DIR")]
    pub model_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "MEMELENS_SPLIT_SEED")]
    pub split_seed: Option<u64>,
    /// Classification and flagging threshold
    #[arg(long, global = true, env = "MEMELENS_THRESHOLD")]
    pub threshold: Option<f64>,
    /// Features listed per augmented meme
    #[arg(long, global = true, env = "MEMELENS_TOP_K")]
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalSplit {
    Validation,
    Test,
}

impl From<EvalSplit> for Split {
    fn from(s: EvalSplit) -> Self {
        match s {
            EvalSplit::Validation => Split::Validation,
            EvalSplit::Test => Split::Test,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assign the seeded train/validation/test split
    Split {
        /// Write the memes file with split assignments here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a model on the train split and report validation metrics
    Train {
        #[arg(value_enum)]
        kind: ModelKind,
    },
    /// Score a trained model on a held-out split
    Evaluate {
        #[arg(long, value_enum, default_value = "validation")]
        split: EvalSplit,
        /// Also write the report as JSON
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Stratified k-fold cross-validation
    Cv {
        #[arg(long, value_enum, default_value = "gbdt")]
        kind: ModelKind,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Export scores and top features for every flagged meme
    Augment {
        #[arg(long)]
        output: PathBuf,
    },
    /// Run the moderator review service
    Serve {
        #[arg(long, env = "MEMELENS_LISTEN", default_value = "127.0.0.1:8080")]
        listen: String,
        /// Label log (default: labels.jsonl in the model directory)
        #[arg(long, env = "MEMELENS_LABELS")]
        labels: Option<PathBuf>,
        /// Directory meme image paths are relative to (default: the memes file's directory)
        #[arg(long, env = "MEMELENS_IMAGE_ROOT")]
        image_root: Option<PathBuf>,
    },
    /// Write a synthetic corpus with planted signals
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 400)]
        n_memes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

impl GlobalArgs {
    pub fn run_config(&self) -> CliResult<RunConfig> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        Ok(base.apply(Overrides {
            memes: self.memes.clone(),
            annotations: self.annotations.clone(),
            lexicons: self.lexicons.clone(),
            model_dir: self.model_dir.clone(),
            split_seed: self.split_seed,
            threshold: self.threshold,
            top_k: self.top_k,
        }))
    }
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    if let Command::GenSynthetic {
        out: dir,
        n_memes,
        seed,
    } = &cli.command
    {
        let synthetic = SyntheticConfig {
            n_memes: *n_memes,
            seed: *seed,
            ..SyntheticConfig::default()
        };
        return commands::gen_synthetic(dir, &synthetic, out);
    }
    let config = cli.globals.run_config()?;
    match cli.command {
        Command::Split { out: path } => commands::split(&config, path.as_deref(), out),
        Command::Train { kind } => commands::train(&config, kind, out).map(drop),
        Command::Evaluate { split, output } => {
            commands::evaluate(&config, split.into(), output.as_deref(), out).map(drop)
        }
        Command::Cv { kind, folds, output } => {
            commands::cross_validation(&config, kind, folds, output.as_deref(), out).map(drop)
        }
        Command::Augment { output } => commands::augment(&config, &output, out).map(drop),
        Command::Serve {
            listen,
            labels,
            image_root,
        } => commands::serve(
            &config,
            commands::ServeOptions {
                listen,
                labels,
                image_root,
            },
            out,
        ),
        Command::GenSynthetic { .. } => unreachable!("handled above"),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    match execute(cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["memelens"]), 1);
        assert_eq!(run(["memelens", "train", "svm"]), 1);
        assert_eq!(run(["memelens", "--help"]), 0);
    }

    #[test]
    fn flags_override_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "threshold = 0.3\nsplit_seed = 4\n").unwrap();
        let cli = Cli::try_parse_from([
            "memelens",
            "evaluate",
            "--config",
            path.to_str().unwrap(),
            "--threshold",
            "0.7",
        ])
        .unwrap();
        let config = cli.globals.run_config().unwrap();
        assert_eq!(config.threshold, 0.7);
        assert_eq!(config.split_seed, 4);
        assert_eq!(config.model_dir, dir.path().join("model"));
    }
}

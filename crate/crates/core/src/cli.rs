//! Command-line front end. The `gatrec` binary is a thin wrapper over
//! [`run_command`].
//!
//! Exit codes: 0 success, 1 invalid configuration, 2 usage error, 3 any
//! other failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, Overrides, RunConfig};
use crate::evaluator::write_report_text;
use crate::model::TrainedModel;
use crate::pipeline::{recommend, Pipeline, PipelineError, Scope};

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gatrec", version, about = "Graph-attention recommender with text-initialized features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "run.conf")]
    config: PathBuf,
    /// Never contact remote services; use the offline catalog and fallback providers.
    #[arg(long, global = true)]
    offline: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Weight of the cosine-alignment loss term.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Comma-separated cutoffs, e.g. `5,10,20`.
    #[arg(long, global = true, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Random node features and alpha = 0.
    #[arg(long, global = true)]
    ablate: bool,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse ratings, resolve item metadata and write item texts.
    Ingest,
    /// Build user profiles.
    Profile(ScopeArg),
    /// Build the node-feature embedding table.
    Embed(ScopeArg),
    /// Train a model and write its checkpoint.
    Train(ScopeArg),
    /// Evaluate a fold's checkpoint on its test split.
    Evaluate {
        #[arg(long, default_value_t = 0)]
        fold: usize,
    },
    /// Print a user's top-K unseen items as `rank item_id score`.
    Recommend {
        #[arg(long)]
        user: u64,
        #[command(flatten)]
        scope: ScopeArg,
    },
    /// Ingest, profile, embed, then train and evaluate every fold.
    Pipeline,
}

#[derive(Debug, Args)]
struct ScopeArg {
    /// Restrict to one fold's training split instead of the full dataset.
    #[arg(long)]
    fold: Option<usize>,
}

impl ScopeArg {
    fn scope(&self) -> Scope {
        self.fold.map_or(Scope::Full, Scope::Fold)
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Normal output goes to `out`, diagnostics to stderr.
pub fn run_command<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();

    match execute(&cli, out) {
        Ok(()) => 0,
        Err(PipelineError::Config(e)) => {
            eprintln!("gatrec: {e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("gatrec: error: {e}");
            EXIT_FAILURE
        }
    }
}

fn load_config(g: &GlobalArgs) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::load(&g.config)?;
    cfg.apply(&Overrides {
        offline: g.offline,
        seed: g.seed,
        alpha: g.alpha,
        k_values: g.k.clone(),
        ablate: g.ablate,
        out_dir: g.out.clone(),
    });
    Ok(cfg)
}

fn io(e: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), PipelineError> {
    let cfg = load_config(&cli.global)?;
    let pipeline = Pipeline::from_config(cfg)?;
    match &cli.command {
        Command::Ingest => {
            let ds = pipeline.ingest()?;
            let path = pipeline.write_item_texts(&ds)?;
            writeln!(
                out,
                "interactions={}\nusers={}\nitems={}\nitem_texts={}",
                ds.interactions.len(),
                ds.user_ids.len(),
                ds.item_ids.len(),
                path.display()
            )
            .map_err(io)?;
        }
        Command::Profile(s) => {
            let ds = pipeline.ingest()?;
            let (train, _) = pipeline.scoped(&ds, s.scope())?;
            let profiles = pipeline.profiles(&train, s.scope())?;
            let remote = profiles
                .values()
                .filter(|p| p.provenance == crate::profiler::Provenance::Remote)
                .count();
            writeln!(out, "profiles={}\nremote={remote}\nfallback={}", profiles.len(), profiles.len() - remote)
                .map_err(io)?;
        }
        Command::Embed(s) => {
            let ds = pipeline.ingest()?;
            let (train, _) = pipeline.scoped(&ds, s.scope())?;
            let profiles = pipeline.profiles(&train, s.scope())?;
            let table = pipeline.embeddings(&train, &profiles, s.scope())?;
            writeln!(
                out,
                "dim={}\nusers={}\nitems={}",
                table.dim,
                table.user_vectors.len(),
                table.item_vectors.len()
            )
            .map_err(io)?;
        }
        Command::Train(s) => {
            let ds = pipeline.ingest()?;
            let model = pipeline.train(&ds, s.scope())?;
            let m = &model.meta;
            writeln!(
                out,
                "checkpoint={}\nepochs={}\nbest_epoch={}\nbest_val_loss={}\nfinal_train_loss={}",
                pipeline.checkpoint_path(s.scope()).display(),
                m.epochs_run,
                m.best_epoch,
                m.best_val_loss,
                m.final_train_loss
            )
            .map_err(io)?;
        }
        Command::Evaluate { fold } => {
            let scope = Scope::Fold(*fold);
            let ds = pipeline.ingest()?;
            let model = load_model(&pipeline, scope)?;
            let (train, test) = pipeline.scoped(&ds, scope)?;
            let (all, cold) = pipeline.evaluate(&model, &train.interactions, &test, ds.item_ids.len(), scope)?;
            let label = fold.to_string();
            write_report_text(&mut *out, &label, &all).map_err(io)?;
            write_report_text(&mut *out, &label, &cold).map_err(io)?;
        }
        Command::Recommend { user, scope } => {
            let scope = scope.scope();
            let ds = pipeline.ingest()?;
            let model = load_model(&pipeline, scope)?;
            let (train, _) = pipeline.scoped(&ds, scope)?;
            let k = cli.global.k.as_ref().and_then(|k| k.iter().max().copied()).unwrap_or(10);
            for (rank, (item, score)) in recommend(&model, &train.interactions, *user, k)?.iter().enumerate() {
                writeln!(out, "{} {item} {score:.6}", rank + 1).map_err(io)?;
            }
        }
        Command::Pipeline => {
            let report = pipeline.run()?;
            for f in &report.folds {
                write_report_text(&mut *out, &format!("fold {}", f.fold), &f.all).map_err(io)?;
            }
            write_report_text(&mut *out, "mean", &report.mean_all).map_err(io)?;
            write_report_text(&mut *out, "mean", &report.mean_cold).map_err(io)?;
        }
    }
    Ok(())
}

fn load_model(pipeline: &Pipeline, scope: Scope) -> Result<TrainedModel, PipelineError> {
    let path = pipeline.checkpoint_path(scope);
    if !path.exists() {
        let hint = match scope {
            Scope::Full => "train".to_string(),
            Scope::Fold(k) => format!("train --fold {k}"),
        };
        return Err(PipelineError::Usage(format!(
            "no checkpoint at {}; run `{hint}` first",
            path.display()
        )));
    }
    Ok(TrainedModel::load(&path)?)
}

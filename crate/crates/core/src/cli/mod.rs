//! Command-line front end. Every subcommand reads the same TOML config;
//! flags override individual fields, and unspecified paths default to the
//! stage layout under the run directory.

mod config;
mod pipeline;
mod projection;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{
    BalanceConfig, BinaryMode, DataConfig, ExplainConfig, ExplainMethod, ReportConfig, RunConfig, Strategy, Task,
};
pub use pipeline::{
    clf_train, evaluate, explain, gan_train, generate, parse_costs, preprocess, report, run_pipeline, Ctx, Layout,
    PlanSource, PreprocessOutput, Stage,
};
pub use projection::{pca_2d, Projection};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "nids", version, about = "GAN rebalancing, cost-sensitive CNN and explanations for NSL-KDD")]
pub struct Cli {
    /// Run configuration (TOML). Missing fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; per-stage seeds are derived from it.
    #[arg(long, global = true, env = "NIDS_SEED")]
    pub seed: Option<u64>,
    /// Run directory holding one sub-directory per stage.
    #[arg(long = "run-dir", global = true, env = "NIDS_OUT")]
    pub run_dir: Option<PathBuf>,
    /// Suppress progress output.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, encode and standardize the train/test files.
    Preprocess {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Train the conditional GAN on the encoded training matrix.
    GanTrain {
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Rebalance the training matrix.
    Generate {
        #[arg(long)]
        data: Option<PathBuf>,
        /// GAN checkpoint (sc-cgan strategy only).
        #[arg(long)]
        model: Option<PathBuf>,
        /// `auto` or a JSON file with per-class counts.
        #[arg(long, default_value = "auto")]
        plan: String,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Train the cost-sensitive classifier.
    ClfTrain {
        /// Encoded training matrix, used when `--augmented` is absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Rebalanced matrix from `generate`.
        #[arg(long)]
        augmented: Option<PathBuf>,
        /// `inverse-frequency`, `uniform`, or a JSON file with one weight per class.
        #[arg(long)]
        costs: Option<String>,
        #[arg(long, value_enum)]
        task: Option<TaskArg>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Score a classifier on the test matrix.
    Evaluate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        /// Output report JSON; the table and predictions are written beside it.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Explain one test row with LIME or Kernel SHAP.
    Explain {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Matrix holding the row to explain (default: the test matrix).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Matrix the background rows are drawn from (default: the training matrix).
        #[arg(long)]
        background_from: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long)]
        sample: Option<usize>,
        /// Number of background rows.
        #[arg(long)]
        background: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Summarize a run directory.
    Report {
        #[command(flatten)]
        out: OutArg,
    },
    /// Run several stages in order.
    Run {
        /// Comma-separated stage names, or `all`.
        #[arg(long, default_value = "all")]
        stages: String,
    },
    /// Print the fully resolved config.
    Config,
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Output directory (default: `<run-dir>/<stage>`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum StrategyArg {
    ScCgan,
    Ros,
    Smote,
    None,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TaskArg {
    Five,
    Binary,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MethodArg {
    Lime,
    Shap,
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Validation(_) | Error::Config(_) => 2,
        Error::MissingArtifact { .. } => 3,
        _ => 1,
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.run_dir {
        cfg.out_dir = d.clone();
    }
    Ok(cfg)
}

fn or(p: &Option<PathBuf>, default: PathBuf) -> PathBuf {
    p.clone().unwrap_or(default)
}

fn out_dir(out: &OutArg, layout: &Layout, stage: Stage) -> PathBuf {
    or(&out.out, layout.dir(stage))
}

/// Parses arguments and runs one command.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = resolve(&cli)?;
    // flag overrides land in the config so the snapshot and hash reflect them
    match &cli.command {
        Command::Preprocess { train, test, .. } => {
            cfg.data.train = train.clone().or(cfg.data.train);
            cfg.data.test = test.clone().or(cfg.data.test);
        }
        Command::Generate { strategy: Some(s), .. } => {
            cfg.balance.strategy = match s {
                StrategyArg::ScCgan => Strategy::ScCgan,
                StrategyArg::Ros => Strategy::Ros,
                StrategyArg::Smote => Strategy::Smote,
                StrategyArg::None => Strategy::None,
            }
        }
        Command::ClfTrain { costs, task, .. } => {
            if let Some(c) = costs {
                cfg.classifier_train.cost_scheme = parse_costs(c)?;
            }
            if let Some(t) = task {
                cfg.task = match t {
                    TaskArg::Five => Task::Five,
                    TaskArg::Binary => Task::Binary,
                };
            }
        }
        Command::Explain { method, sample, background, .. } => {
            if let Some(m) = method {
                cfg.explain.method = match m {
                    MethodArg::Lime => ExplainMethod::Lime,
                    MethodArg::Shap => ExplainMethod::Shap,
                };
            }
            cfg.explain.sample = sample.unwrap_or(cfg.explain.sample);
            cfg.explain.background = background.unwrap_or(cfg.explain.background);
        }
        _ => {}
    }
    let layout = Layout::new(&cfg.out_dir);
    let mut ctx = Ctx::new(cfg);
    ctx.verbose = !cli.quiet;
    let need = |p: &Option<PathBuf>, flag: &str| -> Result<PathBuf> {
        p.clone().ok_or_else(|| Error::Validation(vec![format!("`--{flag}` (or `data.{flag}` in the config) is required")]))
    };

    match &cli.command {
        Command::Preprocess { out, .. } => {
            let (train, test) = (need(&ctx.cfg.data.train, "train")?, need(&ctx.cfg.data.test, "test")?);
            preprocess(&ctx, &train, &test, &out_dir(out, &layout, Stage::Preprocess))?;
        }
        Command::GanTrain { data, out } => {
            gan_train(&ctx, &or(data, layout.train_matrix()), &out_dir(out, &layout, Stage::GanTrain))?;
        }
        Command::Generate { data, model, plan, out, .. } => {
            let plan = if plan == "auto" { PlanSource::Auto } else { PlanSource::File(PathBuf::from(plan)) };
            let model = or(model, layout.gan());
            let model = (ctx.cfg.balance.strategy == Strategy::ScCgan).then_some(model.as_path());
            generate(&ctx, &or(data, layout.train_matrix()), model, &plan, &out_dir(out, &layout, Stage::Generate))?;
        }
        Command::ClfTrain { data, augmented, out, .. } => {
            let augmented = augmented.clone().or_else(|| {
                let p = layout.balanced();
                (data.is_none() && p.is_file()).then_some(p)
            });
            let data = or(data, layout.train_matrix());
            clf_train(&ctx, &data, augmented.as_deref(), &out_dir(out, &layout, Stage::ClfTrain))?;
        }
        Command::Evaluate { model, test, report } => {
            evaluate(&ctx, &or(model, layout.classifier()), &or(test, layout.test_matrix()), &or(report, layout.eval_report()))?;
        }
        Command::Explain { model, data, background_from, out, .. } => {
            explain(
                &ctx,
                &or(model, layout.classifier()),
                &or(data, layout.test_matrix()),
                &or(background_from, layout.train_matrix()),
                &out_dir(out, &layout, Stage::Explain),
            )?;
        }
        Command::Report { out } => {
            report(&ctx, &layout, &out_dir(out, &layout, Stage::Report))?;
        }
        Command::Run { stages } => {
            let stages = Stage::parse_list(stages)?;
            run_pipeline(&ctx, &stages)?;
        }
        Command::Config => print!("# config_hash = \"{}\"\n{}", ctx.hash, ctx.cfg.to_toml()?),
    }
    Ok(())
}

/// Entry point shared by the binary: returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}


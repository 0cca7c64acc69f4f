use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use padd::data::{read_dataset, split, subsample_target, LabeledDataset};
use padd::experiments::{
    pretrain_on, report, run_experiment, source_splits, subsample_seed, target_splits,
    write_splits, ExperimentConfig, ReportFormat, ResultTable,
};
use padd::hpo::{derive_seed, search, SearchSpace};
use padd::model::{read_checkpoint, write_checkpoint, Network, Regime};
use padd::trainer::{adapt, evaluate, Hyperparams, TrainData};
use padd::Result;

#[derive(Parser)]
#[command(
    name = "padd",
    version,
    about = "Prompt-tuned test-time adaptation of a miniature deepfake detector"
)]
struct Cli {
    /// Master seed; overrides `seed` from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "padd-out")]
    out: PathBuf,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset file replacing the synthetic corpus of the command.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Print per-epoch and per-cell progress.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the source and target corpora as dataset files under <out>/data.
    GenerateData,
    /// Pretrain on the source corpus (or --dataset) and save <out>/pretrained.padd.
    Pretrain,
    /// Adapt a checkpoint to a target corpus.
    Adapt {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "A")]
        regime: Regime,
        /// Training-set size drawn from the target train split.
        #[arg(long, default_value_t = 50)]
        size: usize,
        /// Prompt length; defaults to the config's adapt.n_p.
        #[arg(long)]
        n_p: Option<usize>,
        /// Index of the configured target used when --dataset is absent.
        #[arg(long, default_value_t = 0)]
        target: usize,
    },
    /// EER of a checkpoint on --dataset (default: the source eval split).
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Random search for one regime; writes <out>/trials.csv.
    Hpo {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "A")]
        regime: Regime,
        #[arg(long, default_value_t = 50)]
        size: usize,
        #[arg(long)]
        budget: Option<usize>,
        /// Search-space preset (w2v, wsp, desk); defaults to the config's space.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, default_value_t = 0)]
        target: usize,
    },
    /// Prompt lengths 1, 5, 10, 100 for modes A, B and C.
    AblatePromptLength,
    /// Training-set sizes 10, 50, 100, 1000.
    AblateSampleSize,
    /// Full grid from the config.
    Run,
    /// Render a results CSV.
    Report {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: String,
    },
}

struct Ctx {
    cfg: ExperimentConfig,
    out: PathBuf,
    dataset: Option<PathBuf>,
    verbose: bool,
}

impl Ctx {
    fn log(&self) -> Option<Box<dyn Write>> {
        self.verbose
            .then(|| Box::new(io::stdout()) as Box<dyn Write>)
    }

    fn net(&self) -> Result<Network> {
        Network::new(self.cfg.model.clone())
    }

    fn dataset(&self) -> Result<Option<LabeledDataset>> {
        self.dataset.as_ref().map(read_dataset).transpose()
    }

    fn target(&self, index: usize) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
        match self.dataset()? {
            Some(pool) => split(&pool, self.cfg.splits, derive_seed(self.cfg.seed, 200)),
            None => target_splits(&self.cfg, index),
        }
    }

    fn target_name(&self, index: usize) -> String {
        match (&self.dataset, self.cfg.targets.get(index)) {
            (Some(p), _) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            (None, Some(t)) => t.name.clone(),
            (None, None) => String::new(),
        }
    }
}

fn write_table(out: &Path, table: &ResultTable) -> Result<()> {
    print!("{}", table.to_csv());
    fs::write(out.join("results.csv"), table.to_csv())?;
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let ctx = Ctx {
        cfg,
        out: cli.out,
        dataset: cli.dataset,
        verbose: cli.verbose,
    };
    fs::create_dir_all(&ctx.out)?;
    let cfg = &ctx.cfg;

    match cli.command {
        Command::GenerateData => {
            let data = ctx.out.join("data");
            write_splits(&data, "source", &source_splits(cfg)?)?;
            for (i, t) in cfg.targets.iter().enumerate() {
                write_splits(&data, &t.name, &target_splits(cfg, i)?)?;
            }
            println!("wrote {}", data.display());
        }
        Command::Pretrain => {
            let source = match ctx.dataset()? {
                Some(pool) => split(&pool, cfg.splits, derive_seed(cfg.seed, 2))?,
                None => source_splits(cfg)?,
            };
            let mut log = ctx.log();
            let pre = pretrain_on(cfg, &source, &ctx.out, log.as_deref_mut())?;
            println!("source_eval_eer={:.6}", pre.source_eval_eer);
        }
        Command::Adapt {
            checkpoint,
            regime,
            size,
            n_p,
            target,
        } => {
            let net = ctx.net()?;
            let reg = read_checkpoint(&checkpoint)?;
            let (tr, dv, ev) = ctx.target(target)?;
            let sub = subsample_target(
                &tr,
                size,
                subsample_seed(cfg, &ctx.target_name(target), size),
            )?;
            let hp = Hyperparams {
                n_p: n_p.unwrap_or(cfg.adapt.n_p),
                ..cfg.adapt
            };
            let mut log = ctx.log();
            let data = TrainData {
                train: &sub,
                dev: &dv,
            };
            let r = adapt(&net, &reg, regime, data, &hp, cfg.seed, log.as_deref_mut())?;
            let eer = evaluate(&net, &r.best_registry, &ev)?.eer;
            write_checkpoint(&r.best_registry, ctx.out.join("adapted.padd"))?;
            println!(
                "regime={regime} best_epoch={} dev_eer={:.6} eval_eer={eer:.6}",
                r.best_epoch, r.best_dev_eer
            );
        }
        Command::Eval { checkpoint } => {
            let net = ctx.net()?;
            let reg = read_checkpoint(&checkpoint)?;
            let ds = match ctx.dataset()? {
                Some(ds) => ds,
                None => source_splits(cfg)?.2,
            };
            let r = evaluate(&net, &reg, &ds)?;
            println!(
                "eer={:.6} threshold={:.6} n={}",
                r.eer,
                r.threshold,
                ds.len()
            );
        }
        Command::Hpo {
            checkpoint,
            regime,
            size,
            budget,
            preset,
            target,
        } => {
            let net = ctx.net()?;
            let reg = read_checkpoint(&checkpoint)?;
            let (tr, dv, _) = ctx.target(target)?;
            let sub = subsample_target(
                &tr,
                size,
                subsample_seed(cfg, &ctx.target_name(target), size),
            )?;
            let space = match preset {
                Some(p) => SearchSpace::preset(&p)?,
                None => cfg.search.clone(),
            };
            let data = TrainData {
                train: &sub,
                dev: &dv,
            };
            let objective = |hp: &Hyperparams, seed: u64| {
                adapt(&net, &reg, regime, data, hp, seed, None).map(|r| r.best_dev_eer)
            };
            let found = search(
                &space,
                budget.unwrap_or(cfg.hpo_budget),
                &cfg.adapt,
                objective,
                cfg.seed,
            )?;
            fs::write(ctx.out.join("trials.csv"), found.trial_log())?;
            if ctx.verbose {
                print!("{}", found.trial_log());
            }
            let b = found.best;
            println!(
                "best_trial={} dev_eer={:.6} eta={} lambda={} batch={} beta={}",
                found.best_trial, found.best_dev_eer, b.eta, b.lambda, b.batch, b.beta
            );
        }
        Command::AblatePromptLength => {
            let mut log = ctx.log();
            let table = run_experiment(
                &cfg.clone().prompt_length_ablation(),
                &ctx.out,
                log.as_deref_mut(),
            )?;
            write_table(&ctx.out, &table)?;
        }
        Command::AblateSampleSize => {
            let mut log = ctx.log();
            let table = run_experiment(
                &cfg.clone().sample_size_ablation(),
                &ctx.out,
                log.as_deref_mut(),
            )?;
            write_table(&ctx.out, &table)?;
        }
        Command::Run => {
            let mut log = ctx.log();
            let table = run_experiment(cfg, &ctx.out, log.as_deref_mut())?;
            write_table(&ctx.out, &table)?;
        }
        Command::Report { table, format } => {
            let format: ReportFormat = format.parse()?;
            let table = ResultTable::from_csv(&fs::read_to_string(table)?)?;
            print!("{}", report(&table, format)?);
        }
    }
    Ok(())
}

fn error_line(kind: &str, message: &str) -> String {
    format!("error kind={kind} message={message:?}")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_line("usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}

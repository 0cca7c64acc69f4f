use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::table::{ResultRow, ResultTable};
use crate::data::{split, subsample_target, synth_generate, write_dataset, LabeledDataset};
use crate::error::{Error, Result};
use crate::hpo::{derive_seed, search};
use crate::model::{count_params, write_checkpoint, Network, ParamRegistry, Regime};
use crate::trainer::{adapt, evaluate, prepare_registry, pretrain_source, Hyperparams, TrainData};

/// The pretrained detector and its source eval EER.
pub struct Pretrained {
    pub net: Network,
    pub registry: ParamRegistry,
    pub source_eval_eer: f64,
}

/// Target splits with the training split subsampled to one size.
pub struct TargetData<'a> {
    pub name: &'a str,
    pub train: &'a LabeledDataset,
    pub dev: &'a LabeledDataset,
    pub eval: &'a LabeledDataset,
}

/// Outcome of one (regime, target, size, n_p) cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub row: ResultRow,
    /// `(seed, dev_eer, eval_eer)` per completed run.
    pub runs: Vec<(u64, f64, f64)>,
    pub errors: Vec<String>,
    pub trial_log: Option<String>,
}

fn name_hash(s: &str) -> u64 {
    // FNV-1a; keeps per-cell seeds stable when the grid changes.
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn cell_name(regime: Regime, target: &str, size: usize, n_p: usize) -> String {
    format!("{target}_{size}_{regime}_{n_p}")
}

/// Runs HPO on dev and then `cfg.n_seeds` adaptations at the best setting.
/// Zero-shot cells evaluate the pretrained model once per seed slot.
pub fn run_cell(
    cfg: &ExperimentConfig,
    pre: &Pretrained,
    target: &TargetData<'_>,
    regime: Regime,
    n_p: usize,
) -> Result<CellResult> {
    let size = target.train.len();
    let name = cell_name(regime, target.name, size, n_p);
    let cell_seed = derive_seed(cfg.seed, name_hash(&name));
    let base = Hyperparams { n_p, ..cfg.adapt };
    let reg = prepare_registry(
        &pre.net,
        &pre.registry,
        regime,
        target.train,
        n_p.max(1),
        cell_seed,
    )?;
    let count = count_params(&reg, regime.mode, regime.with_prompt)?;
    let mut row = ResultRow {
        regime,
        target: target.name.to_owned(),
        size,
        n_p,
        mean_eer: f64::NAN,
        std_eer: f64::NAN,
        n_seeds: 0,
        params: count.count,
        ratio: count.ratio,
    };

    if regime.is_zero_shot() {
        let eer = evaluate(&pre.net, &pre.registry, target.eval)?.eer;
        let runs = (0..cfg.n_seeds as u64)
            .map(|k| (derive_seed(cell_seed, k), f64::NAN, eer))
            .collect();
        row.mean_eer = eer;
        row.std_eer = 0.0;
        row.n_seeds = cfg.n_seeds;
        return Ok(CellResult {
            row,
            runs,
            errors: Vec::new(),
            trial_log: None,
        });
    }

    let data = TrainData {
        train: target.train,
        dev: target.dev,
    };
    let objective = |hp: &Hyperparams, seed: u64| {
        adapt(&pre.net, &pre.registry, regime, data, hp, seed, None).map(|r| r.best_dev_eer)
    };
    let found = search(
        &cfg.search,
        cfg.hpo_budget,
        &base,
        objective,
        derive_seed(cell_seed, 0),
    )?;
    let mut runs = Vec::new();
    let mut errors = Vec::new();
    for k in 0..cfg.n_seeds as u64 {
        let seed = derive_seed(cell_seed, 1 + k);
        let outcome = adapt(
            &pre.net,
            &pre.registry,
            regime,
            data,
            &found.best,
            seed,
            None,
        )
        .and_then(|r| {
            Ok((
                r.best_dev_eer,
                evaluate(&pre.net, &r.best_registry, target.eval)?.eer,
            ))
        });
        match outcome {
            Ok((dev, eval)) => runs.push((seed, dev, eval)),
            Err(e) => errors.push(format!("seed {seed}: {e}")),
        }
    }
    let evals: Vec<f64> = runs.iter().map(|r| r.2).collect();
    (row.mean_eer, row.std_eer) = mean_std(&evals);
    row.n_seeds = runs.len();
    Ok(CellResult {
        row,
        runs,
        errors,
        trial_log: Some(found.trial_log()),
    })
}

fn persist_cell(dir: &Path, cell: &CellResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut seeds = String::from("seed,dev_eer,eval_eer\n");
    for (seed, dev, eval) in &cell.runs {
        let _ = writeln!(seeds, "{seed},{dev},{eval}");
    }
    fs::write(dir.join("seeds.csv"), seeds)?;
    if let Some(log) = &cell.trial_log {
        fs::write(dir.join("trials.csv"), log)?;
    }
    if !cell.errors.is_empty() {
        fs::write(dir.join("errors.txt"), cell.errors.join("\n") + "\n")?;
    }
    Ok(())
}

type Splits = (LabeledDataset, LabeledDataset, LabeledDataset);

/// Synthetic source corpus split into train/dev/eval.
pub fn source_splits(cfg: &ExperimentConfig) -> Result<Splits> {
    let src = &cfg.source;
    let pool = synth_generate(
        &src.domain,
        src.n_real,
        src.n_fake,
        derive_seed(cfg.seed, 1),
    )?;
    split(&pool, cfg.splits, derive_seed(cfg.seed, 2))
}

/// Synthetic corpus of target `index` split into train/dev/eval.
pub fn target_splits(cfg: &ExperimentConfig, index: usize) -> Result<Splits> {
    let spec = cfg
        .targets
        .get(index)
        .ok_or_else(|| Error::InvalidArgument(format!("no target with index {index}")))?;
    let domain = spec.domain(&cfg.source.domain)?;
    let pool = synth_generate(
        &domain,
        spec.n_real,
        spec.n_fake,
        derive_seed(cfg.seed, 100 + index as u64),
    )?;
    split(&pool, cfg.splits, derive_seed(cfg.seed, 200 + index as u64))
}

/// Seed of the training subsample of `target` at `size`.
pub fn subsample_seed(cfg: &ExperimentConfig, target: &str, size: usize) -> u64 {
    derive_seed(cfg.seed, name_hash(&format!("{target}:{size}")))
}

/// Writes `<dir>/<stem>_{train,dev,eval}.pdds`.
pub fn write_splits(dir: &Path, stem: &str, (tr, dv, ev): &Splits) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (part, name) in [tr, dv, ev].into_iter().zip(["train", "dev", "eval"]) {
        write_dataset(part, dir.join(format!("{stem}_{name}.pdds")))?;
    }
    Ok(())
}

/// Pretrains on given source splits and saves `pretrained.padd` and
/// `pretrain.log` under `out`.
pub fn pretrain_on(
    cfg: &ExperimentConfig,
    source: &Splits,
    out: &Path,
    log: Option<&mut (dyn Write + '_)>,
) -> Result<Pretrained> {
    fs::create_dir_all(out)?;
    let (tr, dv, ev) = source;
    let mut epochs = Vec::new();
    let (net, result) = pretrain_source(
        &cfg.model,
        TrainData { train: tr, dev: dv },
        &cfg.pretrain,
        derive_seed(cfg.seed, 3),
        Some(&mut epochs),
    )?;
    if let Some(w) = log {
        w.write_all(&epochs)?;
    }
    fs::write(out.join("pretrain.log"), &epochs)?;
    write_checkpoint(&result.best_registry, out.join("pretrained.padd"))?;
    let source_eval_eer = evaluate(&net, &result.best_registry, ev)?.eer;
    fs::write(
        out.join("source_eval_eer.txt"),
        format!("{source_eval_eer}\n"),
    )?;
    Ok(Pretrained {
        net,
        registry: result.best_registry,
        source_eval_eer,
    })
}

/// Full protocol: source generation and pretraining, then every
/// (target, size, regime, n_p) cell. Everything is written under `out`;
/// the table goes to `out/results.csv` and `out/results.md`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out: impl AsRef<Path>,
    mut log: Option<&mut (dyn Write + '_)>,
) -> Result<ResultTable> {
    cfg.validate()?;
    let out = out.as_ref();
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    let data_dir = out.join("data");
    let source = source_splits(cfg)?;
    write_splits(&data_dir, "source", &source)?;
    let pre = pretrain_on(cfg, &source, out, log.as_deref_mut())?;

    let mut regimes = cfg.regimes.clone();
    regimes.sort_by_key(|r| r.sort_key());
    regimes.dedup();
    let cells_dir = out.join("cells");
    let mut rows = Vec::new();
    for (ti, spec) in cfg.targets.iter().enumerate() {
        let splits = target_splits(cfg, ti)?;
        write_splits(&data_dir, &spec.name, &splits)?;
        let (tr, dv, ev) = &splits;
        for &size in &cfg.sizes {
            let sub = subsample_target(tr, size, subsample_seed(cfg, &spec.name, size))?;
            write_dataset(
                &sub,
                data_dir.join(format!("{}_train{size}.pdds", spec.name)),
            )?;
            let target = TargetData {
                name: &spec.name,
                train: &sub,
                dev: dv,
                eval: ev,
            };
            for &regime in &regimes {
                let lengths = if regime.with_prompt {
                    cfg.prompt_lengths.clone()
                } else {
                    vec![0]
                };
                for n_p in lengths {
                    let name = cell_name(regime, &spec.name, size, n_p);
                    let cell = match run_cell(cfg, &pre, &target, regime, n_p) {
                        Ok(c) => c,
                        Err(e) => CellResult {
                            row: ResultRow {
                                regime,
                                target: spec.name.clone(),
                                size,
                                n_p,
                                mean_eer: f64::NAN,
                                std_eer: f64::NAN,
                                n_seeds: 0,
                                params: 0,
                                ratio: 0.0,
                            },
                            runs: Vec::new(),
                            errors: vec![e.to_string()],
                            trial_log: None,
                        },
                    };
                    persist_cell(&cells_dir.join(&name), &cell)?;
                    if let Some(w) = log.as_deref_mut() {
                        writeln!(
                            w,
                            "cell={name} mean_eer={:.6} std_eer={:.6} n_seeds={}",
                            cell.row.mean_eer, cell.row.std_eer, cell.row.n_seeds
                        )?;
                    }
                    rows.push(cell.row);
                }
            }
        }
    }
    let table = ResultTable::new(rows);
    fs::write(out.join("results.csv"), table.to_csv())?;
    fs::write(out.join("results.md"), table.to_markdown())?;
    Ok(table)
}

pub fn results_path(out: impl AsRef<Path>) -> PathBuf {
    out.as_ref().join("results.csv")
}

//! Pretrains the default detector on the source corpus, saves it, then
//! adapts the checkpoint to a shifted target in every regime.

use padd::data::subsample_target;
use padd::experiments::{pretrain_on, source_splits, target_splits, ExperimentConfig};
use padd::model::{read_checkpoint, Regime};
use padd::trainer::{adapt, evaluate, TrainData};

fn main() -> padd::Result<()> {
    let cfg = ExperimentConfig::default();
    let out = std::env::temp_dir().join("padd-pretrain-and-adapt");
    let pre = pretrain_on(&cfg, &source_splits(&cfg)?, &out, None)?;
    println!("source eval EER {:.3}", pre.source_eval_eer);

    let reg = read_checkpoint(out.join("pretrained.padd"))?;
    let (tr, dv, ev) = target_splits(&cfg, 0)?;
    let sub = subsample_target(&tr, 50, 1)?;
    println!(
        "zero-shot target EER {:.3}",
        evaluate(&pre.net, &reg, &ev)?.eer
    );
    for regime in Regime::all().into_iter().filter(|r| !r.is_zero_shot()) {
        let r = adapt(
            &pre.net,
            &reg,
            regime,
            TrainData {
                train: &sub,
                dev: &dv,
            },
            &cfg.adapt,
            7,
            None,
        )?;
        let eer = evaluate(&pre.net, &r.best_registry, &ev)?.eer;
        println!(
            "{regime:<7} best epoch {:>2}  dev {:.3}  eval {eer:.3}",
            r.best_epoch, r.best_dev_eer
        );
    }
    Ok(())
}

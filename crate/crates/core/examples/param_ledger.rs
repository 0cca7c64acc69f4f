//! Trainable-parameter counts of every tuning regime, for the two mirrored
//! registry sizes and the default desk model.

use padd::model::{build_model, count_params, init_prompt, ModelConfig, Regime};

fn ledger(name: &str, cfg: &ModelConfig, n_p: usize) -> padd::Result<()> {
    let (_, mut reg) = build_model(cfg, 0)?;
    reg.set_prompt(init_prompt(cfg.d, n_p, 0.0, 1.0, 0)?);
    println!(
        "{name}: d={} N_P={n_p}, {} network parameters",
        cfg.d,
        reg.base_param_count()
    );
    for regime in Regime::all() {
        let c = count_params(&reg, regime.mode, regime.with_prompt)?;
        println!(
            "  {:<7} {:>9}  {:>10.6}%",
            regime.to_string(),
            c.count,
            100.0 * c.ratio
        );
    }
    Ok(())
}

fn main() -> padd::Result<()> {
    ledger("w2v mirror", &ModelConfig::w2v_mirror(), 5)?;
    ledger("wsp mirror", &ModelConfig::wsp_mirror(), 5)?;
    ledger("default", &ModelConfig::default(), 5)
}

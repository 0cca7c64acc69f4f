//! Backward pass of a small detector against central finite differences.

use padd::data::{synth_generate, DomainConfig};
use padd::model::{
    build_model, init_prompt, trainable_params, ConvLayer, ModelConfig, ParamRegistry, Stage,
    TuningMode,
};
use padd::numerics::{finite_difference_grad, max_relative_error, Tensor};

fn main() -> padd::Result<()> {
    let cfg = ModelConfig {
        d: 8,
        n_layers: 2,
        n_heads: 2,
        conv: vec![ConvLayer::new(8, 8, 4), ConvLayer::new(2, 2, 8)],
        head_hidden: 6,
        ff_hidden: 12,
        delta: 64,
    };
    let (net, mut reg) = build_model(&cfg, 1)?;
    reg.set_prompt(init_prompt(cfg.d, 3, 0.0, 0.5, 2)?);
    let ds = synth_generate(&DomainConfig::source(cfg.delta), 2, 2, 3)?;
    let inputs = ds
        .waveforms()
        .iter()
        .map(|w| net.waveform_tensor(w))
        .collect::<padd::Result<Vec<Tensor>>>()?;
    let xs: Vec<&Tensor> = inputs.iter().collect();
    let labels = ds.labels();
    let weights = (1.0, 1.0);

    let trainable = trainable_params(&reg, TuningMode::C, true)?;
    let (loss, grads) =
        net.loss_and_grads(&reg, &trainable, Stage::Waveform, &xs, &labels, weights)?;
    println!("loss {loss:.6}");
    let loss_at = |r: &ParamRegistry| {
        net.batch_loss(r, Stage::Waveform, &xs, &labels, weights)
            .unwrap()
    };

    for (i, p) in reg.entries().iter().enumerate() {
        let numeric = finite_difference_grad(
            |v| {
                let mut r = reg.clone();
                r.entries_mut()[i].value = v.clone();
                loss_at(&r)
            },
            &p.value,
            1e-5,
        )?;
        let err = max_relative_error(
            grads.params[i].as_ref().expect("mode C trains everything"),
            &numeric,
        );
        println!(
            "{:<32} {:>6} values  rel err {err:.2e}",
            p.name,
            p.value.data().len()
        );
    }
    let numeric = finite_difference_grad(
        |v| {
            let mut r = reg.clone();
            *r.prompt_mut().unwrap().values_mut() = v.clone();
            loss_at(&r)
        },
        reg.prompt().unwrap().values(),
        1e-5,
    )?;
    let err = max_relative_error(grads.prompt.as_ref().unwrap(), &numeric);
    println!(
        "{:<32} {:>6} values  rel err {err:.2e}",
        "prompt",
        numeric.data().len()
    );
    Ok(())
}

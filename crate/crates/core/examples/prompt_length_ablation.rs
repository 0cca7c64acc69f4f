//! Prompt-length sweep on a tiny configuration, rendered as markdown.

use padd::data::{DomainConfig, GapSet};
use padd::experiments::{run_experiment, ExperimentConfig, TargetSpec};
use padd::model::{ConvLayer, ModelConfig};

fn main() -> padd::Result<()> {
    let mut cfg = ExperimentConfig {
        model: ModelConfig {
            d: 8,
            n_layers: 1,
            n_heads: 2,
            conv: vec![ConvLayer::new(16, 16, 8), ConvLayer::new(4, 4, 8)],
            head_hidden: 8,
            ff_hidden: 16,
            delta: 256,
        },
        n_seeds: 3,
        hpo_budget: 3,
        sizes: vec![10],
        ..Default::default()
    }
    .prompt_length_ablation();
    cfg.source.domain = DomainConfig::source(256);
    cfg.source.n_real = 40;
    cfg.source.n_fake = 40;
    cfg.targets = vec![TargetSpec {
        name: "shifted".into(),
        shift: 0.6,
        gaps: GapSet::ALL,
        n_real: 40,
        n_fake: 40,
    }];
    cfg.pretrain.epochs = 5;
    cfg.adapt.epochs = 5;
    let out = std::env::temp_dir().join("padd-prompt-length");
    let table = run_experiment(&cfg, &out, None)?;
    print!("{}", table.to_markdown());
    println!("artifacts under {}", out.display());
    Ok(())
}

//! Training-set size sweep with the experiment config loaded from TOML.

use padd::experiments::{report, run_experiment, ExperimentConfig, ReportFormat};

const CONFIG: &str = r#"
n_seeds = 2
hpo_budget = 2
regimes = ["A-noPT", "A", "B"]

[model]
d = 8
n_layers = 1
n_heads = 2
head_hidden = 8
ff_hidden = 16
delta = 256
conv = [{ kernel = 16, stride = 16, out_channels = 8 }, { kernel = 4, stride = 4, out_channels = 8 }]

[source]
n_real = 40
n_fake = 40

[source.domain]
delta = 256
base_freq_range = [0.01, 0.02]
noise_level = 0.05
artifact_kind = "harmonic-quantization"
artifact_strength = 0.6
shift = 0.0

[[targets]]
name = "shifted"
shift = 0.6
n_real = 500
n_fake = 1200

[pretrain]
epochs = 5

[adapt]
epochs = 3
"#;

fn main() -> padd::Result<()> {
    let cfg = ExperimentConfig::from_toml(CONFIG)?.sample_size_ablation();
    let out = std::env::temp_dir().join("padd-sample-size");
    let table = run_experiment(&cfg, &out, None)?;
    print!("{}", report(&table, ReportFormat::Csv)?);
    print!("{}", report(&table, ReportFormat::Markdown)?);
    Ok(())
}

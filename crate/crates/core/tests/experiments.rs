use std::time::Instant;

use padd::data::{DomainConfig, GapSet};
use padd::experiments::{
    report, run_experiment, ExperimentConfig, ReportFormat, ResultTable, TargetSpec, CSV_HEADER,
};
use padd::model::{ConvLayer, ModelConfig, Regime};

fn tiny() -> ExperimentConfig {
    let model = ModelConfig {
        d: 8,
        n_layers: 1,
        n_heads: 2,
        conv: vec![ConvLayer::new(16, 16, 8), ConvLayer::new(4, 4, 8)],
        head_hidden: 8,
        ff_hidden: 16,
        delta: 256,
    };
    let mut cfg = ExperimentConfig {
        model,
        n_seeds: 2,
        hpo_budget: 2,
        sizes: vec![10],
        ..Default::default()
    };
    cfg.source.domain = DomainConfig::source(256);
    cfg.source.n_real = 30;
    cfg.source.n_fake = 30;
    cfg.targets = vec![TargetSpec {
        name: "t".into(),
        shift: 0.6,
        gaps: GapSet::ALL,
        n_real: 30,
        n_fake: 30,
    }];
    cfg.pretrain.epochs = 3;
    cfg.adapt.epochs = 3;
    cfg
}

#[test]
fn zero_shot_only_has_zero_std() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        regimes: vec!["A-noPT".parse().unwrap()],
        ..tiny()
    };
    let table = run_experiment(&cfg, dir.path(), None).unwrap();
    assert_eq!(table.len(), 1);
    let r = &table.rows()[0];
    assert_eq!(r.std_eer, 0.0);
    assert_eq!((r.n_p, r.params, r.n_seeds), (0, 0, 2));
}

#[test]
fn tiny_grid_completes_and_matches_seed_logs() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let table = run_experiment(&tiny(), dir.path(), None).unwrap();
    assert!(start.elapsed().as_secs() < 120);
    assert_eq!(table.len(), 6);
    for row in table.rows() {
        assert_eq!(row.n_seeds, 2, "{}", row.regime);
        let cell = dir.path().join("cells").join(format!(
            "{}_{}_{}_{}",
            row.target, row.size, row.regime, row.n_p
        ));
        let seeds = std::fs::read_to_string(cell.join("seeds.csv")).unwrap();
        let evals: Vec<f64> = seeds
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect();
        let mean = evals.iter().sum::<f64>() / evals.len() as f64;
        let std =
            (evals.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / evals.len() as f64).sqrt();
        assert!((mean - row.mean_eer).abs() < 1e-12);
        assert!((std - row.std_eer).abs() < 1e-12);
        if !row.regime.is_zero_shot() {
            assert!(cell.join("trials.csv").exists());
        }
    }
    for file in [
        "results.csv",
        "results.md",
        "pretrained.padd",
        "pretrain.log",
        "data/t_train10.pdds",
    ] {
        assert!(dir.path().join(file).exists(), "{file}");
    }
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    let back = ResultTable::from_csv(&csv).unwrap();
    assert_eq!(report(&back, ReportFormat::Csv).unwrap(), csv);
}

#[test]
fn config_roundtrips_through_toml() {
    let cfg = tiny();
    let text = cfg.to_toml().unwrap();
    assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    assert!(ExperimentConfig::from_toml("n_seeds = 0").is_err());
    let partial = ExperimentConfig::from_toml("seed = 9\nregimes = [\"B\", \"C-noPT\"]").unwrap();
    assert_eq!(partial.seed, 9);
    assert_eq!(partial.regimes, vec![Regime::all()[3], Regime::all()[4]]);
}

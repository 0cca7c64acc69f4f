//! Source and shifted target corpora, written to and read back from the
//! binary dataset format.

use padd::data::{read_dataset, synth_generate, write_dataset, ArtifactKind, DomainConfig, GapSet};

fn rms_high_freq(w: &[f64]) -> f64 {
    (w.windows(2).map(|p| (p[1] - p[0]).powi(2)).sum::<f64>() / w.len() as f64).sqrt()
}

fn main() -> padd::Result<()> {
    let source = DomainConfig::source(2048);
    let dir = std::env::temp_dir().join("padd-synthetic-domains");
    for s in [0.0, 0.3, 0.6, 1.0] {
        let cfg = DomainConfig::shifted(&source, GapSet::ALL, s)?;
        let ds = synth_generate(&cfg, 20, 60, 7)?;
        let path = dir.join(format!("shift{s}.pdds"));
        std::fs::create_dir_all(&dir)?;
        write_dataset(&ds, &path)?;
        let back = read_dataset(&path)?;
        assert_eq!(back, ds);
        let c = back.class_counts();
        let hf = |label| {
            let v: Vec<f64> = back
                .samples()
                .iter()
                .filter(|x| x.label == label)
                .map(|x| rms_high_freq(&x.waveform))
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        println!(
            "s={s:.1} f0 {:.4}-{:.4} noise {:.3} fakes {:?} (ref {:?}) | {}/{} | diff-rms real {:.3} fake {:.3}",
            cfg.base_freq_range.0,
            cfg.base_freq_range.1,
            cfg.noise_level,
            cfg.artifact_kind,
            cfg.reference_artifact,
            c.n_real,
            c.n_fake,
            hf(padd::Label::Real),
            hf(padd::Label::Fake),
        );
    }
    for kind in ArtifactKind::ALL {
        let cfg = DomainConfig {
            artifact_kind: kind,
            ..DomainConfig::source(256)
        };
        let ds = synth_generate(&cfg, 0, 1, 3)?;
        let w = &ds.samples()[0].waveform;
        println!("{kind:?}: first samples {:.3?}", &w[..8]);
    }
    Ok(())
}

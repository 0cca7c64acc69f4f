//! DET points and the interpolated EER of a handful of scores.

use padd::lossmetrics::{class_balanced_weights, compute_eer, ClassCounts};
use padd::Label::{Fake, Real};

fn main() -> padd::Result<()> {
    let scores = [-2.1, -1.4, -0.3, 0.2, 0.2, 0.9, 1.3, 1.7, 2.4, 3.0];
    let labels = [Real, Real, Real, Fake, Real, Real, Fake, Fake, Fake, Fake];
    let r = compute_eer(&scores, &labels)?;
    println!("threshold    FAR    FRR");
    for p in &r.det {
        println!("{:>9.3} {:>6.3} {:>6.3}", p.threshold, p.far, p.frr);
    }
    println!("EER {:.4} at threshold {:.4}", r.eer, r.threshold);

    let counts = ClassCounts {
        n_real: 5,
        n_fake: 45,
    };
    for beta in [0.0, 0.9, 0.99, 0.999] {
        let (w_real, w_fake) = class_balanced_weights(counts, beta)?;
        println!("beta {beta:<6} weights real {w_real:.4} fake {w_fake:.4}");
    }
    Ok(())
}

//! Writes the bundled example panel to stdout.
//!
//! 500 units observed in 2000-2003. Nobody is treated in 2000-2002; in 2003
//! units at or above the cutoff 0 are treated. The outcome jumps by 1.5 at the
//! cutoff in every period and treatment adds 2.0, so the ATT is 2.0. The
//! running variable drifts a little between periods.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rddid::io::write_observations;
use rddid::Observation;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(2003);
    let drift = Normal::new(0.0, 0.05).unwrap();
    let noise = Normal::new(0.0, 0.4).unwrap();
    let fe = Normal::new(0.0, 0.8).unwrap();
    let mut obs = Vec::new();
    for i in 0..500 {
        let unit = format!("m{i:03}");
        let mut r: f64 = rng.random_range(-1.0..1.0);
        let alpha = fe.sample(&mut rng);
        for (k, period) in (2000..=2003).enumerate() {
            if k > 0 {
                r += drift.sample(&mut rng);
            }
            let r = (r * 1000.0).round() / 1000.0;
            let above = r >= 0.0;
            let treated = period == 2003 && above;
            let y = alpha + 0.25 * k as f64 + 0.8 * r - 0.6 * r * r
                + if above { 1.5 } else { 0.0 }
                + if treated { 2.0 } else { 0.0 }
                + noise.sample(&mut rng);
            obs.push(Observation::new(
                unit.as_str(),
                period,
                r,
                treated,
                (y * 1e4).round() / 1e4,
            ));
        }
    }
    write_observations(&obs, std::io::stdout().lock()).unwrap();
}

//! Inputs whose answers are known exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rddid::composition::{composition_effect, switcher_summary};
use rddid::discontinuity::bias_estimate;
use rddid::estimate::{estimate_constant, estimate_fuzzy};
use rddid::{
    bc_discontinuity, discontinuity, Design, FitSpec, Kernel, Observation, PanelDataset, PeriodTaxonomy, RdError,
    Sampling, Target,
};

use super::oracle::Check;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn runnings(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dataset(obs: Vec<Observation>, tax: PeriodTaxonomy, sampling: Sampling) -> PanelDataset {
    PanelDataset::new(obs, 0.0, tax, sampling).unwrap()
}

fn err(e: RdError) -> String {
    e.to_string()
}

/// A pure step of height 5 is recovered exactly under every kernel.
pub fn step_function() -> Check {
    for k in Kernel::ALL {
        let obs = runnings(1, 200)
            .into_iter()
            .enumerate()
            .map(|(i, r)| Observation::new(format!("u{i}"), 1, r, r >= 0.0, if r >= 0.0 { 5.0 } else { 0.0 }))
            .collect();
        let ds = dataset(
            obs,
            PeriodTaxonomy::new([], [], [1], 1).unwrap(),
            Sampling::CrossSection,
        );
        let mut spec = FitSpec::new(0.4);
        spec.kernel = k;
        let plain = discontinuity(&ds, 1, &spec, Target::Outcome).map_err(err)?;
        let d = bc_discontinuity(&ds, 1, &spec, Target::Outcome).map_err(err)?;
        ensure!(
            plain == 5.0 && d.conventional == 5.0 && d.bias_corrected == 5.0,
            "{k:?}: {plain}, {}, {}",
            d.conventional,
            d.bias_corrected
        );
    }
    Ok(())
}

/// Piecewise linear data carries no estimated bias.
pub fn linear_no_bias() -> Check {
    let obs = runnings(2, 300)
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let y = if r >= 0.0 { 1.0 + 2.0 * r } else { -3.0 + 0.5 * r };
            Observation::new(format!("u{i}"), 1, r, r >= 0.0, y)
        })
        .collect();
    let ds = dataset(
        obs,
        PeriodTaxonomy::new([], [], [1], 1).unwrap(),
        Sampling::CrossSection,
    );
    for h in [0.2, 0.5, 1.0] {
        let b = bias_estimate(&ds, 1, &FitSpec::new(h)).map_err(err)?;
        ensure!(b.abs() < 1e-12, "h = {h}: bias {b}");
    }
    Ok(())
}

/// Two identical periods: the effect is exactly zero, and as one panel the
/// difference has no sampling variance at all.
pub fn identical_periods() -> Check {
    let r = runnings(3, 400);
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let y: Vec<f64> = r
        .iter()
        .map(|&r| r * r + if r >= 0.0 { 1.0 } else { 0.0 } + rng.random_range(-0.2..0.2))
        .collect();
    let mut obs = Vec::new();
    for t in [1, 2] {
        for (i, (&r, &y)) in r.iter().zip(&y).enumerate() {
            obs.push(Observation::new(format!("t{t}-{i}"), t, r, t == 2 && r >= 0.0, y));
        }
    }
    let ds = dataset(obs.clone(), PeriodTaxonomy::canonical(1, 2), Sampling::CrossSection);
    let e = estimate_constant(&ds, &FitSpec::new(0.5)).map_err(err)?;
    ensure!(
        e.point == 0.0 && e.bias_corrected_point == 0.0,
        "point {}, BC {}",
        e.point,
        e.bias_corrected_point
    );

    let panel: Vec<Observation> = obs
        .into_iter()
        .map(|o| {
            Observation::new(
                o.unit.as_str().split_once('-').unwrap().1,
                o.period,
                o.running,
                o.treated,
                o.outcome,
            )
        })
        .collect();
    let ds = dataset(panel, PeriodTaxonomy::canonical(1, 2), Sampling::PanelConstant);
    let mut spec = FitSpec::new(0.5);
    spec.scheme = Sampling::PanelConstant;
    match estimate_constant(&ds, &spec) {
        Err(RdError::NegativeVariance(v)) if v.abs() < 1e-12 => Ok(()),
        other => Err(format!("panel copy: expected a zero variance, got {other:?}")),
    }
}

/// A running variable fixed over time leaves nothing to recompose.
pub fn constant_running_no_composition() -> Check {
    let r = runnings(4, 300);
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut obs = Vec::new();
    for t in [1, 2] {
        for (i, &r) in r.iter().enumerate() {
            let y = 2.0 * r + if r >= 0.0 { 1.0 } else { 0.0 } + rng.random_range(-1.0..1.0);
            obs.push(Observation::new(format!("u{i}"), t, r, t == 2 && r >= 0.0, y));
        }
    }
    let ds = dataset(obs, PeriodTaxonomy::canonical(1, 2), Sampling::PanelConstant);
    let c = composition_effect(&ds, 1, 2, &FitSpec::new(0.5)).map_err(err)?;
    ensure!(
        c.point == 0.0 && c.alt_jump == c.baseline_jump,
        "composition {}",
        c.point
    );
    let s = switcher_summary(&ds, 1, 2).map_err(err)?;
    ensure!((s.switchers, s.upward, s.downward) == (0, 0, 0), "switchers {s:?}");
    Ok(())
}

/// Periods 1-2 untreated, 3 all treated, 4 sharp RD.
fn sharp_with_treated_period() -> PanelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut obs = Vec::new();
    for t in 1..=4 {
        for (i, r) in runnings(10 + t as u64, 300).into_iter().enumerate() {
            let w = match t {
                3 => true,
                4 => r >= 0.0,
                _ => false,
            };
            let y = 0.3 * t as f64 + r - r * r
                + if r >= 0.0 { 0.8 } else { 0.0 }
                + if w { 1.5 } else { 0.0 }
                + rng.random_range(-0.3..0.3);
            obs.push(Observation::new(format!("t{t}-{i}"), t, r, w, y));
        }
    }
    dataset(
        obs,
        PeriodTaxonomy::new([1, 2], [3], [4], 4).unwrap(),
        Sampling::CrossSection,
    )
}

/// Sharp assignment makes the treatment jump exactly one.
pub fn sharp_treatment_jump() -> Check {
    let d = bc_discontinuity(&sharp_with_treated_period(), 4, &FitSpec::new(0.5), Target::Treatment).map_err(err)?;
    ensure!(
        d.conventional == 1.0 && d.bias_corrected == 1.0,
        "{} / {}",
        d.conventional,
        d.bias_corrected
    );
    Ok(())
}

/// On sharp data the fuzzy estimator returns the sharp point bit for bit.
pub fn fuzzy_reduces_to_sharp() -> Check {
    let ds = sharp_with_treated_period();
    let spec = FitSpec::new(0.5);
    let sharp = estimate_constant(&ds, &spec).map_err(err)?;
    let mut fspec = spec.clone();
    fspec.design = Design::Fuzzy;
    let fuzzy = estimate_fuzzy(&ds, &fspec).map_err(err)?;
    ensure!(
        fuzzy.point.to_bits() == sharp.point.to_bits(),
        "{} vs {}",
        fuzzy.point,
        sharp.point
    );
    ensure!(
        fuzzy.bias_corrected_point.to_bits() == sharp.bias_corrected_point.to_bits(),
        "BC {} vs {}",
        fuzzy.bias_corrected_point,
        sharp.bias_corrected_point
    );
    ensure!(fuzzy.approximate_se && !sharp.approximate_se, "approximate flags");
    Ok(())
}

type Case = (&'static str, fn() -> Check);

pub const ALL: &[Case] = &[
    ("step function", step_function),
    ("linear data", linear_no_bias),
    ("identical periods", identical_periods),
    ("constant running variable", constant_running_no_composition),
    ("sharp treatment jump", sharp_treatment_jump),
    ("fuzzy reduces to sharp", fuzzy_reduces_to_sharp),
];

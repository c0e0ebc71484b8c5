//! Two-period Monte-Carlo designs and the coverage study.
//!
//! The running variable is `(B - 0.375) * 5000` with `B ~ Beta(2, 4)`, so the
//! cutoff 0 sits near the mode. Outcomes are
//! `f_t(R) + 1{R >= 0} D_t + delta_i + delta_t + eps`, with `f_t` a degree-5
//! polynomial per side and period. Period 1 is untreated and period 2 is
//! assigned by the cutoff, so the true effect in period 2 is `D_2 - D_1`.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::Estimator;
use crate::data::{Observation, PanelDataset, PeriodTaxonomy, Sampling, Side};
use crate::discontinuity::{bc_discontinuity, PeriodDiscontinuity, Target};
use crate::error::{RdError, Result};
use crate::estimate::{estimate_from_table, Estimand, FitSpec, JumpTable, Trend, WeightScheme};

/// Coefficients of `sum_k a_k x^k` for `k = 1..=5`, with `x = R / 1000`.
pub type Poly = [f64; 5];

/// Polynomials for one period: `(above, below)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodPolys {
    pub above: Poly,
    pub below: Poly,
}

impl PeriodPolys {
    pub fn eval(&self, r: f64) -> f64 {
        let coefs = match Side::of(r, 0.0) {
            Side::Above => &self.above,
            Side::Below => &self.below,
        };
        let x = r / 1000.0;
        coefs.iter().rev().fold(0.0, |acc, a| (acc + a) * x)
    }
}

/// Default polynomials.
///
/// Both periods share a curvature term `1500 x^2` on each side, which
/// differences out of the effect but adds approximation error to every
/// single-period fit. Above the cutoff the second period adds a term that
/// is close to quadratic near the cutoff and bends away beyond `x = 1`.
/// The values are illustrative; any coefficients can be configured.
pub const DEFAULT_POLYS: [PeriodPolys; 2] = [
    PeriodPolys {
        above: [0.0, 1500.0, 0.0, 0.0, 0.0],
        below: [0.0, 1500.0, 0.0, 0.0, 0.0],
    },
    PeriodPolys {
        above: [0.0, 2805.0, -2049.0, 1841.0, -574.0],
        below: [0.0, 1500.0, 0.0, 0.0, 0.0],
    },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dgp: Sampling,
    /// Units per period.
    pub n: usize,
    pub beta_params: (f64, f64),
    /// `R = (B + shift) * scale`.
    pub running_shift: f64,
    pub running_scale: f64,
    /// PV only: `R_2 = slope * R_1 + N(mean, sd)`.
    pub pv_slope: f64,
    pub pv_noise_mean: f64,
    pub pv_noise_sd: f64,
    /// Outcome jump at the cutoff in each period.
    pub jumps: [f64; 2],
    /// Unit effect `N(mean, sd)`.
    pub unit_fe: (f64, f64),
    pub time_fe: [f64; 2],
    pub noise_sd: f64,
    pub polys: [PeriodPolys; 2],
    pub seed: u64,
}

impl SimConfig {
    pub fn new(dgp: Sampling, n: usize, seed: u64) -> Self {
        SimConfig {
            dgp,
            n,
            beta_params: (2.0, 4.0),
            running_shift: -0.375,
            running_scale: 5000.0,
            pv_slope: 0.97,
            pv_noise_mean: 153.0,
            pv_noise_sd: 410.0,
            jumps: [63.0, -63.0],
            unit_fe: (155.0, 117.0),
            time_fe: [-46.0, 0.0],
            noise_sd: 40.0,
            polys: DEFAULT_POLYS,
            seed,
        }
    }

    /// `D_2 - D_1`.
    pub fn true_effect(&self) -> f64 {
        self.jumps[1] - self.jumps[0]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(RdError::Config(m.to_string()));
        if self.n < 4 {
            return bad("simulate.n must be at least 4");
        }
        let (a, b) = self.beta_params;
        if !(a > 0.0 && b > 0.0) {
            return bad("beta parameters must be positive");
        }
        if !(self.noise_sd >= 0.0 && self.unit_fe.1 >= 0.0 && self.pv_noise_sd >= 0.0) {
            return bad("standard deviations must be nonnegative");
        }
        if !(self.running_scale.is_finite() && self.running_scale != 0.0) {
            return bad("running scale must be finite and nonzero");
        }
        Ok(())
    }

    fn rng(&self, replication: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replication);
        rng
    }
}

fn normal(mean: f64, sd: f64) -> Result<Normal<f64>> {
    Normal::new(mean, sd).map_err(|e| RdError::Config(format!("normal({mean}, {sd}): {e}")))
}

/// One dataset drawn from the seed's first stream.
pub fn generate_sample(cfg: &SimConfig) -> Result<PanelDataset> {
    generate_replication(cfg, 0)
}

/// The dataset of replication `replication`; independent of any other replication.
pub fn generate_replication(cfg: &SimConfig, replication: u64) -> Result<PanelDataset> {
    cfg.validate()?;
    let mut rng = cfg.rng(replication);
    let beta = Beta::new(cfg.beta_params.0, cfg.beta_params.1)
        .map_err(|e| RdError::Config(format!("beta distribution: {e}")))?;
    let unit_fe = normal(cfg.unit_fe.0, cfg.unit_fe.1)?;
    let noise = normal(0.0, cfg.noise_sd)?;
    let pv_noise = normal(cfg.pv_noise_mean, cfg.pv_noise_sd)?;
    let draw_r = |rng: &mut ChaCha8Rng| (beta.sample(rng) + cfg.running_shift) * cfg.running_scale;

    let mut obs = Vec::with_capacity(2 * cfg.n);
    let outcome = |rng: &mut ChaCha8Rng, t: usize, r: f64, fe: f64| {
        let jump = if r >= 0.0 { cfg.jumps[t] } else { 0.0 };
        cfg.polys[t].eval(r) + jump + fe + cfg.time_fe[t] + noise.sample(rng)
    };
    match cfg.dgp {
        Sampling::CrossSection => {
            for t in 0..2 {
                for i in 0..cfg.n {
                    let r = draw_r(&mut rng);
                    let fe = unit_fe.sample(&mut rng);
                    let y = outcome(&mut rng, t, r, fe);
                    obs.push(Observation::new(
                        format!("t{}-{i}", t + 1),
                        t as i64 + 1,
                        r,
                        t == 1 && r >= 0.0,
                        y,
                    ));
                }
            }
        }
        Sampling::PanelConstant | Sampling::PanelVarying => {
            for i in 0..cfg.n {
                let r1 = draw_r(&mut rng);
                let r2 = match cfg.dgp {
                    Sampling::PanelVarying => cfg.pv_slope * r1 + pv_noise.sample(&mut rng),
                    _ => r1,
                };
                let fe = unit_fe.sample(&mut rng);
                let y1 = outcome(&mut rng, 0, r1, fe);
                let y2 = outcome(&mut rng, 1, r2, fe);
                let id = format!("u{i}");
                obs.push(Observation::new(id.as_str(), 1, r1, false, y1));
                obs.push(Observation::new(id, 2, r2, r2 >= 0.0, y2));
            }
        }
    }
    let taxonomy = PeriodTaxonomy::new([1], [], [2], 2)?;
    PanelDataset::new(obs, 0.0, taxonomy, cfg.dgp)
}

/// One cell of a coverage grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub dgp: Sampling,
    pub n: usize,
    pub h: f64,
}

/// Per-replication results: point estimates and the six (estimator, scheme) standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replication {
    pub point: f64,
    pub point_bc: f64,
    /// Indexed by `[estimator][scheme]` in the order conventional/BC and CS/PC/PV.
    pub se: [[f64; 3]; 2],
}

/// Estimates one replication of a cell.
pub fn run_replication(base: &SimConfig, cell: &GridCell, spec: &FitSpec, replication: u64) -> Result<Replication> {
    let cfg = SimConfig {
        dgp: cell.dgp,
        n: cell.n,
        ..base.clone()
    };
    let ds = generate_replication(&cfg, replication)?;
    let discs: BTreeMap<i64, PeriodDiscontinuity> = [1, 2]
        .into_iter()
        .map(|p| Ok((p, bc_discontinuity(&ds, p, spec, Target::Outcome)?)))
        .collect::<Result<_>>()?;
    let mut out = Replication {
        point: 0.0,
        point_bc: 0.0,
        se: [[0.0; 3]; 2],
    };
    for (k, scheme) in Sampling::ALL.into_iter().enumerate() {
        let table = JumpTable::from_discontinuities(&discs, scheme)?;
        let e = estimate_from_table(
            &table,
            2,
            &[1].into(),
            Estimand::Att,
            Trend::Constant,
            &WeightScheme::Uniform,
            scheme,
            spec.alpha,
        )?;
        out.point = e.point;
        out.point_bc = e.bias_corrected_point;
        out.se[0][k] = e.se;
        out.se[1][k] = e.se_bc;
    }
    Ok(out)
}

/// Coverage and moments of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub dgp: Sampling,
    pub n: usize,
    pub h: f64,
    pub b: f64,
    pub reps: usize,
    /// Replications whose estimation failed; excluded from every column below.
    pub failures: usize,
    pub conv_cs: f64,
    pub conv_pc: f64,
    pub conv_pv: f64,
    pub bc_cs: f64,
    pub bc_pc: f64,
    pub bc_pv: f64,
    pub mean_point: f64,
    pub sd_point: f64,
    pub mean_point_bc: f64,
    pub sd_point_bc: f64,
    pub mean_se_cs: f64,
    pub mean_se_pc: f64,
    pub mean_se_pv: f64,
    pub mean_se_bc_cs: f64,
    pub mean_se_bc_pc: f64,
    pub mean_se_bc_pv: f64,
}

impl CoverageRow {
    /// Coverage of `estimator` with the variance of `scheme`.
    pub fn coverage(&self, estimator: Estimator, scheme: Sampling) -> f64 {
        match (estimator, scheme) {
            (Estimator::Conventional, Sampling::CrossSection) => self.conv_cs,
            (Estimator::Conventional, Sampling::PanelConstant) => self.conv_pc,
            (Estimator::Conventional, Sampling::PanelVarying) => self.conv_pv,
            (Estimator::BiasCorrected, Sampling::CrossSection) => self.bc_cs,
            (Estimator::BiasCorrected, Sampling::PanelConstant) => self.bc_pc,
            (Estimator::BiasCorrected, Sampling::PanelVarying) => self.bc_pv,
        }
    }

    /// Mean estimated standard error of `estimator` under `scheme`.
    pub fn mean_se(&self, estimator: Estimator, scheme: Sampling) -> f64 {
        match (estimator, scheme) {
            (Estimator::Conventional, Sampling::CrossSection) => self.mean_se_cs,
            (Estimator::Conventional, Sampling::PanelConstant) => self.mean_se_pc,
            (Estimator::Conventional, Sampling::PanelVarying) => self.mean_se_pv,
            (Estimator::BiasCorrected, Sampling::CrossSection) => self.mean_se_bc_cs,
            (Estimator::BiasCorrected, Sampling::PanelConstant) => self.mean_se_bc_pc,
            (Estimator::BiasCorrected, Sampling::PanelVarying) => self.mean_se_bc_pv,
        }
    }

    /// Monte-Carlo standard error of the mean conventional point estimate.
    pub fn mc_se(&self) -> f64 {
        self.sd_point / ((self.reps - self.failures) as f64).sqrt()
    }

    pub fn mc_se_bc(&self) -> f64 {
        self.sd_point_bc / ((self.reps - self.failures) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageStudy {
    pub grid: Vec<GridCell>,
    pub reps: usize,
    /// Fit settings; `h` and `b` are replaced per cell (`b = bandwidth_ratio * h`).
    pub spec: FitSpec,
    pub bandwidth_ratio: f64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl CoverageStudy {
    pub fn new(grid: Vec<GridCell>, reps: usize) -> Self {
        CoverageStudy {
            grid,
            reps,
            spec: FitSpec::new(1.0),
            bandwidth_ratio: 2.0,
            threads: None,
        }
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        f64::NAN
    };
    (mean, var.sqrt())
}

fn summarise(cell: &GridCell, b: f64, truth: f64, z: f64, results: &[Result<Replication>]) -> CoverageRow {
    let ok: Vec<&Replication> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let m = ok.len() as f64;
    let cover = |e: usize, k: usize| {
        let hits = ok
            .iter()
            .filter(|r| {
                let p = if e == 0 { r.point } else { r.point_bc };
                (p - truth).abs() <= z * r.se[e][k]
            })
            .count();
        hits as f64 / m
    };
    let mean_se = |e: usize, k: usize| ok.iter().map(|r| r.se[e][k]).sum::<f64>() / m;
    let points: Vec<f64> = ok.iter().map(|r| r.point).collect();
    let points_bc: Vec<f64> = ok.iter().map(|r| r.point_bc).collect();
    let (mean_point, sd_point) = mean_sd(&points);
    let (mean_point_bc, sd_point_bc) = mean_sd(&points_bc);
    CoverageRow {
        dgp: cell.dgp,
        n: cell.n,
        h: cell.h,
        b,
        reps: results.len(),
        failures: results.len() - ok.len(),
        conv_cs: cover(0, 0),
        conv_pc: cover(0, 1),
        conv_pv: cover(0, 2),
        bc_cs: cover(1, 0),
        bc_pc: cover(1, 1),
        bc_pv: cover(1, 2),
        mean_point,
        sd_point,
        mean_point_bc,
        sd_point_bc,
        mean_se_cs: mean_se(0, 0),
        mean_se_pc: mean_se(0, 1),
        mean_se_pv: mean_se(0, 2),
        mean_se_bc_cs: mean_se(1, 0),
        mean_se_bc_pc: mean_se(1, 1),
        mean_se_bc_pv: mean_se(1, 2),
    }
}

/// Runs every cell of the study. Replication `r` of every cell draws from
/// stream `r` of `base.seed`, so the output does not depend on the number of
/// threads or the order in which replications finish.
pub fn run_coverage_study(base: &SimConfig, study: &CoverageStudy) -> Result<Vec<CoverageRow>> {
    base.validate()?;
    if study.reps == 0 {
        return Err(RdError::Config("simulate.reps must be at least 1".into()));
    }
    study.spec.validate()?;
    let z = crate::inference::normal_quantile(1.0 - study.spec.alpha / 2.0);
    let truth = base.true_effect();
    let run = || -> Result<Vec<CoverageRow>> {
        study
            .grid
            .iter()
            .map(|cell| {
                let spec = FitSpec {
                    h: cell.h,
                    b: study.bandwidth_ratio * cell.h,
                    ..study.spec.clone()
                };
                spec.validate()?;
                let results: Vec<Result<Replication>> = (0..study.reps as u64)
                    .into_par_iter()
                    .map(|r| run_replication(base, cell, &spec, r))
                    .collect();
                Ok(summarise(cell, spec.b, truth, z, &results))
            })
            .collect()
    };
    match study.threads {
        None => run(),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| RdError::Config(format!("thread pool: {e}")))?
            .install(run),
    }
}

/// Coverage table as CSV text, one row per cell.
pub fn coverage_csv(rows: &[CoverageRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| RdError::InvalidData(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| RdError::InvalidData(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| RdError::InvalidData(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        for dgp in Sampling::ALL {
            let cfg = SimConfig::new(dgp, 200, 42);
            let a = generate_sample(&cfg).unwrap();
            let b = generate_sample(&cfg).unwrap();
            assert_eq!(a.observations(), b.observations());
            let c = generate_replication(&cfg, 1).unwrap();
            assert_ne!(a.observations(), c.observations());
        }
    }

    #[test]
    fn running_support() {
        for dgp in [Sampling::CrossSection, Sampling::PanelConstant] {
            let ds = generate_sample(&SimConfig::new(dgp, 2000, 7)).unwrap();
            assert!(ds
                .observations()
                .iter()
                .all(|o| o.running > -1875.0 && o.running < 3125.0));
        }
    }

    #[test]
    fn panel_structure() {
        let ds = generate_sample(&SimConfig::new(Sampling::PanelConstant, 300, 3)).unwrap();
        assert!(ds.validate(crate::data::Design::Sharp).is_empty());
        let pv = generate_sample(&SimConfig::new(Sampling::PanelVarying, 300, 3)).unwrap();
        assert!(pv.validate(crate::data::Design::Sharp).is_empty());
        let moved = pv
            .period(1)
            .unwrap()
            .iter()
            .zip(pv.period(2).unwrap())
            .filter(|(a, b)| a.running != b.running)
            .count();
        assert_eq!(moved, 300);
    }

    #[test]
    fn polynomial_eval() {
        let p = PeriodPolys {
            above: [1.0, 2.0, 0.0, 0.0, 0.0],
            below: [-1.0, 0.0, 0.0, 0.0, 1.0],
        };
        assert_eq!(p.eval(0.0), 0.0);
        assert!((p.eval(500.0) - (0.5 + 2.0 * 0.25)).abs() < 1e-12);
        assert!((p.eval(-1000.0) - (1.0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn study_is_thread_invariant() {
        let base = SimConfig::new(Sampling::PanelVarying, 300, 11);
        let mut study = CoverageStudy::new(
            vec![GridCell {
                dgp: Sampling::PanelVarying,
                n: 300,
                h: 800.0,
            }],
            8,
        );
        study.threads = Some(1);
        let a = run_coverage_study(&base, &study).unwrap();
        study.threads = Some(4);
        let b = run_coverage_study(&base, &study).unwrap();
        assert_eq!(coverage_csv(&a).unwrap(), coverage_csv(&b).unwrap());
    }
}

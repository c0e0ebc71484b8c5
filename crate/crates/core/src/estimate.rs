//! Aggregation of per-period jumps into ATT / ATU estimates.
//!
//! The effect in the target period is its jump minus an estimate of the
//! jump the target period would have shown without the RD treatment,
//! learned from all-untreated periods (ATT) or all-treated periods (ATU).
//! That counterfactual jump is a linear combination `sum_t lambda_t D_t` of
//! the comparison jumps: the weights `pi_t` under a constant trend, or the
//! OLS extrapolation weights under a linear trend. Standard errors are the
//! quadratic form of the combination with the scheme-specific covariance of
//! the jumps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::{positive, Estimator, JumpCovariance, ResidualCovariance};
use crate::data::{Design, PanelDataset, Sampling, Side};
use crate::discontinuity::{bc_discontinuity, PeriodDiscontinuity, Target};
use crate::error::{RdError, Result};
use crate::inference::{check_alpha, difference_test, normal_quantile, tost_equivalence, DifferenceTest, TostResult};
use crate::kernel::Kernel;

/// Threshold below which a treatment-probability jump is considered too weak.
pub const WEAK_DISCONTINUITY: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    #[default]
    Constant,
    Linear,
}

impl FromStr for Trend {
    type Err = RdError;

    fn from_str(s: &str) -> Result<Trend> {
        match s.trim().to_ascii_lowercase().as_str() {
            "constant" => Ok(Trend::Constant),
            "linear" => Ok(Trend::Linear),
            other => Err(RdError::Config(format!("unknown trend `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Estimand {
    #[default]
    #[serde(rename = "ATT")]
    Att,
    #[serde(rename = "ATU")]
    Atu,
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimand::Att => "ATT",
            Estimand::Atu => "ATU",
        })
    }
}

impl FromStr for Estimand {
    type Err = RdError;

    fn from_str(s: &str) -> Result<Estimand> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ATT" => Ok(Estimand::Att),
            "ATU" => Ok(Estimand::Atu),
            other => Err(RdError::Config(format!("unknown estimand `{other}`"))),
        }
    }
}

/// How comparison periods are weighted under a constant trend.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScheme {
    #[default]
    Uniform,
    /// All weight on the comparison period closest to the target.
    Nearest,
    /// Minimises the estimated variance of the conventional estimator.
    MinVariance,
    Explicit(BTreeMap<i64, f64>),
}

impl FromStr for WeightScheme {
    type Err = RdError;

    /// `uniform`, `nearest`, `min-variance`, or `period:weight,period:weight,...`.
    fn from_str(s: &str) -> Result<WeightScheme> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => return Ok(WeightScheme::Uniform),
            "nearest" => return Ok(WeightScheme::Nearest),
            "min-variance" => return Ok(WeightScheme::MinVariance),
            _ => {}
        }
        let mut map = BTreeMap::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (p, w) = part
                .split_once(':')
                .ok_or_else(|| RdError::Config(format!("bad weight entry `{part}`, expected period:weight")))?;
            let p: i64 = p
                .trim()
                .parse()
                .map_err(|_| RdError::Config(format!("bad period in weight entry `{part}`")))?;
            let w: f64 = w
                .trim()
                .parse()
                .map_err(|_| RdError::Config(format!("bad weight in weight entry `{part}`")))?;
            map.insert(p, w);
        }
        if map.is_empty() {
            return Err(RdError::Config(format!("unknown weight scheme `{s}`")));
        }
        Ok(WeightScheme::Explicit(map))
    }
}

/// Everything needed to estimate one effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    /// Order of the main local polynomial.
    pub p: usize,
    /// Order of the pilot fit used to estimate curvature.
    pub q: usize,
    pub h: f64,
    pub b: f64,
    pub kernel: Kernel,
    /// Per-period `(h, b)` overrides.
    pub bandwidth_overrides: BTreeMap<i64, (f64, f64)>,
    pub weights: WeightScheme,
    pub trend: Trend,
    pub estimand: Estimand,
    pub design: Design,
    pub scheme: Sampling,
    pub alpha: f64,
}

impl FitSpec {
    /// Defaults: `p = 1`, `q = 2`, `b = 2h`, triangular kernel, uniform
    /// weights, constant trend, sharp ATT, CS variance, `alpha = 0.05`.
    pub fn new(h: f64) -> Self {
        FitSpec {
            p: 1,
            q: 2,
            h,
            b: 2.0 * h,
            kernel: Kernel::Triangular,
            bandwidth_overrides: BTreeMap::new(),
            weights: WeightScheme::Uniform,
            trend: Trend::Constant,
            estimand: Estimand::Att,
            design: Design::Sharp,
            scheme: Sampling::CrossSection,
            alpha: 0.05,
        }
    }

    pub fn bandwidths(&self, period: i64) -> (f64, f64) {
        self.bandwidth_overrides
            .get(&period)
            .copied()
            .unwrap_or((self.h, self.b))
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return Err(RdError::Config("p must be at least 1".into()));
        }
        if self.q < 2 {
            return Err(RdError::Config("q must be at least 2".into()));
        }
        for (h, b) in std::iter::once((self.h, self.b)).chain(self.bandwidth_overrides.values().copied()) {
            crate::kernel::check_bandwidth(h)?;
            crate::kernel::check_bandwidth(b)?;
        }
        check_alpha(self.alpha)
    }
}

/// Aggregated effect with conventional and bias-corrected inference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectEstimate {
    pub estimand: Estimand,
    pub design: Design,
    pub target_period: i64,
    pub trend: Trend,
    pub scheme: Sampling,
    pub alpha: f64,
    pub point: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub z_stat: f64,
    pub bias_corrected_point: f64,
    pub se_bc: f64,
    pub ci_lower_bc: f64,
    pub ci_upper_bc: f64,
    pub z_stat_bc: f64,
    /// Estimated per-period slope of the comparison jumps (linear trend only).
    pub slope: Option<f64>,
    pub slope_bc: Option<f64>,
    /// `lambda_t`: the counterfactual jump is `sum_t lambda_t D_t`.
    pub comparison_weights: BTreeMap<i64, f64>,
    /// True when the standard errors are delta-method approximations.
    pub approximate_se: bool,
    pub notes: Vec<String>,
}

/// Per-period jump estimates plus their covariance under one sampling scheme.
#[derive(Debug, Clone)]
pub struct JumpTable {
    pub conventional: BTreeMap<i64, f64>,
    pub bias_corrected: BTreeMap<i64, f64>,
    pub cov: JumpCovariance,
    pub cov_bc: JumpCovariance,
}

impl JumpTable {
    pub fn from_discontinuities(discs: &BTreeMap<i64, PeriodDiscontinuity>, scheme: Sampling) -> Result<Self> {
        let rescov = ResidualCovariance::from_discontinuities(discs.values(), scheme.is_panel());
        Ok(JumpTable {
            conventional: discs.iter().map(|(&p, d)| (p, d.conventional)).collect(),
            bias_corrected: discs.iter().map(|(&p, d)| (p, d.bias_corrected)).collect(),
            cov: JumpCovariance::build(discs, scheme, Estimator::Conventional, &rescov)?,
            cov_bc: JumpCovariance::build(discs, scheme, Estimator::BiasCorrected, &rescov)?,
        })
    }

    fn points(&self, estimator: Estimator) -> &BTreeMap<i64, f64> {
        match estimator {
            Estimator::Conventional => &self.conventional,
            Estimator::BiasCorrected => &self.bias_corrected,
        }
    }

    fn covariance(&self, estimator: Estimator) -> &JumpCovariance {
        match estimator {
            Estimator::Conventional => &self.cov,
            Estimator::BiasCorrected => &self.cov_bc,
        }
    }

    fn jump(&self, estimator: Estimator, period: i64) -> Result<f64> {
        self.points(estimator)
            .get(&period)
            .copied()
            .ok_or(RdError::UnknownPeriod(period))
    }

    /// `sum_t c_t D_t`.
    pub fn combine(&self, estimator: Estimator, coefs: &BTreeMap<i64, f64>) -> Result<f64> {
        coefs
            .iter()
            .try_fold(0.0, |acc, (&p, &c)| Ok(acc + c * self.jump(estimator, p)?))
    }
}

/// Comparison weights `lambda_t` for a trend model.
///
/// Constant: the weight scheme, normalised over `periods`. Linear: OLS of
/// `D_t` on `t` over `periods`, evaluated at `target`.
pub fn comparison_coefficients(
    periods: &BTreeSet<i64>,
    target: i64,
    trend: Trend,
    weights: &WeightScheme,
    cov: Option<&JumpCovariance>,
) -> Result<BTreeMap<i64, f64>> {
    if periods.is_empty() {
        return Err(RdError::EmptyComparisonSet("no comparison periods".into()));
    }
    match trend {
        Trend::Linear => linear_extrapolation_weights(periods, target),
        Trend::Constant => match weights {
            WeightScheme::Uniform => {
                let w = 1.0 / periods.len() as f64;
                Ok(periods.iter().map(|&p| (p, w)).collect())
            }
            WeightScheme::Nearest => {
                // ties go to the later period
                let nearest = periods
                    .iter()
                    .copied()
                    .min_by_key(|&p| ((p - target).abs(), -p))
                    .expect("non-empty");
                Ok([(nearest, 1.0)].into())
            }
            WeightScheme::Explicit(map) => {
                let out: BTreeMap<i64, f64> = periods
                    .iter()
                    .map(|p| (*p, map.get(p).copied().unwrap_or(0.0)))
                    .collect();
                if let Some(extra) = map.keys().find(|p| !periods.contains(p)) {
                    return Err(RdError::InvalidWeights(format!(
                        "weight given for period {extra}, which is not a comparison period"
                    )));
                }
                crate::covariance::check_weights(&out)?;
                Ok(out)
            }
            WeightScheme::MinVariance => {
                let cov = cov.ok_or_else(|| {
                    RdError::InvalidWeights("variance-minimising weights need a jump covariance".into())
                })?;
                min_variance_weights(periods, target, cov)
            }
        },
    }
}

/// OLS prediction weights at `target` for a line through `(t, D_t)`.
pub fn linear_extrapolation_weights(periods: &BTreeSet<i64>, target: i64) -> Result<BTreeMap<i64, f64>> {
    let k = periods.len();
    if k < 2 {
        return Err(RdError::EmptyComparisonSet(format!(
            "a linear trend needs at least 2 comparison periods, got {k}"
        )));
    }
    let mean = periods.iter().map(|&p| p as f64).sum::<f64>() / k as f64;
    let sxx: f64 = periods.iter().map(|&p| (p as f64 - mean).powi(2)).sum();
    let lever = target as f64 - mean;
    Ok(periods
        .iter()
        .map(|&p| (p, 1.0 / k as f64 + lever * (p as f64 - mean) / sxx))
        .collect())
}

/// OLS slope weights: `slope = sum_t s_t D_t`.
fn slope_weights(periods: &BTreeSet<i64>) -> BTreeMap<i64, f64> {
    let k = periods.len() as f64;
    let mean = periods.iter().map(|&p| p as f64).sum::<f64>() / k;
    let sxx: f64 = periods.iter().map(|&p| (p as f64 - mean).powi(2)).sum();
    periods.iter().map(|&p| (p, (p as f64 - mean) / sxx)).collect()
}

/// Nonnegative weights summing to one that minimise
/// `V(D_target) - 2 pi'k + pi'M pi`, by an active-set loop on the
/// equality-constrained solution.
fn min_variance_weights(periods: &BTreeSet<i64>, target: i64, cov: &JumpCovariance) -> Result<BTreeMap<i64, f64>> {
    let mut active: Vec<i64> = periods.iter().copied().collect();
    loop {
        let m = active.len();
        let mut mat = DMatrix::<f64>::zeros(m + 1, m + 1);
        let mut rhs = DVector::<f64>::zeros(m + 1);
        for (i, &s) in active.iter().enumerate() {
            for (j, &t) in active.iter().enumerate() {
                mat[(i, j)] = cov.get(s, t)?;
            }
            mat[(i, m)] = 1.0;
            mat[(m, i)] = 1.0;
            rhs[i] = cov.get(target, s)?;
        }
        rhs[m] = 1.0;
        let sol = mat
            .lu()
            .solve(&rhs)
            .ok_or_else(|| RdError::InvalidWeights("variance-minimising weights are not identified".into()))?;
        let (worst, value) = (0..m)
            .map(|i| (i, sol[i]))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        if value >= 0.0 || m == 1 {
            let mut out: BTreeMap<i64, f64> = periods.iter().map(|&p| (p, 0.0)).collect();
            for (i, &p) in active.iter().enumerate() {
                out.insert(p, sol[i].max(0.0));
            }
            return Ok(out);
        }
        active.remove(worst);
    }
}

fn comparison_periods(ds: &PanelDataset, estimand: Estimand) -> Result<BTreeSet<i64>> {
    let tax = ds.taxonomy();
    let (set, name) = match estimand {
        Estimand::Att => (&tax.untreated, "ATT needs all-untreated periods"),
        Estimand::Atu => (&tax.treated, "ATU needs all-treated periods"),
    };
    if set.is_empty() {
        return Err(RdError::EmptyComparisonSet(name.into()));
    }
    Ok(set.clone())
}

fn fit_periods(
    ds: &PanelDataset,
    periods: impl IntoIterator<Item = i64>,
    spec: &FitSpec,
    target: Target,
) -> Result<BTreeMap<i64, PeriodDiscontinuity>> {
    periods
        .into_iter()
        .map(|p| Ok((p, bc_discontinuity(ds, p, spec, target)?)))
        .collect()
}

/// Builds an estimate from a jump table: `D_target - sum_t lambda_t D_t` for
/// both estimators, with standard errors from the table's covariances.
pub fn estimate_from_table(
    table: &JumpTable,
    target: i64,
    comparison: &BTreeSet<i64>,
    estimand: Estimand,
    trend: Trend,
    weights: &WeightScheme,
    scheme: Sampling,
    alpha: f64,
) -> Result<EffectEstimate> {
    check_alpha(alpha)?;
    if comparison.contains(&target) {
        return Err(RdError::InvalidWeights(format!(
            "target period {target} is also a comparison period"
        )));
    }
    let lambda = comparison_coefficients(comparison, target, trend, weights, Some(&table.cov))?;
    let mut coefs: BTreeMap<i64, f64> = lambda.iter().map(|(&p, &l)| (p, -l)).collect();
    coefs.insert(target, 1.0);

    let z = normal_quantile(1.0 - alpha / 2.0);
    let summary = |estimator: Estimator| -> Result<(f64, f64)> {
        // same operation order as the fuzzy estimator, so the two agree exactly on sharp data
        let point = table.jump(estimator, target)? - table.combine(estimator, &lambda)?;
        let var = positive(table.covariance(estimator).quadratic_form(&coefs)?)?;
        Ok((point, var.sqrt()))
    };
    let (point, se) = summary(Estimator::Conventional)?;
    let (point_bc, se_bc) = summary(Estimator::BiasCorrected)?;

    let (slope, slope_bc) = match trend {
        Trend::Linear => {
            let s = slope_weights(comparison);
            (
                Some(table.combine(Estimator::Conventional, &s)?),
                Some(table.combine(Estimator::BiasCorrected, &s)?),
            )
        }
        Trend::Constant => (None, None),
    };

    Ok(EffectEstimate {
        estimand,
        design: Design::Sharp,
        target_period: target,
        trend,
        scheme,
        alpha,
        point,
        se,
        ci_lower: point - z * se,
        ci_upper: point + z * se,
        z_stat: point / se,
        bias_corrected_point: point_bc,
        se_bc,
        ci_lower_bc: point_bc - z * se_bc,
        ci_upper_bc: point_bc + z * se_bc,
        z_stat_bc: point_bc / se_bc,
        slope,
        slope_bc,
        comparison_weights: lambda,
        approximate_se: false,
        notes: Vec::new(),
    })
}

fn estimate_sharp(ds: &PanelDataset, spec: &FitSpec, trend: Trend) -> Result<EffectEstimate> {
    spec.validate()?;
    let target = ds.taxonomy().target;
    let comparison = comparison_periods(ds, spec.estimand)?;
    let discs = fit_periods(ds, comparison.iter().copied().chain([target]), spec, Target::Outcome)?;
    let table = JumpTable::from_discontinuities(&discs, spec.scheme)?;
    estimate_from_table(
        &table,
        target,
        &comparison,
        spec.estimand,
        trend,
        &spec.weights,
        spec.scheme,
        spec.alpha,
    )
}

/// Sharp RD-DID under a constant potential-outcome discontinuity.
pub fn estimate_constant(ds: &PanelDataset, spec: &FitSpec) -> Result<EffectEstimate> {
    estimate_sharp(ds, spec, Trend::Constant)
}

/// Sharp RD-DID under a linear-in-time potential-outcome discontinuity.
pub fn estimate_linear(ds: &PanelDataset, spec: &FitSpec) -> Result<EffectEstimate> {
    estimate_sharp(ds, spec, Trend::Linear)
}

/// Dispatches on `spec.design` and `spec.trend`.
pub fn estimate(ds: &PanelDataset, spec: &FitSpec) -> Result<EffectEstimate> {
    match spec.design {
        Design::Fuzzy => estimate_fuzzy(ds, spec),
        Design::Sharp => estimate_sharp(ds, spec, spec.trend),
    }
}

/// Inputs of the fuzzy estimand for one estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuzzyInputs {
    /// Outcome jump in the target period.
    pub jump_y: f64,
    /// Treatment-probability jump in the target period.
    pub jump_w: f64,
    /// Counterfactual untreated jump from all-untreated periods.
    pub g0: f64,
    /// Counterfactual treated jump from all-treated periods.
    pub g1: f64,
    /// Treatment probability just below (ATT) or above (ATU) the cutoff.
    pub p_side: f64,
}

impl FuzzyInputs {
    pub fn effect(&self) -> f64 {
        self.jump_y / self.jump_w - (self.g0 * (1.0 - self.p_side) + self.g1 * self.p_side) / self.jump_w
    }
}

/// Fuzzy RD-DID. Standard errors use the delta method with the outcome and
/// treatment estimators treated as uncorrelated; they are flagged approximate.
pub fn estimate_fuzzy(ds: &PanelDataset, spec: &FitSpec) -> Result<EffectEstimate> {
    spec.validate()?;
    let tax = ds.taxonomy();
    if tax.untreated.is_empty() || tax.treated.is_empty() {
        return Err(RdError::EmptyComparisonSet(
            "fuzzy designs need both all-untreated and all-treated periods".into(),
        ));
    }
    let target = tax.target;
    let discs_y = fit_periods(
        ds,
        tax.untreated.iter().chain(&tax.treated).copied().chain([target]),
        spec,
        Target::Outcome,
    )?;
    let disc_w = bc_discontinuity(ds, target, spec, Target::Treatment)?;
    let table = JumpTable::from_discontinuities(&discs_y, spec.scheme)?;

    let lambda0 = comparison_coefficients(&tax.untreated, target, spec.trend, &spec.weights, Some(&table.cov))?;
    let lambda1 = comparison_coefficients(&tax.treated, target, spec.trend, &spec.weights, Some(&table.cov))?;
    let side = match spec.estimand {
        Estimand::Att => Side::Below,
        Estimand::Atu => Side::Above,
    };

    let rescov_w = ResidualCovariance::from_discontinuities([&disc_w], false);
    let z = normal_quantile(1.0 - spec.alpha / 2.0);

    let run = |estimator: Estimator| -> Result<(f64, f64)> {
        let fits = disc_w.side(side);
        let side_bias = match estimator {
            Estimator::Conventional => 0.0,
            Estimator::BiasCorrected => fits.bias()?,
        };
        let inputs = FuzzyInputs {
            jump_y: table.jump(estimator, target)?,
            jump_w: disc_w.point(estimator),
            g0: table.combine(estimator, &lambda0)?,
            g1: table.combine(estimator, &lambda1)?,
            p_side: fits.main.intercept() - side_bias,
        };
        if inputs.jump_w.abs() < WEAK_DISCONTINUITY {
            return Err(RdError::WeakDiscontinuity(inputs.jump_w));
        }
        let theta = inputs.effect();
        let dw = inputs.jump_w;

        // outcome part: a linear combination of outcome jumps
        let mut coefs: BTreeMap<i64, f64> = BTreeMap::new();
        *coefs.entry(target).or_default() += 1.0 / dw;
        for (&p, &l) in &lambda0 {
            *coefs.entry(p).or_default() -= (1.0 - inputs.p_side) * l / dw;
        }
        for (&p, &l) in &lambda1 {
            *coefs.entry(p).or_default() -= inputs.p_side * l / dw;
        }
        let var_y = table.covariance(estimator).quadratic_form(&coefs)?;

        // treatment part: (D^W, p_side) from the target-period treatment fits
        use crate::covariance::{functional_variance, InterceptFunctional};
        let f_side = InterceptFunctional::of(disc_w.side(side), estimator);
        let f_other = InterceptFunctional::of(disc_w.side(opposite(side)), estimator);
        let v_side = functional_variance(&f_side, &rescov_w)?;
        let v_other = functional_variance(&f_other, &rescov_w)?;
        let v_dw = v_side + v_other;
        // D^W = p_+ - p_-, so Cov(D^W, p_side) = +V(p_+) above and -V(p_-) below.
        let cov_dw_p = side.sign() * v_side;
        let g_p = -(inputs.g1 - inputs.g0) / dw;
        let g_dw = -theta / dw;
        let var_w = g_p * g_p * v_side + g_dw * g_dw * v_dw + 2.0 * g_p * g_dw * cov_dw_p;

        Ok((theta, positive(var_y + var_w)?.sqrt()))
    };
    let (point, se) = run(Estimator::Conventional)?;
    let (point_bc, se_bc) = run(Estimator::BiasCorrected)?;

    let (slope, slope_bc) = match spec.trend {
        Trend::Linear => {
            let s = slope_weights(&tax.untreated);
            (
                Some(table.combine(Estimator::Conventional, &s)?),
                Some(table.combine(Estimator::BiasCorrected, &s)?),
            )
        }
        Trend::Constant => (None, None),
    };

    let mut notes = vec![
        "fuzzy standard errors are delta-method approximations with zero outcome-treatment covariance".to_string(),
    ];
    notes.extend(disc_w.warnings.iter().cloned());
    let mut comparison_weights = lambda0;
    comparison_weights.extend(lambda1);

    Ok(EffectEstimate {
        estimand: spec.estimand,
        design: Design::Fuzzy,
        target_period: target,
        trend: spec.trend,
        scheme: spec.scheme,
        alpha: spec.alpha,
        point,
        se,
        ci_lower: point - z * se,
        ci_upper: point + z * se,
        z_stat: point / se,
        bias_corrected_point: point_bc,
        se_bc,
        ci_lower_bc: point_bc - z * se_bc,
        ci_upper_bc: point_bc + z * se_bc,
        z_stat_bc: point_bc / se_bc,
        slope,
        slope_bc,
        comparison_weights,
        approximate_se: true,
        notes,
    })
}

/// One estimator's test of whether two periods' jumps differ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpTests {
    pub jump_a: f64,
    pub jump_b: f64,
    pub se_diff: f64,
    pub difference: DifferenceTest,
    pub equivalence: TostResult,
}

/// Difference and equivalence tests of `D_b - D_a`, conventional and bias-corrected.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpComparison {
    pub period_a: i64,
    pub period_b: i64,
    pub scheme: Sampling,
    pub alpha: f64,
    pub delta: f64,
    /// Pooled outcome standard deviation over both periods.
    pub outcome_sd: f64,
    pub conventional: JumpTests,
    pub bias_corrected: JumpTests,
}

/// Multiplier of the outcome standard deviation used as the default equivalence margin.
pub const DEFAULT_MARGIN_SDS: f64 = 0.36;

/// Compares the outcome jumps of two periods. Each one-sided test runs at
/// `spec.alpha`; `delta` defaults to [`DEFAULT_MARGIN_SDS`] outcome standard deviations.
pub fn compare_jumps(
    ds: &PanelDataset,
    spec: &FitSpec,
    period_a: i64,
    period_b: i64,
    delta: Option<f64>,
) -> Result<JumpComparison> {
    spec.validate()?;
    if period_a == period_b {
        return Err(RdError::Config(format!("both comparison periods are {period_a}")));
    }
    let discs = fit_periods(ds, [period_a, period_b], spec, Target::Outcome)?;
    let table = JumpTable::from_discontinuities(&discs, spec.scheme)?;

    let outcomes: Vec<f64> = ds
        .period(period_a)?
        .into_iter()
        .chain(ds.period(period_b)?)
        .map(|o| o.outcome)
        .collect();
    let n = outcomes.len() as f64;
    let mean = outcomes.iter().sum::<f64>() / n;
    let outcome_sd = (outcomes.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let delta = delta.unwrap_or(DEFAULT_MARGIN_SDS * outcome_sd);

    let coefs: BTreeMap<i64, f64> = [(period_a, -1.0), (period_b, 1.0)].into();
    let tests = |estimator: Estimator| -> Result<JumpTests> {
        let jump_a = table.jump(estimator, period_a)?;
        let jump_b = table.jump(estimator, period_b)?;
        let se_diff = positive(table.covariance(estimator).quadratic_form(&coefs)?)?.sqrt();
        Ok(JumpTests {
            jump_a,
            jump_b,
            se_diff,
            difference: difference_test(jump_a, jump_b, se_diff)?,
            equivalence: tost_equivalence(jump_a, jump_b, se_diff, delta, spec.alpha)?,
        })
    };
    Ok(JumpComparison {
        period_a,
        period_b,
        scheme: spec.scheme,
        alpha: spec.alpha,
        delta,
        outcome_sd,
        conventional: tests(Estimator::Conventional)?,
        bias_corrected: tests(Estimator::BiasCorrected)?,
    })
}

fn opposite(side: Side) -> Side {
    match side {
        Side::Above => Side::Below,
        Side::Below => Side::Above,
    }
}

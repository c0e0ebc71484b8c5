//! Per-period discontinuity estimators: conventional jump, first-order bias
//! estimate and the bias-corrected jump.

use serde::{Deserialize, Serialize};

use crate::covariance::{self, Estimator, ResidualCovariance};
use crate::data::{Observation, PanelDataset, Side};
use crate::error::{RdError, Result};
use crate::estimate::FitSpec;
use crate::fit::{FitInput, LocalPolynomial, SideFit};
use crate::inference::normal_quantile;

/// Dependent variable of a discontinuity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    #[default]
    Outcome,
    /// The treatment indicator; the jump is in treatment probability.
    Treatment,
}

impl Target {
    pub fn response(self, o: &Observation) -> f64 {
        match self {
            Target::Outcome => o.outcome,
            Target::Treatment => f64::from(u8::from(o.treated)),
        }
    }
}

/// Main (order `p`, bandwidth `h`) and pilot (order `q`, bandwidth `b`) fits on one side.
#[derive(Debug, Clone)]
pub struct SideFits {
    pub main: SideFit,
    pub pilot: SideFit,
}

impl SideFits {
    /// `(h^2 / 2) * mu''_hat * B`, the estimated leading bias of the intercept.
    pub fn bias(&self) -> Result<f64> {
        let h = self.main.bandwidth;
        Ok(0.5 * h * h * self.pilot.second_derivative()? * self.main.bias_constant(2))
    }
}

/// Conventional and bias-corrected jump at the cutoff in one period.
#[derive(Debug, Clone)]
pub struct PeriodDiscontinuity {
    pub period: i64,
    pub target: Target,
    pub conventional: f64,
    pub bias: f64,
    pub bias_corrected: f64,
    pub above: SideFits,
    pub below: SideFits,
    pub warnings: Vec<String>,
}

impl PeriodDiscontinuity {
    pub fn side(&self, side: Side) -> &SideFits {
        match side {
            Side::Above => &self.above,
            Side::Below => &self.below,
        }
    }

    pub fn point(&self, estimator: Estimator) -> f64 {
        match estimator {
            Estimator::Conventional => self.conventional,
            Estimator::BiasCorrected => self.bias_corrected,
        }
    }
}

/// Fits both sides of the cutoff for arbitrary (running, response) pairs.
///
/// `inputs` may mix sides; they are split at `cutoff` (ties go above).
pub fn fit_pair(
    inputs: &[FitInput],
    cutoff: f64,
    period: i64,
    target: Target,
    spec: &FitSpec,
) -> Result<PeriodDiscontinuity> {
    let (h, b) = spec.bandwidths(period);
    let main = LocalPolynomial::new(spec.p, spec.kernel, h);
    let pilot = LocalPolynomial::new(spec.q, spec.kernel, b);

    let fit = |side: Side| -> Result<SideFits> {
        let data: Vec<FitInput> = inputs
            .iter()
            .filter(|d| Side::of(d.running, cutoff) == side)
            .cloned()
            .collect();
        let wrap = |e: RdError| e.in_fit(period, side);
        Ok(SideFits {
            main: main.fit(side, period, cutoff, &data).map_err(wrap)?,
            pilot: pilot.fit(side, period, cutoff, &data).map_err(wrap)?,
        })
    };
    let above = fit(Side::Above)?;
    let below = fit(Side::Below)?;

    let conventional = above.main.intercept() - below.main.intercept();
    let bias = above.bias().map_err(|e| e.in_fit(period, Side::Above))?
        - below.bias().map_err(|e| e.in_fit(period, Side::Below))?;

    let mut warnings = Vec::new();
    if target == Target::Treatment {
        for (side, fits) in [(Side::Above, &above), (Side::Below, &below)] {
            let p = fits.main.intercept();
            if !(0.0..=1.0).contains(&p) {
                warnings.push(format!(
                    "period {period}: fitted treatment probability {p:.4} {side} the cutoff lies outside [0, 1]"
                ));
            }
        }
    }

    Ok(PeriodDiscontinuity {
        period,
        target,
        conventional,
        bias,
        bias_corrected: conventional - bias,
        above,
        below,
        warnings,
    })
}

fn period_inputs(ds: &PanelDataset, period: i64, target: Target) -> Result<Vec<FitInput>> {
    Ok(ds
        .period(period)?
        .into_iter()
        .map(|o| FitInput {
            unit: o.unit.clone(),
            running: o.running,
            response: target.response(o),
        })
        .collect())
}

/// Conventional and bias-corrected discontinuity of one period.
pub fn bc_discontinuity(ds: &PanelDataset, period: i64, spec: &FitSpec, target: Target) -> Result<PeriodDiscontinuity> {
    let inputs = period_inputs(ds, period, target)?;
    fit_pair(&inputs, ds.cutoff(), period, target, spec)
}

/// `intercept(above) - intercept(below)` of the order-`p` fits.
pub fn discontinuity(ds: &PanelDataset, period: i64, spec: &FitSpec, target: Target) -> Result<f64> {
    let inputs = period_inputs(ds, period, target)?;
    let (h, _) = spec.bandwidths(period);
    let main = LocalPolynomial::new(spec.p, spec.kernel, h);
    let cutoff = ds.cutoff();
    let mut mu = [0.0; 2];
    for (slot, side) in mu.iter_mut().zip(Side::BOTH) {
        let data: Vec<FitInput> = inputs
            .iter()
            .filter(|d| Side::of(d.running, cutoff) == side)
            .cloned()
            .collect();
        *slot = main
            .fit(side, period, cutoff, &data)
            .map_err(|e| e.in_fit(period, side))?
            .intercept();
    }
    Ok(mu[0] - mu[1])
}

/// Estimated first-order smoothing bias of the outcome discontinuity.
pub fn bias_estimate(ds: &PanelDataset, period: i64, spec: &FitSpec) -> Result<f64> {
    if spec.q < 2 {
        return Err(RdError::OrderTooLow {
            order: spec.q,
            required: 2,
        });
    }
    Ok(bc_discontinuity(ds, period, spec, Target::Outcome)?.bias)
}

/// One row of an event-study table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventStudyRow {
    pub period: i64,
    pub conventional: Option<f64>,
    pub bias_corrected: Option<f64>,
    pub se: Option<f64>,
    pub se_bc: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub ci_lower_bc: Option<f64>,
    pub ci_upper_bc: Option<f64>,
    /// Failure description when the period could not be estimated.
    pub error: Option<String>,
}

/// Per-period jumps with single-period standard errors and `1 - alpha` intervals.
///
/// Periods that fail to fit are kept as flagged rows.
pub fn event_study(ds: &PanelDataset, spec: &FitSpec) -> Vec<EventStudyRow> {
    let z = normal_quantile(1.0 - spec.alpha / 2.0);
    ds.periods()
        .map(|period| {
            let row = || -> Result<EventStudyRow> {
                let d = bc_discontinuity(ds, period, spec, Target::Outcome)?;
                let rescov = ResidualCovariance::from_discontinuities([&d], false);
                let v = covariance::discontinuity_variance(&d, Estimator::Conventional, &rescov)?;
                let v_bc = covariance::discontinuity_variance(&d, Estimator::BiasCorrected, &rescov)?;
                let (se, se_bc) = (v.sqrt(), v_bc.sqrt());
                Ok(EventStudyRow {
                    period,
                    conventional: Some(d.conventional),
                    bias_corrected: Some(d.bias_corrected),
                    se: Some(se),
                    se_bc: Some(se_bc),
                    ci_lower: Some(d.conventional - z * se),
                    ci_upper: Some(d.conventional + z * se),
                    ci_lower_bc: Some(d.bias_corrected - z * se_bc),
                    ci_upper_bc: Some(d.bias_corrected + z * se_bc),
                    error: None,
                })
            };
            row().unwrap_or_else(|e| EventStudyRow {
                period,
                conventional: None,
                bias_corrected: None,
                se: None,
                se_bc: None,
                ci_lower: None,
                ci_upper: None,
                ci_lower_bc: None,
                ci_upper_bc: None,
                error: Some(e.to_string()),
            })
        })
        .collect()
}

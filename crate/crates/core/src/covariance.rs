//! Sandwich variances of intercept estimators and their cross-period
//! covariances under the three sampling schemes.
//!
//! Every intercept estimator here is linear in the responses,
//! `mu_hat = sum_i l_i * Y_i`, so with a diagonal residual covariance the
//! sandwich `e_0' H Gamma^-1 Psi Gamma^-1 H' e_0 / n` collapses to
//! `sum_i l_i^2 * eps_i^2`, and the cross-period covariance to
//! `sum_i l_{i,s} * l_{i,t} * eps_{i,s} * eps_{i,t}` over units observed in
//! both periods. The bias-corrected intercept is linear in `Y` as well, with
//! weights that combine the main fit and the pilot curvature fit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Sampling, Side, UnitId};
use crate::discontinuity::{PeriodDiscontinuity, SideFits};
use crate::error::{RdError, Result};
use crate::fit::SideFit;

/// Conventional or bias-corrected estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Conventional,
    BiasCorrected,
}

/// Plug-in residual covariance: diagonal of `Sigma_t` for each period and
/// matched-unit products for each pair of periods.
///
/// Conventional variances use residuals of the order-`p` fit, bias-corrected
/// variances those of the order-`q` pilot fit. A unit outside one window but
/// inside the other falls back to the residual that exists.
#[derive(Debug, Clone, Default)]
pub struct ResidualCovariance {
    main: BTreeMap<i64, BTreeMap<UnitId, f64>>,
    pilot: BTreeMap<i64, BTreeMap<UnitId, f64>>,
    paired: bool,
}

type Residuals = BTreeMap<i64, BTreeMap<UnitId, f64>>;

impl ResidualCovariance {
    /// `paired` enables cross-period products; it is false for repeated cross-sections.
    pub fn from_discontinuities<'a>(discs: impl IntoIterator<Item = &'a PeriodDiscontinuity>, paired: bool) -> Self {
        let mut main: Residuals = BTreeMap::new();
        let mut pilot: Residuals = BTreeMap::new();
        for d in discs {
            for fits in [&d.above, &d.below] {
                insert_fit(main.entry(d.period).or_default(), &fits.main);
                insert_fit(pilot.entry(d.period).or_default(), &fits.pilot);
            }
        }
        ResidualCovariance { main, pilot, paired }
    }

    /// Builds the store from per-period residual maps shared by both estimators.
    pub fn from_residuals(residuals: Residuals, paired: bool) -> Self {
        ResidualCovariance {
            main: residuals.clone(),
            pilot: residuals,
            paired,
        }
    }

    pub fn is_paired(&self) -> bool {
        self.paired
    }

    pub fn residual(&self, period: i64, unit: &UnitId, estimator: Estimator) -> Option<f64> {
        let get = |m: &Residuals| m.get(&period).and_then(|r| r.get(unit)).copied();
        match estimator {
            Estimator::Conventional => get(&self.main).or_else(|| get(&self.pilot)),
            Estimator::BiasCorrected => get(&self.pilot).or_else(|| get(&self.main)),
        }
    }

    /// Diagonal entry of `Sigma_t`.
    pub fn within(&self, period: i64, unit: &UnitId, estimator: Estimator) -> Option<f64> {
        self.residual(period, unit, estimator).map(|e| e * e)
    }

    /// Diagonal entry of `Sigma_{s,t}`; `None` when the unit is not in both periods.
    pub fn cross(&self, s: i64, t: i64, unit: &UnitId, estimator: Estimator) -> Option<f64> {
        if !self.paired {
            return None;
        }
        Some(self.residual(s, unit, estimator)? * self.residual(t, unit, estimator)?)
    }
}

fn insert_fit(map: &mut BTreeMap<UnitId, f64>, fit: &SideFit) {
    for p in fit.points() {
        map.insert(p.unit.clone(), p.residual);
    }
}

/// Linear weights of one intercept estimator in one period.
#[derive(Debug, Clone)]
pub struct InterceptFunctional {
    pub period: i64,
    pub side: Side,
    pub estimator: Estimator,
    pub weights: BTreeMap<UnitId, f64>,
}

impl InterceptFunctional {
    pub fn conventional(fit: &SideFit) -> Self {
        let l = fit.coefficient_weights(0);
        InterceptFunctional {
            period: fit.period,
            side: fit.side,
            estimator: Estimator::Conventional,
            weights: fit.points().iter().zip(l).map(|(p, l)| (p.unit.clone(), l)).collect(),
        }
    }

    /// Weights of `intercept - (h^2/2) * mu''_hat * B`, the bias-corrected intercept.
    pub fn bias_corrected(fits: &SideFits) -> Self {
        let mut f = InterceptFunctional::conventional(&fits.main);
        f.estimator = Estimator::BiasCorrected;
        let h = fits.main.bandwidth;
        let b = fits.pilot.bandwidth;
        let scale = h * h * fits.main.bias_constant(2) / (b * b);
        for (p, m) in fits.pilot.points().iter().zip(fits.pilot.coefficient_weights(2)) {
            *f.weights.entry(p.unit.clone()).or_insert(0.0) -= scale * m;
        }
        f
    }

    pub fn of(fits: &SideFits, estimator: Estimator) -> Self {
        match estimator {
            Estimator::Conventional => InterceptFunctional::conventional(&fits.main),
            Estimator::BiasCorrected => InterceptFunctional::bias_corrected(fits),
        }
    }

    /// Applies the weights to arbitrary responses (used to reproduce point estimates).
    pub fn apply(&self, response: impl Fn(&UnitId) -> f64) -> f64 {
        self.weights.iter().map(|(u, l)| l * response(u)).sum()
    }
}

/// `sum_i l_i^2 eps_i^2` for one functional.
pub fn functional_variance(f: &InterceptFunctional, rescov: &ResidualCovariance) -> Result<f64> {
    f.weights.iter().try_fold(0.0, |acc, (u, l)| {
        let s = rescov
            .within(f.period, u, f.estimator)
            .ok_or_else(|| RdError::MissingResidual {
                unit: u.to_string(),
                period: f.period,
            })?;
        Ok(acc + l * l * s)
    })
}

/// `sum_i l_{i,s} l_{i,t} eps_{i,s} eps_{i,t}` over matched units.
pub fn functional_covariance(
    a: &InterceptFunctional,
    b: &InterceptFunctional,
    rescov: &ResidualCovariance,
) -> Result<f64> {
    if !rescov.is_paired() {
        return Err(RdError::SchemeMismatch);
    }
    let (small, large) = if a.weights.len() <= b.weights.len() {
        (a, b)
    } else {
        (b, a)
    };
    Ok(small
        .weights
        .iter()
        .filter_map(|(u, ls)| {
            let lt = large.weights.get(u)?;
            let prod = rescov.cross(small.period, large.period, u, small.estimator)?;
            Some(ls * lt * prod)
        })
        .sum())
}

/// Heteroskedasticity-robust variance of a conventional intercept estimator.
pub fn intercept_variance(fit: &SideFit, rescov: &ResidualCovariance) -> Result<f64> {
    functional_variance(&InterceptFunctional::conventional(fit), rescov)
}

/// Covariance of two conventional intercept estimators from different periods.
pub fn cross_period_intercept_covariance(fit_s: &SideFit, fit_t: &SideFit, rescov: &ResidualCovariance) -> Result<f64> {
    functional_covariance(
        &InterceptFunctional::conventional(fit_s),
        &InterceptFunctional::conventional(fit_t),
        rescov,
    )
}

/// `V(beta_+) + V(beta_-)`: the two sides of one period are independent.
pub fn discontinuity_variance(
    d: &PeriodDiscontinuity,
    estimator: Estimator,
    rescov: &ResidualCovariance,
) -> Result<f64> {
    Ok(
        functional_variance(&InterceptFunctional::of(&d.above, estimator), rescov)?
            + functional_variance(&InterceptFunctional::of(&d.below, estimator), rescov)?,
    )
}

/// Covariance of the jumps of two distinct periods under `scheme`.
///
/// CS: zero. PC: same-side intercept covariances only. PV: all four blocks,
/// with cross-side blocks entering negatively.
pub fn discontinuity_covariance(
    ds: &PeriodDiscontinuity,
    dt: &PeriodDiscontinuity,
    scheme: Sampling,
    estimator: Estimator,
    rescov: &ResidualCovariance,
) -> Result<f64> {
    if scheme == Sampling::CrossSection {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for a in Side::BOTH {
        for b in Side::BOTH {
            if a != b && scheme == Sampling::PanelConstant {
                continue;
            }
            let fa = InterceptFunctional::of(ds.side(a), estimator);
            let fb = InterceptFunctional::of(dt.side(b), estimator);
            total += a.sign() * b.sign() * functional_covariance(&fa, &fb, rescov)?;
        }
    }
    Ok(total)
}

/// Precomputed per-period variances and pairwise covariances for one estimator and scheme.
#[derive(Debug, Clone)]
pub struct JumpCovariance {
    pub periods: Vec<i64>,
    pub matrix: Vec<Vec<f64>>,
}

impl JumpCovariance {
    pub fn build(
        discs: &BTreeMap<i64, PeriodDiscontinuity>,
        scheme: Sampling,
        estimator: Estimator,
        rescov: &ResidualCovariance,
    ) -> Result<Self> {
        let periods: Vec<i64> = discs.keys().copied().collect();
        let k = periods.len();
        let mut matrix = vec![vec![0.0; k]; k];
        for i in 0..k {
            let di = &discs[&periods[i]];
            matrix[i][i] = discontinuity_variance(di, estimator, rescov)?;
            for j in (i + 1)..k {
                let c = discontinuity_covariance(di, &discs[&periods[j]], scheme, estimator, rescov)?;
                matrix[i][j] = c;
                matrix[j][i] = c;
            }
        }
        Ok(JumpCovariance { periods, matrix })
    }

    fn index(&self, period: i64) -> Result<usize> {
        self.periods
            .iter()
            .position(|&p| p == period)
            .ok_or(RdError::UnknownPeriod(period))
    }

    pub fn get(&self, s: i64, t: i64) -> Result<f64> {
        Ok(self.matrix[self.index(s)?][self.index(t)?])
    }

    /// `c' V c` for a linear combination of jumps; periods absent from `coefs` have weight 0.
    pub fn quadratic_form(&self, coefs: &BTreeMap<i64, f64>) -> Result<f64> {
        let idx: Vec<(usize, f64)> = coefs
            .iter()
            .map(|(&p, &c)| Ok((self.index(p)?, c)))
            .collect::<Result<_>>()?;
        let mut total = 0.0;
        for &(i, ci) in &idx {
            for &(j, cj) in &idx {
                total += ci * cj * self.matrix[i][j];
            }
        }
        Ok(total)
    }
}

/// Variance of `sum_t c_t D_t` under `scheme`. Errors when the result is not positive.
pub fn combination_variance(
    discs: &BTreeMap<i64, PeriodDiscontinuity>,
    coefs: &BTreeMap<i64, f64>,
    scheme: Sampling,
    estimator: Estimator,
    rescov: &ResidualCovariance,
) -> Result<f64> {
    let used: BTreeMap<i64, PeriodDiscontinuity> = coefs
        .keys()
        .map(|p| discs.get(p).cloned().map(|d| (*p, d)).ok_or(RdError::UnknownPeriod(*p)))
        .collect::<Result<_>>()?;
    let v = JumpCovariance::build(&used, scheme, estimator, rescov)?.quadratic_form(coefs)?;
    positive(v)
}

pub(crate) fn positive(v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(RdError::NegativeVariance(v))
    }
}

/// Variance of `D_{t*} - sum_t pi_t D_t` under `scheme`.
pub fn aggregate_variance(
    discs: &BTreeMap<i64, PeriodDiscontinuity>,
    weights: &BTreeMap<i64, f64>,
    target: i64,
    scheme: Sampling,
    estimator: Estimator,
) -> Result<f64> {
    check_weights(weights)?;
    let mut coefs: BTreeMap<i64, f64> = weights.iter().map(|(&p, &w)| (p, -w)).collect();
    if coefs.insert(target, 1.0).is_some() {
        return Err(RdError::InvalidWeights(format!(
            "target period {target} is also a comparison period"
        )));
    }
    let rescov = ResidualCovariance::from_discontinuities(discs.values(), scheme.is_panel());
    combination_variance(discs, &coefs, scheme, estimator, &rescov)
}

pub(crate) fn check_weights(weights: &BTreeMap<i64, f64>) -> Result<()> {
    if weights.is_empty() {
        return Err(RdError::EmptyComparisonSet("no comparison periods".into()));
    }
    if weights.values().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(RdError::InvalidWeights("weights must be nonnegative".into()));
    }
    let sum: f64 = weights.values().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(RdError::InvalidWeights(format!("weights sum to {sum}, not 1")));
    }
    Ok(())
}

//! Diagnostics for running variables that move over time: jumps classified by
//! another period's running variable, composition effects, switchers, and
//! histogram export.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::data::{PanelDataset, Side, UnitId};
use crate::discontinuity::{fit_pair, PeriodDiscontinuity, Target};
use crate::error::{RdError, Result};
use crate::estimate::FitSpec;
use crate::fit::FitInput;

fn require_panel(ds: &PanelDataset, what: &str) -> Result<()> {
    if ds.sampling().is_panel() {
        Ok(())
    } else {
        Err(RdError::NotPanel(format!("{what} needs matched units across periods")))
    }
}

/// Fits period-`outcome_period` outcomes against period-`running_period`
/// running values, over units observed in both periods.
pub fn cross_period_fit(
    ds: &PanelDataset,
    running_period: i64,
    outcome_period: i64,
    spec: &FitSpec,
) -> Result<PeriodDiscontinuity> {
    let outcomes = ds.period(outcome_period)?;
    let inputs: Vec<FitInput> = if running_period == outcome_period {
        outcomes
            .iter()
            .map(|o| FitInput {
                unit: o.unit.clone(),
                running: o.running,
                response: o.outcome,
            })
            .collect()
    } else {
        require_panel(ds, "a cross-period discontinuity")?;
        let running = ds.period_index(running_period)?;
        outcomes
            .iter()
            .filter_map(|o| {
                running.get(&o.unit).map(|r| FitInput {
                    unit: o.unit.clone(),
                    running: r.running,
                    response: o.outcome,
                })
            })
            .collect()
    };
    if inputs.is_empty() {
        return Err(RdError::NotPanel(format!(
            "no units are observed in both period {running_period} and period {outcome_period}"
        )));
    }
    fit_pair(&inputs, ds.cutoff(), outcome_period, Target::Outcome, spec)
}

/// `D_{s,t}`: the jump in period-`t` outcomes when units are placed by their period-`s` running value.
pub fn cross_period_discontinuity(
    ds: &PanelDataset,
    running_period: i64,
    outcome_period: i64,
    spec: &FitSpec,
) -> Result<f64> {
    Ok(cross_period_fit(ds, running_period, outcome_period, spec)?.conventional)
}

/// Change in a baseline-period jump caused only by reclassifying units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionEstimate {
    pub outcome_period: i64,
    pub alt_running_period: i64,
    /// `D_{s,t0} - D_{t0,t0}`.
    pub point: f64,
    pub se: f64,
    /// `D_{s,t0}`.
    pub alt_jump: f64,
    /// `D_{t0,t0}`.
    pub baseline_jump: f64,
    pub notes: Vec<String>,
}

/// Per-unit `sum sign * l_i * eps_i` of a conventional jump.
fn jump_influence(d: &PeriodDiscontinuity, scale: f64, acc: &mut BTreeMap<UnitId, f64>) {
    for side in Side::BOTH {
        let fit = &d.side(side).main;
        for (pt, l) in fit.points().iter().zip(fit.coefficient_weights(0)) {
            *acc.entry(pt.unit.clone()).or_insert(0.0) += scale * side.sign() * l * pt.residual;
        }
    }
}

/// Composition effect of moving from `outcome_period`'s running variable to
/// `alt_running_period`'s, holding the outcome period fixed.
pub fn composition_effect(
    ds: &PanelDataset,
    outcome_period: i64,
    alt_running_period: i64,
    spec: &FitSpec,
) -> Result<CompositionEstimate> {
    require_panel(ds, "a composition effect")?;
    if !ds.taxonomy().is_pure(outcome_period) {
        return Err(RdError::TaxonomyViolation(outcome_period));
    }
    let alt = cross_period_fit(ds, alt_running_period, outcome_period, spec)?;
    let base = cross_period_fit(ds, outcome_period, outcome_period, spec)?;

    // Both jumps are linear in the same outcomes; a unit contributes to both.
    let mut influence = BTreeMap::new();
    jump_influence(&alt, 1.0, &mut influence);
    jump_influence(&base, -1.0, &mut influence);
    let var: f64 = influence.values().map(|x| x * x).sum();

    let mut notes = Vec::new();
    let point = alt.conventional - base.conventional;
    if point == 0.0 {
        notes.push("no unit changes side between the two periods; the composition effect is zero".to_string());
    }
    Ok(CompositionEstimate {
        outcome_period,
        alt_running_period,
        point,
        se: var.sqrt(),
        alt_jump: alt.conventional,
        baseline_jump: base.conventional,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SwitcherSummary {
    pub period_a: i64,
    pub period_b: i64,
    /// Units observed in both periods.
    pub total_units: usize,
    pub switchers: usize,
    /// Below the cutoff in `period_a`, at or above it in `period_b`.
    pub upward: usize,
    pub downward: usize,
    pub switcher_ids: Vec<UnitId>,
}

/// Units whose side of the cutoff differs between two periods.
pub fn switcher_summary(ds: &PanelDataset, period_a: i64, period_b: i64) -> Result<SwitcherSummary> {
    require_panel(ds, "switcher enumeration")?;
    let a = ds.period(period_a)?;
    let b = ds.period_index(period_b)?;
    let c = ds.cutoff();
    let (mut total, mut upward, mut downward) = (0, 0, 0);
    let mut switcher_ids = Vec::new();
    for o in a {
        let Some(other) = b.get(&o.unit) else { continue };
        total += 1;
        match (o.side(c), other.side(c)) {
            (Side::Below, Side::Above) => upward += 1,
            (Side::Above, Side::Below) => downward += 1,
            _ => continue,
        }
        switcher_ids.push(o.unit.clone());
    }
    switcher_ids.sort();
    Ok(SwitcherSummary {
        period_a,
        period_b,
        total_units: total,
        switchers: upward + downward,
        upward,
        downward,
        switcher_ids,
    })
}

/// Units that are on different sides of the cutoff in at least two periods.
/// Empty for cross-section data.
pub fn switcher_units(ds: &PanelDataset) -> Vec<UnitId> {
    if !ds.sampling().is_panel() {
        return Vec::new();
    }
    let c = ds.cutoff();
    let mut sides: BTreeMap<&UnitId, (bool, bool)> = BTreeMap::new();
    for o in ds.observations() {
        let e = sides.entry(&o.unit).or_default();
        match o.side(c) {
            Side::Above => e.0 = true,
            Side::Below => e.1 = true,
        }
    }
    sides
        .into_iter()
        .filter(|(_, (up, down))| *up && *down)
        .map(|(u, _)| u.clone())
        .collect()
}

/// One histogram bin `[lower, upper)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityBin {
    pub lower: f64,
    pub upper: f64,
    /// Observations counted in the bin (after exclusion when switchers are omitted).
    pub count: usize,
    /// Switcher observations falling in the bin.
    pub switchers: usize,
}

/// Histogram of one period's running variable with the cutoff on a bin edge.
///
/// Switchers are units that change side in any pair of periods; with
/// `omit_switchers` they are excluded from `count`.
pub fn density_export(ds: &PanelDataset, period: i64, bin_width: f64, omit_switchers: bool) -> Result<Vec<DensityBin>> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(RdError::NonPositiveBinWidth(bin_width));
    }
    if !ds.has_period(period) {
        return Ok(Vec::new());
    }
    let switchers: std::collections::HashSet<UnitId> = switcher_units(ds).into_iter().collect();
    let c = ds.cutoff();
    let mut bins: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
    for o in ds.period(period)? {
        let k = ((o.running - c) / bin_width).floor() as i64;
        let e = bins.entry(k).or_default();
        let is_switcher = switchers.contains(&o.unit);
        if is_switcher {
            e.1 += 1;
        }
        if !(omit_switchers && is_switcher) {
            e.0 += 1;
        }
    }
    let (Some(&lo), Some(&hi)) = (bins.keys().next(), bins.keys().next_back()) else {
        return Ok(Vec::new());
    };
    Ok((lo..=hi)
        .map(|k| {
            let (count, switchers) = bins.get(&k).copied().unwrap_or_default();
            DensityBin {
                lower: c + k as f64 * bin_width,
                upper: c + (k + 1) as f64 * bin_width,
                count,
                switchers,
            }
        })
        .collect())
}

//! Command dispatch for the `rddid` binary.
//!
//! Every command reads a [`RunConfig`] and produces an [`Artifact`]: a
//! machine-readable body (JSON or CSV) and a human-readable summary.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use rddid::composition::{composition_effect, density_export, switcher_summary, switcher_units};
use rddid::discontinuity::event_study;
use rddid::estimate::{compare_jumps, estimate, EffectEstimate, JumpComparison};
use rddid::io::RunConfig;
use rddid::sim::{coverage_csv, run_coverage_study, CoverageStudy};
use rddid::{Estimator, PanelDataset, RdError, Result, Sampling, Side};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Estimate,
    EventStudy,
    Simulate,
    Equivalence,
    Composition,
    Switchers,
    Density,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Estimate,
        Command::EventStudy,
        Command::Simulate,
        Command::Equivalence,
        Command::Composition,
        Command::Switchers,
        Command::Density,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Estimate => "estimate",
            Command::EventStudy => "event-study",
            Command::Simulate => "simulate",
            Command::Equivalence => "equivalence",
            Command::Composition => "composition",
            Command::Switchers => "switchers",
            Command::Density => "density",
        }
    }

    pub fn about(self) -> &'static str {
        match self {
            Command::Estimate => "Estimate the target-period effect (JSON)",
            Command::EventStudy => "Per-period jumps with confidence intervals (CSV)",
            Command::Simulate => "Monte-Carlo coverage study (CSV)",
            Command::Equivalence => "Difference and equivalence tests of two periods' jumps (JSON)",
            Command::Composition => "Composition effect of a time-varying running variable (JSON)",
            Command::Switchers => "Units that change side of the cutoff between two periods (CSV)",
            Command::Density => "Running-variable histogram (CSV)",
        }
    }
}

impl FromStr for Command {
    type Err = RdError;

    fn from_str(s: &str) -> Result<Command> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| RdError::Config(format!("unknown command `{s}`")))
    }
}

/// Output of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    /// JSON or CSV document.
    pub body: String,
    pub summary: String,
    pub warnings: Vec<String>,
}

const OMIT_WARNING: &str =
    "omitting switchers changes the running-variable density near the cutoff, much like a donut-hole design";

fn json(value: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| RdError::InvalidData(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn csv_rows<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| RdError::InvalidData(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| RdError::InvalidData(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits UTF-8"))
}

/// Loads the dataset, optionally dropping switchers.
fn load(cfg: &RunConfig, warnings: &mut Vec<String>) -> Result<PanelDataset> {
    let ds = cfg.dataset()?;
    if !cfg.flag("switchers.omit")? {
        return Ok(ds);
    }
    warnings.push(OMIT_WARNING.to_string());
    let drop: BTreeSet<_> = switcher_units(&ds).into_iter().collect();
    ds.filter(|o| !drop.contains(&o.unit))
}

/// Fails on any taxonomy or sampling violation.
fn check(ds: &PanelDataset, design: rddid::Design) -> Result<()> {
    let report = ds.validate(design);
    if report.is_empty() {
        return Ok(());
    }
    let shown: Vec<String> = report.violations.iter().take(5).map(ToString::to_string).collect();
    let more = report.violations.len().saturating_sub(shown.len());
    let mut msg = format!(
        "{} validation problem(s): {}",
        report.violations.len(),
        shown.join("; ")
    );
    if more > 0 {
        let _ = write!(msg, "; and {more} more");
    }
    Err(RdError::InvalidData(msg))
}

pub fn estimate_summary(e: &EffectEstimate) -> String {
    let level = 100.0 * (1.0 - e.alpha);
    let mut s = format!(
        "{} {} in period {} ({:?} trend, {} variance)\n",
        match e.design {
            rddid::Design::Sharp => "sharp",
            rddid::Design::Fuzzy => "fuzzy",
        },
        e.estimand,
        e.target_period,
        e.trend,
        e.scheme.code(),
    );
    let _ = writeln!(
        s,
        "  conventional    {:>12.4}  se {:>10.4}  {level:.0}% CI [{:.4}, {:.4}]",
        e.point, e.se, e.ci_lower, e.ci_upper
    );
    let _ = writeln!(
        s,
        "  bias-corrected  {:>12.4}  se {:>10.4}  {level:.0}% CI [{:.4}, {:.4}]",
        e.bias_corrected_point, e.se_bc, e.ci_lower_bc, e.ci_upper_bc
    );
    let weights: Vec<String> = e
        .comparison_weights
        .iter()
        .map(|(p, w)| format!("{p}:{w:.4}"))
        .collect();
    let _ = writeln!(s, "  comparison weights {}", weights.join(", "));
    for n in &e.notes {
        let _ = writeln!(s, "  note: {n}");
    }
    s
}

fn comparison_summary(c: &JumpComparison) -> String {
    let mut s = format!(
        "jump in {} vs {} ({} variance), margin {:.4}, alpha {}\n",
        c.period_b,
        c.period_a,
        c.scheme.code(),
        c.delta,
        c.alpha
    );
    for (name, t) in [("conventional", &c.conventional), ("bias-corrected", &c.bias_corrected)] {
        let _ = writeln!(
            s,
            "  {name:<15} diff {:>10.4}  se {:>9.4}  p {:.4}  equivalent: {}  minimal margin {:.4}",
            t.difference.difference,
            t.se_diff,
            t.difference.p_value,
            if t.equivalence.reject_equivalence_null {
                "yes"
            } else {
                "no"
            },
            t.equivalence.minimal_delta
        );
    }
    s
}

#[derive(Serialize)]
struct SwitcherRow<'a> {
    unit_id: &'a str,
    running_a: f64,
    running_b: f64,
    direction: &'static str,
}

/// Runs one command.
pub fn run(command: Command, cfg: &RunConfig) -> Result<Artifact> {
    let mut warnings = Vec::new();
    let (body, summary) = match command {
        Command::Estimate => {
            let ds = load(cfg, &mut warnings)?;
            let spec = cfg.fit_spec()?;
            check(&ds, spec.design)?;
            let e = estimate(&ds, &spec)?;
            (json(&e)?, estimate_summary(&e))
        }
        Command::EventStudy => {
            let ds = load(cfg, &mut warnings)?;
            let spec = cfg.fit_spec()?;
            let rows = event_study(&ds, &spec);
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            for r in rows.iter().filter(|r| r.error.is_some()) {
                warnings.push(format!("period {}: {}", r.period, r.error.as_deref().unwrap_or("")));
            }
            (csv_rows(&rows)?, format!("{} periods, {failed} failed\n", rows.len()))
        }
        Command::Simulate => {
            let base = cfg.sim_config()?;
            let mut study = CoverageStudy::new(cfg.sim_grid()?, cfg.sim_reps()?);
            study.threads = cfg.sim_threads()?;
            study.bandwidth_ratio = cfg.sim_bandwidth_ratio()?;
            let rows = run_coverage_study(&base, &study)?;
            let mut summary = String::new();
            for r in &rows {
                let _ = writeln!(
                    summary,
                    "{} n={} h={}: coverage conv CS/PC/PV {:.3}/{:.3}/{:.3}, BC {:.3}/{:.3}/{:.3} ({} failed)",
                    r.dgp.code(),
                    r.n,
                    r.h,
                    r.coverage(Estimator::Conventional, Sampling::CrossSection),
                    r.coverage(Estimator::Conventional, Sampling::PanelConstant),
                    r.coverage(Estimator::Conventional, Sampling::PanelVarying),
                    r.coverage(Estimator::BiasCorrected, Sampling::CrossSection),
                    r.coverage(Estimator::BiasCorrected, Sampling::PanelConstant),
                    r.coverage(Estimator::BiasCorrected, Sampling::PanelVarying),
                    r.failures
                );
            }
            (coverage_csv(&rows)?, summary)
        }
        Command::Equivalence => {
            let ds = load(cfg, &mut warnings)?;
            let spec = cfg.fit_spec()?;
            let c = compare_jumps(
                &ds,
                &spec,
                cfg.period("equivalence.period_a")?,
                cfg.period("equivalence.period_b")?,
                cfg.equivalence_delta()?,
            )?;
            (json(&c)?, comparison_summary(&c))
        }
        Command::Composition => {
            let ds = load(cfg, &mut warnings)?;
            let spec = cfg.fit_spec()?;
            let c = composition_effect(
                &ds,
                cfg.period("composition.baseline")?,
                cfg.period("composition.alt_period")?,
                &spec,
            )?;
            let mut summary = format!(
                "composition effect {:.4} (se {:.4}): jump {:.4} with period-{} running variable vs {:.4} with period-{}\n",
                c.point, c.se, c.alt_jump, c.alt_running_period, c.baseline_jump, c.outcome_period
            );
            for n in &c.notes {
                let _ = writeln!(summary, "  note: {n}");
            }
            (json(&c)?, summary)
        }
        Command::Switchers => {
            let ds = cfg.dataset()?;
            let (a, b) = (cfg.period("switchers.period_a")?, cfg.period("switchers.period_b")?);
            let s = switcher_summary(&ds, a, b)?;
            let ia = ds.period_index(a)?;
            let ib = ds.period_index(b)?;
            let rows: Vec<SwitcherRow> = s
                .switcher_ids
                .iter()
                .map(|u| {
                    let (ra, rb) = (ia[u].running, ib[u].running);
                    SwitcherRow {
                        unit_id: u.as_str(),
                        running_a: ra,
                        running_b: rb,
                        direction: match Side::of(rb, ds.cutoff()) {
                            Side::Above => "upward",
                            Side::Below => "downward",
                        },
                    }
                })
                .collect();
            let body = if rows.is_empty() {
                "unit_id,running_a,running_b,direction\n".to_string()
            } else {
                csv_rows(&rows)?
            };
            (
                body,
                format!(
                    "{} of {} units switch between {a} and {b}: {} upward, {} downward\n",
                    s.switchers, s.total_units, s.upward, s.downward
                ),
            )
        }
        Command::Density => {
            let ds = cfg.dataset()?;
            let omit = cfg.flag("density.omit_switchers")?;
            if omit {
                warnings.push(OMIT_WARNING.to_string());
            }
            let period = cfg.period("density.period")?;
            let bins = density_export(&ds, period, cfg.bin_width()?, omit)?;
            let body = if bins.is_empty() {
                "lower,upper,count,switchers\n".to_string()
            } else {
                csv_rows(&bins)?
            };
            let total: usize = bins.iter().map(|b| b.count).sum();
            (body, format!("{} bins, {total} units in period {period}\n", bins.len()))
        }
    };
    Ok(Artifact {
        body,
        summary,
        warnings,
    })
}

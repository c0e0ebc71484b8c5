//! Long-format panel data, period taxonomy and validation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result};

/// Opaque unit identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitId(pub String);

impl UnitId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for UnitId {
    fn from(s: &str) -> Self {
        UnitId(s.to_owned())
    }
}

impl From<String> for UnitId {
    fn from(s: String) -> Self {
        UnitId(s)
    }
}

/// One unit-period cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub unit: UnitId,
    pub period: i64,
    pub running: f64,
    pub treated: bool,
    pub outcome: f64,
}

impl Observation {
    pub fn new(unit: impl Into<UnitId>, period: i64, running: f64, treated: bool, outcome: f64) -> Self {
        Observation {
            unit: unit.into(),
            period,
            running,
            treated,
            outcome,
        }
    }

    pub fn side(&self, cutoff: f64) -> Side {
        Side::of(self.running, cutoff)
    }
}

/// Side of the cutoff. Ties at exactly the cutoff belong above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Above,
    Below,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Above, Side::Below];

    pub fn of(running: f64, cutoff: f64) -> Side {
        if running >= cutoff {
            Side::Above
        } else {
            Side::Below
        }
    }

    /// +1 above, -1 below: the sign each side's intercept carries in a jump.
    pub fn sign(self) -> f64 {
        match self {
            Side::Above => 1.0,
            Side::Below => -1.0,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Above => "above",
            Side::Below => "below",
        })
    }
}

/// Sampling scheme of the data across periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Sampling {
    /// Repeated cross-section: every period draws fresh units.
    #[default]
    #[serde(rename = "CS")]
    CrossSection,
    /// Panel with a running variable that is constant over time.
    #[serde(rename = "PC")]
    PanelConstant,
    /// Panel with a time-varying running variable.
    #[serde(rename = "PV")]
    PanelVarying,
}

impl Sampling {
    pub const ALL: [Sampling; 3] = [Sampling::CrossSection, Sampling::PanelConstant, Sampling::PanelVarying];

    pub fn code(self) -> &'static str {
        match self {
            Sampling::CrossSection => "CS",
            Sampling::PanelConstant => "PC",
            Sampling::PanelVarying => "PV",
        }
    }

    pub fn is_panel(self) -> bool {
        self != Sampling::CrossSection
    }
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Sampling {
    type Err = RdError;

    fn from_str(s: &str) -> Result<Sampling> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CS" => Ok(Sampling::CrossSection),
            "PC" => Ok(Sampling::PanelConstant),
            "PV" => Ok(Sampling::PanelVarying),
            other => Err(RdError::Config(format!(
                "unknown sampling scheme `{other}` (expected CS, PC or PV)"
            ))),
        }
    }
}

/// Treatment assignment at the cutoff in RD periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    #[default]
    Sharp,
    Fuzzy,
}

impl FromStr for Design {
    type Err = RdError;

    fn from_str(s: &str) -> Result<Design> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sharp" => Ok(Design::Sharp),
            "fuzzy" => Ok(Design::Fuzzy),
            other => Err(RdError::Config(format!("unknown design `{other}`"))),
        }
    }
}

/// Classification of periods: all untreated, all treated, or RD-assigned.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PeriodTaxonomy {
    pub untreated: BTreeSet<i64>,
    pub treated: BTreeSet<i64>,
    pub rd: BTreeSet<i64>,
    pub target: i64,
}

impl PeriodTaxonomy {
    pub fn new(
        untreated: impl IntoIterator<Item = i64>,
        treated: impl IntoIterator<Item = i64>,
        rd: impl IntoIterator<Item = i64>,
        target: i64,
    ) -> Result<Self> {
        let tax = PeriodTaxonomy {
            untreated: untreated.into_iter().collect(),
            treated: treated.into_iter().collect(),
            rd: rd.into_iter().collect(),
            target,
        };
        tax.check()?;
        Ok(tax)
    }

    /// Two periods, first untreated, second RD and target.
    pub fn canonical(pre: i64, post: i64) -> Self {
        PeriodTaxonomy {
            untreated: [pre].into(),
            treated: BTreeSet::new(),
            rd: [post].into(),
            target: post,
        }
    }

    fn check(&self) -> Result<()> {
        let overlap = self
            .untreated
            .intersection(&self.treated)
            .chain(self.untreated.intersection(&self.rd))
            .chain(self.treated.intersection(&self.rd))
            .next();
        if let Some(p) = overlap {
            return Err(RdError::Config(format!(
                "period {p} appears in more than one taxonomy set"
            )));
        }
        if !self.rd.contains(&self.target) {
            return Err(RdError::Config(format!(
                "target period {} is not an RD period",
                self.target
            )));
        }
        Ok(())
    }

    pub fn all(&self) -> BTreeSet<i64> {
        self.untreated
            .iter()
            .chain(&self.treated)
            .chain(&self.rd)
            .copied()
            .collect()
    }

    pub fn is_pure(&self, period: i64) -> bool {
        self.untreated.contains(&period) || self.treated.contains(&period)
    }
}

/// An immutable long-format dataset with its cutoff, taxonomy and declared sampling scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    observations: Vec<Observation>,
    cutoff: f64,
    taxonomy: PeriodTaxonomy,
    sampling: Sampling,
    by_period: BTreeMap<i64, Vec<usize>>,
}

impl PanelDataset {
    /// Builds a dataset. Non-finite values and duplicate `(unit, period)`
    /// cells are rejected here; softer consistency checks live in
    /// [`PanelDataset::validate`].
    pub fn new(
        observations: Vec<Observation>,
        cutoff: f64,
        taxonomy: PeriodTaxonomy,
        sampling: Sampling,
    ) -> Result<Self> {
        if !cutoff.is_finite() {
            return Err(RdError::InvalidData(format!("cutoff {cutoff} is not finite")));
        }
        taxonomy.check()?;
        let mut by_period: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        let mut seen = HashMap::with_capacity(observations.len());
        for (i, o) in observations.iter().enumerate() {
            if !o.running.is_finite() || !o.outcome.is_finite() {
                return Err(RdError::InvalidData(format!(
                    "non-finite value for unit `{}` in period {}",
                    o.unit, o.period
                )));
            }
            if seen.insert((o.unit.clone(), o.period), i).is_some() {
                return Err(RdError::InvalidData(format!(
                    "duplicate observation for unit `{}` in period {}",
                    o.unit, o.period
                )));
            }
            by_period.entry(o.period).or_default().push(i);
        }
        Ok(PanelDataset {
            observations,
            cutoff,
            taxonomy,
            sampling,
            by_period,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn taxonomy(&self) -> &PeriodTaxonomy {
        &self.taxonomy
    }

    pub fn sampling(&self) -> Sampling {
        self.sampling
    }

    pub fn periods(&self) -> impl Iterator<Item = i64> + '_ {
        self.by_period.keys().copied()
    }

    pub fn has_period(&self, period: i64) -> bool {
        self.by_period.contains_key(&period)
    }

    /// All observations of one period, in input order.
    pub fn period(&self, period: i64) -> Result<Vec<&Observation>> {
        let idx = self.by_period.get(&period).ok_or(RdError::UnknownPeriod(period))?;
        Ok(idx.iter().map(|&i| &self.observations[i]).collect())
    }

    /// Observations of `period` on one side of the cutoff (`running >= cutoff` is above).
    pub fn side_slice(&self, period: i64, side: Side) -> Result<Vec<&Observation>> {
        Ok(self
            .period(period)?
            .into_iter()
            .filter(|o| o.side(self.cutoff) == side)
            .collect())
    }

    /// Map unit -> observation for one period.
    pub fn period_index(&self, period: i64) -> Result<HashMap<&UnitId, &Observation>> {
        Ok(self.period(period)?.into_iter().map(|o| (&o.unit, o)).collect())
    }

    /// Copy of the dataset with a different declared sampling scheme.
    pub fn with_sampling(&self, sampling: Sampling) -> Self {
        PanelDataset {
            sampling,
            ..self.clone()
        }
    }

    /// Copy keeping only observations for which `keep` is true.
    pub fn filter(&self, mut keep: impl FnMut(&Observation) -> bool) -> Result<Self> {
        let obs = self.observations.iter().filter(|o| keep(o)).cloned().collect();
        PanelDataset::new(obs, self.cutoff, self.taxonomy.clone(), self.sampling)
    }

    /// Copy with every outcome replaced by `f(observation)`.
    pub fn map_outcomes(&self, mut f: impl FnMut(&Observation) -> f64) -> Result<Self> {
        let obs = self
            .observations
            .iter()
            .map(|o| Observation {
                outcome: f(o),
                ..o.clone()
            })
            .collect();
        PanelDataset::new(obs, self.cutoff, self.taxonomy.clone(), self.sampling)
    }

    /// Checks the dataset against its taxonomy and declared sampling scheme.
    ///
    /// With `design == Sharp`, treatment in RD periods must equal
    /// `1{running >= cutoff}`.
    pub fn validate(&self, design: Design) -> ValidationReport {
        let mut violations = Vec::new();

        for &p in &self.taxonomy.all() {
            if !self.has_period(p) {
                violations.push(Violation {
                    kind: ViolationKind::MissingPeriod,
                    unit: None,
                    period: Some(p),
                });
            }
        }

        for o in &self.observations {
            let kind = if self.taxonomy.untreated.contains(&o.period) && o.treated {
                Some(ViolationKind::TreatedInUntreatedPeriod)
            } else if self.taxonomy.treated.contains(&o.period) && !o.treated {
                Some(ViolationKind::UntreatedInTreatedPeriod)
            } else if design == Design::Sharp
                && self.taxonomy.rd.contains(&o.period)
                && o.treated != (o.side(self.cutoff) == Side::Above)
            {
                Some(ViolationKind::SharpAssignmentMismatch)
            } else {
                None
            };
            if let Some(kind) = kind {
                violations.push(Violation {
                    kind,
                    unit: Some(o.unit.clone()),
                    period: Some(o.period),
                });
            }
        }

        if self.sampling == Sampling::PanelConstant {
            let mut first: BTreeMap<&UnitId, f64> = BTreeMap::new();
            let mut flagged = BTreeSet::new();
            for o in &self.observations {
                match first.get(&o.unit) {
                    None => {
                        first.insert(&o.unit, o.running);
                    }
                    Some(&r) if r != o.running && flagged.insert(&o.unit) => {
                        violations.push(Violation {
                            kind: ViolationKind::RunningVariesUnderPc,
                            unit: Some(o.unit.clone()),
                            period: Some(o.period),
                        });
                    }
                    Some(_) => {}
                }
            }
        }

        ValidationReport { violations }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    MissingPeriod,
    TreatedInUntreatedPeriod,
    UntreatedInTreatedPeriod,
    SharpAssignmentMismatch,
    RunningVariesUnderPc,
}

impl ViolationKind {
    pub fn message(self) -> &'static str {
        match self {
            ViolationKind::MissingPeriod => "taxonomy period has no observations",
            ViolationKind::TreatedInUntreatedPeriod => "treated unit in all-untreated period",
            ViolationKind::UntreatedInTreatedPeriod => "untreated unit in all-treated period",
            ViolationKind::SharpAssignmentMismatch => "treatment differs from sharp assignment 1{running >= cutoff}",
            ViolationKind::RunningVariesUnderPc => "running variable varies under PC",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub unit: Option<UnitId>,
    pub period: Option<i64>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.message())?;
        if let Some(u) = &self.unit {
            write!(f, " (unit `{u}`")?;
            if let Some(p) = self.period {
                write!(f, ", period {p}")?;
            }
            f.write_str(")")?;
        } else if let Some(p) = self.period {
            write!(f, " (period {p})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

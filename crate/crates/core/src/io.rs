//! Panel CSV ingestion and export, and the flat `key = value` run configuration.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::data::{Observation, PanelDataset, PeriodTaxonomy, Sampling, UnitId};
use crate::error::{RdError, Result};
use crate::estimate::{FitSpec, WeightScheme};
use crate::sim::{GridCell, PeriodPolys, SimConfig};

/// Required header of a panel CSV file.
pub const CSV_HEADER: [&str; 5] = ["unit_id", "period", "running", "treated", "outcome"];

fn parse_err(line: u64, msg: impl std::fmt::Display) -> RdError {
    RdError::InvalidData(format!("line {line}: {msg}"))
}

fn parse_number(line: u64, column: &str, cell: &str) -> Result<f64> {
    if cell.trim().is_empty() {
        return Err(parse_err(line, format_args!("`{column}` is blank")));
    }
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format_args!("`{column}` is not a number: `{cell}`")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format_args!("`{column}` is not finite: `{cell}`")));
    }
    Ok(v)
}

/// Reads observations from CSV text with the header `unit_id,period,running,treated,outcome`.
pub fn read_observations(reader: impl Read) -> Result<Vec<Observation>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_err(1, e))?.iter().collect::<Vec<_>>();
    if header != CSV_HEADER {
        return Err(parse_err(
            1,
            format_args!(
                "header must be `{}`, found `{}`",
                CSV_HEADER.join(","),
                header.join(",")
            ),
        ));
    }
    let mut seen: HashMap<(String, i64), u64> = HashMap::new();
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e)
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let unit = record[0].trim();
        if unit.is_empty() {
            return Err(parse_err(line, "`unit_id` is blank"));
        }
        let period: i64 = record[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format_args!("`period` is not an integer: `{}`", &record[1])))?;
        let running = parse_number(line, "running", &record[2])?;
        let treated = match record[3].trim() {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(line, format_args!("`treated` must be 0 or 1, got `{other}`"))),
        };
        let outcome = parse_number(line, "outcome", &record[4])?;
        if let Some(first) = seen.insert((unit.to_string(), period), line) {
            return Err(parse_err(
                line,
                format_args!("duplicate observation for unit `{unit}` in period {period} (first on line {first})"),
            ));
        }
        out.push(Observation::new(unit, period, running, treated, outcome));
    }
    Ok(out)
}

/// Reads a panel CSV file into a dataset.
pub fn parse_panel_csv(
    path: impl AsRef<Path>,
    cutoff: f64,
    taxonomy: PeriodTaxonomy,
    sampling: Sampling,
) -> Result<PanelDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| RdError::InvalidData(format!("{}: {e}", path.display())))?;
    let obs = read_observations(file).map_err(|e| match e {
        RdError::InvalidData(m) => RdError::InvalidData(format!("{}: {m}", path.display())),
        other => other,
    })?;
    PanelDataset::new(obs, cutoff, taxonomy, sampling)
}

/// Writes observations in the format read by [`read_observations`].
pub fn write_observations(obs: &[Observation], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| RdError::InvalidData(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for o in obs {
        w.write_record([
            o.unit.as_str().to_string(),
            o.period.to_string(),
            o.running.to_string(),
            u8::from(o.treated).to_string(),
            o.outcome.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| RdError::InvalidData(e.to_string()))
}

pub fn write_panel_csv(ds: &PanelDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| RdError::InvalidData(format!("{}: {e}", path.display())))?;
    write_observations(ds.observations(), file)
}

/// Every key accepted in a config file, with a one-line description.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("input", "panel CSV file"),
    ("output", "write machine-readable output here instead of stdout"),
    ("cutoff", "cutoff of the running variable"),
    ("sampling", "CS, PC or PV"),
    ("taxonomy.untreated", "periods in which no unit is treated"),
    ("taxonomy.treated", "periods in which every unit is treated"),
    ("taxonomy.rd", "periods in which treatment follows the cutoff"),
    ("taxonomy.target", "RD period whose effect is estimated"),
    ("fit.p", "order of the main local polynomial"),
    ("fit.q", "order of the pilot polynomial"),
    ("fit.h", "main bandwidth"),
    ("fit.b", "pilot bandwidth (default 2h)"),
    ("fit.kernel", "uniform, triangular or epanechnikov"),
    ("fit.bandwidths", "per-period overrides, period:h:b,..."),
    ("fit.weights", "uniform, nearest, min-variance or period:weight,..."),
    ("fit.trend", "constant or linear"),
    ("fit.estimand", "ATT or ATU"),
    ("fit.design", "sharp or fuzzy"),
    ("fit.alpha", "significance level"),
    ("equivalence.period_a", "first period of the comparison"),
    ("equivalence.period_b", "second period of the comparison"),
    (
        "equivalence.delta",
        "equivalence margin (default 0.36 x pooled outcome SD)",
    ),
    ("composition.baseline", "all-treated or all-untreated outcome period"),
    (
        "composition.alt_period",
        "period whose running variable reclassifies units",
    ),
    ("switchers.period_a", "first period"),
    ("switchers.period_b", "second period"),
    ("switchers.omit", "drop switchers before estimating (true/false)"),
    ("density.period", "period to histogram"),
    ("density.bin_width", "bin width"),
    (
        "density.omit_switchers",
        "exclude switchers from the counts (true/false)",
    ),
    ("simulate.seed", "64-bit seed (required)"),
    ("simulate.reps", "replications per cell"),
    ("simulate.grid", "cells as DGP:n:h,..."),
    ("simulate.threads", "worker threads"),
    ("simulate.bandwidth_ratio", "pilot bandwidth as a multiple of h"),
    ("simulate.jumps", "outcome jumps D1,D2"),
    ("simulate.unit_fe", "unit effect mean,sd"),
    ("simulate.time_fe", "time effects t1,t2"),
    ("simulate.noise_sd", "idiosyncratic noise sd"),
    ("simulate.pv_link", "PV running-variable link slope,mean,sd"),
    ("simulate.poly.1.above", "period-1 coefficients on x..x^5, x = R/1000"),
    ("simulate.poly.1.below", "period-1 coefficients below the cutoff"),
    ("simulate.poly.2.above", "period-2 coefficients above the cutoff"),
    ("simulate.poly.2.below", "period-2 coefficients below the cutoff"),
];

fn known(key: &str) -> bool {
    CONFIG_KEYS.iter().any(|(k, _)| *k == key)
}

/// Validated run configuration: a flat map of known keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| RdError::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if cfg.values.contains_key(k) {
                return Err(RdError::Config(format!("line {}: `{k}` is set twice", i + 1)));
            }
            cfg.set(k, v).map_err(|e| match e {
                RdError::Config(m) => RdError::Config(format!("line {}: {m}", i + 1)),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RdError::Config(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    /// Sets (or overrides) one key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !known(key) {
            return Err(RdError::Config(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| RdError::Config(format!("`{key}` is required")))
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| RdError::Config(format!("`{key}`: cannot parse `{v}`")))
            })
            .transpose()
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parsed(key)?
            .ok_or_else(|| RdError::Config(format!("`{key}` is required")))
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            None => Ok(false),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(RdError::Config(format!("`{key}` must be true or false, got `{v}`"))),
        }
    }

    pub fn period(&self, key: &str) -> Result<i64> {
        self.required(key)
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let Some(v) = self.get(key) else { return Ok(Vec::new()) };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| RdError::Config(format!("`{key}`: cannot parse `{s}`")))
            })
            .collect()
    }

    fn fixed<const N: usize>(&self, key: &str) -> Result<Option<[f64; N]>> {
        if self.get(key).is_none() {
            return Ok(None);
        }
        let v: Vec<f64> = self.list(key)?;
        v.try_into()
            .map(Some)
            .map_err(|v: Vec<f64>| RdError::Config(format!("`{key}` needs {N} values, got {}", v.len())))
    }

    pub fn input(&self) -> Result<&str> {
        self.require("input")
    }

    pub fn cutoff(&self) -> Result<f64> {
        self.required("cutoff")
    }

    pub fn sampling(&self) -> Result<Sampling> {
        Ok(self.parsed("sampling")?.unwrap_or_default())
    }

    pub fn taxonomy(&self) -> Result<PeriodTaxonomy> {
        PeriodTaxonomy::new(
            self.list("taxonomy.untreated")?,
            self.list("taxonomy.treated")?,
            self.list("taxonomy.rd")?,
            self.required("taxonomy.target")?,
        )
    }

    /// Reads the input file with the configured cutoff, taxonomy and sampling.
    pub fn dataset(&self) -> Result<PanelDataset> {
        parse_panel_csv(self.input()?, self.cutoff()?, self.taxonomy()?, self.sampling()?)
    }

    pub fn fit_spec(&self) -> Result<FitSpec> {
        let h: f64 = self.required("fit.h")?;
        let mut spec = FitSpec::new(h);
        if let Some(b) = self.parsed("fit.b")? {
            spec.b = b;
        }
        if let Some(p) = self.parsed("fit.p")? {
            spec.p = p;
        }
        if let Some(q) = self.parsed("fit.q")? {
            spec.q = q;
        }
        if let Some(k) = self.parsed("fit.kernel")? {
            spec.kernel = k;
        }
        if let Some(w) = self.get("fit.weights") {
            spec.weights = w.parse::<WeightScheme>()?;
        }
        if let Some(t) = self.get("fit.trend") {
            spec.trend = t.parse()?;
        }
        if let Some(e) = self.get("fit.estimand") {
            spec.estimand = e.parse()?;
        }
        if let Some(d) = self.get("fit.design") {
            spec.design = d.parse()?;
        }
        if let Some(a) = self.parsed("fit.alpha")? {
            spec.alpha = a;
        }
        spec.scheme = self.sampling()?;
        for entry in self.list::<String>("fit.bandwidths")? {
            let parts: Vec<&str> = entry.split(':').collect();
            let bad = || RdError::Config(format!("`fit.bandwidths`: expected period:h:b, got `{entry}`"));
            let [p, h, b] = parts.as_slice() else { return Err(bad()) };
            let p: i64 = p.parse().map_err(|_| bad())?;
            let h: f64 = h.parse().map_err(|_| bad())?;
            let b: f64 = b.parse().map_err(|_| bad())?;
            spec.bandwidth_overrides.insert(p, (h, b));
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Optional equivalence margin.
    pub fn equivalence_delta(&self) -> Result<Option<f64>> {
        self.parsed("equivalence.delta")
    }

    pub fn bin_width(&self) -> Result<f64> {
        self.required("density.bin_width")
    }

    /// Simulation settings; `simulate.seed` is mandatory.
    pub fn sim_config(&self) -> Result<SimConfig> {
        let seed: u64 = self
            .parsed("simulate.seed")?
            .ok_or_else(|| RdError::Config("`simulate.seed` is required: simulations are always seeded".into()))?;
        let mut cfg = SimConfig::new(Sampling::CrossSection, 1000, seed);
        if let Some(j) = self.fixed::<2>("simulate.jumps")? {
            cfg.jumps = j;
        }
        if let Some([m, s]) = self.fixed::<2>("simulate.unit_fe")? {
            cfg.unit_fe = (m, s);
        }
        if let Some(t) = self.fixed::<2>("simulate.time_fe")? {
            cfg.time_fe = t;
        }
        if let Some(s) = self.parsed("simulate.noise_sd")? {
            cfg.noise_sd = s;
        }
        if let Some([slope, mean, sd]) = self.fixed::<3>("simulate.pv_link")? {
            cfg.pv_slope = slope;
            cfg.pv_noise_mean = mean;
            cfg.pv_noise_sd = sd;
        }
        for t in 0..2 {
            let polys: &mut PeriodPolys = &mut cfg.polys[t];
            if let Some(c) = self.fixed::<5>(&format!("simulate.poly.{}.above", t + 1))? {
                polys.above = c;
            }
            if let Some(c) = self.fixed::<5>(&format!("simulate.poly.{}.below", t + 1))? {
                polys.below = c;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn sim_grid(&self) -> Result<Vec<GridCell>> {
        let cells: Vec<String> = self.list("simulate.grid")?;
        if cells.is_empty() {
            return Err(RdError::Config("`simulate.grid` is required, e.g. CS:1000:200".into()));
        }
        cells
            .iter()
            .map(|c| {
                let bad = || RdError::Config(format!("`simulate.grid`: expected DGP:n:h, got `{c}`"));
                let parts: Vec<&str> = c.split(':').collect();
                let [d, n, h] = parts.as_slice() else { return Err(bad()) };
                Ok(GridCell {
                    dgp: d.parse()?,
                    n: n.parse().map_err(|_| bad())?,
                    h: h.parse().map_err(|_| bad())?,
                })
            })
            .collect()
    }

    pub fn sim_reps(&self) -> Result<usize> {
        Ok(self.parsed("simulate.reps")?.unwrap_or(1000))
    }

    pub fn sim_threads(&self) -> Result<Option<usize>> {
        self.parsed("simulate.threads")
    }

    pub fn sim_bandwidth_ratio(&self) -> Result<f64> {
        Ok(self.parsed("simulate.bandwidth_ratio")?.unwrap_or(2.0))
    }
}

/// Convenience for building datasets in memory from `(unit, period, running, treated, outcome)` rows.
pub fn observations_from_rows<'a>(rows: impl IntoIterator<Item = (&'a str, i64, f64, bool, f64)>) -> Vec<Observation> {
    rows.into_iter()
        .map(|(u, p, r, w, y)| Observation {
            unit: UnitId::from(u),
            period: p,
            running: r,
            treated: w,
            outcome: y,
        })
        .collect()
}

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use crate::types::RecSource;

use super::ScenarioError;

/// A calendar period in a data file: a whole month or a single day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Period {
    /// Days since 1970-01-01 of the first day.
    start_day: i64,
    days: u32,
}

impl Period {
    pub fn hours(&self) -> u32 {
        self.days * 24
    }

    fn parse(s: &str) -> Option<Self> {
        let parts: Vec<&str> = s.trim().split('-').collect();
        let num = |p: &str| p.parse::<i64>().ok();
        match parts.as_slice() {
            [y, m] => {
                let (y, m) = (num(y)?, num(m)?);
                if !(1..=12).contains(&m) {
                    return None;
                }
                Some(Period {
                    start_day: days_from_civil(y, m, 1),
                    days: days_in_month(y, m),
                })
            }
            [y, m, d] => {
                let (y, m, d) = (num(y)?, num(m)?, num(d)?);
                if !(1..=12).contains(&m) || d < 1 || d > i64::from(days_in_month(y, m)) {
                    return None;
                }
                Some(Period {
                    start_day: days_from_civil(y, m, d),
                    days: 1,
                })
            }
            _ => None,
        }
    }
}

fn is_leap(y: i64) -> bool {
    (y % 4 == 0 && y % 100 != 0) || y % 400 == 0
}

fn days_in_month(y: i64, m: i64) -> u32 {
    match m {
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(y) => 29,
        2 => 28,
        _ => 31,
    }
}

// Howard Hinnant's civil-from-days inverse.
fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

/// Spreads period totals evenly over the hours they cover. Slot 0 is the
/// first hour of the earliest period; uncovered hours stay zero.
fn apportion<K: Ord + Copy>(
    rows: &[(Period, K, f64)],
    mut cell: impl FnMut(K) -> usize,
    width: usize,
) -> Vec<Vec<f64>> {
    let Some(first) = rows.iter().map(|r| r.0.start_day).min() else {
        return Vec::new();
    };
    let end = rows
        .iter()
        .map(|r| (r.0.start_day - first) as usize * 24 + r.0.hours() as usize)
        .max()
        .unwrap_or(0);
    let mut out = vec![vec![0.0; width]; end];
    for &(p, k, v) in rows {
        let start = (p.start_day - first) as usize * 24;
        let per_hour = v / f64::from(p.hours());
        let c = cell(k);
        for slot in &mut out[start..start + p.hours() as usize] {
            slot[c] += per_hour;
        }
    }
    out
}

fn data_err(path: &str, line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Data {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn records<R: Read>(
    reader: R,
    label: &str,
    header: &[&str],
) -> Result<Vec<(usize, csv::StringRecord)>, ScenarioError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let found: Vec<String> = rdr
        .headers()
        .map_err(|e| data_err(label, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if found.is_empty() || found.iter().all(String::is_empty) {
        return Err(ScenarioError::EmptyScenario(label.to_string()));
    }
    if found != header {
        return Err(data_err(
            label,
            1,
            format!("expected header `{}`", header.join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            data_err(label, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        out.push((line, rec));
    }
    if out.is_empty() {
        return Err(ScenarioError::EmptyScenario(label.to_string()));
    }
    Ok(out)
}

fn field_energy(label: &str, line: usize, name: &str, s: &str) -> Result<f64, ScenarioError> {
    let v: f64 = s
        .parse()
        .map_err(|_| data_err(label, line, format!("{name} `{s}` is not a number")))?;
    if !v.is_finite() || v < 0.0 {
        return Err(data_err(label, line, format!("{name} must be non-negative, got {s}")));
    }
    Ok(v)
}

fn field_period(label: &str, line: usize, s: &str) -> Result<Period, ScenarioError> {
    Period::parse(s).ok_or_else(|| {
        data_err(label, line, format!("period `{s}` is not YYYY-MM or YYYY-MM-DD"))
    })
}

/// Hourly renewable generation by source, MWh.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationData {
    pub per_slot: Vec<[f64; 4]>,
}

impl GenerationData {
    pub fn len(&self) -> usize {
        self.per_slot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_slot.is_empty()
    }

    pub fn total(&self, source: RecSource) -> f64 {
        self.per_slot.iter().map(|s| s[source.index()]).sum()
    }
}

pub fn parse_generation<R: Read>(reader: R, label: &str) -> Result<GenerationData, ScenarioError> {
    let mut rows = Vec::new();
    for (line, rec) in records(reader, label, &["period", "source", "energy_mwh"])? {
        if rec.len() != 3 {
            return Err(data_err(label, line, "expected 3 fields"));
        }
        let period = field_period(label, line, &rec[0])?;
        let source: RecSource = rec[1]
            .parse()
            .map_err(|e| data_err(label, line, format!("{e}")))?;
        let energy = field_energy(label, line, "energy_mwh", &rec[2])?;
        rows.push((period, source, energy));
    }
    let per_slot = apportion(&rows, |s: RecSource| s.index(), 4)
        .into_iter()
        .map(|v| [v[0], v[1], v[2], v[3]])
        .collect();
    Ok(GenerationData { per_slot })
}

pub fn load_generation_csv(path: &Path) -> Result<GenerationData, ScenarioError> {
    let f = std::fs::File::open(path).map_err(|e| ScenarioError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_generation(f, &path.display().to_string())
}

/// Hourly consumption and own renewable energy per consumer, MWh.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandData {
    /// `consumption[c][slot]`
    pub consumption: Vec<Vec<f64>>,
    pub own_renewable: Vec<Vec<f64>>,
}

impl DemandData {
    pub fn n_consumers(&self) -> usize {
        self.consumption.len()
    }

    pub fn len(&self) -> usize {
        self.consumption.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn parse_demand<R: Read>(reader: R, label: &str) -> Result<DemandData, ScenarioError> {
    let header = ["period", "consumer_id", "consumption_mwh", "own_renewable_mwh"];
    let mut cons = Vec::new();
    let mut own = Vec::new();
    let mut ids = BTreeMap::new();
    for (line, rec) in records(reader, label, &header)? {
        if rec.len() != 4 {
            return Err(data_err(label, line, "expected 4 fields"));
        }
        let period = field_period(label, line, &rec[0])?;
        let id: u32 = rec[1]
            .parse()
            .map_err(|_| data_err(label, line, format!("consumer_id `{}` is not an integer", &rec[1])))?;
        ids.insert(id, ());
        cons.push((period, id, field_energy(label, line, "consumption_mwh", &rec[2])?));
        own.push((period, id, field_energy(label, line, "own_renewable_mwh", &rec[3])?));
    }
    let n = ids.keys().next_back().map_or(0, |&m| m as usize + 1);
    if ids.len() != n {
        let missing = (0..n as u32).find(|i| !ids.contains_key(i)).unwrap_or(0);
        return Err(data_err(label, 0, format!("consumer ids must be contiguous from 0; {missing} is missing")));
    }
    let transpose = |m: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        (0..n).map(|c| m.iter().map(|s| s[c]).collect()).collect()
    };
    Ok(DemandData {
        consumption: transpose(apportion(&cons, |c: u32| c as usize, n)),
        own_renewable: transpose(apportion(&own, |c: u32| c as usize, n)),
    })
}

pub fn load_demand_csv(path: &Path) -> Result<DemandData, ScenarioError> {
    let f = std::fs::File::open(path).map_err(|e| ScenarioError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_demand(f, &path.display().to_string())
}

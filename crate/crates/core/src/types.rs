//! Small domain types shared by every subsystem.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Index of an hourly market time slot.
pub type Slot = u32;

/// Wall-clock seconds in the simulated calendar.
pub type Seconds = i64;

pub const SECONDS_PER_SLOT: Seconds = 3600;

/// Hours in a non-leap year; the default certificate lifetime and horizon.
pub const SLOTS_PER_YEAR: Slot = 8760;

pub fn slot_start(slot: Slot) -> Seconds {
    Seconds::from(slot) * SECONDS_PER_SLOT
}

/// Renewable generation technology backing a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RecSource {
    Biomass,
    Hydro,
    Wind,
    Solar,
}

impl RecSource {
    pub const ALL: [RecSource; 4] = [
        RecSource::Biomass,
        RecSource::Hydro,
        RecSource::Wind,
        RecSource::Solar,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RecSource::Biomass => "biomass",
            RecSource::Hydro => "hydro",
            RecSource::Wind => "wind",
            RecSource::Solar => "solar",
        }
    }

    pub fn index(self) -> usize {
        match self {
            RecSource::Biomass => 0,
            RecSource::Hydro => 1,
            RecSource::Wind => 2,
            RecSource::Solar => 3,
        }
    }

    pub(crate) fn code(self) -> u8 {
        self.index() as u8
    }
}

impl fmt::Display for RecSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown renewable source `{0}`")]
pub struct UnknownSource(pub String);

impl FromStr for RecSource {
    type Err = UnknownSource;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "biomass" => Ok(RecSource::Biomass),
            "hydro" | "hydroelectric" => Ok(RecSource::Hydro),
            "wind" => Ok(RecSource::Wind),
            "solar" | "solar pv" | "solar_pv" | "pv" => Ok(RecSource::Solar),
            other => Err(UnknownSource(other.to_string())),
        }
    }
}

/// Trading account identifier as it appears on the ledger.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AccountId(pub String);

impl AccountId {
    pub fn new(s: impl Into<String>) -> Self {
        AccountId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Market participant (consumer or supplier) behind one or more accounts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrincipalId {
    Consumer(u32),
    Supplier(u32),
}

impl fmt::Display for PrincipalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrincipalId::Consumer(j) => write!(f, "consumer-{j}"),
            PrincipalId::Supplier(i) => write!(f, "supplier-{i}"),
        }
    }
}

/// Population standard deviation; zero for empty or singleton input.
pub fn population_stddev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt()
}

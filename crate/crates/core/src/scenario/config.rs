use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::baselines::ConsensusKind;
use crate::consensus::FpcParams;

use super::ScenarioError;

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "RECSIM_SEED";

/// Everything a run needs. Loaded from flat `key = value` text; `#` starts
/// a comment. Relative CSV paths resolve against the config file's folder.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_suppliers: u32,
    pub n_consumers: u32,
    pub n_validators: u32,
    pub n_slots: u32,
    pub fpc: FpcParams,
    pub gamma: f64,
    /// One target for everyone, or one per consumer.
    pub green_targets: Vec<f64>,
    pub initial_price: f64,
    /// Bounds on supplier base prices.
    pub price_bounds: (f64, f64),
    /// Relative base-price move after each clearing round.
    pub price_step: f64,
    /// Unsold certificates a supplier tolerates before discounting.
    pub stock_cap: u64,
    pub bid_bounds: (f64, f64),
    /// Share of the slot's listed volume one consumer may request.
    pub q_max_share: f64,
    pub initial_tokens: f64,
    pub rec_lifetime: u32,
    /// Blocks between injected double-spend conflicts.
    pub conflict_interval: u32,
    pub seed: u64,
    pub consensus_kind: ConsensusKind,
    pub privacy_enabled: bool,
    pub generation_csv: PathBuf,
    pub demand_csv: PathBuf,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_suppliers: 4,
            n_consumers: 15,
            n_validators: 100,
            n_slots: crate::types::SLOTS_PER_YEAR,
            fpc: FpcParams::default(),
            gamma: 10_000.0,
            green_targets: vec![0.3],
            initial_price: 100.0,
            price_bounds: (1.0, 1_000.0),
            price_step: 0.02,
            stock_cap: 200,
            bid_bounds: (1.0, 1_000.0),
            q_max_share: 0.2,
            initial_tokens: 1e12,
            rec_lifetime: crate::types::SLOTS_PER_YEAR,
            conflict_interval: 100,
            seed: 42,
            consensus_kind: ConsensusKind::FpcRep,
            privacy_enabled: true,
            generation_csv: PathBuf::from("generation.csv"),
            demand_csv: PathBuf::from("demand.csv"),
        }
    }
}

fn parse_num<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, ScenarioError> {
    v.parse().map_err(|_| ScenarioError::Config {
        line,
        message: format!("`{key}` expects a number, got `{v}`"),
    })
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool, ScenarioError> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(ScenarioError::Config {
            line,
            message: format!("`{key}` expects true or false, got `{v}`"),
        }),
    }
}

impl ScenarioConfig {
    /// Parses config text. Unknown keys are errors so typos do not pass
    /// silently.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ScenarioError> {
        let mut c = ScenarioConfig::default();
        let mut generation = None;
        let mut demand = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| ScenarioError::Config {
                line,
                message: format!("expected `key = value`, got `{body}`"),
            })?;
            let (key, v) = (key.trim(), value.trim());
            match key {
                "n_suppliers" => c.n_suppliers = parse_num(line, key, v)?,
                "n_consumers" => c.n_consumers = parse_num(line, key, v)?,
                "n_validators" => c.n_validators = parse_num(line, key, v)?,
                "n_slots" => c.n_slots = parse_num(line, key, v)?,
                "lambda" => c.fpc.lambda = parse_num(line, key, v)?,
                "omega" => c.fpc.omega_initial = parse_num(line, key, v)?,
                "omega_low" => c.fpc.first_round_bounds.0 = parse_num(line, key, v)?,
                "omega_high" => c.fpc.first_round_bounds.1 = parse_num(line, key, v)?,
                "beta" => c.fpc.beta = parse_num(line, key, v)?,
                "rounds" => c.fpc.rounds = parse_num(line, key, v)?,
                "quorum_size" => c.fpc.quorum_size = parse_num(line, key, v)?,
                "gamma" => c.gamma = parse_num(line, key, v)?,
                "green_target" | "green_targets" => {
                    c.green_targets = v
                        .split(',')
                        .map(|t| parse_num(line, key, t.trim()))
                        .collect::<Result<_, _>>()?
                }
                "initial_price" => c.initial_price = parse_num(line, key, v)?,
                "price_min" => c.price_bounds.0 = parse_num(line, key, v)?,
                "price_max" => c.price_bounds.1 = parse_num(line, key, v)?,
                "price_step" => c.price_step = parse_num(line, key, v)?,
                "stock_cap" => c.stock_cap = parse_num(line, key, v)?,
                "bid_min" => c.bid_bounds.0 = parse_num(line, key, v)?,
                "bid_max" => c.bid_bounds.1 = parse_num(line, key, v)?,
                "q_max_share" => c.q_max_share = parse_num(line, key, v)?,
                "initial_tokens" => c.initial_tokens = parse_num(line, key, v)?,
                "rec_lifetime" => c.rec_lifetime = parse_num(line, key, v)?,
                "conflict_interval" => c.conflict_interval = parse_num(line, key, v)?,
                "seed" => c.seed = parse_num(line, key, v)?,
                "consensus_kind" => {
                    c.consensus_kind = v.parse().map_err(|_| ScenarioError::Config {
                        line,
                        message: format!("unknown consensus kind `{v}`"),
                    })?
                }
                "privacy_enabled" => c.privacy_enabled = parse_bool(line, key, v)?,
                "generation_csv" => generation = Some(base_dir.join(v)),
                "demand_csv" => demand = Some(base_dir.join(v)),
                _ => {
                    return Err(ScenarioError::Config {
                        line,
                        message: format!("unknown key `{key}`"),
                    })
                }
            }
        }
        c.generation_csv = generation.unwrap_or_else(|| base_dir.join("generation.csv"));
        c.demand_csv = demand.unwrap_or_else(|| base_dir.join("demand.csv"));
        Ok(c)
    }

    /// Reads, parses, applies the seed override and validates.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut c = Self::parse(&text, base)?;
        c.apply_env_seed(std::env::var(SEED_ENV).ok().as_deref())?;
        c.validate()?;
        Ok(c)
    }

    pub fn apply_env_seed(&mut self, value: Option<&str>) -> Result<(), ScenarioError> {
        if let Some(v) = value {
            self.seed = v.trim().parse().map_err(|_| ScenarioError::Invalid(format!(
                "{SEED_ENV} must be an unsigned integer, got `{v}`"
            )))?;
        }
        Ok(())
    }

    pub fn target_for(&self, consumer: u32) -> f64 {
        match self.green_targets.len() {
            0 => 0.0,
            1 => self.green_targets[0],
            _ => self.green_targets[consumer as usize],
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        for (name, n) in [
            ("n_suppliers", self.n_suppliers),
            ("n_consumers", self.n_consumers),
            ("n_validators", self.n_validators),
            ("n_slots", self.n_slots),
            ("rec_lifetime", self.rec_lifetime),
            ("conflict_interval", self.conflict_interval),
        ] {
            if n == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        self.fpc
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if self.consensus_kind == ConsensusKind::FpcRep
            && (self.n_validators as usize) < self.fpc.quorum_size
        {
            return bad(format!(
                "{} validators cannot fill a quorum of {}",
                self.n_validators, self.fpc.quorum_size
            ));
        }
        let n_targets = self.green_targets.len();
        if n_targets != 1 && n_targets != self.n_consumers as usize {
            return bad(format!(
                "{n_targets} green targets for {} consumers",
                self.n_consumers
            ));
        }
        if self.green_targets.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return bad("green targets must lie in [0, 1]".into());
        }
        let ordered = |(lo, hi): (f64, f64)| lo >= 0.0 && lo <= hi && hi.is_finite();
        if !ordered(self.price_bounds) || !ordered(self.bid_bounds) {
            return bad("price and bid bounds must satisfy 0 <= min <= max".into());
        }
        if !(self.initial_price > 0.0) || !(self.gamma >= 0.0) {
            return bad("initial_price must be positive and gamma non-negative".into());
        }
        if !(self.q_max_share > 0.0 && self.q_max_share <= 1.0) {
            return bad("q_max_share must lie in (0, 1]".into());
        }
        if !(0.0..1.0).contains(&self.price_step) {
            return bad("price_step must lie in [0, 1)".into());
        }
        for p in [&self.generation_csv, &self.demand_csv] {
            if !p.is_file() {
                return bad(format!("{} does not exist", p.display()));
            }
        }
        Ok(())
    }
}

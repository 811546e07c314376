//! Flat key = value run configuration.
//!
//! The format is a diff-friendly subset of TOML: one `key = value` per line,
//! `#` comments, no sections.  Every run artifact echoes the configuration in
//! its header, and a config round-trips losslessly through `to_text`/`parse`.

use std::collections::BTreeMap;
use std::fmt;

pub const SCHEMA_VERSION: &str = "spu-config-v1";

#[derive(Debug)]
pub enum ConfigError {
    Parse(String),
    Invalid(String),
    Io(std::io::Error),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse(msg) => write!(f, "config parse error: {msg}"),
            ConfigError::Invalid(msg) => write!(f, "invalid config: {msg}"),
            ConfigError::Io(e) => write!(f, "config io error: {e}"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Everything a batch run needs; defaults reproduce the six-site demo model.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Number of lattice sites.
    pub n_sites: usize,
    /// Model angle in radians (couplings cos^2/sin^2 of theta/2).
    pub theta: f64,
    /// Dimensionless inverse temperatures; wins over the physical grid when
    /// non-empty.
    pub beta_list: Vec<f64>,
    /// Physical temperature grid in Kelvin, mapped through e_max_ev.
    pub t_kelvin_list: Vec<f64>,
    /// Energy assigned to the spectral radius, in eV.
    pub e_max_ev: f64,
    /// Uniform series-truncation error target.
    pub nu: f64,
    /// Hoeffding planning accuracy.
    pub epsilon: f64,
    /// Hoeffding planning failure probability.
    pub delta: f64,
    /// Sampled pairs per temperature (0 = use the Hoeffding plan).
    pub n_pairs: usize,
    /// Hard ceiling applied to the pair budget.
    pub max_pairs: usize,
    /// Markov-chain length per circuit (including burn-in).
    pub chain_steps: usize,
    /// Discarded leading chain steps.
    pub burn_in: usize,
    /// Uniform input-label draws per weight estimate.
    pub z_samples: usize,
    /// QMETTS chain length.
    pub qmetts_steps: usize,
    /// QMETTS burn-in.
    pub qmetts_burn_in: usize,
    /// Basis inputs per pair in the postselection survey.
    pub survey_cps: usize,
    /// Emit the postselection survey from the sampling command.
    pub survey: bool,
    /// Relaxation-window cap for diagnostics.
    pub max_window: usize,
    /// Chain length feeding the autocorrelation estimate.
    pub tau_steps: usize,
    /// Master seed.
    pub seed: u64,
    /// Worker threads (0 = all cores).
    pub workers: usize,
    /// Output directory.
    pub out_dir: String,
    /// Observable shot budget (0 = exact amplitudes).
    pub shots: usize,
    /// Exhaustive small-system mode: enumerate every (m, n, input).
    pub exhaustive: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_sites: 6,
            theta: std::f64::consts::PI / 8.0,
            beta_list: Vec::new(),
            t_kelvin_list: vec![300.0, 400.0, 600.0, 900.0, 1400.0, 2000.0],
            e_max_ev: 0.1,
            nu: 0.002,
            epsilon: 0.1,
            delta: 0.05,
            n_pairs: 0,
            max_pairs: 3200,
            chain_steps: 400,
            burn_in: 100,
            z_samples: 64,
            qmetts_steps: 4000,
            qmetts_burn_in: 10,
            survey_cps: 8,
            survey: false,
            max_window: 160,
            tau_steps: 2048,
            seed: 42,
            workers: 0,
            out_dir: "out".to_string(),
            shots: 0,
            exhaustive: false,
        }
    }
}

fn join_floats(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_floats(s: &str) -> Result<Vec<f64>, ConfigError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|e| ConfigError::Parse(format!("bad float '{tok}': {e}")))
        })
        .collect()
}

impl RunConfig {
    /// Serialize as flat key = value lines (lossless round-trip).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("schema = {SCHEMA_VERSION}\n"));
        out.push_str(&format!("n_sites = {}\n", self.n_sites));
        out.push_str(&format!("theta = {:?}\n", self.theta));
        out.push_str(&format!("beta_list = {}\n", join_floats(&self.beta_list)));
        out.push_str(&format!(
            "t_kelvin_list = {}\n",
            join_floats(&self.t_kelvin_list)
        ));
        out.push_str(&format!("e_max_ev = {:?}\n", self.e_max_ev));
        out.push_str(&format!("nu = {:?}\n", self.nu));
        out.push_str(&format!("epsilon = {:?}\n", self.epsilon));
        out.push_str(&format!("delta = {:?}\n", self.delta));
        out.push_str(&format!("n_pairs = {}\n", self.n_pairs));
        out.push_str(&format!("max_pairs = {}\n", self.max_pairs));
        out.push_str(&format!("chain_steps = {}\n", self.chain_steps));
        out.push_str(&format!("burn_in = {}\n", self.burn_in));
        out.push_str(&format!("z_samples = {}\n", self.z_samples));
        out.push_str(&format!("qmetts_steps = {}\n", self.qmetts_steps));
        out.push_str(&format!("qmetts_burn_in = {}\n", self.qmetts_burn_in));
        out.push_str(&format!("survey_cps = {}\n", self.survey_cps));
        out.push_str(&format!("survey = {}\n", self.survey));
        out.push_str(&format!("max_window = {}\n", self.max_window));
        out.push_str(&format!("tau_steps = {}\n", self.tau_steps));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("workers = {}\n", self.workers));
        out.push_str(&format!("out_dir = {}\n", self.out_dir));
        out.push_str(&format!("shots = {}\n", self.shots));
        out.push_str(&format!("exhaustive = {}\n", self.exhaustive));
        out
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError::Parse(format!("line {}: expected key = value", lineno + 1))
            })?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        let mut cfg = RunConfig::default();
        // unknown keys are errors: typos must not silently fall back
        for (key, value) in &map {
            match key.as_str() {
                "schema" => {
                    if value != SCHEMA_VERSION {
                        return Err(ConfigError::Parse(format!(
                            "unsupported schema '{value}' (expected {SCHEMA_VERSION})"
                        )));
                    }
                }
                "n_sites" => cfg.n_sites = parse_num(key, value)?,
                "theta" => cfg.theta = parse_f64(key, value)?,
                "beta_list" => cfg.beta_list = parse_floats(value)?,
                "t_kelvin_list" => cfg.t_kelvin_list = parse_floats(value)?,
                "e_max_ev" => cfg.e_max_ev = parse_f64(key, value)?,
                "nu" => cfg.nu = parse_f64(key, value)?,
                "epsilon" => cfg.epsilon = parse_f64(key, value)?,
                "delta" => cfg.delta = parse_f64(key, value)?,
                "n_pairs" => cfg.n_pairs = parse_num(key, value)?,
                "max_pairs" => cfg.max_pairs = parse_num(key, value)?,
                "chain_steps" => cfg.chain_steps = parse_num(key, value)?,
                "burn_in" => cfg.burn_in = parse_num(key, value)?,
                "z_samples" => cfg.z_samples = parse_num(key, value)?,
                "qmetts_steps" => cfg.qmetts_steps = parse_num(key, value)?,
                "qmetts_burn_in" => cfg.qmetts_burn_in = parse_num(key, value)?,
                "survey_cps" => cfg.survey_cps = parse_num(key, value)?,
                "survey" => cfg.survey = parse_bool(key, value)?,
                "max_window" => cfg.max_window = parse_num(key, value)?,
                "tau_steps" => cfg.tau_steps = parse_num(key, value)?,
                "seed" => cfg.seed = parse_num(key, value)?,
                "workers" => cfg.workers = parse_num(key, value)?,
                "out_dir" => cfg.out_dir = value.clone(),
                "shots" => cfg.shots = parse_num(key, value)?,
                "exhaustive" => cfg.exhaustive = parse_bool(key, value)?,
                other => {
                    return Err(ConfigError::Parse(format!("unknown key '{other}'")));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if self.n_sites < 2 {
            return fail(format!("n_sites must be >= 2, got {}", self.n_sites));
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.theta) {
            return fail(format!("theta must lie in [0, pi], got {}", self.theta));
        }
        if self.beta_list.is_empty() && self.t_kelvin_list.is_empty() {
            return fail("need beta_list or t_kelvin_list".to_string());
        }
        if self
            .beta_list
            .iter()
            .any(|b| !(*b >= 0.0) || !b.is_finite())
        {
            return fail("beta values must be finite and >= 0".to_string());
        }
        if self.t_kelvin_list.iter().any(|t| !(*t > 0.0)) {
            return fail("temperatures must be positive".to_string());
        }
        if !(self.e_max_ev > 0.0) {
            return fail(format!("e_max_ev must be positive, got {}", self.e_max_ev));
        }
        if !(0.0 < self.nu && self.nu < 1.0) {
            return fail(format!("nu must lie in (0,1), got {}", self.nu));
        }
        if !(0.0 < self.epsilon && self.epsilon < 1.0) {
            return fail(format!("epsilon must lie in (0,1), got {}", self.epsilon));
        }
        if !(0.0 < self.delta && self.delta < 1.0) {
            return fail(format!("delta must lie in (0,1), got {}", self.delta));
        }
        if self.chain_steps <= self.burn_in {
            return fail(format!(
                "chain_steps ({}) must exceed burn_in ({})",
                self.chain_steps, self.burn_in
            ));
        }
        if self.z_samples == 0 {
            return fail("z_samples must be >= 1".to_string());
        }
        if self.qmetts_steps <= self.qmetts_burn_in {
            return fail(format!(
                "qmetts_steps ({}) must exceed qmetts_burn_in ({})",
                self.qmetts_steps, self.qmetts_burn_in
            ));
        }
        if self.max_pairs == 0 {
            return fail("max_pairs must be >= 1".to_string());
        }
        Ok(())
    }

    /// Dimensionless inverse temperatures for this run, converting the
    /// physical grid once through the spectral report.
    pub fn betas(&self, report: &spu_core::hamiltonian::RescaleReport) -> Vec<f64> {
        if !self.beta_list.is_empty() {
            self.beta_list.clone()
        } else {
            self.t_kelvin_list
                .iter()
                .map(|t| report.beta_for(*t, self.e_max_ev))
                .collect()
        }
    }

    /// Pair budget at one inverse temperature: the explicit knob, or the
    /// Hoeffding plan capped at max_pairs.
    pub fn pair_budget(&self, planned: f64) -> usize {
        if self.n_pairs > 0 {
            self.n_pairs
        } else {
            (planned.min(self.max_pairs as f64) as usize).max(1)
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| ConfigError::Parse(format!("key '{key}': {e}")))
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    parse_num::<f64>(key, value)
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(ConfigError::Parse(format!(
            "key '{key}': expected true/false, got '{other}'"
        ))),
    }
}

//! Flat `key = value` experiment configuration.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::optics::{BREWSTER_T_H, BREWSTER_T_V};
use crate::protocols::Branch;
use crate::stochastics::{
    default_coherence_length_um, Accounting, DEFAULT_BACKGROUND, FOURFOLD_RATE, INTEGRATION_TIME_S,
};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("line {line}: key `{key}` given twice")]
    DuplicateKey { line: usize, key: String },

    #[error("line {line}: cannot parse `{value}` for `{key}`: {message}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
        message: String,
    },

    #[error("`{key}` out of range: {message}")]
    Range { key: String, message: String },
}

/// Which protocol a run evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Concentrate,
    Repeater,
    RepeaterFiltered,
    BellSwap,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Concentrate => "concentrate",
            Protocol::Repeater => "repeater",
            Protocol::RepeaterFiltered => "repeater-filtered",
            Protocol::BellSwap => "bell-swap",
        })
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "concentrate" => Ok(Protocol::Concentrate),
            "repeater" => Ok(Protocol::Repeater),
            "repeater-filtered" => Ok(Protocol::RepeaterFiltered),
            "bell-swap" => Ok(Protocol::BellSwap),
            other => Err(format!(
                "unknown protocol `{other}` (expected concentrate, repeater, repeater-filtered or bell-swap)"
            )),
        }
    }
}

/// Everything a run depends on. Pair (1,2) is built from `alpha` if given,
/// otherwise from `windows` Brewster windows; pair (3,4) likewise from
/// `alpha_b` / `windows_b`, falling back to the first pair's source.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub windows: u32,
    pub windows_b: Option<u32>,
    pub alpha: Option<f64>,
    pub alpha_b: Option<f64>,
    pub t_h: f64,
    pub t_v: f64,
    pub phase_deg: f64,
    pub branch: Branch,
    pub gamma: f64,
    pub background: f64,
    pub coherence_length_um: f64,
    pub rate: f64,
    pub time: f64,
    pub accounting: Accounting,
    pub seed: u64,
    pub chsh_a_deg: f64,
    pub chsh_a_prime_deg: f64,
    pub chsh_b_deg: f64,
    pub chsh_b_prime_deg: f64,
    pub scan_min_um: f64,
    pub scan_max_um: f64,
    pub scan_points: usize,
    pub scan_time: f64,
    pub out_dir: PathBuf,
    pub ideal: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            protocol: Protocol::Concentrate,
            windows: 1,
            windows_b: None,
            alpha: None,
            alpha_b: None,
            t_h: BREWSTER_T_H,
            t_v: BREWSTER_T_V,
            phase_deg: 90.0,
            branch: Branch::PlusPlus,
            gamma: 1.0,
            background: DEFAULT_BACKGROUND,
            coherence_length_um: default_coherence_length_um(),
            rate: FOURFOLD_RATE,
            time: INTEGRATION_TIME_S,
            accounting: Accounting::PerOutcome,
            seed: 0,
            chsh_a_deg: 0.0,
            chsh_a_prime_deg: 45.0,
            chsh_b_deg: 67.5,
            chsh_b_prime_deg: 22.5,
            scan_min_um: -300.0,
            scan_max_um: 300.0,
            scan_points: 61,
            scan_time: 3600.0,
            out_dir: PathBuf::from("out"),
            ideal: false,
        }
    }
}

const KEYS: &[&str] = &[
    "protocol",
    "windows",
    "windows_b",
    "alpha",
    "alpha_b",
    "t_h",
    "t_v",
    "phase_deg",
    "branch",
    "gamma",
    "background",
    "coherence_length_um",
    "rate",
    "time",
    "accounting",
    "seed",
    "chsh_a_deg",
    "chsh_a_prime_deg",
    "chsh_b_deg",
    "chsh_b_prime_deg",
    "scan_min_um",
    "scan_max_um",
    "scan_points",
    "scan_time",
    "out_dir",
    "ideal",
];

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    raw.parse::<T>().map_err(|e| ConfigError::BadValue {
        line,
        key: key.to_string(),
        value: raw.to_string(),
        message: e.to_string(),
    })
}

fn range(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Range {
        key: key.to_string(),
        message: message.into(),
    }
}

fn unit_interval(key: &str, x: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(range(key, format!("{x} is not in [0, 1]")))
    }
}

fn positive(key: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(range(key, format!("{x} is not positive")))
    }
}

fn finite(key: &str, x: f64) -> Result<(), ConfigError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(range(key, format!("{x} is not finite")))
    }
}

impl ExperimentConfig {
    /// Parses `text` on top of the defaults. Blank lines and everything after
    /// `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, raw) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("expected `key = value`, found `{content}`"),
            })?;
            let (key, raw) = (key.trim(), raw.trim());
            if key.is_empty() || raw.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("expected `key = value`, found `{content}`"),
                });
            }
            let key = *KEYS.iter().find(|k| **k == key).ok_or_else(|| ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            })?;
            if seen.contains(&key) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            seen.push(key);
            cfg.set(line, key, raw)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, line: usize, key: &str, raw: &str) -> Result<(), ConfigError> {
        match key {
            "protocol" => self.protocol = value(line, key, raw)?,
            "windows" => self.windows = value(line, key, raw)?,
            "windows_b" => self.windows_b = Some(value(line, key, raw)?),
            "alpha" => self.alpha = Some(value(line, key, raw)?),
            "alpha_b" => self.alpha_b = Some(value(line, key, raw)?),
            "t_h" => self.t_h = value(line, key, raw)?,
            "t_v" => self.t_v = value(line, key, raw)?,
            "phase_deg" => self.phase_deg = value(line, key, raw)?,
            "branch" => self.branch = value(line, key, raw)?,
            "gamma" => self.gamma = value(line, key, raw)?,
            "background" => self.background = value(line, key, raw)?,
            "coherence_length_um" => self.coherence_length_um = value(line, key, raw)?,
            "rate" => self.rate = value(line, key, raw)?,
            "time" => self.time = value(line, key, raw)?,
            "accounting" => self.accounting = value(line, key, raw)?,
            "seed" => self.seed = value(line, key, raw)?,
            "chsh_a_deg" => self.chsh_a_deg = value(line, key, raw)?,
            "chsh_a_prime_deg" => self.chsh_a_prime_deg = value(line, key, raw)?,
            "chsh_b_deg" => self.chsh_b_deg = value(line, key, raw)?,
            "chsh_b_prime_deg" => self.chsh_b_prime_deg = value(line, key, raw)?,
            "scan_min_um" => self.scan_min_um = value(line, key, raw)?,
            "scan_max_um" => self.scan_max_um = value(line, key, raw)?,
            "scan_points" => self.scan_points = value(line, key, raw)?,
            "scan_time" => self.scan_time = value(line, key, raw)?,
            "out_dir" => self.out_dir = PathBuf::from(raw),
            "ideal" => self.ideal = value(line, key, raw)?,
            _ => unreachable!("key list and setter out of sync"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, n) in [("windows", Some(self.windows)), ("windows_b", self.windows_b)] {
            if let Some(n) = n {
                if !(1..=64).contains(&n) {
                    return Err(range(key, format!("{n} is not in 1..=64")));
                }
            }
        }
        for (key, a) in [("alpha", self.alpha), ("alpha_b", self.alpha_b)] {
            if let Some(a) = a {
                unit_interval(key, a)?;
            }
        }
        if !(self.t_h > 0.0 && self.t_h <= 1.0) {
            return Err(range("t_h", format!("{} is not in (0, 1]", self.t_h)));
        }
        if !(self.t_v > 0.0 && self.t_v <= 1.0) {
            return Err(range("t_v", format!("{} is not in (0, 1]", self.t_v)));
        }
        if self.t_v > self.t_h {
            return Err(range("t_v", format!("{} exceeds t_h = {}", self.t_v, self.t_h)));
        }
        finite("phase_deg", self.phase_deg)?;
        unit_interval("gamma", self.gamma)?;
        unit_interval("background", self.background)?;
        positive("coherence_length_um", self.coherence_length_um)?;
        positive("rate", self.rate)?;
        positive("time", self.time)?;
        for (key, x) in [
            ("chsh_a_deg", self.chsh_a_deg),
            ("chsh_a_prime_deg", self.chsh_a_prime_deg),
            ("chsh_b_deg", self.chsh_b_deg),
            ("chsh_b_prime_deg", self.chsh_b_prime_deg),
            ("scan_min_um", self.scan_min_um),
            ("scan_max_um", self.scan_max_um),
        ] {
            finite(key, x)?;
        }
        if self.scan_max_um <= self.scan_min_um {
            return Err(range("scan_max_um", "must exceed scan_min_um"));
        }
        if self.scan_points < 2 {
            return Err(range("scan_points", format!("{} is below 2", self.scan_points)));
        }
        positive("scan_time", self.scan_time)?;
        Ok(())
    }

    /// Config lines that parse back to `self`. Floats use the shortest
    /// representation that round-trips exactly.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("protocol", self.protocol.to_string());
        put("windows", self.windows.to_string());
        if let Some(n) = self.windows_b {
            put("windows_b", n.to_string());
        }
        if let Some(a) = self.alpha {
            put("alpha", format!("{a:?}"));
        }
        if let Some(a) = self.alpha_b {
            put("alpha_b", format!("{a:?}"));
        }
        put("t_h", format!("{:?}", self.t_h));
        put("t_v", format!("{:?}", self.t_v));
        put("phase_deg", format!("{:?}", self.phase_deg));
        put("branch", self.branch.label().to_string());
        put("gamma", format!("{:?}", self.gamma));
        put("background", format!("{:?}", self.background));
        put("coherence_length_um", format!("{:?}", self.coherence_length_um));
        put("rate", format!("{:?}", self.rate));
        put("time", format!("{:?}", self.time));
        put("accounting", self.accounting.to_string());
        put("seed", self.seed.to_string());
        put("chsh_a_deg", format!("{:?}", self.chsh_a_deg));
        put("chsh_a_prime_deg", format!("{:?}", self.chsh_a_prime_deg));
        put("chsh_b_deg", format!("{:?}", self.chsh_b_deg));
        put("chsh_b_prime_deg", format!("{:?}", self.chsh_b_prime_deg));
        put("scan_min_um", format!("{:?}", self.scan_min_um));
        put("scan_max_um", format!("{:?}", self.scan_max_um));
        put("scan_points", self.scan_points.to_string());
        put("scan_time", format!("{:?}", self.scan_time));
        put("out_dir", self.out_dir.display().to_string());
        put("ideal", self.ideal.to_string());
        s
    }
}

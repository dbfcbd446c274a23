//! Flat `key = value` run configuration.
//!
//! A config file holds one assignment per line; `#` starts a comment.
//! Command-line `--set key=value` overrides are applied after the file, in
//! order. Unknown keys and malformed values are rejected with the key named.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use vervaat_core::experiments::{ExperimentPlan, LimitSource, Metric, Model};
use vervaat_core::lrd_gauss::{CovarianceFamily, CovarianceSpec, EmbeddingPolicy, SlowlyVarying};
use vervaat_core::hermite::SubordinationSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: &str, message: impl Into<String>) -> Self {
        Self { key: key.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config key `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Every key the parser understands, in manifest order.
pub const KEYS: &[&str] = &[
    "n",
    "seed",
    "d",
    "family",
    "l",
    "g",
    "tau",
    "n_grid",
    "replications",
    "metrics",
    "trimming",
    "p",
    "t_levels",
    "probe_y",
    "probe_t",
    "limit_source",
    "limit_m",
    "limit_m_t",
    "ks_threshold_bk",
    "ks_threshold_functional",
    "repair",
    "clip_tolerance",
    "grid",
    "precision",
    "workers",
    "out",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Path length for `simulate`.
    pub n: usize,
    pub seed: u64,
    pub d: f64,
    pub family: CovarianceFamily,
    pub l: SlowlyVarying<f64>,
    pub g: SubordinationSpec<f64>,
    pub tau: Option<usize>,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub metrics: Vec<Metric>,
    pub trimming: bool,
    pub p: Option<usize>,
    pub t_levels: usize,
    pub probe_y: f64,
    pub probe_t: f64,
    pub limit_source: LimitSource,
    pub limit_m: usize,
    pub limit_m_t: usize,
    pub ks_threshold_bk: f64,
    pub ks_threshold_functional: f64,
    pub repair: bool,
    pub clip_tolerance: f64,
    /// Reporting grid points per axis for `simulate`.
    pub grid: usize,
    /// Significant digits in CSV output.
    pub precision: usize,
    /// 0 lets rayon decide.
    pub workers: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let plan = ExperimentPlan::default();
        let cov = plan.model.covariance;
        Self {
            n: 256,
            seed: plan.master_seed,
            d: cov.d,
            family: cov.family,
            l: cov.l,
            g: plan.model.subordination,
            tau: plan.tau,
            n_grid: plan.n_grid,
            replications: plan.replications,
            metrics: plan.metrics,
            trimming: plan.trimming,
            p: plan.p_override,
            t_levels: plan.t_levels,
            probe_y: plan.probe_y,
            probe_t: plan.probe_t,
            limit_source: plan.limit_source,
            limit_m: plan.limit_m,
            limit_m_t: plan.limit_m_t,
            ks_threshold_bk: plan.ks_threshold_bk,
            ks_threshold_functional: plan.ks_threshold_functional,
            repair: plan.policy.repair,
            clip_tolerance: plan.policy.clip_tolerance,
            grid: 33,
            precision: 12,
            workers: 0,
            out: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| ConfigError::new(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse(key, s)).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(ConfigError::new(key, format!("expected a boolean, got `{value}`"))),
    }
}

/// `constant(c)`, a bare number, or `logarithmic(scale, power)`.
fn parse_l(key: &str, value: &str) -> Result<SlowlyVarying<f64>, ConfigError> {
    let v = value.trim();
    if let Some(body) = v.strip_prefix("constant(").and_then(|s| s.strip_suffix(')')) {
        return Ok(SlowlyVarying::Constant(parse(key, body.trim())?));
    }
    if let Some(body) = v.strip_prefix("logarithmic(").and_then(|s| s.strip_suffix(')')) {
        let parts: Vec<f64> = parse_list(key, body)?;
        return match parts[..] {
            [scale, power] => Ok(SlowlyVarying::Logarithmic { scale, power }),
            _ => Err(ConfigError::new(key, "logarithmic takes (scale, power)")),
        };
    }
    Ok(SlowlyVarying::Constant(parse(key, v)?))
}

fn format_l(l: &SlowlyVarying<f64>) -> String {
    match l {
        SlowlyVarying::Constant(c) => format!("constant({c})"),
        SlowlyVarying::Logarithmic { scale, power } => format!("logarithmic({scale},{power})"),
    }
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies one assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "n" => self.n = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "d" => self.d = parse(key, value)?,
            "family" => {
                self.family = match value {
                    "fgn-matched" => CovarianceFamily::FgnMatched,
                    "pure-power" => CovarianceFamily::PurePower,
                    _ => return Err(ConfigError::new(key, format!("expected fgn-matched or pure-power, got `{value}`"))),
                }
            }
            "l" => self.l = parse_l(key, value)?,
            "g" => self.g = parse(key, value)?,
            "tau" => self.tau = if value == "auto" { None } else { Some(parse(key, value)?) },
            "n_grid" => self.n_grid = parse_list(key, value)?,
            "replications" => self.replications = parse(key, value)?,
            "metrics" => self.metrics = parse_list(key, value)?,
            "trimming" => self.trimming = parse_bool(key, value)?,
            "p" => self.p = if value == "auto" { None } else { Some(parse(key, value)?) },
            "t_levels" => self.t_levels = parse(key, value)?,
            "probe_y" => self.probe_y = parse(key, value)?,
            "probe_t" => self.probe_t = parse(key, value)?,
            "limit_source" => self.limit_source = parse(key, value)?,
            "limit_m" => self.limit_m = parse(key, value)?,
            "limit_m_t" => self.limit_m_t = parse(key, value)?,
            "ks_threshold_bk" => self.ks_threshold_bk = parse(key, value)?,
            "ks_threshold_functional" => self.ks_threshold_functional = parse(key, value)?,
            "repair" => self.repair = parse_bool(key, value)?,
            "clip_tolerance" => self.clip_tolerance = parse(key, value)?,
            "grid" => self.grid = parse(key, value)?,
            "precision" => self.precision = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => return Err(ConfigError::new(key, "unknown key")),
        }
        Ok(())
    }

    /// Applies `key=value`.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| ConfigError::new(pair.trim(), "expected key=value"))?;
        self.set(key.trim(), value)
    }

    /// Parses file contents on top of the defaults. A key may appear once.
    pub fn parse_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| ConfigError::new(line, "expected key = value"))?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(ConfigError::new(key, "assigned twice"));
            }
            seen.push(key);
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse_text(&text)
    }

    pub fn covariance(&self) -> CovarianceSpec<f64> {
        match self.family {
            CovarianceFamily::FgnMatched => CovarianceSpec { d: self.d, l: self.l, family: self.family },
            CovarianceFamily::PurePower => CovarianceSpec::pure_power(self.d, self.l),
        }
    }

    pub fn policy(&self) -> EmbeddingPolicy {
        EmbeddingPolicy { repair: self.repair, clip_tolerance: self.clip_tolerance, ..EmbeddingPolicy::default() }
    }

    /// Checks that do not depend on the subcommand.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.d > 0.0 && self.d < 1.0) {
            return Err(ConfigError::new("d", format!("need 0 < d < 1, got {}", self.d)));
        }
        if self.family == CovarianceFamily::FgnMatched && self.l != SlowlyVarying::Constant(1.0) {
            return Err(ConfigError::new("l", "the fgn-matched family fixes l = constant(1)"));
        }
        self.covariance().validate().map_err(|e| ConfigError::new("l", e.to_string()))?;
        if self.precision == 0 || self.precision > 17 {
            return Err(ConfigError::new("precision", "need 1 to 17 significant digits"));
        }
        if self.grid < 2 {
            return Err(ConfigError::new("grid", "need at least 2 points"));
        }
        if !(self.clip_tolerance >= 0.0) {
            return Err(ConfigError::new("clip_tolerance", "must be nonnegative"));
        }
        Ok(())
    }

    pub fn validate_simulate(&self) -> Result<(), ConfigError> {
        self.validate()?;
        if self.n == 0 {
            return Err(ConfigError::new("n", "path length must be at least 1"));
        }
        Ok(())
    }

    /// The experiment plan; plan-level failures are mapped to the most
    /// likely offending key.
    pub fn plan(&self) -> Result<ExperimentPlan, ConfigError> {
        self.validate()?;
        let plan = ExperimentPlan {
            model: Model { covariance: self.covariance(), subordination: self.g.clone() },
            tau: self.tau,
            n_grid: self.n_grid.clone(),
            replications: self.replications,
            master_seed: self.seed,
            metrics: self.metrics.clone(),
            trimming: self.trimming,
            p_override: self.p,
            t_levels: self.t_levels,
            probe_y: self.probe_y,
            probe_t: self.probe_t,
            limit_source: self.limit_source,
            limit_m: self.limit_m,
            limit_m_t: self.limit_m_t,
            ks_threshold_bk: self.ks_threshold_bk,
            ks_threshold_functional: self.ks_threshold_functional,
            policy: self.policy(),
        };
        plan.validate().map_err(|e| ConfigError::new(plan_key(&e.to_string()), e.to_string()))?;
        plan.analysis().map_err(|e| {
            let key = if e.to_string().contains("rank") { "tau" } else { "d" };
            ConfigError::new(key, e.to_string())
        })?;
        Ok(plan)
    }

    /// Resolved assignments, one per line, in a form [`RunConfig::parse_text`]
    /// reads back. `workers` is left out since it never changes results.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for &key in KEYS {
            let value = match key {
                "n" => self.n.to_string(),
                "seed" => self.seed.to_string(),
                "d" => self.d.to_string(),
                "family" => match self.family {
                    CovarianceFamily::FgnMatched => "fgn-matched".into(),
                    CovarianceFamily::PurePower => "pure-power".into(),
                },
                "l" => format_l(&self.l),
                "g" => self.g.to_string(),
                "tau" => self.tau.map_or("auto".into(), |t| t.to_string()),
                "n_grid" => join(&self.n_grid),
                "replications" => self.replications.to_string(),
                "metrics" => join(&self.metrics),
                "trimming" => self.trimming.to_string(),
                "p" => self.p.map_or("auto".into(), |p| p.to_string()),
                "t_levels" => self.t_levels.to_string(),
                "probe_y" => self.probe_y.to_string(),
                "probe_t" => self.probe_t.to_string(),
                "limit_source" => self.limit_source.to_string(),
                "limit_m" => self.limit_m.to_string(),
                "limit_m_t" => self.limit_m_t.to_string(),
                "ks_threshold_bk" => self.ks_threshold_bk.to_string(),
                "ks_threshold_functional" => self.ks_threshold_functional.to_string(),
                "repair" => self.repair.to_string(),
                "clip_tolerance" => self.clip_tolerance.to_string(),
                "grid" => self.grid.to_string(),
                "precision" => self.precision.to_string(),
                "workers" | "out" => continue,
                _ => unreachable!("every key is listed"),
            };
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }
}

fn plan_key(message: &str) -> &'static str {
    const HINTS: &[(&str, &str)] = &[
        ("n_grid", "n_grid"),
        ("replications", "replications"),
        ("metrics", "metrics"),
        ("t_levels", "t_levels"),
        ("probe", "probe_y"),
        ("p_override", "p"),
        ("transformation", "g"),
        ("distribution", "g"),
    ];
    HINTS.iter().find(|(needle, _)| message.contains(needle)).map_or("d", |&(_, key)| key)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_text() {
        let mut cfg = RunConfig::default();
        cfg.set_pair("n_grid=16,32").unwrap();
        cfg.set_pair("metrics = cor21, gc_rate").unwrap();
        cfg.set_pair("family=pure-power").unwrap();
        cfg.set_pair("l=logarithmic(0.8,0.5)").unwrap();
        cfg.set_pair("p=5").unwrap();
        let back = RunConfig::parse_text(&cfg.to_text()).unwrap();
        assert_eq!(RunConfig { out: cfg.out.clone(), ..back }, cfg);
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert_eq!(RunConfig::parse_text("bogus = 1").unwrap_err().key, "bogus");
        assert_eq!(RunConfig::parse_text("n = 4\nn = 5").unwrap_err().key, "n");
        assert_eq!(RunConfig::parse_text("n = four").unwrap_err().key, "n");
        let ok = RunConfig::parse_text("# comment\n\nn = 4 # trailing\n").unwrap();
        assert_eq!(ok.n, 4);
    }

    #[test]
    fn validation_names_the_key() {
        let mut cfg = RunConfig::default();
        cfg.n = 0;
        assert_eq!(cfg.validate_simulate().unwrap_err().key, "n");
        let mut cfg = RunConfig::default();
        cfg.set("l", "constant(0.8)").unwrap();
        assert_eq!(cfg.validate().unwrap_err().key, "l");
        let mut cfg = RunConfig::default();
        cfg.replications = 0;
        assert_eq!(cfg.plan().unwrap_err().key, "replications");
        let mut cfg = RunConfig::default();
        cfg.set("g", "square").unwrap();
        cfg.set("d", "0.6").unwrap();
        assert_eq!(cfg.plan().unwrap_err().key, "d");
        let mut cfg = RunConfig::default();
        cfg.tau = Some(2);
        assert_eq!(cfg.plan().unwrap_err().key, "tau");
    }
}

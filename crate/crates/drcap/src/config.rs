//! Flat `key=value` experiment configuration with dotted keys.
//!
//! Blank lines and lines starting with `#` are ignored. Later assignments
//! win, so `--set` overrides are simply applied after the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use drcap_core::flexcommit::default_grid;
use drcap_core::ingest::SynthConfig;

use crate::error::{Error, Result};

/// Every accepted key with its default, in file order.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("source", "synth"),
    ("traces.path", ""),
    ("traces.period", "24"),
    ("scenarios.path", ""),
    ("synth.n", "300"),
    ("synth.t", "1000"),
    ("synth.sigma_delta", "1.5"),
    ("synth.sigma_r", "5"),
    ("synth.a_mean", "1"),
    ("synth.a_rsd", "0.3"),
    ("synth.seed", "0"),
    ("cost.c_g", "0.01"),
    ("cost.p_cap", "0.02"),
    ("cost.overflow_price", "auto"),
    ("support.margin", "1.1"),
    ("lin.tol", "1e-8"),
    ("seq.tau", "1"),
    ("compare.p_cap_grid", "0,0.01,0.02,0.05,0.1,0.2"),
    ("rho_sweep.a_rsd", "1"),
    ("rho_sweep.grid", "step:0.05"),
    ("negotiate.customers", "5"),
    ("negotiate.slots", "50"),
    ("negotiate.c_g", "1"),
    ("negotiate.zeta", "auto"),
    ("negotiate.epsilon", "auto"),
    ("negotiate.max_rounds", "20000"),
    ("negotiate.proximal", "true"),
    ("negotiate.transport", "loopback"),
];

/// Raw key/value pairs after merging file and overrides.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = Self::default();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            raw.set_pair(line).map_err(|e| match e {
                Error::Config { key, reason } => Error::config(key, format!("line {}: {reason}", k + 1)),
                other => other,
            })?;
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies one `key=value` assignment.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::config(pair.trim(), "expected key=value"))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !DEFAULTS.iter().any(|(k, _)| *k == key) {
            return Err(Error::config(key, "unknown key"));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .or_else(|| DEFAULTS.iter().find(|(k, _)| *k == key).map(|(_, v)| *v))
            .expect("known key")
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(key);
        v.parse()
            .map_err(|e| Error::config(key, format!("cannot parse {v:?}: {e}")))
    }

    fn auto(&self, key: &str) -> Result<Option<f64>> {
        if self.get(key) == "auto" {
            Ok(None)
        } else {
            self.num(key).map(Some)
        }
    }

    fn list(&self, key: &str) -> Result<Vec<f64>> {
        let v = self.get(key);
        if let Some(step) = v.strip_prefix("step:") {
            let step: f64 = step
                .trim()
                .parse()
                .map_err(|e| Error::config(key, format!("bad step: {e}")))?;
            if !(step > 0.0 && step <= 1.0) {
                return Err(Error::config(key, "step must lie in (0, 1]"));
            }
            return Ok(default_grid(step));
        }
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|e| Error::config(key, format!("cannot parse {s:?}: {e}")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSource {
    Synth,
    /// Residuals of a trace file; `a` and `r` are still drawn synthetically.
    Traces {
        path: PathBuf,
        period: usize,
    },
    Scenarios {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegotiateConfig {
    /// Leading customers and slots kept for the negotiation run; 0 keeps all.
    pub customers: usize,
    pub slots: usize,
    /// Mismatch cost used for the negotiation instance.
    pub c_g: f64,
    pub zeta: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_rounds: usize,
    pub proximal: bool,
    pub tcp: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: ScenarioSource,
    pub synth: SynthConfig,
    pub c_g: f64,
    pub p_cap: f64,
    /// `None` selects ten times the largest marginal mismatch cost.
    pub overflow_price: Option<f64>,
    pub margin: f64,
    pub lin_tol: f64,
    pub seq_tau: f64,
    pub p_cap_grid: Vec<f64>,
    pub rho_rsd: Vec<f64>,
    pub rho_grid: Vec<f64>,
    pub negotiate: NegotiateConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_raw(&RawConfig::default()).expect("defaults are valid")
    }
}

fn check_sorted(key: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::config(key, "grid is empty"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::config(key, "grid values must be finite"));
    }
    if v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config(key, "grid must be strictly ascending"));
    }
    Ok(())
}

fn require(key: &str, ok: bool, reason: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, reason))
    }
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let source = match raw.get("source") {
            "synth" => ScenarioSource::Synth,
            "traces" => {
                let path = raw.get("traces.path");
                require("traces.path", !path.is_empty(), "required when source=traces")?;
                let period = raw.num("traces.period")?;
                require("traces.period", period >= 1, "must be at least 1")?;
                ScenarioSource::Traces {
                    path: path.into(),
                    period,
                }
            }
            "scenarios" => {
                let path = raw.get("scenarios.path");
                require("scenarios.path", !path.is_empty(), "required when source=scenarios")?;
                ScenarioSource::Scenarios { path: path.into() }
            }
            other => {
                return Err(Error::config(
                    "source",
                    format!("expected synth|traces|scenarios, got {other:?}"),
                ))
            }
        };
        let synth = SynthConfig {
            n: raw.num("synth.n")?,
            t: raw.num("synth.t")?,
            sigma_delta: raw.num("synth.sigma_delta")?,
            sigma_r: raw.num("synth.sigma_r")?,
            a_mean: raw.num("synth.a_mean")?,
            a_rsd: raw.num("synth.a_rsd")?,
            seed: raw.num("synth.seed")?,
        };
        require("synth.n", synth.n >= 1, "must be at least 1")?;
        require("synth.t", synth.t >= 1, "must be at least 1")?;
        require(
            "synth.sigma_delta",
            synth.sigma_delta >= 0.0 && synth.sigma_delta.is_finite(),
            "must be finite and >= 0",
        )?;
        require(
            "synth.sigma_r",
            synth.sigma_r >= 0.0 && synth.sigma_r.is_finite(),
            "must be finite and >= 0",
        )?;
        require(
            "synth.a_mean",
            synth.a_mean > 0.0 && synth.a_mean.is_finite(),
            "must be positive",
        )?;
        require(
            "synth.a_rsd",
            synth.a_rsd >= 0.0 && synth.a_rsd.is_finite(),
            "must be finite and >= 0",
        )?;

        let c_g: f64 = raw.num("cost.c_g")?;
        require("cost.c_g", c_g > 0.0 && c_g.is_finite(), "must be positive")?;
        let p_cap: f64 = raw.num("cost.p_cap")?;
        require(
            "cost.p_cap",
            p_cap >= 0.0 && p_cap.is_finite(),
            "must be finite and >= 0",
        )?;
        let overflow_price = raw.auto("cost.overflow_price")?;
        if let Some(p) = overflow_price {
            require(
                "cost.overflow_price",
                p >= 0.0 && p.is_finite(),
                "must be finite and >= 0",
            )?;
        }
        let margin: f64 = raw.num("support.margin")?;
        require(
            "support.margin",
            margin >= 1.0 && margin.is_finite(),
            "must be at least 1",
        )?;
        let lin_tol: f64 = raw.num("lin.tol")?;
        require("lin.tol", lin_tol > 0.0, "must be positive")?;
        let seq_tau: f64 = raw.num("seq.tau")?;
        require("seq.tau", (0.0..=1.0).contains(&seq_tau), "must lie in [0, 1]")?;

        let p_cap_grid = raw.list("compare.p_cap_grid")?;
        check_sorted("compare.p_cap_grid", &p_cap_grid)?;
        require("compare.p_cap_grid", p_cap_grid[0] >= 0.0, "prices must be >= 0")?;
        let rho_rsd = raw.list("rho_sweep.a_rsd")?;
        require(
            "rho_sweep.a_rsd",
            !rho_rsd.is_empty() && rho_rsd.iter().all(|v| *v >= 0.0 && v.is_finite()),
            "values must be finite and >= 0",
        )?;
        let rho_grid = raw.list("rho_sweep.grid")?;
        check_sorted("rho_sweep.grid", &rho_grid)?;
        require(
            "rho_sweep.grid",
            rho_grid[0] >= 0.0 && rho_grid[rho_grid.len() - 1] <= 1.0,
            "values must lie in [0, 1]",
        )?;

        let zeta = raw.auto("negotiate.zeta")?;
        if let Some(z) = zeta {
            require("negotiate.zeta", z > 0.0 && z.is_finite(), "must be positive")?;
        }
        let epsilon = raw.auto("negotiate.epsilon")?;
        if let Some(e) = epsilon {
            require("negotiate.epsilon", e >= 0.0 && e.is_finite(), "must be >= 0")?;
        }
        let negotiate_c_g: f64 = raw.num("negotiate.c_g")?;
        require(
            "negotiate.c_g",
            negotiate_c_g > 0.0 && negotiate_c_g.is_finite(),
            "must be positive",
        )?;
        let max_rounds = raw.num("negotiate.max_rounds")?;
        require("negotiate.max_rounds", max_rounds >= 1, "must be at least 1")?;
        let tcp = match raw.get("negotiate.transport") {
            "loopback" => false,
            "tcp" => true,
            other => {
                return Err(Error::config(
                    "negotiate.transport",
                    format!("expected loopback|tcp, got {other:?}"),
                ))
            }
        };
        let negotiate = NegotiateConfig {
            customers: raw.num("negotiate.customers")?,
            slots: raw.num("negotiate.slots")?,
            c_g: negotiate_c_g,
            zeta,
            epsilon,
            max_rounds,
            proximal: raw.num("negotiate.proximal")?,
            tcp,
        };
        Ok(Self {
            source,
            synth,
            c_g,
            p_cap,
            overflow_price,
            margin,
            lin_tol,
            seq_tau,
            p_cap_grid,
            rho_rsd,
            rho_grid,
            negotiate,
        })
    }

    /// Reads `path` (if any), then applies `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut raw = match path {
            Some(p) => RawConfig::load(p)?,
            None => RawConfig::default(),
        };
        for o in overrides {
            raw.set_pair(o)?;
        }
        Self::from_raw(&raw)
    }
}

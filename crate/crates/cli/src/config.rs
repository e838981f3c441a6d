//! Flat `key = value` configuration with command-line overrides.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// Merged configuration. Every key must be read by the command, otherwise
/// [`Config::finish`] reports it as unknown.
#[derive(Debug, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl Config {
    /// Parses the file (if any), then applies `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Config::default();
        if let Some(path) = path {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
            cfg.parse_text(&text).with_context(|| format!("in config file {}", path.display()))?;
        }
        for (k, v) in overrides {
            cfg.values.insert(normalize(k), v.clone());
        }
        Ok(cfg)
    }

    fn parse_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected key = value", no + 1))?;
            let key = normalize(k);
            if key.is_empty() {
                bail!("line {}: empty key", no + 1);
            }
            self.values.insert(key, v.trim().to_string());
        }
        Ok(())
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.values.get(key).map(String::as_str)
    }

    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(s) => s.parse().map(Some).map_err(|e| anyhow!("bad value for '{key}' ({s}): {e}")),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(s) => s
                .split(',')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(|p| p.parse().map_err(|e| anyhow!("bad entry '{p}' in '{key}': {e}")))
                .collect(),
        }
    }

    /// Marks keys as consumed without reading them.
    pub fn ignore(&self, keys: &[&str]) {
        let mut used = self.used.borrow_mut();
        for k in keys {
            used.insert((*k).to_string());
        }
    }

    /// Fails on keys no reader asked for.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self.values.keys().filter(|k| !used.contains(*k)).map(String::as_str).collect();
        if !unknown.is_empty() {
            bail!("unknown configuration key(s) for this command: {}", unknown.join(", "));
        }
        Ok(())
    }
}

/// Named tolerances adjustable with `--tol-override NAME=VAL`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Relative slack on estimate margins.
    pub tol_disc: f64,
    /// Minimum observed convergence order of the evolution residuals.
    pub residual_order: f64,
    /// Largest accepted local error of the soliton integrator.
    pub ode: f64,
    /// Slack in the ordering checks of the doubling suite.
    pub ordering: f64,
    /// Allowed excess of the finest doubling deviation over `1/j`.
    pub deviation: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { tol_disc: 1e-3, residual_order: 0.9, ode: 1e-8, ordering: 1e-6, deviation: 5e-3 }
    }
}

impl Tolerances {
    pub fn apply(&mut self, spec: &str) -> Result<()> {
        let (name, val) = spec.split_once('=').ok_or_else(|| anyhow!("--tol-override expects NAME=VAL, got '{spec}'"))?;
        let v: f64 = val.trim().parse().map_err(|e| anyhow!("bad tolerance value '{val}': {e}"))?;
        if !v.is_finite() || v < 0.0 {
            bail!("tolerance {name} must be finite and non-negative, got {v}");
        }
        let slot = match normalize(name).as_str() {
            "tol_disc" => &mut self.tol_disc,
            "residual_order" => &mut self.residual_order,
            "ode" | "tol_ode" => &mut self.ode,
            "ordering" => &mut self.ordering,
            "deviation" => &mut self.deviation,
            other => bail!("unknown tolerance '{other}' (known: tol_disc, residual_order, ode, ordering, deviation)"),
        };
        *slot = v;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let mut cfg = Config::default();
        cfg.parse_text("# comment\nalpha = 0.5\n t-end=0.2 # trailing\n\n").unwrap();
        cfg.values.insert("alpha".into(), "2".into());
        assert_eq!(cfg.get::<f64>("alpha", 1.0).unwrap(), 2.0);
        assert_eq!(cfg.get::<f64>("t_end", 1.0).unwrap(), 0.2);
        assert_eq!(cfg.get::<usize>("n", 3).unwrap(), 3);
        cfg.finish().unwrap();
    }

    #[test]
    fn unknown_and_malformed() {
        let mut cfg = Config::default();
        assert!(cfg.parse_text("novalue\n").is_err());
        cfg.parse_text("typo = 1\nj_list = 2, 4,8").unwrap();
        assert_eq!(cfg.list::<u32>("j_list", vec![]).unwrap(), vec![2, 4, 8]);
        assert!(cfg.finish().unwrap_err().to_string().contains("typo"));
        assert!(Config::default().get::<f64>("x", 0.0).is_ok());
    }

    #[test]
    fn tolerance_names() {
        let mut t = Tolerances::default();
        t.apply("tol-disc=1e-2").unwrap();
        assert_eq!(t.tol_disc, 1e-2);
        assert!(t.apply("bogus=1").is_err());
        assert!(t.apply("ode").is_err());
    }
}

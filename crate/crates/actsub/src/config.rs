//! Flat key-value configuration with dotted sections.
//!
//! ```text
//! # comment
//! kernel = gaussian
//! pipeline.budget = 2000
//!
//! [solver]
//! eta = 1.0
//! stages = 20
//! ```
//!
//! `[section]` headers prefix the keys that follow; dotted keys work
//! with or without a section. Later assignments win, CLI overrides are
//! applied last, and unknown keys are rejected by name.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

/// Every key any subcommand accepts, with a short description.
pub const KNOWN_KEYS: &[(&str, &str)] = &[
    ("kernel", "kernel family: gaussian | epanechnikov | higher_order(l)"),
    ("pipeline.k", "number of subsampling iterations (default 2)"),
    ("pipeline.budget", "label budget N"),
    ("pipeline.split", "per-iteration budget fractions, comma separated"),
    ("pipeline.delta", "per-iteration bandwidths (single value broadcasts)"),
    ("pipeline.mode", "fit mode: cv | fixed | theory"),
    ("pipeline.b", "fixed active-set half-widths for iterations 2..k"),
    ("pipeline.b_grid", "width grid for cv mode: auto<P> or comma list"),
    ("pipeline.folds", "cross-validation folds (default 5)"),
    ("pipeline.loss", "training loss: smoothed | logistic"),
    ("pipeline.lambda", "fixed per-iteration penalties (skips CV)"),
    ("theory.beta", "smoothness parameter for theory mode (>= 1)"),
    ("theory.s", "sparsity used by the theory schedules"),
    ("theory.c1", "schedule constant for bandwidths (default 1)"),
    ("theory.c2", "schedule constant for penalties (default 1)"),
    ("theory.c3", "schedule constant for widths (default 1)"),
    ("solver.eta", "initial proximal step size (default 1)"),
    ("solver.nu", "stage precision factor in (0,1) (default 0.25)"),
    ("solver.phi", "penalty decay in (0,1); overrides stage-count derivation"),
    ("solver.stages", "path stages T (default 20)"),
    ("solver.eps_tgt", "final stationarity precision (default 1e-6)"),
    ("solver.max_inner_iters", "inner iteration cap per stage (default 500)"),
    ("solver.ball_radius", "l2 constraint radius (default unbounded)"),
    ("cv.lambda_grid_len", "penalty grid length (default 20)"),
    ("cv.lambda_grid_span", "penalty grid span lambda0/lambda_min (default 1000)"),
    ("bench.model", "simulation model: logistic | binary_response | conditional_mean"),
    ("bench.n", "pool rows per replicate"),
    ("bench.d", "covariate dimension"),
    ("bench.s", "sparsity of the ground truth"),
    ("bench.reps", "number of replicates"),
    ("bench.eval_rows", "evaluation pool rows (default 100000)"),
    ("bench.methods", "subset of passive_pf,twostep_pf,passive_lr,twostep_lr"),
    ("bench.b_grid", "sweep width grid: auto<P> or comma list"),
    ("bench.n_grid", "budget grid for rate scaling, comma separated"),
];

fn is_known(key: &str) -> bool {
    KNOWN_KEYS.iter().any(|(k, _)| *k == key)
}

/// Parsed configuration: a flat map of dotted keys to raw strings.
#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

fn valid_key_chars(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '.')
        && !s.starts_with('.')
        && !s.ends_with('.')
        && !s.contains("..")
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(inner) = line.strip_prefix('[') {
                let name = inner.strip_suffix(']').ok_or_else(|| {
                    Error::Config(format!("line {}: unterminated section header", lineno + 1))
                })?;
                let name = name.trim();
                if !valid_key_chars(name) {
                    return Err(Error::Config(format!(
                        "line {}: bad section name `{name}`",
                        lineno + 1
                    )));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            if !valid_key_chars(key) {
                return Err(Error::Config(format!("line {}: bad key `{key}`", lineno + 1)));
            }
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            if !is_known(&full) {
                return Err(Error::Config(format!("unknown config key `{full}`")));
            }
            let mut value = value.trim();
            if value.len() >= 2
                && ((value.starts_with('"') && value.ends_with('"'))
                    || (value.starts_with('\'') && value.ends_with('\'')))
            {
                value = &value[1..value.len() - 1];
            }
            entries.insert(full, value.to_string());
        }
        Ok(Config { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Apply `key=value` pairs (CLI overrides beat file values).
    pub fn apply_overrides(&mut self, pairs: &[String]) -> Result<()> {
        for pair in pairs {
            let (key, value) = pair.split_once('=').ok_or_else(|| {
                Error::Config(format!("override `{pair}` is not of the form key=value"))
            })?;
            let key = key.trim();
            if !is_known(key) {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
            self.entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("`{key}` expects a number, got `{v}`"))),
        }
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("`{key}` expects an integer, got `{v}`"))),
        }
    }

    pub fn get_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => {
                let mut out = Vec::new();
                for part in v.split(',') {
                    let part = part.trim();
                    if part.is_empty() {
                        continue;
                    }
                    out.push(part.parse().map_err(|_| {
                        Error::Config(format!("`{key}`: `{part}` is not a number"))
                    })?);
                }
                if out.is_empty() {
                    return Err(Error::Config(format!("`{key}` list is empty")));
                }
                Ok(Some(out))
            }
        }
    }

    pub fn get_str_list(&self, key: &str) -> Option<Vec<String>> {
        self.entries.get(key).map(|v| {
            v.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        })
    }

    /// One line per known key, for `--help`.
    pub fn describe_keys() -> String {
        let mut out = String::from("Config keys (file or -o key=value overrides):\n");
        for (key, desc) in KNOWN_KEYS {
            out.push_str(&format!("  {key:<24} {desc}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_dotted_keys() {
        let text = "\n# comment\nkernel = gaussian\npipeline.budget = 2000\n\n[solver]\neta = 0.5\nstages = 10\n\n[pipeline]\nk = 2\n";
        let cfg = Config::parse(text).unwrap();
        assert_eq!(cfg.get("kernel"), Some("gaussian"));
        assert_eq!(cfg.get_f64("pipeline.budget").unwrap(), Some(2000.0));
        assert_eq!(cfg.get_f64("solver.eta").unwrap(), Some(0.5));
        assert_eq!(cfg.get_usize("pipeline.k").unwrap(), Some(2));
        assert_eq!(cfg.get("pipeline.mode"), None);
    }

    #[test]
    fn rejects_unknown_keys_by_name() {
        let err = Config::parse("pipeline.frobnicate = 1\n").unwrap_err();
        assert!(err.to_string().contains("pipeline.frobnicate"), "{err}");
        let err = Config::parse("[solver]\nwarp = 9\n").unwrap_err();
        assert!(err.to_string().contains("solver.warp"), "{err}");
        let mut cfg = Config::default();
        let err = cfg.apply_overrides(&["nope=1".to_string()]).unwrap_err();
        assert!(err.to_string().contains("nope"), "{err}");
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Config::parse("[unclosed\n").is_err());
        assert!(Config::parse("just a line\n").is_err());
        assert!(Config::parse("UPPER = 1\n").is_err());
        assert!(Config::parse(".leading = 1\n").is_err());
    }

    #[test]
    fn overrides_beat_file_values() {
        let mut cfg = Config::parse("pipeline.budget = 100\n").unwrap();
        cfg.apply_overrides(&["pipeline.budget=250".to_string()]).unwrap();
        assert_eq!(cfg.get_f64("pipeline.budget").unwrap(), Some(250.0));
    }

    #[test]
    fn lists_and_quotes() {
        let cfg =
            Config::parse("pipeline.split = 0.125, 0.125, 0.75\nbench.model = \"logistic\"\n")
                .unwrap();
        assert_eq!(
            cfg.get_f64_list("pipeline.split").unwrap().unwrap(),
            vec![0.125, 0.125, 0.75]
        );
        assert_eq!(cfg.get("bench.model"), Some("logistic"));
        assert!(Config::parse("pipeline.split = a,b\n")
            .unwrap()
            .get_f64_list("pipeline.split")
            .is_err());
    }

    #[test]
    fn every_known_key_round_trips() {
        for (key, _) in KNOWN_KEYS {
            let text = format!("{key} = 1\n");
            let cfg = Config::parse(&text).unwrap();
            assert_eq!(cfg.get(key), Some("1"));
        }
    }
}

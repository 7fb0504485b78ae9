//! Run settings: built-in presets, `key = value` files and command-line
//! flags, merged in that order of increasing priority.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use efs_core::backward::SnapshotMode;

use crate::CliError;

/// Potential exponent, possibly given relative to the data dimension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SValue {
    Number(f64),
    /// `d - offset`
    DimMinus(f64),
}

impl SValue {
    pub fn resolve(self, d: usize) -> Result<f64, CliError> {
        let s = match self {
            SValue::Number(s) => s,
            SValue::DimMinus(off) => d as f64 - off,
        };
        if !s.is_finite() || s < 0.0 {
            return Err(CliError::Config(format!("s resolves to {s} for d = {d}; need s >= 0")));
        }
        Ok(s)
    }
}

impl FromStr for SValue {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, String> {
        let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        if compact == "d" {
            return Ok(SValue::DimMinus(0.0));
        }
        if let Some(rest) = compact.strip_prefix("d-") {
            return rest
                .parse::<f64>()
                .map(SValue::DimMinus)
                .map_err(|_| format!("cannot parse s = {text:?}"));
        }
        compact
            .parse::<f64>()
            .map(SValue::Number)
            .map_err(|_| format!("cannot parse s = {text:?}; expected a number or d-<offset>"))
    }
}

impl fmt::Display for SValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SValue::Number(s) => write!(f, "{s}"),
            SValue::DimMinus(off) => write!(f, "d-{off}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum DatasetKind {
    Mixture,
    Swiss,
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mixture" => Ok(DatasetKind::Mixture),
            "swiss" => Ok(DatasetKind::Swiss),
            other => Err(format!("unknown dataset {other:?} (expected mixture or swiss)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Mixture,
    Mnist,
    Swiss,
}

/// Every run parameter, each possibly unset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    pub gamma: Option<f64>,
    pub k: Option<usize>,
    pub t: Option<usize>,
    pub beta: Option<f64>,
    pub epsilon: Option<f64>,
    pub s: Option<SValue>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub dataset: Option<DatasetKind>,
    pub noise: Option<f64>,
    pub snapshot_mode: Option<SnapshotMode>,
    pub m: Option<usize>,
    pub grad_tol: Option<f64>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident, $($f:ident),*) => {
        Settings { $($f: $top.$f.or($base.$f)),* }
    };
}

impl Settings {
    /// Fields set in `top` win.
    pub fn overlay(self, top: Settings) -> Settings {
        let base = self;
        overlay_fields!(
            base, top, gamma, k, t, beta, epsilon, s, n, seed, dataset, noise, snapshot_mode, m,
            grad_tol
        )
    }

    pub fn preset(p: Preset) -> Settings {
        let (gamma, k, beta, s, n, dataset) = match p {
            Preset::Mixture => (0.1, 31, 0.1, SValue::Number(1.0), 400, Some(DatasetKind::Mixture)),
            Preset::Mnist => (0.05, 120, 0.01, SValue::DimMinus(2.0), 15_000, None),
            Preset::Swiss => (0.05, 120, 0.1, SValue::DimMinus(2.0), 500, Some(DatasetKind::Swiss)),
        };
        Settings {
            gamma: Some(gamma),
            k: Some(k),
            t: Some(300),
            beta: Some(beta),
            epsilon: Some(1e-3),
            s: Some(s),
            n: Some(n),
            dataset,
            ..Settings::default()
        }
    }

    pub fn from_file(path: &Path) -> Result<Settings, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Settings::parse(&text).map_err(|(line, msg)| {
            CliError::Config(format!("{}:{line}: {msg}", path.display()))
        })
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Settings, (usize, String)> {
        let mut out = Settings::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| (lineno, format!("expected key = value, found {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: String| (lineno, format!("{key}: {e}"));
            fn num<T: FromStr>(v: &str) -> Result<T, String> {
                v.parse().map_err(|_| format!("cannot parse {v:?}"))
            }
            match key {
                "gamma" => out.gamma = Some(num(value).map_err(bad)?),
                "k" => out.k = Some(num(value).map_err(bad)?),
                "T" => out.t = Some(num(value).map_err(bad)?),
                "beta" => out.beta = Some(num(value).map_err(bad)?),
                "epsilon" => out.epsilon = Some(num(value).map_err(bad)?),
                "s" => out.s = Some(value.parse().map_err(bad)?),
                "n" => out.n = Some(num(value).map_err(bad)?),
                "seed" => out.seed = Some(num(value).map_err(bad)?),
                "dataset" => out.dataset = Some(value.parse().map_err(bad)?),
                "noise" => out.noise = Some(num(value).map_err(bad)?),
                "snapshot_mode" => {
                    out.snapshot_mode = Some(value.parse().map_err(|e: efs_core::error::EfsError| bad(e.to_string()))?)
                }
                "m" => out.m = Some(num(value).map_err(bad)?),
                "grad_tol" => out.grad_tol = Some(num(value).map_err(bad)?),
                other => return Err((lineno, format!("unknown key {other:?}"))),
            }
        }
        Ok(out)
    }

    /// Fills every unset field with its default.
    pub fn resolve(self) -> Result<RunConfig, CliError> {
        let filled = Settings::preset(Preset::Mixture)
            .overlay(Settings {
                seed: Some(0),
                dataset: Some(DatasetKind::Mixture),
                noise: Some(0.2),
                snapshot_mode: Some(SnapshotMode::default()),
                m: Some(50),
                grad_tol: Some(efs_core::backward::BackwardConfig::DEFAULT_GRAD_TOL),
                ..Settings::default()
            })
            .overlay(self);
        let cfg = RunConfig {
            gamma: filled.gamma.unwrap(),
            k: filled.k.unwrap(),
            t: filled.t.unwrap(),
            beta: filled.beta.unwrap(),
            epsilon: filled.epsilon.unwrap(),
            s: filled.s.unwrap(),
            n: filled.n.unwrap(),
            seed: filled.seed.unwrap(),
            dataset: filled.dataset.unwrap(),
            noise: filled.noise.unwrap(),
            snapshot_mode: filled.snapshot_mode.unwrap(),
            m: filled.m.unwrap(),
            grad_tol: filled.grad_tol.unwrap(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Fully specified run parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub gamma: f64,
    pub k: usize,
    pub t: usize,
    pub beta: f64,
    pub epsilon: f64,
    pub s: SValue,
    pub n: usize,
    pub seed: u64,
    pub dataset: DatasetKind,
    pub noise: f64,
    pub snapshot_mode: SnapshotMode,
    pub m: usize,
    pub grad_tol: f64,
}

impl RunConfig {
    fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return fail(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if self.k == 0 {
            return fail("k must be >= 1".into());
        }
        if self.t == 0 {
            return fail("T must be >= 1".into());
        }
        if !self.beta.is_finite() || self.beta <= 0.0 {
            return fail(format!("beta must be positive, got {}", self.beta));
        }
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return fail(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if self.n < 2 {
            return fail(format!("n must be >= 2, got {}", self.n));
        }
        if !self.noise.is_finite() || self.noise < 0.0 {
            return fail(format!("noise must be >= 0, got {}", self.noise));
        }
        if self.m == 0 {
            return fail("m must be >= 1".into());
        }
        if !(self.grad_tol >= 0.0) {
            return fail(format!("grad_tol must be >= 0, got {}", self.grad_tol));
        }
        Ok(())
    }

    pub fn require_positive_gamma(&self) -> Result<(), CliError> {
        if self.gamma > 0.0 {
            Ok(())
        } else {
            Err(CliError::Config("gamma must be positive".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_symbolic_s() {
        assert_eq!("d-2".parse::<SValue>().unwrap(), SValue::DimMinus(2.0));
        assert_eq!("d - 2".parse::<SValue>().unwrap(), SValue::DimMinus(2.0));
        assert_eq!("1.5".parse::<SValue>().unwrap(), SValue::Number(1.5));
        assert_eq!(SValue::DimMinus(2.0).resolve(15).unwrap(), 13.0);
        assert_eq!(SValue::DimMinus(2.0).resolve(2).unwrap(), 0.0);
        assert!(SValue::DimMinus(2.0).resolve(1).is_err());
        assert!("x-2".parse::<SValue>().is_err());
    }

    #[test]
    fn file_keys_and_comments() {
        let s = Settings::parse("# swiss roll run\ngamma = 0.05\nk=120 # iterations\nT = 300\ns = d-2\n\nsnapshot_mode = exact\n").unwrap();
        assert_eq!(s.gamma, Some(0.05));
        assert_eq!(s.k, Some(120));
        assert_eq!(s.t, Some(300));
        assert_eq!(s.s, Some(SValue::DimMinus(2.0)));
        assert_eq!(s.snapshot_mode, Some(SnapshotMode::Exact));
        assert_eq!(Settings::parse("gamma 0.1").unwrap_err().0, 1);
        assert_eq!(Settings::parse("k = 3\nwhat = 1").unwrap_err().0, 2);
        assert!(Settings::parse("k = -3").is_err());
    }

    #[test]
    fn flags_override_file_override_preset() {
        let preset = Settings::preset(Preset::Swiss);
        let file = Settings::parse("k = 10\nbeta = 0.2").unwrap();
        let flags = Settings {
            k: Some(7),
            ..Settings::default()
        };
        let cfg = preset.overlay(file).overlay(flags).resolve().unwrap();
        assert_eq!(cfg.k, 7);
        assert_eq!(cfg.beta, 0.2);
        assert_eq!(cfg.gamma, 0.05);
        assert_eq!(cfg.s, SValue::DimMinus(2.0));
        assert_eq!(cfg.dataset, DatasetKind::Swiss);
    }

    #[test]
    fn defaults_are_first_table_row() {
        let cfg = Settings::default().resolve().unwrap();
        assert_eq!((cfg.gamma, cfg.k, cfg.t, cfg.beta, cfg.epsilon, cfg.n), (0.1, 31, 300, 0.1, 1e-3, 400));
        assert_eq!(cfg.s, SValue::Number(1.0));
    }

    #[test]
    fn validation_and_gamma_check() {
        let zero = Settings {
            gamma: Some(0.0),
            ..Settings::default()
        }
        .resolve()
        .unwrap();
        assert!(zero.require_positive_gamma().is_err());
        let bad = Settings {
            beta: Some(0.0),
            ..Settings::default()
        };
        assert!(bad.resolve().is_err());
    }
}

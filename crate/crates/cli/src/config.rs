//! Flat `key = value` configuration. Defaults, then the config file, then
//! command-line overrides; validation happens once on the merged map.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use esta_core::{DerivativeMethod, ErrorKind, Family, Integrator, NoiseKind, Numerics, PhysicalParams, TargetConvention};

/// Every accepted key with its default.
pub const KEYS: &[(&str, &str)] = &[
    ("mass_amu", "133"),
    ("wavelength_nm", "866"),
    ("alpha", "150"),
    ("distance_sites", "1"),
    ("grid_points", "2048"),
    ("grid_pad_sigma", "12"),
    ("dt_over_tau", "0.0005"),
    ("imag_time_tol", "1e-14"),
    ("integrator", "yoshida4"),
    ("target_convention", "unperturbed"),
    ("trajectories", "q01,q02,q03,Q1,Q2,Q3"),
    ("tf_min", "0.8"),
    ("tf_max", "1.45"),
    ("tf_step", "0.05"),
    ("tf", "1.0"),
    ("family", "1"),
    ("basis_size", "8"),
    ("mode_cutoff", "4"),
    ("error_kinds", "correlated,amplitude,wavenumber"),
    ("sensitivity_method", "fd"),
    ("fd_step", "0.001"),
    ("f_reference", "0.9"),
    ("delta_range", "-0.1:0.1:0.02"),
    ("delta_tf", "1.1"),
    ("noise_kinds", "position,amplitude"),
    ("mc_realizations", "0"),
    ("deviation_kind", "correlated"),
    ("derivative_method", "fd"),
    ("samples", "1000"),
    ("workers", "0"),
    ("seed", "1"),
    ("out_dir", "out"),
    ("svg", "false"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self { key: key.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config key `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// An STA (q0j) or eSTA (Qj) trajectory of one family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrajectorySpec {
    pub family: Family,
    pub esta: bool,
}

impl fmt::Display for TrajectorySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = if self.esta { "Q" } else { "q0" };
        write!(f, "{prefix}{}", self.family.index())
    }
}

impl FromStr for TrajectorySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (esta, rest) = if let Some(r) = s.strip_prefix("q0") {
            (false, r)
        } else if let Some(r) = s.strip_prefix('Q') {
            (true, r)
        } else {
            return Err(format!("unknown trajectory `{s}` (expected q01..q03 or Q1..Q3)"));
        };
        let family = rest
            .parse()
            .ok()
            .and_then(Family::from_index)
            .ok_or_else(|| format!("unknown trajectory `{s}` (expected q01..q03 or Q1..Q3)"))?;
        Ok(Self { family, esta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitivityMethod {
    FiniteDifference,
    Tdpt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub physical: PhysicalParams,
    pub numerics: Numerics,
    pub trajectories: Vec<TrajectorySpec>,
    pub tf_grid: Vec<f64>,
    pub tf: f64,
    pub family: Family,
    pub basis_size: usize,
    pub mode_cutoff: usize,
    pub error_kinds: Vec<ErrorKind>,
    pub sensitivity_method: SensitivityMethod,
    pub fd_step: f64,
    pub f_reference: f64,
    pub delta_grid: Vec<f64>,
    pub delta_tf: f64,
    pub noise_kinds: Vec<NoiseKind>,
    pub mc_realizations: usize,
    pub deviation_kind: ErrorKind,
    pub derivative_method: DerivativeMethod,
    pub samples: usize,
    pub workers: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub svg: bool,
}

#[derive(Debug, Clone)]
pub struct RawConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self { values: KEYS.iter().map(|&(k, v)| (k, v.to_string())).collect() }
    }
}

impl RawConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let known = KEYS.iter().find(|(k, _)| *k == key).map(|(k, _)| *k);
        let key = known.ok_or_else(|| ConfigError::new(key, "unknown key"))?;
        self.values.insert(key, value.trim().to_string());
        Ok(())
    }

    /// Applies `key=value` given on the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (k, v) = pair.split_once('=').ok_or_else(|| ConfigError::new(pair, "expected KEY=VALUE"))?;
        self.set(k.trim(), v)
    }

    /// Merges a config file; `#` starts a comment.
    pub fn merge_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::new(format!("line {}", i + 1), format!("expected `key = value`, got `{line}`")))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    fn get(&self, key: &'static str) -> &str {
        &self.values[key]
    }

    fn parse<T: FromStr>(&self, key: &'static str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let raw = self.get(key);
        raw.parse().map_err(|e| ConfigError::new(key, format!("cannot parse `{raw}`: {e}")))
    }

    fn list<T: FromStr>(&self, key: &'static str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let items: Vec<T> = self
            .get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| ConfigError::new(key, format!("{e}"))))
            .collect::<Result<_, _>>()?;
        if items.is_empty() {
            return Err(ConfigError::new(key, "list is empty"));
        }
        Ok(items)
    }

    fn positive(&self, key: &'static str) -> Result<f64, ConfigError> {
        let v: f64 = self.parse(key)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(ConfigError::new(key, format!("must be positive, got {v}")));
        }
        Ok(v)
    }

    pub fn build(&self) -> Result<SweepConfig, ConfigError> {
        let physical = PhysicalParams {
            mass: self.parse("mass_amu")?,
            wavelength: self.parse("wavelength_nm")?,
            alpha: self.parse("alpha")?,
            distance_sites: self.parse("distance_sites")?,
        };
        physical.validate().map_err(core_error)?;
        let numerics = Numerics {
            grid_points: self.parse("grid_points")?,
            grid_pad: self.parse("grid_pad_sigma")?,
            dt: self.parse("dt_over_tau")?,
            imag_time_tol: self.parse("imag_time_tol")?,
            target: match self.get("target_convention") {
                "unperturbed" => TargetConvention::Unperturbed,
                "perturbed" => TargetConvention::Perturbed,
                other => return Err(ConfigError::new("target_convention", format!("expected unperturbed or perturbed, got `{other}`"))),
            },
            integrator: match self.get("integrator") {
                "yoshida4" => Integrator::Yoshida4,
                "strang" => Integrator::Strang,
                other => return Err(ConfigError::new("integrator", format!("expected yoshida4 or strang, got `{other}`"))),
            },
        };
        numerics.validate().map_err(core_error)?;

        let (tf_min, tf_max, tf_step) = (self.positive("tf_min")?, self.positive("tf_max")?, self.positive("tf_step")?);
        if tf_max < tf_min {
            return Err(ConfigError::new("tf_max", format!("{tf_max} is below tf_min = {tf_min}")));
        }
        let delta_grid = parse_range(self.get("delta_range")).map_err(|m| ConfigError::new("delta_range", m))?;
        if delta_grid.first().is_some_and(|&d| d <= -1.0) {
            return Err(ConfigError::new("delta_range", "δ must stay above −1"));
        }
        let f_reference: f64 = self.parse("f_reference")?;
        if !(f_reference > 0.0 && f_reference < 1.0) {
            return Err(ConfigError::new("f_reference", format!("must lie in (0, 1), got {f_reference}")));
        }
        let family_index: usize = self.parse("family")?;
        let family = Family::from_index(family_index).ok_or_else(|| ConfigError::new("family", "expected 1, 2 or 3"))?;
        let basis_size: usize = self.parse("basis_size")?;
        let mode_cutoff: usize = self.parse("mode_cutoff")?;
        if basis_size == 0 || mode_cutoff == 0 {
            let key = if basis_size == 0 { "basis_size" } else { "mode_cutoff" };
            return Err(ConfigError::new(key, "must be at least 1"));
        }
        let samples: usize = self.parse("samples")?;
        if samples < 2 {
            return Err(ConfigError::new("samples", "need at least 2 samples"));
        }
        let svg = match self.get("svg") {
            "true" | "1" | "yes" => true,
            "false" | "0" | "no" => false,
            other => return Err(ConfigError::new("svg", format!("expected true or false, got `{other}`"))),
        };
        Ok(SweepConfig {
            physical,
            numerics,
            trajectories: self.list("trajectories")?,
            tf_grid: grid(tf_min, tf_max, tf_step),
            tf: self.positive("tf")?,
            family,
            basis_size,
            mode_cutoff,
            error_kinds: self.list("error_kinds")?,
            sensitivity_method: match self.get("sensitivity_method") {
                "fd" => SensitivityMethod::FiniteDifference,
                "tdpt" => SensitivityMethod::Tdpt,
                other => return Err(ConfigError::new("sensitivity_method", format!("expected fd or tdpt, got `{other}`"))),
            },
            fd_step: self.positive("fd_step")?,
            f_reference,
            delta_grid,
            delta_tf: self.positive("delta_tf")?,
            noise_kinds: self.list("noise_kinds")?,
            mc_realizations: self.parse("mc_realizations")?,
            deviation_kind: self.parse("deviation_kind")?,
            derivative_method: match self.get("derivative_method") {
                "fd" => DerivativeMethod::FiniteDifference,
                "analytic" => DerivativeMethod::Analytic,
                other => return Err(ConfigError::new("derivative_method", format!("expected fd or analytic, got `{other}`"))),
            },
            samples,
            workers: self.parse("workers")?,
            seed: self.parse("seed")?,
            out_dir: PathBuf::from(self.get("out_dir")),
            svg,
        })
    }
}

fn core_error(e: esta_core::Error) -> ConfigError {
    match e {
        esta_core::Error::InvalidParameter { name, value } => ConfigError::new(name, format!("invalid value {value}")),
        other => ConfigError::new("numerics", other.to_string()),
    }
}

/// min, min + step, … up to max inclusive, rounded to 1e-12 so that the
/// printed values are clean.
pub fn grid(min: f64, max: f64, step: f64) -> Vec<f64> {
    let n = ((max - min) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| ((min + i as f64 * step) * 1e12).round() / 1e12).collect()
}

/// `min:max:step`.
pub fn parse_range(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    let [a, b, c] = parts.as_slice() else {
        return Err(format!("expected min:max:step, got `{s}`"));
    };
    let num = |x: &str| x.parse::<f64>().map_err(|e| format!("cannot parse `{x}`: {e}"));
    let (min, max, step) = (num(a)?, num(b)?, num(c)?);
    if !(step > 0.0) || !(max >= min) || !min.is_finite() || !max.is_finite() {
        return Err(format!("need min ≤ max and step > 0, got `{s}`"));
    }
    Ok(grid(min, max, step))
}

//! Flat `key = value` experiment configuration.
//!
//! One assignment per line, `#` starts a comment, lists are comma
//! separated. Keys accept `-` or `_`. The SNR grid is either a list or an
//! inclusive `start:stop:step` range.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mimo_mc::classifiers::{ClassifierKind, JOINT_LATTICE_LIMIT};
use mimo_mc::metric::{Expansion, ZfVariance};
use mimo_mc::Modulation;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("{key}: invalid value `{value}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(key: &str, value: &str, reason: impl ToString) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

/// Detectors compared in the SER experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorKind {
    /// Subspace detection of the known layer-of-interest modulation; the
    /// other layers are sliced with `slice_const`.
    Subspace,
    /// LORD detection, same knowledge as `Subspace`.
    Lord,
    /// Classifies the layer of interest over the hypothesis set, then
    /// detects with the winner (subspace expansion, dense slicing).
    SubspaceJoint,
    /// As `SubspaceJoint` with the LORD expansion.
    LordJoint,
    /// Subspace detection with every layer's true modulation known.
    SubspaceAware,
    /// LORD detection with every layer's true modulation known.
    LordAware,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 6] = [
        DetectorKind::Subspace,
        DetectorKind::Lord,
        DetectorKind::SubspaceJoint,
        DetectorKind::LordJoint,
        DetectorKind::SubspaceAware,
        DetectorKind::LordAware,
    ];

    pub const DEFAULT: [DetectorKind; 4] = [
        DetectorKind::Subspace,
        DetectorKind::Lord,
        DetectorKind::SubspaceAware,
        DetectorKind::LordAware,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Subspace => "subspace",
            DetectorKind::Lord => "lord",
            DetectorKind::SubspaceJoint => "subspace-joint",
            DetectorKind::LordJoint => "lord-joint",
            DetectorKind::SubspaceAware => "subspace-aware",
            DetectorKind::LordAware => "lord-aware",
        }
    }

    pub fn expansion(self) -> Expansion {
        match self {
            DetectorKind::Subspace | DetectorKind::SubspaceJoint | DetectorKind::SubspaceAware => {
                Expansion::Subspace
            }
            DetectorKind::Lord | DetectorKind::LordJoint | DetectorKind::LordAware => {
                Expansion::Lord
            }
        }
    }
}

impl FromStr for DetectorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DetectorKind::ALL
            .iter()
            .copied()
            .find(|d| d.name() == s.trim())
            .ok_or_else(|| format!("unknown detector `{}`", s.trim()))
    }
}

pub const DEFAULT_CLASSIFIERS: [ClassifierKind; 5] = [
    ClassifierKind::SubspaceLogMap,
    ClassifierKind::SubspaceMaxLogMap,
    ClassifierKind::ZfAlrt,
    ClassifierKind::LordLogMap,
    ClassifierKind::LordMaxLogMap,
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub antennas: usize,
    pub snr_grid_db: Vec<f64>,
    pub frames_per_point: usize,
    /// Observations per frame (`T`).
    pub observations: usize,
    pub hypotheses: Vec<Modulation>,
    /// Classifier names for `ccr`/`ops`, detector names for `ser`. Empty
    /// selects the defaults of the experiment.
    pub classifiers: Vec<String>,
    pub rho: f64,
    pub slice_const: Modulation,
    pub seed: u64,
    pub output_path: Option<PathBuf>,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
    /// Modulation of the layer of interest in the SER experiment.
    pub layer_mt: Modulation,
    pub layer: usize,
    pub zf_variance: ZfVariance,
    pub trace_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            antennas: 4,
            snr_grid_db: snr_range(-10.0, 30.0, 5.0),
            frames_per_point: 200,
            observations: 1000,
            hypotheses: Modulation::ALL[..5].to_vec(),
            classifiers: Vec::new(),
            rho: 0.0,
            slice_const: Modulation::Qam1024,
            seed: 1,
            output_path: None,
            threads: None,
            layer_mt: Modulation::Qam64,
            layer: 0,
            zf_variance: ZfVariance::ColumnEnergy,
            trace_path: None,
        }
    }
}

/// Inclusive grid `start, start + step, ...` up to `stop`.
pub fn snr_range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|k| start + k as f64 * step).collect()
}

fn parse_list<T>(
    key: &str,
    value: &str,
    f: impl Fn(&str) -> Result<T, String>,
) -> Result<Vec<T>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(s).map_err(|e| invalid(key, value, e)))
        .collect()
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: ToString,
{
    value
        .trim()
        .parse()
        .map_err(|e: T::Err| invalid(key, value, e))
}

fn parse_grid(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    if value.contains(':') {
        let parts: Vec<&str> = value.split(':').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(invalid(key, value, "expected start:stop:step"));
        }
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| p.parse::<f64>().map_err(|e| invalid(key, value, e)))
            .collect::<Result<_, _>>()?;
        let (start, stop, step) = (nums[0], nums[1], nums[2]);
        if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
            return Err(invalid(key, value, "need start <= stop and step > 0"));
        }
        Ok(snr_range(start, stop, step))
    } else {
        parse_list(key, value, |s| s.parse::<f64>().map_err(|e| e.to_string()))
    }
}

fn parse_zf_variance(key: &str, value: &str) -> Result<ZfVariance, ConfigError> {
    match value.trim() {
        "column-energy" => Ok(ZfVariance::ColumnEnergy),
        "post-equalization" => Ok(ZfVariance::PostEqualization),
        _ => Err(invalid(
            key,
            value,
            "expected column-energy or post-equalization",
        )),
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl ExperimentConfig {
    /// Reads a config file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            if key.trim().is_empty() {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            }
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let k = key.replace('-', "_");
        match k.as_str() {
            "n" | "antennas" => self.antennas = parse_num(key, value)?,
            "snr_db" | "snr_grid_db" => self.snr_grid_db = parse_grid(key, value)?,
            "frames" | "frames_per_point" => self.frames_per_point = parse_num(key, value)?,
            "t" | "observations" => self.observations = parse_num(key, value)?,
            "hypotheses" => {
                self.hypotheses = parse_list(key, value, |s| {
                    s.parse::<Modulation>().map_err(|e| e.to_string())
                })?
            }
            "classifiers" | "detectors" => {
                self.classifiers = parse_list(key, value, |s| Ok(s.to_string()))?
            }
            "rho" => self.rho = parse_num(key, value)?,
            "slice_const" => {
                self.slice_const = value.parse().map_err(|e| invalid(key, value, e))?
            }
            "seed" => self.seed = parse_num(key, value)?,
            "output" | "out" | "output_path" => self.output_path = optional_path(value),
            "threads" => {
                let t: usize = parse_num(key, value)?;
                self.threads = (t > 0).then_some(t);
            }
            "layer_mt" => self.layer_mt = value.parse().map_err(|e| invalid(key, value, e))?,
            "layer" => self.layer = parse_num(key, value)?,
            "zf_variance" => self.zf_variance = parse_zf_variance(key, value)?,
            "trace" => self.trace_path = optional_path(value),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Checks the fields shared by every experiment.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field, reason: &str| {
            Err(ConfigError::Invalid {
                field,
                reason: reason.to_string(),
            })
        };
        if self.antennas == 0 {
            return bad("n", "must be >= 1");
        }
        if self.snr_grid_db.is_empty() {
            return bad("snr_db", "grid is empty");
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_db", "grid values must be finite");
        }
        if self.frames_per_point == 0 {
            return bad("frames", "must be >= 1");
        }
        if self.observations == 0 {
            return bad("t", "must be >= 1");
        }
        if self.hypotheses.is_empty() {
            return bad("hypotheses", "set is empty");
        }
        let mut seen = self.hypotheses.clone();
        seen.sort_by_key(|m| m.order());
        seen.dedup();
        if seen.len() != self.hypotheses.len() {
            return bad("hypotheses", "contains duplicates");
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad("rho", "must lie in [0, 1)");
        }
        Ok(())
    }

    /// Classifiers of the CCR and ops experiments.
    pub fn ccr_classifiers(&self) -> Result<Vec<ClassifierKind>, ConfigError> {
        self.validate()?;
        let kinds: Vec<ClassifierKind> = if self.classifiers.is_empty() {
            DEFAULT_CLASSIFIERS.to_vec()
        } else {
            self.classifiers
                .iter()
                .map(|c| c.parse().map_err(|e| invalid("classifiers", c, e)))
                .collect::<Result<_, _>>()?
        };
        for k in &kinds {
            if k.is_joint() {
                let largest = self.hypotheses.iter().map(|m| m.order()).max().unwrap_or(1);
                let combos = (self.hypotheses.len() as f64).powi(self.antennas as i32);
                let lattice = (largest as f64).powi(self.antennas as i32);
                if combos > JOINT_LATTICE_LIMIT as f64 || lattice > JOINT_LATTICE_LIMIT as f64 {
                    return Err(invalid(
                        "classifiers",
                        k.name(),
                        format!(
                            "joint search over {} layers exceeds the enumeration limit",
                            self.antennas
                        ),
                    ));
                }
            }
        }
        Ok(kinds)
    }

    /// Detectors of the SER experiment.
    pub fn detectors(&self) -> Result<Vec<DetectorKind>, ConfigError> {
        self.validate()?;
        if self.layer >= self.antennas {
            return Err(ConfigError::Invalid {
                field: "layer",
                reason: format!("must be < n = {}", self.antennas),
            });
        }
        if !self.hypotheses.contains(&self.layer_mt) {
            return Err(ConfigError::Invalid {
                field: "layer_mt",
                reason: format!("{} is not in the hypothesis set", self.layer_mt),
            });
        }
        if self.layer_mt == Modulation::Phi {
            return Err(ConfigError::Invalid {
                field: "layer_mt",
                reason: "phi carries no symbols".into(),
            });
        }
        if self.classifiers.is_empty() {
            return Ok(DetectorKind::DEFAULT.to_vec());
        }
        self.classifiers
            .iter()
            .map(|c| c.parse().map_err(|e: String| invalid("classifiers", c, e)))
            .collect()
    }
}

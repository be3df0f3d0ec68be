//! Search spaces over mixed continuous, integer and categorical parameters.
//!
//! Every parameter occupies exactly one coordinate of the unit hypercube.
//! Continuous parameters map linearly (or log-linearly) onto `[0, 1]`;
//! integer and categorical parameters with `m` values map onto `m`
//! equal-width bins, encoded at the bin centre. A coordinate of exactly
//! `1.0` decodes into the last bin.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Grids larger than this are refused unless the caller raises the cap.
pub const DEFAULT_GRID_CAP: u64 = 1_000_000;

/// Upper limit on the number of parameters (the Sobol generator's dimension count).
pub const MAX_PARAMS: usize = 256;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("search space has no parameters")]
    Empty,
    #[error("search space has {0} parameters, at most {MAX_PARAMS} are supported")]
    TooManyParams(usize),
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },
    #[error("config has {got} values, space has {expected} parameters")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter `{name}`: value {value} is outside its domain")]
    OutOfBounds { name: String, value: String },
    #[error("coordinate {index} = {value} is outside [0, 1]")]
    CoordinateOutOfRange { index: usize, value: f64 },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("grid levels: {0}")]
    InvalidLevels(String),
    #[error("grid has {count} configurations, exceeding the cap of {cap}")]
    GridTooLarge { count: u64, cap: u64 },
    #[error("reading search space {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing search space: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ParamKind {
    LogUniform { lo: f64, hi: f64 },
    Uniform { lo: f64, hi: f64 },
    Int { lo: i64, hi: i64 },
    /// Scalar JSON values (numbers or strings), distinct.
    Categorical { choices: Vec<Value> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParamDef", into = "RawParamDef")]
pub struct ParamDef {
    name: String,
    kind: ParamKind,
}

/// One coordinate of a [`Config`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamValue {
    Real(f64),
    Int(i64),
    /// Index into the categorical choice list.
    Choice(usize),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Real(v) => write!(f, "{v}"),
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Choice(i) => write!(f, "choice#{i}"),
        }
    }
}

/// A point of the search space: one value per parameter, in declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub values: Vec<ParamValue>,
}

impl ParamDef {
    pub fn new(name: impl Into<String>, kind: ParamKind) -> Result<Self, SpaceError> {
        let name = name.into();
        let invalid = |reason: &str| SpaceError::InvalidParam { name: name.clone(), reason: reason.to_string() };
        if name.is_empty() {
            return Err(invalid("empty name"));
        }
        match &kind {
            ParamKind::LogUniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(invalid("requires finite lo < hi"));
                }
                if *lo <= 0.0 {
                    return Err(invalid("log-uniform requires lo > 0"));
                }
            }
            ParamKind::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(invalid("requires finite lo < hi"));
                }
            }
            ParamKind::Int { lo, hi } => {
                if lo > hi {
                    return Err(invalid("requires lo <= hi"));
                }
                if hi.checked_sub(*lo).is_none_or(|d| d == i64::MAX) {
                    return Err(invalid("integer range too wide"));
                }
            }
            ParamKind::Categorical { choices } => {
                if choices.is_empty() {
                    return Err(invalid("categorical requires at least one choice"));
                }
                for (i, c) in choices.iter().enumerate() {
                    if !(c.is_number() || c.is_string()) {
                        return Err(invalid("choices must be numbers or strings"));
                    }
                    if choices[..i].contains(c) {
                        return Err(invalid(&format!("duplicate choice {c}")));
                    }
                }
            }
        }
        Ok(ParamDef { name, kind })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &ParamKind {
        &self.kind
    }

    /// Number of distinct values for integer/categorical parameters, `None` for continuous ones.
    pub fn cardinality(&self) -> Option<usize> {
        match &self.kind {
            ParamKind::Int { lo, hi } => Some((hi - lo) as usize + 1),
            ParamKind::Categorical { choices } => Some(choices.len()),
            _ => None,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, ParamKind::Categorical { .. })
    }

    pub fn contains(&self, value: &ParamValue) -> bool {
        match (&self.kind, value) {
            (ParamKind::LogUniform { lo, hi }, ParamValue::Real(v))
            | (ParamKind::Uniform { lo, hi }, ParamValue::Real(v)) => v.is_finite() && lo <= v && v <= hi,
            (ParamKind::Int { lo, hi }, ParamValue::Int(v)) => lo <= v && v <= hi,
            (ParamKind::Categorical { choices }, ParamValue::Choice(i)) => *i < choices.len(),
            _ => false,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamValue {
        match &self.kind {
            ParamKind::LogUniform { lo, hi } => {
                let u: f64 = rng.random();
                ParamValue::Real((lo.ln() + u * (hi.ln() - lo.ln())).exp().clamp(*lo, *hi))
            }
            ParamKind::Uniform { lo, hi } => {
                let u: f64 = rng.random();
                ParamValue::Real((lo + u * (hi - lo)).clamp(*lo, *hi))
            }
            ParamKind::Int { lo, hi } => ParamValue::Int(rng.random_range(*lo..=*hi)),
            ParamKind::Categorical { choices } => ParamValue::Choice(rng.random_range(0..choices.len())),
        }
    }

    pub fn encode(&self, value: &ParamValue) -> Result<f64, SpaceError> {
        if !self.contains(value) {
            return Err(SpaceError::OutOfBounds { name: self.name.clone(), value: value.to_string() });
        }
        Ok(match (&self.kind, value) {
            (ParamKind::LogUniform { lo, hi }, ParamValue::Real(v)) => {
                ((v.ln() - lo.ln()) / (hi.ln() - lo.ln())).clamp(0.0, 1.0)
            }
            (ParamKind::Uniform { lo, hi }, ParamValue::Real(v)) => ((v - lo) / (hi - lo)).clamp(0.0, 1.0),
            (ParamKind::Int { lo, .. }, ParamValue::Int(v)) => bin_centre((v - lo) as usize, self.cardinality().unwrap()),
            (ParamKind::Categorical { choices }, ParamValue::Choice(i)) => bin_centre(*i, choices.len()),
            _ => unreachable!("contains() checked the kind"),
        })
    }

    pub fn decode(&self, u: f64) -> ParamValue {
        debug_assert!((0.0..=1.0).contains(&u));
        match &self.kind {
            ParamKind::LogUniform { lo, hi } => {
                if u <= 0.0 {
                    return ParamValue::Real(*lo);
                }
                if u >= 1.0 {
                    return ParamValue::Real(*hi);
                }
                ParamValue::Real((lo.ln() + u * (hi.ln() - lo.ln())).exp().clamp(*lo, *hi))
            }
            ParamKind::Uniform { lo, hi } => {
                if u >= 1.0 {
                    return ParamValue::Real(*hi);
                }
                ParamValue::Real((lo + u * (hi - lo)).clamp(*lo, *hi))
            }
            ParamKind::Int { lo, .. } => ParamValue::Int(lo + bin_index(u, self.cardinality().unwrap()) as i64),
            ParamKind::Categorical { choices } => ParamValue::Choice(bin_index(u, choices.len())),
        }
    }

    pub fn to_json(&self, value: &ParamValue) -> Value {
        match (&self.kind, value) {
            (ParamKind::Categorical { choices }, ParamValue::Choice(i)) => choices[*i].clone(),
            (_, ParamValue::Real(v)) => serde_json::Number::from_f64(*v).map(Value::Number).unwrap_or(Value::Null),
            (_, ParamValue::Int(v)) => Value::from(*v),
            (_, ParamValue::Choice(i)) => Value::from(*i),
        }
    }

    pub fn from_json(&self, value: &Value) -> Result<ParamValue, SpaceError> {
        let oob = || SpaceError::OutOfBounds { name: self.name.clone(), value: value.to_string() };
        let v = match &self.kind {
            ParamKind::LogUniform { .. } | ParamKind::Uniform { .. } => ParamValue::Real(value.as_f64().ok_or_else(oob)?),
            ParamKind::Int { .. } => {
                let i = match value.as_i64() {
                    Some(i) => i,
                    None => {
                        let f = value.as_f64().ok_or_else(oob)?;
                        if f.fract() != 0.0 || !f.is_finite() {
                            return Err(oob());
                        }
                        f as i64
                    }
                };
                ParamValue::Int(i)
            }
            ParamKind::Categorical { choices } => {
                let idx = choices
                    .iter()
                    .position(|c| c == value)
                    .or_else(|| {
                        // Tolerate 80000 vs 80000.0 style numeric mismatches.
                        let f = value.as_f64()?;
                        choices.iter().position(|c| c.as_f64() == Some(f))
                    })
                    .ok_or_else(oob)?;
                ParamValue::Choice(idx)
            }
        };
        if self.contains(&v) {
            Ok(v)
        } else {
            Err(oob())
        }
    }
}

fn bin_centre(i: usize, m: usize) -> f64 {
    (i as f64 + 0.5) / m as f64
}

fn bin_index(u: f64, m: usize) -> usize {
    ((u * m as f64).floor() as usize).min(m - 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace", into = "RawSpace")]
pub struct SearchSpace {
    params: Vec<ParamDef>,
}

impl SearchSpace {
    pub fn new(params: Vec<ParamDef>) -> Result<Self, SpaceError> {
        if params.is_empty() {
            return Err(SpaceError::Empty);
        }
        if params.len() > MAX_PARAMS {
            return Err(SpaceError::TooManyParams(params.len()));
        }
        let mut seen = HashSet::new();
        for p in &params {
            if !seen.insert(p.name.as_str()) {
                return Err(SpaceError::DuplicateName(p.name.clone()));
            }
        }
        Ok(SearchSpace { params })
    }

    pub fn from_json_str(doc: &str) -> Result<Self, SpaceError> {
        Ok(serde_json::from_str(doc)?)
    }

    pub fn load(path: &Path) -> Result<Self, SpaceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| SpaceError::Io { path: path.display().to_string(), source })?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("search space serializes")
    }

    pub fn params(&self) -> &[ParamDef] {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn param(&self, name: &str) -> Option<(usize, &ParamDef)> {
        self.params.iter().enumerate().find(|(_, p)| p.name == name)
    }

    pub fn validate(&self, config: &Config) -> Result<(), SpaceError> {
        if config.values.len() != self.dim() {
            return Err(SpaceError::DimensionMismatch { expected: self.dim(), got: config.values.len() });
        }
        for (p, v) in self.params.iter().zip(&config.values) {
            if !p.contains(v) {
                return Err(SpaceError::OutOfBounds { name: p.name.clone(), value: v.to_string() });
            }
        }
        Ok(())
    }

    /// Draws a configuration from the prior: log-uniform, uniform, uniform-integer and
    /// uniform-categorical marginals, independently per parameter.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Config {
        Config { values: self.params.iter().map(|p| p.sample(rng)).collect() }
    }

    pub fn encode(&self, config: &Config) -> Result<Vec<f64>, SpaceError> {
        if config.values.len() != self.dim() {
            return Err(SpaceError::DimensionMismatch { expected: self.dim(), got: config.values.len() });
        }
        self.params.iter().zip(&config.values).map(|(p, v)| p.encode(v)).collect()
    }

    pub fn decode(&self, unit: &[f64]) -> Result<Config, SpaceError> {
        if unit.len() != self.dim() {
            return Err(SpaceError::DimensionMismatch { expected: self.dim(), got: unit.len() });
        }
        for (index, &value) in unit.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(SpaceError::CoordinateOutOfRange { index, value });
            }
        }
        Ok(Config { values: self.params.iter().zip(unit).map(|(p, &u)| p.decode(u)).collect() })
    }

    /// Maps an arbitrary unit-cube point onto the encoding of the configuration it decodes to,
    /// i.e. snaps discrete coordinates to their bin centres.
    pub fn canonicalize(&self, unit: &[f64]) -> Result<Vec<f64>, SpaceError> {
        self.encode(&self.decode(unit)?)
    }

    pub fn to_params(&self, config: &Config) -> Map<String, Value> {
        self.params.iter().zip(&config.values).map(|(p, v)| (p.name.clone(), p.to_json(v))).collect()
    }

    /// Parses a `{name: value}` map; the names must match the space exactly.
    pub fn from_params(&self, params: &Map<String, Value>) -> Result<Config, SpaceError> {
        if let Some(extra) = params.keys().find(|k| self.param(k).is_none()) {
            return Err(SpaceError::UnknownParam(extra.clone()));
        }
        let values = self
            .params
            .iter()
            .map(|p| {
                let raw = params.get(&p.name).ok_or_else(|| SpaceError::MissingParam(p.name.clone()))?;
                p.from_json(raw)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Config { values })
    }

    /// Number of configurations [`SearchSpace::grid`] would produce (saturating).
    pub fn grid_count(&self, levels: &[usize]) -> Result<u64, SpaceError> {
        self.check_levels(levels)?;
        Ok(levels.iter().fold(1u64, |acc, &l| acc.saturating_mul(l as u64)))
    }

    /// Cartesian grid in lexicographic order: the first parameter varies slowest,
    /// levels ascend in encoded space and sit at bin midpoints `(j + 0.5) / L`.
    pub fn grid(&self, levels: &[usize], cap: u64) -> Result<Vec<Config>, SpaceError> {
        let count = self.grid_count(levels)?;
        if count > cap {
            return Err(SpaceError::GridTooLarge { count, cap });
        }
        let axes: Vec<Vec<ParamValue>> = self
            .params
            .iter()
            .zip(levels)
            .map(|(p, &l)| (0..l).map(|j| p.decode(bin_centre(j, l))).collect())
            .collect();
        let mut out = Vec::with_capacity(count as usize);
        let mut idx = vec![0usize; axes.len()];
        loop {
            out.push(Config { values: idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect() });
            // odometer increment, last axis fastest
            let mut d = axes.len();
            loop {
                if d == 0 {
                    return Ok(out);
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < axes[d].len() {
                    break;
                }
                idx[d] = 0;
            }
        }
    }

    /// One level per distinct value for discrete parameters, `continuous_levels` otherwise.
    pub fn default_levels(&self, continuous_levels: usize) -> Vec<usize> {
        self.params.iter().map(|p| p.cardinality().unwrap_or(continuous_levels)).collect()
    }

    fn check_levels(&self, levels: &[usize]) -> Result<(), SpaceError> {
        if levels.len() != self.dim() {
            return Err(SpaceError::InvalidLevels(format!(
                "{} levels given for {} parameters",
                levels.len(),
                self.dim()
            )));
        }
        for (p, &l) in self.params.iter().zip(levels) {
            if l == 0 {
                return Err(SpaceError::InvalidLevels(format!("`{}` needs at least one level", p.name)));
            }
            match (&p.kind, p.cardinality()) {
                (ParamKind::Categorical { .. }, Some(m)) if l != m => {
                    return Err(SpaceError::InvalidLevels(format!(
                        "categorical `{}` has {m} choices, got {l} levels",
                        p.name
                    )))
                }
                (ParamKind::Int { .. }, Some(m)) if l > m => {
                    return Err(SpaceError::InvalidLevels(format!(
                        "integer `{}` has {m} values, {l} levels would repeat values",
                        p.name
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct RawSpace {
    params: Vec<ParamDef>,
}

impl TryFrom<RawSpace> for SearchSpace {
    type Error = SpaceError;
    fn try_from(raw: RawSpace) -> Result<Self, SpaceError> {
        SearchSpace::new(raw.params)
    }
}

impl From<SearchSpace> for RawSpace {
    fn from(s: SearchSpace) -> Self {
        RawSpace { params: s.params }
    }
}

#[derive(Serialize, Deserialize)]
struct RawParamDef {
    name: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lo: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hi: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    choices: Option<Vec<Value>>,
}

impl TryFrom<RawParamDef> for ParamDef {
    type Error = SpaceError;
    fn try_from(raw: RawParamDef) -> Result<Self, SpaceError> {
        let name = raw.name;
        let invalid = |reason: String| SpaceError::InvalidParam { name: name.clone(), reason };
        let real = |v: &Option<Value>, which: &str| {
            v.as_ref().and_then(Value::as_f64).ok_or_else(|| invalid(format!("missing numeric `{which}`")))
        };
        let int = |v: &Option<Value>, which: &str| {
            v.as_ref().and_then(Value::as_i64).ok_or_else(|| invalid(format!("missing integer `{which}`")))
        };
        let kind = match raw.kind.as_str() {
            "log_uniform" => ParamKind::LogUniform { lo: real(&raw.lo, "lo")?, hi: real(&raw.hi, "hi")? },
            "uniform" => ParamKind::Uniform { lo: real(&raw.lo, "lo")?, hi: real(&raw.hi, "hi")? },
            "int" => ParamKind::Int { lo: int(&raw.lo, "lo")?, hi: int(&raw.hi, "hi")? },
            "categorical" => ParamKind::Categorical {
                choices: raw.choices.clone().ok_or_else(|| invalid("missing `choices`".into()))?,
            },
            other => return Err(invalid(format!("unknown kind `{other}`"))),
        };
        ParamDef::new(name.clone(), kind)
    }
}

impl From<ParamDef> for RawParamDef {
    fn from(p: ParamDef) -> Self {
        let num = |x: f64| serde_json::Number::from_f64(x).map(Value::Number);
        let (kind, lo, hi, choices) = match p.kind {
            ParamKind::LogUniform { lo, hi } => ("log_uniform", num(lo), num(hi), None),
            ParamKind::Uniform { lo, hi } => ("uniform", num(lo), num(hi), None),
            ParamKind::Int { lo, hi } => ("int", Some(Value::from(lo)), Some(Value::from(hi)), None),
            ParamKind::Categorical { choices } => ("categorical", None, None, Some(choices)),
        };
        RawParamDef { name: p.name, kind: kind.to_string(), lo, hi, choices }
    }
}

/// The four-parameter fine-tuning space (learning rate, epochs, unfreeze epoch, max length).
pub fn table2_space() -> SearchSpace {
    SearchSpace::from_json_str(TABLE2_SPACE_JSON).expect("built-in space is valid")
}

pub const TABLE2_SPACE_JSON: &str = r#"{"params":[{"name":"lr","kind":"log_uniform","lo":1e-6,"hi":1e-3},{"name":"epochs","kind":"int","lo":1,"hi":10},{"name":"unfreeze","kind":"int","lo":0,"hi":5},{"name":"maxlen","kind":"categorical","choices":[32000,48000,64000,80000,112000,160000]}]}"#;

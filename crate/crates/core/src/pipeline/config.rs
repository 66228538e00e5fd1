use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

use crate::dma::{q_grid, DmaConfig};
use crate::error::{Error, Result};
use crate::surrogate::{SurrogateScheme, SurrogateSettings, DEFAULT_MAX_ITER};

/// Everything a run needs. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input_x: Option<PathBuf>,
    pub input_y: Option<PathBuf>,
    pub date_column: String,
    pub value_column: String,
    pub theta: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub q_step: f64,
    pub scale_min: usize,
    pub scale_max: usize,
    pub n_scales: usize,
    pub n_surrogates: usize,
    #[serde(deserialize_with = "de_schemes")]
    pub schemes: Vec<SurrogateScheme>,
    /// Level of the width test. The 10% classification is reported alongside.
    pub significance_level: f64,
    pub qcc_m_max: usize,
    pub master_seed: Option<u64>,
    pub standardize: bool,
    pub use_profile: bool,
    pub iaaft_max_iter: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input_x: None,
            input_y: None,
            date_column: "date".into(),
            value_column: "value".into(),
            theta: 0.0,
            q_min: -5.0,
            q_max: 5.0,
            q_step: 0.25,
            scale_min: 10,
            scale_max: 316,
            n_scales: 30,
            n_surrogates: 1000,
            schemes: SurrogateScheme::ALL.to_vec(),
            significance_level: 0.05,
            qcc_m_max: 1000,
            master_seed: None,
            standardize: false,
            use_profile: true,
            iaaft_max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Accepts `"all"`, `"1,3"`, `"iaaft_x_orig_y"`, `[1, 3]` or `["1", "iaaft_x_iaaft_y"]`.
fn de_schemes<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<SurrogateScheme>, D::Error> {
    let v = Value::deserialize(d)?;
    schemes_from_value(&v).map_err(serde::de::Error::custom)
}

fn schemes_from_value(v: &Value) -> Result<Vec<SurrogateScheme>> {
    let mut out = match v {
        Value::String(s) => parse_schemes(s)?,
        Value::Array(items) => items
            .iter()
            .map(|item| match item {
                Value::String(s) => s.parse(),
                Value::Number(n) => n.to_string().parse(),
                other => Err(Error::Config(format!("bad scheme entry {other}"))),
            })
            .collect::<Result<_>>()?,
        other => return Err(Error::Config(format!("bad schemes value {other}"))),
    };
    out.sort();
    out.dedup();
    Ok(out)
}

/// Parses a comma-separated scheme list; `all` selects every scheme.
pub fn parse_schemes(s: &str) -> Result<Vec<SurrogateScheme>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(SurrogateScheme::ALL.to_vec());
    }
    let mut out = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<SurrogateScheme>>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

impl RunConfig {
    /// Reads a config file over the defaults.
    ///
    /// JSON is recognised by a leading `{`; anything else is read as
    /// `key = value` lines with `#` comments.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str_any(&text)
    }

    pub fn from_str_any(text: &str) -> Result<Self> {
        let overrides = if text.trim_start().starts_with('{') {
            match serde_json::from_str::<Value>(text)? {
                Value::Object(map) => map,
                _ => return Err(Error::Config("top-level JSON value must be an object".into())),
            }
        } else {
            parse_key_values(text)?
        };
        Self::default().merged(overrides)
    }

    fn merged(&self, overrides: Map<String, Value>) -> Result<Self> {
        let Value::Object(mut base) = serde_json::to_value(self)? else {
            unreachable!("RunConfig serializes to an object");
        };
        for (k, v) in overrides {
            if !base.contains_key(&k) {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
            base.insert(k, v);
        }
        serde_json::from_value(Value::Object(base)).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn dma_config(&self) -> Result<DmaConfig> {
        Ok(DmaConfig {
            theta: self.theta,
            scale_min: self.scale_min,
            scale_max: self.scale_max,
            n_scales: self.n_scales,
            q_grid: q_grid(self.q_min, self.q_max, self.q_step)?,
            use_profile: self.use_profile,
        })
    }

    /// `None` when no surrogate ensemble is requested.
    pub fn surrogate_settings(&self) -> Result<Option<SurrogateSettings>> {
        if self.n_surrogates == 0 {
            return Ok(None);
        }
        let seed = self
            .master_seed
            .ok_or_else(|| Error::Config("a seed is required when surrogates are requested".into()))?;
        Ok(Some(SurrogateSettings {
            n_surrogates: self.n_surrogates,
            master_seed: seed,
            max_iter: self.iaaft_max_iter,
            significance_level: self.significance_level,
        }))
    }

    /// Checks everything that can be checked without the data.
    pub fn validate(&self) -> Result<()> {
        if self.input_x.is_none() || self.input_y.is_none() {
            return Err(Error::Config("both input_x and input_y are required".into()));
        }
        if !(self.significance_level > 0.0 && self.significance_level < 1.0) {
            return Err(Error::Config(format!(
                "significance_level {} outside (0, 1)",
                self.significance_level
            )));
        }
        if self.qcc_m_max == 0 {
            return Err(Error::Config("qcc_m_max must be positive".into()));
        }
        if self.iaaft_max_iter == 0 {
            return Err(Error::Config("iaaft_max_iter must be positive".into()));
        }
        if self.n_surrogates > 0 && self.schemes.is_empty() {
            return Err(Error::Config("no surrogate scheme selected".into()));
        }
        self.dma_config()?;
        self.surrogate_settings()?;
        Ok(())
    }
}

/// Keys whose values are taken verbatim rather than as JSON literals.
const TEXT_KEYS: [&str; 5] = ["input_x", "input_y", "date_column", "value_column", "schemes"];

fn parse_key_values(text: &str) -> Result<Map<String, Value>> {
    let mut map = Map::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        let key = key.trim();
        let value = value.trim();
        let parsed = if TEXT_KEYS.contains(&key) {
            Value::String(value.to_string())
        } else {
            serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()))
        };
        if map.insert(key.to_string(), parsed).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
        }
    }
    Ok(map)
}

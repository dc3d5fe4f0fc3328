//! Flat `key = value` text files for generator configs and profiles.

use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::calibration::CalibrationSource;
use crate::conformal::{UncertaintyKind, UncertaintySpec};
use crate::error::{Error, Result};
use crate::profile::CalibrationProfile;
use crate::scalar::Scalar;
use crate::synth::SynthConfig;

/// Ordered key/value pairs. Blank lines and `#` comments are ignored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = Self::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", no + 1)));
            }
            if kv.get(k).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k:?}", no + 1)));
            }
            kv.entries.push((k.to_string(), v.to_string()));
        }
        Ok(kv)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_string())?;
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn parsed<V: FromStr>(&self, key: &str) -> Result<Option<V>> {
        self.get(key)
            .map(|v| v.parse::<V>().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}"))))
            .transpose()
    }

    pub fn required<V: FromStr>(&self, key: &str) -> Result<V> {
        self.parsed(key)?.ok_or_else(|| Error::Config(format!("missing key {key:?}")))
    }

    fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        match self.keys().find(|k| !known.contains(k)) {
            Some(k) => Err(Error::Config(format!("unknown key {k:?}"))),
            None => Ok(()),
        }
    }
}

impl Display for KeyValues {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

const SYNTH_KEYS: [&str; 13] = [
    "n_instances",
    "pixels_min",
    "pixels_max",
    "p_b_min",
    "p_b_max",
    "ratio_min",
    "ratio_max",
    "temperature",
    "noise_sd",
    "block_size",
    "concentration",
    "seed",
    "format_version",
];

/// Missing keys take their defaults; unknown keys are rejected.
pub fn synth_config_from_kv(kv: &KeyValues) -> Result<SynthConfig> {
    kv.reject_unknown(&SYNTH_KEYS)?;
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        n_instances: kv.parsed("n_instances")?.unwrap_or(d.n_instances),
        pixels_min: kv.parsed("pixels_min")?.unwrap_or(d.pixels_min),
        pixels_max: kv.parsed("pixels_max")?.unwrap_or(d.pixels_max),
        p_b_range: (
            kv.parsed("p_b_min")?.unwrap_or(d.p_b_range.0),
            kv.parsed("p_b_max")?.unwrap_or(d.p_b_range.1),
        ),
        ratio_range: (
            kv.parsed("ratio_min")?.unwrap_or(d.ratio_range.0),
            kv.parsed("ratio_max")?.unwrap_or(d.ratio_range.1),
        ),
        temperature: kv.parsed("temperature")?.unwrap_or(d.temperature),
        noise_sd: kv.parsed("noise_sd")?.unwrap_or(d.noise_sd),
        block_size: kv.parsed("block_size")?.unwrap_or(d.block_size),
        concentration: kv.parsed("concentration")?.unwrap_or(d.concentration),
        seed: kv.parsed("seed")?.unwrap_or(d.seed),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn synth_config_to_kv(cfg: &SynthConfig) -> KeyValues {
    let mut kv = KeyValues::default();
    kv.set("n_instances", cfg.n_instances);
    kv.set("pixels_min", cfg.pixels_min);
    kv.set("pixels_max", cfg.pixels_max);
    kv.set("p_b_min", cfg.p_b_range.0);
    kv.set("p_b_max", cfg.p_b_range.1);
    kv.set("ratio_min", cfg.ratio_range.0);
    kv.set("ratio_max", cfg.ratio_range.1);
    kv.set("temperature", cfg.temperature);
    kv.set("noise_sd", cfg.noise_sd);
    kv.set("block_size", cfg.block_size);
    kv.set("concentration", cfg.concentration);
    kv.set("seed", cfg.seed);
    kv
}

const PROFILE_VERSION: u32 = 1;

const PROFILE_KEYS: [&str; 20] = [
    "format_version",
    "source",
    "bins",
    "confidence",
    "alpha",
    "delta",
    "q_a",
    "q_b",
    "delta_conformal",
    "q_residual",
    "uncertainty",
    "v_t_max",
    "voxel_volume",
    "epsilon",
    "q_score",
    "lambda",
    "lambda_fallback",
    "n_val",
    "grid_step",
    "grid_qualified",
];

/// Every field written with round-trip float formatting.
pub fn profile_to_kv<T: Scalar>(p: &CalibrationProfile<T>) -> KeyValues {
    let mut kv = KeyValues::default();
    kv.set("format_version", PROFILE_VERSION);
    kv.set("source", p.source);
    kv.set("bins", p.n_bins);
    kv.set("confidence", p.confidence);
    kv.set("alpha", p.alpha);
    kv.set("delta", p.delta);
    kv.set("q_a", p.q_a);
    kv.set("q_b", p.q_b);
    kv.set("delta_conformal", p.delta_conformal);
    kv.set("q_residual", p.q_residual);
    kv.set("uncertainty", p.uncertainty.kind);
    kv.set("v_t_max", p.uncertainty.v_t_max);
    kv.set("voxel_volume", p.uncertainty.voxel_volume);
    kv.set("epsilon", p.uncertainty.epsilon);
    kv.set("q_score", p.q_score);
    kv.set("lambda", p.lambda);
    kv.set("lambda_fallback", p.lambda_fallback);
    kv.set("n_val", p.n_val);
    kv.set("grid_step", p.grid_step);
    kv.set("grid_qualified", p.grid_qualified);
    kv
}

fn scalar<T: Scalar>(kv: &KeyValues, key: &str) -> Result<T> {
    let x: f64 = kv.required(key)?;
    T::from_f64(x).ok_or_else(|| Error::Config(format!("{key}: {x} not representable")))
}

pub fn profile_from_kv<T: Scalar>(kv: &KeyValues) -> Result<CalibrationProfile<T>> {
    let version: u32 = kv.required("format_version")?;
    if version != PROFILE_VERSION {
        return Err(Error::Config(format!("unsupported profile version {version}")));
    }
    let source: CalibrationSource = kv.required::<String>("source")?.parse()?;
    let kind: UncertaintyKind = kv.required::<String>("uncertainty")?.parse()?;
    let p = CalibrationProfile {
        source,
        n_bins: kv.required("bins")?,
        confidence: scalar(kv, "confidence")?,
        alpha: scalar(kv, "alpha")?,
        delta: scalar(kv, "delta")?,
        q_a: scalar(kv, "q_a")?,
        q_b: scalar(kv, "q_b")?,
        delta_conformal: scalar(kv, "delta_conformal")?,
        q_residual: scalar(kv, "q_residual")?,
        uncertainty: UncertaintySpec {
            kind,
            v_t_max: scalar(kv, "v_t_max")?,
            voxel_volume: scalar(kv, "voxel_volume")?,
            epsilon: scalar(kv, "epsilon")?,
        },
        q_score: scalar(kv, "q_score")?,
        lambda: scalar(kv, "lambda")?,
        lambda_fallback: kv.required("lambda_fallback")?,
        n_val: kv.required("n_val")?,
        grid_step: scalar(kv, "grid_step")?,
        grid_qualified: kv.required("grid_qualified")?,
    };
    kv.reject_unknown(&PROFILE_KEYS)?;
    p.validate()?;
    Ok(p)
}

//! Flat `key = value` run configuration, merged with command-line overrides.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anytime::channel::ChannelSpec;
use anytime::simulate::{presets, EstimateTiming, LoopConfig, NoiseKind};
use anytime::thresholds::FilterKind;

use crate::CliError;

/// Keys accepted in a config file.
pub const KEYS: &[&str] = &[
    "preset",
    "seed",
    "horizon",
    "k",
    "channel",
    "filter",
    "feedback_period",
    "timing",
    "observer_knows_control",
    "noise",
    "eps_prime",
    "depth",
    "code_p",
    "trials",
];

/// Effective settings, in key order, as echoed into the manifest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", no + 1)))?;
            let key = key.trim().to_string();
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("config line {}: unknown key `{key}`", no + 1)));
            }
            map.insert(key, value.trim().to_string());
        }
        Ok(Self(map))
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    /// Overrides `key` when the flag was given.
    pub fn set<T: ToString>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.0.insert(key.to_string(), v.to_string());
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.0
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| CliError::Usage(format!("invalid value `{v}` for `{key}`")))
            })
            .transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.get(key)?
            .ok_or_else(|| CliError::Usage(format!("missing required setting `{key}`")))
    }

    pub fn as_map(&self) -> &BTreeMap<String, String> {
        &self.0
    }

    /// Builds the loop from its preset and applies every override.
    pub fn loop_config(&self) -> Result<LoopConfig, CliError> {
        let preset: String = self.require("preset")?;
        let seed: u64 = self.require("seed")?;
        let horizon: usize = self.get("horizon")?.unwrap_or(500);
        let k: Option<usize> = self.get("k")?;
        let mut cfg = match preset.as_str() {
            "cart-stick" => presets::cart_stick(seed, horizon)?,
            "example2" => presets::example2(k.unwrap_or(5), seed, horizon)?,
            other => return Err(CliError::Usage(format!("unknown preset `{other}`"))),
        };
        if let Some(k) = k {
            cfg.k = k;
        }
        if let Some(ch) = self.0.get("channel") {
            cfg.channel = ChannelSpec::from_str(ch).map_err(|e| CliError::Usage(e.to_string()))?;
        }
        if let Some(f) = self.0.get("filter") {
            cfg.filter = parse_filter(f)?;
        }
        if let Some(p) = self.0.get("feedback_period") {
            cfg.feedback_period = match p.as_str() {
                "none" | "0" => None,
                v => Some(v.parse().map_err(|_| CliError::Usage(format!("invalid feedback_period `{v}`")))?),
            };
        }
        if let Some(t) = self.0.get("timing") {
            cfg.timing = match t.as_str() {
                "filtered" => EstimateTiming::Filtered,
                "predicted" => EstimateTiming::Predicted,
                v => return Err(CliError::Usage(format!("invalid timing `{v}`"))),
            };
        }
        if let Some(v) = self.get("observer_knows_control")? {
            cfg.observer_knows_control = v;
        }
        if let Some(n) = self.0.get("noise") {
            cfg.noise = parse_noise(n)?;
        }
        if let Some(e) = self.get("eps_prime")? {
            cfg.eps_prime = e;
        }
        if let Some(d) = self.get("depth")? {
            cfg.depth = d;
        }
        if let Some(p) = self.get("code_p")? {
            cfg.code_p = p;
        }
        if cfg.k == 0 || cfg.k >= cfg.n {
            return Err(CliError::Usage(format!("k = {} must lie in 1..{}", cfg.k, cfg.n)));
        }
        Ok(cfg.with_designed_quantizer()?)
    }
}

pub fn parse_filter(s: &str) -> Result<FilterKind, CliError> {
    match s {
        "hypercuboid" | "cuboid" => Ok(FilterKind::Hypercuboid),
        "ellipsoid" => Ok(FilterKind::Ellipsoid),
        v => Err(CliError::Usage(format!("invalid filter `{v}`"))),
    }
}

/// `uniform` or `gaussian:<sigma>`.
fn parse_noise(s: &str) -> Result<NoiseKind, CliError> {
    let bad = || CliError::Usage(format!("invalid noise `{s}` (uniform or gaussian:<sigma>)"));
    match s.split_once(':') {
        None if s == "uniform" => Ok(NoiseKind::Uniform),
        Some(("gaussian", sigma)) => {
            let sigma: f64 = sigma.parse().map_err(|_| bad())?;
            if sigma > 0.0 {
                Ok(NoiseKind::TruncatedGaussian { sigma })
            } else {
                Err(bad())
            }
        }
        _ => Err(bad()),
    }
}

/// Comma-separated list, e.g. `3,4,5`.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("invalid list entry `{p}`")))
        })
        .collect()
}

//! Run configuration: a flat `key = value` text format with a canonical,
//! key-sorted rendering whose SHA-256 digest stamps every output.
//!
//! ```text
//! # comment
//! n_users = 10
//! noise_db = 0
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::channel::{ChannelConfig, WeightMode};
use crate::error::{Error, Result};
use crate::experiments::ChannelFamily;
use crate::nn::Activation;
use crate::uwgnn::{TrainOptions, UnitMode, UwgnnConfig};
use crate::wmmse::SolveOptions;

/// Every tunable knob of a run. File paths and thread counts are not part
/// of it, so they never change the digest.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_users: usize,
    pub count: usize,
    pub family: ChannelFamily,
    pub mean: f64,
    pub std: f64,
    pub los_strength: f64,
    pub noise_db: f64,
    pub p_max: f64,
    pub weights: WeightMode,
    pub layers: usize,
    pub d_u: usize,
    pub d_w: usize,
    pub d_msg: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub share_parameters: bool,
    pub unit_mode: UnitMode,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub restarts: usize,
    pub test_count: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = UwgnnConfig::default();
        let train = TrainOptions::default();
        let solve = SolveOptions::default();
        Self {
            n_users: 10,
            count: 10_000,
            family: ChannelFamily::Rayleigh,
            mean: 0.0,
            std: 1.0,
            los_strength: 1.0,
            noise_db: 0.0,
            p_max: 1.0,
            weights: WeightMode::Unit,
            layers: model.layers,
            d_u: model.d_u,
            d_w: model.d_w,
            d_msg: model.d_msg,
            hidden: model.hidden,
            activation: model.activation,
            share_parameters: model.share_parameters,
            unit_mode: model.unit_mode,
            lr: train.lr,
            batch_size: train.batch_size,
            epochs: train.epochs,
            seed: 0,
            max_iter: solve.max_iter,
            tol: solve.tol,
            restarts: 100,
            test_count: 2000,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("{key}: cannot parse {value:?}")))
}

fn real(key: &str, value: &str) -> Result<f64> {
    let x: f64 = num(key, value)?;
    if !x.is_finite() {
        return Err(Error::invalid(format!("{key}: {value:?} is not finite")));
    }
    Ok(x)
}

fn choice<T: Copy>(key: &str, value: &str, options: &[(&str, T)]) -> Result<T> {
    options
        .iter()
        .find(|(name, _)| *name == value)
        .map(|(_, v)| *v)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            Error::invalid(format!("{key}: {value:?} is not one of {names:?}"))
        })
}

const FAMILIES: &[(&str, ChannelFamily)] = &[("rayleigh", ChannelFamily::Rayleigh), ("rician", ChannelFamily::Rician)];
const WEIGHTS: &[(&str, WeightMode)] = &[("unit", WeightMode::Unit), ("uniform", WeightMode::Uniform)];
const ACTIVATIONS: &[(&str, Activation)] = &[
    ("relu", Activation::Relu),
    ("leakyrelu", Activation::LeakyRelu),
    ("tanh", Activation::Tanh),
    ("none", Activation::None),
];
const UNIT_MODES: &[(&str, UnitMode)] = &[("equations", UnitMode::Equations), ("paper_triples", UnitMode::PaperTriples)];
const BOOLS: &[(&str, bool)] = &[("true", true), ("false", false)];

fn name_of<T: PartialEq>(value: T, options: &[(&'static str, T)]) -> &'static str {
    options.iter().find(|(_, v)| *v == value).map(|(n, _)| *n).expect("listed option")
}

impl RunConfig {
    pub const KEYS: [&'static str; 25] = [
        "activation",
        "batch_size",
        "count",
        "d_msg",
        "d_u",
        "d_w",
        "epochs",
        "family",
        "hidden",
        "layers",
        "los_strength",
        "lr",
        "max_iter",
        "mean",
        "n_users",
        "noise_db",
        "p_max",
        "restarts",
        "seed",
        "share_parameters",
        "std",
        "test_count",
        "tol",
        "unit_mode",
        "weights",
    ];

    /// Assigns one knob from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "activation" => self.activation = choice(key, value, ACTIVATIONS)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "count" => self.count = num(key, value)?,
            "d_msg" => self.d_msg = num(key, value)?,
            "d_u" => self.d_u = num(key, value)?,
            "d_w" => self.d_w = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "family" => self.family = choice(key, value, FAMILIES)?,
            "hidden" => self.hidden = num(key, value)?,
            "layers" => self.layers = num(key, value)?,
            "los_strength" => self.los_strength = real(key, value)?,
            "lr" => self.lr = real(key, value)?,
            "max_iter" => self.max_iter = num(key, value)?,
            "mean" => self.mean = real(key, value)?,
            "n_users" => self.n_users = num(key, value)?,
            "noise_db" => self.noise_db = real(key, value)?,
            "p_max" => self.p_max = real(key, value)?,
            "restarts" => self.restarts = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "share_parameters" => self.share_parameters = choice(key, value, BOOLS)?,
            "std" => self.std = real(key, value)?,
            "test_count" => self.test_count = num(key, value)?,
            "tol" => self.tol = real(key, value)?,
            "unit_mode" => self.unit_mode = choice(key, value, UNIT_MODES)?,
            "weights" => self.weights = choice(key, value, WEIGHTS)?,
            _ => return Err(Error::invalid(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Text form of one knob, as accepted by [`RunConfig::set`].
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "activation" => name_of(self.activation, ACTIVATIONS).to_string(),
            "batch_size" => self.batch_size.to_string(),
            "count" => self.count.to_string(),
            "d_msg" => self.d_msg.to_string(),
            "d_u" => self.d_u.to_string(),
            "d_w" => self.d_w.to_string(),
            "epochs" => self.epochs.to_string(),
            "family" => name_of(self.family, FAMILIES).to_string(),
            "hidden" => self.hidden.to_string(),
            "layers" => self.layers.to_string(),
            "los_strength" => self.los_strength.to_string(),
            "lr" => self.lr.to_string(),
            "max_iter" => self.max_iter.to_string(),
            "mean" => self.mean.to_string(),
            "n_users" => self.n_users.to_string(),
            "noise_db" => self.noise_db.to_string(),
            "p_max" => self.p_max.to_string(),
            "restarts" => self.restarts.to_string(),
            "seed" => self.seed.to_string(),
            "share_parameters" => self.share_parameters.to_string(),
            "std" => self.std.to_string(),
            "test_count" => self.test_count.to_string(),
            "tol" => self.tol.to_string(),
            "unit_mode" => name_of(self.unit_mode, UNIT_MODES).to_string(),
            "weights" => name_of(self.weights, WEIGHTS).to_string(),
            _ => return None,
        })
    }

    /// Key-sorted `key=value` lines.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            out.push_str(key);
            out.push('=');
            out.push_str(&self.get(key).expect("known key"));
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of [`RunConfig::canonical`].
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    /// Linear noise power from `noise_db`.
    pub fn sigma2(&self) -> f64 {
        10f64.powf(self.noise_db / 10.0)
    }

    pub fn channel(&self) -> ChannelConfig {
        ChannelConfig {
            mean: match self.family {
                ChannelFamily::Rayleigh => 0.0,
                ChannelFamily::Rician => self.mean * self.los_strength,
            },
            std: self.std,
            sigma2: self.sigma2(),
            p_max: self.p_max,
            weights: self.weights,
        }
    }

    pub fn model(&self) -> UwgnnConfig {
        UwgnnConfig {
            layers: self.layers,
            d_u: self.d_u,
            d_w: self.d_w,
            d_msg: self.d_msg,
            hidden: self.hidden,
            activation: self.activation,
            share_parameters: self.share_parameters,
            unit_mode: self.unit_mode,
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            seed: self.seed,
            solve: self.solve_options(),
            keep_best: true,
        }
    }

    /// Checks cross-field constraints not enforced by [`RunConfig::set`].
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::invalid("n_users must be at least 1"));
        }
        if self.batch_size == 0 || self.max_iter == 0 {
            return Err(Error::invalid("batch_size and max_iter must be positive"));
        }
        if self.lr <= 0.0 || self.tol < 0.0 {
            return Err(Error::invalid("lr must be positive and tol nonnegative"));
        }
        self.channel().validate()?;
        self.model().validate()
    }
}

/// Parses `key = value` lines over the defaults. Blank lines and lines
/// starting with `#` are skipped; unknown or repeated keys are errors.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: "expected key = value".into(),
        })?;
        let key = key.trim();
        if let Some(first) = seen.insert(key.to_string(), line) {
            return Err(Error::Parse {
                line,
                message: format!("{key:?} already set on line {first}"),
            });
        }
        cfg.set(key, value).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_are_sorted_and_complete() {
        let mut sorted = RunConfig::KEYS;
        sorted.sort_unstable();
        assert_eq!(sorted, RunConfig::KEYS);
        let cfg = RunConfig::default();
        for k in RunConfig::KEYS {
            assert!(cfg.get(k).is_some(), "{k}");
        }
    }

    #[test]
    fn canonical_form_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("lr", "0.0003").unwrap();
        cfg.set("family", "rician").unwrap();
        cfg.set("noise_db", "-10").unwrap();
        let back = parse_config(&cfg.canonical()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
        assert_eq!(cfg.digest().len(), 64);
    }

    #[test]
    fn order_and_comments_do_not_change_digest() {
        let a = parse_config("seed = 3\n# note\nn_users=20\n").unwrap();
        let b = parse_config("\nn_users = 20\nseed=3").unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), RunConfig::default().digest());
    }

    #[test]
    fn errors_name_the_line() {
        for (text, want) in [
            ("seed = 1\nbogus = 2\n", 2),
            ("seed = x\n", 1),
            ("\n\nno equals sign\n", 3),
            ("seed=1\nseed=2\n", 2),
            ("lr = inf\n", 1),
        ] {
            match parse_config(text) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn noise_db_is_linear_power() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.sigma2(), 1.0);
        cfg.set("noise_db", "10").unwrap();
        assert!((cfg.sigma2() - 10.0).abs() < 1e-12);
    }
}

//! Run configuration: flat `key=value` text with layered overrides.
//!
//! Values are resolved in order: built-in defaults, a config file,
//! `DIFFKG_<KEY>` environment variables (key upper-cased), then explicit
//! `key=value` overrides.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::diffusion::NoiseSchedule;
use crate::error::ConfigError;

pub const ENV_PREFIX: &str = "DIFFKG_";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

impl FromStr for Precision {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "f32" | "32" => Ok(Precision::F32),
            "f64" | "64" => Ok(Precision::F64),
            _ => Err(()),
        }
    }
}

/// Every model and training hyperparameter.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub tau: f64,
    pub k: usize,
    pub d: usize,
    pub layers: usize,
    pub steps: usize,
    pub inference_steps: usize,
    pub noise_scale: f64,
    pub alpha_low: f64,
    pub alpha_up: f64,
    pub kg_dropout: f64,
    pub out_dropout: f64,
    pub lr_rec: f64,
    pub lr_diff: f64,
    pub batch_size: usize,
    pub diff_batch_size: usize,
    pub epochs: usize,
    pub top_n: usize,
    /// Evaluate every this many epochs; 0 evaluates only after the last.
    pub eval_every: usize,
    pub seed: u64,
    pub disable_cl: bool,
    pub disable_dm: bool,
    pub disable_ckgc: bool,
    pub hidden: usize,
    pub agg_layers: usize,
    pub leaky_slope: f64,
    pub test_ratio: f64,
    pub kcore: usize,
    pub precision: Precision,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lambda0: 0.1,
            lambda1: 1.0,
            lambda2: 1e-5,
            tau: 1.0,
            k: 10,
            d: 64,
            layers: 2,
            steps: 5,
            inference_steps: 0,
            noise_scale: 0.1,
            alpha_low: 1e-4,
            alpha_up: 1e-2,
            kg_dropout: 0.5,
            out_dropout: 0.1,
            lr_rec: 1e-3,
            lr_diff: 1e-3,
            batch_size: 1024,
            diff_batch_size: 64,
            epochs: 50,
            top_n: 20,
            eval_every: 1,
            seed: 2024,
            disable_cl: false,
            disable_dm: false,
            disable_ckgc: false,
            hidden: 1024,
            agg_layers: 1,
            leaky_slope: 0.2,
            test_ratio: 0.2,
            kcore: 10,
            precision: Precision::F32,
        }
    }
}

/// Configuration keys with a one-line description, in echo order.
pub const KEYS: &[(&str, &str)] = &[
    ("lambda0", "weight of the CKGC loss against the ELBO, in [0, 1]"),
    ("lambda1", "weight of the contrastive loss"),
    ("lambda2", "L2 weight on embedding and attention parameters"),
    ("tau", "InfoNCE temperature"),
    ("k", "entities kept per item when rebuilding the denoised graph"),
    ("d", "embedding size"),
    ("L", "graph propagation layers"),
    ("T", "diffusion steps"),
    ("T_prime", "forward corruption steps before reverse inference"),
    ("s", "noise scale of the linear schedule"),
    ("alpha_low", "lower noise bound of the schedule"),
    ("alpha_up", "upper noise bound of the schedule"),
    ("kg_dropout", "edge dropout rate for the contrastive view"),
    ("out_dropout", "dropout on aggregated item embeddings"),
    ("lr_rec", "Adam learning rate for the recommendation parameters"),
    ("lr_diff", "Adam learning rate for the denoiser"),
    ("batch_size", "BPR triples per step"),
    ("diff_batch_size", "item rows per diffusion step"),
    ("epochs", "training epochs"),
    ("N", "ranking cutoff for Recall@N and NDCG@N"),
    ("eval_every", "evaluate every this many epochs during training, 0 for the last epoch only"),
    ("seed", "random seed"),
    ("disable_cl", "drop the contrastive loss"),
    ("disable_dm", "skip diffusion and use the original graph as the denoised view"),
    ("disable_ckgc", "drop the CKGC loss"),
    ("hidden", "denoiser hidden width"),
    ("agg_layers", "stacked knowledge aggregation layers"),
    ("leaky_slope", "LeakyReLU negative slope"),
    ("test_ratio", "per-user share of interactions held out for testing"),
    ("kcore", "k of the k-core filter applied at ingestion"),
    ("precision", "f32 or f64"),
    ("data_dir", "directory written by `ingest`"),
    ("out_dir", "directory for checkpoints, metrics and exports"),
];

/// Hyperparameters plus file locations.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub hp: HyperParams,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            hp: HyperParams::default(),
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str, expected: &'static str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Type {
        key: key.to_string(),
        expected,
        value: value.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ConfigError::Type {
            key: key.to_string(),
            expected: "a boolean",
            value: value.to_string(),
        }),
    }
}

fn range(key: &'static str, value: impl ToString, reason: &'static str) -> Result<(), ConfigError> {
    Err(ConfigError::Range {
        key,
        value: value.to_string(),
        reason,
    })
}

impl RunConfig {
    /// Sets one key from its textual value. Range checks happen in
    /// [`RunConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        const F: &str = "a number";
        const U: &str = "a non-negative integer";
        let value = value.trim();
        let hp = &mut self.hp;
        match key.trim() {
            "lambda0" => hp.lambda0 = parse(key, value, F)?,
            "lambda1" => hp.lambda1 = parse(key, value, F)?,
            "lambda2" => hp.lambda2 = parse(key, value, F)?,
            "tau" => hp.tau = parse(key, value, F)?,
            "k" => hp.k = parse(key, value, U)?,
            "d" => hp.d = parse(key, value, U)?,
            "L" => hp.layers = parse(key, value, U)?,
            "T" => hp.steps = parse(key, value, U)?,
            "T_prime" => hp.inference_steps = parse(key, value, U)?,
            "s" => hp.noise_scale = parse(key, value, F)?,
            "alpha_low" => hp.alpha_low = parse(key, value, F)?,
            "alpha_up" => hp.alpha_up = parse(key, value, F)?,
            "kg_dropout" => hp.kg_dropout = parse(key, value, F)?,
            "out_dropout" => hp.out_dropout = parse(key, value, F)?,
            "lr_rec" => hp.lr_rec = parse(key, value, F)?,
            "lr_diff" => hp.lr_diff = parse(key, value, F)?,
            "batch_size" => hp.batch_size = parse(key, value, U)?,
            "diff_batch_size" => hp.diff_batch_size = parse(key, value, U)?,
            "epochs" => hp.epochs = parse(key, value, U)?,
            "N" => hp.top_n = parse(key, value, U)?,
            "eval_every" => hp.eval_every = parse(key, value, U)?,
            "seed" => hp.seed = parse(key, value, U)?,
            "disable_cl" => hp.disable_cl = parse_bool(key, value)?,
            "disable_dm" => hp.disable_dm = parse_bool(key, value)?,
            "disable_ckgc" => hp.disable_ckgc = parse_bool(key, value)?,
            "hidden" => hp.hidden = parse(key, value, U)?,
            "agg_layers" => hp.agg_layers = parse(key, value, U)?,
            "leaky_slope" => hp.leaky_slope = parse(key, value, F)?,
            "test_ratio" => hp.test_ratio = parse(key, value, F)?,
            "kcore" => hp.kcore = parse(key, value, U)?,
            "precision" => hp.precision = parse(key, value, "f32 or f64")?,
            "data_dir" => self.data_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: n + 1,
                content: line.to_string(),
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.apply_text(&text)
    }

    /// Applies `DIFFKG_<KEY>` variables from `vars`.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        for (name, value) in vars {
            let Some(rest) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            if let Some((key, _)) = KEYS.iter().find(|(k, _)| k.to_uppercase() == rest) {
                self.set(key, &value)?;
            }
        }
        Ok(())
    }

    /// Defaults, then `file`, then the process environment, then
    /// `overrides`; the result is validated.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            cfg.apply_file(path)?;
        }
        cfg.apply_env(std::env::vars())?;
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let hp = &self.hp;
        if !(0.0..=1.0).contains(&hp.lambda0) {
            return range("lambda0", hp.lambda0, "must lie in [0, 1]");
        }
        if !(hp.lambda1 >= 0.0) {
            return range("lambda1", hp.lambda1, "must be non-negative");
        }
        if !(hp.lambda2 >= 0.0) {
            return range("lambda2", hp.lambda2, "must be non-negative");
        }
        if !(hp.tau > 0.0) {
            return range("tau", hp.tau, "must be positive");
        }
        for (key, v) in [
            ("k", hp.k),
            ("d", hp.d),
            ("batch_size", hp.batch_size),
            ("diff_batch_size", hp.diff_batch_size),
            ("N", hp.top_n),
            ("hidden", hp.hidden),
            ("agg_layers", hp.agg_layers),
            ("kcore", hp.kcore),
        ] {
            if v == 0 {
                return range(key, v, "must be at least 1");
            }
        }
        for (key, v) in [("kg_dropout", hp.kg_dropout), ("out_dropout", hp.out_dropout)] {
            if !(0.0..1.0).contains(&v) {
                return range(key, v, "must lie in [0, 1)");
            }
        }
        for (key, v) in [("lr_rec", hp.lr_rec), ("lr_diff", hp.lr_diff)] {
            if !(v > 0.0 && v.is_finite()) {
                return range(key, v, "must be positive");
            }
        }
        if !(hp.test_ratio > 0.0 && hp.test_ratio < 1.0) {
            return range("test_ratio", hp.test_ratio, "must lie in (0, 1)");
        }
        if !hp.leaky_slope.is_finite() {
            return range("leaky_slope", hp.leaky_slope, "must be finite");
        }
        self.schedule().map(|_| ())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule, ConfigError> {
        let hp = &self.hp;
        NoiseSchedule::new(hp.steps, hp.inference_steps, hp.noise_scale, hp.alpha_low, hp.alpha_up)
    }

    /// Every key with its resolved value.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let hp = &self.hp;
        let values = [
            hp.lambda0.to_string(),
            hp.lambda1.to_string(),
            hp.lambda2.to_string(),
            hp.tau.to_string(),
            hp.k.to_string(),
            hp.d.to_string(),
            hp.layers.to_string(),
            hp.steps.to_string(),
            hp.inference_steps.to_string(),
            hp.noise_scale.to_string(),
            hp.alpha_low.to_string(),
            hp.alpha_up.to_string(),
            hp.kg_dropout.to_string(),
            hp.out_dropout.to_string(),
            hp.lr_rec.to_string(),
            hp.lr_diff.to_string(),
            hp.batch_size.to_string(),
            hp.diff_batch_size.to_string(),
            hp.epochs.to_string(),
            hp.top_n.to_string(),
            hp.eval_every.to_string(),
            hp.seed.to_string(),
            hp.disable_cl.to_string(),
            hp.disable_dm.to_string(),
            hp.disable_ckgc.to_string(),
            hp.hidden.to_string(),
            hp.agg_layers.to_string(),
            hp.leaky_slope.to_string(),
            hp.test_ratio.to_string(),
            hp.kcore.to_string(),
            hp.precision.to_string(),
            self.data_dir.display().to_string(),
            self.out_dir.display().to_string(),
        ];
        KEYS.iter().map(|(k, _)| *k).zip(values).collect()
    }

    /// The resolved configuration as `key=value` lines; parsing it back
    /// reproduces `self`.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("\n# nothing here\n").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn later_layers_win() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("T=5\nseed = 3\n").unwrap();
        cfg.apply_env([("DIFFKG_SEED".to_string(), "9".to_string())]).unwrap();
        cfg.set("T", "10").unwrap();
        assert_eq!(cfg.hp.steps, 10);
        assert_eq!(cfg.hp.seed, 9);
    }

    #[test]
    fn env_keys_are_upper_cased() {
        let mut cfg = RunConfig::default();
        cfg.apply_env([
            ("DIFFKG_T_PRIME".to_string(), "2".to_string()),
            ("DIFFKG_DISABLE_CL".to_string(), "true".to_string()),
            ("OTHER".to_string(), "x".to_string()),
        ])
        .unwrap();
        assert_eq!(cfg.hp.inference_steps, 2);
        assert!(cfg.hp.disable_cl);
    }

    #[test]
    fn rejects_out_of_range_lambda0() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("lambda0=1.5").unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("lambda0"), "{err}");
    }

    #[test]
    fn unknown_key_and_type_errors() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_text("gamma=1").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey(ref k) if k == "gamma"));
        let err = cfg.apply_text("d=big").unwrap_err();
        assert!(err.to_string().contains("non-negative integer"), "{err}");
        assert!(matches!(cfg.apply_text("just words"), Err(ConfigError::Syntax { line: 1, .. })));
    }

    #[test]
    fn text_roundtrip() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("lambda2=0.25\nprecision=f64\nout_dir=/tmp/x\ndisable_dm=1").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.entries().len(), KEYS.len());
    }
}

//! Run configuration.
//!
//! Every value comes from, in increasing priority: the architecture's
//! preset, a plain-text `key = value` file (`--config`), and command-line
//! flags. The fully resolved configuration is written back in the same
//! file format, so a run can be repeated with `--config config_resolved`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use emojinet::losses::LossKind;
use emojinet::models::{Arch, ModelConfig};
use emojinet::optim::OptimKind;
use emojinet::presets::{preset, TrainConfig};
use emojinet::tokenizer::DEFAULT_MIN_FREQ;

use crate::error::{io_err, CliError, Result};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_PRESET: &str = "paper";
pub const DEFAULT_EMBED_DIM: usize = 128;

/// Keys accepted in a config file, in the order they are written.
pub const KEYS: [&str; 18] = [
    "data_dir",
    "out",
    "arch",
    "preset",
    "seed",
    "epochs",
    "batch_size",
    "optimizer",
    "lr",
    "weight_decay",
    "clip_norm",
    "patience",
    "loss",
    "gamma",
    "embed_dim",
    "min_freq",
    "limit_train",
    "limit_test",
];

/// Partial settings from one source. `Some(None)` explicitly clears an
/// optional value (written `none` in files).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    pub data_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub arch: Option<Arch>,
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub optimizer: Option<OptimKind>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub clip_norm: Option<Option<f64>>,
    pub patience: Option<Option<usize>>,
    pub loss: Option<LossKind>,
    pub gamma: Option<f64>,
    pub embed_dim: Option<usize>,
    pub min_freq: Option<usize>,
    pub limit_train: Option<Option<usize>>,
    pub limit_test: Option<Option<usize>>,
}

fn parse_value<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("invalid value {value:?}: {e}"))
}

fn parse_optional<T: FromStr>(value: &str) -> std::result::Result<Option<T>, String>
where
    T::Err: std::fmt::Display,
{
    if value.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        parse_value(value).map(Some)
    }
}

impl Settings {
    /// `other`'s values where present, ours otherwise.
    pub fn overlay(self, other: Settings) -> Settings {
        macro_rules! pick {
            ($($f:ident),*) => { Settings { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            data_dir, out, arch, preset, seed, epochs, batch_size, optimizer, lr, weight_decay, clip_norm, patience,
            loss, gamma, embed_dim, min_freq, limit_train, limit_test
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text, path)
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are
    /// ignored; unknown and repeated keys are errors.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut s = Settings::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let err = |msg: String| CliError::ConfigFile {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key) {
                return Err(err(format!("{key} is set twice")));
            }
            seen.push(key);
            let r: std::result::Result<(), String> = (|| {
                match key {
                    "data_dir" => s.data_dir = Some(PathBuf::from(value)),
                    "out" => s.out = Some(PathBuf::from(value)),
                    "arch" => s.arch = Some(parse_value(value)?),
                    "preset" => s.preset = Some(value.to_string()),
                    "seed" => s.seed = Some(parse_value(value)?),
                    "epochs" => s.epochs = Some(parse_value(value)?),
                    "batch_size" => s.batch_size = Some(parse_value(value)?),
                    "optimizer" => s.optimizer = Some(parse_value(value)?),
                    "lr" => s.lr = Some(parse_value(value)?),
                    "weight_decay" => s.weight_decay = Some(parse_value(value)?),
                    "clip_norm" => s.clip_norm = Some(parse_optional(value)?),
                    "patience" => s.patience = Some(parse_optional(value)?),
                    "loss" => s.loss = Some(parse_value(value)?),
                    "gamma" => s.gamma = Some(parse_value(value)?),
                    "embed_dim" => s.embed_dim = Some(parse_value(value)?),
                    "min_freq" => s.min_freq = Some(parse_value(value)?),
                    "limit_train" => s.limit_train = Some(parse_optional(value)?),
                    "limit_test" => s.limit_test = Some(parse_optional(value)?),
                    other => return Err(format!("unknown key {other:?} (known: {})", KEYS.join(", "))),
                }
                Ok(())
            })();
            r.map_err(|msg| err(format!("{key}: {msg}")))?;
        }
        Ok(s)
    }
}

/// A complete configuration for one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub out: PathBuf,
    pub arch: Arch,
    pub preset: String,
    pub seed: u64,
    pub train: TrainConfig,
    pub embed_dim: usize,
    pub min_freq: usize,
    pub limit_train: Option<usize>,
    pub limit_test: Option<usize>,
}

impl RunConfig {
    /// Fills everything `settings` leaves open from the preset of its
    /// architecture. A data directory and an architecture are required.
    pub fn resolve(settings: &Settings) -> Result<Self> {
        let s = settings.clone();
        let arch = s
            .arch
            .ok_or_else(|| CliError::Usage("no architecture: pass --arch or set `arch` in the config file".into()))?;
        let data_dir = s.data_dir.ok_or_else(|| {
            CliError::Usage("no data directory: pass --data-dir or set `data_dir` in the config file".into())
        })?;
        let preset_name = s.preset.unwrap_or_else(|| DEFAULT_PRESET.to_string());
        let mut train = preset(arch, &preset_name).map_err(|e| CliError::Usage(e.to_string()))?;
        if let Some(v) = s.epochs {
            train.epochs = v;
        }
        if let Some(v) = s.batch_size {
            train.batch_size = v;
        }
        if let Some(v) = s.optimizer {
            train.optim.kind = v;
        }
        if let Some(v) = s.lr {
            train.optim.lr = v;
        }
        if let Some(v) = s.weight_decay {
            train.optim.weight_decay = v;
        }
        if let Some(v) = s.clip_norm {
            train.optim.clip_norm = v;
        }
        if let Some(v) = s.patience {
            train.patience = v;
        }
        if let Some(v) = s.loss {
            train.loss = v;
        }
        if let Some(v) = s.gamma {
            train.gamma = v;
        }
        let cfg = Self {
            out: s.out.unwrap_or_else(|| Path::new("runs").join(arch.name())),
            data_dir,
            arch,
            preset: preset_name,
            seed: s.seed.unwrap_or(DEFAULT_SEED),
            train,
            embed_dim: s.embed_dim.unwrap_or(DEFAULT_EMBED_DIM),
            min_freq: s.min_freq.unwrap_or(DEFAULT_MIN_FREQ),
            limit_train: s.limit_train.flatten(),
            limit_test: s.limit_test.flatten(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let usage = |m: &str| Err(CliError::Usage(m.into()));
        if self.train.epochs == 0 {
            return usage("epochs must be at least 1");
        }
        if self.train.batch_size == 0 {
            return usage("batch_size must be at least 1");
        }
        if self.train.patience == Some(0) {
            return usage("patience must be at least 1 (or none)");
        }
        if !(self.train.gamma >= 0.0 && self.train.gamma.is_finite()) {
            return usage("gamma must be a finite value ≥ 0");
        }
        if self.min_freq == 0 {
            return usage("min_freq must be at least 1");
        }
        if self.limit_train == Some(0) || self.limit_test == Some(0) {
            return usage("limits must be at least 1 (or none)");
        }
        self.train.optim.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.model_config(2).validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(())
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig::with_dim(self.arch, vocab_size, self.embed_dim)
    }

    /// `(key, value)` pairs in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map_or_else(|| "none".to_string(), |v| v.to_string())
        }
        let t = &self.train;
        let values = [
            self.data_dir.display().to_string(),
            self.out.display().to_string(),
            self.arch.name().to_string(),
            self.preset.clone(),
            self.seed.to_string(),
            t.epochs.to_string(),
            t.batch_size.to_string(),
            t.optim.kind.name().to_string(),
            t.optim.lr.to_string(),
            t.optim.weight_decay.to_string(),
            opt(t.optim.clip_norm),
            opt(t.patience),
            t.loss.name().to_string(),
            t.gamma.to_string(),
            self.embed_dim.to_string(),
            self.min_freq.to_string(),
            opt(self.limit_train),
            opt(self.limit_test),
        ];
        KEYS.into_iter().zip(values).collect()
    }

    /// The `config_resolved` file. Floats use their shortest exact
    /// representation, so reading it back gives the same run.
    pub fn to_file_string(&self) -> String {
        let mut out = String::from("# Resolved run configuration; rerun with `emojinet train --config <this file>`.\n");
        for (k, v) in self.entries() {
            writeln!(out, "{k} = {v}").expect("writing to a String");
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Map<String, serde_json::Value> {
        self.entries()
            .into_iter()
            .map(|(k, v)| (k.to_string(), serde_json::Value::String(v)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Settings {
        Settings {
            data_dir: Some("data".into()),
            arch: Some(Arch::Cnn),
            ..Settings::default()
        }
    }

    #[test]
    fn presets_fill_the_gaps() {
        let cnn = RunConfig::resolve(&base()).unwrap();
        assert_eq!(cnn.train.epochs, 5);
        assert_eq!(cnn.out, Path::new("runs/cnn"));
        let ff = RunConfig::resolve(&Settings {
            arch: Some(Arch::Feedforward),
            ..base()
        })
        .unwrap();
        assert_eq!(ff.train.epochs, 10);
    }

    #[test]
    fn later_sources_win() {
        let file = Settings::parse("epochs = 7\nlr = 0.5\n# comment\n\nseed=3", Path::new("f")).unwrap();
        let flags = Settings {
            lr: Some(0.25),
            ..Settings::default()
        };
        let cfg = RunConfig::resolve(&base().overlay(file).overlay(flags)).unwrap();
        assert_eq!((cfg.train.epochs, cfg.train.optim.lr, cfg.seed), (7, 0.25, 3));
    }

    #[test]
    fn resolved_file_round_trips() {
        let mut s = base();
        s.lr = Some(1.0 / 3.0);
        s.limit_test = Some(Some(10));
        s.clip_norm = Some(Some(0.5));
        let cfg = RunConfig::resolve(&s).unwrap();
        let text = cfg.to_file_string();
        let back = RunConfig::resolve(&Settings::parse(&text, Path::new("f")).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_files_name_the_line() {
        for (text, line) in [("epochs = 2\nbogus = 1", 2), ("lr = fast", 1), ("seed = 1\nseed = 2", 2), ("arch", 1)] {
            match Settings::parse(text, Path::new("f")) {
                Err(CliError::ConfigFile { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(
            RunConfig::resolve(&Settings { lr: Some(-1.0), ..base() }),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(RunConfig::resolve(&Settings::default()), Err(CliError::Usage(_))));
    }
}

//! Flat sectioned `key = value` experiment files.
//!
//! ```text
//! # comment
//! [experiment]
//! seeds = 0, 1, 2
//! [augmentation]
//! counts = 300, 900
//! ```
//!
//! Lists are comma-separated. Unknown sections or keys are errors.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{KlScope, NoiseMode, PromptMode};
use crate::classifier::{ClfConfig, ClfTrainConfig};
use crate::corpus::{SplitRatios, SynthBenchSpec};
use crate::error::{invalid, Error, Result};
use crate::genlm::{GenConfig, LmTrainConfig};
use crate::tensor::KlDirection;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentMode {
    /// Strategy rows with validation and test metrics.
    #[default]
    Compare,
    /// Any strategies, validation metrics only.
    Sweep,
    /// Prompt × balanced grid with the base strategy, validation only.
    FinetuneGrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    None,
    Base,
    ConfidenceFilter,
    Medaug,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub mode: ExperimentMode,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub benchmark: SynthBenchSpec,
    pub split: SplitRatios,
    pub vocab_min_freq: usize,
    pub generator: GenConfig,
    pub lm: LmTrainConfig,
    pub classifier: ClfConfig,
    pub training: ClfTrainConfig,
    pub counts: Vec<usize>,
    pub prompts: Vec<PromptMode>,
    pub balanced: Vec<bool>,
    pub dedup: bool,
    pub temperature: f64,
    pub top_k: usize,
    pub max_len: usize,
    pub noise_fraction: f64,
    pub noise_mode: NoiseMode,
    pub strategies: Vec<StrategyKind>,
    pub keep_fractions: Vec<f64>,
    pub taus: Vec<f64>,
    pub kl_scope: KlScope,
    pub direction: KlDirection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            mode: ExperimentMode::Compare,
            seeds: vec![0, 1, 2, 3, 4],
            output: PathBuf::from("runs/experiment"),
            benchmark: SynthBenchSpec::default(),
            split: SplitRatios::default(),
            vocab_min_freq: 1,
            generator: GenConfig::default(),
            lm: LmTrainConfig { epochs: 3, ..Default::default() },
            classifier: ClfConfig::default(),
            training: ClfTrainConfig::default(),
            counts: vec![900],
            prompts: vec![PromptMode::WithContext],
            balanced: vec![true],
            dedup: true,
            temperature: 1.0,
            top_k: 40,
            max_len: 64,
            noise_fraction: 0.0,
            noise_mode: NoiseMode::Offlabel,
            strategies: vec![StrategyKind::None, StrategyKind::Base, StrategyKind::ConfidenceFilter, StrategyKind::Medaug],
            keep_fractions: vec![0.5],
            taus: vec![1.0],
            kl_scope: KlScope::AllSamples,
            direction: KlDirection::TargetToModel,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    /// `origin` only labels error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut ini = Ini::parse(text, origin)?;
        let mut c = Self::default();
        let s = "experiment";
        ini.set(s, "name", &mut c.name)?;
        ini.set_enum(s, "mode", &mut c.mode)?;
        ini.set_list(s, "seeds", &mut c.seeds)?;
        ini.set(s, "output", &mut c.output)?;

        let s = "benchmark";
        let b = &mut c.benchmark;
        ini.set(s, "num_docs", &mut b.num_docs)?;
        ini.set(s, "content_vocab", &mut b.content_vocab)?;
        ini.set(s, "positive_phrases", &mut b.positive_phrases)?;
        ini.set(s, "negative_phrases", &mut b.negative_phrases)?;
        ini.set(s, "min_len", &mut b.min_len)?;
        ini.set(s, "max_len", &mut b.max_len)?;
        ini.set(s, "positive_fraction", &mut b.positive_fraction)?;
        ini.set(s, "label_noise", &mut b.label_noise)?;
        ini.set(s, "cross_signal_rate", &mut b.cross_signal_rate)?;
        ini.set(s, "seed", &mut b.seed)?;
        ini.set(s, "train_ratio", &mut c.split.train)?;
        ini.set(s, "valid_ratio", &mut c.split.valid)?;
        ini.set(s, "test_ratio", &mut c.split.test)?;

        let s = "generator";
        ini.set(s, "vocab_min_freq", &mut c.vocab_min_freq)?;
        ini.set(s, "d_model", &mut c.generator.d_model)?;
        ini.set(s, "heads", &mut c.generator.heads)?;
        ini.set(s, "layers", &mut c.generator.layers)?;
        ini.set(s, "context", &mut c.generator.context)?;
        ini.set(s, "epochs", &mut c.lm.epochs)?;
        ini.set(s, "lr", &mut c.lm.lr)?;
        ini.set(s, "batch_size", &mut c.lm.batch_size)?;
        ini.set(s, "grad_clip", &mut c.lm.grad_clip)?;

        let s = "classifier";
        ini.set(s, "embed_dim", &mut c.classifier.embed_dim)?;
        ini.set(s, "hidden_dim", &mut c.classifier.hidden_dim)?;
        ini.set(s, "max_tokens", &mut c.classifier.max_tokens)?;
        ini.set(s, "epochs", &mut c.training.epochs)?;
        ini.set(s, "lr", &mut c.training.lr)?;
        ini.set(s, "batch_size", &mut c.training.batch_size)?;

        let s = "augmentation";
        ini.set_list(s, "counts", &mut c.counts)?;
        ini.set_enum_list(s, "prompt", &mut c.prompts)?;
        ini.set_list_with(s, "balanced", &mut c.balanced, parse_bool)?;
        ini.set_with(s, "dedup", &mut c.dedup, parse_bool)?;
        ini.set(s, "temperature", &mut c.temperature)?;
        ini.set(s, "top_k", &mut c.top_k)?;
        ini.set(s, "max_len", &mut c.max_len)?;
        ini.set(s, "noise_fraction", &mut c.noise_fraction)?;
        ini.set_enum(s, "noise_mode", &mut c.noise_mode)?;

        let s = "strategies";
        ini.set_enum_list(s, "list", &mut c.strategies)?;
        ini.set_list(s, "keep_fraction", &mut c.keep_fractions)?;

        let s = "distill";
        ini.set_list(s, "tau", &mut c.taus)?;
        ini.set_enum(s, "kl_scope", &mut c.kl_scope)?;
        ini.set_enum(s, "direction", &mut c.direction)?;

        ini.finish()?;
        c.validate().map_err(|e| invalid(format!("{}: {e}", origin.display())))?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(invalid("at least one seed is required"));
        }
        for (name, empty) in [
            ("counts", self.counts.is_empty()),
            ("prompt", self.prompts.is_empty()),
            ("balanced", self.balanced.is_empty()),
            ("strategies", self.strategies.is_empty()),
            ("keep_fraction", self.keep_fractions.is_empty()),
            ("tau", self.taus.is_empty()),
        ] {
            if empty {
                return Err(invalid(format!("swept list `{name}` is empty")));
            }
        }
        if self.mode == ExperimentMode::FinetuneGrid && self.strategies != [StrategyKind::Base] {
            return Err(invalid("finetune_grid runs the base strategy only; set `list = base`"));
        }
        if self.keep_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(invalid("keep_fraction values must lie in (0, 1]"));
        }
        if self.taus.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(invalid("tau values must be finite and nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return Err(invalid("noise_fraction must lie in [0, 1]"));
        }
        self.benchmark.validate()?;
        self.generator.validate()?;
        self.classifier.validate()?;
        if self.max_len > self.generator.context {
            return Err(invalid("augmentation max_len exceeds the generator context"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serialises")))
    }
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "y" | "1" => Ok(true),
        "false" | "no" | "n" | "0" => Ok(false),
        _ => Err(format!("expected a boolean, got `{s}`")),
    }
}

fn parse_from_str<T: FromStr>(s: &str) -> std::result::Result<T, String>
where
    T::Err: Display,
{
    s.parse::<T>().map_err(|e| format!("`{s}`: {e}"))
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown value `{s}`"))
}

struct Entry {
    value: String,
    line: usize,
}

struct Ini {
    path: PathBuf,
    entries: BTreeMap<(String, String), Entry>,
}

impl Ini {
    fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut entries = BTreeMap::new();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.trim();
            if body.is_empty() || body.starts_with('#') || body.starts_with(';') {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, "unterminated section header".into()))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(err(line, format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected `key = value`, got `{body}`")))?;
            let sec = section.clone().ok_or_else(|| err(line, "key outside of any section".into()))?;
            let key = key.trim().to_string();
            if let Some(prev) = entries.get(&(sec.clone(), key.clone())) {
                let prev: &Entry = prev;
                return Err(err(line, format!("duplicate key `{key}` (first set on line {})", prev.line)));
            }
            entries.insert(
                (sec, key),
                Entry {
                    value: value.trim().to_string(),
                    line,
                },
            );
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    fn set_with<T>(
        &mut self,
        section: &str,
        key: &str,
        slot: &mut T,
        parse: impl Fn(&str) -> std::result::Result<T, String>,
    ) -> Result<()> {
        if let Some(e) = self.entries.remove(&(section.to_string(), key.to_string())) {
            *slot = parse(&e.value).map_err(|m| self.error(e.line, format!("{key}: {m}")))?;
        }
        Ok(())
    }

    fn set_list_with<T>(
        &mut self,
        section: &str,
        key: &str,
        slot: &mut Vec<T>,
        parse: impl Fn(&str) -> std::result::Result<T, String>,
    ) -> Result<()> {
        if let Some(e) = self.entries.remove(&(section.to_string(), key.to_string())) {
            let items: Vec<&str> = e.value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
            if items.is_empty() {
                return Err(self.error(e.line, format!("{key}: list is empty")));
            }
            *slot = items
                .into_iter()
                .map(|s| parse(s).map_err(|m| self.error(e.line, format!("{key}: {m}"))))
                .collect::<Result<_>>()?;
        }
        Ok(())
    }

    fn set<T: FromStr>(&mut self, section: &str, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: Display,
    {
        self.set_with(section, key, slot, parse_from_str)
    }

    fn set_list<T: FromStr>(&mut self, section: &str, key: &str, slot: &mut Vec<T>) -> Result<()>
    where
        T::Err: Display,
    {
        self.set_list_with(section, key, slot, parse_from_str)
    }

    fn set_enum<T: DeserializeOwned>(&mut self, section: &str, key: &str, slot: &mut T) -> Result<()> {
        self.set_with(section, key, slot, parse_enum)
    }

    fn set_enum_list<T: DeserializeOwned>(&mut self, section: &str, key: &str, slot: &mut Vec<T>) -> Result<()> {
        self.set_list_with(section, key, slot, parse_enum)
    }

    fn error(&self, line: usize, message: String) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            message,
        }
    }

    /// Fails on the first entry no setter consumed.
    fn finish(self) -> Result<()> {
        match self.entries.iter().min_by_key(|(_, e)| e.line) {
            Some(((section, key), e)) => Err(self.error(e.line, format!("unknown key `{key}` in [{section}]"))),
            None => Ok(()),
        }
    }
}

const SECTIONS: [&str; 7] = [
    "experiment",
    "benchmark",
    "generator",
    "classifier",
    "augmentation",
    "strategies",
    "distill",
];

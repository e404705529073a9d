//! Flat `key = value` settings shared by every subcommand.
//!
//! A settings file is plain text: one assignment per line, `#` comments,
//! blank lines ignored. Every run directory gets the fully resolved
//! settings echoed back to `config.echo` in this same format, so a run can
//! be reproduced exactly with `--config <run>/config.echo`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use restyle_core::classifier::ClassifierConfig;
use restyle_core::corpus::Tokenizer;
use restyle_core::metrics::{parse_learned_metric, LearnedMetric};
use restyle_core::pipeline::{IbtOptions, TrainOptions};
use restyle_core::rewards::{BleuSign, RewardConfig};
use restyle_core::seq2seq::ModelConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    // model
    pub backbone: String,
    pub vocab_size: usize,
    pub dim: usize,
    pub heads: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub ffn_hidden: usize,
    pub max_len: usize,
    pub max_decode_len: usize,
    pub lr: f64,
    pub seed: u64,
    pub lowercase: bool,
    // supervised training
    pub batch_size: usize,
    pub epochs: usize,
    pub validate_every: usize,
    pub patience: usize,
    // back-translation
    pub steps: usize,
    pub batches_per_direction: usize,
    pub sc0: bool,
    pub sc1: bool,
    // rewards
    pub reward_style: bool,
    pub reward_bleu: bool,
    pub reward_learned: bool,
    pub lambda_sc: f64,
    pub lambda_bleu: f64,
    pub lambda_learned: f64,
    pub reward_sign: String,
    pub learned_metric: String,
    // selection thresholds
    pub sigma: f64,
    pub sigma_c: f64,
    pub sigma_s: f64,
    // classifier
    pub clf_embed_dim: usize,
    pub clf_filter_widths: Vec<usize>,
    pub clf_filters_per_width: usize,
    pub clf_epochs: usize,
    pub clf_batch_size: usize,
    pub clf_lr: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            backbone: "tiny".into(),
            vocab_size: 1000,
            dim: 128,
            heads: 4,
            enc_layers: 2,
            dec_layers: 2,
            ffn_hidden: 256,
            max_len: 64,
            max_decode_len: 64,
            lr: 3e-4,
            seed: 0,
            lowercase: true,
            batch_size: 32,
            epochs: 10,
            validate_every: 0,
            patience: 0,
            steps: 100,
            batches_per_direction: 1,
            sc0: true,
            sc1: true,
            reward_style: true,
            reward_bleu: true,
            reward_learned: true,
            lambda_sc: 1.0,
            lambda_bleu: 1.0,
            lambda_learned: 1.0,
            reward_sign: BleuSign::SampleMinusGreedy.as_str().into(),
            learned_metric: "desk".into(),
            sigma: restyle_core::pipeline::DEFAULT_SIGMA_PARAPHRASE,
            sigma_c: restyle_core::pipeline::DEFAULT_SIGMA_CONTENT,
            sigma_s: restyle_core::pipeline::DEFAULT_SIGMA_STYLE,
            clf_embed_dim: 128,
            clf_filter_widths: vec![3, 4, 5],
            clf_filters_per_width: 100,
            clf_epochs: 3,
            clf_batch_size: 32,
            clf_lr: 1e-3,
        }
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => bail!("{key}: expected true or false, got {value:?}"),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow::anyhow!("{key}: {e} in {value:?}"))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|part| parse_num(key, part.trim()))
        .collect()
}

impl Settings {
    pub fn load(path: &Path) -> Result<Settings> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading settings from {}", path.display()))?;
        let mut settings = Settings::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("{}:{}: expected key = value", path.display(), idx + 1))?;
            settings
                .set(key.trim(), value.trim())
                .with_context(|| format!("{}:{}", path.display(), idx + 1))?;
        }
        Ok(settings)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "backbone" => self.backbone = value.into(),
            "vocab_size" => self.vocab_size = parse_num(key, value)?,
            "dim" => self.dim = parse_num(key, value)?,
            "heads" => self.heads = parse_num(key, value)?,
            "enc_layers" => self.enc_layers = parse_num(key, value)?,
            "dec_layers" => self.dec_layers = parse_num(key, value)?,
            "ffn_hidden" => self.ffn_hidden = parse_num(key, value)?,
            "max_len" => self.max_len = parse_num(key, value)?,
            "max_decode_len" => self.max_decode_len = parse_num(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "lowercase" => self.lowercase = parse_bool(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "validate_every" => self.validate_every = parse_num(key, value)?,
            "patience" => self.patience = parse_num(key, value)?,
            "steps" => self.steps = parse_num(key, value)?,
            "batches_per_direction" => self.batches_per_direction = parse_num(key, value)?,
            "sc0" => self.sc0 = parse_bool(key, value)?,
            "sc1" => self.sc1 = parse_bool(key, value)?,
            "reward_style" => self.reward_style = parse_bool(key, value)?,
            "reward_bleu" => self.reward_bleu = parse_bool(key, value)?,
            "reward_learned" => self.reward_learned = parse_bool(key, value)?,
            "lambda_sc" => self.lambda_sc = parse_num(key, value)?,
            "lambda_bleu" => self.lambda_bleu = parse_num(key, value)?,
            "lambda_learned" => self.lambda_learned = parse_num(key, value)?,
            "reward_sign" => self.reward_sign = value.into(),
            "learned_metric" => self.learned_metric = value.into(),
            "sigma" => self.sigma = parse_num(key, value)?,
            "sigma_c" => self.sigma_c = parse_num(key, value)?,
            "sigma_s" => self.sigma_s = parse_num(key, value)?,
            "clf_embed_dim" => self.clf_embed_dim = parse_num(key, value)?,
            "clf_filter_widths" => self.clf_filter_widths = parse_list(key, value)?,
            "clf_filters_per_width" => self.clf_filters_per_width = parse_num(key, value)?,
            "clf_epochs" => self.clf_epochs = parse_num(key, value)?,
            "clf_batch_size" => self.clf_batch_size = parse_num(key, value)?,
            "clf_lr" => self.clf_lr = parse_num(key, value)?,
            _ => bail!("unknown setting {key:?}"),
        }
        Ok(())
    }

    /// The resolved settings, one `key = value` per line, loadable again
    /// through `--config`.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let widths = self
            .clf_filter_widths
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(",");
        for (key, value) in [
            ("backbone", self.backbone.clone()),
            ("vocab_size", self.vocab_size.to_string()),
            ("dim", self.dim.to_string()),
            ("heads", self.heads.to_string()),
            ("enc_layers", self.enc_layers.to_string()),
            ("dec_layers", self.dec_layers.to_string()),
            ("ffn_hidden", self.ffn_hidden.to_string()),
            ("max_len", self.max_len.to_string()),
            ("max_decode_len", self.max_decode_len.to_string()),
            ("lr", self.lr.to_string()),
            ("seed", self.seed.to_string()),
            ("lowercase", self.lowercase.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("validate_every", self.validate_every.to_string()),
            ("patience", self.patience.to_string()),
            ("steps", self.steps.to_string()),
            ("batches_per_direction", self.batches_per_direction.to_string()),
            ("sc0", self.sc0.to_string()),
            ("sc1", self.sc1.to_string()),
            ("reward_style", self.reward_style.to_string()),
            ("reward_bleu", self.reward_bleu.to_string()),
            ("reward_learned", self.reward_learned.to_string()),
            ("lambda_sc", self.lambda_sc.to_string()),
            ("lambda_bleu", self.lambda_bleu.to_string()),
            ("lambda_learned", self.lambda_learned.to_string()),
            ("reward_sign", self.reward_sign.clone()),
            ("learned_metric", self.learned_metric.clone()),
            ("sigma", self.sigma.to_string()),
            ("sigma_c", self.sigma_c.to_string()),
            ("sigma_s", self.sigma_s.to_string()),
            ("clf_embed_dim", self.clf_embed_dim.to_string()),
            ("clf_filter_widths", widths),
            ("clf_filters_per_width", self.clf_filters_per_width.to_string()),
            ("clf_epochs", self.clf_epochs.to_string()),
            ("clf_batch_size", self.clf_batch_size.to_string()),
            ("clf_lr", self.clf_lr.to_string()),
        ] {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    pub fn tokenizer(&self) -> Tokenizer {
        Tokenizer {
            lowercase: self.lowercase,
            max_len: self.max_len,
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        if self.backbone != "tiny" {
            bail!(
                "backbone {:?} has no built-in implementation; only \"tiny\" ships with this binary",
                self.backbone
            );
        }
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            bail!("dim ({}) must be a positive multiple of heads ({})", self.dim, self.heads);
        }
        Ok(ModelConfig {
            vocab_size: self.vocab_size,
            dim: self.dim,
            heads: self.heads,
            enc_layers: self.enc_layers,
            dec_layers: self.dec_layers,
            ffn_hidden: self.ffn_hidden,
            max_len: self.max_len,
            max_decode_len: self.max_decode_len,
            lr: self.lr,
            seed: self.seed,
        })
    }

    pub fn classifier_config(&self) -> ClassifierConfig {
        ClassifierConfig {
            embed_dim: self.clf_embed_dim,
            filter_widths: self.clf_filter_widths.clone(),
            filters_per_width: self.clf_filters_per_width,
            vocab_size: self.vocab_size,
            lr: self.clf_lr,
            epochs: self.clf_epochs,
            batch_size: self.clf_batch_size,
            seed: self.seed,
        }
    }

    pub fn reward_config(&self) -> Result<RewardConfig> {
        let sign = BleuSign::parse(&self.reward_sign)
            .with_context(|| format!("reward_sign {:?}", self.reward_sign))?;
        let config = RewardConfig {
            lambda_style: self.lambda_sc,
            lambda_bleu: self.lambda_bleu,
            lambda_learned: self.lambda_learned,
            style_enabled: self.reward_style,
            bleu_enabled: self.reward_bleu,
            learned_enabled: self.reward_learned,
            bleu_sign: sign,
        };
        config.validate()?;
        Ok(config)
    }

    /// `none`, `desk`, or `external:<command>`.
    pub fn metric(&self) -> Result<Option<Box<dyn LearnedMetric>>> {
        if self.learned_metric == "none" {
            Ok(None)
        } else {
            Ok(Some(parse_learned_metric(&self.learned_metric)?))
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            batch_size: self.batch_size,
            epochs: self.epochs,
            validate_every: self.validate_every,
            patience: self.patience,
            seed: self.seed,
        }
    }

    pub fn ibt_options(&self) -> IbtOptions {
        IbtOptions {
            steps: self.steps,
            batch_size: self.batch_size,
            batches_per_direction: self.batches_per_direction,
            validate_every: self.validate_every,
            patience: self.patience,
            sc0: self.sc0,
            sc1: self.sc1,
            seed: self.seed,
        }
    }
}

/// Settings sources shared by every subcommand: an optional file plus the
/// handful of flags that override it.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Settings file (`key = value` lines); defaults apply without one
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override the random seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the paraphrase-filter threshold
    #[arg(long, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
    /// Override the content floor for pair selection
    #[arg(long = "sigma-c", allow_negative_numbers = true)]
    pub sigma_c: Option<f64>,
    /// Override the style floor for pair selection
    #[arg(long = "sigma-s", allow_negative_numbers = true)]
    pub sigma_s: Option<f64>,
    /// Override the style-reward weight
    #[arg(long = "lambda-sc", allow_negative_numbers = true)]
    pub lambda_sc: Option<f64>,
    /// Override the content-reward orientation
    /// (sample-minus-greedy | greedy-minus-sample)
    #[arg(long = "reward-sign", value_name = "SIGN")]
    pub reward_sign: Option<String>,
    /// Override the translation backbone (`tiny` or `external:<id>`)
    #[arg(long)]
    pub backbone: Option<String>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<Settings> {
        let mut settings = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        if let Some(seed) = self.seed {
            settings.seed = seed;
        }
        if let Some(sigma) = self.sigma {
            settings.sigma = sigma;
        }
        if let Some(sigma_c) = self.sigma_c {
            settings.sigma_c = sigma_c;
        }
        if let Some(sigma_s) = self.sigma_s {
            settings.sigma_s = sigma_s;
        }
        if let Some(lambda_sc) = self.lambda_sc {
            settings.lambda_sc = lambda_sc;
        }
        if let Some(sign) = &self.reward_sign {
            settings.reward_sign = sign.clone();
        }
        if let Some(backbone) = &self.backbone {
            settings.backbone = backbone.clone();
        }
        Ok(settings)
    }
}

//! Reward shaping for transfer training. Three signals, each gated and
//! weighted independently:
//!
//! - style: how much the frozen classifier thinks a sampled output moved
//!   from the source style to the target style
//! - content (BLEU): self-critical sentence BLEU of the sampled output
//!   against the source, baselined by the greedy output
//! - content (learned): a learned metric scored on the sampled output
//!   against the source
//!
//! Rewards weight the sampled sequence's log-probability in the policy
//! gradient, so the training loss for one sampled sentence is
//! `-reward * sum(log p(token))`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{ClassifierError, StyleClassifier};
use crate::corpus::{StyleId, Utterance};
use crate::metrics::{sentence_bleu, LearnedMetric, MetricsError};

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("reward weight {name} must be finite and non-negative, got {value}")]
    BadWeight { name: &'static str, value: f64 },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Which way the self-critical BLEU baseline points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BleuSign {
    /// Reward = BLEU(sampled) - BLEU(greedy): sampling above the greedy
    /// baseline is reinforced. The default.
    SampleMinusGreedy,
    /// Reward = BLEU(greedy) - BLEU(sampled): the mirrored convention.
    GreedyMinusSample,
}

impl BleuSign {
    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "sample-minus-greedy" => Some(BleuSign::SampleMinusGreedy),
            "greedy-minus-sample" => Some(BleuSign::GreedyMinusSample),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BleuSign::SampleMinusGreedy => "sample-minus-greedy",
            BleuSign::GreedyMinusSample => "greedy-minus-sample",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub lambda_style: f64,
    pub lambda_bleu: f64,
    pub lambda_learned: f64,
    pub style_enabled: bool,
    pub bleu_enabled: bool,
    pub learned_enabled: bool,
    pub bleu_sign: BleuSign,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            lambda_style: 1.0,
            lambda_bleu: 1.0,
            lambda_learned: 1.0,
            style_enabled: true,
            bleu_enabled: true,
            learned_enabled: true,
            bleu_sign: BleuSign::SampleMinusGreedy,
        }
    }
}

impl RewardConfig {
    /// All reward terms off; training reduces to plain likelihood.
    pub fn disabled() -> Self {
        RewardConfig {
            style_enabled: false,
            bleu_enabled: false,
            learned_enabled: false,
            ..RewardConfig::default()
        }
    }

    pub fn any_enabled(&self) -> bool {
        self.style_enabled || self.bleu_enabled || self.learned_enabled
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        for (name, value) in [
            ("lambda_style", self.lambda_style),
            ("lambda_bleu", self.lambda_bleu),
            ("lambda_learned", self.lambda_learned),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(RewardError::BadWeight { name, value });
            }
        }
        Ok(())
    }
}

/// What one decode call produced: the deterministic output, one ancestral
/// sample, and the sample's per-token log-probabilities (end-of-sequence
/// token included).
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub greedy: Utterance,
    pub sampled: Utterance,
    pub sampled_logprobs: Vec<f64>,
}

impl DecodeOutcome {
    pub fn sampled_logprob_sum(&self) -> f64 {
        self.sampled_logprobs.iter().sum()
    }
}

/// lambda_style * (p(target | sampled) - p(source | sampled)).
pub fn style_reward(
    config: &RewardConfig,
    classifier: &StyleClassifier,
    sampled: &Utterance,
    source_style: &StyleId,
    target_style: &StyleId,
) -> Result<f64, RewardError> {
    if !config.style_enabled {
        return Ok(0.0);
    }
    let p_target = classifier.prob(sampled, target_style)?;
    let p_source = classifier.prob(sampled, source_style)?;
    Ok(config.lambda_style * (p_target - p_source))
}

/// Self-critical content reward: sentence BLEU of sampled and greedy
/// outputs against the source, differenced per `config.bleu_sign` and
/// scaled by lambda_bleu.
pub fn bleu_reward(config: &RewardConfig, outcome: &DecodeOutcome, source: &Utterance) -> f64 {
    if !config.bleu_enabled {
        return 0.0;
    }
    let sampled = sentence_bleu(&outcome.sampled, source);
    let greedy = sentence_bleu(&outcome.greedy, source);
    let diff = match config.bleu_sign {
        BleuSign::SampleMinusGreedy => sampled - greedy,
        BleuSign::GreedyMinusSample => greedy - sampled,
    };
    config.lambda_bleu * diff
}

/// lambda_learned * metric(sampled, source).
pub fn learned_reward(
    config: &RewardConfig,
    metric: &dyn LearnedMetric,
    sampled: &Utterance,
    source: &Utterance,
) -> Result<f64, RewardError> {
    if !config.learned_enabled {
        return Ok(0.0);
    }
    Ok(config.lambda_learned * metric.score(sampled, source)?)
}

/// Every enabled component plus their sum, which is what weights the
/// sampled sequence in training.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    pub style: f64,
    pub bleu: f64,
    pub learned: f64,
    pub total: f64,
}

pub fn total_reward(
    config: &RewardConfig,
    classifier: &StyleClassifier,
    metric: Option<&dyn LearnedMetric>,
    outcome: &DecodeOutcome,
    source: &Utterance,
    source_style: &StyleId,
    target_style: &StyleId,
) -> Result<RewardBreakdown, RewardError> {
    let style = style_reward(config, classifier, &outcome.sampled, source_style, target_style)?;
    let bleu = bleu_reward(config, outcome, source);
    let learned = match (config.learned_enabled, metric) {
        (true, Some(m)) => learned_reward(config, m, &outcome.sampled, source)?,
        _ => 0.0,
    };
    Ok(RewardBreakdown {
        style,
        bleu,
        learned,
        total: style + bleu + learned,
    })
}

/// Policy-gradient surrogate loss for one sampled sequence:
/// `-reward * sum(log p)`. Minimizing it ascends `reward * log P(sample)`.
pub fn policy_gradient_loss(reward: f64, sampled_logprobs: &[f64]) -> f64 {
    -reward * sampled_logprobs.iter().sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::ClassifierConfig;
    use crate::corpus::{LabeledUtterance, StylePair};
    use crate::metrics::DeskOracle;

    fn u(text: &str) -> Utterance {
        Utterance::from_tokens(&text.split(' ').collect::<Vec<_>>())
    }

    fn marker_classifier() -> (StyleClassifier, StylePair) {
        let styles = StylePair::new(StyleId::new("informal"), StyleId::new("formal"));
        let fillers = ["give", "me", "the", "report", "now", "soon"];
        let mut data = Vec::new();
        for i in 0..12 {
            let a = fillers[i % fillers.len()];
            data.push(LabeledUtterance {
                utterance: Utterance::from_tokens(&["plz", a]),
                style: styles.s1.clone(),
            });
            data.push(LabeledUtterance {
                utterance: Utterance::from_tokens(&["please", a]),
                style: styles.s2.clone(),
            });
        }
        let cfg = ClassifierConfig {
            embed_dim: 8,
            filter_widths: vec![2, 3],
            filters_per_width: 4,
            vocab_size: 50,
            lr: 5e-3,
            epochs: 12,
            batch_size: 4,
            seed: 1,
        };
        (StyleClassifier::train(cfg, &data, styles.clone()).unwrap(), styles)
    }

    fn outcome(greedy: &str, sampled: &str) -> DecodeOutcome {
        DecodeOutcome {
            greedy: u(greedy),
            sampled: u(sampled),
            sampled_logprobs: vec![-0.5, -0.25, -1.0],
        }
    }

    #[test]
    fn style_reward_matches_probability_difference_exactly() {
        let (clf, styles) = marker_classifier();
        let cfg = RewardConfig {
            lambda_style: 0.7,
            ..RewardConfig::default()
        };
        let sampled = u("please give me");
        let want = 0.7
            * (clf.prob(&sampled, &styles.s2).unwrap() - clf.prob(&sampled, &styles.s1).unwrap());
        let got = style_reward(&cfg, &clf, &sampled, &styles.s1, &styles.s2).unwrap();
        assert!((got - want).abs() < 1e-15);
        assert!(got > 0.0, "formal sample should earn positive reward");
    }

    #[test]
    fn bleu_reward_is_the_baselined_difference() {
        let cfg = RewardConfig {
            lambda_bleu: 2.0,
            ..RewardConfig::default()
        };
        let source = u("the cat sat on the mat");
        let oc = outcome("the cat sat on a mat", "the cat sat on the mat");
        let sampled = sentence_bleu(&oc.sampled, &source);
        let greedy = sentence_bleu(&oc.greedy, &source);
        let got = bleu_reward(&cfg, &oc, &source);
        assert!((got - 2.0 * (sampled - greedy)).abs() < 1e-15);
        assert!(got > 0.0);
    }

    #[test]
    fn bleu_sign_flag_negates_the_reward() {
        let a = RewardConfig::default();
        let b = RewardConfig {
            bleu_sign: BleuSign::GreedyMinusSample,
            ..RewardConfig::default()
        };
        let source = u("a b c d e");
        let oc = outcome("a b c d e", "a b c x e");
        let ra = bleu_reward(&a, &oc, &source);
        let rb = bleu_reward(&b, &oc, &source);
        assert!((ra + rb).abs() < 1e-15);
        assert!(ra != 0.0);
    }

    #[test]
    fn learned_reward_scales_the_metric() {
        let cfg = RewardConfig {
            lambda_learned: 0.5,
            ..RewardConfig::default()
        };
        let source = u("a b");
        let sampled = u("a");
        let got = learned_reward(&cfg, &DeskOracle, &sampled, &source).unwrap();
        assert!((got - 0.5 * (1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn disabled_components_contribute_zero() {
        let (clf, styles) = marker_classifier();
        let cfg = RewardConfig::disabled();
        assert!(!cfg.any_enabled());
        let source = u("plz give me");
        let oc = outcome("please give me", "please give me");
        let breakdown =
            total_reward(&cfg, &clf, Some(&DeskOracle), &oc, &source, &styles.s1, &styles.s2)
                .unwrap();
        assert_eq!(breakdown, RewardBreakdown::default());
    }

    #[test]
    fn total_is_the_sum_of_components() {
        let (clf, styles) = marker_classifier();
        let cfg = RewardConfig {
            lambda_style: 1.3,
            lambda_bleu: 0.4,
            lambda_learned: 2.0,
            ..RewardConfig::default()
        };
        let source = u("plz give me");
        let oc = outcome("please give me", "please me give");
        let b = total_reward(&cfg, &clf, Some(&DeskOracle), &oc, &source, &styles.s1, &styles.s2)
            .unwrap();
        assert!((b.total - (b.style + b.bleu + b.learned)).abs() < 1e-15);
        let style = style_reward(&cfg, &clf, &oc.sampled, &styles.s1, &styles.s2).unwrap();
        assert!((b.style - style).abs() < 1e-15);
    }

    #[test]
    fn missing_metric_with_learned_enabled_scores_zero() {
        let (clf, styles) = marker_classifier();
        let cfg = RewardConfig::default();
        let source = u("plz give me");
        let oc = outcome("please give me", "please give me");
        let b = total_reward(&cfg, &clf, None, &oc, &source, &styles.s1, &styles.s2).unwrap();
        assert_eq!(b.learned, 0.0);
    }

    #[test]
    fn validate_rejects_bad_weights() {
        let mut cfg = RewardConfig::default();
        cfg.lambda_bleu = -0.1;
        assert!(matches!(
            cfg.validate(),
            Err(RewardError::BadWeight { name: "lambda_bleu", .. })
        ));
        cfg.lambda_bleu = f64::NAN;
        assert!(cfg.validate().is_err());
        assert!(RewardConfig::default().validate().is_ok());
    }

    #[test]
    fn pg_loss_is_linear_in_reward_and_additive_in_logprobs() {
        let lp = [-0.5, -1.5, -0.25];
        let base = policy_gradient_loss(1.0, &lp);
        assert!((policy_gradient_loss(3.0, &lp) - 3.0 * base).abs() < 1e-15);
        assert!((policy_gradient_loss(-1.0, &lp) + base).abs() < 1e-15);
        let (a, b) = lp.split_at(1);
        let split = policy_gradient_loss(2.0, a) + policy_gradient_loss(2.0, b);
        assert!((policy_gradient_loss(2.0, &lp) - split).abs() < 1e-15);
        // Positive reward on a likely sequence means low loss.
        assert!(policy_gradient_loss(1.0, &lp) > 0.0);
        assert_eq!(policy_gradient_loss(0.0, &lp), 0.0);
    }

    #[test]
    fn bleu_sign_round_trips_through_strings() {
        for sign in [BleuSign::SampleMinusGreedy, BleuSign::GreedyMinusSample] {
            assert_eq!(BleuSign::parse(sign.as_str()), Some(sign));
        }
        assert_eq!(BleuSign::parse("upside-down"), None);
    }
}

//! The three training stages and the run-directory contract they share.
//!
//! A transfer system is built in order: [`further_pretrain`] warms a model
//! up on pair data with likelihood only, [`ibt_train`] runs iterative
//! back-translation between two unpaired corpora with self-critical
//! rewards, and [`offline_train`] fits a fresh model on the quality-gated
//! pairs that [`generate_pseudo_pairs`] / [`select_high_quality_pairs`]
//! distill from the back-translation stage.
//!
//! Every stage writes into a [`RunDir`]: `config.echo` (the exact settings
//! the caller resolved), `checkpoints/`, `pairs/`, and an append-only
//! `logs.tsv`. Given the same inputs, settings, and seed, a stage produces
//! byte-identical logs and checkpoints — all randomness flows from one
//! seeded generator, and nothing is sampled unless the settings call for
//! it.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::classifier::{ClassifierError, StyleClassifier};
use crate::corpus::{
    CorpusError, ReferenceSet, SentencePair, StyleId, StylePair, Utterance, SCORE_CONTENT,
    SCORE_STYLE_SRC, SCORE_STYLE_TGT,
};
use crate::metrics::{
    corpus_bleu, corpus_bleu_single, harmonic_mean, style_accuracy, LearnedMetric, MetricsError,
};
use crate::rewards::{total_reward, RewardBreakdown, RewardConfig, RewardError};
use crate::seq2seq::{LossTerm, ModelError, Seq2Seq};

/// Keep a pair when the mean of both style probabilities clears this.
pub const DEFAULT_SIGMA_PARAPHRASE: f64 = 0.85;
/// Content floor for distilled pairs.
pub const DEFAULT_SIGMA_CONTENT: f64 = 0.15;
/// Style floor (mean of source and transfer probabilities) for distilled
/// pairs.
pub const DEFAULT_SIGMA_STYLE: f64 = 0.9;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("nothing to work with: {what} is empty")]
    Empty { what: &'static str },
    #[error("training pairs mix directions: {found} after {expected}")]
    MixedDirections { expected: String, found: String },
    #[error("pair carries no {name:?} score; generate scored pairs first")]
    MissingScore { name: &'static str },
    #[error("bad option: {0}")]
    BadOptions(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `"{from}-to-{to}"` — the direction name used in logs and checkpoint
/// files.
pub fn direction_label(from: &StyleId, to: &StyleId) -> String {
    format!("{from}-to-{to}")
}

// ---------------------------------------------------------------------------
// Run directory
// ---------------------------------------------------------------------------

pub const LOG_COLUMNS: &str =
    "step\tdirection\tnll\tr_sc\tr_bleu\tr_learned\tvalid_acc\tvalid_bleu\tvalid_hm";

/// One `logs.tsv` line: training signal every step, validation scores only
/// on the steps where validation ran (blank otherwise).
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub direction: String,
    pub nll: f64,
    pub r_sc: f64,
    pub r_bleu: f64,
    pub r_learned: f64,
    pub valid_acc: Option<f64>,
    pub valid_bleu: Option<f64>,
    pub valid_hm: Option<f64>,
}

impl LogRow {
    fn new(step: usize, direction: String) -> LogRow {
        LogRow {
            step,
            direction,
            nll: 0.0,
            r_sc: 0.0,
            r_bleu: 0.0,
            r_learned: 0.0,
            valid_acc: None,
            valid_bleu: None,
            valid_hm: None,
        }
    }

    pub fn line(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|v| format!("{v:.6}")).unwrap_or_default()
        }
        format!(
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}",
            self.step,
            self.direction,
            self.nll,
            self.r_sc,
            self.r_bleu,
            self.r_learned,
            opt(self.valid_acc),
            opt(self.valid_bleu),
            opt(self.valid_hm),
        )
    }
}

/// A stage's output directory: `config.echo`, `checkpoints/`, `pairs/`,
/// `logs.tsv`, `report.tsv`. Creating one truncates any previous log so a
/// rerun starts clean.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<RunDir, PipelineError> {
        let root = root.into();
        for dir in [root.clone(), root.join("checkpoints"), root.join("pairs")] {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        let run = RunDir { root };
        let logs = run.logs_path();
        fs::write(&logs, format!("{LOG_COLUMNS}\n")).map_err(io_err(&logs))?;
        Ok(run)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn logs_path(&self) -> PathBuf {
        self.root.join("logs.tsv")
    }

    pub fn report_path(&self) -> PathBuf {
        self.root.join("report.tsv")
    }

    pub fn config_echo_path(&self) -> PathBuf {
        self.root.join("config.echo")
    }

    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.root.join("checkpoints").join(name)
    }

    pub fn pairs_file(&self, name: &str) -> PathBuf {
        self.root.join("pairs").join(name)
    }

    /// Records the fully resolved settings a stage actually ran with.
    pub fn write_config_echo(&self, text: &str) -> Result<(), PipelineError> {
        let path = self.config_echo_path();
        fs::write(&path, text).map_err(io_err(&path))
    }

    pub fn write_report(&self, text: &str) -> Result<(), PipelineError> {
        let path = self.report_path();
        fs::write(&path, text).map_err(io_err(&path))
    }

    pub fn append(&self, row: &LogRow) -> Result<(), PipelineError> {
        let path = self.logs_path();
        let mut file = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        writeln!(file, "{}", row.line()).map_err(io_err(&path))
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// What greedy outputs are scored against during validation: gold
/// references when the corpus has them, otherwise the sources themselves
/// (content preservation only).
#[derive(Debug, Clone)]
pub enum ValidationSet {
    References(Vec<ReferenceSet>),
    Sources(Vec<Utterance>),
}

impl ValidationSet {
    pub fn len(&self) -> usize {
        match self {
            ValidationSet::References(sets) => sets.len(),
            ValidationSet::Sources(sources) => sources.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn source_list(&self) -> Vec<&Utterance> {
        match self {
            ValidationSet::References(sets) => sets.iter().map(|set| &set.source).collect(),
            ValidationSet::Sources(sources) => sources.iter().collect(),
        }
    }

    fn bleu(&self, outputs: &[Utterance]) -> Result<f64, MetricsError> {
        match self {
            ValidationSet::References(sets) => corpus_bleu(outputs, sets),
            ValidationSet::Sources(sources) => corpus_bleu_single(outputs, sources),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionScores {
    pub acc: f64,
    pub bleu: f64,
    pub hm: f64,
}

/// Greedy-decodes the validation sources and scores the outputs: classifier
/// accuracy toward the target style, corpus BLEU, and their harmonic mean.
pub fn validate_direction<M: Seq2Seq>(
    model: &M,
    set: &ValidationSet,
    classifier: &StyleClassifier,
    target_style: &StyleId,
) -> Result<DirectionScores, PipelineError> {
    if set.is_empty() {
        return Err(PipelineError::Empty {
            what: "validation set",
        });
    }
    let outputs = set
        .source_list()
        .into_iter()
        .map(|source| model.greedy_decode(source))
        .collect::<Result<Vec<_>, _>>()?;
    let acc = style_accuracy(classifier, &outputs, target_style)?;
    let bleu = set.bleu(&outputs)?;
    Ok(DirectionScores {
        acc,
        bleu,
        hm: harmonic_mean(acc, bleu),
    })
}

// ---------------------------------------------------------------------------
// Rewards during training
// ---------------------------------------------------------------------------

/// Everything reward computation needs. The classifier is borrowed
/// immutably on purpose: it stays frozen while transfer models train.
pub struct RewardContext<'a> {
    pub config: RewardConfig,
    pub classifier: &'a StyleClassifier,
    pub metric: Option<&'a dyn LearnedMetric>,
}

impl RewardContext<'_> {
    fn active(&self) -> bool {
        self.config.any_enabled()
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct RewardSums {
    style: f64,
    bleu: f64,
    learned: f64,
    n: usize,
}

impl RewardSums {
    fn add(&mut self, b: &RewardBreakdown) {
        self.style += b.style;
        self.bleu += b.bleu;
        self.learned += b.learned;
        self.n += 1;
    }

    fn mean(&self) -> (f64, f64, f64) {
        if self.n == 0 {
            (0.0, 0.0, 0.0)
        } else {
            let n = self.n as f64;
            (self.style / n, self.bleu / n, self.learned / n)
        }
    }
}

// ---------------------------------------------------------------------------
// Supervised training (warm-up and distilled-pair fitting)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub batch_size: usize,
    pub epochs: usize,
    /// Validate every this many steps; 0 disables validation.
    pub validate_every: usize,
    /// Stop after this many validations without a new best harmonic mean;
    /// 0 trains to completion.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            batch_size: 32,
            epochs: 10,
            validate_every: 0,
            patience: 0,
            seed: 0,
        }
    }
}

impl TrainOptions {
    fn check(&self) -> Result<(), PipelineError> {
        if self.batch_size == 0 {
            return Err(PipelineError::BadOptions("batch_size must be > 0".into()));
        }
        if self.epochs == 0 {
            return Err(PipelineError::BadOptions("epochs must be > 0".into()));
        }
        Ok(())
    }
}

/// How a supervised stage validates: which held-out set, which classifier,
/// which style counts as success, and what to call the best checkpoint.
pub struct DirectionValidation<'a> {
    pub set: &'a ValidationSet,
    pub classifier: &'a StyleClassifier,
    pub target_style: StyleId,
    pub checkpoint_stem: String,
}

/// The best validated point of a training run and where its checkpoint
/// went.
#[derive(Debug, Clone)]
pub struct BestPoint {
    pub step: usize,
    pub scores: DirectionScores,
    pub path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub steps: usize,
    pub final_nll: f64,
    pub best: Option<BestPoint>,
}

fn single_direction(pairs: &[SentencePair]) -> Result<(StyleId, StyleId), PipelineError> {
    let expected = (pairs[0].source_style.clone(), pairs[0].target_style.clone());
    for pair in pairs {
        if pair.source_style != expected.0 || pair.target_style != expected.1 {
            return Err(PipelineError::MixedDirections {
                expected: direction_label(&expected.0, &expected.1),
                found: direction_label(&pair.source_style, &pair.target_style),
            });
        }
    }
    Ok(expected)
}

/// Fits a model on sentence pairs in one direction: per-batch likelihood,
/// plus a policy-gradient term per sampled output when rewards are given.
/// Logs one row per step and keeps the best validated checkpoint when a
/// validation setup is supplied.
pub fn offline_train<M: Seq2Seq>(
    model: &mut M,
    pairs: &[SentencePair],
    rewards: Option<&RewardContext>,
    valid: Option<&DirectionValidation>,
    opts: &TrainOptions,
    run: &RunDir,
) -> Result<TrainSummary, PipelineError> {
    opts.check()?;
    if pairs.is_empty() {
        return Err(PipelineError::Empty {
            what: "training pairs",
        });
    }
    if let Some(ctx) = rewards {
        ctx.config.validate()?;
    }
    let (src_style, tgt_style) = single_direction(pairs)?;
    let direction = direction_label(&src_style, &tgt_style);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut step = 0;
    let mut final_nll = 0.0;
    let mut best: Option<BestPoint> = None;
    let mut stale = 0;

    'training: for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(opts.batch_size) {
            step += 1;
            let batch: Vec<SentencePair> = chunk.iter().map(|&i| pairs[i].clone()).collect();

            // Sample once per pair and weight the sample's likelihood by
            // its reward; skipped entirely (no generator draws) when
            // rewards are off, so reward-free runs share a random stream.
            let mut sums = RewardSums::default();
            let mut sample_pairs = Vec::new();
            let mut sample_weights = Vec::new();
            if let Some(ctx) = rewards.filter(|ctx| ctx.active()) {
                for pair in &batch {
                    let outcome = model.sample_decode(&pair.source, rng.gen())?;
                    let breakdown = total_reward(
                        &ctx.config,
                        ctx.classifier,
                        ctx.metric,
                        &outcome,
                        &pair.source,
                        &pair.source_style,
                        &pair.target_style,
                    )?;
                    sums.add(&breakdown);
                    sample_weights.push(breakdown.total / batch.len() as f64);
                    sample_pairs.push(SentencePair::new(
                        pair.source.clone(),
                        outcome.sampled,
                        pair.source_style.clone(),
                        pair.target_style.clone(),
                    )?);
                }
            }

            let nll = model.nll_loss(&batch)?;
            final_nll = nll;
            let w = 1.0 / batch.len() as f64;
            let mut terms: Vec<LossTerm> =
                batch.iter().map(|pair| LossTerm { pair, weight: w }).collect();
            terms.extend(
                sample_pairs
                    .iter()
                    .zip(&sample_weights)
                    .map(|(pair, &weight)| LossTerm { pair, weight }),
            );
            model.train_step(&terms)?;

            let mut row = LogRow::new(step, direction.clone());
            row.nll = nll;
            (row.r_sc, row.r_bleu, row.r_learned) = sums.mean();

            let mut stop = false;
            if let Some(v) = valid {
                if opts.validate_every > 0 && step % opts.validate_every == 0 {
                    let scores = validate_direction(&*model, v.set, v.classifier, &v.target_style)?;
                    row.valid_acc = Some(scores.acc);
                    row.valid_bleu = Some(scores.bleu);
                    row.valid_hm = Some(scores.hm);
                    if best.as_ref().map_or(true, |b| scores.hm > b.scores.hm) {
                        let path = run.checkpoint(&format!("{}-best.ckpt", v.checkpoint_stem));
                        model.save(&path)?;
                        best = Some(BestPoint { step, scores, path });
                        stale = 0;
                    } else {
                        stale += 1;
                        stop = opts.patience > 0 && stale >= opts.patience;
                    }
                }
            }
            run.append(&row)?;
            if stop {
                break 'training;
            }
        }
    }
    Ok(TrainSummary {
        steps: step,
        final_nll,
        best,
    })
}

/// Warm-up on pair data before back-translation: likelihood only. The
/// sampling generator is never touched, so the step stream is identical to
/// any other reward-free run over the same pairs.
pub fn further_pretrain<M: Seq2Seq>(
    model: &mut M,
    pairs: &[SentencePair],
    valid: Option<&DirectionValidation>,
    opts: &TrainOptions,
    run: &RunDir,
) -> Result<TrainSummary, PipelineError> {
    offline_train(model, pairs, None, valid, opts, run)
}

// ---------------------------------------------------------------------------
// Iterative back-translation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct IbtOptions {
    pub steps: usize,
    pub batch_size: usize,
    /// Consecutive batches each direction trains on before the switch.
    pub batches_per_direction: usize,
    /// Validate every this many steps; 0 disables validation.
    pub validate_every: usize,
    /// Stop after this many validations without a better mean harmonic
    /// mean across directions; 0 runs all steps.
    pub patience: usize,
    /// Reward the model under supervision for its own samples.
    pub sc0: bool,
    /// Reward the generator while it produces pseudo sources.
    pub sc1: bool,
    pub seed: u64,
}

impl Default for IbtOptions {
    fn default() -> Self {
        IbtOptions {
            steps: 100,
            batch_size: 8,
            batches_per_direction: 1,
            validate_every: 0,
            patience: 0,
            sc0: true,
            sc1: true,
            seed: 0,
        }
    }
}

impl IbtOptions {
    fn check(&self) -> Result<(), PipelineError> {
        for (name, value) in [
            ("steps", self.steps),
            ("batch_size", self.batch_size),
            ("batches_per_direction", self.batches_per_direction),
        ] {
            if value == 0 {
                return Err(PipelineError::BadOptions(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }
}

/// The unpaired corpora and optional per-direction validation sets.
/// `valid_a` holds style-A sources judged toward style B, and vice versa.
pub struct IbtData<'a> {
    pub corpus_a: &'a [Utterance],
    pub corpus_b: &'a [Utterance],
    pub valid_a: Option<&'a ValidationSet>,
    pub valid_b: Option<&'a ValidationSet>,
}

#[derive(Debug, Clone)]
pub struct DirectionOutcome {
    pub label: String,
    pub best: Option<BestPoint>,
    pub final_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct IbtSummary {
    pub steps_run: usize,
    pub a2b: DirectionOutcome,
    pub b2a: DirectionOutcome,
}

#[derive(Debug, Default)]
struct DirectionStats {
    nll: f64,
    style: f64,
    bleu: f64,
    learned: f64,
    skipped: usize,
    batches: usize,
}

impl DirectionStats {
    fn merge(&mut self, other: DirectionStats) {
        self.nll += other.nll;
        self.style += other.style;
        self.bleu += other.bleu;
        self.learned += other.learned;
        self.skipped += other.skipped;
        self.batches += 1;
    }

    fn fill(&self, row: &mut LogRow) {
        let n = self.batches.max(1) as f64;
        row.nll = self.nll / n;
        row.r_sc = self.style / n;
        row.r_bleu = self.bleu / n;
        row.r_learned = self.learned / n;
    }
}

/// Endless shuffled index stream over one corpus; reshuffles whenever a
/// pass is exhausted.
struct Batcher {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Batcher {
    fn new(n: usize, seed: u64) -> Batcher {
        let mut batcher = Batcher {
            order: (0..n).collect(),
            pos: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        batcher.reshuffle();
        batcher
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.pos = 0;
    }

    fn next(&mut self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            if self.pos == self.order.len() {
                self.reshuffle();
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// One half of a back-translation step. The generator turns genuine
/// sentences of the consumer's target style into pseudo sources (learning
/// from its own samples when `sc1`), then the consumer takes a supervised
/// step on (pseudo source → genuine target), with reward-weighted sample
/// terms added when `sc0`. Empty generator outputs are dropped from the
/// consumer batch.
fn ibt_direction_pass<M: Seq2Seq>(
    consumer: &mut M,
    generator: &mut M,
    targets: &[&Utterance],
    src_style: &StyleId,
    tgt_style: &StyleId,
    ctx: &RewardContext,
    sc0: bool,
    sc1: bool,
    rng: &mut ChaCha8Rng,
) -> Result<DirectionStats, PipelineError> {
    let mut sums = RewardSums::default();

    let run_sc1 = sc1 && ctx.active();
    let mut pseudo_sources = Vec::with_capacity(targets.len());
    let mut gen_samples = Vec::new();
    let mut gen_weights = Vec::new();
    for y in targets {
        if run_sc1 {
            let outcome = generator.sample_decode(y, rng.gen())?;
            let breakdown = total_reward(
                &ctx.config,
                ctx.classifier,
                ctx.metric,
                &outcome,
                y,
                tgt_style,
                src_style,
            )?;
            sums.add(&breakdown);
            gen_weights.push(breakdown.total / targets.len() as f64);
            gen_samples.push(SentencePair::new(
                (*y).clone(),
                outcome.sampled,
                tgt_style.clone(),
                src_style.clone(),
            )?);
            pseudo_sources.push(outcome.greedy);
        } else {
            pseudo_sources.push(generator.greedy_decode(y)?);
        }
    }
    if !gen_samples.is_empty() {
        let terms: Vec<LossTerm> = gen_samples
            .iter()
            .zip(&gen_weights)
            .map(|(pair, &weight)| LossTerm { pair, weight })
            .collect();
        generator.train_step(&terms)?;
    }

    let mut kept = Vec::new();
    let mut skipped = 0;
    for (y, x) in targets.iter().zip(pseudo_sources) {
        if x.tokens.is_empty() {
            skipped += 1;
        } else {
            kept.push(SentencePair::new(
                x,
                (*y).clone(),
                src_style.clone(),
                tgt_style.clone(),
            )?);
        }
    }
    if kept.is_empty() {
        log::warn!(
            "{}: every pseudo source came back empty; batch skipped",
            direction_label(src_style, tgt_style)
        );
        let (style, bleu, learned) = sums.mean();
        return Ok(DirectionStats {
            nll: 0.0,
            style,
            bleu,
            learned,
            skipped,
            batches: 0,
        });
    }

    let run_sc0 = sc0 && ctx.active();
    let mut sc0_samples = Vec::new();
    let mut sc0_weights = Vec::new();
    if run_sc0 {
        for pair in &kept {
            let outcome = consumer.sample_decode(&pair.source, rng.gen())?;
            let breakdown = total_reward(
                &ctx.config,
                ctx.classifier,
                ctx.metric,
                &outcome,
                &pair.source,
                src_style,
                tgt_style,
            )?;
            sums.add(&breakdown);
            sc0_weights.push(breakdown.total / kept.len() as f64);
            sc0_samples.push(SentencePair::new(
                pair.source.clone(),
                outcome.sampled,
                src_style.clone(),
                tgt_style.clone(),
            )?);
        }
    }

    let nll = consumer.nll_loss(&kept)?;
    let w = 1.0 / kept.len() as f64;
    let mut terms: Vec<LossTerm> =
        kept.iter().map(|pair| LossTerm { pair, weight: w }).collect();
    terms.extend(
        sc0_samples
            .iter()
            .zip(&sc0_weights)
            .map(|(pair, &weight)| LossTerm { pair, weight }),
    );
    consumer.train_step(&terms)?;

    let (style, bleu, learned) = sums.mean();
    Ok(DirectionStats {
        nll,
        style,
        bleu,
        learned,
        skipped,
        batches: 0,
    })
}

/// Iterative back-translation over two unpaired corpora. Each step trains
/// A→B on pseudo pairs built by B→A and then the reverse, logging one row
/// per direction per step. The best checkpoint per direction (by validation
/// harmonic mean) and the final state of both models are written under
/// `checkpoints/`; when validation ran, the models are left rewound to
/// their best state.
pub fn ibt_train<M: Seq2Seq>(
    a2b: &mut M,
    b2a: &mut M,
    styles: &StylePair,
    data: &IbtData,
    rewards: &RewardContext,
    opts: &IbtOptions,
    run: &RunDir,
) -> Result<IbtSummary, PipelineError> {
    opts.check()?;
    rewards.config.validate()?;
    if data.corpus_a.is_empty() {
        return Err(PipelineError::Empty {
            what: "style-A corpus",
        });
    }
    if data.corpus_b.is_empty() {
        return Err(PipelineError::Empty {
            what: "style-B corpus",
        });
    }

    let label_ab = direction_label(&styles.s1, &styles.s2);
    let label_ba = direction_label(&styles.s2, &styles.s1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut batcher_a = Batcher::new(data.corpus_a.len(), rng.gen());
    let mut batcher_b = Batcher::new(data.corpus_b.len(), rng.gen());

    let mut best_ab: Option<BestPoint> = None;
    let mut best_ba: Option<BestPoint> = None;
    let mut best_mean = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut steps_run = 0;

    for step in 1..=opts.steps {
        steps_run = step;

        let mut stats_ab = DirectionStats::default();
        for _ in 0..opts.batches_per_direction {
            let batch: Vec<&Utterance> = batcher_b
                .next(opts.batch_size)
                .into_iter()
                .map(|i| &data.corpus_b[i])
                .collect();
            stats_ab.merge(ibt_direction_pass(
                a2b, b2a, &batch, &styles.s1, &styles.s2, rewards, opts.sc0, opts.sc1, &mut rng,
            )?);
        }
        let mut stats_ba = DirectionStats::default();
        for _ in 0..opts.batches_per_direction {
            let batch: Vec<&Utterance> = batcher_a
                .next(opts.batch_size)
                .into_iter()
                .map(|i| &data.corpus_a[i])
                .collect();
            stats_ba.merge(ibt_direction_pass(
                b2a, a2b, &batch, &styles.s2, &styles.s1, rewards, opts.sc0, opts.sc1, &mut rng,
            )?);
        }
        if stats_ab.skipped + stats_ba.skipped > 0 {
            log::warn!(
                "step {step}: dropped {} empty pseudo sources",
                stats_ab.skipped + stats_ba.skipped
            );
        }

        let mut row_ab = LogRow::new(step, label_ab.clone());
        stats_ab.fill(&mut row_ab);
        let mut row_ba = LogRow::new(step, label_ba.clone());
        stats_ba.fill(&mut row_ba);

        let mut stop = false;
        if opts.validate_every > 0 && step % opts.validate_every == 0 {
            let mut hms = Vec::new();
            if let Some(set) = data.valid_a {
                let scores = validate_direction(&*a2b, set, rewards.classifier, &styles.s2)?;
                row_ab.valid_acc = Some(scores.acc);
                row_ab.valid_bleu = Some(scores.bleu);
                row_ab.valid_hm = Some(scores.hm);
                hms.push(scores.hm);
                if best_ab.as_ref().map_or(true, |b| scores.hm > b.scores.hm) {
                    let path = run.checkpoint(&format!("{label_ab}-best.ckpt"));
                    a2b.save(&path)?;
                    best_ab = Some(BestPoint { step, scores, path });
                }
            }
            if let Some(set) = data.valid_b {
                let scores = validate_direction(&*b2a, set, rewards.classifier, &styles.s1)?;
                row_ba.valid_acc = Some(scores.acc);
                row_ba.valid_bleu = Some(scores.bleu);
                row_ba.valid_hm = Some(scores.hm);
                hms.push(scores.hm);
                if best_ba.as_ref().map_or(true, |b| scores.hm > b.scores.hm) {
                    let path = run.checkpoint(&format!("{label_ba}-best.ckpt"));
                    b2a.save(&path)?;
                    best_ba = Some(BestPoint { step, scores, path });
                }
            }
            if !hms.is_empty() {
                let mean = hms.iter().sum::<f64>() / hms.len() as f64;
                if mean > best_mean {
                    best_mean = mean;
                    stale = 0;
                } else {
                    stale += 1;
                    stop = opts.patience > 0 && stale >= opts.patience;
                }
            }
        }

        run.append(&row_ab)?;
        run.append(&row_ba)?;
        if stop {
            break;
        }
    }

    let final_ab = run.checkpoint(&format!("{label_ab}-final.ckpt"));
    a2b.save(&final_ab)?;
    let final_ba = run.checkpoint(&format!("{label_ba}-final.ckpt"));
    b2a.save(&final_ba)?;
    if let Some(best) = &best_ab {
        a2b.restore(&best.path)?;
    }
    if let Some(best) = &best_ba {
        b2a.restore(&best.path)?;
    }

    Ok(IbtSummary {
        steps_run,
        a2b: DirectionOutcome {
            label: label_ab,
            best: best_ab,
            final_path: final_ab,
        },
        b2a: DirectionOutcome {
            label: label_ba,
            best: best_ba,
            final_path: final_ba,
        },
    })
}

// ---------------------------------------------------------------------------
// Pair distillation
// ---------------------------------------------------------------------------

/// Greedy-transfers every source and scores each (source, transfer) pair:
/// `content` from the given metric (transfer judged against its source),
/// `style_src` / `style_tgt` from the frozen classifier. Empty transfers
/// are dropped; the count of drops is returned alongside the pairs.
pub fn generate_pseudo_pairs<M: Seq2Seq>(
    model: &M,
    sources: &[Utterance],
    source_style: &StyleId,
    target_style: &StyleId,
    classifier: &StyleClassifier,
    content_metric: &dyn LearnedMetric,
) -> Result<(Vec<SentencePair>, usize), PipelineError> {
    let mut kept: Vec<(&Utterance, Utterance)> = Vec::new();
    let mut skipped = 0;
    for source in sources {
        let transfer = model.greedy_decode(source)?;
        if transfer.tokens.is_empty() {
            skipped += 1;
        } else {
            kept.push((source, transfer));
        }
    }
    if skipped > 0 {
        log::warn!("dropped {skipped} empty transfers out of {}", sources.len());
    }
    let queries: Vec<(&Utterance, &Utterance)> =
        kept.iter().map(|(source, transfer)| (transfer, *source)).collect();
    let content = content_metric.score_batch(&queries)?;

    let mut pairs = Vec::with_capacity(kept.len());
    for ((source, transfer), content) in kept.into_iter().zip(content) {
        let style_src = classifier.prob(source, source_style)?;
        let style_tgt = classifier.prob(&transfer, target_style)?;
        let scores = BTreeMap::from([
            (SCORE_CONTENT.to_string(), content),
            (SCORE_STYLE_SRC.to_string(), style_src),
            (SCORE_STYLE_TGT.to_string(), style_tgt),
        ]);
        pairs.push(
            SentencePair::new(
                source.clone(),
                transfer,
                source_style.clone(),
                target_style.clone(),
            )?
            .with_scores(scores)?,
        );
    }
    Ok((pairs, skipped))
}

/// Keeps the pairs whose content score exceeds `sigma_content` and whose
/// mean style probability exceeds `sigma_style` — both strictly. Errors if
/// any pair lacks the required scores.
pub fn select_high_quality_pairs(
    pairs: &[SentencePair],
    sigma_content: f64,
    sigma_style: f64,
) -> Result<Vec<SentencePair>, PipelineError> {
    let mut selected = Vec::new();
    for pair in pairs {
        let need = |name: &'static str| {
            pair.score(name)
                .ok_or(PipelineError::MissingScore { name })
        };
        let content = need(SCORE_CONTENT)?;
        let style_src = need(SCORE_STYLE_SRC)?;
        let style_tgt = need(SCORE_STYLE_TGT)?;
        if content > sigma_content && 0.5 * (style_src + style_tgt) > sigma_style {
            selected.push(pair.clone());
        }
    }
    Ok(selected)
}

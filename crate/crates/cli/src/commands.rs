//! One function per subcommand. Each resolves its settings, does the work
//! through the library, echoes the resolved settings into the run
//! directory when it owns one, and prints a short summary to stdout.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use restyle_core::classifier::StyleClassifier;
use restyle_core::corpus::{
    self, LabeledUtterance, SentencePair, StyleId, StylePair, Utterance, Vocab,
};
use restyle_core::lexicon::{build_synthetic_corpus, AntonymMap, PolarityLexicon};
use restyle_core::metrics::{evaluate_system, pearson, report_table, report_tsv};
use restyle_core::pipeline::{
    direction_label, further_pretrain, generate_pseudo_pairs, ibt_train, offline_train,
    select_high_quality_pairs, DirectionValidation, IbtData, RewardContext, RunDir,
    ValidationSet,
};
use restyle_core::seq2seq::{Seq2Seq, TinyTransformer};

use crate::settings::{ConfigArgs, Settings};

fn style(name: &str) -> StyleId {
    StyleId::new(name)
}

fn load_model(path: &Path) -> Result<TinyTransformer> {
    TinyTransformer::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_classifier(path: &Path) -> Result<StyleClassifier> {
    StyleClassifier::load(path)
        .with_context(|| format!("loading classifier {}", path.display()))
}

fn load_sentences(path: &Path, style: &StyleId, settings: &Settings) -> Result<Vec<Utterance>> {
    let data = corpus::load_unpaired(path, style, &settings.tokenizer())
        .with_context(|| format!("loading {}", path.display()))?;
    Ok(data
        .unpaired()
        .expect("unpaired loader")
        .iter()
        .map(|item| item.utterance.clone())
        .collect())
}

fn load_pair_file(
    path: &Path,
    from: &StyleId,
    to: &StyleId,
    settings: &Settings,
) -> Result<Vec<SentencePair>> {
    let data = corpus::load_pairs(path, from, to, &settings.tokenizer())
        .with_context(|| format!("loading {}", path.display()))?;
    Ok(data.pairs().expect("pair loader").to_vec())
}

/// References when `refs` were given, plain sources otherwise.
fn load_validation(
    sources: &Path,
    refs: &[PathBuf],
    style: &StyleId,
    settings: &Settings,
) -> Result<ValidationSet> {
    if refs.is_empty() {
        Ok(ValidationSet::Sources(load_sentences(sources, style, settings)?))
    } else {
        let data = corpus::load_references(sources, refs, &settings.tokenizer())
            .with_context(|| format!("loading {}", sources.display()))?;
        Ok(ValidationSet::References(
            data.references().expect("reference loader").to_vec(),
        ))
    }
}

fn vocab_from<'a>(
    sentences: impl Iterator<Item = &'a Utterance>,
    settings: &Settings,
) -> Vocab {
    Vocab::build(sentences, settings.vocab_size)
}

fn fresh_model(settings: &Settings, vocab: Vocab, seed: u64) -> Result<TinyTransformer> {
    let mut config = settings.model_config()?;
    config.seed = seed;
    Ok(TinyTransformer::new(config, vocab))
}

fn start_run(out: &Path, settings: &Settings) -> Result<RunDir> {
    let run = RunDir::create(out)?;
    run.write_config_echo(&settings.echo())?;
    Ok(run)
}

// ---------------------------------------------------------------------------
// make-pairs
// ---------------------------------------------------------------------------

/// Build synthetic training pairs by swapping single polarity words for
/// their antonyms.
#[derive(Debug, Args)]
pub struct MakePairsArgs {
    /// Unpaired sentences, one per line
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Style of the input sentences
    #[arg(long, value_name = "STYLE")]
    from: String,
    /// Style the swapped sentences belong to
    #[arg(long, value_name = "STYLE")]
    to: String,
    /// Polarity lexicon: `word<TAB>positive<TAB>negative`
    #[arg(long, value_name = "FILE")]
    lexicon: PathBuf,
    /// Antonym table: `word<TAB>antonym[,antonym...]`
    #[arg(long, value_name = "FILE")]
    antonyms: PathBuf,
    /// Absolute polarity a word needs to count as a style carrier
    #[arg(long, default_value_t = restyle_core::lexicon::DEFAULT_POLARITY_CUTOFF)]
    cutoff: f64,
    /// Output TSV of `source<TAB>target`
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

pub fn make_pairs(args: &MakePairsArgs) -> Result<()> {
    let settings = args.config.resolve()?;
    let from = style(&args.from);
    let to = style(&args.to);
    let styles = StylePair::new(from.clone(), to);
    let data = corpus::load_unpaired(&args.input, &from, &settings.tokenizer())
        .with_context(|| format!("loading {}", args.input.display()))?;
    let items = data.unpaired().expect("unpaired loader");
    let lexicon = PolarityLexicon::load(&args.lexicon)?;
    let antonyms = AntonymMap::load(&args.antonyms)?;
    let pairs = build_synthetic_corpus(items, &styles, &lexicon, &antonyms, args.cutoff);
    corpus::write_pairs(&pairs, &args.out)?;
    println!(
        "wrote {} pairs from {} sentences to {}",
        pairs.len(),
        items.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// filter-paraphrases
// ---------------------------------------------------------------------------

/// Keep the pairs whose two sides both look like their declared styles.
#[derive(Debug, Args)]
pub struct FilterParaphrasesArgs {
    /// Pair TSV to filter
    #[arg(long, value_name = "FILE")]
    pairs: PathBuf,
    #[arg(long, value_name = "STYLE")]
    from: String,
    #[arg(long, value_name = "STYLE")]
    to: String,
    /// Trained style classifier checkpoint
    #[arg(long, value_name = "FILE")]
    classifier: PathBuf,
    /// Output TSV for the surviving pairs
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

pub fn filter_paraphrases(args: &FilterParaphrasesArgs) -> Result<()> {
    let settings = args.config.resolve()?;
    let pairs = load_pair_file(&args.pairs, &style(&args.from), &style(&args.to), &settings)?;
    let classifier = load_classifier(&args.classifier)?;
    let kept = classifier.filter_paraphrases(&pairs, settings.sigma)?;
    corpus::write_pairs(&kept, &args.out)?;
    println!(
        "kept {} of {} pairs at sigma {} -> {}",
        kept.len(),
        pairs.len(),
        settings.sigma,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train-classifier
// ---------------------------------------------------------------------------

/// Train the convolutional style classifier on two unpaired corpora.
#[derive(Debug, Args)]
pub struct TrainClassifierArgs {
    /// Sentences of the first style
    #[arg(long, value_name = "FILE")]
    corpus_a: PathBuf,
    /// Sentences of the second style
    #[arg(long, value_name = "FILE")]
    corpus_b: PathBuf,
    #[arg(long, value_name = "STYLE")]
    style_a: String,
    #[arg(long, value_name = "STYLE")]
    style_b: String,
    /// Held-out sentences of the first style for an accuracy report
    #[arg(long, value_name = "FILE")]
    valid_a: Option<PathBuf>,
    /// Held-out sentences of the second style
    #[arg(long, value_name = "FILE")]
    valid_b: Option<PathBuf>,
    /// Where to write the classifier checkpoint
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

fn labeled(path: &Path, s: &StyleId, settings: &Settings) -> Result<Vec<LabeledUtterance>> {
    Ok(load_sentences(path, s, settings)?
        .into_iter()
        .map(|utterance| LabeledUtterance {
            utterance,
            style: s.clone(),
        })
        .collect())
}

pub fn train_classifier(args: &TrainClassifierArgs) -> Result<()> {
    let settings = args.config.resolve()?;
    let sa = style(&args.style_a);
    let sb = style(&args.style_b);
    let mut data = labeled(&args.corpus_a, &sa, &settings)?;
    data.extend(labeled(&args.corpus_b, &sb, &settings)?);
    let classifier = StyleClassifier::train(
        settings.classifier_config(),
        &data,
        StylePair::new(sa.clone(), sb.clone()),
    )?;
    classifier.save(&args.out)?;
    println!(
        "trained on {} sentences -> {}",
        data.len(),
        args.out.display()
    );
    if let (Some(va), Some(vb)) = (&args.valid_a, &args.valid_b) {
        let mut valid = labeled(va, &sa, &settings)?;
        valid.extend(labeled(vb, &sb, &settings)?);
        println!("validation accuracy {:.6}", classifier.accuracy(&valid));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// pretrain
// ---------------------------------------------------------------------------

/// Warm a transfer model up on pair data with likelihood only.
#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Training pairs (`source<TAB>target`)
    #[arg(long, value_name = "FILE")]
    pairs: PathBuf,
    #[arg(long, value_name = "STYLE")]
    from: String,
    #[arg(long, value_name = "STYLE")]
    to: String,
    /// Continue from this checkpoint instead of a fresh model
    #[arg(long, value_name = "FILE")]
    init: Option<PathBuf>,
    /// Run directory for logs and checkpoints
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

pub fn pretrain(args: &PretrainArgs) -> Result<()> {
    let settings = args.config.resolve()?;
    let from = style(&args.from);
    let to = style(&args.to);
    let pairs = load_pair_file(&args.pairs, &from, &to, &settings)?;
    let mut model = match &args.init {
        Some(path) => load_model(path)?,
        None => {
            let vocab = vocab_from(
                pairs.iter().flat_map(|p| [&p.source, &p.target]),
                &settings,
            );
            fresh_model(&settings, vocab, settings.seed)?
        }
    };
    let run = start_run(&args.out, &settings)?;
    let summary = further_pretrain(&mut model, &pairs, None, &settings.train_options(), &run)?;
    let ckpt = run.checkpoint(&format!("{}-pretrained.ckpt", direction_label(&from, &to)));
    model.save(&ckpt)?;
    println!(
        "pretrained on {} pairs for {} steps, final nll {:.6} -> {}",
        pairs.len(),
        summary.steps,
        summary.final_nll,
        ckpt.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// ibt-train
// ---------------------------------------------------------------------------

/// Iterative back-translation between two unpaired corpora, with
/// self-critical rewards from a frozen classifier.
#[derive(Debug, Args)]
pub struct IbtTrainArgs {
    /// Unpaired sentences of the first style
    #[arg(long, value_name = "FILE")]
    corpus_a: PathBuf,
    /// Unpaired sentences of the second style
    #[arg(long, value_name = "FILE")]
    corpus_b: PathBuf,
    #[arg(long, value_name = "STYLE")]
    style_a: String,
    #[arg(long, value_name = "STYLE")]
    style_b: String,
    /// Starting checkpoint for the A→B model (fresh when omitted)
    #[arg(long, value_name = "FILE")]
    init_a2b: Option<PathBuf>,
    /// Starting checkpoint for the B→A model (fresh when omitted)
    #[arg(long, value_name = "FILE")]
    init_b2a: Option<PathBuf>,
    /// Frozen style classifier used for rewards and validation
    #[arg(long, value_name = "FILE")]
    classifier: PathBuf,
    /// Validation sources in style A
    #[arg(long, value_name = "FILE")]
    valid_a_sources: Option<PathBuf>,
    /// Reference files for the A validation sources (repeatable)
    #[arg(long, value_name = "FILE")]
    valid_a_refs: Vec<PathBuf>,
    /// Validation sources in style B
    #[arg(long, value_name = "FILE")]
    valid_b_sources: Option<PathBuf>,
    /// Reference files for the B validation sources (repeatable)
    #[arg(long, value_name = "FILE")]
    valid_b_refs: Vec<PathBuf>,
    /// Run directory for logs and checkpoints
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

pub fn ibt_trained(args: &IbtTrainArgs) -> Result<()> {
    let settings = args.config.resolve()?;
    let sa = style(&args.style_a);
    let sb = style(&args.style_b);
    let styles = StylePair::new(sa.clone(), sb.clone());
    let corpus_a = load_sentences(&args.corpus_a, &sa, &settings)?;
    let corpus_b = load_sentences(&args.corpus_b, &sb, &settings)?;

    let mut a2b = match &args.init_a2b {
        Some(path) => load_model(path)?,
        None => {
            let vocab = vocab_from(corpus_a.iter().chain(&corpus_b), &settings);
            fresh_model(&settings, vocab, settings.seed)?
        }
    };
    let mut b2a = match &args.init_b2a {
        Some(path) => load_model(path)?,
        None => {
            let vocab = vocab_from(corpus_a.iter().chain(&corpus_b), &settings);
            fresh_model(&settings, vocab, settings.seed.wrapping_add(1))?
        }
    };

    let classifier = load_classifier(&args.classifier)?;
    let metric = settings.metric()?;
    let rewards = RewardContext {
        config: settings.reward_config()?,
        classifier: &classifier,
        metric: metric.as_deref(),
    };

    let valid_a = args
        .valid_a_sources
        .as_deref()
        .map(|src| load_validation(src, &args.valid_a_refs, &sa, &settings))
        .transpose()?;
    let valid_b = args
        .valid_b_sources
        .as_deref()
        .map(|src| load_validation(src, &args.valid_b_refs, &sb, &settings))
        .transpose()?;

    let run = start_run(&args.out, &settings)?;
    let summary = ibt_train(
        &mut a2b,
        &mut b2a,
        &styles,
        &IbtData {
            corpus_a: &corpus_a,
            corpus_b: &corpus_b,
            valid_a: valid_a.as_ref(),
            valid_b: valid_b.as_ref(),
        },
        &rewards,
        &settings.ibt_options(),
        &run,
    )?;

    println!("ran {} back-translation steps", summary.steps_run);
    for outcome in [&summary.a2b, &summary.b2a] {
        match &outcome.best {
            Some(best) => println!(
                "{}: best hm {:.6} (acc {:.6}, bleu {:.6}) at step {} -> {}",
                outcome.label,
                best.scores.hm,
                best.scores.acc,
                best.scores.bleu,
                best.step,
                best.path.display()
            ),
            None => println!(
                "{}: final -> {}",
                outcome.label,
                outcome.final_path.display()
            ),
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

/// Greedy-transfer sentences with a trained model, one output line per
/// input line.
#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Model checkpoint
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Input sentences, one per line
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Output file (one transfer per input line)
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let settings = args.config.resolve()?;
    let model = load_model(&args.model)?;
    // the style label is irrelevant for decoding; any placeholder works
    let sources = load_sentences(&args.input, &style("source"), &settings)?;
    let mut out = String::new();
    for source in &sources {
        let transfer = model.greedy_decode(source)?;
        out.push_str(&transfer.detokenize());
        out.push('\n');
    }
    fs::write(&args.out, out).with_context(|| format!("writing {}", args.out.display()))?;
    println!("transferred {} sentences -> {}", sources.len(), args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// select-pairs
// ---------------------------------------------------------------------------

/// Transfer a corpus, score every (source, transfer) pair, and keep the
/// high-quality ones for offline training.
#[derive(Debug, Args)]
pub struct SelectPairsArgs {
    /// Transfer model checkpoint
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Frozen style classifier checkpoint
    #[arg(long, value_name = "FILE")]
    classifier: PathBuf,
    /// Source sentences, one per line
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    #[arg(long, value_name = "STYLE")]
    from: String,
    #[arg(long, value_name = "STYLE")]
    to: String,
    /// Run directory; writes pairs/scored.tsv and pairs/selected.tsv
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

pub fn select_pairs(args: &SelectPairsArgs) -> Result<()> {
    let settings = args.config.resolve()?;
    let from = style(&args.from);
    let to = style(&args.to);
    let model = load_model(&args.model)?;
    let classifier = load_classifier(&args.classifier)?;
    let metric = settings
        .metric()?
        .context("select-pairs needs a content metric; set learned_metric to desk or external:<cmd>")?;
    let sources = load_sentences(&args.input, &from, &settings)?;

    let run = start_run(&args.out, &settings)?;
    let (scored, skipped) =
        generate_pseudo_pairs(&model, &sources, &from, &to, &classifier, metric.as_ref())?;
    let scored_path = run.pairs_file("scored.tsv");
    corpus::write_scored_pairs(&scored, &scored_path)?;
    let selected = select_high_quality_pairs(&scored, settings.sigma_c, settings.sigma_s)?;
    let selected_path = run.pairs_file("selected.tsv");
    corpus::write_pairs(&selected, &selected_path)?;
    println!(
        "scored {} transfers ({} empty dropped) -> {}",
        scored.len(),
        skipped,
        scored_path.display()
    );
    println!(
        "selected {} pairs at sigma_c {} / sigma_s {} -> {}",
        selected.len(),
        settings.sigma_c,
        settings.sigma_s,
        selected_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train-offline
// ---------------------------------------------------------------------------

/// Fit a model on selected pairs, starting from the warm-up checkpoint
/// rather than the back-translated one.
#[derive(Debug, Args)]
pub struct TrainOfflineArgs {
    /// Selected pairs (`source<TAB>target`)
    #[arg(long, value_name = "FILE")]
    pairs: PathBuf,
    #[arg(long, value_name = "STYLE")]
    from: String,
    #[arg(long, value_name = "STYLE")]
    to: String,
    /// Checkpoint to start from — typically the pretrain stage output
    #[arg(long, value_name = "FILE")]
    base: PathBuf,
    /// Frozen style classifier for rewards and validation
    #[arg(long, value_name = "FILE")]
    classifier: PathBuf,
    /// Validation sources in the `from` style
    #[arg(long, value_name = "FILE")]
    valid_sources: Option<PathBuf>,
    /// Reference files for the validation sources (repeatable)
    #[arg(long, value_name = "FILE")]
    valid_refs: Vec<PathBuf>,
    /// Run directory for logs and checkpoints
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

pub fn train_offline(args: &TrainOfflineArgs) -> Result<()> {
    let settings = args.config.resolve()?;
    let from = style(&args.from);
    let to = style(&args.to);
    let pairs = load_pair_file(&args.pairs, &from, &to, &settings)?;
    let mut model = load_model(&args.base)?;
    let classifier = load_classifier(&args.classifier)?;
    let metric = settings.metric()?;
    let rewards = RewardContext {
        config: settings.reward_config()?,
        classifier: &classifier,
        metric: metric.as_deref(),
    };
    let label = direction_label(&from, &to);

    let valid_set = args
        .valid_sources
        .as_deref()
        .map(|src| load_validation(src, &args.valid_refs, &from, &settings))
        .transpose()?;
    let valid = valid_set.as_ref().map(|set| DirectionValidation {
        set,
        classifier: &classifier,
        target_style: to.clone(),
        checkpoint_stem: format!("{label}-offline"),
    });

    let run = start_run(&args.out, &settings)?;
    let summary = offline_train(
        &mut model,
        &pairs,
        Some(&rewards),
        valid.as_ref(),
        &settings.train_options(),
        &run,
    )?;
    let ckpt = run.checkpoint(&format!("{label}-offline-final.ckpt"));
    model.save(&ckpt)?;
    println!(
        "trained on {} pairs for {} steps, final nll {:.6} -> {}",
        pairs.len(),
        summary.steps,
        summary.final_nll,
        ckpt.display()
    );
    if let Some(best) = summary.best {
        println!(
            "best hm {:.6} at step {} -> {}",
            best.scores.hm,
            best.step,
            best.path.display()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

/// Score a system against references: style accuracy, BLEU, harmonic mean,
/// and optionally a learned content metric.
#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Model checkpoint to decode with
    #[arg(long, value_name = "FILE", conflicts_with = "outputs")]
    model: Option<PathBuf>,
    /// Pre-generated outputs, one per source line (instead of --model)
    #[arg(long, value_name = "FILE")]
    outputs: Option<PathBuf>,
    /// Source sentences
    #[arg(long, value_name = "FILE")]
    sources: PathBuf,
    /// Reference files, aligned line by line (repeatable)
    #[arg(long = "refs", value_name = "FILE", required = true)]
    refs: Vec<PathBuf>,
    /// Frozen style classifier
    #[arg(long, value_name = "FILE")]
    classifier: PathBuf,
    /// Target style the outputs should be in
    #[arg(long, value_name = "STYLE")]
    to: String,
    /// Label for the report row
    #[arg(long, default_value = "system")]
    system: String,
    /// Run directory; writes report.tsv
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let settings = args.config.resolve()?;
    let to = style(&args.to);
    let data = corpus::load_references(&args.sources, &args.refs, &settings.tokenizer())
        .with_context(|| format!("loading {}", args.sources.display()))?;
    let references = data.references().expect("reference loader");

    let outputs: Vec<Utterance> = match (&args.model, &args.outputs) {
        (Some(model_path), None) => {
            let model = load_model(model_path)?;
            references
                .iter()
                .map(|set| model.greedy_decode(&set.source))
                .collect::<Result<_, _>>()?
        }
        (None, Some(path)) => load_sentences(path, &to, &settings)?,
        _ => bail!("pass exactly one of --model or --outputs"),
    };

    let classifier = load_classifier(&args.classifier)?;
    let metric = settings.metric()?;
    let report = evaluate_system(&outputs, references, &classifier, &to, metric.as_deref())?;
    let rows = vec![(args.system.clone(), report)];

    let run = start_run(&args.out, &settings)?;
    run.write_report(&report_tsv(&rows))?;
    print!("{}", report_table(&rows));
    println!("report -> {}", run.report_path().display());
    Ok(())
}

// ---------------------------------------------------------------------------
// correlate
// ---------------------------------------------------------------------------

/// Pearson correlation between two score columns (e.g. a learned metric
/// against human judgments).
#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// Two-column TSV of paired scores
    #[arg(long, value_name = "FILE", conflicts_with_all = ["x", "y"])]
    pairs: Option<PathBuf>,
    /// One score per line
    #[arg(long, value_name = "FILE", requires = "y")]
    x: Option<PathBuf>,
    /// One score per line, aligned with --x
    #[arg(long, value_name = "FILE")]
    y: Option<PathBuf>,
}

fn read_column(path: &Path) -> Result<Vec<f64>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(idx, line)| {
            line.trim()
                .parse()
                .with_context(|| format!("{}:{}: not a number", path.display(), idx + 1))
        })
        .collect()
}

pub fn correlate(args: &CorrelateArgs) -> Result<()> {
    let (xs, ys) = match (&args.pairs, &args.x, &args.y) {
        (Some(path), None, None) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (idx, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let (a, b) = line.split_once('\t').with_context(|| {
                    format!("{}:{}: expected two tab-separated columns", path.display(), idx + 1)
                })?;
                xs.push(a.trim().parse::<f64>().with_context(|| {
                    format!("{}:{}: not a number", path.display(), idx + 1)
                })?);
                ys.push(b.trim().parse::<f64>().with_context(|| {
                    format!("{}:{}: not a number", path.display(), idx + 1)
                })?);
            }
            (xs, ys)
        }
        (None, Some(x), Some(y)) => (read_column(x)?, read_column(y)?),
        _ => bail!("pass either --pairs, or both --x and --y"),
    };
    let r = pearson(&xs, &ys)?;
    println!("pearson = {r:.6}");
    Ok(())
}

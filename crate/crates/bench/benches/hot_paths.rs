//! Benchmarks for the inner loops that dominate a training run: BLEU and
//! oracle scoring (computed per sampled sentence), classifier probabilities
//! (the reward signal), and the model's decode and update steps.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use restyle_core::classifier::{ClassifierConfig, StyleClassifier};
use restyle_core::corpus::{SentencePair, Utterance, Vocab};
use restyle_core::metrics::{corpus_bleu, desk_oracle_score, sentence_bleu};
use restyle_core::seq2seq::{LossTerm, ModelConfig, Seq2Seq, TinyTransformer};
use restyle_core::toytask::ToyTask;

fn toy_model(task: &ToyTask, seed: u64) -> TinyTransformer {
    let vocab = Vocab::build(task.full_vocab().iter(), 64);
    TinyTransformer::new(
        ModelConfig {
            vocab_size: 64,
            dim: 32,
            heads: 2,
            enc_layers: 1,
            dec_layers: 1,
            ffn_hidden: 64,
            max_len: 12,
            max_decode_len: 10,
            lr: 3e-3,
            seed,
        },
        vocab,
    )
}

fn bench_metrics(c: &mut Criterion) {
    let task = ToyTask::new();
    let refsets = task.references(&task.styles.s1, 50, 1);
    let candidates: Vec<Utterance> = refsets.iter().map(|set| set.source.clone()).collect();
    let a = &candidates[0];
    let b = &refsets[0].references[0];

    c.bench_function("sentence_bleu", |bench| {
        bench.iter(|| sentence_bleu(a, b));
    });
    c.bench_function("corpus_bleu_50", |bench| {
        bench.iter(|| corpus_bleu(&candidates, &refsets).unwrap());
    });
    c.bench_function("desk_oracle_score", |bench| {
        bench.iter(|| desk_oracle_score(a, b));
    });
}

fn bench_classifier(c: &mut Criterion) {
    let task = ToyTask::new();
    let classifier = StyleClassifier::train(
        ClassifierConfig {
            embed_dim: 16,
            filter_widths: vec![2, 3],
            filters_per_width: 4,
            vocab_size: 64,
            lr: 1e-3,
            epochs: 1,
            batch_size: 16,
            seed: 2,
        },
        &task.classifier_data(64, 3),
        task.styles.clone(),
    )
    .unwrap();
    let sentence = &task.unpaired(&task.styles.s1, 1, 4)[0].utterance;

    c.bench_function("classifier_prob", |bench| {
        bench.iter(|| classifier.prob(sentence, &task.styles.s2).unwrap());
    });
}

fn bench_model(c: &mut Criterion) {
    let task = ToyTask::new();
    let model = toy_model(&task, 5);
    let source = task.unpaired(&task.styles.s1, 1, 6)[0].utterance.clone();
    let pairs: Vec<SentencePair> = task.identity_pairs(&task.styles.s1, 8, 7);

    c.bench_function("greedy_decode", |bench| {
        bench.iter(|| model.greedy_decode(&source).unwrap());
    });
    c.bench_function("sample_decode", |bench| {
        bench.iter(|| model.sample_decode(&source, 8).unwrap());
    });
    c.bench_function("nll_loss_batch8", |bench| {
        bench.iter_batched(
            || model.clone(),
            |mut m| m.nll_loss(&pairs).unwrap(),
            BatchSize::SmallInput,
        );
    });
    c.bench_function("train_step_batch8", |bench| {
        let weight = 1.0 / pairs.len() as f64;
        bench.iter_batched(
            || model.clone(),
            |mut m| {
                let terms: Vec<LossTerm> =
                    pairs.iter().map(|pair| LossTerm { pair, weight }).collect();
                m.train_step(&terms).unwrap()
            },
            BatchSize::SmallInput,
        );
    });
}

criterion_group!(benches, bench_metrics, bench_classifier, bench_model);
criterion_main!(benches);

//! Drives the `restyle` binary through the whole recipe on the toy
//! marker-swap task at tiny budgets: classifier, synthetic pairs,
//! paraphrase filtering, warm-up, back-translation, pair selection,
//! offline training, generation, evaluation, and correlation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use restyle_core::corpus;
use restyle_core::toytask::ToyTask;

fn restyle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_restyle"))
        .args(args)
        .output()
        .expect("spawning the binary")
}

fn ok(args: &[&str]) -> String {
    let out = restyle(args);
    assert!(
        out.status.success(),
        "restyle {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    String::from_utf8(out.stdout).expect("utf8 stdout")
}

fn lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

fn p(path: &PathBuf) -> &str {
    path.to_str().unwrap()
}

#[test]
fn full_toy_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let task = ToyTask::new();
    let (s1, s2) = (task.styles.s1.clone(), task.styles.s2.clone());

    // -- data files ---------------------------------------------------------
    let write_unpaired = |name: &str, style, n, seed| -> PathBuf {
        let path = root.join(name);
        corpus::write_unpaired(&task.unpaired(style, n, seed), &path).unwrap();
        path
    };
    let train_a = write_unpaired("train_a.txt", &s1, 16, 1);
    let train_b = write_unpaired("train_b.txt", &s2, 16, 2);
    let clf_a = write_unpaired("clf_a.txt", &s1, 60, 3);
    let clf_b = write_unpaired("clf_b.txt", &s2, 60, 4);
    let clf_va = write_unpaired("clf_va.txt", &s1, 20, 5);
    let clf_vb = write_unpaired("clf_vb.txt", &s2, 20, 6);

    let refs_a = corpus::write_references(&task.references(&s1, 6, 7), root, "valid_a").unwrap();
    let refs_b = corpus::write_references(&task.references(&s2, 6, 8), root, "valid_b").unwrap();

    let pairs_a2b = root.join("identity_a2b.tsv");
    corpus::write_pairs(&task.identity_pairs(&s1, 24, 9), &pairs_a2b).unwrap();
    let pairs_b2a = root.join("identity_b2a.tsv");
    corpus::write_pairs(&task.identity_pairs(&s2, 24, 10), &pairs_b2a).unwrap();

    let config = root.join("toy.conf");
    fs::write(
        &config,
        "\
# toy-sized everything
vocab_size = 64
dim = 32
heads = 2
enc_layers = 1
dec_layers = 1
ffn_hidden = 64
max_len = 12
max_decode_len = 10
lr = 0.003
batch_size = 8
epochs = 2
steps = 2
validate_every = 1
clf_embed_dim = 16
clf_filter_widths = 2,3
clf_filters_per_width = 4
clf_epochs = 2
",
    )
    .unwrap();
    let conf = config.to_str().unwrap();

    // -- classifier ---------------------------------------------------------
    let clf = root.join("clf.ckpt");
    let stdout = ok(&[
        "train-classifier",
        "--corpus-a", p(&clf_a), "--corpus-b", p(&clf_b),
        "--style-a", "informal", "--style-b", "formal",
        "--valid-a", p(&clf_va), "--valid-b", p(&clf_vb),
        "--out", p(&clf), "--config", conf,
    ]);
    assert!(clf.is_file());
    assert!(stdout.contains("validation accuracy"), "{stdout}");

    // -- synthetic antonym pairs (self-contained sentiment micro-corpus) ----
    let senti = root.join("senti.txt");
    fs::write(&senti, "the room was dirty\nwe will lose today\nthey were great hosts\n").unwrap();
    let lexicon = root.join("polarity.tsv");
    fs::write(&lexicon, "dirty\t0.0\t0.8\nlose\t0.0\t0.7\ngreat\t0.9\t0.0\n").unwrap();
    let antonyms = root.join("antonyms.tsv");
    fs::write(&antonyms, "dirty\tclean\nlose\tfind\ngreat\tterrible\n").unwrap();
    let synthetic = root.join("synthetic.tsv");
    let stdout = ok(&[
        "make-pairs",
        "--input", p(&senti), "--from", "negative", "--to", "positive",
        "--lexicon", p(&lexicon), "--antonyms", p(&antonyms),
        "--out", p(&synthetic),
    ]);
    assert!(stdout.contains("wrote 3 pairs"), "{stdout}");
    assert!(fs::read_to_string(&synthetic).unwrap().contains("the room was clean"));

    // -- paraphrase filter (sigma 0 keeps everything) ------------------------
    let kept = root.join("kept.tsv");
    let stdout = ok(&[
        "filter-paraphrases",
        "--pairs", p(&pairs_a2b), "--from", "informal", "--to", "formal",
        "--classifier", p(&clf), "--sigma", "0.0",
        "--out", p(&kept), "--config", conf,
    ]);
    assert!(stdout.contains("kept 24 of 24"), "{stdout}");

    // -- warm-up both directions ---------------------------------------------
    let pre_a2b = root.join("pre_a2b");
    ok(&[
        "pretrain",
        "--pairs", p(&pairs_a2b), "--from", "informal", "--to", "formal",
        "--out", p(&pre_a2b), "--config", conf,
    ]);
    let ckpt_a2b = pre_a2b.join("checkpoints/informal-to-formal-pretrained.ckpt");
    assert!(ckpt_a2b.is_file());
    assert!(pre_a2b.join("config.echo").is_file());
    // header + 3 batches x 2 epochs
    assert_eq!(lines(&pre_a2b.join("logs.tsv")), 7);

    let pre_b2a = root.join("pre_b2a");
    ok(&[
        "pretrain",
        "--pairs", p(&pairs_b2a), "--from", "formal", "--to", "informal",
        "--out", p(&pre_b2a), "--config", conf,
    ]);
    let ckpt_b2a = pre_b2a.join("checkpoints/formal-to-informal-pretrained.ckpt");

    // -- back-translation -----------------------------------------------------
    let ibt = root.join("ibt");
    let stdout = ok(&[
        "ibt-train",
        "--corpus-a", p(&train_a), "--corpus-b", p(&train_b),
        "--style-a", "informal", "--style-b", "formal",
        "--init-a2b", p(&ckpt_a2b), "--init-b2a", p(&ckpt_b2a),
        "--classifier", p(&clf),
        "--valid-a-sources", p(&refs_a[0]), "--valid-a-refs", p(&refs_a[1]),
        "--valid-b-sources", p(&refs_b[0]), "--valid-b-refs", p(&refs_b[1]),
        "--out", p(&ibt), "--config", conf,
    ]);
    assert!(stdout.contains("ran 2 back-translation steps"), "{stdout}");
    let best_a2b = ibt.join("checkpoints/informal-to-formal-best.ckpt");
    assert!(best_a2b.is_file());
    assert!(ibt.join("checkpoints/formal-to-informal-final.ckpt").is_file());
    // header + 2 directions x 2 steps
    assert_eq!(lines(&ibt.join("logs.tsv")), 5);

    // -- pair selection --------------------------------------------------------
    let select = root.join("select");
    let stdout = ok(&[
        "select-pairs",
        "--model", p(&best_a2b), "--classifier", p(&clf),
        "--input", p(&train_a), "--from", "informal", "--to", "formal",
        "--sigma-c", "-1.5", "--sigma-s", "0.0",
        "--out", p(&select), "--config", conf,
    ]);
    let scored = select.join("pairs/scored.tsv");
    let selected = select.join("pairs/selected.tsv");
    assert!(scored.is_file() && selected.is_file());
    // the permissive floors keep every scored pair
    assert_eq!(lines(&scored), lines(&selected));
    assert!(stdout.contains("selected"), "{stdout}");

    // -- offline training from the warm-up base ---------------------------------
    let offline = root.join("offline");
    ok(&[
        "train-offline",
        "--pairs", p(&selected), "--from", "informal", "--to", "formal",
        "--base", p(&ckpt_a2b), "--classifier", p(&clf),
        "--valid-sources", p(&refs_a[0]), "--valid-refs", p(&refs_a[1]),
        "--out", p(&offline), "--config", conf,
    ]);
    let final_ckpt = offline.join("checkpoints/informal-to-formal-offline-final.ckpt");
    assert!(final_ckpt.is_file());

    // -- generation --------------------------------------------------------------
    let transfers = root.join("transfers.txt");
    ok(&[
        "generate",
        "--model", p(&final_ckpt), "--input", p(&train_a),
        "--out", p(&transfers), "--config", conf,
    ]);
    assert_eq!(lines(&transfers), 16);

    // -- evaluation ----------------------------------------------------------------
    let eval = root.join("eval");
    let stdout = ok(&[
        "evaluate",
        "--model", p(&final_ckpt),
        "--sources", p(&refs_a[0]), "--refs", p(&refs_a[1]),
        "--classifier", p(&clf), "--to", "formal",
        "--system", "toy-offline",
        "--out", p(&eval), "--config", conf,
    ]);
    assert!(stdout.contains("toy-offline"), "{stdout}");
    let report = fs::read_to_string(eval.join("report.tsv")).unwrap();
    assert!(report.starts_with("system\tn\tacc\tbleu\thm\tlearned\n"), "{report}");
    assert_eq!(report.lines().count(), 2);

    // -- correlation ------------------------------------------------------------------
    let scores = root.join("scores.tsv");
    fs::write(&scores, "1.0\t2.0\n2.0\t4.0\n3.0\t5.0\n").unwrap();
    let stdout = ok(&["correlate", "--pairs", p(&scores)]);
    assert!(stdout.trim().starts_with("pearson = 0.98"), "{stdout}");
}

#[test]
fn rerunning_from_the_config_echo_reproduces_logs_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let task = ToyTask::new();
    let pairs = root.join("pairs.tsv");
    corpus::write_pairs(&task.identity_pairs(&task.styles.s1, 16, 3), &pairs).unwrap();
    let config = root.join("toy.conf");
    fs::write(
        &config,
        "vocab_size = 64\ndim = 32\nheads = 2\nenc_layers = 1\ndec_layers = 1\n\
         ffn_hidden = 64\nmax_len = 12\nmax_decode_len = 10\nlr = 0.003\n\
         batch_size = 8\nepochs = 2\nseed = 5\n",
    )
    .unwrap();

    let run1 = root.join("run1");
    ok(&[
        "pretrain",
        "--pairs", p(&pairs), "--from", "informal", "--to", "formal",
        "--out", p(&run1), "--config", config.to_str().unwrap(),
    ]);
    let echo = run1.join("config.echo");
    let run2 = root.join("run2");
    ok(&[
        "pretrain",
        "--pairs", p(&pairs), "--from", "informal", "--to", "formal",
        "--out", p(&run2), "--config", echo.to_str().unwrap(),
    ]);
    assert_eq!(
        fs::read(run1.join("logs.tsv")).unwrap(),
        fs::read(run2.join("logs.tsv")).unwrap()
    );
    assert_eq!(
        fs::read(echo).unwrap(),
        fs::read(run2.join("config.echo")).unwrap()
    );
}

#[test]
fn failures_are_single_line_diagnostics_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.conf");
    fs::write(&config, "warp_factor = 9\n").unwrap();
    let out = restyle(&[
        "generate",
        "--model", "nowhere.ckpt",
        "--input", "nothing.txt",
        "--out", "unused.txt",
        "--config", config.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.starts_with("restyle: "), "{stderr}");
    assert!(stderr.contains("warp_factor"), "{stderr}");
}

#[test]
fn missing_model_is_reported_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.txt");
    fs::write(&input, "plz send the report\n").unwrap();
    let out = restyle(&[
        "generate",
        "--model", "definitely-absent.ckpt",
        "--input", input.to_str().unwrap(),
        "--out", dir.path().join("out.txt").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("definitely-absent.ckpt"), "{stderr}");
}

use cantus_cli::*;
use cantus_core::dataset::{self, DatasetVariant};
use cantus_core::metrics::{evaluate_song, SpanConfig};
use cantus_core::midi;
use cantus_core::rnn::{self, CellKind};
use cantus_core::song::Song;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;
use tempfile::TempDir;

fn bin() -> Process {
    Process::new(env!("CARGO_BIN_EXE_cantus"))
}

fn write_jsonl(dir: &Path, name: &str, songs: &[Vec<i32>]) -> PathBuf {
    let path = dir.join(name);
    let text: String = songs
        .iter()
        .map(|s| serde_json::to_string(s).unwrap() + "\n")
        .collect();
    fs::write(&path, text).unwrap();
    path
}

fn dataset_args(input: Option<PathBuf>, variant: DatasetVariant, output: PathBuf) -> DatasetArgs {
    DatasetArgs { input, variant, output }
}

fn small_train() -> TrainOpts {
    TrainOpts {
        hidden_size: 16,
        embedding_dim: 8,
        batch_size: 8,
        seq_len: 25,
        epochs: Some(3),
        ..TrainOpts::default()
    }
}

fn bundled_corpus(dir: &Path, variant: DatasetVariant) -> PathBuf {
    let out = dir.join(format!("{variant}.json"));
    cmd_dataset(&dataset_args(None, variant, out.clone())).unwrap();
    out
}

fn train_to(dir: &Path, corpus: &Path, cell: CellKind, name: &str) -> PathBuf {
    let ckpt = dir.join(name);
    cmd_train(&TrainArgs {
        corpus: corpus.to_path_buf(),
        cell,
        layers: 1,
        train: small_train(),
        checkpoint: ckpt.clone(),
        curve: None,
    })
    .unwrap();
    ckpt
}

#[test]
fn four_note_song_gives_three_pairs() {
    let tmp = TempDir::new().unwrap();
    let input = write_jsonl(tmp.path(), "one.jsonl", &[vec![60, 62, 64, 65]]);
    let out = tmp.path().join("c.json");
    let summary = cmd_dataset(&dataset_args(Some(input), DatasetVariant::Control, out.clone())).unwrap();
    assert_eq!(summary["tokens"], 4);
    let corpus = read_corpus(&out).unwrap();
    assert_eq!(corpus.len(), 3);
    assert_eq!(corpus.vocabulary.decode(&corpus.x).unwrap(), vec![60, 62, 64]);
    assert_eq!(corpus.vocabulary.decode(&corpus.y).unwrap(), vec![62, 64, 65]);
}

#[test]
fn db12_is_twelve_times_control() {
    let tmp = TempDir::new().unwrap();
    let songs: Vec<Vec<i32>> = (0..10).map(|i| (0..8).map(|j| 55 + (i + j * 3) % 14).collect()).collect();
    let input = write_jsonl(tmp.path(), "ten.jsonl", &songs);
    let control = cmd_dataset(&dataset_args(Some(input.clone()), DatasetVariant::Control, tmp.path().join("a.json"))).unwrap();
    let db12 = cmd_dataset(&dataset_args(Some(input), DatasetVariant::Db12, tmp.path().join("b.json"))).unwrap();
    assert_eq!(db12["tokens"].as_u64().unwrap(), 12 * control["tokens"].as_u64().unwrap());
}

#[test]
fn short_songs_are_dropped_and_counted() {
    let tmp = TempDir::new().unwrap();
    let input = write_jsonl(
        tmp.path(),
        "mixed.jsonl",
        &[vec![60, 62, 64, 65, 67], vec![60, 61, 62], vec![70], vec![50, 52, 53, 55]],
    );
    let s = cmd_dataset(&dataset_args(Some(input), DatasetVariant::Control, tmp.path().join("m.json"))).unwrap();
    assert_eq!((s["songs_read"].as_u64(), s["songs_kept"].as_u64(), s["songs_dropped"].as_u64()), (Some(4), Some(2), Some(2)));
    assert_eq!(s["tokens"], 9);
}

#[test]
fn midi_directory_input() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("midis");
    fs::create_dir(&dir).unwrap();
    let a = Song::new(vec![60, 62, 64, 65, 67]).unwrap();
    let b = Song::new(vec![67, 65, 64, 62, 60, 59]).unwrap();
    fs::write(dir.join("b.mid"), midi::write_midi(&b)).unwrap();
    fs::write(dir.join("a.mid"), midi::write_midi(&a)).unwrap();
    fs::write(dir.join("notes.txt"), "ignored").unwrap();
    assert_eq!(load_songs(Some(&dir)).unwrap(), vec![a, b]);

    fs::write(dir.join("c.mid"), b"MThd garbage").unwrap();
    let err = load_songs(Some(&dir)).unwrap_err();
    assert_eq!(err.kind(), "midi");
    assert!(err.to_string().contains("c.mid"));
}

#[test]
fn bad_jsonl_reports_the_line() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad.jsonl");
    fs::write(&path, "[60,62,64,65]\n[60,\"x\"]\n").unwrap();
    let err = load_songs(Some(&path)).unwrap_err();
    assert_eq!(err.kind(), "dataset");
    assert!(err.to_string().contains("line 2"), "{err}");
}

#[test]
fn training_writes_a_plot_ready_curve() {
    let tmp = TempDir::new().unwrap();
    let corpus = bundled_corpus(tmp.path(), DatasetVariant::Control);
    let ckpt = train_to(tmp.path(), &corpus, CellKind::Ugrnn, "u.ckpt");
    let csv = fs::read_to_string(ckpt.with_extension("curve.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iteration,loss"));
    let iters: Vec<usize> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(!iters.is_empty());
    assert!(iters.windows(2).all(|w| w[1] > w[0]));

    // rerun: byte-identical outputs
    let again = train_to(tmp.path(), &corpus, CellKind::Ugrnn, "u2.ckpt");
    assert_eq!(fs::read(&ckpt).unwrap(), fs::read(&again).unwrap());
    assert_eq!(csv, fs::read_to_string(again.with_extension("curve.csv")).unwrap());
}

#[test]
fn zero_epochs_saves_the_initial_model() {
    let tmp = TempDir::new().unwrap();
    let corpus_path = bundled_corpus(tmp.path(), DatasetVariant::Control);
    let ckpt = tmp.path().join("zero.ckpt");
    let opts = TrainOpts {
        epochs: Some(0),
        seed: 3,
        ..small_train()
    };
    let summary = cmd_train(&TrainArgs {
        corpus: corpus_path.clone(),
        cell: CellKind::Lstm,
        layers: 2,
        train: opts.clone(),
        checkpoint: ckpt.clone(),
        curve: None,
    })
    .unwrap();
    assert_eq!(summary["iterations"], 0);
    assert_eq!(fs::read_to_string(ckpt.with_extension("curve.csv")).unwrap(), "iteration,loss\n");

    let corpus = read_corpus(&corpus_path).unwrap();
    let cfg = opts.model_config(CellKind::Lstm, 2, DatasetVariant::Control);
    let (fresh, _) = rnn::train(&corpus, cfg, &opts.train_config(DatasetVariant::Control)).unwrap();
    assert_eq!(load_model(&ckpt).unwrap(), fresh);
}

#[test]
fn epoch_defaults_follow_the_variant() {
    let opts = TrainOpts::default();
    assert_eq!(opts.train_config(DatasetVariant::Control).epochs, 300);
    assert_eq!(opts.train_config(DatasetVariant::Interval).epochs, 300);
    assert_eq!(opts.train_config(DatasetVariant::Db12).epochs, 50);
    let t = opts.train_config(DatasetVariant::Control);
    assert_eq!((t.batch_size, t.seq_len), (50, 50));
}

#[test]
fn corpus_too_small_is_reported() {
    let tmp = TempDir::new().unwrap();
    let corpus = bundled_corpus(tmp.path(), DatasetVariant::Control);
    let err = cmd_train(&TrainArgs {
        corpus,
        cell: CellKind::Lstm,
        layers: 1,
        train: TrainOpts::default(),
        checkpoint: tmp.path().join("x.ckpt"),
        curve: None,
    })
    .unwrap_err();
    assert_eq!(err.kind(), "corpus_too_small");
}

#[test]
fn sweep_tabulates_every_run() {
    let tmp = TempDir::new().unwrap();
    let corpus = bundled_corpus(tmp.path(), DatasetVariant::Control);
    let args = |dir: &str| SweepArgs {
        corpus: corpus.clone(),
        cells: vec![CellKind::Lstm, CellKind::Ugrnn],
        min_layers: 1,
        max_layers: 3,
        train: TrainOpts {
            epochs: Some(2),
            ..small_train()
        },
        output_dir: tmp.path().join(dir),
    };
    let a = cmd_sweep(&args("a")).unwrap();
    assert_eq!(a["runs"].as_array().unwrap().len(), 6);
    assert_eq!(a["best_layers"].as_array().unwrap().len(), 2);
    assert_eq!(a["failed"], 0);
    let summary = fs::read_to_string(tmp.path().join("a/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 7);
    assert!(tmp.path().join("a/curve_ugrnn_3.csv").exists());

    cmd_sweep(&args("b")).unwrap();
    assert_eq!(summary, fs::read_to_string(tmp.path().join("b/summary.csv")).unwrap());
}

#[test]
fn sweep_records_failures_and_continues() {
    let tmp = TempDir::new().unwrap();
    let corpus = bundled_corpus(tmp.path(), DatasetVariant::Control);
    let out = cmd_sweep(&SweepArgs {
        corpus,
        cells: vec![CellKind::Ugrnn],
        min_layers: 1,
        max_layers: 2,
        train: TrainOpts {
            hidden_size: 0,
            ..small_train()
        },
        output_dir: tmp.path().join("s"),
    })
    .unwrap();
    assert_eq!(out["failed"], 2);
    assert!(out["best_layers"][0]["layers"].is_null());
}

#[test]
fn argmin_prefers_lower_loss_then_fewer_layers() {
    let row = |layers, loss: Option<f64>| SweepRow {
        cell: CellKind::Lstm,
        layers,
        initial_loss: Some(3.0),
        final_loss: loss,
        status: "ok".into(),
    };
    let rows = vec![row(1, Some(2.0)), row(2, Some(1.5)), row(3, Some(1.5)), row(4, None)];
    assert_eq!(sweep_argmin(&rows, &[CellKind::Lstm, CellKind::Ugrnn]), vec![(CellKind::Lstm, Some(2)), (CellKind::Ugrnn, None)]);
}

#[test]
fn sampling_defaults_follow_the_protocol() {
    let tmp = TempDir::new().unwrap();
    let corpus = bundled_corpus(tmp.path(), DatasetVariant::Control);
    let ckpt = train_to(tmp.path(), &corpus, CellKind::Lstm, "l.ckpt");
    let out = tmp.path().join("samples");
    cmd_sample(&SampleArgs {
        checkpoint: ckpt,
        sample: SampleOpts::default(),
        output_dir: out.clone(),
    })
    .unwrap();
    let songs = load_songs(Some(&out.join("songs.jsonl"))).unwrap();
    assert_eq!(songs.len(), 100);
    assert!(songs.iter().all(|s| s.len() == 34 && s.notes()[..4] == [60, 62, 64, 62]));
    let mids = fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "mid")).count();
    assert_eq!(mids, 100);
    assert_eq!(midi::parse_midi(&fs::read(out.join("song_042.mid")).unwrap()).unwrap(), songs[42]);
}

#[test]
fn greedy_single_sample_is_stable() {
    let tmp = TempDir::new().unwrap();
    let corpus = bundled_corpus(tmp.path(), DatasetVariant::Control);
    let ckpt = train_to(tmp.path(), &corpus, CellKind::Ugrnn, "g.ckpt");
    let run = |dir: &str, seed| {
        let opts = SampleOpts {
            count: 1,
            greedy: true,
            seed,
            ..SampleOpts::default()
        };
        cmd_sample(&SampleArgs {
            checkpoint: ckpt.clone(),
            sample: opts,
            output_dir: tmp.path().join(dir),
        })
        .unwrap();
        fs::read(tmp.path().join(dir).join("songs.jsonl")).unwrap()
    };
    assert_eq!(run("a", 1), run("b", 2));
}

#[test]
fn interval_model_consumes_seed_intervals() {
    let tmp = TempDir::new().unwrap();
    let corpus = bundled_corpus(tmp.path(), DatasetVariant::Interval);
    let ckpt = train_to(tmp.path(), &corpus, CellKind::Lstm, "i.ckpt");
    let model = load_model(&ckpt).unwrap();
    for t in [2, 2, -2] {
        assert!(model.vocabulary.id(t).is_some());
    }
    let greedy = SampleOpts {
        count: 1,
        greedy: true,
        ..SampleOpts::default()
    };
    let songs = generate(&model, &greedy).unwrap();
    assert!(songs.iter().all(|s| s.len() == 34 && s.notes()[..4] == [60, 62, 64, 62]));

    // a walk that leaves the MIDI range surfaces as its own error kind
    let high = SampleOpts { seed_notes: vec![125, 127], notes: 200, ..greedy };
    if let Err(e) = generate(&model, &high) {
        assert_eq!(e.kind(), "pitch_out_of_range");
    }

    // a seed step outside the interval vocabulary is rejected
    let err = generate(&model, &SampleOpts { seed_notes: vec![60, 100], ..SampleOpts::default() }).unwrap_err();
    assert_eq!(err.kind(), "unknown_seed_token");
}

#[test]
fn eval_of_a_single_song() {
    let tmp = TempDir::new().unwrap();
    let notes: Vec<i32> = vec![60, 62, 64, 65, 67, 65, 64, 62, 60, 62, 64, 60, 67, 60];
    let input = write_jsonl(tmp.path(), "one.jsonl", &[notes.clone()]);
    let out = tmp.path().join("eval");
    let s = cmd_eval(&EvalArgs {
        songs: Some(input),
        checkpoint: None,
        sample: SampleOpts::default(),
        span: 12,
        lower_bound: 5,
        upper_bound: 8,
        output_dir: out.clone(),
    })
    .unwrap();
    assert_eq!(s["representative"], 0);
    let r = evaluate_song(&Song::from_pitches(&notes).unwrap(), &SpanConfig::default()).unwrap();
    let report: EvalReport = serde_json::from_slice(&fs::read(out.join("reports.json")).unwrap()).unwrap();
    assert_eq!(report.stats.cmm.mean, r.cmm);
    assert_eq!(report.stats.lm.mean, r.lm);
    assert_eq!(report.stats.centr.mean, r.centr);
    assert_eq!(report.stats.cmm.std, 0.0);
    assert!(fs::read_to_string(out.join("stats.csv")).unwrap().starts_with("metric,mean,std\n"));
    assert_eq!(midi::parse_midi(&fs::read(out.join("representative.mid")).unwrap()).unwrap().pitches(), notes);
}

#[test]
fn eval_names_the_short_song() {
    let tmp = TempDir::new().unwrap();
    let input = write_jsonl(tmp.path(), "s.jsonl", &[(50..70).collect(), vec![60, 62, 64, 65, 67]]);
    let err = cmd_eval(&EvalArgs {
        songs: Some(input),
        checkpoint: None,
        sample: SampleOpts::default(),
        span: 12,
        lower_bound: 5,
        upper_bound: 8,
        output_dir: tmp.path().join("e"),
    })
    .unwrap_err();
    assert_eq!(err.kind(), "song_too_short");
    assert!(err.to_string().contains('1'), "{err}");
}

#[test]
fn eval_samples_from_a_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let corpus = bundled_corpus(tmp.path(), DatasetVariant::Db12);
    let ckpt = train_to(tmp.path(), &corpus, CellKind::Ugrnn, "d.ckpt");
    let out = tmp.path().join("e");
    let s = cmd_eval(&EvalArgs {
        songs: None,
        checkpoint: Some(ckpt),
        sample: SampleOpts { count: 10, ..SampleOpts::default() },
        span: 12,
        lower_bound: 5,
        upper_bound: 8,
        output_dir: out.clone(),
    })
    .unwrap();
    assert_eq!(s["count"], 10);
    // the written samples evaluate to the same statistics
    let songs = load_songs(Some(&out.join("songs.jsonl"))).unwrap();
    let again = evaluate(&songs, &SpanConfig::default()).unwrap();
    assert_eq!(serde_json::to_value(again.stats).unwrap(), s["stats"]);
}

#[test]
fn bundled_corpus_is_evaluable() {
    let songs = dataset::bundled_corpus();
    assert!(songs.len() >= 30);
    assert!(songs.iter().all(|s| s.len() >= 12));
    assert!(songs.iter().all(|s| dataset::song_to_db12(s).is_ok()));
    let report = evaluate(&songs, &SpanConfig::default()).unwrap();
    assert_eq!(report.reports.len(), songs.len());
}

#[test]
fn binary_end_to_end_with_env_paths() {
    let tmp = TempDir::new().unwrap();
    let corpus = tmp.path().join("corpus.json");
    let st = bin()
        .args(["dataset", "--variant", "interval"])
        .env("CANTUS_CORPUS", &corpus)
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&st.stdout).unwrap();
    assert_eq!(summary["variant"], "interval");
    assert!(corpus.with_extension("vocab.json").exists());

    let ckpt = tmp.path().join("m.ckpt");
    let st = bin()
        .args(["train", "--cell", "ugrnn", "--hidden-size", "8", "--embedding-dim", "4"])
        .args(["--batch-size", "4", "--seq-len", "10", "--max-iterations", "5"])
        .env("CANTUS_CORPUS", &corpus)
        .env("CANTUS_CHECKPOINT", &ckpt)
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));

    let st = bin()
        .args(["sample", "--count", "2", "--greedy"])
        .arg("--output-dir")
        .arg(tmp.path().join("out"))
        .env("CANTUS_CHECKPOINT", &ckpt)
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(tmp.path().join("out/song_001.mid").exists());
}

#[test]
fn binary_errors_are_json() {
    let st = bin().args(["train", "--corpus", "/nonexistent/c.json", "--checkpoint", "/tmp/x"]).output().unwrap();
    assert!(!st.status.success());
    let err: serde_json::Value = serde_json::from_slice(&st.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "io");

    let st = bin().args(["train", "--corpus", "c", "--checkpoint", "x", "--cell", "nas"]).output().unwrap();
    assert!(!st.status.success());
    let err: serde_json::Value = serde_json::from_slice(&st.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "usage");
    assert!(err["error"]["message"].as_str().unwrap().contains("NAS"));
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let corpus = bundled_corpus(tmp.path(), DatasetVariant::Control);
    let ckpt = train_to(tmp.path(), &corpus, CellKind::Lstm, "c.ckpt");
    let mut bytes = fs::read(&ckpt).unwrap();
    bytes.truncate(bytes.len() - 16);
    fs::write(&ckpt, bytes).unwrap();
    assert_eq!(load_model(&ckpt).unwrap_err().kind(), "checkpoint");
}

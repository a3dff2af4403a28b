use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use openreid::commands::{ScoreJson, ThresholdReport};
use openreid::store::{write_dataset, write_metadata};
use openreid::synthetic::{gaussian_clusters, ClusterSpec};
use openreid_core::dataset::{EmbeddingDataset, MetadataRecord};
use openreid_core::pca::fit_pca;
use openreid_core::Matrix;
use tempfile::TempDir;

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new(spec: &ClusterSpec) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let synth = gaussian_clusters(spec);
        write_dataset(
            &synth.dataset,
            &dir.path().join("meta.csv"),
            &dir.path().join("emb.bin"),
        )
        .unwrap();
        Self { dir }
    }

    fn small() -> Self {
        Self::new(&ClusterSpec {
            individuals: 12,
            images: (5, 7),
            dim: 8,
            centre_scale: 3.0,
            noise: 0.3,
            seed: 3,
            ..ClusterSpec::default()
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_openreid"))
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> Output {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out
    }

    fn split(&self, out: &str) {
        self.ok(&[
            "split",
            "--meta",
            &self.s("meta.csv"),
            "--emb",
            &self.s("emb.bin"),
            "--seed",
            "7",
            "--out",
            &self.s(out),
        ]);
    }

    fn data_args(&self) -> Vec<String> {
        [
            "--meta",
            &self.s("meta.csv"),
            "--emb",
            &self.s("emb.bin"),
            "--split",
            &self.s("split.csv"),
        ]
        .map(String::from)
        .to_vec()
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

fn with(base: &[String], extra: &[&str]) -> Vec<String> {
    base.iter()
        .cloned()
        .chain(extra.iter().map(|s| s.to_string()))
        .collect()
}

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[test]
fn split_writes_one_row_per_image_and_is_reproducible() {
    let f = Fixture::small();
    f.split("split.csv");
    f.split("again.csv");
    let rows = lines(&f.path("split.csv"));
    let n = lines(&f.path("meta.csv")).len() - 1;
    assert_eq!(rows.len() - 1, n);
    assert_eq!(rows[0], "image_id,split,individual_id,is_known");
    assert_eq!(
        fs::read(f.path("split.csv")).unwrap(),
        fs::read(f.path("again.csv")).unwrap()
    );
    assert!(f.path("split.csv.manifest.json").exists());
}

#[test]
fn split_reports_rows_without_individual() {
    let f = Fixture::small();
    let recs = vec![
        MetadataRecord::new("a", Some("x"), "s"),
        MetadataRecord::new("b", None, "s"),
        MetadataRecord::new("c", Some("y"), "s"),
        MetadataRecord::new("d", None, "s"),
    ];
    let ds = EmbeddingDataset::new(recs, Matrix::zeros(4, 2)).unwrap();
    write_dataset(&ds, &f.path("m.csv"), &f.path("e.bin")).unwrap();
    let out = f.run(&[
        "split",
        "--meta",
        &f.s("m.csv"),
        "--emb",
        &f.s("e.bin"),
        "--out",
        &f.s("s.csv"),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("[1, 3]"), "{}", stderr(&out));
}

#[test]
fn split_rejects_bad_fraction_with_exit_2() {
    let f = Fixture::small();
    let out = f.run(&[
        "split",
        "--meta",
        &f.s("meta.csv"),
        "--emb",
        &f.s("emb.bin"),
        "--known-frac",
        "1.5",
        "--out",
        &f.s("s.csv"),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn train_head_defaults_give_100_epochs() {
    let f = Fixture::small();
    f.split("split.csv");
    let args = with(&f.data_args(), &["--out-dir", &f.s("head")]);
    f.ok(&["train-head"].into_iter().chain(refs(&args)).collect::<Vec<_>>());
    let hist = lines(&f.path("head/history.csv"));
    assert_eq!(hist[0], "epoch,train_loss,val_loss,mined_triplets,learning_rate");
    assert_eq!(hist.len() - 1, 100);
    assert!(f.path("head/head.ckpt").exists());
    assert!(f.path("head/manifest.json").exists());
}

#[test]
fn train_head_single_epoch_and_replay_is_byte_identical() {
    let f = Fixture::small();
    f.split("split.csv");
    let args = with(
        &f.data_args(),
        &[
            "--epochs",
            "1",
            "--warmup",
            "0",
            "--head",
            "linear",
            "--output-dim",
            "4",
            "--loss",
            "matryoshka",
            "--mining",
            "random",
            "--out-dir",
            &f.s("head"),
        ],
    );
    f.ok(&["train-head"].into_iter().chain(refs(&args)).collect::<Vec<_>>());
    assert_eq!(lines(&f.path("head/history.csv")).len(), 2);
    let first = fs::read(f.path("head/head.ckpt")).unwrap();
    f.ok(&["replay", &f.s("head/manifest.json")]);
    assert_eq!(fs::read(f.path("head/head.ckpt")).unwrap(), first);
}

#[test]
fn train_head_config_errors_exit_2() {
    let f = Fixture::small();
    f.split("split.csv");
    for extra in [
        &["--epochs", "5", "--warmup", "5"][..],
        &["--loss", "matryoshka", "--matryoshka-dims", "3,5", "--output-dim", "8"][..],
        &["--margin", "0"][..],
        &["--dropout", "1.0"][..],
    ] {
        let mut args = with(&f.data_args(), extra);
        args.extend(["--out-dir".to_string(), f.s("head")]);
        let out = f.run(&["train-head"].into_iter().chain(refs(&args)).collect::<Vec<_>>());
        assert_eq!(code(&out), 2, "{extra:?}: {}", stderr(&out));
    }
}

#[test]
fn replay_refuses_changed_inputs() {
    let f = Fixture::small();
    f.split("split.csv");
    let mut meta = fs::read_to_string(f.path("meta.csv")).unwrap();
    meta = meta.replacen("lynx", "lynx2", 1);
    fs::write(f.path("meta.csv"), meta).unwrap();
    let out = f.run(&["replay", &f.s("split.csv.manifest.json")]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("digest changed"));
}

#[test]
fn tune_writes_100_point_curve_and_separates_fixture() {
    let f = Fixture::small();
    f.split("split.csv");
    let args = with(&f.data_args(), &["--out", &f.s("tune")]);
    f.ok(&["tune"].into_iter().chain(refs(&args)).collect::<Vec<_>>());
    let curve = lines(&f.path("tune/curve.csv"));
    assert_eq!(curve[0], "threshold,baks,baus,final");
    assert_eq!(curve.len() - 1, 100);
    let report: ThresholdReport =
        serde_json::from_str(&fs::read_to_string(f.path("tune/threshold.json")).unwrap()).unwrap();
    assert_eq!(report.final_score, 1.0);
    assert!(f.path("tune/manifest.json").exists());
}

#[test]
fn tune_needs_two_species() {
    let f = Fixture::new(&ClusterSpec {
        individuals: 12,
        images: (5, 6),
        dim: 4,
        species: vec!["lynx".into()],
        ..ClusterSpec::default()
    });
    f.split("split.csv");
    let args = with(&f.data_args(), &["--out", &f.s("tune")]);
    let out = f.run(&["tune"].into_iter().chain(refs(&args)).collect::<Vec<_>>());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("need ≥ 2 species"), "{}", stderr(&out));
}

#[test]
fn predict_threshold_extremes_and_row_count() {
    let f = Fixture::small();
    f.split("split.csv");
    let test_rows = lines(&f.path("split.csv"))
        .iter()
        .filter(|l| l.contains(",test,"))
        .count();
    for (t, name) in [("inf", "inf.csv"), ("0", "zero.csv")] {
        let args = with(&f.data_args(), &["--threshold", t, "--out", &f.s(name)]);
        f.ok(&["predict"].into_iter().chain(refs(&args)).collect::<Vec<_>>());
        let rows = lines(&f.path(name));
        assert_eq!(rows[0], "image_id,identity");
        assert_eq!(rows.len() - 1, test_rows);
    }
    let inf = lines(&f.path("inf.csv"));
    assert!(inf.iter().all(|l| !l.ends_with(",new_individual")));
    let zero = lines(&f.path("zero.csv"));
    assert!(zero[1..].iter().all(|l| l.ends_with(",new_individual")));
    // The infinite threshold survives the manifest round trip.
    f.ok(&["replay", &f.s("inf.csv.manifest.json")]);
}

#[test]
fn predict_with_head_and_external_queries() {
    let f = Fixture::small();
    f.split("split.csv");
    let args = with(
        &f.data_args(),
        &[
            "--epochs",
            "2",
            "--warmup",
            "1",
            "--output-dim",
            "4",
            "--out-dir",
            &f.s("head"),
        ],
    );
    f.ok(&["train-head"].into_iter().chain(refs(&args)).collect::<Vec<_>>());
    let q = EmbeddingDataset::new(
        vec![
            MetadataRecord::new("q0", None, "lynx"),
            MetadataRecord::new("q1", None, "lynx"),
        ],
        Matrix::zeros(2, 8),
    )
    .unwrap();
    write_dataset(&q, &f.path("q.csv"), &f.path("q.bin")).unwrap();
    let args = with(
        &f.data_args(),
        &[
            "--head-ckpt",
            &f.s("head/head.ckpt"),
            "--query-meta",
            &f.s("q.csv"),
            "--query-emb",
            &f.s("q.bin"),
            "--threshold",
            "inf",
            "--out",
            &f.s("p.csv"),
        ],
    );
    f.ok(&["predict"].into_iter().chain(refs(&args)).collect::<Vec<_>>());
    let rows = lines(&f.path("p.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("q0,ind"));
}

fn write_truth(f: &Fixture) {
    let rows = [
        ("a1", "a", true),
        ("a2", "a", true),
        ("b1", "b", true),
        ("b2", "b", true),
        ("b3", "b", true),
        ("u1a", "u1", false),
        ("u1b", "u1", false),
        ("u2a", "u2", false),
    ];
    let mut text = String::from("image_id,split,individual_id,is_known\n");
    text.push_str("a0,train,a,true\nb0,train,b,true\n");
    for (id, ind, known) in rows {
        text.push_str(&format!("{id},test,{ind},{known}\n"));
    }
    fs::write(f.path("truth.csv"), text).unwrap();
}

fn evaluate(f: &Fixture, pred: &str) -> Output {
    f.run(&[
        "evaluate",
        "--pred",
        &f.s(pred),
        "--truth",
        &f.s("truth.csv"),
        "--out",
        &f.s("score.json"),
    ])
}

fn read_score(f: &Fixture) -> ScoreJson {
    serde_json::from_str(&fs::read_to_string(f.path("score.json")).unwrap()).unwrap()
}

#[test]
fn evaluate_perfect_and_worked_example() {
    let f = Fixture::small();
    write_truth(&f);
    fs::write(
        f.path("perfect.csv"),
        "image_id,identity\na1,a\na2,a\nb1,b\nb2,b\nb3,b\nu1a,new_individual\nu1b,new_individual\nu2a,new_individual\n",
    )
    .unwrap();
    assert_eq!(code(&evaluate(&f, "perfect.csv")), 0);
    assert_eq!(
        read_score(&f),
        ScoreJson {
            baks: 1.0,
            baus: 1.0,
            final_score: 1.0
        }
    );

    fs::write(
        f.path("mixed.csv"),
        "image_id,identity\na1,a\na2,b\nb1,b\nb2,b\nb3,new_individual\nu1a,new_individual\nu1b,a\nu2a,new_individual\n",
    )
    .unwrap();
    assert_eq!(code(&evaluate(&f, "mixed.csv")), 0);
    let s = read_score(&f);
    // Per-class tallies: a 1/2, b 2/3; u1 1/2, u2 1/1.
    let baks: f64 = (0.5 + 2.0 / 3.0) / 2.0;
    let baus: f64 = (0.5 + 1.0) / 2.0;
    assert!((s.baks - baks).abs() < 1e-12);
    assert!((s.baus - baus).abs() < 1e-12);
    assert!((s.final_score - (baks * baus).sqrt()).abs() < 1e-12);
}

#[test]
fn evaluate_lists_missing_predictions() {
    let f = Fixture::small();
    write_truth(&f);
    fs::write(
        f.path("partial.csv"),
        "image_id,identity\na1,a\na2,a\nb1,b\nb2,b\nb3,b\nu1a,new_individual\n",
    )
    .unwrap();
    let out = evaluate(&f, "partial.csv");
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("u1b") && err.contains("u2a"), "{err}");
}

#[test]
fn project_writes_pc_columns_matching_core() {
    let f = Fixture::small();
    f.ok(&[
        "project",
        "--meta",
        &f.s("meta.csv"),
        "--emb",
        &f.s("emb.bin"),
        "--k",
        "2",
        "--out",
        &f.s("pca.csv"),
    ]);
    let rows = lines(&f.path("pca.csv"));
    assert_eq!(rows[0], "image_id,pc1,pc2");
    let ds = openreid::store::read_dataset(&f.path("meta.csv"), &f.path("emb.bin")).unwrap();
    let oracle = fit_pca(ds.matrix(), 2).unwrap().project(ds.matrix()).unwrap();
    assert_eq!(rows.len() - 1, oracle.len());
    for (line, want) in rows[1..].iter().zip(&oracle) {
        let got: Vec<f64> = line.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-9);
        }
    }
}

#[test]
fn project_needs_two_rows() {
    let f = Fixture::small();
    let ds = EmbeddingDataset::new(vec![MetadataRecord::new("a", Some("x"), "s")], Matrix::zeros(1, 3)).unwrap();
    write_dataset(&ds, &f.path("one.csv"), &f.path("one.bin")).unwrap();
    let out = f.run(&[
        "project",
        "--meta",
        &f.s("one.csv"),
        "--emb",
        &f.s("one.bin"),
        "--out",
        &f.s("p.csv"),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn malformed_inputs_exit_2() {
    let f = Fixture::small();
    write_metadata(&f.path("short.csv"), &[MetadataRecord::new("a", Some("x"), "s")]).unwrap();
    let out = f.run(&[
        "split",
        "--meta",
        &f.s("short.csv"),
        "--emb",
        &f.s("emb.bin"),
        "--out",
        &f.s("s.csv"),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("row count mismatch"));
    let out = f.run(&["split", "--meta", &f.s("meta.csv")]);
    assert_eq!(code(&out), 2);
}

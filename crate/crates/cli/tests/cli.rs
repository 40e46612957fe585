use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use coreset_cli::commands::select_file;
use coreset_cli::{CoresetFile, Method, MethodParams};
use coreset_core::scores::{least_confidence, select_by_score, ScoreVector};
use coreset_core::trainer::{evaluate_coreset, train, Arch, TrainConfig};
use coreset_core::{load_artifact, Selection};

fn coreset(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coreset")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = coreset(args);
    assert!(out.status.success(), "coreset {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new(val: bool) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let art = dir.path().join("art");
        let mut args = vec!["trace", "--synthetic", "c3-n40-d5-sep6", "--epochs", "8", "--ref-epoch", "4", "--seed", "2", "-o", s(&art)];
        if val {
            args.extend(["--val-fraction", "0.2"]);
        }
        ok(&args);
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn art(&self) -> PathBuf {
        self.path("art")
    }
}

#[test]
fn exit_codes() {
    let fx = Fixture::new(false);
    let art = fx.art();
    let out = fx.path("c.json");

    assert_eq!(coreset(&["select", "-a", s(&art)]).status.code(), Some(2));
    assert_eq!(coreset(&["select", "-a", s(&art), "-m", "nope", "-f", "0.1"]).status.code(), Some(2));
    assert_eq!(coreset(&["select", "-a", s(&art), "-m", "random", "-f", "1.5", "-o", s(&out)]).status.code(), Some(2));
    assert_eq!(
        coreset(&["trace", "--synthetic", "c2-n10-d2-sep1", "--epochs", "3", "--ref-epoch", "4", "-o", s(&fx.path("x"))]).status.code(),
        Some(2)
    );

    let missing = coreset(&["select", "-a", s(&fx.path("nowhere")), "-m", "random", "-f", "0.1", "-o", s(&out)]);
    assert_eq!(missing.status.code(), Some(2));
    let glister = coreset(&["select", "-a", s(&art), "-m", "glister", "-f", "0.1", "-o", s(&out)]);
    assert_eq!(glister.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&glister.stderr).contains("validation"));

    std::fs::write(art.join("features.dctf"), b"DCTF garbage").unwrap();
    assert_ne!(coreset(&["select", "-a", s(&art), "-m", "random", "-f", "0.1", "-o", s(&out)]).status.code(), Some(0));

    let diverge = coreset(&[
        "trace", "--synthetic", "c2-n20-d3-sep50", "--epochs", "3", "--ref-epoch", "1", "--lr", "1e300", "--schedule",
        "constant", "-o", s(&fx.path("y")),
    ]);
    assert_eq!(diverge.status.code(), Some(4));
}

#[test]
fn coreset_file_round_trip() {
    let fx = Fixture::new(true);
    let out = fx.path("gm.json");
    ok(&["select", "-a", s(&fx.art()), "-m", "gradmatch", "-f", "0.25", "--balanced", "--seed", "3", "-o", s(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    let file = CoresetFile::from_json(&text, "gm.json").unwrap();
    assert_eq!(file.to_json(), text);
    assert_eq!(file.method, "gradmatch");
    assert_eq!(file.seed, 3);
    let n = load_artifact(&fx.art()).unwrap().n();
    assert_eq!(file.indices.len(), (0.25 * n as f64).round() as usize);
    assert_eq!(file.params["lambda"], 1.0);
    assert_eq!(file.params["balanced"], true);
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["version", "method", "fraction", "seed", "params", "indices", "weights", "metadata"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn random_balanced_quota_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    let rows: String = (0..20).map(|i| format!("{},{},{}\n", i as f32 * 0.1, (i % 3) as f32, usize::from(i >= 14))).collect();
    std::fs::write(&csv, format!("a,b,label\n{rows}")).unwrap();
    let art = dir.path().join("art");
    ok(&["trace", "--csv", s(&csv), "--epochs", "2", "--ref-epoch", "1", "-o", s(&art)]);
    let out = dir.path().join("r.json");
    ok(&["select", "-a", s(&art), "-m", "random", "-f", "0.5", "--balanced", "-o", s(&out)]);
    let file = CoresetFile::read(&out).unwrap();
    let a = load_artifact(&art).unwrap();
    let per_class = file.indices.iter().fold([0; 2], |mut acc, &i| {
        acc[a.labels.get(i)] += 1;
        acc
    });
    assert_eq!(per_class, [5, 5]);
}

#[test]
fn select_matches_the_library() {
    let fx = Fixture::new(true);
    let a = load_artifact(&fx.art()).unwrap();
    for method in Method::ALL {
        let out = fx.path(&format!("{method}.json"));
        ok(&["select", "-a", s(&fx.art()), "-m", method.name(), "-f", "0.2", "--balanced", "--seed", "5", "-o", s(&out)]);
        let file = CoresetFile::read(&out).unwrap();
        let lib = select_file(&a, &[], method, 0.2, true, 5, &MethodParams::default()).unwrap();
        assert_eq!(file, lib, "{method}");
    }
    let lc = select_by_score(&least_confidence(a.trace.as_ref().unwrap()).unwrap(), &a.labels, Selection::new(lib_k(&fx), true, 5)).unwrap();
    assert_eq!(CoresetFile::read(&fx.path("lc.json")).unwrap().indices, lc.indices);
}

fn lib_k(fx: &Fixture) -> usize {
    CoresetFile::read(&fx.path("lc.json")).unwrap().indices.len()
}

#[test]
fn eval_on_everything_equals_full_training() {
    let fx = Fixture::new(false);
    let out = fx.path("all.json");
    ok(&["select", "-a", s(&fx.art()), "-m", "random", "-f", "1.0", "-o", s(&out)]);
    let report = fx.path("report.json");
    ok(&["eval", "-a", s(&fx.art()), "-c", s(&out), "--repeats", "2", "--seed", "4", "--epochs", "15", "-o", s(&report)]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();

    let a = load_artifact(&fx.art()).unwrap();
    let test = load_artifact(&fx.art().join("test")).unwrap();
    let file = CoresetFile::read(&out).unwrap();
    for (i, seed) in [4u64, 5].into_iter().enumerate() {
        let cfg = TrainConfig { epochs: 15, seed, ..TrainConfig::default() };
        let arch = Arch::Mlp1 { hidden: Arch::DEFAULT_HIDDEN };
        let model = train(arch, &a.features, &a.labels, None, &cfg).unwrap();
        let direct = model.accuracy(test.features.to_f64().view(), test.labels.as_slice());
        let via = evaluate_coreset(&file.to_result(), &a.features, &a.labels, &test.features, &test.labels, arch, &cfg).unwrap();
        assert_eq!(direct, via);
        assert_eq!(report["accuracies"][i].as_f64().unwrap(), direct);
    }
}

#[test]
fn sweep_rows_and_csv() {
    let fx = Fixture::new(true);
    let csv = fx.path("sweep.csv");
    let out = ok(&[
        "sweep", "-a", s(&fx.art()), "--methods", "random,el2n,fl", "--fractions", "0.2,1.0", "--repeats", "2",
        "--epochs", "5", "--balanced", "-o", s(&csv),
    ]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "method,fraction,repeats,mean_acc,std_acc,seconds");
    assert_eq!(lines.len(), 1 + 3 * 2);
    let table = String::from_utf8_lossy(&out.stdout);
    assert_eq!(table.matches("upper bound").count(), 3);
}

#[test]
fn runs_average_scores() {
    let fx = Fixture::new(false);
    let other = fx.path("other");
    ok(&["trace", "--synthetic", "c3-n40-d5-sep6", "--epochs", "8", "--ref-epoch", "6", "--seed", "2", "-o", s(&other)]);
    let out = fx.path("avg.json");
    ok(&["select", "-a", s(&fx.art()), "--runs", s(&other), "-m", "lc", "-f", "0.3", "-o", s(&out)]);
    let file = CoresetFile::read(&out).unwrap();
    assert_eq!(file.metadata["runs"], 2);

    let a = load_artifact(&fx.art()).unwrap();
    let b = load_artifact(&other).unwrap();
    let sa = least_confidence(a.trace.as_ref().unwrap()).unwrap();
    let sb = least_confidence(b.trace.as_ref().unwrap()).unwrap();
    let mean = ScoreVector::mean(&[sa, sb]).unwrap();
    let expected = select_by_score(&mean, &a.labels, Selection::new(file.indices.len(), false, 0)).unwrap();
    assert_eq!(file.indices, expected.indices);

    let refused = coreset(&["select", "-a", s(&fx.art()), "--runs", s(&other), "-m", "kcenter", "-f", "0.3", "-o", s(&out)]);
    assert_eq!(refused.status.code(), Some(2));
}

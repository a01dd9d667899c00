//! End-to-end runs through the library runner and the CLI binary.

use std::path::Path;
use std::process::Command;

use collective_sim::corpus::{generate_synthetic, SyntheticConfig};
use collective_sim::eval::N_BINS;
use collective_sim::runner::{emit_reports, run_experiment, ExperimentConfig};
use collective_sim::Error;

const BIN: &str = env!("CARGO_BIN_EXE_collective-sim");

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect()
}

fn header(path: &Path) -> Vec<String> {
    csv::Reader::from_path(path)
        .unwrap()
        .headers()
        .unwrap()
        .iter()
        .map(String::from)
        .collect()
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL_CORPUS: &str = r#"
[corpus]
kind = "synthetic"
n_songs = 400
n_artists = 50
n_playlists = 8000
"#;

#[test]
fn control_run_has_no_amplification_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            "n_test = 300\nn_val = 100\nfolds = 1\nalphas = [0.0]\n\n[[strategies]]\nkind = \"none\"\n{SMALL_CORPUS}"
        ),
    );
    let mut cfg = ExperimentConfig::load(&cfg).unwrap();
    cfg.out_dir = Some(dir.path().join("out"));
    let run = run_experiment(&cfg).unwrap();
    let rec = &run.report.recommenders[0];
    assert!(rec.amplification.is_empty());
    assert!(rec.folds[0].runs.is_empty());
    let out = dir.path().join("out");
    assert!(rows(&out.join("amplification.csv")).is_empty());
    let perf = rows(&out.join("performance.csv"));
    assert_eq!(perf.len(), 1);
    assert_eq!(&perf[0][3], "clean");
}

#[test]
fn alpha_sweep_row_counts_and_report_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"n_test = 500
n_val = 200
folds = 3
alphas = [0.0002, 0.001, 0.002]
master_seed = 4

[[strategies]]
kind = "dirlof"

[[strategies]]
kind = "random"
{SMALL_CORPUS}"#
        ),
    );
    let out = dir.path().join("out");
    let mut cfg = ExperimentConfig::load(&cfg).unwrap();
    cfg.out_dir = Some(out.clone());
    let run = run_experiment(&cfg).unwrap();

    assert_eq!(
        header(&out.join("amplification.csv")),
        ["strategy", "alpha", "fold", "S", "Amp", "ci_low", "ci_high"]
    );
    let amp = rows(&out.join("amplification.csv"));
    assert_eq!(amp.len(), 2 * 3 * 3);
    let keys: std::collections::BTreeSet<(String, String, String)> = amp
        .iter()
        .map(|r| (r[0].to_string(), r[1].to_string(), r[2].to_string()))
        .collect();
    assert_eq!(keys.len(), amp.len());

    let n_runs = 2 * 3 * 3;
    assert_eq!(rows(&out.join("delta_r_bins.csv")).len(), N_BINS * n_runs);

    let n_songs = run.report.songs.len();
    assert_eq!(n_songs, 401);
    let teaser = rows(&out.join("teaser.csv"));
    assert_eq!(teaser.len(), n_songs * n_runs);
    assert_eq!(
        header(&out.join("teaser.csv"))[3..],
        ["song", "train_count", "test_rec_count", "is_target"]
    );
    // target novelty: absent from clean training data, one copy per placement
    let target_name = &run.report.songs[run.report.target.index()];
    for fold in &run.report.recommenders[0].folds {
        assert_eq!(fold.train_counts[run.report.target.index()], 0);
        for r in &fold.runs {
            let trow = teaser
                .iter()
                .find(|t| {
                    &t[0] == r.strategy.as_str()
                        && t[1].parse::<f64>().unwrap() == r.alpha
                        && t[2].parse::<usize>().unwrap() == fold.fold
                        && &t[3] == target_name.as_str()
                })
                .unwrap();
            assert_eq!(trow[4].parse::<usize>().unwrap(), r.placements);
            assert_eq!(&trow[6], "1");
            assert_eq!(r.placements + r.skipped, r.collective);
        }
    }

    // re-emitting from the persisted run reproduces the same files
    let before = std::fs::read(out.join("anchors.csv")).unwrap();
    std::fs::remove_file(out.join("anchors.csv")).unwrap();
    let written = emit_reports(&out).unwrap();
    assert!(written.iter().any(|w| w == "anchors.csv"));
    assert_eq!(std::fs::read(out.join("anchors.csv")).unwrap(), before);
}

#[test]
fn emit_reports_lists_missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    match emit_reports(dir.path()) {
        Err(Error::MissingArtifacts(missing)) => {
            assert_eq!(missing.len(), 2);
            assert!(missing.iter().any(|m| m.ends_with("report.json")));
            assert!(missing.iter().any(|m| m.ends_with("manifest.json")));
        }
        other => panic!("expected missing artifacts, got {other:?}"),
    }
}

#[test]
fn long_tail_histogram_for_short_playlists() {
    let corpus = generate_synthetic(&SyntheticConfig {
        coherence: 0.0,
        zipf_exponent: 1.1,
        length: collective_sim::corpus::LengthDistribution {
            min: 1,
            max: 1,
            mean: 1.0,
        },
        ..SyntheticConfig::default()
    })
    .unwrap();
    assert_eq!((corpus.catalog.len(), corpus.n()), (2000, 20_000));
    let dir = tempfile::tempdir().unwrap();
    collective_sim::corpus::save_canonical(&corpus, dir.path()).unwrap();
    // count from the written file rather than the in-memory corpus
    let mut counts = std::collections::HashMap::<String, usize>::new();
    for line in std::fs::read_to_string(dir.path().join("playlists.jsonl")).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for t in v["tracks"].as_array().unwrap() {
            *counts.entry(t.as_str().unwrap().to_string()).or_default() += 1;
        }
    }
    let rare = counts.values().filter(|&&c| c <= 2).count();
    assert!(rare as f64 >= 0.4 * counts.len() as f64, "{rare} of {}", counts.len());
}

fn mpd_slice(path: &Path) {
    let playlist = |pid: u32, tracks: &[(u32, u32)]| {
        let tracks: Vec<serde_json::Value> = tracks
            .iter()
            .enumerate()
            .map(|(pos, (t, a))| {
                serde_json::json!({
                    "pos": pos,
                    "track_uri": format!("spotify:track:{t}"),
                    "artist_uri": format!("spotify:artist:{a}"),
                    "track_name": "x",
                })
            })
            .collect();
        serde_json::json!({ "pid": pid, "name": "p", "tracks": tracks })
    };
    let mut playlists = Vec::new();
    for pid in 0..400u32 {
        let len = 4 + pid % 7;
        let tracks: Vec<(u32, u32)> = (0..len).map(|i| ((pid * 7 + i * 13) % 90, (pid + i) % 12)).collect();
        let mut seen = std::collections::HashSet::new();
        let tracks: Vec<(u32, u32)> = tracks.into_iter().filter(|t| seen.insert(t.0)).collect();
        playlists.push(playlist(pid, &tracks));
    }
    let slice = serde_json::json!({ "info": {}, "playlists": playlists });
    std::fs::write(path, serde_json::to_string(&slice).unwrap()).unwrap();
}

#[test]
fn cli_generate_ingest_run_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let gen = cli(&["generate", "--out", d.join("synthetic").to_str().unwrap(), "--seed", "3"]);
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    assert!(d.join("synthetic/playlists.jsonl").is_file());

    mpd_slice(&d.join("slice.json"));
    let ing = cli(&["ingest", d.join("slice.json").to_str().unwrap(), "--out", d.join("mpd").to_str().unwrap()]);
    assert!(ing.status.success(), "{}", String::from_utf8_lossy(&ing.stderr));

    let cfg = write_config(
        d,
        "n_test = 60\nn_val = 30\nfolds = 2\nalphas = [0.05]\n\n[corpus]\nkind = \"canonical\"\ndir = \"mpd\"\n",
    );
    let out = d.join("out");
    let run = cli(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--strategy",
        "hybrid10",
        "--strategy",
        "insert@0",
        "--alpha",
        "0.02,0.05",
        "--seed",
        "9",
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(rows(&out.join("amplification.csv")).len(), 2 * 2 * 2);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"]["state"], "complete");
    assert_eq!(manifest["config"]["master_seed"], 9);

    let before = std::fs::read(out.join("performance.csv")).unwrap();
    let rep = cli(&["report", "--out", out.to_str().unwrap()]);
    assert!(rep.status.success());
    assert_eq!(std::fs::read(out.join("performance.csv")).unwrap(), before);
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let missing = cli(&["run", "--config", d.join("nope.toml").to_str().unwrap(), "--out", "x"]);
    assert_eq!(missing.status.code(), Some(2));

    let bad = write_config(d, &format!("n_test = 10\nn_val = 5\nalphas = [2.0]\n{SMALL_CORPUS}"));
    let out = cli(&["run", "--config", bad.to_str().unwrap(), "--out", d.join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let unknown = write_config(d, &format!("n_test = 10\nn_val = 5\nmystery = 1\n{SMALL_CORPUS}"));
    let out = cli(&["run", "--config", unknown.to_str().unwrap(), "--out", d.join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // valid config whose corpus directory does not exist fails at a stage
    let stage = write_config(
        d,
        "n_test = 10\nn_val = 5\nalphas = [0.1]\n[corpus]\nkind = \"canonical\"\ndir = \"absent\"\n",
    );
    let out = cli(&["run", "--config", stage.to_str().unwrap(), "--out", d.join("o2").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    let rep = cli(&["report", "--out", d.join("empty").to_str().unwrap()]);
    assert_eq!(rep.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&rep.stderr).contains("report.json"));
}

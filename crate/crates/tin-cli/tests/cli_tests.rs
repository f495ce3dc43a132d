//! End-to-end tests driving the compiled `tin` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tin_core::embed::read_embedding;
use tin_core::synth::{planted_tin, SynthConfig};

fn tin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tin"))
        .args(args)
        .output()
        .expect("spawning the tin binary")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Value of a `key<TAB>value` report line.
fn field(report: &str, key: &str) -> String {
    let prefix = format!("{key}\t");
    report
        .lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no `{key}` line in:\n{report}"))
        .to_string()
}

fn write_file(dir: &Path, name: &str, content: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, content).unwrap();
    path
}

/// Serialize a planted benchmark graph in the dataset format.
fn write_planted(dir: &Path, name: &str, cfg: &SynthConfig) -> PathBuf {
    let g = planted_tin(cfg).unwrap();
    let mut lines = String::new();
    for (e, &(u, i)) in g.edges.iter().enumerate() {
        assert!(!g.texts[e].contains(['\t', '\n', '\\']));
        lines.push_str(&format!("user{u}\titem{i}\t{}\t{}\n", g.labels[e], g.texts[e]));
    }
    write_file(dir, name, &lines)
}

const TINY: &str = "alice\tbook1\t0\tcrisp and bright\n\
                    bob\tbook1\t1\tmuddy and flat\n\
                    alice\tbook2\t1\tsour finish\n";

#[test]
fn ingest_reports_the_dataset_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_file(dir.path(), "tiny.tsv", TINY);
    let out = tin(&["ingest", "--data", data.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = stdout(&out);
    assert_eq!(field(&report, "users"), "2");
    assert_eq!(field(&report, "items"), "2");
    assert_eq!(field(&report, "interactions"), "3");
    assert_eq!(field(&report, "classes"), "2");
}

#[test]
fn ingest_rejects_duplicates_and_empty_files() {
    let dir = tempfile::tempdir().unwrap();
    let dup = write_file(dir.path(), "dup.tsv", "a\tx\t0\tone\nb\tx\t1\ttwo\na\tx\t1\tagain\n");
    let out = tin(&["ingest", "--data", dup.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains(":3:"), "{err}");
    assert!(err.contains("duplicate interaction"), "{err}");
    assert!(err.contains("line 1"), "{err}");

    let empty = write_file(dir.path(), "empty.tsv", "# nothing here\n");
    let out = tin(&["ingest", "--data", empty.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("no interactions"), "{}", stderr(&out));
}

#[test]
fn embed_is_byte_reproducible_and_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_file(dir.path(), "tiny.tsv", TINY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out_dir in [&a, &b] {
        let out = tin(&[
            "embed",
            "--data",
            data.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--k",
            "3",
            "--seed",
            "7",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for name in ["distance.emb", "centrality.emb"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between identical runs");
    }
    let (z, tag, seed) = read_embedding(&a.join("distance.emb")).unwrap();
    assert_eq!((z.rows, z.cols, tag, seed), (3, 3, 0, 7));
    assert!(z.data.iter().all(|v| v.is_finite()));
}

#[test]
fn embed_warns_when_the_width_exceeds_the_rank() {
    let dir = tempfile::tempdir().unwrap();
    // a 2x2 cycle: 4 interactions over 4 nodes, structural rank 3
    let data = write_file(
        dir.path(),
        "cycle.tsv",
        "u0\ti0\t0\tw\nu0\ti1\t1\tw\nu1\ti0\t1\tw\nu1\ti1\t0\tw\n",
    );
    let out_dir = dir.path().join("e");
    let out = tin(&[
        "embed",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--k",
        "4",
        "--seed",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("trailing centrality columns"), "{}", stderr(&out));
    let (z, _, _) = read_embedding(&out_dir.join("centrality.emb")).unwrap();
    assert!((0..z.rows).all(|r| z.at(r, z.cols - 1) == 0.0));
}

#[test]
fn verify_passes_on_the_default_random_stream() {
    let out = tin(&["verify"]);
    assert!(out.status.success(), "{}\n{}", stdout(&out), stderr(&out));
    let report = stdout(&out);
    assert_eq!(field(&report, "instances"), "50");
    for suite in [
        "distance_vs_resistance",
        "distance_gram_vs_walk_complement",
        "centrality_vs_pseudoinverse",
        "centrality_vs_enumeration",
        "centrality_sum_rule",
        "walk_doubly_stochastic",
        "laplacian_walk_complement",
        "attention_gram_vs_plain_walk",
        "induced_operator_reorder",
    ] {
        assert!(report.contains(&format!("{suite}\tpass")), "{report}");
    }
    // the shifted-walk comparison is reported but never gates
    assert!(report.contains("attention_gram_vs_shifted_walk\tinfo"), "{report}");
}

#[test]
fn verify_fails_on_a_corrupted_embedding() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_file(dir.path(), "tiny.tsv", TINY);
    let out_dir = dir.path().join("e");
    let out = tin(&[
        "embed",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--k",
        "3",
        "--seed",
        "7",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let dist = out_dir.join("distance.emb");
    let clean = tin(&[
        "verify",
        "--data",
        data.to_str().unwrap(),
        "--dist",
        dist.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert!(clean.status.success(), "{}\n{}", stdout(&clean), stderr(&clean));

    // flip an exponent bit inside the first payload float (header is 33 bytes)
    let mut bytes = std::fs::read(&dist).unwrap();
    bytes[40] ^= 0x41;
    std::fs::write(&dist, &bytes).unwrap();
    let bad = tin(&[
        "verify",
        "--data",
        data.to_str().unwrap(),
        "--dist",
        dist.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert!(!bad.status.success(), "corrupted embedding must fail verification");
    let report = stdout(&bad);
    assert!(report.contains("distance_vs_resistance\tFAIL"), "{report}");
}

#[test]
fn verify_reports_components_of_a_disconnected_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_file(
        dir.path(),
        "disc.tsv",
        "u0\ti0\t0\tw x\nu0\ti1\t1\tw y\nu1\ti2\t1\tz q\nu1\ti3\t0\tz r\n",
    );
    let out = tin(&["verify", "--data", data.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = stdout(&out);
    assert!(report.contains("component\tinteractions\tresistance_dev"), "{report}");
    assert!(report.lines().any(|l| l.starts_with("0\t2\t")), "{report}");
    assert!(report.lines().any(|l| l.starts_with("1\t2\t")), "{report}");
}

#[test]
fn train_is_deterministic_and_eval_matches_the_history() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_planted(
        dir.path(),
        "small.tsv",
        &SynthConfig { n_users: 12, n_items: 10, n_edges: 40, ..SynthConfig::default() },
    );
    let config = write_file(
        dir.path(),
        "run.cfg",
        "epochs = 8\nearly_stop = 8\nsvd_dim = 8\nhidden_dim = 16\ntext_len = 6\nvocab_buckets = 128\n",
    );
    let (r1, r2) = (dir.path().join("r1"), dir.path().join("r2"));
    for out_dir in [&r1, &r2] {
        let out = tin(&[
            "train",
            "--data",
            data.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for name in ["checkpoint.ckpt", "history.tsv", "distance.emb", "centrality.emb"] {
        let x = std::fs::read(r1.join(name)).unwrap();
        let y = std::fs::read(r2.join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between identical runs");
    }

    let ck = r1.join("checkpoint.ckpt");
    let hist = r1.join("history.tsv");
    let out = tin(&[
        "eval",
        "--data",
        data.to_str().unwrap(),
        "--checkpoint",
        ck.to_str().unwrap(),
        "--split",
        "val",
        "--history",
        hist.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}\n{}", stdout(&out), stderr(&out));
    let report = stdout(&out);
    assert_eq!(field(&report, "split"), "val");
    let check = field(&report, "history_check");
    assert!(check.starts_with("pass"), "{report}");
    let micro: f64 = field(&report, "micro_f1").parse().unwrap();
    assert!((0.0..=1.0).contains(&micro));
}

#[test]
fn train_reaches_high_accuracy_on_planted_structure() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_planted(dir.path(), "planted.tsv", &SynthConfig::default());
    let config = write_file(dir.path(), "run.cfg", "epochs = 200\n");
    let out = tin(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("run").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let micro: f64 = field(&stdout(&out), "test_micro_f1").parse().unwrap();
    assert!(micro >= 0.9, "planted benchmark reached only micro-F1 {micro}");
}

#[test]
fn sweep_emits_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_planted(
        dir.path(),
        "small.tsv",
        &SynthConfig { n_users: 12, n_items: 10, n_edges: 40, ..SynthConfig::default() },
    );
    let config = write_file(
        dir.path(),
        "run.cfg",
        "epochs = 4\nearly_stop = 4\nsvd_dim = 8\nhidden_dim = 8\ntext_len = 4\nvocab_buckets = 64\n",
    );
    let table = dir.path().join("delta.tsv");
    let out = tin(&[
        "sweep",
        "--data",
        data.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--key",
        "delta",
        "--values",
        "0,0.5,1,1.5,2",
        "--out",
        table.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let body = std::fs::read_to_string(&table).unwrap();
    let rows: Vec<&str> = body.lines().collect();
    assert_eq!(rows.len(), 5, "{body}");
    for (row, want) in rows.iter().zip(["0", "0.5", "1", "1.5", "2"]) {
        assert_eq!(row.split('\t').next(), Some(want), "{body}");
        assert_eq!(row.split('\t').count(), 4, "{body}");
    }

    let out = tin(&[
        "sweep",
        "--data",
        data.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--key",
        "no_such_key",
        "--values",
        "1",
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("unknown config key"), "{}", stderr(&out));
}

#[test]
fn cli_seed_overrides_the_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_file(dir.path(), "tiny.tsv", TINY);
    let config = write_file(dir.path(), "run.cfg", "seed = 11\n");
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (out_dir, seed_args) in
        [(&a, vec![]), (&b, vec!["--seed", "11"]), (&c, vec!["--seed", "12"])]
    {
        let mut args = vec![
            "embed",
            "--data",
            data.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--k",
            "3",
        ];
        args.extend(seed_args);
        let out = tin(&args);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let base = std::fs::read(a.join("distance.emb")).unwrap();
    assert_eq!(base, std::fs::read(b.join("distance.emb")).unwrap());
    assert_ne!(base, std::fs::read(c.join("distance.emb")).unwrap());
}

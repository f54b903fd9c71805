use std::path::{Path, PathBuf};
use std::process::Command;

use clap::Parser;
use wssdrc_cli::{Cli, run};
use wssdrc_core::audio;
use wssdrc_core::corpus::write_synthetic_corpus;

fn wssdrc(args: &[&str]) -> anyhow::Result<()> {
    let argv = std::iter::once("wssdrc").chain(args.iter().copied());
    run(Cli::try_parse_from(argv)?)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn wavs(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn enhance_ssdrc_over_test_split_is_energy_matched() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    let m = write_synthetic_corpus(&corpus, 0, 120, 0.5, 3).unwrap();
    let out = tmp.path().join("ssdrc");
    let manifest = corpus.join("manifest.jsonl");
    wssdrc(&["enhance", "--method", "ssdrc", "--manifest", s(&manifest), "--out-dir", s(&out)]).unwrap();
    let files = wavs(&out);
    assert_eq!(files.len(), 120);
    for e in &m.entries {
        let input = audio::read_wav(&e.wav_path).unwrap();
        let output = audio::read_wav(out.join(format!("{}.wav", e.id))).unwrap();
        assert_eq!(output.len(), input.len());
        // 16-bit storage costs a little energy precision, far below the bound
        assert!(audio::energy_ratio_db(&output, &input).abs() < 1e-3, "{}", e.id);
    }
}

#[test]
fn enhance_needs_an_input() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(wssdrc(&["enhance", "--method", "ssdrc", "--out-dir", s(tmp.path())]).is_err());
    let err = wssdrc(&["enhance", "--method", "wssdrc", "--in-dir", s(tmp.path()), "--out-dir", s(tmp.path())]);
    assert!(err.unwrap_err().to_string().contains("--checkpoint"));
}

#[test]
fn train_is_deterministic_and_resumable() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    write_synthetic_corpus(&corpus, 4, 2, 1.0, 5).unwrap();
    let manifest = corpus.join("manifest.jsonl");
    let ck = |name: &str| tmp.path().join(name);
    let train = |out: &Path, seed: &str, steps: &str, resume: bool| {
        let mut args = vec![
            "train",
            "--manifest",
            s(&manifest),
            "--checkpoint-out",
            s(out),
            "--seed",
            seed,
            "--epochs",
            "100",
            "--max-steps",
            steps,
            "--checkpoint-every",
            "10",
            "--validation-count",
            "1",
        ];
        if resume {
            args.push("--resume");
        }
        wssdrc(&args).unwrap();
        std::fs::read(out).unwrap()
    };
    let a = train(&ck("a.json"), "7", "20", false);
    let b = train(&ck("b.json"), "7", "20", false);
    assert_eq!(a, b);
    assert_ne!(a, train(&ck("c.json"), "8", "20", false));

    train(&ck("r.json"), "7", "10", false);
    assert_eq!(train(&ck("r.json"), "7", "20", true), a);

    let loss = ck("loss.csv");
    wssdrc(&[
        "train",
        "--manifest",
        s(&manifest),
        "--checkpoint-out",
        s(&ck("d.json")),
        "--seed",
        "7",
        "--max-steps",
        "6",
        "--epochs",
        "100",
        "--loss-csv",
        s(&loss),
    ])
    .unwrap();
    let csv = std::fs::read_to_string(&loss).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("step,lr,loss"));
}

#[test]
fn enhance_wssdrc_from_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    write_synthetic_corpus(&corpus, 3, 3, 1.0, 9).unwrap();
    let manifest = corpus.join("manifest.jsonl");
    let ck = tmp.path().join("ck.json");
    wssdrc(&["train", "--manifest", s(&manifest), "--checkpoint-out", s(&ck), "--max-steps", "5", "--epochs", "10"])
        .unwrap();
    let out = tmp.path().join("out");
    wssdrc(&[
        "enhance",
        "--method",
        "wssdrc",
        "--in-dir",
        s(&corpus.join("wav")),
        "--out-dir",
        s(&out),
        "--checkpoint",
        s(&ck),
    ])
    .unwrap();
    let files = wavs(&out);
    assert_eq!(files.len(), 6);
    for f in &files {
        let input = audio::read_wav(corpus.join("wav").join(f.file_name().unwrap())).unwrap();
        let output = audio::read_wav(f).unwrap();
        assert!(audio::energy_ratio_db(&output, &input).abs() < 1e-3);
    }
    let raw = tmp.path().join("raw");
    wssdrc(&[
        "enhance",
        "--method",
        "wssdrc",
        "--manifest",
        s(&manifest),
        "--out-dir",
        s(&raw),
        "--checkpoint",
        s(&ck),
        "--no-equal-energy",
    ])
    .unwrap();
    assert_eq!(wavs(&raw).len(), 3);
}

#[test]
fn make_ssn_is_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    write_synthetic_corpus(&corpus, 4, 1, 0.5, 1).unwrap();
    let manifest = corpus.join("manifest.jsonl");
    let make = |seed: &str, name: &str| {
        let out = tmp.path().join(name);
        wssdrc(&["make-ssn", "--manifest", s(&manifest), "--duration-s", "2", "--seed", seed, "--out", s(&out)])
            .unwrap();
        std::fs::read(out).unwrap()
    };
    let a = make("1", "a.wav");
    assert_eq!(a, make("1", "b.wav"));
    assert_ne!(a, make("2", "c.wav"));
    let w = audio::read_wav(tmp.path().join("a.wav")).unwrap();
    assert_eq!(w.len(), 32_000);
    assert!((audio::linear_to_dbfs(audio::rms(&w).unwrap()) + 23.0).abs() < 0.01);
}

#[test]
fn mix_writes_named_stimuli() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    let m = write_synthetic_corpus(&corpus, 3, 2, 0.5, 2).unwrap();
    let manifest = corpus.join("manifest.jsonl");
    let out = tmp.path().join("stim");
    let mix = |out: &Path| {
        wssdrc(&["mix", "--manifest", s(&manifest), "--snr", "-3", "--snr", "0.5", "--seed", "4", "--out-dir", s(out)])
    };
    mix(&out).unwrap();
    let names: Vec<String> = wavs(&out).iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    let mut expected = Vec::new();
    for e in m.entries.iter().filter(|e| e.split == wssdrc_core::corpus::Split::Test) {
        for snr in [-3.0, 0.5] {
            expected.push(wssdrc_core::masking::stimulus_file_name(&e.id, "Plain", snr));
        }
    }
    expected.sort();
    assert_eq!(names, expected);
    assert!(names.contains(&format!("{}_Plain_-3dB.wav", m.entries[3].id)));

    let again = tmp.path().join("stim2");
    mix(&again).unwrap();
    for n in &names {
        assert_eq!(std::fs::read(out.join(n)).unwrap(), std::fs::read(again.join(n)).unwrap());
    }
    let err = wssdrc(&["mix", "--manifest", s(&manifest), "--snr", "0", "--condition", "SSDRC", "--out-dir", s(&out)]);
    assert!(err.is_err());
}

#[test]
fn simulated_sessions_score_from_their_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let sim = tmp.path().join("sim");
    let scored = tmp.path().join("scored");
    wssdrc(&[
        "simulate-listeners",
        "--nh",
        "4",
        "--hi",
        "3",
        "--seed",
        "2",
        "--data-dir",
        s(&data),
        "--out-dir",
        s(&sim),
    ])
    .unwrap();
    wssdrc(&["score", "--data-dir", s(&data), "--out-dir", s(&scored)]).unwrap();
    let a = std::fs::read_to_string(sim.join("report.json")).unwrap();
    assert_eq!(a, std::fs::read_to_string(scored.join("report.json")).unwrap());
    let r: wssdrc_cli::commands::ScoreReport = serde_json::from_str(&a).unwrap();
    assert_eq!(r.listeners.len(), 7);
    assert_eq!(r.groups.len(), 2);
    for f in ["listeners.csv", "group_NH.csv", "group_HI.csv"] {
        assert!(scored.join(f).exists(), "{f}");
    }
    assert!(sim.join("listeners.json").exists());

    // listeners.csv feeds straight back into the anova command
    let cols: Vec<String> = ["Plain", "SSDRC", "wSSDRC"].map(String::from).to_vec();
    for g in &r.groups {
        let name = g.group.to_string();
        let a = wssdrc_cli::commands::anova_columns(&scored.join("listeners.csv"), &cols, Some(name.as_str())).unwrap();
        let omnibus = &g.anova[0].result;
        assert_eq!((a.df_between, a.df_within), (omnibus.df_between, omnibus.df_within));
        assert!((a.f_value - omnibus.f_value).abs() <= 1e-9 * omnibus.f_value.abs().max(1.0), "{name}");
    }
    let err = wssdrc_cli::commands::anova_columns(&scored.join("group_NH.csv"), &cols, Some("NH"));
    assert!(err.is_err());
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wssdrc"))
}

#[test]
fn anova_on_identical_columns_gives_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("scores.csv");
    std::fs::write(&csv, "Plain,SSDRC,wSSDRC\n40,40,40\n55,55,55\n62.5,62.5,62.5\n").unwrap();
    let out = bin().arg("anova").arg(&csv).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["f_value"], 0.0);
    assert_eq!(v["p_value"], 1.0);
    assert_eq!(v["df_between"], 2);
    assert_eq!(v["df_within"], 6);
}

#[test]
fn anova_selects_columns_and_skips_blanks() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("scores.csv");
    std::fs::write(&csv, "a,b,c\n1,2,9\n2,3,11\n3,,\n").unwrap();
    let r = wssdrc_cli::commands::anova_columns(&csv, &["a".into(), "c".into()], None).unwrap();
    assert_eq!(r.n, vec![3, 2]);
    // grand mean 5.2: between 3*3.2^2 + 2*4.8^2 = 76.8 on 1 df, within 4 on 3 df
    assert!((r.f_value - 57.6).abs() < 1e-12);
    assert!(wssdrc_cli::commands::anova_columns(&csv, &["zz".into()], None).is_err());
}

#[test]
fn failures_exit_nonzero() {
    let out = bin().args(["anova", "/nonexistent/scores.csv"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    assert!(!bin().args(["frobnicate"]).output().unwrap().status.success());
}

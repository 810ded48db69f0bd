use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_sfi-lee");

const SMALL: &str = r#"
test_rates = [16000.0]
sigma_init_pi = [200.0, 800.0]
seeds = 1
segment_seconds = 0.1
scene_seconds = 0.1
scenes = 2
channels = 8
hidden = 8
blocks = 1
dilations = [1]
"#;

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

/// `SMALL` with the keys set in `extra` replaced.
fn write_config(dir: &Path, name: &str, extra: &str) -> String {
    let key = |l: &str| l.split('=').next().unwrap_or("").trim().to_string();
    let overridden: Vec<String> = extra.lines().map(key).collect();
    let base: String = SMALL
        .lines()
        .filter(|l| !overridden.contains(&key(l)))
        .map(|l| format!("{l}\n"))
        .collect();
    let p = dir.join(name);
    fs::write(&p, format!("{base}{extra}")).unwrap();
    p.to_string_lossy().into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

#[test]
fn sweep_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a.toml", "output_dir = \"a\"\n");
    let b = write_config(dir.path(), "b.toml", "output_dir = \"b\"\n");
    let oa = run(&["sweep", "--config", &a]);
    assert_eq!(code(&oa), 0, "{}", String::from_utf8_lossy(&oa.stderr));
    let ob = run(&["sweep", "--config", &b]);
    assert_eq!(code(&ob), 0);
    let ra = fs::read(dir.path().join("a/rows.csv")).unwrap();
    let rb = fs::read(dir.path().join("b/rows.csv")).unwrap();
    assert!(!ra.is_empty());
    assert_eq!(ra, rb);
    for f in ["correlations.csv", "report.json", "dataset.json"] {
        assert!(dir.path().join("a").join(f).is_file(), "{f}");
    }
}

#[test]
fn knob_and_report_commands() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), "k.toml", "output_dir = \"k\"\n");
    let o = run(&["knob", "--config", &c, "--lambdas", "0,0.25,0.5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = fs::read_to_string(dir.path().join("k/rows.csv")).unwrap();
    // 3 λ × 1 seed × 4 metrics × 1 rate, plus as many averaged rows
    assert_eq!(rows.lines().count(), 1 + 12 + 12);
    assert!(String::from_utf8_lossy(&o.stdout).contains("vs lambda"));
    let out = dir.path().join("r");
    let o = run(&["report", "--in", dir.path().join("k/rows.csv").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("rows.csv")).unwrap(), rows);
    assert_eq!(
        fs::read_to_string(out.join("correlations.csv")).unwrap(),
        fs::read_to_string(dir.path().join("k/correlations.csv")).unwrap()
    );
}

#[test]
fn weights_metrics_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), "m.toml", "output_dir = \"m\"\n");
    let w = dir.path().join("w.sfw");
    let o = run(&["init-weights", "--config", &c, "--seed", "3", "--sigma-pi", "800", "--out", w.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["metrics", "--config", &c, "--weights", w.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    for name in ["LN-LEE", "LLN-LEE", "dLN-LEE", "Mask-LN-LEE"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{name}\t"))), "{text}");
    }
    assert!(dir.path().join("m/metrics.json").is_file());
    let o = run(&["eval", "--config", &c, "--weights", w.to_str().unwrap(), "--rate", "16000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("degradation"));

    // weights for a different model shape are a config error
    let other = write_config(dir.path(), "o.toml", "channels = 4\n");
    assert_eq!(code(&run(&["metrics", "--config", &other, "--weights", w.to_str().unwrap()])), 2);
    // a corrupt weight file is a data error
    let bad = dir.path().join("bad.sfw");
    fs::write(&bad, b"nope").unwrap();
    assert_eq!(code(&run(&["metrics", "--config", &c, "--weights", bad.to_str().unwrap()])), 3);
}

#[test]
fn resample_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    let n = 1600u32;
    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&(36 + 4 * n).to_le_bytes());
    bytes.extend_from_slice(b"WAVEfmt ");
    bytes.extend_from_slice(&16u32.to_le_bytes());
    bytes.extend_from_slice(&3u16.to_le_bytes());
    bytes.extend_from_slice(&1u16.to_le_bytes());
    bytes.extend_from_slice(&16000u32.to_le_bytes());
    bytes.extend_from_slice(&64000u32.to_le_bytes());
    bytes.extend_from_slice(&4u16.to_le_bytes());
    bytes.extend_from_slice(&32u16.to_le_bytes());
    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&(4 * n).to_le_bytes());
    for i in 0..n {
        let v = (2.0 * std::f32::consts::PI * 440.0 * i as f32 / 16000.0).sin() * 0.5;
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let input = dir.path().join("in.wav");
    let output = dir.path().join("out.wav");
    fs::write(&input, &bytes).unwrap();
    let o = run(&["resample", input.to_str().unwrap(), output.to_str().unwrap(), "--rate", "32000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = fs::read(&output).unwrap();
    assert_eq!(u32::from_le_bytes(out[24..28].try_into().unwrap()), 32000);
    assert_eq!(u32::from_le_bytes(out[40..44].try_into().unwrap()), 4 * 2 * n);

    let truncated = dir.path().join("t.wav");
    fs::write(&truncated, &bytes[..36]).unwrap();
    let o = run(&["resample", truncated.to_str().unwrap(), output.to_str().unwrap(), "--rate", "8000"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("data"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let typo = write_config(dir.path(), "typo.toml", "sigma_grid = [1.0]\n");
    assert_eq!(code(&run(&["sweep", "--config", &typo])), 2);
    let missing = dir.path().join("absent.toml");
    assert_eq!(code(&run(&["sweep", "--config", missing.to_str().unwrap()])), 2);
    let no_data = write_config(dir.path(), "nd.toml", "dataset_dir = \"nowhere\"\n");
    assert_eq!(code(&run(&["sweep", "--config", &no_data])), 3);
    let short = write_config(dir.path(), "short.toml", "segment_seconds = 1.0\n");
    assert_eq!(code(&run(&["sweep", "--config", &short])), 3);
    let tiny = write_config(dir.path(), "tiny.toml", "segment_seconds = 0.0005\n");
    assert_eq!(code(&run(&["sweep", "--config", &tiny])), 4);
    let ok = write_config(dir.path(), "ok.toml", "");
    let o = Command::new(BIN)
        .args(["sweep", "--config", &ok])
        .env("SFI_LEE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert_eq!(code(&run(&["knob", "--config", &ok, "--lambdas", "-1"])), 2);
}

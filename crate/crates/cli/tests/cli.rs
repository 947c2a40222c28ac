use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

const GAP: u32 = 2;
const SIDE: u32 = 64;

fn resage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resage")).args(args).output().expect("spawn resage")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn line_value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(key).map(str::trim))
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

struct Fixture {
    _dir: tempfile::TempDir,
    manifest: PathBuf,
    checkpoint: PathBuf,
    image: PathBuf,
}

/// Small dataset plus a one-epoch checkpoint, built once per test binary.
fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let o = resage(&["synth-data", "--out", s(&data), "--identities", "20", "--per-identity", "4", "--seed", "3"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let manifest = data.join("manifest.csv");
        let run = dir.path().join("run");
        let o = resage(&["train", "--manifest", s(&manifest), "--out", s(&run), "--epochs", "1", "--seed", "1"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let checkpoint = run.join("checkpoint.safetensors");
        let first = std::fs::read_to_string(&manifest).unwrap();
        let rel = first.lines().nth(1).unwrap().split(',').next().unwrap().to_string();
        Fixture { image: data.join(rel), _dir: dir, manifest, checkpoint }
    })
}

fn decode(path: &Path) -> image::RgbImage {
    image::open(path).unwrap().to_rgb8()
}

#[test]
fn synth_data_counts_and_hash_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut digests = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = resage(&["synth-data", "--out", s(&out), "--identities", "5", "--per-identity", "3", "--seed", "9"]);
        assert!(o.status.success());
        let text = stdout(&o);
        assert_eq!(line_value(&text, "images "), Some("15"));
        digests.push(line_value(&text, "sha256 ").unwrap().to_string());
        let rows = std::fs::read_to_string(out.join("manifest.csv")).unwrap().lines().count();
        assert_eq!(rows, 16);
    }
    assert_eq!(digests[0], digests[1]);
    assert_eq!(digests[0].len(), 64);
}

#[test]
fn zero_epochs_writes_an_initial_checkpoint() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run0");
    let o = resage(&["train", "--manifest", s(&f.manifest), "--out", s(&out), "--epochs", "0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("checkpoint.safetensors").exists());
}

#[test]
fn out_of_range_target_is_a_validation_error() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("aged.png");
    let o = resage(&["infer", "--checkpoint", s(&f.checkpoint), "--image", s(&f.image), "--target-age", "120", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn fractional_targets_are_accepted() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("aged.png");
    let o = resage(&["infer", "--checkpoint", s(&f.checkpoint), "--image", s(&f.image), "--target-age", "30.5", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(line_value(&text, "target_age "), Some("30.5"));
    let m: f64 = line_value(&text, "self_estimated_age ").unwrap().parse().unwrap();
    assert!(m.is_finite());
    assert_eq!(decode(&out).dimensions(), (SIDE, SIDE));
}

#[test]
fn sweep_frame_counts() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    for (lo, hi, step, frames) in [("40", "40", "4", 1u32), ("21", "65", "4", 12)] {
        let out = dir.path().join(format!("strip_{lo}_{hi}.png"));
        let o = resage(&[
            "sweep", "--checkpoint", s(&f.checkpoint), "--image", s(&f.image), "--lo", lo, "--hi", hi, "--step", step, "--out", s(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(line_value(&stdout(&o), "frames "), Some(frames.to_string().as_str()));
        assert_eq!(decode(&out).width(), frames * (SIDE + GAP) + GAP);
    }
}

#[test]
fn sweep_frames_equal_single_inference() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let strip = dir.path().join("strip.png");
    let o = resage(&["sweep", "--checkpoint", s(&f.checkpoint), "--image", s(&f.image), "--out", s(&strip)]);
    assert!(o.status.success());
    let strip = decode(&strip);
    for (i, age) in [(0u32, "20"), (6, "44"), (11, "64")] {
        let out = dir.path().join(format!("aged_{age}.png"));
        let o = resage(&["infer", "--checkpoint", s(&f.checkpoint), "--image", s(&f.image), "--target-age", age, "--out", s(&out)]);
        assert!(o.status.success());
        let single = decode(&out);
        let x0 = GAP + i * (SIDE + GAP);
        let frame = image::imageops::crop_imm(&strip, x0, GAP, SIDE, SIDE).to_image();
        assert_eq!(frame, single, "frame at age {age}");
    }
}

#[test]
fn bad_grid_and_unknown_suite_exit_with_one() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("strip.png");
    let o = resage(&["sweep", "--checkpoint", s(&f.checkpoint), "--image", s(&f.image), "--lo", "50", "--hi", "30", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let o = resage(&["eval", "--checkpoint", s(&f.checkpoint), "--manifest", s(&f.manifest), "--suite", "bogus", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    let o = resage(&["no-such-command"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_checkpoint_is_a_runtime_error() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.safetensors");
    let out = dir.path().join("aged.png");
    let o = resage(&["infer", "--checkpoint", s(&missing), "--image", s(&f.image), "--target-age", "40", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_config_leaves_output_untouched() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "epochs = 2\nlr = -1.0\n").unwrap();
    let out = dir.path().join("never");
    let o = resage(&["train", "--manifest", s(&f.manifest), "--out", s(&out), "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let o = resage(&["train", "--manifest", s(&f.manifest), "--out", s(&out), "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn eval_suites_write_reports() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str]); 3] = [
        ("age-table", &["age_table_embedded.json", "age_table_oracle.txt"]),
        ("interp", &["interpolation.png"]),
        ("confusion", &["confusion_self_estimated_oracle.json", "confusion_interpolated_embedded.png"]),
    ];
    for (suite, files) in cases {
        let out = dir.path().join(suite);
        let o = resage(&["eval", "--checkpoint", s(&f.checkpoint), "--manifest", s(&f.manifest), "--suite", suite, "--out", s(&out)]);
        assert!(o.status.success(), "{suite}: {}", String::from_utf8_lossy(&o.stderr));
        for file in files {
            assert!(out.join(file).exists(), "{suite} missing {file}");
        }
    }
}

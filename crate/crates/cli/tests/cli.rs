use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

const BIN: &str = env!("CARGO_BIN_EXE_hsvae");

fn idx(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut v = magic.to_be_bytes().to_vec();
    for d in dims {
        v.extend_from_slice(&d.to_be_bytes());
    }
    v.extend_from_slice(payload);
    v
}

/// Writes `m` synthetic 28x28 images per split under the official file
/// names: label `l` lights a horizontal band starting at row `2 l`.
fn write_fixture(dir: &Path, train: usize, test: usize) {
    fs::create_dir_all(dir).unwrap();
    for (img, lbl, m, offset) in [
        ("train-images-idx3-ubyte", "train-labels-idx1-ubyte", train, 0),
        ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", test, 7),
    ] {
        let labels: Vec<u8> = (0..m).map(|i| ((i + offset) % 10) as u8).collect();
        let mut pixels = Vec::with_capacity(m * 784);
        for (i, &l) in labels.iter().enumerate() {
            for r in 0..28 {
                for c in 0..28 {
                    let band = r >= 2 * l as usize + 3 && r < 2 * l as usize + 7 && (4..24).contains(&c);
                    let jitter = ((i * 31 + r * 7 + c * 13) % 40) as u8;
                    pixels.push(if band { 200 + jitter / 2 } else { jitter });
                }
            }
        }
        fs::write(dir.join(img), idx(0x0803, &[m as u32, 28, 28], &pixels)).unwrap();
        fs::write(dir.join(lbl), idx(0x0801, &[m as u32], &labels)).unwrap();
    }
}

struct Run {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Run {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        write_fixture(&root.join("idx"), 200, 100);
        Run { _tmp: tmp, root }
    }

    fn config(&self, name: &str, mode: &str, extra: &str) -> PathBuf {
        let text = format!(
            r#"out = "{out}"

[train]
latent_dim = 4
batch_size = 20
epochs = 2
anneal_epochs = 2
mode = "{mode}"
seed = 3
hidden = [16]

[data]
idx_dir = "{idx}"
cache_dir = "{cache}"
offline = true

[eval]
fid_count = 50
{extra}
"#,
            out = self.root.join(name).display(),
            idx = self.root.join("idx").display(),
            cache = self.root.join("cache").display(),
        );
        let path = self.root.join(format!("{name}.toml"));
        fs::write(&path, text).unwrap();
        path
    }

    fn out(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

fn hsvae(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let o = hsvae(args);
    assert!(
        o.status.success(),
        "{args:?} failed ({:?}): {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn code(args: &[&str]) -> Option<i32> {
    hsvae(args).status.code()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Data rows of a CSV artifact, after the fingerprint line and header.
fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn fingerprint_of(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    text.lines().next().unwrap().strip_prefix("# fingerprint=").expect("fingerprint line").to_string()
}

#[test]
fn train_writes_fingerprinted_artifacts_quickly() {
    let run = Run::new();
    let cfg = run.config("std", "standard", "");
    let start = Instant::now();
    ok(&["train", "--config", s(&cfg)]);
    assert!(start.elapsed().as_secs_f64() < 60.0);
    let out = run.out("std");
    for f in ["model.ckpt", "train_log.csv", "timing.csv", "config.toml"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let fp = fingerprint_of(&out.join("train_log.csv"));
    assert_eq!(fp.len(), 64);
    assert_eq!(fingerprint_of(&out.join("timing.csv")), fp);
    assert_eq!(csv_rows(&out.join("train_log.csv")).len(), 3);
    let ckpt = fs::read(out.join("model.ckpt")).unwrap();
    assert!(ckpt.windows(32).any(|w| hex_of(w) == fp));
}

fn hex_of(b: &[u8]) -> String {
    b.iter().map(|v| format!("{v:02x}")).collect()
}

#[test]
fn reruns_are_identical() {
    let run = Run::new();
    for mode in ["standard", "hyperspherical"] {
        let (a, b) = (format!("{mode}_a"), format!("{mode}_b"));
        let ca = run.config(&a, mode, "");
        let cb = run.config(&b, mode, "");
        ok(&["train", "--config", s(&ca)]);
        ok(&["train", "--config", s(&cb)]);
        let strip = |name: &str| -> Vec<Vec<String>> {
            csv_rows(&run.out(name).join("train_log.csv")).into_iter().map(|mut r| {
                r.pop();
                r
            }).collect()
        };
        let header = fs::read_to_string(run.out(&a).join("train_log.csv")).unwrap();
        assert!(header.lines().nth(1).unwrap().ends_with("seconds"));
        assert_eq!(strip(&a), strip(&b));
        let ckpt = |name: &str| fs::read(run.out(name).join("model.ckpt")).unwrap();
        // Output directories differ, so the fingerprints do too; weights must not.
        let (x, y) = (ckpt(&a), ckpt(&b));
        assert_eq!(x.len(), y.len());
        let differing = x.iter().zip(&y).filter(|(p, q)| p != q).count();
        assert!(differing <= 32, "{differing} bytes differ");
    }
}

#[test]
fn eval_reproduces_final_training_mse() {
    let run = Run::new();
    let cfg = run.config("hs", "hyperspherical", "");
    ok(&["train", "--config", s(&cfg)]);
    let out = run.out("hs");
    let ckpt = out.join("model.ckpt");
    ok(&["eval", "--checkpoint", s(&ckpt), "--config", s(&cfg), "--metrics", "mse", "--mse-split", "train"]);
    let log = csv_rows(&out.join("train_log.csv"));
    let final_mse: f64 = log.last().unwrap()[1].parse().unwrap();
    let rows = csv_rows(&out.join("metrics.csv"));
    let row = rows.iter().find(|r| r[0] == "mse_train").expect("mse_train row");
    let v: f64 = row[4].parse().unwrap();
    assert!((v - final_mse).abs() < 1e-9, "{v} vs {final_mse}");
    assert_eq!(row[7], fingerprint_of(&out.join("train_log.csv")));

    ok(&["eval", "--checkpoint", s(&ckpt), "--config", s(&cfg)]);
    let names: Vec<String> = csv_rows(&out.join("metrics.csv")).into_iter().map(|r| r[0].clone()).collect();
    for m in ["mse_test", "knn_accuracy", "self_fid_proxy"] {
        assert!(names.iter().any(|n| n == m), "{m} missing from {names:?}");
    }
    assert!(out.join("concentration.csv").exists());
}

#[test]
fn generate_is_deterministic_and_vmf_needs_reference() {
    let run = Run::new();
    let cfg = run.config("hs", "hyperspherical", "");
    ok(&["train", "--config", s(&cfg)]);
    let ckpt = run.out("hs").join("model.ckpt");
    let (g1, g2) = (run.out("g1"), run.out("g2"));
    ok(&["generate", "--checkpoint", s(&ckpt), "--count", "16", "--seed", "5", "--out", s(&g1)]);
    ok(&["generate", "--checkpoint", s(&ckpt), "--count", "16", "--seed", "5", "--out", s(&g2)]);
    let png = fs::read(g1.join("samples.png")).unwrap();
    assert_eq!(png, fs::read(g2.join("samples.png")).unwrap());
    assert!(png.windows(11).any(|w| w == b"fingerprint"));
    assert_eq!(csv_rows(&g1.join("latents.csv")).len(), 16);

    assert_eq!(code(&["generate", "--checkpoint", s(&ckpt), "--source", "vmf", "--out", s(&g1)]), Some(2));
    let g3 = run.out("g3");
    let reference = g1.join("latents.csv");
    ok(&["generate", "--checkpoint", s(&ckpt), "--source", "vmf", "--reference", s(&reference), "--out", s(&g3)]);
    let fit = csv_rows(&g3.join("vmf_fit.csv"));
    assert_eq!(fit[0].len(), 1 + 4);
    assert_eq!(code(&["generate", "--checkpoint", s(&ckpt), "--count", "0", "--out", s(&g3)]), Some(2));
}

#[test]
fn project_and_sweep_row_counts() {
    let run = Run::new();
    let cfg = run.config("p", "hyperspherical", "");
    ok(&["train", "--config", s(&cfg)]);
    ok(&["project", "--checkpoint", s(&run.out("p").join("model.ckpt")), "--config", s(&cfg)]);
    let rows = csv_rows(&run.out("p").join("projection.csv"));
    assert_eq!(rows.len(), 100);
    for r in &rows {
        let v: Vec<f64> = r[..3].iter().map(|x| x.parse().unwrap()).collect();
        assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-9);
    }

    let sweep_cfg = run.config("sw", "standard", "\n[sweep]\nbetas = [0.5, 1.0]\nlatent_dims = [3, 4]\n");
    ok(&["sweep", "--config", s(&sweep_cfg)]);
    let rows = csv_rows(&run.out("sw").join("sweep.csv"));
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r[5] == "ok"), "{rows:?}");
}

#[test]
fn exit_codes() {
    let run = Run::new();
    let missing = run.root.join("nope.toml");
    assert_eq!(code(&["train", "--config", s(&missing)]), Some(2));
    let bad = run.root.join("bad.toml");
    fs::write(&bad, "[train]\nlatent_dim = 4\nbogus = 1\n").unwrap();
    assert_eq!(code(&["train", "--config", s(&bad)]), Some(2));
    assert_eq!(code(&["train", "--no-such-flag"]), Some(2));
    let cfg = run.config("e", "standard", "");
    assert_eq!(code(&["train", "--config", s(&cfg), "--latent-dim", "0"]), Some(2));

    // Truncated image file.
    let broken = run.root.join("broken");
    write_fixture(&broken, 50, 20);
    let p = broken.join("train-images-idx3-ubyte");
    let bytes = fs::read(&p).unwrap();
    fs::write(&p, &bytes[..bytes.len() - 10]).unwrap();
    let text = fs::read_to_string(&cfg).unwrap().replace(s(&run.root.join("idx")), s(&broken));
    let broken_cfg = run.root.join("broken.toml");
    fs::write(&broken_cfg, text).unwrap();
    assert_eq!(code(&["train", "--config", s(&broken_cfg)]), Some(4));
    // Nothing cached and no network allowed.
    let offline = run.root.join("offline.toml");
    let text = fs::read_to_string(&cfg).unwrap().replace(&format!("idx_dir = \"{}\"\n", run.root.join("idx").display()), "");
    fs::write(&offline, text).unwrap();
    assert_eq!(code(&["train", "--config", s(&offline)]), Some(4));

    // Corrupt checkpoint.
    let junk = run.root.join("junk.ckpt");
    fs::write(&junk, b"not a checkpoint").unwrap();
    assert_eq!(code(&["generate", "--checkpoint", s(&junk), "--out", s(&run.out("j"))]), Some(3));

    ok(&["train", "--config", s(&cfg)]);
    let ckpt = run.out("e").join("model.ckpt");
    assert_eq!(code(&["eval", "--checkpoint", s(&ckpt), "--config", s(&cfg), "--metrics", "bogus"]), Some(2));
    let empty = run.config("e2", "standard", "metrics = []");
    assert_eq!(code(&["eval", "--checkpoint", s(&ckpt), "--config", s(&empty)]), Some(2));
}

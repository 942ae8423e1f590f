//! End-to-end checks on the `gnr` binary: exit codes, error messages and the
//! files each command leaves behind.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use gnr_formats::RunConfig;
use tempfile::TempDir;

fn gnr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gnr")).args(args).output().expect("spawn gnr")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn pngs(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "png") {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

struct Fixture {
    root: PathBuf,
    data: PathBuf,
    config: PathBuf,
    checkpoint: PathBuf,
}

/// A tiny dataset and a few-iteration run shared by the tests below.
fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        // A static is never dropped, so the fixture lives in cargo's scratch
        // directory rather than a self-deleting temp dir.
        let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli-fixture");
        let _ = fs::remove_dir_all(&root);
        fs::create_dir_all(&root).unwrap();
        let data = root.join("data");
        let out = gnr(&["make-toy-data", "--out", s(&data), "--counts", "80,80", "--resolution", "32", "--seed", "2"]);
        assert!(out.status.success(), "{}", stderr(&out));
        let config = root.join("run.cfg");
        fs::write(
            &config,
            format!(
                "[train]\nresolution = 32\ntotal_iterations = 3\ncheckpoint_every = 3\nsample_every = 3\n\
                 [data]\nroot = {}\n[metrics]\ndfid_m = 70\ndfid_n = 3\ndiversity_k = 4\ndiversity_n = 2\n\
                 [output]\ndir = {}\nrun_name = tiny\n",
                data.display(),
                root.join("runs").display()
            ),
        )
        .unwrap();
        let out = gnr(&["train", "--config", s(&config)]);
        assert!(out.status.success(), "{}", stderr(&out));
        let checkpoint = PathBuf::from(String::from_utf8(out.stdout).unwrap().trim());
        assert!(checkpoint.exists());
        Fixture {
            root,
            data,
            config,
            checkpoint,
        }
    })
}

#[test]
fn missing_dataset_is_a_validation_failure_naming_the_path() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("c.cfg");
    let missing = tmp.path().join("nowhere");
    fs::write(&cfg, format!("[data]\nroot = {}\n[output]\ndir = {}\n", missing.display(), tmp.path().display())).unwrap();
    let out = gnr(&["train", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains(s(&missing)), "{}", stderr(&out));
}

#[test]
fn negative_loss_weight_is_a_validation_failure_naming_the_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("c.cfg");
    fs::write(&cfg, "[train]\nlambda_scon = -1\n").unwrap();
    let out = gnr(&["train", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("lambda_scon"), "{}", stderr(&out));
    assert_eq!(stderr(&out).trim().lines().count(), 1);
}

#[test]
fn corrupt_checkpoint_is_a_runtime_failure() {
    let f = fixture();
    let bad = f.root.join("corrupt.gnrc");
    let mut bytes = fs::read(&f.checkpoint).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x5a;
    fs::write(&bad, bytes).unwrap();
    let input = pngs(&f.data)[0].clone();
    let out = gnr(&["translate", "--checkpoint", s(&bad), "--inputs", s(&input), "--out", s(&f.root.join("x.png"))]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn translate_grid_has_one_row_per_input_and_a_column_per_style() {
    let f = fixture();
    let inputs = pngs(&f.data);
    let out_path = f.root.join("grid.png");
    let mut args = vec!["translate", "--checkpoint", s(&f.checkpoint), "--num-styles", "6", "--out", s(&out_path)];
    args.push("--inputs");
    args.extend(inputs[..4].iter().map(|p| s(p)));
    let out = gnr(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let img = image::open(&out_path).unwrap();
    assert_eq!((img.width(), img.height()), (7 * 32, 4 * 32));

    let recon = f.root.join("recon.png");
    let out = gnr(&["translate", "--checkpoint", s(&f.checkpoint), "--num-styles", "0", "--inputs", s(&inputs[0]), "--out", s(&recon)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let img = image::open(&recon).unwrap();
    assert_eq!((img.width(), img.height()), (2 * 32, 32));
}

#[test]
fn echoed_config_reparses_to_the_run_config() {
    let f = fixture();
    let echoed = fs::read_to_string(f.root.join("runs/tiny/config.txt")).unwrap();
    let original = RunConfig::parse(&fs::read_to_string(&f.config).unwrap()).unwrap();
    assert_eq!(RunConfig::parse(&echoed).unwrap(), original);
    let manifest = fs::read_to_string(f.root.join("runs/tiny/manifest.txt")).unwrap();
    assert!(manifest.contains(&original.hash()));
}

#[test]
fn eval_report_echoes_population_sizes() {
    let f = fixture();
    let dir = f.root.join("eval");
    let out = gnr(&["eval", "--checkpoint", s(&f.checkpoint), "--config", s(&f.config), "--out", s(&dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    for metric in ["dfid", "fid", "fid_inf", "pairwise_diversity"] {
        assert!(csv.lines().any(|l| l.starts_with(&format!("{metric},"))), "{csv}");
    }
    assert!(csv.contains("dfid_m=70 dfid_n=3 diversity_k=4 diversity_n=2"), "{csv}");
    assert!(csv.lines().any(|l| l.starts_with("dfid,") && l.contains(",70 3,")), "{csv}");
}

#[test]
fn eval_rejects_more_test_images_than_exist() {
    let f = fixture();
    let cfg = f.root.join("greedy.cfg");
    let text = fs::read_to_string(&f.config).unwrap().replace("dfid_n = 3", "dfid_n = 500");
    fs::write(&cfg, text).unwrap();
    let out = gnr(&["eval", "--checkpoint", s(&f.checkpoint), "--config", s(&cfg), "--out", s(&f.root.join("e2"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("dfid_n"), "{}", stderr(&out));
}

#[test]
fn toy_data_is_reproducible_per_seed() {
    let tmp = TempDir::new().unwrap();
    let make = |name: &str, seed: &str| {
        let dir = tmp.path().join(name);
        let out = gnr(&["make-toy-data", "--out", s(&dir), "--seed", seed]);
        assert!(out.status.success(), "{}", stderr(&out));
        pngs(&dir).iter().map(|p| fs::read(p).unwrap()).collect::<Vec<_>>()
    };
    let a = make("a", "1");
    assert_eq!(a.len(), 1000);
    assert_eq!(a, make("b", "1"));
    assert_ne!(a, make("c", "2"));
}

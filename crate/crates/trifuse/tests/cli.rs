//! Black-box tests of the `trifuse` binary: exit codes, subcommand
//! wiring, determinism of generated artifacts, and environment overrides.

use std::path::Path;
use std::process::{Command, Output};

fn trifuse() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_trifuse"));
    cmd.env_remove("TRIFUSE_OUTPUT_DIR");
    cmd
}

fn run(cmd: &mut Command) -> (Option<i32>, String, String) {
    let Output {
        status,
        stdout,
        stderr,
    } = cmd.output().expect("spawn trifuse");
    (
        status.code(),
        String::from_utf8_lossy(&stdout).into_owned(),
        String::from_utf8_lossy(&stderr).into_owned(),
    )
}

/// Tiny corpus: 72 samples of 8x8 images and 6-token texts.
fn write_tiny_spec(path: &Path) {
    std::fs::write(
        path,
        "n_per_class = 12\nimage_size = 8\ntext_len = 6\nseed = 5\n",
    )
    .unwrap();
}

fn tiny_train_config(data_dir: &Path, out_dir: &Path) -> String {
    format!(
        "dataset = {}\n\
         output_dir = {}\n\
         seed = 3\n\
         vocab_size = 64\n\
         strategy = text_only\n\
         model.text.d_model = 8\n\
         model.text.n_layers = 1\n\
         model.text.n_heads = 2\n\
         model.text.max_len = 8\n\
         model.vision.image_size = 8\n\
         model.vision.patch_size = 4\n\
         train.epochs = 2\n\
         train.batch_size = 8\n\
         train.patience = 2\n",
        data_dir.display(),
        out_dir.display()
    )
}

#[test]
fn help_lists_every_subcommand() {
    let (code, stdout, _) = run(trifuse().arg("--help"));
    assert_eq!(code, Some(0));
    for sub in ["gen-data", "train", "eval", "compare", "gradcheck"] {
        assert!(stdout.contains(sub), "help is missing {sub}:\n{stdout}");
    }
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let (code, _, stderr) = run(trifuse().arg("frobnicate"));
    assert_eq!(code, Some(2), "stderr: {stderr}");
}

#[test]
fn gen_data_is_deterministic_and_reports_headroom() {
    let root = tempfile::tempdir().unwrap();
    let spec = root.path().join("spec.kv");
    write_tiny_spec(&spec);
    let mut manifests = Vec::new();
    for tag in ["a", "b"] {
        let out = root.path().join(tag);
        let (code, stdout, stderr) = run(trifuse()
            .arg("gen-data")
            .arg("--spec")
            .arg(&spec)
            .arg("--out")
            .arg(&out));
        assert_eq!(code, Some(0), "stderr: {stderr}");
        assert!(
            stdout.contains("bayes-optimal accuracy") && stdout.contains("fusion headroom"),
            "stdout: {stdout}"
        );
        manifests.push(std::fs::read(out.join("manifest.tsv")).unwrap());
    }
    assert_eq!(manifests[0], manifests[1], "same spec, same manifest");
}

#[test]
fn seed_flag_overrides_the_spec_seed() {
    let root = tempfile::tempdir().unwrap();
    let spec = root.path().join("spec.kv");
    write_tiny_spec(&spec);
    let read = |dir: &Path| std::fs::read(dir.join("manifest.tsv")).unwrap();

    let base = root.path().join("base");
    let (code, _, _) = run(trifuse()
        .args(["gen-data", "--spec"])
        .arg(&spec)
        .arg("--out")
        .arg(&base));
    assert_eq!(code, Some(0));

    let reseeded = root.path().join("reseeded");
    let (code, _, _) = run(trifuse()
        .args(["--seed", "99", "gen-data", "--spec"])
        .arg(&spec)
        .arg("--out")
        .arg(&reseeded));
    assert_eq!(code, Some(0));
    assert_ne!(
        read(&base),
        read(&reseeded),
        "--seed 99 must change the generated corpus"
    );

    let repeat = root.path().join("repeat");
    let (code, _, _) = run(trifuse()
        .args(["--seed", "99", "gen-data", "--spec"])
        .arg(&spec)
        .arg("--out")
        .arg(&repeat));
    assert_eq!(code, Some(0));
    assert_eq!(read(&reseeded), read(&repeat), "same override, same corpus");
}

#[test]
fn invalid_config_exits_1_and_names_every_problem() {
    let root = tempfile::tempdir().unwrap();
    let config = root.path().join("bad.kv");
    std::fs::write(
        &config,
        "strategy = psychic\nmodel.text.d_model = lots\nno_equals_here\n",
    )
    .unwrap();
    let (code, _, stderr) = run(trifuse().arg("train").arg("--config").arg(&config));
    assert_eq!(code, Some(1), "stderr: {stderr}");
    for needle in ["line 1", "line 2", "line 3"] {
        assert!(
            stderr.contains(needle),
            "stderr must cite {needle}:\n{stderr}"
        );
    }
}

#[test]
fn missing_files_exit_2() {
    let (code, _, stderr) = run(trifuse()
        .args([
            "eval",
            "--checkpoint",
            "/nonexistent/model.ckpt",
            "--manifest",
        ])
        .arg("/nonexistent/manifest.tsv"));
    assert_eq!(code, Some(2), "stderr: {stderr}");
    assert!(stderr.contains("error:"), "stderr: {stderr}");
}

#[test]
fn train_then_eval_roundtrip() {
    let root = tempfile::tempdir().unwrap();
    let spec = root.path().join("spec.kv");
    write_tiny_spec(&spec);
    let data_dir = root.path().join("data");
    let (code, _, stderr) = run(trifuse()
        .arg("gen-data")
        .arg("--spec")
        .arg(&spec)
        .arg("--out")
        .arg(&data_dir));
    assert_eq!(code, Some(0), "stderr: {stderr}");

    let out_dir = root.path().join("runs");
    let config = root.path().join("train.kv");
    std::fs::write(&config, tiny_train_config(&data_dir, &out_dir)).unwrap();
    let (code, stdout, stderr) = run(trifuse()
        .arg("train")
        .arg("--config")
        .arg(&config)
        .args(["--modality", "text"]));
    assert_eq!(code, Some(0), "stderr: {stderr}");
    assert!(stdout.contains("text_only.ckpt"), "stdout: {stdout}");

    let checkpoint = out_dir.join("text_only.ckpt");
    assert!(checkpoint.is_file());
    let (code, stdout, stderr) = run(trifuse()
        .arg("eval")
        .arg("--checkpoint")
        .arg(&checkpoint)
        .arg("--manifest")
        .arg(data_dir.join("manifest.tsv")));
    assert_eq!(code, Some(0), "stderr: {stderr}");
    for split in ["[train]", "[val]", "[test]"] {
        assert!(stdout.contains(split), "stdout: {stdout}");
    }
}

#[test]
fn output_dir_env_var_redirects_artifacts() {
    let root = tempfile::tempdir().unwrap();
    let spec = root.path().join("spec.kv");
    write_tiny_spec(&spec);
    let data_dir = root.path().join("data");
    let (code, _, _) = run(trifuse()
        .arg("gen-data")
        .arg("--spec")
        .arg(&spec)
        .arg("--out")
        .arg(&data_dir));
    assert_eq!(code, Some(0));

    let ignored = root.path().join("ignored");
    let redirected = root.path().join("redirected");
    let config = root.path().join("train.kv");
    std::fs::write(&config, tiny_train_config(&data_dir, &ignored)).unwrap();
    let (code, _, stderr) = run(trifuse()
        .env("TRIFUSE_OUTPUT_DIR", &redirected)
        .arg("train")
        .arg("--config")
        .arg(&config)
        .args(["--modality", "text"]));
    assert_eq!(code, Some(0), "stderr: {stderr}");
    assert!(redirected.join("text_only.ckpt").is_file());
    assert!(!ignored.exists(), "config output_dir must be overridden");
}

#[test]
fn gradcheck_subcommand_passes_on_a_pocket_model() {
    let root = tempfile::tempdir().unwrap();
    let config = root.path().join("gradcheck.kv");
    std::fs::write(
        &config,
        "seed = 7\n\
         vocab_size = 16\n\
         model.text.d_model = 8\n\
         model.text.n_layers = 1\n\
         model.text.n_heads = 2\n\
         model.text.max_len = 8\n\
         model.vision.image_size = 8\n\
         model.vision.patch_size = 4\n\
         model.vision.d_model = 8\n\
         model.vision.n_layers = 1\n\
         model.vision.n_heads = 2\n\
         model.fusion.d_fuse = 8\n",
    )
    .unwrap();
    let (code, stdout, stderr) = run(trifuse().arg("gradcheck").arg("--config").arg(&config));
    assert_eq!(code, Some(0), "stderr: {stderr}\nstdout: {stdout}");
    assert!(
        stdout.contains("all strategies match finite differences"),
        "stdout: {stdout}"
    );
}

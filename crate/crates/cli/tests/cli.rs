use std::path::Path;
use std::process::{Command, Output};

fn ghn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ghn")).args(args).current_dir(cwd).output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn find(dir: &Path, prefix: &str) -> Vec<std::path::PathBuf> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with(prefix))
        .collect();
    v.sort();
    v
}

const SMALL: [&str; 6] = ["--hidden-dim", "16", "--num-patterns", "16", "--epochs", "20"];

#[test]
fn verify_theory_passes_on_bundled_instances() {
    let dir = tempfile::tempdir().unwrap();
    let out = ghn(&["verify-theory", "--seed", "7", "--out-dir", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("all certificates passed"));
    assert!(stdout.contains("convex_boundary"));
    assert!(!stdout.contains("\tFail\t"));
    assert_eq!(find(&dir.path().join("o"), "theory-").len(), 2);
}

#[test]
fn unknown_config_key_exits_2_with_suggestion() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "# typo\nlamda=0.3\n").unwrap();
    let out = ghn(&["train", "--config", "bad.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("did you mean `lambda`"), "{}", text(&out.stderr));

    let out = ghn(&["train", "--set", "hiden_dim=8"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("hidden_dim"));
}

#[test]
fn invalid_values_and_missing_data_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ghn(&["sweep", "--axis", "H", "--values", "3"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", text(&out.stderr));
    let out = ghn(&["train", "--data", "no/such/dir"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", text(&out.stderr));
    let out = ghn(&["train", "--alpha", "1.5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_lists_every_key_with_default() {
    let dir = tempfile::tempdir().unwrap();
    let top = text(&ghn(&["--help"], dir.path()).stdout);
    let train = text(&ghn(&["train", "--help"], dir.path()).stdout);
    for (key, default, _) in ghn_core::config::KEYS {
        assert!(top.contains(key), "top-level help lacks {key}");
        assert!(train.contains(&format!("--{}", key.replace('_', "-"))), "train help lacks {key}");
        assert!(train.contains(&format!("[default: {default}]")));
    }
}

#[test]
fn train_writes_records_and_replay_matches() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--seeds", "0,1", "--out-dir", "a", "--emit-plot-data"];
    args.extend(SMALL);
    let out = ghn(&args, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let a = dir.path().join("a");
    let manifest = find(&a, "manifest-").pop().unwrap();
    let tag = manifest.file_stem().unwrap().to_string_lossy().trim_start_matches("manifest-").to_string();
    for f in ["records", "train", "plot", "model-seed0", "model-seed1"] {
        assert_eq!(find(&a, &format!("{f}-{tag}")).len(), 1, "missing {f}");
    }
    let out = ghn(&["replay", manifest.to_str().unwrap(), "--out", "b"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let b = dir.path().join("b");
    for f in find(&a, "") {
        let name = f.file_name().unwrap();
        if name.to_string_lossy().starts_with("manifest-") {
            continue;
        }
        assert_eq!(std::fs::read(&f).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name:?}");
    }

    let model = find(&a, "model-seed0").pop().unwrap();
    let out = ghn(
        &["evaluate", "--model", model.to_str().unwrap(), "--corrupt", "feature_mask", "--level", "0.3", "--out-dir", "e"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("test\t"));
}

#[test]
fn synthetic_graph_directory_is_accepted_as_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = ghn(&["make-synthetic", "--kind", "heterophilous", "--seed", "3", "--out", "g"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let mut args = vec!["train", "--data", "g", "--out-dir", "o"];
    args.extend(SMALL);
    let out = ghn(&args, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
}

#[test]
fn experiment_commands_emit_tables() {
    let dir = tempfile::tempdir().unwrap();
    let runs: [(&[&str], &str); 4] = [
        (&["corrupt", "--variants", "lse", "--kinds", "edge_drop", "--levels", "0,1"], "robustness-"),
        (&["phase-diagram", "--variant", "lsr", "--betas", "1", "--ks", "8"], "phase-"),
        (&["gate-analysis", "--levels", "0,0.5"], "gates-"),
        (&["sweep", "--axis", "lambda", "--values", "0,0.3"], "sweep-"),
    ];
    for (i, (cmd, prefix)) in runs.iter().enumerate() {
        let out_dir = format!("o{i}");
        let mut args: Vec<&str> = cmd.to_vec();
        args.extend(SMALL);
        args.extend(["--out-dir", &out_dir, "--emit-plot-data"]);
        let out = ghn(&args, dir.path());
        assert_eq!(out.status.code(), Some(0), "{cmd:?}: {}", text(&out.stderr));
        let d = dir.path().join(&out_dir);
        let table = std::fs::read_to_string(find(&d, prefix).pop().unwrap()).unwrap();
        assert!(table.lines().count() >= 2 && table.contains('\t'));
        assert_eq!(find(&d, "plot-").len(), 1);
    }
}

mod common;

use std::fs;
use std::process::Command;

use hpcausal::error::Error;
use hpcausal::pipeline::{
    cmd_analyze, cmd_effects, cmd_explain, cmd_reproduce, cmd_zoo_build, StageHashes,
};
use hpcausal::store::{read_json, RunManifest};

fn tree(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn reproduce_is_deterministic_and_traceable() {
    let cfg = common::tiny_config(12);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let runs = cmd_reproduce(&cfg, &common::opts(a.path())).unwrap();
    cmd_reproduce(&cfg, &common::opts(b.path())).unwrap();
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert_eq!(ta.len(), tb.len());
    for ((na, ba), (nb, bb)) in ta.iter().zip(&tb) {
        assert_eq!(na, nb);
        assert!(ba == bb, "{na} differs between runs");
    }
    let h = StageHashes::of(&cfg);
    assert_eq!(
        runs.iter()
            .map(|r| r.config_hash.clone())
            .collect::<Vec<_>>(),
        vec![h.zoo, h.explain, h.effects, h.analyze]
    );
    let run: RunManifest = read_json(&a.path().join("analysis/run.json")).unwrap();
    assert!(run.files.contains_key("correlation.csv") && run.files.contains_key("mediation.csv"));
    assert_eq!(
        run.seeds["permutation_seed"],
        cfg.analyze.mediation.permutation_seed
    );
    assert!(!run.tool_version.is_empty());
    for name in ["correlation.csv", "mediation.csv", "kernel_sensitivity.csv"] {
        let text = fs::read_to_string(a.path().join("analysis").join(name)).unwrap();
        assert!(text.lines().count() >= 1, "{name}");
    }
}

#[test]
fn downstream_commands_check_upstream() {
    let cfg = common::tiny_config(6);
    let dir = tempfile::tempdir().unwrap();
    let o = common::opts(dir.path());
    let err = cmd_explain(&cfg, &o).unwrap_err();
    assert!(
        matches!(
            err,
            Error::Missing {
                command: "zoo-build",
                ..
            }
        ),
        "{err}"
    );
    assert!(err.to_string().contains("hpcausal zoo-build"));
    cmd_zoo_build(&cfg, &o).unwrap();
    assert!(matches!(cmd_zoo_build(&cfg, &o), Err(Error::Exists(_))));

    let mut changed = cfg.clone();
    changed.zoo.train.epochs += 1;
    let err = cmd_explain(&changed, &o).unwrap_err();
    assert!(matches!(err, Error::Stale { .. }), "{err}");
    assert!(err.to_string().contains("zoo-build"));

    cmd_explain(&cfg, &o).unwrap();
    assert!(matches!(
        cmd_analyze(&cfg, &o),
        Err(Error::Missing {
            command: "effects",
            ..
        })
    ));
    let mut changed = cfg.clone();
    changed.explain.n_probes = 3;
    assert!(matches!(
        cmd_effects(&changed, &o),
        Err(Error::Stale {
            command: "explain",
            ..
        })
    ));
}

#[test]
fn analyze_on_empty_effects_fails_without_output() {
    let mut cfg = common::tiny_config(6);
    cfg.effects.marginalize.min_group_size = 100;
    let dir = tempfile::tempdir().unwrap();
    let o = common::opts(dir.path());
    cmd_zoo_build(&cfg, &o).unwrap();
    cmd_explain(&cfg, &o).unwrap();
    let run = cmd_effects(&cfg, &o).unwrap();
    assert!(run
        .warnings
        .iter()
        .any(|w| w.contains("no estimable effects")));
    let err = cmd_analyze(&cfg, &o).unwrap_err();
    assert!(err.to_string().contains("empty"), "{err}");
    assert_eq!(err.exit_code(), 3);
    let names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert!(!names.iter().any(|n| n.contains("analysis")), "{names:?}");
}

fn cli(args: &[&str], out: &std::path::Path) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_hpcausal"))
        .args(args)
        .env("HPCAUSAL_OUT", out)
        .output()
        .unwrap();
    (
        o.status.code().unwrap(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

#[test]
fn cli_errors_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = cli(&["effects", "--keys", "l2,momentum"], dir.path());
    assert_eq!(code, 2, "{err}");
    assert!(
        err.contains("momentum") && err.contains("learning_rate") && err.contains("dropout"),
        "{err}"
    );

    let (code, err) = cli(&["explain"], dir.path());
    assert_eq!(code, 3);
    assert!(err.contains("hpcausal zoo-build"), "{err}");

    let cfg_path = dir.path().join("bad.json");
    fs::write(
        &cfg_path,
        r#"{"effects": {"keys": ["colour"], "kernels": [{"kind": "linear"}]}}"#,
    )
    .unwrap();
    let (code, err) = cli(&["effects", "-c", cfg_path.to_str().unwrap()], dir.path());
    assert_eq!(code, 2, "{err}");
    assert!(
        err.contains("colour") && err.contains("split_fraction"),
        "{err}"
    );

    let (code, _) = cli(&["zoo-build", "--models", "0"], dir.path());
    assert_eq!(code, 2);
}

#[test]
fn cli_runs_stages_under_env_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    fs::write(&cfg_path, hpcausal::store::to_json(&common::tiny_config(5))).unwrap();
    let c = cfg_path.to_str().unwrap();
    let (code, err) = cli(&["zoo-build", "-c", c, "--seed", "4"], dir.path());
    assert_eq!(code, 0, "{err}");
    let m: hpcausal::zoo::ZooManifest = read_json(&dir.path().join("zoo/manifest.json")).unwrap();
    assert_eq!((m.config.sampling_seed, m.config.train_seed), (4, 4));
    assert_eq!(m.records.len(), 5);
    let (code, err) = cli(&["explain", "-c", c], dir.path());
    assert_eq!(code, 3, "seed override changes the zoo hash: {err}");
    assert!(err.contains("stale"), "{err}");
}

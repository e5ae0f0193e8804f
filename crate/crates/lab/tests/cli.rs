use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use loopsoup_core::experiments::{catalog, BetaSpec};
use loopsoup_lab::{parse_config, parse_config_str, RunConfig};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_loopsoup-lab"));
    c.env_remove("LOOPSOUP_LAB_REPORT_DIR");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn sample_configs() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    v.sort();
    v
}

#[test]
fn minimal_config_takes_defaults() {
    let cfg = parse_config_str("experiment = \"isomorphism\"\n", "min.toml").unwrap();
    assert_eq!(cfg, RunConfig::new("isomorphism", 0));
    assert_eq!((cfg.nx, cfg.ny, cfg.alpha, cfg.replicas), (2, 2, 0.5, 10_000));
    assert_eq!(cfg.beta, BetaSpec::Calibrated);
    assert_eq!(cfg.thresholds.z_max, 4.0);
    assert!(cfg.workers.is_none() && cfg.arcs.is_none());
}

#[test]
fn canonical_form_round_trips() {
    let configs = sample_configs();
    assert!(configs.len() >= 5);
    for path in configs {
        let cfg = parse_config(&path).unwrap();
        let text = cfg.to_canonical_toml();
        let again = parse_config_str(&text, "canonical").unwrap_or_else(|e| panic!("{}: {e}\n{text}", path.display()));
        assert_eq!(again, cfg, "{}", path.display());
        assert_eq!(again.to_canonical_toml(), text);
    }
}

#[test]
fn invalid_values_exit_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "bad.toml",
        "experiment = \"isomorphism\"\nseed = 3\nalpha = -1\n",
    );
    let o = bin().arg("run").arg(&p).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("bad.toml:3:") && err.contains("alpha"), "{err}");
}

#[test]
fn overlapping_arcs_point_at_the_second_arc() {
    let dir = tempfile::tempdir().unwrap();
    let text = "experiment = \"rectangle_crossing\"\nnx = 3\nny = 3\n\n\
                [[arcs]]\narc = 1\nside = \"left\"\n\n\
                [[arcs]]\narc = 2\nring = [0, 12]\n";
    let p = write(dir.path(), "overlap.toml", text);
    let o = bin().arg("run").arg(&p).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("overlap.toml:10:") && err.contains("overlapping"), "{err}");
}

#[test]
fn unknown_keys_and_bad_syntax_are_rejected() {
    let e = parse_config_str("experiment = \"rewiring\"\nalpah = 0.5\n", "typo.toml").unwrap_err();
    let msg = e.to_string();
    assert!(msg.contains("line 2") && msg.contains("alpah"), "{msg}");
    let e = parse_config_str("experiment = \"rewiring\"\n[strip]\nwidth = [3]\n", "t.toml").unwrap_err();
    assert!(e.to_string().contains("line 3"), "{e}");
    let e = parse_config_str("experiment = \"nope\"\n", "t.toml").unwrap_err();
    assert!(e.to_string().contains("t.toml:1:"), "{e}");
    let e = parse_config_str("experiment = \"isomorphism\"\nbeta = \"big\"\n", "t.toml").unwrap_err();
    assert!(e.to_string().contains("calibrated"), "{e}");
    let e = parse_config_str("experiment = \"isomorphism\"\nworkers = 0\n", "t.toml").unwrap_err();
    assert!(e.to_string().contains("t.toml:2:"), "{e}");
}

#[test]
fn list_names_every_claim() {
    let o = bin().arg("list").output().unwrap();
    assert!(o.status.success());
    let out = String::from_utf8(o.stdout).unwrap();
    for e in catalog() {
        assert!(out.contains(e.name));
        for c in e.claims {
            assert!(out.contains(c.id), "missing {}", c.id);
        }
    }
}

#[test]
fn calibrate_reports_domain_couplings() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "r.toml",
        "experiment = \"rectangle_crossing\"\nbeta = 0.5\n",
    );
    let o = bin().arg("calibrate").arg(&p).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["calibration"]["constants"]["beta_disc"], 0.25);
    let m = &v["domain"]["couplings"];
    let mass = v["domain"]["masses"][0][1].as_f64().unwrap();
    assert!((m[0][1].as_f64().unwrap() - 0.5 * mass).abs() < 1e-15);
}

#[test]
fn reports_are_identical_across_worker_counts() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let cfg = write(
        dirs[0].path(),
        "rect.toml",
        "experiment = \"rectangle_crossing\"\nreplicas = 3000\nseed = 9\n[output]\ncsv = true\n",
    );
    let mut outputs = Vec::new();
    for (dir, workers) in dirs.iter().zip(["1", "8"]) {
        let o = bin()
            .env("LOOPSOUP_LAB_REPORT_DIR", dir.path().join("out"))
            .args(["run", cfg.to_str().unwrap(), "--workers", workers])
            .output()
            .unwrap();
        assert!(matches!(o.status.code(), Some(0 | 1 | 3)), "{}", stderr(&o));
        let json = fs::read(dir.path().join("out/rectangle_crossing-seed9.json")).unwrap();
        let csv = fs::read(dir.path().join("out/rectangle_crossing-seed9-replicas.csv")).unwrap();
        outputs.push((json, csv));
    }
    assert_eq!(outputs[0], outputs[1]);
    let report: serde_json::Value = serde_json::from_slice(&outputs[0].0).unwrap();
    assert_eq!(report["schema"], "loopsoup-lab/report/v1");
    assert_eq!(report["seed"], 9);
}

#[test]
fn overrides_change_seed_and_replicas() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "iso.toml", "experiment = \"isomorphism\"\n");
    let o = bin()
        .env("LOOPSOUP_LAB_REPORT_DIR", dir.path())
        .args(["run", p.to_str().unwrap(), "--seed", "42", "--replicas", "2000"])
        .output()
        .unwrap();
    assert!(o.status.code().is_some_and(|c| c != 2), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("isomorphism-seed42.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["replicas"], 2000);
    let o = bin()
        .args(["run", p.to_str().unwrap(), "--replicas", "0"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

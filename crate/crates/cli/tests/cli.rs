use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn rtl(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtl"))
        .args(args)
        .env("RTL_OUTPUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, cfg: &Value) -> String {
    let path = dir.join("config.in.json");
    fs::write(&path, serde_json::to_string(cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn classify_resonant_cos() {
    let tmp = TempDir::new().unwrap();
    let o = rtl(&["classify", "--preset", "resonant-cos"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&tmp.path().join("classify/classify.json"));
    assert_eq!(r["report"]["verdict"], "Unstable");
    let zeros: Vec<f64> = r["report"]["zeros"].as_array().unwrap().iter().map(|z| z["x0"].as_f64().unwrap()).collect();
    assert_eq!(zeros.len(), 2);
    assert!((zeros[0] - PI / 2.0).abs() < 1e-12 && (zeros[1] - 1.5 * PI).abs() < 1e-12);
    assert!(r["regularized"].is_null());
    let listed = String::from_utf8(o.stdout).unwrap();
    assert!(listed.lines().any(|l| l.ends_with("classify.json")));
    assert!(listed.lines().any(|l| l.ends_with("config.json")));
}

#[test]
fn empty_mode_list_is_degenerate() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &json!({ "V": { "modes": [] }, "regularize": { "budget": null } }));
    let o = rtl(&["classify", "--config", &cfg], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&tmp.path().join("classify/classify.json"));
    assert_eq!(r["report"]["verdict"], "Degenerate");
}

#[test]
fn degenerate_presets_are_regularized() {
    for preset in ["nonresonant-cos", "degenerate-tangent"] {
        let tmp = TempDir::new().unwrap();
        let o = rtl(&["classify", "--preset", preset], tmp.path());
        assert_eq!(code(&o), 0);
        let r = read_json(&tmp.path().join("classify/classify.json"));
        assert_eq!(r["report"]["verdict"], "Degenerate");
        assert_ne!(r["regularized"]["report"]["verdict"], "Degenerate");
        assert!(r["regularized"]["distance"].as_f64().unwrap() <= 0.1);
    }
}

#[test]
fn escape_margin() {
    let tmp = TempDir::new().unwrap();
    let o = rtl(&["escape", "--preset", "resonant-cos"], tmp.path());
    assert_eq!(code(&o), 0);
    let r = read_json(&tmp.path().join("escape/escape.json"));
    assert!(r["delta_verified"].as_f64().unwrap() > 0.1);
    let csv = fs::read_to_string(tmp.path().join("escape/escape_profile.csv")).unwrap();
    assert!(csv.starts_with("x,m_tilde,ell_plus,ell_minus,t_tilde,eta,a_tilde,a_tilde_resampled\n"));
    assert!(csv.lines().count() > 100);
}

#[test]
fn reduce_stable_preset() {
    let tmp = TempDir::new().unwrap();
    let o = rtl(&["reduce", "--preset", "stable-shifted-cos", "--epsilon", "0.05"], tmp.path());
    assert_eq!(code(&o), 0);
    let r = read_json(&tmp.path().join("reduce/flatness.json"));
    let m_hat = r["constant_reduction"]["m_hat"].as_f64().unwrap();
    assert!((m_hat - 3f64.sqrt()).abs() < 1e-9);
    assert!(r["constant_reduction"]["flatness"].as_f64().unwrap() < 1e-8);
    assert!(tmp.path().join("reduce/normal_form.json").exists());
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        json!({ "unknown": 1 }),
        json!({ "m": 0 }),
        json!({ "V": { "modes": [{ "k": 1, "l": 0, "re": 1.0, "im": 0.0 }] } }),
        json!({ "solver": { "scheme": "euler" } }),
        json!({ "V": { "preset": "no-such-preset" } }),
        json!({ "schema_version": 2 }),
    ];
    for cfg in cases {
        let path = write_config(tmp.path(), &cfg);
        let o = rtl(&["classify", "--config", &path], tmp.path());
        assert_eq!(code(&o), 2, "{cfg}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("config error"));
    }
    assert_eq!(code(&rtl(&["classify", "--jobs", "0"], tmp.path())), 2);
    assert_eq!(code(&rtl(&["classify", "--config", "/nonexistent.json"], tmp.path())), 2);
}

#[test]
fn regime_mismatch_exits_3() {
    let tmp = TempDir::new().unwrap();
    let o = rtl(&["evolve", "--preset", "nonresonant-cos"], tmp.path());
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("wrong regime"));
    let o = rtl(&["escape", "--preset", "stable-shifted-cos"], tmp.path());
    assert_eq!(code(&o), 3);
}

#[test]
fn reports_are_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for cmd in ["classify", "reduce", "escape"] {
        assert_eq!(code(&rtl(&[cmd], &a)), 0);
        assert_eq!(code(&rtl(&[cmd], &b)), 0);
        for entry in fs::read_dir(a.join(cmd)).unwrap() {
            let name = entry.unwrap().file_name();
            let x = fs::read(a.join(cmd).join(&name)).unwrap();
            let y = fs::read(b.join(cmd).join(&name)).unwrap();
            if name != "config.json" {
                assert!(x == y, "{cmd}/{name:?} differs");
            }
        }
    }
}

#[test]
fn resolved_config_round_trips() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &json!({ "epsilon": 0.05, "solver": { "K": 64 }, "V": { "preset": "stable-shifted-cos" } }));
    let first = rtl(&["config", "--config", &cfg], tmp.path());
    assert_eq!(code(&first), 0);
    let resolved = tmp.path().join("resolved.json");
    fs::write(&resolved, &first.stdout).unwrap();
    let second = rtl(&["config", "--config", resolved.to_str().unwrap()], tmp.path());
    assert_eq!(first.stdout, second.stdout);
    let v: Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(v["output"]["dir"], tmp.path().to_str().unwrap());

    assert_eq!(code(&rtl(&["classify", "--config", resolved.to_str().unwrap()], tmp.path())), 0);
    assert_eq!(fs::read(tmp.path().join("classify/config.json")).unwrap(), first.stdout);
}

fn schema_defaults(schema: &Value) -> Value {
    let mut out = serde_json::Map::new();
    for (name, prop) in schema["properties"].as_object().unwrap() {
        let v = if prop.get("properties").is_some() { schema_defaults(prop) } else { prop["default"].clone() };
        out.insert(name.clone(), v);
    }
    Value::Object(out)
}

#[test]
fn schema_defaults_match_resolved_defaults() {
    let tmp = TempDir::new().unwrap();
    let schema: Value = serde_json::from_slice(&rtl(&["schema"], tmp.path()).stdout).unwrap();
    let mut defaults = schema_defaults(&schema);
    let o = Command::new(env!("CARGO_BIN_EXE_rtl")).arg("config").env_remove("RTL_OUTPUT_DIR").output().unwrap();
    let resolved: Value = serde_json::from_slice(&o.stdout).unwrap();
    defaults["V"] = schema["properties"]["V"]["default"].clone();
    assert_eq!(defaults, resolved);
}

#[test]
fn evolve_stable_sweep_with_jobs() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "V": { "preset": "stable-shifted-cos" },
        "solver": { "K": 128 },
        "datum": { "xi0": 4 },
        "evolve": { "sweep": [0.2, 0.4], "stable_horizon_factor": 0.05, "samples": 20 }
    });
    let path = write_config(tmp.path(), &cfg);
    let (one, two) = (tmp.path().join("one"), tmp.path().join("two"));
    assert_eq!(code(&rtl(&["evolve", "--config", &path], &one)), 0);
    let o = rtl(&["evolve", "--config", &path, "--jobs", "2"], &two);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for eps in ["eps-0.2", "eps-0.4"] {
        let csv = fs::read_to_string(two.join("evolve").join(eps).join("norms.csv")).unwrap();
        assert!(csv.starts_with("t,s,norm\n"));
        let r = read_json(&two.join("evolve").join(eps).join("stability.json"));
        assert!(r["sup_ratio"][0]["ratio"].as_f64().unwrap() <= 3.0);
        for f in ["norms.csv", "stability.json"] {
            assert_eq!(fs::read(one.join("evolve").join(eps).join(f)).unwrap(), fs::read(two.join("evolve").join(eps).join(f)).unwrap());
        }
    }
}

#[test]
fn evolve_and_dichotomy_unstable() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "epsilon": 0.3,
        "solver": { "K": 256, "T": 12.0, "dt": 0.01 },
        "datum": { "xi0": 2 },
        "evolve": { "sample_interval": 0.25, "characteristic_points": 128 }
    });
    let path = write_config(tmp.path(), &cfg);
    let o = rtl(&["evolve", "--config", &path], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = tmp.path().join("evolve/eps-0.3");
    assert!(fs::read_to_string(dir.join("norms.csv")).unwrap().starts_with("t,norm,virial\n"));
    assert!(fs::read_to_string(dir.join("characteristics.csv")).unwrap().starts_with("t,norm\n"));
    let g = read_json(&dir.join("growth.json"));
    assert!(g["gamma_fit"].as_f64().unwrap() > 0.0);

    let o = rtl(&["dichotomy", "--config", &path], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d = read_json(&tmp.path().join("dichotomy/dichotomy.json"));
    assert!(d["ratio"].as_f64().unwrap() < 0.5);
    assert!(fs::read_to_string(tmp.path().join("dichotomy/stable_norms.csv")).unwrap().starts_with("t,norm\n"));
}

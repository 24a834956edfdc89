use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use nmk_sim::{run, ExperimentConfig, Mode, EXIT_NUMERICAL, EXIT_SCHEMA};
use serde_json::{json, Value};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows =
        r.records().map(|rec| rec.unwrap().iter().map(|x| x.parse::<f64>().unwrap_or(f64::NAN)).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn qubit_doc() -> Value {
    json!({
        "system": {
            "qudits": 1,
            "levels": 2,
            "hamiltonian": [{ "support": [0], "matrix": "sz", "scale": 0.5 }],
            "jumps": [{ "support": [0], "matrix": "lower", "bath": 0 }],
            "initial_state": { "basis": 1 }
        },
        "baths": [{ "kernel": { "type": "lorentzian_sum", "terms": [{ "alpha": 1.0, "omega": 0.0, "gamma": 1.0 }] } }],
        "mollifier": { "family": "standard_bump", "epsilon": 0.1, "grid": { "omega_max": 1500.0, "points": 3001 } },
        "omega_c": 4.0,
        "n_modes": 6,
        "cap": 2,
        "t_final": 1.0,
        "output_step": 0.25
    })
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_nmk-sim")).args(args).output().unwrap()
}

#[test]
fn chain_map_of_flat_kernel_gives_legendre_chain() {
    let out = tempfile::tempdir().unwrap();
    run(Mode::ChainMap, &configs().join("chain_map_flat.json"), out.path(), 1).unwrap();
    let report: Value = serde_json::from_slice(&fs::read(out.path().join("chain.json")).unwrap()).unwrap();
    let bath = &report["baths"][0];
    let onsite: Vec<f64> = serde_json::from_value(bath["onsite"].clone()).unwrap();
    let hopping: Vec<f64> = serde_json::from_value(bath["hopping"].clone()).unwrap();
    assert_eq!(onsite.len(), 4);
    assert!(onsite.iter().all(|w| w.abs() < 1e-10));
    for (k, t) in hopping.iter().enumerate() {
        let a = (k + 1) as f64;
        assert!((t - a / (4.0 * a * a - 1.0).sqrt()).abs() < 1e-8);
    }
    // |v̂|² = 1/2π on [-1, 1]
    assert!((bath["v_norm"].as_f64().unwrap() - (1.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);

    let mtx = fs::read_to_string(out.path().join("hamiltonian.mtx")).unwrap();
    let mut lines = mtx.lines();
    assert_eq!(lines.next(), Some("%%MatrixMarket matrix coordinate complex general"));
    let dims: Vec<usize> = lines.next().unwrap().split(' ').map(|x| x.parse().unwrap()).collect();
    // qubit ⊗ (4 modes, at most 2 quanta): 2 · C(6, 2) = 30
    assert_eq!(&dims[..2], &[30, 30]);
    let entries: Vec<(usize, usize, f64, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(' ').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap())
        })
        .collect();
    assert_eq!(entries.len(), dims[2]);
    for &(i, j, re, im) in &entries {
        let mirror = entries.iter().find(|e| e.0 == j && e.1 == i).expect("missing transpose entry");
        assert_eq!((mirror.2, mirror.3), (re, -im));
    }
}

#[test]
fn zero_coupling_simulation_is_closed_evolution() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = qubit_doc();
    doc["system"]["jumps"][0]["scale"] = json!(0.0);
    let r = 0.5f64.sqrt();
    doc["system"]["initial_state"] = json!({ "amplitudes": [r, r] });
    doc["t_final"] = json!(3.0);
    let cfg = write_config(dir.path(), "zero.json", &doc);
    run(Mode::Simulate, &cfg, &dir.path().join("out"), 1).unwrap();
    let (h, rows) = read_csv(&dir.path().join("out/trajectory.csv"));
    assert_eq!(rows.len(), 13);
    let (t, re, im, p1) =
        (column(&h, "t"), column(&h, "rho_0_1_re"), column(&h, "rho_0_1_im"), column(&h, "rho_1_1_re"));
    for row in &rows {
        // H = σ_z/2 with σ_z = diag(-1, 1): ρ_01(t) = e^{it}/2
        assert!((row[re] - 0.5 * row[t].cos()).abs() < 1e-9);
        assert!((row[im] - 0.5 * row[t].sin()).abs() < 1e-9);
        assert!((row[p1] - 0.5).abs() < 1e-12);
        assert_eq!(row[column(&h, "mu1_bath0")], 0.0);
    }
}

#[test]
fn oracle_comparison_on_the_desk_instance() {
    let out = tempfile::tempdir().unwrap();
    run(Mode::CompareOracle, &configs().join("compare_oracle_lorentzian.json"), out.path(), 1).unwrap();
    let (h, rows) = read_csv(&out.path().join("comparison.csv"));
    let d = column(&h, "trace_distance");
    assert_eq!(rows.len(), 21);
    assert!(rows.iter().all(|r| r[d] < 5e-3), "{rows:?}");
    let summary: Value = serde_json::from_slice(&fs::read(out.path().join("summary.json")).unwrap()).unwrap();
    let max = rows.iter().map(|r| r[d]).fold(0.0, f64::max);
    assert_eq!(summary["max_trace_distance"].as_f64().unwrap(), max);
}

#[test]
fn markovian_limit_against_lindblad_oracle() {
    let out = tempfile::tempdir().unwrap();
    run(Mode::CompareOracle, &configs().join("markov_lindblad.json"), out.path(), 1).unwrap();
    let (h, rows) = read_csv(&out.path().join("comparison.csv"));
    let (d, chain, oracle, t) =
        (column(&h, "trace_distance"), column(&h, "chain_p1"), column(&h, "oracle_p1"), column(&h, "t"));
    assert!(rows.iter().all(|r| r[d] < 0.06));
    for r in &rows {
        assert!((r[oracle] - (-r[t]).exp()).abs() < 1e-8);
    }
    // past the short-time transient the two agree to 1%
    assert!(rows.iter().filter(|r| r[t] >= 1.0).all(|r| (r[chain] - r[oracle]).abs() < 1e-2));
}

#[test]
fn certified_budget_dominates_refinement_gap() {
    let out = tempfile::tempdir().unwrap();
    run(Mode::Certify, &configs().join("certify_lorentzian.json"), out.path(), 1).unwrap();
    let report: Value = serde_json::from_slice(&fs::read(out.path().join("budget.json")).unwrap()).unwrap();
    let b = &report["budget"];
    let terms: Vec<f64> = ["regularization", "cutoff", "chain", "truncation", "initialization"]
        .iter()
        .map(|k| b[k].as_f64().unwrap())
        .collect();
    assert!(terms.iter().all(|x| *x >= 0.0));
    let total = b["total"].as_f64().unwrap();
    assert!((terms.iter().sum::<f64>() - total).abs() < 1e-12 * total);
    assert!(total >= report["refinement"]["max_trace_distance"].as_f64().unwrap());
    assert_eq!(report["budget_dominates_refinement"], json!(true));
    assert_eq!(b["point"]["t"].as_f64(), Some(2.0));
    assert!(out.path().join("trajectory.csv").exists());
}

#[test]
fn sweep_is_deterministic_across_job_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let cfg = configs().join("sweep_lorentzian.json");
    let files_a = run(Mode::Sweep, &cfg, a.path(), 1).unwrap();
    run(Mode::Sweep, &cfg, b.path(), 3).unwrap();
    run(Mode::Sweep, &cfg, c.path(), 3).unwrap();
    assert_eq!(files_a.len(), 9);
    for f in &files_a {
        let rel = f.strip_prefix(a.path()).unwrap();
        let x = fs::read(f).unwrap();
        assert_eq!(x, fs::read(b.path().join(rel)).unwrap(), "{rel:?}");
        assert_eq!(x, fs::read(c.path().join(rel)).unwrap(), "{rel:?}");
    }
    let leftovers: Vec<_> = fs::read_dir(a.path().join("points"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());

    let (h, rows) = read_csv(&a.path().join("sweep.csv"));
    assert_eq!(rows.len(), 8);
    let (m, tot) = (column(&h, "measured_trace_distance"), column(&h, "certified_total"));
    assert!(rows.iter().all(|r| r[m] <= r[tot]));
    // epsilon outermost, cap innermost
    let (e, n, p) = (column(&h, "epsilon"), column(&h, "n_modes"), column(&h, "cap"));
    let order: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r[e], r[n], r[p])).collect();
    assert_eq!(order[0], (0.2, 4.0, 1.0));
    assert_eq!(order[1], (0.2, 4.0, 2.0));
    assert_eq!(order[2], (0.2, 8.0, 1.0));
    assert_eq!(order[7], (0.1, 8.0, 2.0));
    // the finest point is the reference and has zero measured error
    assert_eq!(rows[7][m], 0.0);
}

#[test]
fn csv_floats_round_trip_exactly() {
    let out = tempfile::tempdir().unwrap();
    run(Mode::Simulate, &configs().join("simulate_lorentzian.json"), out.path(), 1).unwrap();
    let text = fs::read_to_string(out.path().join("trajectory.csv")).unwrap();
    for line in text.lines().skip(1) {
        for field in line.split(',') {
            let x: f64 = field.parse().unwrap();
            assert_eq!(format!("{x:.16e}"), field);
            let mantissa = field.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
        }
    }
}

#[test]
fn random_initial_state_follows_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = qubit_doc();
    doc["system"]["initial_state"] = json!("random");
    let mut outputs = Vec::new();
    for (name, seed) in [("a", 7), ("b", 7), ("c", 8)] {
        doc["seed"] = json!(seed);
        let cfg = write_config(dir.path(), &format!("{name}.json"), &doc);
        let out = dir.path().join(name);
        run(Mode::Simulate, &cfg, &out, 1).unwrap();
        outputs.push(fs::read(out.join("trajectory.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_ne!(outputs[0], outputs[2]);
}

#[test]
fn schema_violations_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let bad_json = dir.path().join("typo.json");
    fs::write(&bad_json, "{\n  \"system\": {\n    \"qudits\": \"one\"\n  }\n}\n").unwrap();
    let r = cli(&["simulate", "--config", bad_json.to_str().unwrap(), "--out", out]);
    assert_eq!(r.status.code(), Some(EXIT_SCHEMA as i32));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("line 3") && err.contains("system.qudits"), "{err}");

    let mut doc = qubit_doc();
    doc["system"]["jumps"][0]["bath"] = json!(3);
    let cfg = write_config(dir.path(), "bath.json", &doc);
    let r = cli(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(r.status.code(), Some(EXIT_SCHEMA as i32));
    assert!(String::from_utf8_lossy(&r.stderr).contains("system.jumps[0].bath"));

    let mut doc = qubit_doc();
    doc["sweep"] = json!({ "n_modes": [] });
    let cfg = write_config(dir.path(), "sweep.json", &doc);
    let r = cli(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(r.status.code(), Some(EXIT_SCHEMA as i32));
    assert!(String::from_utf8_lossy(&r.stderr).contains("sweep.n_modes"));

    let mut doc = qubit_doc();
    doc["mode"] = json!("certify");
    let cfg = write_config(dir.path(), "mode.json", &doc);
    assert_eq!(cli(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out]).status.code(), Some(2));

    let mut doc = qubit_doc();
    doc["baths"][0]["kernel"] =
        json!({ "type": "delta_train", "atoms": [{ "weight": 1.0, "tau": 0.5 }, { "weight": 1.0, "tau": 0.1 }] });
    let cfg = write_config(dir.path(), "atoms.json", &doc);
    let r = cli(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("baths[0].kernel"));

    let mut doc = qubit_doc();
    doc["extra"] = json!(1);
    let cfg = write_config(dir.path(), "extra.json", &doc);
    assert_eq!(cli(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out]).status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = qubit_doc();
    // cutoff beyond the sampled frequency grid
    doc["omega_c"] = json!(2000.0);
    let cfg = write_config(dir.path(), "wide.json", &doc);
    let r = cli(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(EXIT_NUMERICAL as i32));
    assert!(String::from_utf8_lossy(&r.stderr).contains("numerical failure"));

    let mut doc = qubit_doc();
    doc["mode"] = json!("certify");
    doc["baths"][0]["initial"] = json!({ "type": "coherent", "displacement": [0.1] });
    let cfg = write_config(dir.path(), "coherent.json", &doc);
    let r = cli(&["certify", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("p").to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(EXIT_NUMERICAL as i32));
}

#[test]
fn successful_run_lists_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = configs().join("chain_map_flat.json");
    let r = cli(&["chain-map", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", "2"]);
    assert!(r.status.success());
    let listed: Vec<String> = String::from_utf8_lossy(&r.stdout).lines().map(String::from).collect();
    assert_eq!(listed.len(), 2);
    assert!(listed[0].ends_with("chain.json") && listed[1].ends_with("hamiltonian.mtx"));
    assert_eq!(cli(&["chain-map", "--config", cfg.to_str().unwrap(), "--jobs", "0"]).status.code(), Some(2));
}

fn schema_keys(schema: &Value, pointer: &str) -> BTreeSet<String> {
    schema.pointer(pointer).unwrap().as_object().unwrap().keys().cloned().collect()
}

fn value_keys(v: &Value) -> BTreeSet<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

#[test]
fn schema_matches_the_document_types() {
    let schema: Value = serde_json::from_str(
        &fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/experiment.schema.json")).unwrap(),
    )
    .unwrap();
    let mut doc = qubit_doc();
    doc["sweep"] = json!({ "epsilon": [0.1] });
    doc["oracle"] = json!({ "star": { "modes": 8 } });
    let full = serde_json::to_value(ExperimentConfig::parse(&doc.to_string()).unwrap()).unwrap();
    assert_eq!(schema_keys(&schema, "/properties"), value_keys(&full));
    assert_eq!(schema_keys(&schema, "/$defs/system/properties"), value_keys(&full["system"]));
    assert_eq!(schema_keys(&schema, "/$defs/mollifier/properties"), value_keys(&full["mollifier"]));
    assert_eq!(schema_keys(&schema, "/$defs/sweep/properties"), value_keys(&full["sweep"]));
    assert_eq!(
        schema_keys(&schema, "/$defs/system/properties/hamiltonian/items/properties"),
        value_keys(&full["system"]["hamiltonian"][0])
    );

    let required: BTreeSet<String> =
        schema["required"].as_array().unwrap().iter().map(|x| x.as_str().unwrap().to_string()).collect();
    for key in &required {
        let mut d = doc.clone();
        d.as_object_mut().unwrap().remove(key);
        assert!(ExperimentConfig::parse(&d.to_string()).is_err(), "{key} should be required");
    }
    for key in value_keys(&full).difference(&required) {
        let mut d = doc.clone();
        d.as_object_mut().unwrap().remove(key);
        assert!(ExperimentConfig::parse(&d.to_string()).is_ok(), "{key} should be optional");
    }

    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let config = ExperimentConfig::parse(&fs::read_to_string(&path).unwrap()).unwrap();
        config.validate(config.mode.unwrap()).unwrap_or_else(|e| panic!("{path:?}: {e}"));
    }
}

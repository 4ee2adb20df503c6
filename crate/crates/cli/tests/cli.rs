//! End-to-end tests of the CLI against the bundled datasets and a local
//! stub endpoint.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;

const BIN: &str = env!("CARGO_BIN_EXE_priorgauge");

fn data_path(rel: &str) -> String {
    format!("{}/../../data/{rel}", env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn CLI")
}

fn run_env(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn CLI")
}

fn read_json(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{path:?}: {e}"));
    serde_json::from_str(&text).expect("valid JSON output")
}

#[test]
fn cv_frequentist_only_heart() {
    let out = tempfile::tempdir().unwrap();
    let output = run(&[
        "cv",
        "--data",
        &data_path("heart.csv"),
        "--spec",
        &data_path("specs/heart.json"),
        "--out",
        out.path().to_str().unwrap(),
        "--seed",
        "0",
    ]);
    assert!(output.status.success(), "{output:?}");
    let table = std::fs::read_to_string(out.path().join("cv_table.txt")).unwrap();
    // header plus a single frequentist row with the three binary metrics
    assert_eq!(table.lines().count(), 2, "table:\n{table}");
    assert!(table.contains("Frequentist"));
    for metric in ["brier", "mnls", "auc"] {
        assert!(table.contains(metric), "missing {metric}:\n{table}");
    }
    let report = read_json(&out.path().join("cv_report.json"));
    assert_eq!(report["model_order"].as_array().unwrap().len(), 1);
    assert_eq!(report["fold_plan"]["k"], 5);
}

#[test]
fn cv_with_catalog_reports_p_values_and_is_deterministic() {
    let out1 = tempfile::tempdir().unwrap();
    let out2 = tempfile::tempdir().unwrap();
    let args = |dir: &str| {
        vec![
            "cv".to_string(),
            "--data".into(),
            data_path("heart.csv"),
            "--spec".into(),
            data_path("specs/heart.json"),
            "--catalog".into(),
            data_path("catalogs/heart_example.json"),
            "--out".into(),
            dir.to_string(),
            "--seed".into(),
            "7".into(),
            "--mc-draws".into(),
            "400".into(),
        ]
    };
    for dir in [&out1, &out2] {
        let argv = args(dir.path().to_str().unwrap());
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        let output = run(&argv);
        assert!(output.status.success(), "{output:?}");
    }
    let table = std::fs::read_to_string(out1.path().join("cv_table.txt")).unwrap();
    assert_eq!(table.lines().count(), 4, "frequentist + 2 sets + header:\n{table}");
    assert!(table.contains("(p="), "p-values in parentheses:\n{table}");
    assert!(table.lines().nth(1).unwrap().starts_with("Frequentist"));

    let a = std::fs::read(out1.path().join("cv_report.json")).unwrap();
    let b = std::fs::read(out2.path().join("cv_report.json")).unwrap();
    assert_eq!(a, b, "fixed-seed reruns must be byte-identical");
}

#[test]
fn cv_does_not_mutate_inputs() {
    let before = std::fs::read(data_path("heart.csv")).unwrap();
    let out = tempfile::tempdir().unwrap();
    let output = run(&[
        "cv",
        "--data",
        &data_path("heart.csv"),
        "--spec",
        &data_path("specs/heart.json"),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let after = std::fs::read(data_path("heart.csv")).unwrap();
    assert_eq!(before, after);
}

#[test]
fn evaluate_emits_table_and_normalized_curves() {
    let out = tempfile::tempdir().unwrap();
    let output = run(&[
        "evaluate",
        "--data",
        &data_path("heart.csv"),
        "--spec",
        &data_path("specs/heart.json"),
        "--catalog",
        &data_path("catalogs/heart_example.json"),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");

    let table = std::fs::read_to_string(out.path().join("kl_table.txt")).unwrap();
    assert!(table.contains("Avg KL Div."));
    assert!(table.contains("Avg Rank"));
    assert!(table.contains("manual/moderate") && table.contains("manual/weak"));
    // variables as rows
    for name in ["age", "sex", "trestbps", "chol", "thalach", "oldpeak"] {
        assert!(table.lines().any(|l| l.starts_with(name)), "row {name} missing");
    }

    let report = read_json(&out.path().join("kl_report.json"));
    assert_eq!(report["kl"]["mle_sd_source"], "fisher");
    assert_eq!(report["n"], 303);

    // every emitted density integrates to ~1 by trapezoid
    let curves = read_json(&out.path().join("curves.json"));
    for (coef, entry) in curves.as_object().unwrap() {
        let grid: Vec<f64> = entry["grid"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        let trapezoid = |ys: &[f64]| -> f64 {
            ys.windows(2)
                .zip(grid.windows(2))
                .map(|(y, x)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
                .sum()
        };
        let mle: Vec<f64> = entry["mle"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        let mass = trapezoid(&mle);
        assert!(
            (mass - 1.0).abs() <= 0.01,
            "{coef} MLE curve integrates to {mass}"
        );
        for (label, density) in entry["priors"].as_object().unwrap() {
            let ys: Vec<f64> = density
                .as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_f64().unwrap())
                .collect();
            let mass = trapezoid(&ys);
            assert!(
                (mass - 1.0).abs() <= 0.01,
                "{coef} prior {label} integrates to {mass}"
            );
        }
    }
}

#[test]
fn evaluate_single_set_catalog_ranks_all_one() {
    let dir = tempfile::tempdir().unwrap();
    // catalog with only the moderate set
    let full: serde_json::Value =
        read_json(Path::new(&data_path("catalogs/concrete_example.json")));
    let single = serde_json::json!({
        "model_spec_id": full["model_spec_id"],
        "sets": [full["sets"][0]],
    });
    let catalog_path = dir.path().join("single.json");
    std::fs::write(&catalog_path, serde_json::to_string(&single).unwrap()).unwrap();

    let out = tempfile::tempdir().unwrap();
    let output = run(&[
        "evaluate",
        "--data",
        &data_path("concrete.csv"),
        "--spec",
        &data_path("specs/concrete.json"),
        "--catalog",
        catalog_path.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let report = read_json(&out.path().join("kl_report.json"));
    let ranks = report["kl"]["avg_ranks"].as_object().unwrap();
    assert_eq!(ranks.len(), 1);
    for (_, rank) in ranks {
        assert_eq!(rank.as_f64().unwrap(), 1.0);
    }
}

#[test]
fn evaluate_with_bootstrap_sds_reports_source() {
    let out = tempfile::tempdir().unwrap();
    let output = run(&[
        "evaluate",
        "--data",
        &data_path("concrete.csv"),
        "--spec",
        &data_path("specs/concrete.json"),
        "--catalog",
        &data_path("catalogs/concrete_example.json"),
        "--out",
        out.path().to_str().unwrap(),
        "--bootstrap-reps",
        "32",
        "--seed",
        "5",
    ]);
    assert!(output.status.success(), "{output:?}");
    let report = read_json(&out.path().join("kl_report.json"));
    assert_eq!(report["kl"]["mle_sd_source"], "bootstrap(32)");
}

fn write_flat_catalog(dir: &Path, sd: f64) -> PathBuf {
    let names = [
        "intercept", "age", "sex", "trestbps", "chol", "thalach", "oldpeak",
    ];
    let entries: serde_json::Map<String, serde_json::Value> = names
        .iter()
        .map(|n| {
            (
                n.to_string(),
                serde_json::json!({"mean": 0.0, "sd": sd, "justification": ""}),
            )
        })
        .collect();
    let catalog = serde_json::json!({
        "model_spec_id": "heart",
        "sets": [{
            "label": "limit",
            "source": "manual",
            "informativeness": "custom",
            "confidence_weight": 1.0,
            "entries": entries,
        }],
    });
    let path = dir.join("catalog.json");
    std::fs::write(&path, serde_json::to_string(&catalog).unwrap()).unwrap();
    path
}

#[test]
fn posterior_flat_prior_curve_matches_mle_curve() {
    let dir = tempfile::tempdir().unwrap();
    let catalog = write_flat_catalog(dir.path(), 1e6);
    let out = tempfile::tempdir().unwrap();
    let output = run(&[
        "posterior",
        "--data",
        &data_path("heart.csv"),
        "--spec",
        &data_path("specs/heart.json"),
        "--catalog",
        catalog.to_str().unwrap(),
        "--prior-label",
        "limit",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let curves = read_json(&out.path().join("posterior_curves_limit.json"));
    for (coef, entry) in curves["coefficients"].as_object().unwrap() {
        let mle: Vec<f64> = entry["mle"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        let post: Vec<f64> = entry["posterior"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        let scale = mle
            .iter()
            .chain(&post)
            .cloned()
            .fold(1.0f64, f64::max);
        for (a, b) in mle.iter().zip(&post) {
            assert!(
                (a - b).abs() < 1e-3 * scale,
                "{coef}: posterior curve deviates from MLE curve under a flat prior"
            );
        }
    }
}

#[test]
fn posterior_dogmatic_prior_curve_matches_prior_curve() {
    let dir = tempfile::tempdir().unwrap();
    let catalog = write_flat_catalog(dir.path(), 1e-6);
    let out = tempfile::tempdir().unwrap();
    let output = run(&[
        "posterior",
        "--data",
        &data_path("heart.csv"),
        "--spec",
        &data_path("specs/heart.json"),
        "--catalog",
        catalog.to_str().unwrap(),
        "--prior-label",
        "limit",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let curves = read_json(&out.path().join("posterior_curves_limit.json"));
    for (coef, entry) in curves["coefficients"].as_object().unwrap() {
        let prior: Vec<f64> = entry["prior"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        let post: Vec<f64> = entry["posterior"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        // the 1e-6-sd spike falls between grid points, so normalize by the
        // analytic peak density rather than the sampled maximum
        let scale = 1.0 / (1e-6 * (2.0 * std::f64::consts::PI).sqrt());
        for (a, b) in prior.iter().zip(&post) {
            assert!(
                (a - b).abs() < 1e-3 * scale,
                "{coef}: posterior curve should collapse onto a dogmatic prior"
            );
        }
    }
}

#[test]
fn posterior_unknown_label_lists_available_sets() {
    let out = tempfile::tempdir().unwrap();
    let output = run(&[
        "posterior",
        "--data",
        &data_path("heart.csv"),
        "--spec",
        &data_path("specs/heart.json"),
        "--catalog",
        &data_path("catalogs/heart_example.json"),
        "--prior-label",
        "nope",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("manual/moderate") && stderr.contains("manual/weak"));
}

#[test]
fn missing_column_is_a_validation_exit() {
    let dir = tempfile::tempdir().unwrap();
    let bad_csv = dir.path().join("bad.csv");
    std::fs::write(&bad_csv, "a,b\n1,2\n").unwrap();
    let out = tempfile::tempdir().unwrap();
    let output = run(&[
        "cv",
        "--data",
        bad_csv.to_str().unwrap(),
        "--spec",
        &data_path("specs/heart.json"),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    // the response column is resolved first, so it is the one named
    assert!(String::from_utf8_lossy(&output.stderr).contains("num"));
}

// ---- elicit against a local stub endpoint ----

fn stub_server(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = thread::spawn(move || {
        for (status, body) in responses {
            let (mut stream, _) = match listener.accept() {
                Ok(pair) => pair,
                Err(_) => return,
            };
            let mut buf = [0u8; 65536];
            let _ = stream.read(&mut buf);
            let response = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    (format!("http://{addr}"), handle)
}

fn chat_body(content: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"content": content}}],
        "usage": {"prompt_tokens": 1, "completion_tokens": 2}
    })
    .to_string()
}

fn endpoint_file(dir: &Path, base_url: &str) -> PathBuf {
    let config = serde_json::json!({
        "provider": "openai",
        "base_url": base_url,
        "model": "stub-model",
        "temperature": 0.0,
        "max_tokens": 512,
        "api_key_env": "PRIORGAUGE_TEST_KEY",
        "attempts": 3,
        "timeout_secs": 5,
    });
    let path = dir.join("endpoint.json");
    std::fs::write(&path, serde_json::to_string(&config).unwrap()).unwrap();
    path
}

fn heart_catalog_json() -> String {
    let names = [
        "intercept", "age", "sex", "trestbps", "chol", "thalach", "oldpeak",
    ];
    let entries: serde_json::Map<String, serde_json::Value> = names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            (
                n.to_string(),
                serde_json::json!({"mean": 0.1 * i as f64, "sd": 0.5 + i as f64 * 0.1,
                                   "justification": format!("reason {n}")}),
            )
        })
        .collect();
    serde_json::json!({
        "sets": [
            {"label": "llm/moderate", "source": "stub", "informativeness": "moderate",
             "confidence_weight": 0.65, "entries": entries},
            {"label": "llm/weak", "source": "stub", "informativeness": "weak",
             "confidence_weight": 0.35, "entries": entries},
        ]
    })
    .to_string()
}

#[test]
fn elicit_stub_writes_catalog_with_two_sets() {
    let content = format!(
        "Reasoning about risk factors goes here.\n```json\n{}\n```\n",
        heart_catalog_json()
    );
    let (base_url, handle) = stub_server(vec![(200, chat_body(&content))]);
    let dir = tempfile::tempdir().unwrap();
    let endpoint = endpoint_file(dir.path(), &base_url);
    let out = tempfile::tempdir().unwrap();
    let output = run_env(
        &[
            "elicit",
            "--spec",
            &data_path("specs/heart.json"),
            "--endpoint",
            endpoint.to_str().unwrap(),
            "--out",
            out.path().to_str().unwrap(),
        ],
        &[("PRIORGAUGE_TEST_KEY", "stub")],
    );
    assert!(output.status.success(), "{output:?}");
    let catalog = read_json(&out.path().join("catalog.json"));
    assert_eq!(catalog["sets"].as_array().unwrap().len(), 2);
    assert_eq!(catalog["model_spec_id"], "heart");
    // audit line recorded
    let audit = std::fs::read_to_string(out.path().join("elicitations.jsonl")).unwrap();
    assert_eq!(audit.lines().count(), 1);
    let record: serde_json::Value = serde_json::from_str(audit.lines().next().unwrap()).unwrap();
    assert_eq!(record["parse_failed"], false);
    assert_eq!(record["provider"], "openai");
    handle.join().unwrap();
}

#[test]
fn elicit_missing_api_key_names_variable() {
    let (base_url, _handle) = stub_server(vec![]);
    let dir = tempfile::tempdir().unwrap();
    let endpoint = endpoint_file(dir.path(), &base_url);
    let out = tempfile::tempdir().unwrap();
    let mut cmd = Command::new(BIN);
    cmd.args([
        "elicit",
        "--spec",
        &data_path("specs/heart.json"),
        "--endpoint",
        endpoint.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    cmd.env_remove("PRIORGAUGE_TEST_KEY");
    let output = cmd.output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("PRIORGAUGE_TEST_KEY"));
}

#[test]
fn elicit_transport_failure_exits_three() {
    let (base_url, handle) = stub_server(vec![
        (500, "oops".into()),
        (500, "oops".into()),
        (500, "oops".into()),
    ]);
    let dir = tempfile::tempdir().unwrap();
    let endpoint = endpoint_file(dir.path(), &base_url);
    let out = tempfile::tempdir().unwrap();
    let output = run_env(
        &[
            "elicit",
            "--spec",
            &data_path("specs/heart.json"),
            "--endpoint",
            endpoint.to_str().unwrap(),
            "--out",
            out.path().to_str().unwrap(),
        ],
        &[("PRIORGAUGE_TEST_KEY", "stub")],
    );
    assert_eq!(output.status.code(), Some(3));
    handle.join().unwrap();
}

#[test]
fn elicit_prose_only_response_uses_fallback_parser() {
    let content = "\
My prior suggestions, parameter by parameter, with 80% confidence:\n\
intercept: N(-4.0, 2.0)\n\
age: N(0.05, 0.02)\n\
sex: N(0.8, 0.3)\n\
trestbps: N(0.02, 0.01)\n\
chol: N(0.004, 0.002)\n\
thalach: N(-0.03, 0.01)\n\
oldpeak: N(0.5, 0.25)\n";
    let (base_url, handle) = stub_server(vec![(200, chat_body(content))]);
    let dir = tempfile::tempdir().unwrap();
    let endpoint = endpoint_file(dir.path(), &base_url);
    let out = tempfile::tempdir().unwrap();
    let output = run_env(
        &[
            "elicit",
            "--spec",
            &data_path("specs/heart.json"),
            "--endpoint",
            endpoint.to_str().unwrap(),
            "--out",
            out.path().to_str().unwrap(),
        ],
        &[("PRIORGAUGE_TEST_KEY", "stub")],
    );
    assert!(output.status.success(), "{output:?}");
    let catalog = read_json(&out.path().join("catalog.json"));
    assert_eq!(catalog["sets"].as_array().unwrap().len(), 1);
    assert_eq!(catalog["sets"][0]["entries"]["age"]["mean"], 0.05);
    assert_eq!(catalog["sets"][0]["confidence_weight"], 0.8);
    handle.join().unwrap();
}

#[test]
fn elicit_unparseable_response_preserves_raw_text() {
    let content = "I would rather discuss the weather today.";
    let (base_url, handle) = stub_server(vec![(200, chat_body(content))]);
    let dir = tempfile::tempdir().unwrap();
    let endpoint = endpoint_file(dir.path(), &base_url);
    let out = tempfile::tempdir().unwrap();
    let output = run_env(
        &[
            "elicit",
            "--spec",
            &data_path("specs/heart.json"),
            "--endpoint",
            endpoint.to_str().unwrap(),
            "--out",
            out.path().to_str().unwrap(),
        ],
        &[("PRIORGAUGE_TEST_KEY", "stub")],
    );
    assert_eq!(output.status.code(), Some(1));
    let raw = std::fs::read_to_string(out.path().join("raw_response.txt")).unwrap();
    assert_eq!(raw, content);
    let audit = std::fs::read_to_string(out.path().join("elicitations.jsonl")).unwrap();
    let record: serde_json::Value = serde_json::from_str(audit.lines().next().unwrap()).unwrap();
    assert_eq!(record["parse_failed"], true);
    handle.join().unwrap();
}

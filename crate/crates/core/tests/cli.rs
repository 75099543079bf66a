use std::io::Write as _;
use std::path::Path;
use std::process::{Command, Stdio};

use igeom::cli::{self, Envelope};
use serde_json::Value;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Outcome {
    fn envelope(&self) -> Envelope {
        serde_json::from_str(&self.stdout)
            .unwrap_or_else(|e| panic!("bad JSON ({e}): {}", self.stdout))
    }

    fn payload(&self) -> Value {
        self.envelope().payload
    }
}

fn igeom(args: &[&str], env_seed: Option<&str>, stdin: Option<&[u8]>) -> Outcome {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_igeom"));
    cmd.args(args)
        .env_remove(cli::SEED_ENV)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    if let Some(s) = env_seed {
        cmd.env(cli::SEED_ENV, s);
    }
    cmd.stdin(if stdin.is_some() {
        Stdio::piped()
    } else {
        Stdio::null()
    });
    let mut child = cmd.spawn().expect("binary runs");
    if let Some(bytes) = stdin {
        child.stdin.take().unwrap().write_all(bytes).unwrap();
    }
    let out = child.wait_with_output().unwrap();
    Outcome {
        code: out.status.code().expect("exited normally"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn ok(args: &[&str]) -> Value {
    let o = igeom(args, None, None);
    assert_eq!(o.code, 0, "stderr: {}", o.stderr);
    o.payload()
}

fn read_values(path: &Path) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect()
}

fn gen(dir: &Path, name: &str, seed: &str) -> String {
    let path = dir.join(name);
    let p = path.to_str().unwrap().to_string();
    ok(&["gen-gpa", "--seed", seed, "--out", &p]);
    p
}

#[test]
fn gen_gpa_writes_clipped_reproducible_data() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a.txt", "42");
    let b = gen(dir.path(), "b.txt", "42");
    let c = gen(dir.path(), "c.txt", "43");
    let values = read_values(Path::new(&a));
    assert_eq!(values.len(), 40);
    assert!(values.iter().all(|x| (0.0..=4.0).contains(x)));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn gen_gpa_large_sample_mean() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.txt");
    let payload = ok(&[
        "gen-gpa",
        "--seed",
        "3",
        "--n-per-class",
        "1000",
        "--out",
        path.to_str().unwrap(),
    ]);
    let values = read_values(&path);
    assert_eq!(values.len(), 2000);
    let mean = values.iter().sum::<f64>() / 2000.0;
    assert!((mean - 3.25).abs() < 0.25, "{mean}");
    assert!((payload["mean"].as_f64().unwrap() - mean).abs() < 1e-12);
}

#[test]
fn reruns_produce_identical_payloads() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.txt", "42");
    let args = ["em-fit", "--data", &data, "--seed", "5"];
    let (x, y) = (igeom(&args, None, None), igeom(&args, None, None));
    assert_eq!(x.code, 0);
    let (ex, ey) = (x.envelope(), y.envelope());
    assert_eq!(
        serde_json::to_string(&ex.payload).unwrap(),
        serde_json::to_string(&ey.payload).unwrap()
    );
    assert_eq!(ex.config, ey.config);
    assert_eq!(ex.schema_version, "1.0");
    assert_eq!(ex.subcommand, "em-fit");
}

#[test]
fn config_echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.txt", "7");
    let cases: Vec<Vec<&str>> = vec![
        vec!["em-fit", "--data", &data, "--k", "2", "--update-weights"],
        vec!["em-fit", "--data", &data, "--algorithm", "geometric"],
        vec![
            "fim",
            "--family",
            "gaussian",
            "--method",
            "empirical",
            "--samples",
            "2000",
            "--sigma",
            "2",
        ],
        vec![
            "fim",
            "--family",
            "bernoulli",
            "--p",
            "0.3",
            "--method",
            "kl-hessian",
        ],
        vec![
            "curvature",
            "--surface",
            "torus",
            "--R",
            "3",
            "--r",
            "1",
            "--theta",
            "0.5",
        ],
        vec![
            "pythagoras",
            "--structure",
            "simplex",
            "--dim",
            "4",
            "--orthogonal",
        ],
        vec!["crlb", "--trials", "1000", "--n", "20"],
        vec!["natgrad-train", "--optimizer", "cw-ngd", "--epochs", "2"],
    ];
    for args in cases {
        let first = igeom(&args, None, None);
        assert_eq!(first.code, 0, "{args:?}: {}", first.stderr);
        let env = first.envelope();
        let rebuilt = cli::Command::from_echo(&env.subcommand, &env.config).unwrap();
        let (again, code) = cli::run(&rebuilt, &mut std::io::empty());
        assert_eq!(code, 0);
        assert_eq!(again.config, env.config, "{args:?}");
        assert_eq!(again.payload, env.payload, "{args:?}");
    }
}

#[test]
fn stdin_dash_matches_file_input() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.txt", "11");
    let from_file = ok(&["em-fit", "--data", &data]);
    let bytes = std::fs::read(&data).unwrap();
    let piped = igeom(&["em-fit", "--data", "-"], None, Some(&bytes));
    assert_eq!(piped.code, 0);
    assert_eq!(piped.payload(), from_file);

    let problem = br#"{"support": [0, 1, 2, 3], "constraints": [{"kind": "power", "degree": 1}], "targets": [1.0]}"#;
    let m = igeom(&["maxent", "--problem", "-"], None, Some(problem));
    assert_eq!(m.code, 0, "{}", m.stderr);
    let probs = floats(&m.payload()["probs"]);
    let mean: f64 = probs.iter().enumerate().map(|(i, p)| i as f64 * p).sum();
    assert!((mean - 1.0).abs() < 1e-9);
}

#[test]
fn seed_resolution_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let (a, b, c, d) = (out("a"), out("b"), out("c"), out("d"));
    assert_eq!(igeom(&["gen-gpa", "--out", &a], Some("9"), None).code, 0);
    assert_eq!(
        igeom(&["gen-gpa", "--out", &b, "--seed", "9"], None, None).code,
        0
    );
    assert_eq!(
        igeom(&["gen-gpa", "--out", &c, "--seed", "9"], Some("1"), None).code,
        0
    );
    let default = igeom(&["gen-gpa", "--out", &d], None, None);
    assert_eq!(
        default.envelope().config["seed"],
        Value::from(cli::DEFAULT_SEED)
    );
    let bytes = |p: &str| std::fs::read(p).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
    assert_eq!(bytes(&b), bytes(&c));
    assert_ne!(bytes(&a), bytes(&d));
    assert_eq!(igeom(&["gen-gpa", "--out", &a], Some("nine"), None).code, 2);
}

#[test]
fn malformed_input_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, body: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p.to_str().unwrap().to_string()
    };
    let garbage = write("g.txt", "1.0\nfoo\n");
    let bad_json = write("p.json", "{\"support\": [1, 2,");
    let unknown = write("u.json", r#"{"support": [1, 2], "extra": 1}"#);
    let infeasible = write(
        "i.json",
        r#"{"support": [0, 1, 2], "constraints": [{"kind": "power", "degree": 1}], "targets": [5.0]}"#,
    );
    let missing = dir.path().join("missing.txt");
    let missing = missing.to_str().unwrap();

    let cases: Vec<(Vec<&str>, i32)> = vec![
        (vec!["em-fit", "--data", &garbage], 2),
        (vec!["em-fit", "--data", missing], 4),
        (vec!["em-fit", "--data", &garbage, "--bogus"], 2),
        (vec!["maxent", "--problem", &bad_json], 2),
        (vec!["maxent", "--problem", &unknown], 2),
        (vec!["maxent", "--problem", &infeasible], 3),
        (
            vec!["curvature", "--surface", "torus", "--R", "1", "--r", "2"],
            2,
        ),
        (vec!["fim", "--family", "gaussian", "--sigma", "-1"], 2),
        (vec!["gen-gpa", "--out", "/nonexistent-dir/x.txt"], 4),
        (vec!["frobnicate"], 2),
    ];
    for (args, code) in cases {
        let o = igeom(&args, None, None);
        assert_eq!(o.code, code, "{args:?}: {}", o.stderr);
        if o.stdout.trim_start().starts_with('{') {
            let err = &o.payload()["error"];
            assert_eq!(err["exit_code"], Value::from(code));
            assert!(err["message"].as_str().is_some_and(|m| !m.is_empty()));
        }
    }
}

#[test]
fn collapse_reports_partial_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.txt");
    std::fs::write(&path, "1\n1\n1\n1\n1\n1\n9\n").unwrap();
    let o = igeom(&["em-fit", "--data", path.to_str().unwrap()], None, None);
    assert_eq!(o.code, 3);
    let err = &o.payload()["error"];
    assert_eq!(err["kind"], "component_collapse");
    assert!(err["component"].is_u64());
    assert_eq!(floats(&err["partial"]["params"]["means"]).len(), 2);
    assert!(err["partial"]["loglik_trace"].is_array());
}

#[test]
fn zero_iterations_echo_the_initialisation() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.txt", "42");
    let p = ok(&["em-fit", "--data", &data, "--max-iter", "0", "--seed", "4"]);
    assert_eq!(p["params"], p["init"]);
    assert_eq!(p["iterations"], 0);
    assert_eq!(p["converged"], false);
}

#[test]
fn geometric_and_classic_agree() {
    let dir = tempfile::tempdir().unwrap();
    for seed in ["1", "2", "42"] {
        let data = gen(dir.path(), &format!("d{seed}.txt"), seed);
        let c = ok(&["em-fit", "--data", &data, "--seed", seed]);
        let g = ok(&[
            "em-fit",
            "--data",
            &data,
            "--seed",
            seed,
            "--algorithm",
            "geometric",
        ]);
        assert_eq!(c["iterations"], g["iterations"]);
        for key in ["weights", "means", "sigmas"] {
            for (a, b) in floats(&c["params"][key])
                .iter()
                .zip(floats(&g["params"][key]))
            {
                assert!((a - b).abs() < 1e-6, "seed {seed} {key}: {a} vs {b}");
            }
        }
        assert!((c["loglik"].as_f64().unwrap() - g["loglik"].as_f64().unwrap()).abs() < 1e-6);
    }
}

#[test]
fn curvature_reports() {
    let p = ok(&[
        "curvature",
        "--surface",
        "torus",
        "--theta",
        "1.5707963267948966",
    ]);
    let rec = &p["records"][0];
    for key in ["K_gauss", "K_sect", "K_intrinsic"] {
        assert!(rec[key].as_f64().unwrap().abs() < 1e-9, "{key}");
    }
    let outer = ok(&["curvature", "--surface", "torus", "--theta", "0"]);
    assert!((outer["records"][0]["K_gauss"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    let grid = ok(&["curvature", "--surface", "torus", "--grid", "20"]);
    assert_eq!(grid["records"].as_array().unwrap().len(), 400);
    let sphere = ok(&[
        "curvature",
        "--surface",
        "sphere",
        "--r",
        "2",
        "--theta",
        "0.3",
    ]);
    assert!((sphere["records"][0]["K_gauss"].as_f64().unwrap() - 0.25).abs() < 1e-10);
}

#[test]
fn maxent_without_constraints_is_uniform() {
    assert_eq!(
        igeom(&["maxent", "--problem", "-"], None, Some(b"")).code,
        2
    );
    let o = igeom(
        &["maxent", "--problem", "-"],
        None,
        Some(br#"{"support": [1, 2, 3, 4, 5]}"#),
    );
    assert_eq!(o.code, 0);
    let payload = o.payload();
    assert!(floats(&payload["probs"]).iter().all(|&q| q == 0.2));
    assert!((payload["entropy"].as_f64().unwrap() - 5f64.ln()).abs() < 1e-12);
}

#[test]
fn fim_and_pythagoras_payloads() {
    let f = ok(&["fim", "--family", "gaussian", "--sigma", "2"]);
    assert_eq!(f["matrix"], serde_json::json!([[0.25, 0.0], [0.0, 0.5]]));
    assert_eq!(f["positive_definite"], true);
    for structure in ["quadratic", "simplex", "gaussian"] {
        let p = ok(&[
            "pythagoras",
            "--structure",
            structure,
            "--orthogonal",
            "--seed",
            "3",
        ]);
        let gap = p["gap"].as_f64().unwrap();
        assert!(gap.abs() < 1e-8, "{structure}: {gap}");
        assert!((gap - p["inner"].as_f64().unwrap()).abs() < 1e-9);
    }
}

#[test]
fn natgrad_train_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("loss.csv");
    let p = ok(&[
        "natgrad-train",
        "--optimizer",
        "ngd",
        "--epochs",
        "3",
        "--batch",
        "50",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,loss"));
    let rows: Vec<(usize, f64)> = lines
        .map(|l| {
            let (s, v) = l.split_once(',').unwrap();
            (s.parse().unwrap(), v.parse().unwrap())
        })
        .collect();
    let trace = floats(&p["loss_trace"]);
    assert_eq!(rows.len(), trace.len());
    assert_eq!(p["steps"], 3 * 4);
    for ((step, loss), (i, t)) in rows.iter().zip(trace.iter().enumerate()) {
        assert_eq!(*step, i);
        assert_eq!(loss.to_bits(), t.to_bits());
    }
}

#[test]
fn crlb_payload() {
    let p = ok(&["crlb", "--seed", "1"]);
    let ratio = p["ratio"].as_f64().unwrap();
    assert!((0.95..=1.05).contains(&ratio), "{ratio}");
    assert_eq!(p["trials"], 10_000);
}

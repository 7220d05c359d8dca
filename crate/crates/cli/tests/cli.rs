use std::path::Path;
use std::process::{Command, Output};

fn wpinn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wpinn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const TINY: &str = r#"
problem = "laplace"
frequencies = [1]
method = "optimal_weight"
iterations = 3
initial_interior = 16
initial_boundary = 16
seeds = [0, 1]
eval_resolution = 17
"#;

#[test]
fn lambda_prints_bounds_and_weights() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY);
    let out = wpinn(&["lambda", &config]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let value = |key: &str| -> f64 {
        let line = text
            .lines()
            .find(|l| l.starts_with(key))
            .unwrap_or_else(|| panic!("missing {key} in {text}"));
        line.split('=').nth(1).unwrap().trim().parse().unwrap()
    };
    let pi = std::f64::consts::PI;
    let (mi, mb) = (pi.powi(3) * (1.0 - (-2.0 * pi).exp()), 0.5 * (1.0 + (-2.0 * pi).exp()));
    assert!((value("M_I") / mi - 1.0).abs() < 1e-6);
    assert!((value("M_B") / mb - 1.0).abs() < 1e-6);
    let lambda = value("lambda_optimal");
    assert!((lambda / 1.58e-2 - 1.0).abs() < 0.02, "{lambda}");
    // |dOmega| = 4 and |Omega| = 1 in two dimensions.
    assert!((value("lambda_original") - 0.8).abs() < 1e-12);
}

#[test]
fn lambda_json_is_parseable() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY);
    let out = wpinn(&["lambda", &config, "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["lambda_optimal"].as_f64().unwrap() > 0.0);
}

#[test]
fn run_writes_csv_and_params_that_dump_field_reads() {
    let dir = tempfile::tempdir().unwrap();
    let params_dir = dir.path().join("params");
    let body = format!("{TINY}params_dir = {:?}\n", params_dir.to_str().unwrap());
    let config = write_config(dir.path(), &body);
    let results = dir.path().join("results.csv");
    let out = wpinn(&[
        "run",
        &config,
        "--seed",
        "4",
        "--iterations",
        "2",
        "--out",
        results.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let text = std::fs::read_to_string(&results).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "problem,method,seed,omega_or_alpha,dim,rel_l2,rel_linf,n_interior,n_boundary,iterations,wall_seconds"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..3], &["laplace", "optimal_weight", "4"]);
    assert_eq!(row[9], "2");
    assert!(lines.next().is_none(), "--seed keeps a single seed");

    let params = params_dir.join("params_seed4.txt");
    let header = std::fs::read_to_string(&params).unwrap();
    assert!(header.lines().any(|l| l.contains("seed") && l.contains('4')));

    let field = dir.path().join("field.csv");
    let out = wpinn(&[
        "dump-field",
        &config,
        params.to_str().unwrap(),
        "--out",
        field.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&field).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x1,x2,u_hat,u_exact,abs_error");
    assert_eq!(lines.count(), 17 * 17);
}

#[test]
fn run_json_mirrors_records() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY);
    let out = wpinn(&["run", &config, "--iterations", "1", "--format", "json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let records = v.as_array().unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[1]["seed"], 1);
    assert_eq!(records[0]["dim"], 2);
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_config(dir.path(), "problem = \"laplace\"\nfrequencies = [1]\nbogus = 3\n");
    assert!(!wpinn(&["run", &unknown]).status.success());
    assert!(!wpinn(&["lambda", dir.path().join("missing.toml").to_str().unwrap()])
        .status
        .success());

    let config = write_config(dir.path(), TINY);
    let garbage = dir.path().join("garbage.txt");
    std::fs::write(&garbage, "not parameters\n").unwrap();
    assert!(!wpinn(&["dump-field", &config, garbage.to_str().unwrap()])
        .status
        .success());
    assert!(!wpinn(&["run"]).status.success());
}

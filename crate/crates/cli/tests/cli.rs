use std::path::Path;
use std::process::{Command, Output};

use chomp_sdr::simgen::{
    gen_coefficients, gen_covariance, gen_design, gen_response, CoefPattern, CovStructure, CovarianceSpec, ModelId,
    ResultTable, Scale,
};

fn chomp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chomp")).args(args).current_dir(dir).env_remove("SDR_THREADS").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"{
  "name": "small",
  "model": "II",
  "covariance": { "structure": "ar", "scale": "random_diag" },
  "n": 200, "p": 12, "H": 10,
  "estimators": [
    { "name": "adaptive_chomp", "gamma": 2 },
    { "name": "lasso_sir", "tuning": { "kind": "cv", "folds": 5 } }
  ],
  "reps": 5, "seed": 3, "output": "out/results.csv"
}"#;

#[test]
fn simulate_writes_table_and_is_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.json"), SMALL).unwrap();
    let o = chomp(&["simulate", "s.json", "--threads", "1"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let path = dir.path().join("out/results.csv");
    let first = std::fs::read(&path).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert!(text.starts_with("model,p,estimator,metric,mean,sd,reps,seed\n"));
    assert!(text.contains("adaptive_chomp_g2-sir,error,"));

    let loaded = ResultTable::load(&path).unwrap();
    let mut buf = Vec::new();
    loaded.write_csv(&mut buf).unwrap();
    assert_eq!(buf, first);
    assert_eq!(loaded.metadata.reps, 5);

    let o = Command::new(env!("CARGO_BIN_EXE_chomp"))
        .args(["simulate", "s.json", "-o", "two.csv"])
        .env("SDR_THREADS", "2")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(dir.path().join("two.csv")).unwrap(), first);
}

#[test]
fn bad_configs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SMALL.replace("\"reps\"", "\"repz\"");
    std::fs::write(dir.path().join("bad.json"), bad).unwrap();
    let o = chomp(&["simulate", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("repz"), "{}", stderr(&o));

    std::fs::write(dir.path().join("broken.json"), "{ \"model\": ").unwrap();
    assert_eq!(chomp(&["simulate", "broken.json"], dir.path()).status.code(), Some(2));

    let bad_est = SMALL.replace("\"gamma\": 2", "\"gamma\": -1");
    std::fs::write(dir.path().join("g.json"), bad_est).unwrap();
    assert_eq!(chomp(&["simulate", "g.json"], dir.path()).status.code(), Some(2));
}

/// Model II data with the generating coefficients; returns the support.
fn write_model_ii(path: &Path, n: usize, p: usize) -> Vec<String> {
    let sigma = gen_covariance(&CovarianceSpec { structure: CovStructure::Ar { rho: 0.5 }, p, scale: Scale::RandomDiag }, 1)
        .unwrap();
    let beta = gen_coefficients(CoefPattern::FirstS { s: 5 }, p, 2).unwrap();
    let x = gen_design(&sigma, n, 3).unwrap();
    let y = gen_response(ModelId::II, &x, &beta, 4).unwrap();
    let mut w = csv::Writer::from_path(path).unwrap();
    let mut header: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    header.insert(2, "y".into());
    w.write_record(&header).unwrap();
    for i in 0..n {
        let mut row: Vec<String> = (0..p).map(|j| format!("{}", x[(i, j)])).collect();
        row.insert(2, format!("{}", y[i]));
        w.write_record(&row).unwrap();
    }
    w.flush().unwrap();
    (0..p).filter(|&k| beta[(k, 0)] != 0.0).map(|k| format!("x{}", k + 1)).collect()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn fit_recovers_generating_support() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write_model_ii(&dir.path().join("d.csv"), 1000, 30);
    let args = ["fit", "d.csv", "--response-col", "y", "--d", "1", "--H", "20", "--estimator", "adaptive-chomp", "--gamma", "2", "--seed", "5", "--out-dir", "fit"];
    let o = chomp(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(&dir.path().join("fit"));
    let selected: Vec<String> =
        r["selected_variables"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    assert_eq!(selected, truth);
    assert_eq!(r["selected_count"], 5);
    assert_eq!(r["support_sizes"][0], 5);
    let dcor = r["distance_correlation"].as_f64().unwrap();
    assert!(dcor > 0.5 && dcor <= 1.0);
    assert!(r["selected_mu"][0].as_f64().unwrap() >= 0.0);

    let coef = std::fs::read_to_string(dir.path().join("fit/coefficients.csv")).unwrap();
    let mut lines = coef.lines();
    assert_eq!(lines.next(), Some("variable,dir1"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 30);
    assert!(rows.iter().all(|r| !r.contains("-0,") && !r.ends_with(",-0") && !r.contains('e')));
    assert_eq!(rows.iter().filter(|r| r.ends_with(",0")).count(), 25);

    // identical invocation, identical bytes
    let o = chomp(&[&args[..15], &["again"]].concat(), dir.path());
    assert!(o.status.success());
    assert_eq!(coef, std::fs::read_to_string(dir.path().join("again/coefficients.csv")).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("fit/report.json")).unwrap(),
        std::fs::read(dir.path().join("again/report.json")).unwrap()
    );

    // evaluate the fit against itself and against the truth written in the same layout
    let o = chomp(&["eval", "fit/coefficients.csv", "fit/coefficients.csv"], dir.path());
    assert!(o.status.success());
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(out.lines().next(), Some("error,fpr,fnr,selected,true_nonzero,degenerate"));
    assert!(out.lines().nth(1).unwrap().starts_with("0,0,0,5,5,false"), "{out}");
}

#[test]
fn unpenalized_fit_is_dense() {
    let dir = tempfile::tempdir().unwrap();
    write_model_ii(&dir.path().join("d.csv"), 300, 8);
    let o = chomp(&["fit", "d.csv", "--response-col", "y", "--estimator", "unpenalized", "--standardize"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(dir.path());
    assert_eq!(r["selected_count"], 8);
    assert_eq!(r["standardized"], true);
}

#[test]
fn csv_problems_exit_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.csv"), "x1,x2,y\n1,2,3\n4,oops,6\n").unwrap();
    let o = chomp(&["fit", "a.csv", "--response-col", "y"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("x2"));
    std::fs::write(dir.path().join("b.csv"), "x1,x2,y\n1,2,3\n4,5,6\n").unwrap();
    let o = chomp(&["fit", "b.csv", "--response-col", "target"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(chomp(&["fit", "missing.csv", "--response-col", "y"], dir.path()).status.code(), Some(3));
}

#[test]
fn zero_variance_column_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("a,flat,c,y\n");
    for i in 0..40 {
        text.push_str(&format!("{},{},{},{}\n", i % 7, 2.5, (i * 3) % 11, i));
    }
    std::fs::write(dir.path().join("z.csv"), text).unwrap();
    let o = chomp(&["fit", "z.csv", "--response-col", "y", "--H", "4", "--standardize"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("'flat'"), "{}", stderr(&o));
}

#[test]
fn eval_rates_and_dimension_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    // two directions: truth support {1,2,3} ∪ {3,4}; estimate {1,2} ∪ {5}
    std::fs::write(dir.path().join("t.csv"), "variable,dir1,dir2\nv1,1,0\nv2,1,0\nv3,1,1\nv4,0,1\nv5,0,0\nv6,0,0\n").unwrap();
    std::fs::write(dir.path().join("f.csv"), "variable,dir1,dir2\nv1,1,0\nv2,-0.5,0\nv3,0,0\nv4,0,0\nv5,0,2\nv6,0,0\n").unwrap();
    let o = chomp(&["eval", "f.csv", "t.csv", "-o", "r.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let fields: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    // false positives: v5 of {v5, v6}; false negatives: v3, v4 of {v1..v4}
    assert_eq!(fields[1], "0.5");
    assert_eq!(fields[2], "0.5");
    assert_eq!(fields[3], "3");
    assert_eq!(fields[4], "4");

    std::fs::write(dir.path().join("short.csv"), "variable,dir1,dir2\nv1,1,0\nv2,1,0\n").unwrap();
    let o = chomp(&["eval", "f.csv", "short.csv"], dir.path());
    assert_eq!(o.status.code(), Some(4));
}

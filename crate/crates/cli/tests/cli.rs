use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn plrvo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plrvo"))
        .args(args)
        .env_remove("PLRV_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_str(&stdout(out)).unwrap()
}

fn write(dir: &TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn plrv_job(clip: f64, n: u64, steps: u64) -> String {
    format!(
        r#"{{"mechanism":"plrvo","params":{{"k":414.2857,"theta":2.4196e-4}},
        "job":{{"steps_T":{steps},"sampling_rate_zeta":0.00977631,"model_dim_N":{n},"clip_C":{clip},"delta":1e-5,"lambda_max":64}}}}"#
    )
}

fn optimize_job(eps: f64, clip_min: f64, clip_max: f64) -> String {
    format!(
        r#"{{"mechanism":"plrvo","params":{{"k":10,"theta":0.01}},
        "job":{{"steps_T":100,"sampling_rate_zeta":0.05,"model_dim_N":50,"lambda_max":32}},
        "target":{{"epsilon_star":{eps},"delta_star":1e-5}},
        "optimizer":{{"clip_min":{clip_min},"clip_max":{clip_max}}}}}"#
    )
}

#[test]
fn account_reports_epsilon_and_curve() {
    let dir = TempDir::new().unwrap();
    let job = write(&dir, "job.json", &plrv_job(0.1, 100, 1000));
    let curve = dir.path().join("curve.csv");
    let v = json(&plrvo(&["account", &job, "--curve", curve.to_str().unwrap()]));
    assert_eq!(v["mode"], "exact");
    assert!(v["epsilon"].as_f64().unwrap() > 0.0);
    assert!(v.get("approx_error_estimate").is_none());
    let text = fs::read_to_string(&curve).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lambda,alpha_per_step"));
    assert_eq!(lines.count(), 64);

    let again = json(&plrvo(&["account", &job]));
    assert_eq!(v, again);
}

#[test]
fn accelerated_mode_reports_its_error() {
    let dir = TempDir::new().unwrap();
    let job = write(&dir, "job.json", &plrv_job(1.0, 50_000, 100));
    let exact = json(&plrvo(&["account", &job]));
    let fast = json(&plrvo(&["account", &job, "--mode", "accelerated"]));
    assert_eq!(fast["mode"], "accelerated");
    assert!(fast["approx_error_estimate"].as_f64().unwrap() >= 0.0);
    let (a, b) = (exact["epsilon"].as_f64().unwrap(), fast["epsilon"].as_f64().unwrap());
    assert!((a - b).abs() < 1e-6 * a, "{a} vs {b}");
}

fn sweep(dir: &TempDir, clip: f64) -> Vec<f64> {
    let job = write(dir, &format!("sweep{clip}.json"), &plrv_job(clip, 1000, 1));
    let text = stdout(&plrvo(&["sweep-t", &job, "--t-values", "1,10,50,100,250,500"]));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("T,epsilon"));
    lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect()
}

#[test]
fn sweep_is_increasing_in_steps_and_clip() {
    let dir = TempDir::new().unwrap();
    let small = sweep(&dir, 0.1);
    let large = sweep(&dir, 0.5);
    assert_eq!(small.len(), 6);
    assert!(small.windows(2).all(|w| w[1] > w[0]), "{small:?}");
    assert!(small.iter().zip(&large).all(|(a, b)| b >= a));
}

#[test]
fn sweep_writes_to_file() {
    let dir = TempDir::new().unwrap();
    let job = write(&dir, "job.json", &plrv_job(0.1, 10, 1));
    let out = dir.path().join("s.csv");
    stdout(&plrvo(&[
        "sweep-t",
        &job,
        "--t-values",
        "5,6",
        "--out",
        out.to_str().unwrap(),
    ]));
    assert_eq!(fs::read_to_string(out).unwrap().lines().count(), 3);
}

#[test]
fn optimize_round_trips_through_account() {
    let dir = TempDir::new().unwrap();
    let job = write(&dir, "opt.json", &optimize_job(2.0, 0.5, 2.0));
    let r = json(&plrvo(&["optimize", &job]));
    let (k, theta, clip) = (
        r["k_star"].as_f64().unwrap(),
        r["theta_star"].as_f64().unwrap(),
        r["C_star"].as_f64().unwrap(),
    );
    assert!(r["snr"].as_f64().unwrap() >= r["grid_snr"].as_f64().unwrap());
    let check = format!(
        r#"{{"mechanism":"plrvo","params":{{"k":{k},"theta":{theta}}},
        "job":{{"steps_T":100,"sampling_rate_zeta":0.05,"model_dim_N":50,"clip_C":{clip},"delta":1e-5,"lambda_max":32}}}}"#
    );
    let check = write(&dir, "check.json", &check);
    let acc = json(&plrvo(&["account", &check]));
    let eps = acc["epsilon"].as_f64().unwrap();
    assert!(eps <= 2.0, "{eps}");
    let achieved = r["achieved_epsilon"].as_f64().unwrap();
    assert!((eps - achieved).abs() <= 1e-12 * achieved, "{eps} vs {achieved}");
}

#[test]
fn widening_the_clip_box_never_lowers_snr() {
    let dir = TempDir::new().unwrap();
    let narrow = json(&plrvo(&[
        "optimize",
        &write(&dir, "a.json", &optimize_job(1.0, 1.0, 1.0)),
    ]));
    let wide = json(&plrvo(&[
        "optimize",
        &write(&dir, "b.json", &optimize_job(1.0, 0.5, 2.0)),
    ]));
    let (a, b) = (narrow["snr"].as_f64().unwrap(), wide["snr"].as_f64().unwrap());
    assert!(b >= a * (1.0 - 1e-4), "{b} < {a}");
}

#[test]
fn infeasible_optimize_exits_3_with_diagnosis() {
    let dir = TempDir::new().unwrap();
    let job = write(&dir, "bad.json", &optimize_job(1e-6, 0.5, 1.0));
    let out = plrvo(&["optimize", &job]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("c2"));
}

#[test]
fn schema_errors_exit_1() {
    let dir = TempDir::new().unwrap();
    let cases = [
        plrv_job(0.1, 10, 1).replace("\"delta\"", "\"dleta\""),
        plrv_job(0.1, 10, 1).replace("\"theta\"", "\"scale\""),
        plrv_job(0.1, 10, 1).replace("plrvo", "cauchy"),
        plrv_job(0.1, 10, 1).replace("\"job\"", "\"extra\":1,\"job\""),
        "not json".to_string(),
    ];
    for (i, body) in cases.iter().enumerate() {
        let job = write(&dir, &format!("bad{i}.json"), body);
        assert_eq!(plrvo(&["account", &job]).status.code(), Some(1), "{body}");
    }
    assert_eq!(plrvo(&["account", "/nonexistent/job.json"]).status.code(), Some(1));
    assert_eq!(plrvo(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(
        plrvo(&["--threads", "many", "distortion", "--table2"]).status.code(),
        Some(1)
    );
    // Optimize needs target and optimizer sections.
    let job = write(&dir, "plain.json", &plrv_job(0.1, 10, 1));
    assert_eq!(plrvo(&["optimize", &job]).status.code(), Some(1));
}

#[test]
fn mgf_violation_exits_2() {
    let dir = TempDir::new().unwrap();
    // lambda_max * C * theta = 64 * 100 * 2.4196e-4 > 1.
    let job = write(&dir, "mgf.json", &plrv_job(100.0, 10, 1));
    let out = plrvo(&["account", &job]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda"));
}

#[test]
fn lambda_max_defaults_when_absent() {
    let dir = TempDir::new().unwrap();
    let body = plrv_job(10.0, 10, 1).replace(",\"lambda_max\":64", "");
    let job = write(&dir, "d.json", &body);
    // The PLRV default stays inside the MGF domain for this clip.
    assert!(plrvo(&["account", &job]).status.success());
}

#[test]
fn distortion_outputs() {
    let text = stdout(&plrvo(&["distortion", "--table2"]));
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 4);

    let v = json(&plrvo(&["distortion", "--k", "141.06", "--theta", "8.32e-4"]));
    assert_eq!(v["mechanism"], "plrvo");
    assert!((v["per_coordinate_l1"].as_f64().unwrap() - 8.58).abs() < 0.01);

    let csv = stdout(&plrvo(&[
        "distortion",
        "--mechanism",
        "gaussian",
        "--sigma",
        "0.9456",
        "--clip",
        "5",
        "--csv",
    ]));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("mechanism,l1_per_coord,finite"));
    assert!(lines.next().unwrap().starts_with("gaussian,3.77"));

    let csv = stdout(&plrvo(&["distortion", "--k", "1", "--theta", "1", "--csv"]));
    assert!(csv.contains("plrvo,inf,false"));

    assert_eq!(plrvo(&["distortion", "--k", "3"]).status.code(), Some(1));
}

#[test]
fn sample_is_reproducible() {
    let args = [
        "sample", "--k", "10", "--theta", "0.1", "--n", "4", "--draws", "50", "--seed", "9",
    ];
    let a = stdout(&plrvo(&args));
    let b = stdout(&plrvo(&args));
    assert_eq!(a, b);
    assert_eq!(
        a.lines().next(),
        Some("draw_index,scale_b,coord_0,coord_1,coord_2,coord_3")
    );
    assert_eq!(a.lines().count(), 51);

    let other = stdout(&plrvo(&[
        "sample", "--k", "10", "--theta", "0.1", "--n", "4", "--draws", "50", "--seed", "10",
    ]));
    assert_ne!(a, other);

    let dir = TempDir::new().unwrap();
    let out = dir.path().join("s.csv");
    let mut with_out = args.to_vec();
    with_out.extend(["--out", out.to_str().unwrap()]);
    stdout(&plrvo(&with_out));
    assert_eq!(fs::read_to_string(out).unwrap(), a);
}

fn column_mean_abs(csv: &str) -> (f64, usize) {
    let mut sum = 0.0;
    let mut count = 0;
    for line in csv.lines().skip(1) {
        for v in line.split(',').skip(2) {
            sum += v.parse::<f64>().unwrap().abs();
            count += 1;
        }
    }
    (sum / count as f64, count)
}

#[test]
fn sample_gaussian_half_normal_mean() {
    let csv = stdout(&plrvo(&[
        "sample",
        "--mechanism",
        "gaussian",
        "--sigma",
        "1.5",
        "--clip",
        "2",
        "--n",
        "10",
        "--draws",
        "20000",
        "--seed",
        "1",
    ]));
    let (mean, count) = column_mean_abs(&csv);
    let sigma = 3.0;
    let expected = sigma * (2.0 / std::f64::consts::PI).sqrt();
    let se = sigma * (1.0 - 2.0 / std::f64::consts::PI).sqrt() / (count as f64).sqrt();
    assert!((mean - expected).abs() < 4.0 * se, "{mean} vs {expected}");
}

#[test]
fn sample_laplace_and_secure_rng() {
    let csv = stdout(&plrvo(&[
        "sample",
        "--mechanism",
        "laplace",
        "--b",
        "2",
        "--n",
        "5",
        "--draws",
        "20000",
    ]));
    let (mean, _) = column_mean_abs(&csv);
    assert!((mean - 2.0).abs() < 0.05, "{mean}");

    let out = plrvo(&["sample", "--k", "10", "--theta", "0.1", "--secure-rng", "--draws", "3"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert_eq!(stdout(&out).lines().count(), 4);
}

#[test]
fn train_demo_is_deterministic_across_threads() {
    let args = [
        "train-demo",
        "--mechanism",
        "plrvo",
        "--epsilon",
        "2",
        "--epochs",
        "2",
        "--seed",
        "4",
    ];
    let one = stdout(&plrvo(&[&["--threads", "1"], &args[..]].concat()));
    let max = stdout(&plrvo(&[&["--threads", "max"], &args[..]].concat()));
    assert_eq!(one, max);
    let v: Value = serde_json::from_str(&one).unwrap();
    assert_eq!(v["steps_executed"], v["accounted_job"]["steps_T"]);
    assert!(v["epsilon_report"]["epsilon"].as_f64().unwrap() <= 2.0);
    assert!(v["test_accuracy"].as_f64().unwrap() > 0.9);

    let env = Command::new(env!("CARGO_BIN_EXE_plrvo"))
        .args(args)
        .env("PLRV_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(stdout(&env), one);
}

#[test]
fn train_demo_gaussian_and_ledger_file() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("ledger.json");
    stdout(&plrvo(&[
        "train-demo",
        "--mechanism",
        "gaussian",
        "--epsilon",
        "2",
        "--epochs",
        "2",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]));
    let v: Value = serde_json::from_str(&fs::read_to_string(Path::new(&out)).unwrap()).unwrap();
    assert_eq!(v["run"]["mechanism"], "gaussian");
    assert!(v["run"]["params"]["sigma"].as_f64().unwrap() > 0.0);
    assert!(v["test_accuracy"].as_f64().unwrap() > 0.9);
}

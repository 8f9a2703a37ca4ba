use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_circlemap"))
        .args(args)
        .env("CIRCLEMAP_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn orbit_csv_columns() {
    let o = run(&["orbit", "--a", "0.3", "--n", "10", "--L", "1000"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("# circlemap "));
    let rows = data_lines(&text);
    assert_eq!(rows[0], "i,c_i,log_deriv,sign,dist,d_i,D_{i+1}");
    assert_eq!(rows.len(), 12);
}

#[test]
fn check_prints_json_lines() {
    let o = run(&["check", "--a", "0.3", "--n", "30", "--profile", "empirical", "--sigma", "0.01", "--delta0", "0.005", "--delta", "0.001"]);
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 8);
    let kinds: Vec<&str> = lines.iter().map(|v| v["kind"].as_str().unwrap()).collect();
    assert_eq!(&kinds[..4], ["MIS", "X", "Y", "W"]);
}

#[test]
fn returns_and_critical() {
    let o = run(&["returns", "--a", "0.3", "--profile", "empirical", "--sigma", "0.05", "--delta0", "0.02", "--delta", "0.01"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(data_lines(&stdout(&o))[0], "critical_point,time,bound_to,depth,depth_index,bound_period,kind,essential");
    let o = run(&["critical", "--L", "1e4"]);
    assert_eq!(data_lines(&stdout(&o)).len(), 3);
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn exclude_is_deterministic_and_report_rebuilds() {
    let tmp = tempfile::tempdir().unwrap();
    let args = |out: &str| {
        vec![
            "exclude".to_string(),
            "--samples".into(),
            "2000".into(),
            "--n-max".into(),
            "15".into(),
            "--seed".into(),
            "3".into(),
            "--profile".into(),
            "empirical".into(),
            "--sigma".into(),
            "0.01".into(),
            "--delta0".into(),
            "0.005".into(),
            "--delta".into(),
            "0.001".into(),
            "-o".into(),
            out.to_string(),
        ]
    };
    let a = tmp.path().join("a");
    let argv = args(a.to_str().unwrap());
    let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
    let files = ["trend.csv", "survivors.csv", "records.json"];
    assert_eq!(run(&argv).status.code(), Some(0));
    let first: Vec<String> = files.iter().map(|f| read(&a, f)).collect();
    assert_eq!(run(&argv).status.code(), Some(0));
    for (f, before) in files.iter().zip(&first) {
        assert_eq!(&read(&a, f), before, "{f}");
    }
    assert_eq!(data_lines(&read(&a, "survivors.csv")).len(), 2001);
    let rebuilt = tmp.path().join("r");
    let o = run(&["report", a.join("records.json").to_str().unwrap(), "-o", rebuilt.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read(&a, "trend.csv"), read(&rebuilt, "trend.csv"));
}

#[test]
fn config_file_and_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    let out = tmp.path().join("sweep");
    fs::write(
        &cfg,
        format!(
            "seed = 1\nl_list = [100.0, 1000.0]\nn_max = 10\nsamples = 1000\noutput_dir = {:?}\n[profile]\nkind = \"empirical\"\nsigma = 0.01\ndelta0 = 0.005\ndelta = 0.001\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = run(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let trend = read(&out, "trend.csv");
    assert!(trend.contains("\"seed\":1"));
    assert_eq!(data_lines(&trend).len(), 3);
}

#[test]
fn verify_writes_report_and_violations() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--lemma", "dist", "--trials", "100", "--L", "1e4", "--seed", "5", "-o", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&read(tmp.path(), "dist_report.json")).unwrap();
    assert_eq!(report["report"]["trials"], 100);
    assert_eq!(report["header"]["config"]["seed"], 5);
    assert!(read(tmp.path(), "dist_violations.csv").contains("lemma,trial,clause"));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["orbit"]).status.code(), Some(1));
    assert_eq!(run(&["exclude", "--beta", "2.5"]).status.code(), Some(1));
    assert_eq!(run(&["verify", "--lemma", "nope"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["report", "/nonexistent/records.json"]).status.code(), Some(3));
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "seed = 1\nbogus = 2\n").unwrap();
    let o = run(&["critical", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

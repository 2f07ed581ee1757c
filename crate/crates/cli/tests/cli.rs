use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use hamcert::presets::RydbergParamsDef;
use serde_json::Value;

fn hamcert(dir: &Path, args: &[&str]) -> Output {
    hamcert_with(dir, args, None, &[])
}

fn hamcert_with(dir: &Path, args: &[&str], stdin: Option<&str>, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hamcert"));
    cmd.current_dir(dir)
        .args(args)
        .env_remove("HAMCERT_SEED")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    for (k, v) in env {
        cmd.env(k, v);
    }
    let mut child = cmd.spawn().unwrap();
    let mut pipe = child.stdin.take().unwrap();
    if let Some(text) = stdin {
        pipe.write_all(text.as_bytes()).unwrap();
    }
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&read(path)).unwrap()
}

/// Data rows of a CSV, skipping the `#` header block and the column line.
fn rows(path: &Path) -> Vec<Vec<String>> {
    read(path)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn column(path: &Path, k: usize) -> String {
    rows(path).iter().map(|r| format!("{}\n", r[k])).collect()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn identical_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let args = |out: &'static str, jobs: &'static str| {
        ["monitor", "--preset", "fig3-left", "--trials", "8", "--seed", "5", "--jobs", jobs, "--out", out]
    };
    ok(&hamcert(tmp.path(), &args("a", "1")));
    ok(&hamcert(tmp.path(), &args("b", "3")));
    let names = listing(&tmp.path().join("a"));
    assert_eq!(names, ["fig3-left.csv", "fig3-left.json", "monitor_trace.csv"]);
    for f in &names {
        assert_eq!(read(&tmp.path().join("a").join(f)), read(&tmp.path().join("b").join(f)), "{f}");
    }
}

#[test]
fn headers_echo_version_config_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&hamcert(tmp.path(), &["arl", "--h", "5", "--theta", "0.7", "--seed", "11"]));
    let csv = read(&tmp.path().join("arl.csv"));
    let head: Vec<&str> = csv.lines().take(5).collect();
    assert_eq!(head[0], format!("# hamcert {}", env!("CARGO_PKG_VERSION")));
    assert_eq!(head[1], "# command: arl");
    assert_eq!(head[2], "# seed: 11");
    assert!(head[3].starts_with("# config: {") && head[3].contains("\"theta\":0.7"));
    assert_eq!(head[4], "h,theta_or_norm,arl,method");
    let j = json(&tmp.path().join("arl.json"));
    assert_eq!(j["meta"]["seed"], 11);
    assert_eq!(j["meta"]["config"]["h"], 5);
}

#[test]
fn missing_config_exits_two_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hamcert(tmp.path(), &["certify", "--config", "absent.cfg", "--out", "res"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.cfg"));
    assert!(listing(tmp.path()).is_empty());
}

#[test]
fn bad_config_entries_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("typo.cfg"), "trials = 3\nsigma_smal = 0.1\n").unwrap();
    fs::write(tmp.path().join("value.cfg"), "trials = many\n").unwrap();
    for cfg in ["typo.cfg", "value.cfg"] {
        let out = hamcert(tmp.path(), &["monitor", "--config", cfg, "--out", "res"]);
        assert_eq!(out.status.code(), Some(2), "{cfg}");
    }
    assert_eq!(listing(tmp.path()), ["typo.cfg", "value.cfg"]);
}

#[test]
fn flags_override_config_over_preset() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("scenario.cfg"),
        "# smaller run\ntrials = 4\nhorizon = 12\nwindow_start = 0.5\nseed = 9\n",
    )
    .unwrap();
    ok(&hamcert(tmp.path(), &["monitor", "--config", "scenario.cfg", "--trials", "3"]));
    let j = json(&tmp.path().join("fig3-left.json"));
    assert_eq!(j["trials"].as_array().unwrap().len(), 3);
    let cfg = &j["meta"]["config"];
    assert_eq!(cfg["horizon"], 12);
    assert_eq!(cfg["scenario"]["window_start"], 0.5);
    assert_eq!(cfg["scenario"]["sigma_large"], 0.1);
    assert_eq!(j["meta"]["seed"], 9);
}

#[test]
fn seed_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let env = [("HAMCERT_SEED", "4242")];
    ok(&hamcert_with(tmp.path(), &["arl", "--h", "2", "--theta", "1", "--out", "e"], None, &env));
    ok(&hamcert_with(tmp.path(), &["arl", "--h", "2", "--theta", "1", "--seed", "1", "--out", "f"], None, &env));
    assert_eq!(json(&tmp.path().join("e/arl.json"))["meta"]["seed"], 4242);
    assert_eq!(json(&tmp.path().join("f/arl.json"))["meta"]["seed"], 1);
}

#[test]
fn degenerate_arl_is_ceiling() {
    let tmp = tempfile::tempdir().unwrap();
    for (h, up, want) in [("2", "1", "2"), ("7", "3", "3"), ("9", "3", "3"), ("0", "1", "0")] {
        ok(&hamcert(tmp.path(), &["arl", "--h", h, "--theta", "1", "--up", up, "--down", "2"]));
        let r = rows(&tmp.path().join("arl.csv"));
        assert_eq!(r, vec![vec![h.to_string(), "1".into(), want.into(), "exact-lattice".into()]]);
    }
    ok(&hamcert(tmp.path(), &["arl", "--h", "3", "--theta", "0"]));
    assert_eq!(rows(&tmp.path().join("arl.csv"))[0][2], "inf");
    assert!(json(&tmp.path().join("arl.json"))["arl"].is_null());
}

#[test]
fn non_commensurable_scores_exit_four() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hamcert(tmp.path(), &["arl", "--p", "0.3", "--q", "0.5", "--h", "3", "--out", "x"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not commensurable"));
    assert!(listing(tmp.path()).is_empty());
}

#[test]
fn golden_probabilities_give_exact_report() {
    let tmp = tempfile::tempdir().unwrap();
    let p = format!("{}", hamcert::cusum::golden_ratio_p());
    ok(&hamcert(tmp.path(), &["arl", "--p", &p, "--q", "0.5", "--h", "3"]));
    let j = json(&tmp.path().join("arl.json"));
    assert_eq!((j["lattice"]["up"].as_u64(), j["lattice"]["down"].as_u64()), (Some(2), Some(1)));
    let pre = j["report"]["pre_change"].as_f64().unwrap();
    let post = j["report"]["post_change"].as_f64().unwrap();
    assert!(pre > post && post >= 1.0);
}

#[test]
fn fig4_left_table() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&hamcert(tmp.path(), &["arl", "--preset", "fig4-left", "--trials", "2000"]));
    let r = rows(&tmp.path().join("fig4-left.csv"));
    let exact: Vec<&Vec<String>> = r.iter().filter(|x| x[3] == "exact-lattice").collect();
    assert_eq!(exact.len(), 11 * 20);
    assert_eq!(r.iter().filter(|x| x[3] == "monte-carlo").count(), 6);
    for block in exact.chunks(20) {
        let arl: Vec<f64> = block.iter().map(|x| x[2].parse().unwrap()).collect();
        assert!(arl.windows(2).all(|w| w[1] <= w[0]), "{:?}", block[0][0]);
    }
}

#[test]
fn fig4_right_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["arl", "--preset", "fig4-right", "--trials", "10", "--norms", "1,2", "--horizon", "2000"];
    ok(&hamcert(tmp.path(), &args));
    let r = rows(&tmp.path().join("fig4-right.csv"));
    let methods: Vec<&str> = r.iter().map(|x| x[3].as_str()).collect();
    assert_eq!(methods, ["median", "p2.5", "p97.5", "median", "p2.5", "p97.5"]);
    assert!(r.iter().all(|x| x[0] == "3"));
    let j = json(&tmp.path().join("fig4-right.json"));
    assert_eq!(j["rows"][1]["steps"].as_array().unwrap().len(), 10);
}

#[test]
fn certify_pass_without_deviation_and_fail_at_point_three() {
    let tmp = tempfile::tempdir().unwrap();
    let base = ["certify", "--n", "3", "--preset", "rydberg", "--rounds", "20000", "--seed", "7"];
    ok(&hamcert(tmp.path(), &[&base[..], &["--dev-norm", "0.0", "--out", "zero"]].concat()));
    ok(&hamcert(tmp.path(), &[&base[..], &["--dev-norm", "0.3", "--out", "dev"]].concat()));
    let zero = json(&tmp.path().join("zero/certify_summary.json"));
    assert_eq!(zero["decision"], "Pass");
    assert!(zero["reject_fraction"].as_f64().unwrap() <= 1e-4);
    assert_eq!(zero["plan"]["rounds"], 20000);
    let dev = json(&tmp.path().join("dev/certify_summary.json"));
    assert_eq!(dev["decision"], "Fail");
    assert!((dev["frobenius_deviation"].as_f64().unwrap() - 0.3).abs() < 1e-12);
    let r = rows(&tmp.path().join("dev/certify_rounds.csv"));
    assert_eq!(r.len(), 20000);
    assert_eq!(r[0][0], "1");
    assert!(r.iter().all(|x| x[2] == "1"));
}

#[test]
fn certify_stdin_matches_in_process() {
    let tmp = tempfile::tempdir().unwrap();
    let run = ["certify", "--preset", "rydberg", "--dev-norm", "0.4", "--mode", "lrt", "--shots", "2"];
    ok(&hamcert(tmp.path(), &[&run[..], &["--out", "live"]].concat()));
    let counts = column(&tmp.path().join("live/certify_rounds.csv"), 1);
    let args = ["certify", "--preset", "rydberg", "--stdin", "--mode", "lrt", "--shots", "2", "--out", "replay"];
    ok(&hamcert_with(tmp.path(), &args, Some(&counts), &[]));
    let a = json(&tmp.path().join("live/certify_summary.json"));
    let b = json(&tmp.path().join("replay/certify_summary.json"));
    assert_eq!(a["verdict"], b["verdict"]);
}

#[test]
fn monitor_stdin_matches_in_process() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["monitor", "--trials", "1", "--sigma-large", "0.5", "--seed", "3", "--stop-at-crossing"];
    ok(&hamcert(tmp.path(), &args));
    let trace = tmp.path().join("monitor_trace.csv");
    let counts = column(&trace, 2);
    ok(&hamcert_with(tmp.path(), &["monitor", "--stdin", "--out", "s"], Some(&counts), &[]));
    let live = json(&tmp.path().join("fig3-left.json"));
    let replay = json(&tmp.path().join("s/cusum_result.json"));
    assert_eq!(live["trials"][0]["steps"], replay["steps"]);
    assert_eq!(live["trials"][0]["nu_hat"], replay["nu_hat"]);
    assert_eq!(live["trials"][0]["censored"], replay["censored"]);
    assert_eq!(column(&trace, 4), column(&tmp.path().join("s/cusum_trace.csv"), 2));
}

#[test]
fn stdin_rejects_garbage() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hamcert_with(tmp.path(), &["monitor", "--stdin"], Some("1\nx\n"), &[]);
    assert_eq!(out.status.code(), Some(2));
    let out = hamcert_with(tmp.path(), &["certify", "--stdin"], Some(""), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(listing(tmp.path()).is_empty());
}

#[test]
fn hamiltonian_files() {
    let tmp = tempfile::tempdir().unwrap();
    let h0 = RydbergParamsDef::default().hamiltonian(3).unwrap();
    fs::write(tmp.path().join("h0.txt"), h0.to_text()).unwrap();
    let strict = hamcert(tmp.path(), &["certify", "--h0", "h0.txt", "--rounds", "100", "--out", "s"]);
    assert_eq!(strict.status.code(), Some(2));
    let common = ["certify", "--preset", "rydberg", "--rounds", "500", "--dev-norm", "0.5"];
    ok(&hamcert(tmp.path(), &[&common[..], &["--h0", "h0.txt", "--relaxed", "--out", "file"]].concat()));
    ok(&hamcert(tmp.path(), &[&common[..], &["--out", "built"]].concat()));
    assert_eq!(
        read(&tmp.path().join("file/certify_rounds.csv")).lines().skip(4).collect::<Vec<_>>(),
        read(&tmp.path().join("built/certify_rounds.csv")).lines().skip(4).collect::<Vec<_>>()
    );

    fs::write(tmp.path().join("two.txt"), "# two qubits\nn 2\nM 1.0\nXZ 0.5\nZI -0.25\n").unwrap();
    ok(&hamcert(tmp.path(), &["certify", "--h0", "two.txt", "--rounds", "50", "--out", "two"]));
    let j = json(&tmp.path().join("two/certify_summary.json"));
    assert_eq!((j["plan"]["n"].as_u64(), j["plan"]["m"].as_f64()), (Some(2), Some(1.0)));
    let out = hamcert(tmp.path(), &["certify", "--h0", "two.txt", "--n", "3", "--out", "bad"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn capacity_errors_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hamcert(tmp.path(), &["certify", "--n", "7", "--sampler", "exact", "--rounds", "10"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn fig3_presets_detect_after_window_or_not_at_all() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&hamcert(tmp.path(), &["monitor", "--preset", "fig3-left", "--trials", "40"]));
    ok(&hamcert(tmp.path(), &["monitor", "--preset", "fig3-right", "--trials", "20"]));
    let left = json(&tmp.path().join("fig3-left.json"));
    let band = left["band"].as_array().unwrap();
    assert_eq!(band.len(), 60);
    let cross = band.iter().find(|b| b["median"].as_f64().unwrap() >= 3.0).expect("median crosses");
    assert!(cross["step"].as_u64().unwrap() as f64 * 0.1 >= 2.0 - 1e-9);
    assert_eq!(rows(&tmp.path().join("fig3-left.csv")).len(), 40 * 60);
    let right = json(&tmp.path().join("fig3-right.json"));
    assert!(right["censored_fraction"].as_f64().unwrap() >= 0.95);
}

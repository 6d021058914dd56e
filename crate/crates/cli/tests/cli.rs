use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scenario(name: &str) -> PathBuf {
    root().join("scenarios").join(format!("{name}.toml"))
}

fn xdeal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xdeal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn bundled() -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(root().join("scenarios"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .map(|p| p.file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn reports_match_golden_files() {
    let bless = std::env::var_os("XDEAL_BLESS").is_some();
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    for name in bundled() {
        let path = scenario(&name);
        let out = xdeal(&["run", "--scenario", path.to_str().unwrap()]);
        let got = stdout(&out);
        let golden = dir.join(format!("{name}.txt"));
        if bless {
            std::fs::write(&golden, &got).unwrap();
            continue;
        }
        let want = std::fs::read_to_string(&golden).unwrap_or_else(|_| panic!("missing {}", golden.display()));
        assert_eq!(got, want, "{name} differs from its golden report");
    }
}

#[test]
fn reports_are_byte_stable() {
    for name in ["ticket_deal_cbc", "virus_alice_timelock"] {
        let p = scenario(name);
        let a = xdeal(&["run", "--scenario", p.to_str().unwrap(), "--report", "structured"]);
        let b = xdeal(&["run", "--scenario", p.to_str().unwrap(), "--report", "structured"]);
        assert_eq!(a.stdout, b.stdout);
    }
}

#[test]
fn exit_codes_partition_outcomes() {
    let run = |name: &str, extra: &[&str]| {
        let p = scenario(name);
        let mut args = vec!["run", "--scenario", p.to_str().unwrap()];
        args.extend_from_slice(extra);
        xdeal(&args)
    };
    let ok = run("ticket_deal_timelock", &[]);
    assert_eq!(code(&ok), 0);
    assert!(stdout(&ok).contains("outcome: COMMITTED"));
    assert_eq!(code(&run("virus_alice_timelock", &[])), 0);
    assert_eq!(code(&run("naive_timeout_regression", &[])), 3);
    assert_eq!(code(&run("offline_alice_timelock", &[])), 4);

    let explored = run("naive_timeout_regression", &["--explore"]);
    assert_eq!(code(&explored), 3);
    let text = stdout(&explored);
    assert!(text.contains("verdict: UNSAFE"));
    assert!(text.contains("minimal violation: bob as last-minute-vote(coins/carol)"));

    let missing = xdeal(&["run", "--scenario", "/nonexistent/x.toml"]);
    assert_eq!(code(&missing), 1);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\nprotocol = \"teleport\"\n").unwrap();
    let parsed = xdeal(&["run", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(code(&parsed), 2);
    assert!(String::from_utf8_lossy(&parsed.stderr).starts_with("error:"));
}

#[test]
fn campaign_runs_clean() {
    let p = scenario("ticket_deal_cbc");
    let out = xdeal(&["run", "--scenario", p.to_str().unwrap(), "--runs", "200", "--seed", "4"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("violations: 0"));
}

#[test]
fn replay_reproduces_report_and_rescales_gas() {
    let dir = tempfile::tempdir().unwrap();
    for name in bundled() {
        let p = scenario(&name);
        let trace = dir.path().join(format!("{name}.tsv"));
        let run = xdeal(&[
            "run",
            "--scenario",
            p.to_str().unwrap(),
            "--report",
            "structured",
            "--trace",
            trace.to_str().unwrap(),
        ]);
        let back = xdeal(&["replay", "--trace", trace.to_str().unwrap(), "--report", "structured"]);
        assert_eq!(run.stdout, back.stdout, "{name}");
        assert_eq!(code(&run), code(&back));
    }

    let trace = dir.path().join("ticket_deal_timelock.tsv");
    let base = xdeal(&["replay", "--trace", trace.to_str().unwrap(), "--report", "structured"]);
    let alt = xdeal(&[
        "replay",
        "--trace",
        trace.to_str().unwrap(),
        "--report",
        "structured",
        "--gas-write",
        "1",
        "--gas-sig",
        "0",
    ]);
    let base: serde_json::Value = serde_json::from_slice(&base.stdout).unwrap();
    let alt: serde_json::Value = serde_json::from_slice(&alt.stdout).unwrap();
    assert_eq!(base["verdicts"], alt["verdicts"]);
    assert_eq!(alt["cost"]["total_gas"], alt["cost"]["total"]["writes"]);
    assert_ne!(base["cost"]["total_gas"], alt["cost"]["total_gas"]);
}

#[test]
fn tampered_finalize_record_is_reported_by_line() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.tsv");
    let p = scenario("ticket_deal_timelock");
    xdeal(&["run", "--scenario", p.to_str().unwrap(), "--trace", trace.to_str().unwrap()]);
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let i = lines
        .iter()
        .position(|l| l.split('\t').nth(2) == Some("finalize"))
        .unwrap();
    lines[i] = lines[i].replace("\tcommitted\t", "\taborted\t");
    std::fs::write(&trace, lines.join("\n") + "\n").unwrap();
    let out = xdeal(&["replay", "--trace", trace.to_str().unwrap()]);
    assert_eq!(code(&out), 5);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("line {}", i + 1)), "{err}");
}

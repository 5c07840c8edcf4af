use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn xrpipe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xrpipe"))
        .args(args)
        .output()
        .expect("spawn xrpipe")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn examples() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/examples")
}

const BAD: &str = r#"
[[kernels]]
name = "cam"
type = "SyntheticFrameSource"
placement = "server"

[[kernels]]
name = "sink"
type = "LatencySink"
placement = "client"

[[kernels]]
name = "x"
type = "Nonexistent"
placement = "client"

[[edges]]
from = "cam.out"
to = "sink.in"
kind = "remote"
transport = { listen = "127.0.0.1:7001" }
"#;

#[test]
fn validate_exit_codes() {
    let good = examples().join("split.toml");
    let o = xrpipe(&["validate", good.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "OK\n");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, BAD).unwrap();
    let o = xrpipe(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert!(
        lines.iter().any(|l| l.starts_with("PLACEMENT_VIOLATION: ")),
        "{out}"
    );
    assert!(
        lines.iter().any(|l| l.starts_with("UNKNOWN_KERNEL_TYPE: ")),
        "{out}"
    );
    assert!(lines.iter().all(|l| l
        .split_once(": ")
        .is_some_and(|(c, _)| c.chars().all(|c| c.is_ascii_uppercase() || c == '_'))));

    let broken = dir.path().join("broken.toml");
    fs::write(&broken, "[[kernels]]\nname = \n").unwrap();
    let o = xrpipe(&["validate", broken.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    assert_eq!(
        xrpipe(&["validate", "/nonexistent.toml"]).status.code(),
        Some(1)
    );
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(xrpipe(&[]).status.code(), Some(2));
    assert_eq!(xrpipe(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(xrpipe(&["validate"]).status.code(), Some(2));
    assert_eq!(
        xrpipe(&["bench-local", "--kind", "teleport"]).status.code(),
        Some(2)
    );
    assert_eq!(
        xrpipe(&["bench-local", "--resolutions", "8k"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        xrpipe(&["run", "x.toml", "--role", "both"]).status.code(),
        Some(2)
    );
}

#[test]
fn run_all_prints_report_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let cfg = examples().join("local_pair.toml");
    let o = xrpipe(&[
        "run",
        cfg.to_str().unwrap(),
        "--frames",
        "25",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let out = stdout(&o);
    assert!(out.contains("running 2 kernels as all"), "{out}");
    assert!(
        out.contains("sink sink: received 25 gaps 0 out_of_order 0"),
        "{out}"
    );

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["sinks"][0]["received"], 25);
    assert_eq!(json["sinks"][0]["records"].as_array().unwrap().len(), 25);
    assert_eq!(json["aborted"], false);
}

#[test]
fn run_with_zero_duration() {
    let cfg = examples().join("fusion.toml");
    let o = xrpipe(&["run", cfg.to_str().unwrap(), "--duration", "0"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(stdout(&o).contains("sink display: received 0"));
}

#[test]
fn bench_local_csv_rows() {
    let o = xrpipe(&[
        "bench-local",
        "--resolutions",
        "720p,1080p,1440p,2160p",
        "--frames",
        "100",
        "--kind",
        "zerocopy",
        "--format",
        "csv",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "kind,resolution,mean_ms,p50_ms,p99_ms,n");
    assert_eq!(lines.len(), 5);
    for (line, res) in lines[1..].iter().zip(["720p", "1080p", "1440p", "2160p"]) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(&f[..2], ["zerocopy", res]);
        assert_eq!(f[5], "100");
        for v in &f[2..5] {
            assert_eq!(v.split_once('.').unwrap().1.len(), 3, "{line}");
        }
    }
}

#[test]
fn bench_local_defaults_to_markdown_and_writes_out() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.md");
    let o = xrpipe(&[
        "bench-local",
        "--resolutions",
        "720p",
        "--frames",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).is_empty());
    let table = fs::read_to_string(out).unwrap();
    assert!(table.starts_with("| kind (mean ms) | 720p |"));
    assert!(table.contains("| zerocopy |"));
}

#[test]
fn bench_remote_reports_codec_effect() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("b.json");
    let o = xrpipe(&[
        "bench-remote",
        "--resolutions",
        "720p",
        "--frames",
        "50",
        "--codec",
        "rle",
        "--fill",
        "constant:90",
        "--format",
        "csv",
        "--json",
        json.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(stdout(&o)
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("remote-rle,720p,"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(v["cells"][0]["wire_bytes_per_frame"], 36.0 + 21_686.0);
}

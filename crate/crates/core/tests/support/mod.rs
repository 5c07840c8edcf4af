//! Helpers shared by the pipeline integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fmt::Write;
use std::thread;

use rand::seq::IndexedRandom;
use rand::Rng;
use xrpipe_core::pipeline::{prepare, RuntimeOptions};
use xrpipe_core::{
    parse_config, ErrorCode, KernelRegistry, PipelineConfig, Role, RunLimit, RunReport,
};

/// Source, grayscale and sink with both edges remote; the transform is on
/// the server. Listen addresses use port 0.
pub fn split_config(frames: u64, width: u32, height: u32, fill: &str, codec: &str) -> String {
    format!(
        r#"
[[kernels]]
name = "cam"
type = "SyntheticFrameSource"
placement = "client"
params = {{ width = {width}, height = {height}, frames = {frames}, fill = "{fill}" }}

[[kernels]]
name = "gray"
type = "Grayscale"
placement = "server"

[[kernels]]
name = "sink"
type = "LatencySink"
placement = "client"
params = {{ digest = true, record_limit = {frames} }}

[[edges]]
from = "cam.out"
to = "gray.in"
kind = "remote"
codec = "{codec}"
transport = {{ listen = "127.0.0.1:0" }}

[[edges]]
from = "gray.out"
to = "sink.in"
kind = "remote"
codec = "{codec}"
transport = {{ listen = "127.0.0.1:0" }}
"#
    )
}

/// Runs `cfg` as a server and a client in two threads, pointing the client
/// at whatever ports the server bound.
pub fn run_split(cfg: &PipelineConfig, limit: RunLimit) -> (RunReport, RunReport) {
    let reg = KernelRegistry::with_builtins();
    let server =
        prepare(cfg, &reg, Role::Server, RuntimeOptions::default()).expect("prepare server");
    let bound = server.listen_addrs();
    let mut client_cfg = cfg.clone();
    for e in client_cfg.edges.iter_mut() {
        if let Some((_, addr)) = bound.iter().find(|(label, _)| *label == e.label()) {
            let t = e.transport.as_mut().expect("remote edge");
            t.connect = Some(addr.to_string());
        }
    }
    let server = thread::spawn(move || server.connect().expect("server links").run_for(limit));
    let client = prepare(&client_cfg, &reg, Role::Client, RuntimeOptions::default())
        .expect("prepare client")
        .connect()
        .expect("client links")
        .run_for(limit);
    (client, server.join().expect("server thread"))
}

pub fn run_all(cfg: &PipelineConfig, limit: RunLimit) -> RunReport {
    prepare(
        cfg,
        &KernelRegistry::with_builtins(),
        Role::All,
        RuntimeOptions::default(),
    )
    .expect("prepare")
    .connect()
    .expect("links")
    .run_for(limit)
}

pub fn kernel_names(r: &RunReport) -> BTreeSet<String> {
    r.kernels.iter().map(|k| k.name.clone()).collect()
}

/// Grayscale of a gradient frame. Every channel of a gradient pixel holds
/// the same value, so the mean of the three is that value.
pub fn gradient_gray(width: u32, height: u32, seq: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity((width * height) as usize);
    for y in 0..height as u64 {
        for x in 0..width as u64 {
            out.push((x + y + seq) as u8);
        }
    }
    out
}

/// A randomly generated pipeline and the frame count each sink must see.
pub struct Dag {
    pub toml: String,
    pub kernels: usize,
    pub expected: Vec<(String, u64)>,
}

struct Out {
    kernel: String,
    rgb: bool,
    count: u64,
    server: bool,
    used: bool,
}

/// Builds a DAG of at most six built-in kernels with BLOCK channels: one or
/// two budgeted sources, then passthrough, grayscale and combiner stages,
/// then sinks on every open output plus optional extra fan-out sinks.
/// With `remote`, interior kernels may land on the server and edges
/// crossing sides become loopback links.
pub fn random_dag(rng: &mut impl Rng, remote: bool) -> Dag {
    const MAX: usize = 6;
    let mut toml = String::new();
    let mut outs: Vec<Out> = Vec::new();
    let mut edges: Vec<(usize, String, bool, bool)> = Vec::new();
    let mut kernels = 0;
    let mut expected = Vec::new();

    let kernel = |toml: &mut String, name: &str, ty: &str, server: bool, params: &str| {
        let placement = if server { "server" } else { "client" };
        let _ = writeln!(
            toml,
            "[[kernels]]\nname = \"{name}\"\ntype = \"{ty}\"\nplacement = \"{placement}\""
        );
        if !params.is_empty() {
            let _ = writeln!(toml, "params = {{ {params} }}");
        }
        toml.push('\n');
    };

    for i in 0..rng.random_range(1..=2) {
        let name = format!("src{i}");
        let count = rng.random_range(10..=60);
        let fill = *["gradient", "constant:7", "random:3"].choose(rng).unwrap();
        kernel(
            &mut toml,
            &name,
            "SyntheticFrameSource",
            false,
            &format!("width = 16, height = 8, frames = {count}, fill = \"{fill}\""),
        );
        outs.push(Out {
            kernel: name,
            rgb: true,
            count,
            server: false,
            used: false,
        });
        kernels += 1;
    }

    let open = |outs: &[Out]| outs.iter().filter(|o| !o.used).count();
    for i in 0.. {
        if rng.random_bool(0.25) {
            break;
        }
        let server = remote && rng.random_bool(0.5);
        let name = format!("mid{i}");
        let choice = rng.random_range(0..3);
        let inputs: Vec<usize> = match choice {
            0 | 1 => {
                let candidates: Vec<usize> = (0..outs.len())
                    .filter(|&j| choice == 0 || outs[j].rgb)
                    .collect();
                match candidates.choose(rng) {
                    Some(&j) => vec![j],
                    None => continue,
                }
            }
            _ if outs.len() >= 2 => {
                let mut idx: Vec<usize> = (0..outs.len()).collect();
                let a = idx.remove(rng.random_range(0..idx.len()));
                vec![a, *idx.choose(rng).unwrap()]
            }
            _ => continue,
        };
        let newly_used = inputs.iter().filter(|&&j| !outs[j].used).count();
        if kernels + 1 + (open(&outs) - newly_used + 1) > MAX {
            break;
        }
        let (ty, rgb) = match choice {
            0 => ("Passthrough", outs[inputs[0]].rgb),
            1 => ("Grayscale", false),
            _ => ("Combiner", outs[inputs[0]].rgb),
        };
        kernel(&mut toml, &name, ty, server, "");
        kernels += 1;
        let ports: &[&str] = if inputs.len() == 2 {
            &["a", "b"]
        } else {
            &["in"]
        };
        for (&j, port) in inputs.iter().zip(ports) {
            outs[j].used = true;
            edges.push((j, format!("{name}.{port}"), server, *port == "b"));
        }
        let count = outs[inputs[0]].count;
        outs.push(Out {
            kernel: name,
            rgb,
            count,
            server,
            used: false,
        });
    }

    let mut sink_id = 0;
    let mut add_sink = |toml: &mut String,
                        edges: &mut Vec<_>,
                        expected: &mut Vec<_>,
                        j: usize,
                        outs: &mut [Out]| {
        let name = format!("sink{sink_id}");
        sink_id += 1;
        kernel(toml, &name, "LatencySink", false, "");
        outs[j].used = true;
        edges.push((j, format!("{name}.in"), false, false));
        expected.push((name, outs[j].count));
    };
    for j in 0..outs.len() {
        if !outs[j].used {
            add_sink(&mut toml, &mut edges, &mut expected, j, &mut outs);
            kernels += 1;
        }
    }
    while kernels < MAX && rng.random_bool(0.5) {
        let j = rng.random_range(0..outs.len());
        add_sink(&mut toml, &mut edges, &mut expected, j, &mut outs);
        kernels += 1;
    }

    for (j, to, to_server, sampled) in edges {
        let from = &outs[j];
        let _ = writeln!(
            toml,
            "[[edges]]\nfrom = \"{}.out\"\nto = \"{to}\"",
            from.kernel
        );
        if from.server != to_server {
            let codec = *["raw", "rle"].choose(rng).unwrap();
            let _ = writeln!(
                toml,
                "kind = \"remote\"\ncodec = \"{codec}\"\ntransport = {{ listen = \"127.0.0.1:0\" }}"
            );
        } else {
            toml.push_str("kind = \"local\"\n");
        }
        if sampled {
            toml.push_str("sync_mode = \"non_blocking\"\n");
        }
        toml.push('\n');
    }
    Dag {
        toml,
        kernels,
        expected,
    }
}

/// Runs a generated DAG under role ALL and returns `(sink, expected, got)`.
pub fn run_dag(dag: &Dag) -> Vec<(String, u64, u64)> {
    let cfg = parse_config(&dag.toml).unwrap_or_else(|e| panic!("{e}\n{}", dag.toml));
    let report = run_all(&cfg, RunLimit::default());
    for k in &report.kernels {
        assert!(
            k.failure.is_none(),
            "{} failed: {:?}\n{}",
            k.name,
            k.failure,
            dag.toml
        );
    }
    dag.expected
        .iter()
        .map(|(sink, want)| {
            let got = report.sink(sink).map_or(0, |s| s.received);
            (sink.clone(), *want, got)
        })
        .collect()
}

pub fn cfg_kernel(name: &str, ty: &str, placement: &str) -> String {
    format!("[[kernels]]\nname = \"{name}\"\ntype = \"{ty}\"\nplacement = \"{placement}\"\n\n")
}

pub fn cfg_local(from: &str, to: &str) -> String {
    format!("[[edges]]\nfrom = \"{from}\"\nto = \"{to}\"\nkind = \"local\"\n\n")
}

pub fn cfg_remote(from: &str, to: &str) -> String {
    format!(
        "[[edges]]\nfrom = \"{from}\"\nto = \"{to}\"\nkind = \"remote\"\ntransport = {{ listen = \"127.0.0.1:0\" }}\n\n"
    )
}

fn cfg_base() -> String {
    cfg_kernel("cam", "SyntheticFrameSource", "client")
        + &cfg_kernel("gray", "Grayscale", "server")
        + &cfg_kernel("sink", "LatencySink", "client")
}

/// Each case must raise its code and nothing else.
pub fn negative_matrix() -> Vec<(ErrorCode, String)> {
    vec![
        (
            ErrorCode::PlacementViolation,
            cfg_kernel("cam", "SyntheticFrameSource", "server")
                + &cfg_kernel("sink", "LatencySink", "client")
                + &cfg_remote("cam.out", "sink.in"),
        ),
        (
            ErrorCode::PlacementViolation,
            cfg_kernel("cam", "SyntheticFrameSource", "client")
                + &cfg_kernel("sink", "LatencySink", "server")
                + &cfg_remote("cam.out", "sink.in"),
        ),
        (
            ErrorCode::EdgeKindMismatch,
            cfg_base() + &cfg_local("cam.out", "gray.in") + &cfg_remote("gray.out", "sink.in"),
        ),
        (
            ErrorCode::EdgeKindMismatch,
            cfg_kernel("cam", "SyntheticFrameSource", "client")
                + &cfg_kernel("sink", "LatencySink", "client")
                + &cfg_remote("cam.out", "sink.in"),
        ),
        (
            ErrorCode::NotADag,
            cfg_kernel("cam", "SyntheticFrameSource", "client")
                + &cfg_kernel("mix", "Combiner", "client")
                + &cfg_kernel("p", "Passthrough", "client")
                + &cfg_kernel("q", "Passthrough", "client")
                + &cfg_kernel("sink", "LatencySink", "client")
                + &cfg_local("cam.out", "mix.a")
                + &cfg_local("mix.out", "p.in")
                + &cfg_local("p.out", "q.in")
                + &cfg_local("q.out", "mix.b")
                + &cfg_local("p.out", "sink.in"),
        ),
        (
            ErrorCode::UnknownKernelType,
            cfg_kernel("cam", "SyntheticFrameSource", "client")
                + &cfg_kernel("x", "Nonexistent", "client")
                + &cfg_kernel("sink", "LatencySink", "client")
                + &cfg_local("cam.out", "sink.in"),
        ),
        (
            ErrorCode::DanglingPort,
            cfg_base() + &cfg_remote("cam.out", "gray.in"),
        ),
        (
            ErrorCode::DanglingPort,
            cfg_base() + &cfg_remote("cam.out", "gray.nope") + &cfg_remote("gray.out", "sink.in"),
        ),
        (
            ErrorCode::DanglingPort,
            cfg_base() + &cfg_remote("cam.out", "ghost.in") + &cfg_remote("gray.out", "sink.in"),
        ),
        (
            ErrorCode::PortMultiplyDriven,
            cfg_kernel("a", "SyntheticFrameSource", "client")
                + &cfg_kernel("b", "SyntheticFrameSource", "client")
                + &cfg_kernel("sink", "LatencySink", "client")
                + &cfg_local("a.out", "sink.in")
                + &cfg_local("b.out", "sink.in"),
        ),
    ]
}

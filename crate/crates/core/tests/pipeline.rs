mod support;

use std::time::{Duration, Instant};

use support::{gradient_gray, kernel_names, run_all, run_split, split_config};
use xrpipe_core::pipeline::LinkDirection;
use xrpipe_core::{
    instantiate, parse_config, ErrorCode, Flow, Kernel, KernelFailure, KernelRegistry,
    PipelineError, PortSpec, Role, RunEnd, RunLimit, StepIo,
};

const DRAIN: Duration = Duration::from_secs(2);

fn chain(n: usize, frames: u64) -> String {
    let mut s = format!(
        "[[kernels]]\nname = \"cam\"\ntype = \"SyntheticFrameSource\"\nplacement = \"client\"\n\
         params = {{ resolution = \"720p\", frames = {frames} }}\n\n"
    );
    let mut prev = "cam".to_string();
    for i in 0..n {
        s += &format!(
            "[[kernels]]\nname = \"p{i}\"\ntype = \"Passthrough\"\nplacement = \"client\"\n\n"
        );
        s += &format!("[[edges]]\nfrom = \"{prev}.out\"\nto = \"p{i}.in\"\nkind = \"local\"\n\n");
        prev = format!("p{i}");
    }
    s += "[[kernels]]\nname = \"sink\"\ntype = \"LatencySink\"\nplacement = \"client\"\n\n";
    s += &format!("[[edges]]\nfrom = \"{prev}.out\"\nto = \"sink.in\"\nkind = \"local\"\n");
    s
}

#[test]
fn passthrough_chain_delivers_everything_without_copies() {
    let cfg = parse_config(&chain(5, 300)).unwrap();
    let report = instantiate(&cfg, &KernelRegistry::with_builtins(), Role::All)
        .unwrap()
        .run_for(RunLimit::default());
    assert!(!report.aborted);
    assert!(!report.has_errors());
    let sink = report.sink("sink").unwrap();
    assert_eq!(sink.received, 300);
    assert_eq!((sink.gaps, sink.out_of_order), (0, 0));
    // Every hop hands the same allocation on, so each frame keeps one id.
    let ids: std::collections::HashSet<u64> = sink.records.iter().map(|r| r.alloc_id).collect();
    assert_eq!(ids.len(), 300);
    for i in 0..5 {
        let c = report.kernel(&format!("p{i}")).unwrap().counters;
        assert_eq!((c.messages_in, c.messages_out), (300, 300));
    }
    assert_eq!(report.kernel("cam").unwrap().end, RunEnd::Completed);
}

#[test]
fn role_all_uses_loopback_links() {
    let (w, h) = (64, 48);
    let cfg = parse_config(&split_config(200, w, h, "gradient", "rle")).unwrap();
    let report = run_all(&cfg, RunLimit::default());
    assert!(!report.has_errors(), "{}", report.render_text());
    assert_eq!(kernel_names(&report).len(), 3);
    assert_eq!(report.links.len(), 4);
    for l in &report.links {
        assert_eq!(l.messages, 200, "{l:?}");
        if l.direction == LinkDirection::Send {
            assert!(l.bytes.unwrap() > 0);
        }
    }
    let sink = report.sink("sink").unwrap();
    assert_eq!(sink.received, 200);
    assert_eq!((sink.gaps, sink.out_of_order), (0, 0));
    for r in &sink.records {
        let oracle = xxhash_rust::xxh3::xxh3_64(&gradient_gray(w, h, r.seq));
        assert_eq!(r.digest, Some(oracle), "frame {}", r.seq);
    }
}

#[test]
fn client_and_server_split_matches_role_all() {
    let cfg = parse_config(&split_config(150, 32, 16, "random:5", "raw")).unwrap();
    let (client, server) = run_split(&cfg, RunLimit::default());
    assert!(!client.has_errors(), "{}", client.render_text());
    assert!(!server.has_errors(), "{}", server.render_text());

    // Role partition: CLIENT and SERVER are disjoint and cover ALL.
    let (c, s) = (kernel_names(&client), kernel_names(&server));
    assert!(c.is_disjoint(&s));
    assert_eq!(c, ["cam", "sink"].map(String::from).into());
    assert_eq!(s, ["gray"].map(String::from).into());
    let all = run_all(&cfg, RunLimit::default());
    assert_eq!(kernel_names(&all), c.union(&s).cloned().collect());
    assert_eq!(client.links.len(), 2);
    assert_eq!(server.links.len(), 2);

    let digests = |r: &xrpipe_core::RunReport| -> Vec<Option<u64>> {
        r.sink("sink")
            .unwrap()
            .records
            .iter()
            .map(|x| x.digest)
            .collect()
    };
    assert_eq!(client.sink("sink").unwrap().received, 150);
    assert_eq!(digests(&client), digests(&all));
}

#[test]
fn zero_duration_stops_at_once() {
    let cfg = parse_config(&chain(1, 1_000_000)).unwrap();
    let t = Instant::now();
    let report = instantiate(&cfg, &KernelRegistry::with_builtins(), Role::All)
        .unwrap()
        .run_for(RunLimit {
            duration: Some(Duration::ZERO),
            frames: None,
        });
    assert!(t.elapsed() < DRAIN);
    assert!(!report.aborted);
    for k in &report.kernels {
        assert_eq!(k.counters.fired, 0, "{}", k.name);
        assert_eq!(k.counters.messages_out, 0, "{}", k.name);
    }
    assert_eq!(report.sink("sink").unwrap().received, 0);
}

#[test]
fn frame_limit_caps_sources() {
    let cfg = parse_config(&chain(2, 1_000_000)).unwrap();
    let report = instantiate(&cfg, &KernelRegistry::with_builtins(), Role::All)
        .unwrap()
        .run_for(RunLimit {
            duration: None,
            frames: Some(40),
        });
    assert_eq!(report.sink("sink").unwrap().received, 40);
}

/// Fails on its third firing.
struct Faulty {
    fired: u32,
}

impl Kernel for Faulty {
    fn type_name(&self) -> &'static str {
        "Faulty"
    }

    fn ports(&self) -> Vec<PortSpec> {
        vec![PortSpec::input("in"), PortSpec::output("out")]
    }

    fn step(&mut self, io: &mut StepIo) -> Result<Flow, KernelFailure> {
        self.fired += 1;
        if self.fired == 3 {
            return Err("sensor fell off".into());
        }
        let m = io.take("in").ok_or("no input")?;
        io.emit("out", m)?;
        Ok(Flow::Continue)
    }
}

#[test]
fn failing_kernel_is_reported_and_the_run_ends() {
    let mut reg = KernelRegistry::with_builtins();
    reg.register(
        "Faulty",
        vec![PortSpec::input("in"), PortSpec::output("out")],
        |_| Ok(Box::new(Faulty { fired: 0 })),
    );
    let cfg = parse_config(&chain(1, 1_000_000).replace("Passthrough", "Faulty")).unwrap();
    let t = Instant::now();
    let report = instantiate(&cfg, &reg, Role::All)
        .unwrap()
        .run_for(RunLimit::default());
    assert!(t.elapsed() < DRAIN + Duration::from_secs(1));
    assert!(report.has_errors());
    let f = report.kernel("p0").unwrap();
    assert!(f.failure.as_deref().unwrap().contains("sensor fell off"));
    assert!(matches!(f.end, RunEnd::Failed(_)));
    assert_eq!(f.counters.messages_out, 2);
    let sink = report.sink("sink").unwrap();
    assert_eq!(sink.received, 2);
    assert!(report.kernel("cam").unwrap().counters.messages_out >= 2);
    assert!(report.render_text().contains("sensor fell off"));
}

/// Sleeps on every firing so upstream queues saturate.
struct Slow;

impl Kernel for Slow {
    fn type_name(&self) -> &'static str {
        "Slow"
    }

    fn ports(&self) -> Vec<PortSpec> {
        vec![PortSpec::input("in"), PortSpec::output("out")]
    }

    fn step(&mut self, io: &mut StepIo) -> Result<Flow, KernelFailure> {
        std::thread::sleep(Duration::from_millis(5));
        if let Some(m) = io.take("in") {
            io.emit("out", m)?;
        }
        Ok(Flow::Continue)
    }
}

fn saturated(policy: &str) -> xrpipe_core::RunReport {
    let mut reg = KernelRegistry::with_builtins();
    reg.register(
        "Slow",
        vec![PortSpec::input("in"), PortSpec::output("out")],
        |_| Ok(Box::new(Slow)),
    );
    let text = chain(1, 1_000_000).replace("Passthrough", "Slow").replacen(
        "to = \"p0.in\"\nkind = \"local\"",
        &format!("to = \"p0.in\"\nkind = \"local\"\ncapacity = 2\noverflow_policy = \"{policy}\""),
        1,
    );
    let cfg = parse_config(&text).unwrap();
    let limit = Duration::from_millis(300);
    let t = Instant::now();
    let report = instantiate(&cfg, &reg, Role::All)
        .unwrap()
        .run_for(RunLimit {
            duration: Some(limit),
            frames: None,
        });
    assert!(t.elapsed() < limit + DRAIN + Duration::from_millis(500));
    report
}

#[test]
fn drop_oldest_saturation_terminates_and_counts_drops() {
    let report = saturated("drop_oldest");
    let cam = report.kernel("cam").unwrap().counters;
    let sink = report.sink("sink").unwrap();
    assert!(cam.drops > 0);
    assert!(sink.received < cam.messages_out);
    assert_eq!(sink.received + cam.drops, cam.messages_out);
    // The slow stage restamps seq, so losses show up as its input count.
    assert_eq!(
        report.kernel("p0").unwrap().counters.messages_in,
        sink.received
    );
    assert_eq!(sink.out_of_order, 0);
}

#[test]
fn block_saturation_terminates_losslessly() {
    let report = saturated("block");
    let cam = report.kernel("cam").unwrap().counters;
    assert_eq!(cam.drops, 0);
    assert_eq!(report.sink("sink").unwrap().received, cam.messages_out);
}

#[test]
fn unknown_type_fails_instantiation() {
    let cfg = parse_config(&chain(1, 10).replace("Passthrough", "Nonexistent")).unwrap();
    match instantiate(&cfg, &KernelRegistry::with_builtins(), Role::All) {
        Err(PipelineError::Invalid(errs)) => {
            assert!(errs.iter().any(|e| e.code == ErrorCode::UnknownKernelType));
        }
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("instantiated an unknown type"),
    }
}

#[test]
fn client_gives_up_without_a_server() {
    let text = split_config(10, 8, 8, "gradient", "raw").replace("127.0.0.1:0", "127.0.0.1:9");
    let cfg = parse_config(&text).unwrap();
    let t = Instant::now();
    let r = instantiate(&cfg, &KernelRegistry::with_builtins(), Role::Client);
    assert!(matches!(r, Err(PipelineError::Link { .. })));
    assert!(t.elapsed() < Duration::from_secs(5));
}

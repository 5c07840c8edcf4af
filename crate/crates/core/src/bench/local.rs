use std::sync::{Arc, Mutex};
use std::thread;

use super::stats::summarize;
use super::table::BenchCell;
use super::BenchError;
use crate::channel::{
    channel_with, ChannelOptions, OverflowPolicy, SyncMode, TransferMode, DEFAULT_CAPACITY,
};
use crate::frame::{PixelFormat, Resolution};
use crate::kernel::{
    Flow, Kernel, KernelFailure, KernelInstance, PortSpec, RunControl, RunEnd, StepIo,
};
use crate::kernels::{Fill, LatencySink, SourceParams, SyntheticFrameSource};
use crate::sched;

/// Frames sent before measurement starts.
pub const WARMUP_FRAMES: u64 = 50;

pub fn kind_label(mode: TransferMode) -> &'static str {
    match mode {
        TransferMode::ZeroCopy => "zerocopy",
        TransferMode::Copy => "copy",
    }
}

pub fn parse_kind(s: &str) -> Result<TransferMode, BenchError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "zerocopy" | "zero-copy" => Ok(TransferMode::ZeroCopy),
        "copy" => Ok(TransferMode::Copy),
        other => Err(BenchError::InvalidArgument(format!(
            "unknown transfer kind `{other}` (expected zerocopy or copy)"
        ))),
    }
}

/// Source wrapper noting the allocation behind every emitted frame.
struct Tracked {
    inner: SyntheticFrameSource,
    sent: Arc<Mutex<Vec<u64>>>,
}

impl Kernel for Tracked {
    fn type_name(&self) -> &'static str {
        self.inner.type_name()
    }

    fn ports(&self) -> Vec<PortSpec> {
        self.inner.ports()
    }

    fn step(&mut self, io: &mut StepIo) -> Result<Flow, KernelFailure> {
        let flow = self.inner.step(io)?;
        let mut sent = self.sent.lock().expect("sent log");
        sent.extend(io.emitted("out").iter().map(|m| m.alloc_id().get()));
        Ok(flow)
    }
}

/// Measures source-to-sink transfer latency over one local channel for
/// each resolution: `frames` measured frames after [`WARMUP_FRAMES`].
pub fn bench_local(
    resolutions: &[Resolution],
    frames: u64,
    mode: TransferMode,
) -> Result<Vec<BenchCell>, BenchError> {
    if resolutions.is_empty() {
        return Err(BenchError::InvalidArgument("no resolutions given".into()));
    }
    if frames == 0 {
        return Err(BenchError::InvalidArgument(
            "frames must be at least 1".into(),
        ));
    }
    resolutions
        .iter()
        .map(|&r| bench_local_cell(r, frames, mode, WARMUP_FRAMES))
        .collect()
}

pub fn bench_local_cell(
    resolution: Resolution,
    frames: u64,
    mode: TransferMode,
    warmup: u64,
) -> Result<BenchCell, BenchError> {
    let total = frames + warmup;
    let sent = Arc::new(Mutex::new(Vec::with_capacity(total as usize)));
    let source = SyntheticFrameSource::new(
        SourceParams::new(resolution.frame(PixelFormat::Rgb8))
            .budget(total)
            .fill(Fill::Constant(0x5a)),
    );
    let mut kernels = vec![
        KernelInstance::new(
            "source",
            Box::new(Tracked {
                inner: source,
                sent: Arc::clone(&sent),
            }),
        ),
        KernelInstance::new(
            "sink",
            Box::new(LatencySink::with_limit(false, total as usize)),
        ),
    ];
    let (tx, rx) = channel_with(ChannelOptions {
        capacity: DEFAULT_CAPACITY,
        policy: OverflowPolicy::Block,
        transfer: mode,
    })?;
    let links = 1;
    kernels[0].bind_output("out", tx)?;
    kernels[1].bind_input("in", rx, SyncMode::Blocking)?;

    let ctl = RunControl::default();
    let handles: Vec<_> = kernels
        .into_iter()
        .map(|mut k| {
            let ctl = ctl.clone();
            thread::spawn(move || {
                if k.is_sink() {
                    sched::try_realtime(sched::CONSUMER_PRIORITY);
                }
                let end = k.run(&ctl);
                (k, end)
            })
        })
        .collect();
    let mut finished = Vec::new();
    for h in handles {
        let (k, end) = h
            .join()
            .map_err(|_| BenchError::Kernel("kernel thread panicked".into()))?;
        if let RunEnd::Failed(e) = &end {
            return Err(BenchError::Kernel(e.clone()));
        }
        finished.push(k);
    }

    let log = finished[1]
        .kernel()
        .latency_log()
        .expect("sink keeps a latency log");
    if log.count != total {
        return Err(BenchError::Incomplete {
            expected: total,
            got: log.count,
        });
    }
    let sent = sent.lock().expect("sent log");
    let measured = &log.records[warmup as usize..];
    let transfer: Vec<u64> = measured.iter().map(|r| r.transfer_ns).collect();
    let matches = measured
        .iter()
        .filter(|r| sent.get(r.seq as usize) == Some(&r.alloc_id))
        .count() as u64;
    Ok(BenchCell {
        kind: kind_label(mode).to_string(),
        resolution,
        stats: summarize(&transfer)?,
        kernels: finished.len(),
        links,
        alloc_id_matches: Some(matches),
        wire_bytes_per_frame: None,
        in_order: log.gaps == 0 && log.out_of_order == 0,
    })
}

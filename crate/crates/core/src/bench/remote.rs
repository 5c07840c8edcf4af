use std::thread;

use super::stats::summarize;
use super::table::BenchCell;
use super::BenchError;
use crate::clock::now_ns;
use crate::frame::{PixelFormat, Resolution};
use crate::kernels::{Fill, SourceParams, SyntheticFrameSource};
use crate::remote::{
    link_establish, loopback_for, CodecId, LinkConfig, LinkError, LinkListener, LinkRole,
};
use crate::sched;

use super::local::WARMUP_FRAMES;

#[derive(Debug, Clone)]
pub struct RemoteBenchOptions {
    pub codec: CodecId,
    /// Listen address; port 0 picks a free one.
    pub addr: String,
    pub fill: Fill,
    pub warmup: u64,
}

impl Default for RemoteBenchOptions {
    fn default() -> Self {
        RemoteBenchOptions {
            codec: CodecId::Raw,
            addr: "127.0.0.1:0".into(),
            fill: Fill::Constant(0x5a),
            warmup: WARMUP_FRAMES,
        }
    }
}

pub fn kind_label(codec: CodecId) -> String {
    format!("remote-{}", codec.as_str())
}

/// Source and sink joined by a TCP link within this process. Latency is
/// arrival at the sink minus the frame's creation stamp.
pub fn bench_remote(
    resolutions: &[Resolution],
    frames: u64,
    opts: &RemoteBenchOptions,
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
        .map(|&r| bench_remote_cell(r, frames, opts))
        .collect()
}

pub fn bench_remote_cell(
    resolution: Resolution,
    frames: u64,
    opts: &RemoteBenchOptions,
) -> Result<BenchCell, BenchError> {
    let total = frames + opts.warmup;
    let listener = LinkListener::bind(&opts.addr)?;
    let dial = loopback_for(listener.local_addr()?).to_string();
    let accept_cfg = LinkConfig::new(LinkRole::Listen, opts.addr.clone(), opts.codec);
    let dial_cfg = LinkConfig::new(LinkRole::Connect, dial, opts.codec);

    let accept = thread::spawn(move || listener.accept(&accept_cfg));
    let client = link_establish(&dial_cfg)?;
    let server = accept
        .join()
        .map_err(|_| BenchError::Kernel("accept thread panicked".into()))??;
    let (mut tx, _client_rx) = client.split();
    let (server_tx, mut rx) = server.split();

    let params = SourceParams::new(resolution.frame(PixelFormat::Rgb8))
        .budget(total)
        .fill(opts.fill);
    let sender = thread::spawn(move || -> Result<Vec<usize>, LinkError> {
        let mut source = SyntheticFrameSource::new(params);
        let mut sent = Vec::with_capacity(total as usize);
        for _ in 0..total {
            let m = source.next_frame();
            sent.push(tx.send(&m)?);
        }
        tx.close();
        Ok(sent)
    });

    let receiver = thread::spawn(move || -> Result<(Vec<u64>, bool), LinkError> {
        sched::try_realtime(sched::CONSUMER_PRIORITY);
        let mut e2e = Vec::with_capacity(total as usize);
        let mut in_order = true;
        loop {
            match rx.recv() {
                Ok(m) => {
                    let at = now_ns();
                    in_order &= m.seq == e2e.len() as u64;
                    e2e.push(at.saturating_sub(m.created_ns));
                }
                Err(LinkError::LinkClosed) => return Ok((e2e, in_order)),
                Err(e) => return Err(e),
            }
        }
    });
    let received = receiver
        .join()
        .map_err(|_| BenchError::Kernel("receiver thread panicked".into()));
    // Last handle on the accepted socket; a sender stuck on a dead receiver
    // sees the reset.
    drop(server_tx);
    let received = received?;
    let sent = sender
        .join()
        .map_err(|_| BenchError::Kernel("sender thread panicked".into()))??;
    let (e2e, in_order) = received?;
    if e2e.len() as u64 != total {
        return Err(BenchError::Incomplete {
            expected: total,
            got: e2e.len() as u64,
        });
    }

    let skip = opts.warmup as usize;
    let bytes: u64 = sent[skip..].iter().map(|b| *b as u64).sum();
    Ok(BenchCell {
        kind: kind_label(opts.codec),
        resolution,
        stats: summarize(&e2e[skip..])?,
        kernels: 2,
        links: 1,
        alloc_id_matches: None,
        wire_bytes_per_frame: Some(bytes as f64 / frames as f64),
        in_order,
    })
}

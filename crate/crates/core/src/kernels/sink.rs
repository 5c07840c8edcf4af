use serde::Serialize;
use xxhash_rust::xxh3::xxh3_64;

use crate::clock::now_ns;
use crate::kernel::{Flow, Kernel, KernelFailure, PortSpec, StepIo};
use crate::message::Message;
use crate::params::{ParamError, Params};

pub const DEFAULT_RECORD_LIMIT: usize = 1_000_000;

/// One frame's arrival at a sink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LatencyRecord {
    pub seq: u64,
    pub alloc_id: u64,
    pub created_ns: u64,
    pub sent_ns: u64,
    pub arrival_ns: u64,
    /// `arrival - created`.
    pub e2e_ns: u64,
    /// `arrival - sent`: time spent in the last hop only.
    pub transfer_ns: u64,
    /// xxh3-64 of the payload, when enabled.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub digest: Option<u64>,
}

impl LatencyRecord {
    pub fn observe(m: &Message, arrival_ns: u64, digest: bool) -> Self {
        LatencyRecord {
            seq: m.seq,
            alloc_id: m.alloc_id().get(),
            created_ns: m.created_ns,
            sent_ns: m.sent_ns,
            arrival_ns,
            e2e_ns: arrival_ns.saturating_sub(m.created_ns),
            transfer_ns: arrival_ns.saturating_sub(m.sent_ns),
            digest: digest.then(|| xxh3_64(&m.payload)),
        }
    }
}

/// Records kept by a sink plus running totals that survive the record cap.
#[derive(Debug, Clone, Serialize)]
pub struct LatencyLog {
    pub records: Vec<LatencyRecord>,
    pub count: u64,
    pub e2e_sum_ns: u128,
    /// Missing sequence numbers observed between consecutive arrivals.
    pub gaps: u64,
    /// Arrivals whose seq did not exceed the previous one.
    pub out_of_order: u64,
    #[serde(skip)]
    record_limit: usize,
    #[serde(skip)]
    last_seq: Option<u64>,
}

impl LatencyLog {
    pub fn new(record_limit: usize) -> Self {
        LatencyLog {
            records: Vec::new(),
            count: 0,
            e2e_sum_ns: 0,
            gaps: 0,
            out_of_order: 0,
            record_limit,
            last_seq: None,
        }
    }

    pub fn push(&mut self, r: LatencyRecord) {
        if let Some(last) = self.last_seq {
            if r.seq <= last {
                self.out_of_order += 1;
            } else {
                self.gaps += r.seq - last - 1;
            }
        }
        self.last_seq = Some(r.seq);
        self.count += 1;
        self.e2e_sum_ns += r.e2e_ns as u128;
        if self.records.len() < self.record_limit {
            self.records.push(r);
        }
    }

    pub fn mean_e2e_ns(&self) -> Option<f64> {
        (self.count > 0).then(|| self.e2e_sum_ns as f64 / self.count as f64)
    }
}

/// Stamps arrival time on every message from `in` and logs it.
#[derive(Debug)]
pub struct LatencySink {
    log: LatencyLog,
    digest: bool,
}

impl LatencySink {
    pub const TYPE: &'static str = "LatencySink";

    pub fn new(digest: bool) -> Self {
        Self::with_limit(digest, DEFAULT_RECORD_LIMIT)
    }

    pub fn with_limit(digest: bool, record_limit: usize) -> Self {
        LatencySink {
            log: LatencyLog::new(record_limit),
            digest,
        }
    }

    /// Keys: `digest` (bool), `record_limit`.
    pub fn from_params(p: &Params) -> Result<Self, ParamError> {
        p.expect_only(&["digest", "record_limit"])?;
        let digest = p.bool("digest")?.unwrap_or(false);
        let limit = p
            .u64("record_limit")?
            .map_or(DEFAULT_RECORD_LIMIT, |v| v as usize);
        Ok(Self::with_limit(digest, limit))
    }

    pub fn ports() -> Vec<PortSpec> {
        vec![PortSpec::input("in")]
    }

    pub fn record(&mut self, m: &Message) -> LatencyRecord {
        let r = LatencyRecord::observe(m, now_ns(), self.digest);
        self.log.push(r);
        r
    }

    pub fn log(&self) -> &LatencyLog {
        &self.log
    }

    pub fn into_log(self) -> LatencyLog {
        self.log
    }
}

impl Kernel for LatencySink {
    fn type_name(&self) -> &'static str {
        Self::TYPE
    }

    fn ports(&self) -> Vec<PortSpec> {
        Self::ports()
    }

    fn step(&mut self, io: &mut StepIo) -> Result<Flow, KernelFailure> {
        if let Some(m) = io.take("in") {
            self.record(&m);
        }
        Ok(Flow::Continue)
    }

    fn latency_log(&self) -> Option<&LatencyLog> {
        Some(&self.log)
    }
}

//! What a pipeline run produced.

use std::fmt::Write as _;

use serde::Serialize;

use super::config::Placement;
use super::runtime::Role;
use crate::bench::summarize;
use crate::kernel::{KernelCounters, RunEnd};
use crate::kernels::{LatencyLog, LatencyRecord};

#[derive(Debug, Clone, Serialize)]
pub struct KernelReport {
    pub name: String,
    pub kernel_type: String,
    pub placement: Placement,
    pub counters: KernelCounters,
    pub end: RunEnd,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SinkReport {
    pub kernel: String,
    pub received: u64,
    pub gaps: u64,
    pub out_of_order: u64,
    pub mean_e2e_ms: Option<f64>,
    pub p50_e2e_ms: Option<f64>,
    pub p99_e2e_ms: Option<f64>,
    pub records: Vec<LatencyRecord>,
}

impl SinkReport {
    pub fn from_log(kernel: &str, log: &LatencyLog) -> Self {
        let e2e: Vec<u64> = log.records.iter().map(|r| r.e2e_ns).collect();
        let stats = summarize(&e2e).ok();
        SinkReport {
            kernel: kernel.to_string(),
            received: log.count,
            gaps: log.gaps,
            out_of_order: log.out_of_order,
            mean_e2e_ms: log.mean_e2e_ns().map(|ns| ns / 1e6),
            p50_e2e_ms: stats.map(|s| s.p50_ms),
            p99_e2e_ms: stats.map(|s| s.p99_ms),
            records: log.records.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkDirection {
    Send,
    Recv,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinkReport {
    pub edge: String,
    pub direction: LinkDirection,
    pub messages: u64,
    /// Bytes written to the socket; send side only.
    pub bytes: Option<u64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub role: Role,
    pub elapsed_s: f64,
    /// The drain window ran out and remaining work was cut off.
    pub aborted: bool,
    pub kernels: Vec<KernelReport>,
    pub sinks: Vec<SinkReport>,
    pub links: Vec<LinkReport>,
}

impl RunReport {
    pub fn kernel(&self, name: &str) -> Option<&KernelReport> {
        self.kernels.iter().find(|k| k.name == name)
    }

    pub fn sink(&self, name: &str) -> Option<&SinkReport> {
        self.sinks.iter().find(|s| s.kernel == name)
    }

    /// Any kernel failure or link error.
    pub fn has_errors(&self) -> bool {
        self.kernels.iter().any(|k| k.failure.is_some())
            || self.links.iter().any(|l| l.error.is_some())
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "role {}  elapsed {:.3}s{}",
            self.role,
            self.elapsed_s,
            if self.aborted {
                "  (aborted after drain)"
            } else {
                ""
            }
        );
        for k in &self.kernels {
            let c = &k.counters;
            let _ = write!(
                out,
                "kernel {} [{} @ {}]: fired {} in {} out {} drops {} end {:?}",
                k.name,
                k.kernel_type,
                k.placement,
                c.fired,
                c.messages_in,
                c.messages_out,
                c.drops,
                k.end
            );
            if let Some(f) = &k.failure {
                let _ = write!(out, " failure: {f}");
            }
            out.push('\n');
        }
        for l in &self.links {
            let dir = match l.direction {
                LinkDirection::Send => "send",
                LinkDirection::Recv => "recv",
            };
            let _ = write!(out, "link {} ({dir}): {} messages", l.edge, l.messages);
            if let Some(b) = l.bytes {
                let _ = write!(out, ", {b} bytes");
            }
            if let Some(e) = &l.error {
                let _ = write!(out, ", error: {e}");
            }
            out.push('\n');
        }
        let ms = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        for s in &self.sinks {
            let _ = writeln!(
                out,
                "sink {}: received {} gaps {} out_of_order {} e2e_ms mean {} p50 {} p99 {}",
                s.kernel,
                s.received,
                s.gaps,
                s.out_of_order,
                ms(s.mean_e2e_ms),
                ms(s.p50_e2e_ms),
                ms(s.p99_e2e_ms)
            );
        }
        out
    }
}

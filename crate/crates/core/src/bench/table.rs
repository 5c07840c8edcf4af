use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use super::stats::LatencyStats;
use crate::frame::Resolution;

/// One measured (kind, resolution) pair.
#[derive(Debug, Clone, Serialize)]
pub struct BenchCell {
    /// `zerocopy`, `copy`, `remote-raw`, `remote-rle`.
    pub kind: String,
    pub resolution: Resolution,
    pub stats: LatencyStats,
    /// Kernels and data links in the measured pipeline.
    pub kernels: usize,
    pub links: usize,
    /// Measured frames whose received allocation matched the sent one.
    pub alloc_id_matches: Option<u64>,
    /// Mean bytes written to the socket per measured frame.
    pub wire_bytes_per_frame: Option<f64>,
    /// Frames arrived with consecutive sequence numbers.
    pub in_order: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BenchTable {
    pub cells: Vec<BenchCell>,
}

impl BenchTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, cell: BenchCell) {
        self.cells.push(cell);
    }

    pub fn get(&self, kind: &str, resolution: Resolution) -> Option<&BenchCell> {
        self.cells
            .iter()
            .find(|c| c.kind == kind && c.resolution == resolution)
    }

    /// Kinds in first-seen order.
    pub fn kinds(&self) -> Vec<&str> {
        let mut kinds: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !kinds.contains(&c.kind.as_str()) {
                kinds.push(&c.kind);
            }
        }
        kinds
    }

    /// Resolutions ascending.
    pub fn resolutions(&self) -> Vec<Resolution> {
        let mut rs: Vec<Resolution> = self.cells.iter().map(|c| c.resolution).collect();
        rs.sort();
        rs.dedup();
        rs
    }

    fn ordered(&self) -> Vec<&BenchCell> {
        let kinds = self.kinds();
        let mut cells: Vec<&BenchCell> = self.cells.iter().collect();
        cells.sort_by_key(|c| (kinds.iter().position(|k| *k == c.kind), c.resolution));
        cells
    }
}

impl Extend<BenchCell> for BenchTable {
    fn extend<T: IntoIterator<Item = BenchCell>>(&mut self, iter: T) {
        self.cells.extend(iter);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TableFormat {
    #[default]
    Csv,
    /// Mean latency grid, kinds by resolution.
    Markdown,
}

impl FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            _ => Err(format!(
                "unknown table format `{s}` (expected csv or markdown)"
            )),
        }
    }
}

pub const CSV_HEADER: &str = "kind,resolution,mean_ms,p50_ms,p99_ms,n";

pub fn render_table(table: &BenchTable, format: TableFormat) -> String {
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for c in table.ordered() {
                let s = &c.stats;
                let _ = writeln!(
                    out,
                    "{},{},{:.3},{:.3},{:.3},{}",
                    c.kind, c.resolution, s.mean_ms, s.p50_ms, s.p99_ms, s.n
                );
            }
        }
        TableFormat::Markdown => {
            let res = table.resolutions();
            out.push_str("| kind (mean ms) |");
            for r in &res {
                let _ = write!(out, " {r} |");
            }
            out.push_str("\n|---|");
            for _ in &res {
                out.push_str("---:|");
            }
            out.push('\n');
            for kind in table.kinds() {
                let _ = write!(out, "| {kind} |");
                for r in &res {
                    match table.get(kind, *r) {
                        Some(c) => {
                            let _ = write!(out, " {:.3} |", c.stats.mean_ms);
                        }
                        None => out.push_str(" - |"),
                    }
                }
                out.push('\n');
            }
        }
    }
    out
}

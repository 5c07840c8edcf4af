use serde::Serialize;

use super::BenchError;

/// Latency summary in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub n: usize,
}

/// Nearest-rank percentile of sorted samples: the value at rank
/// `ceil(p/100 * n)`, 1-based.
pub fn percentile(sorted: &[u64], p: f64) -> u64 {
    assert!(!sorted.is_empty(), "percentile of empty sample");
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Mean, p50 and p99 of nanosecond samples.
pub fn summarize(samples_ns: &[u64]) -> Result<LatencyStats, BenchError> {
    if samples_ns.is_empty() {
        return Err(BenchError::EmptyInput);
    }
    let mut sorted = samples_ns.to_vec();
    sorted.sort_unstable();
    let sum: u128 = sorted.iter().map(|&v| v as u128).sum();
    let ms = |ns: f64| ns / 1e6;
    Ok(LatencyStats {
        mean_ms: ms(sum as f64 / sorted.len() as f64),
        p50_ms: ms(percentile(&sorted, 50.0) as f64),
        p99_ms: ms(percentile(&sorted, 99.0) as f64),
        n: sorted.len(),
    })
}

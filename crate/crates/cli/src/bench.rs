//! Throughput benchmark of the post-segmentation pipeline.

use std::time::{Duration, Instant};

use barkline_core::pipeline::{analyze, PipelineParams};
use barkline_core::raster::ClassMask;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageLatency {
    pub p50_ms: f64,
    pub p95_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    /// Pipeline runs timed: masks times repetitions.
    pub masks_processed: usize,
    /// Time spent in the pipeline alone; loading masks is not counted.
    pub wall_seconds: f64,
    pub masks_per_second: f64,
    pub panels_per_minute: f64,
    pub edge: StageLatency,
    pub fit: StageLatency,
    pub keydata: StageLatency,
    /// Input files that could not be loaded.
    pub load_failures: Vec<String>,
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn latency(mut samples: Vec<f64>) -> StageLatency {
    samples.sort_by(f64::total_cmp);
    StageLatency {
        p50_ms: percentile(&samples, 50.0),
        p95_ms: percentile(&samples, 95.0),
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Runs the pipeline `repetitions` times over every mask on the calling thread.
pub fn bench_masks(
    masks: &[ClassMask],
    params: &PipelineParams,
    repetitions: usize,
) -> BenchReport {
    let runs = masks.len() * repetitions;
    let (mut edge, mut fit, mut kd) = (
        Vec::with_capacity(runs),
        Vec::with_capacity(runs),
        Vec::with_capacity(runs),
    );
    let start = Instant::now();
    for _ in 0..repetitions {
        for mask in masks {
            let t = analyze(mask, params).timings;
            edge.push(ms(t.edges));
            fit.push(ms(t.fit));
            kd.push(ms(t.keydata));
        }
    }
    // never zero, so the rates stay finite
    let wall_seconds = start.elapsed().as_secs_f64().max(1e-9);
    let masks_per_second = runs as f64 / wall_seconds;
    BenchReport {
        masks_processed: runs,
        wall_seconds,
        masks_per_second,
        panels_per_minute: masks_per_second * 60.0,
        edge: latency(edge),
        fit: latency(fit),
        keydata: latency(kd),
        load_failures: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&v, 50.0), 10.0);
        assert_eq!(percentile(&v, 95.0), 19.0);
        assert_eq!(percentile(&[4.0], 95.0), 4.0);
    }

    #[test]
    fn derived_fields_consistent() {
        let masks = vec![ClassMask::from_fn(64, 48, |_, y| (10..30).contains(&y))];
        let r = bench_masks(&masks, &PipelineParams::default(), 3);
        assert_eq!(r.masks_processed, 3);
        assert!(r.wall_seconds > 0.0);
        assert!((r.masks_per_second * r.wall_seconds - 3.0).abs() < 1e-9);
        assert!(
            (r.panels_per_minute - 60.0 * r.masks_per_second).abs() < 1e-9 * r.panels_per_minute
        );
        assert!(r.edge.p50_ms <= r.edge.p95_ms);
    }
}

//! Acceptance gate. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits nonzero if any criterion fails.

use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode, Output};
use std::time::{Duration, Instant};

use barkline_cli::synth::{run_synth, SynthConfig};
use barkline_core::edge::{detect_edges, Boundary, EdgeDetectParams};
use barkline_core::keydata::CalibrationProfile;
use barkline_core::pipeline::{analyze, PipelineParams};
use barkline_core::raster::{save_mask, ClassMask};
use barkline_core::robustfit::{fit_line, ols_fit, Line, TukeyParams};
use barkline_core::segeval::{miou, mpa, ConfusionMatrix};
use barkline_core::synthgen::{
    augment, generate, line_samples, transform_ground_truth, Augment, LineSampleSpec, PanelSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn barkline(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_barkline"))
        .args(args)
        .env_remove("BARKLINE_CONFIG")
        .output()
        .expect("barkline binary runs")
}

fn tempdir() -> tempfile::TempDir {
    tempfile::tempdir().expect("temporary directory")
}

// AC1
fn metric_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (w, h) = (rng.random_range(1..=64), rng.random_range(1..=64));
        let dt: f64 = rng.random();
        let dp: f64 = rng.random();
        let truth = ClassMask::from_fn(w, h, |_, _| rng.random_bool(dt));
        let pred = ClassMask::from_fn(w, h, |_, _| rng.random_bool(dp));
        let mut cm = ConfusionMatrix::default();
        cm.accumulate(&truth, &pred).map_err(|e| e.to_string())?;

        let (t, p) = (truth.labels(), pred.labels());
        let (mut ious, mut pas) = (Vec::new(), Vec::new());
        for c in 0..2u8 {
            let both = t
                .iter()
                .zip(p)
                .filter(|(a, b)| **a == c && **b == c)
                .count() as f64;
            let either = t
                .iter()
                .zip(p)
                .filter(|(a, b)| **a == c || **b == c)
                .count() as f64;
            let in_truth = t.iter().filter(|a| **a == c).count() as f64;
            if either > 0.0 {
                ious.push(both / either);
            }
            if in_truth > 0.0 {
                pas.push(both / in_truth);
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let di = (miou(&cm).map_err(|e| e.to_string())?.value - mean(&ious)).abs();
        let dp = (mpa(&cm).map_err(|e| e.to_string())?.value - mean(&pas)).abs();
        worst = worst.max(di).max(dp);
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("1000 random masks, max deviation {worst:e}"))
}

// AC2
fn fixture() -> Verdict {
    let truth = ClassMask::new(2, 2, vec![0, 1, 1, 0]).map_err(|e| e.to_string())?;
    let pred = ClassMask::new(2, 2, vec![0, 1, 0, 0]).map_err(|e| e.to_string())?;
    let mut cm = ConfusionMatrix::default();
    cm.accumulate(&truth, &pred).map_err(|e| e.to_string())?;
    let (i, p) = (miou(&cm).unwrap().value, mpa(&cm).unwrap().value);
    ensure(i == 7.0 / 12.0 && p == 0.75, || {
        format!("MIoU {i}, MPA {p}")
    })?;
    Ok(format!("MIoU {i} = 7/12, MPA {p} = 3/4"))
}

// AC3
fn width_accuracy() -> Verdict {
    const FRAME: (usize, usize) = (1600, 500);
    let params = PipelineParams {
        calibration: CalibrationProfile {
            reference_x_px: 800.0,
            ..CalibrationProfile::default()
        },
        ..PipelineParams::default()
    };
    let mm_per_px = params.calibration.mm_per_px;
    let mut report = String::new();
    for (g, nominal_mm) in [42.0, 52.0, 62.0, 72.0].into_iter().enumerate() {
        let mut means = Vec::new();
        for rep in 0..2u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * g as u64 + rep);
            let mut total = 0.0;
            for _ in 0..40 {
                let spec = PanelSpec {
                    width_px: nominal_mm / mm_per_px,
                    angle_deg: rng.random_range(-3.0..3.0),
                    center: [
                        rng.random_range(780.0..820.0),
                        rng.random_range(240.0..260.0),
                    ],
                    length_px: rng.random_range(500.0..600.0) / mm_per_px,
                    bark_amplitude_px: rng.random_range(0.0..5.0),
                    bark_waviness: rng.random_range(1.0..5.0),
                    outlier_fraction: rng.random_range(0.0..0.03),
                    outlier_magnitude_px: rng.random_range(5.0..20.0),
                    seed: rng.random(),
                };
                let (mask, _) = generate(&spec, FRAME).map_err(|e| e.to_string())?;
                let kd = analyze(&mask, &params).keydata;
                ensure(!kd.rejected, || {
                    format!("{nominal_mm} mm panel rejected: {:?}", kd.reason)
                })?;
                total += kd.width_mm;
            }
            means.push(total / 40.0);
        }
        let (a, b) = (means[0], means[1]);
        ensure(
            (a - nominal_mm).abs() <= 1.5 && (b - nominal_mm).abs() <= 1.5,
            || format!("group {nominal_mm} mm: repetition means {a:.3} / {b:.3} mm"),
        )?;
        ensure((a - b).abs() <= 0.5, || {
            format!(
                "group {nominal_mm} mm: repetitions differ by {:.3} mm",
                (a - b).abs()
            )
        })?;
        let _ = write!(
            report,
            "{:.2}cm: {:.3}/{:.3}; ",
            nominal_mm / 10.0,
            a / 10.0,
            b / 10.0
        );
    }
    Ok(format!(
        "mean widths in cm {}",
        report.trim_end_matches("; ")
    ))
}

// AC4
fn robustness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut slope_err = Vec::new();
    for trial in 0..200u64 {
        let line = Line::new(rng.random_range(-0.1..0.1), rng.random_range(50.0..1500.0));
        let spec = LineSampleSpec {
            line,
            count: rng.random_range(100..1500),
            x_span: rng.random_range(500.0..3000.0),
            outlier_fraction: rng.random_range(0.10..=0.20),
            displacement_px: (30.0, 60.0),
            one_sided: true,
            seed: trial,
        };
        let (pts, _) = line_samples(&spec);
        let t = fit_line(&pts, &TukeyParams::default()).map_err(|e| e.to_string())?;
        let o = ols_fit(&pts).map_err(|e| e.to_string())?;
        let (ts, ti) = (
            (t.slope - line.slope).abs(),
            (t.intercept - line.intercept).abs(),
        );
        let (os, oi) = (
            (o.slope - line.slope).abs(),
            (o.intercept - line.intercept).abs(),
        );
        ensure(ts <= os && ti <= oi, || {
            format!("trial {trial}: tukey errors ({ts:e}, {ti:e}) vs ols ({os:e}, {oi:e})")
        })?;
        slope_err.push(ts);
    }
    slope_err.sort_by(f64::total_cmp);
    let median = slope_err[slope_err.len() / 2];
    ensure(median < 1e-3, || format!("median slope error {median:e}"))?;
    Ok(format!(
        "200 trials, tukey never worse than OLS, median slope error {median:e}"
    ))
}

// AC5
fn edge_localization() -> Verdict {
    const FRAME: (usize, usize) = (1200, 600);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut points, mut worst) = (0usize, 0.0f64);
    for i in 0..60 {
        let angle = if i < 21 {
            -5.0 + 0.5 * i as f64
        } else {
            rng.random_range(-5.0..=5.0)
        };
        let spec = PanelSpec {
            width_px: rng.random_range(40.0..300.0),
            angle_deg: angle,
            center: [
                rng.random_range(580.0..620.0),
                rng.random_range(280.0..320.0),
            ],
            length_px: rng.random_range(600.0..1100.0),
            ..PanelSpec::band(100.0, FRAME)
        };
        let (mask, gt) = generate(&spec, FRAME).map_err(|e| e.to_string())?;
        let edges = detect_edges(&mask, &EdgeDetectParams::default()).map_err(|e| e.to_string())?;
        for (b, line) in [
            (Boundary::Upper, gt.upper_line),
            (Boundary::Lower, gt.lower_line),
        ] {
            for p in edges.fit_points(b) {
                let off = (p.y - line.eval(p.x)).abs();
                worst = worst.max(off);
                points += 1;
                ensure(off <= 1.0, || {
                    format!(
                        "angle {angle:.2}: {b} point at x={} is {off:.3} px off",
                        p.x
                    )
                })?;
            }
        }
    }
    Ok(format!(
        "{points} points on 60 bands, worst offset {worst:.3} px"
    ))
}

// AC6
fn invariances() -> Verdict {
    const FRAME: (usize, usize) = (1000, 500);
    let params = PipelineParams {
        calibration: CalibrationProfile {
            reference_x_px: 500.0,
            ..CalibrationProfile::default()
        },
        ..PipelineParams::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut flip_dev, mut mirror_dev, mut rot_dev) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let spec = PanelSpec {
            width_px: rng.random_range(60.0..200.0),
            angle_deg: rng.random_range(-4.0..4.0),
            center: [
                rng.random_range(480.0..520.0),
                rng.random_range(230.0..270.0),
            ],
            length_px: rng.random_range(500.0..750.0),
            bark_amplitude_px: rng.random_range(0.0..4.0),
            bark_waviness: rng.random_range(1.0..5.0),
            outlier_fraction: rng.random_range(0.0..0.05),
            outlier_magnitude_px: rng.random_range(5.0..25.0),
            seed: rng.random(),
        };
        let (mask, gt) = generate(&spec, FRAME).map_err(|e| e.to_string())?;
        let base = analyze(&mask, &params).keydata;
        for (op, dev) in [
            (Augment::FlipHorizontal, &mut flip_dev),
            (Augment::MirrorVertical, &mut mirror_dev),
        ] {
            let kd = analyze(&augment(&mask, op).map_err(|e| e.to_string())?, &params).keydata;
            let d = (kd.width_mm - base.width_mm).abs();
            *dev = dev.max(d);
            ensure(d <= 1e-6, || {
                format!("{op:?}: width {} vs {}", kd.width_mm, base.width_mm)
            })?;
            ensure((kd.angle_deg + base.angle_deg).abs() <= 1e-6, || {
                format!("{op:?}: angle not negated")
            })?;
            let t = transform_ground_truth(&gt, op, FRAME);
            ensure(
                t.true_width_px == gt.true_width_px && t.true_angle_deg == -gt.true_angle_deg,
                || format!("{op:?}: ground truth not transformed"),
            )?;
        }
        let theta = rng.random_range(-3.0..3.0);
        let rotated = augment(&mask, Augment::Rotate(theta)).map_err(|e| e.to_string())?;
        let kd = analyze(&rotated, &params).keydata;
        let d = (kd.angle_deg - base.angle_deg - theta).abs();
        rot_dev = rot_dev.max(d);
        ensure(d <= 0.2, || {
            format!(
                "rotation by {theta:.3} deg moved the angle by {:.3}",
                kd.angle_deg - base.angle_deg
            )
        })?;
        let t = transform_ground_truth(&gt, Augment::Rotate(theta), FRAME);
        ensure(
            (t.true_angle_deg - gt.true_angle_deg - theta).abs() < 1e-9,
            || "rotated truth angle".into(),
        )?;
    }
    Ok(format!(
        "50 specs; max width change flip {flip_dev:.1e} mm, mirror {mirror_dev:.1e} mm; max rotation angle error {rot_dev:.3} deg"
    ))
}

// AC7
fn throughput() -> Verdict {
    let dir = tempdir();
    run_synth(&SynthConfig::default(), 100, 7, None, dir.path()).map_err(|e| e.to_string())?;
    let pattern = format!("{}/*.png", dir.path().display());
    let o = barkline(&["bench", &pattern]);
    ensure(o.status.code() == Some(0), || {
        String::from_utf8_lossy(&o.stderr).into_owned()
    })?;
    let v: Value = serde_json::from_slice(&o.stdout).map_err(|e| e.to_string())?;
    let n = v["masks_processed"].as_u64().unwrap_or(0);
    let mps = v["masks_per_second"].as_f64().unwrap_or(0.0);
    ensure(n == 100, || format!("{n} masks processed"))?;
    ensure(mps >= 0.5, || format!("{mps:.3} masks/s"))?;
    Ok(format!(
        "100 masks of 3072x2048: {mps:.2} masks/s ({:.0} panels/min), edge p50 {:.1} ms",
        v["panels_per_minute"].as_f64().unwrap_or(0.0),
        v["edge"]["p50_ms"].as_f64().unwrap_or(0.0)
    ))
}

// AC8
fn degenerate_inputs() -> Verdict {
    let dir = tempdir();
    let cases = [
        ("all_panel.png", ClassMask::filled(200, 100, 1), "no_edges"),
        (
            "all_background.png",
            ClassMask::filled(200, 100, 0),
            "no_panel",
        ),
        (
            "single_column.png",
            ClassMask::from_fn(200, 100, |x, y| x == 100 && (20..80).contains(&y)),
            "edges_filtered",
        ),
        (
            "crossed.png",
            ClassMask::from_fn(200, 100, |x, y| if x < 100 { y < 30 } else { y >= 70 }),
            "boundaries_crossed",
        ),
    ];
    for (name, mask, reason) in cases {
        let path = dir.path().join(name);
        save_mask(&mask, &path).map_err(|e| e.to_string())?;
        let o = barkline(&["keydata", path.to_str().unwrap()]);
        let stderr = String::from_utf8_lossy(&o.stderr);
        ensure(
            o.status.code() == Some(0) && !stderr.contains("panicked"),
            || format!("{name}: exit {:?}, stderr {stderr}", o.status.code()),
        )?;
        let v: Value = serde_json::from_slice(&o.stdout).map_err(|e| e.to_string())?;
        ensure(v["rejected"] == true && v["reason"] == reason, || {
            format!("{name}: rejected={} reason={}", v["rejected"], v["reason"])
        })?;
    }
    Ok(
        "all-panel, all-background, single-column, crossed: rejected with expected reasons, exit 0"
            .into(),
    )
}

// AC9
fn determinism() -> Verdict {
    let dir = tempdir();
    let cfg = SynthConfig {
        frame: [900, 400],
        width_px: [40.0, 160.0],
        length_px: [500.0, 750.0],
        center_jitter_px: [20.0, 20.0],
        ..SynthConfig::default()
    };
    run_synth(&cfg, 32, 9, None, dir.path()).map_err(|e| e.to_string())?;
    std::fs::write(dir.path().join("panel_corrupt.png"), b"\x89PNG garbage")
        .map_err(|e| e.to_string())?;
    save_mask(
        &ClassMask::filled(50, 50, 1),
        dir.path().join("panel_full.png"),
    )
    .map_err(|e| e.to_string())?;
    let pattern = format!("{}/*.png", dir.path().display());
    let cfg_path = dir.path().join("ref.toml");
    std::fs::write(&cfg_path, "[calibration]\nreference_x_px = 450.0\n")
        .map_err(|e| e.to_string())?;
    let run = |jobs: &str| {
        let o = barkline(&[
            "batch",
            &pattern,
            "--jobs",
            jobs,
            "--config",
            cfg_path.to_str().unwrap(),
        ]);
        (o.status.code(), o.stdout)
    };
    let (c1, a) = run("1");
    let (c8, b) = run("8");
    let (c1b, c) = run("1");
    ensure(c1 == Some(0) && c8 == Some(0) && c1b == Some(0), || {
        format!("exit codes {c1:?} {c8:?} {c1b:?}")
    })?;
    ensure(a == c, || "two runs with --jobs 1 differ".into())?;
    ensure(a == b, || "--jobs 1 and --jobs 8 differ".into())?;
    let lines = a.iter().filter(|&&b| b == b'\n').count();
    ensure(lines == 35, || {
        format!("{lines} output lines, expected 34 records + summary")
    })?;
    Ok(format!(
        "{} bytes, {lines} lines identical across runs and --jobs 1/8",
        a.len()
    ))
}

fn main() -> ExitCode {
    type Criterion = (
        &'static str,
        &'static str,
        Option<Duration>,
        fn() -> Verdict,
    );
    let criteria: [Criterion; 9] = [
        (
            "AC1",
            "metric oracle equivalence",
            Some(Duration::from_secs(10)),
            metric_oracle,
        ),
        ("AC2", "hand-computed fixture", None, fixture),
        (
            "AC3",
            "width accuracy, four nominal groups",
            Some(Duration::from_secs(120)),
            width_accuracy,
        ),
        (
            "AC4",
            "robustness over least squares",
            Some(Duration::from_secs(60)),
            robustness,
        ),
        ("AC5", "edge localization", None, edge_localization),
        ("AC6", "geometry invariances", None, invariances),
        ("AC7", "throughput floor", None, throughput),
        (
            "AC8",
            "degenerate-input resilience",
            None,
            degenerate_inputs,
        ),
        ("AC9", "batch determinism", None, determinism),
    ];
    let only: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| a.starts_with("AC"))
        .collect();
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let verdict = match (verdict, limit) {
            (Ok(_), Some(l)) if elapsed > l => Err(format!(
                "took {:.1} s, limit {} s",
                elapsed.as_secs_f64(),
                l.as_secs()
            )),
            (v, _) => v,
        };
        let (tag, detail) = match verdict {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "[{tag}] {id} {name}: {detail} ({:.2} s)",
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} failed", failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

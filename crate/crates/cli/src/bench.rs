use std::time::Instant;

use clap::Args;
use moldkit::metric::{chamfer_distance, distance, distance_parallel};
use moldkit::{CameraIntrinsics, DepthImage, Grid, WeightField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::common::to_json;
use crate::error::CliError;

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Image sizes as WxH, windows centred in the calibrated 848x480 camera.
    #[arg(long, value_delimiter = ',', default_value = "480x395,848x480")]
    pub sizes: Vec<String>,
    /// Untimed runs before measuring.
    #[arg(long, default_value_t = 5)]
    pub warmup: usize,
    /// Timed runs of the image distance; the median is reported.
    #[arg(long, default_value_t = 21)]
    pub repeats: usize,
    /// Timed runs of the Chamfer distance; 0 skips it.
    #[arg(long, default_value_t = 1)]
    pub chamfer_repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Serialize)]
struct SizeReport {
    width: usize,
    height: usize,
    pixels: usize,
    distance_ms: f64,
    distance_parallel_ms: f64,
    chamfer_ms: Option<f64>,
    /// Chamfer time over serial image-distance time.
    speedup: Option<f64>,
}

#[derive(Serialize)]
struct BenchReport {
    threads: usize,
    warmup: usize,
    repeats: usize,
    sizes: Vec<SizeReport>,
}

fn parse_size(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Config(format!("size {s:?} is not of the form WxH"));
    let (w, h) = s.trim().split_once('x').ok_or_else(bad)?;
    let (w, h) = (w.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?);
    let full = CameraIntrinsics::d435_calibrated();
    if w == 0 || h == 0 || w > full.width() || h > full.height() {
        return Err(CliError::Config(format!(
            "size {w}x{h} does not fit the {}x{} sensor",
            full.width(),
            full.height()
        )));
    }
    Ok((w, h))
}

fn camera(w: usize, h: usize) -> Result<CameraIntrinsics, CliError> {
    let full = CameraIntrinsics::d435_calibrated();
    Ok(full.crop((full.width() - w) / 2, (full.height() - h) / 2, w, h)?)
}

/// Luminances of a surface between 0.40 m and 0.50 m from the camera.
fn random_image(intr: &CameraIntrinsics, rng: &mut ChaCha8Rng) -> Result<DepthImage, CliError> {
    let lo = intr.depth_to_luminance(0.50)?.value;
    let hi = intr.depth_to_luminance(0.40)?.value;
    let px = Grid::from_fn(intr.width(), intr.height(), |_, _| rng.gen_range(lo..=hi));
    Ok(DepthImage::new(intr.clone(), px)?)
}

/// Median wall time of `f` in milliseconds, after `warmup` untimed calls.
fn time_ms(warmup: usize, repeats: usize, mut f: impl FnMut() -> Result<(), CliError>) -> Result<f64, CliError> {
    for _ in 0..warmup {
        f()?;
    }
    let mut runs = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        f()?;
        runs.push(t.elapsed().as_secs_f64() * 1000.0);
    }
    runs.sort_by(f64::total_cmp);
    Ok(runs[runs.len() / 2])
}

pub fn run(args: &BenchArgs) -> Result<(), CliError> {
    if args.repeats == 0 {
        return Err(CliError::Config("--repeats must be at least 1".into()));
    }
    let sizes = args.sizes.iter().map(|s| parse_size(s)).collect::<Result<Vec<_>, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut reports = Vec::new();
    for (w, h) in sizes {
        let intr = camera(w, h)?;
        let (a, b) = (random_image(&intr, &mut rng)?, random_image(&intr, &mut rng)?);
        let wf = WeightField::build(&intr);
        let (na, nb) = (wf.normalize(&a)?, wf.normalize(&b)?);
        let serial = time_ms(args.warmup, args.repeats, || {
            std::hint::black_box(distance(&na, &nb)?);
            Ok(())
        })?;
        let parallel = time_ms(args.warmup, args.repeats, || {
            std::hint::black_box(distance_parallel(&na, &nb)?);
            Ok(())
        })?;
        let chamfer = if args.chamfer_repeats == 0 {
            None
        } else {
            let (pa, pb) = (a.to_points(), b.to_points());
            // One Chamfer run already takes seconds; no warmup.
            Some(time_ms(0, args.chamfer_repeats, || {
                std::hint::black_box(chamfer_distance(&pa, &pb)?);
                Ok(())
            })?)
        };
        eprintln!(
            "{w}x{h}: distance {serial:.3} ms (parallel {parallel:.3} ms){}",
            chamfer.map_or(String::new(), |c| format!(", chamfer {c:.1} ms, {:.0}x", c / serial))
        );
        reports.push(SizeReport {
            width: w,
            height: h,
            pixels: w * h,
            distance_ms: serial,
            distance_parallel_ms: parallel,
            chamfer_ms: chamfer,
            speedup: chamfer.map(|c| c / serial),
        });
    }
    print!(
        "{}",
        to_json(&BenchReport {
            threads: rayon::current_num_threads(),
            warmup: args.warmup,
            repeats: args.repeats,
            sizes: reports,
        })
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_parse_and_fit_the_sensor() {
        assert_eq!(parse_size("480x395").unwrap(), (480, 395));
        for bad in ["480", "x395", "0x10", "849x480", "480x481", "axb"] {
            assert!(matches!(parse_size(bad), Err(CliError::Config(_))), "{bad}");
        }
        let c = camera(480, 395).unwrap();
        assert_eq!((c.width(), c.height()), (480, 395));
    }

    #[test]
    fn median_of_runs() {
        let mut calls = 0;
        let t = time_ms(2, 3, || {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(calls, 5);
        assert!(t >= 0.0);
    }
}

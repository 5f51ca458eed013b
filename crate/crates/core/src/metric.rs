//! Distance between two visible point clouds, evaluated on their
//! normalized depth images.
//!
//! Two points seen at the same pixel lie on the same optical ray, so their
//! Euclidean distance is `R_uv * depth_step * |ΔL|`. Averaging that over all
//! pixels gives the matched-pair mean distance, which equals
//! `d_unit * r_bar * (z_max - z_min)` with `d_unit` the mean absolute
//! difference of the normalized images.
//!
//! Sums run row by row and then over row totals in index order. The
//! parallel variant keeps that order, so both return identical bits.

use nalgebra::Isometry3;
use rayon::prelude::*;
use serde::Serialize;

use crate::depthcam::{CameraIntrinsics, Clip, DepthImage, NormalizedImage, Point3, WeightField};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::roi::RoiRect;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DistanceReport {
    pub d_unit: f64,
    pub d_meters: f64,
    pub pixel_count: usize,
}

/// Conversion from unit distances to meters for one camera.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceScale {
    pub r_bar: f64,
    pub depth_span: f64,
}

impl DistanceScale {
    pub fn new(intr: &CameraIntrinsics) -> Self {
        DistanceScale {
            r_bar: intr.r_bar(),
            depth_span: intr.z_max() - intr.z_min(),
        }
    }

    pub fn to_meters(&self, d_unit: f64) -> f64 {
        d_unit * self.r_bar * self.depth_span
    }

    pub fn to_unit(&self, meters: f64) -> f64 {
        meters / (self.r_bar * self.depth_span)
    }
}

/// Two points seen at the same pixel of two images.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchedPair {
    pub u: usize,
    pub v: usize,
    pub p: Point3,
    pub q: Point3,
}

fn ensure_same_camera(a: &CameraIntrinsics, b: &CameraIntrinsics) -> Result<()> {
    if a != b {
        return Err(Error::Shape("images use different intrinsics".into()));
    }
    Ok(())
}

#[inline]
fn row_abs_sum(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn report(total: f64, intr: &CameraIntrinsics) -> DistanceReport {
    let n = intr.pixel_count();
    let d_unit = total / n as f64;
    DistanceReport {
        d_unit,
        d_meters: DistanceScale::new(intr).to_meters(d_unit),
        pixel_count: n,
    }
}

pub fn distance(a: &NormalizedImage, b: &NormalizedImage) -> Result<DistanceReport> {
    ensure_same_camera(a.intrinsics(), b.intrinsics())?;
    let total: f64 = a
        .pixels()
        .rows()
        .zip(b.pixels().rows())
        .map(|(ra, rb)| row_abs_sum(ra, rb))
        .sum();
    Ok(report(total, a.intrinsics()))
}

/// Same result as [`distance`], bit for bit, with rows summed on the rayon pool.
pub fn distance_parallel(a: &NormalizedImage, b: &NormalizedImage) -> Result<DistanceReport> {
    ensure_same_camera(a.intrinsics(), b.intrinsics())?;
    let w = a.intrinsics().width();
    let rows: Vec<f64> = a
        .pixels()
        .as_slice()
        .par_chunks_exact(w)
        .zip(b.pixels().as_slice().par_chunks_exact(w))
        .map(|(ra, rb)| row_abs_sum(ra, rb))
        .collect();
    Ok(report(rows.iter().sum(), a.intrinsics()))
}

/// `distance(inject(base, rect <- patch), target)` without materializing
/// the injected image. Patch values are clamped to `[0, 1]` like
/// [`crate::roi::inject_patch`] does, so the two agree bit for bit.
pub fn distance_with_patch(
    base: &NormalizedImage,
    target: &NormalizedImage,
    rect: &RoiRect,
    patch: &Grid<f64>,
) -> Result<DistanceReport> {
    ensure_same_camera(base.intrinsics(), target.intrinsics())?;
    rect.ensure_within(base.intrinsics())?;
    if patch.dims() != (rect.width(), rect.height()) {
        return Err(Error::Shape(format!(
            "patch {}x{} for a {}x{} rect",
            patch.width(),
            patch.height(),
            rect.width(),
            rect.height()
        )));
    }
    let (u0, u1) = (rect.u_min - 1, rect.u_max);
    let total: f64 = base
        .pixels()
        .rows()
        .zip(target.pixels().rows())
        .enumerate()
        .map(|(i, (rb, rt))| {
            let v = i + 1;
            if v < rect.v_min || v > rect.v_max {
                return row_abs_sum(rb, rt);
            }
            let prow = patch.row(v - rect.v_min + 1);
            // One left-to-right pass, as in `row_abs_sum`.
            rb[..u0]
                .iter()
                .zip(&rt[..u0])
                .map(|(x, y)| (x - y).abs())
                .chain(prow.iter().zip(&rt[u0..u1]).map(|(x, y)| (x.clamp(0.0, 1.0) - y).abs()))
                .chain(rb[u1..].iter().zip(&rt[u1..]).map(|(x, y)| (x - y).abs()))
                .sum()
        })
        .sum();
    Ok(report(total, base.intrinsics()))
}

/// Mean absolute difference of two equally sized patches, in unit terms.
pub fn patch_distance(a: &Grid<f64>, b: &Grid<f64>) -> Result<f64> {
    a.ensure_same_dims(b)?;
    if a.is_empty() {
        return Err(Error::Domain("empty patch".into()));
    }
    let total: f64 = a.rows().zip(b.rows()).map(|(ra, rb)| row_abs_sum(ra, rb)).sum();
    Ok(total / a.len() as f64)
}

/// `‖p - q‖` for the two points seen at pixel `(u, v)` with luminances
/// `lp` and `lq`, in closed form.
pub fn per_pixel_3d_distance(intr: &CameraIntrinsics, u: usize, v: usize, lp: u16, lq: u16) -> Result<f64> {
    if !intr.contains_pixel(u, v) {
        return Err(Error::Domain(format!("pixel ({u}, {v}) outside the image")));
    }
    let max = intr.max_luminance();
    if lp > max || lq > max {
        return Err(Error::Domain(format!("luminance above {max}")));
    }
    let dl = f64::from(lp.abs_diff(lq));
    Ok(intr.radial_factor(u as f64, v as f64) * intr.depth_step() * dl)
}

pub fn matched_pairs(p_img: &DepthImage, q_img: &DepthImage) -> Result<Vec<MatchedPair>> {
    let intr = p_img.intrinsics();
    ensure_same_camera(intr, q_img.intrinsics())?;
    let mut out = Vec::with_capacity(intr.pixel_count());
    for v in 1..=intr.height() {
        for u in 1..=intr.width() {
            out.push(MatchedPair {
                u,
                v,
                p: intr.pixel_to_point(u, v, p_img.get(u, v))?,
                q: intr.pixel_to_point(u, v, q_img.get(u, v))?,
            });
        }
    }
    Ok(out)
}

/// Mean Euclidean distance between same-pixel points, computed in 3D.
/// Independent of the weight field; used to cross-check [`distance`].
pub fn matched_mean_distance(p_img: &DepthImage, q_img: &DepthImage) -> Result<f64> {
    let pairs = matched_pairs(p_img, q_img)?;
    let total: f64 = pairs.iter().map(|m| m.p.distance(&m.q)).sum();
    Ok(total / pairs.len() as f64)
}

/// Mean `|ΔZ|` between same-pixel points: the metric without radial weights.
pub fn unweighted_distance(p_img: &DepthImage, q_img: &DepthImage) -> Result<f64> {
    let intr = p_img.intrinsics();
    ensure_same_camera(intr, q_img.intrinsics())?;
    let total: f64 = p_img
        .pixels()
        .as_slice()
        .iter()
        .zip(q_img.pixels().as_slice())
        .map(|(&a, &b)| f64::from(a.abs_diff(b)))
        .sum();
    Ok(total / intr.pixel_count() as f64 * intr.depth_step())
}

/// Symmetric Chamfer distance: the mean nearest-neighbour distance from `p`
/// to `q` and from `q` to `p`, averaged.
///
/// Brute force over all pairs in `f32` after centring on the joint mean;
/// one sweep updates both the row and the column minima.
pub fn chamfer_distance(p: &[Point3], q: &[Point3]) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::Domain("Chamfer distance of an empty point set".into()));
    }
    let n = (p.len() + q.len()) as f64;
    let centre = p.iter().chain(q).fold([0.0f64; 3], |acc, x| [acc[0] + x.x, acc[1] + x.y, acc[2] + x.z]);
    let centre = centre.map(|c| c / n);
    let ps = Soa::new(p, centre, 1);
    let qs = Soa::new(q, centre, LANES);
    let mut col_min = vec![f32::INFINITY; qs.x.len()];
    let p_sum = chamfer_sweep(&ps, &qs, &mut col_min);
    let q_sum: f64 = col_min[..q.len()].iter().map(|&d| f64::from(d).sqrt()).sum();
    Ok(0.5 * (p_sum / p.len() as f64 + q_sum / q.len() as f64))
}

const LANES: usize = 8;
/// Padding coordinate for the tail of `q`; its squared distance to any real
/// point stays finite in `f32` and never wins a minimum.
const FAR: f32 = 1e15;

struct Soa {
    x: Vec<f32>,
    y: Vec<f32>,
    z: Vec<f32>,
}

impl Soa {
    fn new(points: &[Point3], c: [f64; 3], multiple: usize) -> Self {
        let len = points.len().div_ceil(multiple) * multiple;
        let mut s = Soa {
            x: Vec::with_capacity(len),
            y: Vec::with_capacity(len),
            z: Vec::with_capacity(len),
        };
        for p in points {
            s.x.push((p.x - c[0]) as f32);
            s.y.push((p.y - c[1]) as f32);
            s.z.push((p.z - c[2]) as f32);
        }
        s.x.resize(len, FAR);
        s.y.resize(len, FAR);
        s.z.resize(len, FAR);
        s
    }
}

fn chamfer_sweep(p: &Soa, q: &Soa, col_min: &mut [f32]) -> f64 {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: the required CPU features were detected at runtime.
            return unsafe { chamfer_sweep_avx2(p, q, col_min) };
        }
    }
    chamfer_sweep_generic(p, q, col_min)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn chamfer_sweep_avx2(p: &Soa, q: &Soa, col_min: &mut [f32]) -> f64 {
    chamfer_sweep_generic(p, q, col_min)
}

#[inline(always)]
fn chamfer_sweep_generic(p: &Soa, q: &Soa, col_min: &mut [f32]) -> f64 {
    let mut sum = 0.0f64;
    for i in 0..p.x.len() {
        let (px, py, pz) = (p.x[i], p.y[i], p.z[i]);
        let mut acc = [f32::INFINITY; LANES];
        for (((qx, qy), qz), cm) in q
            .x
            .chunks_exact(LANES)
            .zip(q.y.chunks_exact(LANES))
            .zip(q.z.chunks_exact(LANES))
            .zip(col_min.chunks_exact_mut(LANES))
        {
            for l in 0..LANES {
                let dx = qx[l] - px;
                let dy = qy[l] - py;
                let dz = qz[l] - pz;
                let d = dx * dx + dy * dy + dz * dz;
                acc[l] = if d < acc[l] { d } else { acc[l] };
                cm[l] = if d < cm[l] { d } else { cm[l] };
            }
        }
        let row = acc.iter().fold(f32::INFINITY, |m, &d| if d < m { d } else { m });
        sum += f64::from(row).sqrt();
    }
    sum
}

/// Weighted and unweighted distances between two scenes seen from two poses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ViewpointReport {
    /// `d_meters` under pose a and pose b.
    pub weighted: [f64; 2],
    /// Mean `|ΔZ|` under pose a and pose b.
    pub unweighted: [f64; 2],
}

impl ViewpointReport {
    pub fn weighted_ratio(&self) -> f64 {
        self.weighted[1] / self.weighted[0]
    }

    pub fn unweighted_ratio(&self) -> f64 {
        self.unweighted[1] / self.unweighted[0]
    }
}

/// Renders world points through a camera whose pose maps world coordinates
/// to camera coordinates. Unlit pixels get luminance 0 (depth `z_max`).
pub fn render_points(intr: &CameraIntrinsics, points: &[Point3], pose: &Isometry3<f64>) -> Result<DepthImage> {
    let mut pixels = Grid::filled(intr.width(), intr.height(), 0u16);
    let mut lit = Grid::filled(intr.width(), intr.height(), false);
    for (i, p) in points.iter().enumerate() {
        let pc: Point3 = (pose * nalgebra::Point3::from(*p)).into();
        let proj = intr.point_to_pixel(&pc).map_err(|e| Error::Render(format!("point {i}: {e}")))?;
        if proj.luminance.clip != Clip::InRange {
            return Err(Error::Render(format!("point {i} at depth {} outside the depth range", pc.z)));
        }
        let (u, v) = (proj.u.round() as usize, proj.v.round() as usize);
        if std::mem::replace(lit.get_mut(u, v), true) {
            return Err(Error::Render(format!("point {i} occludes another point at pixel ({u}, {v})")));
        }
        *pixels.get_mut(u, v) = proj.luminance.value;
    }
    DepthImage::new(intr.clone(), pixels)
}

/// Renders scenes `p` and `q` from both poses and reports how each metric
/// changes between the two views.
pub fn viewpoint_consistency_check(
    intr: &CameraIntrinsics,
    p: &[Point3],
    q: &[Point3],
    pose_a: &Isometry3<f64>,
    pose_b: &Isometry3<f64>,
) -> Result<ViewpointReport> {
    let wf = WeightField::build(intr);
    let mut weighted = [0.0; 2];
    let mut unweighted = [0.0; 2];
    for (k, pose) in [pose_a, pose_b].into_iter().enumerate() {
        let rp = render_points(intr, p, pose)?;
        let rq = render_points(intr, q, pose)?;
        weighted[k] = distance(&wf.normalize(&rp)?, &wf.normalize(&rq)?)?.d_meters;
        unweighted[k] = unweighted_distance(&rp, &rq)?;
    }
    Ok(ViewpointReport { weighted, unweighted })
}

//! Heightmap stand-in for the material, the robot and the camera.
//!
//! The surface is a grid of heights above the workspace floor, seen by a
//! camera looking straight down from `camera_height`. An action presses a
//! stamp into the surface: heights inside the crater drop to the stamp
//! profile measured from a surface fitted through the footprint rim, a
//! share of the removed volume is piled on the rim, and optional Gaussian
//! noise perturbs the footprint. Nothing outside the footprint changes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depthcam::{CameraIntrinsics, DepthImage, NormalizedImage, Point3, WeightField};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::planner::{ActionInstance, Executor};
use crate::predict::{PatchDataset, PatchPair};
use crate::roi::{valid_position_range, ActionSpec, Patch, RoiRect};

pub const DEFAULT_CELL: f64 = 0.001;
pub const DEFAULT_CAMERA_HEIGHT: f64 = 0.55;
/// Height of an untouched flat surface; the camera sees it at 0.45 m.
pub const DEFAULT_REFERENCE_HEIGHT: f64 = 0.10;
/// Crater radius as a fraction of the footprint; the rest is the rim.
pub const CRATER_RADIUS: f64 = 0.8;
pub const DEFAULT_RIDGE_FRACTION: f64 = 0.3;
/// Gap between the action's box and the footprint the stamp touches.
pub const FOOTPRINT_MARGIN: f64 = 0.003;

/// Rectangle `[-half_x, half_x] x [-half_y, half_y]` under the camera,
/// sampled every `cell` meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Workspace {
    pub half_x: f64,
    pub half_y: f64,
    pub cell: f64,
    pub camera_height: f64,
    pub reference_height: f64,
}

impl Default for Workspace {
    fn default() -> Self {
        Workspace {
            half_x: 0.220,
            half_y: 0.180,
            cell: DEFAULT_CELL,
            camera_height: DEFAULT_CAMERA_HEIGHT,
            reference_height: DEFAULT_REFERENCE_HEIGHT,
        }
    }
}

impl Workspace {
    pub fn validate(&self) -> Result<()> {
        let ok = self.half_x > 0.0
            && self.half_y > 0.0
            && self.cell > 0.0
            && self.reference_height >= 0.0
            && self.camera_height > self.reference_height;
        if !ok {
            return Err(Error::Config(format!("invalid workspace {self:?}")));
        }
        Ok(())
    }

    /// Camera distance to the untouched surface.
    pub fn z_ref(&self) -> f64 {
        self.camera_height - self.reference_height
    }

    fn cells(&self, half: f64) -> usize {
        (2.0 * half / self.cell).round() as usize + 1
    }

    /// Every workspace corner projects inside the image.
    pub fn check_frustum(&self, intr: &CameraIntrinsics) -> Result<()> {
        let z = self.z_ref();
        for (x, y) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
            let u = intr.fx() * x * self.half_x / z + intr.u0();
            let v = intr.fy() * y * self.half_y / z + intr.v0();
            if u < 1.0 || v < 1.0 || u > intr.width() as f64 || v > intr.height() as f64 {
                return Err(Error::Config(format!(
                    "workspace corner ({:.3}, {:.3}) m projects to ({u:.1}, {v:.1}), outside the image",
                    x * self.half_x,
                    y * self.half_y
                )));
            }
        }
        Ok(())
    }
}

/// Heights in meters on a regular lattice; cell `(i, j)` (0-based, `i`
/// along X) is centred at `(x0 + i cell, y0 + j cell)`. Queries outside the
/// lattice see `reference`.
#[derive(Clone, Debug, PartialEq)]
pub struct Heightmap {
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    reference: f64,
    heights: Vec<f64>,
}

impl Heightmap {
    fn build(x0: f64, y0: f64, cell: f64, nx: usize, ny: usize, reference: f64, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Domain("empty heightmap".into()));
        }
        let mut heights = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            let y = y0 + j as f64 * cell;
            for i in 0..nx {
                heights.push(f(x0 + i as f64 * cell, y));
            }
        }
        let hm = Heightmap {
            x0,
            y0,
            cell,
            nx,
            ny,
            reference,
            heights,
        };
        hm.validate()?;
        Ok(hm)
    }

    fn validate(&self) -> Result<()> {
        match self.heights.iter().position(|h| !(h.is_finite() && *h >= 0.0)) {
            Some(k) => Err(Error::Domain(format!(
                "height {} at cell ({}, {}) is not a finite non-negative value",
                self.heights[k],
                k % self.nx,
                k / self.nx
            ))),
            None => Ok(()),
        }
    }

    /// The whole workspace filled from `f(x, y)`.
    pub fn workspace(ws: &Workspace, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        ws.validate()?;
        Self::build(-ws.half_x, -ws.half_y, ws.cell, ws.cells(ws.half_x), ws.cells(ws.half_y), ws.reference_height, f)
    }

    pub fn flat(ws: &Workspace) -> Result<Self> {
        Self::workspace(ws, |_, _| ws.reference_height)
    }

    /// The workspace lattice cells within `[cx - hx, cx + hx] x [cy - hy, cy + hy]`.
    pub fn region(ws: &Workspace, cx: f64, cy: f64, hx: f64, hy: f64, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        ws.validate()?;
        let span = |c: f64, h: f64, half: f64, n: usize| {
            let lo = (((c - h + half) / ws.cell).ceil().max(0.0)) as usize;
            let hi = (((c + h + half) / ws.cell).floor().max(0.0) as usize).min(n - 1);
            (lo, hi)
        };
        let (i0, i1) = span(cx, hx, ws.half_x, ws.cells(ws.half_x));
        let (j0, j1) = span(cy, hy, ws.half_y, ws.cells(ws.half_y));
        if i0 > i1 || j0 > j1 {
            return Err(Error::Domain(format!("region around ({cx}, {cy}) misses the workspace")));
        }
        Self::build(
            -ws.half_x + i0 as f64 * ws.cell,
            -ws.half_y + j0 as f64 * ws.cell,
            ws.cell,
            i1 - i0 + 1,
            j1 - j0 + 1,
            ws.reference_height,
            f,
        )
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn cell(&self) -> f64 {
        self.cell
    }

    pub fn reference(&self) -> f64 {
        self.reference
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.heights[j * self.nx + i]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x0 + i as f64 * self.cell, self.y0 + j as f64 * self.cell)
    }

    /// `[x_min, x_max, y_min, y_max]` of the cell centres.
    pub fn bounds(&self) -> [f64; 4] {
        let (x1, y1) = self.cell_center(self.nx - 1, self.ny - 1);
        [self.x0, x1, self.y0, y1]
    }

    fn at(&self, i: isize, j: isize) -> f64 {
        if i < 0 || j < 0 || i as usize >= self.nx || j as usize >= self.ny {
            self.reference
        } else {
            self.heights[j as usize * self.nx + i as usize]
        }
    }

    /// Bilinear interpolation between the four surrounding cells.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let fx = (x - self.x0) / self.cell;
        let fy = (y - self.y0) / self.cell;
        let (i, j) = (fx.floor(), fy.floor());
        let (tx, ty) = (fx - i, fy - j);
        let (i, j) = (i as isize, j as isize);
        let top = self.at(i, j) * (1.0 - tx) + self.at(i + 1, j) * tx;
        let bottom = self.at(i, j + 1) * (1.0 - tx) + self.at(i + 1, j + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }

    /// Cells whose value differs from `other`'s; both maps share a lattice.
    pub fn changed_cells(&self, other: &Heightmap) -> Vec<(usize, usize)> {
        assert_eq!((self.x0, self.y0, self.nx, self.ny), (other.x0, other.y0, other.nx, other.ny));
        self.heights
            .iter()
            .zip(&other.heights)
            .enumerate()
            .filter(|(_, (a, b))| a.to_bits() != b.to_bits())
            .map(|(k, _)| (k % self.nx, k / self.nx))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceKind {
    Flat,
    Sloped,
    Irregular,
    Curved,
}

impl SurfaceKind {
    pub const ALL: [SurfaceKind; 4] = [SurfaceKind::Flat, SurfaceKind::Sloped, SurfaceKind::Irregular, SurfaceKind::Curved];
}

impl FromStr for SurfaceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(SurfaceKind::Flat),
            "sloped" => Ok(SurfaceKind::Sloped),
            "irregular" => Ok(SurfaceKind::Irregular),
            "curved" => Ok(SurfaceKind::Curved),
            _ => Err(Error::Config(format!("unknown surface kind {s:?}"))),
        }
    }
}

impl fmt::Display for SurfaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SurfaceKind::Flat => "flat",
            SurfaceKind::Sloped => "sloped",
            SurfaceKind::Irregular => "irregular",
            SurfaceKind::Curved => "curved",
        })
    }
}

/// Ranges the random surfaces are drawn from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceParams {
    /// Largest gradient of a sloped surface along each axis.
    pub slope_max: f64,
    /// Standard deviation of an irregular surface over the workspace, meters.
    pub irregular_std: f64,
    pub blob_count: usize,
    pub blob_sigma: (f64, f64),
    /// Sphere radius of the curved surface.
    pub cap_radius: f64,
    /// Height of the curved surface's top above the reference.
    pub cap_height: f64,
}

impl Default for SurfaceParams {
    fn default() -> Self {
        SurfaceParams {
            slope_max: 0.03,
            irregular_std: 0.017,
            blob_count: 12,
            blob_sigma: (0.04, 0.09),
            cap_radius: 0.15,
            cap_height: 0.025,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Blob {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
    pub amplitude: f64,
}

impl Blob {
    fn eval(&self, x: f64, y: f64) -> f64 {
        let d2 = (x - self.x).powi(2) + (y - self.y).powi(2);
        self.amplitude * (-0.5 * d2 / (self.sigma * self.sigma)).exp()
    }
}

/// Analytic initial surface, heights in meters.
#[derive(Clone, Debug, PartialEq)]
pub enum Surface {
    Flat { level: f64 },
    Sloped { level: f64, gx: f64, gy: f64 },
    /// `level + scale (sum of blobs - offset)`.
    Blobs { level: f64, blobs: Vec<Blob>, offset: f64, scale: f64 },
    /// Spherical cap of radius `radius` centred at `(x, y)`, `height` above
    /// `level` at its top.
    Cap { level: f64, x: f64, y: f64, radius: f64, height: f64 },
}

impl Surface {
    pub fn kind(&self) -> SurfaceKind {
        match self {
            Surface::Flat { .. } => SurfaceKind::Flat,
            Surface::Sloped { .. } => SurfaceKind::Sloped,
            Surface::Blobs { .. } => SurfaceKind::Irregular,
            Surface::Cap { .. } => SurfaceKind::Curved,
        }
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        match self {
            Surface::Flat { level } => *level,
            Surface::Sloped { level, gx, gy } => level + gx * x + gy * y,
            Surface::Blobs {
                level,
                blobs,
                offset,
                scale,
            } => level + scale * (blobs.iter().map(|b| b.eval(x, y)).sum::<f64>() - offset),
            Surface::Cap {
                level,
                x: cx,
                y: cy,
                radius,
                height,
            } => {
                let r2 = (x - cx).powi(2) + (y - cy).powi(2);
                let z = (radius * radius - r2).max(0.0).sqrt() - (radius - height);
                level + z.max(0.0)
            }
        }
    }

    /// Draws a surface of `kind` over `ws`. Curved surfaces are centred.
    pub fn random(kind: SurfaceKind, ws: &Workspace, p: &SurfaceParams, rng: &mut impl Rng) -> Self {
        let level = ws.reference_height;
        match kind {
            SurfaceKind::Flat => Surface::Flat { level },
            SurfaceKind::Sloped => Surface::Sloped {
                level,
                gx: rng.gen_range(-p.slope_max..=p.slope_max),
                gy: rng.gen_range(-p.slope_max..=p.slope_max),
            },
            SurfaceKind::Irregular => {
                let blobs: Vec<Blob> = (0..p.blob_count.max(1))
                    .map(|_| Blob {
                        x: rng.gen_range(-ws.half_x..=ws.half_x),
                        y: rng.gen_range(-ws.half_y..=ws.half_y),
                        sigma: rng.gen_range(p.blob_sigma.0..=p.blob_sigma.1),
                        amplitude: rng.gen_range(-1.0..=1.0),
                    })
                    .collect();
                // Moments on a 5 mm lattice are close enough to set the scale.
                let step = 0.005;
                let (nx, ny) = ((2.0 * ws.half_x / step) as usize + 1, (2.0 * ws.half_y / step) as usize + 1);
                let mut values = Vec::with_capacity(nx * ny);
                for j in 0..ny {
                    for i in 0..nx {
                        let (x, y) = (-ws.half_x + i as f64 * step, -ws.half_y + j as f64 * step);
                        values.push(blobs.iter().map(|b| b.eval(x, y)).sum::<f64>());
                    }
                }
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                Surface::Blobs {
                    level,
                    blobs,
                    offset: mean,
                    scale: if std > 0.0 { p.irregular_std / std } else { 0.0 },
                }
            }
            SurfaceKind::Curved => Surface::Cap {
                level,
                x: 0.0,
                y: 0.0,
                radius: p.cap_radius,
                height: p.cap_height,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StampShape {
    /// Paraboloid, deepest at the centre.
    Dome,
    /// Flat bottom with steep walls.
    Fist,
    /// Two paraboloids side by side along Y.
    TwinLobe,
}

/// How one action type deforms the surface.
#[derive(Clone, Debug, PartialEq)]
pub struct StampProfile {
    pub action: String,
    pub shape: StampShape,
    /// Deepest point of the crater below the rim plane, meters.
    pub depth: f64,
    /// Share of the removed volume piled on the rim, in `[0, 1)`.
    pub ridge_fraction: f64,
    /// Default noise inside the footprint, meters.
    pub noise_sigma: f64,
}

impl StampProfile {
    pub fn new(action: impl Into<String>, shape: StampShape, depth: f64, ridge_fraction: f64, noise_sigma: f64) -> Result<Self> {
        let action = action.into();
        if !(depth > 0.0 && (0.0..1.0).contains(&ridge_fraction) && noise_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "{action} stamp needs depth > 0, ridge fraction in [0, 1) and noise >= 0"
            )));
        }
        Ok(StampProfile {
            action,
            shape,
            depth,
            ridge_fraction,
            noise_sigma,
        })
    }

    pub fn default_for(action: &str) -> Option<Self> {
        let (shape, depth_mm, sigma_mm) = match action {
            "poke" => (StampShape::Dome, 7.0, 0.3),
            "knock" => (StampShape::Fist, 7.0, 0.5),
            "press" => (StampShape::Fist, 6.0, 0.5),
            "pinch" => (StampShape::TwinLobe, 5.0, 0.5),
            "grasp" => (StampShape::Dome, 12.0, 1.0),
            _ => return None,
        };
        Some(StampProfile {
            action: action.to_string(),
            shape,
            depth: depth_mm / 1000.0,
            ridge_fraction: DEFAULT_RIDGE_FRACTION,
            noise_sigma: sigma_mm / 1000.0,
        })
    }

    /// Crater depth at footprint coordinates `(px, py)` in `[-1, 1]^2`;
    /// zero from radius [`CRATER_RADIUS`] outwards.
    pub fn depth_at(&self, px: f64, py: f64) -> f64 {
        let (qx, qy) = (px / CRATER_RADIUS, py / CRATER_RADIUS);
        let r2 = qx * qx + qy * qy;
        if r2 >= 1.0 {
            return 0.0;
        }
        self.depth
            * match self.shape {
                StampShape::Dome => 1.0 - r2,
                StampShape::Fist => 1.0 - r2 * r2 * r2,
                StampShape::TwinLobe => {
                    const C: f64 = 0.5;
                    const R2: f64 = 0.45 * 0.45;
                    let lobe = |c: f64| (1.0 - (qx * qx + (qy - c).powi(2)) / R2).max(0.0);
                    lobe(C).max(lobe(-C))
                }
            }
    }
}

/// Result of [`apply_action`] with its volume bookkeeping, cubic meters.
#[derive(Clone, Debug, PartialEq)]
pub struct Applied {
    pub heightmap: Heightmap,
    pub displaced_volume: f64,
    pub ridge_volume: f64,
}

/// Footprint cell with its normalized coordinates.
struct FootCell {
    k: usize,
    r: f64,
    px: f64,
    py: f64,
}

/// Undisturbed surface under the footprint, extrapolated from the rim as a
/// polynomial in footprint coordinates.
struct RimFit {
    coeffs: DVector<f64>,
}

impl RimFit {
    fn at(&self, px: f64, py: f64) -> f64 {
        basis(self.coeffs.len(), px, py).dot(&self.coeffs)
    }
}

/// `[1, px, py, px^2, px py, py^2]`, truncated to `n` terms.
fn basis(n: usize, px: f64, py: f64) -> DVector<f64> {
    DVector::from_iterator(n, [1.0, px, py, px * px, px * py, py * py].into_iter().take(n))
}

fn least_squares(hm: &Heightmap, rim: &[&FootCell], n: usize) -> Option<RimFit> {
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for c in rim {
        let row = basis(n, c.px, c.py);
        m += &row * row.transpose();
        rhs += row * hm.heights[c.k];
    }
    m.lu()
        .solve(&rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .map(|coeffs| RimFit { coeffs })
}

/// A quadratic follows curved surfaces, so the crater keeps its depth
/// relative to the local surface; sparse rims fall back to a plane.
fn fit_rim(hm: &Heightmap, rim: &[&FootCell]) -> Option<RimFit> {
    const MIN_QUADRATIC_CELLS: usize = 24;
    if rim.len() >= MIN_QUADRATIC_CELLS {
        if let Some(f) = least_squares(hm, rim, 6) {
            return Some(f);
        }
    }
    least_squares(hm, rim, 3)
}

/// Presses `stamp` into `hm` at `action`'s position.
///
/// Cells inside the crater drop to `rim - profile` wherever they are
/// higher, where `rim` is a least-squares surface through the rim cells. The rim gains
/// `ridge_fraction` of the removed volume with a sine weighting. Noise of
/// standard deviation `noise_sigma` is added over the whole footprint.
pub fn apply_action(
    hm: &Heightmap,
    action: &ActionInstance,
    stamp: &StampProfile,
    noise_sigma: f64,
    rng: &mut impl Rng,
) -> Result<Applied> {
    if stamp.depth > action.half.dz {
        return Err(Error::Config(format!(
            "{} stamp depth {} exceeds the box half-height {}",
            stamp.action, stamp.depth, action.half.dz
        )));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::Config(format!("noise sigma {noise_sigma} must be non-negative")));
    }
    let ax = action.half.dx - FOOTPRINT_MARGIN;
    let ay = action.half.dy - FOOTPRINT_MARGIN;
    if !(ax > 0.0 && ay > 0.0) {
        return Err(Error::Config(format!("{} box is thinner than the footprint margin", action.action)));
    }
    let (cx, cy) = (action.position.x, action.position.y);
    let [x_lo, x_hi, y_lo, y_hi] = hm.bounds();
    if cx - ax < x_lo || cx + ax > x_hi || cy - ay < y_lo || cy + ay > y_hi {
        return Err(Error::Domain(format!(
            "{} footprint at ({cx:.3}, {cy:.3}) m leaves the workspace",
            action.action
        )));
    }

    let i0 = ((cx - ax - hm.x0) / hm.cell).ceil() as usize;
    let i1 = ((cx + ax - hm.x0) / hm.cell).floor() as usize;
    let j0 = ((cy - ay - hm.y0) / hm.cell).ceil() as usize;
    let j1 = ((cy + ay - hm.y0) / hm.cell).floor() as usize;
    let mut cells = Vec::new();
    for j in j0..=j1.min(hm.ny - 1) {
        for i in i0..=i1.min(hm.nx - 1) {
            let (x, y) = hm.cell_center(i, j);
            let (px, py) = ((x - cx) / ax, (y - cy) / ay);
            let r = px.hypot(py);
            if r <= 1.0 {
                cells.push(FootCell {
                    k: j * hm.nx + i,
                    r,
                    px,
                    py,
                });
            }
        }
    }
    let rim: Vec<&FootCell> = cells.iter().filter(|c| c.r >= CRATER_RADIUS).collect();
    let surface = fit_rim(hm, &rim).ok_or_else(|| {
        Error::Domain(format!("{} footprint is too small for the {} m lattice", action.action, hm.cell))
    })?;

    let mut out = hm.clone();
    let area = hm.cell * hm.cell;
    let mut removed = 0.0;
    for c in cells.iter().filter(|c| c.r < CRATER_RADIUS) {
        let target = surface.at(c.px, c.py) - stamp.depth_at(c.px, c.py);
        let h = &mut out.heights[c.k];
        if *h > target {
            removed += *h - target;
            *h = target;
        }
    }
    let mut ridge = 0.0;
    if removed > 0.0 && stamp.ridge_fraction > 0.0 {
        let weight = |r: f64| (std::f64::consts::PI * (r - CRATER_RADIUS) / (1.0 - CRATER_RADIUS)).sin();
        let total: f64 = rim.iter().map(|c| weight(c.r)).sum();
        if total > 0.0 {
            let lift = stamp.ridge_fraction * removed / total;
            for c in &rim {
                let dh = lift * weight(c.r);
                out.heights[c.k] += dh;
                ridge += dh;
            }
        }
    }
    if noise_sigma > 0.0 {
        for c in &cells {
            let n: f64 = StandardNormal.sample(rng);
            out.heights[c.k] += noise_sigma * n;
        }
    }
    out.validate()?;
    Ok(Applied {
        heightmap: out,
        displaced_volume: removed * area,
        ridge_volume: ridge * area,
    })
}

/// Luminances of the pixels in `rect` (1-based, inclusive) as seen from
/// `camera_height` straight above the workspace origin.
///
/// Pixel rays are intersected with the reference plane, which fixes where
/// each pixel samples the heightmap; the depth is `camera_height` minus the
/// sampled height.
pub fn render_rect(hm: &Heightmap, intr: &CameraIntrinsics, camera_height: f64, rect: &RoiRect) -> Result<Grid<u16>> {
    rect.ensure_within(intr)?;
    let z_ref = camera_height - hm.reference;
    if !(z_ref > 0.0) {
        return Err(Error::Config(format!("camera at {camera_height} m is below the surface")));
    }
    let mut out = Vec::with_capacity(rect.width() * rect.height());
    for v in rect.v_min..=rect.v_max {
        for u in rect.u_min..=rect.u_max {
            let (x, y) = intr.normalized_coords(u as f64, v as f64);
            let z = camera_height - hm.sample(x * z_ref, y * z_ref);
            if !(intr.z_min()..=intr.z_max()).contains(&z) {
                return Err(Error::Render(format!(
                    "depth {z:.4} m at pixel ({u}, {v}) is outside [{}, {}]",
                    intr.z_min(),
                    intr.z_max()
                )));
            }
            out.push(intr.depth_to_luminance(z)?.value);
        }
    }
    Grid::from_vec(rect.width(), rect.height(), out)
}

/// Full depth image of `hm`; the workspace must be in view.
pub fn render(hm: &Heightmap, intr: &CameraIntrinsics, ws: &Workspace) -> Result<DepthImage> {
    ws.check_frustum(intr)?;
    let pixels = render_rect(hm, intr, ws.camera_height, &RoiRect::full(intr))?;
    DepthImage::new(intr.clone(), pixels)
}

/// Normalized values of rendered luminances covering `rect`; matches
/// normalizing the full image and cutting out `rect`.
pub fn normalize_rect(wf: &WeightField, rect: &RoiRect, lum: &Grid<u16>) -> Result<Grid<f64>> {
    if lum.dims() != (rect.width(), rect.height()) {
        return Err(Error::Shape("luminance block does not match its rectangle".into()));
    }
    Ok(Grid::from_fn(rect.width(), rect.height(), |u, v| {
        let w = wf.values().get(rect.u_min + u - 1, rect.v_min + v - 1);
        (w * f64::from(*lum.get(u, v))).min(1.0)
    }))
}

/// The three action types of the robot experiments, 15 positions each.
pub fn robot_actions() -> Vec<ActionSpec> {
    let positions: Vec<[f64; 3]> = [-70.0, 0.0, 70.0]
        .iter()
        .flat_map(|&y| [-120.0, -60.0, 0.0, 60.0, 120.0].map(|x| [x, y, 450.0]))
        .collect();
    [("grasp", 95.0, 95.0), ("knock", 58.0, 31.0), ("poke", 21.0, 23.0)]
        .iter()
        .map(|&(name, dx, dy)| ActionSpec {
            name: name.into(),
            dx_mm: dx,
            dy_mm: dy,
            dz_mm: 50.0,
            positions: positions.clone(),
        })
        .collect()
}

/// Five action types on a 21-position grid.
pub fn general_actions() -> Vec<ActionSpec> {
    let positions: Vec<[f64; 3]> = [-70.0, 0.0, 70.0]
        .iter()
        .flat_map(|&y| (0..7).map(move |k| [-120.0 + 40.0 * k as f64, y, 450.0]))
        .collect();
    [
        ("grasp", 95.0, 95.0),
        ("knock", 58.0, 31.0),
        ("poke", 21.0, 23.0),
        ("press", 23.0, 51.5),
        ("pinch", 21.0, 42.5),
    ]
    .iter()
    .map(|&(name, dx, dy)| ActionSpec {
        name: name.into(),
        dx_mm: dx,
        dy_mm: dy,
        dz_mm: 50.0,
        positions: positions.clone(),
    })
    .collect()
}

/// Box sizes measured on the physical setup, each at the centre position.
pub fn measured_actions() -> Vec<ActionSpec> {
    [
        ("grasp", 76.0, 145.0, 58.0),
        ("knock", 64.0, 114.0, 39.0),
        ("poke", 14.0, 14.0, 21.0),
        ("press", 46.0, 103.0, 15.0),
        ("pinch", 42.0, 85.0, 25.0),
    ]
    .iter()
    .map(|&(name, wx, wy, wz)| ActionSpec {
        name: name.into(),
        dx_mm: wx / 2.0,
        dy_mm: wy / 2.0,
        dz_mm: wz / 2.0,
        positions: vec![[0.0, 0.0, 450.0]],
    })
    .collect()
}

/// Settings for [`Simulator::gen_dataset`].
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub n_pairs: usize,
    pub seed: u64,
    /// Prior surfaces are drawn uniformly from these kinds.
    pub surfaces: Vec<SurfaceKind>,
    /// Fixed action centre; random admissible centres when `None`.
    pub position: Option<Point3>,
}

impl DatasetConfig {
    pub fn new(n_pairs: usize, seed: u64) -> Self {
        DatasetConfig {
            n_pairs,
            seed,
            surfaces: vec![SurfaceKind::Flat, SurfaceKind::Sloped, SurfaceKind::Irregular],
            position: None,
        }
    }
}

/// Where and on what one dataset pair was generated.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairRecord {
    pub surface: SurfaceKind,
    pub position: Point3,
    pub rect: RoiRect,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedDataset {
    pub dataset: PatchDataset,
    pub records: Vec<PairRecord>,
}

/// A planted planning problem with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub surface: Surface,
    pub initial: Heightmap,
    pub target: Heightmap,
    pub i0: DepthImage,
    pub i_star: DepthImage,
    pub truth: Vec<ActionInstance>,
}

/// Camera, workspace and stamps bundled together.
#[derive(Clone, Debug)]
pub struct Simulator {
    intr: CameraIntrinsics,
    workspace: Workspace,
    weights: WeightField,
    stamps: BTreeMap<String, StampProfile>,
    surface_params: SurfaceParams,
    noise_scale: f64,
}

impl Simulator {
    pub fn new(intr: CameraIntrinsics, workspace: Workspace) -> Result<Self> {
        workspace.validate()?;
        workspace.check_frustum(&intr)?;
        let stamps = ["grasp", "knock", "poke", "press", "pinch"]
            .iter()
            .filter_map(|n| StampProfile::default_for(n))
            .map(|s| (s.action.clone(), s))
            .collect();
        Ok(Simulator {
            weights: WeightField::build(&intr),
            intr,
            workspace,
            stamps,
            surface_params: SurfaceParams::default(),
            noise_scale: 1.0,
        })
    }

    /// The calibrated camera cropped to the workspace, default workspace.
    pub fn standard() -> Self {
        Self::new(CameraIntrinsics::d435_workspace(), Workspace::default()).expect("default workspace is in view")
    }

    pub fn with_noise_scale(mut self, scale: f64) -> Self {
        self.noise_scale = scale;
        self
    }

    pub fn with_surface_params(mut self, p: SurfaceParams) -> Self {
        self.surface_params = p;
        self
    }

    pub fn with_stamp(mut self, stamp: StampProfile) -> Self {
        self.stamps.insert(stamp.action.clone(), stamp);
        self
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intr
    }

    pub fn workspace(&self) -> &Workspace {
        &self.workspace
    }

    pub fn weights(&self) -> &WeightField {
        &self.weights
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn surface_params(&self) -> &SurfaceParams {
        &self.surface_params
    }

    pub fn stamp(&self, action: &str) -> Result<&StampProfile> {
        self.stamps
            .get(action)
            .ok_or_else(|| Error::Config(format!("no stamp for action {action:?}")))
    }

    pub fn surface(&self, kind: SurfaceKind, rng: &mut impl Rng) -> Surface {
        Surface::random(kind, &self.workspace, &self.surface_params, rng)
    }

    pub fn heightmap(&self, surface: &Surface) -> Result<Heightmap> {
        Heightmap::workspace(&self.workspace, |x, y| surface.height(x, y))
    }

    pub fn apply(&self, hm: &Heightmap, action: &ActionInstance, rng: &mut impl Rng) -> Result<Applied> {
        let stamp = self.stamp(&action.action)?;
        apply_action(hm, action, stamp, stamp.noise_sigma * self.noise_scale, rng)
    }

    pub fn render(&self, hm: &Heightmap) -> Result<DepthImage> {
        render(hm, &self.intr, &self.workspace)
    }

    pub fn observe(&self, hm: &Heightmap) -> Result<NormalizedImage> {
        self.weights.normalize(&self.render(hm)?)
    }

    /// `cfg.n_pairs` prior/posterior patches of `spec`'s action. Pair `i`
    /// draws from stream `i` of the seeded generator, so pairs are
    /// independent of each other and of the thread count.
    pub fn gen_dataset(&self, spec: &ActionSpec, cfg: &DatasetConfig) -> Result<GeneratedDataset> {
        if cfg.n_pairs == 0 {
            return Err(Error::Domain("a dataset needs at least one pair".into()));
        }
        if cfg.surfaces.is_empty() {
            return Err(Error::Config("no prior surface kinds to draw from".into()));
        }
        self.stamp(&spec.name)?;
        let half = spec.half_extents()?;
        let z = self.workspace.z_ref();
        let range = valid_position_range(&self.intr, &half, z)?;
        let (fx, fy) = (half.dx - FOOTPRINT_MARGIN, half.dy - FOOTPRINT_MARGIN);
        let xs = (range.x.lo.max(-self.workspace.half_x + fx), range.x.hi.min(self.workspace.half_x - fx));
        let ys = (range.y.lo.max(-self.workspace.half_y + fy), range.y.hi.min(self.workspace.half_y - fy));
        if xs.0 > xs.1 || ys.0 > ys.1 {
            return Err(Error::Infeasible(format!("{} fits nowhere in the workspace", spec.name)));
        }
        let pairs = (0..cfg.n_pairs)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(i as u64);
                let kind = cfg.surfaces[rng.gen_range(0..cfg.surfaces.len())];
                let surface = self.surface(kind, &mut rng);
                let t = match cfg.position {
                    Some(p) => p,
                    None => Point3::new(rng.gen_range(xs.0..=xs.1), rng.gen_range(ys.0..=ys.1), z),
                };
                let one = ActionSpec {
                    positions: vec![[t.x * 1000.0, t.y * 1000.0, t.z * 1000.0]],
                    ..spec.clone()
                };
                let action = ActionInstance::new(&self.intr, &one, 0, 0)?;
                let pad = 0.015;
                let prior = Heightmap::region(
                    &self.workspace,
                    action.position.x,
                    action.position.y,
                    half.dx + pad,
                    half.dy + pad,
                    |x, y| surface.height(x, y),
                )?;
                let post = self.apply(&prior, &action, &mut rng)?.heightmap;
                let rect = action.rect;
                let patch = |hm: &Heightmap| -> Result<Patch> {
                    let lum = render_rect(hm, &self.intr, self.workspace.camera_height, &rect)?;
                    Patch::new(rect, normalize_rect(&self.weights, &rect, &lum)?)
                };
                let pair = PatchPair {
                    prior: patch(&prior)?,
                    posterior: patch(&post)?,
                };
                Ok((
                    pair,
                    PairRecord {
                        surface: kind,
                        position: action.position,
                        rect,
                    },
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let (pairs, records) = pairs.into_iter().unzip();
        Ok(GeneratedDataset {
            dataset: PatchDataset::new(spec.name.clone(), pairs)?,
            records,
        })
    }

    /// Applies `planted` in order to a random surface of `kind`.
    pub fn gen_scenario(&self, planted: &[ActionInstance], kind: SurfaceKind, seed: u64) -> Result<Scenario> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let surface = self.surface(kind, &mut rng);
        let initial = self.heightmap(&surface)?;
        let mut target = initial.clone();
        for a in planted {
            target = self.apply(&target, a, &mut rng)?.heightmap;
        }
        Ok(Scenario {
            i0: self.render(&initial)?,
            i_star: self.render(&target)?,
            surface,
            initial,
            target,
            truth: planted.to_vec(),
        })
    }
}

/// Executes actions on a simulated surface, seeing it through the camera.
pub struct SimExecutor<'a> {
    sim: &'a Simulator,
    hm: Heightmap,
    rng: ChaCha8Rng,
}

impl<'a> SimExecutor<'a> {
    pub fn new(sim: &'a Simulator, hm: Heightmap, seed: u64) -> Self {
        SimExecutor {
            sim,
            hm,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn heightmap(&self) -> &Heightmap {
        &self.hm
    }
}

impl Executor for SimExecutor<'_> {
    fn execute(&mut self, action: &ActionInstance) -> Result<NormalizedImage> {
        self.hm = self.sim.apply(&self.hm, action, &mut self.rng)?.heightmap;
        self.sim.observe(&self.hm)
    }
}

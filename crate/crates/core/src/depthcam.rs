//! Pinhole depth-camera model.
//!
//! A depth image stores one integer luminance per pixel that encodes depth
//! linearly: luminance `0` is `z_max`, luminance `2^b - 1` is `z_min`. Together
//! with the pinhole projection this gives a bijection between
//! (pixel, luminance) triplets and 3D points inside the viewing frustum.
//!
//! Pixel indices are 1-based everywhere in the public API: `u` in `1..=width`
//! (columns), `v` in `1..=height` (rows).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// A point in the camera frame, meters. `x` grows with pixel columns, `y`
/// with pixel rows, `z` along the optical axis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

impl From<Point3> for nalgebra::Point3<f64> {
    fn from(p: Point3) -> Self {
        nalgebra::Point3::new(p.x, p.y, p.z)
    }
}

impl From<nalgebra::Point3<f64>> for Point3 {
    fn from(p: nalgebra::Point3<f64>) -> Self {
        Point3::new(p.x, p.y, p.z)
    }
}

/// How a depth was mapped onto the luminance scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Clip {
    InRange,
    /// Closer than `z_min`; saturated to the maximum luminance.
    Near,
    /// Farther than `z_max`; saturated to luminance 0.
    Far,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Luminance {
    pub value: u16,
    pub clip: Clip,
}

/// Real-valued pixel coordinates plus quantized luminance of a 3D point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelProjection {
    pub u: f64,
    pub v: f64,
    pub luminance: Luminance,
}

/// Pinhole intrinsics, sensor size, luminance bit depth and depth range.
///
/// Fields are private so every instance has passed validation.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraIntrinsics {
    width: usize,
    height: usize,
    bit_depth: u8,
    u0: f64,
    v0: f64,
    fx: f64,
    fy: f64,
    z_min: f64,
    z_max: f64,
}

pub const DEFAULT_BIT_DEPTH: u8 = 16;
pub const DEFAULT_Z_MIN: f64 = 0.3;
pub const DEFAULT_Z_MAX: f64 = 0.7;

impl CameraIntrinsics {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        width: usize,
        height: usize,
        bit_depth: u8,
        u0: f64,
        v0: f64,
        fx: f64,
        fy: f64,
        z_min: f64,
        z_max: f64,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!("empty sensor {width}x{height}")));
        }
        if !(1..=16).contains(&bit_depth) {
            return Err(Error::Config(format!("bit depth {bit_depth} not in 1..=16")));
        }
        let finite = [u0, v0, fx, fy, z_min, z_max].iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::Config("non-finite intrinsic parameter".into()));
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::Config(format!("focal lengths must be positive (fx={fx}, fy={fy})")));
        }
        if !(z_min > 0.0 && z_min < z_max) {
            return Err(Error::Config(format!("need 0 < z_min < z_max, got [{z_min}, {z_max}]")));
        }
        if !(1.0..=width as f64).contains(&u0) || !(1.0..=height as f64).contains(&v0) {
            return Err(Error::Config(format!(
                "principal point ({u0}, {v0}) outside [1,{width}]x[1,{height}]"
            )));
        }
        Ok(CameraIntrinsics {
            width,
            height,
            bit_depth,
            u0,
            v0,
            fx,
            fy,
            z_min,
            z_max,
        })
    }

    /// RealSense D435 datasheet values at 848x480.
    pub fn d435_nominal() -> Self {
        Self::new(848, 480, DEFAULT_BIT_DEPTH, 424.0, 240.0, 415.0, 373.0, DEFAULT_Z_MIN, DEFAULT_Z_MAX)
            .expect("valid preset")
    }

    /// Calibrated D435 unit used in the flour experiments, 848x480.
    pub fn d435_calibrated() -> Self {
        Self::new(848, 480, DEFAULT_BIT_DEPTH, 421.0, 243.0, 433.0, 433.0, DEFAULT_Z_MIN, DEFAULT_Z_MAX)
            .expect("valid preset")
    }

    /// The 480x395 window of the calibrated camera that frames the workspace.
    pub fn d435_workspace() -> Self {
        Self::d435_calibrated()
            .crop(182, 46, 480, 395)
            .expect("valid preset")
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "d435-nominal" => Some(Self::d435_nominal()),
            "d435-calibrated" => Some(Self::d435_calibrated()),
            "d435-workspace" => Some(Self::d435_workspace()),
            _ => None,
        }
    }

    /// Sub-window whose pixel `(1, 1)` is this camera's `(left, top)`.
    pub fn crop(&self, left: usize, top: usize, width: usize, height: usize) -> Result<Self> {
        if left == 0 || top == 0 || left + width - 1 > self.width || top + height - 1 > self.height {
            return Err(Error::Shape(format!(
                "crop {width}x{height}+{left}+{top} exceeds {}x{}",
                self.width, self.height
            )));
        }
        Self::new(
            width,
            height,
            self.bit_depth,
            self.u0 - (left - 1) as f64,
            self.v0 - (top - 1) as f64,
            self.fx,
            self.fy,
            self.z_min,
            self.z_max,
        )
    }

    pub fn with_depth_range(&self, z_min: f64, z_max: f64) -> Result<Self> {
        Self::new(self.width, self.height, self.bit_depth, self.u0, self.v0, self.fx, self.fy, z_min, z_max)
    }

    pub fn with_bit_depth(&self, bit_depth: u8) -> Result<Self> {
        Self::new(self.width, self.height, bit_depth, self.u0, self.v0, self.fx, self.fy, self.z_min, self.z_max)
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }
    pub fn u0(&self) -> f64 {
        self.u0
    }
    pub fn v0(&self) -> f64 {
        self.v0
    }
    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn z_min(&self) -> f64 {
        self.z_min
    }
    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// `2^b - 1`.
    pub fn max_luminance(&self) -> u16 {
        ((1u32 << self.bit_depth) - 1) as u16
    }

    /// Depth covered by one luminance step, meters.
    pub fn depth_step(&self) -> f64 {
        (self.z_max - self.z_min) / f64::from(self.max_luminance())
    }

    pub fn contains_pixel(&self, u: usize, v: usize) -> bool {
        (1..=self.width).contains(&u) && (1..=self.height).contains(&v)
    }

    pub fn luminance_to_depth(&self, l: u16) -> Result<f64> {
        let max = self.max_luminance();
        if l > max {
            return Err(Error::Domain(format!("luminance {l} exceeds {max}")));
        }
        Ok(self.depth_unchecked(l))
    }

    #[inline]
    fn depth_unchecked(&self, l: u16) -> f64 {
        (self.z_min - self.z_max) / f64::from(self.max_luminance()) * f64::from(l) + self.z_max
    }

    /// Quantizes a depth with round-half-away-from-zero. Depths outside
    /// `[z_min, z_max]` saturate and are flagged rather than rejected.
    pub fn depth_to_luminance(&self, z: f64) -> Result<Luminance> {
        if z.is_nan() {
            return Err(Error::Domain("depth is NaN".into()));
        }
        let max = self.max_luminance();
        if z < self.z_min {
            return Ok(Luminance {
                value: max,
                clip: Clip::Near,
            });
        }
        if z > self.z_max {
            return Ok(Luminance {
                value: 0,
                clip: Clip::Far,
            });
        }
        let scaled = f64::from(max) * (z - self.z_max) / (self.z_min - self.z_max);
        Ok(Luminance {
            value: scaled.round().clamp(0.0, f64::from(max)) as u16,
            clip: Clip::InRange,
        })
    }

    /// `((u - u0) / fx, (v - v0) / fy)`.
    pub fn normalized_coords(&self, u: f64, v: f64) -> (f64, f64) {
        ((u - self.u0) / self.fx, (v - self.v0) / self.fy)
    }

    /// `sqrt(1 + x^2 + y^2)`: ratio between the 3D displacement of a point
    /// moving along pixel `(u, v)`'s ray and its depth change.
    pub fn radial_factor(&self, u: f64, v: f64) -> f64 {
        let (x, y) = self.normalized_coords(u, v);
        (1.0 + x * x + y * y).sqrt()
    }

    /// Largest radial factor over the image, always reached at a corner.
    pub fn r_bar(&self) -> f64 {
        let (w, h) = (self.width as f64, self.height as f64);
        [(1.0, 1.0), (w, 1.0), (1.0, h), (w, h)]
            .iter()
            .map(|&(u, v)| self.radial_factor(u, v))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn pixel_to_point(&self, u: usize, v: usize, l: u16) -> Result<Point3> {
        if !self.contains_pixel(u, v) {
            return Err(Error::Domain(format!(
                "pixel ({u}, {v}) outside {}x{}",
                self.width, self.height
            )));
        }
        let z = self.luminance_to_depth(l)?;
        let (x, y) = self.normalized_coords(u as f64, v as f64);
        Ok(Point3::new(x * z, y * z, z))
    }

    /// Inverse of [`pixel_to_point`](Self::pixel_to_point). The returned
    /// `u, v` are real-valued; a point is in frame when both round into the
    /// sensor.
    pub fn point_to_pixel(&self, p: &Point3) -> Result<PixelProjection> {
        if !(p.z > 0.0) {
            return Err(Error::Domain(format!("point depth {} is not positive", p.z)));
        }
        let u = self.fx * p.x / p.z + self.u0;
        let v = self.fy * p.y / p.z + self.v0;
        let (ur, vr) = (u.round(), v.round());
        if !(ur >= 1.0 && ur <= self.width as f64 && vr >= 1.0 && vr <= self.height as f64) {
            return Err(Error::OutOfFrustum { u, v });
        }
        Ok(PixelProjection {
            u,
            v,
            luminance: self.depth_to_luminance(p.z)?,
        })
    }
}

/// JSON form of [`CameraIntrinsics`]. Inside a PGM comment the sensor size
/// comes from the PGM header, so `w` and `h` are omitted there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicsRecord {
    pub u0: f64,
    pub v0: f64,
    pub fx: f64,
    pub fy: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub b: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<usize>,
}

impl IntrinsicsRecord {
    pub fn into_intrinsics(self, width: usize, height: usize) -> Result<CameraIntrinsics> {
        if self.w.is_some_and(|w| w != width) || self.h.is_some_and(|h| h != height) {
            return Err(Error::Shape(format!(
                "record declares {:?}x{:?}, image is {width}x{height}",
                self.w, self.h
            )));
        }
        CameraIntrinsics::new(width, height, self.b, self.u0, self.v0, self.fx, self.fy, self.z_min, self.z_max)
    }
}

impl CameraIntrinsics {
    /// Record without sensor size, as embedded in PGM comments.
    pub fn to_record(&self) -> IntrinsicsRecord {
        IntrinsicsRecord {
            u0: self.u0,
            v0: self.v0,
            fx: self.fx,
            fy: self.fy,
            z_min: self.z_min,
            z_max: self.z_max,
            b: self.bit_depth,
            w: None,
            h: None,
        }
    }

    /// Standalone JSON, which must carry `w` and `h` as well.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let rec: IntrinsicsRecord = serde_json::from_str(s)?;
        match (rec.w, rec.h) {
            (Some(w), Some(h)) => rec.into_intrinsics(w, h),
            _ => Err(Error::Config("standalone intrinsics need \"w\" and \"h\"".into())),
        }
    }

    pub fn to_json_string(&self) -> String {
        let mut rec = self.to_record();
        rec.w = Some(self.width);
        rec.h = Some(self.height);
        serde_json::to_string_pretty(&rec).expect("plain struct serializes")
    }

    pub fn load_json(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&s)
    }
}

/// Raw luminance image.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    intrinsics: CameraIntrinsics,
    pixels: Grid<u16>,
}

impl DepthImage {
    pub fn new(intrinsics: CameraIntrinsics, pixels: Grid<u16>) -> Result<Self> {
        if pixels.dims() != (intrinsics.width(), intrinsics.height()) {
            return Err(Error::Shape(format!(
                "{}x{} pixels for a {}x{} camera",
                pixels.width(),
                pixels.height(),
                intrinsics.width(),
                intrinsics.height()
            )));
        }
        let max = intrinsics.max_luminance();
        if let Some(&bad) = pixels.as_slice().iter().find(|&&l| l > max) {
            return Err(Error::Domain(format!("luminance {bad} exceeds {max}")));
        }
        Ok(DepthImage { intrinsics, pixels })
    }

    pub fn constant(intrinsics: CameraIntrinsics, l: u16) -> Result<Self> {
        let pixels = Grid::filled(intrinsics.width(), intrinsics.height(), l);
        Self::new(intrinsics, pixels)
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn pixels(&self) -> &Grid<u16> {
        &self.pixels
    }

    pub fn get(&self, u: usize, v: usize) -> u16 {
        *self.pixels.get(u, v)
    }

    /// The visible point cloud, row-major.
    pub fn to_points(&self) -> Vec<Point3> {
        let intr = &self.intrinsics;
        let mut out = Vec::with_capacity(intr.pixel_count());
        for v in 1..=intr.height() {
            for u in 1..=intr.width() {
                let z = intr.depth_unchecked(self.get(u, v));
                let (x, y) = intr.normalized_coords(u as f64, v as f64);
                out.push(Point3::new(x * z, y * z, z));
            }
        }
        out
    }
}

/// Per-pixel weights `R_uv / ((2^b - 1) * r_bar)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightField {
    intrinsics: CameraIntrinsics,
    values: Grid<f64>,
    r_bar: f64,
}

impl WeightField {
    pub fn build(intrinsics: &CameraIntrinsics) -> Self {
        let r_bar = intrinsics.r_bar();
        let scale = f64::from(intrinsics.max_luminance()) * r_bar;
        let values = Grid::from_fn(intrinsics.width(), intrinsics.height(), |u, v| {
            intrinsics.radial_factor(u as f64, v as f64) / scale
        });
        WeightField {
            intrinsics: intrinsics.clone(),
            values,
            r_bar,
        }
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn values(&self) -> &Grid<f64> {
        &self.values
    }

    pub fn r_bar(&self) -> f64 {
        self.r_bar
    }

    /// Unscaled `R_uv`.
    pub fn radial(&self, u: usize, v: usize) -> f64 {
        self.intrinsics.radial_factor(u as f64, v as f64)
    }

    /// Elementwise (Hadamard) product with a luminance image.
    pub fn normalize(&self, img: &DepthImage) -> Result<NormalizedImage> {
        if img.intrinsics() != &self.intrinsics {
            return Err(Error::Shape("image and weight field use different intrinsics".into()));
        }
        let pixels = self
            .values
            .zip_map(img.pixels(), |&w, &l| (w * f64::from(l)).min(1.0))?;
        Ok(NormalizedImage {
            intrinsics: self.intrinsics.clone(),
            pixels,
        })
    }

    /// Recovers luminances from a normalized image, rounding to the nearest
    /// level and saturating into range.
    pub fn denormalize(&self, img: &NormalizedImage) -> Result<DepthImage> {
        if img.intrinsics() != &self.intrinsics {
            return Err(Error::Shape("image and weight field use different intrinsics".into()));
        }
        let max = f64::from(self.intrinsics.max_luminance());
        let pixels = img
            .pixels()
            .zip_map(&self.values, |&i, &w| (i / w).round().clamp(0.0, max) as u16)?;
        DepthImage::new(self.intrinsics.clone(), pixels)
    }
}

/// Depth image rescaled to the unit interval by the weight field.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedImage {
    intrinsics: CameraIntrinsics,
    pixels: Grid<f64>,
}

impl NormalizedImage {
    pub fn new(intrinsics: CameraIntrinsics, pixels: Grid<f64>) -> Result<Self> {
        if pixels.dims() != (intrinsics.width(), intrinsics.height()) {
            return Err(Error::Shape(format!(
                "{}x{} pixels for a {}x{} camera",
                pixels.width(),
                pixels.height(),
                intrinsics.width(),
                intrinsics.height()
            )));
        }
        if let Some(&bad) = pixels.as_slice().iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::Domain(format!("normalized pixel {bad} outside [0, 1]")));
        }
        Ok(NormalizedImage { intrinsics, pixels })
    }

    pub fn zeros(intrinsics: CameraIntrinsics) -> Self {
        let pixels = Grid::filled(intrinsics.width(), intrinsics.height(), 0.0);
        NormalizedImage { intrinsics, pixels }
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn pixels(&self) -> &Grid<f64> {
        &self.pixels
    }

    pub(crate) fn pixels_mut(&mut self) -> &mut Grid<f64> {
        &mut self.pixels
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        *self.pixels.get(u, v)
    }
}

pub fn build_weight_field(intrinsics: &CameraIntrinsics) -> WeightField {
    WeightField::build(intrinsics)
}

pub fn normalize_image(img: &DepthImage, wf: &WeightField) -> Result<NormalizedImage> {
    wf.normalize(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn luminance_endpoints() {
        let intr = CameraIntrinsics::d435_nominal();
        assert_eq!(intr.luminance_to_depth(0).unwrap(), 0.7);
        assert!(approx(intr.luminance_to_depth(65535).unwrap(), 0.3, 1e-15));
        assert_eq!(intr.depth_to_luminance(0.3).unwrap().value, 65535);
        assert_eq!(intr.depth_to_luminance(0.7).unwrap().value, 0);
    }

    #[test]
    fn luminance_midpoint_value() {
        // (0.3 - 0.7) / 65535 * 32767 + 0.7, evaluated independently.
        let intr = CameraIntrinsics::d435_nominal();
        let z = intr.luminance_to_depth(32767).unwrap();
        assert!(approx(z, 0.500_003_051_8, 1e-9), "{z}");
    }

    #[test]
    fn luminance_out_of_range_is_rejected() {
        let intr = CameraIntrinsics::d435_nominal().with_bit_depth(8).unwrap();
        assert!(intr.luminance_to_depth(255).is_ok());
        assert!(matches!(intr.luminance_to_depth(256), Err(Error::Domain(_))));
    }

    #[test]
    fn depth_clipping_is_flagged() {
        let intr = CameraIntrinsics::d435_nominal();
        let near = intr.depth_to_luminance(0.1).unwrap();
        assert_eq!((near.value, near.clip), (65535, Clip::Near));
        let far = intr.depth_to_luminance(2.0).unwrap();
        assert_eq!((far.value, far.clip), (0, Clip::Far));
        assert_eq!(intr.depth_to_luminance(0.5).unwrap().clip, Clip::InRange);
        assert!(intr.depth_to_luminance(f64::NAN).is_err());
    }

    #[test]
    fn depth_roundtrip_within_half_step() {
        let intr = CameraIntrinsics::d435_nominal().with_bit_depth(10).unwrap();
        let half = intr.depth_step() / 2.0;
        for i in 0..=10_000 {
            let z = 0.3 + 0.4 * f64::from(i) / 10_000.0;
            let l = intr.depth_to_luminance(z).unwrap().value;
            let back = intr.luminance_to_depth(l).unwrap();
            assert!((back - z).abs() <= half * (1.0 + 1e-9), "z={z} back={back}");
        }
    }

    #[test]
    fn principal_point_is_on_axis() {
        let intr = CameraIntrinsics::d435_nominal();
        let p = intr.pixel_to_point(424, 240, 1234).unwrap();
        assert_eq!((p.x, p.y), (0.0, 0.0));
        let proj = intr.point_to_pixel(&Point3::new(0.0, 0.0, 0.45)).unwrap();
        assert_eq!((proj.u, proj.v), (424.0, 240.0));
        assert_eq!(proj.luminance, intr.depth_to_luminance(0.45).unwrap());
    }

    #[test]
    fn nominal_r_bar() {
        let intr = CameraIntrinsics::d435_nominal();
        assert!(approx(intr.r_bar(), 1.568, 1e-3), "{}", intr.r_bar());
        assert_eq!(intr.radial_factor(424.0, 240.0), 1.0);
    }

    #[test]
    fn normalized_coords_at_first_pixel() {
        let intr = CameraIntrinsics::d435_nominal();
        let (x, y) = intr.normalized_coords(1.0, 1.0);
        assert_eq!(x, (1.0 - 424.0) / 415.0);
        assert_eq!(y, (1.0 - 240.0) / 373.0);
    }

    #[test]
    fn radial_factor_is_inverse_cosine_for_square_pixels() {
        let intr = CameraIntrinsics::d435_calibrated();
        for &(u, v) in &[(1usize, 1usize), (848, 480), (100, 400), (421, 243), (700, 20)] {
            let p = intr.pixel_to_point(u, v, 1000).unwrap();
            let cos_alpha = p.z / p.norm();
            assert!(approx(intr.radial_factor(u as f64, v as f64), 1.0 / cos_alpha, 1e-12));
        }
    }

    #[test]
    fn out_of_bounds_pixels() {
        let intr = CameraIntrinsics::d435_nominal();
        assert!(intr.pixel_to_point(0, 1, 0).is_err());
        assert!(intr.pixel_to_point(849, 1, 0).is_err());
        assert!(matches!(
            intr.point_to_pixel(&Point3::new(1.0, 0.0, 0.5)),
            Err(Error::OutOfFrustum { .. })
        ));
        assert!(matches!(intr.point_to_pixel(&Point3::new(0.0, 0.0, 0.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn invalid_intrinsics_rejected() {
        assert!(CameraIntrinsics::new(0, 10, 16, 1.0, 1.0, 1.0, 1.0, 0.3, 0.7).is_err());
        assert!(CameraIntrinsics::new(10, 10, 17, 5.0, 5.0, 1.0, 1.0, 0.3, 0.7).is_err());
        assert!(CameraIntrinsics::new(10, 10, 16, 5.0, 5.0, -1.0, 1.0, 0.3, 0.7).is_err());
        assert!(CameraIntrinsics::new(10, 10, 16, 5.0, 5.0, 1.0, 1.0, 0.7, 0.3).is_err());
        assert!(CameraIntrinsics::new(10, 10, 16, 0.5, 5.0, 1.0, 1.0, 0.3, 0.7).is_err());
    }

    #[test]
    fn workspace_crop_shifts_principal_point() {
        let ws = CameraIntrinsics::d435_workspace();
        assert_eq!((ws.width(), ws.height()), (480, 395));
        assert_eq!((ws.u0(), ws.v0()), (240.0, 198.0));
    }

    #[test]
    fn saturated_image_normalizes_to_ratio() {
        let intr = CameraIntrinsics::new(9, 7, 8, 5.0, 4.0, 6.0, 5.0, 0.3, 0.7).unwrap();
        let wf = WeightField::build(&intr);
        let img = DepthImage::constant(intr.clone(), 255).unwrap();
        let n = wf.normalize(&img).unwrap();
        let mut max: f64 = 0.0;
        for v in 1..=7 {
            for u in 1..=9 {
                let expect = wf.radial(u, v) / wf.r_bar();
                assert!(approx(n.get(u, v), expect, 1e-15));
                max = max.max(n.get(u, v));
            }
        }
        assert_eq!(max, 1.0);
        let zero = wf.normalize(&DepthImage::constant(intr, 0).unwrap()).unwrap();
        assert!(zero.pixels().as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn weight_field_mismatch_is_shape_error() {
        let wf = WeightField::build(&CameraIntrinsics::d435_nominal());
        let img = DepthImage::constant(CameraIntrinsics::d435_calibrated(), 0).unwrap();
        assert!(matches!(wf.normalize(&img), Err(Error::Shape(_))));
    }
}

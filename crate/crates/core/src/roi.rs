//! Image regions touched by an action.
//!
//! An action's effect is confined to an axis-aligned box in the camera
//! frame. [`project_box`] gives the tightest pixel rectangle holding the
//! box's projection; [`project_box_thin`] assumes the box is shallow and
//! gives a rectangle whose size does not depend on the box position, so all
//! instances of one action share a patch shape.
//!
//! Rectangles use inclusive 1-based corners.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::depthcam::{CameraIntrinsics, NormalizedImage, Point3};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Largest `ΔZ / Z` accepted by [`project_box_thin`].
pub const THIN_RATIO_MAX: f64 = 0.25;
/// `ΔZ / Z` above which [`project_box_thin`] logs a warning.
pub const THIN_RATIO_WARN: f64 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfExtents {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl HalfExtents {
    pub fn new(dx: f64, dy: f64, dz: f64) -> Result<Self> {
        if !(dx > 0.0 && dy > 0.0 && dz > 0.0) || ![dx, dy, dz].iter().all(|x| x.is_finite()) {
            return Err(Error::Config(format!("half extents must be positive, got ({dx}, {dy}, {dz})")));
        }
        Ok(HalfExtents { dx, dy, dz })
    }

    pub fn from_mm(dx: f64, dy: f64, dz: f64) -> Result<Self> {
        Self::new(dx / 1000.0, dy / 1000.0, dz / 1000.0)
    }
}

/// `[X-ΔX, X+ΔX] x [Y-ΔY, Y+ΔY] x [Z-ΔZ, Z+ΔZ]`, meters, camera frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectBox {
    pub center: Point3,
    pub half: HalfExtents,
}

impl EffectBox {
    pub fn new(center: Point3, half: HalfExtents) -> Self {
        EffectBox { center, half }
    }

    pub fn x_minus(&self) -> f64 {
        self.center.x - self.half.dx
    }
    pub fn x_plus(&self) -> f64 {
        self.center.x + self.half.dx
    }
    pub fn y_minus(&self) -> f64 {
        self.center.y - self.half.dy
    }
    pub fn y_plus(&self) -> f64 {
        self.center.y + self.half.dy
    }
    pub fn z_minus(&self) -> f64 {
        self.center.z - self.half.dz
    }
    pub fn z_plus(&self) -> f64 {
        self.center.z + self.half.dz
    }

    pub fn corners(&self) -> [Point3; 8] {
        let mut out = [Point3::default(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            *c = Point3::new(
                if i & 1 == 0 { self.x_minus() } else { self.x_plus() },
                if i & 2 == 0 { self.y_minus() } else { self.y_plus() },
                if i & 4 == 0 { self.z_minus() } else { self.z_plus() },
            );
        }
        out
    }
}

/// Inclusive pixel rectangle `[u_min, u_max] x [v_min, v_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoiRect {
    pub u_min: usize,
    pub v_min: usize,
    pub u_max: usize,
    pub v_max: usize,
}

impl RoiRect {
    pub fn new(u_min: usize, v_min: usize, u_max: usize, v_max: usize) -> Result<Self> {
        if u_min == 0 || v_min == 0 || u_min > u_max || v_min > v_max {
            return Err(Error::Shape(format!(
                "degenerate rect ({u_min}, {v_min})-({u_max}, {v_max})"
            )));
        }
        Ok(RoiRect {
            u_min,
            v_min,
            u_max,
            v_max,
        })
    }

    pub fn full(intr: &CameraIntrinsics) -> Self {
        RoiRect {
            u_min: 1,
            v_min: 1,
            u_max: intr.width(),
            v_max: intr.height(),
        }
    }

    /// Columns covered.
    pub fn width(&self) -> usize {
        self.u_max - self.u_min + 1
    }

    /// Rows covered.
    pub fn height(&self) -> usize {
        self.v_max - self.v_min + 1
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        (self.u_min..=self.u_max).contains(&u) && (self.v_min..=self.v_max).contains(&v)
    }

    pub fn contains_rect(&self, other: &RoiRect) -> bool {
        self.u_min <= other.u_min && other.u_max <= self.u_max && self.v_min <= other.v_min && other.v_max <= self.v_max
    }

    pub fn intersects(&self, other: &RoiRect) -> bool {
        self.u_min <= other.u_max && other.u_min <= self.u_max && self.v_min <= other.v_max && other.v_min <= self.v_max
    }

    pub fn ensure_within(&self, intr: &CameraIntrinsics) -> Result<()> {
        if self.u_min == 0 || self.v_min == 0 || self.u_max > intr.width() || self.v_max > intr.height() {
            return Err(Error::Shape(format!(
                "rect ({}, {})-({}, {}) outside {}x{}",
                self.u_min,
                self.v_min,
                self.u_max,
                self.v_max,
                intr.width(),
                intr.height()
            )));
        }
        Ok(())
    }
}

/// A rectangular piece of a normalized image.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub rect: RoiRect,
    pub pixels: Grid<f64>,
}

impl Patch {
    pub fn new(rect: RoiRect, pixels: Grid<f64>) -> Result<Self> {
        if pixels.dims() != (rect.width(), rect.height()) {
            return Err(Error::Shape(format!(
                "{}x{} pixels for a {}x{} rect",
                pixels.width(),
                pixels.height(),
                rect.width(),
                rect.height()
            )));
        }
        Ok(Patch { rect, pixels })
    }
}

fn clamp_px(x: f64, max: usize) -> usize {
    x.round().clamp(1.0, max as f64) as usize
}

fn check_depth(b: &EffectBox) -> Result<()> {
    if !(b.z_minus() > 0.0) {
        return Err(Error::Domain(format!("box near face at Z = {} is not in front of the camera", b.z_minus())));
    }
    Ok(())
}

/// Tightest rectangle holding the box, from the sign of each face
/// coordinate: a face on the negative side of the axis is widest on the near
/// plane, a face on the positive side on the far plane (and vice versa for
/// the far edge). Rounded to nearest, then clamped into the image.
pub fn project_box(intr: &CameraIntrinsics, b: &EffectBox) -> Result<RoiRect> {
    check_depth(b)?;
    let (zn, zf) = (b.z_minus(), b.z_plus());
    let lo = |c: f64| if c >= 0.0 { zf } else { zn };
    let hi = |c: f64| if c >= 0.0 { zn } else { zf };
    let (xm, xp, ym, yp) = (b.x_minus(), b.x_plus(), b.y_minus(), b.y_plus());
    Ok(RoiRect {
        u_min: clamp_px(intr.fx() * xm / lo(xm) + intr.u0(), intr.width()),
        v_min: clamp_px(intr.fy() * ym / lo(ym) + intr.v0(), intr.height()),
        u_max: clamp_px(intr.fx() * xp / hi(xp) + intr.u0(), intr.width()),
        v_max: clamp_px(intr.fy() * yp / hi(yp) + intr.v0(), intr.height()),
    })
}

/// Smallest even integer not below `x` (at least 2).
fn even_ceil(x: f64) -> usize {
    let c = x.ceil().max(2.0) as usize;
    c + (c & 1)
}

/// Patch size `(columns, rows)` of an action at depth `z`: `2 f ΔX / Z`
/// rounded up to an even count.
pub fn thin_patch_size(intr: &CameraIntrinsics, half: &HalfExtents, z: f64) -> (usize, usize) {
    (
        even_ceil(2.0 * intr.fx() * half.dx / z),
        even_ceil(2.0 * intr.fy() * half.dy / z),
    )
}

/// Rectangle under the shallow-box approximation `Z- ≈ Z+ ≈ Z`. The top-left
/// corner is the rounded projection of `(X-, Y-)`; the size comes from
/// [`thin_patch_size`]. Errors rather than clamps when the rectangle leaves
/// the image, since clamping would change the shape.
pub fn project_box_thin(intr: &CameraIntrinsics, b: &EffectBox) -> Result<RoiRect> {
    check_depth(b)?;
    let z = b.center.z;
    let ratio = b.half.dz / z;
    if ratio > THIN_RATIO_MAX {
        return Err(Error::Precondition(format!(
            "ΔZ/Z = {ratio:.3} exceeds {THIN_RATIO_MAX} for the thin-box projection"
        )));
    }
    if ratio > THIN_RATIO_WARN {
        log::warn!("thin-box projection with ΔZ/Z = {ratio:.3}; expect a loose rectangle");
    }
    let (w, h) = thin_patch_size(intr, &b.half, z);
    let u = (intr.fx() * b.x_minus() / z + intr.u0()).round();
    let v = (intr.fy() * b.y_minus() / z + intr.v0()).round();
    if u < 1.0 || v < 1.0 || u + (w - 1) as f64 > intr.width() as f64 || v + (h - 1) as f64 > intr.height() as f64 {
        return Err(Error::Infeasible(format!(
            "{w}x{h} rectangle at ({u}, {v}) leaves the {}x{} image",
            intr.width(),
            intr.height()
        )));
    }
    let (u, v) = (u as usize, v as usize);
    RoiRect::new(u, v, u + w - 1, v + h - 1)
}

/// Upper bound on `|thin - exact|` for any rectangle coordinate: one pixel
/// for each rounding, one for the even size, plus the perspective shift
/// `fx max|X±| ΔZ / (Z Z-)` (and the `y` analogue).
pub fn thin_projection_bound(intr: &CameraIntrinsics, b: &EffectBox) -> usize {
    let z = b.center.z;
    let zn = b.z_minus();
    let sx = intr.fx() * b.x_minus().abs().max(b.x_plus().abs()) * b.half.dz / (z * zn);
    let sy = intr.fy() * b.y_minus().abs().max(b.y_plus().abs()) * b.half.dz / (z * zn);
    sx.max(sy).ceil() as usize + 2
}

/// Interval of admissible box centres along one axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PositionRange {
    pub x: Range,
    pub y: Range,
}

impl PositionRange {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.x.contains(x) && self.y.contains(y)
    }
}

/// Centres `(X, Y)` at depth `z` for which the whole box projects inside the
/// image, so [`project_box`] never clamps.
///
/// A face on the negative side of an axis projects farthest out from the
/// near plane `Z-`, so both bounds use `Z-`.
pub fn valid_position_range(intr: &CameraIntrinsics, half: &HalfExtents, z: f64) -> Result<PositionRange> {
    let zn = z - half.dz;
    if !(zn > 0.0) {
        return Err(Error::Domain(format!("box near face at Z = {zn} is not in front of the camera")));
    }
    let axis = |c0: f64, f: f64, n: usize, d: f64, name: &str| {
        let r = Range {
            lo: (1.0 - c0) * zn / f + d,
            hi: (n as f64 - c0) * zn / f - d,
        };
        if r.lo > r.hi {
            return Err(Error::Infeasible(format!(
                "box too large for the frame along {name}: [{:.4}, {:.4}]",
                r.lo, r.hi
            )));
        }
        Ok(r)
    };
    Ok(PositionRange {
        x: axis(intr.u0(), intr.fx(), intr.width(), half.dx, "X")?,
        y: axis(intr.v0(), intr.fy(), intr.height(), half.dy, "Y")?,
    })
}

pub fn extract_patch(img: &NormalizedImage, rect: &RoiRect) -> Result<Patch> {
    rect.ensure_within(img.intrinsics())?;
    let src = img.pixels();
    let mut data = Vec::with_capacity(rect.width() * rect.height());
    for v in rect.v_min..=rect.v_max {
        data.extend_from_slice(&src.row(v)[rect.u_min - 1..rect.u_max]);
    }
    Patch::new(*rect, Grid::from_vec(rect.width(), rect.height(), data)?)
}

/// Image with `patch` written into its rect; values are clamped to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Injected {
    pub image: NormalizedImage,
    /// Patch pixels that had to be clamped.
    pub saturated: usize,
}

pub fn inject_patch(img: &NormalizedImage, patch: &Patch) -> Result<Injected> {
    let rect = &patch.rect;
    rect.ensure_within(img.intrinsics())?;
    if patch.pixels.dims() != (rect.width(), rect.height()) {
        return Err(Error::Shape("patch does not match its rect".into()));
    }
    if patch.pixels.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("non-finite patch value".into()));
    }
    let mut out = img.clone();
    let mut saturated = 0;
    let w = img.intrinsics().width();
    let dst = out.pixels_mut().as_mut_slice();
    for (r, src) in patch.pixels.rows().enumerate() {
        let start = (rect.v_min - 1 + r) * w + rect.u_min - 1;
        for (d, &s) in dst[start..start + rect.width()].iter_mut().zip(src) {
            let c = s.clamp(0.0, 1.0);
            saturated += usize::from(c != s);
            *d = c;
        }
    }
    Ok(Injected { image: out, saturated })
}

/// One action type as stored in an actions file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpec {
    pub name: String,
    pub dx_mm: f64,
    pub dy_mm: f64,
    pub dz_mm: f64,
    /// Centres `[X, Y, Z]` in millimetres, camera frame.
    pub positions: Vec<[f64; 3]>,
}

impl ActionSpec {
    pub fn half_extents(&self) -> Result<HalfExtents> {
        HalfExtents::from_mm(self.dx_mm, self.dy_mm, self.dz_mm)
    }

    pub fn position(&self, j: usize) -> Option<Point3> {
        self.positions
            .get(j)
            .map(|p| Point3::new(p[0] / 1000.0, p[1] / 1000.0, p[2] / 1000.0))
    }

    pub fn effect_box(&self, j: usize) -> Result<EffectBox> {
        let t = self
            .position(j)
            .ok_or_else(|| Error::Config(format!("{} has no position {j}", self.name)))?;
        Ok(EffectBox::new(t, self.half_extents()?))
    }
}

pub fn parse_actions(json: &str) -> Result<Vec<ActionSpec>> {
    let specs: Vec<ActionSpec> = serde_json::from_str(json)?;
    validate_actions(&specs)?;
    Ok(specs)
}

pub fn validate_actions(specs: &[ActionSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Config("empty action set".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.name.is_empty() {
            return Err(Error::Config(format!("action {i} has an empty name")));
        }
        if specs[..i].iter().any(|o| o.name == s.name) {
            return Err(Error::Config(format!("duplicate action name {:?}", s.name)));
        }
        s.half_extents()?;
        if let Some(p) = s.positions.iter().find(|p| !p.iter().all(|x| x.is_finite()) || !(p[2] > 0.0)) {
            return Err(Error::Config(format!("{}: invalid position {p:?}", s.name)));
        }
    }
    Ok(())
}

pub fn load_actions(path: &Path) -> Result<Vec<ActionSpec>> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_actions(&s)
}

pub fn actions_to_json(specs: &[ActionSpec]) -> String {
    serde_json::to_string_pretty(specs).expect("plain structs serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Bounding rectangle of the eight projected corners, rounded and clamped
    /// the same way as the face rules.
    fn corner_oracle(intr: &CameraIntrinsics, b: &EffectBox) -> RoiRect {
        let (mut umin, mut umax, mut vmin, mut vmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for c in b.corners() {
            let u = intr.fx() * c.x / c.z + intr.u0();
            let v = intr.fy() * c.y / c.z + intr.v0();
            umin = umin.min(u);
            umax = umax.max(u);
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
        RoiRect {
            u_min: clamp_px(umin, intr.width()),
            v_min: clamp_px(vmin, intr.height()),
            u_max: clamp_px(umax, intr.width()),
            v_max: clamp_px(vmax, intr.height()),
        }
    }

    fn boxed(x: f64, y: f64, z: f64, dx: f64, dy: f64, dz: f64) -> EffectBox {
        EffectBox::new(Point3::new(x, y, z), HalfExtents::new(dx, dy, dz).unwrap())
    }

    #[test]
    fn centred_box_is_centred() {
        let intr = CameraIntrinsics::d435_calibrated();
        let r = project_box(&intr, &boxed(0.0, 0.0, 0.45, 0.02, 0.02, 0.05)).unwrap();
        assert_eq!(r.u_min + r.u_max, 2 * 421);
        assert_eq!(r.v_min + r.v_max, 2 * 243);
    }

    #[test]
    fn face_depth_depends_on_side() {
        let intr = CameraIntrinsics::d435_calibrated();
        // Entirely on the negative side: the left edge comes from the near plane.
        let neg = boxed(-0.15, -0.1, 0.45, 0.02, 0.02, 0.05);
        let r = project_box(&intr, &neg).unwrap();
        assert_eq!(r.u_min, (433.0 * -0.17 / 0.40 + 421.0f64).round() as usize);
        // Entirely on the positive side: the left edge comes from the far plane.
        let pos = boxed(0.15, 0.1, 0.45, 0.02, 0.02, 0.05);
        let r = project_box(&intr, &pos).unwrap();
        assert_eq!(r.u_min, (433.0 * 0.13 / 0.50 + 421.0f64).round() as usize);
        assert_eq!(r.v_min, (433.0 * 0.08 / 0.50 + 243.0f64).round() as usize);
    }

    #[test]
    fn poke_thin_size() {
        let intr = CameraIntrinsics::d435_calibrated();
        // 2 * 433 * 0.022 / 0.45 = 42.34 -> 43 -> even 44; 2 * 433 * 0.018 / 0.45 = 34.64 -> 36.
        let half = HalfExtents::from_mm(22.0, 18.0, 50.0).unwrap();
        assert_eq!(thin_patch_size(&intr, &half, 0.45), (44, 36));
        let r = project_box_thin(&intr, &EffectBox::new(Point3::new(0.0, 0.0, 0.45), half)).unwrap();
        assert_eq!((r.width(), r.height()), (44, 36));
    }

    #[test]
    fn thin_ratio_bound_enforced() {
        let intr = CameraIntrinsics::d435_calibrated();
        assert!(matches!(
            project_box_thin(&intr, &boxed(0.0, 0.0, 0.4, 0.01, 0.01, 0.11)),
            Err(Error::Precondition(_))
        ));
        assert!(project_box_thin(&intr, &boxed(0.0, 0.0, 0.4, 0.01, 0.01, 0.07)).is_ok());
        assert!(project_box(&intr, &boxed(0.0, 0.0, 0.04, 0.01, 0.01, 0.05)).is_err());
    }

    #[test]
    fn grasp_range_is_narrower_than_poke() {
        let intr = CameraIntrinsics::d435_calibrated();
        let grasp = valid_position_range(&intr, &HalfExtents::from_mm(218.0, 195.0, 50.0).unwrap(), 0.45).unwrap();
        let poke = valid_position_range(&intr, &HalfExtents::from_mm(22.0, 18.0, 50.0).unwrap(), 0.45).unwrap();
        assert!(grasp.x.len() < poke.x.len() && grasp.y.len() < poke.y.len());
        assert!(poke.x.lo < grasp.x.lo && grasp.x.hi < poke.x.hi);
        let huge = HalfExtents::from_mm(400.0, 10.0, 50.0).unwrap();
        assert!(matches!(valid_position_range(&intr, &huge, 0.45), Err(Error::Infeasible(_))));
    }

    #[test]
    fn tiny_box_range_spans_frustum_section() {
        let intr = CameraIntrinsics::new(101, 51, 16, 51.0, 26.0, 100.0, 100.0, 0.3, 0.7).unwrap();
        let r = valid_position_range(&intr, &HalfExtents::new(1e-9, 1e-9, 1e-9).unwrap(), 0.5).unwrap();
        assert!((r.x.lo + 0.25).abs() < 1e-6 && (r.x.hi - 0.25).abs() < 1e-6);
        assert!((r.y.lo + 0.125).abs() < 1e-6 && (r.y.hi - 0.125).abs() < 1e-6);
    }

    #[test]
    fn extract_inject_roundtrip() {
        let intr = CameraIntrinsics::new(20, 10, 16, 10.0, 5.0, 20.0, 20.0, 0.3, 0.7).unwrap();
        let px = Grid::from_fn(20, 10, |u, v| (u * 10 + v) as f64 / 300.0);
        let img = NormalizedImage::new(intr.clone(), px).unwrap();
        let rect = RoiRect::new(3, 2, 9, 6).unwrap();
        let p = extract_patch(&img, &rect).unwrap();
        assert_eq!(*p.pixels.get(1, 1), *img.pixels().get(3, 2));
        let back = inject_patch(&img, &p).unwrap();
        assert_eq!((back.image, back.saturated), (img.clone(), 0));
        let full = extract_patch(&img, &RoiRect::full(&intr)).unwrap();
        assert_eq!(&full.pixels, img.pixels());
        assert!(extract_patch(&img, &RoiRect::new(15, 1, 21, 3).unwrap()).is_err());
    }

    #[test]
    fn inject_clamps_and_counts() {
        let intr = CameraIntrinsics::new(4, 4, 8, 2.0, 2.0, 4.0, 4.0, 0.3, 0.7).unwrap();
        let img = NormalizedImage::zeros(intr);
        let rect = RoiRect::new(2, 2, 3, 3).unwrap();
        let patch = Patch::new(rect, Grid::from_vec(2, 2, vec![1.5, 0.5, -0.1, 1.0]).unwrap()).unwrap();
        let out = inject_patch(&img, &patch).unwrap();
        assert_eq!(out.saturated, 2);
        assert_eq!(out.image.get(2, 2), 1.0);
        assert_eq!(out.image.get(2, 3), 0.0);
        assert_eq!(out.image.get(3, 2), 0.5);
        assert_eq!(out.image.get(1, 1), 0.0);
    }

    #[test]
    fn actions_json_roundtrip_and_validation() {
        let json = r#"[{"name":"poke","dx_mm":22,"dy_mm":18,"dz_mm":50,"positions":[[0,0,450]]}]"#;
        let specs = parse_actions(json).unwrap();
        assert_eq!(specs[0].position(0), Some(Point3::new(0.0, 0.0, 0.45)));
        assert_eq!(parse_actions(&actions_to_json(&specs)).unwrap(), specs);
        assert!(parse_actions("[]").is_err());
        assert!(parse_actions(r#"[{"name":"a","dx_mm":-1,"dy_mm":1,"dz_mm":1,"positions":[]}]"#).is_err());
        assert!(parse_actions(r#"[{"name":"a","dx_mm":1,"dy_mm":1,"dz_mm":1,"positions":[],"x":1}]"#).is_err());
    }

    fn any_box() -> impl Strategy<Value = EffectBox> {
        (-0.3f64..0.3, -0.2f64..0.2, 0.35f64..0.6, 0.001f64..0.15, 0.001f64..0.15, 0.0f64..1.0).prop_map(
            |(x, y, z, dx, dy, frac)| boxed(x, y, z, dx, dy, (frac * 0.25 * z).max(1e-6)),
        )
    }

    proptest! {
        #[test]
        fn face_rules_match_corner_oracle(b in any_box()) {
            let intr = CameraIntrinsics::d435_calibrated();
            prop_assert_eq!(project_box(&intr, &b).unwrap(), corner_oracle(&intr, &b));
        }

        #[test]
        fn thin_shape_is_position_invariant(x in -0.1f64..0.1, y in -0.05f64..0.05) {
            let intr = CameraIntrinsics::d435_calibrated();
            let a = project_box_thin(&intr, &boxed(x, y, 0.45, 0.03, 0.02, 0.05)).unwrap();
            let b = project_box_thin(&intr, &boxed(0.0, 0.0, 0.45, 0.03, 0.02, 0.05)).unwrap();
            prop_assert_eq!((a.width(), a.height()), (b.width(), b.height()));
        }

        #[test]
        fn thin_close_to_exact(x in -0.15f64..0.15, y in -0.1f64..0.1, dx in 0.005f64..0.08, dy in 0.005f64..0.08, dz in 0.0f64..0.1) {
            let intr = CameraIntrinsics::d435_calibrated();
            let b = boxed(x, y, 0.45, dx, dy, dz.max(1e-9));
            if let Ok(thin) = project_box_thin(&intr, &b) {
                let exact = project_box(&intr, &b).unwrap();
                let bound = thin_projection_bound(&intr, &b);
                for (t, e) in [(thin.u_min, exact.u_min), (thin.u_max, exact.u_max), (thin.v_min, exact.v_min), (thin.v_max, exact.v_max)] {
                    prop_assert!(t.abs_diff(e) <= bound, "{:?} vs {:?}, bound {}", thin, exact, bound);
                }
            }
        }

        #[test]
        fn interior_positions_never_clamp(fx in 0.0f64..1.0, fy in 0.0f64..1.0) {
            let intr = CameraIntrinsics::d435_calibrated();
            let half = HalfExtents::from_mm(84.0, 75.0, 50.0).unwrap();
            let r = valid_position_range(&intr, &half, 0.45).unwrap();
            let (x, y) = (r.x.lo + fx * r.x.len(), r.y.lo + fy * r.y.len());
            let b = EffectBox::new(Point3::new(x, y, 0.45), half);
            let unclamped = corner_oracle(&CameraIntrinsics::new(100_000, 100_000, 16, 421.0, 243.0, 433.0, 433.0, 0.3, 0.7).unwrap(), &b);
            prop_assert_eq!(project_box(&intr, &b).unwrap(), unclamped);
        }
    }
}

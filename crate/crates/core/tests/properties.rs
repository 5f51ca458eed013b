//! Cross-module invariants as property tests.

use moldkit::metric::distance;
use moldkit::roi::{inject_patch, Patch, RoiRect};
use moldkit::{CameraIntrinsics, DepthImage, Grid, NormalizedImage, WeightField};
use proptest::prelude::*;

fn camera() -> impl Strategy<Value = CameraIntrinsics> {
    (2usize..24, 2usize..24, 1u8..=16, 0.0f64..1.0, 0.0f64..1.0, 5.0f64..900.0, 5.0f64..900.0, 0.05f64..2.0, 0.01f64..3.0)
        .prop_map(|(w, h, b, fu, fv, fx, fy, zmin, span)| {
            let u0 = 1.0 + fu * (w - 1) as f64;
            let v0 = 1.0 + fv * (h - 1) as f64;
            CameraIntrinsics::new(w, h, b, u0, v0, fx, fy, zmin, zmin + span).unwrap()
        })
}

fn camera_and_image() -> impl Strategy<Value = (CameraIntrinsics, Vec<u16>, Vec<u16>)> {
    camera().prop_flat_map(|c| {
        let n = c.pixel_count();
        let max = c.max_luminance();
        (
            Just(c),
            proptest::collection::vec(0..=max, n),
            proptest::collection::vec(0..=max, n),
        )
    })
}

fn image(c: &CameraIntrinsics, px: Vec<u16>) -> DepthImage {
    DepthImage::new(c.clone(), Grid::from_vec(c.width(), c.height(), px).unwrap()).unwrap()
}

proptest! {
    #[test]
    fn pixel_point_mapping_is_bijective((c, px, _) in camera_and_image()) {
        let img = image(&c, px);
        for v in 1..=c.height() {
            for u in 1..=c.width() {
                let l = img.get(u, v);
                let p = c.pixel_to_point(u, v, l).unwrap();
                prop_assert!(p.z >= c.z_min() - 1e-12 && p.z <= c.z_max() + 1e-12);
                let back = c.point_to_pixel(&p).unwrap();
                prop_assert!((back.u - u as f64).abs() < 1e-9 && (back.v - v as f64).abs() < 1e-9);
                prop_assert_eq!(back.luminance.value, l);
            }
        }
    }

    #[test]
    fn distinct_pixels_lie_on_distinct_rays((c, px, _) in camera_and_image()) {
        let pts = image(&c, px).to_points();
        for (i, p) in pts.iter().enumerate() {
            for q in &pts[i + 1..] {
                let k = p.z / q.z;
                let same_ray = (p.x - k * q.x).abs() < 1e-12 && (p.y - k * q.y).abs() < 1e-12;
                prop_assert!(!same_ray, "{:?} and {:?}", p, q);
            }
        }
    }

    #[test]
    fn luminance_depth_monotone(c in camera(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let max = c.max_luminance();
        let (la, lb) = ((a * f64::from(max)) as u16, (b * f64::from(max)) as u16);
        if la < lb {
            prop_assert!(c.luminance_to_depth(la).unwrap() > c.luminance_to_depth(lb).unwrap());
        }
        let span = c.z_max() - c.z_min();
        let (za, zb) = (c.z_min() + a * span, c.z_min() + b * span);
        if za < zb {
            prop_assert!(c.depth_to_luminance(za).unwrap().value >= c.depth_to_luminance(zb).unwrap().value);
        }
    }

    #[test]
    fn weight_field_is_point_symmetric(c in camera()) {
        let wf = WeightField::build(&c);
        let inv_max = 1.0 / f64::from(c.max_luminance());
        for v in 1..=c.height() {
            for u in 1..=c.width() {
                prop_assert!(wf.radial(u, v) >= 1.0);
                let w = *wf.values().get(u, v);
                prop_assert!(w > 0.0 && w <= inv_max * (1.0 + 1e-15));
                let (mu, mv) = (2.0 * c.u0() - u as f64, 2.0 * c.v0() - v as f64);
                if mu.fract() == 0.0 && mv.fract() == 0.0 && c.contains_pixel(mu as usize, mv as usize) && mu >= 1.0 && mv >= 1.0 {
                    prop_assert_eq!(wf.radial(u, v), wf.radial(mu as usize, mv as usize));
                }
            }
        }
        let corners = [(1, 1), (c.width(), 1), (1, c.height()), (c.width(), c.height())];
        let best = corners.iter().map(|&(u, v)| wf.radial(u, v)).fold(0.0, f64::max);
        prop_assert_eq!(best, wf.r_bar());
    }

    #[test]
    fn depth_range_scales_meters_only((c, pa, pb) in camera_and_image(), k in 0.2f64..5.0) {
        let scaled = c.with_depth_range(c.z_min(), c.z_min() + k * (c.z_max() - c.z_min())).unwrap();
        let d = |cam: &CameraIntrinsics| {
            let wf = WeightField::build(cam);
            let a = wf.normalize(&image(cam, pa.clone())).unwrap();
            let b = wf.normalize(&image(cam, pb.clone())).unwrap();
            distance(&a, &b).unwrap()
        };
        let (x, y) = (d(&c), d(&scaled));
        prop_assert_eq!(x.d_unit, y.d_unit);
        prop_assert!((y.d_meters - k * x.d_meters).abs() <= 1e-12 * x.d_meters.max(1e-300));
    }

    #[test]
    fn injection_changes_only_the_rect(
        (c, px, _) in camera_and_image(),
        fu in 0.0f64..1.0, fv in 0.0f64..1.0, fw in 0.0f64..1.0, fh in 0.0f64..1.0,
        fill in -0.5f64..1.5,
    ) {
        let img = WeightField::build(&c).normalize(&image(&c, px)).unwrap();
        let u0 = 1 + (fu * (c.width() - 1) as f64) as usize;
        let v0 = 1 + (fv * (c.height() - 1) as f64) as usize;
        let u1 = u0 + (fw * (c.width() - u0) as f64) as usize;
        let v1 = v0 + (fh * (c.height() - v0) as f64) as usize;
        let rect = RoiRect::new(u0, v0, u1, v1).unwrap();
        let patch = Patch::new(rect, Grid::filled(rect.width(), rect.height(), fill)).unwrap();
        let out = inject_patch(&img, &patch).unwrap();
        for v in 1..=c.height() {
            for u in 1..=c.width() {
                if rect.contains(u, v) {
                    prop_assert_eq!(out.image.get(u, v), fill.clamp(0.0, 1.0));
                } else {
                    prop_assert_eq!(out.image.get(u, v).to_bits(), img.get(u, v).to_bits());
                }
            }
        }
        let expected = if (0.0..=1.0).contains(&fill) { 0 } else { rect.width() * rect.height() };
        prop_assert_eq!(out.saturated, expected);
        let _: &NormalizedImage = &out.image;
    }
}

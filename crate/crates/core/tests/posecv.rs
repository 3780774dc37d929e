mod common;

use std::collections::BTreeSet;

use common::*;
use proptest::prelude::*;
use tubeloc::evalbench::orientation_error;
use tubeloc::imgcore::{crop, BoundingBox, Crop, GrayImage};
use tubeloc::posecv::*;
use tubeloc::synth::{render_tube, TubeSpec};

fn tube_crop(center: (f64, f64), length: f64, angle: f64, margin: f64) -> (Crop, Point2<f64>, TubeSpec) {
    let mut img = GrayImage::filled(300, 300, 60);
    let t = TubeSpec { center: Point2::new(center.0, center.1), length, diameter: 12.0, angle_deg: angle, intensity: 200 };
    render_tube(&mut img, &t);
    let b = t.bounding_box();
    let c = crop(&img, &BoundingBox::new(b.x - margin, b.y - margin, b.w + 2.0 * margin, b.h + 2.0 * margin)).unwrap();
    let (lx, ly) = c.to_local(t.center.x, t.center.y);
    (c, Point2::new(lx, ly), t)
}

fn seg_distance(p: Point2<f64>, a: (i32, i32), b: (i32, i32)) -> f64 {
    let (ax, ay, bx, by) = (a.0 as f64, a.1 as f64, b.0 as f64, b.1 as f64);
    let (ex, ey) = (bx - ax, by - ay);
    let len2 = ex * ex + ey * ey;
    let t = if len2 == 0.0 { 0.0 } else { (((p.x - ax) * ex + (p.y - ay) * ey) / len2).clamp(0.0, 1.0) };
    (p.x - ax - t * ex).hypot(p.y - ay - t * ey)
}

#[test]
fn kernels_match_direct_evaluation_on_random_images() {
    let mut r = rng(11);
    for case in 0..60 {
        let (w, h) = (5 + case % 12, 5 + (case * 7) % 12);
        let img = random_image(&mut r, w, h);
        let blur = gaussian_blur(&img).image;
        let oracle = blur_naive(&img);
        let worst = blur.pixels().iter().zip(oracle.pixels()).map(|(a, b)| (*a as i32 - *b as i32).abs()).max().unwrap();
        assert!(worst <= 1, "blur off by {worst}");
        assert_eq!(sobel_magnitude(&img).unwrap(), sobel_naive(&img));
        let m = adaptive_mean_threshold(&img, 15, 5).unwrap();
        let expected = threshold_naive(&img, 15, 5);
        for y in 0..h {
            for x in 0..w {
                assert_eq!(m.get(x, y), expected[y * w + x]);
            }
        }
    }
}

#[test]
fn contours_match_component_oracle() {
    let mut r = rng(12);
    for _ in 0..80 {
        let m = random_mask(&mut r, 16, 16);
        let mut got: Vec<BTreeSet<(i32, i32)>> = find_contours(&m).iter().map(|c| c.enclosed.iter().copied().collect()).collect();
        let mut want = enclosed_sets_naive(&m);
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }
}

#[test]
fn contour_points_are_closed_8_paths_on_the_component() {
    let mut r = rng(13);
    for _ in 0..40 {
        let m = random_mask(&mut r, 16, 16);
        for c in find_contours(&m) {
            assert!(c.points.len() >= 3);
            for k in 0..c.points.len() {
                let (a, b) = (c.points[k], c.points[(k + 1) % c.points.len()]);
                assert!((a.0 - b.0).abs() <= 1 && (a.1 - b.1).abs() <= 1);
                assert!(m.get(a.0 as usize, a.1 as usize));
            }
        }
    }
}

#[test]
fn single_square_contour() {
    let m = BinaryMask::from_fn(5, 5, |x, y| (1..=3).contains(&x) && (1..=3).contains(&y));
    let c = find_contours(&m);
    assert_eq!(c.len(), 1);
    assert_eq!(c[0].points.len(), 8);
    assert_eq!(c[0].moments.centroid(), Point2::new(2.0, 2.0));
    let two = BinaryMask::from_fn(12, 5, |x, y| (1..=3).contains(&y) && ((1..=3).contains(&x) || (7..=9).contains(&x)));
    assert_eq!(find_contours(&two).len(), 2);
}

#[test]
fn rendered_tube_mask_forms_closed_band() {
    let (c, centroid, _) = tube_crop((150.0, 150.0), 80.0, 30.0, 12.0);
    let mask = binarize_tube_region(&c.image, 15, 5).unwrap();
    let contours = find_contours(&mask);
    let sel = select_tube_contour(&contours, centroid).unwrap();
    assert!(!sel.degraded, "band around the tube must enclose its centre");
    // the centre itself is background inside the band: the band is a ring
    let (cx, cy) = (centroid.x.round() as usize, centroid.y.round() as usize);
    assert!(!mask.get(cx, cy));
}

#[test]
fn constant_and_blank_crops_fail_with_stage_tag() {
    let blank = Crop { image: GrayImage::filled(40, 40, 90), offset_x: 0, offset_y: 0 };
    let e = estimate_pose_2d(&blank, Point2::new(20.0, 20.0), &PoseParams::default()).unwrap_err();
    assert_eq!(e.stage(), "contours");
    assert!(e.to_string().contains("[contours]"));
}

#[test]
fn rotated_rectangle_contour_orientation() {
    let (c, centroid, t) = tube_crop((150.0, 150.0), 10.0 * 8.0, 30.0, 10.0);
    let p = estimate_pose_2d(&c, centroid, &PoseParams::default()).unwrap();
    assert!(orientation_error(p.orientation_deg, t.angle_deg) <= 0.5, "{}", p.orientation_deg);
}

#[test]
fn endpoints_lie_on_selected_contour() {
    for angle in [0.0, 20.0, 65.0, 90.0, 133.0] {
        let (c, centroid, _) = tube_crop((150.2, 149.7), 90.0, angle, 10.0);
        let (trace, res) = estimate_pose_traced(&c, centroid, &PoseParams::default()).unwrap();
        let pose = res.unwrap();
        let contour = &trace.contours[trace.selection.unwrap().index];
        for e in pose.endpoints {
            let local = Point2::new(e.x - c.offset_x as f64, e.y - c.offset_y as f64);
            let d = contour.segments().map(|(a, b)| seg_distance(local, a, b)).fold(f64::INFINITY, f64::min);
            assert!(d < 0.5, "endpoint {d} px off the contour");
        }
        // centroid between the endpoints, on the line
        let [a, b] = pose.endpoints;
        let (dx, dy) = ((b.x - a.x) / a.distance(b), (b.y - a.y) / a.distance(b));
        let lateral = ((pose.centroid.x - a.x) * dy - (pose.centroid.y - a.y) * dx).abs();
        assert!(lateral < 2.0);
    }
}

#[test]
fn orientation_is_fold_invariant_under_half_turn() {
    for angle in [10.0, 45.0, 100.0, 170.0] {
        let (c, centroid, _) = tube_crop((150.0, 150.0), 70.0, angle, 10.0);
        let (w, h) = (c.image.width(), c.image.height());
        let rotated = Crop {
            image: GrayImage::from_fn(w, h, |x, y| c.image.get(w - 1 - x, h - 1 - y)),
            offset_x: 0,
            offset_y: 0,
        };
        let rc = Point2::new((w - 1) as f64 - centroid.x, (h - 1) as f64 - centroid.y);
        let a = estimate_pose_2d(&c, centroid, &PoseParams::default()).unwrap();
        let b = estimate_pose_2d(&rotated, rc, &PoseParams::default()).unwrap();
        assert!(orientation_error(a.orientation_deg, b.orientation_deg) < 0.5);
    }
}

#[test]
fn pose_is_translation_equivariant() {
    let params = PoseParams::default();
    for (dx, dy) in [(3i32, 0i32), (-4, 7), (5, -2)] {
        let base = (150.0, 150.0);
        let mut a = GrayImage::filled(300, 300, 60);
        let mut b = GrayImage::filled(300, 300, 60);
        let t = TubeSpec { center: Point2::new(base.0, base.1), length: 70.0, diameter: 12.0, angle_deg: 37.0, intensity: 200 };
        let moved = TubeSpec { center: Point2::new(base.0 + dx as f64, base.1 + dy as f64), ..t };
        render_tube(&mut a, &t);
        render_tube(&mut b, &moved);
        let window = BoundingBox::new(90.0, 100.0, 120.0, 100.0);
        let (ca, cb) = (crop(&a, &window).unwrap(), crop(&b, &window).unwrap());
        let la = ca.to_local(t.center.x, t.center.y);
        let lb = cb.to_local(moved.center.x, moved.center.y);
        let pa = estimate_pose_2d(&ca, Point2::new(la.0, la.1), &params).unwrap();
        let pb = estimate_pose_2d(&cb, Point2::new(lb.0, lb.1), &params).unwrap();
        for k in 0..2 {
            assert!((pb.endpoints[k].x - pa.endpoints[k].x - dx as f64).abs() < 1e-9);
            assert!((pb.endpoints[k].y - pa.endpoints[k].y - dy as f64).abs() < 1e-9);
        }
        assert!((pa.orientation_deg - pb.orientation_deg).abs() < 1e-9);
    }
}

#[test]
fn fixture_sweep_subset() {
    for length in [40.0, 120.0] {
        for k in 0..12 {
            let angle = 15.0 * k as f64;
            let (c, centroid, _) = tube_crop((150.3, 149.6), length, angle, 10.0);
            let p = estimate_pose_2d(&c, centroid, &PoseParams::default()).unwrap();
            assert!(orientation_error(p.orientation_deg, angle) <= 2.0, "{length} {angle}: {}", p.orientation_deg);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn selection_encloses_or_is_nearest(seed in 0u64..10_000, px in 0.0f64..16.0, py in 0.0f64..16.0) {
        let mut r = rng(seed);
        let m = random_mask(&mut r, 16, 16);
        let contours = find_contours(&m);
        let p = Point2::new(px, py);
        match select_tube_contour(&contours, p) {
            Err(_) => prop_assert!(contours.is_empty()),
            Ok(sel) => {
                let chosen = &contours[sel.index];
                let d = chosen.moments.centroid().distance(p);
                if sel.degraded {
                    prop_assert!(contours.iter().all(|c| !point_in_polygon(&c.points, p)));
                    prop_assert!(contours.iter().all(|c| c.moments.centroid().distance(p) >= d));
                } else {
                    prop_assert!(point_in_polygon(&chosen.points, p));
                    prop_assert!(contours.iter().filter(|c| point_in_polygon(&c.points, p)).all(|c| c.moments.centroid().distance(p) >= d));
                }
            }
        }
    }

    #[test]
    fn threshold_ignores_brightness_offset(seed in 0u64..10_000, shift in 0u8..40) {
        let mut r = rng(seed);
        let img = GrayImage::from_fn(16, 16, |_, _| rand::Rng::gen_range(&mut r, 0u8..200));
        let shifted = GrayImage::from_fn(16, 16, |x, y| img.get(x, y) + shift);
        prop_assert_eq!(adaptive_mean_threshold(&img, 15, 5).unwrap(), adaptive_mean_threshold(&shifted, 15, 5).unwrap());
    }

    #[test]
    fn line_fit_direction_is_unit_and_canonical(pts in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..40)) {
        let pts: Vec<_> = pts.into_iter().map(|(x, y)| Point2::new(x, y)).collect();
        if let Ok(f) = fit_line_least_squares(&pts, Point2::new(0.0, 0.0)) {
            prop_assert!((f.line.dx.hypot(f.line.dy) - 1.0).abs() < 1e-12);
            prop_assert!(f.line.dx > 0.0 || (f.line.dx == 0.0 && f.line.dy >= 0.0));
            let o = f.line.orientation_deg();
            prop_assert!((0.0..180.0).contains(&o));
        }
    }
}

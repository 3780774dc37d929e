//! Brute-force reference implementations and fixture helpers shared by the
//! integration tests. Everything here is written independently of the
//! library code it checks: direct loops, f64 arithmetic, no shared helpers.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tubeloc::imgcore::{BoundingBox, GrayImage, LetterboxTransform};
use tubeloc::nnexec::Detection;
use tubeloc::posecv::BinaryMask;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn random_image(r: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| r.gen())
}

/// Six nested loops over (filter, oy, ox, channel, ky, kx), zero padding.
#[allow(clippy::too_many_arguments)]
pub fn conv_naive(
    input: &[f64],
    (c, h, w): (usize, usize, usize),
    weights: &[f64],
    bias: &[f64],
    filters: usize,
    size: usize,
    stride: usize,
    pad: usize,
) -> (usize, usize, Vec<f64>) {
    let oh = (h + 2 * pad - size) / stride + 1;
    let ow = (w + 2 * pad - size) / stride + 1;
    let mut out = vec![0.0; filters * oh * ow];
    for f in 0..filters {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[f];
                for ch in 0..c {
                    for ky in 0..size {
                        for kx in 0..size {
                            let y = (oy * stride + ky) as isize - pad as isize;
                            let x = (ox * stride + kx) as isize - pad as isize;
                            if y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w {
                                acc += weights[((f * c + ch) * size + ky) * size + kx]
                                    * input[(ch * h + y as usize) * w + x as usize];
                            }
                        }
                    }
                }
                out[(f * oh + oy) * ow + ox] = acc;
            }
        }
    }
    (oh, ow, out)
}

pub fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.1 * x
    }
}

/// Max over each window with out-of-range taps clamped to the nearest edge
/// pixel; windows start `(size-1)/2` before `i*stride`.
pub fn maxpool_naive(input: &[f64], (c, h, w): (usize, usize, usize), size: usize, stride: usize) -> (usize, usize, Vec<f64>) {
    let oh = (h - 1) / stride + 1;
    let ow = (w - 1) / stride + 1;
    let off = ((size - 1) / 2) as isize;
    let mut out = Vec::new();
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for ky in 0..size {
                    for kx in 0..size {
                        let y = ((oy * stride + ky) as isize - off).clamp(0, h as isize - 1) as usize;
                        let x = ((ox * stride + kx) as isize - off).clamp(0, w as isize - 1) as usize;
                        m = m.max(input[(ch * h + y) * w + x]);
                    }
                }
                out.push(m);
            }
        }
    }
    (oh, ow, out)
}

pub fn upsample_naive(input: &[f64], (c, h, w): (usize, usize, usize)) -> Vec<f64> {
    let mut out = vec![0.0; c * 4 * h * w];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let v = input[(ch * h + y) * w + x];
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    out[(ch * 2 * h + 2 * y + dy) * 2 * w + 2 * x + dx] = v;
                }
            }
        }
    }
    out
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-cell, per-anchor decode of a single-class head into source-image
/// boxes (clamped; boxes entirely in padding are dropped).
#[allow(clippy::too_many_arguments)]
pub fn decode_naive(
    head: &[f64],
    (gh, gw): (usize, usize),
    anchors: &[(f64, f64)],
    mask: &[usize],
    net: (f64, f64),
    t: &LetterboxTransform,
    threshold: f64,
) -> Vec<(f64, [f64; 4])> {
    let at = |ch: usize, i: usize, j: usize| head[(ch * gh + i) * gw + j];
    let mut out = Vec::new();
    for (a, &m) in mask.iter().enumerate() {
        for i in 0..gh {
            for j in 0..gw {
                let b = a * 6;
                let conf = sig(at(b + 4, i, j)) * sig(at(b + 5, i, j));
                if conf < threshold {
                    continue;
                }
                let cx = (sig(at(b, i, j)) + j as f64) * net.0 / gw as f64;
                let cy = (sig(at(b + 1, i, j)) + i as f64) * net.1 / gh as f64;
                let bw = anchors[m].0 * at(b + 2, i, j).exp();
                let bh = anchors[m].1 * at(b + 3, i, j).exp();
                // network -> source
                let x0 = ((cx - bw / 2.0 - t.pad_x as f64) / t.scale).clamp(0.0, t.source_w as f64);
                let y0 = ((cy - bh / 2.0 - t.pad_y as f64) / t.scale).clamp(0.0, t.source_h as f64);
                let x1 = ((cx + bw / 2.0 - t.pad_x as f64) / t.scale).clamp(0.0, t.source_w as f64);
                let y1 = ((cy + bh / 2.0 - t.pad_y as f64) / t.scale).clamp(0.0, t.source_h as f64);
                if x1 > x0 && y1 > y0 {
                    out.push((conf, [x0, y0, x1 - x0, y1 - y0]));
                }
            }
        }
    }
    out
}

pub fn iou_naive(a: [f64; 4], b: [f64; 4]) -> f64 {
    let ix = (a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0]);
    let iy = (a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1]);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    inter / (a[2] * a[3] + b[2] * b[3] - inter)
}

/// Repeatedly keeps the most confident remaining box (lowest index on ties)
/// and discards everything overlapping it above `thr`. Returns kept indices.
pub fn nms_naive(dets: &[Detection], thr: f64) -> Vec<usize> {
    let boxes: Vec<[f64; 4]> = dets.iter().map(|d| [d.bbox.x as f64, d.bbox.y as f64, d.bbox.w as f64, d.bbox.h as f64]).collect();
    let mut alive: Vec<bool> = vec![true; dets.len()];
    let mut kept = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in 0..dets.len() {
            if alive[i] && best.is_none_or(|b| dets[i].confidence > dets[b].confidence) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        kept.push(b);
        alive[b] = false;
        for i in 0..dets.len() {
            if alive[i] && iou_naive(boxes[b], boxes[i]) > thr {
                alive[i] = false;
            }
        }
    }
    kept
}

/// Direct 5x5 two-dimensional Gaussian (sigma 1) with clamped borders.
pub fn blur_naive(img: &GrayImage) -> GrayImage {
    let mut k = [[0.0f64; 5]; 5];
    let mut total = 0.0;
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - 2.0, j as f64 - 2.0);
            *v = (-(dx * dx + dy * dy) / 2.0).exp();
            total += *v;
        }
    }
    let (w, h) = (img.width() as isize, img.height() as isize);
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let mut acc = 0.0;
        for (i, row) in k.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let yy = (y as isize + i as isize - 2).clamp(0, h - 1) as usize;
                let xx = (x as isize + j as isize - 2).clamp(0, w - 1) as usize;
                acc += v / total * img.get(xx, yy) as f64;
            }
        }
        acc.round() as u8
    })
}

pub fn sobel_naive(img: &GrayImage) -> GrayImage {
    const KX: [[i32; 3]; 3] = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]];
    const KY: [[i32; 3]; 3] = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]];
    let (w, h) = (img.width() as isize, img.height() as isize);
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let (mut gx, mut gy) = (0i32, 0i32);
        for i in 0..3 {
            for j in 0..3 {
                let yy = (y as isize + i as isize - 1).clamp(0, h - 1) as usize;
                let xx = (x as isize + j as isize - 1).clamp(0, w - 1) as usize;
                let p = img.get(xx, yy) as i32;
                gx += KX[i][j] * p;
                gy += KY[i][j] * p;
            }
        }
        (gx.abs() + gy.abs()).min(255) as u8
    })
}

pub fn threshold_naive(img: &GrayImage, block: usize, offset: i32) -> Vec<bool> {
    let r = (block / 2) as isize;
    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    sum += img.get((x + dx).clamp(0, w - 1) as usize, (y + dy).clamp(0, h - 1) as usize) as f64;
                }
            }
            let mean = sum / (block * block) as f64;
            out.push(img.get(x as usize, y as usize) as f64 > mean + offset as f64);
        }
    }
    out
}

/// For each 8-connected component with at least three pixels: the pixels not
/// reachable from outside the raster through 4-connected non-component
/// pixels (component plus everything it surrounds).
pub fn enclosed_sets_naive(mask: &BinaryMask) -> Vec<BTreeSet<(i32, i32)>> {
    let (w, h) = (mask.width() as i32, mask.height() as i32);
    let mut label = vec![usize::MAX; (w * h) as usize];
    let mut comps: Vec<Vec<(i32, i32)>> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x as usize, y as usize) || label[(y * w + x) as usize] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut q = VecDeque::from([(x, y)]);
            label[(y * w + x) as usize] = id;
            let mut members = Vec::new();
            while let Some((cx, cy)) = q.pop_front() {
                members.push((cx, cy));
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (cx + dx, cy + dy);
                        if nx >= 0 && ny >= 0 && nx < w && ny < h && mask.get(nx as usize, ny as usize) && label[(ny * w + nx) as usize] == usize::MAX {
                            label[(ny * w + nx) as usize] = id;
                            q.push_back((nx, ny));
                        }
                    }
                }
            }
            comps.push(members);
        }
    }
    let mut out = Vec::new();
    for (id, members) in comps.iter().enumerate() {
        if members.len() < 3 {
            continue;
        }
        // flood the padded complement from its border
        let (pw, ph) = (w + 2, h + 2);
        let mut seen = vec![false; (pw * ph) as usize];
        let blocked = |x: i32, y: i32| x >= 1 && y >= 1 && x <= w && y <= h && label[((y - 1) * w + x - 1) as usize] == id;
        let mut q = VecDeque::from([(0, 0)]);
        seen[0] = true;
        while let Some((x, y)) = q.pop_front() {
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let (nx, ny) = (x + dx, y + dy);
                if nx >= 0 && ny >= 0 && nx < pw && ny < ph && !seen[(ny * pw + nx) as usize] && !blocked(nx, ny) {
                    seen[(ny * pw + nx) as usize] = true;
                    q.push_back((nx, ny));
                }
            }
        }
        let mut set = BTreeSet::new();
        for y in 0..h {
            for x in 0..w {
                if !seen[((y + 1) * pw + x + 1) as usize] {
                    set.insert((x, y));
                }
            }
        }
        out.push(set);
    }
    out
}

/// Random mask mixing salt noise with a few filled rectangles and rings.
pub fn random_mask(r: &mut ChaCha8Rng, w: usize, h: usize) -> BinaryMask {
    let density: f64 = r.gen_range(0.05..0.6);
    let mut bits: Vec<bool> = (0..w * h).map(|_| r.gen_bool(density)).collect();
    for _ in 0..r.gen_range(0..3) {
        let (x0, y0) = (r.gen_range(0..w), r.gen_range(0..h));
        let (x1, y1) = ((x0 + r.gen_range(2..8)).min(w), (y0 + r.gen_range(2..8)).min(h));
        let ring = r.gen_bool(0.5);
        for y in y0..y1 {
            for x in x0..x1 {
                let edge = x == x0 || y == y0 || x + 1 == x1 || y + 1 == y1;
                bits[y * w + x] = !ring || edge;
            }
        }
    }
    BinaryMask::new(w, h, bits)
}

pub fn det(b: [f32; 4], confidence: f32) -> Detection {
    Detection { bbox: BoundingBox::new(b[0], b[1], b[2], b[3]), confidence, class_id: 0 }
}

/// Renders a tube lying on flat ground seen from straight above, top surface
/// at `depth` metres, runs the image-plane pose estimator on its box and
/// lifts the result. Returns the lifted pose and the rendered spec.
pub fn lift_rendered_tube(
    rig: &tubeloc::StereoRig,
    depth: f64,
    center: (f64, f64),
    angle_deg: f64,
) -> (tubeloc::TubePose3D, tubeloc::synth::TubeSpec) {
    use tubeloc::imgcore::crop;
    use tubeloc::posecv::{estimate_pose_2d, PoseParams};
    use tubeloc::stereo3d::lift_pose_to_3d;
    use tubeloc::synth::{render_tube, tube_on_ground_disparity, TubeSpec};
    use tubeloc::Point2;

    let k = rig.intrinsics;
    let diameter_m = 0.02;
    let t = TubeSpec {
        center: Point2::new(center.0, center.1),
        length: rig.tube_length_m * k.fx / depth,
        diameter: diameter_m * k.fx / depth,
        angle_deg,
        intensity: 200,
    };
    let mut img = GrayImage::filled(k.width, k.height, 60);
    render_tube(&mut img, &t);
    let disparity = tube_on_ground_disparity(rig, depth + diameter_m, &[(t, depth)]);
    let b = t.bounding_box();
    let m = 12.0;
    let c = crop(&img, &BoundingBox::new(b.x - m, b.y - m, b.w + 2.0 * m, b.h + 2.0 * m)).unwrap();
    let (lx, ly) = c.to_local(center.0, center.1);
    let pose = estimate_pose_2d(&c, Point2::new(lx, ly), &PoseParams::default()).unwrap();
    (lift_pose_to_3d(&pose, &disparity, rig).unwrap(), t)
}

/// Writes `n` rendered scenes as a dataset: `images/<stem>.pgm` and
/// `labels/<stem>.txt` with orientation and centroid columns.
pub fn write_scene_dataset(root: &std::path::Path, n: usize, seed: u64, w: usize, h: usize, noise: f64) {
    use std::fmt::Write as _;
    std::fs::create_dir_all(root.join("images")).unwrap();
    std::fs::create_dir_all(root.join("labels")).unwrap();
    for i in 0..n {
        let scene = tubeloc::synth::random_scene(seed + i as u64, w, h, noise);
        let stem = format!("scene_{i:03}");
        tubeloc::imgcore::save_pgm(&scene.image, root.join("images").join(format!("{stem}.pgm"))).unwrap();
        let mut text = String::new();
        for t in &scene.tubes {
            let b = t.bounding_box().clamp_to(w as f64, h as f64);
            let (cx, cy) = b.center();
            writeln!(
                text,
                "0 {:.6} {:.6} {:.6} {:.6} {:.3} {:.2} {:.2}",
                cx / w as f64,
                cy / h as f64,
                b.w / w as f64,
                b.h / h as f64,
                t.angle_deg.rem_euclid(180.0),
                t.center.x,
                t.center.y
            )
            .unwrap();
        }
        std::fs::write(root.join("labels").join(format!("{stem}.txt")), text).unwrap();
    }
}

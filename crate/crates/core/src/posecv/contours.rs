//! Outer-border following (Suzuki–Abe) over 8-connected foreground, with
//! region moments of everything each border encloses.

use super::{BinaryMask, Point2, PoseError};

/// Clockwise neighbour offsets in image coordinates (y grows downward),
/// starting east.
const DIRS: [(isize, isize); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];
const EAST: usize = 0;
const WEST: usize = 4;

/// Raw and central second-order moments of an enclosed pixel set.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct Moments {
    pub m00: f64,
    pub m10: f64,
    pub m01: f64,
    pub mu20: f64,
    pub mu11: f64,
    pub mu02: f64,
}

impl Moments {
    pub fn from_pixels(pixels: &[(i32, i32)]) -> Self {
        let n = pixels.len() as f64;
        let (m10, m01) = pixels.iter().fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x as f64, sy + y as f64));
        if pixels.is_empty() {
            return Self::default();
        }
        let (cx, cy) = (m10 / n, m01 / n);
        let (mut mu20, mut mu11, mut mu02) = (0.0, 0.0, 0.0);
        for &(x, y) in pixels {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            mu20 += dx * dx;
            mu11 += dx * dy;
            mu02 += dy * dy;
        }
        Self { m00: n, m10, m01, mu20, mu11, mu02 }
    }

    pub fn centroid(&self) -> Point2<f64> {
        Point2::new(self.m10 / self.m00, self.m01 / self.m00)
    }
}

/// Closed outer boundary of one foreground component.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    /// Boundary pixels in traversal order; consecutive points (and last/first) are 8-adjacent.
    pub points: Vec<(i32, i32)>,
    /// Every pixel on or inside the boundary (component plus its holes), row-major.
    pub enclosed: Vec<(i32, i32)>,
    pub moments: Moments,
}

impl Contour {
    pub fn from_points(points: Vec<(i32, i32)>) -> Self {
        let enclosed = fill_polygon(&points);
        let moments = Moments::from_pixels(&enclosed);
        Self { points, enclosed, moments }
    }

    /// Closed edge list `(p_k, p_{k+1})`, including the closing edge.
    pub fn segments(&self) -> impl Iterator<Item = ((i32, i32), (i32, i32))> + '_ {
        let n = self.points.len();
        (0..n).map(move |k| (self.points[k], self.points[(k + 1) % n]))
    }
}

/// Outer borders of all 8-connected foreground components in raster order of
/// their first pixel. Components of one or two pixels (borders shorter than
/// three points) are skipped.
pub fn find_contours(mask: &BinaryMask) -> Vec<Contour> {
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let pw = w + 2;
    // labels on a one-pixel zero frame: 0 background, 1 unvisited, +-nbd traced
    let mut f = vec![0i32; (pw * (h + 2)) as usize];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x as usize, y as usize) {
                f[((y + 1) * pw + x + 1) as usize] = 1;
            }
        }
    }
    let idx = |x: isize, y: isize| ((y + 1) * pw + x + 1) as usize;
    let mut nbd = 1;
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = f[idx(x, y)];
            if v == 1 && f[idx(x - 1, y)] == 0 {
                nbd += 1;
                let pts = trace(&mut f, pw, (x, y), WEST, nbd);
                if pts.len() >= 3 {
                    out.push(Contour::from_points(pts));
                }
            } else if v >= 1 && f[idx(x + 1, y)] == 0 {
                // hole border: traced only so its pixels are labelled
                nbd += 1;
                trace(&mut f, pw, (x, y), EAST, nbd);
            }
        }
    }
    out.retain(|c| c.moments.m00 > 0.0);
    out
}

fn trace(f: &mut [i32], pw: isize, start: (isize, isize), from: usize, nbd: i32) -> Vec<(i32, i32)> {
    let idx = |(x, y): (isize, isize)| ((y + 1) * pw + x + 1) as usize;
    let step = |(x, y): (isize, isize), d: usize| (x + DIRS[d].0, y + DIRS[d].1);
    let dir_to = |a: (isize, isize), b: (isize, isize)| {
        DIRS.iter().position(|&(dx, dy)| (a.0 + dx, a.1 + dy) == b).expect("neighbours are adjacent")
    };

    let Some(d1) = (0..8).map(|k| (from + k) % 8).find(|&d| f[idx(step(start, d))] != 0) else {
        f[idx(start)] = -nbd;
        return vec![(start.0 as i32, start.1 as i32)];
    };
    let p1 = step(start, d1);
    let (mut p2, mut p3) = (p1, start);
    let mut points = Vec::new();
    loop {
        let d2 = dir_to(p3, p2);
        let mut east_zero = false;
        let mut p4 = p3;
        for k in 1..=8 {
            let d = (d2 + 8 - k) % 8;
            let q = step(p3, d);
            if f[idx(q)] != 0 {
                p4 = q;
                break;
            }
            if d == EAST {
                east_zero = true;
            }
        }
        if east_zero {
            f[idx(p3)] = -nbd;
        } else if f[idx(p3)] == 1 {
            f[idx(p3)] = nbd;
        }
        points.push((p3.0 as i32, p3.1 as i32));
        if p4 == start && p3 == p1 {
            break;
        }
        p2 = p3;
        p3 = p4;
    }
    points
}

/// Pixels on the polygon plus pixel centres strictly inside it (even-odd
/// rule), sorted row-major and deduplicated.
fn fill_polygon(points: &[(i32, i32)]) -> Vec<(i32, i32)> {
    let mut set: Vec<(i32, i32)> = points.to_vec();
    if points.len() >= 3 {
        let y0 = points.iter().map(|p| p.1).min().unwrap_or(0);
        let y1 = points.iter().map(|p| p.1).max().unwrap_or(0);
        let n = points.len();
        let mut crossings = Vec::new();
        for y in y0..=y1 {
            crossings.clear();
            let yf = y as f64;
            for k in 0..n {
                let (a, b) = (points[k], points[(k + 1) % n]);
                if (a.1 > y) != (b.1 > y) {
                    let t = (yf - a.1 as f64) / (b.1 - a.1) as f64;
                    crossings.push(a.0 as f64 + t * (b.0 - a.0) as f64);
                }
            }
            crossings.sort_by(|a, b| a.total_cmp(b));
            for pair in crossings.chunks_exact(2) {
                let lo = pair[0].floor() as i32 + 1;
                let hi = pair[1].ceil() as i32 - 1;
                for x in lo..=hi {
                    let xf = x as f64;
                    if xf > pair[0] && xf < pair[1] {
                        set.push((x, y));
                    }
                }
            }
        }
    }
    set.sort_by_key(|&(x, y)| (y, x));
    set.dedup();
    set
}

/// Even-odd ray casting; polygons with fewer than three vertices contain nothing.
pub fn point_in_polygon(points: &[(i32, i32)], p: Point2<f64>) -> bool {
    let n = points.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    for k in 0..n {
        let (a, b) = (points[k], points[(k + 1) % n]);
        let (ay, by) = (a.1 as f64, b.1 as f64);
        if (ay > p.y) != (by > p.y) {
            let x = a.0 as f64 + (p.y - ay) / (by - ay) * (b.0 - a.0) as f64;
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Outcome of contour selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub index: usize,
    /// No contour enclosed the centroid; the globally nearest one was taken.
    pub degraded: bool,
}

/// Among contours enclosing `centroid`, the one whose moment centroid is
/// nearest (ties: smaller area); otherwise the nearest overall, flagged.
pub fn select_tube_contour(contours: &[Contour], centroid: Point2<f64>) -> Result<Selection, PoseError> {
    let nearest = |candidates: &mut dyn Iterator<Item = usize>| {
        candidates.min_by(|&a, &b| {
            let key = |i: usize| (contours[i].moments.centroid().distance(centroid), contours[i].moments.m00);
            let (da, aa) = key(a);
            let (db, ab) = key(b);
            da.total_cmp(&db).then(aa.total_cmp(&ab)).then(a.cmp(&b))
        })
    };
    let mut enclosing = (0..contours.len()).filter(|&i| point_in_polygon(&contours[i].points, centroid));
    if let Some(index) = nearest(&mut enclosing) {
        return Ok(Selection { index, degraded: false });
    }
    nearest(&mut (0..contours.len()))
        .map(|index| Selection { index, degraded: true })
        .ok_or(PoseError::NoContour)
}

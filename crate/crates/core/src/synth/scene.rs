use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::imgcore::{BoundingBox, GrayImage};
use crate::posecv::Point2;

use super::rng;

/// A flat-shaded rectangular tube silhouette.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeSpec {
    pub center: Point2<f64>,
    /// End-to-end length in pixels.
    pub length: f64,
    pub diameter: f64,
    /// Axis angle in image coordinates (x right, y down), degrees.
    pub angle_deg: f64,
    pub intensity: u8,
}

impl TubeSpec {
    pub fn direction(&self) -> (f64, f64) {
        let a = self.angle_deg.to_radians();
        (a.cos(), a.sin())
    }

    /// Centres of the two end faces.
    pub fn endpoints(&self) -> [Point2<f64>; 2] {
        let (dx, dy) = self.direction();
        let h = self.length / 2.0;
        [
            Point2::new(self.center.x - h * dx, self.center.y - h * dy),
            Point2::new(self.center.x + h * dx, self.center.y + h * dy),
        ]
    }

    /// Pixel-centre coordinates inside the silhouette.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = self.direction();
        let (rx, ry) = (x - self.center.x, y - self.center.y);
        (rx * dx + ry * dy).abs() <= self.length / 2.0 && (-rx * dy + ry * dx).abs() <= self.diameter / 2.0
    }

    /// Axis-aligned bounds of the silhouette in pixel-edge coordinates
    /// (pixel `(x, y)` covers `[x, x+1)`).
    pub fn bounding_box(&self) -> BoundingBox<f64> {
        let (dx, dy) = self.direction();
        let (hl, hd) = (self.length / 2.0, self.diameter / 2.0);
        let ex = (hl * dx).abs() + (hd * dy).abs();
        let ey = (hl * dy).abs() + (hd * dx).abs();
        let (cx, cy) = (self.center.x + 0.5, self.center.y + 0.5);
        BoundingBox::from_corners(cx - ex, cy - ey, cx + ex, cy + ey)
    }
}

const SUPERSAMPLE: usize = 4;

/// Draws `tube` over `image` with 4x4 supersampled coverage. Pixel `(x, y)`
/// is sampled around its centre `(x, y)`.
pub fn render_tube(image: &mut GrayImage, tube: &TubeSpec) {
    let b = tube.bounding_box();
    let x0 = (b.x.floor() as isize - 1).max(0) as usize;
    let y0 = (b.y.floor() as isize - 1).max(0) as usize;
    let x1 = ((b.right().ceil() as isize + 1).max(0) as usize).min(image.width());
    let y1 = ((b.bottom().ceil() as isize + 1).max(0) as usize).min(image.height());
    let n = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    for y in y0..y1 {
        for x in x0..x1 {
            let mut hits = 0usize;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let ox = (sx as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                    let oy = (sy as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                    hits += tube.contains(x as f64 + ox, y as f64 + oy) as usize;
                }
            }
            if hits > 0 {
                let cov = hits as f64 / n;
                let bg = image.get(x, y) as f64;
                image.set(x, y, (bg + cov * (tube.intensity as f64 - bg)).round() as u8);
            }
        }
    }
}

/// A rendered frame with its ground truth.
#[derive(Debug, Clone)]
pub struct Scene {
    pub image: GrayImage,
    pub tubes: Vec<TubeSpec>,
}

/// `width`x`height` frame with a smooth background gradient, one to three
/// non-overlapping tubes of length 40–120 px and Gaussian sensor noise of
/// `noise_sigma` grey levels.
pub fn random_scene(seed: u64, width: usize, height: usize, noise_sigma: f64) -> Scene {
    let mut r = rng(seed);
    let base: f64 = r.gen_range(40.0..80.0);
    let (gx, gy): (f64, f64) = (r.gen_range(-20.0..20.0), r.gen_range(-20.0..20.0));
    let mut image = GrayImage::from_fn(width, height, |x, y| {
        (base + gx * x as f64 / width as f64 + gy * y as f64 / height as f64).round().clamp(0.0, 255.0) as u8
    });
    let count = r.gen_range(1..=3);
    let mut tubes: Vec<TubeSpec> = Vec::new();
    let margin = 70.0f64.min(width.min(height) as f64 / 3.0);
    for _ in 0..count * 20 {
        if tubes.len() == count {
            break;
        }
        let t = TubeSpec {
            center: Point2::new(r.gen_range(margin..width as f64 - margin), r.gen_range(margin..height as f64 - margin)),
            length: r.gen_range(40.0..120.0),
            diameter: r.gen_range(10.0..16.0),
            angle_deg: r.gen_range(0.0..180.0),
            intensity: r.gen_range(170..=230),
        };
        let b = t.bounding_box();
        let clear = tubes.iter().all(|o| o.bounding_box().iou(&b) == 0.0 && o.center.distance(t.center) > 40.0);
        let inside = b.x >= 1.0 && b.y >= 1.0 && b.right() < width as f64 - 1.0 && b.bottom() < height as f64 - 1.0;
        if clear && inside {
            tubes.push(t);
        }
    }
    for t in &tubes {
        render_tube(&mut image, t);
    }
    if noise_sigma > 0.0 {
        let noise = Normal::new(0.0, noise_sigma).expect("finite sigma");
        image = GrayImage::from_fn(width, height, |x, y| {
            (image.get(x, y) as f64 + noise.sample(&mut r)).round().clamp(0.0, 255.0) as u8
        });
    }
    Scene { image, tubes }
}

//! Deterministic synthetic test images: geometric shapes on a moderate
//! background, scaled to any resolution.
//!
//! Contrast is kept moderate (intensity spread around 0.1 to 0.2) so that
//! noise at realistic levels neither clips against [0,1] nor drowns the
//! structure entirely.

use crate::image::Image;
use crate::scalar::Real;

#[derive(Clone, Copy)]
enum Shape {
    Circle { cx: f64, cy: f64, r: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Triangle { a: (f64, f64), b: (f64, f64), c: (f64, f64) },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Circle { cx, cy, r } => {
                let dx = x - cx;
                let dy = y - cy;
                dx * dx + dy * dy <= r * r
            }
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x <= x1 && y >= y0 && y <= y1,
            Shape::Triangle { a, b, c } => {
                let edge = |p: (f64, f64), q: (f64, f64)| {
                    (q.0 - p.0) * (y - p.1) - (q.1 - p.1) * (x - p.0)
                };
                let d1 = edge(a, b);
                let d2 = edge(b, c);
                let d3 = edge(c, a);
                let has_neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
                let has_pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
                !(has_neg && has_pos)
            }
        }
    }
}

// Shape layout in unit coordinates; regions are mutually disjoint.
const SHAPES: [Shape; 4] = [
    Shape::Circle {
        cx: 0.30,
        cy: 0.32,
        r: 0.16,
    },
    Shape::Rect {
        x0: 0.55,
        y0: 0.20,
        x1: 0.85,
        y1: 0.42,
    },
    Shape::Triangle {
        a: (0.22, 0.62),
        b: (0.52, 0.92),
        c: (0.12, 0.88),
    },
    Shape::Rect {
        x0: 0.65,
        y0: 0.60,
        x1: 0.80,
        y1: 0.75,
    },
];

const GRAY_BACKGROUND: f64 = 0.47;
const GRAY_LEVELS: [f64; 4] = [0.66, 0.31, 0.60, 0.36];

const COLOR_BACKGROUND: [f64; 3] = [0.50, 0.46, 0.44];
const COLOR_LEVELS: [[f64; 3]; 4] = [
    [0.75, 0.52, 0.30],
    [0.25, 0.38, 0.62],
    [0.50, 0.72, 0.38],
    [0.38, 0.32, 0.55],
];

fn shape_at(x: usize, y: usize, width: usize, height: usize) -> Option<usize> {
    let u = (x as f64 + 0.5) / width as f64;
    let v = (y as f64 + 0.5) / height as f64;
    SHAPES.iter().position(|s| s.contains(u, v))
}

/// Grayscale geometric test image.
pub fn geometric_gray<T: Real>(width: usize, height: usize) -> crate::Result<Image<T>> {
    let mut data = vec![T::zero(); width * height];
    for y in 0..height {
        for x in 0..width {
            let level = match shape_at(x, y, width, height) {
                Some(k) => GRAY_LEVELS[k],
                None => GRAY_BACKGROUND,
            };
            data[y * width + x] = T::from_f64_c(level);
        }
    }
    Image::new(width, height, 1, data)
}

/// RGB geometric test image with the same layout as [`geometric_gray`].
pub fn geometric_color<T: Real>(width: usize, height: usize) -> crate::Result<Image<T>> {
    let npx = width * height;
    let mut data = vec![T::zero(); 3 * npx];
    for y in 0..height {
        for x in 0..width {
            let rgb = match shape_at(x, y, width, height) {
                Some(k) => COLOR_LEVELS[k],
                None => COLOR_BACKGROUND,
            };
            let p = y * width + x;
            for c in 0..3 {
                data[c * npx + p] = T::from_f64_c(rgb[c]);
            }
        }
    }
    Image::new(width, height, 3, data)
}

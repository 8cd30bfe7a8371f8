//! Signed-distance rasteriser with fixed 4×4 supersampling.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    Square,
    Triangle,
}

/// Geometric content shared by the two renderings of a record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Latent {
    pub shape: Shape,
    /// Centre in pixel units.
    pub cx: f64,
    pub cy: f64,
    /// Circumradius in pixel units.
    pub radius: f64,
}

const SUPERSAMPLE: usize = 4;

impl Latent {
    /// Signed distance from `(px, py)` to the shape boundary; negative inside.
    pub fn signed_distance(&self, px: f64, py: f64) -> f64 {
        let (dx, dy) = (px - self.cx, py - self.cy);
        let r = self.radius;
        match self.shape {
            Shape::Circle => dx.hypot(dy) - r,
            Shape::Square => {
                let h = r * std::f64::consts::FRAC_1_SQRT_2;
                let (qx, qy) = (dx.abs() - h, dy.abs() - h);
                qx.max(0.0).hypot(qy.max(0.0)) + qx.max(qy).min(0.0)
            }
            Shape::Triangle => {
                // Equilateral, apex up; max of the three edge half-plane distances.
                let inradius = r * 0.5;
                (0..3)
                    .map(|e| {
                        let a = std::f64::consts::FRAC_PI_2 + e as f64 * 2.0 * std::f64::consts::PI / 3.0;
                        // Outward normal of the edge opposite vertex `e`.
                        let (nx, ny) = (-a.cos(), a.sin());
                        dx * nx + dy * ny - inradius
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }
}

/// Fractional coverage of each pixel by `inside`, row-major `size × size`.
pub(crate) fn coverage(size: usize, inside: impl Fn(f64, f64) -> bool) -> Vec<f64> {
    let step = 1.0 / SUPERSAMPLE as f64;
    let norm = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let mut hits = 0usize;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let px = x as f64 + (sx as f64 + 0.5) * step;
                    let py = y as f64 + (sy as f64 + 0.5) * step;
                    hits += inside(px, py) as usize;
                }
            }
            out.push(hits as f64 / norm);
        }
    }
    out
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Black outline of width `line` on white, as `3 × size × size` CHW bytes.
pub fn render_outline(latent: &Latent, size: usize, line: f64, interior: f64) -> Vec<u8> {
    let half = line * 0.5;
    let stroke = coverage(size, |x, y| latent.signed_distance(x, y).abs() <= half);
    let inside = coverage(size, |x, y| latent.signed_distance(x, y) < -half);
    let plane: Vec<u8> = stroke
        .iter()
        .zip(&inside)
        .map(|(s, i)| to_u8(1.0 - s - i * (1.0 - interior)))
        .collect();
    plane.repeat(3)
}

/// Shape filled with `rgb` on white, as `3 × size × size` CHW bytes.
pub fn render_filled(latent: &Latent, size: usize, rgb: [f64; 3]) -> Vec<u8> {
    let cov = coverage(size, |x, y| latent.signed_distance(x, y) <= 0.0);
    rgb.iter()
        .flat_map(|&ch| cov.iter().map(move |c| to_u8(1.0 - c + c * ch)))
        .collect()
}

/// Fully saturated colour of hue `h ∈ [0, 1)` at value `v`.
pub fn hue_to_rgb(h: f64, v: f64) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let f = h6 - h6.floor();
    let (q, t) = (v * (1.0 - f), v * f);
    match h6 as usize {
        0 => [v, t, 0.0],
        1 => [q, v, 0.0],
        2 => [0.0, v, t],
        3 => [0.0, q, v],
        4 => [t, 0.0, v],
        _ => [v, 0.0, q],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn latent(shape: Shape) -> Latent {
        Latent {
            shape,
            cx: 16.0,
            cy: 16.0,
            radius: 8.0,
        }
    }

    #[test]
    fn centre_is_inside_and_corner_outside() {
        for s in [Shape::Circle, Shape::Square, Shape::Triangle] {
            let l = latent(s);
            assert!(l.signed_distance(16.0, 16.0) < 0.0, "{s:?}");
            assert!(l.signed_distance(0.0, 0.0) > 0.0, "{s:?}");
        }
    }

    #[test]
    fn circle_distance_is_exact() {
        let l = latent(Shape::Circle);
        assert!((l.signed_distance(16.0, 30.0) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_vertices_lie_on_boundary() {
        let l = latent(Shape::Triangle);
        // Apex at (cx, cy − r) in image coordinates (y grows downwards).
        assert!(l.signed_distance(16.0, 8.0).abs() < 1e-9);
    }

    #[test]
    fn filled_area_matches_geometry() {
        let l = latent(Shape::Circle);
        let cov = coverage(32, |x, y| l.signed_distance(x, y) <= 0.0);
        let area: f64 = cov.iter().sum();
        assert!((area - std::f64::consts::PI * 64.0).abs() < 2.0, "{area}");
    }

    #[test]
    fn outline_has_black_stroke_and_tinted_interior() {
        let img = render_outline(&latent(Shape::Square), 32, 2.0, 0.75);
        assert_eq!(img[16 * 32 + 16], to_u8(0.75));
        assert_eq!(img[0], 255);
        // Square half-side is r/√2 ≈ 5.66, so column 10 sits on the left edge.
        assert!(img[16 * 32 + 10] < 64);
    }

    #[test]
    fn hues_are_saturated() {
        assert_eq!(hue_to_rgb(0.0, 1.0), [1.0, 0.0, 0.0]);
        let c = hue_to_rgb(0.5, 1.0);
        assert!(c[0].abs() < 1e-12 && (c[1] - 1.0).abs() < 1e-12 && (c[2] - 1.0).abs() < 1e-12);
    }
}

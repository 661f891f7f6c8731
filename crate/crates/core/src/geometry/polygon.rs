use serde::{Deserialize, Serialize};

use super::HalfOpenBox;
use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Convex polygon with counter-clockwise vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<Point>,
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn shoelace(v: &[Point]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        s += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * s
}

fn segments_cross(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: Point, b: Point, c: Point, d: f64| {
        d == 0.0
            && c[0] >= a[0].min(b[0])
            && c[0] <= a[0].max(b[0])
            && c[1] >= a[1].min(b[1])
            && c[1] <= a[1].max(b[1])
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

impl Polygon {
    /// Validates and orients the vertex list. Self-intersecting or
    /// non-convex outlines are rejected.
    pub fn new(mut vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Geometry("polygon needs at least 3 vertices".into()));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Geometry("polygon vertex is not finite".into()));
        }
        let n = vertices.len();
        for i in 0..n {
            for j in i + 1..n {
                // adjacent edges share a vertex; skip them
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (a1, a2) = (vertices[i], vertices[(i + 1) % n]);
                let (b1, b2) = (vertices[j], vertices[(j + 1) % n]);
                if segments_cross(a1, a2, b1, b2) {
                    return Err(Error::Geometry(format!(
                        "polygon edges {i} and {j} intersect"
                    )));
                }
            }
        }
        let area = shoelace(&vertices);
        if area == 0.0 {
            return Err(Error::Geometry("polygon has zero area".into()));
        }
        if area < 0.0 {
            vertices.reverse();
        }
        let scale = vertices
            .iter()
            .flatten()
            .fold(0.0f64, |m, c| m.max(c.abs()))
            .max(1.0);
        for i in 0..n {
            let c = cross(vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]);
            if c < -1e-12 * scale * scale {
                return Err(Error::Geometry("polygon is not convex".into()));
            }
        }
        Ok(Polygon { vertices })
    }

    pub fn from_box(b: &HalfOpenBox) -> Result<Self> {
        if b.dim() != 2 {
            return Err(Error::Geometry(format!("polygon conversion needs d = 2, got {}", b.dim())));
        }
        let (lo, hi) = (b.lo(), b.hi());
        Polygon::new(vec![[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        shoelace(&self.vertices).abs()
    }

    /// Sutherland–Hodgman clip of `self` against the convex `clip`.
    /// Returns the vertex list of the intersection (possibly degenerate).
    pub fn clip(&self, clip: &Polygon) -> Vec<Point> {
        let mut output = self.vertices.clone();
        let m = clip.vertices.len();
        for i in 0..m {
            if output.is_empty() {
                break;
            }
            let (e0, e1) = (clip.vertices[i], clip.vertices[(i + 1) % m]);
            let input = std::mem::take(&mut output);
            let k = input.len();
            for j in 0..k {
                let cur = input[j];
                let nxt = input[(j + 1) % k];
                let c_in = cross(e0, e1, cur) >= 0.0;
                let n_in = cross(e0, e1, nxt) >= 0.0;
                if c_in {
                    output.push(cur);
                }
                if c_in != n_in {
                    let dc = cross(e0, e1, cur);
                    let dn = cross(e0, e1, nxt);
                    let t = dc / (dc - dn);
                    output.push([cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1])]);
                }
            }
        }
        output
    }

    pub fn intersection_area(&self, other: &Polygon) -> f64 {
        let v = self.clip(other);
        if v.len() < 3 {
            0.0
        } else {
            shoelace(&v).abs()
        }
    }

    /// The intersection as a polygon, if it has positive area.
    pub fn intersection(&self, other: &Polygon) -> Option<Polygon> {
        let v = self.clip(other);
        if v.len() < 3 || shoelace(&v).abs() <= 0.0 {
            return None;
        }
        Some(Polygon { vertices: v })
    }

    /// Image under `x -> O x + p`. Reflections reverse orientation, which is
    /// restored so the result stays counter-clockwise.
    pub fn transform(&self, o: &[[f64; 2]; 2], p: Point) -> Polygon {
        let mut vertices: Vec<Point> = self
            .vertices
            .iter()
            .map(|v| {
                [
                    o[0][0] * v[0] + o[0][1] * v[1] + p[0],
                    o[1][0] * v[0] + o[1][1] * v[1] + p[1],
                ]
            })
            .collect();
        if shoelace(&vertices) < 0.0 {
            vertices.reverse();
        }
        Polygon { vertices }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x: f64, y: f64, s: f64) -> Polygon {
        Polygon::new(vec![[x, y], [x + s, y], [x + s, y + s], [x, y + s]]).unwrap()
    }

    #[test]
    fn shoelace_area() {
        assert_eq!(square(0.0, 0.0, 2.0).area(), 4.0);
        let tri = Polygon::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(tri.area(), 0.5);
    }

    #[test]
    fn rejects_bowtie() {
        let bowtie = Polygon::new(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(bowtie, Err(Error::Geometry(m)) if m.contains("intersect")));
    }

    #[test]
    fn rejects_nonconvex() {
        let dart = Polygon::new(vec![[0.0, 0.0], [2.0, 0.0], [1.0, 0.5], [1.0, 2.0]]);
        assert!(dart.is_err());
    }

    #[test]
    fn clipping_overlapping_squares() {
        let a = square(0.0, 0.0, 2.0);
        let b = square(1.0, 1.0, 2.0);
        assert!((a.intersection_area(&b) - 1.0).abs() < 1e-14);
        assert_eq!(a.intersection_area(&square(5.0, 5.0, 1.0)), 0.0);
        assert!((a.intersection_area(&a) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn rotation_preserves_area() {
        let (s, c) = std::f64::consts::FRAC_PI_4.sin_cos();
        let rotated = square(0.0, 0.0, 1.0).transform(&[[c, -s], [s, c]], [0.0, 0.0]);
        assert!((rotated.area() - 1.0).abs() < 1e-14);
        let reflected = square(0.0, 0.0, 1.0).transform(&[[1.0, 0.0], [0.0, -1.0]], [0.0, 0.0]);
        assert!((reflected.area() - 1.0).abs() < 1e-14);
        assert!(shoelace(reflected.vertices()) > 0.0);
    }
}

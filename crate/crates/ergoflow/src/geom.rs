//! Small 2D vector helpers shared across the crate.
//!
//! Points and vectors are plain `[f64; 2]` so mesh tables stay flat.

pub type Point = [f64; 2];

#[inline]
pub fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn scale(a: Point, s: f64) -> Point {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

/// Counter-clockwise rotation by 90 degrees: (a, b) -> (-b, a).
#[inline]
pub fn rot90(a: Point) -> Point {
    [-a[1], a[0]]
}

/// Twice the signed area of triangle (a, b, c); positive for CCW order.
#[inline]
pub fn signed_area2(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Barycentric coordinates of `p` with respect to triangle (a, b, c).
/// Coordinates sum to 1 exactly up to rounding; no inside check.
#[inline]
pub fn barycentric(p: Point, a: Point, b: Point, c: Point) -> [f64; 3] {
    let area2 = signed_area2(a, b, c);
    let w0 = signed_area2(p, b, c) / area2;
    let w1 = signed_area2(a, p, c) / area2;
    let w2 = 1.0 - w0 - w1;
    [w0, w1, w2]
}

/// Closest point to `p` on segment [a, b].
pub fn closest_point_on_segment(p: Point, a: Point, b: Point) -> Point {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    if len2 == 0.0 {
        return a;
    }
    let t = (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0);
    add(a, scale(ab, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn barycentric_sums_to_one() {
        let (a, b, c) = ([0.0, 0.0], [1.0, 0.0], [0.0, 1.0]);
        let w = barycentric([0.2, 0.3], a, b, c);
        assert!((w[0] + w[1] + w[2] - 1.0).abs() < 1e-15);
        assert!((w[1] - 0.2).abs() < 1e-15);
        assert!((w[2] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn rot90_is_ccw() {
        assert_eq!(rot90([1.0, 0.0]), [0.0, 1.0]);
        assert_eq!(rot90([0.0, 1.0]), [-1.0, 0.0]);
    }

    #[test]
    fn segment_projection_clamps() {
        let p = closest_point_on_segment([2.0, 1.0], [0.0, 0.0], [1.0, 0.0]);
        assert_eq!(p, [1.0, 0.0]);
        let q = closest_point_on_segment([0.5, 1.0], [0.0, 0.0], [1.0, 0.0]);
        assert_eq!(q, [0.5, 0.0]);
    }
}

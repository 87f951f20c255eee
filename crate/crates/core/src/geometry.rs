use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

/// A point (or vector) in the plane. Serialized as `[x, y]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 2D cross product.
    #[inline]
    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    #[inline]
    pub fn midpoint(self, other: Point) -> Point {
        Point::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point {
    type Output = Point;
    #[inline]
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    #[inline]
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<Point> for f64 {
    type Output = Point;
    #[inline]
    fn mul(self, p: Point) -> Point {
        Point::new(self * p.x, self * p.y)
    }
}

/// Signed area of the triangle `abc`; positive when counterclockwise.
#[inline]
pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * (b - a).cross(c - a)
}

/// Radius of the inscribed circle of triangle `abc`.
pub fn incircle_radius(a: Point, b: Point, c: Point) -> f64 {
    let perimeter = a.dist(b) + b.dist(c) + c.dist(a);
    if perimeter == 0.0 {
        return 0.0;
    }
    2.0 * signed_area(a, b, c).abs() / perimeter
}

/// Whether `p` lies in the closed triangle `abc` (counterclockwise), with a
/// small absolute tolerance on the barycentric coordinates.
pub fn triangle_contains(a: Point, b: Point, c: Point, p: Point) -> bool {
    let area = signed_area(a, b, c);
    if area <= 0.0 {
        return false;
    }
    let tol = 1e-12 * area;
    signed_area(a, b, p) >= -tol && signed_area(b, c, p) >= -tol && signed_area(c, a, p) >= -tol
}

/// Smallest enclosing circle of a point set (center, radius).
///
/// Iterative Welzl-style construction over the points in the given order; the
/// result is deterministic for a fixed input order.
pub fn min_enclosing_circle(points: &[Point]) -> (Point, f64) {
    match points.len() {
        0 => return (Point::default(), 0.0),
        1 => return (points[0], 0.0),
        _ => {}
    }
    let inside = |c: Point, r: f64, p: Point| c.dist(p) <= r * (1.0 + 1e-12) + 1e-15;
    let mut center = points[0];
    let mut radius = 0.0;
    for i in 1..points.len() {
        if inside(center, radius, points[i]) {
            continue;
        }
        center = points[i];
        radius = 0.0;
        for j in 0..i {
            if inside(center, radius, points[j]) {
                continue;
            }
            center = points[i].midpoint(points[j]);
            radius = center.dist(points[i]);
            for k in 0..j {
                if inside(center, radius, points[k]) {
                    continue;
                }
                (center, radius) = circumcircle(points[i], points[j], points[k]);
            }
        }
    }
    (center, radius)
}

fn circumcircle(a: Point, b: Point, c: Point) -> (Point, f64) {
    let d = 2.0 * (b - a).cross(c - a);
    if d.abs() < 1e-300 {
        // Collinear: the circle on the farthest pair.
        let pairs = [(a, b), (b, c), (a, c)];
        let (p, q) = pairs
            .into_iter()
            .max_by(|x, y| x.0.dist(x.1).total_cmp(&y.0.dist(y.1)))
            .unwrap();
        let m = p.midpoint(q);
        return (m, m.dist(p));
    }
    let ab = b - a;
    let ac = c - a;
    let ux = (ac.y * ab.dot(ab) - ab.y * ac.dot(ac)) / d;
    let uy = (ab.x * ac.dot(ac) - ac.x * ab.dot(ab)) / d;
    let center = a + Point::new(ux, uy);
    (center, center.dist(a))
}

//! Planar polygon geometry and affine georeferencing.
//!
//! Point-in-polygon uses the even-odd crossing rule over every ring, so hole
//! interiors are outside. The same crossing expression drives both the
//! single-point test and the scanline mask, which makes the two agree bit
//! for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Affine map from pixel space `(col, row)` to CRS coordinates `(x, y)`.
///
/// `x = origin_x + col * pixel_width + row * row_rotation`
/// `y = origin_y + col * col_rotation + row * pixel_height`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub origin_x: f64,
    pub pixel_width: f64,
    pub row_rotation: f64,
    pub origin_y: f64,
    pub col_rotation: f64,
    pub pixel_height: f64,
}

impl Affine {
    /// North-up transform with square pixels of `gsd` meters.
    pub fn north_up(origin_x: f64, origin_y: f64, gsd: f64) -> Self {
        Affine {
            origin_x,
            pixel_width: gsd,
            row_rotation: 0.0,
            origin_y,
            col_rotation: 0.0,
            pixel_height: -gsd,
        }
    }

    pub fn apply(&self, col: f64, row: f64) -> Point {
        [
            self.origin_x + col * self.pixel_width + row * self.row_rotation,
            self.origin_y + col * self.col_rotation + row * self.pixel_height,
        ]
    }

    fn determinant(&self) -> f64 {
        self.pixel_width * self.pixel_height - self.row_rotation * self.col_rotation
    }

    pub fn inverse(&self) -> Result<Affine> {
        let det = self.determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Format("singular raster transform".into()));
        }
        let a = self.pixel_height / det;
        let b = -self.row_rotation / det;
        let d = -self.col_rotation / det;
        let e = self.pixel_width / det;
        Ok(Affine {
            origin_x: -(a * self.origin_x + b * self.origin_y),
            pixel_width: a,
            row_rotation: b,
            origin_y: -(d * self.origin_x + e * self.origin_y),
            col_rotation: d,
            pixel_height: e,
        })
    }

    /// Transform of the sub-window whose top-left pixel is `(col_off, row_off)`.
    pub fn offset(&self, col_off: i64, row_off: i64) -> Affine {
        let [x, y] = self.apply(col_off as f64, row_off as f64);
        Affine {
            origin_x: x,
            origin_y: y,
            ..*self
        }
    }

    /// Ground sample distance along columns, in CRS units.
    pub fn gsd(&self) -> f64 {
        self.pixel_width.hypot(self.col_rotation)
    }
}

/// A polygon with one exterior ring and zero or more holes.
///
/// Rings are stored open (the closing vertex is not repeated).
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonGeometry {
    rings: Vec<Vec<Point>>,
}

impl PolygonGeometry {
    /// Builds and validates a polygon. Accepts closed or open rings.
    pub fn new(exterior: Vec<Point>, holes: Vec<Vec<Point>>) -> Result<Self> {
        let mut rings = Vec::with_capacity(1 + holes.len());
        rings.push(open_ring(exterior));
        rings.extend(holes.into_iter().map(open_ring));
        let polygon = PolygonGeometry { rings };
        polygon.validate()?;
        Ok(polygon)
    }

    /// Builds without validation; used for pixel-space copies of an already
    /// validated polygon.
    pub fn from_rings_unchecked(rings: Vec<Vec<Point>>) -> Self {
        PolygonGeometry {
            rings: rings.into_iter().map(open_ring).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        for (i, ring) in self.rings.iter().enumerate() {
            if ring.len() < 3 {
                return Err(Error::DegenerateGeometry(format!(
                    "ring {i} has {} distinct vertices",
                    ring.len()
                )));
            }
            if ring.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::DegenerateGeometry(format!(
                    "ring {i} has non-finite coordinates"
                )));
            }
            if signed_area(ring) == 0.0 {
                return Err(Error::DegenerateGeometry(format!("ring {i} has zero area")));
            }
            if let Some((a, b)) = self_intersection(ring) {
                return Err(Error::DegenerateGeometry(format!(
                    "ring {i} self-intersects between edges {a} and {b}"
                )));
            }
        }
        if self.area() <= 0.0 {
            return Err(Error::DegenerateGeometry("polygon area is not positive".into()));
        }
        Ok(())
    }

    pub fn exterior(&self) -> &[Point] {
        &self.rings[0]
    }

    pub fn holes(&self) -> &[Vec<Point>] {
        &self.rings[1..]
    }

    pub fn rings(&self) -> &[Vec<Point>] {
        &self.rings
    }

    /// Exterior area minus hole areas.
    pub fn area(&self) -> f64 {
        let outer = signed_area(&self.rings[0]).abs();
        let holes: f64 = self.holes().iter().map(|h| signed_area(h).abs()).sum();
        outer - holes
    }

    /// Area-weighted centroid (holes subtract).
    pub fn centroid(&self) -> Point {
        let mut total = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        for (i, ring) in self.rings.iter().enumerate() {
            let a = signed_area(ring);
            // Orientation-independent: exterior adds, holes subtract.
            let weight = if i == 0 { a.abs() } else { -a.abs() };
            let [rx, ry] = ring_centroid(ring, a);
            cx += weight * rx;
            cy += weight * ry;
            total += weight;
        }
        [cx / total, cy / total]
    }

    pub fn bounds(&self) -> (Point, Point) {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for v in &self.rings[0] {
            min = [min[0].min(v[0]), min[1].min(v[1])];
            max = [max[0].max(v[0]), max[1].max(v[1])];
        }
        (min, max)
    }

    /// Even-odd point-in-polygon test.
    pub fn contains(&self, p: Point) -> bool {
        let mut inside = false;
        for ring in &self.rings {
            for_each_crossing(ring, p[1], |x_cross| {
                if p[0] < x_cross {
                    inside = !inside;
                }
            });
        }
        inside
    }

    /// Crossing abscissae of the horizontal line `y` with every ring, sorted.
    ///
    /// A point `(x, y)` is inside iff an odd number of entries exceed `x`.
    pub fn crossings(&self, y: f64) -> Vec<f64> {
        let mut xs = Vec::new();
        for ring in &self.rings {
            for_each_crossing(ring, y, |x| xs.push(x));
        }
        xs.sort_by(|a, b| a.total_cmp(b));
        xs
    }

    pub fn map_points(&self, f: impl Fn(Point) -> Point) -> PolygonGeometry {
        PolygonGeometry {
            rings: self
                .rings
                .iter()
                .map(|r| r.iter().map(|&p| f(p)).collect())
                .collect(),
        }
    }
}

impl Serialize for PolygonGeometry {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let closed: Vec<Vec<Point>> = self
            .rings
            .iter()
            .map(|r| {
                let mut c = r.clone();
                c.push(r[0]);
                c
            })
            .collect();
        closed.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PolygonGeometry {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let mut rings = Vec::<Vec<Point>>::deserialize(d)?;
        if rings.is_empty() {
            return Err(serde::de::Error::custom("polygon needs an exterior ring"));
        }
        let exterior = rings.remove(0);
        PolygonGeometry::new(exterior, rings).map_err(serde::de::Error::custom)
    }
}

fn open_ring(mut ring: Vec<Point>) -> Vec<Point> {
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring.dedup();
    ring
}

#[inline]
fn for_each_crossing(ring: &[Point], y: f64, mut f: impl FnMut(f64)) {
    let n = ring.len();
    let mut j = n - 1;
    for i in 0..n {
        let [xi, yi] = ring[i];
        let [xj, yj] = ring[j];
        if (yi > y) != (yj > y) {
            f((xj - xi) * (y - yi) / (yj - yi) + xi);
        }
        j = i;
    }
}

fn signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    let mut acc = 0.0;
    for i in 0..n {
        let [x0, y0] = ring[i];
        let [x1, y1] = ring[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    acc / 2.0
}

fn ring_centroid(ring: &[Point], signed: f64) -> Point {
    let n = ring.len();
    // Shift to the first vertex for numerical stability with projected coordinates.
    let [ox, oy] = ring[0];
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let (x0, y0) = (ring[i][0] - ox, ring[i][1] - oy);
        let (x1, y1) = (ring[(i + 1) % n][0] - ox, ring[(i + 1) % n][1] - oy);
        let cross = x0 * y1 - x1 * y0;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    [ox + cx / (6.0 * signed), oy + cy / (6.0 * signed)]
}

fn orientation(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = orientation(q1, q2, p1);
    let d2 = orientation(q1, q2, p2);
    let d3 = orientation(p1, p2, q1);
    let d4 = orientation(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// First pair of non-adjacent intersecting edges, if any. O(n²).
fn self_intersection(ring: &[Point]) -> Option<(usize, usize)> {
    let n = ring.len();
    if n < 4 {
        return None;
    }
    for i in 0..n {
        let (a1, a2) = (ring[i], ring[(i + 1) % n]);
        for j in (i + 1)..n {
            // Adjacent edges share a vertex by construction.
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (b1, b2) = (ring[j], ring[(j + 1) % n]);
            if segments_intersect(a1, a2, b1, b2) {
                return Some((i, j));
            }
        }
    }
    None
}

//! Footprint geometry: polygons, convex hulls, a local metric projection and
//! fixed-radius buffering of convex hulls.
//!
//! Polygons are stored as open rings (no repeated closing vertex) in
//! counter-clockwise order.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use crate::{Error, Result};

/// Mean Earth radius used by the local projection.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
/// Default capture buffer around a building hull.
pub const DEFAULT_BUFFER_RADIUS_M: f64 = 100.0;
pub const DEFAULT_ARC_SEGMENTS: usize = 64;
/// Maximum offset (degrees) between a projected vertex and the projection origin.
pub const MAX_PROJECTION_OFFSET_DEG: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Twice the signed area of triangle `o, a, b`; positive for a left turn.
#[inline]
pub fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bbox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    /// Cleans and validates a ring: drops the closing vertex and consecutive
    /// duplicates, enforces counter-clockwise winding, and rejects
    /// degenerate or self-intersecting rings.
    pub fn new(ring: Vec<Point>) -> Result<Self> {
        if ring.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite { what: "polygon vertex" });
        }
        let mut vertices: Vec<Point> = Vec::with_capacity(ring.len());
        for p in ring {
            if vertices.last() != Some(&p) {
                vertices.push(p);
            }
        }
        while vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(Error::DegenerateGeometry("fewer than 3 distinct vertices"));
        }
        if let Some((a, b)) = find_self_intersection(&vertices) {
            return Err(Error::SelfIntersecting { edge_a: a, edge_b: b });
        }
        let signed = signed_area(&vertices);
        if signed == 0.0 {
            return Err(Error::DegenerateGeometry("zero-area ring"));
        }
        if signed < 0.0 {
            vertices.reverse();
        }
        Ok(Polygon { vertices })
    }

    pub(crate) fn from_ccw_unchecked(vertices: Vec<Point>) -> Self {
        Polygon { vertices }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Vertices with the first repeated at the end, as GeoJSON rings expect.
    pub fn closed_ring(&self) -> Vec<Point> {
        let mut ring = self.vertices.clone();
        if let Some(&first) = self.vertices.first() {
            ring.push(first);
        }
        ring
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices).abs()
    }

    pub fn perimeter(&self) -> f64 {
        edges(&self.vertices).map(|(a, b)| libm::hypot(b.x - a.x, b.y - a.y)).sum()
    }

    /// Area centroid.
    pub fn centroid(&self) -> Point {
        let n = self.vertices.len();
        // shift to the first vertex for precision with geographic coordinates
        let o = self.vertices[0];
        let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let (px, py) = (p.x - o.x, p.y - o.y);
            let (qx, qy) = (q.x - o.x, q.y - o.y);
            let c = px * qy - qx * py;
            a2 += c;
            cx += (px + qx) * c;
            cy += (py + qy) * c;
        }
        Point::new(o.x + cx / (3.0 * a2), o.y + cy / (3.0 * a2))
    }

    pub fn bbox(&self) -> Bbox {
        let mut b = Bbox {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        for p in &self.vertices {
            b.min_x = b.min_x.min(p.x);
            b.min_y = b.min_y.min(p.y);
            b.max_x = b.max_x.max(p.x);
            b.max_y = b.max_y.max(p.y);
        }
        b
    }

    /// True when every turn is a left turn or straight.
    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        let scale = self.bbox();
        let extent = (scale.max_x - scale.min_x).max(scale.max_y - scale.min_y);
        let tol = -1e-12 * extent * extent;
        (0..n).all(|i| cross(self.vertices[i], self.vertices[(i + 1) % n], self.vertices[(i + 2) % n]) >= tol)
    }

    /// Even-odd point-in-polygon test. Points exactly on the boundary may fall
    /// either way.
    pub fn contains(&self, p: Point) -> bool {
        let mut inside = false;
        for (a, b) in edges(&self.vertices) {
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Applies a coordinate map that preserves orientation (positive scale factors).
    pub fn map_points(&self, f: impl Fn(Point) -> Point) -> Polygon {
        Polygon { vertices: self.vertices.iter().map(|&p| f(p)).collect() }
    }
}

pub(crate) fn signed_area(ring: &[Point]) -> f64 {
    if ring.len() < 3 {
        return 0.0;
    }
    let o = ring[0];
    let mut s = 0.0;
    for (a, b) in edges(ring) {
        s += (a.x - o.x) * (b.y - o.y) - (b.x - o.x) * (a.y - o.y);
    }
    0.5 * s
}

fn edges(ring: &[Point]) -> impl Iterator<Item = (Point, Point)> + '_ {
    let n = ring.len();
    (0..n).map(move |i| (ring[i], ring[(i + 1) % n]))
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect(p1: Point, p2: Point, p3: Point, p4: Point) -> bool {
    let d1 = cross(p3, p4, p1);
    let d2 = cross(p3, p4, p2);
    let d3 = cross(p1, p2, p3);
    let d4 = cross(p1, p2, p4);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(p3, p4, p1))
        || (d2 == 0.0 && on_segment(p3, p4, p2))
        || (d3 == 0.0 && on_segment(p1, p2, p3))
        || (d4 == 0.0 && on_segment(p1, p2, p4))
}

fn find_self_intersection(ring: &[Point]) -> Option<(usize, usize)> {
    let n = ring.len();
    for i in 0..n {
        let (a1, a2) = (ring[i], ring[(i + 1) % n]);
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
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

/// Convex hull by Andrew's monotone chain. Collinear boundary points are
/// dropped; the result is counter-clockwise starting at the lowest-x vertex.
pub fn convex_hull(points: &[Point]) -> Result<Polygon> {
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite { what: "hull input" });
    }
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(Error::DegenerateGeometry("fewer than 3 distinct points"));
    }
    let mut hull: Vec<Point> = Vec::with_capacity(pts.len() + 1);
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    if hull.len() < 3 {
        return Err(Error::DegenerateGeometry("all points are collinear"));
    }
    Ok(Polygon::from_ccw_unchecked(hull))
}

/// Equirectangular projection about a fixed origin:
/// `x = R·Δlon·cos(lat0)`, `y = R·Δlat` (angles in radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalProjection {
    origin: Point,
    meters_per_deg_x: f64,
    meters_per_deg_y: f64,
}

impl LocalProjection {
    pub fn new(origin: Point) -> Result<Self> {
        if !origin.is_finite() || origin.y.abs() >= 90.0 {
            return Err(Error::InvalidParameter {
                name: "projection origin",
                reason: "latitude must lie strictly inside (-90, 90)",
            });
        }
        let per_deg = EARTH_RADIUS_M * PI / 180.0;
        Ok(LocalProjection {
            origin,
            meters_per_deg_x: per_deg * libm::cos(origin.y.to_radians()),
            meters_per_deg_y: per_deg,
        })
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    /// Meters per degree along (lon, lat).
    pub fn scale(&self) -> (f64, f64) {
        (self.meters_per_deg_x, self.meters_per_deg_y)
    }

    pub fn project(&self, lonlat: Point) -> Point {
        Point::new(
            (lonlat.x - self.origin.x) * self.meters_per_deg_x,
            (lonlat.y - self.origin.y) * self.meters_per_deg_y,
        )
    }

    pub fn unproject(&self, xy: Point) -> Point {
        Point::new(self.origin.x + xy.x / self.meters_per_deg_x, self.origin.y + xy.y / self.meters_per_deg_y)
    }

    pub fn project_polygon(&self, polygon: &Polygon) -> Result<Polygon> {
        let offset = polygon
            .vertices()
            .iter()
            .map(|p| (p.x - self.origin.x).abs().max((p.y - self.origin.y).abs()))
            .fold(0.0, f64::max);
        if offset > MAX_PROJECTION_OFFSET_DEG {
            return Err(Error::ProjectionDistortion { offset_deg: offset });
        }
        Ok(polygon.map_points(|p| self.project(p)))
    }

    pub fn unproject_polygon(&self, polygon: &Polygon) -> Polygon {
        polygon.map_points(|p| self.unproject(p))
    }
}

/// Projects a lon/lat polygon into meters about `origin`.
pub fn to_local_metric(polygon: &Polygon, origin: Point) -> Result<Polygon> {
    LocalProjection::new(origin)?.project_polygon(polygon)
}

/// Polygonal approximation of the Minkowski sum of a convex hull and a disk.
///
/// Each corner's arc gets `arc_segments` points per full turn, rounded up
/// per corner. Arc endpoints sit exactly at `radius` along the edge normals
/// so the straight offset edges are exact; interior arc vertices sit at a
/// radius slightly above `radius`, chosen so each corner fan has exactly the
/// area of its circular sector. Corners that get a single chord keep the
/// chord deficit.
pub fn buffer_polygon(hull: &Polygon, radius: f64, arc_segments: usize) -> Result<Polygon> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidParameter { name: "buffer radius", reason: "must be positive" });
    }
    if arc_segments < 8 {
        return Err(Error::InvalidParameter { name: "arc_segments", reason: "must be at least 8" });
    }
    if !hull.is_convex() {
        return Err(Error::NonConvex);
    }
    let v = hull.vertices();
    let n = v.len();
    let normal_angle = |a: Point, b: Point| libm::atan2(-(b.x - a.x), b.y - a.y);
    let mut out = Vec::with_capacity(n + arc_segments + n);
    for i in 0..n {
        let prev = v[(i + n - 1) % n];
        let cur = v[i];
        let next = v[(i + 1) % n];
        let a0 = normal_angle(prev, cur);
        let a1 = normal_angle(cur, next);
        let mut turn = a1 - a0;
        if turn < 0.0 {
            turn += TAU;
        }
        if turn > TAU - 1e-12 {
            turn = 0.0;
        }
        let at = |angle: f64, r: f64| Point::new(cur.x + r * libm::cos(angle), cur.y + r * libm::sin(angle));
        if turn <= 1e-12 {
            out.push(at(a0, radius));
            continue;
        }
        let steps = libm::ceil(turn * arc_segments as f64 / TAU).max(1.0) as usize;
        let delta = turn / steps as f64;
        let rho = radius * fan_radius_ratio(turn, steps);
        out.push(at(a0, radius));
        for j in 1..steps {
            out.push(at(a0 + delta * j as f64, rho));
        }
        out.push(at(a0 + turn, radius));
    }
    out.dedup();
    if out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    Ok(Polygon::from_ccw_unchecked(out))
}

/// Ratio `c = ρ/r` making a fan of `steps` segments over `turn` radians,
/// endpoints at `r` and interior points at `ρ`, match the sector area `r²·turn/2`.
fn fan_radius_ratio(turn: f64, steps: usize) -> f64 {
    if steps < 2 {
        return 1.0;
    }
    let s = libm::sin(turn / steps as f64);
    let k = (steps - 2) as f64;
    // k·s·c² + 2·s·c − turn = 0
    if k == 0.0 {
        turn / (2.0 * s)
    } else {
        (-s + libm::sqrt(s * s + k * s * turn)) / (k * s)
    }
}

/// Exact area of the Minkowski sum of a convex polygon and a disk.
pub fn minkowski_buffer_area(hull: &Polygon, radius: f64) -> f64 {
    hull.area() + hull.perimeter() * radius + PI * radius * radius
}

#[derive(Debug, Clone, PartialEq)]
pub struct FootprintRecord {
    pub bbl: String,
    pub bin: String,
    /// WGS84 (lon, lat) degrees.
    pub footprint: Polygon,
    /// Floor area in m², joined from attributes.
    pub floor_area: Option<f64>,
    pub assess_total: Option<f64>,
    pub year_built: Option<i32>,
}

impl FootprintRecord {
    pub fn new(bbl: String, bin: String, footprint: Polygon) -> Self {
        FootprintRecord { bbl, bin, footprint, floor_area: None, assess_total: None, year_built: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptureRegion {
    pub building_ref: String,
    /// Convex hull of the footprint in local meters.
    pub hull: Polygon,
    /// Buffered hull in local meters.
    pub buffered: Polygon,
    pub buffer_radius: f64,
    pub projection: LocalProjection,
}

impl CaptureRegion {
    pub fn projection_origin(&self) -> Point {
        self.projection.origin()
    }

    /// Buffered region back in lon/lat degrees.
    pub fn buffered_lonlat(&self) -> Polygon {
        self.projection.unproject_polygon(&self.buffered)
    }
}

/// Hull + buffer for one footprint, projected about the footprint centroid.
pub fn capture_region(record: &FootprintRecord, radius: f64, arc_segments: usize) -> Result<CaptureRegion> {
    let projection = LocalProjection::new(record.footprint.centroid())?;
    let metric = projection.project_polygon(&record.footprint)?;
    let hull = convex_hull(metric.vertices())?;
    let buffered = buffer_polygon(&hull, radius, arc_segments)?;
    let mut building_ref = record.bbl.clone();
    building_ref.push('/');
    building_ref.push_str(&record.bin);
    Ok(CaptureRegion { building_ref, hull, buffered, buffer_radius: radius, projection })
}

/// Keeps the largest-area part of a multi-part geometry; ties keep the first.
pub fn largest_part(parts: Vec<Polygon>) -> Option<Polygon> {
    let mut best: Option<Polygon> = None;
    for part in parts {
        match &best {
            Some(b) if b.area() >= part.area() => {}
            _ => best = Some(part),
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn square(x0: f64, y0: f64, side: f64) -> Polygon {
        Polygon::new(vec![
            Point::new(x0, y0),
            Point::new(x0 + side, y0),
            Point::new(x0 + side, y0 + side),
            Point::new(x0, y0 + side),
        ])
        .unwrap()
    }

    #[test]
    fn cleaning_closes_dedups_and_orients() {
        let cw = vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 0.0),
        ];
        let p = Polygon::new(cw).unwrap();
        assert_eq!(p.len(), 4);
        assert!(signed_area(p.vertices()) > 0.0);
        assert_eq!(p.closed_ring().len(), 5);
    }

    #[test]
    fn rejects_bowtie_and_degenerate() {
        let bowtie =
            vec![Point::new(0.0, 0.0), Point::new(1.0, 1.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        assert!(matches!(Polygon::new(bowtie), Err(Error::SelfIntersecting { .. })));
        let line = vec![Point::new(0.0, 0.0), Point::new(1.0, 1.0), Point::new(2.0, 2.0)];
        assert!(matches!(Polygon::new(line), Err(Error::DegenerateGeometry(_))));
        let two = vec![Point::new(0.0, 0.0), Point::new(1.0, 1.0)];
        assert!(Polygon::new(two).is_err());
    }

    #[test]
    fn hull_of_square_and_center() {
        let pts = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
            Point::new(0.5, 0.5),
        ];
        let h = convex_hull(&pts).unwrap();
        assert_eq!(h.len(), 4);
        assert!(!h.vertices().contains(&Point::new(0.5, 0.5)));
        assert_eq!(h.area(), 1.0);
        assert_eq!(convex_hull(&pts[..4]).unwrap(), h);
    }

    #[test]
    fn hull_rejects_collinear() {
        let pts = [Point::new(0.0, 0.0), Point::new(1.0, 1.0), Point::new(3.0, 3.0)];
        assert!(matches!(convex_hull(&pts), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn projection_examples() {
        let origin = Point::new(-73.98, 40.75);
        let proj = LocalProjection::new(origin).unwrap();
        assert_eq!(proj.project(origin), Point::new(0.0, 0.0));
        let north = proj.project(Point::new(-73.98, 40.751));
        assert!(north.x.abs() < 1e-9);
        assert!((north.y - 111.194_926_644_558_73).abs() < 1e-6);
        let far = square(-72.5, 40.75, 0.01);
        assert!(matches!(proj.project_polygon(&far), Err(Error::ProjectionDistortion { .. })));
    }

    #[test]
    fn buffer_examples() {
        let unit = square(0.0, 0.0, 1.0);
        let b = buffer_polygon(&unit, 1.0, 1024).unwrap();
        let exact = 1.0 + 4.0 + PI;
        assert!(((b.area() - exact) / exact).abs() < 1e-3);

        let tri =
            Polygon::new(vec![Point::new(0.0, 0.0), Point::new(3.0, 0.0), Point::new(0.0, 4.0)]).unwrap();
        let b = buffer_polygon(&tri, 2.0, 1024).unwrap();
        let exact = 6.0 + 24.0 + 4.0 * PI;
        assert!((exact - 42.566_370_614_359_17).abs() < 1e-9);
        assert!(((b.area() - exact) / exact).abs() < 1e-3);

        let tiny = buffer_polygon(&tri, 1e-9, 64).unwrap();
        assert!(((tiny.area() - 6.0) / 6.0).abs() < 1e-6);
        assert!(tiny.is_convex());
    }

    #[test]
    fn buffer_rejects_bad_inputs() {
        let unit = square(0.0, 0.0, 1.0);
        assert!(buffer_polygon(&unit, 0.0, 64).is_err());
        assert!(buffer_polygon(&unit, 1.0, 4).is_err());
        let ell = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 2.0),
            Point::new(0.0, 2.0),
        ])
        .unwrap();
        assert_eq!(buffer_polygon(&ell, 1.0, 64), Err(Error::NonConvex));
    }

    #[test]
    fn largest_part_rule() {
        let parts = vec![square(0.0, 0.0, 1.0), square(5.0, 5.0, 2.0)];
        assert_eq!(largest_part(parts).unwrap().area(), 4.0);
        assert!(largest_part(Vec::new()).is_none());
    }

    #[test]
    fn capture_region_contains_footprint() {
        let fp = square(-73.9855, 40.7580, 0.0003);
        let rec = FootprintRecord::new("1000010001".into(), "1000001".into(), fp.clone());
        let region = capture_region(&rec, 100.0, 64).unwrap();
        assert!(region.buffered.is_convex());
        for &v in fp.vertices() {
            assert!(region.buffered.contains(region.projection.project(v)));
        }
        assert_eq!(region.building_ref, "1000010001/1000001");
    }
}

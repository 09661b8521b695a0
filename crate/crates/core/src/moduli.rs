//! Generalized edges: line segments in the moduli space R^4 \ {0} of plane
//! segments, the plane regions they sweep out, and triangulation of
//! polygons into generalized edges.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::figures::{
    cross, dist, point_segment_distance, polygon_contains, Extent, Figure, RasterImage,
};
use crate::group::{BallSpec, Gl2, Point};
use crate::stabilizer::{compare_features, FeatureHit, FigureTarget, StabilizerTarget};

/// Segments sampled uniformly in t before refinement.
pub const DEFAULT_SWEEP_STEPS: usize = 257;

/// A plane segment as its two endpoints.
pub type Segment = [Point; 2];

fn to_segment(v: [f64; 4]) -> Segment {
    [[v[0], v[1]], [v[2], v[3]]]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralizedEdge {
    p1: [f64; 4],
    p2: [f64; 4],
}

impl GeneralizedEdge {
    /// Endpoints of each segment are put in lexicographic order.
    pub fn new(p1: [f64; 4], p2: [f64; 4]) -> Result<Self> {
        Self::with_pairing(normalize(p1), normalize(p2))
    }

    /// Keeps the caller's endpoint pairing.
    pub fn with_pairing(p1: [f64; 4], p2: [f64; 4]) -> Result<Self> {
        if p1.iter().chain(&p2).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite moduli coordinate".into()));
        }
        if p1 == [0.0; 4] || p2 == [0.0; 4] {
            return Err(Error::InvalidInput("the zero 4-vector is not in the moduli space".into()));
        }
        if p1 == p2 {
            return Err(Error::InvalidInput("generalized edge needs P1 != P2".into()));
        }
        Ok(Self { p1, p2 })
    }

    pub fn p1(&self) -> [f64; 4] {
        self.p1
    }

    pub fn p2(&self) -> [f64; 4] {
        self.p2
    }

    /// Applies `g` to every endpoint.
    pub fn transformed(&self, g: &Gl2) -> Result<Self> {
        let map = |v: [f64; 4]| {
            let a = g.apply([v[0], v[1]]);
            let b = g.apply([v[2], v[3]]);
            [a[0], a[1], b[0], b[1]]
        };
        Self::with_pairing(map(self.p1), map(self.p2))
    }

    /// All four endpoints on one line, so every swept segment is too and
    /// the region has no area.
    pub fn is_flat(&self) -> bool {
        let (a, b) = (to_segment(self.p1), to_segment(self.p2));
        let pts = [a[0], a[1], b[0], b[1]];
        let scale = pts.iter().flat_map(|p| p.iter()).fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let (i, j) = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .max_by(|&(i, j), &(k, l)| dist(pts[i], pts[j]).total_cmp(&dist(pts[k], pts[l])))
            .expect("four points");
        let (o, d) = (pts[i], [pts[j][0] - pts[i][0], pts[j][1] - pts[i][1]]);
        pts.iter().all(|p| cross(d, [p[0] - o[0], p[1] - o[1]]).abs() <= 1e-12 * scale * scale)
    }

    /// Boundary loop P1a, P1b, P2b, P2a of the swept region.
    pub fn boundary(&self) -> Figure {
        let (a, b) = (to_segment(self.p1), to_segment(self.p2));
        Figure::Swept { points: vec![a[0], a[1], b[1], b[0]] }
    }
}

fn normalize(v: [f64; 4]) -> [f64; 4] {
    if (v[2], v[3]) < (v[0], v[1]) {
        [v[2], v[3], v[0], v[1]]
    } else {
        v
    }
}

/// The segment `(1 - t) P1 + t P2`.
pub fn interpolate(ge: &GeneralizedEdge, t: f64) -> Result<Segment> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("interpolation parameter {t} outside [0, 1]")));
    }
    Ok(interpolate_unchecked(ge, t))
}

fn interpolate_unchecked(ge: &GeneralizedEdge, t: f64) -> Segment {
    let mut v = [0.0; 4];
    for i in 0..4 {
        v[i] = (1.0 - t) * ge.p1[i] + t * ge.p2[i];
    }
    to_segment(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweptRegion {
    /// Sampled segments with their parameter, in increasing t.
    pub segments: Vec<(f64, Segment)>,
    pub raster: RasterImage,
}

fn gap(a: &Segment, b: &Segment) -> f64 {
    dist(a[0], b[0]).max(dist(a[1], b[1]))
}

/// Samples `steps` uniform parameters, then bisects every interval whose
/// segments are more than `max_gap` apart.
pub fn sweep_segments(ge: &GeneralizedEdge, steps: usize, max_gap: f64) -> Result<Vec<(f64, Segment)>> {
    if steps < 2 {
        return Err(Error::InvalidInput(format!("sweep needs at least 2 steps, got {steps}")));
    }
    if !(max_gap > 0.0) {
        return Err(Error::InvalidInput("refinement gap must be positive".into()));
    }
    let mut out = Vec::new();
    let mut prev = (0.0, interpolate_unchecked(ge, 0.0));
    out.push(prev);
    for k in 1..steps {
        let t = k as f64 / (steps - 1) as f64;
        let next = (t, interpolate_unchecked(ge, t));
        refine(ge, prev, next, max_gap, &mut out);
        out.push(next);
        prev = next;
    }
    Ok(out)
}

fn refine(ge: &GeneralizedEdge, a: (f64, Segment), b: (f64, Segment), max_gap: f64, out: &mut Vec<(f64, Segment)>) {
    if gap(&a.1, &b.1) <= max_gap || b.0 - a.0 < 1e-12 {
        return;
    }
    let t = 0.5 * (a.0 + b.0);
    let mid = (t, interpolate_unchecked(ge, t));
    refine(ge, a, mid, max_gap, out);
    out.push(mid);
    refine(ge, mid, b, max_gap, out);
}

/// Fills the region swept by the generalized edge. Adjacent sampled
/// segments bound a quadrilateral (a bowtie when they cross); a pixel is set
/// when its center lies in one of them. Flat sweeps are stroked.
pub fn sweep(ge: &GeneralizedEdge, steps: usize, side: usize, extent: Extent) -> Result<SweptRegion> {
    let mut raster = RasterImage::empty(side, extent, "swept");
    let w = raster.pixel_width();
    let segments = sweep_segments(ge, steps, w)?;
    let quads: Vec<[Point; 4]> =
        segments.windows(2).map(|p| [p[0].1[0], p[0].1[1], p[1].1[1], p[1].1[0]]).collect();
    if ge.is_flat() {
        let segs: Vec<Segment> = segments.iter().map(|s| s.1).collect();
        stroke_segments(&mut raster, &segs, 0.5 * w * (1.0 + 1e-9));
    } else {
        for q in &quads {
            fill_quad(&mut raster, q);
        }
    }
    Ok(SweptRegion { segments, raster })
}

fn fill_quad(img: &mut RasterImage, q: &[Point; 4]) {
    let w = img.pixel_width();
    let tol = 1e-9 * w;
    let Some((r0, r1, c0, c1)) = window(img, q.iter().copied(), 0.0) else { return };
    for r in r0..r1 {
        for c in c0..c1 {
            if img.get(r, c) {
                continue;
            }
            let p = img.center(r, c);
            let on_edge = (0..4).any(|i| point_segment_distance(p, q[i], q[(i + 1) % 4]) <= tol);
            if on_edge || polygon_contains(p, q) {
                img.set(r, c, true);
            }
        }
    }
}

/// Rows and columns (half-open) whose centers can fall within `pad` of the
/// points' bounding box.
fn window(img: &RasterImage, pts: impl Iterator<Item = Point>, pad: f64) -> Option<(usize, usize, usize, usize)> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in pts {
        for i in 0..2 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let e = img.extent();
    let w = img.pixel_width();
    let n = img.side() as f64;
    // column c has center x = min + (c + 0.5) w; row r has y = min + size - (r + 0.5) w
    let c0 = ((lo[0] - pad - e.min[0]) / w - 0.5).ceil().max(0.0);
    let c1 = ((hi[0] + pad - e.min[0]) / w - 0.5).floor().min(n - 1.0);
    let top = e.min[1] + e.size;
    let r0 = ((top - hi[1] - pad) / w - 0.5).ceil().max(0.0);
    let r1 = ((top - lo[1] + pad) / w - 0.5).floor().min(n - 1.0);
    (c0 <= c1 && r0 <= r1).then(|| (r0 as usize, r1 as usize + 1, c0 as usize, c1 as usize + 1))
}

/// Sets every pixel whose center lies within `half` of one of the segments,
/// walking each segment rather than scanning its bounding box.
fn stroke_segments(img: &mut RasterImage, segs: &[Segment], half: f64) {
    let w = img.pixel_width();
    for s in segs {
        let len = dist(s[0], s[1]);
        let n = (len / (0.5 * w)).ceil().max(1.0) as usize;
        let mut last = None;
        for k in 0..=n {
            let u = k as f64 / n as f64;
            let p = [s[0][0] + u * (s[1][0] - s[0][0]), s[0][1] + u * (s[1][1] - s[0][1])];
            // samples are w/2 apart, so every point of the segment is within w/4 of one
            let Some(win) = window(img, std::iter::once(p), half + 0.25 * w * (1.0 + 1e-9)) else { continue };
            if last == Some(win) {
                continue;
            }
            last = Some(win);
            let (r0, r1, c0, c1) = win;
            for r in r0..r1 {
                for c in c0..c1 {
                    if !img.get(r, c) && point_segment_distance(img.center(r, c), s[0], s[1]) <= half {
                        img.set(r, c, true);
                    }
                }
            }
        }
    }
}

/// Brute-force reference raster: `family` segments at uniform t are stroked
/// at `factor` times the resolution with a stroke just wide enough to close
/// the gaps between neighbours; a pixel is set when at least half of its
/// sub-pixels are.
pub fn union_oracle(ge: &GeneralizedEdge, family: usize, side: usize, extent: Extent, factor: usize) -> Result<RasterImage> {
    if family < 2 || factor == 0 {
        return Err(Error::InvalidInput("oracle needs family >= 2 and factor >= 1".into()));
    }
    let segs: Vec<Segment> = (0..family).map(|k| interpolate_unchecked(ge, k as f64 / (family - 1) as f64)).collect();
    let spacing = segs.windows(2).map(|p| gap(&p[0], &p[1])).fold(0.0, f64::max);
    let mut fine = RasterImage::empty(side * factor, extent, "oracle");
    let half = (0.5 * spacing).max(1e-9 * fine.pixel_width()) * 1.01;
    stroke_segments(&mut fine, &segs, half);
    Ok(downsample_majority(&fine, factor))
}

/// A coarse pixel is set when at least half of its `factor^2` sub-pixels are.
pub fn downsample_majority(fine: &RasterImage, factor: usize) -> RasterImage {
    let side = fine.side() / factor;
    let mut out = RasterImage::empty(side, fine.extent(), fine.label());
    let need = (factor * factor).div_ceil(2);
    for r in 0..side {
        for c in 0..side {
            let mut k = 0;
            for i in 0..factor {
                for j in 0..factor {
                    k += fine.get(r * factor + i, c * factor + j) as usize;
                }
            }
            if k >= need {
                out.set(r, c, true);
            }
        }
    }
    out
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o = |p: Point, q: Point, r: Point| cross([q[0] - p[0], q[1] - p[1]], [r[0] - p[0], r[1] - p[1]]);
    let (d1, d2, d3, d4) = (o(c, d, a), o(c, d, b), o(a, b, c), o(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |p: Point, q: Point, r: Point| point_segment_distance(r, p, q) == 0.0;
    (d1 == 0.0 && on(c, d, a)) || (d2 == 0.0 && on(c, d, b)) || (d3 == 0.0 && on(a, b, c)) || (d4 == 0.0 && on(a, b, d))
}

fn is_simple(pts: &[Point]) -> bool {
    let n = pts.len();
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_cross(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

fn in_triangle(p: Point, a: Point, b: Point, c: Point) -> bool {
    let s = |u: Point, v: Point| cross([v[0] - u[0], v[1] - u[1]], [p[0] - u[0], p[1] - u[1]]);
    s(a, b) >= 0.0 && s(b, c) >= 0.0 && s(c, a) >= 0.0
}

/// Ear-clipping triangulation of a simple polygon.
pub fn triangulate(vertices: &[Point]) -> Result<Vec<[Point; 3]>> {
    let n = vertices.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("polygon needs at least 3 vertices, got {n}")));
    }
    if (0..n).any(|i| vertices[i] == vertices[(i + 1) % n]) {
        return Err(Error::InvalidInput("polygon has repeated consecutive vertices".into()));
    }
    if !is_simple(vertices) {
        return Err(Error::SelfIntersecting);
    }
    let signed: f64 = (0..n).map(|i| cross(vertices[i], vertices[(i + 1) % n])).sum();
    let mut idx: Vec<usize> = (0..n).collect();
    if signed < 0.0 {
        idx.reverse();
    }
    let mut tris = Vec::with_capacity(n - 2);
    while idx.len() > 3 {
        let m = idx.len();
        let ear = (0..m).find(|&i| {
            let (a, b, c) = (vertices[idx[(i + m - 1) % m]], vertices[idx[i]], vertices[idx[(i + 1) % m]]);
            let convex = cross([b[0] - a[0], b[1] - a[1]], [c[0] - b[0], c[1] - b[1]]) > 0.0;
            convex
                && idx
                    .iter()
                    .map(|&k| vertices[k])
                    .filter(|&p| p != a && p != b && p != c)
                    .all(|p| !in_triangle(p, a, b, c))
        });
        // only collinear runs remain: clip the flattest vertex
        let i = ear.unwrap_or_else(|| {
            (0..m)
                .min_by(|&i, &j| {
                    let area = |i: usize| {
                        let (a, b, c) = (vertices[idx[(i + m - 1) % m]], vertices[idx[i]], vertices[idx[(i + 1) % m]]);
                        cross([b[0] - a[0], b[1] - a[1]], [c[0] - b[0], c[1] - b[1]]).abs()
                    };
                    area(i).total_cmp(&area(j))
                })
                .expect("polygon has vertices")
        });
        tris.push([vertices[idx[(i + m - 1) % m]], vertices[idx[i]], vertices[idx[(i + 1) % m]]]);
        idx.remove(i);
    }
    tris.push([vertices[idx[0]], vertices[idx[1]], vertices[idx[2]]]);
    Ok(tris)
}

/// Each triangle (v0, v1, v2) becomes the generalized edge with the shared
/// start P1 = (v0, v1), P2 = (v0, v2).
pub fn triangulate_to_generalized_edges(poly: &Figure) -> Result<Vec<GeneralizedEdge>> {
    let Figure::Polygon { vertices } = poly else {
        return Err(Error::UnsupportedFigure(format!("triangulation needs a polygon, got {}", poly.kind())));
    };
    triangulate(vertices)?
        .iter()
        .map(|[a, b, c]| GeneralizedEdge::with_pairing([a[0], a[1], b[0], b[1]], [a[0], a[1], c[0], c[1]]))
        .collect()
}

/// Union of the sweeps of several generalized edges.
pub fn sweep_union(edges: &[GeneralizedEdge], steps: usize, side: usize, extent: Extent) -> Result<RasterImage> {
    let mut out = RasterImage::empty(side, extent, "swept");
    for ge in edges {
        out.union_with(&sweep(ge, steps, side, extent)?.raster);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastReport {
    pub edge: FeatureHit,
    pub other: FeatureHit,
    /// Edge fraction minus the other fraction.
    pub gap: f64,
    /// The gap in combined binomial standard errors.
    pub separation: f64,
}

/// Stabilizer hit fractions of a reference edge and another figure on a
/// shared sample stream.
pub fn complexity_contrast(
    reference: &FigureTarget,
    figure: &FigureTarget,
    ball: &BallSpec,
    eps: f64,
    count: usize,
) -> Result<ContrastReport> {
    let targets: [&dyn StabilizerTarget; 2] = [reference, figure];
    let hits = compare_features(&targets, ball, eps, count)?;
    let find = |id: &str| hits.iter().find(|h| h.figure_id == id).cloned();
    let (edge, other) = if reference.id() == figure.id() {
        (hits[0].clone(), hits[1].clone())
    } else {
        (
            find(reference.id()).expect("reference present"),
            find(figure.id()).expect("figure present"),
        )
    };
    Ok(ContrastReport { gap: edge.fraction - other.fraction, separation: edge.separation(&other), edge, other })
}

#[derive(Serialize)]
struct SegmentRow {
    t: f64,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

pub fn write_segments_csv<W: Write>(w: W, segments: &[(f64, Segment)]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    for &(t, s) in segments {
        out.serialize(SegmentRow { t, x1: s[0][0], y1: s[0][1], x2: s[1][0], y2: s[1][1] })?;
    }
    out.flush()?;
    Ok(())
}

/// The three canonical configurations: parallel, shared start, crossing.
pub fn preset(name: &str) -> Result<(GeneralizedEdge, Extent)> {
    let square = Extent::new([-0.25, -0.25], 1.5);
    match name {
        "trapezoid" => Ok((GeneralizedEdge::new([0.0, 0.0, 1.0, 0.0], [0.0, 1.0, 1.0, 1.0])?, square)),
        "triangle" => Ok((GeneralizedEdge::new([0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0])?, square)),
        "butterfly" => Ok((GeneralizedEdge::new([-1.0, -1.0, 1.0, 1.0], [-1.0, 1.0, 1.0, -1.0])?, Extent::centered(1.25))),
        _ => Err(Error::InvalidInput(format!("unknown sweep preset {name:?} (trapezoid, triangle, butterfly)"))),
    }
}

/// Regular hexagon of circumradius 1.
pub fn hexagon() -> Figure {
    Figure::Polygon {
        vertices: (0..6)
            .map(|k| {
                let a = std::f64::consts::PI / 3.0 * k as f64;
                [a.cos(), a.sin()]
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::figures::{polygon_area, rasterize};

    fn close(a: Segment, b: Segment, tol: f64) -> bool {
        (0..2).all(|i| dist(a[i], b[i]) <= tol)
    }

    #[test]
    fn interpolate_examples() {
        let (ge, _) = preset("triangle").unwrap();
        assert_eq!(interpolate(&ge, 0.0).unwrap(), [[0.0, 0.0], [1.0, 0.0]]);
        assert_eq!(interpolate(&ge, 1.0).unwrap(), [[0.0, 0.0], [0.0, 1.0]]);
        assert!(close(interpolate(&ge, 0.5).unwrap(), [[0.0, 0.0], [0.5, 0.5]], 1e-15));
        let (b, _) = preset("butterfly").unwrap();
        assert!(close(interpolate(&b, 0.5).unwrap(), [[-1.0, 0.0], [1.0, 0.0]], 1e-15));
        assert!(interpolate(&b, 1.5).is_err());
    }

    #[test]
    fn interpolate_is_affine() {
        let ge = GeneralizedEdge::new([0.3, -1.2, 2.0, 0.7], [-0.4, 0.9, 1.1, -2.5]).unwrap();
        for (a, b) in [(0.0, 1.0), (0.1, 0.7), (0.33, 0.34)] {
            let m = interpolate(&ge, 0.5 * (a + b)).unwrap();
            let sa = interpolate(&ge, a).unwrap();
            let sb = interpolate(&ge, b).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    assert!((m[i][j] - 0.5 * (sa[i][j] + sb[i][j])).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn construction_rules() {
        assert!(GeneralizedEdge::new([0.0; 4], [1.0, 0.0, 0.0, 1.0]).is_err());
        assert!(GeneralizedEdge::new([1.0, 0.0, 0.0, 1.0], [0.0, 1.0, 1.0, 0.0]).is_err());
        let ge = GeneralizedEdge::new([1.0, 0.0, 0.0, 1.0], [2.0, 2.0, 3.0, 3.0]).unwrap();
        assert_eq!(ge.p1(), [0.0, 1.0, 1.0, 0.0]);
        let raw = GeneralizedEdge::with_pairing([1.0, 0.0, 0.0, 1.0], [2.0, 2.0, 3.0, 3.0]).unwrap();
        assert_eq!(raw.p1(), [1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn refinement_closes_gaps() {
        let (ge, _) = preset("butterfly").unwrap();
        let segs = sweep_segments(&ge, 2, 0.01).unwrap();
        assert!(segs.windows(2).all(|p| gap(&p[0].1, &p[1].1) <= 0.01 && p[0].0 < p[1].0));
        assert!(sweep_segments(&ge, 1, 0.01).is_err());
        for (t, s) in &segs {
            assert!(close(*s, interpolate(&ge, *t).unwrap(), 1e-15));
        }
    }

    fn analytic(side: usize, extent: Extent, inside: impl Fn(Point) -> bool) -> RasterImage {
        let mut img = RasterImage::empty(side, extent, "oracle");
        for r in 0..side {
            for c in 0..side {
                if inside(img.center(r, c)) {
                    img.set(r, c, true);
                }
            }
        }
        img
    }

    #[test]
    fn trapezoid_and_triangle_match_analytic_regions() {
        let (ge, ext) = preset("trapezoid").unwrap();
        let s = sweep(&ge, DEFAULT_SWEEP_STEPS, 128, ext).unwrap();
        let square = analytic(128, ext, |p| (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]));
        assert!(s.raster.iou(&square) >= 0.99, "{}", s.raster.iou(&square));

        let (ge, ext) = preset("triangle").unwrap();
        let s = sweep(&ge, DEFAULT_SWEEP_STEPS, 128, ext).unwrap();
        let tri = analytic(128, ext, |p| p[0] >= 0.0 && p[1] >= 0.0 && p[0] + p[1] <= 1.0);
        assert!(s.raster.iou(&tri) >= 0.99, "{}", s.raster.iou(&tri));
    }

    #[test]
    fn butterfly_is_symmetric_and_matches_oracle() {
        let (ge, ext) = preset("butterfly").unwrap();
        let s = sweep(&ge, DEFAULT_SWEEP_STEPS, 128, ext).unwrap();
        let img = &s.raster;
        let n = img.side();
        for r in 0..n {
            for c in 0..n {
                assert_eq!(img.get(r, c), img.get(n - 1 - r, c));
                assert_eq!(img.get(r, c), img.get(n - 1 - r, n - 1 - c));
            }
        }
        let oracle = union_oracle(&ge, 4096, 128, ext, 4).unwrap();
        assert!(img.iou(&oracle) >= 0.99, "{}", img.iou(&oracle));
    }

    #[test]
    fn sweep_commutes_with_gl2() {
        let (ge, ext) = preset("trapezoid").unwrap();
        let g = Gl2::new([[0.8, 0.3], [-0.2, 0.6]]).unwrap();
        let moved = ge.transformed(&g).unwrap();
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            let a = interpolate(&moved, t).unwrap();
            let b = interpolate(&ge, t).unwrap();
            assert!(close(a, [g.apply(b[0]), g.apply(b[1])], 1e-12));
        }
        let s = sweep(&moved, DEFAULT_SWEEP_STEPS, 128, ext).unwrap();
        let gi = g.inverse();
        let want = analytic(128, ext, |p| {
            let q = gi.apply(p);
            (0.0..=1.0).contains(&q[0]) && (0.0..=1.0).contains(&q[1])
        });
        assert!(s.raster.iou(&want) >= 0.99, "{}", s.raster.iou(&want));
    }

    #[test]
    fn triangulation_counts_and_area() {
        let tri = Figure::Polygon { vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]] };
        assert_eq!(triangulate_to_generalized_edges(&tri).unwrap().len(), 1);
        let hex = hexagon();
        assert_eq!(triangulate_to_generalized_edges(&hex).unwrap().len(), 4);
        let Figure::Polygon { vertices } = &hex else { unreachable!() };
        let total: f64 = triangulate(vertices).unwrap().iter().map(|t| polygon_area(t)).sum();
        assert!((total - polygon_area(vertices)).abs() <= 1e-9 * polygon_area(vertices));

        // clockwise, nonconvex
        let l = vec![[0.0, 0.0], [0.0, 2.0], [1.0, 2.0], [1.0, 1.0], [2.0, 1.0], [2.0, 0.0]];
        let tris = triangulate(&l).unwrap();
        assert_eq!(tris.len(), 4);
        let total: f64 = tris.iter().map(|t| polygon_area(t)).sum();
        assert!((total - 3.0).abs() < 1e-12);

        let bow = Figure::Polygon { vertices: vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]] };
        assert!(matches!(triangulate_to_generalized_edges(&bow), Err(Error::SelfIntersecting)));
        assert!(triangulate_to_generalized_edges(&Figure::circle(1.0)).is_err());
    }

    #[test]
    fn quadrilateral_sweeps_cover_fill() {
        let quad = Figure::Polygon { vertices: vec![[-0.9, -0.7], [0.8, -0.9], [0.6, 0.8], [-0.7, 0.5]] };
        let ext = Extent::centered(1.0);
        let edges = triangulate_to_generalized_edges(&quad).unwrap();
        assert_eq!(edges.len(), 2);
        let union = sweep_union(&edges, DEFAULT_SWEEP_STEPS, 128, ext).unwrap();
        let fill = rasterize(&quad, 128, ext).unwrap();
        assert!(union.iou(&fill) >= 0.99, "{}", union.iou(&fill));
    }

    #[test]
    fn degenerate_sweep_is_stroked() {
        let ge = GeneralizedEdge::new([0.0, 0.0, 1.0, 0.0], [0.5, 0.0, 1.5, 0.0]).unwrap();
        let s = sweep(&ge, 5, 32, Extent::centered(2.0)).unwrap();
        assert!(s.raster.count() > 0);
    }

    #[test]
    fn segments_csv_format() {
        let (ge, _) = preset("triangle").unwrap();
        let segs = sweep_segments(&ge, 2, 10.0).unwrap();
        let mut buf = Vec::new();
        write_segments_csv(&mut buf, &segs).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,x1,y1,x2,y2\n0.0,0.0,0.0,1.0,0.0\n1.0,0.0,0.0,0.0,1.0\n");
    }
}

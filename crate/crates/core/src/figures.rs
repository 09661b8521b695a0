//! Figures over the plane, Hausdorff distances between them, rasterization and
//! the analytic GL2 stabilizer dimensions of the basic shapes.

use std::f64::consts::TAU;
use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::group::{Gl2, Point};

/// Default number of boundary samples per figure.
pub const DEFAULT_SAMPLES: usize = 256;

/// Dimension of GL2(R) as a manifold.
pub const GL2_DIM: u32 = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum Figure {
    /// The symmetric segment `[-L u, L u]`, `u = (cos angle, sin angle)`.
    Edge { angle: f64, half_length: f64 },
    Segment { p1: Point, p2: Point },
    Circle { center: Point, radius: f64 },
    /// `center + R(angle) (a cos s, b sin s)`.
    Ellipse { center: Point, semi_axes: (f64, f64), angle: f64 },
    /// Closed polygon; rendered filled.
    Polygon { vertices: Vec<Point> },
    PointCloud { points: Vec<Point> },
    /// Boundary of a swept region as a closed polyline; rendered filled.
    Swept { points: Vec<Point> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    Edge,
    Segment,
    Circle,
    Ellipse,
    Polygon,
    PointCloud,
    Swept,
}

impl fmt::Display for FigureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FigureKind::Edge => "edge",
            FigureKind::Segment => "segment",
            FigureKind::Circle => "circle",
            FigureKind::Ellipse => "ellipse",
            FigureKind::Polygon => "polygon",
            FigureKind::PointCloud => "pointcloud",
            FigureKind::Swept => "swept",
        };
        f.write_str(s)
    }
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

pub fn dist(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

pub(crate) fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let ap = sub(p, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return norm(ap);
    }
    let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

fn closed_polyline_distance(p: Point, pts: &[Point]) -> f64 {
    match pts.len() {
        0 => f64::INFINITY,
        1 => dist(p, pts[0]),
        n => (0..n)
            .map(|i| point_segment_distance(p, pts[i], pts[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Even-odd containment for a closed polygon (possibly self-intersecting).
pub fn polygon_contains(p: Point, pts: &[Point]) -> bool {
    let n = pts.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (pts[i], pts[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Shoelace area of a closed polygon (absolute value).
pub fn polygon_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    (0..n).map(|i| cross(pts[i], pts[(i + 1) % n])).sum::<f64>().abs() / 2.0
}

/// Distance from `p` to the ellipse with semi-axes `a`, `b` centered at the
/// origin and aligned with the axes.
fn axis_ellipse_distance(p: Point, a: f64, b: f64) -> f64 {
    let (a, b, y0, y1) = if a >= b { (a, b, p[0].abs(), p[1].abs()) } else { (b, a, p[1].abs(), p[0].abs()) };
    if b <= 0.0 {
        return point_segment_distance([y0, y1], [-a, 0.0], [a, 0.0]);
    }
    if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / a;
            let z1 = y1 / b;
            if z0 * z0 + z1 * z1 == 1.0 {
                return 0.0;
            }
            let r0 = (a / b) * (a / b);
            let s = ellipse_multiplier(r0, z0, z1);
            let x0 = r0 * y0 / (s + r0);
            let x1 = y1 / (s + 1.0);
            dist([x0, x1], [y0, y1])
        } else {
            (y1 - b).abs()
        }
    } else {
        let numer0 = a * y0;
        let denom0 = a * a - b * b;
        if numer0 < denom0 {
            let xde0 = numer0 / denom0;
            let x0 = a * xde0;
            let x1 = b * (1.0 - xde0 * xde0).max(0.0).sqrt();
            dist([x0, x1], [y0, 0.0])
        } else {
            (y0 - a).abs()
        }
    }
}

/// Root of `G(s) = (r0 z0 / (s + r0))^2 + (z1 / (s + 1))^2 - 1` for `s > -1`.
/// `G` is convex and decreasing there and `G(z1 - 1) >= 0`, so Newton's
/// method started at `z1 - 1` increases monotonically to the root.
fn ellipse_multiplier(r0: f64, z0: f64, z1: f64) -> f64 {
    let n0 = r0 * z0;
    let mut s = z1 - 1.0;
    for _ in 0..100 {
        let ratio0 = n0 / (s + r0);
        let ratio1 = z1 / (s + 1.0);
        let g = ratio0 * ratio0 + ratio1 * ratio1 - 1.0;
        if g <= 0.0 {
            break;
        }
        let dg = -2.0 * (ratio0 * ratio0 / (s + r0) + ratio1 * ratio1 / (s + 1.0));
        let next = s - g / dg;
        if next <= s {
            break;
        }
        s = next;
    }
    s
}

/// Arc-length samples along a closed polyline.
fn sample_closed_polyline(pts: &[Point], n: usize) -> Vec<Point> {
    match pts.len() {
        0 => return Vec::new(),
        1 => return vec![pts[0]; n],
        _ => {}
    }
    let m = pts.len();
    let lens: Vec<f64> = (0..m).map(|i| dist(pts[i], pts[(i + 1) % m])).collect();
    let total: f64 = lens.iter().sum();
    if total == 0.0 {
        return vec![pts[0]; n];
    }
    let mut out = Vec::with_capacity(n);
    let mut edge = 0;
    let mut start = 0.0;
    for k in 0..n {
        let s = total * k as f64 / n as f64;
        while edge + 1 < m && s > start + lens[edge] {
            start += lens[edge];
            edge += 1;
        }
        let t = if lens[edge] > 0.0 { ((s - start) / lens[edge]).clamp(0.0, 1.0) } else { 0.0 };
        let a = pts[edge];
        let b = pts[(edge + 1) % m];
        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    out
}

/// Closed-form SVD of a 2x2 matrix: returns (rotation angle of U, s1, s2)
/// with `s1 >= s2 >= 0`.
fn svd2(m: [[f64; 2]; 2]) -> (f64, f64, f64) {
    let e = (m[0][0] + m[1][1]) / 2.0;
    let f = (m[0][0] - m[1][1]) / 2.0;
    let g = (m[1][0] + m[0][1]) / 2.0;
    let h = (m[1][0] - m[0][1]) / 2.0;
    let q = e.hypot(h);
    let r = f.hypot(g);
    let a1 = g.atan2(f);
    let a2 = h.atan2(e);
    let phi = (a2 + a1) / 2.0;
    (phi, q + r, (q - r).abs())
}

impl Figure {
    pub fn kind(&self) -> FigureKind {
        match self {
            Figure::Edge { .. } => FigureKind::Edge,
            Figure::Segment { .. } => FigureKind::Segment,
            Figure::Circle { .. } => FigureKind::Circle,
            Figure::Ellipse { .. } => FigureKind::Ellipse,
            Figure::Polygon { .. } => FigureKind::Polygon,
            Figure::PointCloud { .. } => FigureKind::PointCloud,
            Figure::Swept { .. } => FigureKind::Swept,
        }
    }

    pub fn edge(angle: f64, half_length: f64) -> Self {
        Figure::Edge { angle, half_length }
    }

    pub fn circle(radius: f64) -> Self {
        Figure::Circle { center: [0.0, 0.0], radius }
    }

    pub fn ellipse(a: f64, b: f64, angle: f64) -> Self {
        Figure::Ellipse { center: [0.0, 0.0], semi_axes: (a, b), angle }
    }

    fn edge_ends(angle: f64, half_length: f64) -> (Point, Point) {
        let (s, c) = angle.sin_cos();
        ([-half_length * c, -half_length * s], [half_length * c, half_length * s])
    }

    /// `n` points at uniform parameter spacing along the figure. Open curves
    /// include both ends; closed curves start at parameter 0 and stop one step
    /// short of closing. A point cloud is sampled by uniform index spacing
    /// (and yields nothing when empty).
    pub fn sample_points(&self, n: usize) -> Vec<Point> {
        match self {
            Figure::Edge { angle, half_length } => {
                let (a, b) = Self::edge_ends(*angle, *half_length);
                sample_segment(a, b, n)
            }
            Figure::Segment { p1, p2 } => sample_segment(*p1, *p2, n),
            Figure::Circle { center, radius } => (0..n)
                .map(|k| {
                    let (s, c) = (TAU * k as f64 / n as f64).sin_cos();
                    [center[0] + radius * c, center[1] + radius * s]
                })
                .collect(),
            Figure::Ellipse { center, semi_axes: (a, b), angle } => {
                let (sa, ca) = angle.sin_cos();
                (0..n)
                    .map(|k| {
                        let (s, c) = (TAU * k as f64 / n as f64).sin_cos();
                        let (x, y) = (a * c, b * s);
                        [center[0] + ca * x - sa * y, center[1] + sa * x + ca * y]
                    })
                    .collect()
            }
            Figure::Polygon { vertices } => sample_closed_polyline(vertices, n),
            Figure::Swept { points } => sample_closed_polyline(points, n),
            Figure::PointCloud { points } => {
                if points.is_empty() {
                    return Vec::new();
                }
                (0..n).map(|k| points[k * points.len() / n]).collect()
            }
        }
    }

    /// The image `g . f`, computed in closed form where the family is closed
    /// under linear maps (a circle becomes an ellipse).
    pub fn transformed(&self, g: &Gl2) -> Figure {
        let map = |pts: &[Point]| pts.iter().map(|&p| g.apply(p)).collect::<Vec<_>>();
        match self {
            Figure::Edge { angle, half_length } => {
                let (_, b) = Self::edge_ends(*angle, *half_length);
                let gb = g.apply(b);
                Figure::Edge { angle: gb[1].atan2(gb[0]), half_length: norm(gb) }
            }
            Figure::Segment { p1, p2 } => Figure::Segment { p1: g.apply(*p1), p2: g.apply(*p2) },
            Figure::Circle { center, radius } => {
                Figure::Ellipse { center: *center, semi_axes: (*radius, *radius), angle: 0.0 }.transformed(g)
            }
            Figure::Ellipse { center, semi_axes: (a, b), angle } => {
                let (sa, ca) = angle.sin_cos();
                let e = g.entries();
                // g R(angle) diag(a, b)
                let m = [
                    [(e[0][0] * ca + e[0][1] * sa) * a, (-e[0][0] * sa + e[0][1] * ca) * b],
                    [(e[1][0] * ca + e[1][1] * sa) * a, (-e[1][0] * sa + e[1][1] * ca) * b],
                ];
                let (phi, s1, s2) = svd2(m);
                Figure::Ellipse { center: g.apply(*center), semi_axes: (s1, s2), angle: phi }
            }
            Figure::Polygon { vertices } => Figure::Polygon { vertices: map(vertices) },
            Figure::PointCloud { points } => Figure::PointCloud { points: map(points) },
            Figure::Swept { points } => Figure::Swept { points: map(points) },
        }
    }

    /// Euclidean distance from `p` to the figure's point set (its boundary
    /// curve for closed shapes).
    pub fn distance_to(&self, p: Point) -> f64 {
        match self {
            Figure::Edge { angle, half_length } => {
                let (a, b) = Self::edge_ends(*angle, *half_length);
                point_segment_distance(p, a, b)
            }
            Figure::Segment { p1, p2 } => point_segment_distance(p, *p1, *p2),
            Figure::Circle { center, radius } => (dist(p, *center) - radius).abs(),
            Figure::Ellipse { center, semi_axes: (a, b), angle } => {
                let (sa, ca) = angle.sin_cos();
                let d = sub(p, *center);
                let local = [ca * d[0] + sa * d[1], -sa * d[0] + ca * d[1]];
                axis_ellipse_distance(local, *a, *b)
            }
            Figure::Polygon { vertices } => closed_polyline_distance(p, vertices),
            Figure::Swept { points } => closed_polyline_distance(p, points),
            Figure::PointCloud { points } => points.iter().map(|&q| dist(p, q)).fold(f64::INFINITY, f64::min),
        }
    }

    /// Whether the figure is rendered as a filled region.
    pub fn is_region(&self) -> bool {
        matches!(self, Figure::Polygon { .. } | Figure::Swept { .. })
    }

    fn region_contains(&self, p: Point) -> bool {
        match self {
            Figure::Polygon { vertices } => polygon_contains(p, vertices),
            Figure::Swept { points } => polygon_contains(p, points),
            _ => false,
        }
    }

    /// Axis-aligned bounding box `(min, max)`; `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Point, Point)> {
        let pts = match self {
            Figure::Circle { center, radius } => {
                return Some(([center[0] - radius, center[1] - radius], [center[0] + radius, center[1] + radius]))
            }
            Figure::Ellipse { center, semi_axes: (a, b), .. } => {
                let r = a.max(*b);
                return Some(([center[0] - r, center[1] - r], [center[0] + r, center[1] + r]));
            }
            Figure::Edge { angle, half_length } => {
                let (a, b) = Self::edge_ends(*angle, *half_length);
                vec![a, b]
            }
            Figure::Segment { p1, p2 } => vec![*p1, *p2],
            Figure::Polygon { vertices: pts } | Figure::PointCloud { points: pts } | Figure::Swept { points: pts } => {
                pts.clone()
            }
        };
        let first = *pts.first()?;
        Some(pts.iter().fold((first, first), |(lo, hi), p| {
            ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
        }))
    }
}

fn sample_segment(a: Point, b: Point, n: usize) -> Vec<Point> {
    if n == 1 {
        return vec![[(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]];
    }
    (0..n)
        .map(|k| {
            let t = k as f64 / (n - 1) as f64;
            [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
        })
        .collect()
}

/// Directed Hausdorff distance `max_{a in A} min_{b in B} |a - b|`.
pub fn directed_hausdorff(a: &[Point], b: &[Point]) -> f64 {
    let mut worst: f64 = 0.0;
    for &p in a {
        let mut best = f64::INFINITY;
        for &q in b {
            let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
            if d2 < best {
                best = d2;
                // can't raise the max any more
                if best <= worst * worst {
                    break;
                }
            }
        }
        worst = worst.max(best.sqrt());
    }
    worst
}

/// Symmetric Hausdorff distance between two point sets. Empty against empty
/// is 0; empty against non-empty is infinite.
pub fn hausdorff(a: &[Point], b: &[Point]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => 0.0,
        (true, false) | (false, true) => f64::INFINITY,
        _ => directed_hausdorff(a, b).max(directed_hausdorff(b, a)),
    }
}

/// Symmetric Hausdorff distance between the `n`-point samples of two figures.
pub fn figure_distance(f1: &Figure, f2: &Figure, n: usize) -> f64 {
    hausdorff(&f1.sample_points(n), &f2.sample_points(n))
}

/// The square `[x0, x0 + size] x [y0, y0 + size]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extent {
    pub min: Point,
    pub size: f64,
}

impl Extent {
    pub fn new(min: Point, size: f64) -> Self {
        Self { min, size }
    }

    /// `[-half, half]^2`.
    pub fn centered(half: f64) -> Self {
        Self { min: [-half, -half], size: 2.0 * half }
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.min[0] && p[0] <= self.min[0] + self.size && p[1] >= self.min[1] && p[1] <= self.min[1] + self.size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Render {
    /// Pixel set when its center is within half a pixel width of the figure.
    Stroke,
    /// Pixel set when its center lies inside the region.
    Fill,
}

/// An N x N binary image over a square world extent. Row 0 is the top row
/// (largest y).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    side: usize,
    extent: ExtentBits,
    bits: Vec<bool>,
    label: String,
}

// Extent stored bitwise so the image can derive Eq.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ExtentBits([u64; 3]);

impl From<Extent> for ExtentBits {
    fn from(e: Extent) -> Self {
        ExtentBits([e.min[0].to_bits(), e.min[1].to_bits(), e.size.to_bits()])
    }
}

impl From<ExtentBits> for Extent {
    fn from(e: ExtentBits) -> Self {
        Extent { min: [f64::from_bits(e.0[0]), f64::from_bits(e.0[1])], size: f64::from_bits(e.0[2]) }
    }
}

impl RasterImage {
    pub fn empty(side: usize, extent: Extent, label: &str) -> Self {
        Self { side, extent: extent.into(), bits: vec![false; side * side], label: label.to_string() }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn extent(&self) -> Extent {
        self.extent.into()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn set_label(&mut self, label: &str) {
        self.label = label.to_string();
    }

    pub fn pixel_width(&self) -> f64 {
        self.extent().size / self.side as f64
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.side + col]
    }

    pub fn set(&mut self, row: usize, col: usize, on: bool) {
        self.bits[row * self.side + col] = on;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// World coordinate of a pixel center.
    pub fn center(&self, row: usize, col: usize) -> Point {
        let e = self.extent();
        let w = self.pixel_width();
        [e.min[0] + (col as f64 + 0.5) * w, e.min[1] + e.size - (row as f64 + 0.5) * w]
    }

    /// Pixel containing a world point, if inside the extent.
    pub fn pixel_of(&self, p: Point) -> Option<(usize, usize)> {
        let e = self.extent();
        let w = self.pixel_width();
        let col = ((p[0] - e.min[0]) / w).floor();
        let row = ((e.min[1] + e.size - p[1]) / w).floor();
        let n = self.side as f64;
        (col >= 0.0 && row >= 0.0 && col < n && row < n).then_some((row as usize, col as usize))
    }

    /// Centers of the set pixels, in row-major order.
    pub fn set_centers(&self) -> Vec<Point> {
        let mut out = Vec::new();
        for r in 0..self.side {
            for c in 0..self.side {
                if self.get(r, c) {
                    out.push(self.center(r, c));
                }
            }
        }
        out
    }

    /// Pixels flattened to a vector of 0.0 / 1.0.
    pub fn to_vector(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    pub fn from_vector(side: usize, extent: Extent, values: &[f64], threshold: f64, label: &str) -> Result<Self> {
        if values.len() != side * side {
            return Err(Error::DimensionMismatch { expected: side * side, got: values.len() });
        }
        Ok(Self { side, extent: extent.into(), bits: values.iter().map(|&v| v >= threshold).collect(), label: label.into() })
    }

    /// Intersection-over-union of the set pixels.
    pub fn iou(&self, other: &RasterImage) -> f64 {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (a, b) in self.bits.iter().zip(&other.bits) {
            inter += (*a && *b) as usize;
            union += (*a || *b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Pixelwise OR.
    pub fn union_with(&mut self, other: &RasterImage) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }

    pub fn header_comment(&self) -> String {
        let e = self.extent();
        format!("extent {} {} {} kind {}", e.min[0], e.min[1], e.size, self.label)
    }

    /// Binary PGM (P5); set pixels are 255.
    pub fn write_pgm<W: Write>(&self, w: W) -> Result<()> {
        let values: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        write_pgm_bytes(w, self.side, self.side, &values, &self.header_comment())
    }
}

/// Writes a binary P5 PGM with a single comment line.
pub fn write_pgm_bytes<W: Write>(mut w: W, width: usize, height: usize, values: &[u8], comment: &str) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::DimensionMismatch { expected: width * height, got: values.len() });
    }
    write!(w, "P5\n# {}\n{} {}\n255\n", comment.replace('\n', " "), width, height)?;
    w.write_all(values)?;
    Ok(())
}

/// Min-max normalizes `values` to 0..=255 and writes them as a PGM.
pub fn write_pgm_normalized<W: Write>(w: W, width: usize, height: usize, values: &[f64], comment: &str) -> Result<()> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let bytes: Vec<u8> = values
        .iter()
        .map(|&v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 0 })
        .collect();
    write_pgm_bytes(w, width, height, &bytes, comment)
}

/// Renders with the figure's default mode: regions filled, everything else
/// stroked.
pub fn rasterize(f: &Figure, side: usize, extent: Extent) -> Result<RasterImage> {
    let mode = if f.is_region() { Render::Fill } else { Render::Stroke };
    rasterize_with(f, side, extent, mode)
}

pub fn rasterize_with(f: &Figure, side: usize, extent: Extent, mode: Render) -> Result<RasterImage> {
    if side < 4 {
        return Err(Error::InvalidInput(format!("raster side must be at least 4, got {side}")));
    }
    if !(extent.size > 0.0) {
        return Err(Error::InvalidInput("raster extent must have positive size".into()));
    }
    let mut img = RasterImage::empty(side, extent, &f.kind().to_string());
    let w = img.pixel_width();
    let half = 0.5 * w * (1.0 + 1e-9);
    if let (Figure::PointCloud { points }, Render::Stroke) = (f, mode) {
        // stamp each point into the pixels whose center lies within half a pixel
        for &p in points {
            let Some((r0, c0)) = img.pixel_of(p).or_else(|| nearest_pixel(&img, p)) else { continue };
            for r in r0.saturating_sub(1)..(r0 + 2).min(side) {
                for c in c0.saturating_sub(1)..(c0 + 2).min(side) {
                    if dist(img.center(r, c), p) <= half {
                        img.set(r, c, true);
                    }
                }
            }
        }
        return Ok(img);
    }
    let Some((lo, hi)) = f.bounds() else { return Ok(img) };
    let (r_lo, r_hi, c_lo, c_hi) = pixel_window(&img, lo, hi, w);
    for r in r_lo..r_hi {
        for c in c_lo..c_hi {
            let p = img.center(r, c);
            let on = match mode {
                Render::Stroke => f.distance_to(p) <= half,
                Render::Fill => f.region_contains(p) || f.distance_to(p) <= 1e-12 * w,
            };
            if on {
                img.set(r, c, true);
            }
        }
    }
    Ok(img)
}

fn nearest_pixel(img: &RasterImage, p: Point) -> Option<(usize, usize)> {
    let e = img.extent();
    let w = img.pixel_width();
    let clamp = |v: f64, lo: f64| v.clamp(lo + 0.5 * w, lo + e.size - 0.5 * w);
    let q = [clamp(p[0], e.min[0]), clamp(p[1], e.min[1])];
    if dist(p, q) > w {
        return None;
    }
    img.pixel_of(q)
}

/// Rows and columns (half-open) whose centers can be within one pixel of the
/// box `[lo, hi]`.
pub(crate) fn pixel_window(img: &RasterImage, lo: Point, hi: Point, w: f64) -> (usize, usize, usize, usize) {
    let e = img.extent();
    let n = img.side() as f64;
    let to_col = |x: f64| ((x - e.min[0]) / w).floor().clamp(0.0, n) as usize;
    let to_row = |y: f64| ((e.min[1] + e.size - y) / w).floor().clamp(0.0, n) as usize;
    let c_lo = to_col(lo[0] - w);
    let c_hi = (to_col(hi[0] + w) + 1).min(img.side());
    let r_lo = to_row(hi[1] + w);
    let r_hi = (to_row(lo[1] - w) + 1).min(img.side());
    (r_lo, r_hi, c_lo, c_hi)
}

/// Dimension of the figure's stabilizer subgroup inside GL2(R), for the
/// origin-centered shapes with a known closed form.
pub fn analytic_stabilizer_dim(f: &Figure) -> Result<u32> {
    let at_origin = |c: &Point| c[0] == 0.0 && c[1] == 0.0;
    match f {
        // fix the direction with eigenvalue 1, the other eigenvector is free
        Figure::Edge { .. } => Ok(2),
        // O(2), or a conjugate of it
        Figure::Circle { center, .. } if at_origin(center) => Ok(1),
        Figure::Ellipse { center, .. } if at_origin(center) => Ok(1),
        Figure::Circle { .. } | Figure::Ellipse { .. } => {
            Err(Error::UnsupportedFigure("stabilizer dimension needs an origin-centered figure".into()))
        }
        other => Err(Error::UnsupportedFigure(format!("no analytic stabilizer dimension for {}", other.kind()))),
    }
}

/// `dim O = dim G - dim S`.
pub fn orbit_dim_from_stab(group_dim: u32, stab_dim: u32) -> Result<u32> {
    group_dim
        .checked_sub(stab_dim)
        .ok_or_else(|| Error::InvalidInput(format!("stabilizer dimension {stab_dim} exceeds group dimension {group_dim}")))
}

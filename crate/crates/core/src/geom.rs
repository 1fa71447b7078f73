//! Planar convex geometry used by the stability checks.
//!
//! Footprints are axis-aligned rectangles or disks; disks are approximated
//! by regular 64-gons before any boolean operation, so every support region
//! is a convex polygon (possibly empty).

pub const DISK_SEGMENTS: usize = 64;

pub type Point = [f64; 2];

/// Convex polygon with counter-clockwise vertex order. Empty vertex list
/// represents the empty region.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<Point>,
}

impl Polygon {
    pub fn empty() -> Self {
        Polygon { vertices: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    /// Axis-aligned rectangle from center and half-extents.
    pub fn rect(center: Point, half: Point) -> Self {
        let [cx, cy] = center;
        let [hx, hy] = half;
        Polygon {
            vertices: vec![
                [cx - hx, cy - hy],
                [cx + hx, cy - hy],
                [cx + hx, cy + hy],
                [cx - hx, cy + hy],
            ],
        }
    }

    /// Regular n-gon approximation of a disk, first vertex at angle 0.
    pub fn disk(center: Point, radius: f64, segments: usize) -> Self {
        let [cx, cy] = center;
        let vertices = (0..segments)
            .map(|i| {
                let theta = 2.0 * std::f64::consts::PI * (i as f64) / (segments as f64);
                [cx + radius * theta.cos(), cy + radius * theta.sin()]
            })
            .collect();
        Polygon { vertices }
    }

    pub fn area(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let n = self.vertices.len();
        let mut sum = 0.0;
        for i in 0..n {
            let [x0, y0] = self.vertices[i];
            let [x1, y1] = self.vertices[(i + 1) % n];
            sum += x0 * y1 - x1 * y0;
        }
        sum / 2.0
    }

    pub fn centroid(&self) -> Option<Point> {
        if self.is_empty() {
            return None;
        }
        let n = self.vertices.len();
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut a = 0.0;
        for i in 0..n {
            let [x0, y0] = self.vertices[i];
            let [x1, y1] = self.vertices[(i + 1) % n];
            let cross = x0 * y1 - x1 * y0;
            a += cross;
            cx += (x0 + x1) * cross;
            cy += (y0 + y1) * cross;
        }
        if a.abs() < f64::EPSILON {
            // Degenerate sliver; fall back to vertex mean.
            let inv = 1.0 / n as f64;
            let mx = self.vertices.iter().map(|v| v[0]).sum::<f64>() * inv;
            let my = self.vertices.iter().map(|v| v[1]).sum::<f64>() * inv;
            return Some([mx, my]);
        }
        Some([cx / (3.0 * a), cy / (3.0 * a)])
    }

    /// Signed distance of `p` to the polygon boundary: positive strictly
    /// inside, negative outside, zero on the boundary. For convex polygons
    /// this is the minimum over edges of the signed inside-distance.
    pub fn signed_margin(&self, p: Point) -> f64 {
        if self.is_empty() {
            return f64::NEG_INFINITY;
        }
        let n = self.vertices.len();
        let mut margin = f64::INFINITY;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let d = edge_inside_distance(a, b, p);
            if d < margin {
                margin = d;
            }
        }
        margin
    }

    /// Closest point on the polygon boundary to `p`.
    pub fn closest_boundary_point(&self, p: Point) -> Option<Point> {
        if self.is_empty() {
            return None;
        }
        let n = self.vertices.len();
        let mut best = self.vertices[0];
        let mut best_d2 = f64::INFINITY;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let q = closest_point_on_segment(a, b, p);
            let d2 = dist2(q, p);
            if d2 < best_d2 {
                best_d2 = d2;
                best = q;
            }
        }
        Some(best)
    }

    /// Sutherland–Hodgman clip of `self` against convex `clip`.
    pub fn intersect(&self, clip: &Polygon) -> Polygon {
        if self.is_empty() || clip.is_empty() {
            return Polygon::empty();
        }
        let mut output = self.vertices.clone();
        let n = clip.vertices.len();
        for i in 0..n {
            let a = clip.vertices[i];
            let b = clip.vertices[(i + 1) % n];
            let input = std::mem::take(&mut output);
            if input.is_empty() {
                break;
            }
            let m = input.len();
            for j in 0..m {
                let cur = input[j];
                let next = input[(j + 1) % m];
                let cur_in = cross(a, b, cur) >= 0.0;
                let next_in = cross(a, b, next) >= 0.0;
                if cur_in {
                    output.push(cur);
                    if !next_in {
                        output.push(line_intersection(a, b, cur, next));
                    }
                } else if next_in {
                    output.push(line_intersection(a, b, cur, next));
                }
            }
        }
        let poly = Polygon { vertices: dedup_vertices(output) };
        if poly.is_empty() || poly.area() <= 0.0 {
            Polygon::empty()
        } else {
            poly
        }
    }
}

/// Signed inside-distance of `p` from the directed edge a->b of a CCW
/// polygon (positive on the interior side).
pub fn edge_inside_distance(a: Point, b: Point, p: Point) -> f64 {
    let ex = b[0] - a[0];
    let ey = b[1] - a[1];
    let len = (ex * ex + ey * ey).sqrt();
    if len < f64::EPSILON {
        return f64::INFINITY;
    }
    // Interior of a CCW polygon lies to the left of each edge.
    ((b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])) / len
}

fn cross(a: Point, b: Point, p: Point) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

fn line_intersection(a: Point, b: Point, p: Point, q: Point) -> Point {
    let a1 = b[1] - a[1];
    let b1 = a[0] - b[0];
    let c1 = a1 * a[0] + b1 * a[1];
    let a2 = q[1] - p[1];
    let b2 = p[0] - q[0];
    let c2 = a2 * p[0] + b2 * p[1];
    let det = a1 * b2 - a2 * b1;
    if det.abs() < f64::EPSILON {
        return p;
    }
    [(b2 * c1 - b1 * c2) / det, (a1 * c2 - a2 * c1) / det]
}

fn closest_point_on_segment(a: Point, b: Point, p: Point) -> Point {
    let abx = b[0] - a[0];
    let aby = b[1] - a[1];
    let len2 = abx * abx + aby * aby;
    if len2 < f64::EPSILON {
        return a;
    }
    let t = (((p[0] - a[0]) * abx + (p[1] - a[1]) * aby) / len2).clamp(0.0, 1.0);
    [a[0] + t * abx, a[1] + t * aby]
}

fn dist2(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn dedup_vertices(vertices: Vec<Point>) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(vertices.len());
    for v in vertices {
        if let Some(last) = out.last() {
            if dist2(*last, v) < 1e-24 {
                continue;
            }
        }
        out.push(v);
    }
    if out.len() > 2 && dist2(out[0], *out.last().unwrap()) < 1e-24 {
        out.pop();
    }
    out
}

//! Silhouette outlines, pose transforms, and scanline rasterization.

use std::f64::consts::PI;

pub type Point = (f64, f64);

/// Closed polygon rings in unit coordinates (roughly [-1, 1]²). The filled
/// region uses the even-odd rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Outline {
    pub rings: Vec<Vec<Point>>,
}

impl Outline {
    pub fn vertex_count(&self) -> usize {
        self.rings.iter().map(Vec::len).sum()
    }

    pub fn map(&self, mut f: impl FnMut(Point) -> Point) -> Outline {
        Outline {
            rings: self
                .rings
                .iter()
                .map(|r| r.iter().map(|&p| f(p)).collect())
                .collect(),
        }
    }
}

pub const SHAPE_NAMES: [&str; 9] = [
    "triangle", "square", "star", "ring", "cross", "arrow", "heart", "s_curve", "spiral",
];

fn circle(r: f64, n: usize) -> Vec<Point> {
    (0..n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            (r * t.cos(), r * t.sin())
        })
        .collect()
}

/// Closed polygon around a polyline of the given total width.
fn thick_stroke(path: &[Point], width: f64) -> Vec<Point> {
    let h = width / 2.0;
    let n = path.len();
    let normal = |i: usize| {
        let (a, b) = if i == 0 {
            (path[0], path[1])
        } else if i == n - 1 {
            (path[n - 2], path[n - 1])
        } else {
            (path[i - 1], path[i + 1])
        };
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let l = (dx * dx + dy * dy).sqrt();
        (-dy / l, dx / l)
    };
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    for (i, &p) in path.iter().enumerate() {
        let (nx, ny) = normal(i);
        left.push((p.0 + nx * h, p.1 + ny * h));
        right.push((p.0 - nx * h, p.1 - ny * h));
    }
    right.reverse();
    left.extend(right);
    left
}

/// Canonical silhouette for class `class % 9`.
pub fn class_outline(class: usize) -> Outline {
    let rings = match class % 9 {
        0 => vec![vec![(0.0, -0.85), (0.85, 0.65), (-0.85, 0.65)]],
        1 => vec![vec![
            (-0.62, -0.62),
            (0.62, -0.62),
            (0.62, 0.62),
            (-0.62, 0.62),
        ]],
        2 => vec![(0..10)
            .map(|i| {
                let r = if i % 2 == 0 { 0.92 } else { 0.42 };
                let t = -PI / 2.0 + PI * i as f64 / 5.0;
                (r * t.cos(), r * t.sin())
            })
            .collect()],
        3 => vec![circle(0.85, 40), circle(0.45, 28)],
        4 => {
            let (a, w) = (0.85, 0.27);
            vec![vec![
                (-w, -a),
                (w, -a),
                (w, -w),
                (a, -w),
                (a, w),
                (w, w),
                (w, a),
                (-w, a),
                (-w, w),
                (-a, w),
                (-a, -w),
                (-w, -w),
            ]]
        }
        5 => vec![vec![
            (-0.85, -0.3),
            (0.1, -0.3),
            (0.1, -0.72),
            (0.88, 0.0),
            (0.1, 0.72),
            (0.1, 0.3),
            (-0.85, 0.3),
        ]],
        6 => vec![(0..48)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / 48.0;
                let x = 16.0 * t.sin().powi(3);
                let y = 13.0 * t.cos()
                    - 5.0 * (2.0 * t).cos()
                    - 2.0 * (3.0 * t).cos()
                    - (4.0 * t).cos();
                (0.053 * x, -0.053 * y + 0.12)
            })
            .collect()],
        7 => {
            // two opposed semicircles meeting at the origin
            let r = 0.4;
            let mut path = Vec::new();
            for i in 0..=16 {
                let t = -PI / 2.0 - PI * i as f64 / 16.0;
                path.push((r * t.cos(), -r + r * t.sin()));
            }
            for i in 1..=16 {
                let t = -PI / 2.0 + PI * i as f64 / 16.0;
                path.push((r * t.cos(), r + r * t.sin()));
            }
            let path: Vec<Point> = path
                .into_iter()
                .map(|(x, y)| (x * 1.15, y * 1.05))
                .collect();
            vec![thick_stroke(&path, 0.42)]
        }
        _ => {
            let turns = 1.6;
            let n = 60;
            let path: Vec<Point> = (0..=n)
                .map(|i| {
                    let s = i as f64 / n as f64;
                    let t = s * turns * 2.0 * PI;
                    let r = 0.12 + 0.72 * s;
                    (r * t.cos(), r * t.sin())
                })
                .collect();
            vec![thick_stroke(&path, 0.24)]
        }
    };
    Outline { rings }
}

/// Rotation, isotropic scale and translation from unit to pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub angle: f64,
    pub scale: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Pose {
    pub fn apply(&self, outline: &Outline) -> Outline {
        let (s, c) = self.angle.sin_cos();
        outline.map(|(x, y)| {
            (
                self.cx + self.scale * (c * x - s * y),
                self.cy + self.scale * (s * x + c * y),
            )
        })
    }
}

/// Per-pixel coverage in [0, 1] of an outline given in pixel coordinates,
/// measured with `ss × ss` subsamples and the even-odd rule.
pub fn coverage(outline: &Outline, size: usize, ss: usize) -> Vec<f64> {
    let mut cov = vec![0.0; size * size];
    let edges: Vec<(Point, Point)> = outline
        .rings
        .iter()
        .flat_map(|r| (0..r.len()).map(move |i| (r[i], r[(i + 1) % r.len()])))
        .collect();
    let inv = 1.0 / (ss * ss) as f64;
    let mut xs = Vec::new();
    for py in 0..size {
        for sy in 0..ss {
            let y = py as f64 + (sy as f64 + 0.5) / ss as f64;
            xs.clear();
            for &((x0, y0), (x1, y1)) in &edges {
                if (y0 <= y && y < y1) || (y1 <= y && y < y0) {
                    xs.push(x0 + (y - y0) * (x1 - x0) / (y1 - y0));
                }
            }
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for pair in xs.chunks_exact(2) {
                let (a, b) = (pair[0], pair[1]);
                // subsample columns with centre in [a, b)
                let first = ((a * ss as f64) - 0.5).ceil().max(0.0) as usize;
                let last = ((b * ss as f64) - 0.5).ceil().min((size * ss) as f64) as usize;
                for sx in first..last {
                    cov[py * size + sx / ss] += inv;
                }
            }
        }
    }
    for c in &mut cov {
        if *c > 1.0 - 1e-9 {
            *c = 1.0;
        }
    }
    cov
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Anti-aliased alpha of a stroke of the given pixel width along every ring.
pub fn stroke_alpha(outline: &Outline, size: usize, width: f64) -> Vec<f64> {
    let mut alpha = vec![0.0; size * size];
    let half = width / 2.0;
    for ring in &outline.rings {
        let n = ring.len();
        for i in 0..n {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            let lo_x = (a.0.min(b.0) - half - 1.0).floor().max(0.0) as usize;
            let hi_x = ((a.0.max(b.0) + half + 1.0).ceil().max(0.0) as usize).min(size);
            let lo_y = (a.1.min(b.1) - half - 1.0).floor().max(0.0) as usize;
            let hi_y = ((a.1.max(b.1) + half + 1.0).ceil().max(0.0) as usize).min(size);
            for y in lo_y..hi_y {
                for x in lo_x..hi_x {
                    let d = segment_distance((x as f64 + 0.5, y as f64 + 0.5), a, b);
                    let v = (half + 0.5 - d).clamp(0.0, 1.0);
                    let slot = &mut alpha[y * size + x];
                    if v > *slot {
                        *slot = v;
                    }
                }
            }
        }
    }
    alpha
}

/// Douglas–Peucker simplification of each closed ring. Rings keep at
/// least three vertices.
pub fn simplify(outline: &Outline, tolerance: f64) -> Outline {
    fn dp(points: &[Point], tol: f64, keep: &mut [bool], lo: usize, hi: usize) {
        if hi <= lo + 1 {
            return;
        }
        let mut best = (0.0, lo);
        for i in lo + 1..hi {
            let d = segment_distance(points[i], points[lo], points[hi]);
            if d > best.0 {
                best = (d, i);
            }
        }
        if best.0 > tol {
            keep[best.1] = true;
            dp(points, tol, keep, lo, best.1);
            dp(points, tol, keep, best.1, hi);
        }
    }
    let rings = outline
        .rings
        .iter()
        .map(|ring| {
            let n = ring.len();
            if n <= 3 {
                return ring.clone();
            }
            // split the closed ring at vertex 0 and its farthest vertex
            let far = (1..n)
                .max_by(|&i, &j| {
                    let di = (ring[i].0 - ring[0].0).hypot(ring[i].1 - ring[0].1);
                    let dj = (ring[j].0 - ring[0].0).hypot(ring[j].1 - ring[0].1);
                    di.partial_cmp(&dj).unwrap()
                })
                .unwrap();
            let mut closed = ring.clone();
            closed.push(ring[0]);
            let mut keep = vec![false; n + 1];
            keep[0] = true;
            keep[far] = true;
            dp(&closed, tolerance, &mut keep, 0, far);
            dp(&closed, tolerance, &mut keep, far, n);
            let mut out: Vec<Point> = (0..n).filter(|&i| keep[i]).map(|i| ring[i]).collect();
            if out.len() < 3 {
                let step = n / 3;
                out = vec![ring[0], ring[step], ring[2 * step]];
            }
            out
        })
        .collect();
    Outline { rings }
}

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};

use super::{ColoredPointCloud, Point3};

const REFINE_TOLERANCE: f64 = 1e-4;
const REFINE_MAX_PASSES: usize = 10;
/// Relative area excess under which a rectangle still counts as minimal.
const RECT_TIE_TOLERANCE: f64 = 1e-2;
/// Hull edges whose orientations differ by less than this are parallel.
const ANGLE_EPS: f64 = 1e-9;
const PLANES: [(usize, usize); 3] = [(0, 1), (1, 2), (0, 2)];

/// `p ↦ R·p + t`. `R` is orthogonal and may include a reflection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        let v = self.rotation * Vector3::new(p[0], p[1], p[2]) + self.translation;
        [v.x, v.y, v.z]
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }
}

fn cross(o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull without collinear vertices (monotone chain).
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for p in iter {
            while hull.len() >= start + 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

/// Wraps an angle into `(-π/4, π/4]` modulo quarter turns.
fn quarter_turn_residue(phi: f64) -> f64 {
    let mut r = phi.rem_euclid(FRAC_PI_2);
    if r > FRAC_PI_4 {
        r -= FRAC_PI_2;
    }
    r
}

/// Orientation in `(-π/4, π/4]` of the minimum-area enclosing rectangle of a
/// planar point set (rotating calipers over hull edges). Rectangles within
/// a relative area tolerance of the minimum count as tied; among those the one
/// flush with the most hull perimeter wins, then the smaller rotation.
/// Degenerate sets return 0.
pub fn min_area_rect_angle(points: &[[f64; 2]]) -> f64 {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return 0.0;
    }
    let edges: Vec<(f64, f64)> = (0..hull.len())
        .map(|i| {
            let a = hull[i];
            let b = hull[(i + 1) % hull.len()];
            (quarter_turn_residue((b[1] - a[1]).atan2(b[0] - a[0])), (b[0] - a[0]).hypot(b[1] - a[1]))
        })
        .collect();
    // (area, flush perimeter, angle) per distinct edge orientation
    let mut candidates: Vec<(f64, f64, f64)> = Vec::new();
    for &(phi, _) in &edges {
        if candidates.iter().any(|c| (c.2 - phi).abs() <= ANGLE_EPS) {
            continue;
        }
        let (s, c) = phi.sin_cos();
        let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &hull {
            let u = c * p[0] + s * p[1];
            let v = -s * p[0] + c * p[1];
            u0 = u0.min(u);
            u1 = u1.max(u);
            v0 = v0.min(v);
            v1 = v1.max(v);
        }
        let flush: f64 = edges.iter().filter(|e| (e.0 - phi).abs() <= ANGLE_EPS).map(|e| e.1).sum();
        candidates.push(((u1 - u0) * (v1 - v0), flush, phi));
    }
    let min_area = candidates.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let limit = min_area * (1.0 + RECT_TIE_TOLERANCE);
    candidates
        .into_iter()
        .filter(|c| c.0 <= limit)
        .max_by(|a, b| {
            let flush_tie = (a.1 - b.1).abs() <= 1e-9 * a.1.max(b.1);
            let by_flush = if flush_tie { std::cmp::Ordering::Equal } else { a.1.total_cmp(&b.1) };
            by_flush.then(b.2.abs().total_cmp(&a.2.abs()))
        })
        .map_or(0.0, |c| c.2)
}

fn project(points: &[Vector3<f64>], r: &Matrix3<f64>) -> Vec<Vector3<f64>> {
    points.iter().map(|q| r * q).collect()
}

/// Aligns the cloud's oriented bounding box with the coordinate axes.
///
/// PCA gives the initial frame; it is refined by aligning the minimum-area
/// rectangles of the x–y, y–z and x–z projections until the correction falls
/// below 1e-4 rad. Axes are then ordered by extent (x ≥ y ≥ z), each sign is
/// chosen so that the centroid is not below the box center, and the minimum
/// corner is moved to the origin.
pub fn view_normalize(cloud: &ColoredPointCloud) -> Result<(ColoredPointCloud, RigidTransform)> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("cannot normalize an empty cloud".into()));
    }
    let n = cloud.len() as f64;
    let centroid = cloud.points.iter().fold(Vector3::zeros(), |acc, p| acc + Vector3::new(p[0], p[1], p[2])) / n;
    let centered: Vec<Vector3<f64>> =
        cloud.points.iter().map(|p| Vector3::new(p[0], p[1], p[2]) - centroid).collect();

    let cov = centered.iter().fold(Matrix3::zeros(), |acc, q| acc + q * q.transpose()) / n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut r = Matrix3::zeros();
    for (row, &k) in order.iter().enumerate() {
        r.set_row(row, &eig.eigenvectors.column(k).transpose());
    }

    for _ in 0..REFINE_MAX_PASSES {
        let mut largest = 0.0f64;
        for &(a, b) in &PLANES {
            let y = project(&centered, &r);
            let plane: Vec<[f64; 2]> = y.iter().map(|v| [v[a], v[b]]).collect();
            let theta = min_area_rect_angle(&plane);
            if theta != 0.0 {
                let (s, c) = theta.sin_cos();
                let mut g = Matrix3::identity();
                g[(a, a)] = c;
                g[(a, b)] = s;
                g[(b, a)] = -s;
                g[(b, b)] = c;
                r = g * r;
            }
            largest = largest.max(theta.abs());
        }
        if largest < REFINE_TOLERANCE {
            break;
        }
    }

    let y = project(&centered, &r);
    let bounds = |y: &[Vector3<f64>]| {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for v in y {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    };
    let (lo, hi) = bounds(&y);
    let ext = hi - lo;
    let mut axes = [0usize, 1, 2];
    axes.sort_by(|&a, &b| ext[b].total_cmp(&ext[a]).then(a.cmp(&b)));
    let mut ordered = Matrix3::zeros();
    for (row, &k) in axes.iter().enumerate() {
        // centroid sits at 0 in the centered frame
        let center = 0.5 * (lo[k] + hi[k]);
        let sign = if center > 0.0 { -1.0 } else { 1.0 };
        ordered.set_row(row, &(r.row(k) * sign));
    }
    let r = ordered;

    let y = project(&centered, &r);
    let (lo, _) = bounds(&y);
    let points: Vec<Point3> = y.iter().map(|v| [v.x - lo.x, v.y - lo.y, v.z - lo.z]).collect();
    let transform = RigidTransform { rotation: r, translation: -(r * centroid) - lo };
    Ok((ColoredPointCloud { points, colors: cloud.colors.clone() }, transform))
}

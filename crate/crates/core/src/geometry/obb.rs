use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::plane::PlaneModel;
use crate::error::{Error, Result};

/// Relative growth applied to every half-extent.
pub const BOX_MARGIN: f64 = 0.02;

/// Eigenvalue gap, relative to the trace, below which the in-plane spread
/// counts as isotropic.
const ISOTROPY_TOLERANCE: f64 = 1e-9;

/// Smallest eigenvalue ratio still treated as full rank.
const RANK_TOLERANCE: f64 = 1e-12;

/// A box with columns of `rotation` as its local axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "BoxJson", try_from = "BoxJson")]
pub struct OrientedBox {
    pub center: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    pub half_extents: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct BoxJson {
    center: [f64; 3],
    /// Row-major.
    rotation: [f64; 9],
    half_extents: [f64; 3],
}

impl From<OrientedBox> for BoxJson {
    fn from(b: OrientedBox) -> Self {
        let r = b.rotation;
        BoxJson {
            center: b.center.into(),
            rotation: std::array::from_fn(|k| r[(k / 3, k % 3)]),
            half_extents: b.half_extents.into(),
        }
    }
}

impl TryFrom<BoxJson> for OrientedBox {
    type Error = Error;

    fn try_from(j: BoxJson) -> Result<Self> {
        let b = OrientedBox {
            center: j.center.into(),
            rotation: Matrix3::from_row_slice(&j.rotation),
            half_extents: j.half_extents.into(),
        };
        b.validate()?;
        Ok(b)
    }
}

impl OrientedBox {
    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        if !(ortho <= 1e-6 && (r.determinant() - 1.0).abs() <= 1e-6) {
            return Err(Error::invalid("box", "rotation is not a proper rotation"));
        }
        if !self.half_extents.iter().all(|&h| h > 0.0 && h.is_finite()) || !self.center.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("box", "half-extents must be positive and finite"));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        8.0 * self.half_extents.product()
    }

    pub fn to_local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.center)
    }

    /// Closed containment test.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let q = self.to_local(p);
        (0..3).all(|i| q[i].abs() <= self.half_extents[i] * (1.0 + 1e-12))
    }

    /// Corner `k` has local sign `(-1)^{bit i}` on axis `i`.
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        std::array::from_fn(|k| {
            let local = Vector3::from_fn(|i, _| {
                let s = if k >> i & 1 == 1 { -1.0 } else { 1.0 };
                s * self.half_extents[i]
            });
            self.center + self.rotation * local
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("box serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("box JSON: {e}")))
    }
}

fn orthonormal_complement(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let k = n.iamin();
    let u = n.cross(&Vector3::ith(k, 1.0)).normalize();
    (u, n.cross(&u))
}

fn cross2(o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    (a - o).perp(&(b - o))
}

/// Andrew's monotone chain, counter-clockwise, no collinear vertices.
fn convex_hull(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vector2<f64>>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for p in iter {
            while hull.len() >= start + 2 && cross2(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

/// Unit in-plane direction of the minimum-area enclosing rectangle's longer side.
fn min_area_direction(points: &[Vector2<f64>]) -> Vector2<f64> {
    let hull = convex_hull(points);
    let mut best: Option<(f64, Vector2<f64>)> = None;
    for k in 0..hull.len() {
        let edge = hull[(k + 1) % hull.len()] - hull[k];
        let e = edge.normalize();
        let f = Vector2::new(-e.y, e.x);
        let (mut lo, mut hi) = (Vector2::repeat(f64::INFINITY), Vector2::repeat(f64::NEG_INFINITY));
        for p in &hull {
            let q = Vector2::new(p.dot(&e), p.dot(&f));
            lo = lo.inf(&q);
            hi = hi.sup(&q);
        }
        let size = hi - lo;
        let area = size.x * size.y;
        let major = if size.x >= size.y { e } else { f };
        if best.is_none_or(|(a, _)| area < a * (1.0 - 1e-12)) {
            best = Some((area, major));
        }
    }
    best.map_or(Vector2::x(), |(_, d)| d)
}

/// Oriented box whose third axis is the plane normal.
///
/// In-plane axes come from 2D PCA of the points projected onto the plane;
/// when the two principal variances coincide the minimum-area enclosing
/// rectangle fixes the axes instead. The major axis is signed so its first
/// non-zero world coordinate is positive, and the second axis is
/// `normal × major`. Extents are the min/max in that frame, grown by
/// [`BOX_MARGIN`].
pub fn plane_aligned_obb(points: &[Vector3<f64>], plane: &PlaneModel) -> Result<OrientedBox> {
    plane_aligned_obb_with_margin(points, plane, BOX_MARGIN)
}

/// [`plane_aligned_obb`] with extents grown by the relative `margin` instead.
pub fn plane_aligned_obb_with_margin(points: &[Vector3<f64>], plane: &PlaneModel, margin: f64) -> Result<OrientedBox> {
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(Error::invalid("box_margin", format!("must be finite and >= 0, got {margin}")));
    }
    if points.len() < 3 {
        return Err(Error::DegenerateGeometry(format!("{} points", points.len())));
    }
    let n = plane.normal.normalize();
    let (u, v) = orthonormal_complement(&n);
    let flat: Vec<Vector2<f64>> = points.iter().map(|p| Vector2::new(p.dot(&u), p.dot(&v))).collect();
    let mean = flat.iter().sum::<Vector2<f64>>() / flat.len() as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for q in &flat {
        let d = q - mean;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let half_trace = 0.5 * (sxx + syy);
    let gap = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
    let (l1, l2) = (half_trace + gap, half_trace - gap);
    if l1.is_nan() || l1 <= 0.0 || l2 <= RANK_TOLERANCE * l1 {
        return Err(Error::DegenerateGeometry("points are collinear in the plane".into()));
    }
    let major2 = if gap <= ISOTROPY_TOLERANCE * (l1 + l2) {
        let centered: Vec<_> = flat.iter().map(|q| q - mean).collect();
        min_area_direction(&centered)
    } else if sxy.abs() > (sxx - syy).abs() * f64::EPSILON {
        Vector2::new(l1 - syy, sxy).normalize()
    } else if sxx >= syy {
        Vector2::x()
    } else {
        Vector2::y()
    };
    let mut e1 = (u * major2.x + v * major2.y).normalize();
    let sign = e1.iter().find(|c| c.abs() > 1e-12).copied().unwrap_or(1.0);
    if sign < 0.0 {
        e1 = -e1;
    }
    let e2 = n.cross(&e1);
    let rotation = Matrix3::from_columns(&[e1, e2, n]);

    let (mut lo, mut hi) = (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY));
    for p in points {
        let q = rotation.transpose() * p;
        lo = lo.inf(&q);
        hi = hi.sup(&q);
    }
    let half_extents = (hi - lo) * (0.5 * (1.0 + margin));
    if half_extents.z <= 0.0 {
        return Err(Error::DegenerateGeometry("points have no height above the plane".into()));
    }
    Ok(OrientedBox {
        center: rotation * ((lo + hi) * 0.5),
        rotation,
        half_extents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    fn ground() -> PlaneModel {
        PlaneModel { normal: Vector3::z(), offset: 0.0, inliers: vec![] }
    }

    fn cube_grid() -> Vec<Vector3<f64>> {
        let mut out = vec![];
        for i in 0..=10 {
            for j in 0..=10 {
                for k in 0..=10 {
                    out.push(Vector3::new(i as f64, j as f64, k as f64) / 10.0);
                }
            }
        }
        out
    }

    #[test]
    fn unit_cube_with_margin() {
        let b = plane_aligned_obb(&cube_grid(), &ground()).unwrap();
        for h in b.half_extents.iter() {
            assert!((h - 0.51).abs() < 1e-12, "{h}");
        }
        assert!((b.center - Vector3::repeat(0.5)).norm() < 1e-12);
        assert!((b.volume() - 1.0).abs() < 0.07);
        b.validate().unwrap();
    }

    #[test]
    fn rotation_equivariant() {
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), 30f64.to_radians());
        let shift = Vector3::new(3.0, -2.0, 0.0);
        let base = plane_aligned_obb(&cube_grid(), &ground()).unwrap();
        let moved: Vec<_> = cube_grid().iter().map(|p| rot * p + shift).collect();
        let b = plane_aligned_obb(&moved, &ground()).unwrap();
        assert!((b.half_extents - base.half_extents).norm() < 1e-6);
        assert!((b.center - (rot * base.center + shift)).norm() < 1e-6);
    }

    #[test]
    fn elongated_box_axes() {
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), 2.0);
        let pts: Vec<_> = cube_grid().iter().map(|p| rot * Vector3::new(3.0 * p.x, p.y, 0.5 * p.z)).collect();
        let b = plane_aligned_obb(&pts, &ground()).unwrap();
        assert!((b.half_extents - Vector3::new(1.5, 0.5, 0.25) * 1.02).norm() < 1e-9);
        let e1 = b.rotation.column(0);
        assert!(e1.x > 0.0);
        assert!((e1.dot(&(rot * Vector3::x())).abs() - 1.0).abs() < 1e-9);
        assert!((b.rotation.determinant() - 1.0).abs() < 1e-12);
        assert_eq!(b.rotation.column(2), Vector3::z());
    }

    #[test]
    fn collinear_is_degenerate() {
        let pts: Vec<_> = (0..10).map(|i| Vector3::new(i as f64, 2.0 * i as f64, (i % 3) as f64)).collect();
        assert!(matches!(plane_aligned_obb(&pts, &ground()), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn json_round_trip_and_corners() {
        let b = plane_aligned_obb(&cube_grid(), &ground()).unwrap();
        let text = b.to_json();
        assert!(text.starts_with(r#"{"center":[0.5"#));
        let back = OrientedBox::from_json(&text).unwrap();
        assert_eq!(back, b);
        for c in b.corners() {
            assert!(b.contains(&c));
            assert!(!b.contains(&(b.center + (c - b.center) * 1.01)));
        }
        assert!(OrientedBox::from_json(r#"{"center":[0,0,0],"rotation":[1,0,0,0,1,0,0,0,1],"half_extents":[1,0,1]}"#).is_err());
    }
}

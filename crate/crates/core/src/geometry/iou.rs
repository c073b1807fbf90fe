use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::obb::OrientedBox;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IouMode {
    /// Exact overlap of the oriented boxes.
    #[default]
    Oriented,
    /// Overlap of the world-axis-aligned hulls of the two boxes.
    AxisAligned,
}

type Polygon = Vec<Vector3<f64>>;

/// Faces of the box, each a quad.
fn box_faces(b: &OrientedBox) -> Vec<Polygon> {
    let c = b.corners();
    // Corner bit i set means the negative side of axis i.
    let mut faces = Vec::with_capacity(6);
    for axis in 0..3 {
        let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in 0..2 {
            let idx = |s1: usize, s2: usize| (side << axis) | (s1 << a1) | (s2 << a2);
            faces.push(vec![c[idx(0, 0)], c[idx(1, 0)], c[idx(1, 1)], c[idx(0, 1)]]);
        }
    }
    faces
}

/// Keeps the part of a convex polyhedron with `normal·x <= offset`.
fn clip(faces: Vec<Polygon>, normal: &Vector3<f64>, offset: f64) -> Vec<Polygon> {
    let scale = faces.iter().flatten().map(|p| p.norm()).fold(1.0, f64::max);
    let eps = 1e-12 * scale;
    let mut out = Vec::with_capacity(faces.len() + 1);
    let mut cap: Vec<Vector3<f64>> = Vec::new();
    let mut cap_exists = false;
    for face in faces {
        let dist: Vec<f64> = face.iter().map(|p| normal.dot(p) - offset).collect();
        if dist.iter().all(|d| d.abs() <= eps) {
            cap_exists = true;
            out.push(face);
            continue;
        }
        let mut poly = Vec::with_capacity(face.len() + 2);
        for k in 0..face.len() {
            let (p, q) = (face[k], face[(k + 1) % face.len()]);
            let (dp, dq) = (dist[k], dist[(k + 1) % face.len()]);
            if dp <= eps {
                poly.push(p);
                if dp.abs() <= eps {
                    cap.push(p);
                }
            }
            if (dp < -eps && dq > eps) || (dp > eps && dq < -eps) {
                let x = p + (q - p) * (dp / (dp - dq));
                poly.push(x);
                cap.push(x);
            }
        }
        if poly.len() >= 3 {
            out.push(poly);
        }
    }
    if !cap_exists && cap.len() >= 3 {
        let centroid = cap.iter().sum::<Vector3<f64>>() / cap.len() as f64;
        let u = cap
            .iter()
            .map(|p| p - centroid)
            .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))
            .unwrap_or_else(Vector3::zeros);
        if u.norm() > eps {
            let u = u.normalize();
            let v = normal.cross(&u);
            let mut ring: Vec<(f64, Vector3<f64>)> = cap
                .iter()
                .map(|p| {
                    let d = p - centroid;
                    (d.dot(&v).atan2(d.dot(&u)), *p)
                })
                .collect();
            ring.sort_by(|a, b| a.0.total_cmp(&b.0));
            ring.dedup_by(|a, b| (a.1 - b.1).norm() <= eps);
            if ring.len() >= 3 {
                out.push(ring.into_iter().map(|(_, p)| p).collect());
            }
        }
    }
    out
}

/// Volume of a convex polyhedron by fan tetrahedra around its vertex centroid.
fn volume(faces: &[Polygon]) -> f64 {
    let count = faces.iter().map(Vec::len).sum::<usize>();
    if count == 0 {
        return 0.0;
    }
    let centroid = faces.iter().flatten().sum::<Vector3<f64>>() / count as f64;
    let mut total = 0.0;
    for face in faces {
        let a = face[0] - centroid;
        for k in 1..face.len() - 1 {
            let (b, c) = (face[k] - centroid, face[k + 1] - centroid);
            total += a.dot(&b.cross(&c)).abs() / 6.0;
        }
    }
    total
}

fn intersection_volume(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let mut poly = box_faces(a);
    for axis in 0..3 {
        let r: Vector3<f64> = b.rotation.column(axis).into();
        let c = r.dot(&b.center);
        let h = b.half_extents[axis];
        poly = clip(poly, &r, c + h);
        poly = clip(poly, &(-r), h - c);
        if poly.is_empty() {
            return 0.0;
        }
    }
    volume(&poly)
}

fn axis_aligned_hull(b: &OrientedBox) -> OrientedBox {
    let (mut lo, mut hi) = (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY));
    for c in b.corners() {
        lo = lo.inf(&c);
        hi = hi.sup(&c);
    }
    OrientedBox {
        center: (lo + hi) * 0.5,
        rotation: Matrix3::identity(),
        half_extents: (hi - lo) * 0.5,
    }
}

/// Oriented intersection over union.
pub fn box_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    box_iou_with(a, b, IouMode::Oriented)
}

pub fn box_iou_with(a: &OrientedBox, b: &OrientedBox, mode: IouMode) -> f64 {
    let (a, b) = match mode {
        IouMode::Oriented => (a.clone(), b.clone()),
        IouMode::AxisAligned => (axis_aligned_hull(a), axis_aligned_hull(b)),
    };
    let inter = intersection_volume(&a, &b).min(a.volume()).min(b.volume());
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Fraction of scans whose predicted box reaches `threshold` IoU with the
/// ground truth; one object per scan.
pub fn detection_ap(
    pred: &BTreeMap<String, OrientedBox>,
    gt: &BTreeMap<String, OrientedBox>,
    threshold: f64,
    mode: IouMode,
) -> Result<f64> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid("threshold", format!("must be in (0, 1], got {threshold}")));
    }
    if !pred.keys().eq(gt.keys()) {
        let missing: Vec<_> = gt.keys().filter(|k| !pred.contains_key(*k)).collect();
        let extra: Vec<_> = pred.keys().filter(|k| !gt.contains_key(*k)).collect();
        return Err(Error::invalid(
            "scan ids",
            format!("missing predictions {missing:?}, unknown scans {extra:?}"),
        ));
    }
    if gt.is_empty() {
        return Err(Error::EmptyInput("scans"));
    }
    let hits = gt
        .iter()
        .filter(|(id, g)| box_iou_with(&pred[*id], g, mode) >= threshold)
        .count();
    Ok(hits as f64 / gt.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};
    use proptest::prelude::*;

    fn cube(center: [f64; 3]) -> OrientedBox {
        OrientedBox {
            center: center.into(),
            rotation: Matrix3::identity(),
            half_extents: Vector3::repeat(0.5),
        }
    }

    #[test]
    fn identical_shifted_disjoint() {
        let a = cube([0.0; 3]);
        assert!((box_iou(&a, &a) - 1.0).abs() < 1e-12);
        assert!((box_iou(&a, &cube([0.5, 0.0, 0.0])) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(box_iou(&a, &cube([2.0, 0.0, 0.0])), 0.0);
    }

    #[test]
    fn rotated_square_overlap() {
        // A unit cube against itself turned 45 degrees: the overlap is a
        // regular octagon prism of area 2(√2 − 1).
        let a = cube([0.0; 3]);
        let mut b = a.clone();
        b.rotation = Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_4).into_inner();
        let inter = 2.0 * (2f64.sqrt() - 1.0);
        let expected = inter / (2.0 - inter);
        assert!((box_iou(&a, &b) - expected).abs() < 1e-12);
        // Axis-aligned hull of b is √2 × √2 × 1.
        assert!((box_iou_with(&a, &b, IouMode::AxisAligned) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn permuted_axes_coincide() {
        let a = OrientedBox {
            center: Vector3::new(1.0, 2.0, 3.0),
            rotation: Matrix3::identity(),
            half_extents: Vector3::new(0.3, 0.7, 1.1),
        };
        let b = OrientedBox {
            center: a.center,
            rotation: Matrix3::from_columns(&[Vector3::y(), -Vector3::x(), Vector3::z()]),
            half_extents: Vector3::new(0.7, 0.3, 1.1),
        };
        assert!((box_iou(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ap_counts_scans() {
        let gt: BTreeMap<_, _> = [("a".to_string(), cube([0.0; 3])), ("b".to_string(), cube([5.0; 3]))].into();
        assert_eq!(detection_ap(&gt, &gt, 0.7, IouMode::Oriented).unwrap(), 1.0);
        let mut pred = gt.clone();
        pred.insert("b".into(), cube([5.5, 5.0, 5.0]));
        assert_eq!(detection_ap(&pred, &gt, 0.5, IouMode::Oriented).unwrap(), 0.5);
        pred.remove("b");
        pred.insert("c".into(), cube([0.0; 3]));
        assert!(matches!(detection_ap(&pred, &gt, 0.5, IouMode::Oriented), Err(Error::InvalidArgument { .. })));
    }

    fn arb_box() -> impl Strategy<Value = OrientedBox> {
        (
            prop::array::uniform3(-1.0f64..1.0),
            prop::array::uniform3(-1.0f64..1.0),
            0.0f64..6.3,
            prop::array::uniform3(0.1f64..1.0),
        )
            .prop_filter_map("axis", |(c, axis, angle, h)| {
                let axis = Vector3::from(axis);
                (axis.norm() > 1e-3).then(|| OrientedBox {
                    center: c.into(),
                    rotation: Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).into_inner(),
                    half_extents: h.into(),
                })
            })
    }

    proptest! {
        #[test]
        fn symmetric_bounded_rigid_invariant(a in arb_box(), b in arb_box(), m in arb_box()) {
            let ab = box_iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((ab - box_iou(&b, &a)).abs() < 1e-9);
            let moved = |x: &OrientedBox| OrientedBox {
                center: m.rotation * x.center + m.center,
                rotation: m.rotation * x.rotation,
                half_extents: x.half_extents,
            };
            prop_assert!((ab - box_iou(&moved(&a), &moved(&b))).abs() < 1e-6);
            prop_assert!((box_iou(&a, &a) - 1.0).abs() < 1e-9);
        }
    }
}

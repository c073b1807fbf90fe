use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FeaturedPointCloud;
use crate::ncut::{bounding_sphere_radius, Segmentation};

pub const MIN_BACKGROUND_POINTS: usize = 50;

/// Background points farther than this many foreground radii from the
/// foreground centroid do not vote.
const SEARCH_RADIUS_FACTOR: f64 = 1.5;

const MIN_INLIER_RATIO: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneParams {
    pub iters: usize,
    /// Inlier distance threshold in scene units.
    pub tol: f64,
}

impl Default for PlaneParams {
    fn default() -> Self {
        PlaneParams { iters: 500, tol: 0.01 }
    }
}

/// The plane `{x : n·x + c = 0}` with unit `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneModel {
    pub normal: Vector3<f64>,
    pub offset: f64,
    /// Ids of the points within tolerance of the plane.
    #[serde(skip)]
    pub inliers: Vec<u64>,
}

impl PlaneModel {
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.offset
    }

    pub fn project(&self, p: &Vector3<f64>) -> Vector3<f64> {
        p - self.normal * self.signed_distance(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plane serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut plane: PlaneModel =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("plane JSON: {e}")))?;
        let norm = plane.normal.norm();
        if !(norm > 0.0 && norm.is_finite() && plane.offset.is_finite()) {
            return Err(Error::Format("plane JSON: degenerate normal".into()));
        }
        if (norm - 1.0).abs() > 1e-9 {
            plane.normal /= norm;
            plane.offset /= norm;
        }
        Ok(plane)
    }
}

fn through_points(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Option<(Vector3<f64>, f64)> {
    let n = (b - a).cross(&(c - a));
    let scale = (b - a).norm() * (c - a).norm();
    let norm = n.norm();
    if !(norm > 1e-12 * scale && norm > 0.0) {
        return None;
    }
    let n = n / norm;
    Some((n, -n.dot(a)))
}

/// Total least squares plane through `points`.
fn least_squares(points: &[Vector3<f64>]) -> (Vector3<f64>, f64) {
    let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    let n = eig.eigenvectors.column(k).normalize();
    (n, -n.dot(&centroid))
}

fn count_within(points: &[Vector3<f64>], n: &Vector3<f64>, c: f64, tol: f64) -> usize {
    points.iter().filter(|p| (n.dot(p) + c).abs() <= tol).count()
}

/// RANSAC ground plane under the foreground.
///
/// Votes come from background points within 1.5 foreground radii of the
/// foreground centroid, or from all background points when fewer than 50
/// lie that close. The best 3-point model is refined by least squares over
/// its inliers and oriented so the foreground centroid lies on the positive
/// side.
pub fn fit_ground_plane<R: Rng + ?Sized>(
    cloud: &FeaturedPointCloud,
    seg: &Segmentation,
    params: &PlaneParams,
    rng: &mut R,
) -> Result<PlaneModel> {
    if seg.labels.len() != cloud.len() {
        return Err(Error::invalid("segmentation", "label count differs from cloud size"));
    }
    if params.iters == 0 || !(params.tol > 0.0 && params.tol.is_finite()) {
        return Err(Error::invalid("plane params", "iters and tol must be positive"));
    }
    let (fg, bg): (Vec<_>, Vec<_>) = cloud.points.iter().zip(&seg.labels).partition(|(_, &l)| l);
    if fg.is_empty() {
        return Err(Error::InvalidPartition);
    }
    if bg.len() < MIN_BACKGROUND_POINTS {
        return Err(Error::NoPlaneFound(format!(
            "{} background points, need {MIN_BACKGROUND_POINTS}",
            bg.len()
        )));
    }
    let fg_positions: Vec<_> = fg.iter().map(|(p, _)| p.position).collect();
    let centroid = fg_positions.iter().sum::<Vector3<f64>>() / fg_positions.len() as f64;
    let reach = SEARCH_RADIUS_FACTOR * bounding_sphere_radius(&fg_positions);
    let near: Vec<_> = bg.iter().filter(|(p, _)| (p.position - centroid).norm() <= reach).collect();
    let voters: Vec<_> = if near.len() >= MIN_BACKGROUND_POINTS {
        near.iter().map(|(p, _)| (p.id, p.position)).collect()
    } else {
        bg.iter().map(|(p, _)| (p.id, p.position)).collect()
    };
    let positions: Vec<Vector3<f64>> = voters.iter().map(|(_, p)| *p).collect();
    let m = positions.len();

    let mut best: Option<(usize, Vector3<f64>, f64)> = None;
    for _ in 0..params.iters {
        let i = rng.random_range(0..m);
        let j = rng.random_range(0..m);
        let k = rng.random_range(0..m);
        if i == j || j == k || i == k {
            continue;
        }
        let Some((n, c)) = through_points(&positions[i], &positions[j], &positions[k]) else {
            continue;
        };
        let count = count_within(&positions, &n, c, params.tol);
        if best.is_none_or(|(b, _, _)| count > b) {
            best = Some((count, n, c));
        }
    }
    let Some((count, mut n, mut c)) = best else {
        return Err(Error::NoPlaneFound("no non-degenerate sample".into()));
    };

    let inliers: Vec<Vector3<f64>> = positions.iter().filter(|p| (n.dot(p) + c).abs() <= params.tol).copied().collect();
    if inliers.len() >= 3 {
        let (rn, rc) = least_squares(&inliers);
        if count_within(&positions, &rn, rc, params.tol) >= count {
            (n, c) = (rn, rc);
        }
    }
    if n.dot(&centroid) + c < 0.0 {
        n = -n;
        c = -c;
    }
    let inliers: Vec<u64> = voters
        .iter()
        .filter(|(_, p)| (n.dot(p) + c).abs() <= params.tol)
        .map(|(id, _)| *id)
        .collect();
    let ratio = inliers.len() as f64 / m as f64;
    if ratio < MIN_INLIER_RATIO {
        return Err(Error::NoPlaneFound(format!("inlier ratio {ratio:.3}")));
    }
    Ok(PlaneModel { normal: n, offset: c, inliers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::FeaturedPoint;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn scene(fg: &[Vector3<f64>], bg: &[Vector3<f64>]) -> (FeaturedPointCloud, Segmentation) {
        let points: Vec<_> = fg
            .iter()
            .chain(bg)
            .enumerate()
            .map(|(i, p)| FeaturedPoint {
                id: i as u64,
                position: *p,
                feature: vec![1.0],
                view_count: 1,
            })
            .collect();
        let n = points.len();
        let labels = (0..n).map(|i| i < fg.len()).collect();
        (
            FeaturedPointCloud { points, cls: vec![1.0], heads: 1, head_dim: 1 },
            Segmentation { labels, ncut_value: 0.0, fiedler: vec![0.0; n], lambda2: 0.0 },
        )
    }

    fn object(rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
        (0..100)
            .map(|_| Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(0.05..1.0)))
            .collect()
    }

    fn noisy_ground(rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
        let noise = Normal::new(0.0, 0.002).unwrap();
        let mut bg: Vec<_> = (0..500)
            .map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), noise.sample(rng)))
            .collect();
        bg.extend((0..100).map(|_| {
            Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        }));
        bg
    }

    #[test]
    fn recovers_noisy_ground() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fg = object(&mut rng);
        let bg = noisy_ground(&mut rng);
        let (cloud, seg) = scene(&fg, &bg);
        let plane = fit_ground_plane(&cloud, &seg, &PlaneParams::default(), &mut rng).unwrap();
        let angle = plane.normal.dot(&Vector3::z()).clamp(-1.0, 1.0).acos().to_degrees();
        assert!(angle < 1.0, "{angle}");
        assert!(plane.offset.abs() < 0.01);
        assert!((plane.normal.norm() - 1.0).abs() < 1e-9);
        for id in &plane.inliers {
            let p = cloud.points[*id as usize].position;
            assert!(plane.signed_distance(&p).abs() <= 0.01 + 1e-12);
        }
    }

    #[test]
    fn exact_plane_is_recovered_and_oriented() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let fg: Vec<_> = object(&mut rng).into_iter().map(|p| Vector3::new(p.x, p.y, -p.z)).collect();
        let bg: Vec<_> = (0..80)
            .map(|_| Vector3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), 0.0))
            .collect();
        let (cloud, seg) = scene(&fg, &bg);
        let plane = fit_ground_plane(&cloud, &seg, &PlaneParams::default(), &mut rng).unwrap();
        // Foreground hangs below: the normal points down.
        assert!((plane.normal - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        assert!(plane.offset.abs() < 1e-12);
        assert_eq!(plane.inliers.len(), 80);
    }

    #[test]
    fn too_few_background_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fg = object(&mut rng);
        let bg: Vec<_> = (0..10)
            .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let (cloud, seg) = scene(&fg, &bg);
        assert!(matches!(
            fit_ground_plane(&cloud, &seg, &PlaneParams::default(), &mut rng),
            Err(Error::NoPlaneFound(_))
        ));
    }

    #[test]
    fn volumetric_noise_has_no_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let fg = object(&mut rng);
        let bg: Vec<_> = (0..400)
            .map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let (cloud, seg) = scene(&fg, &bg);
        let params = PlaneParams { iters: 200, tol: 0.001 };
        assert!(matches!(fit_ground_plane(&cloud, &seg, &params, &mut rng), Err(Error::NoPlaneFound(_))));
    }

    #[test]
    fn shuffle_invariant_across_seeds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let fg = object(&mut rng);
        let bg = noisy_ground(&mut rng);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut shuffled = bg.clone();
            shuffled.shuffle(&mut rng);
            let (cloud, seg) = scene(&fg, &shuffled);
            let plane = fit_ground_plane(&cloud, &seg, &PlaneParams::default(), &mut rng).unwrap();
            assert!(plane.normal.dot(&Vector3::z()).acos().to_degrees() < 1.0);
        }
    }

    #[test]
    fn json_round_trip() {
        let plane = PlaneModel { normal: Vector3::new(0.0, 0.6, 0.8), offset: -0.25, inliers: vec![] };
        let text = plane.to_json();
        assert_eq!(text, r#"{"normal":[0.0,0.6,0.8],"offset":-0.25}"#);
        assert_eq!(PlaneModel::from_json(&text).unwrap(), plane);
    }
}

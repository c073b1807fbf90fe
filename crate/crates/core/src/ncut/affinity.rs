use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use super::similarity::{grouped_dot, normalize_heads};
use crate::error::{Error, Result};
use crate::fusion::FeaturedPointCloud;

pub const MAX_VERTICES: usize = 5000;

/// Smallest degree treated as connected.
pub const MIN_DEGREE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinityParams {
    /// Spatial kernel scale; `None` means 0.2 × the cloud's bounding-sphere radius.
    pub sigma_s: Option<f64>,
    pub feature_exponent: f64,
}

impl Default for AffinityParams {
    fn default() -> Self {
        AffinityParams {
            sigma_s: None,
            feature_exponent: 1.0,
        }
    }
}

/// Dense weighted graph over the cloud's points.
#[derive(Debug, Clone)]
pub struct AffinityGraph {
    weights: DMatrix<f64>,
    degrees: Vec<f64>,
}

impl AffinityGraph {
    /// Wraps a weight matrix, checking symmetry, sign and a zero diagonal.
    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self> {
        let n = weights.nrows();
        if n != weights.ncols() || n < 2 {
            return Err(Error::invalid("weights", "need a square matrix with n >= 2"));
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::invalid("weights", format!("non-zero diagonal at {i}")));
            }
            for j in 0..i {
                let (a, b) = (weights[(i, j)], weights[(j, i)]);
                if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
                    return Err(Error::invalid("weights", format!("bad weight at ({i}, {j})")));
                }
                if (a - b).abs() > 1e-9 {
                    return Err(Error::invalid("weights", format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        let degrees: Vec<f64> = weights.column_iter().map(|c| c.sum()).collect();
        if let Some(i) = degrees.iter().position(|&d| d < MIN_DEGREE) {
            return Err(Error::DisconnectedVertex(i));
        }
        Ok(AffinityGraph { weights, degrees })
    }

    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// `D^{-1/2} (D - W) D^{-1/2}` as a row-major dense matrix.
    pub fn normalized_laplacian(&self) -> Vec<f64> {
        let n = self.len();
        let inv_sqrt: Vec<f64> = self.degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let w = self.weights[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
                out[i * n + j] = if i == j { 1.0 - w } else { -w };
            }
        }
        out
    }

    /// Connected components over positive-weight edges, as a label per vertex.
    pub fn components(&self) -> (usize, Vec<usize>) {
        let n = self.len();
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for (u, l) in label.iter_mut().enumerate() {
                    if *l == usize::MAX && self.weights[(v, u)] > 0.0 {
                        *l = count;
                        stack.push(u);
                    }
                }
            }
            count += 1;
        }
        (count, label)
    }
}

/// Largest distance from the centroid.
pub fn bounding_sphere_radius(points: &[Vector3<f64>]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    points.iter().map(|p| (p - centroid).norm()).fold(0.0, f64::max)
}

/// Fully connected graph with
/// `w(i,j) = max(S*(Z_i, Z_j), 0)^a · exp(-‖p_i − p_j‖² / (2 σ_s²))`.
pub fn build_affinity(cloud: &FeaturedPointCloud, params: &AffinityParams) -> Result<AffinityGraph> {
    let n = cloud.len();
    if !(2..=MAX_VERTICES).contains(&n) {
        return Err(Error::invalid("cloud", format!("need 2..={MAX_VERTICES} points, got {n}")));
    }
    if !(params.feature_exponent > 0.0 && params.feature_exponent.is_finite()) {
        return Err(Error::invalid("feature_exponent", "must be positive"));
    }
    let positions = cloud.positions();
    let sigma = match params.sigma_s {
        Some(s) => s,
        None => 0.2 * bounding_sphere_radius(&positions),
    };
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma_s", format!("must be positive, got {sigma}")));
    }
    let feats: Vec<&[f32]> = cloud.points.iter().map(|p| p.feature.as_slice()).collect();
    let unit = normalize_heads(&feats, cloud.heads).map_err(|(_, head)| Error::DegenerateFeature { head })?;

    let inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
    let a = params.feature_exponent;
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let s = grouped_dot(&unit[i], &unit[j], cloud.heads).max(0.0);
            let feature = if a == 1.0 { s } else { s.powf(a) };
            let d2 = (positions[i] - positions[j]).norm_squared();
            let v = feature * (-d2 * inv_two_sigma2).exp();
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    AffinityGraph::from_weights(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::FeaturedPoint;
    use crate::ncut::grouped_cosine_similarity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(points: Vec<([f64; 3], Vec<f32>)>, heads: usize) -> FeaturedPointCloud {
        let dim = points[0].1.len() / heads;
        FeaturedPointCloud {
            points: points
                .into_iter()
                .enumerate()
                .map(|(i, (p, f))| FeaturedPoint {
                    id: i as u64,
                    position: Vector3::from(p),
                    feature: f,
                    view_count: 1,
                })
                .collect(),
            cls: vec![1.0; heads * dim],
            heads,
            head_dim: dim,
        }
    }

    #[test]
    fn coincident_identical_points() {
        let c = cloud(vec![([0.0; 3], vec![1.0, 2.0]), ([0.0; 3], vec![1.0, 2.0])], 1);
        let g = build_affinity(&c, &AffinityParams { sigma_s: Some(1.0), feature_exponent: 1.0 }).unwrap();
        assert!((g.weight(0, 1) - 1.0).abs() < 1e-12);
        assert_eq!(g.weight(0, 0), 0.0);
    }

    #[test]
    fn opposed_features_disconnect() {
        let c = cloud(vec![([0.0; 3], vec![1.0, 0.0]), ([0.1, 0.0, 0.0], vec![-1.0, 0.0])], 1);
        let r = build_affinity(&c, &AffinityParams { sigma_s: Some(1.0), feature_exponent: 1.0 });
        assert!(matches!(r, Err(Error::DisconnectedVertex(0))));
    }

    #[test]
    fn matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<_> = (0..50)
            .map(|_| {
                let p = [rng.random(), rng.random(), rng.random()];
                let f: Vec<f32> = (0..12).map(|_| rng.random_range(-0.2..1.0)).collect();
                (p, f)
            })
            .collect();
        let c = cloud(pts, 3);
        let params = AffinityParams { sigma_s: Some(0.3), feature_exponent: 2.0 };
        let g = build_affinity(&c, &params).unwrap();
        for i in 0..50 {
            for j in 0..50 {
                let expected = if i == j {
                    0.0
                } else {
                    let s = grouped_cosine_similarity(&c.points[i].feature, &c.points[j].feature, 3).unwrap();
                    let d = c.points[i].position - c.points[j].position;
                    s.max(0.0).powi(2) * (-(d.dot(&d)) / (2.0 * 0.09)).exp()
                };
                assert!((g.weight(i, j) - expected).abs() < 1e-9, "({i},{j})");
            }
        }
        let deg: f64 = (0..50).map(|j| g.weight(3, j)).sum();
        assert!((g.degrees()[3] - deg).abs() < 1e-12);
    }

    #[test]
    fn default_sigma_uses_bounding_sphere() {
        let c = cloud(
            vec![([0.0; 3], vec![1.0]), ([2.0, 0.0, 0.0], vec![1.0]), ([0.1, 0.0, 0.0], vec![1.0])],
            1,
        );
        let g = build_affinity(&c, &AffinityParams::default()).unwrap();
        // centroid x = 0.7, radius 1.3, sigma 0.26
        let sigma: f64 = 0.2 * 1.3;
        let expected = (-0.01 / (2.0 * sigma * sigma)).exp();
        assert!((g.weight(0, 2) - expected).abs() < 1e-12);
    }

    #[test]
    fn size_limits() {
        let c = cloud(vec![([0.0; 3], vec![1.0])], 1);
        assert!(matches!(build_affinity(&c, &AffinityParams::default()), Err(Error::InvalidArgument { .. })));
    }
}

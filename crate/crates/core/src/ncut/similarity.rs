use crate::error::{Error, Result};

const MIN_HEAD_NORM: f64 = 1e-12;

/// Maximum over heads of the per-head cosine similarity.
///
/// `zi` and `zj` are flattened `heads × head_dim` features. Any head with a
/// norm below `1e-12` is rejected.
pub fn grouped_cosine_similarity(zi: &[f32], zj: &[f32], heads: usize) -> Result<f64> {
    if heads == 0 || zi.len() != zj.len() || !zi.len().is_multiple_of(heads) || zi.is_empty() {
        return Err(Error::invalid(
            "heads",
            format!("features of length {}/{} do not split into {heads} heads", zi.len(), zj.len()),
        ));
    }
    let dim = zi.len() / heads;
    let mut best = f64::NEG_INFINITY;
    for (k, (a, b)) in zi.chunks_exact(dim).zip(zj.chunks_exact(dim)).enumerate() {
        let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
        for (&x, &y) in a.iter().zip(b) {
            let (x, y) = (f64::from(x), f64::from(y));
            ab += x * y;
            aa += x * x;
            bb += y * y;
        }
        let (na, nb) = (aa.sqrt(), bb.sqrt());
        if na < MIN_HEAD_NORM || nb < MIN_HEAD_NORM {
            return Err(Error::DegenerateFeature { head: k });
        }
        best = best.max((ab / (na * nb)).clamp(-1.0, 1.0));
    }
    Ok(best)
}

/// Per-head unit-normalized copies of a set of features, for repeated
/// similarity evaluation. Returns the index of the first degenerate point.
pub(crate) fn normalize_heads(features: &[&[f32]], heads: usize) -> std::result::Result<Vec<Vec<f64>>, (usize, usize)> {
    features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let dim = f.len() / heads;
            let mut out: Vec<f64> = f.iter().map(|&v| f64::from(v)).collect();
            for (k, head) in out.chunks_exact_mut(dim).enumerate() {
                let norm = head.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm < MIN_HEAD_NORM {
                    return Err((i, k));
                }
                head.iter_mut().for_each(|v| *v /= norm);
            }
            Ok(out)
        })
        .collect()
}

/// Grouped cosine similarity of two pre-normalized features.
pub(crate) fn grouped_dot(a: &[f64], b: &[f64], heads: usize) -> f64 {
    let dim = a.len() / heads;
    a.chunks_exact(dim)
        .zip(b.chunks_exact(dim))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
        .clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn self_similarity_is_one() {
        let z = [0.3f32, -1.2, 4.0, 0.5, 0.5, 0.1];
        assert!((grouped_cosine_similarity(&z, &z, 3).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn max_of_head_cosines() {
        // Head 0 cosine 0.2, head 1 cosine 0.9 (unit vectors in the plane).
        let c = |t: f64| [t as f32, (1.0 - t * t).sqrt() as f32];
        let zi = [1.0f32, 0.0, 1.0, 0.0];
        let [a0, a1] = c(0.2);
        let [b0, b1] = c(0.9);
        let zj = [a0, a1, b0, b1];
        let s = grouped_cosine_similarity(&zi, &zj, 2).unwrap();
        assert!((s - 0.9).abs() < 1e-6, "{s}");
    }

    #[test]
    fn zero_head_is_degenerate() {
        let zi = [1.0f32, 0.0, 0.0, 0.0];
        let zj = [1.0f32, 0.0, 1.0, 0.0];
        assert!(matches!(
            grouped_cosine_similarity(&zi, &zj, 2),
            Err(Error::DegenerateFeature { head: 1 })
        ));
    }

    proptest! {
        #[test]
        fn symmetric_bounded_and_scale_invariant(
            zi in prop::collection::vec(-1.0f32..1.0, 12),
            zj in prop::collection::vec(-1.0f32..1.0, 12),
            scales in prop::collection::vec(0.01f32..100.0, 8),
        ) {
            let heads = 4;
            let norms_ok = |z: &[f32]| z.chunks(3).all(|h| h.iter().map(|v| v * v).sum::<f32>() > 1e-6);
            prop_assume!(norms_ok(&zi) && norms_ok(&zj));
            let s = grouped_cosine_similarity(&zi, &zj, heads).unwrap();
            prop_assert!((-1.0..=1.0).contains(&s));
            let t = grouped_cosine_similarity(&zj, &zi, heads).unwrap();
            prop_assert!((s - t).abs() < 1e-12);
            let scale = |z: &[f32], off: usize| -> Vec<f32> {
                z.iter().enumerate().map(|(i, v)| v * scales[off + i / 3]).collect()
            };
            let u = grouped_cosine_similarity(&scale(&zi, 0), &scale(&zj, 4), heads).unwrap();
            prop_assert!((s - u).abs() < 1e-6);
        }
    }
}

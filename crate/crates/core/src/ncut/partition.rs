use serde::Serialize;

use super::affinity::AffinityGraph;
use super::eigen::smallest_eigenpairs;
use crate::error::{Error, Result};

/// A two-way labeling of the graph vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    /// `true` marks foreground (after [`super::select_foreground`]).
    pub labels: Vec<bool>,
    pub ncut_value: f64,
    /// Generalized eigenvector `D^{-1/2} v₂` the split was read from.
    pub fiedler: Vec<f64>,
    pub lambda2: f64,
}

impl Segmentation {
    pub fn sizes(&self) -> (usize, usize) {
        let fg = self.labels.iter().filter(|&&l| l).count();
        (fg, self.labels.len() - fg)
    }

    pub fn summary(&self) -> SegmentationSummary {
        let (foreground, background) = self.sizes();
        SegmentationSummary {
            ncut_value: self.ncut_value,
            lambda2: self.lambda2,
            sizes: [foreground, background],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentationSummary {
    pub ncut_value: f64,
    pub lambda2: f64,
    /// `[foreground, background]` point counts.
    pub sizes: [usize; 2],
}

/// `cut(A,B)/assoc(A,V) + cut(A,B)/assoc(B,V)` with `A = {i : labels[i]}`.
pub fn ncut_value(graph: &AffinityGraph, labels: &[bool]) -> Result<f64> {
    let n = graph.len();
    if labels.len() != n {
        return Err(Error::invalid("labels", format!("expected {n} labels, got {}", labels.len())));
    }
    let in_a = labels.iter().filter(|&&l| l).count();
    if in_a == 0 || in_a == n {
        return Err(Error::InvalidPartition);
    }
    let w = graph.weights();
    let mut cut = 0.0;
    let (mut assoc_a, mut assoc_b) = (0.0, 0.0);
    for j in 0..n {
        let col = w.column(j);
        if labels[j] {
            assoc_a += graph.degrees()[j];
            cut += (0..n).filter(|&i| !labels[i]).map(|i| col[i]).sum::<f64>();
        } else {
            assoc_b += graph.degrees()[j];
        }
    }
    Ok(cut / assoc_a + cut / assoc_b)
}

/// Number of low eigenvectors whose threshold splits are considered.
const CANDIDATE_VECTORS: usize = 3;

/// Upper bound on local-refinement passes over all vertices.
const REFINE_PASSES: usize = 64;

/// Normalized-cut bipartition.
///
/// Disconnected graphs are split along components: the largest component
/// against the rest. Otherwise the eigenvectors of the smallest non-trivial
/// eigenvalues of `D^{-1/2}(D−W)D^{-1/2}` are mapped to `y = D^{-1/2} v` and
/// every midpoint between consecutive distinct sorted entries is tried as a
/// threshold. Each best threshold split is then improved by single-vertex
/// moves that lower NCut, and the overall least NCut wins. `fiedler` always
/// holds the second eigenvector.
pub fn spectral_bipartition(graph: &AffinityGraph) -> Result<Segmentation> {
    let n = graph.len();
    let (count, component) = graph.components();
    if count > 1 {
        let mut sizes = vec![0usize; count];
        for &c in &component {
            sizes[c] += 1;
        }
        let largest = (0..count).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).unwrap_or(0);
        let labels: Vec<bool> = component.iter().map(|&c| c == largest).collect();
        let fiedler = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
        return Ok(Segmentation {
            ncut_value: ncut_value(graph, &labels)?,
            labels,
            fiedler,
            lambda2: 0.0,
        });
    }

    let laplacian = graph.normalized_laplacian();
    let wanted = (CANDIDATE_VECTORS + 1).min(n);
    let (values, vectors) = smallest_eigenpairs(&laplacian, n, wanted)?;
    let lambda2 = values[1];
    let generalized = |v: &[f64]| -> Vec<f64> { v.iter().zip(graph.degrees()).map(|(v, d)| v / d.sqrt()).collect() };
    let fiedler = generalized(&vectors[1]);

    let mut best: Option<(f64, Vec<bool>)> = None;
    for v in &vectors[1..] {
        let mut labels = sweep(graph, &generalized(v));
        let value = refine(graph, &mut labels);
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, labels));
        }
    }
    let (_, labels) = best.ok_or_else(|| Error::NumericalFailure("no candidate split".into()))?;
    Ok(Segmentation {
        ncut_value: ncut_value(graph, &labels)?,
        labels,
        fiedler,
        lambda2,
    })
}

/// Greedy single-vertex moves while NCut strictly decreases. Both classes
/// stay non-empty. Returns the final NCut.
fn refine(graph: &AffinityGraph, labels: &mut [bool]) -> f64 {
    let n = graph.len();
    let w = graph.weights();
    let deg = graph.degrees();
    let total: f64 = deg.iter().sum();
    // `link[v]` is w(v, true side).
    let mut link = vec![0.0; n];
    let mut assoc_a = 0.0;
    let mut size_a = 0;
    for j in 0..n {
        if labels[j] {
            assoc_a += deg[j];
            size_a += 1;
            for (i, l) in link.iter_mut().enumerate() {
                *l += w[(i, j)];
            }
        }
    }
    let mut cut: f64 = (0..n).filter(|&v| !labels[v]).map(|v| link[v]).sum();
    let value = |cut: f64, assoc_a: f64| cut / assoc_a + cut / (total - assoc_a);
    let mut current = value(cut, assoc_a);

    for _ in 0..REFINE_PASSES {
        let mut improved = false;
        for v in 0..n {
            let (new_cut, new_assoc, new_size) = if labels[v] {
                if size_a == 1 {
                    continue;
                }
                (cut + 2.0 * link[v] - deg[v], assoc_a - deg[v], size_a - 1)
            } else {
                if size_a == n - 1 {
                    continue;
                }
                (cut + deg[v] - 2.0 * link[v], assoc_a + deg[v], size_a + 1)
            };
            let candidate = value(new_cut, new_assoc);
            // Relative margin keeps rounding noise from cycling.
            if candidate < current * (1.0 - 1e-12) {
                let sign = if labels[v] { -1.0 } else { 1.0 };
                for (i, l) in link.iter_mut().enumerate() {
                    *l += sign * w[(i, v)];
                }
                labels[v] = !labels[v];
                cut = new_cut;
                assoc_a = new_assoc;
                size_a = new_size;
                current = candidate;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    current
}

/// Best threshold split of `y` by NCut, evaluated incrementally in `O(n²)`.
fn sweep(graph: &AffinityGraph, y: &[f64]) -> Vec<bool> {
    let n = graph.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let total: f64 = graph.degrees().iter().sum();
    let distinct = order.windows(2).any(|w| y[w[0]] < y[w[1]]);

    // Low side grows one vertex at a time; `link[v]` is w(v, low side).
    let w = graph.weights();
    let mut link = vec![0.0; n];
    let (mut cut, mut assoc_low) = (0.0, 0.0);
    let mut best = (f64::INFINITY, 1);
    for k in 1..n {
        let v = order[k - 1];
        let d = graph.degrees()[v];
        cut += d - 2.0 * link[v];
        assoc_low += d;
        for (u, l) in link.iter_mut().enumerate() {
            *l += w[(u, v)];
        }
        if distinct && y[order[k - 1]] == y[order[k]] {
            continue;
        }
        let value = cut / assoc_low + cut / (total - assoc_low);
        if value < best.0 {
            best = (value, k);
        }
    }
    let mut labels = vec![true; n];
    for &v in &order[..best.1] {
        labels[v] = false;
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> AffinityGraph {
        let mut w = DMatrix::zeros(n, n);
        for &(i, j, v) in edges {
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
        AffinityGraph::from_weights(w).unwrap()
    }

    fn complete(n: usize) -> AffinityGraph {
        let edges: Vec<_> = (0..n).flat_map(|i| (0..i).map(move |j| (i, j, 1.0))).collect();
        graph(n, &edges)
    }

    #[test]
    fn path_graph_value() {
        let g = graph(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let v = ncut_value(&g, &[true, false, false]).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn k4_balanced_split() {
        let g = complete(4);
        for labels in [[true, true, false, false], [true, false, true, false], [false, true, true, false]] {
            assert!((ncut_value(&g, &labels).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_class_rejected() {
        let g = complete(3);
        assert!(matches!(ncut_value(&g, &[true; 3]), Err(Error::InvalidPartition)));
        assert!(matches!(ncut_value(&g, &[false; 3]), Err(Error::InvalidPartition)));
    }

    #[test]
    fn disconnected_cliques() {
        let mut edges = vec![];
        for (a, b) in [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (5, 6), (3, 6), (4, 6)] {
            edges.push((a, b, 1.0));
        }
        let g = graph(7, &edges);
        assert_eq!(ncut_value(&g, &[true, true, true, false, false, false, false]).unwrap(), 0.0);
        let seg = spectral_bipartition(&g).unwrap();
        assert_eq!(seg.ncut_value, 0.0);
        assert_eq!(seg.labels, vec![false, false, false, true, true, true, true]);
    }

    #[test]
    fn cycle_reaches_minimum_value() {
        let edges: Vec<_> = (0..6).map(|i| (i, (i + 1) % 6, 1.0)).collect();
        let g = graph(6, &edges);
        let seg = spectral_bipartition(&g).unwrap();
        // Best split of C6 cuts two edges into halves of three: 2/6 + 2/6.
        assert!((seg.ncut_value - 2.0 / 3.0).abs() < 1e-12, "{}", seg.ncut_value);
        assert!(seg.lambda2 > 0.0);
    }

    #[test]
    fn refinement_never_worsens_and_tracks_value() {
        let g = graph(5, &[(0, 1, 1.0), (1, 2, 0.2), (2, 3, 1.0), (3, 4, 1.0), (0, 4, 0.1), (1, 3, 0.05)]);
        let mut labels = vec![true, false, true, false, true];
        let before = ncut_value(&g, &labels).unwrap();
        let after = refine(&g, &mut labels);
        assert!(after <= before);
        assert!((after - ncut_value(&g, &labels).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn lambda2_bounds() {
        let g = complete(5);
        let seg = spectral_bipartition(&g).unwrap();
        // Normalized Laplacian of K_n has eigenvalue n/(n-1).
        assert!((seg.lambda2 - 1.25).abs() < 1e-12);
    }
}

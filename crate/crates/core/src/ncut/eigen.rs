//! Dense symmetric eigensolver for a few extreme eigenpairs.
//!
//! Householder reduction to tridiagonal form, implicit QL for the full
//! spectrum of the tridiagonal matrix, then inverse iteration for the
//! requested eigenvectors and back-transformation through the reflectors.
//! Cost is dominated by the reduction, about `4/3 n³` flops.

use crate::error::{Error, Result};

const MAX_QL_ITERATIONS: usize = 60;
const INVERSE_ITERATIONS: usize = 4;

/// Symmetric tridiagonal matrix plus the reflectors that produced it.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i + 1`.
    pub off: Vec<f64>,
    /// Unit Householder vectors; reflector `k` acts on indices `k + 1..n`.
    reflectors: Vec<Vec<f64>>,
}

/// Reduces a dense symmetric matrix (row-major, `n × n`) to tridiagonal form.
/// Only symmetric input is meaningful; the lower triangle drives the reduction.
pub fn tridiagonalize(matrix: &[f64], n: usize) -> Tridiagonal {
    assert_eq!(matrix.len(), n * n, "matrix must be n x n");
    let mut a = matrix.to_vec();
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    let mut reflectors = Vec::with_capacity(n.saturating_sub(2));
    let mut p = vec![0.0; n];

    for k in 0..n.saturating_sub(2) {
        let m = n - k - 1;
        let mut v: Vec<f64> = (0..m).map(|i| a[(k + 1 + i) * n + k]).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            off[k] = 0.0;
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if v[0] > 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            off[k] = alpha;
            reflectors.push(Vec::new());
            continue;
        }
        v.iter_mut().for_each(|x| *x /= vnorm);

        // A' = H A H with H = I - 2 v vᵀ on the trailing block:
        // p = A v, q = p - (vᵀp) v, A' = A - 2 (v qᵀ + q vᵀ).
        let base = k + 1;
        for i in 0..m {
            let row = &a[(base + i) * n + base..(base + i) * n + n];
            p[i] = row.iter().zip(&v).map(|(x, y)| x * y).sum();
        }
        let kappa: f64 = p[..m].iter().zip(&v).map(|(x, y)| x * y).sum();
        for i in 0..m {
            p[i] -= kappa * v[i];
        }
        for i in 0..m {
            let (vi, qi) = (v[i], p[i]);
            let row = &mut a[(base + i) * n + base..(base + i) * n + n];
            for ((x, vj), qj) in row.iter_mut().zip(&v).zip(&p[..m]) {
                *x -= 2.0 * (vi * qj + qi * vj);
            }
        }
        off[k] = alpha;
        reflectors.push(v);
    }
    for (i, d) in diag.iter_mut().enumerate() {
        *d = a[i * n + i];
    }
    if n >= 2 {
        off[n - 2] = a[(n - 1) * n + (n - 2)];
    }
    Tridiagonal { diag, off, reflectors }
}

impl Tridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// All eigenvalues in ascending order (implicit QL with Wilkinson shifts).
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let n = self.len();
        let mut d = self.diag.clone();
        let mut e = self.off.clone();
        e.push(0.0);
        for l in 0..n {
            let mut iter = 0;
            loop {
                let mut m = l;
                while m + 1 < n {
                    let dd = d[m].abs() + d[m + 1].abs();
                    if e[m].abs() <= f64::EPSILON * dd {
                        break;
                    }
                    m += 1;
                }
                if m == l {
                    break;
                }
                iter += 1;
                if iter > MAX_QL_ITERATIONS {
                    return Err(Error::NumericalFailure(format!(
                        "QL iteration did not converge for eigenvalue {l}"
                    )));
                }
                let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                let mut r = g.hypot(1.0);
                g = d[m] - d[l] + e[l] / (g + r.copysign(g));
                let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
                let mut deflated = false;
                let mut i = m;
                while i > l {
                    i -= 1;
                    let f = s * e[i];
                    let b = c * e[i];
                    r = f.hypot(g);
                    e[i + 1] = r;
                    if r == 0.0 {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        deflated = true;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                }
                if deflated {
                    continue;
                }
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite eigenvalue".into()));
        }
        d.sort_by(f64::total_cmp);
        Ok(d)
    }

    /// Eigenvector of the tridiagonal matrix for a computed eigenvalue, by
    /// inverse iteration, orthogonalized against `previous`.
    fn tridiagonal_eigenvector(&self, lambda: f64, previous: &[Vec<f64>]) -> Vec<f64> {
        let n = self.len();
        if n == 1 {
            return vec![1.0];
        }
        let scale = self
            .diag
            .iter()
            .chain(&self.off)
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let tiny = f64::EPSILON * scale;
        let lu = TridiagonalLu::factor(&self.diag, &self.off, lambda, tiny);

        // Deterministic, generic start vector.
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 104_729) as f64 / 104_729.0).collect();
        for _ in 0..INVERSE_ITERATIONS {
            orthogonalize(&mut x, previous);
            normalize(&mut x);
            lu.solve(&mut x);
        }
        orthogonalize(&mut x, previous);
        normalize(&mut x);
        x
    }

    /// Maps an eigenvector of the tridiagonal matrix back to the original basis.
    pub fn back_transform(&self, x: &mut [f64]) {
        for (k, v) in self.reflectors.iter().enumerate().rev() {
            if v.is_empty() {
                continue;
            }
            let tail = &mut x[k + 1..];
            let dot: f64 = tail.iter().zip(v).map(|(a, b)| a * b).sum();
            for (t, vi) in tail.iter_mut().zip(v) {
                *t -= 2.0 * dot * vi;
            }
        }
    }
}

fn normalize(x: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 && norm.is_finite() {
        x.iter_mut().for_each(|v| *v /= norm);
    }
}

fn orthogonalize(x: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let dot: f64 = x.iter().zip(b).map(|(p, q)| p * q).sum();
        for (p, q) in x.iter_mut().zip(b) {
            *p -= dot * q;
        }
    }
}

/// LU factorization with partial pivoting of `T - shift·I`.
struct TridiagonalLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagonalLu {
    fn factor(diag: &[f64], off: &[f64], shift: f64, tiny: f64) -> Self {
        let n = diag.len();
        let mut d: Vec<f64> = diag.iter().map(|v| v - shift).collect();
        let mut dl = off.to_vec();
        let mut du = off.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        for v in d.iter_mut() {
            if v.abs() < tiny {
                *v = tiny.copysign(*v);
            }
        }
        TridiagonalLu { dl, d, du, du2, swapped }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n - 1 {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n >= 2 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

/// The `count` smallest eigenpairs of a dense symmetric matrix (row-major).
///
/// Eigenvalues are ascending; eigenvectors have unit norm and are returned
/// in the same order.
pub fn smallest_eigenpairs(matrix: &[f64], n: usize, count: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if n == 0 || count == 0 || count > n {
        return Err(Error::invalid("count", format!("need 1 <= count <= n, got {count} for n = {n}")));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("matrix has non-finite entries".into()));
    }
    let tri = tridiagonalize(matrix, n);
    let values = tri.eigenvalues()?;
    let mut tvecs: Vec<Vec<f64>> = Vec::with_capacity(count);
    for &lambda in &values[..count] {
        let v = tri.tridiagonal_eigenvector(lambda, &tvecs);
        tvecs.push(v);
    }
    let vectors = tvecs
        .into_iter()
        .map(|mut v| {
            tri.back_transform(&mut v);
            v
        })
        .collect::<Vec<_>>();
    if vectors.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite eigenvector".into()));
    }
    Ok((values[..count].to_vec(), vectors))
}

/// All eigenvalues of a dense symmetric matrix, ascending.
pub fn eigenvalues(matrix: &[f64], n: usize) -> Result<Vec<f64>> {
    tridiagonalize(matrix, n).eigenvalues()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = rng.random_range(-1.0..1.0);
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        a
    }

    fn residual(a: &[f64], n: usize, lambda: f64, v: &[f64]) -> f64 {
        (0..n)
            .map(|i| {
                let av: f64 = (0..n).map(|j| a[i * n + j] * v[j]).sum();
                (av - lambda * v[i]).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn diagonal_matrix() {
        let a = [3.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 2.0];
        let (vals, vecs) = smallest_eigenpairs(&a, 3, 2).unwrap();
        assert_eq!(vals, vec![-1.0, 2.0]);
        assert!((vecs[0][1].abs() - 1.0).abs() < 1e-12);
        assert!((vecs[1][2].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_sizes() {
        let (vals, vecs) = smallest_eigenpairs(&[5.0], 1, 1).unwrap();
        assert_eq!((vals[0], vecs[0][0]), (5.0, 1.0));
        let a = [2.0, 1.0, 1.0, 2.0];
        let (vals, vecs) = smallest_eigenpairs(&a, 2, 2).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14);
        assert!(residual(&a, 2, vals[0], &vecs[0]) < 1e-12);
        assert!(residual(&a, 2, vals[1], &vecs[1]) < 1e-12);
    }

    #[test]
    fn trace_and_residuals_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [3, 8, 31, 90] {
            let a = random_symmetric(n, &mut rng);
            let vals = eigenvalues(&a, n).unwrap();
            let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
            assert!((vals.iter().sum::<f64>() - trace).abs() < 1e-10 * n as f64);
            let (low, vecs) = smallest_eigenpairs(&a, n, 3).unwrap();
            for (l, v) in low.iter().zip(&vecs) {
                assert!(residual(&a, n, *l, v) < 1e-9, "n = {n}");
            }
            let dot: f64 = vecs[0].iter().zip(&vecs[1]).map(|(x, y)| x * y).sum();
            assert!(dot.abs() < 1e-9);
        }
    }

    #[test]
    fn repeated_eigenvalue_vectors_stay_orthogonal() {
        // Block diagonal with two identical 2x2 blocks: eigenvalues 1,1,3,3.
        let a = [
            2.0, 1.0, 0.0, 0.0, //
            1.0, 2.0, 0.0, 0.0, //
            0.0, 0.0, 2.0, 1.0, //
            0.0, 0.0, 1.0, 2.0,
        ];
        let (vals, vecs) = smallest_eigenpairs(&a, 4, 2).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        let dot: f64 = vecs[0].iter().zip(&vecs[1]).map(|(x, y)| x * y).sum();
        assert!(dot.abs() < 1e-10);
        for v in &vecs {
            assert!(residual(&a, 4, 1.0, v) < 1e-10);
        }
    }
}

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Denominator guard of the normalized attention.
pub const ATTENTION_EPS: f64 = 1e-6;

/// Largest accepted coordinate magnitude.
const POSITION_LIMIT: f64 = 1.001;

/// Fourier features of positions in `[-1, 1]³`.
///
/// Column `c·2L + 2k` holds `sin(2^k π p_c)` and the next one the cosine.
pub fn positional_encode(positions: &[[f64; 3]], bands: usize) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(positions.len(), 6 * bands);
    for (i, p) in positions.iter().enumerate() {
        for (c, &x) in p.iter().enumerate() {
            if x.is_nan() || x.abs() > POSITION_LIMIT {
                return Err(Error::invalid("positions", format!("coordinate {x} outside [-1, 1]")));
            }
            let mut freq = std::f64::consts::PI;
            for k in 0..bands {
                let (s, co) = (freq * x).sin_cos();
                out[(i, c * 2 * bands + 2 * k)] = s;
                out[(i, c * 2 * bands + 2 * k + 1)] = co;
                freq *= 2.0;
            }
        }
    }
    Ok(out)
}

fn phi(x: f64) -> f64 {
    if x > 0.0 {
        x + 1.0
    } else {
        x.exp()
    }
}

fn phi_prime(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Intermediates of one head kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct HeadCache {
    phi_q: DMatrix<f64>,
    phi_k: DMatrix<f64>,
    /// `Σ_j φ(K_j) V_jᵀ`.
    kv: DMatrix<f64>,
    /// `Σ_j φ(K_j)`.
    k_sum: DMatrix<f64>,
    den: Vec<f64>,
    out: DMatrix<f64>,
}

fn check(q: &DMatrix<f64>, k: &DMatrix<f64>, v: &DMatrix<f64>, heads: usize) -> Result<usize> {
    let d = q.ncols();
    if heads == 0 || !d.is_multiple_of(heads) || k.shape() != q.shape() || v.shape() != q.shape() {
        return Err(Error::invalid("attention", format!("width {d} with {heads} heads, or Q/K/V shapes differ")));
    }
    Ok(d / heads)
}

pub(crate) fn forward_cached(
    q: &DMatrix<f64>,
    k: &DMatrix<f64>,
    v: &DMatrix<f64>,
    heads: usize,
) -> Result<(DMatrix<f64>, Vec<HeadCache>)> {
    let dh = check(q, k, v, heads)?;
    let n = q.nrows();
    let mut out = DMatrix::zeros(n, q.ncols());
    let mut caches = Vec::with_capacity(heads);
    for h in 0..heads {
        let phi_q = q.columns(h * dh, dh).map(phi);
        let phi_k = k.columns(h * dh, dh).map(phi);
        let vh = v.columns(h * dh, dh);
        let kv = phi_k.transpose() * vh;
        let k_sum = phi_k.row_sum().transpose();
        let k_sum = DMatrix::from_iterator(k_sum.len(), 1, k_sum.iter().copied());
        let num = &phi_q * &kv;
        let den_col = &phi_q * &k_sum;
        let den: Vec<f64> = den_col.iter().map(|d| d + ATTENTION_EPS).collect();
        let mut head_out = num;
        for (i, d) in den.iter().enumerate() {
            head_out.row_mut(i).iter_mut().for_each(|x| *x /= d);
        }
        out.columns_mut(h * dh, dh).copy_from(&head_out);
        caches.push(HeadCache { phi_q, phi_k, kv, k_sum, den, out: head_out });
    }
    Ok((out, caches))
}

/// Kernelized attention with `φ(x) = elu(x) + 1`, per head:
/// `out_i = φ(Q_i)ᵀ Σ_j φ(K_j) V_jᵀ / (φ(Q_i)ᵀ Σ_j φ(K_j) + ε)`.
pub fn linear_attention(q: &DMatrix<f64>, k: &DMatrix<f64>, v: &DMatrix<f64>, heads: usize) -> Result<DMatrix<f64>> {
    forward_cached(q, k, v, heads).map(|(out, _)| out)
}

/// Gradients with respect to `(Q, K, V)` given the output gradient.
pub(crate) fn backward(
    q: &DMatrix<f64>,
    k: &DMatrix<f64>,
    v: &DMatrix<f64>,
    caches: &[HeadCache],
    d_out: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let heads = caches.len();
    let dh = q.ncols() / heads;
    let (mut dq, mut dk, mut dv) = (q.map(|_| 0.0), k.map(|_| 0.0), v.map(|_| 0.0));
    for (h, c) in caches.iter().enumerate() {
        let g = d_out.columns(h * dh, dh);
        let mut d_num = g.clone_owned();
        let mut d_den = DMatrix::zeros(g.nrows(), 1);
        for i in 0..g.nrows() {
            d_num.row_mut(i).iter_mut().for_each(|x| *x /= c.den[i]);
            d_den[i] = -g.row(i).dot(&c.out.row(i)) / c.den[i];
        }
        let d_phi_q = &d_num * c.kv.transpose() + &d_den * c.k_sum.transpose();
        let d_kv = c.phi_q.transpose() * &d_num;
        let d_ksum = c.phi_q.transpose() * &d_den;
        let vh = v.columns(h * dh, dh);
        let mut d_phi_k = vh * d_kv.transpose();
        for mut row in d_phi_k.row_iter_mut() {
            row += d_ksum.transpose();
        }
        let d_v = &c.phi_k * &d_kv;
        let qh = q.columns(h * dh, dh);
        let kh = k.columns(h * dh, dh);
        dq.columns_mut(h * dh, dh).copy_from(&d_phi_q.zip_map(&qh, |g, x| g * phi_prime(x)));
        dk.columns_mut(h * dh, dh).copy_from(&d_phi_k.zip_map(&kh, |g, x| g * phi_prime(x)));
        dv.columns_mut(h * dh, dh).copy_from(&d_v);
    }
    (dq, dk, dv)
}

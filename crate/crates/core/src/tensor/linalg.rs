use faer::Mat;

use super::dense::Tensor;
use crate::{Error, Result};

/// Relative singular-value cutoff applied on top of any bond-dimension cap.
pub const SVD_CUTOFF: f64 = 1e-14;

/// Thin SVD of a row-major `m x n` matrix, singular values descending.
pub(crate) struct Svd {
    pub u: Vec<f64>,  // m x r
    pub s: Vec<f64>,  // r
    pub vt: Vec<f64>, // r x n
    pub rank: usize,
}

pub(crate) fn svd(a: &[f64], m: usize, n: usize, context: &str) -> Result<Svd> {
    let mat = Mat::from_fn(m, n, |i, j| a[i * n + j]);
    let dec = mat
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge ({context}, {m}x{n}): {e:?}")))?;
    let (u, v) = (dec.U(), dec.V());
    let s = dec.S().column_vector();
    let r = m.min(n);
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));

    let mut u_out = vec![0.0; m * r];
    let mut vt_out = vec![0.0; r * n];
    let mut s_out = vec![0.0; r];
    for (new, &old) in order.iter().enumerate() {
        s_out[new] = s[old];
        for i in 0..m {
            u_out[i * r + new] = u[(i, old)];
        }
        for j in 0..n {
            vt_out[new * n + j] = v[(j, old)];
        }
    }
    if s_out.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite singular values ({context}, {m}x{n})"
        )));
    }
    Ok(Svd {
        u: u_out,
        s: s_out,
        vt: vt_out,
        rank: r,
    })
}

/// Number of singular values kept under a cap and the relative cutoff.
pub(crate) fn kept_rank(s: &[f64], chi: usize, cutoff: f64) -> usize {
    let smax = s.first().copied().unwrap_or(0.0);
    let above = s.iter().take_while(|&&x| x > cutoff * smax).count();
    above.clamp(1, chi.max(1)).min(s.len())
}

/// Thin QR of a row-major `m x n` matrix: `(q: m x r, r: r x n, r)`.
pub(crate) fn qr(a: &[f64], m: usize, n: usize) -> (Vec<f64>, Vec<f64>, usize) {
    let mat = Mat::from_fn(m, n, |i, j| a[i * n + j]);
    let dec = mat.qr();
    let q = dec.compute_thin_Q();
    let r = dec.thin_R();
    let k = m.min(n);
    let mut q_out = vec![0.0; m * k];
    let mut r_out = vec![0.0; k * n];
    for i in 0..m {
        for j in 0..k {
            q_out[i * k + j] = q[(i, j)];
        }
    }
    for i in 0..k {
        for j in i..n {
            r_out[i * n + j] = r[(i, j)];
        }
    }
    (q_out, r_out, k)
}

/// Outcome of [`svd_truncate`].
#[derive(Clone, Debug)]
pub struct SvdSplit {
    /// Legs: the left legs in the requested order, then the new bond.
    pub left: Tensor,
    /// Legs: the new bond, then the remaining legs in their original order.
    /// The kept singular values are folded into this factor.
    pub right: Tensor,
    /// Sum of squared discarded singular values.
    pub discarded_weight: f64,
    pub singular_values: Vec<f64>,
}

/// Rank-`chi` factorization of `t` across the bipartition `left_legs` versus
/// the remaining legs, dropping singular values below `tol * s_max` as well.
pub fn svd_truncate(t: &Tensor, left_legs: &[usize], chi: usize, tol: f64) -> Result<SvdSplit> {
    if chi == 0 {
        return Err(Error::InvalidParameter("svd_truncate needs chi >= 1".into()));
    }
    if let Some(&bad) = left_legs.iter().find(|&&l| l >= t.rank()) {
        return Err(Error::InvalidParameter(format!(
            "leg {bad} out of range for rank {}",
            t.rank()
        )));
    }
    let right_legs: Vec<usize> = (0..t.rank()).filter(|l| !left_legs.contains(l)).collect();
    let perm: Vec<usize> = left_legs.iter().chain(&right_legs).copied().collect();
    let p = t.permute(&perm);
    let left_dims: Vec<usize> = left_legs.iter().map(|&l| t.shape()[l]).collect();
    let right_dims: Vec<usize> = right_legs.iter().map(|&l| t.shape()[l]).collect();
    let m: usize = left_dims.iter().product();
    let n: usize = right_dims.iter().product();

    let dec = svd(p.data(), m, n, "svd_truncate")?;
    let keep = kept_rank(&dec.s, chi, tol);
    let discarded_weight = dec.s[keep..].iter().map(|x| x * x).sum();

    let mut left = vec![0.0; m * keep];
    for i in 0..m {
        left[i * keep..(i + 1) * keep].copy_from_slice(&dec.u[i * dec.rank..i * dec.rank + keep]);
    }
    let mut right = vec![0.0; keep * n];
    for k in 0..keep {
        for j in 0..n {
            right[k * n + j] = dec.s[k] * dec.vt[k * n + j];
        }
    }
    let mut lshape = left_dims;
    lshape.push(keep);
    let mut rshape = vec![keep];
    rshape.extend(right_dims);
    Ok(SvdSplit {
        left: Tensor::new(lshape, left)?,
        right: Tensor::new(rshape, right)?,
        discarded_weight,
        singular_values: dec.s,
    })
}

//! Open-boundary matrix product states with a factored-out log scale.
//!
//! Site tensors carry legs `(left bond, physical, right bond)`. The state
//! represented is `exp(log_scale) * contraction(sites)`.

use super::dense::{matmul, matmul_t, Tensor};
use super::linalg::{kept_rank, qr, svd, SVD_CUTOFF};
use super::scalar::LogScalar;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Canonical {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mps {
    sites: Vec<Tensor>,
    log_scale: f64,
}

/// Bond dimension cap; `0` means no cap.
fn cap(chi: usize) -> usize {
    if chi == 0 {
        usize::MAX
    } else {
        chi
    }
}

impl Mps {
    pub fn new(sites: Vec<Tensor>, log_scale: f64) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidParameter("MPS needs at least one site".into()));
        }
        for (i, s) in sites.iter().enumerate() {
            if s.rank() != 3 {
                return Err(Error::DimensionMismatch(format!(
                    "MPS site {i} has rank {}",
                    s.rank()
                )));
            }
        }
        if sites[0].shape()[0] != 1 || sites[sites.len() - 1].shape()[2] != 1 {
            return Err(Error::DimensionMismatch(
                "MPS boundary bonds must have dimension 1".into(),
            ));
        }
        for (i, w) in sites.windows(2).enumerate() {
            if w[0].shape()[2] != w[1].shape()[0] {
                return Err(Error::DimensionMismatch(format!(
                    "bond between sites {i} and {} disagrees ({} vs {})",
                    i + 1,
                    w[0].shape()[2],
                    w[1].shape()[0]
                )));
            }
        }
        if !log_scale.is_finite() {
            return Err(Error::Numerical("non-finite MPS log scale".into()));
        }
        Ok(Mps { sites, log_scale })
    }

    /// Product state of the given local vectors.
    pub fn product(vectors: &[Vec<f64>]) -> Result<Self> {
        let sites = vectors
            .iter()
            .map(|v| Tensor::new(vec![1, v.len(), 1], v.clone()))
            .collect::<Result<Vec<_>>>()?;
        Mps::new(sites, 0.0)
    }

    /// Unit-norm product of all-ones vectors, i.e. the uniform distribution.
    pub fn uniform(phys_dims: &[usize]) -> Result<Self> {
        let vectors: Vec<Vec<f64>> = phys_dims
            .iter()
            .map(|&p| vec![1.0 / (p as f64).sqrt(); p])
            .collect();
        Mps::product(&vectors)
    }

    pub fn sites(&self) -> &[Tensor] {
        &self.sites
    }

    pub fn into_sites(self) -> Vec<Tensor> {
        self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn set_log_scale(&mut self, log_scale: f64) {
        assert!(log_scale.is_finite());
        self.log_scale = log_scale;
    }

    pub fn phys_dims(&self) -> Vec<usize> {
        self.sites.iter().map(|s| s.shape()[1]).collect()
    }

    /// Internal bond dimensions, `len() - 1` of them.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites[..self.sites.len() - 1]
            .iter()
            .map(|s| s.shape()[2])
            .collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Full state vector, physical index of site 0 most significant.
    /// The log scale is applied.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![1.0];
        let mut prefix = 1usize;
        let mut bond = 1usize;
        for s in &self.sites {
            let (p, dr) = (s.shape()[1], s.shape()[2]);
            v = matmul(&v, s.data(), prefix, bond, p * dr);
            prefix *= p;
            bond = dr;
        }
        let f = self.log_scale.exp();
        v.iter_mut().for_each(|x| *x *= f);
        v
    }

    /// Reverses the site order.
    pub fn reversed(&self) -> Mps {
        let sites = self
            .sites
            .iter()
            .rev()
            .map(|s| s.permute(&[2, 1, 0]))
            .collect();
        Mps {
            sites,
            log_scale: self.log_scale,
        }
    }

    fn rescale_site(&mut self, i: usize) {
        let m = self.sites[i].max_abs();
        if m > 0.0 && m.is_finite() {
            self.sites[i].scale(1.0 / m);
            self.log_scale += m.ln();
        }
    }

    /// Brings the state into left- or right-canonical form with unit-norm
    /// site tensors, moving the norm into `log_scale`.
    ///
    /// Returns the state norm (including the previous log scale). A zero
    /// state is left with zero tensors and reported as [`LogScalar::ZERO`].
    pub fn canonicalize(&mut self, form: Canonical) -> LogScalar {
        match form {
            Canonical::Left => self.left_sweep_qr(),
            Canonical::Right => self.right_sweep_qr(),
        }
        let edge = match form {
            Canonical::Left => self.sites.len() - 1,
            Canonical::Right => 0,
        };
        let nrm = self.sites[edge].norm_sqr().sqrt();
        if nrm == 0.0 || !nrm.is_finite() {
            return LogScalar::ZERO;
        }
        self.sites[edge].scale(1.0 / nrm);
        self.log_scale += nrm.ln();
        LogScalar::from_ln(self.log_scale)
    }

    fn left_sweep_qr(&mut self) {
        for i in 0..self.sites.len() - 1 {
            let (dl, p, dr) = dims3(&self.sites[i]);
            let (q, r, k) = qr(self.sites[i].data(), dl * p, dr);
            self.sites[i] = Tensor::new(vec![dl, p, k], q).expect("qr shape");
            let (_, p2, dr2) = dims3(&self.sites[i + 1]);
            let next = matmul(&r, self.sites[i + 1].data(), k, dr, p2 * dr2);
            self.sites[i + 1] = Tensor::new(vec![k, p2, dr2], next).expect("shape");
            self.rescale_site(i + 1);
        }
    }

    fn right_sweep_qr(&mut self) {
        for i in (1..self.sites.len()).rev() {
            let (dl, p, dr) = dims3(&self.sites[i]);
            // site^T = Q R  =>  site = R^T Q^T
            let t = transpose(self.sites[i].data(), dl, p * dr);
            let (q, r, k) = qr(&t, p * dr, dl);
            let qt = transpose(&q, p * dr, k);
            self.sites[i] = Tensor::new(vec![k, p, dr], qt).expect("qr shape");
            let (dl0, p0, _) = dims3(&self.sites[i - 1]);
            // prev (dl0*p0, dl) times R^T (dl, k)
            let prev = matmul_t(self.sites[i - 1].data(), false, &r, true, dl0 * p0, dl, k);
            self.sites[i - 1] = Tensor::new(vec![dl0, p0, k], prev).expect("shape");
            self.rescale_site(i - 1);
        }
    }

    /// Truncates every bond to at most `chi` (`0` = no cap) using a right
    /// canonicalization followed by a left-to-right SVD sweep, with the
    /// relative cutoff [`SVD_CUTOFF`]. The result is left-canonical with the
    /// norm in `log_scale`.
    ///
    /// Returns the accumulated relative discarded weight (sum over bonds of
    /// dropped squared singular values over the total).
    pub fn compress(&mut self, chi: usize) -> Result<f64> {
        let chi = cap(chi);
        self.right_sweep_qr();
        let mut discarded = 0.0;
        let n = self.sites.len();
        for i in 0..n - 1 {
            let (dl, p, dr) = dims3(&self.sites[i]);
            let dec = svd(self.sites[i].data(), dl * p, dr, "MPS compression")?;
            let keep = kept_rank(&dec.s, chi, SVD_CUTOFF);
            let total: f64 = dec.s.iter().map(|x| x * x).sum();
            if total > 0.0 {
                discarded += dec.s[keep..].iter().map(|x| x * x).sum::<f64>() / total;
            }
            let mut u = vec![0.0; dl * p * keep];
            for row in 0..dl * p {
                u[row * keep..(row + 1) * keep]
                    .copy_from_slice(&dec.u[row * dec.rank..row * dec.rank + keep]);
            }
            let mut sv = vec![0.0; keep * dr];
            for k in 0..keep {
                for j in 0..dr {
                    sv[k * dr + j] = dec.s[k] * dec.vt[k * dr + j];
                }
            }
            self.sites[i] = Tensor::new(vec![dl, p, keep], u)?;
            let (_, p2, dr2) = dims3(&self.sites[i + 1]);
            let next = matmul(&sv, self.sites[i + 1].data(), keep, dr, p2 * dr2);
            self.sites[i + 1] = Tensor::new(vec![keep, p2, dr2], next)?;
            self.rescale_site(i + 1);
        }
        let last = n - 1;
        let nrm = self.sites[last].norm_sqr().sqrt();
        if nrm > 0.0 && nrm.is_finite() {
            self.sites[last].scale(1.0 / nrm);
            self.log_scale += nrm.ln();
        }
        Ok(discarded)
    }

    /// Contracts one grid column, viewed as an MPO, into the state and
    /// compresses back to bond dimension `chi` (`0` = no cap).
    ///
    /// Column tensors have legs `(up, left, down, right)`; `left` pairs with
    /// the physical leg of the corresponding site and `right` becomes the new
    /// physical leg. Returns the new state and the relative discarded weight.
    pub fn apply_mpo_column(&self, column: &[&Tensor], chi: usize) -> Result<(Mps, f64)> {
        if column.len() != self.sites.len() {
            return Err(Error::DimensionMismatch(format!(
                "column of height {} applied to MPS of length {}",
                column.len(),
                self.sites.len()
            )));
        }
        let n = column.len();
        for (i, t) in column.iter().enumerate() {
            if t.rank() != 4 {
                return Err(Error::DimensionMismatch(format!("column tensor {i} is not rank 4")));
            }
            if t.shape()[1] != self.sites[i].shape()[1] {
                return Err(Error::DimensionMismatch(format!(
                    "row {i}: MPO input leg {} vs physical {}",
                    t.shape()[1],
                    self.sites[i].shape()[1]
                )));
            }
            let down_ok = if i + 1 < n {
                t.shape()[2] == column[i + 1].shape()[0]
            } else {
                t.shape()[2] == 1
            };
            if !down_ok || (i == 0 && t.shape()[0] != 1) {
                return Err(Error::DimensionMismatch(format!("row {i}: vertical legs disagree")));
            }
        }

        let mut out = Mps {
            sites: Vec::with_capacity(n),
            log_scale: self.log_scale,
        };
        for (a, t) in self.sites.iter().zip(column) {
            let (dl, p, dr) = dims3(a);
            let (u, _, d, r) = (t.shape()[0], t.shape()[1], t.shape()[2], t.shape()[3]);
            // (dl, p, dr) x (u, p, d, r) -> (dl, dr, u, d, r)
            let ap = a.permute(&[0, 2, 1]);
            let tp = t.permute(&[1, 0, 2, 3]);
            let prod = matmul(ap.data(), tp.data(), dl * dr, p, u * d * r);
            let prod = Tensor::new(vec![dl, dr, u, d, r], prod)?;
            let site = prod.permute(&[0, 2, 4, 1, 3]).reshape(vec![dl * u, r, dr * d])?;
            out.sites.push(site);
        }
        for i in 0..n {
            out.rescale_site(i);
        }
        let discarded = out.compress(chi)?;
        Ok((out, discarded))
    }

    /// Merges sites of physical dimension one into a neighbouring site.
    /// A state made only of such sites keeps a single site.
    pub fn absorb_trivial_sites(&mut self) {
        while self.sites.len() > 1 {
            let Some(i) = self.sites.iter().position(|s| s.shape()[1] == 1) else {
                break;
            };
            self.absorb_site(i);
        }
    }

    /// Merges site `i`, which must have physical dimension one, into its
    /// right neighbour (or its left one for the last site).
    pub(crate) fn absorb_site(&mut self, i: usize) {
        assert!(self.sites.len() > 1 && self.sites[i].shape()[1] == 1);
        let (dl, _, dr) = dims3(&self.sites[i]);
        let site = self.sites.remove(i);
        if i < self.sites.len() {
            let (_, p2, dr2) = dims3(&self.sites[i]);
            let next = matmul(site.data(), self.sites[i].data(), dl, dr, p2 * dr2);
            self.sites[i] = Tensor::new(vec![dl, p2, dr2], next).expect("shape");
        } else {
            let (dl0, p0, _) = dims3(&self.sites[i - 1]);
            let prev = matmul(self.sites[i - 1].data(), site.data(), dl0 * p0, dl, dr);
            self.sites[i - 1] = Tensor::new(vec![dl0, p0, dr], prev).expect("shape");
        }
    }

    /// Flips the sign of the state.
    pub fn negate(&mut self) {
        self.sites[0].scale(-1.0);
    }

    /// Value of a state whose physical legs all have dimension one.
    pub fn close(&self) -> Result<LogScalar> {
        if self.sites.iter().any(|s| s.shape()[1] != 1) {
            return Err(Error::DimensionMismatch(
                "cannot close an MPS with open physical legs".into(),
            ));
        }
        let mut v = vec![1.0];
        let mut log = self.log_scale;
        let mut bond = 1;
        for s in &self.sites {
            let dr = s.shape()[2];
            v = matmul(&v, s.data(), 1, bond, dr);
            bond = dr;
            let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if m == 0.0 {
                return Ok(LogScalar::ZERO);
            }
            v.iter_mut().for_each(|x| *x /= m);
            log += m.ln();
        }
        Ok(LogScalar::from_f64(v[0]).scale_ln(log))
    }

    /// `a + b` including both log scales, as a direct-sum MPS with summed
    /// bond dimensions. No compression is performed.
    pub fn add(a: &Mps, wa: f64, b: &Mps, wb: f64) -> Result<Mps> {
        if a.phys_dims() != b.phys_dims() {
            return Err(Error::DimensionMismatch("MPS sum of unequal shapes".into()));
        }
        // common scale so that the two terms can share tensors
        let base = a.log_scale.max(b.log_scale);
        let fa = wa * (a.log_scale - base).exp();
        let fb = wb * (b.log_scale - base).exp();
        let n = a.len();
        if n == 1 {
            let data = a.sites[0]
                .data()
                .iter()
                .zip(b.sites[0].data())
                .map(|(x, y)| fa * x + fb * y)
                .collect();
            let site = Tensor::new(a.sites[0].shape().to_vec(), data)?;
            return Mps::new(vec![site], base);
        }
        let mut sites = Vec::with_capacity(n);
        for i in 0..n {
            let (al, p, ar) = dims3(&a.sites[i]);
            let (bl, _, br) = dims3(&b.sites[i]);
            let (l, r) = match i {
                0 => (1, ar + br),
                _ if i == n - 1 => (al + bl, 1),
                _ => (al + bl, ar + br),
            };
            let mut t = Tensor::zeros(vec![l, p, r]);
            let (aoff_l, aoff_r) = (0, 0);
            let (boff_l, boff_r) = (if i == 0 { 0 } else { al }, if i == n - 1 { 0 } else { ar });
            let wa_site = if i == 0 { fa } else { 1.0 };
            let wb_site = if i == 0 { fb } else { 1.0 };
            for x in 0..al {
                for s in 0..p {
                    for y in 0..ar {
                        t.set(&[aoff_l + x, s, aoff_r + y], wa_site * a.sites[i].get(&[x, s, y]));
                    }
                }
            }
            for x in 0..bl {
                for s in 0..p {
                    for y in 0..br {
                        t.set(&[boff_l + x, s, boff_r + y], wb_site * b.sites[i].get(&[x, s, y]));
                    }
                }
            }
            sites.push(t);
        }
        Mps::new(sites, base)
    }
}

fn dims3(t: &Tensor) -> (usize, usize, usize) {
    let s = t.shape();
    (s[0], s[1], s[2])
}

fn transpose(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

/// `<a|b>` including both log scales.
pub fn mps_inner(a: &Mps, b: &Mps) -> Result<LogScalar> {
    if a.phys_dims() != b.phys_dims() {
        return Err(Error::DimensionMismatch(format!(
            "inner product of MPS with physical dims {:?} and {:?}",
            a.phys_dims(),
            b.phys_dims()
        )));
    }
    let mut env = vec![1.0];
    let (mut ea, mut eb) = (1usize, 1usize);
    let mut log = a.log_scale + b.log_scale;
    for (sa, sb) in a.sites.iter().zip(&b.sites) {
        let (_, p, ra) = dims3(sa);
        let (_, _, rb) = dims3(sb);
        // env (ea x eb) * B (eb x p*rb) -> (ea*p x rb)
        let x = matmul(&env, sb.data(), ea, eb, p * rb);
        // A^T (ra x ea*p) * x (ea*p x rb) -> (ra x rb)
        env = matmul_t(sa.data(), true, &x, false, ra, ea * p, rb);
        ea = ra;
        eb = rb;
        let m = env.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if m == 0.0 {
            return Ok(LogScalar::ZERO);
        }
        env.iter_mut().for_each(|v| *v /= m);
        log += m.ln();
    }
    Ok(LogScalar::from_f64(env[0]).scale_ln(log))
}

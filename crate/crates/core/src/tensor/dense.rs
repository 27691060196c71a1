use crate::{Error, Result};

/// Dense real tensor stored row-major (last leg fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if shape.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "tensor shape {shape:?} has a zero leg"
            )));
        }
        if len != data.len() {
            return Err(Error::LengthMismatch {
                expected: len,
                found: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Tensor::zeros(shape);
        let mut idx = vec![0; t.rank()];
        for k in 0..t.data.len() {
            t.data[k] = f(&idx);
            increment(&mut idx, &t.shape);
        }
        t
    }

    /// A rank-`rank` tensor with every leg of dimension one holding `value`.
    pub fn scalar(value: f64, rank: usize) -> Self {
        Tensor {
            shape: vec![1; rank],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let k = self.offset(idx);
        self.data[k] = value;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|x| *x *= factor);
    }

    /// Same data, new shape.
    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    /// Reorders legs: leg `i` of the result is leg `perm[i]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Tensor {
        assert_eq!(perm.len(), self.rank(), "permutation rank mismatch");
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return self.clone();
        }
        let strides = strides(&self.shape);
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let new_strides: Vec<usize> = perm.iter().map(|&p| strides[p]).collect();
        let mut out = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; perm.len()];
        let mut src = 0usize;
        for _ in 0..self.data.len() {
            out.push(self.data[src]);
            // odometer over the new shape, tracking the source offset
            for ax in (0..idx.len()).rev() {
                idx[ax] += 1;
                src += new_strides[ax];
                if idx[ax] < new_shape[ax] {
                    break;
                }
                src -= new_strides[ax] * new_shape[ax];
                idx[ax] = 0;
            }
        }
        Tensor {
            shape: new_shape,
            data: out,
        }
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

pub(crate) fn increment(idx: &mut [usize], shape: &[usize]) {
    for ax in (0..idx.len()).rev() {
        idx[ax] += 1;
        if idx[ax] < shape[ax] {
            return;
        }
        idx[ax] = 0;
    }
}

/// Row-major `c = a * b` for an `m x k` by `k x n` product.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    matmul_t(a, false, b, false, m, k, n)
}

/// Row-major `c = op(a) * op(b)` where `op` optionally transposes. `m`, `k`,
/// `n` are the dimensions after transposition; a stored matrix that is
/// transposed is read as `k x m` (resp. `n x k`).
pub(crate) fn matmul_t(
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    m: usize,
    k: usize,
    n: usize,
) -> Vec<f64> {
    assert_eq!(a.len(), m * k, "lhs size");
    assert_eq!(b.len(), k * n, "rhs size");
    let mut c = vec![0.0; m * n];
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: sizes were checked above and the strides stay inside them.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}

/// Sums over paired legs `legs_a[i]` of `a` and `legs_b[i]` of `b`.
///
/// The result carries the free legs of `a` in their original order followed
/// by the free legs of `b`.
pub fn contract(a: &Tensor, legs_a: &[usize], b: &Tensor, legs_b: &[usize]) -> Result<Tensor> {
    if legs_a.len() != legs_b.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} legs of a paired with {} legs of b",
            legs_a.len(),
            legs_b.len()
        )));
    }
    for (&la, &lb) in legs_a.iter().zip(legs_b) {
        if la >= a.rank() || lb >= b.rank() {
            return Err(Error::DimensionMismatch(format!(
                "leg index out of range ({la} of rank {}, {lb} of rank {})",
                a.rank(),
                b.rank()
            )));
        }
        if a.shape[la] != b.shape[lb] {
            return Err(Error::DimensionMismatch(format!(
                "leg {la} has dim {} but leg {lb} has dim {}",
                a.shape[la], b.shape[lb]
            )));
        }
    }
    let free_a: Vec<usize> = (0..a.rank()).filter(|i| !legs_a.contains(i)).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|i| !legs_b.contains(i)).collect();

    let perm_a: Vec<usize> = free_a.iter().chain(legs_a).copied().collect();
    let perm_b: Vec<usize> = legs_b.iter().chain(&free_b).copied().collect();
    let ap = a.permute(&perm_a);
    let bp = b.permute(&perm_b);

    let m: usize = free_a.iter().map(|&i| a.shape[i]).product();
    let k: usize = legs_a.iter().map(|&i| a.shape[i]).product();
    let n: usize = free_b.iter().map(|&i| b.shape[i]).product();
    let data = matmul(&ap.data, &bp.data, m, k, n);

    let shape = free_a
        .iter()
        .map(|&i| a.shape[i])
        .chain(free_b.iter().map(|&i| b.shape[i]))
        .collect();
    Ok(Tensor { shape, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Index-loop reference contraction.
    fn naive_contract(a: &Tensor, la: &[usize], b: &Tensor, lb: &[usize]) -> Tensor {
        let free_a: Vec<usize> = (0..a.rank()).filter(|i| !la.contains(i)).collect();
        let free_b: Vec<usize> = (0..b.rank()).filter(|i| !lb.contains(i)).collect();
        let out_shape: Vec<usize> = free_a
            .iter()
            .map(|&i| a.shape()[i])
            .chain(free_b.iter().map(|&i| b.shape()[i]))
            .collect();
        let sum_shape: Vec<usize> = la.iter().map(|&i| a.shape()[i]).collect();
        let sum_len: usize = sum_shape.iter().product();
        Tensor::from_fn(out_shape, |out| {
            let mut total = 0.0;
            let mut s = vec![0; sum_shape.len()];
            for _ in 0..sum_len {
                let mut ia = vec![0; a.rank()];
                let mut ib = vec![0; b.rank()];
                for (j, &f) in free_a.iter().enumerate() {
                    ia[f] = out[j];
                }
                for (j, &f) in free_b.iter().enumerate() {
                    ib[f] = out[free_a.len() + j];
                }
                for (j, (&x, &y)) in la.iter().zip(lb).enumerate() {
                    ia[x] = s[j];
                    ib[y] = s[j];
                }
                total += a.get(&ia) * b.get(&ib);
                increment(&mut s, &sum_shape);
            }
            total
        })
    }

    #[test]
    fn matrix_product() {
        let a = Tensor::new(vec![2, 2], vec![1., 2., 3., 4.]).unwrap();
        let b = Tensor::new(vec![2, 2], vec![5., 6., 7., 8.]).unwrap();
        let c = contract(&a, &[1], &b, &[0]).unwrap();
        assert_eq!(c.data(), &[19., 22., 43., 50.]);
    }

    #[test]
    fn identity_times_vector() {
        let id = Tensor::from_fn(vec![3, 3], |i| if i[0] == i[1] { 1.0 } else { 0.0 });
        let v = Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
        let w = contract(&id, &[1], &v, &[0]).unwrap();
        assert_eq!(w.data(), v.data());
    }

    #[test]
    fn full_self_contraction_is_norm_squared() {
        let t = Tensor::from_fn(vec![2, 3, 2], |i| (i[0] + 2 * i[1]) as f64 - 0.5 * i[2] as f64);
        let s = contract(&t, &[0, 1, 2], &t, &[0, 1, 2]).unwrap();
        assert_eq!(s.shape(), &[] as &[usize]);
        assert!((s.data()[0] - t.norm_sqr()).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![2, 3]);
        assert!(matches!(
            contract(&a, &[1], &b, &[0]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn permute_transposes() {
        let t = Tensor::from_fn(vec![2, 3, 4], |i| (100 * i[0] + 10 * i[1] + i[2]) as f64);
        let p = t.permute(&[2, 0, 1]);
        assert_eq!(p.shape(), &[4, 2, 3]);
        assert_eq!(p.get(&[3, 1, 2]), 123.0);
    }

    fn arb_pair() -> impl Strategy<Value = (Tensor, Vec<usize>, Tensor, Vec<usize>)> {
        (1usize..=5, 1usize..=5)
            .prop_flat_map(|(ra, rb)| {
                let npair = 0..=ra.min(rb);
                (
                    prop::collection::vec(1usize..=4, ra),
                    prop::collection::vec(1usize..=4, rb),
                    npair,
                )
            })
            .prop_flat_map(|(sa, sb, np)| {
                let la = Just((0..sa.len()).collect::<Vec<_>>()).prop_shuffle();
                let lb = Just((0..sb.len()).collect::<Vec<_>>()).prop_shuffle();
                (Just(sa), Just(sb), Just(np), la, lb)
            })
            .prop_flat_map(|(sa, mut sb, np, la, lb)| {
                let la: Vec<usize> = la[..np].to_vec();
                let lb: Vec<usize> = lb[..np].to_vec();
                for (x, y) in la.iter().zip(&lb) {
                    sb[*y] = sa[*x];
                }
                let na: usize = sa.iter().product();
                let nb: usize = sb.iter().product();
                (
                    Just(sa),
                    Just(sb),
                    Just(la),
                    Just(lb),
                    prop::collection::vec(-1.0f64..1.0, na),
                    prop::collection::vec(-1.0f64..1.0, nb),
                )
            })
            .prop_map(|(sa, sb, la, lb, da, db)| {
                (
                    Tensor::new(sa, da).unwrap(),
                    la,
                    Tensor::new(sb, db).unwrap(),
                    lb,
                )
            })
    }

    proptest! {
        #[test]
        fn contract_matches_index_loops((a, la, b, lb) in arb_pair()) {
            let fast = contract(&a, &la, &b, &lb).unwrap();
            let slow = naive_contract(&a, &la, &b, &lb);
            prop_assert_eq!(fast.shape(), slow.shape());
            for (x, y) in fast.data().iter().zip(slow.data()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}

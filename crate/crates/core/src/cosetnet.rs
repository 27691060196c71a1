//! Coset tensor networks and the brute-force coset oracle.
//!
//! The network for a coset representative `e` lives on the code grid. Check
//! nodes carry copy tensors whose shared value selects whether the check
//! generator is applied; the qubit tensor reads off the Pauli on its qubit
//! from the values of the adjacent checks, so summing over all leg
//! assignments sums `pi(e g)` over the whole stabilizer group.

use crate::code::{LogicalLabel, Node, Pauli, PauliString, SurfaceCode};
use crate::noise::NoiseModel;
use crate::tensor::{GridTN, LogScalar, Tensor, DOWN, LEFT, RIGHT, UP};
use crate::{Error, Result};

/// Largest check count accepted by [`coset_prob_exact`].
pub const MAX_EXACT_CHECKS: usize = 24;

#[derive(Clone, Debug)]
pub struct CosetNetwork {
    pub grid: GridTN,
    /// The representative `f * L`.
    pub coset_pauli: PauliString,
}

fn neighbor(side: usize, r: usize, c: usize, leg: usize) -> Option<(usize, usize)> {
    let (nr, nc) = match leg {
        UP => (r.checked_sub(1)?, c),
        LEFT => (r, c.checked_sub(1)?),
        DOWN => (r + 1, c),
        _ => (r, c + 1),
    };
    (nr < side && nc < side).then_some((nr, nc))
}

fn leg_dims(side: usize, r: usize, c: usize) -> Vec<usize> {
    (0..4)
        .map(|leg| if neighbor(side, r, c, leg).is_some() { 2 } else { 1 })
        .collect()
}

/// Copy tensor over the legs of dimension 2; dimension-1 legs are inert.
fn delta_tensor(shape: Vec<usize>) -> Tensor {
    Tensor::from_fn(shape.clone(), |idx| {
        let mut vals = idx.iter().zip(&shape).filter(|(_, &d)| d == 2).map(|(&v, _)| v);
        match vals.next() {
            None => 1.0,
            Some(first) => {
                if vals.all(|v| v == first) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    })
}

/// `T[legs] = pi_q(e_q * Z^a * X^b)` with `a` (`b`) the XOR of the legs toward
/// site (plaquette) checks.
fn qubit_tensor(shape: Vec<usize>, horizontal: bool, table: &[f64; 4], e_q: Pauli) -> Tensor {
    let (a_legs, b_legs) = if horizontal {
        ([LEFT, RIGHT], [UP, DOWN])
    } else {
        ([UP, DOWN], [LEFT, RIGHT])
    };
    Tensor::from_fn(shape, |idx| {
        let a = (idx[a_legs[0]] ^ idx[a_legs[1]]) == 1;
        let b = (idx[b_legs[0]] ^ idx[b_legs[1]]) == 1;
        let p = e_q * Pauli::from_bits(b, a);
        table[p.index()]
    })
}

/// Network whose exact contraction is `pi(f L G)`.
pub fn build_coset_network(
    code: &SurfaceCode,
    model: &NoiseModel,
    f: &PauliString,
    label: LogicalLabel,
) -> Result<CosetNetwork> {
    if f.len() != code.n() {
        return Err(Error::LengthMismatch {
            expected: code.n(),
            found: f.len(),
        });
    }
    if model.n() != code.n() {
        return Err(Error::LengthMismatch {
            expected: code.n(),
            found: model.n(),
        });
    }
    let e = &code.logical(label) * f;
    let side = code.side();
    let mut tensors = Vec::with_capacity(side * side);
    for r in 0..side {
        for c in 0..side {
            let shape = leg_dims(side, r, c);
            let t = match code.node(r, c).expect("inside the grid") {
                Node::Qubit(q) => qubit_tensor(shape, r % 2 == 0, model.table(q), e.get(q)),
                Node::Site(_) | Node::Plaquette(_) => delta_tensor(shape),
            };
            tensors.push(t);
        }
    }
    Ok(CosetNetwork {
        grid: GridTN::new(side, side, tensors)?,
        coset_pauli: e,
    })
}

/// Per-qubit probability tables packed four qubits at a time: entry
/// `x | z << 4` of chunk `k` is the probability of the Pauli with X bits `x`
/// and Z bits `z` on qubits `4k..4k+4`.
struct ChunkTables {
    tables: Vec<[f64; 256]>,
}

impl ChunkTables {
    fn new(model: &NoiseModel) -> Self {
        let n = model.n();
        let tables = (0..n.div_ceil(4))
            .map(|k| {
                let mut t = [0.0; 256];
                for (key, slot) in t.iter_mut().enumerate() {
                    let (x, z) = (key & 15, key >> 4);
                    let mut p = 1.0;
                    for j in 0..4 {
                        let q = 4 * k + j;
                        let op = Pauli::from_bits(x >> j & 1 == 1, z >> j & 1 == 1);
                        if q < n {
                            p *= model.table(q)[op.index()];
                        } else if op != Pauli::I {
                            p = 0.0;
                        }
                    }
                    *slot = p;
                }
                t
            })
            .collect();
        ChunkTables { tables }
    }

    fn prob(&self, x: u64, z: u64) -> f64 {
        let mut p = 1.0;
        for (k, t) in self.tables.iter().enumerate() {
            let key = ((x >> (4 * k)) & 15) | (((z >> (4 * k)) & 15) << 4);
            p *= t[key as usize];
        }
        p
    }
}

fn masks(p: &PauliString) -> (u64, u64) {
    let (mut x, mut z) = (0u64, 0u64);
    for q in 0..p.len() {
        x |= (p.x_bits()[q] as u64) << q;
        z |= (p.z_bits()[q] as u64) << q;
    }
    (x, z)
}

/// `pi(f L G)` by enumerating all `2^m` stabilizers in Gray-code order.
pub fn coset_prob_exact(
    code: &SurfaceCode,
    model: &NoiseModel,
    f: &PauliString,
    label: LogicalLabel,
) -> Result<LogScalar> {
    let m = code.m();
    if m > MAX_EXACT_CHECKS || code.n() > 64 {
        return Err(Error::Capacity(format!(
            "exact coset enumeration supports at most {MAX_EXACT_CHECKS} checks, code has {m}"
        )));
    }
    if f.len() != code.n() || model.n() != code.n() {
        return Err(Error::LengthMismatch {
            expected: code.n(),
            found: if f.len() != code.n() { f.len() } else { model.n() },
        });
    }
    let tables = ChunkTables::new(model);
    let gens: Vec<(u64, u64)> = code.checks().iter().map(masks).collect();
    let (mut x, mut z) = masks(&(&code.logical(label) * f));
    let mut total = tables.prob(x, z);
    for i in 1u64..(1u64 << m) {
        let (gx, gz) = gens[i.trailing_zeros() as usize];
        x ^= gx;
        z ^= gz;
        total += tables.prob(x, z);
    }
    Ok(LogScalar::from_f64(total))
}

/// All four coset probabilities in label order.
pub fn coset_probs_exact(
    code: &SurfaceCode,
    model: &NoiseModel,
    f: &PauliString,
) -> Result<[LogScalar; 4]> {
    let mut out = [LogScalar::ZERO; 4];
    for label in LogicalLabel::ALL {
        out[label.index()] = coset_prob_exact(code, model, f, label)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::{build_code, Syndrome};
    use crate::tensor::bmps_contract;
    use crate::tensor::testing::dense_contract;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn network_value(code: &SurfaceCode, model: &NoiseModel, f: &PauliString, l: LogicalLabel) -> LogScalar {
        let net = build_coset_network(code, model, f, l).unwrap();
        bmps_contract(&net.grid, 0).unwrap()
    }

    #[test]
    fn noiseless_d2() {
        let code = build_code(2).unwrap();
        let model = NoiseModel::depolarizing(0.0, code.n()).unwrap();
        let id = PauliString::identity(code.n());
        let v = network_value(&code, &model, &id, LogicalLabel::I);
        assert!((v.to_f64() - 1.0).abs() < 1e-14);
        assert_eq!(coset_prob_exact(&code, &model, &id, LogicalLabel::I).unwrap().to_f64(), 1.0);
        assert!(coset_prob_exact(&code, &model, &id, LogicalLabel::X).unwrap().is_zero());
        assert!(network_value(&code, &model, &id, LogicalLabel::X).to_f64().abs() < 1e-14);
    }

    #[test]
    fn interior_qubit_entries() {
        let eps = 0.1;
        let code = build_code(3).unwrap();
        let model = NoiseModel::depolarizing(eps, code.n()).unwrap();
        let id = PauliString::identity(code.n());
        let net = build_coset_network(&code, &model, &id, LogicalLabel::I).unwrap();
        // horizontal qubit at (2, 2): A legs left/right, B legs up/down
        let t = net.grid.get(2, 2);
        assert_eq!(t.shape(), &[2, 2, 2, 2]);
        let at = |a: usize, b: usize| t.get(&[b, a, 0, 0]);
        assert!((at(0, 0) - (1.0 - eps)).abs() < 1e-15);
        assert!((at(1, 0) - eps / 3.0).abs() < 1e-15);
        assert!((at(0, 1) - eps / 3.0).abs() < 1e-15);
        assert!((at(1, 1) - eps / 3.0).abs() < 1e-15);
        assert_eq!(t.get(&[1, 1, 1, 1]), 1.0 - eps);
    }

    #[test]
    fn node_census_and_boundary_legs() {
        for d in 2..=6 {
            let code = build_code(d).unwrap();
            let model = NoiseModel::depolarizing(0.1, code.n()).unwrap();
            let net = build_coset_network(&code, &model, &PauliString::identity(code.n()), LogicalLabel::I).unwrap();
            assert_eq!(code.n() + code.m(), (2 * d - 1) * (2 * d - 1));
            assert_eq!(net.grid.rows(), 2 * d - 1);
            for t in net.grid.tensors() {
                assert!(t.shape().iter().all(|&s| s == 1 || s == 2));
            }
        }
    }

    #[test]
    fn length_mismatch() {
        let code = build_code(3).unwrap();
        let model = NoiseModel::depolarizing(0.1, code.n()).unwrap();
        let short = PauliString::identity(4);
        assert!(build_coset_network(&code, &model, &short, LogicalLabel::I).is_err());
        assert!(coset_prob_exact(&code, &model, &short, LogicalLabel::I).is_err());
    }

    #[test]
    fn capacity_bound() {
        let code = build_code(5).unwrap();
        let model = NoiseModel::depolarizing(0.1, code.n()).unwrap();
        let id = PauliString::identity(code.n());
        assert!(matches!(
            coset_prob_exact(&code, &model, &id, LogicalLabel::I),
            Err(Error::Capacity(_))
        ));
    }

    /// Direct sum over every error of the full Pauli group on 5 qubits.
    #[test]
    fn exact_oracle_matches_pauli_group_sum_d2() {
        let code = build_code(2).unwrap();
        let model = NoiseModel::depolarizing(0.07, code.n()).unwrap();
        let n = code.n();
        let mut by_coset = std::collections::HashMap::new();
        for key in 0..(1u32 << (2 * n)) {
            let ops: Vec<Pauli> = (0..n)
                .map(|q| Pauli::from_bits(key >> q & 1 == 1, key >> (n + q) & 1 == 1))
                .collect();
            let e = PauliString::from_paulis(&ops);
            let s = code.syndrome(&e).unwrap();
            let f = code.pure_error(&s).unwrap();
            let class = code.logical_class(&(&e * &f)).unwrap();
            *by_coset.entry((s.to_hex(), class)).or_insert(0.0) += model.prob_of_string(&e).unwrap();
        }
        for ((hex, class), p) in by_coset {
            let s = Syndrome::from_hex(&hex, code.m()).unwrap();
            let f = code.pure_error(&s).unwrap();
            let got = coset_prob_exact(&code, &model, &f, class).unwrap().to_f64();
            assert!((got - p).abs() <= 1e-12 * p.max(1e-300), "{hex} {class}: {got} vs {p}");
        }
    }

    #[test]
    fn total_probability_d3() {
        let code = build_code(3).unwrap();
        let model = NoiseModel::depolarizing(0.1, code.n()).unwrap();
        let mut total = 0.0;
        for s in 0..(1u64 << code.m()) {
            let f = code.pure_error(&Syndrome::from_u64(s, code.m())).unwrap();
            for p in coset_probs_exact(&code, &model, &f).unwrap() {
                total += p.to_f64();
            }
        }
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn identity_coset_dominates_trivial_syndrome() {
        let code = build_code(3).unwrap();
        let model = NoiseModel::depolarizing(0.1, code.n()).unwrap();
        let p = coset_probs_exact(&code, &model, &PauliString::identity(code.n())).unwrap();
        for l in 1..4 {
            assert!(p[0].to_f64() > p[l].to_f64());
        }
    }

    #[test]
    fn stabilizer_invariance() {
        let code = build_code(3).unwrap();
        let model = NoiseModel::depolarizing(0.12, code.n()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let s = Syndrome::from_u64(rng.random_range(0..1u64 << code.m()), code.m());
            let f = code.pure_error(&s).unwrap();
            let g = code.check(rng.random_range(0..code.m()));
            let a = coset_probs_exact(&code, &model, &f).unwrap();
            let b = coset_probs_exact(&code, &model, &(&f * &g)).unwrap();
            for l in 0..4 {
                assert!(a[l].rel_diff(&b[l]) < 1e-12);
            }
        }
    }

    #[test]
    fn network_contraction_equals_enumeration() {
        let code = build_code(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let eps = rng.random_range(0.01..0.3);
            let model = NoiseModel::depolarizing(eps, code.n()).unwrap();
            let s = Syndrome::from_u64(rng.random_range(0..1u64 << code.m()), code.m());
            let f = code.pure_error(&s).unwrap();
            let l = LogicalLabel::ALL[rng.random_range(0..4)];
            let exact = coset_prob_exact(&code, &model, &f, l).unwrap();
            let net = network_value(&code, &model, &f, l);
            assert!(net.rel_diff(&exact) <= 1e-8, "{net} vs {exact}");
        }
    }

    #[test]
    fn dense_oracle_agrees_on_d2() {
        let code = build_code(2).unwrap();
        let model = NoiseModel::depolarizing(0.2, code.n()).unwrap();
        for s in 0..16u64 {
            let f = code.pure_error(&Syndrome::from_u64(s, 4)).unwrap();
            for l in LogicalLabel::ALL {
                let net = build_coset_network(&code, &model, &f, l).unwrap();
                let exact = coset_prob_exact(&code, &model, &f, l).unwrap().to_f64();
                assert!((dense_contract(&net.grid) - exact).abs() <= 1e-12);
            }
        }
    }
}

//! Independent single-qubit Pauli channels.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::code::{Pauli, PauliString};
use crate::{Error, Result};

const NORM_TOL: f64 = 1e-12;

/// Per-qubit probability tables indexed by [`Pauli::index`].
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    tables: Vec<[f64; 4]>,
}

impl NoiseModel {
    pub fn new(tables: Vec<[f64; 4]>) -> Result<Self> {
        for (q, t) in tables.iter().enumerate() {
            if t.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "qubit {q}: probabilities must be finite and nonnegative, got {t:?}"
                )));
            }
            let total: f64 = t.iter().sum();
            if (total - 1.0).abs() > NORM_TOL {
                return Err(Error::InvalidParameter(format!(
                    "qubit {q}: probabilities sum to {total}, not 1"
                )));
            }
        }
        Ok(NoiseModel { tables })
    }

    /// `pi(I) = 1 - epsilon`, `pi(X) = pi(Y) = pi(Z) = epsilon / 3` on every qubit.
    pub fn depolarizing(epsilon: f64, n: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidParameter(format!(
                "depolarizing rate must lie in [0, 1], got {epsilon}"
            )));
        }
        let e3 = epsilon / 3.0;
        Ok(NoiseModel {
            tables: vec![[1.0 - epsilon, e3, e3, e3]; n],
        })
    }

    pub fn n(&self) -> usize {
        self.tables.len()
    }

    pub fn table(&self, q: usize) -> &[f64; 4] {
        &self.tables[q]
    }

    pub fn prob_of(&self, q: usize, p: Pauli) -> Result<f64> {
        self.tables
            .get(q)
            .map(|t| t[p.index()])
            .ok_or_else(|| Error::InvalidParameter(format!("qubit {q} out of range (n = {})", self.n())))
    }

    /// Probability of a full error string.
    pub fn prob_of_string(&self, e: &PauliString) -> Result<f64> {
        if e.len() != self.n() {
            return Err(Error::LengthMismatch {
                expected: self.n(),
                found: e.len(),
            });
        }
        Ok((0..e.len()).map(|q| self.tables[q][e.get(q).index()]).product())
    }

    /// One independent draw per qubit.
    pub fn sample_error<R: Rng + ?Sized>(&self, rng: &mut R) -> PauliString {
        let mut e = PauliString::identity(self.n());
        for (q, t) in self.tables.iter().enumerate() {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut op = Pauli::I;
            for p in Pauli::ALL {
                acc += t[p.index()];
                if u < acc {
                    op = p;
                    break;
                }
                // Rounding can leave acc marginally below 1; fall back to the
                // last Pauli with positive weight.
                if t[p.index()] > 0.0 {
                    op = p;
                }
            }
            e.set(q, op);
        }
        e
    }
}

/// Independent random stream for one shot: the master seed selects the key,
/// the shot index selects the ChaCha stream.
pub fn shot_rng(seed: u64, shot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shot);
    rng
}

//! The planar surface code on a `(2d-1) x (2d-1)` grid.
//!
//! Grid coordinates `(r, c)` with `0 <= r, c < 2d - 1`:
//!
//! * `(even, even)`: horizontal-edge qubits (`d^2` of them),
//! * `(odd, odd)`: vertical-edge qubits (`(d-1)^2`),
//! * `(even, odd)`: sites, carrying the Z-type checks `A_u`,
//! * `(odd, even)`: plaquettes, carrying the X-type checks `B_p`.
//!
//! Every check acts on the qubits adjacent to its grid node. Qubits are
//! numbered row-major over the grid; syndrome bits list the `A` checks
//! row-major first, then the `B` checks row-major.

use std::fmt;
use std::ops::Mul;

use bitvec::prelude::*;

use crate::{Error, Result};

type Bits = BitVec<u64, Lsb0>;

/// Single-qubit Pauli, phase discarded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    pub fn x_bit(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    pub fn z_bit(self) -> bool {
        matches!(self, Pauli::Z | Pauli::Y)
    }

    /// Position in [`Pauli::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

impl Mul for Pauli {
    type Output = Pauli;

    fn mul(self, rhs: Pauli) -> Pauli {
        Pauli::from_bits(self.x_bit() ^ rhs.x_bit(), self.z_bit() ^ rhs.z_bit())
    }
}

/// Phase-free n-qubit Pauli operator in symplectic form.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    x: Bits,
    z: Bits,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        PauliString {
            x: BitVec::repeat(false, n),
            z: BitVec::repeat(false, n),
        }
    }

    pub fn from_paulis(ops: &[Pauli]) -> Self {
        let mut p = PauliString::identity(ops.len());
        for (q, &op) in ops.iter().enumerate() {
            p.set(q, op);
        }
        p
    }

    /// X-type operator on the given qubits.
    pub fn x_on(n: usize, qubits: &[usize]) -> Self {
        let mut p = PauliString::identity(n);
        for &q in qubits {
            p.x.set(q, true);
        }
        p
    }

    /// Z-type operator on the given qubits.
    pub fn z_on(n: usize, qubits: &[usize]) -> Self {
        let mut p = PauliString::identity(n);
        for &q in qubits {
            p.z.set(q, true);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn get(&self, q: usize) -> Pauli {
        Pauli::from_bits(self.x[q], self.z[q])
    }

    pub fn set(&mut self, q: usize, op: Pauli) {
        self.x.set(q, op.x_bit());
        self.z.set(q, op.z_bit());
    }

    pub fn x_bits(&self) -> &BitSlice<u64, Lsb0> {
        &self.x
    }

    pub fn z_bits(&self) -> &BitSlice<u64, Lsb0> {
        &self.z
    }

    pub fn is_identity(&self) -> bool {
        self.x.not_any() && self.z.not_any()
    }

    /// Number of qubits acted on non-trivially.
    pub fn weight(&self) -> usize {
        self.x
            .as_raw_slice()
            .iter()
            .zip(self.z.as_raw_slice())
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum()
    }

    /// Symplectic product: `true` iff the two operators anticommute.
    pub fn anticommutes(&self, other: &PauliString) -> bool {
        assert_eq!(self.len(), other.len(), "Pauli length mismatch");
        let words = self
            .x
            .as_raw_slice()
            .iter()
            .zip(self.z.as_raw_slice())
            .zip(other.x.as_raw_slice().iter().zip(other.z.as_raw_slice()));
        let ones: u32 = words
            .map(|((xa, za), (xb, zb))| ((xa & zb) ^ (za & xb)).count_ones())
            .sum();
        ones % 2 == 1
    }

    fn xor_assign(&mut self, other: &PauliString) {
        for (a, b) in self.x.as_raw_mut_slice().iter_mut().zip(other.x.as_raw_slice()) {
            *a ^= b;
        }
        for (a, b) in self.z.as_raw_mut_slice().iter_mut().zip(other.z.as_raw_slice()) {
            *a ^= b;
        }
    }
}

/// Phase-free product: component-wise XOR of the X and Z bits.
pub fn pauli_mul(a: &PauliString, b: &PauliString) -> Result<PauliString> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let mut out = a.clone();
    out.xor_assign(b);
    Ok(out)
}

impl Mul for &PauliString {
    type Output = PauliString;

    /// Panics when the lengths differ; use [`pauli_mul`] for a checked product.
    fn mul(self, rhs: &PauliString) -> PauliString {
        pauli_mul(self, rhs).expect("Pauli length mismatch")
    }
}

impl fmt::Debug for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PauliString(")?;
        for q in 0..self.len() {
            let c = match self.get(q) {
                Pauli::I => '.',
                Pauli::X => 'X',
                Pauli::Y => 'Y',
                Pauli::Z => 'Z',
            };
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Logical coset label; composes as the Klein four-group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LogicalLabel {
    I,
    X,
    Y,
    Z,
}

impl LogicalLabel {
    /// Fixed enumeration order, also used for tie-breaking.
    pub const ALL: [LogicalLabel; 4] = [
        LogicalLabel::I,
        LogicalLabel::X,
        LogicalLabel::Y,
        LogicalLabel::Z,
    ];

    pub fn from_components(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => LogicalLabel::I,
            (true, false) => LogicalLabel::X,
            (true, true) => LogicalLabel::Y,
            (false, true) => LogicalLabel::Z,
        }
    }

    pub fn has_x(self) -> bool {
        matches!(self, LogicalLabel::X | LogicalLabel::Y)
    }

    pub fn has_z(self) -> bool {
        matches!(self, LogicalLabel::Z | LogicalLabel::Y)
    }

    pub fn compose(self, other: LogicalLabel) -> LogicalLabel {
        LogicalLabel::from_components(self.has_x() ^ other.has_x(), self.has_z() ^ other.has_z())
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for LogicalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LogicalLabel::I => "I",
            LogicalLabel::X => "X",
            LogicalLabel::Y => "Y",
            LogicalLabel::Z => "Z",
        };
        f.write_str(s)
    }
}

/// Measured syndrome, `A` checks first.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Syndrome {
    bits: Bits,
}

impl Syndrome {
    pub fn zeros(m: usize) -> Self {
        Syndrome {
            bits: BitVec::repeat(false, m),
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        Syndrome {
            bits: bits.iter().copied().collect(),
        }
    }

    /// Bit `i` is `(value >> i) & 1`; `m <= 64`.
    pub fn from_u64(value: u64, m: usize) -> Self {
        assert!(m <= 64);
        Syndrome {
            bits: (0..m).map(|i| (value >> i) & 1 == 1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.bits.set(i, value);
    }

    pub fn is_trivial(&self) -> bool {
        self.bits.not_any()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().by_vals()
    }

    /// Hex encoding: bytes in order, bit `i` at position `i % 8` of byte
    /// `i / 8`, two lowercase digits per byte.
    pub fn to_hex(&self) -> String {
        let mut bytes = vec![0u8; self.len().div_ceil(8)];
        for (i, b) in self.iter().enumerate() {
            if b {
                bytes[i / 8] |= 1 << (i % 8);
            }
        }
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Inverse of [`Syndrome::to_hex`] for an `m`-bit syndrome.
    pub fn from_hex(hex: &str, m: usize) -> Result<Self> {
        let hex = hex.trim();
        let nbytes = m.div_ceil(8);
        if hex.len() != 2 * nbytes || !hex.is_ascii() {
            return Err(Error::InvalidParameter(format!(
                "syndrome hex string must have {} digits for {m} bits",
                2 * nbytes
            )));
        }
        let mut bits = Bits::repeat(false, m);
        for k in 0..nbytes {
            let byte = u8::from_str_radix(&hex[2 * k..2 * k + 2], 16)
                .map_err(|e| Error::InvalidParameter(format!("bad hex digit in syndrome: {e}")))?;
            for j in 0..8 {
                if byte >> j & 1 == 1 {
                    let i = 8 * k + j;
                    if i >= m {
                        return Err(Error::InvalidParameter(format!(
                            "syndrome hex string sets padding bit {i} (m = {m})"
                        )));
                    }
                    bits.set(i, true);
                }
            }
        }
        Ok(Syndrome { bits })
    }
}

/// Role of a grid node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Node {
    Qubit(usize),
    /// Z-type site check; index into `a_checks`.
    Site(usize),
    /// X-type plaquette check; index into `b_checks`.
    Plaquette(usize),
}

#[derive(Clone, Debug)]
pub struct SurfaceCode {
    d: usize,
    side: usize,
    nodes: Vec<Node>,
    qubit_coords: Vec<(usize, usize)>,
    site_coords: Vec<(usize, usize)>,
    plaquette_coords: Vec<(usize, usize)>,
    a_checks: Vec<Vec<usize>>,
    b_checks: Vec<Vec<usize>>,
    logical_x: PauliString,
    logical_z: PauliString,
}

impl SurfaceCode {
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter(format!("code distance must be >= 2, got {d}")));
        }
        let side = 2 * d - 1;
        let mut nodes = Vec::with_capacity(side * side);
        let (mut qubit_coords, mut site_coords, mut plaquette_coords) = (vec![], vec![], vec![]);
        for r in 0..side {
            for c in 0..side {
                let node = match (r % 2, c % 2) {
                    (0, 0) | (1, 1) => {
                        qubit_coords.push((r, c));
                        Node::Qubit(qubit_coords.len() - 1)
                    }
                    (0, 1) => {
                        site_coords.push((r, c));
                        Node::Site(site_coords.len() - 1)
                    }
                    _ => {
                        plaquette_coords.push((r, c));
                        Node::Plaquette(plaquette_coords.len() - 1)
                    }
                };
                nodes.push(node);
            }
        }
        let mut code = SurfaceCode {
            d,
            side,
            nodes,
            qubit_coords,
            site_coords,
            plaquette_coords,
            a_checks: vec![],
            b_checks: vec![],
            logical_x: PauliString::identity(0),
            logical_z: PauliString::identity(0),
        };
        code.a_checks = code
            .site_coords
            .iter()
            .map(|&(r, c)| code.adjacent_qubits(r, c))
            .collect();
        code.b_checks = code
            .plaquette_coords
            .iter()
            .map(|&(r, c)| code.adjacent_qubits(r, c))
            .collect();
        let n = code.n();
        let row0: Vec<usize> = (0..d).map(|j| code.qubit_at(0, 2 * j).unwrap()).collect();
        let col0: Vec<usize> = (0..d).map(|i| code.qubit_at(2 * i, 0).unwrap()).collect();
        code.logical_x = PauliString::x_on(n, &row0);
        code.logical_z = PauliString::z_on(n, &col0);
        Ok(code)
    }

    fn adjacent_qubits(&self, r: usize, c: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(4);
        let (r, c) = (r as isize, c as isize);
        for (dr, dc) in [(-1, 0), (0, -1), (1, 0), (0, 1)] {
            let (rr, cc) = (r + dr, c + dc);
            if rr >= 0 && cc >= 0 {
                if let Some(q) = self.qubit_at(rr as usize, cc as usize) {
                    out.push(q);
                }
            }
        }
        out
    }

    pub fn distance(&self) -> usize {
        self.d
    }

    /// Grid side length `2d - 1`.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn n(&self) -> usize {
        self.qubit_coords.len()
    }

    pub fn m(&self) -> usize {
        self.site_coords.len() + self.plaquette_coords.len()
    }

    pub fn node(&self, r: usize, c: usize) -> Option<Node> {
        (r < self.side && c < self.side).then(|| self.nodes[r * self.side + c])
    }

    pub fn qubit_at(&self, r: usize, c: usize) -> Option<usize> {
        match self.node(r, c)? {
            Node::Qubit(q) => Some(q),
            _ => None,
        }
    }

    pub fn qubit_coord(&self, q: usize) -> (usize, usize) {
        self.qubit_coords[q]
    }

    pub fn site_coords(&self) -> &[(usize, usize)] {
        &self.site_coords
    }

    pub fn plaquette_coords(&self) -> &[(usize, usize)] {
        &self.plaquette_coords
    }

    pub fn a_checks(&self) -> &[Vec<usize>] {
        &self.a_checks
    }

    pub fn b_checks(&self) -> &[Vec<usize>] {
        &self.b_checks
    }

    /// Syndrome index of the check at grid node `(r, c)`.
    pub fn check_index_at(&self, r: usize, c: usize) -> Option<usize> {
        match self.node(r, c)? {
            Node::Site(i) => Some(i),
            Node::Plaquette(j) => Some(self.site_coords.len() + j),
            Node::Qubit(_) => None,
        }
    }

    /// Check `i` in syndrome order as a Pauli operator.
    pub fn check(&self, i: usize) -> PauliString {
        let na = self.a_checks.len();
        if i < na {
            PauliString::z_on(self.n(), &self.a_checks[i])
        } else {
            PauliString::x_on(self.n(), &self.b_checks[i - na])
        }
    }

    pub fn checks(&self) -> Vec<PauliString> {
        (0..self.m()).map(|i| self.check(i)).collect()
    }

    pub fn logical_x(&self) -> &PauliString {
        &self.logical_x
    }

    pub fn logical_z(&self) -> &PauliString {
        &self.logical_z
    }

    /// Representative operator of a logical label.
    pub fn logical(&self, label: LogicalLabel) -> PauliString {
        let mut p = PauliString::identity(self.n());
        if label.has_x() {
            p = &p * &self.logical_x;
        }
        if label.has_z() {
            p = &p * &self.logical_z;
        }
        p
    }

    pub fn syndrome(&self, p: &PauliString) -> Result<Syndrome> {
        if p.len() != self.n() {
            return Err(Error::LengthMismatch {
                expected: self.n(),
                found: p.len(),
            });
        }
        let mut s = Syndrome::zeros(self.m());
        let na = self.a_checks.len();
        // A checks are Z-type: they flag X components.
        for (i, support) in self.a_checks.iter().enumerate() {
            let parity = support.iter().filter(|&&q| p.x[q]).count() % 2;
            s.set(i, parity == 1);
        }
        for (j, support) in self.b_checks.iter().enumerate() {
            let parity = support.iter().filter(|&&q| p.z[q]).count() % 2;
            s.set(na + j, parity == 1);
        }
        Ok(s)
    }

    /// Deterministic Pauli with the given syndrome, supported on
    /// horizontal-edge qubits only: each flagged site at `(r, c)` gets an X
    /// string along its row to the left boundary, each flagged plaquette at
    /// `(r, c)` a Z string along its column to the top boundary.
    pub fn pure_error(&self, s: &Syndrome) -> Result<PauliString> {
        if s.len() != self.m() {
            return Err(Error::LengthMismatch {
                expected: self.m(),
                found: s.len(),
            });
        }
        let mut p = PauliString::identity(self.n());
        let na = self.site_coords.len();
        for (i, &(r, c)) in self.site_coords.iter().enumerate() {
            if s.get(i) {
                for cc in (0..c).step_by(2) {
                    let q = self.qubit_at(r, cc).expect("horizontal qubit");
                    let cur = p.x[q];
                    p.x.set(q, !cur);
                }
            }
        }
        for (j, &(r, c)) in self.plaquette_coords.iter().enumerate() {
            if s.get(na + j) {
                for rr in (0..r).step_by(2) {
                    let q = self.qubit_at(rr, c).expect("horizontal qubit");
                    let cur = p.z[q];
                    p.z.set(q, !cur);
                }
            }
        }
        Ok(p)
    }

    /// Logical coset of an operator that commutes with every check.
    pub fn logical_class(&self, p: &PauliString) -> Result<LogicalLabel> {
        let s = self.syndrome(p)?;
        if !s.is_trivial() {
            return Err(Error::Precondition(format!(
                "operator has a non-trivial syndrome ({} flagged checks)",
                s.count_ones()
            )));
        }
        Ok(LogicalLabel::from_components(
            p.anticommutes(&self.logical_z),
            p.anticommutes(&self.logical_x),
        ))
    }
}

/// Convenience wrapper for [`SurfaceCode::new`].
pub fn build_code(d: usize) -> Result<SurfaceCode> {
    SurfaceCode::new(d)
}

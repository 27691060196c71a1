//! Belief propagation with vector messages on arbitrary tensor networks.
//!
//! Messages live on directed edges and are kept at unit L2 norm. The
//! contraction estimate at a fixed point is the product of local
//! contractions with pair-normalized messages, which equals the exponential
//! of minus the Bethe free energy.

use std::collections::VecDeque;

use crate::tensor::{contract, GridTN, LogScalar, Tensor, DOWN, LEFT, RIGHT, UP};
use crate::{Error, Result};

/// Edge joining leg `leg_u` of vertex `u` to leg `leg_v` of vertex `v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub leg_u: usize,
    pub leg_v: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Leg {
    Dangling,
    Edge { incoming: usize, outgoing: usize },
}

/// Message id of `u -> v` on edge `e` is `2e`, of `v -> u` is `2e + 1`.
#[derive(Clone, Debug)]
pub struct GraphTN {
    tensors: Vec<Tensor>,
    edges: Vec<Edge>,
    legs: Vec<Vec<Leg>>,
    black: Vec<bool>,
}

impl GraphTN {
    /// Vertices are colored by BFS parity for the two-color schedule.
    pub fn new(tensors: Vec<Tensor>, edges: Vec<Edge>) -> Result<Self> {
        let mut legs: Vec<Vec<Option<Leg>>> = tensors.iter().map(|t| vec![None; t.rank()]).collect();
        for (e, edge) in edges.iter().enumerate() {
            let (u, v) = (edge.u, edge.v);
            if u >= tensors.len() || v >= tensors.len() || u == v {
                return Err(Error::InvalidParameter(format!("edge {e} has invalid endpoints {u}, {v}")));
            }
            if edge.leg_u >= tensors[u].rank() || edge.leg_v >= tensors[v].rank() {
                return Err(Error::InvalidParameter(format!("edge {e} refers to a missing leg")));
            }
            let (du, dv) = (tensors[u].shape()[edge.leg_u], tensors[v].shape()[edge.leg_v]);
            if du != dv {
                return Err(Error::DimensionMismatch(format!(
                    "edge {e}: leg dimensions {du} and {dv} differ"
                )));
            }
            for (x, leg, incoming, outgoing) in [(u, edge.leg_u, 2 * e + 1, 2 * e), (v, edge.leg_v, 2 * e, 2 * e + 1)] {
                if legs[x][leg].is_some() {
                    return Err(Error::InvalidParameter(format!("leg {leg} of vertex {x} is on two edges")));
                }
                legs[x][leg] = Some(Leg::Edge { incoming, outgoing });
            }
        }
        let mut resolved = Vec::with_capacity(tensors.len());
        for (x, ls) in legs.into_iter().enumerate() {
            let mut row = Vec::with_capacity(ls.len());
            for (leg, l) in ls.into_iter().enumerate() {
                match l {
                    Some(l) => row.push(l),
                    None if tensors[x].shape()[leg] == 1 => row.push(Leg::Dangling),
                    None => {
                        return Err(Error::InvalidParameter(format!(
                            "leg {leg} of vertex {x} is open with dimension {}",
                            tensors[x].shape()[leg]
                        )))
                    }
                }
            }
            resolved.push(row);
        }
        let mut g = GraphTN {
            tensors,
            edges,
            legs: resolved,
            black: vec![],
        };
        g.black = g.bfs_parity();
        Ok(g)
    }

    /// Grid network with edges between 4-neighbors and chessboard colors.
    pub fn from_grid(tn: &GridTN) -> Result<Self> {
        let (h, w) = (tn.rows(), tn.cols());
        let mut edges = Vec::new();
        for r in 0..h {
            for c in 0..w {
                let v = r * w + c;
                if c + 1 < w {
                    edges.push(Edge { u: v, v: v + 1, leg_u: RIGHT, leg_v: LEFT });
                }
                if r + 1 < h {
                    edges.push(Edge { u: v, v: v + w, leg_u: DOWN, leg_v: UP });
                }
            }
        }
        let mut g = GraphTN::new(tn.tensors().to_vec(), edges)?;
        g.black = (0..h * w).map(|i| (i / w + i % w) % 2 == 0).collect();
        Ok(g)
    }

    fn bfs_parity(&self) -> Vec<bool> {
        let n = self.tensors.len();
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            adj[e.u].push(e.v);
            adj[e.v].push(e.u);
        }
        let mut color = vec![None; n];
        for start in 0..n {
            if color[start].is_some() {
                continue;
            }
            color[start] = Some(true);
            let mut queue = VecDeque::from([start]);
            while let Some(x) = queue.pop_front() {
                let cx = color[x].expect("visited");
                for &y in &adj[x] {
                    if color[y].is_none() {
                        color[y] = Some(!cx);
                        queue.push_back(y);
                    }
                }
            }
        }
        color.into_iter().map(|c| c.expect("all visited")).collect()
    }

    pub fn num_vertices(&self) -> usize {
        self.tensors.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn tensor(&self, v: usize) -> &Tensor {
        &self.tensors[v]
    }

    pub fn scale_tensor(&mut self, v: usize, factor: f64) {
        self.tensors[v].scale(factor);
    }

    pub fn is_black(&self, v: usize) -> bool {
        self.black[v]
    }

    pub fn num_messages(&self) -> usize {
        2 * self.edges.len()
    }

    fn message_dim(&self, id: usize) -> usize {
        let e = self.edges[id / 2];
        self.tensors[e.u].shape()[e.leg_u]
    }

    /// `Tr(T_v * incoming messages)` with the leg `keep` left open, or fully
    /// closed when `keep` is `None`.
    fn local_contraction(&self, v: usize, msgs: &MessageSet, keep: Option<usize>) -> Vec<f64> {
        let t = &self.tensors[v];
        let mut shape = t.shape().to_vec();
        // the tensor itself is only read; the first contraction makes the copy
        let mut data: Option<Vec<f64>> = None;
        for leg in (0..shape.len()).rev() {
            if Some(leg) == keep {
                continue;
            }
            if let Leg::Edge { incoming, .. } = self.legs[v][leg] {
                let src = data.as_deref().unwrap_or(t.data());
                data = Some(contract_leg(src, &shape, leg, &msgs.msgs[incoming]));
            }
            shape.remove(leg);
        }
        data.unwrap_or_else(|| t.data().to_vec())
    }
}

/// Sums leg `leg` of a row-major array against `vec`.
fn contract_leg(data: &[f64], shape: &[usize], leg: usize, vec: &[f64]) -> Vec<f64> {
    let pre: usize = shape[..leg].iter().product();
    let b = shape[leg];
    let post: usize = shape[leg + 1..].iter().product();
    if post == 1 {
        return data.chunks_exact(b).map(|row| row.iter().zip(vec).map(|(x, w)| x * w).sum()).collect();
    }
    let mut out = vec![0.0; pre * post];
    for a in 0..pre {
        let o = &mut out[a * post..(a + 1) * post];
        for (j, &w) in vec.iter().enumerate().take(b) {
            if w == 0.0 {
                continue;
            }
            let src = &data[(a * b + j) * post..(a * b + j + 1) * post];
            for (x, y) in o.iter_mut().zip(src) {
                *x += w * y;
            }
        }
    }
    out
}

/// One unit-norm vector per directed edge.
#[derive(Clone, Debug, PartialEq)]
pub struct MessageSet {
    msgs: Vec<Vec<f64>>,
    /// Rounds applied so far.
    pub t: usize,
}

impl MessageSet {
    /// Normalized all-ones vectors.
    pub fn uniform(tn: &GraphTN) -> Self {
        let msgs = (0..tn.num_messages())
            .map(|id| {
                let d = tn.message_dim(id);
                vec![1.0 / (d as f64).sqrt(); d]
            })
            .collect();
        MessageSet { msgs, t: 0 }
    }

    pub fn len(&self) -> usize {
        self.msgs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.msgs.is_empty()
    }

    /// Message `u -> v` across edge `e` when `forward`, else `v -> u`.
    pub fn get(&self, e: usize, forward: bool) -> &[f64] {
        &self.msgs[2 * e + usize::from(!forward)]
    }

    pub fn set(&mut self, e: usize, forward: bool, m: Vec<f64>) {
        self.msgs[2 * e + usize::from(!forward)] = m;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> bool {
    let n = dot(v, v).sqrt();
    if n == 0.0 || !n.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

/// `||m m^T - m' m'^T||_F^2` for unit vectors, evaluated without the
/// cancellation of `2(1 - <m, m'>^2)`.
pub(crate) fn projector_distance_sqr(diff_sqr: f64, sum_sqr: f64, overlap: f64) -> f64 {
    diff_sqr.min(sum_sqr) * (1.0 + overlap.abs())
}

fn vector_distance_sqr(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x + y) * (x + y)).sum();
    projector_distance_sqr(diff, sum, dot(a, b))
}

/// `(1/M) (sum_i ||rho_i - rho'_i||^2)^{1/2}` with `rho = |m><m|`; zero when
/// there are no messages.
pub fn message_delta(old: &MessageSet, new: &MessageSet) -> Result<f64> {
    if old.len() != new.len() {
        return Err(Error::LengthMismatch {
            expected: old.len(),
            found: new.len(),
        });
    }
    if old.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (a, b) in old.msgs.iter().zip(&new.msgs) {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch {
                expected: a.len(),
                found: b.len(),
            });
        }
        total += vector_distance_sqr(a, b);
    }
    Ok(total.sqrt() / old.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Schedule {
    /// Every vertex sends from the previous round's messages.
    Flood,
    /// Black vertices send first, then white vertices using the fresh
    /// black messages.
    #[default]
    TwoColor,
}

#[derive(Clone, Debug)]
pub struct RoundOutcome {
    pub messages: MessageSet,
    pub delta: f64,
    /// Outgoing messages that vanished and were reset to uniform.
    pub degenerate: usize,
}

fn send_from(
    tn: &GraphTN,
    current: &MessageSet,
    target: &mut MessageSet,
    damping: f64,
    sender: impl Fn(usize) -> bool,
) -> usize {
    let mut degenerate = 0;
    for v in (0..tn.num_vertices()).filter(|&v| sender(v)) {
        for (leg, l) in tn.legs[v].iter().enumerate() {
            let Leg::Edge { outgoing, .. } = *l else { continue };
            let mut m = tn.local_contraction(v, current, Some(leg));
            if !normalize(&mut m) {
                degenerate += 1;
                let d = m.len();
                m = vec![1.0 / (d as f64).sqrt(); d];
            }
            if damping >= 1.0 {
                m.clone_from(&current.msgs[outgoing]);
            } else if damping > 0.0 {
                let old = &current.msgs[outgoing];
                m.iter_mut().zip(old).for_each(|(x, y)| *x = (1.0 - damping) * *x + damping * y);
                if !normalize(&mut m) {
                    degenerate += 1;
                    m.clone_from(old);
                }
            }
            target.msgs[outgoing] = m;
        }
    }
    degenerate
}

/// One round of message updates with damping `(1 - eta) new + eta old`
/// applied to the normalized new message, followed by renormalization.
pub fn bp_round(tn: &GraphTN, msgs: &MessageSet, damping: f64, schedule: Schedule) -> Result<RoundOutcome> {
    if msgs.len() != tn.num_messages() {
        return Err(Error::LengthMismatch {
            expected: tn.num_messages(),
            found: msgs.len(),
        });
    }
    if !(0.0..=1.0).contains(&damping) {
        return Err(Error::InvalidParameter(format!("damping must lie in [0, 1], got {damping}")));
    }
    let mut next = msgs.clone();
    let degenerate = match schedule {
        Schedule::Flood => send_from(tn, msgs, &mut next, damping, |_| true),
        Schedule::TwoColor => {
            let mut d = send_from(tn, msgs, &mut next, damping, |v| tn.black[v]);
            let half = next.clone();
            d += send_from(tn, &half, &mut next, damping, |v| !tn.black[v]);
            d
        }
    };
    next.t = msgs.t + 1;
    let delta = message_delta(msgs, &next)?;
    Ok(RoundOutcome {
        messages: next,
        delta,
        degenerate,
    })
}

#[derive(Clone, Debug)]
pub struct BpState {
    pub messages: MessageSet,
    pub delta_history: Vec<f64>,
    pub converged: bool,
    pub rounds_used: usize,
    pub degenerate_resets: usize,
}

impl BpState {
    pub fn final_delta(&self) -> f64 {
        self.delta_history.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// Iterates from uniform messages until `delta < delta0` or `max_iter` rounds.
pub fn run_bp(tn: &GraphTN, max_iter: usize, delta0: f64, damping: f64, schedule: Schedule) -> Result<BpState> {
    if max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be >= 1".into()));
    }
    let mut messages = MessageSet::uniform(tn);
    let mut delta_history = Vec::new();
    let mut degenerate_resets = 0;
    let mut converged = false;
    for _ in 0..max_iter {
        let out = bp_round(tn, &messages, damping, schedule)?;
        messages = out.messages;
        degenerate_resets += out.degenerate;
        delta_history.push(out.delta);
        if out.delta < delta0 {
            converged = true;
            break;
        }
    }
    Ok(BpState {
        rounds_used: delta_history.len(),
        messages,
        delta_history,
        converged,
        degenerate_resets,
    })
}

/// `prod_v Tr(T_v prod_u m^_{u->v})` with each pair scaled so that
/// `<m^_{u->v}, m^_{v->u}> = 1`; equivalently `prod_v Z_v / prod_e <m, m'>`.
pub fn bethe_contraction(tn: &GraphTN, msgs: &MessageSet) -> Result<LogScalar> {
    if msgs.len() != tn.num_messages() {
        return Err(Error::LengthMismatch {
            expected: tn.num_messages(),
            found: msgs.len(),
        });
    }
    let mut acc = LogScalar::ONE;
    for (e, _) in tn.edges.iter().enumerate() {
        let c = dot(&msgs.msgs[2 * e], &msgs.msgs[2 * e + 1]);
        if c == 0.0 || !c.is_finite() {
            return Err(Error::NonNormalizable(format!("messages across edge {e} have overlap {c}")));
        }
        acc = acc / LogScalar::from_f64(c);
    }
    for v in 0..tn.num_vertices() {
        let z = tn.local_contraction(v, msgs, None);
        acc = acc * LogScalar::from_f64(z[0]);
    }
    Ok(acc)
}

/// Bethe free energy from vertex and edge marginals:
/// `sum_v sum P_v ln(P_v / T_v) - sum_e sum P_e ln P_e`.
pub fn bethe_free_energy_direct(tn: &GraphTN, msgs: &MessageSet) -> Result<f64> {
    if msgs.len() != tn.num_messages() {
        return Err(Error::LengthMismatch {
            expected: tn.num_messages(),
            found: msgs.len(),
        });
    }
    let mut f = 0.0;
    for v in 0..tn.num_vertices() {
        let t = &tn.tensors[v];
        let shape = t.shape();
        let incoming: Vec<Option<&[f64]>> = tn.legs[v]
            .iter()
            .map(|l| match l {
                Leg::Dangling => None,
                Leg::Edge { incoming, .. } => Some(msgs.msgs[*incoming].as_slice()),
            })
            .collect();
        let mut weights = Vec::with_capacity(t.len());
        let mut idx = vec![0usize; shape.len()];
        for &tv in t.data() {
            let mut w = tv;
            for (leg, m) in incoming.iter().enumerate() {
                if let Some(m) = m {
                    w *= m[idx[leg]];
                }
            }
            weights.push((tv, w));
            crate::tensor::increment(&mut idx, shape);
        }
        let z: f64 = weights.iter().map(|(_, w)| w).sum();
        for (tv, w) in weights {
            let p = w / z;
            if p <= 0.0 || tv <= 0.0 || !p.is_finite() {
                return Err(Error::Domain(format!("vertex {v} has a non-positive marginal entry")));
            }
            f += p * (p / tv).ln();
        }
    }
    for e in 0..tn.edges.len() {
        let (a, b) = (&msgs.msgs[2 * e], &msgs.msgs[2 * e + 1]);
        let z: f64 = dot(a, b);
        for (x, y) in a.iter().zip(b) {
            let p = x * y / z;
            if p <= 0.0 || !p.is_finite() {
                return Err(Error::Domain(format!("edge {e} has a non-positive marginal entry")));
            }
            f -= p * p.ln();
        }
    }
    Ok(f)
}

/// Tile extents `[start, end)` covering `0..len` greedily with width `k`.
pub(crate) fn tiles(len: usize, k: usize) -> Vec<(usize, usize)> {
    (0..len).step_by(k).map(|s| (s, (s + k).min(len))).collect()
}

/// Leg label on the grid: horizontal bonds `(0, r, c)` sit left of cell
/// `(r, c)`, vertical bonds `(1, r, c)` above it.
type Label = (u8, usize, usize);

fn cell_labels(r: usize, c: usize) -> [Label; 4] {
    [(1, r, c), (0, r, c), (1, r + 1, c), (0, r, c + 1)]
}

/// Contracts rows `r0..r1`, columns `c0..c1` into one rank-4 tensor whose
/// legs fuse the tile's outer legs in tile-internal order.
fn contract_tile(tn: &GridTN, (r0, r1): (usize, usize), (c0, c1): (usize, usize)) -> Result<Tensor> {
    let mut acc = Tensor::scalar(1.0, 0);
    let mut labels: Vec<Label> = Vec::new();
    for r in r0..r1 {
        for c in c0..c1 {
            let t = tn.get(r, c);
            let tl = cell_labels(r, c);
            let (mut la, mut lb) = (Vec::new(), Vec::new());
            for (j, l) in tl.iter().enumerate() {
                if let Some(i) = labels.iter().position(|x| x == l) {
                    la.push(i);
                    lb.push(j);
                }
            }
            acc = contract(&acc, &la, t, &lb)?;
            let mut next: Vec<Label> = labels.iter().enumerate().filter(|(i, _)| !la.contains(i)).map(|(_, l)| *l).collect();
            next.extend(tl.iter().enumerate().filter(|(j, _)| !lb.contains(j)).map(|(_, l)| *l));
            labels = next;
        }
    }
    let groups: [Vec<Label>; 4] = [
        (c0..c1).map(|c| (1, r0, c)).collect(),
        (r0..r1).map(|r| (0, r, c0)).collect(),
        (c0..c1).map(|c| (1, r1, c)).collect(),
        (r0..r1).map(|r| (0, r, c1)).collect(),
    ];
    let mut perm = Vec::with_capacity(labels.len());
    let mut fused = [1usize; 4];
    for (g, group) in groups.iter().enumerate() {
        for l in group {
            let i = labels.iter().position(|x| x == l).expect("outer leg present");
            perm.push(i);
            fused[g] *= acc.shape()[i];
        }
    }
    acc.permute(&perm).reshape(fused.to_vec())
}

/// Coarse grid whose tensors are the contracted `k x k` tiles (ragged at the
/// bottom and right edges).
pub fn fuse_grid(tn: &GridTN, k: usize) -> Result<GridTN> {
    if k == 0 {
        return Err(Error::InvalidParameter("fuse_grid needs k >= 1".into()));
    }
    if k == 1 {
        return Ok(tn.clone());
    }
    let rows = tiles(tn.rows(), k);
    let cols = tiles(tn.cols(), k);
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for &rt in &rows {
        for &ct in &cols {
            out.push(contract_tile(tn, rt, ct)?);
        }
    }
    GridTN::new(rows.len(), cols.len(), out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::tensor::bmps_contract;
    use crate::tensor::testing::{dense_contract, random_grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random tree with positive entries; some vertices get an extra
    /// dangling leg of dimension 1.
    pub(crate) fn random_tree(rng: &mut impl Rng, nv: usize, dmax: usize, positive: bool) -> GraphTN {
        let parents: Vec<usize> = (1..nv).map(|i| rng.random_range(0..i)).collect();
        let mut degree = vec![0usize; nv];
        for (i, &p) in parents.iter().enumerate() {
            degree[i + 1] += 1;
            degree[p] += 1;
        }
        let mut dims: Vec<Vec<usize>> = degree.iter().map(|&d| vec![0; d]).collect();
        let mut slot = vec![0usize; nv];
        let mut edges = Vec::new();
        for (i, &p) in parents.iter().enumerate() {
            let c = i + 1;
            let dim = rng.random_range(1..=dmax);
            let (lc, lp) = (slot[c], slot[p]);
            slot[c] += 1;
            slot[p] += 1;
            dims[c][lc] = dim;
            dims[p][lp] = dim;
            edges.push(Edge { u: p, v: c, leg_u: lp, leg_v: lc });
        }
        let tensors = dims
            .into_iter()
            .map(|mut shape| {
                if rng.random_bool(0.3) {
                    shape.push(1);
                }
                if shape.is_empty() {
                    shape.push(1);
                }
                let len: usize = shape.iter().product();
                let data = (0..len)
                    .map(|_| if positive { rng.random_range(0.1..1.0) } else { rng.random_range(-1.0..1.0) })
                    .collect();
                Tensor::new(shape, data).unwrap()
            })
            .collect();
        GraphTN::new(tensors, edges).unwrap()
    }

    /// Exact contraction by repeatedly absorbing leaves into their neighbor.
    pub(crate) fn leaf_elimination(tn: &GraphTN) -> f64 {
        let n = tn.num_vertices();
        let mut tensors: Vec<Tensor> = tn.tensors.clone();
        let mut alive = vec![true; n];
        // leg numbers are updated as tensors lose legs
        let mut edges: Vec<Option<Edge>> = tn.edges.iter().copied().map(Some).collect();
        let mut total = 1.0;
        loop {
            let degree = |x: usize, edges: &[Option<Edge>]| edges.iter().flatten().filter(|e| e.u == x || e.v == x).count();
            let leaf = (0..n).find(|&x| alive[x] && degree(x, &edges) <= 1);
            let Some(x) = leaf else { break };
            let mut t = tensors[x].clone();
            let edge_pos = edges.iter().position(|e| matches!(e, Some(e) if e.u == x || e.v == x));
            let keep = edge_pos.map(|p| {
                let e = edges[p].unwrap();
                if e.u == x { e.leg_u } else { e.leg_v }
            });
            let mut shape = t.shape().to_vec();
            let mut data = t.data().to_vec();
            for leg in (0..shape.len()).rev() {
                if Some(leg) != keep {
                    data = contract_leg(&data, &shape, leg, &vec![1.0; shape[leg]]);
                    shape.remove(leg);
                }
            }
            alive[x] = false;
            match edge_pos {
                None => total *= data[0],
                Some(p) => {
                    let e = edges[p].take().unwrap();
                    let (y, leg_y) = if e.u == x { (e.v, e.leg_v) } else { (e.u, e.leg_u) };
                    t = tensors[y].clone();
                    let new = contract_leg(t.data(), t.shape(), leg_y, &data);
                    let mut nshape = t.shape().to_vec();
                    nshape.remove(leg_y);
                    if nshape.is_empty() {
                        nshape.push(1);
                    }
                    let renumber = |l: usize| if l > leg_y { l - 1 } else { l };
                    tensors[y] = Tensor::new(nshape, new).unwrap();
                    for e in edges.iter_mut().flatten() {
                        if e.u == y {
                            e.leg_u = renumber(e.leg_u);
                        }
                        if e.v == y {
                            e.leg_v = renumber(e.leg_v);
                        }
                    }
                }
            }
        }
        total
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn leaf_elimination_matches_grid_oracle_on_a_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let grid = random_grid(&mut rng, 1, 5, 3);
        let g = GraphTN::from_grid(&grid).unwrap();
        assert!(rel(leaf_elimination(&g), dense_contract(&grid)) < 1e-12);
    }

    #[test]
    fn tree_exactness() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let nv = rng.random_range(1..=12);
            let tn = random_tree(&mut rng, nv, 4, true);
            let state = run_bp(&tn, 30, 1e-14, 0.0, Schedule::Flood).unwrap();
            assert!(state.converged);
            let exact = leaf_elimination(&tn);
            let got = bethe_contraction(&tn, &state.messages).unwrap();
            assert!(rel(got.to_f64(), exact) <= 1e-10, "{} vs {exact}", got.to_f64());
            let f = bethe_free_energy_direct(&tn, &state.messages).unwrap();
            assert!((got.log_mag() + f).abs() <= 1e-8);
        }
    }

    #[test]
    fn tree_converges_within_diameter_plus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for nv in [2, 5, 8, 12] {
            // path graph: diameter nv - 1
            let grid = random_grid(&mut rng, 1, nv, 3);
            let g = GraphTN::from_grid(&grid).unwrap();
            let state = run_bp(&g, 50, 1e-13, 0.0, Schedule::Flood).unwrap();
            assert!(state.converged);
            assert!(state.rounds_used <= nv, "{} rounds for {nv} nodes", state.rounds_used);
        }
    }

    #[test]
    fn two_node_fixed_point_after_one_round() {
        let a = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let b = Tensor::new(vec![3], vec![0.5, 0.25, 2.0]).unwrap();
        let g = GraphTN::new(vec![a, b], vec![Edge { u: 0, v: 1, leg_u: 0, leg_v: 0 }]).unwrap();
        let one = bp_round(&g, &MessageSet::uniform(&g), 0.0, Schedule::Flood).unwrap();
        let norm = (14.0f64).sqrt();
        for (x, y) in one.messages.get(0, true).iter().zip([1.0, 2.0, 3.0]) {
            assert!((x - y / norm).abs() < 1e-15);
        }
        let two = bp_round(&g, &one.messages, 0.0, Schedule::Flood).unwrap();
        assert!(two.delta < 1e-15);
        let z = bethe_contraction(&g, &one.messages).unwrap().to_f64();
        assert!(rel(z, 0.5 + 0.5 + 6.0) < 1e-12);
        let f = bethe_free_energy_direct(&g, &one.messages).unwrap();
        assert!(rel((-f).exp(), 7.0) < 1e-10);
    }

    #[test]
    fn single_node_converges_immediately() {
        let g = GraphTN::new(vec![Tensor::new(vec![1, 1], vec![2.5]).unwrap()], vec![]).unwrap();
        let state = run_bp(&g, 20, 1e-4, 0.1, Schedule::TwoColor).unwrap();
        assert!(state.converged);
        assert_eq!(state.rounds_used, 1);
        assert_eq!(state.final_delta(), 0.0);
        assert_eq!(bethe_contraction(&g, &state.messages).unwrap().to_f64(), 2.5);
    }

    #[test]
    fn orthogonal_messages_give_sqrt_two() {
        let a = Tensor::new(vec![2], vec![1.0, 1.0]).unwrap();
        let g = GraphTN::new(vec![a.clone(), a], vec![Edge { u: 0, v: 1, leg_u: 0, leg_v: 0 }]).unwrap();
        let mut old = MessageSet::uniform(&g);
        old.set(0, true, vec![1.0, 0.0]);
        old.set(0, false, vec![1.0, 0.0]);
        let mut new = old.clone();
        new.set(0, true, vec![0.0, 1.0]);
        // one of two messages differs
        assert!((message_delta(&old, &new).unwrap() - 2f64.sqrt() / 2.0).abs() < 1e-15);
        new.set(0, false, vec![0.0, -1.0]);
        assert!((message_delta(&old, &new).unwrap() - 1.0).abs() < 1e-15);
        // sign flips do not count
        let mut flipped = old.clone();
        flipped.set(0, true, vec![-1.0, 0.0]);
        assert_eq!(message_delta(&old, &flipped).unwrap(), 0.0);
    }

    #[test]
    fn three_cycle_uniform_fixed_point() {
        let ones = Tensor::from_fn(vec![2, 2], |_| 1.0);
        let edges = vec![
            Edge { u: 0, v: 1, leg_u: 1, leg_v: 0 },
            Edge { u: 1, v: 2, leg_u: 1, leg_v: 0 },
            Edge { u: 2, v: 0, leg_u: 1, leg_v: 0 },
        ];
        let g = GraphTN::new(vec![ones.clone(), ones.clone(), ones], edges).unwrap();
        let state = run_bp(&g, 5, 1e-12, 0.0, Schedule::Flood).unwrap();
        assert!(state.converged);
        let product = bethe_contraction(&g, &state.messages).unwrap();
        let f = bethe_free_energy_direct(&g, &state.messages).unwrap();
        assert!((product.log_mag() + f).abs() < 1e-10);
        // each vertex contributes 4 / 2, edges are normalized: 2^3
        assert!(rel(product.to_f64(), 8.0) < 1e-12);
    }

    #[test]
    fn bethe_product_equals_direct_free_energy_on_loopy_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let (h, w) = (rng.random_range(2..=4), rng.random_range(2..=4));
            let mut grid = random_grid(&mut rng, h, w, 3);
            let abs: Vec<Tensor> = grid.tensors().iter().map(|t| Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| x.abs() + 0.05).collect()).unwrap()).collect();
            grid = GridTN::new(h, w, abs).unwrap();
            let g = GraphTN::from_grid(&grid).unwrap();
            let state = run_bp(&g, 200, 1e-12, 0.0, Schedule::TwoColor).unwrap();
            if !state.converged {
                continue;
            }
            let product = bethe_contraction(&g, &state.messages).unwrap();
            let f = bethe_free_energy_direct(&g, &state.messages).unwrap();
            assert!((product.log_mag() + f).abs() <= 1e-8);
        }
    }

    #[test]
    fn near_product_loop_is_close_to_exact() {
        // 2x2 loop of near-product tensors
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut tensors = Vec::new();
        for r in 0..2 {
            for c in 0..2 {
                let shape = vec![if r == 0 { 1 } else { 2 }, if c == 0 { 1 } else { 2 }, if r == 1 { 1 } else { 2 }, if c == 1 { 1 } else { 2 }];
                tensors.push(Tensor::from_fn(shape, |_| 1.0 + 0.01 * rng.random_range(-1.0..1.0)));
            }
        }
        let grid = GridTN::new(2, 2, tensors).unwrap();
        let g = GraphTN::from_grid(&grid).unwrap();
        let state = run_bp(&g, 100, 1e-13, 0.0, Schedule::TwoColor).unwrap();
        let got = bethe_contraction(&g, &state.messages).unwrap().to_f64();
        assert!(rel(got, dense_contract(&grid)) < 1e-3);
    }

    #[test]
    fn scale_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let grid = random_grid(&mut rng, 3, 3, 2);
        let abs: Vec<Tensor> = grid.tensors().iter().map(|t| Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| x.abs() + 0.1).collect()).unwrap()).collect();
        let grid = GridTN::new(3, 3, abs).unwrap();
        let mut g = GraphTN::from_grid(&grid).unwrap();
        let state = run_bp(&g, 50, 1e-13, 0.0, Schedule::TwoColor).unwrap();
        let a = bethe_contraction(&g, &state.messages).unwrap();
        let lambda: f64 = 3.7;
        g.scale_tensor(4, lambda);
        let state2 = run_bp(&g, 50, 1e-13, 0.0, Schedule::TwoColor).unwrap();
        let b = bethe_contraction(&g, &state2.messages).unwrap();
        assert!((b.log_mag() - a.log_mag() - lambda.ln()).abs() < 1e-10);
    }

    #[test]
    fn damping_one_freezes_messages() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let grid = random_grid(&mut rng, 3, 3, 2);
        let g = GraphTN::from_grid(&grid).unwrap();
        let out = bp_round(&g, &MessageSet::uniform(&g), 1.0, Schedule::TwoColor).unwrap();
        assert_eq!(out.delta, 0.0);
    }

    #[test]
    fn invalid_graphs() {
        let t = Tensor::new(vec![2], vec![1.0, 1.0]).unwrap();
        assert!(GraphTN::new(vec![t.clone()], vec![]).is_err());
        let s = Tensor::new(vec![3], vec![1.0; 3]).unwrap();
        assert!(GraphTN::new(vec![t.clone(), s], vec![Edge { u: 0, v: 1, leg_u: 0, leg_v: 0 }]).is_err());
        assert!(GraphTN::new(vec![t], vec![Edge { u: 0, v: 0, leg_u: 0, leg_v: 0 }]).is_err());
    }

    #[test]
    fn fuse_identity_and_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let grid = random_grid(&mut rng, 5, 5, 2);
        assert_eq!(fuse_grid(&grid, 1).unwrap(), grid);
        let fused = fuse_grid(&grid, 3).unwrap();
        assert_eq!((fused.rows(), fused.cols()), (2, 2));
        assert!(fuse_grid(&grid, 0).is_err());
    }

    #[test]
    fn fusing_preserves_the_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..30 {
            let (h, w) = (rng.random_range(1..=5), rng.random_range(1..=5));
            let grid = random_grid(&mut rng, h, w, 2);
            let exact = bmps_contract(&grid, 0).unwrap();
            for k in 1..=4 {
                let fused = bmps_contract(&fuse_grid(&grid, k).unwrap(), 0).unwrap();
                assert!(fused.rel_diff(&exact) <= 1e-10, "{h}x{w} k={k}: {fused} vs {exact} dense {}", dense_contract(&grid));
            }
        }
    }

    #[test]
    fn fused_leg_dimensions() {
        let ones = |shape: Vec<usize>| Tensor::from_fn(shape, |_| 1.0);
        let mut t = Vec::new();
        for r in 0..5 {
            for c in 0..5 {
                t.push(ones(vec![
                    if r == 0 { 1 } else { 2 },
                    if c == 0 { 1 } else { 2 },
                    if r == 4 { 1 } else { 2 },
                    if c == 4 { 1 } else { 2 },
                ]));
            }
        }
        let fused = fuse_grid(&GridTN::new(5, 5, t).unwrap(), 3).unwrap();
        assert_eq!(fused.get(0, 0).shape(), &[1, 1, 8, 8]);
        assert_eq!(fused.get(1, 1).shape(), &[4, 4, 1, 1]);
        assert_eq!(fused.get(0, 1).shape(), &[1, 8, 4, 1]);
    }
}

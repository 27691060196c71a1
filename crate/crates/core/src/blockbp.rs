//! Belief propagation between rectangular blocks of a grid network, with
//! MPS messages and boundary-MPS block updates.
//!
//! A message from block `b` toward direction `D` lives on the legs crossing
//! that side of `b`, one site per leg: top to bottom for east/west
//! messages, left to right for north/south messages. To compute it, the
//! block is surrounded by the incoming messages on the other sides (as cap
//! rows/columns), turned so that `D` faces east, and swept column by column.

use rayon::prelude::*;

use crate::bp::{projector_distance_sqr, tiles};
use crate::tensor::{bmps_contract, bmps_sweep, mps_inner, Canonical, GridTN, LogScalar, Mps, Tensor};
use crate::{Error, Result};

/// Side of a block. The discriminants match the grid leg order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dir {
    North = 0,
    West = 1,
    South = 2,
    East = 3,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::North, Dir::West, Dir::South, Dir::East];

    pub fn opposite(self) -> Dir {
        Dir::ALL[(self as usize + 2) % 4]
    }

    fn leg(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockPartition {
    rows: Vec<(usize, usize)>,
    cols: Vec<(usize, usize)>,
}

impl BlockPartition {
    /// Greedy `k x k` tiling from the top-left corner; the last block row and
    /// column may be thinner.
    pub fn new(grid_rows: usize, grid_cols: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("block size must be >= 1".into()));
        }
        Ok(BlockPartition {
            rows: tiles(grid_rows, k),
            cols: tiles(grid_cols, k),
        })
    }

    pub fn block_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn block_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    /// Row cut positions `[start, end)` of every block row.
    pub fn row_extents(&self) -> &[(usize, usize)] {
        &self.rows
    }

    pub fn col_extents(&self) -> &[(usize, usize)] {
        &self.cols
    }

    /// `((r0, r1), (c0, c1))` of block `b` (row-major block numbering).
    pub fn extent(&self, b: usize) -> ((usize, usize), (usize, usize)) {
        let nc = self.cols.len();
        (self.rows[b / nc], self.cols[b % nc])
    }

    pub fn neighbor(&self, b: usize, dir: Dir) -> Option<usize> {
        let nc = self.cols.len();
        let (br, bc) = (b / nc, b % nc);
        match dir {
            Dir::North => br.checked_sub(1).map(|r| r * nc + bc),
            Dir::South => (br + 1 < self.rows.len()).then(|| (br + 1) * nc + bc),
            Dir::West => bc.checked_sub(1).map(|c| br * nc + c),
            Dir::East => (bc + 1 < nc).then(|| br * nc + bc + 1),
        }
    }

    /// Chessboard coloring of the blocks.
    pub fn is_black(&self, b: usize) -> bool {
        let nc = self.cols.len();
        (b / nc + b % nc).is_multiple_of(2)
    }
}

pub fn partition(tn: &GridTN, k: usize) -> Result<BlockPartition> {
    BlockPartition::new(tn.rows(), tn.cols(), k)
}

/// Dimensions of the legs leaving block `b` through side `dir`, in message
/// site order.
fn crossing_dims(tn: &GridTN, p: &BlockPartition, b: usize, dir: Dir) -> Vec<usize> {
    let ((r0, r1), (c0, c1)) = p.extent(b);
    match dir {
        Dir::North => (c0..c1).map(|c| tn.get(r0, c).shape()[dir.leg()]).collect(),
        Dir::South => (c0..c1).map(|c| tn.get(r1 - 1, c).shape()[dir.leg()]).collect(),
        Dir::West => (r0..r1).map(|r| tn.get(r, c0).shape()[dir.leg()]).collect(),
        Dir::East => (r0..r1).map(|r| tn.get(r, c1 - 1).shape()[dir.leg()]).collect(),
    }
}

/// One slot per (block, direction): the message the block sends that way.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMessages {
    msgs: Vec<Option<Mps>>,
}

impl BlockMessages {
    pub fn get(&self, from: usize, dir: Dir) -> Option<&Mps> {
        self.msgs[4 * from + dir as usize].as_ref()
    }

    fn set(&mut self, from: usize, dir: Dir, m: Mps) {
        self.msgs[4 * from + dir as usize] = Some(m);
    }

    /// Message arriving at `b` across its side `dir`.
    pub fn incoming(&self, p: &BlockPartition, b: usize, dir: Dir) -> Option<&Mps> {
        p.neighbor(b, dir).and_then(|nb| self.get(nb, dir.opposite()))
    }

    /// Number of directed messages.
    pub fn len(&self) -> usize {
        self.msgs.iter().flatten().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Dir, &Mps)> {
        self.msgs
            .iter()
            .enumerate()
            .filter_map(|(i, m)| m.as_ref().map(|m| (i / 4, Dir::ALL[i % 4], m)))
    }

    pub fn max_bond(&self) -> usize {
        self.msgs.iter().flatten().map(Mps::max_bond).max().unwrap_or(1)
    }
}

/// Uniform product messages of bond dimension 1 on every interface.
pub fn init_block_messages(tn: &GridTN, p: &BlockPartition) -> Result<BlockMessages> {
    let mut msgs = BlockMessages {
        msgs: vec![None; 4 * p.num_blocks()],
    };
    for b in 0..p.num_blocks() {
        for dir in Dir::ALL {
            if p.neighbor(b, dir).is_some() {
                msgs.set(b, dir, Mps::uniform(&crossing_dims(tn, p, b, dir))?);
            }
        }
    }
    Ok(msgs)
}

fn cap_tensor(site: &Tensor, side: Dir) -> Result<Tensor> {
    let s = site.shape();
    let (dl, p, dr) = (s[0], s[1], s[2]);
    match side {
        Dir::West => site.permute(&[0, 2, 1]).reshape(vec![dl, 1, dr, p]),
        Dir::East => site.clone().reshape(vec![dl, p, dr, 1]),
        Dir::North => site.clone().reshape(vec![1, dl, p, dr]),
        Dir::South => site.permute(&[1, 0, 2]).reshape(vec![p, dl, 1, dr]),
    }
}

fn corner() -> Tensor {
    Tensor::scalar(1.0, 4)
}

/// The block of `b` surrounded by its incoming messages on every side that
/// has a neighbor, except `open`. Returns the rows and which sides got caps.
fn extended_block(
    tn: &GridTN,
    p: &BlockPartition,
    b: usize,
    msgs: &BlockMessages,
    open: Option<Dir>,
) -> Result<(Vec<Vec<Tensor>>, [bool; 4])> {
    let ((r0, r1), (c0, c1)) = p.extent(b);
    let mut caps = [false; 4];
    let mut cap_sites: [Vec<Tensor>; 4] = Default::default();
    for dir in Dir::ALL {
        if Some(dir) == open {
            continue;
        }
        if let Some(m) = msgs.incoming(p, b, dir) {
            debug_assert_eq!(m.log_scale(), 0.0);
            caps[dir as usize] = true;
            cap_sites[dir as usize] = m.sites().iter().map(|s| cap_tensor(s, dir)).collect::<Result<_>>()?;
        }
    }
    let [has_n, has_w, has_s, has_e] = caps;
    let mut rows = Vec::with_capacity(r1 - r0 + 2);
    let cap_row = |sites: &[Tensor]| {
        let mut row = Vec::with_capacity(c1 - c0 + 2);
        if has_w {
            row.push(corner());
        }
        row.extend(sites.iter().cloned());
        if has_e {
            row.push(corner());
        }
        row
    };
    if has_n {
        rows.push(cap_row(&cap_sites[Dir::North as usize]));
    }
    for (i, r) in (r0..r1).enumerate() {
        let mut row = Vec::with_capacity(c1 - c0 + 2);
        if has_w {
            row.push(cap_sites[Dir::West as usize][i].clone());
        }
        row.extend((c0..c1).map(|c| tn.get(r, c).clone()));
        if has_e {
            row.push(cap_sites[Dir::East as usize][i].clone());
        }
        rows.push(row);
    }
    if has_s {
        rows.push(cap_row(&cap_sites[Dir::South as usize]));
    }
    Ok((rows, caps))
}

/// Outgoing message of block `b` toward `dir`: unit norm, left canonical,
/// log scale dropped. `None` when the contraction vanishes.
pub fn outgoing_message(
    tn: &GridTN,
    p: &BlockPartition,
    b: usize,
    dir: Dir,
    msgs: &BlockMessages,
    chi: usize,
) -> Result<Option<Mps>> {
    let (rows, caps) = extended_block(tn, p, b, msgs, Some(dir))?;
    let grid = GridTN::from_rows_unchecked(rows);
    // sides that end up at the top and bottom once `dir` faces east
    let (grid, top, bottom) = match dir {
        Dir::East => (grid, Dir::North, Dir::South),
        Dir::North => (grid.rotate_cw(), Dir::West, Dir::East),
        Dir::South => (grid.rotate_ccw(), Dir::East, Dir::West),
        Dir::West => (grid.rotate_180(), Dir::South, Dir::North),
    };
    let (mut m, _) = bmps_sweep(&grid, chi).map_err(|e| block_context(e, b, dir))?;
    if caps[top as usize] {
        m.absorb_site(0);
    }
    if caps[bottom as usize] {
        m.absorb_site(m.len() - 1);
    }
    if matches!(dir, Dir::South | Dir::West) {
        m = m.reversed();
    }
    let norm = m.canonicalize(Canonical::Left);
    if norm.is_zero() {
        return Ok(None);
    }
    m.set_log_scale(0.0);
    Ok(Some(m))
}

fn block_context(e: Error, b: usize, dir: Dir) -> Error {
    match e {
        Error::Numerical(msg) => Error::Numerical(format!("block {b}, message {dir:?}: {msg}")),
        other => other,
    }
}

/// All outgoing messages of block `b`, before damping.
pub fn block_update(
    tn: &GridTN,
    p: &BlockPartition,
    b: usize,
    msgs: &BlockMessages,
    chi: usize,
) -> Result<Vec<(Dir, Option<Mps>)>> {
    Dir::ALL
        .into_iter()
        .filter(|&d| p.neighbor(b, d).is_some())
        .map(|d| Ok((d, outgoing_message(tn, p, b, d, msgs, chi)?)))
        .collect()
}

/// `(1 - eta) new + eta old`, compressed to `chi` and renormalized. The sign
/// of `new` is aligned with `old` first, since canonical forms fix the
/// state only up to sign.
fn damp(new: Mps, old: &Mps, damping: f64, chi: usize) -> Result<Option<Mps>> {
    if damping >= 1.0 {
        return Ok(Some(old.clone()));
    }
    if damping <= 0.0 {
        return Ok(Some(new));
    }
    let mut new = new;
    if mps_inner(&new, old)?.sign() < 0 {
        new.negate();
    }
    let mut sum = Mps::add(&new, 1.0 - damping, old, damping)?;
    sum.compress(chi)?;
    if sum.canonicalize(Canonical::Left).is_zero() {
        return Ok(None);
    }
    sum.set_log_scale(0.0);
    Ok(Some(sum))
}

/// Largest message size handled through dense vectors in [`block_delta`].
const DENSE_DELTA_LIMIT: usize = 4096;

fn message_distance_sqr(a: &Mps, b: &Mps) -> Result<f64> {
    let size: usize = a.phys_dims().iter().product();
    if size <= DENSE_DELTA_LIMIT {
        let (x, y) = (a.to_dense(), b.to_dense());
        let diff: f64 = x.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum();
        let sum: f64 = x.iter().zip(&y).map(|(p, q)| (p + q) * (p + q)).sum();
        let dot: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
        Ok(projector_distance_sqr(diff, sum, dot))
    } else {
        let c = mps_inner(a, b)?.to_f64();
        Ok((2.0 * (1.0 - c * c)).max(0.0))
    }
}

/// `(1/M) (sum_i || |m_i><m_i| - |m'_i><m'_i| ||^2)^{1/2}` over unit-norm
/// messages.
pub fn block_delta(new: &BlockMessages, old: &BlockMessages) -> Result<f64> {
    if new.msgs.len() != old.msgs.len() {
        return Err(Error::LengthMismatch {
            expected: old.msgs.len(),
            found: new.msgs.len(),
        });
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (a, b) in new.msgs.iter().zip(&old.msgs) {
        match (a, b) {
            (Some(a), Some(b)) => {
                total += message_distance_sqr(a, b)?;
                count += 1;
            }
            (None, None) => {}
            _ => return Err(Error::InvalidParameter("message maps have different keys".into())),
        }
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok(total.sqrt() / count as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockBpConfig {
    pub k: usize,
    /// Bond dimension cap for messages and sweeps; `0` means exact.
    pub chi: usize,
    pub max_iter: usize,
    pub delta0: f64,
    pub damping: f64,
}

impl Default for BlockBpConfig {
    fn default() -> Self {
        BlockBpConfig {
            k: 2,
            chi: 16,
            max_iter: 20,
            delta0: 1e-4,
            damping: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BlockBpState {
    pub partition: BlockPartition,
    pub messages: BlockMessages,
    pub delta_history: Vec<f64>,
    pub converged: bool,
    pub rounds_used: usize,
    /// Messages that vanished and were kept at their previous value.
    pub degenerate_resets: usize,
}

impl BlockBpState {
    pub fn final_delta(&self) -> f64 {
        self.delta_history.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// Sender, direction and damped message (`None` if it vanished).
type Update = (usize, Dir, Option<Mps>);

/// Updates every block of one color against the current messages and writes
/// the results afterwards.
fn half_step(
    tn: &GridTN,
    p: &BlockPartition,
    msgs: &mut BlockMessages,
    black: bool,
    cfg: &BlockBpConfig,
) -> Result<usize> {
    let blocks: Vec<usize> = (0..p.num_blocks()).filter(|&b| p.is_black(b) == black).collect();
    let current = &*msgs;
    let updates: Vec<Result<Vec<Update>>> = blocks
        .par_iter()
        .map(|&b| {
            let mut out = Vec::with_capacity(4);
            for (dir, new) in block_update(tn, p, b, current, cfg.chi)? {
                let old = current.get(b, dir).expect("message exists");
                let damped = match new {
                    Some(m) => damp(m, old, cfg.damping, cfg.chi)?,
                    None => None,
                };
                out.push((b, dir, damped));
            }
            Ok(out)
        })
        .collect();
    let mut degenerate = 0;
    for update in updates {
        for (b, dir, m) in update? {
            match m {
                Some(m) => msgs.set(b, dir, m),
                None => degenerate += 1,
            }
        }
    }
    Ok(degenerate)
}

/// Two-color block BP from uniform messages until `delta < delta0` or
/// `max_iter` rounds.
pub fn run_blockbp(tn: &GridTN, cfg: &BlockBpConfig) -> Result<BlockBpState> {
    if cfg.max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&cfg.damping) {
        return Err(Error::InvalidParameter(format!("damping must lie in [0, 1], got {}", cfg.damping)));
    }
    let partition = partition(tn, cfg.k)?;
    let mut messages = init_block_messages(tn, &partition)?;
    let mut delta_history = Vec::new();
    let mut degenerate_resets = 0;
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        let before = messages.clone();
        degenerate_resets += half_step(tn, &partition, &mut messages, true, cfg)?;
        degenerate_resets += half_step(tn, &partition, &mut messages, false, cfg)?;
        let delta = block_delta(&messages, &before)?;
        delta_history.push(delta);
        if delta < cfg.delta0 {
            converged = true;
            break;
        }
    }
    Ok(BlockBpState {
        partition,
        rounds_used: delta_history.len(),
        messages,
        delta_history,
        converged,
        degenerate_resets,
    })
}

/// Contraction estimate `prod_b Tr(block_b with incoming messages) /
/// prod_pairs <m_{u->v}, m_{v->u}>`, each block contracted with bMPS at `chi`.
pub fn blockbp_contraction(tn: &GridTN, state: &BlockBpState, chi: usize) -> Result<LogScalar> {
    let p = &state.partition;
    let mut acc = LogScalar::ONE;
    for b in 0..p.num_blocks() {
        let (rows, _) = extended_block(tn, p, b, &state.messages, None)?;
        let grid = GridTN::from_rows_unchecked(rows);
        acc = acc * bmps_contract(&grid, chi)?;
        for dir in [Dir::East, Dir::South] {
            if let Some(nb) = p.neighbor(b, dir) {
                let (out, back) = (
                    state.messages.get(b, dir).expect("message exists"),
                    state.messages.get(nb, dir.opposite()).expect("message exists"),
                );
                let c = mps_inner(out, back)?;
                if c.is_zero() {
                    return Err(Error::NonNormalizable(format!(
                        "messages between blocks {b} and {nb} are orthogonal"
                    )));
                }
                acc = acc / c;
            }
        }
    }
    Ok(acc)
}

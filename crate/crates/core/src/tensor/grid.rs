use super::dense::Tensor;
use super::mps::Mps;
use super::scalar::LogScalar;
use crate::{Error, Result};

/// Leg positions on every grid tensor.
pub const UP: usize = 0;
pub const LEFT: usize = 1;
pub const DOWN: usize = 2;
pub const RIGHT: usize = 3;

/// Rectangular tensor network. Every tensor has legs `(up, left, down,
/// right)`; legs facing the outer boundary have dimension 1.
#[derive(Clone, Debug, PartialEq)]
pub struct GridTN {
    rows: usize,
    cols: usize,
    tensors: Vec<Tensor>,
}

impl GridTN {
    /// Tensors are given row-major.
    pub fn new(rows: usize, cols: usize, tensors: Vec<Tensor>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter("grid must be non-empty".into()));
        }
        if tensors.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                found: tensors.len(),
            });
        }
        let g = GridTN {
            rows,
            cols,
            tensors,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        for r in 0..self.rows {
            for c in 0..self.cols {
                let t = self.get(r, c);
                if t.rank() != 4 {
                    return Err(Error::DimensionMismatch(format!("tensor ({r},{c}) is not rank 4")));
                }
                let s = t.shape();
                let bad = |what: &str| {
                    Err(Error::DimensionMismatch(format!("tensor ({r},{c}): {what}")))
                };
                if r == 0 && s[UP] != 1 {
                    return bad("top leg must have dimension 1");
                }
                if c == 0 && s[LEFT] != 1 {
                    return bad("left leg must have dimension 1");
                }
                if r + 1 == self.rows && s[DOWN] != 1 {
                    return bad("bottom leg must have dimension 1");
                }
                if c + 1 == self.cols && s[RIGHT] != 1 {
                    return bad("right leg must have dimension 1");
                }
                if r + 1 < self.rows && s[DOWN] != self.get(r + 1, c).shape()[UP] {
                    return bad("down leg disagrees with the tensor below");
                }
                if c + 1 < self.cols && s[RIGHT] != self.get(r, c + 1).shape()[LEFT] {
                    return bad("right leg disagrees with the tensor to the right");
                }
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &Tensor {
        &self.tensors[r * self.cols + c]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn column(&self, c: usize) -> Vec<&Tensor> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Multiplies one tensor by a constant.
    pub fn scale_tensor(&mut self, r: usize, c: usize, factor: f64) {
        self.tensors[r * self.cols + c].scale(factor);
    }

    /// Builds a grid from nested rows without checking the outer legs, so
    /// that a side may be left open for a partial sweep.
    pub(crate) fn from_rows_unchecked(rows: Vec<Vec<Tensor>>) -> GridTN {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        GridTN {
            rows: r,
            cols: c,
            tensors: rows.into_iter().flatten().collect(),
        }
    }

    /// Quarter turn clockwise: the old top side becomes the right side.
    pub fn rotate_cw(&self) -> GridTN {
        let (h, w) = (self.rows, self.cols);
        let mut out = Vec::with_capacity(h * w);
        // new (i, j) = old (h - 1 - j, i)
        for i in 0..w {
            for j in 0..h {
                // new legs (up, left, down, right) = old (left, down, right, up)
                out.push(self.get(h - 1 - j, i).permute(&[LEFT, DOWN, RIGHT, UP]));
            }
        }
        GridTN {
            rows: w,
            cols: h,
            tensors: out,
        }
    }

    pub fn rotate_ccw(&self) -> GridTN {
        let (h, w) = (self.rows, self.cols);
        let mut out = Vec::with_capacity(h * w);
        // new (i, j) = old (j, w - 1 - i)
        for i in 0..w {
            for j in 0..h {
                // new legs (up, left, down, right) = old (right, up, left, down)
                out.push(self.get(j, w - 1 - i).permute(&[RIGHT, UP, LEFT, DOWN]));
            }
        }
        GridTN {
            rows: w,
            cols: h,
            tensors: out,
        }
    }

    pub fn rotate_180(&self) -> GridTN {
        let (h, w) = (self.rows, self.cols);
        let mut out = Vec::with_capacity(h * w);
        for i in 0..h {
            for j in 0..w {
                out.push(self.get(h - 1 - i, w - 1 - j).permute(&[DOWN, RIGHT, UP, LEFT]));
            }
        }
        GridTN {
            rows: h,
            cols: w,
            tensors: out,
        }
    }
}

/// Contracts the grid column by column from the left, compressing the running
/// boundary to bond dimension `chi` (`0` = exact). The returned state has one
/// site per row whose physical legs are the right legs of the last column,
/// together with the accumulated relative discarded weight.
pub fn bmps_sweep(tn: &GridTN, chi: usize) -> Result<(Mps, f64)> {
    let mut state = Mps::product(&vec![vec![1.0]; tn.rows()])?;
    let mut discarded = 0.0;
    for c in 0..tn.cols() {
        let (next, w) = state.apply_mpo_column(&tn.column(c), chi)?;
        state = next;
        discarded += w;
    }
    Ok((state, discarded))
}

/// Boundary-MPS contraction value with truncation `chi` (`0` = exact).
pub fn bmps_contract(tn: &GridTN, chi: usize) -> Result<LogScalar> {
    let (state, _) = bmps_sweep(tn, chi)?;
    state.close()
}

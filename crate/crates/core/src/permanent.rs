//! Permanents of nonnegative matrices and the soft constraint-node update.
//!
//! The trellis has one node per subset of columns. Stage `r` connects every
//! subset `S` of size `r` to `S ∪ {j}` for each column `j ∉ S`, with edge
//! weight `m[r][j]`. Paths from the empty set to the full set are exactly the
//! permutations, so the forward sum at the full set is the permanent, and
//! combining forward and backward sums on the stage-`r` edges labelled `j`
//! gives the cofactor permanent `perm(M_rj)`.

use crate::error::{Error, Result};

/// Largest size accepted by [`perm_naive`].
pub const NAIVE_MAX_Q: usize = 10;
/// Largest size accepted by the trellis routines (`2^q` states).
pub const TRELLIS_MAX_Q: usize = 25;

/// A square matrix of nonnegative reals. Row `i` is the message arriving on
/// edge `i` of a constraint node, column `j` is symbol `j + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefMatrix {
    q: usize,
    entries: Vec<f64>,
}

impl BeliefMatrix {
    pub fn new(q: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != q * q {
            return Err(Error::InvalidParameter(format!(
                "{} entries cannot form a {q}x{q} matrix",
                entries.len()
            )));
        }
        if entries.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter("entries must be finite and nonnegative".into()));
        }
        Ok(BeliefMatrix { q, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let q = rows.len();
        if rows.iter().any(|r| r.len() != q) {
            return Err(Error::InvalidParameter("matrix is not square".into()));
        }
        Self::new(q, rows.concat())
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.q + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.q..(i + 1) * self.q]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks(self.q)
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// The matrix with row `i` and column `j` removed.
    pub fn minor(&self, i: usize, j: usize) -> BeliefMatrix {
        let entries = (0..self.q)
            .filter(|&r| r != i)
            .flat_map(|r| (0..self.q).filter(move |&c| c != j).map(move |c| (r, c)))
            .map(|(r, c)| self.get(r, c))
            .collect();
        BeliefMatrix { q: self.q - 1, entries }
    }

    /// Scales each row to sum to one; all-zero rows are left alone.
    pub fn normalize_rows(&mut self) {
        for row in self.entries.chunks_mut(self.q) {
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                row.iter_mut().for_each(|x| *x /= sum);
            }
        }
    }
}

/// A nonnegative number stored as `mantissa * exp(log_scale)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scaled {
    pub mantissa: f64,
    pub log_scale: f64,
}

impl Scaled {
    pub fn value(self) -> f64 {
        if self.mantissa == 0.0 {
            0.0
        } else {
            self.mantissa * self.log_scale.exp()
        }
    }

    /// Natural log of the value, `-inf` for zero.
    pub fn ln(self) -> f64 {
        self.mantissa.ln() + self.log_scale
    }
}

/// Exact permanent by summing over all `q!` permutations.
pub fn perm_naive(m: &BeliefMatrix) -> Result<f64> {
    if m.q > NAIVE_MAX_Q {
        return Err(Error::CostGuard { q: m.q, limit: NAIVE_MAX_Q });
    }
    fn expand(m: &BeliefMatrix, row: usize, used: u32, prod: f64) -> f64 {
        if row == m.q {
            return prod;
        }
        (0..m.q)
            .filter(|&j| used & (1 << j) == 0)
            .map(|j| expand(m, row + 1, used | 1 << j, prod * m.get(row, j)))
            .sum()
    }
    if m.q == 0 {
        return Ok(1.0);
    }
    Ok(expand(m, 0, 0, 1.0))
}

/// Forward and backward sums over the subset trellis, with every stage
/// rescaled to sum to one.
#[derive(Clone, Debug)]
pub struct TrellisAccumulators {
    q: usize,
    /// Indexed by column bitmask.
    pub forward: Vec<f64>,
    pub backward: Vec<f64>,
    /// `forward_log[r]`: log of the factor dropped from every size-`r` forward value.
    pub forward_log: Vec<f64>,
    /// `backward_log[r]`: same for the size-`r` backward values.
    pub backward_log: Vec<f64>,
    /// Edge-weight multiplications performed by the two passes.
    pub multiplications: u64,
}

impl TrellisAccumulators {
    /// Runs the forward and backward passes.
    ///
    /// The forward pass starts from `forward(∅) = 1`, so the stage-0 edges
    /// are plain copies; the backward pass starts from `backward(full) = 1`
    /// and its last-stage edges are copies too. That leaves `q(2^q - 2)`
    /// multiplications in total.
    pub fn compute(m: &BeliefMatrix) -> Result<Self> {
        let q = m.q;
        if q > TRELLIS_MAX_Q {
            return Err(Error::CostGuard { q, limit: TRELLIS_MAX_Q });
        }
        let size = 1usize << q;
        let full = size - 1;
        let by_size = masks_by_size(q);
        let mut multiplications = 0u64;

        let mut forward = vec![0.0; size];
        let mut forward_log = vec![0.0; q + 1];
        forward[0] = 1.0;
        for r in 0..q {
            for &s in &by_size[r] {
                let f = forward[s];
                for j in 0..q {
                    if s & (1 << j) == 0 {
                        let w = m.get(r, j);
                        if r == 0 {
                            forward[s | 1 << j] += w;
                        } else {
                            forward[s | 1 << j] += f * w;
                            multiplications += 1;
                        }
                    }
                }
            }
            forward_log[r + 1] = forward_log[r] + rescale(&mut forward, &by_size[r + 1]);
        }

        let mut backward = vec![0.0; size];
        let mut backward_log = vec![0.0; q + 1];
        backward[full] = 1.0;
        for r in (0..q).rev() {
            for &s in &by_size[r] {
                let mut acc = 0.0;
                for j in 0..q {
                    if s & (1 << j) == 0 {
                        let w = m.get(r, j);
                        if r == q - 1 {
                            acc += w;
                        } else {
                            acc += w * backward[s | 1 << j];
                            multiplications += 1;
                        }
                    }
                }
                backward[s] = acc;
            }
            backward_log[r] = backward_log[r + 1] + rescale(&mut backward, &by_size[r]);
        }

        Ok(TrellisAccumulators {
            q,
            forward,
            backward,
            forward_log,
            backward_log,
            multiplications,
        })
    }

    pub fn permanent(&self) -> Scaled {
        Scaled {
            mantissa: self.forward[(1 << self.q) - 1],
            log_scale: self.forward_log[self.q],
        }
    }

    /// `perm(M_ij)` for every `(i, j)`. Row `i` shares one log scale.
    pub fn cofactors(&self) -> Cofactors {
        let q = self.q;
        let by_size = masks_by_size(q);
        let mut values = vec![0.0; q * q];
        let mut log_scales = vec![0.0; q];
        for i in 0..q {
            for &s in &by_size[i] {
                let f = self.forward[s];
                if f == 0.0 {
                    continue;
                }
                for j in 0..q {
                    if s & (1 << j) == 0 {
                        values[i * q + j] += f * self.backward[s | 1 << j];
                    }
                }
            }
            log_scales[i] = self.forward_log[i] + self.backward_log[i + 1];
        }
        Cofactors { q, values, log_scales }
    }
}

/// All first-order cofactor permanents of a matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Cofactors {
    q: usize,
    /// Row-major mantissas.
    pub values: Vec<f64>,
    /// One log scale per row.
    pub log_scales: Vec<f64>,
}

impl Cofactors {
    pub fn get(&self, i: usize, j: usize) -> Scaled {
        Scaled {
            mantissa: self.values[i * self.q + j],
            log_scale: self.log_scales[i],
        }
    }

    /// Unscaled values; may overflow or underflow for extreme inputs.
    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.q)
            .map(|i| (0..self.q).map(|j| self.get(i, j).value()).collect())
            .collect()
    }
}

fn masks_by_size(q: usize) -> Vec<Vec<usize>> {
    let mut by_size = vec![Vec::new(); q + 1];
    for s in 0..1usize << q {
        by_size[s.count_ones() as usize].push(s);
    }
    by_size
}

/// Divides the listed entries by their sum and returns the log of the sum.
fn rescale(values: &mut [f64], masks: &[usize]) -> f64 {
    let sum: f64 = masks.iter().map(|&s| values[s]).sum();
    if sum > 0.0 && sum.is_finite() {
        masks.iter().for_each(|&s| values[s] /= sum);
        sum.ln()
    } else {
        0.0
    }
}

/// Permanent via the forward pass of the subset trellis.
pub fn perm_trellis(m: &BeliefMatrix) -> Result<Scaled> {
    Ok(TrellisAccumulators::compute(m)?.permanent())
}

/// `perm(M_ij)` for all `i, j` from one forward-backward pass.
pub fn cofactor_permanents(m: &BeliefMatrix) -> Result<Cofactors> {
    Ok(TrellisAccumulators::compute(m)?.cofactors())
}

/// Constraint-node update for soft messages: outgoing `b_ij` is proportional
/// to `perm(A_ij)`, each row normalized to sum to one.
///
/// Returns [`Error::Contradiction`] when `perm(A) = 0` or an output row has
/// no mass.
pub fn constraint_update_soft(a: &BeliefMatrix) -> Result<BeliefMatrix> {
    let trellis = TrellisAccumulators::compute(a)?;
    if trellis.permanent().mantissa <= 0.0 {
        return Err(Error::Contradiction);
    }
    let cof = trellis.cofactors();
    let mut out = BeliefMatrix {
        q: a.q,
        entries: cof.values,
    };
    for row in out.entries.chunks(a.q) {
        if !(row.iter().sum::<f64>() > 0.0) {
            return Err(Error::Contradiction);
        }
    }
    out.normalize_rows();
    Ok(out)
}

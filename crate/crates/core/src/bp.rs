//! Soft belief propagation with permanent-based constraint updates.

use crate::erasure::edge_slots;
use crate::error::{Error, Result};
use crate::graph::{Codeword, FactorGraph, PartialGrid};
use crate::permanent::{constraint_update_soft, BeliefMatrix};
use crate::symbols::SymbolSet;

/// Per-variable channel posteriors, one probability vector of length `q`
/// per variable.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelPriors {
    q: usize,
    probs: Vec<f64>,
}

impl ChannelPriors {
    pub fn new(q: usize, vectors: Vec<Vec<f64>>) -> Result<Self> {
        let mut probs = Vec::with_capacity(vectors.len() * q);
        for (v, p) in vectors.iter().enumerate() {
            let sum: f64 = p.iter().sum();
            if p.len() != q || p.iter().any(|x| !(*x >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "prior of variable {v} is not a probability vector of length {q}"
                )));
            }
            probs.extend_from_slice(p);
        }
        Ok(ChannelPriors { q, probs })
    }

    /// Atomic vectors on received symbols, uniform on erased ones. Cells that
    /// are neither are uniform over their support.
    pub fn from_erasures(grid: &PartialGrid) -> Self {
        let q = grid.q();
        let probs = grid
            .cells()
            .iter()
            .flat_map(|cell| {
                let n = cell.len().max(1) as f64;
                (1..=q).map(move |s| if cell.contains(s) { 1.0 / n } else { 0.0 })
            })
            .collect();
        ChannelPriors { q, probs }
    }

    /// Posteriors of a q-ary symmetric channel that replaces the sent symbol
    /// by one of the other `q - 1` with total probability `flip`.
    pub fn symmetric(q: usize, received: &Codeword, flip: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&flip) {
            return Err(Error::InvalidParameter(format!("flip probability {flip} outside [0, 1]")));
        }
        let other = flip / (q - 1) as f64;
        let probs = received
            .symbols()
            .iter()
            .flat_map(|&r| (1..=q).map(move |s| if s == r { 1.0 - flip } else { other }))
            .collect();
        Ok(ChannelPriors { q, probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len() / self.q
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, v: usize) -> &[f64] {
        &self.probs[v * self.q..(v + 1) * self.q]
    }
}

/// Symbols with nonzero probability.
pub fn support(message: &[f64]) -> SymbolSet {
    SymbolSet::from_symbols(message.iter().enumerate().filter(|&(_, &p)| p > 0.0).map(|(s, _)| s + 1))
}

/// Product of `prior` and `incoming`, renormalized.
/// [`Error::Contradiction`] when the product vanishes.
pub fn variable_update_soft(prior: &[f64], incoming: &[&[f64]]) -> Result<Vec<f64>> {
    let mut out = prior.to_vec();
    for m in incoming {
        for (o, &x) in out.iter_mut().zip(m.iter()) {
            *o *= x;
        }
    }
    normalize(&mut out)?;
    Ok(out)
}

fn normalize(v: &mut [f64]) -> Result<()> {
    let sum: f64 = v.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::Contradiction);
    }
    v.iter_mut().for_each(|x| *x /= sum);
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SoftStatus {
    /// The hard decision is a codeword.
    Decoded,
    /// Messages stopped moving without reaching a codeword.
    Converged,
    MaxIterations,
    Contradiction,
}

#[derive(Clone, Debug)]
pub struct SoftDecodeResult {
    /// Row-major, `q` entries per variable.
    pub marginals: Vec<Vec<f64>>,
    /// Most likely symbol per variable, smallest symbol on ties.
    pub hard_decision: Codeword,
    pub status: SoftStatus,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct SoftConfig {
    pub max_iters: usize,
    /// Stop once no message moves by more than this.
    pub tol: f64,
}

impl Default for SoftConfig {
    fn default() -> Self {
        SoftConfig { max_iters: 50, tol: 1e-8 }
    }
}

/// Flooding belief propagation: every iteration updates all
/// variable-to-constraint messages, then all constraint-to-variable messages.
#[derive(Clone, Debug)]
pub struct SoftDecoder<'g> {
    graph: &'g FactorGraph,
    priors: ChannelPriors,
    slots: Vec<Vec<(usize, usize)>>,
    /// Constraint-to-variable messages, `q` values per edge `c * q + slot`.
    to_var: Vec<f64>,
    /// Variable-to-constraint messages.
    to_check: Vec<f64>,
    iterations: usize,
}

impl<'g> SoftDecoder<'g> {
    pub fn new(graph: &'g FactorGraph, priors: ChannelPriors) -> Result<Self> {
        if priors.len() != graph.num_vars() || priors.q != graph.q() {
            return Err(Error::InvalidParameter(format!(
                "{} priors over q={} do not match graph with {} variables over q={}",
                priors.len(),
                priors.q,
                graph.num_vars(),
                graph.q()
            )));
        }
        let q = graph.q();
        let edges = graph.constraints().len() * q;
        Ok(SoftDecoder {
            graph,
            priors,
            slots: edge_slots(graph),
            to_var: vec![1.0 / q as f64; edges * q],
            to_check: vec![1.0 / q as f64; edges * q],
            iterations: 0,
        })
    }

    fn message(buf: &[f64], q: usize, edge: usize) -> &[f64] {
        &buf[edge * q..(edge + 1) * q]
    }

    /// Constraint-to-variable message on edge `(c, slot)`.
    pub fn to_var(&self, c: usize, slot: usize) -> &[f64] {
        Self::message(&self.to_var, self.graph.q(), c * self.graph.q() + slot)
    }

    /// Variable-to-constraint message on edge `(c, slot)`.
    pub fn to_check(&self, c: usize, slot: usize) -> &[f64] {
        Self::message(&self.to_check, self.graph.q(), c * self.graph.q() + slot)
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// One flooding iteration; returns the largest absolute change of a
    /// constraint-to-variable message entry.
    pub fn step(&mut self) -> Result<f64> {
        let q = self.graph.q();
        for (v, slots) in self.slots.iter().enumerate() {
            for &(c, k) in slots {
                let others: Vec<&[f64]> = slots
                    .iter()
                    .filter(|&&(c2, _)| c2 != c)
                    .map(|&(c2, k2)| Self::message(&self.to_var, q, c2 * q + k2))
                    .collect();
                let msg = variable_update_soft(self.priors.get(v), &others)?;
                let e = c * q + k;
                self.to_check[e * q..(e + 1) * q].copy_from_slice(&msg);
            }
        }
        let mut delta: f64 = 0.0;
        for c in 0..self.graph.constraints().len() {
            let block = c * q * q..(c + 1) * q * q;
            let a = BeliefMatrix::new(q, self.to_check[block.clone()].to_vec())?;
            let b = constraint_update_soft(&a)?;
            for (old, &new) in self.to_var[block].iter_mut().zip(b.entries()) {
                delta = delta.max((*old - new).abs());
                *old = new;
            }
        }
        self.iterations += 1;
        Ok(delta)
    }

    pub fn marginals(&self) -> Result<Vec<Vec<f64>>> {
        let q = self.graph.q();
        self.slots
            .iter()
            .enumerate()
            .map(|(v, slots)| {
                let incoming: Vec<&[f64]> = slots
                    .iter()
                    .map(|&(c, k)| Self::message(&self.to_var, q, c * q + k))
                    .collect();
                variable_update_soft(self.priors.get(v), &incoming)
            })
            .collect()
    }

    pub fn run(&mut self, config: SoftConfig) -> SoftDecodeResult {
        let q = self.graph.q();
        let finish = |marginals: Vec<Vec<f64>>, status, iterations| {
            let hard = marginals
                .iter()
                .map(|m| {
                    // First maximum wins, i.e. the smallest symbol.
                    let mut best = 0;
                    for s in 1..m.len() {
                        if m[s] > m[best] {
                            best = s;
                        }
                    }
                    best + 1
                })
                .collect();
            SoftDecodeResult {
                marginals,
                hard_decision: Codeword::new(hard),
                status,
                iterations,
            }
        };
        let contradiction = |iterations| {
            let uniform = vec![vec![1.0 / q as f64; q]; self.graph.num_vars()];
            finish(uniform, SoftStatus::Contradiction, iterations)
        };
        loop {
            if self.iterations >= config.max_iters {
                return match self.marginals() {
                    Ok(m) => finish(m, SoftStatus::MaxIterations, self.iterations),
                    Err(_) => contradiction(self.iterations),
                };
            }
            let delta = match self.step() {
                Ok(d) => d,
                Err(_) => return contradiction(self.iterations),
            };
            let marginals = match self.marginals() {
                Ok(m) => m,
                Err(_) => return contradiction(self.iterations),
            };
            let result = finish(marginals, SoftStatus::Decoded, self.iterations);
            if self.graph.validate(&result.hard_decision).unwrap_or(false) {
                return result;
            }
            if delta < config.tol {
                return SoftDecodeResult {
                    status: SoftStatus::Converged,
                    ..result
                };
            }
        }
    }
}

/// Soft decoding with flooding belief propagation.
pub fn decode_soft(graph: &FactorGraph, priors: ChannelPriors, config: SoftConfig) -> Result<SoftDecodeResult> {
    Ok(SoftDecoder::new(graph, priors)?.run(config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_structure, Structure};

    #[test]
    fn variable_update_examples() {
        let atomic = [0.0, 0.0, 1.0, 0.0];
        let m = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(variable_update_soft(&atomic, &[&m]).unwrap(), atomic.to_vec());
        let uniform = [0.25; 4];
        let out = variable_update_soft(&uniform, &[&m]).unwrap();
        assert!(out.iter().zip(m).all(|(a, b)| (a - b).abs() < 1e-15));
        assert_eq!(
            variable_update_soft(&[0.5, 0.5, 0.0], &[&[0.5, 0.0, 0.5]]).unwrap(),
            vec![1.0, 0.0, 0.0]
        );
        assert_eq!(
            variable_update_soft(&[1.0, 0.0], &[&[0.0, 1.0]]),
            Err(Error::Contradiction)
        );
    }

    #[test]
    fn codeword_is_a_fixed_point() {
        let g = build_structure(Structure::Sudoku, 4).unwrap();
        let word = Codeword::new(vec![1, 2, 3, 4, 3, 4, 1, 2, 2, 1, 4, 3, 4, 3, 2, 1]);
        let priors = ChannelPriors::from_erasures(&PartialGrid::from_codeword(4, &word));
        let r = decode_soft(&g, priors, SoftConfig::default()).unwrap();
        assert_eq!(r.status, SoftStatus::Decoded);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.hard_decision, word);
    }

    #[test]
    fn forced_completion() {
        let g = build_structure(Structure::Latin, 3).unwrap();
        let mut grid = PartialGrid::erased(3, 9);
        grid.cells_mut()[0] = SymbolSet::singleton(1);
        grid.cells_mut()[1] = SymbolSet::singleton(2);
        let mut dec = SoftDecoder::new(&g, ChannelPriors::from_erasures(&grid)).unwrap();
        dec.step().unwrap();
        let m = dec.marginals().unwrap();
        assert!((m[2][2] - 1.0).abs() < 1e-12);
        assert_eq!(m[2][0], 0.0);
    }

    #[test]
    fn mismatched_priors_are_rejected() {
        let g = build_structure(Structure::Latin, 3).unwrap();
        let p = ChannelPriors::from_erasures(&PartialGrid::erased(3, 4));
        assert!(SoftDecoder::new(&g, p).is_err());
        assert!(ChannelPriors::new(2, vec![vec![0.5, 0.6]]).is_err());
    }

    #[test]
    fn symmetric_channel_decodes_a_single_flip() {
        let g = build_structure(Structure::Sudoku, 4).unwrap();
        let mut received = vec![1, 2, 3, 4, 3, 4, 1, 2, 2, 1, 4, 3, 4, 3, 2, 1];
        let sent = Codeword::new(received.clone());
        received[5] = 1;
        let priors = ChannelPriors::symmetric(4, &Codeword::new(received), 0.05).unwrap();
        let r = decode_soft(&g, priors, SoftConfig::default()).unwrap();
        assert_eq!(r.status, SoftStatus::Decoded);
        assert_eq!(r.hard_decision, sent);
        for m in &r.marginals {
            assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

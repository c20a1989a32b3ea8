//! Subset-message decoding for the q-ary erasure channel.
//!
//! On the erasure channel every message is uniform over its support, so
//! messages are kept as [`SymbolSet`]s. A constraint node receives a 0/1
//! incidence matrix (row `i` = set arriving on edge `i`) and keeps, for each
//! edge, the symbols that appear on some permutation consistent with the
//! rows. This is computed by drawing the subset trellis forward along allowed
//! edges and pruning whatever cannot reach the full set.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::graph::{FactorGraph, PartialGrid};
use crate::symbols::SymbolSet;

/// Largest `q` for the `2^q` loop of [`constraint_update_subsets_direct`].
pub const DIRECT_MAX_Q: usize = 12;
/// Largest `q` for the subset trellis.
pub const TRELLIS_MAX_Q: usize = 25;

/// Which constraint-node rule a message-passing decoder applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintRule {
    /// Surviving trellis edges: symbols on a permutation consistent with all
    /// rows, so each output row is a subset of its input row.
    Trellis,
    /// Symbols `j` for which the *other* rows can still be matched to the
    /// other columns; the output row ignores the input row on that edge.
    /// This is the support of the soft update `perm(A_ij)`.
    Extrinsic,
}

/// Reusable scratch space for the subset trellis.
#[derive(Clone, Debug)]
pub struct SubsetTrellis {
    q: usize,
    generation: u32,
    forward_mark: Vec<u32>,
    backward_mark: Vec<u32>,
    forward_states: Vec<Vec<u32>>,
    backward_states: Vec<Vec<u32>>,
    order: Vec<usize>,
}

impl SubsetTrellis {
    pub fn new(q: usize) -> Result<Self> {
        if q > TRELLIS_MAX_Q {
            return Err(Error::CostGuard { q, limit: TRELLIS_MAX_Q });
        }
        Ok(SubsetTrellis {
            q,
            generation: 0,
            forward_mark: vec![0; 1 << q],
            backward_mark: vec![0; 1 << q],
            forward_states: vec![Vec::new(); q + 1],
            backward_states: vec![Vec::new(); q + 1],
            order: Vec::with_capacity(q),
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Applies `rule` to the incidence rows, writing one set per row into
    /// `out`. Returns `false` when no permutation is consistent with `rows`;
    /// under [`ConstraintRule::Trellis`] every output row is then empty.
    pub fn update(&mut self, rows: &[SymbolSet], rule: ConstraintRule, out: &mut [SymbolSet]) -> bool {
        let q = self.q;
        assert_eq!(rows.len(), q);
        assert_eq!(out.len(), q);
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.forward_mark.iter_mut().for_each(|m| *m = 0);
            self.backward_mark.iter_mut().for_each(|m| *m = 0);
            self.generation = 1;
        }
        let gen = self.generation;
        let full = SymbolSet::full(q).0;

        // Stage order does not change the set of paths; narrow rows first
        // keeps the forward frontier small.
        self.order.clear();
        self.order.extend(0..q);
        self.order.sort_by_key(|&i| rows[i].len());

        for states in self.forward_states.iter_mut().chain(self.backward_states.iter_mut()) {
            states.clear();
        }
        self.forward_states[0].push(0);
        self.forward_mark[0] = gen;
        for r in 0..q {
            let row = rows[self.order[r]].0;
            let (done, rest) = self.forward_states.split_at_mut(r + 1);
            for &s in &done[r] {
                let mut free = row & !s & full;
                while free != 0 {
                    let bit = free & free.wrapping_neg();
                    free ^= bit;
                    let next = s | bit;
                    if self.forward_mark[next as usize] != gen {
                        self.forward_mark[next as usize] = gen;
                        rest[0].push(next);
                    }
                }
            }
        }

        self.backward_states[q].push(full);
        self.backward_mark[full as usize] = gen;
        for r in (0..q).rev() {
            let row = rows[self.order[r]].0;
            let (below, above) = self.backward_states.split_at_mut(r + 1);
            for &t in &above[0] {
                let mut present = row & t;
                while present != 0 {
                    let bit = present & present.wrapping_neg();
                    present ^= bit;
                    let prev = t & !bit;
                    if self.backward_mark[prev as usize] != gen {
                        self.backward_mark[prev as usize] = gen;
                        below[r].push(prev);
                    }
                }
            }
        }

        let consistent = self.forward_mark[full as usize] == gen;
        for r in 0..q {
            let i = self.order[r];
            let allowed = match rule {
                ConstraintRule::Trellis => rows[i].0,
                ConstraintRule::Extrinsic => full,
            };
            let mut acc = 0u32;
            for &s in &self.forward_states[r] {
                let mut free = allowed & !s & full & !acc;
                while free != 0 {
                    let bit = free & free.wrapping_neg();
                    free ^= bit;
                    if self.backward_mark[(s | bit) as usize] == gen {
                        acc |= bit;
                    }
                }
                if acc == allowed & full {
                    break;
                }
            }
            out[i] = SymbolSet(acc);
        }
        consistent
    }
}

/// Union rule: for each edge, remove every symbol covered by a
/// family of *other* rows whose union has as many symbols as the family has
/// rows. Loops over all `2^q` families.
pub fn constraint_update_subsets_direct(rows: &[SymbolSet]) -> Result<Vec<SymbolSet>> {
    let q = rows.len();
    if q > DIRECT_MAX_Q {
        return Err(Error::CostGuard { q, limit: DIRECT_MAX_Q });
    }
    let full = SymbolSet::full(q);
    let mut out = vec![full; q];
    for family in 1usize..(1 << q) {
        let union = (0..q)
            .filter(|&i| family & (1 << i) != 0)
            .fold(SymbolSet::EMPTY, |acc, i| acc | rows[i]);
        if union.len() == family.count_ones() as usize {
            for (i, o) in out.iter_mut().enumerate() {
                if family & (1 << i) == 0 {
                    o.0 &= !union.0;
                }
            }
        }
    }
    Ok(out)
}

/// Keeps, for each row, the symbols used by some permutation consistent with
/// every row. [`Error::Contradiction`] when there is none.
pub fn constraint_update_subsets_trellis(rows: &[SymbolSet]) -> Result<Vec<SymbolSet>> {
    let mut trellis = SubsetTrellis::new(rows.len())?;
    let mut out = vec![SymbolSet::EMPTY; rows.len()];
    if trellis.update(rows, ConstraintRule::Trellis, &mut out) {
        Ok(out)
    } else {
        Err(Error::Contradiction)
    }
}

/// Outcome of erasure decoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ErasureStatus {
    /// Every cell is a single symbol.
    Decoded,
    /// Fixed point with at least one undetermined cell.
    Stalled,
    /// Some cell lost all its candidates.
    Contradiction,
}

/// Constraint propagation to a fixed point, one constraint at a time.
///
/// Each visit replaces the cells of a constraint by their trellis update;
/// constraints touching a shrunken cell are queued again. Messages only
/// shrink, so this terminates, and the fixed point is the same as that of
/// flooding message passing with the trellis rule.
#[derive(Clone, Debug)]
pub struct Propagator<'g> {
    graph: &'g FactorGraph,
    trellis: SubsetTrellis,
    queue: VecDeque<usize>,
    queued: Vec<bool>,
    rows: Vec<SymbolSet>,
    out: Vec<SymbolSet>,
}

impl<'g> Propagator<'g> {
    pub fn new(graph: &'g FactorGraph) -> Result<Self> {
        let q = graph.q();
        Ok(Propagator {
            graph,
            trellis: SubsetTrellis::new(q)?,
            queue: VecDeque::with_capacity(graph.constraints().len()),
            queued: vec![false; graph.constraints().len()],
            rows: vec![SymbolSet::EMPTY; q],
            out: vec![SymbolSet::EMPTY; q],
        })
    }

    pub fn graph(&self) -> &'g FactorGraph {
        self.graph
    }

    fn enqueue(&mut self, c: usize) {
        if !self.queued[c] {
            self.queued[c] = true;
            self.queue.push_back(c);
        }
    }

    /// Propagates with every constraint scheduled.
    pub fn run(&mut self, grid: &mut PartialGrid) -> ErasureStatus {
        for c in 0..self.graph.constraints().len() {
            self.enqueue(c);
        }
        self.drain(grid)
    }

    /// Propagates after `cells` changed.
    pub fn run_from(&mut self, grid: &mut PartialGrid, cells: &[usize]) -> ErasureStatus {
        for &v in cells {
            for &c in self.graph.memberships(v) {
                self.enqueue(c);
            }
        }
        self.drain(grid)
    }

    fn drain(&mut self, grid: &mut PartialGrid) -> ErasureStatus {
        let graph = self.graph;
        while let Some(c) = self.queue.pop_front() {
            self.queued[c] = false;
            let vars = graph.constraint(c);
            for (row, &v) in self.rows.iter_mut().zip(vars) {
                *row = grid.cells()[v];
            }
            if !self.trellis.update(&self.rows, ConstraintRule::Trellis, &mut self.out) {
                for &v in vars {
                    grid.cells_mut()[v] = SymbolSet::EMPTY;
                }
                for c in self.queue.drain(..) {
                    self.queued[c] = false;
                }
                return ErasureStatus::Contradiction;
            }
            for k in 0..vars.len() {
                if self.out[k] != self.rows[k] {
                    let v = vars[k];
                    grid.cells_mut()[v] = self.out[k];
                    for &other in graph.memberships(v) {
                        if other != c {
                            self.enqueue(other);
                        }
                    }
                }
            }
        }
        if grid.is_complete() {
            ErasureStatus::Decoded
        } else {
            ErasureStatus::Stalled
        }
    }
}

/// Decodes an erasure observation (singleton = received, full set = erased)
/// by constraint propagation to a fixed point.
pub fn decode_erasure(graph: &FactorGraph, observed: &PartialGrid) -> Result<(PartialGrid, ErasureStatus)> {
    check_len(graph, observed)?;
    let mut grid = observed.clone();
    let status = Propagator::new(graph)?.run(&mut grid);
    Ok((grid, status))
}

fn check_len(graph: &FactorGraph, grid: &PartialGrid) -> Result<()> {
    if grid.len() != graph.num_vars() || grid.q() != graph.q() {
        return Err(Error::InvalidParameter(format!(
            "grid (q={}, N={}) does not match graph (q={}, N={})",
            grid.q(),
            grid.len(),
            graph.q(),
            graph.num_vars()
        )));
    }
    Ok(())
}

/// Position of each variable inside its constraints: `(constraint, slot)`.
pub(crate) fn edge_slots(graph: &FactorGraph) -> Vec<Vec<(usize, usize)>> {
    let mut slots = vec![Vec::new(); graph.num_vars()];
    for (c, vars) in graph.constraints().iter().enumerate() {
        for (k, &v) in vars.iter().enumerate() {
            slots[v].push((c, k));
        }
    }
    slots
}

/// Flooding subset message passing with explicit edge messages.
///
/// Each iteration first sends every variable-to-constraint message
/// (observation intersected with the messages from the *other*
/// constraints), then every constraint-to-variable message. Cells are the
/// observation intersected with all incoming constraint messages.
#[derive(Clone, Debug)]
pub struct FloodingErasureDecoder<'g> {
    graph: &'g FactorGraph,
    rule: ConstraintRule,
    slots: Vec<Vec<(usize, usize)>>,
    trellis: SubsetTrellis,
    observed: Vec<SymbolSet>,
    /// Constraint-to-variable messages, index `c * q + slot`.
    pub to_var: Vec<SymbolSet>,
    /// Variable-to-constraint messages, same indexing.
    pub to_check: Vec<SymbolSet>,
    iterations: usize,
    contradiction: bool,
}

impl<'g> FloodingErasureDecoder<'g> {
    pub fn new(graph: &'g FactorGraph, observed: &PartialGrid, rule: ConstraintRule) -> Result<Self> {
        check_len(graph, observed)?;
        let q = graph.q();
        let edges = graph.constraints().len() * q;
        Ok(FloodingErasureDecoder {
            graph,
            rule,
            slots: edge_slots(graph),
            trellis: SubsetTrellis::new(q)?,
            observed: observed.cells().to_vec(),
            to_var: vec![SymbolSet::full(q); edges],
            to_check: vec![SymbolSet::full(q); edges],
            iterations: 0,
            contradiction: false,
        })
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// One flooding iteration. Returns whether any constraint-to-variable
    /// message changed.
    pub fn step(&mut self) -> bool {
        let q = self.graph.q();
        for (v, slots) in self.slots.iter().enumerate() {
            for &(c, k) in slots {
                let msg = slots
                    .iter()
                    .filter(|&&(c2, _)| c2 != c)
                    .fold(self.observed[v], |acc, &(c2, k2)| acc & self.to_var[c2 * q + k2]);
                self.to_check[c * q + k] = msg;
            }
        }
        let mut changed = false;
        let mut out = vec![SymbolSet::EMPTY; q];
        for c in 0..self.graph.constraints().len() {
            let rows = &self.to_check[c * q..(c + 1) * q];
            if !self.trellis.update(rows, self.rule, &mut out) {
                self.contradiction = true;
            }
            for k in 0..q {
                if self.to_var[c * q + k] != out[k] {
                    self.to_var[c * q + k] = out[k];
                    changed = true;
                }
            }
        }
        self.iterations += 1;
        changed
    }

    pub fn cells(&self) -> PartialGrid {
        let q = self.graph.q();
        let cells = self
            .slots
            .iter()
            .enumerate()
            .map(|(v, slots)| {
                slots
                    .iter()
                    .fold(self.observed[v], |acc, &(c, k)| acc & self.to_var[c * q + k])
            })
            .collect();
        PartialGrid::new(q, cells)
    }

    pub fn status(&self) -> ErasureStatus {
        let cells = self.cells();
        if self.contradiction || cells.has_contradiction() {
            ErasureStatus::Contradiction
        } else if cells.is_complete() {
            ErasureStatus::Decoded
        } else {
            ErasureStatus::Stalled
        }
    }

    /// Iterates until no message changes or `max_iters` is reached.
    pub fn run(&mut self, max_iters: usize) -> (PartialGrid, ErasureStatus) {
        while self.iterations < max_iters && self.step() {}
        (self.cells(), self.status())
    }
}

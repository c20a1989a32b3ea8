//! Code structures as factor graphs.
//!
//! Every constraint of a [`FactorGraph`] ties exactly `q` variables together
//! and requires them to take pairwise distinct values, i.e. a permutation of
//! the alphabet `{1, ..., q}`. Square structures place variable `(i, j)` at
//! index `i * q + j`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::erasure::{ErasureStatus, Propagator};
use crate::error::{Error, Result};
use crate::symbols::{SymbolSet, MAX_Q};

/// Where a factor graph came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Structure {
    Latin,
    Sudoku,
    Pandiagonal,
    SemiPandiagonal,
    RandomRegular,
    Custom,
}

impl Structure {
    pub fn name(self) -> &'static str {
        match self {
            Structure::Latin => "latin",
            Structure::Sudoku => "sudoku",
            Structure::Pandiagonal => "pandiagonal",
            Structure::SemiPandiagonal => "semi_pandiagonal",
            Structure::RandomRegular => "random_regular",
            Structure::Custom => "custom",
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "latin" => Ok(Structure::Latin),
            "sudoku" => Ok(Structure::Sudoku),
            "pandiagonal" => Ok(Structure::Pandiagonal),
            "semi_pandiagonal" | "semipandiagonal" => Ok(Structure::SemiPandiagonal),
            "random_regular" => Ok(Structure::RandomRegular),
            "custom" => Ok(Structure::Custom),
            other => Err(Error::InvalidParameter(format!("unknown structure `{other}`"))),
        }
    }
}

/// A code defined by permutation constraints over an alphabet of size `q`.
///
/// Immutable once built; share it freely between threads.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactorGraph {
    q: usize,
    num_vars: usize,
    constraints: Vec<Vec<usize>>,
    memberships: Vec<Vec<usize>>,
    structure: Structure,
}

impl FactorGraph {
    /// Builds a graph from explicit constraint lists, checking that every
    /// constraint has exactly `q` distinct in-range variables.
    pub fn new(
        q: usize,
        num_vars: usize,
        constraints: Vec<Vec<usize>>,
        structure: Structure,
    ) -> Result<Self> {
        if !(2..=MAX_Q).contains(&q) {
            return Err(Error::InvalidParameter(format!(
                "alphabet size {q} outside 2..={MAX_Q}"
            )));
        }
        let mut memberships = vec![Vec::new(); num_vars];
        for (c, vars) in constraints.iter().enumerate() {
            if vars.len() != q {
                return Err(Error::InvalidParameter(format!(
                    "constraint {c} has degree {} instead of {q}",
                    vars.len()
                )));
            }
            for (k, &v) in vars.iter().enumerate() {
                if v >= num_vars {
                    return Err(Error::InvalidParameter(format!(
                        "constraint {c} references variable {v} >= {num_vars}"
                    )));
                }
                if vars[..k].contains(&v) {
                    return Err(Error::InvalidParameter(format!(
                        "constraint {c} repeats variable {v}"
                    )));
                }
                memberships[v].push(c);
            }
        }
        Ok(FactorGraph {
            q,
            num_vars,
            constraints,
            memberships,
            structure,
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn structure(&self) -> Structure {
        self.structure
    }

    pub fn constraints(&self) -> &[Vec<usize>] {
        &self.constraints
    }

    pub fn constraint(&self, c: usize) -> &[usize] {
        &self.constraints[c]
    }

    /// Constraints containing variable `v`, in ascending order.
    pub fn memberships(&self, v: usize) -> &[usize] {
        &self.memberships[v]
    }

    /// Variable degree `d_v`.
    pub fn var_degree(&self, v: usize) -> usize {
        self.memberships[v].len()
    }

    /// Checks that every constraint's variables form a permutation of `1..=q`.
    pub fn validate(&self, word: &Codeword) -> Result<bool> {
        if word.len() != self.num_vars {
            return Err(Error::InvalidParameter(format!(
                "codeword length {} does not match {} variables",
                word.len(),
                self.num_vars
            )));
        }
        if word.symbols().iter().any(|&s| s == 0 || s > self.q) {
            return Ok(false);
        }
        let full = SymbolSet::full(self.q);
        Ok(self.constraints.iter().all(|vars| {
            vars.iter()
                .fold(SymbolSet::EMPTY, |acc, &v| acc | SymbolSet::singleton(word[v]))
                == full
        }))
    }
}

/// Builds one of the named square structures over a `q x q` grid.
///
/// Constraints are emitted rows first, then columns, then subsquares or
/// broken diagonals. Right diagonals are `{(i, (j + i) mod q)}` and left
/// diagonals `{(i, (j - i - 1) mod q)}`, one of each family per `j`.
pub fn build_structure(kind: Structure, q: usize) -> Result<FactorGraph> {
    if q < 2 {
        return Err(Error::InvalidParameter(format!("alphabet size {q} < 2")));
    }
    let cell = |i: usize, j: usize| i * q + j;
    let mut constraints: Vec<Vec<usize>> = Vec::new();
    let latin = |constraints: &mut Vec<Vec<usize>>| {
        for i in 0..q {
            constraints.push((0..q).map(|j| cell(i, j)).collect());
        }
        for j in 0..q {
            constraints.push((0..q).map(|i| cell(i, j)).collect());
        }
    };
    let right_diagonals = |constraints: &mut Vec<Vec<usize>>| {
        for j in 0..q {
            constraints.push((0..q).map(|i| cell(i, (j + i) % q)).collect());
        }
    };
    match kind {
        Structure::Latin => latin(&mut constraints),
        Structure::Sudoku => {
            let side = (q as f64).sqrt().round() as usize;
            if side * side != q {
                return Err(Error::InvalidParameter(format!(
                    "sudoku needs a square alphabet size, got {q}"
                )));
            }
            latin(&mut constraints);
            for bi in 0..side {
                for bj in 0..side {
                    constraints.push(
                        (0..q)
                            .map(|k| cell(bi * side + k / side, bj * side + k % side))
                            .collect(),
                    );
                }
            }
        }
        Structure::SemiPandiagonal => {
            latin(&mut constraints);
            right_diagonals(&mut constraints);
        }
        Structure::Pandiagonal => {
            latin(&mut constraints);
            right_diagonals(&mut constraints);
            for j in 0..q {
                constraints.push(
                    (0..q)
                        .map(|i| cell(i, (j + 2 * q - i - 1) % q))
                        .collect(),
                );
            }
        }
        Structure::RandomRegular | Structure::Custom => {
            return Err(Error::InvalidParameter(format!(
                "`{kind}` is not a square structure"
            )))
        }
    }
    FactorGraph::new(q, q * q, constraints, kind)
}

/// Builds a random `(d_v, q)`-regular graph with the configuration model.
///
/// Sockets are shuffled and cut into constraints of size `q`; constraints
/// holding a variable twice are repaired by swapping sockets with other
/// constraints, for at most `100 * n_vars` passes.
pub fn build_random_regular(d_v: usize, q: usize, n_vars: usize, seed: u64) -> Result<FactorGraph> {
    if d_v == 0 || q < 2 || n_vars < q || (d_v * n_vars) % q != 0 {
        return Err(Error::InvalidParameter(format!(
            "need d_v >= 1, n_vars >= q and q | d_v * n_vars (d_v={d_v}, q={q}, n_vars={n_vars})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sockets: Vec<usize> = (0..n_vars).flat_map(|v| std::iter::repeat(v).take(d_v)).collect();
    sockets.shuffle(&mut rng);
    let n_checks = sockets.len() / q;
    let has_dup = |sockets: &[usize], c: usize| {
        let block = &sockets[c * q..(c + 1) * q];
        (1..q).any(|k| block[..k].contains(&block[k]))
    };
    let contains = |sockets: &[usize], c: usize, v: usize, skip: usize| {
        (c * q..(c + 1) * q).any(|p| p != skip && sockets[p] == v)
    };

    let max_passes = 100 * n_vars;
    let mut passes = 0;
    loop {
        let bad: Vec<usize> = (0..n_checks).filter(|&c| has_dup(&sockets, c)).collect();
        if bad.is_empty() {
            break;
        }
        if passes >= max_passes {
            return Err(Error::Construction(format!(
                "could not remove repeated memberships after {max_passes} passes"
            )));
        }
        passes += 1;
        for c in bad {
            for p in c * q..(c + 1) * q {
                let v = sockets[p];
                if !contains(&sockets, c, v, p) {
                    continue;
                }
                // Find a socket elsewhere whose variable fits here and vice versa.
                for _ in 0..4 * q {
                    let other = rng.gen_range(0..sockets.len());
                    let oc = other / q;
                    if oc == c {
                        continue;
                    }
                    let w = sockets[other];
                    if !contains(&sockets, c, w, p) && !contains(&sockets, oc, v, other) {
                        sockets.swap(p, other);
                        break;
                    }
                }
            }
        }
    }
    let constraints = sockets.chunks(q).map(|c| c.to_vec()).collect();
    FactorGraph::new(q, n_vars, constraints, Structure::RandomRegular)
}

/// A fully determined word over `1..=q`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Codeword(Vec<usize>);

impl Codeword {
    pub fn new(symbols: Vec<usize>) -> Self {
        Codeword(symbols)
    }

    pub fn symbols(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl std::ops::Index<usize> for Codeword {
    type Output = usize;
    fn index(&self, v: usize) -> &usize {
        &self.0[v]
    }
}

/// A word whose cells hold candidate sets. Singletons are determined cells,
/// full sets are erased cells.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PartialGrid {
    q: usize,
    cells: Vec<SymbolSet>,
}

impl PartialGrid {
    pub fn new(q: usize, cells: Vec<SymbolSet>) -> Self {
        PartialGrid { q, cells }
    }

    /// Every cell undetermined.
    pub fn erased(q: usize, n: usize) -> Self {
        PartialGrid {
            q,
            cells: vec![SymbolSet::full(q); n],
        }
    }

    pub fn from_codeword(q: usize, word: &Codeword) -> Self {
        PartialGrid {
            q,
            cells: word.symbols().iter().map(|&s| SymbolSet::singleton(s)).collect(),
        }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[SymbolSet] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [SymbolSet] {
        &mut self.cells
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(|c| c.is_singleton())
    }

    pub fn has_contradiction(&self) -> bool {
        self.cells.iter().any(|c| c.is_empty())
    }

    /// Whether `word` is consistent with every cell.
    pub fn contains(&self, word: &Codeword) -> bool {
        word.len() == self.len() && self.cells.iter().zip(word.symbols()).all(|(c, &s)| c.contains(s))
    }

    /// The codeword when all cells are singletons.
    pub fn to_codeword(&self) -> Option<Codeword> {
        self.cells
            .iter()
            .map(|c| c.is_singleton().then(|| c.first().unwrap()))
            .collect::<Option<Vec<_>>>()
            .map(Codeword)
    }

    /// Parses the grid text format: a header line `q N` followed by `N`
    /// whitespace-separated tokens; `1..=q` are symbols, `0` and `.` erasures.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace().peekable();
        let grid = Self::parse_tokens(&mut tokens)?;
        match tokens.next() {
            None => Ok(grid),
            Some(t) => Err(Error::Parse(format!("trailing token `{t}` after grid"))),
        }
    }

    /// Parses a sequence of grids written back to back.
    pub fn parse_many(text: &str) -> Result<Vec<Self>> {
        let mut tokens = text.split_whitespace().peekable();
        let mut grids = Vec::new();
        while tokens.peek().is_some() {
            grids.push(Self::parse_tokens(&mut tokens)?);
        }
        Ok(grids)
    }

    fn parse_tokens<'a, I: Iterator<Item = &'a str>>(tokens: &mut I) -> Result<Self> {
        let mut header = |what: &str| -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("missing {what} in header")))?
                .parse()
                .map_err(|_| Error::Parse(format!("bad {what} in header")))
        };
        let q = header("alphabet size")?;
        let n = header("length")?;
        if !(2..=MAX_Q).contains(&q) {
            return Err(Error::Parse(format!("alphabet size {q} outside 2..={MAX_Q}")));
        }
        let mut cells = Vec::with_capacity(n);
        for _ in 0..n {
            let t = tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("expected {n} cells, found {}", cells.len())))?;
            cells.push(match t {
                "0" | "." => SymbolSet::full(q),
                _ => match t.parse::<usize>() {
                    Ok(s) if (1..=q).contains(&s) => SymbolSet::singleton(s),
                    _ => return Err(Error::Parse(format!("bad cell token `{t}`"))),
                },
            });
        }
        Ok(PartialGrid { q, cells })
    }
}

impl fmt::Display for PartialGrid {
    /// Writes the grid text format, `q` tokens per line; any cell that is not
    /// a singleton is written as `0`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}", self.q, self.cells.len())?;
        for row in self.cells.chunks(self.q) {
            let line: Vec<String> = row
                .iter()
                .map(|c| if c.is_singleton() { c.first().unwrap().to_string() } else { "0".into() })
                .collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Result of [`count_codewords`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CodewordCount {
    pub count: u64,
    /// False when the enumeration stopped at the caller's limit.
    pub complete: bool,
}

/// Depth-first search over variables in index order with forward checking.
struct Search<'a> {
    graph: &'a FactorGraph,
    full: SymbolSet,
    used: Vec<SymbolSet>,
    assignment: Vec<usize>,
}

impl<'a> Search<'a> {
    fn new(graph: &'a FactorGraph) -> Self {
        Search {
            graph,
            full: SymbolSet::full(graph.q),
            used: vec![SymbolSet::EMPTY; graph.constraints.len()],
            assignment: vec![0; graph.num_vars],
        }
    }

    fn candidates(&self, v: usize) -> SymbolSet {
        let taken = self.graph.memberships[v]
            .iter()
            .fold(SymbolSet::EMPTY, |acc, &c| acc | self.used[c]);
        self.full & SymbolSet(!taken.0)
    }

    fn assign(&mut self, v: usize, s: usize) {
        self.assignment[v] = s;
        for &c in &self.graph.memberships[v] {
            self.used[c] |= SymbolSet::singleton(s);
        }
    }

    fn unassign(&mut self, v: usize, s: usize) {
        self.assignment[v] = 0;
        for &c in &self.graph.memberships[v] {
            self.used[c].0 &= !SymbolSet::singleton(s).0;
        }
    }

    /// Every later variable sharing a constraint with `v` keeps a candidate.
    fn forward_ok(&self, v: usize) -> bool {
        self.graph.memberships[v].iter().all(|&c| {
            self.graph.constraints[c]
                .iter()
                .all(|&w| w <= v || self.assignment[w] != 0 || !self.candidates(w).is_empty())
        })
    }

    fn visit(&mut self, v: usize, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        if v == self.graph.num_vars {
            return f(&self.assignment);
        }
        for s in self.candidates(v).iter() {
            self.assign(v, s);
            let keep_going = !self.forward_ok(v) || self.visit(v + 1, f);
            self.unassign(v, s);
            if !keep_going {
                return false;
            }
        }
        true
    }

    fn count(&mut self, v: usize, limit: u64, found: &mut u64) -> bool {
        if v == self.graph.num_vars {
            *found += 1;
            return *found < limit;
        }
        if self.assignment[v] != 0 {
            return self.count(v + 1, limit, found);
        }
        for s in self.candidates(v).iter() {
            self.assign(v, s);
            let keep_going = !self.forward_ok(v) || self.count(v + 1, limit, found);
            self.unassign(v, s);
            if !keep_going {
                return false;
            }
        }
        true
    }
}

/// Counts the codewords of `graph` exactly, stopping once at least `limit`
/// codewords have been accounted for.
///
/// Relabeling the alphabet maps codewords to codewords, so the search pins
/// the first constraint to `1, 2, ..., q` and multiplies by `q!`. A capped
/// count is therefore a multiple of `q!`.
pub fn count_codewords(graph: &FactorGraph, limit: Option<u64>) -> CodewordCount {
    let orbit: u64 = if graph.constraints.is_empty() { 1 } else { (1..=graph.q as u64).product() };
    let limit = limit.map_or(u64::MAX, |l| l.div_ceil(orbit));
    if limit == 0 {
        return CodewordCount { count: 0, complete: false };
    }
    let mut search = Search::new(graph);
    if let Some(first) = graph.constraints.first() {
        for (k, &v) in first.iter().enumerate() {
            search.assign(v, k + 1);
        }
    }
    let mut found = 0;
    // Hitting the limit exactly on the last codeword still leaves the search unfinished.
    let complete = search.count(0, limit, &mut found);
    CodewordCount { count: found.saturating_mul(orbit), complete }
}

/// Lists codewords in lexicographic order, at most `limit` of them.
pub fn enumerate_codewords(graph: &FactorGraph, limit: usize) -> Vec<Codeword> {
    let mut words = Vec::new();
    if limit > 0 {
        Search::new(graph).visit(0, &mut |a| {
            words.push(Codeword(a.to_vec()));
            words.len() < limit
        });
    }
    words
}

/// Draws a random codeword. Deterministic given `seed`; the distribution is
/// not uniform.
pub fn sample_codeword(graph: &FactorGraph, seed: u64) -> Result<Codeword> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_codeword_with(graph, &mut rng)
}

/// Random codeword by propagate-and-branch search: values are tried in a
/// shuffled order at the undetermined cell with fewest candidates.
pub fn sample_codeword_with<R: Rng>(graph: &FactorGraph, rng: &mut R) -> Result<Codeword> {
    fn descend<R: Rng>(prop: &mut Propagator, grid: &mut PartialGrid, cells: &[usize], rng: &mut R) -> bool {
        match prop.run_from(grid, cells) {
            ErasureStatus::Contradiction => false,
            ErasureStatus::Decoded => true,
            ErasureStatus::Stalled => {
                let v = (0..grid.len())
                    .filter(|&v| grid.cells()[v].len() > 1)
                    .min_by_key(|&v| grid.cells()[v].len())
                    .unwrap();
                let mut values: Vec<usize> = grid.cells()[v].iter().collect();
                values.shuffle(rng);
                for s in values {
                    let mut child = grid.clone();
                    child.cells_mut()[v] = SymbolSet::singleton(s);
                    if descend(prop, &mut child, &[v], rng) {
                        *grid = child;
                        return true;
                    }
                }
                false
            }
        }
    }
    let mut prop = Propagator::new(graph)?;
    let mut grid = PartialGrid::erased(graph.q, graph.num_vars);
    let all: Vec<usize> = (0..graph.num_vars).collect();
    if descend(&mut prop, &mut grid, &all, rng) {
        Ok(grid.to_codeword().expect("decoded grid is complete"))
    } else {
        Err(Error::Construction(format!(
            "{} graph with q={} has no codeword",
            graph.structure, graph.q
        )))
    }
}

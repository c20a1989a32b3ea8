//! Monte Carlo block-error simulation on the q-ary erasure channel.
//!
//! Each codeword is reused for a fixed number of erasure patterns. Work is
//! split into fixed-size batches of codewords, each with its own random
//! stream, so the output depends on the seed but not on the worker count.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::erasure::{ErasureStatus, Propagator};
use crate::error::{Error, Result};
use crate::graph::{build_structure, sample_codeword_with, FactorGraph, PartialGrid, Structure};
use crate::symbols::SymbolSet;

/// Codewords decoded between two checks of the stopping rule.
const BATCH: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub structure: Structure,
    pub q: usize,
    pub eps: Vec<f64>,
    pub min_codewords: usize,
    pub min_block_errors: u64,
    /// A point stops after this many trials even if short of block errors.
    pub max_trials: u64,
    pub patterns_per_codeword: usize,
    pub seed: u64,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
}

impl SimConfig {
    pub fn new(structure: Structure, q: usize, eps: Vec<f64>, seed: u64) -> Self {
        SimConfig {
            structure,
            q,
            eps,
            min_codewords: 100,
            min_block_errors: 100,
            max_trials: 10_000_000,
            patterns_per_codeword: 100,
            seed,
            workers: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.eps.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::InvalidParameter("erasure probabilities must lie in [0, 1]".into()));
        }
        if self.min_block_errors == 0 || self.patterns_per_codeword == 0 || self.max_trials == 0 {
            return Err(Error::InvalidParameter(
                "min block errors, patterns per codeword and max trials must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimRecord {
    pub eps: f64,
    pub trials: u64,
    pub block_errors: u64,
    /// Cells not resolved to the transmitted symbol.
    pub symbol_errors: u64,
    pub stalled: u64,
    pub contradictions: u64,
    pub codewords: u64,
    pub block_length: usize,
    pub seconds: f64,
}

impl SimRecord {
    pub fn bler(&self) -> f64 {
        ratio(self.block_errors, self.trials)
    }

    pub fn ser(&self) -> f64 {
        ratio(self.symbol_errors, self.trials * self.block_length as u64)
    }

    fn absorb(&mut self, other: &SimRecord) {
        self.trials += other.trials;
        self.block_errors += other.block_errors;
        self.symbol_errors += other.symbol_errors;
        self.stalled += other.stalled;
        self.contradictions += other.contradictions;
        self.codewords += other.codewords;
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub const CSV_HEADER: &str = "eps,trials,block_errors,bler,symbol_errors,ser,stalled,contradictions,seconds";

/// Writes the header and one row per record. The wall-clock column is the
/// only field that varies between identical runs.
pub fn write_csv<W: Write>(mut out: W, records: &[SimRecord], with_time: bool) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        let seconds = if with_time { format!("{:.3}", r.seconds) } else { "0".into() };
        writeln!(
            out,
            "{},{},{},{:.6e},{},{:.6e},{},{},{}",
            r.eps,
            r.trials,
            r.block_errors,
            r.bler(),
            r.symbol_errors,
            r.ser(),
            r.stalled,
            r.contradictions,
            seconds
        )?;
    }
    Ok(())
}

/// Parses `start:stop:step` (inclusive of `stop` up to rounding) or a
/// comma-separated list.
pub fn parse_eps_grid(text: &str) -> Result<Vec<f64>> {
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad erasure probability {s:?}")))
    };
    let parts: Vec<&str> = text.split(':').collect();
    let grid = match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !(step > 0.0) || stop < start {
                return Err(Error::Parse(format!("bad grid {text:?}")));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| round_grid(start + i as f64 * step)).collect()
        }
        [_] => text.split(',').map(num).collect::<Result<Vec<_>>>()?,
        _ => return Err(Error::Parse(format!("bad grid {text:?}"))),
    };
    if grid.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(Error::Parse("erasure probabilities must lie in [0, 1]".into()));
    }
    Ok(grid)
}

fn round_grid(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

fn batch_rng(seed: u64, point: usize, batch: usize, slot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 40) | ((batch * BATCH + slot) as u64));
    rng
}

/// Decodes one erasure pattern of `word`, adding the outcome to `rec`.
fn trial(prop: &mut Propagator, word: &[usize], eps: f64, rng: &mut ChaCha8Rng, rec: &mut SimRecord) {
    let q = prop.graph().q();
    let cells = word
        .iter()
        .map(|&s| {
            if rng.gen::<f64>() < eps {
                SymbolSet::full(q)
            } else {
                SymbolSet::singleton(s)
            }
        })
        .collect();
    let mut grid = PartialGrid::new(q, cells);
    let status = prop.run(&mut grid);
    rec.trials += 1;
    let wrong = grid
        .cells()
        .iter()
        .zip(word)
        .filter(|&(c, &s)| *c != SymbolSet::singleton(s))
        .count() as u64;
    rec.symbol_errors += wrong;
    match status {
        ErasureStatus::Decoded => {}
        ErasureStatus::Stalled => {
            rec.block_errors += 1;
            rec.stalled += 1;
        }
        ErasureStatus::Contradiction => {
            rec.block_errors += 1;
            rec.contradictions += 1;
        }
    }
}

fn codeword_block(graph: &FactorGraph, eps: f64, patterns: usize, mut rng: ChaCha8Rng) -> Result<SimRecord> {
    let word = sample_codeword_with(graph, &mut rng)?.into_inner();
    let mut prop = Propagator::new(graph)?;
    let mut rec = SimRecord { codewords: 1, ..SimRecord::default() };
    for _ in 0..patterns {
        trial(&mut prop, &word, eps, &mut rng, &mut rec);
    }
    Ok(rec)
}

/// Simulates one erasure probability on `graph`. `point` selects the random
/// streams, so different points are independent. At `eps = 0` no block
/// error can occur, so the point ends after the minimum number of codewords.
pub fn simulate_point(graph: &FactorGraph, eps: f64, point: usize, config: &SimConfig) -> Result<SimRecord> {
    let start = Instant::now();
    let mut total = SimRecord { eps, block_length: graph.num_vars(), ..SimRecord::default() };
    let mut batch = 0;
    loop {
        let enough_errors = total.block_errors >= config.min_block_errors || eps == 0.0;
        let done = total.codewords as usize >= config.min_codewords && enough_errors;
        if done || total.trials >= config.max_trials {
            break;
        }
        let parts: Vec<Result<SimRecord>> = (0..BATCH)
            .into_par_iter()
            .map(|slot| codeword_block(graph, eps, config.patterns_per_codeword, batch_rng(config.seed, point, batch, slot)))
            .collect();
        for part in parts {
            total.absorb(&part?);
        }
        batch += 1;
    }
    total.seconds = start.elapsed().as_secs_f64();
    Ok(total)
}

/// Runs every point of the grid in order.
pub fn simulate_erasure(config: &SimConfig) -> Result<Vec<SimRecord>> {
    config.validate()?;
    let graph = build_structure(config.structure, config.q)?;
    let run = || -> Result<Vec<SimRecord>> {
        config
            .eps
            .iter()
            .enumerate()
            .map(|(i, &eps)| simulate_point(&graph, eps, i, config))
            .collect()
    };
    if config.workers == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .install(run)
    }
}

//! Universal encoder for codes with local constraints.
//!
//! Encoding starts from an empty grid. Erasure propagation removes values
//! that are locally impossible; the first undetermined cell (in scan order)
//! with `k > 1` candidates gets one of them, picked by an arithmetic decoder
//! that turns source bits into a uniform `k`-ary choice. The loop repeats
//! until the grid is complete.
//!
//! Propagation is not exact, so a cell can run out of candidates halfway
//! through. That is an encoding failure. The coder is then rewound to where
//! the codeword started and encoding restarts. Every attempt except the
//! last keeps the last candidate of its first draw in reserve; a retry plays
//! the reserved candidates of earlier attempts without reading any bits,
//! which tells the receiver how many attempts were made.
//!
//! The coder works on exact rationals. `C = [lo, hi)` is the interval of
//! source values consistent with the choices so far; `D = [p / 2^m,
//! (p + 1) / 2^m)` is the dyadic interval spanned by the bits read so far.
//! Bits are read only until `D` fits inside one of the `k` equal parts of
//! `C`. Whenever `C` lies inside one half of the unit interval, both
//! intervals are doubled so the numbers stay small.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::erasure::{ErasureStatus, Propagator};
use crate::error::{Error, Result};
use crate::graph::{Codeword, FactorGraph, PartialGrid};
use crate::symbols::SymbolSet;

/// A source of bits addressed by position, so the coder can rewind.
pub trait BitSource {
    fn bit(&mut self, index: usize) -> Option<bool>;
}

impl BitSource for [bool] {
    fn bit(&mut self, index: usize) -> Option<bool> {
        self.get(index).copied()
    }
}

impl BitSource for Vec<bool> {
    fn bit(&mut self, index: usize) -> Option<bool> {
        self.get(index).copied()
    }
}

/// Unbounded stream of pseudorandom bits, cached so it can be replayed.
#[derive(Clone, Debug)]
pub struct RandomBits {
    rng: ChaCha8Rng,
    cache: Vec<bool>,
}

impl RandomBits {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RandomBits { rng, cache: Vec::new() }
    }

    /// Bits generated so far.
    pub fn generated(&self) -> &[bool] {
        &self.cache
    }
}

impl BitSource for RandomBits {
    fn bit(&mut self, index: usize) -> Option<bool> {
        while self.cache.len() <= index {
            let word: u64 = self.rng.gen();
            self.cache.extend((0..64).map(|i| word >> i & 1 == 1));
        }
        Some(self.cache[index])
    }
}

fn rational(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Arithmetic-decoder state converting source bits into uniform choices.
#[derive(Clone, Debug, PartialEq)]
pub struct CoderState {
    lo: BigRational,
    hi: BigRational,
    /// Numerator of `D`'s left end in the current frame.
    dyadic: BigInt,
    /// `D` has width `2^-level` in the current frame.
    level: u32,
    cursor: usize,
}

impl Default for CoderState {
    fn default() -> Self {
        CoderState {
            lo: BigRational::zero(),
            hi: BigRational::one(),
            dyadic: BigInt::zero(),
            level: 0,
            cursor: 0,
        }
    }
}

impl CoderState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Position of the next unread source bit.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn interval(&self) -> (&BigRational, &BigRational) {
        (&self.lo, &self.hi)
    }

    /// `[p / 2^m, (p + 1) / 2^m)`
    pub fn dyadic_interval(&self) -> (BigRational, BigRational) {
        let scale = BigInt::one() << self.level;
        (
            BigRational::new(self.dyadic.clone(), scale.clone()),
            BigRational::new(&self.dyadic + 1, scale),
        )
    }

    /// Width of `C` relative to the current frame.
    pub fn width(&self) -> BigRational {
        &self.hi - &self.lo
    }

    fn rescale(&mut self) {
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        loop {
            let two = rational(2);
            if self.hi <= half {
                self.lo = &self.lo * &two;
                self.hi = &self.hi * &two;
            } else if self.lo >= half {
                self.lo = &self.lo * &two - rational(1);
                self.hi = &self.hi * &two - rational(1);
                self.dyadic -= BigInt::one() << (self.level - 1);
            } else {
                return;
            }
            // D lies inside C, hence inside the same half, so level >= 1.
            self.level -= 1;
        }
    }
}

/// Uniform choice in `0..k`, reading source bits only while the bits read so
/// far do not determine the choice.
pub fn draw_uniform<S: BitSource + ?Sized>(state: &mut CoderState, source: &mut S, k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::InvalidParameter("cannot draw from zero candidates".into()));
    }
    if k == 1 {
        return Ok(0);
    }
    let part = state.width() / rational(k as i64);
    loop {
        let (d_lo, d_hi) = state.dyadic_interval();
        let index = ((&d_lo - &state.lo) / &part)
            .floor()
            .to_integer()
            .to_usize()
            .expect("D lies inside C")
            .min(k - 1);
        let part_hi = &state.lo + &part * rational(index as i64 + 1);
        if d_hi <= part_hi {
            state.lo = &state.lo + &part * rational(index as i64);
            state.hi = part_hi;
            state.rescale();
            return Ok(index);
        }
        let bit = source.bit(state.cursor).ok_or(Error::SourceExhausted(state.cursor))?;
        state.cursor += 1;
        state.level += 1;
        state.dyadic = (&state.dyadic << 1) + BigInt::from(bit as u8);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    /// Attempts allowed per codeword, including the first.
    pub max_attempts: usize,
    /// Order in which undetermined cells are picked; index order when `None`.
    pub scan_order: Option<Vec<usize>>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { max_attempts: 3, scan_order: None }
    }
}

impl EncoderConfig {
    pub fn with_max_attempts(max_attempts: usize) -> Self {
        EncoderConfig { max_attempts, scan_order: None }
    }

    fn validate(&self, graph: &FactorGraph) -> Result<()> {
        if self.max_attempts == 0 {
            return Err(Error::InvalidParameter("max_attempts must be at least 1".into()));
        }
        if let Some(order) = &self.scan_order {
            let mut seen = vec![false; graph.num_vars()];
            for &v in order {
                if v >= seen.len() || std::mem::replace(&mut seen[v], true) {
                    return Err(Error::InvalidParameter("scan order is not a permutation".into()));
                }
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::InvalidParameter("scan order is not a permutation".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodeResult {
    pub codeword: Codeword,
    /// Source bits consumed by the successful attempt.
    pub bits_consumed: usize,
    /// Attempt that succeeded, starting at 1.
    pub attempts: usize,
    /// Number of choices offered at each draw of the successful attempt.
    pub draws: Vec<usize>,
}

impl EncodeResult {
    /// `sum(log2 k_t) / (N log2 q)`.
    pub fn rate(&self, q: usize) -> f64 {
        let info: f64 = self.draws.iter().map(|&k| (k as f64).log2()).sum();
        info / (self.codeword.len() as f64 * (q as f64).log2())
    }
}

/// Walks decision points: propagate, then hand the first undetermined cell
/// to `choose`, which returns the value to assign.
fn walk<F>(graph: &FactorGraph, order: &[usize], mut choose: F) -> Result<std::result::Result<PartialGrid, PartialGrid>>
where
    F: FnMut(usize, usize, SymbolSet) -> Result<usize>,
{
    let mut prop = Propagator::new(graph)?;
    let mut grid = PartialGrid::erased(graph.q(), graph.num_vars());
    let mut status = prop.run(&mut grid);
    let mut decision = 0;
    loop {
        match status {
            ErasureStatus::Contradiction => return Ok(Err(grid)),
            ErasureStatus::Decoded => return Ok(Ok(grid)),
            ErasureStatus::Stalled => {}
        }
        let v = *order
            .iter()
            .find(|&&v| grid.cells()[v].len() > 1)
            .expect("a stalled grid has an undetermined cell");
        decision += 1;
        let value = choose(decision, v, grid.cells()[v])?;
        grid.cells_mut()[v] = SymbolSet::singleton(value);
        status = prop.run_from(&mut grid, &[v]);
    }
}

fn scan_order(graph: &FactorGraph, config: &EncoderConfig) -> Vec<usize> {
    config
        .scan_order
        .clone()
        .unwrap_or_else(|| (0..graph.num_vars()).collect())
}

/// Encodes source bits into one codeword, continuing from `state`.
///
/// On success `state` has advanced past the bits used. On a hard failure
/// (every attempt failed) `state` is left where it was.
pub fn encode_codeword<S: BitSource + ?Sized>(
    graph: &FactorGraph,
    source: &mut S,
    state: &mut CoderState,
    config: &EncoderConfig,
) -> Result<EncodeResult> {
    config.validate(graph)?;
    let order = scan_order(graph, config);
    let start = state.clone();
    for attempt in 1..=config.max_attempts {
        *state = start.clone();
        let mut draws = Vec::new();
        let reserve = attempt < config.max_attempts;
        let outcome = walk(graph, &order, |decision, _, candidates| {
            let k = candidates.len();
            let last = candidates.nth(k - 1).unwrap();
            if decision < attempt {
                return Ok(last);
            }
            let offered = if decision == attempt && reserve { k - 1 } else { k };
            let index = draw_uniform(state, source, offered)?;
            draws.push(offered);
            Ok(candidates.nth(index).unwrap())
        })?;
        if let Ok(grid) = outcome {
            return Ok(EncodeResult {
                codeword: grid.to_codeword().expect("decoded grid is complete"),
                bits_consumed: state.cursor - start.cursor,
                attempts: attempt,
                draws,
            });
        }
    }
    *state = start;
    Err(Error::EncodingFailure(config.max_attempts))
}

type Interval = (BigRational, BigRational);

fn intersect(a: &Interval, b: &Interval) -> Option<Interval> {
    let lo = if a.0 > b.0 { &a.0 } else { &b.0 };
    let hi = if a.1 < b.1 { &a.1 } else { &b.1 };
    (lo < hi).then(|| (lo.clone(), hi.clone()))
}

/// Sub-intervals of `region` on which attempt `attempt` ends in a
/// contradiction, when the coder starts that attempt from `start`.
fn failing_leaves(
    graph: &FactorGraph,
    order: &[usize],
    attempt: usize,
    start: &Interval,
    region: &Interval,
) -> Result<Vec<Interval>> {
    struct Dfs<'a, 'g> {
        prop: Propagator<'g>,
        order: &'a [usize],
        attempt: usize,
        leaves: Vec<Interval>,
    }

    impl Dfs<'_, '_> {
        fn visit(&mut self, grid: PartialGrid, status: ErasureStatus, decision: usize, c: &Interval, region: &Interval) {
            match status {
                ErasureStatus::Contradiction => return self.leaves.push(region.clone()),
                ErasureStatus::Decoded => return,
                ErasureStatus::Stalled => {}
            }
            let v = *self.order.iter().find(|&&v| grid.cells()[v].len() > 1).expect("stalled grid");
            let candidates = grid.cells()[v];
            let k = candidates.len();
            let decision = decision + 1;
            let branch = |this: &mut Self, value: usize, c: &Interval, region: &Interval| {
                let mut next = grid.clone();
                next.cells_mut()[v] = SymbolSet::singleton(value);
                let status = this.prop.run_from(&mut next, &[v]);
                this.visit(next, status, decision, c, region);
            };
            if decision < self.attempt {
                return branch(self, candidates.nth(k - 1).unwrap(), c, region);
            }
            // Every failing attempt keeps its first draw's last candidate in reserve.
            let offered = if decision == self.attempt { k - 1 } else { k };
            let part = (&c.1 - &c.0) / rational(offered as i64);
            for i in 0..offered {
                let lo = &c.0 + &part * rational(i as i64);
                let sub = (lo.clone(), lo + &part);
                if let Some(r) = intersect(&sub, region) {
                    branch(self, candidates.nth(i).unwrap(), &sub, &r);
                }
            }
        }
    }

    let mut dfs = Dfs { prop: Propagator::new(graph)?, order, attempt, leaves: Vec::new() };
    let mut grid = PartialGrid::erased(graph.q(), graph.num_vars());
    let status = dfs.prop.run(&mut grid);
    dfs.visit(grid, status, 0, start, region);
    Ok(dfs.leaves)
}

/// Sub-intervals of `region` on which attempts `1..attempts` all fail.
fn retry_region(
    graph: &FactorGraph,
    order: &[usize],
    attempts: usize,
    start: &Interval,
    region: Interval,
) -> Result<Vec<Interval>> {
    let mut regions = vec![region];
    for attempt in 1..attempts {
        let mut next = Vec::new();
        for r in &regions {
            next.extend(failing_leaves(graph, order, attempt, start, r)?);
        }
        regions = next;
    }
    Ok(regions)
}

/// Receiver side of the arithmetic coder: narrows `C` by the observed
/// choices and emits every bit all points of `C` agree on.
///
/// A codeword produced by attempt `a > 1` also says that attempts
/// `1..a` failed on the source. Points of `C` where they would not fail are
/// excluded from the flush, so that re-encoding the flushed bits makes the
/// same retries.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceRecovery {
    lo: BigRational,
    hi: BigRational,
    bits: Vec<bool>,
    /// Union of intervals the source must lie in, when narrower than `C`.
    allowed: Option<Vec<Interval>>,
}

impl Default for SourceRecovery {
    fn default() -> Self {
        SourceRecovery {
            lo: BigRational::zero(),
            hi: BigRational::one(),
            bits: Vec::new(),
            allowed: None,
        }
    }
}

impl SourceRecovery {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bits determined so far.
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    fn refine(&mut self, k: usize, index: usize) {
        if k <= 1 {
            return;
        }
        let part = (&self.hi - &self.lo) / rational(k as i64);
        self.lo = &self.lo + &part * rational(index as i64);
        self.hi = &self.lo + &part;
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        loop {
            let bit = if self.hi <= half {
                false
            } else if self.lo >= half {
                true
            } else {
                return;
            };
            self.bits.push(bit);
            let map = |x: &BigRational| x * rational(2) - rational(bit as i64);
            self.lo = map(&self.lo);
            self.hi = map(&self.hi);
            for (a, b) in self.allowed.iter_mut().flatten() {
                *a = map(a);
                *b = map(b);
            }
        }
    }

    /// `(lo, hi)` of a frame expressed in the coordinates after the bits
    /// emitted since it was saved.
    fn reframe(&self, frame: &Interval, emitted_before: usize) -> Interval {
        let mut frame = frame.clone();
        for &bit in &self.bits[emitted_before..] {
            let map = |x: &BigRational| x * rational(2) - rational(bit as i64);
            frame = (map(&frame.0), map(&frame.1));
        }
        frame
    }

    /// Replays the encoder on `codeword`, returning the attempt it came from.
    pub fn push_codeword(&mut self, graph: &FactorGraph, codeword: &Codeword, config: &EncoderConfig) -> Result<usize> {
        config.validate(graph)?;
        if codeword.len() != graph.num_vars() {
            return Err(Error::InvalidParameter("codeword length does not match graph".into()));
        }
        let order = scan_order(graph, config);
        let start = (self.lo.clone(), self.hi.clone());
        let emitted_before = self.bits.len();
        let saved = self.clone();
        let mut attempts = 1;
        let mut in_prefix = true;
        let outcome = walk(graph, &order, |decision, v, candidates| {
            let value = codeword[v];
            let position = candidates.position(value).ok_or_else(|| {
                Error::Replay(format!("value {value} at cell {v} is not among {candidates:?}"))
            })?;
            let k = candidates.len();
            if in_prefix && decision == attempts {
                if attempts < config.max_attempts {
                    if position == k - 1 {
                        attempts += 1;
                        return Ok(value);
                    }
                    in_prefix = false;
                    self.refine(k - 1, position);
                    return Ok(value);
                }
                in_prefix = false;
            }
            self.refine(k, position);
            Ok(value)
        });
        let result = match outcome {
            Err(e) => Err(e),
            Ok(Ok(grid)) if grid.contains(codeword) => self.restrict_to_retries(graph, &order, attempts, &start, emitted_before),
            Ok(Ok(_)) => Err(Error::Replay("propagation completed a different codeword".into())),
            Ok(Err(_)) => Err(Error::Replay("replay ran into a contradiction".into())),
        };
        if result.is_err() {
            *self = saved;
        }
        result.map(|()| attempts)
    }

    fn restrict_to_retries(
        &mut self,
        graph: &FactorGraph,
        order: &[usize],
        attempts: usize,
        start: &Interval,
        emitted_before: usize,
    ) -> Result<()> {
        if attempts == 1 {
            return Ok(());
        }
        let start = self.reframe(start, emitted_before);
        let current = (self.lo.clone(), self.hi.clone());
        let regions = retry_region(graph, order, attempts, &start, current.clone())?;
        let previous = self.allowed.take().unwrap_or_else(|| vec![current.clone()]);
        let allowed: Vec<Interval> = previous
            .iter()
            .filter_map(|p| intersect(p, &current))
            .flat_map(|p| regions.iter().filter_map(move |r| intersect(&p, r)))
            .collect();
        if allowed.is_empty() {
            return Err(Error::Replay(format!(
                "the codeword needs {attempts} attempts, but the earlier attempts cannot fail here"
            )));
        }
        self.allowed = Some(allowed);
        Ok(())
    }

    /// Appends bits selecting a dyadic interval inside the admissible part
    /// of `C` and returns all bits. Encoding them reproduces the same
    /// choices and retries.
    ///
    /// The final attempt of the last codeword stops reading at the first
    /// dyadic ancestor lying inside `C`, so that ancestor is made as short as
    /// possible first; failed attempts may read further. Without retries
    /// this is the shortest, then leftmost, dyadic interval inside `C`.
    pub fn finish(mut self) -> Vec<bool> {
        let current = (self.lo.clone(), self.hi.clone());
        let regions = match self.allowed.take() {
            None => vec![current.clone()],
            Some(allowed) => allowed.iter().filter_map(|a| intersect(a, &current)).collect(),
        };
        assert!(!regions.is_empty(), "the source lies in an admissible interval");
        let (n, p) = flush_interval(&current, &regions);
        for i in (0..n).rev() {
            self.bits.push(p.bit(i as u64));
        }
        self.bits
    }
}

/// Level `n` and numerator `p` of the flushed dyadic interval.
fn flush_interval(c: &Interval, regions: &[Interval]) -> (u32, BigInt) {
    let mut n = 0u32;
    loop {
        let scale = BigRational::from_integer(BigInt::one() << n);
        let width = BigRational::new(BigInt::one(), BigInt::one() << n);
        let inside_lo = (&c.0 * &scale).ceil().to_integer();
        let inside_hi = (&c.1 * &scale).floor().to_integer();
        // Shortest, then leftmost.
        let mut best: Option<(u32, BigRational, BigInt)> = None;
        for r in regions {
            let mut p = std::cmp::max(inside_lo.clone(), (&r.0 * &scale).floor().to_integer());
            let end = std::cmp::min(inside_hi.clone(), (&r.1 * &scale).ceil().to_integer());
            while &p + 1 <= end {
                let lo = BigRational::from_integer(p.clone()) / &scale;
                let ancestor = (lo.clone(), lo + &width);
                if let Some(target) = intersect(&ancestor, r) {
                    let (m, q) = shortest_dyadic(&target);
                    let left = BigRational::new(q.clone(), BigInt::one() << m);
                    if best.as_ref().map_or(true, |b| (m, &left) < (b.0, &b.1)) {
                        best = Some((m, left, q));
                    }
                }
                p += 1;
            }
        }
        if let Some((m, _, q)) = best {
            return (m, q);
        }
        n += 1;
    }
}

/// Smallest `n`, then smallest `p`, with `[p / 2^n, (p + 1) / 2^n)` inside `c`.
fn shortest_dyadic(c: &Interval) -> (u32, BigInt) {
    let mut n = 0u32;
    loop {
        let scale = BigRational::from_integer(BigInt::one() << n);
        let p = (&c.0 * &scale).ceil();
        if &p + rational(1) <= &c.1 * &scale {
            return (n, p.to_integer());
        }
        n += 1;
    }
}
/// Recovers the source bits behind a single codeword, flushing the tail.
pub fn recover_source(graph: &FactorGraph, codeword: &Codeword, config: &EncoderConfig) -> Result<(Vec<bool>, usize)> {
    let mut recovery = SourceRecovery::new();
    let attempts = recovery.push_codeword(graph, codeword, config)?;
    Ok((recovery.finish(), attempts))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderStats {
    pub trials: usize,
    /// Fraction of trials whose first attempt failed.
    pub failure_prob_first_attempt: f64,
    /// Trials where every attempt failed.
    pub hard_failures: usize,
    /// Mean rate over successful encodings.
    pub mean_rate: f64,
    /// Mean attempt number over successful encodings.
    pub mean_attempts: f64,
}

/// Monte Carlo over independent pseudorandom sources, one stream per trial.
pub fn estimate_encoder_stats(graph: &FactorGraph, trials: usize, seed: u64, config: &EncoderConfig) -> Result<EncoderStats> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    config.validate(graph)?;
    let results: Vec<Result<Option<(usize, f64)>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut source = RandomBits::new(seed, t as u64);
            let mut state = CoderState::new();
            match encode_codeword(graph, &mut source, &mut state, config) {
                Ok(r) => Ok(Some((r.attempts, r.rate(graph.q())))),
                Err(Error::EncodingFailure(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut first_failures = 0;
    let mut hard_failures = 0;
    let mut rate_sum = 0.0;
    let mut attempt_sum = 0;
    for r in results {
        match r? {
            Some((attempts, rate)) => {
                first_failures += (attempts > 1) as usize;
                rate_sum += rate;
                attempt_sum += attempts;
            }
            None => {
                first_failures += 1;
                hard_failures += 1;
            }
        }
    }
    let successes = (trials - hard_failures).max(1) as f64;
    Ok(EncoderStats {
        trials,
        failure_prob_first_attempt: first_failures as f64 / trials as f64,
        hard_failures,
        mean_rate: rate_sum / successes,
        mean_attempts: attempt_sum as f64 / successes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_structure, Structure};

    fn bits(s: &str) -> Vec<bool> {
        s.chars().map(|c| c == '1').collect()
    }

    #[test]
    fn draw_examples() {
        let mut st = CoderState::new();
        assert_eq!(draw_uniform(&mut st, &mut bits(""), 1).unwrap(), 0);
        assert_eq!(st.cursor(), 0);

        let mut st = CoderState::new();
        let mut src = bits("10111");
        assert_eq!(draw_uniform(&mut st, &mut src, 4).unwrap(), 2);
        assert_eq!(st.cursor(), 2);

        let mut st = CoderState::new();
        let mut src = bits("0110");
        assert_eq!(draw_uniform(&mut st, &mut src, 3).unwrap(), 1);
        assert_eq!(st.cursor(), 3);
        let (lo, hi) = st.interval();
        assert_eq!((lo.clone(), hi.clone()), (BigRational::new(1.into(), 3.into()), BigRational::new(2.into(), 3.into())));

        let mut st = CoderState::new();
        assert_eq!(
            draw_uniform(&mut st, &mut bits("01"), 3),
            Err(Error::SourceExhausted(2))
        );
    }

    #[test]
    fn dyadic_interval_stays_inside_choice_interval() {
        let mut src = RandomBits::new(5, 0);
        let mut st = CoderState::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let k = rng.gen_range(1..12);
            let i = draw_uniform(&mut st, &mut src, k).unwrap();
            assert!(i < k);
            let (lo, hi) = st.interval();
            let (dlo, dhi) = st.dyadic_interval();
            assert!(*lo <= dlo && dhi <= *hi);
            assert!(lo < hi && *lo >= BigRational::zero() && *hi <= BigRational::one());
        }
    }

    #[test]
    fn sudoku_walkthrough() {
        // "10" picks index 2 of 4; C rescales back to [0, 1), then "11" picks
        // index 2 of the remaining {1, 2, 4}.
        let g = build_structure(Structure::Sudoku, 4).unwrap();
        let config = EncoderConfig::with_max_attempts(1);
        let mut src = bits("1011");
        let mut tail = RandomBits::new(1, 0);
        src.extend((0..400).map(|i| tail.bit(i).unwrap()));
        let mut st = CoderState::new();
        let r = encode_codeword(&g, &mut src, &mut st, &config).unwrap();
        assert_eq!(&r.codeword.symbols()[..2], &[3, 4]);
        assert_eq!(&r.draws[..2], &[4, 3]);
        assert!(g.validate(&r.codeword).unwrap());

        let (recovered, attempts) = recover_source(&g, &r.codeword, &config).unwrap();
        assert_eq!(attempts, 1);
        assert_eq!(&recovered[..4], &bits("1011")[..]);
    }

    #[test]
    fn reserved_first_candidate_signals_a_retry() {
        let g = build_structure(Structure::Sudoku, 4).unwrap();
        let config = EncoderConfig::default();
        // A codeword starting with 4 (the reserved value) must be a retry,
        // but on this code the first attempt never fails.
        let word = Codeword::new(vec![4, 1, 2, 3, 2, 3, 4, 1, 1, 4, 3, 2, 3, 2, 1, 4]);
        assert!(g.validate(&word).unwrap());
        let mut recovery = SourceRecovery::new();
        assert!(matches!(recovery.push_codeword(&g, &word, &config), Err(Error::Replay(_))));
        assert_eq!(recovery, SourceRecovery::new());
        assert_eq!(recover_source(&g, &word, &EncoderConfig::with_max_attempts(1)).unwrap().1, 1);
    }

    #[test]
    fn retried_codeword_flush_repeats_the_failure() {
        let g = build_structure(Structure::Sudoku, 9).unwrap();
        let config = EncoderConfig::default();
        // Source 61 of seed 5 fails its first attempt and needs bits past
        // the plain flush of the second attempt's interval to do so.
        let first = encode_codeword(&g, &mut RandomBits::new(5, 61), &mut CoderState::new(), &config).unwrap();
        assert_eq!(first.attempts, 2);
        let (bits, attempts) = recover_source(&g, &first.codeword, &config).unwrap();
        assert_eq!(attempts, 2);
        let again = encode_codeword(&g, &mut bits.clone(), &mut CoderState::new(), &config).unwrap();
        assert_eq!((again.codeword, again.attempts), (first.codeword, 2));
        // The final attempt stops at 68 bits; the failed one reads on to 70.
        assert_eq!((again.bits_consumed, bits.len()), (68, 70));
        let info: f64 = again.draws.iter().map(|&k| (k as f64).log2()).sum();
        assert!(again.bits_consumed as f64 <= info + 2.0);
    }

    #[test]
    fn replay_rejects_non_codewords() {
        let g = build_structure(Structure::Latin, 3).unwrap();
        let bad = Codeword::new(vec![1, 1, 2, 3, 2, 1, 2, 3, 1]);
        assert!(matches!(
            recover_source(&g, &bad, &EncoderConfig::default()),
            Err(Error::Replay(_))
        ));
    }
}

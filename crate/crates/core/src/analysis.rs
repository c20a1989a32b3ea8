//! Rate estimates and erasure-channel thresholds for regular ensembles.
//!
//! All rates are fractions of `log q` bits per symbol unless a function says
//! otherwise.
//!
//! Density evolution tracks only the cardinality of each message. Given its
//! cardinality, a message is taken to be a uniform subset containing the
//! transmitted symbol. Constraint outputs come from the exact subset trellis
//! applied to sampled incidence rows.

use num::bigint::BigUint;
use num::ToPrimitive;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::erasure::{ConstraintRule, SubsetTrellis};
use crate::error::{Error, Result};
use crate::symbols::{SymbolSet, MAX_Q};

/// `sum_{k=2}^{n} log2 k`, summed term by term.
pub fn log2_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).log2()).sum()
}

/// `log2 m` for an arbitrary-precision integer.
pub fn log2_biguint(m: &BigUint) -> f64 {
    let bits = m.bits();
    if bits <= 64 {
        return (m.to_u64().unwrap() as f64).log2();
    }
    let shift = bits - 64;
    let top = (m >> shift).to_u64().unwrap() as f64;
    top.log2() + shift as f64
}

/// Rate of a code whose factor graph is an infinite tree of degree-`q`
/// permutation constraints: `log_q((q-1)!) / (q-1)`.
pub fn cycle_free_rate(q: usize) -> f64 {
    if q < 2 {
        return 0.0;
    }
    log2_factorial(q - 1) / (q as f64).log2() / (q - 1) as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetheRate {
    pub bits_per_symbol: f64,
    /// `bits_per_symbol / log2 q`.
    pub fraction: f64,
}

/// `max(0, (d_v / q) log2 q! - (d_v - 1) log2 q)`.
pub fn bethe_rate_estimate(q: usize, d_v: usize) -> BetheRate {
    let log_q = (q as f64).log2();
    let bits = (d_v as f64 / q as f64 * log2_factorial(q) - (d_v as f64 - 1.0) * log_q).max(0.0);
    BetheRate {
        bits_per_symbol: bits,
        fraction: if q > 1 { bits / log_q } else { 0.0 },
    }
}

/// `log_q(M) / N` for a code with `M` codewords of length `N`.
pub fn combinatorial_rate(count: &BigUint, n: usize, q: usize) -> Result<f64> {
    if count.bits() == 0 {
        return Err(Error::InvalidParameter("codeword count must be at least 1".into()));
    }
    if n == 0 || q < 2 {
        return Err(Error::InvalidParameter("need n >= 1 and q >= 2".into()));
    }
    Ok(log2_biguint(count) / (q as f64).log2() / n as f64)
}

/// Probability vector over message cardinalities `1..=q` (index `k - 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct CardinalityDistribution(Vec<f64>);

impl CardinalityDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("cardinality probabilities must be nonnegative and sum to 1".into()));
        }
        Ok(CardinalityDistribution(probs))
    }

    /// Channel output: a singleton w.p. `1 - eps`, the full set w.p. `eps`.
    pub fn channel(q: usize, eps: f64) -> Self {
        let mut probs = vec![0.0; q];
        probs[0] = 1.0 - eps;
        probs[q - 1] += eps;
        CardinalityDistribution(probs)
    }

    pub fn from_counts(q: usize, cards: &[u8]) -> Self {
        let mut probs = vec![0.0; q];
        for &c in cards {
            probs[c as usize - 1] += 1.0;
        }
        let n = cards.len().max(1) as f64;
        probs.iter_mut().for_each(|p| *p /= n);
        CardinalityDistribution(probs)
    }

    pub fn q(&self) -> usize {
        self.0.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    /// Probability that the message is not a singleton.
    pub fn erasure(&self) -> f64 {
        1.0 - self.0[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleParams {
    pub q: usize,
    pub d_v: usize,
    pub population_size: usize,
    pub max_de_iters: usize,
    /// Bisection stops once the bracket is this narrow.
    pub resolution: f64,
    /// Non-singleton fraction counted as decoded.
    pub target: f64,
    /// Iterations without a new low (by more than 1%) before giving up.
    pub stall_window: usize,
    /// Independent bisections; more than one yields a bootstrap interval.
    pub replicates: usize,
}

impl EnsembleParams {
    pub fn new(q: usize, d_v: usize) -> Self {
        EnsembleParams {
            q,
            d_v,
            population_size: 100_000,
            max_de_iters: 500,
            resolution: 1e-3,
            target: 1e-4,
            stall_window: 50,
            replicates: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.q < 2 || self.q > MAX_Q {
            return Err(Error::InvalidParameter(format!("q must lie in 2..={MAX_Q}")));
        }
        if self.d_v < 2 {
            return Err(Error::InvalidParameter("d_v must be at least 2".into()));
        }
        if self.population_size == 0 || self.max_de_iters == 0 || self.replicates == 0 {
            return Err(Error::InvalidParameter("population, iterations and replicates must be positive".into()));
        }
        if !(self.resolution > 0.0) || !(self.target > 0.0) {
            return Err(Error::InvalidParameter("resolution and target must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of density evolution at one erasure probability.
#[derive(Clone, Debug, PartialEq)]
pub struct DeRun {
    pub eps: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Non-singleton fraction of variable-to-constraint messages, starting
    /// with the channel alone.
    pub trajectory: Vec<f64>,
}

struct StopRule<'a> {
    params: &'a EnsembleParams,
    best: f64,
    since_best: usize,
}

impl StopRule<'_> {
    /// `Some(converged)` once the run is decided.
    fn observe(&mut self, erasure: f64, iteration: usize) -> Option<bool> {
        if erasure < self.params.target {
            return Some(true);
        }
        if erasure < 0.99 * self.best {
            self.best = erasure;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        if self.since_best >= self.params.stall_window || iteration >= self.params.max_de_iters {
            return Some(false);
        }
        None
    }
}

fn evolve<F>(params: &EnsembleParams, eps: f64, mut step: F) -> DeRun
where
    F: FnMut(usize) -> f64,
{
    let mut rule = StopRule { params, best: f64::INFINITY, since_best: 0 };
    let mut trajectory = vec![eps];
    let mut iteration = 0;
    let mut converged = eps < params.target;
    if !converged {
        loop {
            iteration += 1;
            let e = step(iteration);
            trajectory.push(e);
            if let Some(c) = rule.observe(e, iteration) {
                converged = c;
                break;
            }
        }
    }
    DeRun { eps, converged, iterations: iteration, trajectory }
}

const CHUNK: usize = 4096;

/// Uniform subset of size `k` containing `truth`, using `scratch` as the
/// list of the other symbols.
fn random_subset(rng: &mut ChaCha8Rng, scratch: &mut [usize], truth: usize, k: usize) -> SymbolSet {
    let (chosen, _) = scratch.partial_shuffle(rng, k - 1);
    let mut set = SymbolSet::singleton(truth + 1);
    for &s in chosen.iter() {
        set |= SymbolSet::singleton(s + 1);
    }
    set
}

fn others(q: usize, truth: usize) -> Vec<usize> {
    (0..q).filter(|&s| s != truth).collect()
}

/// Population dynamics at a single erasure probability.
pub fn de_run(params: &EnsembleParams, eps: f64, seed: u64) -> Result<DeRun> {
    params.validate()?;
    let (q, d_v, n) = (params.q, params.d_v, params.population_size);
    let stream = |iteration: usize, half: usize, chunk: usize| -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((iteration as u64) << 33) | ((half as u64) << 32) | chunk as u64);
        rng
    };
    let mut init = stream(0, 0, 0);
    let mut var_pop: Vec<u8> = (0..n)
        .map(|_| if init.gen::<f64>() < eps { q as u8 } else { 1 })
        .collect();
    let mut check_pop = vec![0u8; n];

    Ok(evolve(params, eps, |iteration| {
        check_pop.par_chunks_mut(CHUNK).enumerate().for_each(|(chunk, out)| {
            let mut rng = stream(iteration, 0, chunk);
            let mut trellis = SubsetTrellis::new(q).expect("q checked");
            let mut rows = vec![SymbolSet::full(q); q];
            let mut result = vec![SymbolSet::default(); q];
            let mut scratch: Vec<Vec<usize>> = (0..q).map(|t| others(q, t)).collect();
            for slot in out.iter_mut() {
                for (i, row) in rows.iter_mut().enumerate().take(q - 1) {
                    let k = var_pop[rng.gen_range(0..n)] as usize;
                    *row = random_subset(&mut rng, &mut scratch[i], i, k);
                }
                rows[q - 1] = SymbolSet::full(q);
                trellis.update(&rows, ConstraintRule::Extrinsic, &mut result);
                *slot = result[q - 1].len() as u8;
            }
        });
        let check_ref = &check_pop;
        var_pop.par_chunks_mut(CHUNK).enumerate().for_each(|(chunk, out)| {
            let mut rng = stream(iteration, 1, chunk);
            let mut scratch = others(q, 0);
            for slot in out.iter_mut() {
                let mut set = if rng.gen::<f64>() < eps {
                    SymbolSet::full(q)
                } else {
                    SymbolSet::singleton(1)
                };
                for _ in 1..d_v {
                    if set.is_singleton() {
                        break;
                    }
                    let k = check_ref[rng.gen_range(0..n)] as usize;
                    set &= random_subset(&mut rng, &mut scratch, 0, k);
                }
                *slot = set.len() as u8;
            }
        });
        var_pop.iter().filter(|&&c| c > 1).count() as f64 / n as f64
    }))
}

/// Largest `q` handled by [`exact_de_run`].
pub const EXACT_DE_MAX_Q: usize = 5;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// All subsets containing `truth`, with the probability of drawing each
/// under `dist`.
fn weighted_subsets(dist: &[f64], truth: usize) -> Vec<(SymbolSet, f64)> {
    let q = dist.len();
    (0u32..1 << q)
        .filter(|m| m >> truth & 1 == 1)
        .map(|m| {
            let k = m.count_ones() as usize;
            (SymbolSet(m), dist[k - 1] / binomial(q - 1, k - 1))
        })
        .filter(|&(_, w)| w > 0.0)
        .collect()
}

fn for_each_product(choices: &[Vec<(SymbolSet, f64)>], f: &mut dyn FnMut(&[SymbolSet], f64)) {
    fn rec(choices: &[Vec<(SymbolSet, f64)>], picked: &mut Vec<SymbolSet>, w: f64, f: &mut dyn FnMut(&[SymbolSet], f64)) {
        if picked.len() == choices.len() {
            f(picked, w);
            return;
        }
        for &(s, p) in &choices[picked.len()] {
            picked.push(s);
            rec(choices, picked, w * p, f);
            picked.pop();
        }
    }
    rec(choices, &mut Vec::with_capacity(choices.len()), 1.0, f);
}

fn exact_check_update(var: &[f64], trellis: &mut SubsetTrellis) -> Vec<f64> {
    let q = var.len();
    let choices: Vec<_> = (0..q - 1).map(|i| weighted_subsets(var, i)).collect();
    let mut out = vec![0.0; q];
    let mut rows = vec![SymbolSet::full(q); q];
    let mut result = vec![SymbolSet::default(); q];
    for_each_product(&choices, &mut |picked, w| {
        rows[..q - 1].copy_from_slice(picked);
        trellis.update(&rows, ConstraintRule::Extrinsic, &mut result);
        out[result[q - 1].len() - 1] += w;
    });
    out
}

/// Rounding drift in the mass is amplified by the products above, so every
/// update is renormalized.
fn normalize(mut dist: Vec<f64>) -> Vec<f64> {
    let sum: f64 = dist.iter().sum();
    dist.iter_mut().for_each(|p| *p /= sum);
    dist
}

fn exact_var_update(check: &[f64], eps: f64, d_v: usize) -> Vec<f64> {
    let q = check.len();
    let choices: Vec<_> = (1..d_v).map(|_| weighted_subsets(check, 0)).collect();
    let mut out = vec![0.0; q];
    out[0] = 1.0 - eps;
    for_each_product(&choices, &mut |picked, w| {
        let set = picked.iter().fold(SymbolSet::full(q), |a, &b| a & b);
        out[set.len() - 1] += eps * w;
    });
    out
}

/// Density evolution on the cardinality distributions themselves, by
/// enumerating every incidence pattern. Deterministic; `q <= 5`.
pub fn exact_de_run(params: &EnsembleParams, eps: f64) -> Result<DeRun> {
    params.validate()?;
    if params.q > EXACT_DE_MAX_Q {
        return Err(Error::CostGuard { q: params.q, limit: EXACT_DE_MAX_Q });
    }
    let mut trellis = SubsetTrellis::new(params.q)?;
    let mut var = CardinalityDistribution::channel(params.q, eps).0;
    Ok(evolve(params, eps, |_| {
        let check = normalize(exact_check_update(&var, &mut trellis));
        var = normalize(exact_var_update(&check, eps, params.d_v));
        var[1..].iter().sum()
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Threshold {
    pub theta: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Every density-evolution run made, in order.
    pub runs: Vec<(f64, bool)>,
}

fn bisect<F>(resolution: f64, mut converges: F) -> Result<(f64, f64, Vec<(f64, bool)>)>
where
    F: FnMut(f64) -> Result<bool>,
{
    let mut runs = Vec::new();
    let (mut lo, mut hi) = (0.0, 1.0);
    for eps in [lo, hi] {
        let c = converges(eps)?;
        runs.push((eps, c));
        if c != (eps == lo) {
            return Err(Error::Analysis(format!("no threshold bracket: run at eps={eps} gave converged={c}")));
        }
    }
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        let c = converges(mid)?;
        runs.push((mid, c));
        if c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, hi, runs))
}

/// BP threshold by bisection over population-dynamics runs.
///
/// A single replicate reports the final bisection bracket as its interval.
/// With several replicates (seeds `seed, seed + 1, ...`) the interval is a
/// 95% percentile bootstrap of their mean, widened by half the resolution.
pub fn de_threshold(params: &EnsembleParams, seed: u64) -> Result<Threshold> {
    params.validate()?;
    if !(3..=8).contains(&params.q) {
        return Err(Error::InvalidParameter("thresholds are supported for 3 <= q <= 8".into()));
    }
    let mut thetas = Vec::new();
    let mut all_runs = Vec::new();
    let mut bracket = (0.0, 1.0);
    for r in 0..params.replicates {
        let s = seed.wrapping_add(r as u64);
        let (lo, hi, runs) = bisect(params.resolution, |eps| Ok(de_run(params, eps, s)?.converged))?;
        thetas.push(0.5 * (lo + hi));
        all_runs.extend(runs);
        bracket = (lo, hi);
    }
    let theta = thetas.iter().sum::<f64>() / thetas.len() as f64;
    let (ci_lo, ci_hi) = if thetas.len() == 1 {
        bracket
    } else {
        let (a, b) = bootstrap_mean_interval(&thetas, seed);
        (a - 0.5 * params.resolution, b + 0.5 * params.resolution)
    };
    Ok(Threshold { theta, ci_lo, ci_hi, runs: all_runs })
}

/// Threshold from [`exact_de_run`]; the interval is the bisection bracket.
pub fn exact_de_threshold(params: &EnsembleParams) -> Result<Threshold> {
    let (lo, hi, runs) = bisect(params.resolution, |eps| Ok(exact_de_run(params, eps)?.converged))?;
    Ok(Threshold { theta: 0.5 * (lo + hi), ci_lo: lo, ci_hi: hi, runs })
}

fn bootstrap_mean_interval(values: &[f64], seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb007);
    let mut means: Vec<f64> = (0..2000)
        .map(|_| (0..values.len()).map(|_| values[rng.gen_range(0..values.len())]).sum::<f64>() / values.len() as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    (means[49], means[1949])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_free_rates() {
        let table = [0.6845, 0.5692, 0.5063, 0.4656, 0.4365, 0.4143];
        for (q, expect) in (3..=8).zip(table) {
            assert!((1.0 - cycle_free_rate(q) - expect).abs() < 5e-5, "q={q}");
        }
        assert_eq!(cycle_free_rate(2), 0.0);
    }

    #[test]
    fn bethe_rates() {
        for q in 2..=11 {
            assert_eq!(bethe_rate_estimate(q, 3).bits_per_symbol, 0.0, "q={q}");
        }
        let r = bethe_rate_estimate(12, 3);
        assert!((r.bits_per_symbol - 0.038_938_807_076_5).abs() < 1e-9);
        assert!((r.fraction - r.bits_per_symbol / 12f64.log2()).abs() < 1e-15);
    }

    #[test]
    fn combinatorial_rates() {
        let m9: BigUint = "6670903752021072936960".parse().unwrap();
        assert!((combinatorial_rate(&m9, 81, 9).unwrap() - 0.2824).abs() < 1e-4);
        let semi = BigUint::from(489_300u64 * 362_880);
        assert!((combinatorial_rate(&semi, 81, 9).unwrap() - 0.1455).abs() < 1e-4);
        assert!((combinatorial_rate(&BigUint::from(12u32), 9, 3).unwrap() - 0.2513).abs() < 1e-4);
        assert!(combinatorial_rate(&BigUint::from(0u32), 9, 3).is_err());
    }

    fn permutations(q: usize) -> Vec<Vec<usize>> {
        if q == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(q - 1) {
            for pos in 0..q {
                let mut p = p.clone();
                p.insert(pos, q - 1);
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn exact_check_update_matches_permutation_enumeration() {
        for (q, var) in [(3, vec![0.5, 0.3, 0.2]), (4, vec![0.1, 0.2, 0.3, 0.4])] {
            let perms = permutations(q);
            let choices: Vec<_> = (0..q - 1).map(|i| weighted_subsets(&var, i)).collect();
            let mut expect = vec![0.0; q];
            for_each_product(&choices, &mut |rows, w| {
                let mut out = SymbolSet::default();
                for p in &perms {
                    if rows.iter().enumerate().all(|(i, r)| r.contains(p[i] + 1)) {
                        out |= SymbolSet::singleton(p[q - 1] + 1);
                    }
                }
                expect[out.len() - 1] += w;
            });
            let got = exact_check_update(&var, &mut SubsetTrellis::new(q).unwrap());
            for k in 0..q {
                assert!((got[k] - expect[k]).abs() < 1e-12, "q={q} k={k}");
            }
            assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_var_update_q3_closed_form() {
        // Two uniform subsets containing the truth leave it alone unless both
        // have two or more symbols, and two distinct pairs still meet in it.
        let check = [0.2, 0.5, 0.3];
        let eps = 0.7;
        let got = exact_var_update(&check, eps, 3);
        let erased = eps * ((1.0 - check[0]).powi(2) - check[1] * check[1] / 2.0);
        assert!((1.0 - got[0] - erased).abs() < 1e-12);
        assert!((got[2] - eps * check[2] * check[2]).abs() < 1e-12);
    }

    #[test]
    fn exact_de_erasure_is_monotone() {
        let params = EnsembleParams::new(4, 3);
        for eps in [0.6, 0.72, 0.8] {
            let run = exact_de_run(&params, eps).unwrap();
            for w in run.trajectory.windows(2) {
                assert!(w[1] <= w[0] + 1e-15, "eps={eps}");
            }
        }
    }

    #[test]
    fn channel_distribution() {
        let d = CardinalityDistribution::channel(4, 0.3);
        assert_eq!(d.probs(), &[0.7, 0.0, 0.0, 0.3]);
        assert!((d.erasure() - 0.3).abs() < 1e-15);
        assert!(CardinalityDistribution::new(vec![0.5, 0.4]).is_err());
    }
}

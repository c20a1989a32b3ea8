#![allow(dead_code)]

use permcodes::bp::{support, ChannelPriors, SoftDecoder};
use permcodes::erasure::{ConstraintRule, FloodingErasureDecoder};
use permcodes::{Codeword, FactorGraph, PartialGrid, SymbolSet};
use rand::Rng;

/// Erases each symbol of `word` independently with probability `eps`.
pub fn erase<R: Rng>(graph: &FactorGraph, word: &Codeword, eps: f64, rng: &mut R) -> PartialGrid {
    let q = graph.q();
    let cells = word
        .symbols()
        .iter()
        .map(|&s| if rng.gen::<f64>() < eps { SymbolSet::full(q) } else { SymbolSet::singleton(s) })
        .collect();
    PartialGrid::new(q, cells)
}

/// Smallest positive entry below which soft messages are no longer trusted
/// to carry their support.
pub const SOFT_FLOOR: f64 = 1e-25;

pub struct Agreement {
    /// Iterations whose supports were compared.
    pub compared: usize,
}

/// Runs soft BP on erasure priors next to two flooding subset decoders and
/// checks, iteration by iteration, that soft constraint messages have the
/// support of the extrinsic subset messages and that soft marginals have
/// the support of the trellis decoder's cells. Stops once a soft message
/// has an entry in `(0, SOFT_FLOOR)`.
pub fn soft_matches_subsets(graph: &FactorGraph, observed: &PartialGrid, iterations: usize) -> Result<Agreement, String> {
    let q = graph.q();
    let mut soft = SoftDecoder::new(graph, ChannelPriors::from_erasures(observed)).map_err(|e| e.to_string())?;
    let mut extrinsic = FloodingErasureDecoder::new(graph, observed, ConstraintRule::Extrinsic).unwrap();
    let mut trellis = FloodingErasureDecoder::new(graph, observed, ConstraintRule::Trellis).unwrap();
    let constraints = graph.constraints().len();
    let mut compared = 0;
    for t in 1..=iterations {
        let stepped = soft.step();
        extrinsic.step();
        trellis.step();
        if stepped.is_err() {
            return Err(format!("soft update failed at iteration {t}"));
        }
        let tiny = (0..constraints)
            .flat_map(|c| (0..q).map(move |k| (c, k)))
            .flat_map(|(c, k)| soft.to_var(c, k).iter().chain(soft.to_check(c, k)).copied().collect::<Vec<_>>())
            .any(|p| p > 0.0 && p < SOFT_FLOOR);
        if tiny {
            break;
        }
        for c in 0..constraints {
            for k in 0..q {
                if support(soft.to_var(c, k)) != extrinsic.to_var[c * q + k] {
                    return Err(format!("iteration {t}: message ({c}, {k}) differs"));
                }
            }
        }
        let marginals = soft.marginals().map_err(|e| format!("iteration {t}: {e}"))?;
        let cells = trellis.cells();
        for (v, m) in marginals.iter().enumerate() {
            if support(m) != cells.cells()[v] {
                return Err(format!("iteration {t}: cell {v} differs"));
            }
        }
        compared = t;
    }
    Ok(Agreement { compared })
}

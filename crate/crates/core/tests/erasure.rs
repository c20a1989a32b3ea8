mod common;

use permcodes::erasure::{
    constraint_update_subsets_direct, constraint_update_subsets_trellis, decode_erasure, ConstraintRule,
    ErasureStatus, FloodingErasureDecoder, SubsetTrellis,
};
use permcodes::graph::{build_structure, sample_codeword};
use permcodes::{Error, PartialGrid, Structure, SymbolSet};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn set(symbols: &[usize]) -> SymbolSet {
    SymbolSet::from_symbols(symbols.iter().copied())
}

/// Every way of choosing one symbol per row that uses each symbol once.
fn brute_force(rows: &[SymbolSet]) -> Vec<SymbolSet> {
    let q = rows.len();
    let mut out = vec![SymbolSet::EMPTY; q];
    fn walk(rows: &[SymbolSet], r: usize, used: SymbolSet, pick: &mut Vec<usize>, out: &mut [SymbolSet]) {
        if r == rows.len() {
            for (o, &s) in out.iter_mut().zip(pick.iter()) {
                *o |= SymbolSet::singleton(s);
            }
            return;
        }
        for s in rows[r].iter() {
            if !used.contains(s) {
                pick.push(s);
                walk(rows, r + 1, used | SymbolSet::singleton(s), pick, out);
                pick.pop();
            }
        }
    }
    walk(rows, 0, SymbolSet::EMPTY, &mut Vec::new(), &mut out);
    out
}

fn rows_strategy(q: usize) -> impl Strategy<Value = Vec<SymbolSet>> {
    prop::collection::vec(0u32..(1 << q), q).prop_map(|v| v.into_iter().map(SymbolSet).collect())
}

#[test]
fn worked_example() {
    let rows = [set(&[1, 2, 3, 4]), set(&[1, 3]), set(&[1, 2]), set(&[1, 2])];
    let trellis = constraint_update_subsets_trellis(&rows).unwrap();
    assert_eq!(trellis, vec![set(&[4]), set(&[3]), set(&[1, 2]), set(&[1, 2])]);
    let direct = constraint_update_subsets_direct(&rows).unwrap();
    assert_eq!(direct, vec![set(&[4]), set(&[3, 4]), set(&[1, 2, 3, 4]), set(&[1, 2, 3, 4])]);
}

#[test]
fn all_q3_incidence_matrices() {
    // Rows range over the 7 nonempty subsets of {1, 2, 3}.
    let mut satisfiable = 0;
    for code in 0..343u32 {
        let rows: Vec<SymbolSet> = (0..3).map(|i| SymbolSet((code / 7u32.pow(i)) % 7 + 1)).collect();
        let expected = brute_force(&rows);
        match constraint_update_subsets_trellis(&rows) {
            Ok(out) => {
                satisfiable += 1;
                assert_eq!(out, expected, "{rows:?}");
                let direct = constraint_update_subsets_direct(&rows).unwrap();
                let meet: Vec<SymbolSet> = direct.iter().zip(&rows).map(|(&d, &r)| d & r).collect();
                assert_eq!(meet, out, "{rows:?}");
            }
            Err(e) => {
                assert_eq!(e, Error::Contradiction);
                assert!(expected.iter().all(|s| s.is_empty()));
            }
        }
    }
    assert!(satisfiable > 0 && satisfiable < 343);
}

proptest! {
    #[test]
    fn trellis_matches_brute_force(q in 2usize..=6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<SymbolSet> = (0..q)
            .map(|_| SymbolSet(rand::Rng::gen_range(&mut rng, 1u32..(1 << q))))
            .collect();
        let expected = brute_force(&rows);
        match constraint_update_subsets_trellis(&rows) {
            Ok(out) => prop_assert_eq!(out, expected),
            Err(_) => prop_assert!(expected.iter().all(|s| s.is_empty())),
        }
    }

    #[test]
    fn direct_rule_meets_input_to_trellis(rows in rows_strategy(5)) {
        prop_assume!(rows.iter().all(|r| !r.is_empty()));
        if let Ok(out) = constraint_update_subsets_trellis(&rows) {
            let direct = constraint_update_subsets_direct(&rows).unwrap();
            for k in 0..rows.len() {
                prop_assert_eq!(direct[k] & rows[k], out[k]);
            }
        }
    }

    #[test]
    fn trellis_output_shrinks_and_is_idempotent(rows in rows_strategy(6)) {
        if let Ok(out) = constraint_update_subsets_trellis(&rows) {
            for (o, r) in out.iter().zip(&rows) {
                prop_assert!(o.is_subset(*r));
            }
            prop_assert_eq!(constraint_update_subsets_trellis(&out).unwrap(), out);
        }
    }

    #[test]
    fn trellis_is_monotone(rows in rows_strategy(5), mask in prop::collection::vec(0u32..32, 5)) {
        let smaller: Vec<SymbolSet> = rows.iter().zip(&mask).map(|(r, &m)| SymbolSet(r.0 & m)).collect();
        if let Ok(small) = constraint_update_subsets_trellis(&smaller) {
            let big = constraint_update_subsets_trellis(&rows).unwrap();
            for (s, b) in small.iter().zip(&big) {
                prop_assert!(s.is_subset(*b));
            }
        }
    }

    #[test]
    fn extrinsic_rule_ignores_own_row(rows in rows_strategy(5), k in 0usize..5, other in 1u32..32) {
        let mut trellis = SubsetTrellis::new(5).unwrap();
        let mut a = vec![SymbolSet::EMPTY; 5];
        let mut b = vec![SymbolSet::EMPTY; 5];
        let mut changed = rows.clone();
        changed[k] = SymbolSet(other);
        trellis.update(&rows, ConstraintRule::Extrinsic, &mut a);
        trellis.update(&changed, ConstraintRule::Extrinsic, &mut b);
        prop_assert_eq!(a[k], b[k]);
    }
}

#[test]
fn decoding_never_removes_the_transmitted_symbol() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (kind, q, words) in [(Structure::Sudoku, 4, 40), (Structure::Sudoku, 9, 20), (Structure::SemiPandiagonal, 5, 40)] {
        let graph = build_structure(kind, q).unwrap();
        for w in 0..words {
            let word = sample_codeword(&graph, w).unwrap();
            for eps in [0.2, 0.5, 0.8] {
                for _ in 0..10 {
                    let observed = common::erase(&graph, &word, eps, &mut rng);
                    let (grid, status) = decode_erasure(&graph, &observed).unwrap();
                    assert_ne!(status, ErasureStatus::Contradiction);
                    assert!(grid.contains(&word));
                    if status == ErasureStatus::Decoded {
                        assert_eq!(grid.to_codeword().unwrap(), word);
                    }
                }
            }
        }
    }
}

#[test]
fn flooding_and_propagator_share_fixed_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let graph = build_structure(Structure::Sudoku, 9).unwrap();
    let mut stalls = 0;
    for w in 0..30 {
        let word = sample_codeword(&graph, 100 + w).unwrap();
        for eps in [0.35, 0.45] {
            let observed = common::erase(&graph, &word, eps, &mut rng);
            let (grid, status) = decode_erasure(&graph, &observed).unwrap();
            for rule in [ConstraintRule::Trellis, ConstraintRule::Extrinsic] {
                let (cells, flood_status) = FloodingErasureDecoder::new(&graph, &observed, rule).unwrap().run(500);
                assert_eq!(cells, grid);
                assert_eq!(flood_status, status);
            }
            if status == ErasureStatus::Stalled {
                stalls += 1;
            }
        }
    }
    assert!(stalls > 0);
}

#[test]
fn stalled_grid_is_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let graph = build_structure(Structure::Sudoku, 9).unwrap();
    let word = sample_codeword(&graph, 0).unwrap();
    let stalled = (0..1000)
        .map(|_| decode_erasure(&graph, &common::erase(&graph, &word, 0.4, &mut rng)).unwrap())
        .find(|(_, s)| *s == ErasureStatus::Stalled)
        .expect("no stall at 0.4")
        .0;
    let again = decode_erasure(&graph, &stalled).unwrap();
    assert_eq!(again, (stalled.clone(), ErasureStatus::Stalled));
    // Every constraint is locally closed.
    for vars in graph.constraints() {
        let rows: Vec<SymbolSet> = vars.iter().map(|&v| stalled.cells()[v]).collect();
        assert_eq!(constraint_update_subsets_trellis(&rows).unwrap(), rows);
    }
}

#[test]
fn mismatched_grid_is_rejected() {
    let graph = build_structure(Structure::Latin, 3).unwrap();
    assert!(decode_erasure(&graph, &PartialGrid::erased(3, 8)).is_err());
    assert!(decode_erasure(&graph, &PartialGrid::erased(4, 9)).is_err());
}

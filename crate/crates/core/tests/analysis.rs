use num::BigUint;
use permcodes::analysis::{
    bethe_rate_estimate, combinatorial_rate, cycle_free_rate, de_run, de_threshold, exact_de_run,
    exact_de_threshold, EnsembleParams,
};
use permcodes::graph::{build_structure, count_codewords};
use permcodes::Structure;

fn quick(q: usize, population: usize) -> EnsembleParams {
    EnsembleParams {
        population_size: population,
        resolution: 1.0 / 128.0,
        ..EnsembleParams::new(q, 3)
    }
}

#[test]
fn population_follows_exact_trajectory() {
    let params = quick(4, 20_000);
    // Sampling noise is amplified along the trajectory, so only the first
    // iterations are compared closely.
    for eps in [0.5, 0.9, 0.96] {
        let exact = exact_de_run(&params, eps).unwrap();
        let pop = de_run(&params, eps, 3).unwrap();
        assert_eq!(exact.converged, pop.converged, "eps = {eps}");
        for (t, (a, b)) in exact.trajectory.iter().zip(&pop.trajectory).take(4).enumerate() {
            assert!((a - b).abs() < 0.01, "eps = {eps}, iteration {t}: {a} vs {b}");
        }
    }
}

#[test]
fn thresholds_agree_and_beat_the_cycle_free_bound() {
    for q in [3, 4] {
        let params = quick(q, 10_000);
        let exact = exact_de_threshold(&params).unwrap();
        let pop = de_threshold(&params, 1).unwrap();
        assert!((exact.theta - pop.theta).abs() < 0.02, "q = {q}: {} vs {}", exact.theta, pop.theta);
        assert!(exact.ci_lo <= exact.theta && exact.theta <= exact.ci_hi);
        assert!(exact.ci_hi - exact.ci_lo <= params.resolution);
        assert!(exact.theta > 1.0 - cycle_free_rate(q));
    }
}

#[test]
fn population_runs_are_reproducible() {
    let params = quick(5, 5_000);
    assert_eq!(de_run(&params, 0.9, 7).unwrap(), de_run(&params, 0.9, 7).unwrap());
}

#[test]
fn exact_runs_are_monotone_in_eps() {
    let params = quick(3, 1);
    let mut last_converged = true;
    for i in 0..=20 {
        let c = exact_de_run(&params, i as f64 / 20.0).unwrap().converged;
        assert!(last_converged || !c);
        last_converged = c;
    }
}

#[test]
fn bad_parameters_are_rejected() {
    assert!(de_threshold(&quick(9, 100), 0).is_err());
    assert!(exact_de_run(&quick(6, 100), 0.5).is_err());
    let params = EnsembleParams { resolution: 0.0, ..EnsembleParams::new(3, 3) };
    assert!(de_run(&params, 0.5, 0).is_err());
}

#[test]
fn rates_from_counted_codes() {
    let count = |kind, q| BigUint::from(count_codewords(&build_structure(kind, q).unwrap(), None).count);
    let semi5 = combinatorial_rate(&count(Structure::SemiPandiagonal, 5), 25, 5).unwrap();
    let semi7 = combinatorial_rate(&count(Structure::SemiPandiagonal, 7), 49, 7).unwrap();
    let sudoku4 = combinatorial_rate(&count(Structure::Sudoku, 4), 16, 4).unwrap();
    assert!((semi5 - 360f64.log(5.0) / 25.0).abs() < 1e-12);
    assert!((semi7 - 3_200_400f64.log(7.0) / 49.0).abs() < 1e-12);
    assert!((sudoku4 - 288f64.log(4.0) / 16.0).abs() < 1e-12);
    assert!(combinatorial_rate(&BigUint::from(0u8), 4, 2).is_err());
}

#[test]
fn rate_estimates_are_ordered() {
    for q in 3..=12 {
        let cf = cycle_free_rate(q);
        assert!(cf > 0.0 && cf < 1.0);
        assert!(bethe_rate_estimate(q, 3).fraction <= cf);
    }
    assert!(bethe_rate_estimate(12, 3).fraction > 0.0);
}

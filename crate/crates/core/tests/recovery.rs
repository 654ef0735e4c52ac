use hvaf::c64;
use hvaf::experiments::{run_experiment, ExperimentSpec};
use hvaf::hvaf::{solve, HvafSolver, MultiplierTrace, SolverConfig, DEFAULT_LAMBDA};
use hvaf::lrhm::solve_lrhm;
use hvaf::metrics::rlne;
use hvaf::signal::{add_noise, normalize, random_mask, random_model, synthesize};
use hvaf::svt::nuclear_norm;

fn ensemble(r: usize, damped: bool, n: usize, seed: u64) -> Vec<c64> {
    normalize(&synthesize(&random_model(r, damped, None, seed).unwrap(), n).unwrap()).unwrap()
}

#[test]
fn exact_mode_keeps_observations_and_recovers() {
    let y = ensemble(3, false, 63, 21);
    let obs = random_mask(63, 30, 4).unwrap().observe(&y).unwrap();
    let cfg = SolverConfig { multiplier_trace: MultiplierTrace::StageEnd, ..SolverConfig::with_rank(3) };
    let rep = solve(&obs, &cfg).unwrap();
    for (&i, &v) in obs.indices().iter().zip(obs.values()) {
        assert_eq!(rep.recovered[i - 1], v);
    }
    let e = rlne(&rep.recovered, &y).unwrap();
    assert!(e <= 1e-3, "RLNE {e}");
    assert!(rep.converged);
    assert_eq!(rep.stages.len(), 26);
    assert_eq!(rep.total_iterations, rep.stages.iter().map(|s| s.iterations).sum::<usize>());
    assert!(rep.max_multiplier_norm().unwrap() <= 1.0 + 1e-10);
    let last = rep.stages.last().unwrap();
    assert!(last.relative_change <= 1e-7);
    let hx = hvaf::hankel::hankelize(&rep.recovered, hvaf::hankel::default_square_shape(63).unwrap()).unwrap();
    assert!(last.factor_residual <= 1e-4 * hx.norm_l2(), "{}", last.factor_residual);
}

#[test]
fn solves_are_reproducible() {
    let y = ensemble(2, true, 41, 8);
    let obs = random_mask(41, 22, 8).unwrap().observe(&y).unwrap();
    for init in [hvaf::hvaf::InitStrategy::SvdWarmStart, hvaf::hvaf::InitStrategy::SeededRandom] {
        let cfg = SolverConfig { init, seed: 3, ..SolverConfig::with_rank(2) };
        let a = solve(&obs, &cfg).unwrap();
        let b = solve(&obs, &cfg).unwrap();
        assert_eq!(a.recovered, b.recovered);
        assert_eq!(a.total_iterations, b.total_iterations);
    }
}

#[test]
fn stepwise_driver_matches_solve() {
    let y = ensemble(2, false, 31, 2);
    let obs = random_mask(31, 18, 2).unwrap().observe(&y).unwrap();
    let cfg = SolverConfig { beta_max: 256.0, ..SolverConfig::with_rank(2) };
    let mut s = HvafSolver::new(&obs, &cfg).unwrap();
    for (k, &beta) in cfg.beta_schedule().iter().enumerate() {
        s.begin_stage(beta, k == 0);
        for _ in 0..cfg.max_inner_iters {
            if s.iterate().unwrap() <= cfg.tol {
                break;
            }
        }
    }
    assert_eq!(s.state().x, solve(&obs, &cfg).unwrap().recovered);
}

#[test]
fn noisy_mode_denoises() {
    let y = ensemble(3, false, 63, 30);
    let obs = random_mask(63, 40, 30).unwrap().observe(&y).unwrap();
    let noisy = add_noise(&obs, 0.05, 31).unwrap();
    let rep = solve(&noisy, &SolverConfig::with_rank(3).noisy(DEFAULT_LAMBDA)).unwrap();
    let on_mask = |x: &[c64]| -> Vec<c64> { obs.indices().iter().map(|&i| x[i - 1]).collect() };
    // The fit moves towards the clean samples rather than pinning the noisy ones.
    let fit_err = rlne(&on_mask(&rep.recovered), obs.values()).unwrap();
    let noise_err = rlne(noisy.values(), obs.values()).unwrap();
    assert!(fit_err < noise_err, "{fit_err} vs {noise_err}");
    assert!(rlne(&rep.recovered, &y).unwrap() <= 0.2);
}

#[test]
fn lrhm_recovers_and_tracks_nuclear_norm() {
    let y = ensemble(1, false, 31, 6);
    let obs = random_mask(31, 20, 6).unwrap().observe(&y).unwrap();
    let rep = solve_lrhm(&obs, &SolverConfig::default()).unwrap();
    for (&i, &v) in obs.indices().iter().zip(obs.values()) {
        assert_eq!(rep.report.recovered[i - 1], v);
    }
    assert!(rlne(&rep.report.recovered, &y).unwrap() <= 1e-3);
    assert_eq!(rep.nuclear_norm_trace.len(), rep.report.total_iterations);
    let h = hvaf::hankel::hankelize(&rep.report.recovered, hvaf::hankel::default_square_shape(31).unwrap()).unwrap();
    let last = *rep.nuclear_norm_trace.last().unwrap();
    assert!((nuclear_norm(h.as_ref()).unwrap() - last).abs() <= 1e-9 * last);
}

#[test]
fn experiment_dispatch_from_json() {
    let spec: ExperimentSpec = serde_json::from_str(
        r#"{"kind": "phase-transition", "n": 31, "r_values": [1, 2], "m_values": [31], "trials": 2, "seed": 9}"#,
    )
    .unwrap();
    let out = run_experiment(&spec).unwrap();
    let lines: Vec<&str> = out.csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,31,2,2,1,"));
    assert!(lines[2].starts_with("2,31,2,2,1,"));
    assert_eq!(out.manifest["spec"]["seed"], 9);
    assert_eq!(run_experiment(&spec).unwrap().csv, out.csv);

    let bad = serde_json::from_str::<ExperimentSpec>(r#"{"kind": "no-such-thing"}"#);
    assert!(bad.is_err());
}

use ostrovsky_core::evolve::EvolutionConfig;
use ostrovsky_core::regularity::{
    capped_dt, estimate_regularity, random_hs_data, reestimate, smoothing_gain, theory_gain,
    EstimatorConfig, RandomDataSpec, SmoothingOptions,
};
use ostrovsky_core::spectral::FrequencyGrid;
use proptest::prelude::*;

fn grid() -> FrequencyGrid {
    FrequencyGrid::new(100.0 * std::f64::consts::PI, 8192).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn estimator_recovers_generator_regularity(s in -0.75f64..1.5, seed in 0u64..1_000_000) {
        // |û| ∝ ⟨ξ⟩^{−s−1/2−δ} has regularity s + δ
        let spec = RandomDataSpec::new(s, seed);
        let f = random_hs_data(&spec, &grid()).unwrap();
        let est = estimate_regularity(&f, &EstimatorConfig::default()).unwrap();
        prop_assert!((est.sigma - (s + spec.delta)).abs() < 0.03, "σ = {}", est.sigma);
        prop_assert!((f.sobolev_norm(s) - spec.amplitude).abs() < 1e-12);
    }
}

#[test]
fn seeds_change_phases_only() {
    let g = grid();
    let a = random_hs_data(&RandomDataSpec::new(0.0, 7), &g).unwrap();
    let b = random_hs_data(&RandomDataSpec::new(0.0, 8), &g).unwrap();
    let a2 = random_hs_data(&RandomDataSpec::new(0.0, 7), &g).unwrap();
    assert_eq!(a, a2);
    assert_ne!(a, b);
    for k in [1i64, 10, 1000] {
        assert!((a.coeff(k).norm() - b.coeff(k).norm()).abs() <= 1e-15 * a.coeff(k).norm());
    }
}

fn small_run() -> (FrequencyGrid, EvolutionConfig, SmoothingOptions) {
    let g = FrequencyGrid::new(100.0 * std::f64::consts::PI, 4096).unwrap();
    let cfg = EvolutionConfig {
        dt: 1e-4,
        horizon: 0.1,
        record_every: 250,
        ..EvolutionConfig::default()
    };
    let mut opts = SmoothingOptions::default();
    opts.estimator.lo = 5.0;
    (g, cfg, opts)
}

#[test]
fn linear_run_is_degenerate() {
    let (g, cfg, opts) = small_run();
    let cfg = EvolutionConfig {
        nonlinear: false,
        ..cfg
    };
    let r = smoothing_gain(&RandomDataSpec::new(0.0, 1), &[1], &g, &cfg, &opts).unwrap();
    assert!(r.degenerate);
    assert!(r.gain_hat.is_nan());
    assert!(r.samples.is_empty());
}

#[test]
fn single_seed_report_and_reestimate() {
    let (g, cfg, opts) = small_run();
    let r = smoothing_gain(&RandomDataSpec::new(0.0, 3), &[3], &g, &cfg, &opts).unwrap();
    assert!(!r.degenerate);
    assert_eq!(r.samples.len(), 1);
    assert_eq!(r.gain_stats.count, 1);
    assert_eq!(r.gain_ci, r.samples[0].sigma_v_ci + r.samples[0].sigma_f_ci);
    assert!(r.gain_hat > 0.0 && r.bounded);
    assert_eq!(r.theory_gain, theory_gain(0.0));
    assert_eq!(r.samples[0].times.len(), r.samples[0].v_norms.len());
    // re-running the estimator with the same options reproduces the report
    assert_eq!(reestimate(&r, &opts).unwrap(), r);
    let mut wider = opts;
    wider.estimator.per_octave = 8;
    let other = reestimate(&r, &wider).unwrap();
    assert_ne!(other.gain_hat, r.gain_hat);
}

#[test]
fn ensemble_order_does_not_matter() {
    let (g, cfg, opts) = small_run();
    let cfg = EvolutionConfig {
        horizon: 0.02,
        ..cfg
    };
    let a = smoothing_gain(&RandomDataSpec::new(0.0, 0), &[5, 2, 9], &g, &cfg, &opts).unwrap();
    let b = smoothing_gain(&RandomDataSpec::new(0.0, 0), &[9, 5, 2, 5], &g, &cfg, &opts).unwrap();
    assert_eq!(a, b);
    let seeds: Vec<u64> = a.samples.iter().map(|s| s.seed).collect();
    assert_eq!(seeds, vec![2, 5, 9]);
}

#[test]
fn step_is_capped_by_dispersion() {
    let opts = SmoothingOptions::default();
    let cfg = EvolutionConfig {
        dt: 1.0,
        ..EvolutionConfig::default()
    };
    let g = grid();
    let dt = capped_dt(&g, &cfg, &opts);
    assert!((dt * g.dealias_cutoff().powi(3) - opts.max_phase_step).abs() < 1e-9);
    let tiny = EvolutionConfig { dt: 1e-9, ..cfg };
    assert_eq!(capped_dt(&g, &tiny, &opts), 1e-9);
}

#[test]
fn theory_values() {
    assert_eq!(theory_gain(0.0), 0.5);
    assert_eq!(theory_gain(-0.5), 0.25);
    assert_eq!(theory_gain(2.0), 0.5);
}

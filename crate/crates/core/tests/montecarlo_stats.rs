use parity_reject::montecarlo::{
    convergence_check, empirical_flip_count, run_trials, wilson_interval, SeedPolicy,
};
use parity_reject::noise::WaveplateSandwich;
use parity_reject::protocol::{
    eq4_qber, ideal_yield, run_analytic, ChannelKind, PipelineConfig, SamplingMode, SixState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sandwich_cfg() -> PipelineConfig {
    PipelineConfig::ideal().with_channel(ChannelKind::Sandwich)
}

fn binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    let ln_choose: f64 = (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum();
    (ln_choose + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
}

#[test]
fn wilson_closed_form_example() {
    let (lo, hi) = wilson_interval(10, 100, 0.95).unwrap();
    assert!((lo - 0.0552).abs() < 5e-5);
    assert!((hi - 0.1744).abs() < 5e-5);
}

#[test]
fn wilson_coverage_by_enumeration() {
    let n = 100;
    for p in [0.05, 0.1, 0.3, 0.5] {
        let coverage: f64 = (0..=n)
            .filter(|&k| {
                let (lo, hi) = wilson_interval(k, n, 0.95).unwrap();
                lo <= p && p <= hi
            })
            .map(|k| binomial_pmf(n, k, p))
            .sum();
        assert!((0.92..=0.98).contains(&coverage), "p = {p}: coverage {coverage}");
    }
}

#[test]
fn wilson_coverage_by_simulation() {
    let (n, p, reps) = (200u64, 0.1, 4000);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut hits = 0;
    for _ in 0..reps {
        let k = (0..n).filter(|_| rng.random::<f64>() < p).count() as u64;
        let (lo, hi) = wilson_interval(k, n, 0.95).unwrap();
        hits += u32::from(lo <= p && p <= hi);
    }
    let coverage = f64::from(hits) / f64::from(reps);
    assert!((0.93..=0.97).contains(&coverage), "{coverage}");
}

#[test]
fn h_input_at_quarter_flip_rate() {
    let cfg = sandwich_cfg();
    let model = cfg.channel.instantiate(0.25).unwrap();
    let stats = run_trials(&cfg, &SixState::H.ket(), &model, 1_000_000, SeedPolicy::new(2)).unwrap();
    assert!(stats.n_errors <= stats.n_accepted && stats.n_accepted <= stats.n_trials);
    assert_eq!(
        stats.qber_hat.unwrap(),
        stats.n_errors as f64 / stats.n_accepted as f64
    );
    let report = convergence_check(&stats, eq4_qber(0.25).unwrap()).unwrap();
    assert!(report.pass, "{report:?}");
}

#[test]
fn sampled_flip_frequency_is_unbiased() {
    // pooled over 20 streams; 4 sigma band
    let s = WaveplateSandwich::new(15.0, true).unwrap();
    let (per, seeds) = (100_000u64, 20u64);
    let k: u64 = (0..seeds)
        .map(|seed| empirical_flip_count(&s, per, SeedPolicy::new(1000 + seed)).unwrap())
        .sum();
    let n = (per * seeds) as f64;
    let sigma = (0.25 * 0.75 / n).sqrt();
    assert!((k as f64 / n - 0.25).abs() < 4.0 * sigma);
}

#[test]
fn error_shrinks_as_inverse_square_root() {
    let cfg = sandwich_cfg();
    let model = cfg.channel.instantiate(0.25).unwrap();
    let oracle = eq4_qber(0.25).unwrap();
    let rms = |n: u64| -> f64 {
        let seeds = 24;
        let sum: f64 = (0..seeds)
            .map(|s| {
                let stats = run_trials(&cfg, &SixState::V.ket(), &model, n, SeedPolicy::new(500 + s)).unwrap();
                (stats.qber_hat.unwrap() - oracle).powi(2)
            })
            .sum();
        (sum / seeds as f64).sqrt()
    };
    let ratio = rms(20_000) / rms(80_000);
    // 4x the trials should halve the error
    assert!((1.4..=2.9).contains(&ratio), "ratio {ratio}");
}

#[test]
fn accepted_fraction_matches_yield() {
    let cfg = sandwich_cfg();
    let n = 1_000_000;
    for (i, p) in [0.0, 0.2, 0.4].into_iter().enumerate() {
        let model = cfg.channel.instantiate(p).unwrap();
        let stats = run_trials(&cfg, &SixState::R.ket(), &model, n, SeedPolicy::new(40 + i as u64)).unwrap();
        let (lo, hi) = wilson_interval(stats.n_accepted, n, 0.95).unwrap();
        let want = ideal_yield(p);
        assert!(lo <= want && want <= hi, "p = {p}: {} not near {want}", stats.yield_hat);
    }
}

#[test]
fn pauli_draw_matches_full_unitary() {
    let full = sandwich_cfg();
    let draw = PipelineConfig {
        sampling: SamplingMode::PauliDraw,
        ..full
    };
    let n = 1_000_000;
    for (i, s) in [SixState::H, SixState::R].into_iter().enumerate() {
        let model = full.channel.instantiate(0.3).unwrap();
        let a = run_trials(&full, &s.ket(), &model, n, SeedPolicy::new(60 + i as u64)).unwrap();
        let b = run_trials(&draw, &s.ket(), &model, n, SeedPolicy::new(70 + i as u64)).unwrap();
        let (ka, na) = (a.n_errors as f64, a.n_accepted as f64);
        let (kb, nb) = (b.n_errors as f64, b.n_accepted as f64);
        let pooled = (ka + kb) / (na + nb);
        let z = (ka / na - kb / nb) / (pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb)).sqrt();
        // two-sided alpha = 0.01
        assert!(z.abs() < 2.576, "{s}: z = {z}");
    }
}

#[test]
fn monte_carlo_tracks_analytic_with_imperfect_sources() {
    let src = parity_reject::noise::calibrate_from_visibilities(0.97, 0.94).unwrap();
    let cfg = PipelineConfig {
        pair_source: src,
        herald_source: Some(src),
        parity_visibility: parity_reject::noise::InterferenceVisibility::new(0.94).unwrap(),
        ..sandwich_cfg()
    };
    let model = cfg.channel.instantiate(0.1).unwrap();
    for (i, s) in [SixState::V, SixState::M, SixState::L].into_iter().enumerate() {
        let oracle = run_analytic(&cfg, s, 0.1).unwrap().qber;
        let stats = run_trials(&cfg, &s.ket(), &model, 400_000, SeedPolicy::new(90 + i as u64)).unwrap();
        let (lo, hi) = wilson_interval(stats.n_errors, stats.n_accepted, 0.999).unwrap();
        assert!(lo <= oracle && oracle <= hi, "{s}: {:?} vs {oracle}", stats.qber_hat);
    }
}

use mmrelay_core::metrics::{HopChannel, ModulationScheme};
use mmrelay_core::montecarlo::*;
use mmrelay_core::sinr::*;
use mmrelay_core::special::gamma_p;
use mmrelay_core::Error;
use rayon::prelude::*;

const N: usize = 1_000_000;

fn hop(n: u32, m: f64, mr: u32, m_r: f64, rho: f64, snr: f64, snr_r: f64) -> HopParams {
    HopParams { antennas: n, m, interferers: mr, m_r, rho, snr, interference_snr: snr_r }
}

fn pairs(p: &HopParams, n: usize, seed: u64) -> Vec<(f64, f64)> {
    (0..n as u64)
        .into_par_iter()
        .map(|t| sample_correlated_gamma_pair(p, &mut trial_rng(seed, t, 3)).unwrap())
        .collect()
}

fn pearson(v: &[(f64, f64)]) -> f64 {
    let n = v.len() as f64;
    let (mx, my) = (v.iter().map(|p| p.0).sum::<f64>() / n, v.iter().map(|p| p.1).sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in v {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn interference(p: &HopParams, n: usize, seed: u64) -> Vec<f64> {
    (0..n as u64).into_par_iter().map(|t| sample_interference(p, &mut trial_rng(seed, t, 4)).unwrap()).collect()
}

fn config(h1: HopParams, h2: HopParams, trials: usize, seed: u64) -> TrialConfig {
    TrialConfig {
        trials,
        master_seed: seed,
        hops: [HopChannel::fixed(h1), HopChannel::fixed(h2)],
        modulation: ModulationScheme::Bpsk,
        blockage: BlockageDraw::Fixed(LinkState::Los),
    }
}

#[test]
fn gamma_pair_correlation() {
    for (rho, seed) in [(0.0, 1), (0.25, 2), (0.49, 3), (0.81, 4)] {
        let r = pearson(&pairs(&hop(2, 2.0, 0, 1.0, rho, 5.0, 0.0), N, seed));
        let tol = if rho == 0.0 { 0.005 } else { 0.01 };
        assert!((r - rho).abs() < tol, "rho {rho}: {r}");
    }
}

#[test]
fn gamma_pair_marginals() {
    let p = hop(3, 1.0, 0, 1.0, 0.6, 4.0, 0.0);
    let v = pairs(&p, N, 9);
    let outdated: Vec<f64> = v.iter().map(|x| x.0).collect();
    let (mean, var) = mean_var(&outdated);
    assert!((mean - 4.0).abs() < 3.0 * (var / N as f64).sqrt());
    let k = p.shape();
    for which in [0, 1] {
        let e = EmpiricalDistribution::new(v.iter().map(|x| if which == 0 { x.0 } else { x.1 }).collect());
        assert!(e.ks_distance(|x| gamma_p(k, k * x / p.snr)) < 0.002);
    }
}

#[test]
fn odd_component_counts_need_half_integer_shapes() {
    let mut rng = trial_rng(0, 0, 0);
    assert!(sample_correlated_gamma_pair(&hop(1, 0.5, 0, 1.0, 0.1, 1.0, 0.0), &mut rng).is_ok());
    assert!(matches!(
        sample_correlated_gamma_pair(&hop(1, 0.7, 0, 1.0, 0.1, 1.0, 0.0), &mut rng),
        Err(Error::InvalidParameter(_))
    ));
}

#[test]
fn single_interferer_is_exponential() {
    let p = hop(1, 1.0, 1, 1.0, 0.0, 1.0, 2.0);
    let v = interference(&p, N, 5);
    let (mean, var) = mean_var(&v);
    assert!((mean - 2.0).abs() < 3.0 * (var / N as f64).sqrt());
    let e = EmpiricalDistribution::new(v);
    assert!(e.ks_distance(|x| 1.0 - (-x / 2.0).exp()) < 0.002);
}

#[test]
fn aggregate_interference_shape() {
    let p = hop(1, 1.0, 7, 3.0, 0.0, 1.0, 3.0);
    let (mean, var) = mean_var(&interference(&p, N, 6));
    assert!((mean - 3.0).abs() < 3.0 * (var / N as f64).sqrt());
    let shape = mean * mean / var;
    assert!((shape - 21.0).abs() < 0.5, "{shape}");
}

#[test]
fn interference_free_hop_is_gamma() {
    let p = hop(2, 2.0, 0, 1.0, 0.0, 10.0, 0.0);
    let e = simulate_hop_sinr(&p, N, 7).unwrap();
    assert!(e.ks_distance(|x| gamma_p(4.0, 4.0 * x / 10.0)) < 0.002);
}

#[test]
fn renormalized_law_matches_simulation() {
    let p = hop(2, 2.0, 0, 1.0, 0.5, 10.0, 0.0);
    let e = simulate_hop_sinr(&p, N, 8).unwrap();
    let d = SinrDistribution::new(p, Mode::Renormalized).unwrap();
    assert!((e.cdf(5.0) - d.cdf(5.0)).abs() < 3.0 * e.cdf_std_error(5.0));
    assert!(e.ks_distance(|x| d.cdf(x)) < 0.003);

    let q = hop(5, 2.0, 2, 1.0, 0.7, 100.0, 1.0);
    let e = simulate_hop_sinr(&q, N, 8).unwrap();
    let d = SinrDistribution::new(q, Mode::Renormalized).unwrap();
    assert!(e.ks_distance(|x| d.cdf(x)) < 0.003);
}

#[test]
fn stronger_interferers_lower_the_median() {
    let medians: Vec<f64> = [-5.0f64, 0.0, 5.0]
        .iter()
        .map(|db| simulate_hop_sinr(&hop(5, 2.0, 2, 1.0, 0.1, 100.0, 10f64.powf(db / 10.0)), 100_000, 10).unwrap().median())
        .collect();
    assert!(medians[0] > medians[1] && medians[1] > medians[2], "{medians:?}");
    let saturated = simulate_hop_sinr(&hop(5, 2.0, 2, 1.0, 0.1, 100.0, 1e12), 10_000, 10).unwrap();
    assert!(saturated.median() < 1e-6);
}

#[test]
fn identical_hops_follow_the_min_identity() {
    let p = hop(2, 1.0, 1, 1.0, 0.3, 10.0, 1.0);
    let e2e = simulate_e2e(&config(p, p, N, 12)).unwrap();
    let single = simulate_hop_sinr(&p, N, 13).unwrap();
    for x in [0.5, 2.0, 5.0, 10.0] {
        let f = single.cdf(x);
        let expect = 2.0 * f - f * f;
        let se = (expect * (1.0 - expect) / N as f64).sqrt();
        assert!((e2e.cdf(x) - expect).abs() < 3.0 * se * std::f64::consts::SQRT_2, "x {x}");
    }
}

#[test]
fn unbounded_second_hop_leaves_the_first() {
    let p = hop(2, 1.0, 1, 1.0, 0.3, 10.0, 1.0);
    let huge = hop(2, 1.0, 0, 1.0, 0.0, 1e300, 0.0);
    let e2e = simulate_e2e(&config(p, huge, N, 14)).unwrap();
    let hop1 = simulate_hop_sinr(&p, N, 14).unwrap();
    assert_eq!(e2e.samples(), hop1.samples());
    let d = SinrDistribution::new(p, Mode::Renormalized).unwrap();
    assert!(e2e.ks_distance(|x| d.cdf(x)) < 0.002);
}

#[test]
fn thread_count_does_not_change_samples() {
    let p = hop(2, 2.0, 2, 1.0, 0.4, 30.0, 1.0);
    let mut cfg = config(p, hop(1, 3.0, 1, 2.0, 0.2, 20.0, 0.5), 200_000, 99);
    cfg.hops[1].p_los = 0.4;
    cfg.blockage = BlockageDraw::PerTrial;
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate_e2e(&cfg).unwrap())
    };
    let (a, b) = (run(1), run(8));
    assert!(a.samples().iter().zip(b.samples()).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(a.len(), b.len());
}

#[test]
fn per_trial_blockage_matches_cdf_mixing() {
    let los = hop(2, 2.0, 1, 3.0, 0.1, 100.0, 1.0);
    let nlos = hop(2, 1.0, 1, 1.0, 0.1, 20.0, 1.0);
    let h = HopChannel { los, nlos, p_los: 0.55 };
    let cfg = TrialConfig {
        trials: N,
        master_seed: 21,
        hops: [h, h],
        modulation: ModulationScheme::Qpsk,
        blockage: BlockageDraw::PerTrial,
    };
    let e = simulate_e2e(&cfg).unwrap();
    let s = cfg.analytical_system(Mode::Renormalized, 1.0);
    for x in [1.0, 5.0, 20.0] {
        let f = mmrelay_core::metrics::e2e_outage(&s, x).unwrap();
        assert!((e.cdf(x) - f).abs() < 3.0 * e.cdf_std_error(x).max(1.0 / N as f64), "x {x}");
    }
}

#[test]
fn estimators_on_degenerate_samples() {
    let g0 = 7.0;
    let e = EmpiricalDistribution::new(vec![g0; 20_000]);
    let m = estimate_metrics(&e, &ModulationScheme::Bpsk, 2e6, &[1.0, 8.0]).unwrap();
    assert_eq!(m.outage[0].value, 0.0);
    assert_eq!(m.outage[1].value, 1.0);
    assert!(((m.capacity.value - 2e6 * (1.0 + g0).log2()) / m.capacity.value).abs() < 1e-12);
    assert!(m.capacity.std_error < 1e-6);
    let short = EmpiricalDistribution::new(vec![g0; 100]);
    assert!(estimate_metrics(&short, &ModulationScheme::Bpsk, 1.0, &[]).is_err());
}

#[test]
fn rayleigh_ser_estimate() {
    let e = simulate_hop_sinr(&hop(1, 1.0, 0, 1.0, 0.0, 10.0, 0.0), N, 31).unwrap();
    let m = estimate_metrics(&e, &ModulationScheme::Bpsk, 1.0, &[]).unwrap();
    let expect = 0.5 * (1.0 - (10.0f64 / 11.0).sqrt());
    assert!((m.symbol_error.value - expect).abs() < 3.0 * m.symbol_error.std_error);
}

#[test]
fn halving_trials_inflates_the_error_by_root_two() {
    let p = hop(1, 2.0, 1, 1.0, 0.2, 10.0, 1.0);
    let mean_se = |trials: usize| -> f64 {
        (0..50u64)
            .map(|r| {
                let e = simulate_hop_sinr(&p, trials, 500 + r).unwrap();
                estimate_metrics(&e, &ModulationScheme::Qpsk, 1.0, &[]).unwrap().symbol_error.std_error
            })
            .sum::<f64>()
            / 50.0
    };
    let ratio = mean_se(10_000) / mean_se(20_000);
    assert!((ratio / std::f64::consts::SQRT_2 - 1.0).abs() < 0.3, "{ratio}");
}

#[test]
fn uncorrelated_validation_passes_in_both_modes() {
    let p = hop(5, 2.0, 2, 1.0, 0.0, 100.0, 1.0);
    let cfg = config(p, p, N, 41);
    let plan = ValidationPlan { thresholds: vec![5.0, 10.0, 20.0, 40.0], ..ValidationPlan::default() };
    let r = validate_against_analytical(&cfg, &plan).unwrap();
    assert!(r.renormalized_pass() && r.published_pass(), "{r:?}");
    for c in &r.checks {
        assert_eq!(c.analytical_published, c.analytical_renormalized);
        assert!(c.diagnostic.is_none());
    }
}

#[test]
fn stale_feedback_flags_the_published_ceiling() {
    let p = hop(5, 2.0, 2, 1.0, 0.7, 100.0, 1.0);
    let cfg = config(p, p, N, 42);
    let plan = ValidationPlan { thresholds: vec![5.0, 20.0, 40.0], symbol_error: false, ..ValidationPlan::default() };
    let r = validate_against_analytical(&cfg, &plan).unwrap();
    assert!(r.renormalized_pass(), "{r:?}");
    assert!(!r.published_pass());
    let flagged: Vec<_> = r.checks.iter().filter(|c| !c.pass_published).collect();
    assert!(!flagged.is_empty());
    assert!(flagged.iter().all(|c| c.diagnostic.as_deref().is_some_and(|d| d.contains("mass"))));
    assert!((r.checks[0].inputs.published_mass[0] - 0.3f64.powi(10)).abs() < 1e-15);
}

#[test]
fn empty_plan_gives_empty_report() {
    let p = hop(1, 1.0, 0, 1.0, 0.0, 10.0, 0.0);
    let plan = ValidationPlan { thresholds: vec![], symbol_error: false, ..ValidationPlan::default() };
    let r = validate_against_analytical(&config(p, p, 10_000, 0), &plan).unwrap();
    assert!(r.checks.is_empty());
}

#[test]
fn single_hop_draws_are_the_e2e_components() {
    let a = hop(2, 1.0, 1, 1.0, 0.3, 10.0, 1.0);
    let b = hop(1, 2.0, 2, 1.0, 0.1, 20.0, 0.5);
    let cfg = config(a, b, 20_000, 77);
    let e2e = simulate_e2e(&cfg).unwrap();
    let h1 = simulate_hop(&cfg, 1).unwrap();
    let h2 = simulate_hop(&cfg, 2).unwrap();
    let mut mins: Vec<f64> = (0..20_000u64)
        .map(|t| {
            let g1 = HopSampler::new(a).unwrap().sample(&mut trial_rng(77, t, STREAM_HOP1));
            let g2 = HopSampler::new(b).unwrap().sample(&mut trial_rng(77, t, STREAM_HOP2));
            g1.min(g2)
        })
        .collect();
    mins.sort_by(f64::total_cmp);
    assert_eq!(e2e.samples(), &mins[..]);
    assert!(h1.len() == 20_000 && h2.len() == 20_000);
    assert!(simulate_hop(&cfg, 3).is_err());
}

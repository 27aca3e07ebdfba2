use mmrelay_core::link::BlockageModel;
use mmrelay_core::metrics::*;
use mmrelay_core::montecarlo::simulate_hop_sinr;
use mmrelay_core::sinr::*;
use mmrelay_core::special::gaussian_q;
use mmrelay_core::Error;
use proptest::prelude::*;
use rand::Rng;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

fn hop(n: u32, m: f64, mr: u32, m_r: f64, rho: f64, snr: f64, snr_r: f64) -> HopParams {
    HopParams { antennas: n, m, interferers: mr, m_r, rho, snr, interference_snr: snr_r }
}

fn rayleigh(snr: f64) -> HopParams {
    hop(1, 1.0, 0, 1.0, 0.0, snr, 0.0)
}

fn db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn dist(p: HopParams, mode: Mode) -> SinrDistribution {
    SinrDistribution::new(p, mode).unwrap()
}

fn system(h1: HopParams, h2: HopParams, mode: Mode) -> RelaySystem {
    RelaySystem::new(HopChannel::fixed(h1), HopChannel::fixed(h2), 1.0, mode).unwrap()
}

/// 38 GHz LOS-only hop of the modulation comparison.
fn modulation_hop(snr: f64) -> HopParams {
    hop(5, 4.0, 2, 3.0, 0.5, snr, 1.0)
}

/// E1 by its power series, adequate for small arguments.
fn exp_integral_e1(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 1..80 {
        term *= -x / k as f64;
        sum -= term / k as f64;
    }
    -EULER_GAMMA - x.ln() + sum
}

#[test]
fn rayleigh_bpsk_matches_textbook() {
    for &snr in &[0.1, 1.0, 10.0, 1000.0] {
        let d = dist(rayleigh(snr), Mode::Published);
        let expect = 0.5 * (1.0 - (snr / (1.0 + snr)).sqrt());
        let closed = hop_symbol_error(&d, &ModulationScheme::Bpsk).unwrap();
        let quad = hop_symbol_error_quadrature(&d, &ModulationScheme::Bpsk).unwrap();
        assert!(rel(closed.value, expect) < 1e-10);
        assert!(rel(quad.value, expect) < 1e-8);
    }
}

#[test]
fn symbol_error_is_bounded_by_half_alpha() {
    for m in [ModulationScheme::Bpsk, ModulationScheme::Qpsk, ModulationScheme::Qam(16)] {
        let d = dist(hop(2, 1.0, 1, 1.0, 0.2, 1e-6, 1.0), Mode::Renormalized);
        let v = hop_symbol_error(&d, &m).unwrap().value;
        assert!(v <= 0.5 * m.alpha() + 1e-12);
        assert!(v > 0.49 * m.alpha());
        assert_eq!(m.conditional_error(0.0), m.alpha() * gaussian_q(0.0));
    }
}

#[test]
fn modulation_ordering_on_snr_grid() {
    for mode in [Mode::Published, Mode::Renormalized] {
        for i in 0..=8 {
            let d = dist(modulation_hop(db(i as f64 * 5.0)), mode);
            let b = hop_symbol_error(&d, &ModulationScheme::Bpsk).unwrap().value;
            let q = hop_symbol_error(&d, &ModulationScheme::Qpsk).unwrap().value;
            let m16 = hop_symbol_error(&d, &ModulationScheme::Qam(16)).unwrap().value;
            assert!(b < q && q < m16, "snr {} dB: {b} {q} {m16}", i * 5);
        }
    }
}

#[test]
fn symbol_error_closed_form_agrees_with_quadrature() {
    for mode in [Mode::Published, Mode::Renormalized] {
        for m in [ModulationScheme::Bpsk, ModulationScheme::Qpsk, ModulationScheme::Qam(16)] {
            for snr_db in [0.0, 10.0, 20.0, 30.0, 40.0] {
                let d = dist(modulation_hop(db(snr_db)), mode);
                let c = hop_symbol_error_closed(&d, &m).unwrap();
                let q = hop_symbol_error_quadrature(&d, &m).unwrap();
                assert!(rel(c.value, q.value) < 1e-4, "{m} {snr_db} dB: {} vs {}", c.value, q.value);
            }
        }
    }
}

#[test]
fn asymptote_matches_coding_gain_and_power_law() {
    let m = ModulationScheme::Qpsk;
    for p in [hop(1, 4.0, 2, 3.0, 0.1, 1e3, 1.0), hop(5, 2.0, 0, 1.0, 0.4, 50.0, 0.0), hop(2, 1.5, 7, 1.0, 0.9, 7.0, 3.0)] {
        let a = hop_error_asymptote(&p, &m).unwrap();
        let gc = coding_gain(&p, &m).unwrap();
        let nm = p.shape();
        assert!(rel(a, (gc * p.snr).powf(-nm)) < 1e-10);
        let doubled = hop_error_asymptote(&HopParams { snr: 2.0 * p.snr, ..p }, &m).unwrap();
        assert!(rel(a / doubled, 2f64.powf(nm)) < 1e-10);
    }
}

#[test]
fn exact_over_asymptote_approaches_one() {
    let p = hop(1, 4.0, 2, 1.0, 0.1, 1e4, 1.0);
    let mut last = f64::INFINITY;
    for snr in [1e4, 1e5, 1e6] {
        let q = HopParams { snr, ..p };
        let exact = hop_symbol_error(&dist(q, Mode::Published), &ModulationScheme::Bpsk).unwrap().value;
        let gap = (exact / hop_error_asymptote(&q, &ModulationScheme::Bpsk).unwrap() - 1.0).abs();
        assert!(gap < last, "snr {snr}: gap {gap}");
        if snr == 1e5 {
            assert!(gap < 0.1);
        }
        last = gap;
    }
}

#[test]
fn asymptotes_ignore_rho() {
    let m = ModulationScheme::Qam(16);
    let base = hop(2, 2.0, 3, 1.0, 0.1, 1e3, 2.0);
    let values: Vec<(u64, u64, u64)> = [0.1, 0.5, 0.9]
        .iter()
        .map(|&rho| {
            let p = HopParams { rho, ..base };
            (
                hop_error_asymptote(&p, &m).unwrap().to_bits(),
                coding_gain(&p, &m).unwrap().to_bits(),
                high_snr_cdf_asymptote(&p, 3.0).unwrap().to_bits(),
            )
        })
        .collect();
    assert!(values.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn rayleigh_capacity_matches_exponential_integral() {
    let d = dist(rayleigh(10.0), Mode::Published);
    let expect = 0.1f64.exp() * exp_integral_e1(0.1) / std::f64::consts::LN_2;
    assert!((0.1f64.exp() * exp_integral_e1(0.1) - 2.0146).abs() < 1e-4);
    let closed = hop_capacity(&d, 1.0).unwrap();
    let quad = hop_capacity_quadrature(&d, 1.0).unwrap();
    assert!(rel(closed.value, expect) < 1e-8, "{} vs {expect}", closed.value);
    assert!(rel(quad.value, expect) < 1e-3);
}

#[test]
fn capacity_closed_form_agrees_with_quadrature() {
    let cases = [
        hop(5, 4.0, 2, 3.0, 1e-3, db(10.0), 1.0),
        hop(5, 2.0, 2, 1.0, 1e-3, db(25.0), 1.0),
        hop(2, 2.0, 1, 1.0, 0.5, db(5.0), db(-5.0)),
        hop(3, 1.0, 0, 1.0, 0.3, db(15.0), 0.0),
    ];
    for mode in [Mode::Published, Mode::Renormalized] {
        for p in cases {
            let d = dist(p, mode);
            let c = hop_capacity_closed(&d, 7e8).unwrap();
            let q = hop_capacity_quadrature(&d, 7e8).unwrap();
            assert!(rel(c.value, q.value) < 1e-3, "{p:?}: {} vs {}", c.value, q.value);
        }
    }
}

#[test]
fn capacity_vanishes_with_snr() {
    let d = dist(hop(2, 1.0, 1, 1.0, 0.1, 1e-9, 1.0), Mode::Renormalized);
    assert!(hop_capacity(&d, 1.0).unwrap().value < 1e-8);
    assert!(capacity_low_power(&d, 1.0).unwrap() < 1e-8);
    assert!(capacity_jensen_bound(&d, 1.0).unwrap() < 1e-8);
}

#[test]
fn low_power_approximation_is_tangent_and_overshoots() {
    let p = hop(2, 2.0, 1, 1.0, 0.2, 0.01, 0.5);
    let d = dist(p, Mode::Renormalized);
    let exact = hop_capacity(&d, 1.0).unwrap().value;
    assert!(rel(capacity_low_power(&d, 1.0).unwrap(), exact) < 0.02);
    for snr_db in [-20.0, -10.0, 0.0, 10.0, 20.0] {
        let d = dist(HopParams { snr: db(snr_db), ..p }, Mode::Renormalized);
        assert!(capacity_low_power(&d, 1.0).unwrap() >= hop_capacity(&d, 1.0).unwrap().value);
    }
}

#[test]
fn high_power_approximation() {
    let p = hop(2, 2.0, 1, 1.0, 0.2, 1e4, 0.5);
    let d = dist(p, Mode::Renormalized);
    let exact = hop_capacity(&d, 1.0).unwrap().value;
    assert!(rel(capacity_high_power(&d, 1.0).unwrap(), exact) < 0.02);

    let ten = dist(HopParams { snr: 1e5, ..p }, Mode::Renormalized);
    let shift = capacity_high_power(&ten, 1.0).unwrap() - capacity_high_power(&d, 1.0).unwrap();
    assert!(rel(shift, 10f64.log2()) < 0.01);

    let unit = dist(rayleigh(1.0), Mode::Published);
    let expect = -EULER_GAMMA * std::f64::consts::LOG2_E;
    assert!((capacity_high_power(&unit, 1.0).unwrap() - expect).abs() < 1e-8);
}

#[test]
fn jensen_bound_dominates_exact_capacity() {
    for p in [hop(5, 4.0, 2, 3.0, 1e-3, 1.0, 1.0), hop(1, 1.0, 0, 1.0, 0.0, 1.0, 0.0), hop(2, 1.0, 3, 1.0, 0.6, 1.0, 2.0)] {
        for snr_db in [-10.0, 0.0, 10.0, 20.0, 30.0, 40.0] {
            for mode in [Mode::Published, Mode::Renormalized] {
                let d = dist(HopParams { snr: db(snr_db), ..p }, mode);
                let exact = hop_capacity(&d, 1.0).unwrap().value;
                assert!(capacity_jensen_bound(&d, 1.0).unwrap() >= exact * (1.0 - 1e-9));
            }
        }
    }
    let d = dist(hop(10, 2.0, 0, 1.0, 0.0, 100.0, 0.0), Mode::Published);
    let gap = capacity_jensen_bound(&d, 1.0).unwrap() - hop_capacity(&d, 1.0).unwrap().value;
    assert!((0.0..0.1).contains(&gap), "{gap}");
}

#[test]
fn mixed_los_cdf_is_a_convex_combination() {
    let los = hop(2, 4.0, 2, 3.0, 0.1, 100.0, 1.0);
    let nlos = hop(2, 2.0, 2, 1.0, 0.1, 100.0, 1.0);
    let x = 30.0;
    let fl = dist(los, Mode::Renormalized).cdf(x);
    let fn_ = dist(nlos, Mode::Renormalized).cdf(x);

    let pure = RelaySystem::new(HopChannel { los, nlos, p_los: 1.0 }, HopChannel::fixed(los), 1.0, Mode::Renormalized).unwrap();
    assert!((mixed_los_cdf(&pure, 1, x).unwrap() - fl).abs() < 1e-15);

    let half = RelaySystem { hops: [HopChannel { los, nlos, p_los: 0.5 }; 2], ..pure };
    assert!((mixed_los_cdf(&half, 2, x).unwrap() - 0.5 * (fl + fn_)).abs() < 1e-15);

    let h = HopChannel::with_blockage(los, nlos, &BlockageModel::ThreePart, 63.0).unwrap();
    let s = RelaySystem { hops: [h, h], ..pure };
    assert!((h.p_los - 0.5485).abs() < 1e-4);
    let expect = h.p_los * fl + (1.0 - h.p_los) * fn_;
    assert!((mixed_los_cdf(&s, 1, x).unwrap() - expect).abs() < 1e-15);
    assert!(mixed_los_cdf(&s, 3, x).is_err());
}

#[test]
fn e2e_outage_limits() {
    let a = hop(2, 2.0, 1, 1.0, 0.1, 100.0, 1.0);
    let s = system(a, a, Mode::Renormalized);
    assert_eq!(e2e_outage(&s, 0.0).unwrap(), 0.0);
    let weak = system(hop(1, 1.0, 0, 1.0, 0.0, 1e-12, 0.0), a, Mode::Renormalized);
    assert!((e2e_outage(&weak, 1.0).unwrap() - 1.0).abs() < 1e-10);
    assert!(matches!(e2e_outage(&s, -1.0), Err(Error::InvalidParameter(_))));
}

#[test]
fn e2e_symbol_error_bounds_and_limits() {
    let m = ModulationScheme::Bpsk;
    let a = hop(2, 1.0, 0, 1.0, 1e-6, 10.0, 0.0);
    let p = hop_symbol_error(&dist(a, Mode::Published), &m).unwrap().value;
    let e = e2e_symbol_error(&system(a, a, Mode::Published), &m).unwrap();
    assert!(e.value >= p && e.value <= 2.0 * p, "{} not in [{p}, {}]", e.value, 2.0 * p);

    let b = hop(2, 2.0, 2, 1.0, 0.2, 20.0, 1.0);
    let hop2 = hop_symbol_error(&dist(b, Mode::Renormalized), &m).unwrap().value;
    let strong = HopParams { snr: 1e9, ..a };
    let e = e2e_symbol_error(&system(strong, b, Mode::Renormalized), &m).unwrap().value;
    assert!(rel(e, hop2) < 0.01);
}

#[test]
fn e2e_symbol_error_closed_form_agrees_with_quadrature_near_zero_rho() {
    let cases = [
        (hop(2, 1.0, 1, 1.0, 1e-3, 10.0, 1.0), hop(1, 2.0, 2, 1.0, 1e-3, 20.0, 0.5)),
        (hop(2, 1.0, 0, 1.0, 1e-3, 10.0, 0.0), hop(1, 2.0, 2, 1.0, 1e-3, 5.0, 0.5)),
        (hop(1, 1.0, 0, 1.0, 1e-3, 10.0, 0.0), hop(2, 1.0, 0, 1.0, 1e-3, 30.0, 0.0)),
    ];
    for m in [ModulationScheme::Bpsk, ModulationScheme::Qam(16)] {
        for (a, b) in cases {
            for mode in [Mode::Published, Mode::Renormalized] {
                let s = system(a, b, mode);
                let c = e2e_symbol_error_closed(&s, &m).unwrap().value;
                let q = e2e_symbol_error_quadrature(&s, &m).unwrap().value;
                assert!(rel(c, q) < 1e-3, "{m}: {c} vs {q}");
            }
        }
    }
}

#[test]
fn printed_e2e_form_breaks_the_error_ceiling() {
    let a = hop(2, 1.0, 1, 1.0, 1e-3, 10.0, 1.0);
    let s = system(a, a, Mode::Published);
    let printed = e2e_symbol_error_printed(&s, &ModulationScheme::Bpsk).unwrap();
    let corrected = e2e_symbol_error(&s, &ModulationScheme::Bpsk).unwrap().value;
    assert!(corrected < 0.5);
    assert!(printed > 0.5, "{printed}");
}

#[test]
fn printed_lambda_reduces_without_interference() {
    let m = ModulationScheme::Qpsk;
    let a = hop(2, 1.0, 3, 1.0, 0.1, 10.0, 1e-15);
    assert!((printed_lambda(&a, &a, &m) - 0.5).abs() < 1e-12);
    let clean = hop(2, 1.0, 0, 1.0, 0.1, 10.0, 0.0);
    assert_eq!(printed_lambda(&clean, &clean, &m), 0.5);
    assert!(joint_rate(&clean, &clean, &m) > 0.5);
}

#[test]
fn e2e_capacity_is_the_weaker_hop() {
    let a = hop(2, 2.0, 1, 1.0, 0.1, 100.0, 1.0);
    let b = hop(1, 1.0, 2, 1.0, 0.3, 10.0, 2.0);
    let ca = hop_capacity(&dist(a, Mode::Renormalized), 1.0).unwrap().value;
    let cb = hop_capacity(&dist(b, Mode::Renormalized), 1.0).unwrap().value;
    let ab = e2e_capacity(&system(a, b, Mode::Renormalized)).unwrap().value;
    let ba = e2e_capacity(&system(b, a, Mode::Renormalized)).unwrap().value;
    assert_eq!(ab, ba);
    assert_eq!(ab, ca.min(cb));
    assert_eq!(e2e_capacity(&system(a, a, Mode::Renormalized)).unwrap().value, ca);
    let dead = HopParams { snr: 1e-12, ..a };
    assert!(e2e_capacity(&system(dead, b, Mode::Renormalized)).unwrap().value < 1e-10);
}

#[test]
fn quantile_inverts_the_e2e_cdf() {
    let a = hop(2, 2.0, 1, 1.0, 0.4, 100.0, 1.0);
    let s = system(a, a, Mode::Renormalized);
    for eps in [1e-4, 1e-2, 0.3] {
        let g = e2e_quantile(&s, eps).unwrap();
        assert!(rel(e2e_outage(&s, g).unwrap(), eps) < 1e-6);
    }
    let published = system(a, a, Mode::Published);
    let ceiling = published.outage_ceiling();
    assert!(matches!(e2e_quantile(&published, ceiling + 0.01), Err(Error::QuantileUnreachable { .. })));
}

#[test]
fn outage_capacity_of_a_nearly_deterministic_link() {
    // Nm = 4000 concentrates the SINR at its mean
    let p = hop(400, 10.0, 0, 1.0, 0.0, 15.0, 0.0);
    let s = system(p, p, Mode::Renormalized);
    let c = outage_capacity(&s, &OutageCapacityQuery::new(1e-6).unwrap(), 1, 3).unwrap();
    assert!(rel(c, 16f64.log2()) < 0.05, "{c}");
}

fn fig10_system() -> RelaySystem {
    let los = hop(5, 4.0, 2, 3.0, 0.1, db(20.0), 1.0);
    let nlos = hop(5, 2.0, 2, 1.0, 0.1, db(20.0), 1.0);
    let h = HopChannel::with_blockage(los, nlos, &BlockageModel::ThreePart, 63.0).unwrap();
    RelaySystem::new(h, h, 1.0, Mode::Renormalized).unwrap()
}

#[test]
fn outage_capacity_grows_with_epsilon() {
    let s = fig10_system();
    let at = |eps: f64| outage_capacity(&s, &OutageCapacityQuery::new(eps).unwrap(), 6, 11).unwrap();
    let mut last = 0.0;
    for eps in [1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 0.05] {
        let c = at(eps);
        assert!(c > last, "eps {eps}: {c} <= {last}");
        last = c;
    }
    // the (1 - eps) factor eventually wins
    assert!(at(0.5) < at(0.05));
    assert!(OutageCapacityQuery::new(0.0).is_err());
    assert!(OutageCapacityQuery::new(1.0).is_err());
}

fn variance(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

#[test]
fn more_blocks_stabilize_outage_capacity() {
    let s = fig10_system();
    let q = OutageCapacityQuery::new(0.01).unwrap();
    let runs = |k: usize| -> Vec<f64> { (0..50).map(|r| outage_capacity(&s, &q, k, 1000 + r).unwrap()).collect() };
    let (v1, v6) = (variance(&runs(1)), variance(&runs(6)));
    assert!(v6 < v1, "{v6} >= {v1}");
}

#[test]
fn block_average_of_constant_and_single_block() {
    for k in [1, 2, 7, 50] {
        assert_eq!(block_fading_average(|_| Ok(2.5), k, 9).unwrap(), 2.5);
    }
    let one = block_fading_average(|r| Ok(r.random::<f64>()), 1, 42).unwrap();
    let direct: f64 = mmrelay_core::montecarlo::block_rng(42, 0).random();
    assert_eq!(one, direct);
    assert!(block_fading_average(|_| Ok(1.0), 0, 0).is_err());
}

#[test]
fn block_average_variance_scales_inversely_with_blocks() {
    let reps = |k: usize| -> Vec<f64> {
        (0..200u64).map(|r| block_fading_average(|g| Ok(g.random::<f64>()), k, r * 7919 + k as u64).unwrap()).collect()
    };
    let v1 = variance(&reps(1));
    let v10 = variance(&reps(10));
    let ratio = v1 / v10 / 10.0;
    assert!((ratio - 1.0).abs() < 0.2, "{ratio}");
}

#[test]
fn system_gain_cases() {
    let m = ModulationScheme::Bpsk;
    let a = hop(5, 4.0, 0, 1.0, 0.1, 10.0, 0.0);
    let b = hop(2, 2.0, 0, 1.0, 0.1, 10.0, 0.0);
    let g = system_gains(&system(a, b, Mode::Published), &m).unwrap();
    assert_eq!(g.diversity, 4.0);
    assert_eq!(g.coding, coding_gain(&b, &m).unwrap());
    let same = system_gains(&system(b, b, Mode::Published), &m).unwrap();
    assert_eq!(same.diversity, 4.0);
    assert!(same.coding < coding_gain(&b, &m).unwrap());
}

#[test]
fn gains_predict_the_asymptotic_e2e_error() {
    let m = ModulationScheme::Qpsk;
    let a = hop(1, 2.0, 0, 1.0, 0.0, 1e5, 0.0);
    let s = system(a, a, Mode::Published);
    let g = system_gains(&s, &m).unwrap();
    let predicted = (g.coding * 1e5f64).powf(-g.diversity);
    let exact = e2e_symbol_error(&s, &m).unwrap().value;
    assert!(rel(exact, predicted) < 0.05, "{exact} vs {predicted}");
}

#[test]
fn analytical_cdf_agrees_with_simulation_within_three_sigma() {
    let p = hop(2, 2.0, 0, 1.0, 0.5, 10.0, 0.0);
    let sim = simulate_hop_sinr(&p, 200_000, 5).unwrap();
    let f = dist(p, Mode::Renormalized).cdf(5.0);
    assert!((sim.cdf(5.0) - f).abs() < 3.0 * sim.cdf_std_error(5.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn df_bottleneck(
        n1 in 1u32..4, n2 in 1u32..4, m1 in 1u32..3, m2 in 1u32..3,
        rho1 in 0.0f64..0.9, rho2 in 0.0f64..0.9, s1 in 0.0f64..30.0, s2 in 0.0f64..30.0,
        x in 0.01f64..100.0, published in any::<bool>(),
    ) {
        let mode = if published { Mode::Published } else { Mode::Renormalized };
        let a = hop(n1, m1 as f64, 2, 1.0, rho1, db(s1), 1.0);
        let b = hop(n2, m2 as f64, 1, 2.0, rho2, db(s2), 0.5);
        let s = system(a, b, mode);
        let f = e2e_outage(&s, x).unwrap();
        let f1 = dist(a, mode).cdf(x);
        let f2 = dist(b, mode).cdf(x);
        prop_assert!(f >= f1.max(f2) - 1e-15);
        prop_assert!(f <= s.outage_ceiling() + 1e-12);
    }

    #[test]
    fn ser_is_monotone_in_snr(s in -10.0f64..30.0, ds in 0.5f64..10.0, rho in 0.0f64..0.9) {
        let p = hop(2, 1.0, 1, 1.0, rho, db(s), 1.0);
        let lo = hop_symbol_error(&dist(p, Mode::Renormalized), &ModulationScheme::Qpsk).unwrap().value;
        let hi = hop_symbol_error(&dist(HopParams { snr: db(s + ds), ..p }, Mode::Renormalized), &ModulationScheme::Qpsk).unwrap().value;
        prop_assert!(hi < lo);
    }
}

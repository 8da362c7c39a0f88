use proptest::prelude::*;

use rfi_qkd::channel::{
    n_photon_yield, simulate_observations, single_photon_error, transmittance, BasisPair,
    ChannelParams,
};
use rfi_qkd::decoy::estimate_all;
use rfi_qkd::optimizer::{evaluate, optimize, OptimizerConfig, Scenario};
use rfi_qkd::protocol::{is_feasible_for, ProtocolFamily, ProtocolParams};
use rfi_qkd::scan::{
    run_comparison, run_distance_scan, write_csv, DistanceGrid, ScanMode, ScanSpec,
};
use rfi_qkd::security::{SecurityConfig, SecurityMode};
use rfi_qkd::statistics::{bounded, FluctuationConfig};

fn quick() -> OptimizerConfig {
    OptimizerConfig {
        n_starts: 4,
        ..OptimizerConfig::default()
    }
}

/// Feasible RFI parameters built from free weights.
fn protocol() -> impl Strategy<Value = ProtocolParams> {
    (
        0.2..1.0f64,
        0.05..0.8f64,
        prop::array::uniform3(0.05..1.0f64),
        prop::array::uniform3(0.05..1.0f64),
        prop::array::uniform3(0.05..1.0f64),
        prop::array::uniform3(0.05..1.0f64),
    )
        .prop_map(|(mu, nu_frac, w, a_mu, a_nu, b)| {
            let norm = |v: [f64; 3]| {
                let s: f64 = v.iter().sum();
                [v[0] / s, v[1] / s]
            };
            let [p_mu, p_nu] = norm(w);
            let [p_za_mu, p_xa_mu] = norm(a_mu);
            let [p_za_nu, p_xa_nu] = norm(a_nu);
            let [p_zb, p_xb] = norm(b);
            ProtocolParams {
                mu,
                nu: mu * nu_frac,
                p_mu,
                p_nu,
                p_za_mu,
                p_xa_mu,
                p_za_nu,
                p_xa_nu,
                p_zb,
                p_xb,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn decoy_bounds_are_sound(
        proto in protocol(),
        d in 0.0..150.0f64,
        beta in 0.0..45.0f64,
        gamma in prop_oneof![Just(0.0), Just(5.0)],
    ) {
        let p = ChannelParams::table1(beta).unwrap();
        let stats = simulate_observations(&p, &proto, d).unwrap();
        let b = estimate_all(&stats, &proto, &FluctuationConfig::new(1e11, gamma).unwrap()).unwrap();
        let t = transmittance(&p, d).unwrap();
        let y1 = n_photon_yield(&p, t, 1);
        for pair in BasisPair::ALL {
            prop_assert!(b.y1_lower[&pair] <= y1);
            let mut e1 = (0.5 * p.y0() + single_photon_error(&p, pair) * t) / y1;
            if b.relabeled.contains(&pair) {
                e1 = 1.0 - e1;
            }
            prop_assert!(b.e1_upper[&pair] >= e1.min(0.5) - 1e-15, "{pair}: {} < {e1}", b.e1_upper[&pair]);
        }
    }

    #[test]
    fn bounds_are_ordered_and_widen_with_gamma(
        x in 1e-9..1.0f64,
        n in 1e3..1e14f64,
        g1 in 0.0..10.0f64,
        g2 in 0.0..10.0f64,
    ) {
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let a = bounded(x, n, lo).unwrap();
        let b = bounded(x, n, hi).unwrap();
        prop_assert!(0.0 <= a.lower && a.lower <= a.central && a.central <= a.upper && a.upper <= 1.0);
        prop_assert!(b.upper >= a.upper && b.lower <= a.lower);
    }
}

#[test]
fn y1_bound_is_tight_without_dark_counts() {
    let p = ChannelParams::new(0.145, 0.0, 0.015, 0.2, 0.0).unwrap();
    // the analytic bound loosens with ν: about 3% at ν = 0.1, 1.5% at ν = 0.05
    let proto = ProtocolParams {
        nu: 0.05,
        ..ProtocolParams::unbiased_baseline(0.5)
    };
    for d in [0.0, 25.0, 50.0, 75.0, 100.0] {
        let stats = simulate_observations(&p, &proto, d).unwrap();
        let b = estimate_all(
            &stats,
            &proto,
            &FluctuationConfig::asymptotic(1e11).unwrap(),
        )
        .unwrap();
        let truth = n_photon_yield(&p, transmittance(&p, d).unwrap(), 1);
        assert!(
            b.y1_zz_lower <= truth && b.y1_zz_lower >= 0.98 * truth,
            "{d} km"
        );
    }
}

#[test]
fn error_bound_degrades_with_gamma_and_few_pulses() {
    let p = ChannelParams::table1(10.0).unwrap();
    let proto = ProtocolParams::unbiased_baseline(0.5);
    let stats = simulate_observations(&p, &proto, 100.0).unwrap();
    let e1 = |n: f64, g: f64| {
        estimate_all(&stats, &proto, &FluctuationConfig::new(n, g).unwrap())
            .unwrap()
            .e1_upper[&BasisPair::ZZ]
    };
    for n in [1e9, 1e10, 1e11, 1e12] {
        assert!(e1(n, 0.0) <= e1(n, 2.0) && e1(n, 2.0) <= e1(n, 5.0));
        assert!(e1(n, 5.0) >= e1(n * 10.0, 5.0));
    }
}

#[test]
fn rate_falls_with_distance_at_fixed_parameters() {
    for mode in [
        SecurityMode::RfiEveInformation,
        SecurityMode::RfiLiteral,
        SecurityMode::Bb84,
    ] {
        let at = |d| Scenario::table1(10.0, d, mode).unwrap();
        let fixed = optimize(&at(50.0), &quick()).unwrap().params;
        let rates: Vec<f64> = [0.0, 25.0, 50.0, 75.0, 100.0]
            .iter()
            .map(|&d| evaluate(&fixed, &at(d)).unwrap().rate)
            .collect();
        assert!(rates.windows(2).all(|w| w[1] <= w[0]), "{mode}: {rates:?}");
    }
}

#[test]
fn security_modes_agree_on_a_perfect_channel() {
    let ideal = ChannelParams::new(1.0, 0.0, 0.0, 0.0, 0.0).unwrap();
    let report = |mode| {
        let s = Scenario::new(
            ideal,
            0.0,
            FluctuationConfig::asymptotic(1e11).unwrap(),
            SecurityConfig::default().with_mode(mode),
        )
        .unwrap();
        evaluate(&ProtocolParams::unbiased_baseline(0.5), &s).unwrap()
    };
    let ie = report(SecurityMode::RfiEveInformation);
    let literal = report(SecurityMode::RfiLiteral);
    assert_eq!(ie.e1_zz_upper, 0.0);
    assert!((ie.c_value.unwrap() - 2.0).abs() < 1e-12);
    assert!((ie.rate - literal.rate).abs() <= 1e-15);
}

#[test]
fn bb84_keys_at_50_km_and_suffers_from_rotation() {
    let rate = |beta, mode| {
        optimize(&Scenario::table1(beta, 50.0, mode).unwrap(), &quick())
            .unwrap()
            .report
            .rate
    };
    assert!(rate(0.0, SecurityMode::Bb84) > 0.0);
    assert!(rate(0.0, SecurityMode::RfiEveInformation) > 0.0);
    assert!(rate(20.0, SecurityMode::Bb84) < rate(0.0, SecurityMode::Bb84));
}

#[test]
fn more_starts_never_hurt() {
    let s = Scenario::table1(20.0, 80.0, SecurityMode::RfiEveInformation).unwrap();
    let mut last = 0.0;
    for n_starts in 1..=8 {
        let cfg = OptimizerConfig {
            n_starts,
            seed: 11,
            ..OptimizerConfig::default()
        };
        let r = optimize(&s, &cfg).unwrap().report.rate;
        assert!(r >= last, "{n_starts} starts: {r} < {last}");
        last = r;
    }
}

fn parse_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn scan_curves_fall_with_distance_and_rows_reparse_feasible() {
    let spec = ScanSpec {
        beta_list: vec![0.0, 20.0],
        distances: DistanceGrid {
            start: 0.0,
            stop: 250.0,
            step: 10.0,
        },
        ..ScanSpec::default()
    };
    let out = run_comparison(&spec).unwrap();
    assert!(out.rows.iter().all(|r| r.rate >= 0.0));

    for mode in [ScanMode::RfiBiased, ScanMode::Bb84Biased] {
        for beta in &spec.beta_list {
            let curve: Vec<f64> = out
                .rows
                .iter()
                .filter(|r| r.mode == mode && r.beta_deg == *beta)
                .map(|r| r.rate)
                .collect();
            assert!(
                curve.windows(2).all(|w| w[1] <= w[0]),
                "{mode} {beta}: {curve:?}"
            );
        }
    }
    // 250 km is far past the last key, so every curve was cut short
    assert_eq!(out.truncated.len(), 4);

    let mut buf = Vec::new();
    write_csv(&out.rows, &mut buf).unwrap();
    for fields in parse_rows(&String::from_utf8(buf).unwrap()) {
        let v: Vec<f64> = fields[5..15].iter().map(|s| s.parse().unwrap()).collect();
        let params = ProtocolParams::from_array(v.try_into().unwrap());
        let family = if fields[0] == "bb84-biased" {
            ProtocolFamily::Bb84
        } else {
            ProtocolFamily::Rfi
        };
        assert!(is_feasible_for(&params, family), "{fields:?}");
        assert_eq!(fields[15].is_empty(), family == ProtocolFamily::Bb84);
    }
}

#[test]
fn one_row_per_grid_tuple() {
    let spec = ScanSpec {
        mode: ScanMode::RfiUnbiased,
        beta_list: vec![0.0, 5.0, 10.0],
        distances: DistanceGrid {
            start: 0.0,
            stop: 40.0,
            step: 10.0,
        },
        ..ScanSpec::default()
    };
    let out = run_distance_scan(&spec).unwrap();
    assert_eq!(out.rows.len(), 15);
    assert!(out.truncated.is_empty());
    let single = run_distance_scan(&ScanSpec {
        distances: DistanceGrid::single(30.0),
        ..spec
    })
    .unwrap();
    assert_eq!(single.rows.len(), 3);
}

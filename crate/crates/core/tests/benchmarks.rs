mod common;

use common::{ev, hand_scenario};
use evcs_core::benchmarks::*;
use evcs_core::stage1::{run_stage1, FlexibilityBand};
use evcs_core::{run_two_stage, EngineOptions, PriceSeries, SyntheticConfig, TimeGrid};

fn band(p_check: &[f64], p_hat: &[f64]) -> FlexibilityBand {
    FlexibilityBand {
        x_hat: Vec::new(),
        x_check: Vec::new(),
        p_hat: p_hat.to_vec(),
        p_check: p_check.to_vec(),
        f_value: vec![0.0; p_hat.len()],
    }
}

#[test]
fn b1_band_opens_after_target_and_closes_at_the_limit() {
    let grid = TimeGrid::new(10, 1.0, 1).unwrap();
    let s = hand_scenario(grid, PriceSeries::constant(10, 0.1, 0.0, 0.4, 0.0), vec![ev(0, 1, 9, [10.0, 14.0, 0.0, 20.0], 2.0, 1.0)]);
    let r = b1_charge_first(&s);
    let width: Vec<f64> = r.p_hat.iter().zip(&r.p_check).map(|(h, c)| h - c).collect();
    assert_eq!(width, vec![0.0, 0.0, 2.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
}

#[test]
fn b1_band_is_open_from_arrival_without_required_charge() {
    let grid = TimeGrid::new(6, 1.0, 1).unwrap();
    let s = hand_scenario(grid, PriceSeries::constant(6, 0.1, 0.0, 0.4, 0.0), vec![ev(0, 2, 6, [10.0, 10.0, 0.0, 14.0], 2.0, 1.0)]);
    let r = b1_charge_first(&s);
    assert_eq!(r.p_check, vec![0.0; 6]);
    assert_eq!(r.p_hat, vec![0.0, 2.0, 2.0, 0.0, 0.0, 0.0]);
}

#[test]
fn b2_single_ev_with_ample_power() {
    let grid = TimeGrid::new(4, 1.0, 1).unwrap();
    let mut prices = PriceSeries::constant(4, 0.0, 0.0, 0.4, 0.0);
    prices.pi_e = vec![4.0, 3.0, 2.0, 1.0];
    let s = hand_scenario(grid, prices, vec![ev(0, 1, 4, [2.0, 4.0, 0.0, 8.0], 10.0, 1.0)]);
    let r = b2_offline_flex(&s).unwrap();
    // The lower profile's 2 kWh must sit under the upper one; the other
    // 4 kWh of the upper go to the dearest slot.
    assert!((r.value.unwrap() - 16.0).abs() < 1e-9, "{:?}", r.value);
    let lower: f64 = r.p_check.iter().sum();
    let upper: f64 = r.p_hat.iter().sum();
    assert!((lower - 2.0).abs() < 1e-9 && (upper - 6.0).abs() < 1e-9);
}

#[test]
fn b2_of_an_empty_fleet_is_zero() {
    let grid = TimeGrid::new(4, 1.0, 1).unwrap();
    let s = hand_scenario(grid, PriceSeries::constant(4, 0.1, 0.0, 0.4, 0.0), Vec::new());
    assert_eq!(b2_offline_flex(&s).unwrap().value, Some(0.0));
}

#[test]
fn online_and_charge_first_values_stay_below_b2() {
    for seed in 1..=5 {
        let s = SyntheticConfig { seed, evs: 8, slots: 24, ..Default::default() }.build().unwrap();
        let b2 = b2_offline_flex(&s).unwrap().value.unwrap();
        let online = run_stage1(&s).unwrap().band.f_value.iter().sum::<f64>();
        let b1 = b1_charge_first(&s).value.unwrap();
        assert!(online <= b2 + 1e-6, "seed {seed}: {online} > {b2}");
        assert!(b1 <= b2 + 1e-6, "seed {seed}: {b1} > {b2}");
        assert!(b2 <= b2_decoupled_bound(&s) + 1e-6);
    }
}

#[test]
fn full_day_b1_below_the_b2_bound() {
    let s = SyntheticConfig::default().build().unwrap();
    assert!(b1_charge_first(&s).value.unwrap() <= b2_decoupled_bound(&s));
    assert!(matches!(b2_offline_flex(&s), Err(evcs_core::Error::Lp(_))));
}

#[test]
fn b3_is_infeasible_when_starting_at_the_quota() {
    let mut s = SyntheticConfig { evs: 20, slots: 48, ..Default::default() }.build().unwrap();
    s.c_init = s.c_quota;
    let st = run_stage1(&s).unwrap();
    let r = b3_myopic(&s, &st.band);
    assert!(!r.feasible);
    assert!(r.cost.is_none());
    let m = b3_modified(&s, &st.band);
    assert!(m.feasible && m.cost.unwrap() > 0.0);
}

#[test]
fn b3_matches_b4_on_one_slot() {
    let grid = TimeGrid::new(1, 1.0, 1).unwrap();
    let s = hand_scenario(grid, PriceSeries::constant(1, 0.1, 0.05, 0.5, 1.0), Vec::new());
    let b = band(&[2.0], &[6.0]);
    let b3 = b3_myopic(&s, &b).cost.unwrap();
    let b4 = b4_offline_cost(&s, &b).unwrap().cost.unwrap();
    assert!((b3 - b4).abs() < 1e-9 && (b3 - 0.1).abs() < 1e-12);
}

#[test]
fn b3_modified_costs_more_than_proposed_on_a_full_day() {
    let s = SyntheticConfig::default().build().unwrap();
    let o = run_two_stage(&s, &EngineOptions::default()).unwrap();
    let m = b3_modified(&s, &o.stage1.band).cost.unwrap();
    assert!(m >= o.stage2.total_cost);
}

#[test]
fn b4_two_slot_instance_matches_grid_search() {
    let grid = TimeGrid::new(2, 1.0, 1).unwrap();
    let prices = PriceSeries {
        pi_e: vec![0.2, 0.1],
        pi_c: vec![0.05, 0.3],
        rho: vec![0.5, 0.5],
        pv_max: vec![0.0, 1.0],
    };
    let mut s = hand_scenario(grid, prices, Vec::new());
    s.c_init = 1.0;
    s.c_quota = 2.0;
    s.m_b_max = 1.0;
    let b = band(&[1.0, 0.0], &[3.0, 2.0]);
    let lp = b4_offline_cost(&s, &b).unwrap().cost.unwrap();

    let step = 0.05;
    let mut best = f64::INFINITY;
    let range = |lo: f64, hi: f64| (0..=((hi - lo) / step).round() as usize).map(move |k| lo + k as f64 * step);
    for p1 in range(1.0, 3.0) {
        for p2 in range(0.0, 2.0) {
            for m1 in range(0.0, 1.0) {
                for m2 in range(0.0, 1.0) {
                    let g1 = p1;
                    let g2 = (p2 - 1.0).max(0.0);
                    let c2 = 1.0 + 0.5 * g1 - m1;
                    let c3 = c2 + 0.5 * g2 - m2;
                    let ok = |c: f64| (-1e-12..=2.0 + 1e-12).contains(&c);
                    if ok(c2) && ok(c3) {
                        best = best.min(0.2 * g1 + 0.05 * m1 + 0.1 * g2 + 0.3 * m2);
                    }
                }
            }
        }
    }
    assert!((lp - best).abs() < 1e-9, "lp {lp} grid {best}");
}

#[test]
fn zero_prices_cost_nothing() {
    let grid = TimeGrid::new(3, 1.0, 1).unwrap();
    let s = hand_scenario(grid, PriceSeries::constant(3, 0.0, 0.0, 0.4, 0.0), Vec::new());
    let b = band(&[1.0, 0.0, 2.0], &[2.0, 1.0, 2.0]);
    assert_eq!(b4_offline_cost(&s, &b).unwrap().cost, Some(0.0));
}

#[test]
fn alpha_dispatch_interpolates() {
    let b = band(&[2.0, 0.0], &[10.0, 4.0]);
    assert_eq!(alpha_dispatch(&b, 0.0).unwrap(), b.p_check);
    assert_eq!(alpha_dispatch(&b, 1.0).unwrap(), b.p_hat);
    assert_eq!(alpha_dispatch(&b, 0.5).unwrap(), vec![6.0, 2.0]);
    assert!(alpha_dispatch(&b, 1.5).is_err());
}

#[test]
fn policies_round_trip_through_names() {
    for p in Policy::ALL {
        assert_eq!(p.name().parse::<Policy>().unwrap(), p);
    }
    assert!("b5".parse::<Policy>().is_err());
}

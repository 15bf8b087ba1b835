use gridedge::droop::{droop_gain, droop_setpoints, render_table, DroopParams, Setpoint};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::inverters::{reconstruct, BOARD, PF, TABLE};

fn ulp(x: f64) -> f64 {
    f64::from_bits(x.abs().to_bits() + 1) - x.abs()
}

fn circle_gap_ulps(s: &Setpoint, s_rate: f64) -> f64 {
    let lhs = s.p_ref * s.p_ref + s.q_ref * s.q_ref;
    let rhs = s_rate * s_rate;
    (lhs - rhs).abs() / ulp(rhs)
}

#[test]
fn reconstructed_capacities_are_whole_kva() {
    let caps: Vec<f64> = reconstruct().iter().map(|(p, _)| p.s_rate).collect();
    assert_eq!(caps, vec![15.0, 25.0, 21.0, 16.0]);
    for (&(p, q, _), s) in TABLE.iter().zip(&caps) {
        assert!(((p * p + q * q).sqrt() - s).abs() < 1e-3);
    }
}

#[test]
fn recovered_voltages() {
    let rows = reconstruct();
    assert!((rows[0].1 - 220.0).abs() < 1e-9);
    assert!((rows[3].1 - 204.0).abs() < 1e-3);
    for (_, u) in &rows {
        assert!((198.0..=242.0).contains(u));
    }
}

#[test]
fn table_and_board_output_reproduced() {
    for ((params, u), (&(_, _, k_tab), &(p_board, q_board))) in
        reconstruct().iter().zip(TABLE.iter().zip(&BOARD))
    {
        let s = droop_setpoints(params, *u).unwrap();
        assert!(
            (s.p_ref - p_board).abs() < 1e-4,
            "{}: p {} vs {}",
            params.id,
            s.p_ref,
            p_board
        );
        assert!(
            (s.q_ref - q_board).abs() < 1e-4,
            "{}: q {} vs {}",
            params.id,
            s.q_ref,
            q_board
        );
        assert_eq!(format!("{:.4}", s.k_q), format!("{:.4}", k_tab));
        assert_eq!(
            format!("{:.4}", droop_gain(params).unwrap()),
            format!("{:.4}", k_tab)
        );
        assert!(circle_gap_ulps(&s, params.s_rate) <= 8.0);
    }
}

#[test]
fn rendered_table_lines() {
    let rows = reconstruct();
    let setpoints: Vec<Setpoint> = rows
        .iter()
        .map(|(p, u)| droop_setpoints(p, *u).unwrap())
        .collect();
    let text = render_table(&setpoints);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "Pref:          Qref:");
    assert_eq!(lines[1], "15.00000        0.00000");
    assert_eq!(lines[2], "21.93171      -12.00000");
    for line in &lines[1..] {
        for field in line.split_whitespace() {
            assert_eq!(field.split('.').nth(1).unwrap().len(), 5);
        }
    }
}

#[test]
fn circle_identity_on_random_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let s_rate = rng.gen_range(1.0..200.0);
        let a = rng.gen_range(-1.0..1.0) * s_rate;
        let b = rng.gen_range(-1.0..1.0) * s_rate;
        let u_min = rng.gen_range(150.0..230.0);
        let params = DroopParams {
            id: format!("r{i}"),
            s_rate,
            q_min: a.min(b),
            q_max: a.max(b),
            u_min,
            u_max: u_min + rng.gen_range(1.0..80.0),
        };
        if params.validate().is_err() {
            continue;
        }
        let u = rng.gen_range(params.u_min - 20.0..params.u_max + 20.0);
        let s = droop_setpoints(&params, u).unwrap();
        worst = worst.max(circle_gap_ulps(&s, s_rate));
    }
    assert!(worst <= 8.0, "worst circle gap {worst} ulp");
}

fn arb_params() -> impl Strategy<Value = DroopParams> {
    (
        1.0f64..100.0,
        -1.0f64..1.0,
        -1.0f64..1.0,
        180.0f64..220.0,
        0.5f64..60.0,
    )
        .prop_filter("distinct limits", |(_, a, b, _, _)| (a - b).abs() > 1e-6)
        .prop_map(|(s, a, b, u_min, width)| DroopParams {
            id: "p".into(),
            s_rate: s,
            q_min: a.min(b) * s,
            q_max: a.max(b) * s,
            u_min,
            u_max: u_min + width,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn q_non_increasing_in_voltage(params in arb_params(), u1 in 100.0f64..300.0, u2 in 100.0f64..300.0) {
        let (lo, hi) = if u1 <= u2 { (u1, u2) } else { (u2, u1) };
        let a = droop_setpoints(&params, lo).unwrap();
        let b = droop_setpoints(&params, hi).unwrap();
        prop_assert!(b.q_ref <= a.q_ref);
        if lo > params.u_min && hi < params.u_max && hi - lo > 1e-6 {
            prop_assert!(b.q_ref < a.q_ref);
        }
    }

    #[test]
    fn band_ends_are_exact(params in arb_params()) {
        let at_min = droop_setpoints(&params, params.u_min).unwrap();
        let at_max = droop_setpoints(&params, params.u_max).unwrap();
        prop_assert_eq!(at_min.q_ref, params.q_max);
        prop_assert_eq!(at_max.q_ref, params.q_min);
    }

    #[test]
    fn clamp_keeps_outputs_in_range(params in arb_params(), u in -1e6f64..1e6) {
        let s = droop_setpoints(&params, u).unwrap();
        prop_assert!(s.q_ref >= params.q_min && s.q_ref <= params.q_max);
        prop_assert!(s.p_ref >= 0.0 && s.p_ref <= params.s_rate);
        prop_assert!(circle_gap_ulps(&s, params.s_rate) <= 8.0);
    }
}

#[test]
fn non_finite_voltage_rejected() {
    let p = DroopParams::from_power_factor("x", 10.0, PF);
    for u in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY] {
        assert!(droop_setpoints(&p, u).is_err());
    }
}

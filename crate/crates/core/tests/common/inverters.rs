//! Four-inverter reference case rebuilt from its published setpoint table.

use gridedge::droop::DroopParams;

pub const PF: f64 = 0.85;

// Setpoint table: (P kW, Q kVar, k_q kVar/V) per inverter.
pub const TABLE: [(f64, f64, f64); 4] = [
    (15.0000, 0.0000, 0.3592),
    (21.9317, -12.0000, 0.5986),
    (18.7283, -9.5000, 0.5028),
    (14.7792, 6.1298, 0.3831),
];

// Printed board output, five decimals.
pub const BOARD: [(f64, f64); 4] = [
    (15.00000, 0.00000),
    (21.93171, -12.00000),
    (18.72832, -9.50000),
    (14.77921, 6.12983),
];

/// Rebuilds each inverter from its table row: S from the P/Q pair, limits
/// from the 0.85 power factor, and the measured voltage by inverting the
/// droop line at the tabulated Q.
pub fn reconstruct() -> Vec<(DroopParams, f64)> {
    TABLE
        .iter()
        .enumerate()
        .map(|(i, &(p, q, _))| {
            let s = (p * p + q * q).sqrt().round();
            let params = DroopParams::from_power_factor(format!("inv{}", i + 1), s, PF);
            let q_lim = s * (1.0 - PF * PF).sqrt();
            let k = 2.0 * q_lim / (242.0 - 198.0);
            let u = 242.0 - (q + q_lim) / k;
            (params, u)
        })
        .collect()
}

/// Recovered voltages at the precision passed on the command line.
pub const VOLTAGES_ARG: &str = "220,240.046217,238.892764,204";

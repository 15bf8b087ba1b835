//! Synthetic smart-meter data for a single grid-tied PV inverter.
//!
//! Produces 15-minute records with the standard column layout plus grid
//! frequency and inverter temperature, so the feature vector has twelve
//! entries. Active power follows a clear-sky bell shaped by day-to-day and
//! intraday cloudiness; the terminal voltage rises with injected power; the
//! reactive power follows a V-Q droop law. Cells can optionally be blanked or
//! corrupted to exercise the cleaning and imputation stages.

use std::io::Write;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataio::{ColumnSpec, Kind, Role, Schema};
use crate::droop::{droop_setpoints, DroopParams};

pub const INTERVALS_PER_DAY: usize = 96;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub days: usize,
    /// kVA
    pub capacity: f64,
    pub seed: u64,
    /// Fraction of feature/target cells left empty.
    pub missing_fraction: f64,
    /// Fraction of feature/target cells overwritten with an implausible value.
    pub corrupt_fraction: f64,
    pub start: NaiveDateTime,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            days: 30,
            capacity: 25.0,
            seed: 2024,
            missing_fraction: 0.0,
            corrupt_fraction: 0.0,
            start: NaiveDate::from_ymd_opt(2024, 5, 1)
                .unwrap()
                .and_hms_opt(0, 0, 0)
                .unwrap(),
        }
    }
}

/// Column order of the generated CSV after the timestamp.
pub const COLUMNS: [&str; 13] = [
    "va",
    "vb",
    "vc",
    "ia",
    "ib",
    "ic",
    "pf",
    "p_set_prev",
    "q_set_prev",
    "f_hz",
    "t_inv",
    "p",
    "q",
];

/// Schema matching [`write_csv`] output: the standard layout plus `f_hz` and
/// `t_inv`, twelve features in total.
pub fn schema(capacity: f64) -> Schema {
    let mut s = Schema::standard(capacity);
    let at = s.columns.iter().position(|c| c.name == "p").unwrap();
    s.columns
        .insert(at, ColumnSpec::new("f_hz", Role::Feature, Kind::Other));
    s.columns
        .insert(at + 1, ColumnSpec::new("t_inv", Role::Feature, Kind::Other));
    s
}

fn ar1(prev: f64, rho: f64, noise: f64) -> f64 {
    rho * prev + (1.0 - rho * rho).sqrt() * noise
}

pub fn write_csv<W: Write>(w: W, cfg: &SynthConfig) -> csv::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let s = cfg.capacity;
    let droop = DroopParams::from_power_factor("synthetic", s, 0.85);
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["timestamp"];
    header.extend(COLUMNS);
    wtr.write_record(&header)?;

    let mut cloud_state = 0.0;
    let mut load_state = 0.0;
    let (mut p_prev, mut q_prev) = (0.0, 0.0);
    let mut day_clear = 1.0;
    for k in 0..cfg.days * INTERVALS_PER_DAY {
        let slot = k % INTERVALS_PER_DAY;
        if slot == 0 {
            day_clear = rng.gen_range(0.45..1.0);
        }
        let hour = slot as f64 / 4.0;
        let sun = ((hour - 6.0) / 12.0 * std::f64::consts::PI).sin().max(0.0);
        cloud_state = ar1(cloud_state, 0.9, unit.sample(&mut rng));
        let cloud = (day_clear - 0.12 * cloud_state.abs()).clamp(0.1, 1.0);
        let p = (0.92 * s * sun.powf(1.3) * cloud).clamp(0.0, s);

        load_state = ar1(load_state, 0.95, unit.sample(&mut rng));
        let evening = (-(hour - 19.5).powi(2) / 4.0).exp();
        let base_v = 226.0 - 9.0 * evening + 2.0 * load_state;
        let v_avg = base_v + 0.9 * p + 0.4 * unit.sample(&mut rng);
        let q_droop = droop_setpoints(&droop, v_avg)
            .expect("valid droop params")
            .q_ref;
        let q_room = (s * s - p * p).max(0.0).sqrt();
        let q = (q_droop * (0.3 + 0.7 * sun) + 0.05 * unit.sample(&mut rng)).clamp(-q_room, q_room);

        let phase_v: Vec<f64> = (0..3)
            .map(|_| v_avg * (1.0 + 0.004 * unit.sample(&mut rng)))
            .collect();
        let apparent = (p * p + q * q).sqrt();
        let phase_i: Vec<f64> = phase_v
            .iter()
            .map(|v| {
                (1000.0 * apparent / (3.0 * v) * (1.0 + 0.01 * unit.sample(&mut rng))).max(0.0)
            })
            .collect();
        let pf = if apparent > 1e-9 { p / apparent } else { 1.0 };
        let f_hz = 50.0 + 0.02 * unit.sample(&mut rng);
        let ambient = 18.0 + 8.0 * ((hour - 9.0) / 24.0 * 2.0 * std::f64::consts::PI).sin();
        let t_inv = ambient + 25.0 * p / s + 0.5 * unit.sample(&mut rng);

        let mut values = [
            phase_v[0], phase_v[1], phase_v[2], phase_i[0], phase_i[1], phase_i[2], pf, p_prev,
            q_prev, f_hz, t_inv, p, q,
        ]
        .map(Some);
        for (j, cell) in values.iter_mut().enumerate() {
            let u: f64 = rng.gen();
            if u < cfg.missing_fraction {
                *cell = None;
            } else if u < cfg.missing_fraction + cfg.corrupt_fraction {
                // only columns with plausibility bounds get corrupted
                let bad = match COLUMNS[j] {
                    "va" | "vb" | "vc" => Some(999.0),
                    "pf" => Some(3.5),
                    "p_set_prev" | "q_set_prev" | "p" | "q" => Some(10.0 * s),
                    _ => None,
                };
                if bad.is_some() {
                    *cell = bad;
                }
            }
        }
        p_prev = p;
        q_prev = q;

        let ts = cfg.start + Duration::minutes(15 * k as i64);
        let mut row = vec![ts.format("%Y-%m-%dT%H:%M:%S").to_string()];
        row.extend(
            values
                .iter()
                .map(|v| v.map_or(String::new(), |x| format!("{x:.6}"))),
        );
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

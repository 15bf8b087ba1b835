//! V-Q droop control for grid-tied PV inverters.
//!
//! The reactive setpoint falls linearly with measured voltage across the
//! allowed band and is clamped to the inverter's reactive limits; the active
//! setpoint takes the remaining apparent-power capacity:
//!
//! ```text
//! k_q   = (Q_max - Q_min) / (U_max - U_min)
//! Q_ref = clamp(Q_min + k_q (U_max - U_meas), Q_min, Q_max)
//! P_ref = sqrt(S_rate² - Q_ref²)
//! ```
//!
//! Units at this interface are volts, kW, kVar and kVA.
//!
//! [`power_flow_exact`] and [`power_flow_approx`] give the line power
//! equations the droop law is derived from.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DroopError {
    #[error("degenerate voltage band: u_min = u_max = {0}")]
    DegenerateBand(f64),
    #[error("invalid droop parameters for inverter {id}: {reason}")]
    InvalidParams { id: String, reason: String },
    #[error("measured voltage is not finite")]
    NonFiniteVoltage,
    #[error("line {0} must be positive")]
    NonPositiveImpedance(&'static str),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Io(String),
}

/// Lower bound of the default voltage band, 0.9 pu of 220 V.
pub const DEFAULT_U_MIN: f64 = 198.0;
/// Upper bound of the default voltage band, 1.1 pu of 220 V.
pub const DEFAULT_U_MAX: f64 = 242.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroopParams {
    pub id: String,
    /// Apparent-power rating, kVA.
    pub s_rate: f64,
    /// Reactive limits, kVar.
    pub q_min: f64,
    pub q_max: f64,
    /// Allowed voltage band, V.
    pub u_min: f64,
    pub u_max: f64,
}

impl DroopParams {
    /// Symmetric reactive limits `±s_rate·sin(arccos pf)` on the default
    /// 198–242 V band.
    pub fn from_power_factor(id: impl Into<String>, s_rate: f64, pf: f64) -> Self {
        let q = s_rate * pf.acos().sin();
        Self {
            id: id.into(),
            s_rate,
            q_min: -q,
            q_max: q,
            u_min: DEFAULT_U_MIN,
            u_max: DEFAULT_U_MAX,
        }
    }

    pub fn validate(&self) -> Result<(), DroopError> {
        let fail = |reason: &str| {
            Err(DroopError::InvalidParams {
                id: self.id.clone(),
                reason: reason.to_string(),
            })
        };
        let values = [self.s_rate, self.q_min, self.q_max, self.u_min, self.u_max];
        if values.iter().any(|v| !v.is_finite()) {
            return fail("all parameters must be finite");
        }
        if self.s_rate <= 0.0 {
            return fail("s_rate must be positive");
        }
        if self.q_min >= self.q_max {
            return fail("q_min must be below q_max");
        }
        if self.u_min == self.u_max {
            return Err(DroopError::DegenerateBand(self.u_min));
        }
        if self.u_min > self.u_max {
            return fail("u_min must be below u_max");
        }
        if self.q_min.abs().max(self.q_max.abs()) > self.s_rate {
            return fail("reactive limit exceeds s_rate");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Setpoint {
    /// kW
    pub p_ref: f64,
    /// kVar
    pub q_ref: f64,
    /// kVar/V
    pub k_q: f64,
}

pub fn droop_gain(params: &DroopParams) -> Result<f64, DroopError> {
    if params.u_max == params.u_min {
        return Err(DroopError::DegenerateBand(params.u_min));
    }
    params.validate()?;
    Ok((params.q_max - params.q_min) / (params.u_max - params.u_min))
}

pub fn droop_setpoints(params: &DroopParams, u_meas: f64) -> Result<Setpoint, DroopError> {
    if !u_meas.is_finite() {
        return Err(DroopError::NonFiniteVoltage);
    }
    let k_q = droop_gain(params)?;
    // Anchor the band ends exactly; the general formula can round at U_min.
    let q_raw = if u_meas == params.u_max {
        params.q_min
    } else if u_meas == params.u_min {
        params.q_max
    } else {
        params.q_min + k_q * (params.u_max - u_meas)
    };
    let q_ref = q_raw.clamp(params.q_min, params.q_max);
    // |q_ref| <= s_rate by the parameter invariant, so the radicand is >= 0
    let p_ref = (params.s_rate * params.s_rate - q_ref * q_ref)
        .sqrt()
        .clamp(0.0, params.s_rate);
    Ok(Setpoint { p_ref, q_ref, k_q })
}

/// Voltage at which the droop line yields `q_ref` (inverse of the
/// unclamped law).
pub fn voltage_for_q(params: &DroopParams, q_ref: f64) -> Result<f64, DroopError> {
    let k_q = droop_gain(params)?;
    Ok(params.u_max - (q_ref - params.q_min) / k_q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineModel {
    /// Grid-side voltage, V.
    pub u_g: f64,
    /// Inverter-side voltage, V.
    pub u: f64,
    /// Impedance magnitude |R + jX|, Ω.
    pub z: f64,
    /// Impedance angle, rad.
    pub theta: f64,
    /// Power angle, rad.
    pub delta: f64,
    /// Reactance used by the small-angle approximation, Ω.
    pub x: f64,
}

/// Exact active and reactive line power for an impedance `Z∠θ`.
pub fn power_flow_exact(line: &LineModel) -> Result<(f64, f64), DroopError> {
    if line.z.is_nan() || line.z <= 0.0 {
        return Err(DroopError::NonPositiveImpedance("impedance z"));
    }
    let a = line.u_g * line.u / line.z;
    let radial = a * line.delta.cos() - line.u_g * line.u_g / line.z;
    let tangential = a * line.delta.sin();
    let (sin_t, cos_t) = line.theta.sin_cos();
    let p = radial * cos_t + tangential * sin_t;
    let q = radial * sin_t - tangential * cos_t;
    Ok((p, q))
}

/// Small-angle approximation for a mainly inductive line:
/// `P = U_g U δ / X`, `Q = U_g (U - U_g) / X`.
pub fn power_flow_approx(line: &LineModel) -> Result<(f64, f64), DroopError> {
    if line.x.is_nan() || line.x <= 0.0 {
        return Err(DroopError::NonPositiveImpedance("reactance x"));
    }
    let p = line.u_g * line.u / line.x * line.delta;
    let q = line.u_g * (line.u - line.u_g) / line.x;
    Ok((p, q))
}

// ---------------------------------------------------------------------------
// Parameter files and setpoint output
// ---------------------------------------------------------------------------

/// Reads a droop parameter file.
///
/// The file is CSV with the header `id,s_rate,q_min,q_max,u_min,u_max`, one
/// inverter per row. Lines starting with `#` are comments. Every record is
/// validated.
pub fn read_params<R: std::io::Read>(reader: R) -> Result<Vec<DroopParams>, DroopError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.deserialize::<DroopParams>() {
        let p = rec.map_err(|e| DroopError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}

pub fn read_params_file(path: &std::path::Path) -> Result<Vec<DroopParams>, DroopError> {
    let f = std::fs::File::open(path)
        .map_err(|e| DroopError::Io(format!("{}: {e}", path.display())))?;
    read_params(std::io::BufReader::new(f))
}

/// Parses a comma-separated voltage list such as `220,240.05`.
pub fn parse_voltages(list: &str) -> Result<Vec<f64>, DroopError> {
    list.split(',')
        .enumerate()
        .map(|(i, s)| {
            s.trim().parse::<f64>().map_err(|e| DroopError::Parse {
                line: i + 1,
                message: format!("voltage {:?}: {e}", s.trim()),
            })
        })
        .collect()
}

/// Rounds away values that would print as `-0.00000`.
fn five_dp(v: f64) -> String {
    let s = format!("{v:.5}");
    if s.trim_start_matches('-')
        .chars()
        .all(|c| c == '0' || c == '.')
    {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

/// Renders setpoints as the two-column `Pref:` / `Qref:` table, five decimals.
pub fn render_table(setpoints: &[Setpoint]) -> String {
    let mut out = String::from("Pref:          Qref:\n");
    for s in setpoints {
        out.push_str(&format!(
            "{:<14}{:>9}\n",
            five_dp(s.p_ref),
            five_dp(s.q_ref)
        ));
    }
    out
}

/// CSV with `id,u_meas,p_ref,q_ref,k_q`, full precision.
pub fn write_csv<W: Write>(
    w: W,
    params: &[DroopParams],
    voltages: &[f64],
    setpoints: &[Setpoint],
) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["id", "u_meas", "p_ref", "q_ref", "k_q"])?;
    for ((p, u), s) in params.iter().zip(voltages).zip(setpoints) {
        wtr.write_record([
            p.id.clone(),
            u.to_string(),
            s.p_ref.to_string(),
            s.q_ref.to_string(),
            s.k_q.to_string(),
        ])?;
    }
    wtr.flush()
}

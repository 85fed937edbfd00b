//! Control-performance metrics shared by every engine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative half-width of the settling band.
pub const SETTLING_BAND: f64 = 0.05;

/// Time from `origin` after which `values` stay within ±5% of their final
/// value. Returns 0 if the signal never leaves the band after `origin`.
pub fn settling_time(times: &[f64], values: &[f64], origin: f64) -> Result<f64> {
    check_pair(times, values)?;
    let last = *values.last().unwrap();
    let band = SETTLING_BAND * last.abs();
    let mut settle = origin;
    for (i, (&t, &v)) in times.iter().zip(values).enumerate() {
        if t < origin {
            continue;
        }
        if (v - last).abs() > band {
            settle = times.get(i + 1).copied().unwrap_or(t);
        }
    }
    Ok(settle - origin)
}

/// (max − final)/final after `origin`, floored at zero.
pub fn overshoot(times: &[f64], values: &[f64], origin: f64) -> Result<f64> {
    check_pair(times, values)?;
    let last = *values.last().unwrap();
    if last == 0.0 {
        return Ok(0.0);
    }
    let peak = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= origin)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(((peak - last) / last.abs()).max(0.0))
}

/// |value − setpoint|/setpoint, in percent.
pub fn steady_state_error_pct(value: f64, setpoint: f64) -> f64 {
    if setpoint == 0.0 {
        return if value == 0.0 { 0.0 } else { f64::INFINITY };
    }
    100.0 * (value - setpoint).abs() / setpoint.abs()
}

pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::EmptyData("rmse needs two equal-length non-empty series".into()));
    }
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((ss / a.len() as f64).sqrt())
}

pub fn mean(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptyData("mean of an empty set".into()));
    }
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Sample coefficient of variation (n − 1 denominator); needs two values.
pub fn cv(v: &[f64]) -> Result<f64> {
    if v.len() < 2 {
        return Err(Error::EmptyData("coefficient of variation needs at least two replicates".into()));
    }
    let m = mean(v)?;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    Ok(if m == 0.0 { 0.0 } else { var.sqrt() / m.abs() })
}

/// Least-squares line y = a + b·x; returns (a, b, R²).
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() < 2 || x.len() != y.len() {
        return Err(Error::EmptyData("linear fit needs at least two paired points".into()));
    }
    let mx = mean(x)?;
    let my = mean(y)?;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::EmptyData("linear fit needs at least two distinct x values".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok((my - slope * mx, slope, r2))
}

/// R² of the best linear input-output fit.
pub fn r_squared(x: &[f64], y: &[f64]) -> Result<f64> {
    linear_fit(x, y).map(|f| f.2)
}

/// (max − min)/min, the spread statistic used for composition sweeps.
pub fn spread(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptyData("spread of an empty set".into()));
    }
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(if lo > 0.0 { (hi - lo) / lo } else { f64::INFINITY })
}

pub fn is_monotone(v: &[f64], increasing: bool) -> bool {
    v.windows(2).all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] })
}

fn check_pair(times: &[f64], values: &[f64]) -> Result<()> {
    if times.is_empty() || times.len() != values.len() {
        return Err(Error::EmptyData("metric needs non-empty equal-length series".into()));
    }
    Ok(())
}

/// One row of metrics.csv. Fields that do not apply to a run are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub settling_time_min: Option<f64>,
    pub overshoot_pct: Option<f64>,
    pub steady_state_error_pct: Option<f64>,
    pub rmse: Option<f64>,
    pub cv: Option<f64>,
    pub r_squared: Option<f64>,
    pub dynamic_range: Option<f64>,
    pub final_xc: Option<f64>,
}

impl MetricsReport {
    pub const HEADER: [&'static str; 9] = [
        "label",
        "settling_time_min",
        "overshoot_pct",
        "steady_state_error_pct",
        "rmse",
        "cv",
        "r_squared",
        "dynamic_range",
        "final_xc",
    ];

    pub fn values(&self) -> [Option<f64>; 8] {
        [
            self.settling_time_min,
            self.overshoot_pct,
            self.steady_state_error_pct,
            self.rmse,
            self.cv,
            self.r_squared,
            self.dynamic_range,
            self.final_xc,
        ]
    }

    /// Every populated metric is finite.
    pub fn is_finite(&self) -> bool {
        self.values().iter().flatten().all(|v| v.is_finite())
    }
}

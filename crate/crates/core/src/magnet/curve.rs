use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Piecewise-linear μ(s) on increasing knots 0 = s₀ < … < s_K = H_max,
/// constant beyond H_max and clamped to [lower, upper].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermeabilityCurve {
    knots: Vec<f64>,
    values: Vec<f64>,
    lower: f64,
    upper: f64,
}

/// Interpolation of knot values at one point: value = v_k + t·(v_{k+1} − v_k).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Interp {
    pub k: usize,
    pub t: f64,
    pub value: f64,
    /// dμ/ds; zero beyond the last knot.
    pub slope: f64,
}

pub(crate) fn check_knots(knots: &[f64]) -> Result<()> {
    if knots.len() < 2 {
        return Err(Error::InvalidArgument("a curve needs at least two knots".into()));
    }
    if knots[0] != 0.0 || knots.windows(2).any(|w| !(w[1] > w[0])) || !knots[knots.len() - 1].is_finite() {
        return Err(Error::InvalidArgument("knots must start at 0 and increase strictly".into()));
    }
    Ok(())
}

pub(crate) fn interpolate(knots: &[f64], values: &[f64], s: f64) -> Interp {
    let last = knots.len() - 1;
    if s >= knots[last] {
        return Interp { k: last - 1, t: 1.0, value: values[last], slope: 0.0 };
    }
    let k = knots.partition_point(|&v| v <= s).saturating_sub(1).min(last - 1);
    let w = knots[k + 1] - knots[k];
    let dv = values[k + 1] - values[k];
    let t = ((s - knots[k]) / w).max(0.0);
    Interp { k, t, value: values[k] + t * dv, slope: dv / w }
}

/// `count` uniform knots on [0, h_max].
pub fn uniform_knots(h_max: f64, count: usize) -> Result<Vec<f64>> {
    if !(h_max > 0.0) || count < 2 {
        return Err(Error::InvalidArgument(format!("need h_max > 0 and ≥ 2 knots, got {h_max}, {count}")));
    }
    Ok((0..count).map(|k| h_max * k as f64 / (count - 1) as f64).collect())
}

impl PermeabilityCurve {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, lower: f64, upper: f64) -> Result<Self> {
        check_knots(&knots)?;
        if values.len() != knots.len() {
            return Err(Error::InvalidArgument(format!("{} knots but {} values", knots.len(), values.len())));
        }
        if !(lower > 0.0 && lower <= upper && upper.is_finite()) {
            return Err(Error::InvalidArgument(format!("need 0 < lower ≤ upper, got [{lower}, {upper}]")));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= lower && **v <= upper)) {
            return Err(Error::InvalidArgument(format!("knot value {v} outside [{lower}, {upper}]")));
        }
        Ok(Self { knots, values, lower, upper })
    }

    /// Samples `f` at uniform knots.
    pub fn sampled(h_max: f64, count: usize, lower: f64, upper: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let knots = uniform_knots(h_max, count)?;
        let values = knots.iter().map(|&s| f(s)).collect();
        Self::new(knots, values, lower, upper)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn h_max(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    pub fn eval(&self, s: f64) -> f64 {
        interpolate(&self.knots, &self.values, s).value.clamp(self.lower, self.upper)
    }
}

/// Covered |H| range of a reconstruction: the union over experiments of
/// [min, max] of |H_i| over cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustRegion {
    pub intervals: Vec<(f64, f64)>,
}

impl TrustRegion {
    pub fn contains(&self, s: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| s >= a && s <= b)
    }

    /// Smallest interval containing the region.
    pub fn hull(&self) -> (f64, f64) {
        self.intervals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(l, u)| (a.min(l), b.max(u)))
    }

    /// Whether the interpolation support of knot k meets the region.
    pub fn supports_knot(&self, knots: &[f64], k: usize) -> bool {
        let a = if k == 0 { knots[0] } else { knots[k - 1] };
        let b = if k + 1 == knots.len() { f64::INFINITY } else { knots[k + 1] };
        self.intervals.iter().any(|&(l, u)| a <= u && l <= b)
    }

    /// Sample points: `per_interval` uniform points in each interval.
    pub fn samples(&self, per_interval: usize) -> Vec<f64> {
        self.intervals
            .iter()
            .flat_map(|&(a, b)| (0..per_interval).map(move |k| a + (b - a) * k as f64 / (per_interval.max(2) - 1) as f64))
            .collect()
    }
}

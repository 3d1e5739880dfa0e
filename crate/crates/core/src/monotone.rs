//! Monotonization of estimated CDF curves: rearrangement through the
//! generalized inverse on a discrete level grid, and isotonic least squares
//! by pool-adjacent-violators.

use std::fmt;
use std::str::FromStr;

use crate::driver::{CdfCurve, ThresholdGrid};
use crate::error::{DrError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonotoneMethod {
    Rearranged,
    Isotonic,
    /// The raw curve was passed through unchanged (apart from clamping).
    NoneNeeded,
}

/// A nondecreasing curve with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCurve {
    pub grid: ThresholdGrid,
    pub values: Vec<f64>,
    pub method: MonotoneMethod,
}

/// User-facing choice of monotonization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Monotonizer {
    Isotonic,
    Rearrange,
    None,
}

impl Monotonizer {
    pub fn name(self) -> &'static str {
        match self {
            Monotonizer::Isotonic => "isotonic",
            Monotonizer::Rearrange => "rearrange",
            Monotonizer::None => "none",
        }
    }

    /// Monotonizes raw values on `grid`. `None` clamps only and does not
    /// guarantee monotonicity.
    pub fn apply_values(self, values: &[f64], levels: &[f64]) -> Vec<f64> {
        match self {
            Monotonizer::Isotonic => clamp_values(pava(values, None)),
            Monotonizer::Rearrange => rearrange_values(values, levels),
            Monotonizer::None => clamp_values(values.to_vec()),
        }
    }
}

impl fmt::Display for Monotonizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Monotonizer {
    type Err = DrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "isotonic" | "pava" => Ok(Monotonizer::Isotonic),
            "rearrange" | "rearrangement" | "rearranged" => Ok(Monotonizer::Rearrange),
            "none" | "raw" => Ok(Monotonizer::None),
            other => Err(DrError::InvalidInput(format!("unknown monotonizer '{other}'"))),
        }
    }
}

/// 99 equidistant levels on `[0.01, 0.99]`.
pub fn default_levels() -> Vec<f64> {
    (1..=99).map(|j| j as f64 / 100.0).collect()
}

/// `m` equidistant levels on `[a, b]`, validated to be strictly inside `(0, 1)`.
/// Levels are rounded to 12 decimals so that `0.01:0.99:99` yields `0.5` exactly.
pub fn linspace_levels(a: f64, b: f64, m: usize) -> Result<Vec<f64>> {
    let round = |v: f64| (v * 1e12).round() / 1e12;
    let levels: Vec<f64> = match m {
        0 => vec![],
        1 => vec![a],
        _ => (0..m).map(|j| round(a + (b - a) * j as f64 / (m - 1) as f64)).collect(),
    };
    check_levels(&levels)?;
    Ok(levels)
}

/// Parses `a:b:m`.
pub fn parse_levels(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || DrError::InvalidInput(format!("levels must look like a:b:m, got '{spec}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let m: usize = parts[2].trim().parse().map_err(|_| bad())?;
    linspace_levels(a, b, m)
}

/// Levels must be nonempty, strictly increasing and strictly inside `(0, 1)`.
pub fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(DrError::InvalidInput("quantile level grid is empty".into()));
    }
    if levels.iter().any(|&u| !(u > 0.0 && u < 1.0)) {
        return Err(DrError::InvalidInput("quantile levels must lie in (0, 1)".into()));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DrError::InvalidInput("quantile levels must be strictly increasing".into()));
    }
    Ok(())
}

/// `F̃(y_j) = #{u ∈ levels : Q̂(u) ≤ y_j} / |levels|` with
/// `Q̂(u) = min{y_i : F(y_i) ≥ u}`.
///
/// `Q̂(u) ≤ y_j` exactly when some `F(y_i) ≥ u` with `i ≤ j`, so the count is
/// taken against the running maximum.
pub fn rearrange_values(values: &[f64], levels: &[f64]) -> Vec<f64> {
    let l = levels.len() as f64;
    let mut running = f64::NEG_INFINITY;
    values
        .iter()
        .map(|&v| {
            running = running.max(v);
            levels.partition_point(|&u| u <= running) as f64 / l
        })
        .collect()
}

/// Rearranged curve on the curve's grid.
pub fn rearrange(curve: &CdfCurve, levels: &[f64]) -> Result<MonotoneCurve> {
    check_levels(levels)?;
    Ok(MonotoneCurve {
        grid: curve.grid.clone(),
        values: rearrange_values(&curve.values, levels),
        method: MonotoneMethod::Rearranged,
    })
}

/// Weighted least-squares projection onto nondecreasing sequences.
///
/// Stack-based pool-adjacent-violators; linear in `values.len()`.
pub fn pava(values: &[f64], weights: Option<&[f64]>) -> Vec<f64> {
    if let Some(w) = weights {
        assert_eq!(w.len(), values.len(), "weights length");
    }
    // blocks of (weighted mean, total weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (i, &v) in values.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        let mut cur = (v, w, 1usize);
        while let Some(&(pm, pw, pl)) = blocks.last() {
            if pm <= cur.0 {
                break;
            }
            blocks.pop();
            let tw = pw + cur.1;
            cur = ((pm * pw + cur.0 * cur.1) / tw, tw, pl + cur.2);
        }
        blocks.push(cur);
    }
    let mut out = Vec::with_capacity(values.len());
    for (m, _, len) in blocks {
        out.extend(std::iter::repeat_n(m, len));
    }
    out
}

/// Isotonic fit for observations keyed by possibly tied, sorted `keys`.
///
/// Tied keys are merged into one weighted point first, so the fitted values
/// agree across each tie.
pub fn isotonic_with_ties(keys: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    if keys.len() != values.len() {
        return Err(DrError::InvalidInput("keys and values differ in length".into()));
    }
    if keys.windows(2).any(|w| w[0] > w[1]) {
        return Err(DrError::InvalidInput("keys must be sorted".into()));
    }
    let mut merged: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut sizes: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < keys.len() {
        let mut j = i;
        while j < keys.len() && keys[j] == keys[i] {
            j += 1;
        }
        let count = (j - i) as f64;
        merged.push(values[i..j].iter().sum::<f64>() / count);
        weights.push(count);
        sizes.push(j - i);
        i = j;
    }
    let fitted = pava(&merged, Some(&weights));
    let mut out = Vec::with_capacity(keys.len());
    for (v, s) in fitted.into_iter().zip(sizes) {
        out.extend(std::iter::repeat_n(v, s));
    }
    Ok(out)
}

/// Isotonic curve; grid points are distinct so all weights are equal.
pub fn isotonic(curve: &CdfCurve) -> MonotoneCurve {
    MonotoneCurve {
        grid: curve.grid.clone(),
        values: pava(&curve.values, None),
        method: MonotoneMethod::Isotonic,
    }
}

fn clamp_values(mut values: Vec<f64>) -> Vec<f64> {
    for v in &mut values {
        *v = v.clamp(0.0, 1.0);
    }
    values
}

/// Clips every value to `[0, 1]`.
pub fn clamp_unit(curve: MonotoneCurve) -> MonotoneCurve {
    MonotoneCurve { values: clamp_values(curve.values), ..curve }
}

/// Applies `method` to a raw curve and clamps the result.
pub fn monotonize(curve: &CdfCurve, method: Monotonizer, levels: &[f64]) -> Result<MonotoneCurve> {
    let out = match method {
        Monotonizer::Isotonic => isotonic(curve),
        Monotonizer::Rearrange => rearrange(curve, levels)?,
        Monotonizer::None => MonotoneCurve {
            grid: curve.grid.clone(),
            values: curve.values.clone(),
            method: MonotoneMethod::NoneNeeded,
        },
    };
    Ok(clamp_unit(out))
}

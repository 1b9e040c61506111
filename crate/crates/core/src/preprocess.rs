//! Stationarity testing, invertible differencing and symmetric min-max
//! scaling applied before the reservoir sees a series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest series the KPSS test accepts.
pub const KPSS_MIN_LEN: usize = 12;

/// Scaled training data lies in `[SCALED_LO, SCALED_HI]`.
pub const SCALED_LO: f64 = -0.5;
pub const SCALED_HI: f64 = 0.5;

// Sequences whose range is below this fraction of their magnitude are
// treated as constant.
const CONSTANT_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    /// KPSS significance level; one of 0.10, 0.05, 0.025, 0.01.
    pub significance: f64,
    pub max_diff: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            significance: 0.05,
            max_diff: 2,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        level_critical_value(self.significance)?;
        if self.max_diff > 2 {
            return Err(Error::Config(format!(
                "max_diff must be at most 2, got {}",
                self.max_diff
            )));
        }
        Ok(())
    }
}

/// Level-stationarity critical values (Kwiatkowski et al. 1992, table 1).
pub fn level_critical_value(significance: f64) -> Result<f64> {
    const TABLE: [(f64, f64); 4] = [(0.10, 0.347), (0.05, 0.463), (0.025, 0.574), (0.01, 0.739)];
    TABLE
        .iter()
        .find(|(a, _)| (a - significance).abs() < 1e-12)
        .map(|(_, cv)| *cv)
        .ok_or_else(|| {
            Error::Config(format!(
                "KPSS significance {significance} not tabulated (use 0.10, 0.05, 0.025 or 0.01)"
            ))
        })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KpssResult {
    pub statistic: f64,
    pub lag_truncation: usize,
    pub critical_value: f64,
    pub reject_stationarity: bool,
}

/// Bartlett lag truncation `⌊4 (T/100)^¼⌋`.
pub fn kpss_lag(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

pub fn kpss_test(y: &[f64]) -> Result<KpssResult> {
    kpss_test_at(y, 0.05)
}

/// KPSS test with a level-stationary null.
pub fn kpss_test_at(y: &[f64], significance: f64) -> Result<KpssResult> {
    let critical_value = level_critical_value(significance)?;
    let n = y.len();
    if n < KPSS_MIN_LEN {
        return Err(Error::TooShort(format!(
            "KPSS needs at least {KPSS_MIN_LEN} observations, got {n}"
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("KPSS input at index {i}")));
    }
    let lag_truncation = kpss_lag(n);
    if is_constant(y) {
        return Ok(KpssResult {
            statistic: 0.0,
            lag_truncation,
            critical_value,
            reject_stationarity: false,
        });
    }

    let mean = y.iter().sum::<f64>() / n as f64;
    let resid: Vec<f64> = y.iter().map(|v| v - mean).collect();

    let mut partial = 0.0;
    let mut eta = 0.0;
    for e in &resid {
        partial += e;
        eta += partial * partial;
    }
    let nf = n as f64;
    eta /= nf * nf;

    let mut lrv: f64 = resid.iter().map(|e| e * e).sum();
    for s in 1..=lag_truncation.min(n - 1) {
        let weight = 1.0 - s as f64 / (lag_truncation as f64 + 1.0);
        let acov: f64 = resid[s..].iter().zip(&resid).map(|(a, b)| a * b).sum();
        lrv += 2.0 * weight * acov;
    }
    lrv /= nf;

    let statistic = if lrv > 0.0 { eta / lrv } else { 0.0 };
    Ok(KpssResult {
        statistic,
        lag_truncation,
        critical_value,
        reject_stationarity: statistic > critical_value,
    })
}

pub fn is_constant(y: &[f64]) -> bool {
    let (lo, hi) = min_max(y);
    let magnitude = lo.abs().max(hi.abs());
    hi - lo <= CONSTANT_RTOL * magnitude
}

fn min_max(y: &[f64]) -> (f64, f64) {
    y.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        })
}

pub fn difference(y: &[f64]) -> Vec<f64> {
    y.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Min-max map onto `[-0.5, 0.5]`, fitted on the training window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub min: f64,
    pub max: f64,
    /// Set when the fitted window had zero range; everything maps to 0.
    pub constant: bool,
}

impl Scaling {
    pub fn fit(y: &[f64]) -> Self {
        let (min, max) = min_max(y);
        Scaling {
            min,
            max,
            constant: y.is_empty() || is_constant(y),
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        if self.constant {
            0.0
        } else {
            (v - self.min) / (self.max - self.min) + SCALED_LO
        }
    }

    pub fn invert(&self, z: f64) -> f64 {
        if self.constant {
            self.min
        } else {
            (z - SCALED_LO) * (self.max - self.min) + self.min
        }
    }
}

pub fn scale_to_unit(y: &[f64]) -> (Vec<f64>, Scaling) {
    let scaling = Scaling::fit(y);
    (y.iter().map(|v| scaling.apply(*v)).collect(), scaling)
}

/// Everything needed to map reservoir-space values back to original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub diff_order: usize,
    /// The first `diff_order` original observations.
    pub initial_values: Vec<f64>,
    pub scaling: Scaling,
}

impl TransformRecord {
    pub fn is_constant(&self) -> bool {
        self.scaling.constant
    }

    /// Rebuilds the full original series from its transformed form.
    pub fn reconstruct(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.initial_values.clone();
        out.extend(inverse_transform(z, self, &self.initial_values)?);
        Ok(out)
    }
}

/// Iterates KPSS → difference until the test no longer rejects, the order
/// reaches `cfg.max_diff`, or the series becomes too short to test.
pub fn apply_differencing(y: &[f64], cfg: &PreprocessConfig) -> Result<(Vec<f64>, usize)> {
    cfg.validate()?;
    let mut current = y.to_vec();
    let mut order = 0;
    kpss_test_at(&current, cfg.significance)?;
    while order < cfg.max_diff && current.len() >= KPSS_MIN_LEN {
        if !kpss_test_at(&current, cfg.significance)?.reject_stationarity {
            break;
        }
        current = difference(&current);
        order += 1;
    }
    Ok((current, order))
}

/// Full forward pipeline: differencing followed by scaling.
pub fn forward(y: &[f64], cfg: &PreprocessConfig) -> Result<(Vec<f64>, TransformRecord)> {
    let (differenced, diff_order) = apply_differencing(y, cfg)?;
    let (scaled, scaling) = scale_to_unit(&differenced);
    Ok((
        scaled,
        TransformRecord {
            diff_order,
            initial_values: y[..diff_order].to_vec(),
            scaling,
        },
    ))
}

/// Unscales `z_future`, then integrates `diff_order` times anchored on the
/// last `diff_order` original observations in `train_tail`.
pub fn inverse_transform(
    z_future: &[f64],
    record: &TransformRecord,
    train_tail: &[f64],
) -> Result<Vec<f64>> {
    let d = record.diff_order;
    if train_tail.len() != d {
        return Err(Error::Dimension(format!(
            "differencing order {d} needs {d} anchor values, got {}",
            train_tail.len()
        )));
    }
    let mut values: Vec<f64> = z_future.iter().map(|z| record.scaling.invert(*z)).collect();

    // anchors[k] is the last value of the k-th difference of train_tail.
    let mut anchors = Vec::with_capacity(d);
    let mut level = train_tail.to_vec();
    for _ in 0..d {
        anchors.push(*level.last().expect("non-empty tail"));
        level = difference(&level);
    }
    for anchor in anchors.into_iter().rev() {
        let mut acc = anchor;
        for v in values.iter_mut() {
            acc += *v;
            *v = acc;
        }
    }
    Ok(values)
}

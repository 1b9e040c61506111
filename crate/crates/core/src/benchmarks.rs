//! Simple reference forecasters: naive, drift, seasonal naive, mean and a
//! simple Theta method.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::centered_moving_average;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkKind {
    Naive,
    Drift,
    #[serde(rename = "snaive")]
    SeasonalNaive,
    Mean,
    Theta,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 5] = [
        BenchmarkKind::Naive,
        BenchmarkKind::Drift,
        BenchmarkKind::SeasonalNaive,
        BenchmarkKind::Mean,
        BenchmarkKind::Theta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::Naive => "naive",
            BenchmarkKind::Drift => "drift",
            BenchmarkKind::SeasonalNaive => "snaive",
            BenchmarkKind::Mean => "mean",
            BenchmarkKind::Theta => "theta",
        }
    }

    fn min_len(self, m: usize) -> usize {
        match self {
            BenchmarkKind::Naive | BenchmarkKind::Mean => 1,
            BenchmarkKind::Drift => 2,
            BenchmarkKind::SeasonalNaive | BenchmarkKind::Theta => m + 1,
        }
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchmarkKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown benchmark '{s}'")))
    }
}

pub fn benchmark_forecast(kind: BenchmarkKind, train: &[f64], m: usize, h: usize) -> Result<Vec<f64>> {
    if h == 0 {
        return Err(Error::Config("forecast horizon must be at least 1".into()));
    }
    if m == 0 {
        return Err(Error::Config("seasonal period must be at least 1".into()));
    }
    let need = kind.min_len(m);
    if train.len() < need {
        return Err(Error::TooShort(format!(
            "{kind} needs at least {need} observations, got {}",
            train.len()
        )));
    }
    let t = train.len();
    let last = train[t - 1];
    let out = match kind {
        BenchmarkKind::Naive => vec![last; h],
        BenchmarkKind::Drift => {
            let slope = (last - train[0]) / (t - 1) as f64;
            (1..=h).map(|k| last + k as f64 * slope).collect()
        }
        BenchmarkKind::SeasonalNaive => (1..=h)
            .map(|k| train[t + k - m * k.div_ceil(m) - 1])
            .collect(),
        BenchmarkKind::Mean => vec![train.iter().sum::<f64>() / t as f64; h],
        BenchmarkKind::Theta => theta(train, m, h),
    };
    Ok(out)
}

/// Simple exponential smoothing with drift (half the OLS slope) on the
/// seasonally adjusted series; seasonality is removed and restored with
/// classical multiplicative indices when the lag-m autocorrelation is
/// significant at the 90% level.
fn theta(train: &[f64], m: usize, h: usize) -> Vec<f64> {
    let t = train.len();
    let index = if m > 1 && is_seasonal(train, m) && train.iter().all(|v| *v > 0.0) {
        multiplicative_indices(train, m)
    } else {
        None
    };
    let adjusted: Vec<f64> = match &index {
        Some(idx) => train.iter().enumerate().map(|(i, v)| v / idx[i % m]).collect(),
        None => train.to_vec(),
    };

    let (alpha, level) = best_ses(&adjusted);
    let slope = ols_slope(&adjusted);
    let decay = (1.0 - alpha).powi(t as i32);
    (1..=h)
        .map(|k| {
            let drift = 0.5 * slope * ((k - 1) as f64 + 1.0 / alpha - decay / alpha);
            let f = level + drift;
            match &index {
                Some(idx) => f * idx[(t + k - 1) % m],
                None => f,
            }
        })
        .collect()
}

fn acf(y: &[f64], lag: usize) -> f64 {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let denom: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if denom == 0.0 || lag >= n {
        return 0.0;
    }
    let num: f64 = (lag..n).map(|i| (y[i] - mean) * (y[i - lag] - mean)).sum();
    num / denom
}

fn is_seasonal(y: &[f64], m: usize) -> bool {
    let n = y.len();
    if n < 2 * m + 1 {
        return false;
    }
    let sum_sq: f64 = (1..m).map(|k| acf(y, k).powi(2)).sum();
    let limit = 1.645 * ((1.0 + 2.0 * sum_sq) / n as f64).sqrt();
    acf(y, m).abs() > limit
}

fn multiplicative_indices(y: &[f64], m: usize) -> Option<Vec<f64>> {
    let n = y.len();
    let half = m / 2;
    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for t in half..n - half {
        let trend = centered_moving_average(y, m, t);
        if trend <= 0.0 {
            return None;
        }
        sums[t % m] += y[t] / trend;
        counts[t % m] += 1;
    }
    if counts.contains(&0) {
        return None;
    }
    let mut idx: Vec<f64> = sums.iter().zip(&counts).map(|(s, c)| s / *c as f64).collect();
    let mean = idx.iter().sum::<f64>() / m as f64;
    idx.iter_mut().for_each(|v| *v /= mean);
    Some(idx)
}

/// Grid search over the smoothing weight on 0.01..=0.99, returning the
/// weight with the smallest in-sample one-step SSE and its final level.
fn best_ses(y: &[f64]) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.5, y[0]);
    for step in 1..=99 {
        let alpha = step as f64 / 100.0;
        let mut level = y[0];
        let mut sse = 0.0;
        for v in &y[1..] {
            let e = v - level;
            sse += e * e;
            level += alpha * e;
        }
        if sse < best.0 {
            best = (sse, alpha, level);
        }
    }
    (best.1, best.2)
}

fn ols_slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let tm = (n - 1.0) / 2.0;
    let ym = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dt = i as f64 - tm;
        sxy += dt * (v - ym);
        sxx += dt * dt;
    }
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

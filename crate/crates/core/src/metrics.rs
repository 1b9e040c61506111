//! Point-forecast accuracy (sMAPE, MASE), descriptive summaries, and
//! trend/seasonality strength from a classical additive decomposition.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric MAPE in percent. Terms with `|y| + |ŷ| = 0` contribute 0.
pub fn smape(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    check_pair(actual, forecast)?;
    let h = actual.len() as f64;
    let total: f64 = actual
        .iter()
        .zip(forecast)
        .map(|(y, f)| {
            let denom = y.abs() + f.abs();
            if denom == 0.0 {
                0.0
            } else {
                (y - f).abs() / denom
            }
        })
        .sum();
    Ok(2.0 / h * total * 100.0)
}

/// Mean absolute error over the horizon scaled by the in-sample seasonal
/// naive MAE at lag `m`.
pub fn mase(actual: &[f64], forecast: &[f64], train: &[f64], m: usize) -> Result<f64> {
    check_pair(actual, forecast)?;
    if m == 0 || train.len() <= m {
        return Err(Error::TooShort(format!(
            "MASE needs more than m = {m} training observations, got {}",
            train.len()
        )));
    }
    let scale = train
        .iter()
        .skip(m)
        .zip(train)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / (train.len() - m) as f64;
    if !(scale > 0.0) {
        return Err(Error::Degenerate(
            "seasonal naive in-sample error is zero".into(),
        ));
    }
    let mae = actual
        .iter()
        .zip(forecast)
        .map(|(y, f)| (y - f).abs())
        .sum::<f64>()
        / actual.len() as f64;
    Ok(mae / scale)
}

fn check_pair(actual: &[f64], forecast: &[f64]) -> Result<()> {
    if actual.len() != forecast.len() {
        return Err(Error::Dimension(format!(
            "{} actuals vs {} forecasts",
            actual.len(),
            forecast.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::Empty("no forecast points".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub remainder: Vec<f64>,
    pub period: usize,
}

/// Classical additive decomposition.
///
/// The trend is a centred moving average (2×m for even `m`); the positions
/// it cannot reach at each end are filled by a least-squares line through
/// the nearest `m` trend values. Seasonal indices average the detrended
/// interior values per position and are centred to sum to zero.
pub fn decompose_additive(y: &[f64], m: usize) -> Result<Decomposition> {
    if m < 2 {
        return Err(Error::Config(format!("seasonal period must be at least 2, got {m}")));
    }
    let n = y.len();
    if n < 2 * m + 1 {
        return Err(Error::TooShort(format!(
            "decomposition with period {m} needs {} observations, got {n}",
            2 * m + 1
        )));
    }
    let half = m / 2;
    let mut trend = vec![0.0; n];
    for t in half..n - half {
        trend[t] = centered_moving_average(y, m, t);
    }
    let interior = half..n - half;
    let span = m.min(interior.len());
    let head: Vec<usize> = (interior.start..interior.start + span).collect();
    let (a, b) = line_fit(&head, &trend);
    for t in 0..half {
        trend[t] = a + b * t as f64;
    }
    let tail: Vec<usize> = (interior.end - span..interior.end).collect();
    let (a, b) = line_fit(&tail, &trend);
    for t in interior.end..n {
        trend[t] = a + b * t as f64;
    }

    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for t in interior {
        sums[t % m] += y[t] - trend[t];
        counts[t % m] += 1;
    }
    let mut index: Vec<f64> = sums.iter().zip(&counts).map(|(s, c)| s / *c as f64).collect();
    let centre = index.iter().sum::<f64>() / m as f64;
    index.iter_mut().for_each(|v| *v -= centre);

    let seasonal: Vec<f64> = (0..n).map(|t| index[t % m]).collect();
    let remainder = (0..n).map(|t| y[t] - trend[t] - seasonal[t]).collect();
    Ok(Decomposition {
        trend,
        seasonal,
        remainder,
        period: m,
    })
}

/// Centred moving average of order `m` at `t` (2×m when `m` is even).
/// Requires `m/2 ≤ t < len − m/2`.
pub(crate) fn centered_moving_average(y: &[f64], m: usize, t: usize) -> f64 {
    let half = m / 2;
    if m % 2 == 0 {
        let inner: f64 = y[t + 1 - half..t + half].iter().sum();
        (0.5 * y[t - half] + inner + 0.5 * y[t + half]) / m as f64
    } else {
        y[t - half..=t + half].iter().sum::<f64>() / m as f64
    }
}

fn line_fit(ts: &[usize], values: &[f64]) -> (f64, f64) {
    let k = ts.len() as f64;
    let tm = ts.iter().map(|t| *t as f64).sum::<f64>() / k;
    let vm = ts.iter().map(|t| values[*t]).sum::<f64>() / k;
    let sxx: f64 = ts.iter().map(|t| (*t as f64 - tm).powi(2)).sum();
    let sxy: f64 = ts.iter().map(|t| (*t as f64 - tm) * (values[*t] - vm)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (vm - slope * tm, slope)
}

fn population_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Strength {
    pub value: f64,
    /// Set when the reference variance was zero and `value` defaulted to 0.
    pub degenerate: bool,
}

fn strength(component: &[f64], remainder: &[f64]) -> Strength {
    let combined: Vec<f64> = component.iter().zip(remainder).map(|(c, r)| c + r).collect();
    let reference = population_variance(&combined);
    if !(reference > 0.0) {
        return Strength {
            value: 0.0,
            degenerate: true,
        };
    }
    Strength {
        value: (1.0 - population_variance(remainder) / reference).clamp(0.0, 1.0),
        degenerate: false,
    }
}

/// `max(0, 1 − Var(R) / Var(T + R))`
pub fn strength_of_trend(d: &Decomposition) -> Strength {
    strength(&d.trend, &d.remainder)
}

/// `max(0, 1 − Var(R) / Var(S + R))`
pub fn strength_of_seasonality(d: &Decomposition) -> Strength {
    strength(&d.seasonal, &d.remainder)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRecord {
    pub series_id: String,
    pub model_id: String,
    /// `None` when the MASE denominator is zero.
    pub mase: Option<f64>,
    pub smape_pct: f64,
    pub elapsed_seconds: f64,
}

/// Descriptive statistics of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Describe {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
    /// Sample standard deviation; 0 when `n = 1`.
    pub std: f64,
}

pub fn describe(values: &[f64]) -> Result<Describe> {
    if values.is_empty() {
        return Err(Error::Empty("no values to summarise".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(Describe {
        n,
        mean,
        median: quantile_sorted(&sorted, 0.5),
        q1: quantile_sorted(&sorted, 0.25),
        q3: quantile_sorted(&sorted, 0.75),
        min: sorted[0],
        max: sorted[n - 1],
        std,
    })
}

/// Linear-interpolation quantile (Hyndman–Fan type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(quantile_sorted(&sorted, 0.5))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model_id: String,
    /// `None` when every record of the model had a degenerate MASE.
    pub mase: Option<Describe>,
    pub smape: Describe,
    pub degenerate: usize,
    pub mean_seconds: f64,
    pub total_seconds: f64,
}

/// One row per model, ranked by mean MASE (models without any finite MASE
/// last), ties by model id.
pub fn aggregate(records: &[AccuracyRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::Empty("no accuracy records".into()));
    }
    let mut groups: BTreeMap<&str, Vec<&AccuracyRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(&r.model_id).or_default().push(r);
    }
    let mut rows = Vec::with_capacity(groups.len());
    for (model, recs) in groups {
        let mases: Vec<f64> = recs.iter().filter_map(|r| r.mase).collect();
        let smapes: Vec<f64> = recs.iter().map(|r| r.smape_pct).collect();
        let total_seconds: f64 = recs.iter().map(|r| r.elapsed_seconds).sum();
        rows.push(SummaryRow {
            model_id: model.to_string(),
            mase: if mases.is_empty() { None } else { Some(describe(&mases)?) },
            smape: describe(&smapes)?,
            degenerate: recs.len() - mases.len(),
            mean_seconds: total_seconds / recs.len() as f64,
            total_seconds,
        });
    }
    rows.sort_by(|a, b| {
        let key = |r: &SummaryRow| r.mase.map_or(f64::INFINITY, |d| d.mean);
        key(a).total_cmp(&key(b)).then_with(|| a.model_id.cmp(&b.model_id))
    });
    Ok(rows)
}

pub fn write_accuracy_csv<W: Write>(writer: W, records: &[AccuracyRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["series_id", "model_id", "mase", "smape_pct", "elapsed_seconds"])?;
    for r in records {
        w.write_record([
            r.series_id.clone(),
            r.model_id.clone(),
            r.mase.map_or_else(String::new, |v| v.to_string()),
            r.smape_pct.to_string(),
            r.elapsed_seconds.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<accuracy csv>", e))?;
    Ok(())
}

pub fn read_accuracy_csv<R: std::io::Read>(reader: R) -> Result<Vec<AccuracyRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let num = |col: usize| -> Result<f64> {
            let cell = row.get(col).unwrap_or("");
            cell.parse().map_err(|_| Error::Parse {
                row: i + 2,
                column: col + 1,
                message: format!("not a number: '{cell}'"),
            })
        };
        if row.len() != 5 {
            return Err(Error::Parse {
                row: i + 2,
                column: row.len(),
                message: "expected 5 fields".into(),
            });
        }
        out.push(AccuracyRecord {
            series_id: row[0].to_string(),
            model_id: row[1].to_string(),
            mase: if row[2].is_empty() { None } else { Some(num(2)?) },
            smape_pct: num(3)?,
            elapsed_seconds: num(4)?,
        });
    }
    Ok(out)
}

pub fn write_summary_csv<W: Write>(writer: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "rank",
        "model",
        "mase_mean",
        "mase_median",
        "smape_mean",
        "smape_median",
        "time_mean_s",
        "time_total_s",
        "n",
        "n_degenerate",
    ])?;
    for (i, r) in rows.iter().enumerate() {
        let (mm, md) = r
            .mase
            .map_or((String::new(), String::new()), |d| (fmt3(d.mean), fmt3(d.median)));
        w.write_record([
            (i + 1).to_string(),
            r.model_id.clone(),
            mm,
            md,
            fmt3(r.smape.mean),
            fmt3(r.smape.median),
            format!("{:.6}", r.mean_seconds),
            format!("{:.6}", r.total_seconds),
            r.smape.n.to_string(),
            r.degenerate.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<summary csv>", e))?;
    Ok(())
}

fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

/// Aligned plain-text version of the summary table.
pub fn format_summary_table(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:>4}  {:<12} {:>10} {:>10} {:>10} {:>10} {:>12} {:>12}\n",
        "rank", "model", "MASE mean", "MASE med", "sMAPE mean", "sMAPE med", "time mean", "time total"
    );
    for (i, r) in rows.iter().enumerate() {
        let (mm, md) = r
            .mase
            .map_or(("-".to_string(), "-".to_string()), |d| (fmt3(d.mean), fmt3(d.median)));
        out.push_str(&format!(
            "{:>4}  {:<12} {:>10} {:>10} {:>10} {:>10} {:>12.6} {:>12.6}\n",
            i + 1,
            r.model_id,
            mm,
            md,
            fmt3(r.smape.mean),
            fmt3(r.smape.median),
            r.mean_seconds,
            r.total_seconds
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn accuracy_csv_round_trip() {
        let recs = vec![
            AccuracyRecord {
                series_id: "M1".into(),
                model_id: "naive".into(),
                mase: Some(0.1 + 0.2),
                smape_pct: 12.5,
                elapsed_seconds: 1e-6,
            },
            AccuracyRecord {
                series_id: "M2".into(),
                model_id: "esn".into(),
                mase: None,
                smape_pct: 0.0,
                elapsed_seconds: 0.25,
            },
        ];
        let mut buf = Vec::new();
        write_accuracy_csv(&mut buf, &recs).unwrap();
        assert_eq!(read_accuracy_csv(buf.as_slice()).unwrap(), recs);
        assert!(read_accuracy_csv("series_id,model_id,mase,smape_pct,elapsed_seconds\nA,b,x,1,1\n".as_bytes()).is_err());
    }

    #[test]
    fn smape_examples() {
        assert_eq!(smape(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(smape(&[100.0], &[50.0]).unwrap(), 66.6667, epsilon = 1e-4);
        assert_abs_diff_eq!(smape(&[100.0], &[-100.0]).unwrap(), 200.0, epsilon = 1e-12);
        assert_eq!(smape(&[0.0], &[0.0]).unwrap(), 0.0);
        assert!(matches!(smape(&[1.0], &[1.0, 2.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn mase_examples() {
        let train = [1.0, 2.0, 3.0, 4.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(mase(&[3.0, 4.0], &[4.0, 6.0], &train, 4).unwrap(), 1.5);
        assert_eq!(mase(&[3.0, 4.0], &[3.0, 4.0], &train, 4).unwrap(), 0.0);
        assert!(matches!(
            mase(&[1.0], &[1.0], &[5.0, 6.0, 5.0, 6.0], 2),
            Err(Error::Degenerate(_))
        ));
        assert!(mase(&[1.0], &[1.0], &[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn sinusoid_decomposes_exactly() {
        let m = 12;
        let y: Vec<f64> = (0..96)
            .map(|t| 10.0 + (2.0 * std::f64::consts::PI * t as f64 / m as f64).sin())
            .collect();
        let d = decompose_additive(&y, m).unwrap();
        for t in 6..90 {
            assert!(d.remainder[t].abs() < 1e-6);
            let expected = (2.0 * std::f64::consts::PI * t as f64 / m as f64).sin();
            assert_abs_diff_eq!(d.seasonal[t], expected, epsilon = 1e-6);
        }
    }

    #[test]
    fn line_has_no_season() {
        let y: Vec<f64> = (0..40).map(|t| 3.0 + 0.5 * t as f64).collect();
        let d = decompose_additive(&y, 4).unwrap();
        assert!(d.seasonal.iter().all(|s| s.abs() < 1e-10));
        assert!(d.remainder.iter().all(|r| r.abs() < 1e-10));
        assert_abs_diff_eq!(strength_of_trend(&d).value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn recovers_constructed_components() {
        let seasonal = [1.5, -0.5, -2.0, 1.0];
        let y: Vec<f64> = (0..48)
            .map(|t| 100.0 - 0.7 * t as f64 + seasonal[t % 4])
            .collect();
        let d = decompose_additive(&y, 4).unwrap();
        for t in 2..46 {
            assert_abs_diff_eq!(d.trend[t], 100.0 - 0.7 * t as f64, epsilon = 1e-6);
            assert_abs_diff_eq!(d.seasonal[t], seasonal[t % 4], epsilon = 1e-6);
        }
        for t in 0..48 {
            assert_abs_diff_eq!(d.trend[t] + d.seasonal[t] + d.remainder[t], y[t], epsilon = 1e-10);
        }
    }

    #[test]
    fn odd_period_decomposition() {
        let y: Vec<f64> = (0..35).map(|t| [0.0, 3.0, -3.0, 1.0, -1.0][t % 5] + t as f64).collect();
        let d = decompose_additive(&y, 5).unwrap();
        assert_abs_diff_eq!(strength_of_seasonality(&d).value, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn decomposition_guards() {
        assert!(matches!(decompose_additive(&[1.0; 8], 4), Err(Error::TooShort(_))));
        assert!(decompose_additive(&[1.0; 9], 4).is_ok());
    }

    #[test]
    fn degenerate_strength() {
        let y: Vec<f64> = (0..30).map(|t| t as f64).collect();
        let d = decompose_additive(&y, 4).unwrap();
        let s = strength_of_seasonality(&d);
        assert!(s.degenerate);
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn describe_examples() {
        let d = describe(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((d.mean, d.median, d.std), (2.0, 2.0, 1.0));
        assert_eq!((d.q1, d.q3), (1.5, 2.5));
        let d = describe(&[4.2]).unwrap();
        assert_eq!((d.mean, d.median, d.min, d.max, d.std, d.n), (4.2, 4.2, 4.2, 4.2, 0.0, 1));
        assert!(describe(&[]).is_err());
    }

    #[test]
    fn aggregate_groups_and_ranks() {
        let rec = |s: &str, m: &str, mase: Option<f64>| AccuracyRecord {
            series_id: s.into(),
            model_id: m.into(),
            mase,
            smape_pct: 10.0,
            elapsed_seconds: 0.5,
        };
        let rows = aggregate(&[
            rec("a", "naive", Some(1.2)),
            rec("b", "naive", Some(1.0)),
            rec("a", "esn", Some(0.8)),
            rec("b", "esn", None),
        ])
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].model_id, "esn");
        assert_eq!(rows[0].degenerate, 1);
        assert_abs_diff_eq!(rows[1].mase.unwrap().mean, 1.1, epsilon = 1e-12);
        assert_eq!(rows[1].total_seconds, 1.0);
        assert!(aggregate(&[]).is_err());
    }

    proptest! {
        #[test]
        fn smape_symmetric_and_bounded(
            pairs in prop::collection::vec((-1e4f64..1e4, -1e4f64..1e4), 1..20)
        ) {
            let (a, f): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let s1 = smape(&a, &f).unwrap();
            let s2 = smape(&f, &a).unwrap();
            prop_assert!((s1 - s2).abs() < 1e-9);
            prop_assert!((0.0..=200.0 + 1e-9).contains(&s1));
        }

        #[test]
        fn mase_scale_invariant(
            train in prop::collection::vec(1.0f64..100.0, 10..30),
            test in prop::collection::vec((1.0f64..100.0, 1.0f64..100.0), 1..8),
            c in prop_oneof![Just(1e-3), Just(1e3), -50.0f64..-0.1, 0.1f64..50.0],
        ) {
            let (a, f): (Vec<f64>, Vec<f64>) = test.into_iter().unzip();
            let base = mase(&a, &f, &train, 4).unwrap();
            let sc = |v: &[f64]| v.iter().map(|x| x * c).collect::<Vec<_>>();
            let scaled = mase(&sc(&a), &sc(&f), &sc(&train), 4).unwrap();
            prop_assert!((base - scaled).abs() <= 1e-12 * base.abs().max(1e-300));
        }

        #[test]
        fn components_sum_and_strengths_bounded(
            y in prop::collection::vec(-50.0f64..50.0, 25..80)
        ) {
            let d = decompose_additive(&y, 4).unwrap();
            for t in 0..y.len() {
                prop_assert!((d.trend[t] + d.seasonal[t] + d.remainder[t] - y[t]).abs() < 1e-10);
            }
            for s in [strength_of_trend(&d), strength_of_seasonality(&d)] {
                prop_assert!((0.0..=1.0).contains(&s.value));
            }
        }
    }
}

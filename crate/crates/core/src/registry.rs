//! Forecasting methods behind one trait, selected by name at runtime.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use crate::benchmarks::{benchmark_forecast, BenchmarkKind};
use crate::data::SplitSeries;
use crate::error::{Error, Result};
use crate::forecaster::{self, EsnConfig};
use crate::metrics::{self, AccuracyRecord};

pub trait Forecaster: Send + Sync {
    fn name(&self) -> &str;

    /// `h` point forecasts following `series.train`.
    fn forecast(&self, series: &SplitSeries, h: usize) -> Result<Vec<f64>>;
}

pub struct EsnForecaster {
    pub config: EsnConfig,
    label: String,
}

impl EsnForecaster {
    pub fn new(config: EsnConfig) -> Self {
        EsnForecaster {
            config,
            label: "esn".into(),
        }
    }

    pub fn labelled(config: EsnConfig, label: impl Into<String>) -> Self {
        EsnForecaster {
            config,
            label: label.into(),
        }
    }
}

impl Forecaster for EsnForecaster {
    fn name(&self) -> &str {
        &self.label
    }

    fn forecast(&self, series: &SplitSeries, h: usize) -> Result<Vec<f64>> {
        let model = forecaster::fit(&series.train, &self.config)?;
        forecaster::forecast(&model, h)
    }
}

pub struct BenchmarkForecaster(pub BenchmarkKind);

impl Forecaster for BenchmarkForecaster {
    fn name(&self) -> &str {
        self.0.name()
    }

    fn forecast(&self, series: &SplitSeries, h: usize) -> Result<Vec<f64>> {
        benchmark_forecast(self.0, &series.train, series.frequency.period(), h)
    }
}

type Factory = Box<dyn Fn(&EsnConfig) -> Box<dyn Forecaster> + Send + Sync>;

pub struct ModelRegistry {
    factories: BTreeMap<String, Factory>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        let mut r = ModelRegistry::empty();
        r.register("esn", |cfg| Box::new(EsnForecaster::new(cfg.clone())));
        for kind in BenchmarkKind::ALL {
            r.register(kind.name(), move |_| Box::new(BenchmarkForecaster(kind)));
        }
        r
    }
}

impl ModelRegistry {
    pub fn empty() -> Self {
        ModelRegistry {
            factories: BTreeMap::new(),
        }
    }

    /// Adds or replaces the factory for `name` (case-insensitive).
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&EsnConfig) -> Box<dyn Forecaster> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_ascii_lowercase(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(&self, name: &str, esn: &EsnConfig) -> Result<Box<dyn Forecaster>> {
        let factory = self.factories.get(&name.to_ascii_lowercase()).ok_or_else(|| {
            Error::Config(format!(
                "unknown model '{name}' (available: {})",
                self.names().join(", ")
            ))
        })?;
        Ok(factory(esn))
    }

    pub fn create_all(&self, names: &[String], esn: &EsnConfig) -> Result<Vec<Box<dyn Forecaster>>> {
        names.iter().map(|n| self.create(n, esn)).collect()
    }
}

/// Forecasts the test window and scores it. A zero MASE denominator yields
/// `mase = None` rather than an error.
pub fn evaluate(model: &dyn Forecaster, series: &SplitSeries) -> Result<AccuracyRecord> {
    let h = series.test.len();
    let start = Instant::now();
    let f = model.forecast(series, h)?;
    let elapsed_seconds = start.elapsed().as_secs_f64();
    if f.len() != h || f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "{} produced an invalid forecast for {}",
            model.name(),
            series.id
        )));
    }
    let smape_pct = metrics::smape(&series.test, &f)?;
    let mase = match metrics::mase(&series.test, &f, &series.train, series.frequency.period()) {
        Ok(v) => Some(v),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(AccuracyRecord {
        series_id: series.id.clone(),
        model_id: model.name().to_string(),
        mase,
        smape_pct,
        elapsed_seconds,
    })
}

#[derive(Debug)]
pub struct EvaluationFailure {
    pub series_id: String,
    pub model_id: String,
    pub error: Error,
}

/// Every (series, model) pair, in dataset-then-model order regardless of
/// scheduling. Runs on a dedicated pool of `threads` workers.
pub fn evaluate_all(
    models: &[Box<dyn Forecaster>],
    dataset: &[SplitSeries],
    threads: usize,
) -> Result<(Vec<AccuracyRecord>, Vec<EvaluationFailure>)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let tasks: Vec<(usize, usize)> = (0..dataset.len())
        .flat_map(|s| (0..models.len()).map(move |m| (s, m)))
        .collect();
    let results: Vec<_> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s, m)| evaluate(models[m].as_ref(), &dataset[s]).map_err(|e| (s, m, e)))
            .collect()
    });
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(rec) => ok.push(rec),
            Err((s, m, error)) => failed.push(EvaluationFailure {
                series_id: dataset[s].id.clone(),
                model_id: models[m].name().to_string(),
                error,
            }),
        }
    }
    Ok((ok, failed))
}

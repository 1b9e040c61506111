//! End-to-end ESN pipeline for one series: preprocess, run the reservoir,
//! select the ridge penalty, then forecast recursively by feeding each
//! prediction back as the next input.

use std::io::{Read, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{Frequency, SplitSeries};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::preprocess::{self, PreprocessConfig, TransformRecord};
use crate::readout::{self, IcKind, LambdaSearchSpec, RidgeFit};
use crate::reservoir::{self, ReservoirWeights, WeightSpec};

pub const MODEL_FORMAT: &str = "esn-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EsnConfig {
    /// Leakage rate in (0, 1].
    pub alpha: f64,
    /// Target spectral radius.
    pub rho: f64,
    /// Reservoir scaling in `N = min(⌊τT⌋, cap)`.
    pub tau: f64,
    pub ic: IcKind,
    pub density: f64,
    pub weight_bound: f64,
    pub washout_frac: f64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    /// λ candidates per fit = `k_multiplier · N`.
    pub k_multiplier: usize,
    pub reservoir_cap: usize,
    pub seed: u64,
    pub preprocess: PreprocessConfig,
}

impl Default for EsnConfig {
    fn default() -> Self {
        EsnConfig {
            alpha: 1.0,
            rho: 0.9,
            tau: 0.4,
            ic: IcKind::Aicc,
            density: 0.5,
            weight_bound: 0.5,
            washout_frac: 0.05,
            lambda_lo: 1e-4,
            lambda_hi: 2.0,
            k_multiplier: 2,
            reservoir_cap: reservoir::DEFAULT_RESERVOIR_CAP,
            seed: 0,
            preprocess: PreprocessConfig::default(),
        }
    }
}

impl EsnConfig {
    pub fn new(ic: IcKind, alpha: f64, rho: f64, tau: f64) -> Self {
        EsnConfig {
            alpha,
            rho,
            tau,
            ic,
            ..EsnConfig::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::Config(format!("{what} out of range: {v}")));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha (0, 1]", self.alpha);
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad("rho (> 0)", self.rho);
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau (0, 1]", self.tau);
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad("density (0, 1]", self.density);
        }
        if !(self.weight_bound > 0.0 && self.weight_bound.is_finite()) {
            return bad("weight_bound (> 0)", self.weight_bound);
        }
        if !(0.0..1.0).contains(&self.washout_frac) {
            return bad("washout_frac [0, 1)", self.washout_frac);
        }
        if !(self.lambda_lo >= 0.0 && self.lambda_lo < self.lambda_hi && self.lambda_hi.is_finite()) {
            return Err(Error::Config(format!(
                "lambda range [{}, {}] invalid",
                self.lambda_lo, self.lambda_hi
            )));
        }
        if self.k_multiplier == 0 || self.reservoir_cap == 0 {
            return Err(Error::Config(
                "k_multiplier and reservoir_cap must be at least 1".into(),
            ));
        }
        self.preprocess.validate()
    }

    fn weight_spec(&self) -> WeightSpec {
        WeightSpec {
            density: self.density,
            bound: self.weight_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedEsn {
    pub weights: ReservoirWeights,
    pub readout: RidgeFit,
    pub transform: TransformRecord,
    pub x_final: Vec<f64>,
    pub last_scaled_value: f64,
    /// Last `diff_order` original observations.
    pub train_tail: Vec<f64>,
    pub config: EsnConfig,
}

/// Result of [`fit`]: a trained network, or the constant fallback when the
/// transformed training series has zero range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FittedModel {
    Esn(Box<TrainedEsn>),
    Constant {
        transform: TransformRecord,
        train_tail: Vec<f64>,
        config: EsnConfig,
    },
}

impl FittedModel {
    pub fn is_constant(&self) -> bool {
        matches!(self, FittedModel::Constant { .. })
    }

    pub fn config(&self) -> &EsnConfig {
        match self {
            FittedModel::Esn(m) => &m.config,
            FittedModel::Constant { config, .. } => config,
        }
    }

    pub fn esn(&self) -> Option<&TrainedEsn> {
        match self {
            FittedModel::Esn(m) => Some(m),
            FittedModel::Constant { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    pub series_id: String,
    pub point_forecasts: Vec<f64>,
    pub elapsed_seconds: f64,
    pub config: EsnConfig,
}

pub fn fit(train: &[f64], config: &EsnConfig) -> Result<FittedModel> {
    config.validate()?;
    let (z, transform) = preprocess::forward(train, &config.preprocess)?;
    let d = transform.diff_order;
    let train_tail = train[train.len() - d..].to_vec();
    if transform.is_constant() {
        log::debug!("constant transformed series, falling back to constant forecast");
        return Ok(FittedModel::Constant {
            transform,
            train_tail,
            config: config.clone(),
        });
    }

    let n = reservoir::reservoir_size(train.len(), config.tau, config.reservoir_cap)?;
    let weights = reservoir::generate_weights(n, config.rho, config.seed, &config.weight_spec())?;

    // u_t = z_{t-1}: inputs z[0..T-1] predict targets z[1..T].
    let len = z.len();
    let washout = reservoir::washout_len(len, config.washout_frac);
    let states = reservoir::run_reservoir(&z[..len - 1], &weights, config.alpha, washout)?;
    let targets = &z[1 + washout..];

    let search = LambdaSearchSpec {
        lo: config.lambda_lo,
        hi: config.lambda_hi,
        k: config.k_multiplier * n,
        seed: config.seed,
    };
    let fit = readout::select_lambda(&states.design, targets, &search, config.ic)?;

    Ok(FittedModel::Esn(Box::new(TrainedEsn {
        weights,
        readout: fit,
        transform,
        x_final: states.x_final,
        last_scaled_value: z[len - 1],
        train_tail,
        config: config.clone(),
    })))
}

/// Recursive `h`-step forecast in original units.
pub fn forecast(model: &FittedModel, h: usize) -> Result<Vec<f64>> {
    if h == 0 {
        return Err(Error::Config("forecast horizon must be at least 1".into()));
    }
    match model {
        FittedModel::Constant {
            transform,
            train_tail,
            ..
        } => preprocess::inverse_transform(&vec![0.0; h], transform, train_tail),
        FittedModel::Esn(m) => {
            let scaled = forecast_scaled(m, h)?;
            preprocess::inverse_transform(&scaled, &m.transform, &m.train_tail)
        }
    }
}

/// Recursive forecast in the transformed (differenced, scaled) space.
pub fn forecast_scaled(model: &TrainedEsn, h: usize) -> Result<Vec<f64>> {
    let w_out = &model.readout.w_out;
    if w_out.len() != model.weights.size() + 1 || model.x_final.len() != model.weights.size() {
        return Err(Error::Model(format!(
            "readout of length {} for {} reservoir units",
            w_out.len(),
            model.weights.size()
        )));
    }
    let mut x = model.x_final.clone();
    let mut u = model.last_scaled_value;
    let mut out = Vec::with_capacity(h);
    for k in 1..=h {
        reservoir::step(&model.weights, model.config.alpha, &mut x, u);
        let y = w_out[0] + dot(&w_out[1..], &x);
        if !y.is_finite() {
            return Err(Error::NonFinite(format!("forecast step {k}")));
        }
        out.push(y);
        u = y;
    }
    Ok(out)
}

/// Fits on `series.train` and forecasts the frequency's horizon.
pub fn fit_forecast(series: &SplitSeries, config: &EsnConfig) -> Result<ForecastResult> {
    let start = Instant::now();
    let model = fit(&series.train, config)?;
    let point_forecasts = forecast(&model, series.frequency.horizon())?;
    Ok(ForecastResult {
        series_id: series.id.clone(),
        point_forecasts,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        config: config.clone(),
    })
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    series_id: String,
    frequency: Frequency,
    model: FittedModel,
}

/// A fitted model with the identity of the series it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub series_id: String,
    pub frequency: Frequency,
    pub model: FittedModel,
}

pub fn save_model<W: Write>(writer: W, saved: &SavedModel) -> Result<()> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        series_id: saved.series_id.clone(),
        frequency: saved.frequency,
        model: saved.model.clone(),
    };
    serde_json::to_writer_pretty(writer, &file).map_err(|e| Error::Model(e.to_string()))
}

pub fn load_model<R: Read>(reader: R) -> Result<SavedModel> {
    let file: ModelFile = serde_json::from_reader(reader).map_err(|e| Error::Model(e.to_string()))?;
    if file.format != MODEL_FORMAT {
        return Err(Error::Model(format!("unexpected format tag '{}'", file.format)));
    }
    if file.version != MODEL_VERSION {
        return Err(Error::Model(format!(
            "model version {} not supported (expected {MODEL_VERSION})",
            file.version
        )));
    }
    Ok(SavedModel {
        series_id: file.series_id,
        frequency: file.frequency,
        model: file.model,
    })
}

//! Fixed random reservoir: weight construction, spectral-radius rescaling and
//! leaky-integrator state evolution.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng;

pub const DEFAULT_RESERVOIR_CAP: usize = 200;
const MIN_SPECTRAL_RADIUS: f64 = 1e-12;
const MAX_WEIGHT_ATTEMPTS: u64 = 5;

/// `N = min(⌊τT⌋, cap)`.
pub fn reservoir_size(t: usize, tau: f64, cap: usize) -> Result<usize> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Config(format!("tau must lie in (0, 1], got {tau}")));
    }
    let n = floor_product(tau, t);
    if n == 0 {
        return Err(Error::TooShort(format!(
            "floor({tau} * {t}) = 0 reservoir units"
        )));
    }
    Ok(n.min(cap))
}

/// `⌊frac · len⌋` leading states discarded before the readout fit.
pub fn washout_len(len: usize, frac: f64) -> usize {
    floor_product(frac, len)
}

// ⌊a·n⌋ with a small guard so decimal fractions such as 0.6 · 5 do not land
// one below the exact integer.
fn floor_product(a: f64, n: usize) -> usize {
    (a * n as f64 + 1e-9).floor() as usize
}

/// Distribution of the random weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    /// Probability that a reservoir entry is non-zero.
    pub density: f64,
    /// Entries are uniform on `[-bound, bound]`.
    pub bound: f64,
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec {
            density: 0.5,
            bound: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirWeights {
    pub w_in: Vec<f64>,
    pub w: Matrix,
    pub rho: f64,
    pub seed: u64,
}

impl ReservoirWeights {
    pub fn size(&self) -> usize {
        self.w_in.len()
    }

    /// Rescales a given raw reservoir matrix to spectral radius `rho`.
    pub fn from_raw(w_in: Vec<f64>, mut raw: Matrix, rho: f64, seed: u64) -> Result<Self> {
        if !raw.is_square() || raw.rows() != w_in.len() {
            return Err(Error::Dimension(format!(
                "input weights of length {} with a {}x{} reservoir",
                w_in.len(),
                raw.rows(),
                raw.cols()
            )));
        }
        if !(rho > 0.0) {
            return Err(Error::Config(format!("rho must be positive, got {rho}")));
        }
        let radius = spectral_radius(&raw)?;
        if radius < MIN_SPECTRAL_RADIUS {
            return Err(Error::Degenerate(format!(
                "raw reservoir spectral radius {radius:e}"
            )));
        }
        raw.scale(rho / radius);
        Ok(ReservoirWeights {
            w_in,
            w: raw,
            rho,
            seed,
        })
    }
}

/// Draws dense input weights and a Bernoulli-masked reservoir, then rescales
/// it to spectral radius `rho`. A nilpotent or empty draw is retried with
/// the next sub-seed.
pub fn generate_weights(n: usize, rho: f64, seed: u64, spec: &WeightSpec) -> Result<ReservoirWeights> {
    if n == 0 {
        return Err(Error::Config("reservoir size must be at least 1".into()));
    }
    let mut last_err = None;
    for attempt in 0..MAX_WEIGHT_ATTEMPTS {
        let sub_seed = seed.wrapping_add(attempt);
        let mut rng = rng::rng_for(sub_seed, rng::STREAM_WEIGHTS);
        let b = spec.bound;
        let w_in: Vec<f64> = (0..n).map(|_| rng.random_range(-b..=b)).collect();
        let mut raw = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let keep = rng.random_bool(spec.density);
                let value: f64 = rng.random_range(-b..=b);
                if keep {
                    raw[(i, j)] = value;
                }
            }
        }
        match ReservoirWeights::from_raw(w_in, raw, rho, seed) {
            Ok(w) => return Ok(w),
            Err(e @ Error::Degenerate(_)) => {
                log::debug!("weight draw {attempt} for seed {seed} rejected: {e}");
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    let ev = linalg::eigenvalues(m)?;
    Ok(ev.iter().fold(0.0_f64, |acc, (re, im)| acc.max(re.hypot(*im))))
}

/// Design matrix of collected states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    /// `(T − washout) × (N + 1)`, first column all ones.
    pub design: Matrix,
    pub washout: usize,
    pub x_final: Vec<f64>,
}

/// One leaky-integrator update of `x` in place, driven by scalar input `u`.
pub fn step(weights: &ReservoirWeights, alpha: f64, x: &mut [f64], u: f64) {
    let pre = weights.w.mul_vec(x);
    for ((xi, pi), wi) in x.iter_mut().zip(pre).zip(&weights.w_in) {
        let candidate = (wi * u + pi).tanh();
        *xi = (1.0 - alpha) * *xi + alpha * candidate;
    }
}

pub fn run_reservoir(
    u: &[f64],
    weights: &ReservoirWeights,
    alpha: f64,
    washout: usize,
) -> Result<StateMatrix> {
    run_reservoir_from(u, weights, alpha, washout, &vec![0.0; weights.size()])
}

pub fn run_reservoir_from(
    u: &[f64],
    weights: &ReservoirWeights,
    alpha: f64,
    washout: usize,
    x0: &[f64],
) -> Result<StateMatrix> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let n = weights.size();
    if x0.len() != n {
        return Err(Error::Dimension(format!(
            "initial state of length {} for {n} units",
            x0.len()
        )));
    }
    if washout >= u.len() {
        return Err(Error::TooShort(format!(
            "washout {washout} leaves no states from {} inputs",
            u.len()
        )));
    }
    let mut design = Matrix::zeros(u.len() - washout, n + 1);
    let mut x = x0.to_vec();
    for (t, ut) in u.iter().enumerate() {
        step(weights, alpha, &mut x, *ut);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("reservoir state at t = {}", t + 1)));
        }
        if t >= washout {
            let row = design.row_mut(t - washout);
            row[0] = 1.0;
            row[1..].copy_from_slice(&x);
        }
    }
    Ok(StateMatrix {
        design,
        washout,
        x_final: x,
    })
}

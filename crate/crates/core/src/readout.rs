//! Ridge readout with an unpenalised intercept, effective degrees of freedom
//! and information-criterion-driven random search over the penalty.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Matrix, SymmetricEigen};
use crate::rng;

const JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IcKind {
    #[serde(rename = "AIC")]
    Aic,
    #[serde(rename = "AICc")]
    Aicc,
    #[serde(rename = "BIC")]
    Bic,
    #[serde(rename = "HQC")]
    Hqc,
}

impl IcKind {
    pub const ALL: [IcKind; 4] = [IcKind::Aic, IcKind::Aicc, IcKind::Bic, IcKind::Hqc];

    pub fn as_str(self) -> &'static str {
        match self {
            IcKind::Aic => "AIC",
            IcKind::Aicc => "AICc",
            IcKind::Bic => "BIC",
            IcKind::Hqc => "HQC",
        }
    }
}

impl fmt::Display for IcKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IcKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(IcKind::Aic),
            "aicc" => Ok(IcKind::Aicc),
            "bic" => Ok(IcKind::Bic),
            "hqc" | "hq" => Ok(IcKind::Hqc),
            other => Err(Error::Config(format!("unknown information criterion '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    /// Intercept first.
    pub w_out: Vec<f64>,
    pub lambda: f64,
    pub df: f64,
    pub rss: f64,
    pub ic_value: f64,
    pub ic_kind: IcKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSearchSpec {
    pub lo: f64,
    pub hi: f64,
    pub k: usize,
    pub seed: u64,
}

impl LambdaSearchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("lambda search needs at least one candidate".into()));
        }
        if !(self.lo >= 0.0 && self.lo < self.hi && self.hi.is_finite()) {
            return Err(Error::Config(format!(
                "invalid lambda range [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    /// The `k` candidates in draw order.
    pub fn candidates(&self) -> Vec<f64> {
        let mut rng = rng::rng_for(self.seed, rng::STREAM_LAMBDA);
        (0..self.k)
            .map(|_| rng.random_range(self.lo..=self.hi))
            .collect()
    }
}

/// `XᵀX + diag(0, λ, …, λ)`
pub fn penalized_gram(x: &Matrix, lambda: f64) -> Matrix {
    let mut a = x.gram();
    for i in 1..a.rows() {
        a[(i, i)] += lambda;
    }
    a
}

fn factor(x: &Matrix, lambda: f64) -> Result<Cholesky> {
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be non-negative, got {lambda}")));
    }
    let a = penalized_gram(x, lambda);
    match Cholesky::new(&a) {
        Ok(c) => Ok(c),
        Err(Error::NotPositiveDefinite) if lambda > 0.0 => {
            log::debug!("ridge factorisation failed at lambda = {lambda}, retrying with jitter");
            let mut a = a;
            for i in 0..a.rows() {
                a[(i, i)] += JITTER;
            }
            Cholesky::new(&a)
        }
        Err(e) => Err(e),
    }
}

fn check_shapes(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::Dimension(format!(
            "design has {} rows, target has {}",
            x.rows(),
            y.len()
        )));
    }
    if x.rows() < 2 || x.cols() == 0 {
        return Err(Error::TooShort(format!(
            "ridge fit on a {}x{} design",
            x.rows(),
            x.cols()
        )));
    }
    Ok(())
}

/// Solves `(XᵀX + R_λ) w = Xᵀy`.
pub fn ridge_solve(x: &Matrix, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_shapes(x, y)?;
    let chol = factor(x, lambda)?;
    Ok(chol.solve(&x.tr_mul_vec(y)))
}

/// `tr[X (XᵀX + R_λ)⁻¹ Xᵀ]`, evaluated as `‖L⁻¹ Xᵀ‖²_F`.
pub fn effective_dof(x: &Matrix, lambda: f64) -> Result<f64> {
    let chol = factor(x, lambda)?;
    Ok(dof_from_factor(x, &chol))
}

fn dof_from_factor(x: &Matrix, chol: &Cholesky) -> f64 {
    let mut total = 0.0;
    let mut buf = vec![0.0; x.cols()];
    for i in 0..x.rows() {
        buf.copy_from_slice(x.row(i));
        chol.forward(&mut buf);
        total += dot(&buf, &buf);
    }
    total
}

pub fn residual_sum_of_squares(x: &Matrix, y: &[f64], w: &[f64]) -> f64 {
    (0..x.rows())
        .map(|i| {
            let r = y[i] - dot(x.row(i), w);
            r * r
        })
        .sum()
}

/// Gaussian information criteria with the ridge effective degrees of
/// freedom as parameter count. `rss = 0` yields −∞; AICc is +∞ when
/// `t_eff − df − 1 ≤ 0`.
pub fn information_criterion(rss: f64, t_eff: usize, df: f64, kind: IcKind) -> f64 {
    let n = t_eff as f64;
    if kind == IcKind::Aicc && n - df - 1.0 <= 0.0 {
        return f64::INFINITY;
    }
    if rss <= 0.0 {
        log::debug!("zero residual sum of squares, information criterion is -inf");
        return f64::NEG_INFINITY;
    }
    let fit = n * (rss / n).ln();
    match kind {
        IcKind::Aic => fit + 2.0 * df,
        IcKind::Aicc => fit + 2.0 * df + 2.0 * df * (df + 1.0) / (n - df - 1.0),
        IcKind::Bic => fit + df * n.ln(),
        IcKind::Hqc => fit + 2.0 * df * n.ln().ln(),
    }
}

/// One eigendecomposition of the centred design, from which the residual sum
/// of squares and effective degrees of freedom follow in closed form for any
/// penalty.
///
/// With the intercept unpenalised, ridge on `[1, S]` equals ridge on the
/// column-centred states `S_c` plus an intercept at the mean. For
/// `S_cᵀS_c = V diag(e) Vᵀ` and `z = Vᵀ S_cᵀ y_c`:
///
/// * `df(λ) = 1 + Σ e_i / (e_i + λ)`
/// * `rss(λ) = ‖y_c‖² − Σ z_i² (e_i + 2λ) / (e_i + λ)²`
#[derive(Debug, Clone)]
pub struct SpectralRidge {
    eigenvalues: Vec<f64>,
    projected: Vec<f64>,
    centered_tss: f64,
}

impl SpectralRidge {
    pub fn new(x: &Matrix, y: &[f64]) -> Result<Self> {
        check_shapes(x, y)?;
        let rows = x.rows();
        let p = x.cols() - 1;
        let nf = rows as f64;
        let mut means = vec![0.0; p];
        for i in 0..rows {
            for (m, v) in means.iter_mut().zip(&x.row(i)[1..]) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= nf);
        let y_mean = y.iter().sum::<f64>() / nf;

        let mut centered = Matrix::zeros(rows, p);
        let mut yc = Vec::with_capacity(rows);
        for i in 0..rows {
            let src = &x.row(i)[1..];
            for ((dst, v), m) in centered.row_mut(i).iter_mut().zip(src).zip(&means) {
                *dst = v - m;
            }
            yc.push(y[i] - y_mean);
        }
        let eig = SymmetricEigen::new(&centered.gram())?;
        let cty = centered.tr_mul_vec(&yc);
        let projected = eig.vectors.tr_mul_vec(&cty);
        Ok(SpectralRidge {
            eigenvalues: eig.values.iter().map(|e| e.max(0.0)).collect(),
            projected,
            centered_tss: dot(&yc, &yc),
        })
    }

    pub fn dof(&self, lambda: f64) -> f64 {
        1.0 + self
            .eigenvalues
            .iter()
            .map(|e| if *e == 0.0 && lambda == 0.0 { 0.0 } else { e / (e + lambda) })
            .sum::<f64>()
    }

    pub fn rss(&self, lambda: f64) -> f64 {
        let explained: f64 = self
            .eigenvalues
            .iter()
            .zip(&self.projected)
            .map(|(e, z)| {
                let denom = e + lambda;
                if denom == 0.0 {
                    0.0
                } else {
                    z * z * (e + 2.0 * lambda) / (denom * denom)
                }
            })
            .sum();
        (self.centered_tss - explained).max(0.0)
    }
}

/// Random search over λ: the candidate with the smallest information
/// criterion wins, ties going to the smaller λ. The winner is refitted
/// directly so the returned weights, rss and df come from the normal
/// equations.
pub fn select_lambda(x: &Matrix, y: &[f64], spec: &LambdaSearchSpec, kind: IcKind) -> Result<RidgeFit> {
    spec.validate()?;
    check_shapes(x, y)?;
    let t_eff = x.rows();
    let mut candidates = spec.candidates();
    candidates.sort_by(f64::total_cmp);

    let scored: Vec<(f64, f64)> = match SpectralRidge::new(x, y) {
        Ok(sr) => candidates
            .iter()
            .map(|&l| (l, information_criterion(sr.rss(l), t_eff, sr.dof(l), kind)))
            .collect(),
        Err(e) => {
            log::debug!("spectral ridge unavailable ({e}), scoring candidates directly");
            let mut out = Vec::new();
            let mut causes = Vec::new();
            for &l in &candidates {
                match direct_fit(x, y, l, kind) {
                    Ok(fit) => out.push((l, fit.ic_value)),
                    Err(e) => causes.push(format!("lambda={l}: {e}")),
                }
            }
            if out.is_empty() {
                return Err(Error::AllFitsFailed {
                    count: candidates.len(),
                    causes: causes.join("; "),
                });
            }
            out
        }
    };

    let mut best: Option<(f64, f64)> = None;
    for (l, ic) in scored {
        if ic.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if ic >= b => {}
            _ => best = Some((l, ic)),
        }
    }
    let (lambda, _) = best.ok_or_else(|| Error::AllFitsFailed {
        count: candidates.len(),
        causes: "every information criterion was NaN".into(),
    })?;
    direct_fit(x, y, lambda, kind)
}

/// Fits a single λ through the normal equations.
pub fn direct_fit(x: &Matrix, y: &[f64], lambda: f64, kind: IcKind) -> Result<RidgeFit> {
    check_shapes(x, y)?;
    let chol = factor(x, lambda)?;
    let w_out = chol.solve(&x.tr_mul_vec(y));
    let df = dof_from_factor(x, &chol);
    let rss = residual_sum_of_squares(x, y, &w_out);
    Ok(RidgeFit {
        ic_value: information_criterion(rss, x.rows(), df, kind),
        w_out,
        lambda,
        df,
        rss,
        ic_kind: kind,
    })
}

//! Comparison estimators on the transformed normal-means scale `X_i ~ N(ξ_i, v_i)`.

use crate::error::{Error, Result};

/// Heteroscedastic normal-means data.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMeansData {
    values: Vec<f64>,
    variances: Vec<f64>,
}

impl NormalMeansData {
    pub fn new(values: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if values.len() != variances.len() {
            return Err(Error::domain(format!(
                "{} values but {} variances",
                values.len(),
                variances.len()
            )));
        }
        if let Some(v) = variances.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::domain(format!("variance {v} must be positive")));
        }
        if let Some(x) = values.iter().find(|x| !x.is_finite()) {
            return Err(Error::domain(format!("value {x} is not finite")));
        }
        Ok(NormalMeansData { values, variances })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    fn mean_variance(&self) -> f64 {
        self.variances.iter().sum::<f64>() / self.len() as f64
    }

    fn sum_sq_dev(&self, mean: f64) -> f64 {
        self.values.iter().map(|x| (x - mean).powi(2)).sum()
    }
}

pub fn naive(data: &NormalMeansData) -> Vec<f64> {
    data.values.clone()
}

pub fn group_mean(data: &NormalMeansData) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::domain("group mean of empty data"));
    }
    Ok(vec![data.mean(); data.len()])
}

/// Positive-part James–Stein shrinkage factor `max(0, 1 − (n − 3) v̄ / S)`.
pub fn james_stein_factor(data: &NormalMeansData) -> Result<f64> {
    let n = data.len();
    if n < 4 {
        return Err(Error::domain(format!(
            "James-Stein needs at least 4 observations, got {n}"
        )));
    }
    let s = data.sum_sq_dev(data.mean());
    if s == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 - (n - 3) as f64 * data.mean_variance() / s).clamp(0.0, 1.0))
}

/// Positive-part James–Stein shrinking towards the grand mean.
pub fn james_stein(data: &NormalMeansData) -> Result<Vec<f64>> {
    let b = james_stein_factor(data)?;
    let m = data.mean();
    Ok(data.values.iter().map(|x| m + b * (x - m)).collect())
}

/// Moment estimates `(μ̂, τ̂²)` of the normal prior `ξ ~ N(μ, τ²)`.
pub fn moment_prior(data: &NormalMeansData) -> Result<(f64, f64)> {
    let n = data.len();
    if n < 2 {
        return Err(Error::domain(format!(
            "parametric EB needs at least 2 observations, got {n}"
        )));
    }
    let mu = data.mean();
    let sample_var = data.sum_sq_dev(mu) / (n - 1) as f64;
    Ok((mu, (sample_var - data.mean_variance()).max(0.0)))
}

/// Parametric EB with a moment-matched normal prior; returns posterior means.
pub fn parametric_eb_mm(data: &NormalMeansData) -> Result<Vec<f64>> {
    let (mu, tau2) = moment_prior(data)?;
    Ok(data
        .values
        .iter()
        .zip(&data.variances)
        .map(|(x, v)| (tau2 * x + v * mu) / (tau2 + v))
        .collect())
}

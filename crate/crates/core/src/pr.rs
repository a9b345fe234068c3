//! The predictive recursion.
//!
//! Starting from an initial guess `F_0`, each observation `Y_i` moves the
//! current estimate towards its Bayes posterior by a fraction `w_i`:
//!
//! ```text
//! p_{i-1}(y) = ∫ p_θ(y) dF_{i-1}(θ)
//! dF_i(θ)    = (1 − w_i) dF_{i-1}(θ) + w_i p_θ(Y_i) dF_{i-1}(θ) / p_{i-1}(Y_i)
//! ```
//!
//! The estimate depends on the order of the data, so [`fit`] runs the pass over
//! several seeded shuffles and averages the resulting measures.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelModel, Observation};
use crate::mixing::{MixingMeasure, MIN_MARGINAL};

/// Recursion settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrConfig {
    /// Exponent of the default weights `w_i = (i + 1)^(−γ)`.
    pub gamma: f64,
    #[serde(default = "default_permutations")]
    pub n_permutations: usize,
    #[serde(default)]
    pub seed: u64,
    /// Explicit weights `w_1, w_2, …` replacing the power schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_override: Option<Vec<f64>>,
    /// Shuffle the data for each permutation. When false every pass uses the given order.
    #[serde(default = "default_true")]
    pub shuffle: bool,
    /// Keep every per-permutation estimate in the fit.
    #[serde(default)]
    pub keep_permutations: bool,
    /// Accept `γ ∈ (0, 1/2]`, where `Σ w_i² < ∞` fails. Used to reproduce tuned studies.
    #[serde(default)]
    pub relaxed_gamma: bool,
}

fn default_permutations() -> usize {
    1
}

fn default_true() -> bool {
    true
}

impl PrConfig {
    pub fn new(gamma: f64, n_permutations: usize, seed: u64) -> Result<Self> {
        let c = PrConfig {
            gamma,
            n_permutations,
            seed,
            weight_override: None,
            shuffle: true,
            keep_permutations: false,
            relaxed_gamma: false,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_permutations < 1 {
            return Err(Error::config("n_permutations must be at least 1"));
        }
        let g = self.gamma;
        if self.relaxed_gamma {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::config(format!("gamma = {g} outside (0, 1]")));
            }
        } else if !(g > 0.5 && g <= 1.0) {
            return Err(Error::config(format!(
                "gamma = {g} outside the admissible interval (1/2, 1]: weights (i+1)^-gamma \
                 must satisfy sum w_i = inf and sum w_i^2 < inf"
            )));
        }
        if let Some(ws) = &self.weight_override {
            if let Some((i, w)) = ws.iter().enumerate().find(|(_, w)| !(**w > 0.0 && **w < 1.0)) {
                return Err(Error::config(format!(
                    "weight_override[{}] = {w} outside (0, 1)",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// Weight `w_i` for step `i ≥ 1`.
    pub fn weight(&self, i: usize) -> Result<f64> {
        if i == 0 {
            return Err(Error::domain("weights are indexed from i = 1"));
        }
        match &self.weight_override {
            Some(ws) => {
                let w = *ws.get(i - 1).ok_or_else(|| {
                    Error::config(format!(
                        "weight_override has {} entries, step {i} requested",
                        ws.len()
                    ))
                })?;
                if w > 0.0 && w < 1.0 {
                    Ok(w)
                } else {
                    Err(Error::config(format!("weight_override[{i}] = {w} outside (0, 1)")))
                }
            }
            None => Ok(((i + 1) as f64).powf(-self.gamma)),
        }
    }

    /// Data order used by permutation `perm`.
    ///
    /// The stream is ChaCha8 seeded with `seed`, using `perm` as the stream
    /// number, and the shuffle is Fisher–Yates.
    pub fn permutation(&self, perm: usize, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        if self.shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(perm as u64);
            order.shuffle(&mut rng);
        }
        order
    }
}

/// Child seed for `index` under `root` (SplitMix64 finaliser of `root + (index + 1)·φ`).
///
/// All randomness descends from one root seed: root → replication/group index →
/// per-permutation ChaCha8 stream.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    let mut z = root.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Output of [`fit`].
#[derive(Debug, Clone)]
pub struct PrFit {
    /// Permutation-averaged estimate `F_n`.
    pub estimate: MixingMeasure,
    /// Final estimate of each permutation, when requested.
    pub per_permutation: Option<Vec<MixingMeasure>>,
    pub config: PrConfig,
    pub n_observations: usize,
    /// `ln p_{i-1}(Y_i)` for every step of every permutation.
    pub log_marginals: Vec<Vec<f64>>,
}

impl PrFit {
    /// Predictive density `p_n(y)` under the averaged estimate.
    pub fn predictive(&self, model: &KernelModel, obs: &Observation) -> Result<f64> {
        self.estimate.marginal_density(model, obs)
    }
}

/// One recursion step with weight `w ∈ [0, 1]` (`w = 0` is the identity, `w = 1` the posterior).
pub fn pr_step(
    f: &MixingMeasure,
    model: &KernelModel,
    obs: &Observation,
    w: f64,
) -> Result<MixingMeasure> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::domain(format!("weight {w} outside [0, 1]")));
    }
    model.check_observation(obs)?;
    let mut out = f.clone();
    let locations = f.locations();
    let mut lik = Vec::with_capacity(locations.len());
    step_in_place(&mut out, &locations, model, obs, w, &mut lik)?;
    Ok(out)
}

/// Update `f` in place; returns the marginal `p_{i-1}(y)` used by the step.
fn step_in_place(
    f: &mut MixingMeasure,
    locations: &[f64],
    model: &KernelModel,
    obs: &Observation,
    w: f64,
    lik: &mut Vec<f64>,
) -> Result<f64> {
    model.likelihood_into(locations, obs, lik);
    let p: f64 = f.support().zip(lik.iter()).map(|((_, m), l)| m * l).sum();
    if !(p > MIN_MARGINAL) {
        return Err(Error::DegenerateObservation {
            y: obs.y,
            marginal: p,
            permutation: None,
            step: None,
        });
    }
    let c = w / p;
    f.reweight(|i| (1.0 - w) + c * lik[i]);
    f.renormalize();
    Ok(p)
}

/// Run the recursion over `n_permutations` orderings of `data` and average the estimates.
pub fn fit(
    data: &[Observation],
    model: &KernelModel,
    f0: &MixingMeasure,
    config: &PrConfig,
) -> Result<PrFit> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::domain("cannot fit predictive recursion to empty data"));
    }
    if !f0.is_normalized() {
        return Err(Error::domain("initial guess is not normalised"));
    }
    f0.check_support(model)?;
    for obs in data {
        model.check_observation(obs)?;
    }
    if let Some(ws) = &config.weight_override {
        if ws.len() < data.len() {
            return Err(Error::config(format!(
                "weight_override has {} entries for {} observations",
                ws.len(),
                data.len()
            )));
        }
    }
    let weights: Vec<f64> = (1..=data.len())
        .map(|i| config.weight(i))
        .collect::<Result<_>>()?;
    let locations = f0.locations();

    let runs: Vec<(MixingMeasure, Vec<f64>)> = (0..config.n_permutations)
        .into_par_iter()
        .map(|perm| {
            let order = config.permutation(perm, data.len());
            let mut f = f0.clone();
            let mut lik = Vec::with_capacity(locations.len());
            let mut logs = Vec::with_capacity(data.len());
            for (step, (&idx, &w)) in order.iter().zip(&weights).enumerate() {
                let p = step_in_place(&mut f, &locations, model, &data[idx], w, &mut lik)
                    .map_err(|e| e.at_step(perm, step + 1))?;
                logs.push(p.ln());
            }
            Ok((f, logs))
        })
        .collect::<Result<_>>()?;

    let (finals, log_marginals): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let estimate = MixingMeasure::average(&finals)?;
    Ok(PrFit {
        estimate,
        per_permutation: config.keep_permutations.then_some(finals),
        config: config.clone(),
        n_observations: data.len(),
        log_marginals,
    })
}

//! Bayes and plug-in empirical Bayes decision rules.
//!
//! Both rules take the prior as an argument; passing the true prior gives the
//! Bayes rule `δ_F`, passing a PR estimate gives the plug-in rule `δ_{F_n}`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelModel, Observation};
use crate::mixing::{fmt_f64, MixingMeasure};

/// Null hypothesis set: grid nodes inside a closed interval plus listed atom locations.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NullSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<f64>,
}

impl NullSet {
    pub fn interval(lo: f64, hi: f64) -> Self {
        NullSet {
            interval: Some([lo, hi]),
            atoms: Vec::new(),
        }
    }

    pub fn atoms(atoms: Vec<f64>) -> Self {
        NullSet {
            interval: None,
            atoms,
        }
    }

    fn interval_pair(&self) -> Option<(f64, f64)> {
        self.interval.map(|[lo, hi]| (lo, hi))
    }

    /// Membership flag for every support point of `f` (nodes then atoms).
    pub fn indicator(&self, f: &MixingMeasure) -> Vec<bool> {
        f.support_indicator(self.interval_pair(), &self.atoms).collect()
    }

    /// Prior mass `F(Θ₀)`.
    pub fn mass(&self, f: &MixingMeasure) -> f64 {
        f.mass_in(self.interval_pair(), &self.atoms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DecisionProblem {
    /// Squared-error estimation of θ.
    Estimate,
    /// Two-point loss: `κ₁` for a Type I error, `κ₂` for a Type II error.
    Test {
        kappa1: f64,
        kappa2: f64,
        null: NullSet,
    },
}

impl DecisionProblem {
    pub fn test(kappa1: f64, kappa2: f64, null: NullSet) -> Result<Self> {
        let p = DecisionProblem::Test {
            kappa1,
            kappa2,
            null,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if let DecisionProblem::Test {
            kappa1,
            kappa2,
            null,
        } = self
        {
            for (name, k) in [("kappa1", kappa1), ("kappa2", kappa2)] {
                if !(*k > 0.0 && k.is_finite()) {
                    return Err(Error::config(format!("{name} = {k} must be finite and positive")));
                }
            }
            if let Some([lo, hi]) = null.interval {
                if !(lo <= hi) {
                    return Err(Error::config(format!("null interval [{lo}, {hi}] is empty")));
                }
            }
            if null.interval.is_none() && null.atoms.is_empty() {
                return Err(Error::config("null set is empty"));
            }
        }
        Ok(())
    }

    /// Threshold `r = κ₂ / (κ₁ + κ₂)`; `None` for estimation.
    pub fn threshold(&self) -> Option<f64> {
        match self {
            DecisionProblem::Estimate => None,
            DecisionProblem::Test { kappa1, kappa2, .. } => Some(kappa2 / (kappa1 + kappa2)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// Accept the null.
    A0,
    /// Reject the null.
    A1,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::A0 => "a0",
            Action::A1 => "a1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOutcome {
    pub action: Action,
    /// Posterior probability of the null, `F(Θ₀ | y)`.
    pub posterior_prob: f64,
}

/// `a0` iff `prob > r`; equality rejects.
pub fn test_action(prob: f64, r: f64) -> Action {
    if prob > r {
        Action::A0
    } else {
        Action::A1
    }
}

/// Posterior mean `∫ θ p_θ(y) dF(θ) / p_F(y)`.
pub fn posterior_mean_rule(f: &MixingMeasure, model: &KernelModel, obs: &Observation) -> Result<f64> {
    let mut lik = Vec::with_capacity(f.len());
    let p = f.marginal_with(model, obs, &mut lik)?;
    let num: f64 = f.support().zip(&lik).map(|((t, m), l)| t * m * l).sum();
    Ok(num / p)
}

pub fn test_rule(
    f: &MixingMeasure,
    model: &KernelModel,
    problem: &DecisionProblem,
    obs: &Observation,
) -> Result<TestOutcome> {
    let (null, r) = match problem {
        DecisionProblem::Test { null, .. } => (null, problem.threshold().unwrap_or(0.5)),
        DecisionProblem::Estimate => {
            return Err(Error::config("test_rule called with an estimation problem"))
        }
    };
    if !(null.mass(f) > 0.0) {
        return Err(Error::IllPosedTest);
    }
    let inside = null.indicator(f);
    let mut lik = Vec::with_capacity(f.len());
    let p = f.marginal_with(model, obs, &mut lik)?;
    let num: f64 = f
        .support()
        .zip(&lik)
        .zip(&inside)
        .filter(|(_, &i)| i)
        .map(|(((_, m), l), _)| m * l)
        .sum();
    let posterior_prob = (num / p).min(1.0);
    Ok(TestOutcome {
        action: test_action(posterior_prob, r),
        posterior_prob,
    })
}

/// One row of a decisions file.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRow {
    pub id: String,
    pub y: f64,
    /// Posterior mean for estimation, `F(Θ₀ | y)` for testing.
    pub value: f64,
    pub action: Option<Action>,
}

/// Apply the rule for `problem` to every observation.
pub fn decide_batch(
    f: &MixingMeasure,
    model: &KernelModel,
    problem: &DecisionProblem,
    rows: &[(String, Observation)],
) -> Result<Vec<DecisionRow>> {
    problem.validate()?;
    rows.iter()
        .map(|(id, obs)| {
            let (value, action) = match problem {
                DecisionProblem::Estimate => (posterior_mean_rule(f, model, obs)?, None),
                DecisionProblem::Test { .. } => {
                    let o = test_rule(f, model, problem, obs)?;
                    (o.posterior_prob, Some(o.action))
                }
            };
            Ok(DecisionRow {
                id: id.clone(),
                y: obs.y,
                value,
                action,
            })
        })
        .collect()
}

/// Write `id,y,estimate,action` or `id,y,posterior_prob,action`. Estimation rows carry the
/// action `estimate`.
pub fn write_decisions_csv<W: Write>(
    problem: &DecisionProblem,
    rows: &[DecisionRow],
    out: W,
) -> Result<()> {
    let value_col = match problem {
        DecisionProblem::Estimate => "estimate",
        DecisionProblem::Test { .. } => "posterior_prob",
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "y", value_col, "action"])?;
    for r in rows {
        let action = r.action.map_or("estimate", Action::as_str);
        w.write_record([r.id.as_str(), &fmt_f64(r.y), &fmt_f64(r.value), action])?;
    }
    w.flush()?;
    Ok(())
}

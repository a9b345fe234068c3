//! Bayes risk, empirical Bayes risk, KL divergence and the simulation harness.
//!
//! Risks are double sums over an observation quadrature and the support of the
//! true prior. Discrete kernels enumerate their observation support exactly; the
//! normal kernel uses a 4001-point Simpson rule over ±8 combined standard
//! deviations. Because the plug-in rule is evaluated at the same quadrature points
//! as the Bayes rule, `eb_risk ≥ bayes_risk` holds term by term.

use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::DecisionProblem;
use crate::error::{Error, Result};
use crate::kernels::{Family, KernelModel, LogLikelihood, ObsParams, Observation};
use crate::mixing::{fmt_f64, GridSpec, MixingMeasure, PriorSpec};
use crate::pr::{derive_seed, fit, PrConfig};
use crate::quadrature::simpson;

/// Number of normal-kernel quadrature points.
pub const NORMAL_Y_POINTS: usize = 4001;
/// Half-width of the normal quadrature window in combined standard deviations.
pub const NORMAL_Y_SDS: f64 = 8.0;

/// Observation-space quadrature with fixed kernel parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct YQuadrature {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub params: ObsParams,
}

impl YQuadrature {
    /// Quadrature adapted to the marginal of `truth`.
    pub fn for_measure(model: &KernelModel, params: ObsParams, truth: &MixingMeasure) -> Result<Self> {
        if params.family() != model.family() {
            return Err(Error::domain(format!(
                "quadrature parameters for {} do not match kernel {}",
                params.family(),
                model.family()
            )));
        }
        if let Some(points) = model.discrete_support(&params, truth.highest_location()) {
            let weights = vec![1.0; points.len()];
            return Ok(YQuadrature {
                points,
                weights,
                params,
            });
        }
        let ObsParams::Normal { variance } = params else {
            unreachable!()
        };
        let mean = truth.moment(1);
        let var_f = (truth.moment(2) - mean * mean).max(0.0);
        let half = NORMAL_Y_SDS * (var_f + variance).sqrt();
        let (points, weights) = simpson(mean - half, mean + half, NORMAL_Y_POINTS);
        Ok(YQuadrature {
            points,
            weights,
            params,
        })
    }

    fn observation(&self, y: f64) -> Observation {
        Observation {
            y,
            params: self.params,
        }
    }
}

/// Log-likelihood rows `ln p_θ(y)` over the support of a measure, one per quadrature point.
fn log_lik_row(quad: &YQuadrature, y: f64, locations: &[f64], out: &mut Vec<f64>) {
    let ll = LogLikelihood::new(&quad.observation(y));
    out.clear();
    out.extend(locations.iter().map(|&t| ll.eval(t)));
}

/// Action of the rule built on `prior` at one observation, computed in log space.
enum RuleValue {
    Estimate(f64),
    /// `true` for a0 (accept the null).
    Accept(bool),
}

struct Rule<'a> {
    prior: &'a MixingMeasure,
    locations: Vec<f64>,
    log_mass: Vec<f64>,
    null: Option<(Vec<bool>, f64)>,
}

impl<'a> Rule<'a> {
    fn new(prior: &'a MixingMeasure, problem: &DecisionProblem) -> Self {
        let null = match problem {
            DecisionProblem::Estimate => None,
            DecisionProblem::Test { null, .. } => {
                Some((null.indicator(prior), problem.threshold().unwrap_or(0.5)))
            }
        };
        Rule {
            prior,
            locations: prior.locations(),
            log_mass: prior.support().map(|(_, m)| m.ln()).collect(),
            null,
        }
    }

    fn eval(&self, quad: &YQuadrature, y: f64, buf: &mut Vec<f64>) -> RuleValue {
        log_lik_row(quad, y, &self.locations, buf);
        let peak = buf
            .iter()
            .zip(&self.log_mass)
            .map(|(l, m)| l + m)
            .fold(f64::NEG_INFINITY, f64::max);
        let (mut z, mut acc) = (0.0, 0.0);
        for (i, ((l, m), t)) in buf.iter().zip(&self.log_mass).zip(self.prior.support()).enumerate() {
            let v = (l + m - peak).exp();
            if v == 0.0 {
                continue;
            }
            z += v;
            match &self.null {
                None => acc += v * t.0,
                Some((inside, _)) if inside[i] => acc += v,
                Some(_) => {}
            }
        }
        match &self.null {
            None => RuleValue::Estimate(acc / z),
            Some((_, r)) => RuleValue::Accept(acc / z > *r),
        }
    }
}

/// Risk of the rule built on `rule_prior` when θ is drawn from `truth`.
pub fn plug_in_risk(
    truth: &MixingMeasure,
    rule_prior: &MixingMeasure,
    model: &KernelModel,
    problem: &DecisionProblem,
    quad: &YQuadrature,
) -> Result<f64> {
    problem.validate()?;
    if quad.params.family() != model.family() {
        return Err(Error::domain("quadrature parameters do not match the kernel family"));
    }
    let rule = Rule::new(rule_prior, problem);
    let truth_locations = truth.locations();
    let truth_mass: Vec<f64> = truth.support().map(|(_, m)| m).collect();
    let truth_null = match problem {
        DecisionProblem::Test { null, .. } => Some(null.indicator(truth)),
        DecisionProblem::Estimate => None,
    };
    let (k1, k2) = match problem {
        DecisionProblem::Test { kappa1, kappa2, .. } => (*kappa1, *kappa2),
        DecisionProblem::Estimate => (0.0, 0.0),
    };

    let total = quad
        .points
        .par_iter()
        .zip(&quad.weights)
        .map_init(
            || (Vec::new(), Vec::new()),
            |(rbuf, tbuf), (&y, &wy)| {
                let action = rule.eval(quad, y, rbuf);
                log_lik_row(quad, y, &truth_locations, tbuf);
                let mut s = 0.0;
                for (i, (&ll, &m)) in tbuf.iter().zip(&truth_mass).enumerate() {
                    if m == 0.0 {
                        continue;
                    }
                    let joint = m * ll.exp();
                    s += joint
                        * match (&action, &truth_null) {
                            (RuleValue::Estimate(d), _) => (d - truth_locations[i]).powi(2),
                            (RuleValue::Accept(true), Some(inside)) => {
                                if inside[i] {
                                    0.0
                                } else {
                                    k2
                                }
                            }
                            (RuleValue::Accept(false), Some(inside)) => {
                                if inside[i] {
                                    k1
                                } else {
                                    0.0
                                }
                            }
                            (RuleValue::Accept(_), None) => unreachable!(),
                        };
                }
                wy * s
            },
        )
        .collect::<Vec<f64>>();
    Ok(total.iter().sum())
}

/// Minimal Bayes risk `ρ(F)`.
pub fn bayes_risk(
    truth: &MixingMeasure,
    model: &KernelModel,
    problem: &DecisionProblem,
    quad: &YQuadrature,
) -> Result<f64> {
    plug_in_risk(truth, truth, model, problem, quad)
}

/// Empirical Bayes risk `ρ_n(F)` of the plug-in rule built on `estimate`.
pub fn eb_risk(
    estimate: &MixingMeasure,
    truth: &MixingMeasure,
    model: &KernelModel,
    problem: &DecisionProblem,
    quad: &YQuadrature,
) -> Result<f64> {
    plug_in_risk(truth, estimate, model, problem, quad)
}

/// `ln p_F(y)` at every quadrature point, via log-sum-exp.
pub fn log_marginals(f: &MixingMeasure, quad: &YQuadrature) -> Vec<f64> {
    let locations = f.locations();
    let log_mass: Vec<f64> = f.support().map(|(_, m)| m.ln()).collect();
    quad.points
        .par_iter()
        .map_init(Vec::new, |buf, &y| {
            log_lik_row(quad, y, &locations, buf);
            let peak = buf
                .iter()
                .zip(&log_mass)
                .map(|(l, m)| l + m)
                .fold(f64::NEG_INFINITY, f64::max);
            if peak == f64::NEG_INFINITY {
                return peak;
            }
            let s: f64 = buf.iter().zip(&log_mass).map(|(l, m)| (l + m - peak).exp()).sum();
            peak + s.ln()
        })
        .collect()
}

/// `K(p, q) = Σ w_y p(y) ln(p(y)/q(y))` over quadrature points.
pub fn kl_divergence(p: &[f64], q: &[f64], weights: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.len() != weights.len() {
        return Err(Error::domain("KL inputs differ in length"));
    }
    let mut s = 0.0;
    for (i, ((&a, &b), &w)) in p.iter().zip(q).zip(weights).enumerate() {
        if a > 0.0 {
            if !(b > 0.0) {
                return Err(Error::domain(format!(
                    "KL support violation at quadrature point {i}: p = {a:e}, q = {b:e}"
                )));
            }
            s += w * a * (a / b).ln();
        }
    }
    Ok(s)
}

/// `K(p_truth, p_estimate)` computed from log-marginals.
pub fn marginal_kl(truth: &MixingMeasure, estimate: &MixingMeasure, quad: &YQuadrature) -> Result<f64> {
    let lp = log_marginals(truth, quad);
    let lq = log_marginals(estimate, quad);
    let mut s = 0.0;
    for (i, ((a, b), w)) in lp.iter().zip(&lq).zip(&quad.weights).enumerate() {
        if *a == f64::NEG_INFINITY {
            continue;
        }
        if *b == f64::NEG_INFINITY {
            return Err(Error::domain(format!(
                "KL support violation at y = {}",
                quad.points[i]
            )));
        }
        s += w * a.exp() * (a - b);
    }
    Ok(s)
}

/// Fixed observation parameters for a scenario (`variance` or `trials`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u32>,
}

impl ObsSpec {
    pub fn resolve(&self, family: Family) -> Result<ObsParams> {
        match family {
            Family::NormalLocation => Ok(ObsParams::Normal {
                variance: self
                    .variance
                    .ok_or_else(|| Error::config("obs.variance is required for normal_location"))?,
            }),
            Family::Binomial => Ok(ObsParams::Binomial {
                trials: self
                    .trials
                    .ok_or_else(|| Error::config("obs.trials is required for binomial"))?,
            }),
            Family::Poisson => Ok(ObsParams::Poisson),
        }
    }
}

/// A simulation study of PR-based empirical Bayes against a known prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimScenario {
    pub name: String,
    pub model: KernelModel,
    pub obs: ObsSpec,
    pub grid: GridSpec,
    pub true_prior: PriorSpec,
    pub initial_guess: PriorSpec,
    pub problem: DecisionProblem,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub pr: PrConfig,
}

impl SimScenario {
    /// Normal location model, `F = N(0, 1)` on `[−6, 6]`, uniform initial guess, `γ = 0.75`.
    pub fn default_normal() -> Self {
        SimScenario {
            name: "normal_location_kl".into(),
            model: KernelModel::new(Family::NormalLocation, -6.0, 6.0).expect("static support"),
            obs: ObsSpec {
                variance: Some(1.0),
                trials: None,
            },
            grid: GridSpec::midpoint(2000, -6.0, 6.0).expect("static grid"),
            true_prior: PriorSpec::Normal { mean: 0.0, sd: 1.0 },
            initial_guess: PriorSpec::Uniform,
            problem: DecisionProblem::Estimate,
            sample_sizes: vec![100, 500, 1000, 5000],
            replications: 20,
            pr: PrConfig {
                gamma: 0.75,
                n_permutations: 1,
                seed: 20_130_611,
                weight_override: None,
                shuffle: true,
                keep_permutations: false,
                relaxed_gamma: false,
            },
        }
    }

    /// Binomial(50) model with a Beta(30, 120) truth and a uniform initial guess.
    pub fn default_beta_binomial() -> Self {
        SimScenario {
            name: "beta_binomial_risk".into(),
            model: KernelModel::binomial_default(),
            obs: ObsSpec {
                variance: None,
                trials: Some(50),
            },
            grid: GridSpec::midpoint(2000, 1e-4, 1.0 - 1e-4).expect("static grid"),
            true_prior: PriorSpec::Beta { a: 30.0, b: 120.0 },
            initial_guess: PriorSpec::Uniform,
            problem: DecisionProblem::Estimate,
            sample_sizes: vec![50, 500, 5000],
            replications: 20,
            pr: PrConfig {
                gamma: 0.75,
                n_permutations: 1,
                seed: 20_130_612,
                weight_override: None,
                shuffle: true,
                keep_permutations: false,
                relaxed_gamma: false,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_sizes.is_empty() {
            return Err(Error::config("sample_sizes is empty"));
        }
        if self.sample_sizes.windows(2).any(|w| w[0] >= w[1]) || self.sample_sizes[0] == 0 {
            return Err(Error::config("sample_sizes must be positive and strictly increasing"));
        }
        if self.replications < 1 {
            return Err(Error::config("replications must be at least 1"));
        }
        self.pr.validate()?;
        self.problem.validate()?;
        self.grid.validate()?;
        self.obs.resolve(self.model.family())?;
        Ok(())
    }

    pub fn truth(&self) -> Result<MixingMeasure> {
        let f = self.true_prior.build(&self.grid)?;
        f.check_support(&self.model)?;
        Ok(f)
    }

    pub fn initial(&self) -> Result<MixingMeasure> {
        let f = self.initial_guess.build(&self.grid)?;
        f.check_support(&self.model)?;
        Ok(f)
    }
}

/// One `(n, replication)` cell of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub n: usize,
    pub rep: usize,
    pub excess_risk: f64,
    pub kl: f64,
    pub eb_risk: f64,
    pub bayes_risk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SizeSummary {
    pub n: usize,
    pub median_excess_risk: f64,
    pub median_kl: f64,
    pub min_margin: f64,
}

/// Assumption probes that can be checked mechanically.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// Largest kernel value over the truth support at probe observations (bounded kernel).
    pub kernel_sup: f64,
    pub kernel_bounded: bool,
    /// Partial sums of `w_i` and `w_i²` over the first 10^6 steps.
    pub weight_sum: f64,
    pub weight_sq_sum: f64,
    /// Power-schedule weights satisfy the series conditions iff γ ∈ (1/2, 1].
    pub weights_admissible: bool,
    pub ratio_bound: crate::kernels::RatioBoundReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub scenario: String,
    pub bayes_risk: f64,
    pub rows: Vec<TraceRow>,
    pub summary: Vec<SizeSummary>,
    pub assumptions: AssumptionReport,
}

impl Trace {
    /// Long-format CSV `n,rep,excess_risk,kl,eb_risk,bayes_risk`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "rep", "excess_risk", "kl", "eb_risk", "bayes_risk"])?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.rep.to_string(),
                fmt_f64(r.excess_risk),
                fmt_f64(r.kl),
                fmt_f64(r.eb_risk),
                fmt_f64(r.bayes_risk),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_for(&self, n: usize) -> Option<&SizeSummary> {
        self.summary.iter().find(|s| s.n == n)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Draw `n` observations: `θ_i` from the support of `truth`, then `Y_i ~ p_{θ_i}`.
pub fn simulate_data(
    truth: &MixingMeasure,
    params: ObsParams,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Observation>> {
    let locations = truth.locations();
    let masses: Vec<f64> = truth.support().map(|(_, m)| m).collect();
    let pick = WeightedIndex::new(&masses).map_err(|e| Error::domain(e.to_string()))?;
    (0..n)
        .map(|_| {
            let theta = locations[pick.sample(rng)];
            let y = match params {
                ObsParams::Normal { variance } => rand_distr::Normal::new(theta, variance.sqrt())
                    .map_err(|e| Error::domain(e.to_string()))?
                    .sample(rng),
                ObsParams::Binomial { trials } => rand_distr::Binomial::new(u64::from(trials), theta)
                    .map_err(|e| Error::domain(e.to_string()))?
                    .sample(rng) as f64,
                ObsParams::Poisson => {
                    if theta == 0.0 {
                        0.0
                    } else {
                        rand_distr::Poisson::new(theta)
                            .map_err(|e| Error::domain(e.to_string()))?
                            .sample(rng)
                    }
                }
            };
            Ok(Observation { y, params })
        })
        .collect()
}

pub fn assumption_report(scenario: &SimScenario, truth: &MixingMeasure, quad: &YQuadrature) -> AssumptionReport {
    let locations = truth.locations();
    let mut buf = Vec::new();
    let mut sup: f64 = 0.0;
    let step = (quad.points.len() / 50).max(1);
    for &y in quad.points.iter().step_by(step) {
        log_lik_row(quad, y, &locations, &mut buf);
        sup = buf.iter().fold(sup, |s, l| s.max(l.exp()));
    }
    let (mut sw, mut sw2) = (0.0, 0.0);
    for i in 1..=1_000_000usize {
        let w = match &scenario.pr.weight_override {
            Some(ws) => match ws.get(i - 1) {
                Some(w) => *w,
                None => break,
            },
            None => ((i + 1) as f64).powf(-scenario.pr.gamma),
        };
        sw += w;
        sw2 += w * w;
    }
    let g = scenario.pr.gamma;
    AssumptionReport {
        kernel_sup: sup,
        kernel_bounded: sup.is_finite(),
        weight_sum: sw,
        weight_sq_sum: sw2,
        weights_admissible: scenario.pr.weight_override.is_none() && g > 0.5 && g <= 1.0,
        ratio_bound: scenario.model.check_ratio_bound(&quad.params, 5),
    }
}

/// For every sample size and replication: simulate, fit PR, record excess risk and KL.
///
/// Replication `r` draws one data stream of the largest size from ChaCha8 seeded with
/// `derive_seed(root, r)`; smaller sizes use prefixes of it. The PR permutation seed for
/// size index `s` is `derive_seed(derive_seed(root, r), s)`.
pub fn optimality_trace(scenario: &SimScenario) -> Result<Trace> {
    scenario.validate()?;
    let truth = scenario.truth()?;
    let f0 = scenario.initial()?;
    let params = scenario.obs.resolve(scenario.model.family())?;
    let quad = YQuadrature::for_measure(&scenario.model, params, &truth)?;
    let rho = bayes_risk(&truth, &scenario.model, &scenario.problem, &quad)?;
    let n_max = *scenario.sample_sizes.last().expect("validated nonempty");
    let root = scenario.pr.seed;

    let per_rep: Vec<Vec<TraceRow>> = (0..scenario.replications)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = derive_seed(root, rep as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(rep_seed);
            let data = simulate_data(&truth, params, n_max, &mut rng)?;
            scenario
                .sample_sizes
                .iter()
                .enumerate()
                .map(|(s, &n)| {
                    let cfg = PrConfig {
                        seed: derive_seed(rep_seed, s as u64),
                        ..scenario.pr.clone()
                    };
                    let fitted = fit(&data[..n], &scenario.model, &f0, &cfg)?;
                    let rho_n = eb_risk(&fitted.estimate, &truth, &scenario.model, &scenario.problem, &quad)?;
                    let kl = marginal_kl(&truth, &fitted.estimate, &quad)?;
                    Ok(TraceRow {
                        n,
                        rep,
                        excess_risk: rho_n - rho,
                        kl,
                        eb_risk: rho_n,
                        bayes_risk: rho,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut rows: Vec<TraceRow> = per_rep.into_iter().flatten().collect();
    rows.sort_by_key(|r| (r.n, r.rep));
    let summary = scenario
        .sample_sizes
        .iter()
        .map(|&n| {
            let cell: Vec<&TraceRow> = rows.iter().filter(|r| r.n == n).collect();
            let ex: Vec<f64> = cell.iter().map(|r| r.excess_risk).collect();
            let kl: Vec<f64> = cell.iter().map(|r| r.kl).collect();
            SizeSummary {
                n,
                median_excess_risk: median(&ex),
                median_kl: median(&kl),
                min_margin: ex.iter().copied().fold(f64::INFINITY, f64::min),
            }
        })
        .collect();
    Ok(Trace {
        scenario: scenario.name.clone(),
        bayes_risk: rho,
        rows,
        summary,
        assumptions: assumption_report(scenario, &truth, &quad),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::NullSet;
    use crate::mixing::Atom;

    fn normal_kernel() -> KernelModel {
        KernelModel::new(Family::NormalLocation, -6.0, 6.0).unwrap()
    }

    #[test]
    fn point_mass_bayes_risk_is_zero() {
        let k = normal_kernel();
        let f = MixingMeasure::point_mass(0.5);
        let q = YQuadrature::for_measure(&k, ObsParams::Normal { variance: 1.0 }, &f).unwrap();
        let r = bayes_risk(&f, &k, &DecisionProblem::Estimate, &q).unwrap();
        assert!(r.abs() < 1e-20);
    }

    #[test]
    fn normal_normal_bayes_risk_is_half() {
        let k = normal_kernel();
        let f = MixingMeasure::normal(&GridSpec::midpoint(2000, -6.0, 6.0).unwrap(), 0.0, 1.0).unwrap();
        let q = YQuadrature::for_measure(&k, ObsParams::Normal { variance: 1.0 }, &f).unwrap();
        let r = bayes_risk(&f, &k, &DecisionProblem::Estimate, &q).unwrap();
        assert!((r - 0.5).abs() < 2e-3, "{r}");
    }

    #[test]
    fn wrong_point_mass_rule() {
        let k = normal_kernel();
        let truth = MixingMeasure::point_mass(0.0);
        let wrong = MixingMeasure::point_mass(1.0);
        let q = YQuadrature::for_measure(&k, ObsParams::Normal { variance: 1.0 }, &truth).unwrap();
        let r = eb_risk(&wrong, &truth, &k, &DecisionProblem::Estimate, &q).unwrap();
        assert!((r - 1.0).abs() < 1e-9, "{r}");
        let same = eb_risk(&truth, &truth, &k, &DecisionProblem::Estimate, &q).unwrap();
        assert_eq!(same, bayes_risk(&truth, &k, &DecisionProblem::Estimate, &q).unwrap());
    }

    fn binom_pmf(m: u32, y: u32, t: f64) -> f64 {
        let c = (1..=y).fold(1.0, |acc, k| acc * f64::from(m - y + k) / f64::from(k));
        c * t.powi(y as i32) * (1.0 - t).powi((m - y) as i32)
    }

    // Enumeration oracle for two-point loss on a discrete prior: for each y pick the
    // cheaper action under the rule prior, charge its loss under the truth.
    fn test_risk_oracle(truth: &[(f64, f64)], rule: &[(f64, f64)], null: f64, k1: f64, k2: f64, m: u32) -> f64 {
        let r = k2 / (k1 + k2);
        let mut total = 0.0;
        for y in 0..=m {
            let num: f64 = rule.iter().filter(|a| a.0 == null).map(|a| a.1 * binom_pmf(m, y, a.0)).sum();
            let den: f64 = rule.iter().map(|a| a.1 * binom_pmf(m, y, a.0)).sum();
            let accept = num / den > r;
            for &(t, w) in truth {
                let p = w * binom_pmf(m, y, t);
                total += match (accept, t == null) {
                    (true, false) => k2 * p,
                    (false, true) => k1 * p,
                    _ => 0.0,
                };
            }
        }
        total
    }

    #[test]
    fn test_risk_matches_enumeration() {
        let k = KernelModel::binomial_default();
        let truth_atoms = [(0.3, 0.6), (0.55, 0.4)];
        let rule_atoms = [(0.3, 0.35), (0.55, 0.65)];
        let mk = |a: &[(f64, f64)]| {
            MixingMeasure::from_atoms(a.iter().map(|&(l, m)| Atom { location: l, mass: m }).collect()).unwrap()
        };
        let (truth, rule) = (mk(&truth_atoms), mk(&rule_atoms));
        for m in [1u32, 7, 20] {
            for &(k1, k2) in &[(1.0, 1.0), (1.0, 3.0), (4.0, 1.0)] {
                let p = DecisionProblem::test(k1, k2, NullSet::atoms(vec![0.3])).unwrap();
                let q = YQuadrature::for_measure(&k, ObsParams::Binomial { trials: m }, &truth).unwrap();
                let bayes = bayes_risk(&truth, &k, &p, &q).unwrap();
                let eb = eb_risk(&rule, &truth, &k, &p, &q).unwrap();
                let ob = test_risk_oracle(&truth_atoms, &truth_atoms, 0.3, k1, k2, m);
                let oe = test_risk_oracle(&truth_atoms, &rule_atoms, 0.3, k1, k2, m);
                assert!((bayes - ob).abs() < 1e-10, "m={m}: {bayes} vs {ob}");
                assert!((eb - oe).abs() < 1e-10, "m={m}: {eb} vs {oe}");
                assert!(eb >= bayes - 1e-8);
            }
        }
    }

    #[test]
    fn kl_cases() {
        let k = KernelModel::binomial_default();
        let quad = |f: &MixingMeasure| YQuadrature::for_measure(&k, ObsParams::Binomial { trials: 10 }, f).unwrap();
        let a = MixingMeasure::point_mass(0.5);
        let b = MixingMeasure::point_mass(0.6);
        let q = quad(&a);
        assert_eq!(marginal_kl(&a, &a, &q).unwrap(), 0.0);
        let oracle: f64 = (0..=10u32)
            .map(|y| {
                let (p, r) = (binom_pmf(10, y, 0.5), binom_pmf(10, y, 0.6));
                p * (p / r).ln()
            })
            .sum();
        assert!((marginal_kl(&a, &b, &q).unwrap() - oracle).abs() < 1e-12);
        let pa: Vec<f64> = (0..=10u32).map(|y| binom_pmf(10, y, 0.5)).collect();
        let pb: Vec<f64> = (0..=10u32).map(|y| binom_pmf(10, y, 0.6)).collect();
        assert!((kl_divergence(&pa, &pb, &[1.0; 11]).unwrap() - oracle).abs() < 1e-12);
        assert_eq!(kl_divergence(&pa, &pa, &[1.0; 11]).unwrap(), 0.0);
        assert!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0], &[1.0, 1.0]).is_err());

        let grid = GridSpec::midpoint(2000, 1e-4, 1.0 - 1e-4).unwrap();
        let beta = MixingMeasure::init_beta(&grid, 30.0, 120.0).unwrap();
        let unif = MixingMeasure::uniform(&grid).unwrap();
        assert!(marginal_kl(&beta, &unif, &quad(&beta)).unwrap() > 0.0);
    }

    #[test]
    fn trace_is_reproducible_and_dominates() {
        let mut s = SimScenario::default_beta_binomial();
        s.grid = GridSpec::midpoint(200, 1e-4, 1.0 - 1e-4).unwrap();
        s.sample_sizes = vec![100];
        s.replications = 1;
        let a = optimality_trace(&s).unwrap();
        let b = optimality_trace(&s).unwrap();
        assert_eq!(a.rows.len(), 1);
        assert_eq!(a.rows, b.rows);
        assert!(a.rows[0].excess_risk >= -1e-8);
        assert!(a.assumptions.weights_admissible);
        assert!(a.assumptions.ratio_bound.finite);
    }

    #[test]
    fn informative_start_beats_uniform_start() {
        let mut base = SimScenario::default_beta_binomial();
        base.grid = GridSpec::midpoint(400, 1e-4, 1.0 - 1e-4).unwrap();
        base.sample_sizes = vec![100];
        base.replications = 5;
        base.pr.gamma = 0.95;
        let uniform = optimality_trace(&base).unwrap();
        let informed = optimality_trace(&SimScenario {
            initial_guess: base.true_prior.clone(),
            ..base.clone()
        })
        .unwrap();
        for (u, i) in uniform.rows.iter().zip(&informed.rows) {
            assert!(i.excess_risk < u.excess_risk, "rep {}: {} vs {}", u.rep, i.excess_risk, u.excess_risk);
        }
    }

    #[test]
    fn scenario_validation() {
        let mut s = SimScenario::default_normal();
        s.sample_sizes = vec![10, 10];
        assert!(s.validate().is_err());
        let mut s = SimScenario::default_normal();
        s.obs = ObsSpec::default();
        assert!(s.validate().is_err());
        let mut s = SimScenario::default_normal();
        s.replications = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}

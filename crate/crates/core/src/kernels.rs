//! Parametric kernel families `p_θ(y)` used inside every mixture.
//!
//! A [`KernelModel`] fixes the family and the admissible parameter interval.
//! Nuisance quantities that vary from one observation to the next (the trial
//! count of a binomial draw, the variance of a normal measurement) travel with
//! the [`Observation`] rather than the model.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quadrature::{simpson, xlny};

/// Default distance of the binomial parameter interval from {0, 1}.
pub const BINOMIAL_EPS: f64 = 1e-4;

/// Half-width, in standard deviations, of the observation window used for
/// normal-kernel quadrature.
pub const NORMAL_WINDOW_SDS: f64 = 10.0;

const POISSON_TAIL_MASS: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    NormalLocation,
    Binomial,
    Poisson,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::NormalLocation => "normal_location",
            Family::Binomial => "binomial",
            Family::Poisson => "poisson",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-observation fixed parameters of the sampling density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObsParams {
    Normal { variance: f64 },
    Binomial { trials: u32 },
    Poisson,
}

impl ObsParams {
    pub fn family(&self) -> Family {
        match self {
            ObsParams::Normal { .. } => Family::NormalLocation,
            ObsParams::Binomial { .. } => Family::Binomial,
            ObsParams::Poisson => Family::Poisson,
        }
    }
}

/// A single observation `y` together with its fixed kernel parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub y: f64,
    pub params: ObsParams,
}

impl Observation {
    pub fn normal(y: f64, variance: f64) -> Self {
        Observation {
            y,
            params: ObsParams::Normal { variance },
        }
    }

    pub fn binomial(hits: u32, trials: u32) -> Self {
        Observation {
            y: f64::from(hits),
            params: ObsParams::Binomial { trials },
        }
    }

    pub fn poisson(count: u32) -> Self {
        Observation {
            y: f64::from(count),
            params: ObsParams::Poisson,
        }
    }
}

/// Sampling family plus the closed parameter interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRepr", into = "KernelRepr")]
pub struct KernelModel {
    family: Family,
    lo: f64,
    hi: f64,
}

#[derive(Serialize, Deserialize)]
struct KernelRepr {
    family: Family,
    params: KernelParams,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelParams {
    theta_support: [f64; 2],
}

impl TryFrom<KernelRepr> for KernelModel {
    type Error = Error;

    fn try_from(r: KernelRepr) -> Result<Self> {
        KernelModel::new(r.family, r.params.theta_support[0], r.params.theta_support[1])
    }
}

impl From<KernelModel> for KernelRepr {
    fn from(k: KernelModel) -> Self {
        KernelRepr {
            family: k.family,
            params: KernelParams {
                theta_support: [k.lo, k.hi],
            },
        }
    }
}

/// Numerical estimate of `sup ∫ (p_θ1 / p_θ2)² p_θ3 dμ` over a parameter lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioBoundReport {
    /// Natural log of the bound; finite even when the bound itself overflows `f64`.
    pub log_bound: f64,
    pub bound: f64,
    pub finite: bool,
    pub lattice_points: usize,
}

impl KernelModel {
    pub fn new(family: Family, lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::domain(format!(
                "theta support [{lo}, {hi}] must be a finite closed interval"
            )));
        }
        match family {
            Family::Binomial if lo <= 0.0 || hi >= 1.0 => {
                return Err(Error::domain(format!(
                    "binomial theta support [{lo}, {hi}] must lie inside (0, 1)"
                )))
            }
            Family::Poisson if lo < 0.0 => {
                return Err(Error::domain(format!(
                    "poisson theta support [{lo}, {hi}] must be nonnegative"
                )))
            }
            _ => {}
        }
        Ok(KernelModel { family, lo, hi })
    }

    /// Binomial kernel on `[ε, 1 − ε]` with the default `ε`.
    pub fn binomial_default() -> Self {
        KernelModel {
            family: Family::Binomial,
            lo: BINOMIAL_EPS,
            hi: 1.0 - BINOMIAL_EPS,
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn theta_support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta >= self.lo && theta <= self.hi
    }

    /// Validate that `obs` belongs to this family and lies in the observation support.
    pub fn check_observation(&self, obs: &Observation) -> Result<()> {
        if obs.params.family() != self.family {
            return Err(Error::domain(format!(
                "observation parameters are for the {} family, kernel is {}",
                obs.params.family(),
                self.family
            )));
        }
        let y = obs.y;
        match obs.params {
            ObsParams::Normal { variance } => {
                if !y.is_finite() {
                    return Err(Error::domain(format!("observation y = {y} is not finite")));
                }
                if !(variance > 0.0 && variance.is_finite()) {
                    return Err(Error::domain(format!(
                        "normal variance {variance} must be positive"
                    )));
                }
            }
            ObsParams::Binomial { trials } => {
                if y < 0.0 || y.fract() != 0.0 || y > f64::from(trials) {
                    return Err(Error::domain(format!(
                        "binomial observation y = {y} outside 0..={trials}"
                    )));
                }
            }
            ObsParams::Poisson => {
                if y < 0.0 || y.fract() != 0.0 || !y.is_finite() {
                    return Err(Error::domain(format!(
                        "poisson observation y = {y} must be a nonnegative integer"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `p_θ(y)` with respect to Lebesgue (normal) or counting (binomial, Poisson) measure.
    pub fn density(&self, theta: f64, obs: &Observation) -> Result<f64> {
        if !self.contains(theta) {
            return Err(Error::domain(format!(
                "theta = {theta} outside support [{}, {}]",
                self.lo, self.hi
            )));
        }
        self.check_observation(obs)?;
        Ok(LogLikelihood::new(obs).eval(theta).exp())
    }

    /// Fill `out[j] = p_{nodes[j]}(y)`. The observation must already be validated.
    pub fn likelihood_into(&self, nodes: &[f64], obs: &Observation, out: &mut Vec<f64>) {
        let ll = LogLikelihood::new(obs);
        out.clear();
        out.extend(nodes.iter().map(|&t| ll.eval(t).exp()));
    }

    /// Observation-space support points for a discrete kernel, or `None` for the normal family.
    /// Poisson support is truncated where the tail beyond `theta_max` has mass below 1e-15.
    pub fn discrete_support(&self, params: &ObsParams, theta_max: f64) -> Option<Vec<f64>> {
        match *params {
            ObsParams::Normal { .. } => None,
            ObsParams::Binomial { trials } => Some((0..=trials).map(f64::from).collect()),
            ObsParams::Poisson => {
                let mut ys = Vec::new();
                let mut cum = 0.0;
                let mut y = 0u32;
                while cum < 1.0 - POISSON_TAIL_MASS || f64::from(y) <= theta_max {
                    cum += LogLikelihood::new(&Observation::poisson(y)).eval(theta_max).exp();
                    ys.push(f64::from(y));
                    y += 1;
                    if y > 1_000_000 {
                        break;
                    }
                }
                Some(ys)
            }
        }
    }

    /// Evaluate the likelihood-ratio bound on a `lattice³` grid of parameters.
    ///
    /// Normal kernels integrate over a window extending `NORMAL_WINDOW_SDS` standard
    /// deviations beyond the support, widened by twice the support length to cover the
    /// shifted centre of the squared ratio. Advisory only; a non-finite value is reported.
    pub fn check_ratio_bound(&self, params: &ObsParams, lattice: usize) -> RatioBoundReport {
        let lattice = if self.lo == self.hi { 1 } else { lattice.max(2) };
        let thetas: Vec<f64> = (0..lattice)
            .map(|i| {
                if lattice == 1 {
                    self.lo
                } else {
                    self.lo + (self.hi - self.lo) * i as f64 / (lattice - 1) as f64
                }
            })
            .collect();

        let (ys, wy): (Vec<f64>, Vec<f64>) = match self.discrete_support(params, self.hi) {
            Some(ys) => {
                let n = ys.len();
                (ys, vec![1.0; n])
            }
            None => {
                let sd = match params {
                    ObsParams::Normal { variance } => variance.sqrt(),
                    _ => unreachable!(),
                };
                let pad = NORMAL_WINDOW_SDS * sd + 2.0 * (self.hi - self.lo);
                simpson(self.lo - pad, self.hi + pad, 20_001)
            }
        };
        let obs_at = |y: f64| Observation { y, params: *params };
        let lls: Vec<LogLikelihood> = ys.iter().map(|&y| LogLikelihood::new(&obs_at(y))).collect();

        let mut log_bound = f64::NEG_INFINITY;
        let mut terms = Vec::with_capacity(lls.len());
        for &t1 in &thetas {
            for &t2 in &thetas {
                for &t3 in &thetas {
                    terms.clear();
                    terms.extend(lls.iter().zip(&wy).map(|(ll, w)| {
                        w.ln() + 2.0 * (ll.eval(t1) - ll.eval(t2)) + ll.eval(t3)
                    }));
                    let peak = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let v = if peak.is_finite() {
                        peak + terms.iter().map(|l| (l - peak).exp()).sum::<f64>().ln()
                    } else {
                        peak
                    };
                    log_bound = if v.is_nan() { f64::INFINITY } else { log_bound.max(v) };
                }
            }
        }
        RatioBoundReport {
            log_bound,
            bound: log_bound.exp(),
            finite: log_bound.is_finite(),
            lattice_points: lattice,
        }
    }
}

/// Log-density of one observation as a function of θ, with θ-free terms precomputed.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogLikelihood {
    kind: LlKind,
}

#[derive(Debug, Clone, Copy)]
enum LlKind {
    Normal { y: f64, inv_two_var: f64, constant: f64 },
    Binomial { hits: f64, misses: f64, constant: f64 },
    Poisson { count: f64, constant: f64 },
}

impl LogLikelihood {
    pub(crate) fn new(obs: &Observation) -> Self {
        let y = obs.y;
        let kind = match obs.params {
            ObsParams::Normal { variance } => LlKind::Normal {
                y,
                inv_two_var: 0.5 / variance,
                constant: -0.5 * (2.0 * PI * variance).ln(),
            },
            ObsParams::Binomial { trials } => {
                let m = f64::from(trials);
                LlKind::Binomial {
                    hits: y,
                    misses: m - y,
                    constant: ln_gamma(m + 1.0) - ln_gamma(y + 1.0) - ln_gamma(m - y + 1.0),
                }
            }
            ObsParams::Poisson => LlKind::Poisson {
                count: y,
                constant: -ln_gamma(y + 1.0),
            },
        };
        LogLikelihood { kind }
    }

    #[inline]
    pub(crate) fn eval(&self, theta: f64) -> f64 {
        match self.kind {
            LlKind::Normal { y, inv_two_var, constant } => {
                let d = y - theta;
                constant - d * d * inv_two_var
            }
            LlKind::Binomial { hits, misses, constant } => {
                constant + xlny(hits, theta) + xlny(misses, 1.0 - theta)
            }
            LlKind::Poisson { count, constant } => constant + xlny(count, theta) - theta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal_model(lo: f64, hi: f64) -> KernelModel {
        KernelModel::new(Family::NormalLocation, lo, hi).unwrap()
    }

    #[test]
    fn closed_form_densities() {
        let n = normal_model(-5.0, 5.0);
        let d = n.density(0.0, &Observation::normal(0.0, 1.0)).unwrap();
        assert!((d - 0.398_942_280_401_432_7).abs() < 1e-12);

        let b = KernelModel::binomial_default();
        let d = b.density(0.5, &Observation::binomial(5, 10)).unwrap();
        assert!((d - 252.0 / 1024.0).abs() < 1e-12);

        let p = KernelModel::new(Family::Poisson, 0.0, 10.0).unwrap();
        let d = p.density(2.0, &Observation::poisson(0)).unwrap();
        assert!((d - (-2.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn out_of_support_values_are_named() {
        let b = KernelModel::binomial_default();
        let err = b.density(0.0, &Observation::binomial(1, 2)).unwrap_err();
        assert!(err.to_string().contains("theta = 0"));
        let err = b.density(0.5, &Observation::binomial(3, 2)).unwrap_err();
        assert!(err.to_string().contains("y = 3"));
        let err = b.density(0.5, &Observation::normal(0.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        assert!(KernelModel::new(Family::Binomial, 0.0, 0.5).is_err());
        assert!(KernelModel::new(Family::Poisson, -1.0, 0.5).is_err());
        assert!(KernelModel::new(Family::NormalLocation, 1.0, 0.5).is_err());
    }

    #[test]
    fn discrete_densities_sum_to_one() {
        let b = KernelModel::binomial_default();
        for &(m, t) in &[(1u32, 0.3), (10, 0.5), (57, 0.05), (400, 0.27)] {
            let s: f64 = (0..=m)
                .map(|y| b.density(t, &Observation::binomial(y, m)).unwrap())
                .sum();
            assert!((s - 1.0).abs() < 1e-12, "m={m} t={t} sum={s}");
        }
        let p = KernelModel::new(Family::Poisson, 0.0, 60.0).unwrap();
        for &t in &[0.0, 0.4, 3.0, 47.5] {
            let ys = p.discrete_support(&ObsParams::Poisson, t).unwrap();
            let s: f64 = ys
                .iter()
                .map(|&y| p.density(t, &Observation::poisson(y as u32)).unwrap())
                .sum();
            assert!((s - 1.0).abs() < 1e-12, "t={t} sum={s}");
        }
    }

    #[test]
    fn normal_density_integrates_to_one_on_window() {
        let n = normal_model(-100.0, 100.0);
        for &(t, v) in &[(0.0, 1.0), (2.5, 0.0025), (-7.0, 9.0)] {
            let sd: f64 = f64::sqrt(v);
            let (ys, w) = simpson(t - 10.0 * sd, t + 10.0 * sd, 4001);
            let s: f64 = ys
                .iter()
                .zip(&w)
                .map(|(&y, w)| w * n.density(t, &Observation::normal(y, v)).unwrap())
                .sum();
            assert!((s - 1.0).abs() < 1e-8, "t={t} v={v} s={s}");
        }
    }

    #[test]
    fn normal_density_symmetric_in_theta_and_y() {
        let n = normal_model(-10.0, 10.0);
        for &(a, b) in &[(0.3, -1.2), (4.0, 4.5), (-9.0, 2.0)] {
            let d1 = n.density(a, &Observation::normal(b, 1.0)).unwrap();
            let d2 = n.density(b, &Observation::normal(a, 1.0)).unwrap();
            assert_eq!(d1, d2);
        }
    }

    // Brute-force ratio-bound oracle: explicit pmf from factorials over a 5³ lattice.
    fn binomial_ratio_oracle(m: u32, lo: f64, hi: f64) -> f64 {
        let choose = |m: u32, y: u32| -> f64 {
            (1..=y).fold(1.0, |acc, k| acc * f64::from(m - y + k) / f64::from(k))
        };
        let pmf = |t: f64, y: u32| choose(m, y) * t.powi(y as i32) * (1.0 - t).powi((m - y) as i32);
        let th: Vec<f64> = (0..5).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect();
        let mut best: f64 = 0.0;
        for &a in &th {
            for &b in &th {
                for &c in &th {
                    let s: f64 = (0..=m).map(|y| (pmf(a, y) / pmf(b, y)).powi(2) * pmf(c, y)).sum();
                    best = best.max(s);
                }
            }
        }
        best
    }

    #[test]
    fn ratio_bound_binomial_matches_enumeration() {
        let k = KernelModel::new(Family::Binomial, 0.1, 0.9).unwrap();
        let r = k.check_ratio_bound(&ObsParams::Binomial { trials: 10 }, 5);
        assert!(r.finite);
        let oracle = binomial_ratio_oracle(10, 0.1, 0.9);
        assert!((r.bound - oracle).abs() / oracle < 1e-10, "{} vs {}", r.bound, oracle);
    }

    #[test]
    fn ratio_bound_normal_matches_gaussian_closed_form() {
        let k = normal_model(-1.0, 1.0);
        let r = k.check_ratio_bound(&ObsParams::Normal { variance: 1.0 }, 5);
        assert!(r.finite);
        let th: Vec<f64> = (0..5).map(|i| -1.0 + 0.5 * i as f64).collect();
        let mut best: f64 = 0.0;
        for &a in &th {
            for &b in &th {
                for &c in &th {
                    // log integrand = -(y-a)² + (y-b)² - (y-c)²/2 - ½ln2π; complete the square in y
                    // leading coefficient -1/2, linear 2a - 2b + c, constant -a² + b² - c²/2
                    let lin = 2.0 * a - 2.0 * b + c;
                    let cst = -a * a + b * b - c * c / 2.0;
                    best = best.max((cst + lin * lin / 2.0).exp());
                }
            }
        }
        assert!((r.bound - best).abs() / best < 1e-6, "{} vs {}", r.bound, best);
    }

    #[test]
    fn ratio_bound_collapsed_support_is_one() {
        let k = normal_model(0.3, 0.3);
        let r = k.check_ratio_bound(&ObsParams::Normal { variance: 1.0 }, 5);
        assert_eq!(r.lattice_points, 1);
        assert!((r.bound - 1.0).abs() < 1e-8);
    }

    #[test]
    fn kernel_json_shape() {
        let k = KernelModel::new(Family::Binomial, 0.01, 0.99).unwrap();
        let s = serde_json::to_string(&k).unwrap();
        assert_eq!(s, r#"{"family":"binomial","params":{"theta_support":[0.01,0.99]}}"#);
        let back: KernelModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, k);
        let bad = r#"{"family":"binomial","params":{"theta_support":[0.0,0.99]}}"#;
        assert!(serde_json::from_str::<KernelModel>(bad).is_err());
    }
}

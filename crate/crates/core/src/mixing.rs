//! Discretised mixing (prior) measures.
//!
//! A [`MixingMeasure`] is a density on a fixed quadrature grid together with an
//! optional list of point masses. The dominating measure is Lebesgue measure on
//! the grid plus counting measure on the atoms, so both continuous priors and
//! point-null priors live in the same type.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelModel, Observation};

/// Marginal densities at or below this value are treated as zero.
pub const MIN_MARGINAL: f64 = 1e-300;

/// Default number of grid nodes.
pub const DEFAULT_NODE_COUNT: usize = 2000;

const MASS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridRule {
    #[default]
    Midpoint,
    Trapezoid,
}

/// Discretisation of the parameter interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub node_count: usize,
    pub bounds: [f64; 2],
    #[serde(default)]
    pub rule: GridRule,
}

impl GridSpec {
    pub fn new(node_count: usize, lo: f64, hi: f64, rule: GridRule) -> Result<Self> {
        let spec = GridSpec {
            node_count,
            bounds: [lo, hi],
            rule,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn midpoint(node_count: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(node_count, lo, hi, GridRule::Midpoint)
    }

    /// 2000 midpoint nodes spanning the support of `model`.
    pub fn for_model(model: &KernelModel) -> Result<Self> {
        let (lo, hi) = model.theta_support();
        Self::midpoint(DEFAULT_NODE_COUNT, lo, hi)
    }

    /// Data-driven bounds for normal-location data: `[min x − 3·max σ, max x + 3·max σ]`.
    pub fn for_normal_data(node_count: usize, xs: &[f64], variances: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::domain("cannot derive grid bounds from empty data"));
        }
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sd = variances.iter().copied().fold(0.0, f64::max).sqrt();
        Self::midpoint(node_count, min - 3.0 * sd, max + 3.0 * sd)
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.bounds;
        if self.node_count < 2 {
            return Err(Error::config(format!(
                "grid node_count = {} must be at least 2",
                self.node_count
            )));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::config(format!(
                "grid bounds [{lo}, {hi}] must be finite with lo < hi"
            )));
        }
        Ok(())
    }

    /// Nodes and quadrature weights of the rule.
    pub fn nodes_and_weights(&self) -> (Vec<f64>, Vec<f64>) {
        let [lo, hi] = self.bounds;
        let n = self.node_count;
        match self.rule {
            GridRule::Midpoint => {
                let h = (hi - lo) / n as f64;
                let nodes = (0..n).map(|j| lo + h * (j as f64 + 0.5)).collect();
                (nodes, vec![h; n])
            }
            GridRule::Trapezoid => crate::quadrature::trapezoid(lo, hi, n),
        }
    }
}

/// A point mass at `location`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

/// Initial-guess / true-prior specifications used by configs and scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    Uniform,
    Beta { a: f64, b: f64 },
    Normal { mean: f64, sd: f64 },
    /// Purely atomic prior; the grid is ignored.
    Atoms { atoms: Vec<Atom> },
}

impl PriorSpec {
    pub fn build(&self, grid: &GridSpec) -> Result<MixingMeasure> {
        match self {
            PriorSpec::Uniform => MixingMeasure::uniform(grid),
            PriorSpec::Beta { a, b } => MixingMeasure::init_beta(grid, *a, *b),
            PriorSpec::Normal { mean, sd } => MixingMeasure::normal(grid, *mean, *sd),
            PriorSpec::Atoms { atoms } => MixingMeasure::from_atoms(atoms.clone()),
        }
    }
}

/// Prior measure: grid density plus atoms, total mass one.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMeasure {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    density: Vec<f64>,
    atoms: Vec<Atom>,
}

impl MixingMeasure {
    /// Grid density proportional to `f` at each node, normalised to mass one.
    pub fn from_grid_fn(spec: &GridSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        spec.validate()?;
        let (nodes, weights) = spec.nodes_and_weights();
        let density = nodes.iter().map(|&t| f(t)).collect();
        Self::from_parts(nodes, weights, density, Vec::new())
    }

    /// Assemble and normalise a measure from raw parts.
    pub fn from_parts(
        nodes: Vec<f64>,
        weights: Vec<f64>,
        density: Vec<f64>,
        atoms: Vec<Atom>,
    ) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.len() != density.len() {
            return Err(Error::domain("grid nodes, weights and density differ in length"));
        }
        if nodes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::domain("grid nodes must be strictly increasing"));
        }
        if let Some(v) = weights.iter().chain(&density).find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::domain(format!(
                "grid weights and densities must be finite and nonnegative, got {v}"
            )));
        }
        if let Some(a) = atoms
            .iter()
            .find(|a| !(a.location.is_finite() && a.mass.is_finite() && a.mass >= 0.0))
        {
            return Err(Error::domain(format!(
                "atom at {} has invalid mass {}",
                a.location, a.mass
            )));
        }
        let mut m = MixingMeasure {
            nodes,
            weights,
            density,
            atoms,
        };
        let total = m.total_mass();
        if !(total > 0.0) {
            return Err(Error::domain("measure has zero total mass"));
        }
        m.scale(1.0 / total);
        Ok(m)
    }

    pub fn uniform(spec: &GridSpec) -> Result<Self> {
        Self::from_grid_fn(spec, |_| 1.0)
    }

    /// Beta(a, b) density truncated to the grid and renormalised there.
    pub fn init_beta(spec: &GridSpec, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::domain(format!(
                "beta shape parameters must be positive, got a = {a}, b = {b}"
            )));
        }
        let [lo, hi] = spec.bounds;
        if !(lo > 0.0 && hi < 1.0) {
            return Err(Error::domain(format!(
                "beta grid bounds [{lo}, {hi}] must lie inside (0, 1)"
            )));
        }
        let log_kernel = |t: f64| (a - 1.0) * t.ln() + (b - 1.0) * (1.0 - t).ln();
        let (nodes, _) = spec.nodes_and_weights();
        let peak = nodes.iter().map(|&t| log_kernel(t)).fold(f64::NEG_INFINITY, f64::max);
        Self::from_grid_fn(spec, |t| (log_kernel(t) - peak).exp())
    }

    /// Normal(mean, sd²) density truncated to the grid.
    pub fn normal(spec: &GridSpec, mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0 && sd.is_finite() && mean.is_finite()) {
            return Err(Error::domain(format!(
                "normal prior needs finite mean and positive sd, got ({mean}, {sd})"
            )));
        }
        Self::from_grid_fn(spec, |t| {
            let z = (t - mean) / sd;
            (-0.5 * z * z).exp()
        })
    }

    pub fn point_mass(location: f64) -> Self {
        MixingMeasure {
            nodes: Vec::new(),
            weights: Vec::new(),
            density: Vec::new(),
            atoms: vec![Atom {
                location,
                mass: 1.0,
            }],
        }
    }

    pub fn from_atoms(atoms: Vec<Atom>) -> Result<Self> {
        Self::from_parts(Vec::new(), Vec::new(), Vec::new(), atoms)
    }

    /// `(1 − atom_share)·self + atom_share·atoms`, with the atoms renormalised among themselves.
    pub fn with_atoms(&self, atoms: &[Atom], atom_share: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&atom_share) {
            return Err(Error::domain(format!("atom share {atom_share} outside [0, 1]")));
        }
        let atom_total: f64 = atoms.iter().map(|a| a.mass).sum();
        if atom_share > 0.0 && !(atom_total > 0.0) {
            return Err(Error::domain("atoms carry no mass"));
        }
        let mut out = self.clone();
        out.scale(1.0 - atom_share);
        out.atoms.extend(atoms.iter().map(|a| Atom {
            location: a.location,
            mass: atom_share * a.mass / atom_total,
        }));
        Ok(out)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Number of support points (grid nodes plus atoms).
    pub fn len(&self) -> usize {
        self.nodes.len() + self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Iterate `(θ, mass)` over grid nodes (mass `w_j f_j`) then atoms.
    pub fn support(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes
            .iter()
            .zip(&self.weights)
            .zip(&self.density)
            .map(|((&t, &w), &f)| (t, w * f))
            .chain(self.atoms.iter().map(|a| (a.location, a.mass)))
    }

    /// Support locations in the same order as [`support`](Self::support).
    pub fn locations(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .copied()
            .chain(self.atoms.iter().map(|a| a.location))
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.support().map(|(_, m)| m).sum()
    }

    pub fn lowest_location(&self) -> f64 {
        self.locations().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn highest_location(&self) -> f64 {
        self.locations().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Multiply every density value and atom mass by `c`.
    pub(crate) fn scale(&mut self, c: f64) {
        self.density.iter_mut().for_each(|f| *f *= c);
        self.atoms.iter_mut().for_each(|a| a.mass *= c);
    }

    pub(crate) fn renormalize(&mut self) {
        let t = self.total_mass();
        if t > 0.0 {
            self.scale(1.0 / t);
        }
    }

    /// Multiply the mass at support point `i` (nodes then atoms) by `factor[i]`.
    pub(crate) fn reweight(&mut self, factor: impl Fn(usize) -> f64) {
        let n = self.nodes.len();
        for (j, f) in self.density.iter_mut().enumerate() {
            *f *= factor(j);
        }
        for (k, a) in self.atoms.iter_mut().enumerate() {
            a.mass *= factor(n + k);
        }
    }

    /// Check every support point lies in the kernel's parameter interval.
    pub fn check_support(&self, model: &KernelModel) -> Result<()> {
        match self.locations().into_iter().find(|&t| !model.contains(t)) {
            Some(t) => {
                let (lo, hi) = model.theta_support();
                Err(Error::domain(format!(
                    "measure support point {t} outside kernel support [{lo}, {hi}]"
                )))
            }
            None => Ok(()),
        }
    }

    /// `p_F(y) = Σ_j w_j f_j p_{θ_j}(y) + Σ_k m_k p_{θ_k}(y)`.
    pub fn marginal_density(&self, model: &KernelModel, obs: &Observation) -> Result<f64> {
        let mut lik = Vec::with_capacity(self.len());
        self.marginal_with(model, obs, &mut lik)
    }

    /// Marginal density, leaving the kernel values at every support point in `lik`.
    pub(crate) fn marginal_with(
        &self,
        model: &KernelModel,
        obs: &Observation,
        lik: &mut Vec<f64>,
    ) -> Result<f64> {
        model.check_observation(obs)?;
        model.likelihood_into(&self.locations(), obs, lik);
        let p: f64 = self.support().zip(lik.iter()).map(|((_, m), l)| m * l).sum();
        if p > MIN_MARGINAL {
            Ok(p)
        } else {
            Err(Error::DegenerateObservation {
                y: obs.y,
                marginal: p,
                permutation: None,
                step: None,
            })
        }
    }

    /// Bayes update `dF(θ | y) = p_θ(y) dF(θ) / p_F(y)`.
    pub fn posterior(&self, model: &KernelModel, obs: &Observation) -> Result<Self> {
        let mut lik = Vec::with_capacity(self.len());
        let p = self.marginal_with(model, obs, &mut lik)?;
        let mut out = self.clone();
        out.reweight(|i| lik[i] / p);
        out.renormalize();
        Ok(out)
    }

    /// `∫ θ^k dF(θ)`.
    pub fn moment(&self, k: u32) -> f64 {
        self.expectation(|t| t.powi(k as i32))
    }

    /// `∫ g(θ) dF(θ)`.
    pub fn expectation(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.support().map(|(t, m)| m * g(t)).sum()
    }

    /// Mass of grid nodes inside `[lo, hi]` (boundaries included) plus atoms at the listed locations.
    pub fn mass_in(&self, interval: Option<(f64, f64)>, atom_locations: &[f64]) -> f64 {
        self.support_indicator(interval, atom_locations)
            .zip(self.support())
            .filter(|(inside, _)| *inside)
            .map(|(_, (_, m))| m)
            .sum()
    }

    /// Membership flags (nodes then atoms) for a null set given as a grid interval plus atom locations.
    pub(crate) fn support_indicator<'a>(
        &'a self,
        interval: Option<(f64, f64)>,
        atom_locations: &'a [f64],
    ) -> impl Iterator<Item = bool> + 'a {
        let in_interval = move |t: f64| interval.is_some_and(|(lo, hi)| t >= lo && t <= hi);
        self.nodes.iter().map(move |&t| in_interval(t)).chain(
            self.atoms
                .iter()
                .map(move |a| atom_locations.iter().any(|&l| (l - a.location).abs() <= 1e-12)),
        )
    }

    fn same_layout(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.weights == other.weights
            && self.atoms.len() == other.atoms.len()
            && self
                .atoms
                .iter()
                .zip(&other.atoms)
                .all(|(a, b)| a.location == b.location)
    }

    /// `λ·self + (1 − λ)·other` on a shared layout.
    pub fn mix(&self, other: &Self, lambda: f64) -> Result<Self> {
        if !self.same_layout(other) {
            return Err(Error::domain("cannot mix measures with different grids or atoms"));
        }
        let mut out = self.clone();
        for (f, g) in out.density.iter_mut().zip(&other.density) {
            *f = lambda * *f + (1.0 - lambda) * g;
        }
        for (a, b) in out.atoms.iter_mut().zip(&other.atoms) {
            a.mass = lambda * a.mass + (1.0 - lambda) * b.mass;
        }
        Ok(out)
    }

    /// Pointwise average of measures sharing one layout, summed in slice order.
    pub fn average(measures: &[Self]) -> Result<Self> {
        let first = measures
            .first()
            .ok_or_else(|| Error::domain("cannot average an empty list of measures"))?;
        let mut out = first.clone();
        for m in &measures[1..] {
            if !first.same_layout(m) {
                return Err(Error::domain("cannot average measures with different layouts"));
            }
            for (f, g) in out.density.iter_mut().zip(&m.density) {
                *f += g;
            }
            for (a, b) in out.atoms.iter_mut().zip(&m.atoms) {
                a.mass += b.mass;
            }
        }
        out.renormalize();
        Ok(out)
    }

    /// Total-variation style L1 distance `Σ |mass_i − mass'_i|` on a shared layout.
    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        if !self.same_layout(other) {
            return Err(Error::domain("cannot compare measures with different layouts"));
        }
        Ok(self
            .support()
            .zip(other.support())
            .map(|((_, a), (_, b))| (a - b).abs())
            .sum())
    }

    /// Write the grid part as CSV with columns `theta,density,weight`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["theta", "density", "weight"])?;
        for ((t, f), h) in self.nodes.iter().zip(&self.density).zip(&self.weights) {
            w.write_record([fmt_f64(*t), fmt_f64(*f), fmt_f64(*h)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON sidecar holding the atoms.
    pub fn atoms_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&AtomsFile {
            atoms: self.atoms.clone(),
        })?)
    }

    /// Read a measure back from its CSV export and optional atoms sidecar.
    pub fn read_csv<R: Read>(input: R, atoms_json: Option<&str>) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Format(format!("mixing CSV is missing column `{name}`")))
        };
        let (ti, fi, wi) = (col("theta")?, col("density")?, col("weight")?);
        let (mut nodes, mut density, mut weights) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i).and_then(|s| s.trim().parse().ok()).ok_or_else(|| {
                    Error::Format(format!("mixing CSV row {}: bad number", line + 2))
                })
            };
            nodes.push(num(ti)?);
            density.push(num(fi)?);
            weights.push(num(wi)?);
        }
        let atoms = match atoms_json {
            Some(s) => serde_json::from_str::<AtomsFile>(s)?.atoms,
            None => Vec::new(),
        };
        Self::from_parts(nodes, weights, density, atoms)
    }

    /// Mass-one check used by tests and assertions.
    pub fn is_normalized(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= MASS_TOL
    }
}

#[derive(Serialize, Deserialize)]
struct AtomsFile {
    atoms: Vec<Atom>,
}

/// Shortest round-trip formatting for floats in CSV output.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

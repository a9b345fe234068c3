//! Batting-average prediction study.
//!
//! First-half hits are modelled as `Y_i ~ Bin(n_i, θ_i)`. Every method predicts
//! the second-half transformed average `X'_i` from first-half data and is scored
//! by total squared error with the binomial noise term removed, relative to the
//! naive predictor `X_i`.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{group_mean, james_stein, naive, parametric_eb_mm, NormalMeansData};
use crate::error::{Error, Result};
use crate::kernels::{KernelModel, Observation};
use crate::mixing::{fmt_f64, GridSpec, MixingMeasure, DEFAULT_NODE_COUNT};
use crate::pr::{derive_seed, fit, PrConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Half {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BattingRecord {
    pub player_id: String,
    pub is_pitcher: bool,
    pub half: Half,
    pub at_bats: u32,
    pub hits: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub records: Vec<BattingRecord>,
    pub rejected: Vec<RowError>,
}

const COLUMNS: [&str; 5] = ["player_id", "is_pitcher", "half", "at_bats", "hits"];

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "t" | "yes" | "y" => Some(true),
        "0" | "false" | "f" | "no" | "n" => Some(false),
        _ => None,
    }
}

fn parse_half(s: &str) -> Option<Half> {
    match s.trim().to_ascii_lowercase().as_str() {
        "first" | "1" => Some(Half::First),
        "second" | "2" => Some(Half::Second),
        _ => None,
    }
}

/// Read `player_id,is_pitcher,half,at_bats,hits`. Bad rows are reported, not fatal.
pub fn ingest<R: Read>(input: R) -> Result<Ingested> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("batting CSV is missing column `{name}`")))?;
    }
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut seen: HashMap<(String, Half), usize> = HashMap::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let reject = |message: String| RowError { line, message };
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                rejected.push(reject(e.to_string()));
                continue;
            }
        };
        let field = |k: usize| row.get(idx[k]).unwrap_or("");
        let player_id = field(0).to_string();
        if player_id.is_empty() {
            rejected.push(reject("empty player_id".into()));
            continue;
        }
        let Some(is_pitcher) = parse_flag(field(1)) else {
            rejected.push(reject(format!("bad is_pitcher `{}`", field(1))));
            continue;
        };
        let Some(half) = parse_half(field(2)) else {
            rejected.push(reject(format!("bad half `{}`", field(2))));
            continue;
        };
        let (Ok(at_bats), Ok(hits)) = (field(3).parse::<u32>(), field(4).parse::<u32>()) else {
            rejected.push(reject(format!("bad counts `{}`, `{}`", field(3), field(4))));
            continue;
        };
        if hits > at_bats {
            rejected.push(reject(format!("hits {hits} exceed at_bats {at_bats}")));
            continue;
        }
        if let Some(prev) = seen.insert((player_id.clone(), half), line) {
            rejected.push(reject(format!(
                "duplicate {half:?} half for {player_id} (first seen on line {prev})"
            )));
            continue;
        }
        records.push(BattingRecord {
            player_id,
            is_pitcher,
            half,
            at_bats,
            hits,
        });
    }
    Ok(Ingested { records, rejected })
}

pub fn write_records<W: Write>(records: &[BattingRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in records {
        let half = match r.half {
            Half::First => "first",
            Half::Second => "second",
        };
        w.write_record([
            r.player_id.as_str(),
            if r.is_pitcher { "1" } else { "0" },
            half,
            &r.at_bats.to_string(),
            &r.hits.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Variance-stabilising transform `X = arcsin √((Y + 1/4)/(n + 1/2))`, variance `1/(4n)`.
pub fn transform(hits: u32, at_bats: u32) -> Result<(f64, f64)> {
    if at_bats == 0 {
        return Err(Error::domain("transform needs at least one at-bat"));
    }
    if hits > at_bats {
        return Err(Error::domain(format!("hits {hits} exceed at_bats {at_bats}")));
    }
    let n = f64::from(at_bats);
    let p = (f64::from(hits) + 0.25) / (n + 0.5);
    Ok((p.sqrt().asin(), 1.0 / (4.0 * n)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub min_train_at_bats: u32,
    pub min_test_at_bats: u32,
    pub gamma_pitchers: f64,
    pub gamma_nonpitchers: f64,
    pub f0_pitchers: [f64; 2],
    pub f0_nonpitchers: [f64; 2],
    pub n_permutations: usize,
    pub seed: u64,
    pub grid_nodes: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            min_train_at_bats: 11,
            min_test_at_bats: 11,
            gamma_pitchers: 0.5,
            gamma_nonpitchers: 0.9,
            f0_pitchers: [30.0, 120.0],
            f0_nonpitchers: [30.0, 90.0],
            n_permutations: 100,
            seed: 2005,
            grid_nodes: DEFAULT_NODE_COUNT,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, g) in [
            ("gamma_pitchers", self.gamma_pitchers),
            ("gamma_nonpitchers", self.gamma_nonpitchers),
        ] {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::config(format!("{name} = {g} outside (0, 1]")));
            }
        }
        if self.n_permutations < 1 {
            return Err(Error::config("n_permutations must be at least 1"));
        }
        if self.grid_nodes < 2 {
            return Err(Error::config("grid_nodes must be at least 2"));
        }
        for [a, b] in [self.f0_pitchers, self.f0_nonpitchers] {
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::config(format!("Beta({a}, {b}) initial guess needs a, b > 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Pitchers,
    NonPitchers,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::Pitchers, Group::NonPitchers];

    pub fn key(self) -> &'static str {
        match self {
            Group::Pitchers => "pitchers",
            Group::NonPitchers => "non_pitchers",
        }
    }

    fn index(self) -> u64 {
        match self {
            Group::Pitchers => 0,
            Group::NonPitchers => 1,
        }
    }

    fn gamma(self, c: &StudyConfig) -> f64 {
        match self {
            Group::Pitchers => c.gamma_pitchers,
            Group::NonPitchers => c.gamma_nonpitchers,
        }
    }

    fn f0(self, c: &StudyConfig) -> [f64; 2] {
        match self {
            Group::Pitchers => c.f0_pitchers,
            Group::NonPitchers => c.f0_nonpitchers,
        }
    }
}

/// One player's two halves.
#[derive(Debug, Clone, PartialEq)]
struct Player {
    id: String,
    first: Option<(u32, u32)>,
    second: Option<(u32, u32)>,
}

/// Training players (sorted by id) and the subset eligible for scoring.
struct GroupData {
    train: Vec<Player>,
    test: Vec<usize>,
}

fn group_players(records: &[BattingRecord], group: Group, cfg: &StudyConfig) -> GroupData {
    let mut players: BTreeMap<&str, Player> = BTreeMap::new();
    for r in records
        .iter()
        .filter(|r| r.is_pitcher == (group == Group::Pitchers))
    {
        let p = players.entry(&r.player_id).or_insert_with(|| Player {
            id: r.player_id.clone(),
            first: None,
            second: None,
        });
        let slot = match r.half {
            Half::First => &mut p.first,
            Half::Second => &mut p.second,
        };
        *slot = Some((r.at_bats, r.hits));
    }
    let train: Vec<Player> = players
        .into_values()
        .filter(|p| p.first.is_some_and(|(ab, _)| ab >= cfg.min_train_at_bats.max(1)))
        .collect();
    let test = train
        .iter()
        .enumerate()
        .filter(|(_, p)| p.second.is_some_and(|(ab, _)| ab >= cfg.min_test_at_bats.max(1)))
        .map(|(i, _)| i)
        .collect();
    GroupData { train, test }
}

/// `Σ_test [(X'_i − δ_i)² − 1/(4 n'_i)]`.
pub fn total_squared_error(targets: &[(f64, f64)], predictions: &[f64]) -> f64 {
    targets
        .iter()
        .zip(predictions)
        .map(|((x, v), d)| (x - d).powi(2) - v)
        .sum()
}

/// Published relative errors, including methods not implemented here, for side-by-side reports.
pub fn published_errors() -> BTreeMap<String, BTreeMap<String, f64>> {
    let rows: [(&str, f64, f64); 9] = [
        ("naive", 1.0, 1.0),
        ("group_mean", 0.127, 0.378),
        ("parametric_eb_mm", 0.129, 0.387),
        ("parametric_eb_ml", 0.117, 0.398),
        ("nonparametric_eb", 0.212, 0.372),
        ("james_stein", 0.164, 0.359),
        ("hierarchical_bayes", 0.128, 0.391),
        ("mixfdr", 0.156, 0.314),
        ("pr", 0.096, 0.353),
    ];
    rows.iter()
        .map(|&(m, p, np)| {
            (
                m.to_string(),
                BTreeMap::from([("pitchers".to_string(), p), ("non_pitchers".to_string(), np)]),
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub training_players: usize,
    pub test_players: usize,
    pub gamma: f64,
    pub prior_mean: f64,
    pub initial_guess: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    /// method → group → relative prediction error.
    pub relative_error: BTreeMap<String, BTreeMap<String, f64>>,
    /// method → group → raw total squared error.
    pub total_squared_error: BTreeMap<String, BTreeMap<String, f64>>,
    pub groups: BTreeMap<String, GroupSummary>,
    pub published: BTreeMap<String, BTreeMap<String, f64>>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub priors: BTreeMap<String, (MixingMeasure, MixingMeasure)>,
}

impl StudyReport {
    pub fn error(&self, method: &str, group: Group) -> Option<f64> {
        self.relative_error.get(method)?.get(group.key()).copied()
    }

    /// Fitted PR prior for a group.
    pub fn pr_prior(&self, group: Group) -> Option<&MixingMeasure> {
        self.priors.get(group.key()).map(|(fit, _)| fit)
    }

    pub fn initial_prior(&self, group: Group) -> Option<&MixingMeasure> {
        self.priors.get(group.key()).map(|(_, f0)| f0)
    }
}

/// `theta,density` export of a prior for plotting.
pub fn write_density_csv<W: Write>(f: &MixingMeasure, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theta", "density"])?;
    for (t, d) in f.nodes().iter().zip(f.density()) {
        w.write_record([fmt_f64(*t), fmt_f64(*d)])?;
    }
    w.flush()?;
    Ok(())
}

/// Number of local maxima of a grid density, ignoring bumps below `rel_height` of the peak.
pub fn count_modes(density: &[f64], rel_height: f64) -> usize {
    let peak = density.iter().copied().fold(0.0, f64::max);
    let floor = rel_height * peak;
    let mut modes = 0;
    let mut rising = true;
    let mut last = f64::NEG_INFINITY;
    for &d in density {
        if d < last && rising {
            if last >= floor {
                modes += 1;
            }
            rising = false;
        } else if d > last {
            rising = true;
        }
        last = d;
    }
    if rising && last >= floor && last > 0.0 {
        modes += 1;
    }
    modes
}

struct GroupFit {
    estimate: MixingMeasure,
    initial: MixingMeasure,
    predictions: Vec<f64>,
}

fn fit_pr_group(data: &GroupData, group: Group, gamma: f64, cfg: &StudyConfig) -> Result<GroupFit> {
    let model = KernelModel::binomial_default();
    let grid = GridSpec::midpoint(cfg.grid_nodes, model.theta_support().0, model.theta_support().1)?;
    let [a, b] = group.f0(cfg);
    let f0 = MixingMeasure::init_beta(&grid, a, b)?;
    let obs: Vec<Observation> = data
        .train
        .iter()
        .map(|p| {
            let (ab, h) = p.first.expect("training players have a first half");
            Observation::binomial(h, ab)
        })
        .collect();
    let pr = PrConfig {
        gamma,
        n_permutations: cfg.n_permutations,
        seed: derive_seed(cfg.seed, group.index()),
        weight_override: None,
        shuffle: true,
        keep_permutations: false,
        relaxed_gamma: true,
    };
    let fitted = fit(&obs, &model, &f0, &pr)?;
    let predictions = data
        .test
        .iter()
        .map(|&i| {
            let post = fitted.estimate.posterior(&model, &obs[i])?;
            Ok(post.expectation(|t| t.sqrt().asin()))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(GroupFit {
        estimate: fitted.estimate,
        initial: f0,
        predictions,
    })
}

fn targets(data: &GroupData) -> Result<Vec<(f64, f64)>> {
    data.test
        .iter()
        .map(|&i| {
            let (ab, h) = data.train[i].second.expect("test players have a second half");
            transform(h, ab)
        })
        .collect()
}

fn training_normal_means(data: &GroupData) -> Result<NormalMeansData> {
    let (xs, vs): (Vec<f64>, Vec<f64>) = data
        .train
        .iter()
        .map(|p| {
            let (ab, h) = p.first.expect("training players have a first half");
            transform(h, ab)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    NormalMeansData::new(xs, vs)
}

/// Run every method on both groups and score them on the second half.
pub fn run_study(records: &[BattingRecord], cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let mut report = StudyReport {
        relative_error: BTreeMap::new(),
        total_squared_error: BTreeMap::new(),
        groups: BTreeMap::new(),
        published: published_errors(),
        warnings: Vec::new(),
        priors: BTreeMap::new(),
    };
    for group in Group::ALL {
        let data = group_players(records, group, cfg);
        if data.train.is_empty() || data.test.is_empty() {
            report.warnings.push(format!(
                "{}: {} training / {} test players, group skipped",
                group.key(),
                data.train.len(),
                data.test.len()
            ));
            continue;
        }
        let dropped = data.train.len() - data.test.len();
        if dropped > 0 {
            report.warnings.push(format!(
                "{}: {dropped} training players lack enough second-half at-bats and are not scored",
                group.key()
            ));
        }
        let target = targets(&data)?;
        let normal = training_normal_means(&data)?;
        let on_test = |est: Vec<f64>| -> Vec<f64> { data.test.iter().map(|&i| est[i]).collect() };

        let mut methods: Vec<(&str, Vec<f64>)> = vec![
            ("naive", on_test(naive(&normal))),
            ("group_mean", on_test(group_mean(&normal)?)),
        ];
        match james_stein(&normal) {
            Ok(e) => methods.push(("james_stein", on_test(e))),
            Err(e) => report.warnings.push(format!("{}: james_stein skipped: {e}", group.key())),
        }
        match parametric_eb_mm(&normal) {
            Ok(e) => methods.push(("parametric_eb_mm", on_test(e))),
            Err(e) => report
                .warnings
                .push(format!("{}: parametric_eb_mm skipped: {e}", group.key())),
        }
        let gamma = group.gamma(cfg);
        let pr = fit_pr_group(&data, group, gamma, cfg)?;
        methods.push(("pr", pr.predictions.clone()));

        let naive_tse = total_squared_error(&target, &methods[0].1);
        for (name, pred) in &methods {
            let tse = total_squared_error(&target, pred);
            let rel = if *name == "naive" { 1.0 } else { tse / naive_tse };
            report
                .relative_error
                .entry(name.to_string())
                .or_default()
                .insert(group.key().to_string(), rel);
            report
                .total_squared_error
                .entry(name.to_string())
                .or_default()
                .insert(group.key().to_string(), tse);
        }
        report.groups.insert(
            group.key().to_string(),
            GroupSummary {
                training_players: data.train.len(),
                test_players: data.test.len(),
                gamma,
                prior_mean: pr.estimate.moment(1),
                initial_guess: group.f0(cfg),
            },
        );
        report
            .priors
            .insert(group.key().to_string(), (pr.estimate, pr.initial));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaCurve {
    pub gammas: Vec<f64>,
    pub relative_error: Vec<f64>,
    pub best_gamma: f64,
    pub best_error: f64,
}

/// PR relative error for each γ on the grid, per group; ties go to the larger γ.
pub fn tune_gamma(
    records: &[BattingRecord],
    gammas: &[f64],
    cfg: &StudyConfig,
) -> Result<BTreeMap<String, GammaCurve>> {
    cfg.validate()?;
    if gammas.is_empty() {
        return Err(Error::config("gamma grid is empty"));
    }
    if let Some(g) = gammas.iter().find(|g| !(**g > 0.0 && **g <= 1.0)) {
        return Err(Error::config(format!("gamma grid value {g} outside (0, 1]")));
    }
    let mut out = BTreeMap::new();
    for group in Group::ALL {
        let data = group_players(records, group, cfg);
        if data.train.is_empty() || data.test.is_empty() {
            continue;
        }
        let target = targets(&data)?;
        let normal = training_normal_means(&data)?;
        let naive_pred: Vec<f64> = data.test.iter().map(|&i| normal.values()[i]).collect();
        let naive_tse = total_squared_error(&target, &naive_pred);
        let errors = gammas
            .iter()
            .map(|&g| {
                let f = fit_pr_group(&data, group, g, cfg)?;
                Ok(total_squared_error(&target, &f.predictions) / naive_tse)
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut best = 0;
        for i in 1..gammas.len() {
            let better = errors[i] < errors[best]
                || (errors[i] == errors[best] && gammas[i] > gammas[best]);
            if better {
                best = i;
            }
        }
        out.insert(
            group.key().to_string(),
            GammaCurve {
                gammas: gammas.to_vec(),
                relative_error: errors.clone(),
                best_gamma: gammas[best],
                best_error: errors[best],
            },
        );
    }
    Ok(out)
}

/// Synthetic season: Beta-distributed abilities, binomial hits in each half.
///
/// Pitchers draw abilities from Beta(18, 100) and few at-bats; position players from
/// Beta(70, 200) with many more at-bats.
pub fn synthetic_season(n_pitchers: usize, n_nonpitchers: usize, seed: u64) -> Vec<BattingRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * (n_pitchers + n_nonpitchers));
    let groups = [
        (true, n_pitchers, (18.0, 100.0), (4u32, 70u32)),
        (false, n_nonpitchers, (70.0, 200.0), (8, 330)),
    ];
    for (is_pitcher, count, (a, b), (lo, hi)) in groups {
        let ability = rand_distr::Beta::new(a, b).expect("positive shape parameters");
        for i in 0..count {
            let theta: f64 = ability.sample(&mut rng);
            let id = format!("{}{:04}", if is_pitcher { "p" } else { "h" }, i);
            for half in [Half::First, Half::Second] {
                let at_bats = rng.gen_range(lo..=hi);
                let hits = rand_distr::Binomial::new(u64::from(at_bats), theta)
                    .expect("valid binomial")
                    .sample(&mut rng) as u32;
                out.push(BattingRecord {
                    player_id: id.clone(),
                    is_pitcher,
                    half,
                    at_bats,
                    hits,
                });
            }
        }
    }
    out
}

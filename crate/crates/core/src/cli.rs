//! Subcommands behind the `predrec` binary.
//!
//! Every subcommand computes all of its outputs in memory, then writes them
//! into `--out` through temporary files and renames. A failure part-way removes
//! whatever was already written. Each output directory receives one
//! `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseball::{
    ingest, run_study, synthetic_season, tune_gamma, write_density_csv, write_records, Group,
    RowError, StudyConfig, StudyReport,
};
use crate::decision::{decide_batch, write_decisions_csv, DecisionProblem};
use crate::error::Error;
use crate::kernels::{Family, KernelModel, ObsParams, Observation, BINOMIAL_EPS};
use crate::mixing::{fmt_f64, GridRule, GridSpec, MixingMeasure, PriorSpec, DEFAULT_NODE_COUNT};
use crate::pr::{fit, PrConfig};
use crate::risk::{optimality_trace, SimScenario};

#[derive(Debug, Parser)]
#[command(name = "predrec", version, about = "Predictive recursion for nonparametric empirical Bayes")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// TOML (fit, decide, baseball, tune) or JSON (simulate) config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "predrec-out")]
    pub out: PathBuf,
    /// Worker threads for permutations and replications.
    #[arg(long, global = true, env = "PREDREC_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a mixing distribution with predictive recursion.
    Fit(FitArgs),
    /// Apply the plug-in decision rule of a fitted prior to observations.
    Decide(DecideArgs),
    /// Run a simulation scenario and trace excess risk and KL by sample size.
    Simulate(SimulateArgs),
    /// Run the batting-average prediction study.
    Baseball(BaseballArgs),
    /// Tune the PR weight exponent per group on the batting data.
    Tune(TuneArgs),
    /// Write a synthetic batting dataset in the study's input schema.
    SynthBaseball(SynthArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Observations CSV: `y` plus optional `id`, `variance`, `trials` columns.
    pub data: PathBuf,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub permutations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DecideArgs {
    /// Observations CSV, same schema as `fit`.
    pub data: PathBuf,
    /// Output directory of a previous `fit` run.
    #[arg(long)]
    pub fit: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON; `--config` is accepted as well.
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct StudyOverrides {
    #[arg(long)]
    pub min_train_at_bats: Option<u32>,
    #[arg(long)]
    pub min_test_at_bats: Option<u32>,
    #[arg(long)]
    pub gamma_pitchers: Option<f64>,
    #[arg(long)]
    pub gamma_nonpitchers: Option<f64>,
    /// Beta initial guess for pitchers as `A,B`.
    #[arg(long, value_parser = parse_pair)]
    pub f0_pitchers: Option<[f64; 2]>,
    /// Beta initial guess for non-pitchers as `A,B`.
    #[arg(long, value_parser = parse_pair)]
    pub f0_nonpitchers: Option<[f64; 2]>,
    #[arg(long)]
    pub permutations: Option<usize>,
    #[arg(long)]
    pub grid_nodes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BaseballArgs {
    /// Batting CSV `player_id,is_pitcher,half,at_bats,hits`.
    pub data: PathBuf,
    #[command(flatten)]
    pub overrides: StudyOverrides,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    pub data: PathBuf,
    /// Comma-separated γ grid; defaults to 0.05, 0.10, …, 1.00.
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    #[command(flatten)]
    pub overrides: StudyOverrides,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 81)]
    pub pitchers: usize,
    #[arg(long, default_value_t = 486)]
    pub non_pitchers: usize,
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts.as_slice() {
        [a, b] => Ok([
            a.trim().parse().map_err(|e| format!("{e}"))?,
            b.trim().parse().map_err(|e| format!("{e}"))?,
        ]),
        _ => Err(format!("expected `A,B`, got `{s}`")),
    }
}

/// Default per-observation kernel parameters when the CSV has no such column.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationDefaults {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: Family,
    #[serde(default)]
    pub params: KernelConfigParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfigParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_support: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[f64; 2]>,
    #[serde(default)]
    pub rule: GridRule,
}

fn default_prior() -> PriorSpec {
    PriorSpec::Uniform
}

/// `fit` configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub kernel: KernelConfig,
    #[serde(default)]
    pub observations: ObservationDefaults,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_prior")]
    pub initial_guess: PriorSpec,
    pub pr: PrConfig,
}

/// `decide` configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecideConfig {
    /// Kernel family the problem is posed for; must match the fit when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    #[serde(default)]
    pub observations: ObservationDefaults,
    pub problem: DecisionProblem,
}

/// Record written as `manifest.json` in every output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Input path → SHA-256 hex digest.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
}

pub const MANIFEST: &str = "manifest.json";

struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new() -> Self {
        Outputs { files: Vec::new() }
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.add(name, s.into_bytes());
        Ok(())
    }
}

fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn read_input(path: &Path, inputs: &mut BTreeMap<String, String>) -> anyhow::Result<Vec<u8>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    inputs.insert(path.display().to_string(), digest(&bytes));
    Ok(bytes)
}

fn parse_toml<T: DeserializeOwned>(path: &Path, text: &str) -> anyhow::Result<T> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        Error::Config(format!("{}: field `{}`: {}", path.display(), e.path(), e.inner().message()))
            .into()
    })
}

fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> anyhow::Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        Error::Config(format!("{}: field `{}`: {}", path.display(), e.path(), e.inner())).into()
    })
}

/// Write `outputs` plus the manifest into `dir`, all or nothing.
fn commit(dir: &Path, outputs: Outputs, mut manifest: RunManifest, started: Instant) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    manifest.outputs = outputs.files.iter().map(|(n, _)| n.clone()).collect();
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    let mut files = outputs.files;
    let mut m = serde_json::to_string_pretty(&manifest)?;
    m.push('\n');
    files.push((MANIFEST.to_string(), m.into_bytes()));

    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| -> anyhow::Result<()> {
        for (name, bytes) in &files {
            let final_path = dir.join(name);
            let tmp = dir.join(format!(".{name}.tmp"));
            written.push(tmp.clone());
            fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
            fs::rename(&tmp, &final_path)?;
            written.push(final_path);
        }
        Ok(())
    })();
    if result.is_err() {
        for p in &written {
            let _ = fs::remove_file(p);
        }
    }
    result
}

fn manifest(subcommand: &str, seed: u64, config: serde_json::Value, inputs: BTreeMap<String, String>) -> RunManifest {
    RunManifest {
        tool: "predrec".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: subcommand.into(),
        seed,
        config,
        inputs,
        outputs: Vec::new(),
        wall_clock_seconds: 0.0,
    }
}

/// Parse an observations CSV (`y` plus optional `id`, `variance`, `trials`).
pub fn read_observations(
    bytes: &[u8],
    family: Family,
    defaults: &ObservationDefaults,
) -> anyhow::Result<Vec<(String, Observation)>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let headers = r.headers()?.clone();
    let col = |n: &str| headers.iter().position(|h| h == n);
    let yi = col("y").ok_or_else(|| Error::Format("observations CSV needs a `y` column".into()))?;
    let (idi, vi, ti) = (col("id"), col("variance"), col("trials"));
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let num = |i: usize| -> anyhow::Result<f64> {
            let s = rec.get(i).unwrap_or("");
            s.parse::<f64>()
                .map_err(|_| Error::Format(format!("line {line}: `{s}` is not a number")).into())
        };
        let y = num(yi)?;
        let id = idi
            .and_then(|i| rec.get(i))
            .map(str::to_string)
            .unwrap_or_else(|| (k + 1).to_string());
        let params = match family {
            Family::NormalLocation => ObsParams::Normal {
                variance: match vi {
                    Some(i) => num(i)?,
                    None => defaults.variance.ok_or_else(|| {
                        Error::Config("normal observations need a `variance` column or observations.variance".into())
                    })?,
                },
            },
            Family::Binomial => ObsParams::Binomial {
                trials: match ti {
                    Some(i) => {
                        let t = num(i)?;
                        if !(t >= 0.0 && t.fract() == 0.0 && t <= f64::from(u32::MAX)) {
                            bail!(Error::Format(format!("line {line}: trials `{t}` is not a count")));
                        }
                        t as u32
                    }
                    None => defaults.trials.ok_or_else(|| {
                        Error::Config("binomial observations need a `trials` column or observations.trials".into())
                    })?,
                },
            },
            Family::Poisson => ObsParams::Poisson,
        };
        out.push((id, Observation { y, params }));
    }
    if out.is_empty() {
        bail!(Error::Format("observations CSV has no rows".into()));
    }
    Ok(out)
}

fn resolve_kernel(cfg: &KernelConfig, data: &[(String, Observation)]) -> anyhow::Result<KernelModel> {
    let support = match (cfg.params.theta_support, cfg.family) {
        (Some([lo, hi]), f) => (f, lo, hi),
        (None, Family::Binomial) => (Family::Binomial, BINOMIAL_EPS, 1.0 - BINOMIAL_EPS),
        (None, Family::NormalLocation) => {
            let xs: Vec<f64> = data.iter().map(|(_, o)| o.y).collect();
            let vs: Vec<f64> = data
                .iter()
                .map(|(_, o)| match o.params {
                    ObsParams::Normal { variance } => variance,
                    _ => 0.0,
                })
                .collect();
            let g = GridSpec::for_normal_data(2, &xs, &vs)?;
            (Family::NormalLocation, g.bounds[0], g.bounds[1])
        }
        (None, Family::Poisson) => {
            let max = data.iter().map(|(_, o)| o.y).fold(0.0, f64::max);
            (Family::Poisson, 0.0, max + 5.0 * max.sqrt() + 5.0)
        }
    };
    Ok(KernelModel::new(support.0, support.1, support.2)?)
}

fn cmd_fit(common: &CommonArgs, args: &FitArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let mut inputs = BTreeMap::new();
    let cfg_path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("fit needs --config".into()))?;
    let cfg_text = String::from_utf8(read_input(cfg_path, &mut inputs)?)?;
    let mut cfg: FitConfig = parse_toml(cfg_path, &cfg_text)?;
    if let Some(g) = args.gamma {
        cfg.pr.gamma = g;
    }
    if let Some(p) = args.permutations {
        cfg.pr.n_permutations = p;
    }
    if let Some(s) = common.seed {
        cfg.pr.seed = s;
    }
    cfg.pr.validate()?;

    let bytes = read_input(&args.data, &mut inputs)?;
    let rows = read_observations(&bytes, cfg.kernel.family, &cfg.observations)?;
    let model = resolve_kernel(&cfg.kernel, &rows)?;
    let (lo, hi) = model.theta_support();
    let [glo, ghi] = cfg.grid.bounds.unwrap_or([lo, hi]);
    let grid = GridSpec::new(cfg.grid.node_count.unwrap_or(DEFAULT_NODE_COUNT), glo, ghi, cfg.grid.rule)?;
    let f0 = cfg.initial_guess.build(&grid)?;
    let data: Vec<Observation> = rows.iter().map(|(_, o)| *o).collect();
    let fitted = fit(&data, &model, &f0, &cfg.pr)?;

    let mut out = Outputs::new();
    let mut buf = Vec::new();
    fitted.estimate.write_csv(&mut buf)?;
    out.add("mixing.csv", buf);
    out.add("atoms.json", format!("{}\n", fitted.estimate.atoms_json()?).into_bytes());
    out.add_json("kernel.json", &model)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "y", "predictive_density"])?;
    for (id, obs) in &rows {
        let p = fitted.predictive(&model, obs)?;
        w.write_record([id.as_str(), &fmt_f64(obs.y), &fmt_f64(p)])?;
    }
    out.add("predictive.csv", w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?);

    let mut snapshot = serde_json::to_value(&cfg)?;
    snapshot["resolved_kernel"] = serde_json::to_value(model)?;
    snapshot["resolved_grid"] = serde_json::to_value(grid)?;
    commit(&common.out, out, manifest("fit", cfg.pr.seed, snapshot, inputs), started)
}

fn cmd_decide(common: &CommonArgs, args: &DecideArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let mut inputs = BTreeMap::new();
    let cfg_path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("decide needs --config with a [problem] table".into()))?;
    let cfg_text = String::from_utf8(read_input(cfg_path, &mut inputs)?)?;
    let cfg: DecideConfig = parse_toml(cfg_path, &cfg_text)?;
    cfg.problem.validate()?;

    let kernel_path = args.fit.join("kernel.json");
    let model: KernelModel = parse_json(
        &kernel_path,
        &String::from_utf8(read_input(&kernel_path, &mut inputs)?)?,
    )?;
    if let Some(f) = cfg.family {
        if f != model.family() {
            bail!(Error::Config(format!(
                "problem is posed for the {f} kernel but the fit used {}",
                model.family()
            )));
        }
    }
    let mixing = read_input(&args.fit.join("mixing.csv"), &mut inputs)?;
    let atoms_path = args.fit.join("atoms.json");
    let atoms = if atoms_path.exists() {
        Some(String::from_utf8(read_input(&atoms_path, &mut inputs)?)?)
    } else {
        None
    };
    let prior = MixingMeasure::read_csv(mixing.as_slice(), atoms.as_deref())?;

    let bytes = read_input(&args.data, &mut inputs)?;
    let rows = read_observations(&bytes, model.family(), &cfg.observations)?;
    let decisions = decide_batch(&prior, &model, &cfg.problem, &rows)?;
    if decisions.len() != rows.len() {
        bail!("decision count {} differs from input rows {}", decisions.len(), rows.len());
    }
    let mut buf = Vec::new();
    write_decisions_csv(&cfg.problem, &decisions, &mut buf)?;
    let mut out = Outputs::new();
    out.add("decisions.csv", buf);
    let snapshot = serde_json::to_value(&cfg)?;
    commit(&common.out, out, manifest("decide", 0, snapshot, inputs), started)
}

fn cmd_simulate(common: &CommonArgs, args: &SimulateArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let mut inputs = BTreeMap::new();
    let path = args
        .scenario
        .as_ref()
        .or(common.config.as_ref())
        .ok_or_else(|| Error::Config("simulate needs a scenario JSON".into()))?;
    let text = String::from_utf8(read_input(path, &mut inputs)?)?;
    let mut scenario: SimScenario = parse_json(path, &text)?;
    if let Some(s) = common.seed {
        scenario.pr.seed = s;
    }
    let trace = optimality_trace(&scenario)?;

    let mut out = Outputs::new();
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    out.add("trace.csv", buf);
    #[derive(Serialize)]
    struct Summary<'a> {
        scenario: &'a str,
        bayes_risk: f64,
        medians: &'a [crate::risk::SizeSummary],
        assumptions: &'a crate::risk::AssumptionReport,
    }
    out.add_json(
        "summary.json",
        &Summary {
            scenario: &trace.scenario,
            bayes_risk: trace.bayes_risk,
            medians: &trace.summary,
            assumptions: &trace.assumptions,
        },
    )?;
    let snapshot = serde_json::to_value(&scenario)?;
    commit(&common.out, out, manifest("simulate", scenario.pr.seed, snapshot, inputs), started)
}

fn study_config(common: &CommonArgs, o: &StudyOverrides, inputs: &mut BTreeMap<String, String>) -> anyhow::Result<StudyConfig> {
    let mut cfg = match &common.config {
        Some(p) => parse_toml(p, &String::from_utf8(read_input(p, inputs)?)?)?,
        None => StudyConfig::default(),
    };
    if let Some(v) = o.min_train_at_bats {
        cfg.min_train_at_bats = v;
    }
    if let Some(v) = o.min_test_at_bats {
        cfg.min_test_at_bats = v;
    }
    if let Some(v) = o.gamma_pitchers {
        cfg.gamma_pitchers = v;
    }
    if let Some(v) = o.gamma_nonpitchers {
        cfg.gamma_nonpitchers = v;
    }
    if let Some(v) = o.f0_pitchers {
        cfg.f0_pitchers = v;
    }
    if let Some(v) = o.f0_nonpitchers {
        cfg.f0_nonpitchers = v;
    }
    if let Some(v) = o.permutations {
        cfg.n_permutations = v;
    }
    if let Some(v) = o.grid_nodes {
        cfg.grid_nodes = v;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct StudyOutput<'a> {
    #[serde(flatten)]
    report: &'a StudyReport,
    rejected_rows: &'a [RowError],
}

fn cmd_baseball(common: &CommonArgs, args: &BaseballArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let mut inputs = BTreeMap::new();
    let cfg = study_config(common, &args.overrides, &mut inputs)?;
    let bytes = read_input(&args.data, &mut inputs)?;
    let ingested = ingest(bytes.as_slice())?;
    let report = run_study(&ingested.records, &cfg)?;

    let mut out = Outputs::new();
    out.add_json(
        "report.json",
        &StudyOutput {
            report: &report,
            rejected_rows: &ingested.rejected,
        },
    )?;
    for g in Group::ALL {
        if let (Some(fit), Some(f0)) = (report.pr_prior(g), report.initial_prior(g)) {
            let mut buf = Vec::new();
            write_density_csv(fit, &mut buf)?;
            out.add(&format!("prior_pr_{}.csv", g.key()), buf);
            let mut buf = Vec::new();
            write_density_csv(f0, &mut buf)?;
            out.add(&format!("prior_initial_{}.csv", g.key()), buf);
        }
    }
    let snapshot = serde_json::to_value(&cfg)?;
    commit(&common.out, out, manifest("baseball", cfg.seed, snapshot, inputs), started)
}

fn cmd_tune(common: &CommonArgs, args: &TuneArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let mut inputs = BTreeMap::new();
    let cfg = study_config(common, &args.overrides, &mut inputs)?;
    let gammas = args
        .gammas
        .clone()
        .unwrap_or_else(|| (1..=20).map(|i| f64::from(i) * 0.05).collect());
    let bytes = read_input(&args.data, &mut inputs)?;
    let ingested = ingest(bytes.as_slice())?;
    let curves = tune_gamma(&ingested.records, &gammas, &cfg)?;
    let mut out = Outputs::new();
    out.add_json("tune.json", &curves)?;
    let mut snapshot = serde_json::to_value(&cfg)?;
    snapshot["gammas"] = serde_json::to_value(&gammas)?;
    commit(&common.out, out, manifest("tune", cfg.seed, snapshot, inputs), started)
}

fn cmd_synth(common: &CommonArgs, args: &SynthArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let seed = common.seed.unwrap_or(2005);
    let recs = synthetic_season(args.pitchers, args.non_pitchers, seed);
    let mut buf = Vec::new();
    write_records(&recs, &mut buf)?;
    let mut out = Outputs::new();
    out.add("batting.csv", buf);
    let snapshot = serde_json::json!({"pitchers": args.pitchers, "non_pitchers": args.non_pitchers});
    commit(&common.out, out, manifest("synth-baseball", seed, snapshot, BTreeMap::new()), started)
}

fn configure_threads(n: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = n {
        if n == 0 {
            bail!(Error::Config("--threads must be at least 1".into()));
        }
        // A second call in the same process (tests) keeps the existing pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    configure_threads(cli.common.threads)?;
    match &cli.command {
        Command::Fit(a) => cmd_fit(&cli.common, a),
        Command::Decide(a) => cmd_decide(&cli.common, a),
        Command::Simulate(a) => cmd_simulate(&cli.common, a),
        Command::Baseball(a) => cmd_baseball(&cli.common, a),
        Command::Tune(a) => cmd_tune(&cli.common, a),
        Command::SynthBaseball(a) => cmd_synth(&cli.common, a),
    }
}

/// Parse `args` (including the program name) and run.
pub fn run_args<I, T>(args: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    run(&cli)
}

/// Machine-readable diagnostic for a failed run: `{"error": {"kind", "message"}}`.
pub fn diagnostic(err: &anyhow::Error) -> (serde_json::Value, u8) {
    let (kind, code) = match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => ("config", 2),
        Some(Error::Format(_)) | Some(Error::Csv(_)) | Some(Error::Json(_)) => ("format", 2),
        Some(Error::Domain(_)) => ("domain", 1),
        Some(Error::DegenerateObservation { .. }) => ("degenerate_observation", 1),
        Some(Error::IllPosedTest) => ("ill_posed_test", 1),
        Some(Error::Io(_)) => ("io", 1),
        None => ("error", 1),
    };
    (
        serde_json::json!({"error": {"kind": kind, "message": format!("{err:#}")}}),
        code,
    )
}

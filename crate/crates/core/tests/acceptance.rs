//! Acceptance gate. Prints one PASS/FAIL/SKIP line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Set `PREDREC_BASEBALL_DATA` to a batting CSV to enable the real-data checks.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use predrec::baseball::{count_modes, ingest, run_study, synthetic_season, write_density_csv, Group, StudyConfig};
use predrec::decision::posterior_mean_rule;
use predrec::kernels::{Family, KernelModel, Observation};
use predrec::mixing::{Atom, GridSpec, MixingMeasure};
use predrec::pr::pr_step;
use predrec::risk::{optimality_trace, SimScenario, Trace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn ln_beta_pdf(t: f64, a: f64, b: f64) -> f64 {
    (a - 1.0) * t.ln() + (b - 1.0) * (1.0 - t).ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
}

fn ln_binom_pmf(y: u32, m: u32, t: f64) -> f64 {
    let (y, m) = (f64::from(y), f64::from(m));
    ln_gamma(m + 1.0) - ln_gamma(y + 1.0) - ln_gamma(m - y + 1.0) + y * t.ln() + (m - y) * (1.0 - t).ln()
}

fn scenario(name: &str) -> SimScenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name);
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn mass_conservation() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for trial in 0..10_000 {
        let nodes = rng.gen_range(2..200);
        let (model, obs, spec) = match trial % 3 {
            0 => {
                let m = rng.gen_range(1..200);
                let y = rng.gen_range(0..=m);
                let spec = GridSpec::midpoint(nodes, 1e-4, 1.0 - 1e-4).unwrap();
                (KernelModel::binomial_default(), Observation::binomial(y, m), spec)
            }
            1 => {
                let lo = rng.gen_range(-10.0..0.0);
                let hi = lo + rng.gen_range(0.5..20.0);
                let model = KernelModel::new(Family::NormalLocation, lo, hi).unwrap();
                let y = rng.gen_range(lo - 3.0..hi + 3.0);
                let obs = Observation::normal(y, rng.gen_range(0.05..4.0));
                (model, obs, GridSpec::midpoint(nodes, lo, hi).unwrap())
            }
            _ => {
                let hi = rng.gen_range(1.0..40.0);
                let model = KernelModel::new(Family::Poisson, 0.0, hi).unwrap();
                let obs = Observation::poisson(rng.gen_range(0..(hi as u32 + 5)));
                (model, obs, GridSpec::midpoint(nodes, 0.0, hi).unwrap())
            }
        };
        let dens: Vec<f64> = (0..nodes).map(|_| rng.gen_range(0.0..1.0)).collect();
        let (lo, hi) = model.theta_support();
        let f = MixingMeasure::from_grid_fn(&spec, |t| {
            let k = (((t - lo) / (hi - lo)) * nodes as f64) as usize;
            dens[k.min(nodes - 1)] + 1e-3
        })
        .unwrap();
        let f = if trial % 2 == 0 {
            let atoms = vec![Atom {
                location: rng.gen_range(lo..hi),
                mass: 1.0,
            }];
            f.with_atoms(&atoms, rng.gen_range(0.0..0.9)).unwrap()
        } else {
            f
        };
        let w = rng.gen_range(0.0..=1.0);
        match pr_step(&f, &model, &obs, w) {
            Ok(g) => worst = worst.max((g.total_mass() - 1.0).abs()),
            Err(e) => return Verdict::Fail(format!("trial {trial}: {e}")),
        }
    }
    let t = start.elapsed();
    verdict(
        worst <= 1e-10 && t < Duration::from_secs(10),
        format!("max |mass - 1| = {worst:.2e}, {:.2} s", t.as_secs_f64()),
    )
}

fn single_step_oracle() -> Verdict {
    let (a, b, m, y, w) = (30.0, 120.0, 100, 25, 0.5);
    let model = KernelModel::binomial_default();
    let (lo, hi) = model.theta_support();
    let spec = GridSpec::midpoint(2000, lo, hi).unwrap();
    let f0 = MixingMeasure::init_beta(&spec, a, b).unwrap();
    let f1 = pr_step(&f0, &model, &Observation::binomial(y, m), w).unwrap();

    // Continuous prior density and a fine Riemann sum for the marginal.
    let big = 1_000_000;
    let h = (hi - lo) / big as f64;
    let p: f64 = (0..big)
        .map(|k| {
            let t = lo + (k as f64 + 0.5) * h;
            (ln_beta_pdf(t, a, b) + ln_binom_pmf(y, m, t)).exp() * h
        })
        .sum();
    let mut worst: f64 = 0.0;
    for (t, d) in f1.nodes().iter().zip(f1.density()) {
        let prior = ln_beta_pdf(*t, a, b).exp();
        let want = (1.0 - w) * prior + w * prior * ln_binom_pmf(y, m, *t).exp() / p;
        if want > 1e-200 {
            worst = worst.max(((d - want) / want).abs());
        }
    }
    verdict(worst <= 1e-6, format!("max relative error {worst:.2e}"))
}

fn conjugacy_oracle() -> Verdict {
    let model = KernelModel::binomial_default();
    let (lo, hi) = model.theta_support();
    let spec = GridSpec::midpoint(20_000, lo, hi).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let a = rng.gen_range(3.0..60.0);
        let b = rng.gen_range(3.0..60.0);
        let m = rng.gen_range(1..=100u32);
        let y = rng.gen_range(0..=m);
        let f = MixingMeasure::init_beta(&spec, a, b).unwrap();
        let got = posterior_mean_rule(&f, &model, &Observation::binomial(y, m)).unwrap();
        let want = (a + f64::from(y)) / (a + b + f64::from(m));
        worst = worst.max((got - want).abs());
    }
    verdict(worst <= 1e-6, format!("max |error| = {worst:.2e}"))
}

fn kl_convergence(trace: &Trace, elapsed: Duration) -> Verdict {
    let kl = |n| trace.summary_for(n).map(|s| s.median_kl).unwrap_or(f64::NAN);
    let (k100, k1000, k5000) = (kl(100), kl(1000), kl(5000));
    verdict(
        k100 > k1000 && k1000 > k5000 && k5000 < 0.5 * k100 && elapsed < Duration::from_secs(300),
        format!(
            "median KL {k100:.3e} > {k1000:.3e} > {k5000:.3e}, {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn rate_check(trace: &Trace) -> Verdict {
    let kl = |n| trace.summary_for(n).map(|s| s.median_kl).unwrap_or(f64::NAN);
    let bound = 1.5 * kl(500) * 10f64.powf(-0.25);
    verdict(kl(5000) <= bound, format!("KL(5000) = {:.3e} <= {bound:.3e}", kl(5000)))
}

fn risk_dominance(trace: &Trace) -> Verdict {
    let worst = trace
        .rows
        .iter()
        .map(|r| r.eb_risk - r.bayes_risk)
        .fold(f64::INFINITY, f64::min);
    let med: Vec<f64> = [50, 500, 5000]
        .iter()
        .map(|&n| trace.summary_for(n).map(|s| s.median_excess_risk).unwrap_or(f64::NAN))
        .collect();
    let monotone = med.windows(2).all(|p| p[1] <= p[0]);
    verdict(
        worst >= -1e-8 && monotone && trace.rows.len() == 60,
        format!(
            "min(eb - bayes) = {worst:.2e}, median excess {:.2e} >= {:.2e} >= {:.2e}",
            med[0], med[1], med[2]
        ),
    )
}

fn bayes_closed_form(trace: &Trace) -> Verdict {
    let rho = trace.bayes_risk;
    verdict((rho - 0.5).abs() <= 2e-3, format!("rho = {rho:.8}"))
}

fn read_dir_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect()
}

fn same_outputs(a: &Path, b: &Path) -> Result<(), String> {
    let (fa, fb) = (read_dir_files(a), read_dir_files(b));
    if fa.keys().ne(fb.keys()) {
        return Err(format!("file sets differ: {:?} vs {:?}", fa.keys(), fb.keys()));
    }
    for (name, bytes) in &fa {
        if name == "manifest.json" {
            let strip = |b: &[u8]| {
                let mut v: serde_json::Value = serde_json::from_slice(b).unwrap();
                v.as_object_mut().unwrap().remove("wall_clock_seconds");
                v
            };
            if strip(bytes) != strip(&fb[name]) {
                return Err("manifests differ".into());
            }
        } else if *bytes != fb[name] {
            return Err(format!("{name} differs"));
        }
    }
    Ok(())
}

fn run_bin(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_predrec"))
        .args(args)
        .current_dir(cwd)
        .env_remove("PREDREC_THREADS")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut data = String::from("id,y,trials\n");
    for i in 0..400 {
        let t: f64 = rng.gen_range(0.1..0.3);
        let y = (0..50).filter(|_| rng.gen::<f64>() < t).count();
        data.push_str(&format!("u{i},{y},50\n"));
    }
    fs::write(dir.join("data.csv"), data).unwrap();
    fs::write(
        dir.join("fit.toml"),
        "[kernel]\nfamily = \"binomial\"\n\n[pr]\ngamma = 0.9\nn_permutations = 8\nseed = 11\n",
    )
    .unwrap();
    let mut sc = scenario("beta_binomial_risk.json");
    sc.sample_sizes = vec![50, 200];
    sc.replications = 4;
    fs::write(dir.join("scenario.json"), serde_json::to_string(&sc).unwrap()).unwrap();

    let runs: [(&str, &[&str]); 4] = [
        ("fit1", &["fit", "data.csv", "--config", "fit.toml", "--threads", "1"]),
        ("fit2", &["fit", "data.csv", "--config", "fit.toml", "--threads", "4"]),
        ("sim1", &["simulate", "scenario.json", "--threads", "1"]),
        ("sim2", &["simulate", "scenario.json", "--threads", "3"]),
    ];
    for (out, args) in runs {
        let mut a = args.to_vec();
        a.extend(["--out", out]);
        if let Err(e) = run_bin(&a, dir) {
            return Verdict::Fail(format!("{out}: {e}"));
        }
    }
    let fit = same_outputs(&dir.join("fit1"), &dir.join("fit2"));
    let sim = same_outputs(&dir.join("sim1"), &dir.join("sim2"));
    match (fit, sim) {
        (Ok(()), Ok(())) => Verdict::Pass("fit and simulate outputs byte-identical across reruns".into()),
        (f, s) => Verdict::Fail(format!("fit: {f:?}, simulate: {s:?}")),
    }
}

fn real_data() -> Option<Vec<predrec::baseball::BattingRecord>> {
    let path = std::env::var_os("PREDREC_BASEBALL_DATA")?;
    let bytes = fs::read(path).ok()?;
    ingest(bytes.as_slice()).ok().map(|i| i.records)
}

fn table_reproduction(report: Option<&predrec::baseball::StudyReport>) -> Verdict {
    let Some(report) = report else {
        return Verdict::Skip("PREDREC_BASEBALL_DATA not set".into());
    };
    let targets = [
        ("pr", 0.096, 0.353),
        ("group_mean", 0.127, 0.378),
        ("james_stein", 0.164, 0.359),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (method, p, np) in targets {
        for (g, want) in [(Group::Pitchers, p), (Group::NonPitchers, np)] {
            let got = report.error(method, g).unwrap_or(f64::NAN);
            ok &= (got - want).abs() <= 0.02;
            detail.push(format!("{method}/{}={got:.3}", g.key()));
        }
    }
    for g in Group::ALL {
        ok &= report.error("naive", g) == Some(1.0);
    }
    verdict(ok, detail.join(" "))
}

fn prior_shapes(real: Option<&predrec::baseball::StudyReport>) -> Verdict {
    let synth = run_study(&synthetic_season(81, 486, 2005), &StudyConfig::default()).unwrap();
    let mut detail = Vec::new();
    let mut ok = true;
    for (label, report) in [("synthetic", Some(&synth)), ("real", real)] {
        let Some(report) = report else { continue };
        for g in Group::ALL {
            let f = report.pr_prior(g).unwrap();
            let mut buf = Vec::new();
            write_density_csv(f, &mut buf).unwrap();
            let mut r = csv::Reader::from_reader(buf.as_slice());
            let rows: Vec<(f64, f64)> = r
                .records()
                .map(|rec| {
                    let rec = rec.unwrap();
                    (rec[0].parse().unwrap(), rec[1].parse().unwrap())
                })
                .collect();
            let h = rows[1].0 - rows[0].0;
            let integral: f64 = rows.iter().map(|(_, d)| d * h).sum();
            let dens: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let modes = count_modes(&dens, 0.01);
            ok &= (integral - 1.0).abs() <= 1e-8 && (1..=2).contains(&modes);
            detail.push(format!("{label}/{}: integral-1={:.1e} modes={modes}", g.key(), integral - 1.0));
        }
        if label == "real" {
            let pm = report.groups["pitchers"].prior_mean;
            let hm = report.groups["non_pitchers"].prior_mean;
            ok &= pm < hm;
            detail.push(format!("real prior means {pm:.3} < {hm:.3}"));
        }
    }
    if real.is_none() {
        detail.push("real-data mean check skipped".into());
    }
    verdict(ok, detail.join(", "))
}

fn main() {
    // Test harness flags such as --nocapture are accepted and ignored.
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    results.push((1, "mass conservation", mass_conservation()));
    results.push((2, "single-step oracle", single_step_oracle()));
    results.push((3, "conjugacy oracle", conjugacy_oracle()));

    let start = Instant::now();
    let normal = optimality_trace(&scenario("normal_location_kl.json")).unwrap();
    let elapsed = start.elapsed();
    results.push((4, "KL convergence", kl_convergence(&normal, elapsed)));
    results.push((5, "rate check", rate_check(&normal)));

    let bb = optimality_trace(&scenario("beta_binomial_risk.json")).unwrap();
    results.push((6, "risk dominance and convergence", risk_dominance(&bb)));
    results.push((7, "Bayes risk closed form", bayes_closed_form(&normal)));
    results.push((8, "determinism", determinism()));

    let real = real_data().map(|recs| run_study(&recs, &StudyConfig::default()).unwrap());
    results.push((9, "batting table reproduction", table_reproduction(real.as_ref())));
    results.push((10, "exported prior shapes", prior_shapes(real.as_ref())));

    let mut failed = 0;
    for (k, name, v) in &results {
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("criterion {k:>2} {tag} {name}: {detail}");
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

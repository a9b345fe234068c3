use predrec::kernels::{KernelModel, Observation};
use predrec::mixing::{GridSpec, MixingMeasure};
use predrec::pr::{fit, PrConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution};

fn beta_binomial_sample(n: usize, trials: u32, seed: u64) -> Vec<Observation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = Beta::new(30.0, 120.0).unwrap();
    (0..n)
        .map(|_| {
            let t = beta.sample(&mut rng);
            let y = Binomial::new(u64::from(trials), t).unwrap().sample(&mut rng);
            Observation::binomial(y as u32, trials)
        })
        .collect()
}

#[test]
fn recovers_beta_binomial_mean() {
    let data = beta_binomial_sample(2000, 50, 42);
    let model = KernelModel::binomial_default();
    let f0 = MixingMeasure::uniform(&GridSpec::for_model(&model).unwrap()).unwrap();
    let cfg = PrConfig::new(0.9, 10, 7).unwrap();
    let out = fit(&data, &model, &f0, &cfg).unwrap();
    let mean = out.estimate.moment(1);
    assert!((mean - 0.2).abs() < 0.01, "mean {mean}");
    assert!((out.estimate.total_mass() - 1.0).abs() < 1e-10);
}

#[test]
fn estimate_depends_on_order_and_averaging_reduces_it() {
    let data = beta_binomial_sample(300, 50, 1);
    let model = KernelModel::binomial_default();
    let f0 = MixingMeasure::uniform(&GridSpec::midpoint(500, 1e-4, 1.0 - 1e-4).unwrap()).unwrap();

    let one = |seed| fit(&data, &model, &f0, &PrConfig::new(0.75, 1, seed).unwrap()).unwrap().estimate;
    let many = |seed| fit(&data, &model, &f0, &PrConfig::new(0.75, 25, seed).unwrap()).unwrap().estimate;

    let single = one(1).l1_distance(&one(2)).unwrap();
    assert!(single > 1e-3, "single orderings should differ, L1 = {single}");
    let averaged = many(1).l1_distance(&many(2)).unwrap();
    assert!(averaged < single, "averaged {averaged} vs single {single}");

    let unshuffled = PrConfig {
        shuffle: false,
        ..PrConfig::new(0.75, 1, 3).unwrap()
    };
    let a = fit(&data, &model, &f0, &unshuffled).unwrap().estimate;
    let mut reversed = data.clone();
    reversed.reverse();
    let b = fit(&reversed, &model, &f0, &unshuffled).unwrap().estimate;
    assert!(a.l1_distance(&b).unwrap() > 1e-3);
}

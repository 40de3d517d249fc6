//! Fixtures shared by the benchmarks.

use nlr_core::model::{draw_covariate_sample, draw_sample, HalfNormalShift, ShiftedExponentialLevels};
use nlr_core::sim::Scenario;
use nlr_core::{CovariateModelSpec, NuisanceEstimates, Sample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn halfnormal_sample(n: usize, seed: u64) -> Sample {
    draw_sample(&HalfNormalShift, 0.0, n, &mut ChaCha8Rng::seed_from_u64(seed)).expect("valid draw")
}

/// Main sample and estimates from an independent auxiliary sample of the
/// two-level exponential toy model.
pub fn toy_covariate_fixture(n: usize, seed: u64) -> (ShiftedExponentialLevels, Sample, NuisanceEstimates) {
    let model = ShiftedExponentialLevels::toy();
    let gamma = model.default_gamma();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let main = draw_covariate_sample(&model, 0.0, &gamma, n, &mut rng).expect("valid draw");
    let aux = draw_covariate_sample(&model, 0.0, &gamma, n, &mut rng).expect("valid draw");
    let est = NuisanceEstimates::from_aux(&model, &aux, 0.0, 0.05, 50.0).expect("estimates");
    (model, main, est)
}

/// The stock plus-side scenario at a reduced replication count.
pub fn small_power_scenario(replications: usize) -> Scenario {
    Scenario {
        replications,
        master_seed: 1,
        ..Scenario::default()
    }
}

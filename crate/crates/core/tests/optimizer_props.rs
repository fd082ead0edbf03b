use bcfeed_core::gbc::jsc_sym_rate;
use bcfeed_core::montecarlo::{SEARCH_STREAM, VALIDATION_STREAM};
use bcfeed_core::optimizer::{optimize_beta, optimize_beta_on, rate_at_fixed_beta_on};
use bcfeed_core::{BetaGrid, BetaVector, GbcConfig, McPlan, SampleBatch};
use proptest::prelude::*;

const SAMPLES: usize = 1000;
const BUDGET: usize = 1 << 28;

fn batches(cfg: &GbcConfig, seed: u64) -> (SampleBatch, SampleBatch) {
    let plan = McPlan::new(SAMPLES, seed).unwrap();
    (
        SampleBatch::cached(&plan, cfg, SEARCH_STREAM, BUDGET).unwrap(),
        SampleBatch::cached(&plan, cfg, VALIDATION_STREAM, BUDGET).unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn argmax_dominates_every_grid_point(users in 2usize..=3, snr_db in -5.0f64..35.0, seed in any::<u64>()) {
        let cfg = GbcConfig::miso(users, snr_db).unwrap();
        let (search, validation) = batches(&cfg, seed);
        let grid = BetaGrid::new(-1.5, 1.5, 9).unwrap();
        let opt = optimize_beta_on(&cfg, &grid, &search, &validation, true).unwrap();
        let table = opt.table.as_ref().unwrap();
        prop_assert_eq!(table.len(), grid.size(users).unwrap());
        prop_assert_eq!(opt.evaluations, table.len());
        for point in table {
            prop_assert!(point.rate <= opt.search_rate.mean);
        }
        // A fixed beta on the grid can never beat the search optimum on the same batch.
        for point in table.iter().step_by(7) {
            let betas = BetaVector::new(point.betas.clone()).unwrap();
            let (fixed, _) = jsc_sym_rate(&cfg, &betas, &search).unwrap();
            prop_assert!(fixed.mean <= opt.search_rate.mean * (1.0 + 1e-9));
        }
    }

    #[test]
    fn refined_grid_never_loses(users in 2usize..=3, snr_db in -5.0f64..35.0, seed in any::<u64>()) {
        let cfg = GbcConfig::miso(users, snr_db).unwrap();
        let (search, validation) = batches(&cfg, seed);
        let coarse = BetaGrid::new(-1.5, 1.5, 5).unwrap();
        let fine = BetaGrid::new(-1.5, 1.5, 9).unwrap();
        let a = optimize_beta_on(&cfg, &coarse, &search, &validation, false).unwrap();
        let b = optimize_beta_on(&cfg, &fine, &search, &validation, false).unwrap();
        prop_assert!(b.search_rate.mean >= a.search_rate.mean * (1.0 - 1e-12));
    }

    #[test]
    fn reported_rate_is_the_validation_estimate(users in 2usize..=3, snr_db in -5.0f64..35.0, seed in any::<u64>()) {
        let cfg = GbcConfig::miso(users, snr_db).unwrap();
        let (search, validation) = batches(&cfg, seed);
        let grid = BetaGrid::new(-1.0, 1.0, 6).unwrap();
        let opt = optimize_beta_on(&cfg, &grid, &search, &validation, false).unwrap();
        prop_assert_eq!(opt.search_rate.stream, SEARCH_STREAM);
        prop_assert_eq!(opt.best_rate.stream, VALIDATION_STREAM);
        let again = rate_at_fixed_beta_on(&cfg, &opt.best_betas, &validation).unwrap();
        prop_assert!((again.rate.mean - opt.best_rate.mean).abs() < 1e-12 * opt.best_rate.mean.max(1.0));
        prop_assert_eq!(again.alphas.unwrap(), opt.alphas);
    }
}

#[test]
fn search_optimum_is_biased_upward_on_average() {
    // The winner's search-batch rate includes favorable noise that the
    // independent validation batch does not share. Seeds are fixed, so this
    // is deterministic.
    let cfg = GbcConfig::miso(2, 10.0).unwrap();
    let grid = BetaGrid::new(-1.5, 1.5, 30).unwrap();
    let seeds = 24u64;
    let mut bias = 0.0;
    for seed in 0..seeds {
        let opt = optimize_beta(&cfg, &grid, &McPlan::new(400, seed).unwrap()).unwrap();
        bias += opt.search_rate.mean - opt.best_rate.mean;
    }
    let mean = bias / seeds as f64;
    assert!(mean > 0.0, "mean bias {mean}");
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = GbcConfig::miso(3, 10.0).unwrap();
    let grid = BetaGrid::new(-1.5, 1.5, 8).unwrap();
    let plan = McPlan::new(3000, 7).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| optimize_beta(&cfg, &grid, &plan).unwrap())
    };
    let one = run(1);
    let many = run(4);
    assert_eq!(one, many);
    assert_eq!(one.best_rate.mean.to_bits(), many.best_rate.mean.to_bits());
}

use bcfeed_core::gbc::{
    dof_sym, dof_sym_f64, jsc_sym_rate, mat2_rate, qmat_rate, tdma_rate, two_user_jsc_rate,
    upper_bound,
};
use bcfeed_core::montecarlo::batch_cache;
use bcfeed_core::optimizer::JscTables;
use bcfeed_core::{BetaVector, GbcConfig, McPlan};
use num_rational::BigRational;
use proptest::prelude::*;

const SAMPLES: usize = 1500;

fn miso(users: usize, snr_db: f64) -> GbcConfig {
    GbcConfig::miso(users, snr_db).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn closed_form_matches_general_two_user(snr_db in -5.0f64..40.0, log_r in -1.5f64..1.5, seed in any::<u64>()) {
        let cfg = miso(2, snr_db);
        let batch = batch_cache(&McPlan::new(SAMPLES, seed).unwrap(), &cfg).unwrap();
        let r = 10f64.powf(log_r);
        let (closed, alpha1) = two_user_jsc_rate(&cfg, r, &batch).unwrap();
        let (general, alphas) = jsc_sym_rate(&cfg, &BetaVector::new(vec![r]).unwrap(), &batch).unwrap();
        prop_assert!((closed.mean - general.mean).abs() < 1e-9 * general.mean.max(1.0));
        prop_assert!((alpha1 - alphas.get(1)).abs() < 1e-9);
    }

    #[test]
    fn tables_match_direct_evaluation(
        users in 2usize..=3,
        snr_db in -5.0f64..35.0,
        logs in prop::collection::vec(-1.5f64..1.5, 2),
        seed in any::<u64>(),
    ) {
        let cfg = miso(users, snr_db);
        let batch = batch_cache(&McPlan::new(SAMPLES, seed).unwrap(), &cfg).unwrap();
        let betas = BetaVector::new(logs[..users - 1].iter().map(|l| 10f64.powf(*l)).collect()).unwrap();
        let (direct, alphas) = jsc_sym_rate(&cfg, &betas, &batch).unwrap();
        let (tabled, alphas_t) = JscTables::build(&cfg, &batch).unwrap().rate(&betas).unwrap();
        prop_assert!((direct.mean - tabled.mean).abs() < 1e-9 * direct.mean.max(1.0));
        for (a, b) in alphas.as_slice().iter().zip(alphas_t.as_slice()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn jsc_stays_below_upper_bound(
        users in 1usize..=3,
        snr_db in -5.0f64..35.0,
        logs in prop::collection::vec(-1.5f64..1.5, 2),
        seed in any::<u64>(),
    ) {
        let cfg = miso(users, snr_db);
        let batch = batch_cache(&McPlan::new(SAMPLES, seed).unwrap(), &cfg).unwrap();
        let betas = BetaVector::new(logs[..users - 1].iter().map(|l| 10f64.powf(*l)).collect()).unwrap();
        let (jsc, alphas) = jsc_sym_rate(&cfg, &betas, &batch).unwrap();
        let upper = upper_bound(&cfg, &batch).unwrap();
        prop_assert!(jsc.mean > 0.0);
        prop_assert!(jsc.mean <= upper.mean * (1.0 + 1e-12));
        prop_assert!((alphas.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(alphas.as_slice().iter().all(|a| *a > 0.0));
    }

    #[test]
    fn huge_compression_noise_reduces_to_tdma(users in 1usize..=3, snr_db in -5.0f64..35.0, seed in any::<u64>()) {
        let cfg = miso(users, snr_db);
        let batch = batch_cache(&McPlan::new(SAMPLES, seed).unwrap(), &cfg).unwrap();
        let betas = BetaVector::uniform(users, 1e12).unwrap();
        let (jsc, _) = jsc_sym_rate(&cfg, &betas, &batch).unwrap();
        let tdma = tdma_rate(&cfg, &batch).unwrap();
        prop_assert!((jsc.mean - tdma.mean).abs() < 1e-6 * tdma.mean.max(1.0));
    }

    #[test]
    fn baselines_grow_with_snr(users in 2usize..=3, lo in -5.0f64..30.0, gap in 0.5f64..10.0, seed in any::<u64>()) {
        let plan = McPlan::new(SAMPLES, seed).unwrap();
        let low = miso(users, lo);
        let high = miso(users, lo + gap);
        // Draws depend only on the shape, so both points see the same channels.
        let batch = batch_cache(&plan, &low).unwrap();
        let pairs = [
            (tdma_rate(&low, &batch).unwrap(), tdma_rate(&high, &batch).unwrap()),
            (qmat_rate(&low, &batch).unwrap(), qmat_rate(&high, &batch).unwrap()),
            (upper_bound(&low, &batch).unwrap(), upper_bound(&high, &batch).unwrap()),
        ];
        for (a, b) in pairs {
            prop_assert!(b.mean > a.mean);
        }
        if users == 2 {
            prop_assert!(mat2_rate(&high, &batch).unwrap().mean > mat2_rate(&low, &batch).unwrap().mean);
        }
    }
}

#[test]
fn dof_is_inverse_harmonic_number() {
    for k in 1..=12usize {
        let harmonic: BigRational = (1..=k)
            .map(|j| BigRational::new(1.into(), (j as i64).into()))
            .sum();
        assert_eq!(dof_sym(k).unwrap(), harmonic.recip());
        let approx = 1.0 / (1..=k).map(|j| 1.0 / j as f64).sum::<f64>();
        assert!((dof_sym_f64(k).unwrap() - approx).abs() < 1e-15);
    }
}

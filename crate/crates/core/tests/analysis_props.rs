use std::collections::BTreeMap;

use posearch::analysis::{
    blocktime_cdf, blocktime_moments, blocktime_montecarlo, fork_prob_analytic,
    fork_prob_montecarlo, fork_series, winning_probability, AnalysisError,
    AnalysisParams as Params, RateConvention,
};
use posearch::AnalysisParams;
use proptest::prelude::*;

fn equal_rate(d: f64, n: u32, samples: u64) -> AnalysisParams {
    Params {
        lambda: 1.0,
        d,
        n,
        samples,
        convention: RateConvention::EqualsN,
    }
}

proptest! {
    #[test]
    fn cdf_is_nondecreasing(n in 1u32..200, a in 0.0f64..5.0, b in 0.0f64..5.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(blocktime_cdf(n, lo) <= blocktime_cdf(n, hi) + 1e-15);
    }

    #[test]
    fn cdf_saturates(n in 1u32..500) {
        prop_assert!((blocktime_cdf(n, 50.0f64) - 1.0).abs() < 1e-12);
        prop_assert_eq!(blocktime_cdf(n, 0.0f64), 0.0);
    }

    #[test]
    fn fork_probability_falls_with_n(ld in 0.001f64..0.999, n in 1u32..30) {
        let p = |n| fork_prob_analytic(&Params { lambda: ld, d: 1.0, n, samples: 1, convention: RateConvention::AsGiven });
        prop_assert!(p(n + 1) < p(n));
    }

    #[test]
    fn shares_sum_to_one_and_ignore_scale(powers in prop::collection::vec(0.001f64..1e6, 1..12), k in 0.01f64..1e3) {
        let m: BTreeMap<usize, f64> = powers.iter().copied().enumerate().collect();
        let scaled: BTreeMap<usize, f64> = m.iter().map(|(i, p)| (*i, p * k)).collect();
        let a = winning_probability(&m).unwrap();
        let b = winning_probability(&scaled).unwrap();
        prop_assert!((a.values().sum::<f64>() - 1.0).abs() < 1e-12);
        for (i, w) in &a {
            prop_assert!((w - b[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn variance_shrinks_with_more_miniblocks() {
    for n in 1..64 {
        assert!(blocktime_moments::<f64>(n + 1).variance < blocktime_moments::<f64>(n).variance);
    }
}

#[test]
fn equal_shares_for_equal_power() {
    let w =
        winning_probability(&BTreeMap::from([(1, 3.0f64), (2, 3.0), (3, 3.0), (4, 3.0)])).unwrap();
    assert!(w.values().all(|&p| (p - 0.25).abs() < 1e-15));
    assert_eq!(
        winning_probability(&BTreeMap::from([(9, 5.0f64)])).unwrap()[&9],
        1.0
    );
    assert_eq!(
        winning_probability(&BTreeMap::from([(1, -1.0f64)])),
        Err(AnalysisError::BadPower)
    );
}

#[test]
fn montecarlo_agrees_with_closed_form_across_seeds() {
    let p = equal_rate(0.05, 1, 20_000);
    let analytic = fork_prob_analytic(&p);
    let agree = (0..200)
        .filter(|&seed| {
            fork_prob_montecarlo(&p, seed)
                .unwrap()
                .agrees_with(analytic, 3.0)
        })
        .count();
    assert!(
        agree >= 198,
        "{agree}/200 replicates within three standard errors"
    );
}

#[test]
fn four_slot_fork_matches() {
    let p = equal_rate(0.05, 4, 200_000);
    let e = fork_prob_montecarlo(&p, 9).unwrap();
    assert!(e.agrees_with(fork_prob_analytic(&p), 3.0), "{e:?}");
}

#[test]
fn block_time_variance_for_four_miniblocks() {
    let s = blocktime_montecarlo::<f64>(4, 100_000, 5).unwrap();
    assert!((s.variance() - 0.25).abs() < 0.0125, "{}", s.variance());
}

#[test]
fn works_in_single_precision() {
    let p = Params {
        lambda: 1.0f32,
        d: 0.1,
        n: 1,
        samples: 50_000,
        convention: RateConvention::AsGiven,
    };
    let e = fork_prob_montecarlo(&p, 3).unwrap();
    assert!(e.agrees_with(fork_prob_analytic(&p), 3.0));
    assert!((blocktime_cdf(4, 1.0f32) - 0.566_53).abs() < 1e-5);
}

#[test]
fn zero_samples_gives_closed_form_only() {
    let s = fork_series(&[0.0, 0.1], &[1, 2], 0, 1).unwrap();
    assert_eq!(s.len(), 4);
    assert!(s.iter().all(|p| p.montecarlo.is_none()));
    assert!(s[1].analytic > s[3].analytic);
}

#[test]
fn rejects_invalid_parameters() {
    let mut p = equal_rate(0.1, 1, 10);
    p.d = -1.0;
    assert_eq!(p.validate(), Err(AnalysisError::Delay));
    p.d = 0.1;
    p.n = 0;
    assert_eq!(
        fork_prob_montecarlo(&p, 0).unwrap_err(),
        AnalysisError::ZeroN
    );
}

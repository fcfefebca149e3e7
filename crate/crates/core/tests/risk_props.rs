//! Property tests for the risk measures: agreement with a sort-based oracle
//! and equivariance under translation and positive scaling.

use osm_hedge::risk::{risk_measures, var_index, RiskReport};
use proptest::prelude::*;

const LEVELS: [f64; 2] = [0.95, 0.99];

fn sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0..100.0f64, 20..300)
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-9 * scale.max(1.0)
}

fn report(x: &[f64]) -> RiskReport {
    risk_measures(x, &LEVELS).unwrap()
}

proptest! {
    #[test]
    fn tails_match_sorted_oracle(x in sample()) {
        let r = report(&x);
        let mut sorted = x.clone();
        sorted.sort_by(f64::total_cmp);
        for level in LEVELS {
            let k = var_index(level, x.len());
            let var = sorted[k];
            let below: Vec<f64> = sorted.iter().copied().filter(|v| *v < var).collect();
            let es = if below.is_empty() { var } else { below.iter().sum::<f64>() / below.len() as f64 };
            let t = r.tail(level).unwrap();
            prop_assert_eq!(t.var, var);
            prop_assert!(close(t.es, es, 100.0));
            prop_assert!(t.es <= t.var);
        }
        prop_assert!(r.tail(0.99).unwrap().var <= r.tail(0.95).unwrap().var);
        prop_assert!(r.variance >= 0.0 && r.semivariance >= 0.0);
    }

    #[test]
    fn translation_shifts_location_and_keeps_dispersion(x in sample(), c in -50.0..50.0f64) {
        let (a, b) = (report(&x), report(&x.iter().map(|v| v + c).collect::<Vec<_>>()));
        prop_assert!(close(b.mean, a.mean + c, 100.0));
        prop_assert!(close(b.variance, a.variance, a.variance));
        for level in LEVELS {
            let (ta, tb) = (a.tail(level).unwrap(), b.tail(level).unwrap());
            prop_assert!(close(tb.var, ta.var + c, 100.0));
            prop_assert!(close(tb.es, ta.es + c, 100.0));
        }
    }

    #[test]
    fn positive_scaling_is_equivariant(x in sample(), s in 0.01..20.0f64) {
        let (a, b) = (report(&x), report(&x.iter().map(|v| v * s).collect::<Vec<_>>()));
        prop_assert!(close(b.mean, a.mean * s, 100.0 * s));
        prop_assert!(close(b.variance, a.variance * s * s, a.variance * s * s));
        prop_assert!(close(b.semivariance, a.semivariance * s * s, a.semivariance * s * s));
        for level in LEVELS {
            let (ta, tb) = (a.tail(level).unwrap(), b.tail(level).unwrap());
            prop_assert!(close(tb.var, ta.var * s, 100.0 * s));
            prop_assert!(close(tb.es, ta.es * s, 100.0 * s));
        }
    }

    #[test]
    fn var_index_is_the_zero_based_integer_ceiling(n in 1usize..100_000, pct in 1usize..50) {
        let level = 1.0 - pct as f64 / 100.0;
        prop_assert_eq!(var_index(level, n), (n * pct).div_ceil(100).max(1) - 1);
    }
}

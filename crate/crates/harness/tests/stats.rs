use proptest::prelude::*;
use vrsnet_harness::stats::{mae_stats, r2_score};

fn loop_r2(y: &[f32], p: &[f32]) -> f64 {
    let mut mean = 0.0;
    for v in y {
        mean += *v as f64;
    }
    mean /= y.len() as f64;
    let (mut res, mut tot) = (0.0, 0.0);
    for i in 0..y.len() {
        res += (y[i] as f64 - p[i] as f64).powi(2);
        tot += (y[i] as f64 - mean).powi(2);
    }
    1.0 - res / tot
}

fn loop_mae(y: &[f32], p: &[f32]) -> (f64, f64, f64) {
    let n = y.len() as f64;
    let mut total = 0.0;
    let mut under = 0.0;
    let mut under_n = 0usize;
    for i in 0..y.len() {
        let d = y[i] as f64 - p[i] as f64;
        total += d.abs();
        if p[i] < y[i] {
            under += d;
            under_n += 1;
        }
    }
    let mean = total / n;
    let mut var = 0.0;
    for i in 0..y.len() {
        var += ((y[i] as f64 - p[i] as f64).abs() - mean).powi(2);
    }
    (mean, if under_n == 0 { 0.0 } else { under / under_n as f64 }, (var / n).sqrt())
}

fn pairs() -> impl Strategy<Value = (Vec<f32>, Vec<f32>)> {
    (2usize..200).prop_flat_map(|n| (prop::collection::vec(0.0f32..1.0, n), prop::collection::vec(0.0f32..1.0, n)))
}

proptest! {
    #[test]
    fn r2_matches_straight_loop((y, p) in pairs()) {
        prop_assume!(y.iter().any(|&v| v != y[0]));
        let got = r2_score(&y, &p).unwrap();
        prop_assert!((got - loop_r2(&y, &p)).abs() <= 1e-9);
        prop_assert!(got <= 1.0);
    }

    #[test]
    fn mae_matches_straight_loop((y, p) in pairs()) {
        let s = mae_stats(&y, &p).unwrap();
        let (total, under, sigma) = loop_mae(&y, &p);
        prop_assert!((s.total - total).abs() <= 1e-9);
        prop_assert!((s.under - under).abs() <= 1e-9);
        prop_assert!((s.sigma - sigma).abs() <= 1e-9);
        prop_assert!((s.variance - sigma * sigma).abs() <= 1e-9);
        prop_assert!(s.total >= 0.0 && s.under >= 0.0);
        prop_assert!(s.consistent());
    }
}

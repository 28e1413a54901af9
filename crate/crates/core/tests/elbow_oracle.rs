use gazeclass_core::clustering::find_elbow;
use proptest::prelude::*;

/// Maximizer of x - (e^{5x} - 1) / (e^5 - 1) on [0, 1], by bisection on the
/// derivative 1 - 5 e^{5x} / (e^5 - 1).
fn analytic_knee() -> f64 {
    let denom = 5f64.exp() - 1.0;
    let deriv = |x: f64| 1.0 - 5.0 * (5.0 * x).exp() / denom;
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if deriv(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn exponential_knee_within_two_percent() {
    let knee = analytic_knee();
    assert!((knee - ((5f64.exp() - 1.0) / 5.0).ln() / 5.0).abs() < 1e-12);
    let n = 1000;
    let curve: Vec<f64> = (0..n)
        .map(|i| (5.0 * i as f64 / (n - 1) as f64).exp() - 1.0)
        .collect();
    let e = find_elbow(&curve).unwrap();
    let x = e.index as f64 / (n - 1) as f64;
    assert!((x - knee).abs() <= 0.02 * knee, "elbow at {x}, analytic {knee}");
}

#[test]
fn exponential_knee_f32() {
    let knee = analytic_knee();
    let curve: Vec<f32> = (0..1000)
        .map(|i| ((5.0 * i as f64 / 999.0).exp() - 1.0) as f32)
        .collect();
    let x = find_elbow(&curve).unwrap().index as f64 / 999.0;
    assert!((x - knee).abs() <= 0.02 * knee);
}

proptest! {
    /// Shallow then steep linear pieces: the breakpoint is the elbow.
    #[test]
    fn two_segment_breakpoint(
        shallow_len in 3usize..200,
        steep_len in 1usize..200,
        shallow in 0.0001..1.0f64,
        ratio in 2.0..100.0f64,
    ) {
        let steep = shallow * ratio;
        let mut curve: Vec<f64> = (0..=shallow_len).map(|i| shallow * i as f64).collect();
        let top = curve[shallow_len];
        curve.extend((1..=steep_len).map(|j| top + steep * j as f64));
        // The breakpoint is the maximizer only when the steep piece rises
        // faster than the chord, which holds when the steep slope exceeds the
        // average slope.
        let n = curve.len() - 1;
        let chord = curve[n] / n as f64;
        prop_assume!(steep > chord * (1.0 + 1e-9) && shallow < chord * (1.0 - 1e-9));
        prop_assert_eq!(find_elbow(&curve).unwrap().index, shallow_len);
    }
}

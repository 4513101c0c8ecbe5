//! Small numerical helpers shared by the estimator and the bounds.
//!
//! All reductions over rollouts go through [`pairwise_sum`] or
//! [`pairwise_reduce`] so the summation order is fixed and results are
//! reproducible bit-for-bit across runs.

const PAIRWISE_LEAF: usize = 8;

/// Pairwise (cascade) summation with a fixed split order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_LEAF {
        return values.iter().fold(0.0, |acc, v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise reduction of owned items with the same split order as
/// [`pairwise_sum`]. Returns `None` on empty input.
pub fn pairwise_reduce<T, F>(mut items: Vec<T>, add: F) -> Option<T>
where
    F: Fn(T, T) -> T + Copy,
{
    fn go<T, F: Fn(T, T) -> T + Copy>(items: &mut Vec<Option<T>>, lo: usize, hi: usize, add: F) -> T {
        if hi - lo <= PAIRWISE_LEAF {
            let mut acc = items[lo].take().expect("each item is consumed once");
            for slot in &mut items[lo + 1..hi] {
                acc = add(acc, slot.take().expect("each item is consumed once"));
            }
            return acc;
        }
        let mid = lo + (hi - lo) / 2;
        let left = go(items, lo, mid, add);
        let right = go(items, mid, hi, add);
        add(left, right)
    }
    if items.is_empty() {
        return None;
    }
    let n = items.len();
    let mut slots: Vec<Option<T>> = items.drain(..).map(Some).collect();
    Some(go(&mut slots, 0, n, add))
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// Sample mean and (n − 1)-normalized variance.
pub fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (mean, pairwise_sum(&sq) / (n - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn pairwise_reduce_agrees_with_pairwise_sum() {
        let v: Vec<f64> = (0..37).map(|i| (i as f64).sin() * 1e3).collect();
        let r = pairwise_reduce(v.clone(), |a, b| a + b).unwrap();
        assert_eq!(r.to_bits(), pairwise_sum(&v).to_bits());
        assert!(pairwise_reduce(Vec::<f64>::new(), |a, b| a + b).is_none());
    }

    #[test]
    fn logistic_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((log_sigmoid(2.0) - (-0.126_928_011_042_972_6)).abs() < 1e-12);
        assert_eq!(log_sigmoid(800.0), 0.0);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-12);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) == 1.0);
    }

    #[test]
    fn sample_variance_uses_n_minus_one() {
        let (m, v) = mean_and_variance(&[1.0, 2.0]);
        assert_eq!(m, 1.5);
        assert_eq!(v, 0.5);
    }
}

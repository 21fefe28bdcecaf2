/// Per-class F1 averaged with weights proportional to true-class support.
/// Classes whose precision or recall is undefined score 0.
pub fn weighted_f1(y_true: &[u8], y_pred: &[u8]) -> f64 {
    assert_eq!(y_true.len(), y_pred.len(), "label vectors differ in length");
    if y_true.is_empty() {
        return 0.0;
    }
    let n = y_true.len() as f64;
    let mut total = 0.0;
    for class in [0u8, 1u8] {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (&t, &p) in y_true.iter().zip(y_pred) {
            match (t == class, p == class) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        let support = tp + fn_;
        if support == 0 {
            continue;
        }
        let denom = 2 * tp + fp + fn_;
        let f1 = if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
        total += f1 * support as f64 / n;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_prediction() {
        assert_eq!(weighted_f1(&[0, 1, 1, 0], &[0, 1, 1, 0]), 1.0);
    }

    #[test]
    fn hand_computed_cases() {
        // class 0: P=1, R=1/2, F1=2/3; class 1: P=2/3, R=1, F1=4/5
        let f = weighted_f1(&[0, 0, 1, 1], &[0, 1, 1, 1]);
        assert!((f - 11.0 / 15.0).abs() < 1e-15);
        let f = weighted_f1(&[0, 1], &[1, 1]);
        assert!((f - 1.0 / 3.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn label_swap_invariance(pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..60)) {
            let (t, p): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let ts: Vec<u8> = t.iter().map(|v| 1 - v).collect();
            let ps: Vec<u8> = p.iter().map(|v| 1 - v).collect();
            let a = weighted_f1(&t, &p);
            prop_assert!((a - weighted_f1(&ts, &ps)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}

use adacong::weighting::{heuristic_uncertainty, uncertainty, weight, HeuristicKind, UncertaintyMapping, WeightRule};
use proptest::prelude::*;

#[test]
fn examples() {
    let m = UncertaintyMapping::NormalizedSetSize { universe: 100 };
    assert_eq!(uncertainty(m, 1).unwrap(), 0.0);
    assert_eq!(uncertainty(m, 100).unwrap(), 1.0);
    assert_eq!(uncertainty(m, 0).unwrap(), 1.0);
    assert_eq!(uncertainty(UncertaintyMapping::Identity { universe: 5 }, 3).unwrap(), 3.0);
    assert!(uncertainty(UncertaintyMapping::NormalizedSetSize { universe: 1 }, 1).is_err());

    let decay = WeightRule::ExpDecay { gamma: 10.0 };
    assert_eq!(weight(decay, 0.0, None).unwrap(), 1.0);
    // e^-10 = 4.539992976248485e-5
    assert!((weight(decay, 1.0, None).unwrap() - 4.539_992_976_248_485e-5).abs() < 1e-17);
    assert_eq!(weight(WeightRule::RelativeSoftmax, 0.4, Some(0.4)).unwrap(), 0.5);
    // 1 / (1 + e^-1) = 0.7310585786300049
    assert!((weight(WeightRule::RelativeSoftmax, 0.0, Some(1.0)).unwrap() - 0.731_058_578_630_004_9).abs() < 1e-15);
    assert_eq!(weight(WeightRule::HardZero, 0.0, None).unwrap(), 1.0);
    assert_eq!(weight(WeightRule::HardZero, 0.01, None).unwrap(), 0.0);
    assert!(weight(WeightRule::RelativeSoftmax, 0.0, None).is_err());

    assert_eq!(heuristic_uncertainty(HeuristicKind::Msp, &[1.0, 0.0, 0.0]).unwrap(), 0.0);
    assert!((heuristic_uncertainty(HeuristicKind::Entropy, &[0.25; 4]).unwrap() - 1.0).abs() < 1e-12);
    // -(0.7 ln 0.7 + 0.2 ln 0.2 + 0.1 ln 0.1) / ln 3, high-precision value
    let e = heuristic_uncertainty(HeuristicKind::Entropy, &[0.7, 0.2, 0.1]).unwrap();
    assert!((e - 0.729_846_699_162_097_5).abs() < 1e-12, "{e}");
    assert!(heuristic_uncertainty(HeuristicKind::Msp, &[0.5, 0.6]).is_err());
}

proptest! {
    #[test]
    fn exp_decay_strictly_decreasing(gamma in 0.01f64..50.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        prop_assume!((a - b).abs() > 1e-9);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let r = WeightRule::ExpDecay { gamma };
        let (wl, wh) = (weight(r, lo, None).unwrap(), weight(r, hi, None).unwrap());
        prop_assume!(wh > 0.0);
        prop_assert!(wl > wh);
    }

    #[test]
    fn hard_argmax_agrees_with_relative_softmax(ui in 0.0f64..10.0, ur in 0.0f64..10.0) {
        prop_assume!(ui != ur);
        let soft = weight(WeightRule::RelativeSoftmax, ui, Some(ur)).unwrap();
        let hard = weight(WeightRule::HardArgmax, ui, Some(ur)).unwrap();
        prop_assert_eq!(hard == 1.0, soft > 0.5);
    }

    #[test]
    fn relative_softmax_symmetric(ui in 0.0f64..10.0, ur in 0.0f64..10.0) {
        let a = weight(WeightRule::RelativeSoftmax, ui, Some(ur)).unwrap();
        let b = weight(WeightRule::RelativeSoftmax, ur, Some(ui)).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    // e^(-gamma u) < 1e-9 needs gamma u > 20.73, so u > 0.02 needs gamma >= 1037
    fn hard_zero_is_limit_of_decay(k in 2usize..200, i in 0usize..200, gamma in 1037.0f64..5000.0) {
        let u = (i % k) as f64 / (k - 1) as f64;
        prop_assume!(u > 0.02);
        let d = weight(WeightRule::ExpDecay { gamma }, u, None).unwrap();
        prop_assert!((d - weight(WeightRule::HardZero, u, None).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn all_weights_in_unit_interval(u in 0.0f64..1e6, v in 0.0f64..1e6, gamma in 1e-6f64..1e3) {
        for rule in [WeightRule::ExpDecay { gamma }, WeightRule::HardZero, WeightRule::RelativeSoftmax, WeightRule::HardArgmax] {
            let w = weight(rule, u, Some(v)).unwrap();
            prop_assert!((0.0..=1.0).contains(&w));
        }
    }
}

use isskit::smallgain::{Boundary, GainOperator};
use isskit::{ComparisonFn, KLFn, Kind};
use proptest::prelude::*;

fn kinf() -> impl Strategy<Value = ComparisonFn> {
    prop_oneof![
        (0.01f64..100.0).prop_map(|c| ComparisonFn::linear(c).unwrap()),
        (0.01f64..10.0, 0.2f64..5.0).prop_map(|(c, p)| ComparisonFn::power(c, p).unwrap()),
        (0.01f64..10.0).prop_map(|c| ComparisonFn::linear(c).unwrap().id_plus().unwrap()),
    ]
}

fn k_any() -> impl Strategy<Value = ComparisonFn> {
    prop_oneof![kinf(), (0.1f64..10.0).prop_map(|c| ComparisonFn::saturation(c).unwrap())]
}

proptest! {
    #[test]
    fn inversion_round_trips(g in kinf(), s in 1e-4f64..1e4) {
        let y = g.value(s);
        let back = g.invert(y, 1e-14).unwrap();
        prop_assert!((back - s).abs() <= 1e-8 * s, "{back} vs {s}");
    }

    #[test]
    fn composition_is_strictly_increasing(f in k_any(), g in k_any(), a in 1e-3f64..1e3, b in 1e-3f64..1e3) {
        prop_assume!((a - b).abs() > 1e-9 * a.max(b));
        let h = f.compose(&g).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(h.value(lo) < h.value(hi));
        prop_assert_eq!(h.value(0.0), 0.0);
        if f.kind() == Kind::Kinf && g.kind() == Kind::Kinf {
            prop_assert_eq!(h.kind(), Kind::Kinf);
        }
    }

    #[test]
    fn inverse_composes_to_identity(g in kinf(), s in 1e-3f64..1e3) {
        let inv = g.inverse().unwrap();
        let r = inv.compose(&g).unwrap().value(s);
        prop_assert!((r - s).abs() <= 1e-7 * s);
    }

    #[test]
    fn kl_decreases_in_time(c in 0.1f64..5.0, rate in 0.01f64..3.0, r in 1e-3f64..1e3, t in 0.0f64..50.0, dt in 1e-3f64..10.0) {
        let b = KLFn::exponential(c, rate).unwrap();
        prop_assert!(b.value(r, t + dt) < b.value(r, t));
        prop_assert!(b.value(r * 1.5, t) > b.value(r, t));
    }

    #[test]
    fn gain_operator_is_monotone(
        c in 0.01f64..3.0,
        periodic in any::<bool>(),
        s in proptest::collection::vec(0.0f64..100.0, 12),
        bump in proptest::collection::vec(0.0f64..10.0, 12),
    ) {
        let b = if periodic { Boundary::Periodic } else { Boundary::Zero };
        let op = GainOperator::line(12, &ComparisonFn::linear(c).unwrap(), b).unwrap();
        let t: Vec<f64> = s.iter().zip(&bump).map(|(a, d)| a + d).collect();
        let (gs, gt) = (op.apply(&s).unwrap(), op.apply(&t).unwrap());
        for (x, y) in gs.iter().zip(&gt) {
            prop_assert!(x <= y);
        }
        // max-type: Γ(s)ᵢ = c·max over neighbors, checked directly
        for i in 0..12 {
            let nb = |j: isize| -> f64 {
                if (0..12).contains(&j) { s[j as usize] } else if periodic { s[j.rem_euclid(12) as usize] } else { 0.0 }
            };
            let want = c * nb(i as isize - 1).max(nb(i as isize + 1));
            prop_assert!((gs[i] - want).abs() <= 1e-12 * want.max(1.0));
        }
    }
}

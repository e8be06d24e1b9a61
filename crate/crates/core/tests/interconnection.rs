use isskit::builtins::{bernoulli_counterexample, bernoulli_escape_time, reference_gains, two_system_gains, SystemSpec};
use isskit::probe::{check_forward_completeness, check_iss_estimate};
use isskit::smallgain::{check_sgc_2, default_r_grid};
use isskit::{integrate, ComparisonFn, InputSignal, IntegrationOptions, SamplingBudget, Verdict};

fn pair(c12: f64, c21: f64) -> SystemSpec {
    let mut s = SystemSpec::builtin("two_system_pair");
    if let SystemSpec::Builtin { params, .. } = &mut s {
        params.insert("c12".into(), c12);
        params.insert("c21".into(), c21);
    }
    s
}

#[test]
fn verified_small_gain_pair_passes_trajectory_iss_check() {
    let rho = ComparisonFn::linear(0.2).unwrap();
    for (c12, c21) in [(0.5, 0.5), (0.3, 0.9), (0.7, 0.2)] {
        let g = two_system_gains(c12, c21).unwrap();
        let v = check_sgc_2(&g, &rho, &default_r_grid()).unwrap();
        assert!(v.holds(), "({c12}, {c21})");
        let spec = pair(c12, c21);
        let sys = isskit::builtins::system(&spec).unwrap();
        let est = reference_gains(&spec).unwrap().estimate;
        let budget = SamplingBudget {
            samples: 300,
            horizon: 30.0,
            ..SamplingBudget::default()
        };
        let rep = check_iss_estimate(&sys, &est, &budget).unwrap();
        assert_eq!(rep.verdict, Verdict::NoCounterexample, "({c12}, {c21}): {}", rep.summary);
    }
}

#[test]
fn bernoulli_coupling_escapes() {
    let sys = bernoulli_counterexample();
    let budget = SamplingBudget {
        samples: 200,
        horizon: 10.0,
        ..SamplingBudget::default()
    };
    let rep = check_forward_completeness(&sys, &budget).unwrap();
    assert_eq!(rep.verdict, Verdict::Falsified);
    for x in [1.5, 2.0, 3.0, 5.0] {
        let tr = integrate(&sys, &[x, x], &InputSignal::zero(1), 5.0, &IntegrationOptions::default()).unwrap();
        let oracle = bernoulli_escape_time(x, x).unwrap();
        let te = tr.escaped().expect("escapes");
        assert!((te - oracle).abs() <= 1e-3 * oracle, "x = {x}: {te} vs {oracle}");
    }
}

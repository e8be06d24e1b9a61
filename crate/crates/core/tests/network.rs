use isskit::builtins::{line_network, line_network_certificate};
use isskit::smallgain::{
    certify_network, check_composite_sandwich, composite_lyapunov, composite_trace, Boundary, DecayPath, SynthesisOptions,
};
use isskit::{integrate, ComparisonFn, InputSignal, IntegrationOptions, SamplingBudget, Verdict};

fn profile(n: usize) -> Vec<f64> {
    (0..n).map(|i| (-(i as f64)).exp()).collect()
}

fn sup_trace(n: usize, c: f64, horizon: f64) -> Vec<(f64, f64)> {
    let net = line_network(n, c, Boundary::Zero).unwrap();
    let tr = integrate(&net.system(), &profile(n), &InputSignal::zero(n), horizon, &IntegrationOptions::default()).unwrap();
    let path = DecayPath::identity(n, ComparisonFn::linear(0.25).unwrap());
    composite_trace(&line_network_certificate(c).unwrap().v, &path, &tr, 1).unwrap()
}

#[test]
fn truncation_doubling_changes_composite_trace_below_1e6() {
    let horizon = 10.0;
    let a = sup_trace(50, 0.4, horizon);
    let net = line_network(100, 0.4, Boundary::Zero).unwrap();
    let tr = integrate(&net.system(), &profile(100), &InputSignal::zero(100), horizon, &IntegrationOptions::default()).unwrap();
    let path = DecayPath::identity(100, ComparisonFn::linear(0.25).unwrap());
    let cert = line_network_certificate(0.4).unwrap();
    let mut x = vec![0.0; 100];
    let worst = a
        .iter()
        .map(|&(t, v)| {
            tr.interpolate_into(t, &mut x);
            (composite_lyapunov(&cert.v, &path, &x, 1).unwrap() - v).abs()
        })
        .fold(0.0, f64::max);
    assert!(worst < 1e-6, "max |V_50 − V_100| = {worst:e}");
}

#[test]
fn composite_obeys_brute_force_decay_bound() {
    // D⁺|xᵢ| ≤ −|xᵢ| + 0.4·sup|x|, so sup|x(t)| ≤ e^{−0.6t}·sup|x(0)|
    let tr = sup_trace(50, 0.4, 10.0);
    let v0 = tr[0].1;
    for &(t, v) in &tr {
        assert!(v <= (-0.6 * t).exp() * v0 * (1.0 + 1e-7) + 1e-10, "t = {t}: {v} > {}", (-0.6 * t).exp() * v0);
    }
    for w in tr.windows(2) {
        assert!(w[1].1 <= w[0].1 * (1.0 + 1e-8) + 1e-12, "increase at t = {}", w[1].0);
    }
}

#[test]
fn composite_sandwich_holds_on_1000_states() {
    let cert = line_network_certificate(0.4).unwrap();
    let path = DecayPath::identity(50, ComparisonFn::linear(0.25).unwrap());
    let budget = SamplingBudget {
        samples: 1000,
        ..SamplingBudget::default()
    };
    let rep = check_composite_sandwich(&cert, &path, 1, &budget).unwrap();
    assert_eq!(rep.verdict, Verdict::NoCounterexample, "{}", rep.summary);
    assert_eq!(rep.samples_used, 1000);
}

#[test]
fn strong_coupling_is_a_hypothesis_violation() {
    let net = line_network(50, 1.2, Boundary::Zero).unwrap();
    let cert = line_network_certificate(1.2).unwrap();
    let budget = SamplingBudget {
        samples: 50,
        horizon: 10.0,
        ..SamplingBudget::default()
    };
    let rep = certify_network(&net, &cert, &ComparisonFn::linear(0.25).unwrap(), &SynthesisOptions::default(), &budget).unwrap();
    assert_eq!(rep.verdict(), Verdict::HypothesisViolation);
    assert!(rep.path.is_none());
    assert!(rep.preconditions.iter().any(|p| !p.holds));
}

#[test]
fn periodic_ring_is_certified() {
    let net = line_network(40, 0.4, Boundary::Periodic).unwrap();
    let cert = line_network_certificate(0.4).unwrap();
    let budget = SamplingBudget {
        samples: 50,
        horizon: 10.0,
        ..SamplingBudget::default()
    };
    let rep = certify_network(&net, &cert, &ComparisonFn::linear(0.25).unwrap(), &SynthesisOptions::default(), &budget).unwrap();
    assert_eq!(rep.verdict(), Verdict::NoCounterexample, "{}", rep.report.summary);
    assert!((rep.decay_rate.unwrap() - 0.1).abs() < 1e-6);
}

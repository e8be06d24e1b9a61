//! Certify the truncated line network ẋᵢ = −xᵢ + c·max(|xᵢ₋₁|, |xᵢ₊₁|) + uᵢ
//! through a synthesized decay path and the composite Lyapunov function.

use isskit::builtins::{line_network, line_network_certificate};
use isskit::smallgain::{certify_network, composite_trace, Boundary, SynthesisOptions};
use isskit::{integrate, ComparisonFn, InputSignal, IntegrationOptions, SamplingBudget};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let budget = SamplingBudget {
        samples: 100,
        horizon: 20.0,
        ..SamplingBudget::default()
    };
    let rho = ComparisonFn::linear(0.25)?;
    for c in [0.4, 1.2] {
        let net = line_network(50, c, Boundary::Zero)?;
        let cert = line_network_certificate(c)?;
        let rep = certify_network(&net, &cert, &rho, &SynthesisOptions::default(), &budget)?;
        println!("c = {c}: {:?}: {}", rep.verdict(), rep.report.summary);
        let Some(path) = rep.path else { continue };

        let x0: Vec<f64> = (0..50).map(|i| (-(i as f64)).exp()).collect();
        let tr = integrate(&net.system(), &x0, &InputSignal::zero(50), 10.0, &IntegrationOptions::default())?;
        let v = composite_trace(&cert.v, &path, &tr, 1)?;
        for (t, vt) in v.iter().step_by(v.len() / 5) {
            println!("   t = {t:6.3}  V = {vt:.6e}");
        }
    }
    Ok(())
}

//! Check a dissipative ISS Lyapunov certificate, fit β and γ from it and
//! probe the fitted estimate.

use isskit::builtins::{linear_decay, linear_decay_certificate};
use isskit::lyapunov::{check_dissipative, default_h_seq, dini_derivative, fit_iss_estimate, LyapunovFn};
use isskit::{probe, InputSignal, SamplingBudget};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sys = linear_decay(1.0);
    let cert = linear_decay_certificate()?;
    let budget = SamplingBudget {
        samples: 300,
        horizon: 20.0,
        ..SamplingBudget::default()
    };

    let rep = check_dissipative(&sys, &cert, &budget)?;
    println!("sandwich:    {}", rep.sandwich.summary);
    println!("dissipation: {}", rep.decay.summary);

    let v = LyapunovFn::Quadratic { c: 0.5 };
    let (x, u) = ([0.7], [0.2]);
    let analytic = v.lie_derivative(&sys, &x, &u).expect("smooth");
    let dini = dini_derivative(&sys, &v, &x, &InputSignal::constant(u.to_vec()), &default_h_seq())?;
    println!("∇V·f = {analytic:.10}, Dini estimate = {:.10}", dini.value);

    let est = fit_iss_estimate(&cert)?;
    println!("fitted estimate: {}", probe::check_iss_estimate(&sys, &est, &budget)?.summary);
    Ok(())
}

//! Probe an ISS estimate for ẋ = −x + u, tighten the gain until it is
//! falsified, and replay the witness.

use isskit::builtins::linear_decay;
use isskit::probe::{self, TrajectoryCheck};
use isskit::{ComparisonFn, IssEstimate, KLFn, SamplingBudget};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sys = linear_decay(1.0);
    let budget = SamplingBudget {
        samples: 400,
        ..SamplingBudget::default()
    };
    let beta = KLFn::exponential(1.0, 1.0)?;

    let good = IssEstimate {
        beta: beta.clone(),
        gamma: ComparisonFn::identity(),
    };
    println!("γ = id:  {}", probe::check_iss_estimate(&sys, &good, &budget)?.summary);

    let tight = IssEstimate {
        beta: beta.clone(),
        gamma: ComparisonFn::linear(0.5)?,
    };
    let rep = probe::check_iss_estimate(&sys, &tight, &budget)?;
    println!("γ = id/2: {}", rep.summary);
    if let Some(w) = &rep.witness {
        let check = TrajectoryCheck::Iss {
            beta,
            gamma: tight.gamma.clone(),
        };
        let r = probe::replay(&sys, &check, w, budget.abs_tol, budget.rel_tol, &budget.integration)?;
        println!("replay: confirmed = {}, margin {:.3e}", r.confirmed, r.margin);
    }

    let (ag, pts) = probe::asymptotic_gain_samples(&sys, &[0.1, 1.0, 10.0], &budget)?;
    println!("asymptotic gain samples {pts:?}; γ̂(5) = {:.4}", ag.value(5.0));
    Ok(())
}

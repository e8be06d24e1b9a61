//! Small-gain condition for two coupled linear systems, then an ISS probe
//! of the coupled system.

use isskit::builtins::{reference_gains, two_system_gains, SystemSpec};
use isskit::smallgain::{check_sgc_2, default_r_grid, operator_form_samples, sgc_operator_form};
use isskit::{probe, ComparisonFn, SamplingBudget};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rho = ComparisonFn::linear(0.2)?;
    for (c12, c21) in [(0.5, 0.5), (0.9, 1.0)] {
        let g = two_system_gains(c12, c21)?;
        let v = check_sgc_2(&g, &rho, &default_r_grid())?;
        let o = sgc_operator_form(&g, &rho, &operator_form_samples(&g, &rho));
        println!(
            "c12 = {c12}, c21 = {c21}: grid {} exact {:?} operator form {} first violation {:?}",
            v.holds_on_grid, v.exact, o.holds, v.violation_r
        );
    }

    let mut spec = SystemSpec::builtin("two_system_pair");
    if let SystemSpec::Builtin { params, .. } = &mut spec {
        params.insert("c12".into(), 0.5);
        params.insert("c21".into(), 0.5);
    }
    let sys = isskit::builtins::system(&spec)?;
    let est = reference_gains(&spec)?.estimate;
    let budget = SamplingBudget {
        samples: 300,
        horizon: 20.0,
        ..SamplingBudget::default()
    };
    println!("coupled ISS probe: {}", probe::check_iss_estimate(&sys, &est, &budget)?.summary);
    Ok(())
}

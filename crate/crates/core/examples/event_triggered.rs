//! Event-triggered control of the integrator ẋ = u with k(x) = −x.

use isskit::builtins::etc_integrator_plant;
use isskit::etc::{integrator_interevent_time, min_interevent_over_set, simulate_etc, verify_decay, EtcTolerance};
use isskit::IntegrationOptions;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let opts = IntegrationOptions::default();
    for sigma in [0.25, 0.05] {
        let setup = etc_integrator_plant(sigma)?;
        let trace = simulate_etc(&setup, &[4.0], 5.0, &opts)?;
        let v = verify_decay(&trace, &setup, EtcTolerance::default(), &opts)?;
        println!(
            "σ = {sigma}: {} events, min inter-event {:.9} (closed form {:.9}), decay {:?}, trigger {:?}",
            trace.events.len(),
            trace.inter_event_min,
            integrator_interevent_time(sigma),
            v.decay.verdict,
            v.trigger.verdict,
        );
        let s = min_interevent_over_set(&setup, 10.0, 100, 5.0, 0, &opts)?;
        println!("   over ball(10): τ̂ = {:.9}, zeno {}", s.tau_hat, s.zeno_flag);
    }
    Ok(())
}

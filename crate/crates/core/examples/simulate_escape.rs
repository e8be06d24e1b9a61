//! Integrate the Bernoulli counterexample until it escapes and compare the
//! escape time with the closed form.

use isskit::builtins::{bernoulli_counterexample, bernoulli_escape_time};
use isskit::{integrate, InputSignal, IntegrationOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sys = bernoulli_counterexample();
    for x0 in [[3.0, 3.0], [2.0, 2.0], [1.0, 1.0]] {
        let tr = integrate(&sys, &x0, &InputSignal::zero(1), 5.0, &IntegrationOptions::default())?;
        match (tr.escaped(), bernoulli_escape_time(x0[0], x0[1])) {
            (Some(t), Some(oracle)) => {
                println!("x0 = {x0:?}: escaped at {t:.9}, closed form {oracle:.9}, rel err {:.2e}", (t - oracle).abs() / oracle)
            }
            (None, None) => println!("x0 = {x0:?}: complete, |x(5)| = {:.3e}", tr.final_state()[0].abs()),
            (got, want) => println!("x0 = {x0:?}: unexpected {got:?} vs {want:?}"),
        }
    }

    let mut csv = Vec::new();
    integrate(&sys, &[1.0, 1.0], &InputSignal::zero(1), 1.0, &IntegrationOptions::default())?.write_csv(&mut csv)?;
    let text = String::from_utf8(csv)?;
    println!("{}", text.lines().take(3).collect::<Vec<_>>().join("\n"));
    Ok(())
}

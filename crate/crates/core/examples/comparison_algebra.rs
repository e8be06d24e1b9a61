//! Build, compose and invert comparison functions.

use isskit::{ComparisonFn, KLFn};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = ComparisonFn::power(2.0, 3.0)?;
    let sat = ComparisonFn::saturation(1.5)?;
    let h = g.compose(&sat)?;
    println!("g = 2s^3 is {:?}, sat is {:?}, g∘sat is {:?}", g.kind(), sat.kind(), h.kind());

    for s in [0.01, 1.0, 100.0] {
        let y = g.value(s);
        let back = g.invert(y, 1e-12)?;
        println!("g({s}) = {y:.6e}, g⁻¹(g(s)) = {back:.12}");
    }

    let id_plus = ComparisonFn::linear(0.25)?.id_plus()?;
    println!("(id + 0.25·id)(2) = {}", id_plus.value(2.0));

    // saturated gains are not invertible beyond their supremum
    println!("sup sat = {:?}; invert(2.0) -> {:?}", sat.sup(), sat.invert(2.0, 1e-12).err());

    let beta = KLFn::exponential(1.0, 0.5)?;
    println!("β(2, t) = 2e^(-t/2): β(2, 1) = {:.6}", beta.value(2.0, 1.0));
    println!("{}", serde_json::to_string(&g)?);
    Ok(())
}

//! Stationary defects of the Itô and Stratonovich zero-mass models under
//! position-dependent noise. Both vanish for constant b, and Δ₁ = 2Δ₂ otherwise.

use entroprod::mechanics::zero_mass_discrepancy;

fn main() -> entroprod::Result<()> {
    let xs: Vec<f64> = (-20..=20).map(|i| 0.1 * i as f64).collect();
    let constant = zero_mass_discrepancy(|_| [1.3, 0.0, 0.0], 1.0, 2.0, &xs)?;
    let peak = constant.delta1.iter().chain(&constant.delta2).fold(0.0f64, |m, d| m.max(d.abs()));
    println!("constant b: max |delta| {peak:.2e}");
    let varying = zero_mass_discrepancy(|x| [1.0 + 0.2 * x.sin(), 0.2 * x.cos(), -0.2 * x.sin()], 1.5, 0.7, &xs)?;
    println!("varying b:  max |delta1 - 2 delta2| {:.2e}", varying.max_gap);
    for i in (0..xs.len()).step_by(8) {
        println!("  x = {:+.1}  delta1 {:+.5}  delta2 {:+.5}", xs[i], varying.delta1[i], varying.delta2[i]);
    }
    Ok(())
}

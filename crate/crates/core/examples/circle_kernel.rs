//! Heat kernel on the circle in both representations, checked against its
//! variance and entropy bounds.

use std::sync::Arc;

use entroprod::diffusion::{circle_entropy_bounds, circle_kernel, circle_variance, KernelSpec, Representation};
use entroprod::grid::{entropy, DomainSpec};

fn main() -> entroprod::Result<()> {
    let d = 1.0;
    let dom = Arc::new(DomainSpec::circle(512)?);
    for t in [0.05, 0.2, 0.5, 1.0, 3.0] {
        let fourier = circle_kernel(0.3, t, d, Representation::Fourier)?;
        let folded = circle_kernel(0.3, t, d, Representation::Folded)?;
        let f = KernelSpec::circle(d, t).density(dom.clone())?.normalize()?;
        let s = entropy(&f)?;
        let b = circle_entropy_bounds(t, d)?;
        println!(
            "t = {t:<4}  k(0.3) {fourier:.10} / {folded:.10}  var {:.5}  S = {s:.5} <= {:.5}",
            circle_variance(t, d)?,
            b.min()
        );
    }
    Ok(())
}

//! The Boltzmann density of a damped oscillator is stationary exactly when
//! damping and noise satisfy the fluctuation-dissipation relation.

use std::sync::Arc;

use entroprod::fpe::{stationarity_residual, Boundary, FpeForm, FpeProblem};
use entroprod::grid::DomainSpec;
use entroprod::mechanics::{boltzmann_density, fdt_certificate, HamiltonianSystem};

fn main() -> entroprod::Result<()> {
    let (beta, b0) = (1.0, 2f64.sqrt());
    let sys = HamiltonianSystem::oscillator(1.0, 1.0, 0.5 * beta * b0 * b0, b0, beta)?;
    println!("{:?}", fdt_certificate(&sys, 1e-9));
    let dom = Arc::new(DomainSpec::symmetric_box(2, 8.0, 256)?);
    let f = boltzmann_density(&sys, dom.clone())?;

    for scale in [1.0, 1.05, 1.2, 1.5] {
        let s = sys.with_damping_scaled(scale);
        let p = FpeProblem::new(dom.clone(), s.phase_sde()?, Boundary::Decay, f.clone())?;
        println!("damping x{scale:<4}  FDT gap {:.3}  residual {:.3e}", s.fdt_gap(), stationarity_residual(&p, &f, FpeForm::Ito)?);
    }
    Ok(())
}

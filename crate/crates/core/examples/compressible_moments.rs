//! Moment propagation through a compressible flow with diffusivity linear in x.

use std::sync::Arc;

use entroprod::bounds::{compressible_mean_closed_form, propagate_moments};
use entroprod::fpe::compressible_problem;
use entroprod::grid::{gaussian_density, DomainSpec};
use nalgebra::{DMatrix, DVector};

fn main() -> entroprod::Result<()> {
    let (d0, kappa0, u0) = (0.1, 0.1, 0.5);
    let dom = Arc::new(DomainSpec::euclidean_box(&[(-8.0, 16.0, 480)])?);
    let f0 = gaussian_density(dom.clone(), &DVector::zeros(1), &DMatrix::from_element(1, 1, 0.25))?;
    let p = compressible_problem(d0, kappa0, u0, dom, f0)?;
    let traj = propagate_moments(&p, 1.0, p.suggested_dt(0.9))?;
    let stride = (traj.times.len() / 5).max(1);
    for (t, m) in traj.times.iter().zip(&traj.moments).step_by(stride) {
        let exact = compressible_mean_closed_form(d0, kappa0, u0, 0.0, *t);
        println!("t = {t:.3}  mean {:.7}  closed form {exact:.7}  var {:.5}", m.mean[0], m.covariance[(0, 0)]);
    }
    Ok(())
}

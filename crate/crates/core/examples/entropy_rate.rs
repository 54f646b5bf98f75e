//! Entropy production rate of a state-dependent diffusion: drift and
//! diffusion parts against a finite difference of the Fokker-Planck entropy.

use std::sync::Arc;

use entroprod::bounds::entropy_rate_theorem1;
use entroprod::fpe::{solve, Boundary, FpeProblem, SolveOptions};
use entroprod::grid::{entropy, gaussian_density, DomainSpec};
use entroprod::sde::{Interpretation, SdeModel};
use nalgebra::{DMatrix, DVector};

fn main() -> entroprod::Result<()> {
    let dom = Arc::new(DomainSpec::symmetric_box(1, 10.0, 400)?);
    let model = SdeModel::new(
        1,
        1,
        Interpretation::Ito,
        |x, _, o| o[0] = -0.5 * x[0],
        |x, _, o| o[0] = (1.0 + 0.25 * x[0] * x[0]).sqrt(),
    )?;
    let f0 = gaussian_density(dom.clone(), &DVector::zeros(1), &DMatrix::from_element(1, 1, 0.5))?;
    let p = FpeProblem::new(dom, model.clone(), Boundary::Decay, f0)?;
    let dt = p.suggested_dt(0.9);
    let sol = solve(&p, 1.0, &SolveOptions::new(dt))?;
    let (t0, f) = &sol.snapshots[0];
    let later = solve(&p.with_initial(f.clone())?, dt, &SolveOptions::new(dt))?;
    let fd = (entropy(later.last())? - entropy(f)?) / dt;
    let r = entropy_rate_theorem1(f, &model, *t0)?;
    println!("drift {:.5}  diffusion {:.5}  total {:.5}  one-step FD {fd:.5}", r.drift, r.diffusion, r.total());
    let r = entropy_rate_theorem1(sol.last(), &model, 1.0)?;
    println!("t = 1: total {:.5}", r.total());
    Ok(())
}

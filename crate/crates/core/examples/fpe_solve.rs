//! Free Brownian motion on a 1-d grid: the Fokker-Planck solution tracks the
//! closed-form entropy ½log(2πe(σ₀² + 2Dt)).

use std::f64::consts::{E, PI};
use std::sync::Arc;

use entroprod::fpe::{solve, Boundary, FpeProblem, SolveOptions};
use entroprod::grid::{entropy, gaussian_density, DomainSpec};
use entroprod::sde::SdeModel;
use nalgebra::{DMatrix, DVector};

fn main() -> entroprod::Result<()> {
    let d: f64 = 0.5;
    let dom = Arc::new(DomainSpec::symmetric_box(1, 12.0, 480)?);
    let f0 = gaussian_density(dom.clone(), &DVector::zeros(1), &DMatrix::identity(1, 1))?;
    let model = SdeModel::linear(DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, (2.0 * d).sqrt()))?;
    let p = FpeProblem::new(dom, model, Boundary::Decay, f0)?;

    let dt = p.suggested_dt(0.9);
    let sol = solve(&p, 2.0, &SolveOptions::new(dt).record_every((0.25 / dt) as usize))?;
    println!("dt = {dt:.2e}, {} steps", sol.steps);
    for (t, f) in &sol.snapshots {
        let exact = 0.5 * (2.0 * PI * E * (1.0 + 2.0 * d * t)).ln();
        println!("t = {t:.3}  S = {:.6}  exact {exact:.6}", entropy(f)?);
    }
    Ok(())
}

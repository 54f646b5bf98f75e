//! Cramér-Rao bound and its cascade to the entropy production rate for a
//! Gaussian and for a bimodal mixture.

use std::sync::Arc;

use entroprod::bounds::{crb_cascade, crb_certificate, entropy_rate_constant_d};
use entroprod::grid::{fisher_information, moments, DomainSpec, GridDensity};
use nalgebra::DMatrix;

fn report(name: &str, f: &GridDensity, dmat: &DMatrix<f64>) -> entroprod::Result<()> {
    let sigma = moments(f)?.covariance;
    let fisher = fisher_information(f)?;
    println!("{name}: rate ½tr[DF] = {:.5}", entropy_rate_constant_d(dmat, &fisher)?);
    let crb = crb_certificate(&sigma, &fisher)?;
    println!("  {} {} slack {:.3e}", if crb.pass { "PASS" } else { "FAIL" }, crb.id, crb.slack);
    for c in crb_cascade(dmat, &sigma, &fisher)? {
        println!("  {} {}: {:.5} >= {:.5}", if c.pass { "PASS" } else { "FAIL" }, c.id, c.lhs, c.rhs);
    }
    Ok(())
}

fn main() -> entroprod::Result<()> {
    let dom = Arc::new(DomainSpec::symmetric_box(2, 9.0, 160)?);
    let dmat = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
    let gauss = GridDensity::from_fn(dom.clone(), |x| (-0.5 * (x[0] * x[0] + 2.0 * x[1] * x[1])).exp())?.normalize()?;
    let bumps = GridDensity::from_fn(dom, |x| {
        let g = |c: f64| (-0.5 * ((x[0] - c).powi(2) + x[1] * x[1]) / 0.6).exp();
        g(-2.0) + g(2.0)
    })?
    .normalize()?;
    report("gaussian", &gauss, &dmat)?;
    report("mixture", &bumps, &dmat)
}

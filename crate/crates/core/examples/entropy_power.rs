//! Entropy power and Fisher convolution inequalities: equality for Gaussians,
//! strict for a bimodal mixture.

use std::sync::Arc;

use entroprod::bounds::{epi_certificate, fisher_conv_certificate};
use entroprod::grid::{DomainSpec, GridDensity};
use nalgebra::DMatrix;

fn main() -> entroprod::Result<()> {
    let dom = Arc::new(DomainSpec::symmetric_box(1, 14.0, 1120)?);
    let gauss = |var: f64| GridDensity::from_fn(dom.clone(), move |x| (-0.5 * x[0] * x[0] / var).exp())?.normalize();
    let mixture = GridDensity::from_fn(dom.clone(), |x| {
        (-0.5 * (x[0] - 2.0).powi(2) / 0.3).exp() + (-0.5 * (x[0] + 2.0).powi(2) / 0.3).exp()
    })?
    .normalize()?;

    let (g1, g2) = (gauss(1.0)?, gauss(2.0)?);
    for (name, c) in [
        ("gaussians", epi_certificate(&g1, &g2)?),
        ("mixture", epi_certificate(&g1, &mixture)?),
        ("gaussians", fisher_conv_certificate(&g1, &g2, &DMatrix::from_element(1, 1, 1.0 / 3.0))?),
        ("mixture", fisher_conv_certificate(&g1, &mixture, &DMatrix::from_element(1, 1, 0.5))?),
    ] {
        println!("{name:<10} {:<48} lhs {:.5} rhs {:.5} slack {:.2e}", c.id, c.lhs, c.rhs, c.slack);
    }
    Ok(())
}

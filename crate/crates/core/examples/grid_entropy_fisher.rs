//! Entropy, moments and Fisher information of a correlated Gaussian on a 2-d grid.

use std::sync::Arc;

use entroprod::grid::{entropy, fisher_information, gaussian_density, gaussian_entropy_closed_form, moments, DomainSpec};
use nalgebra::{DMatrix, DVector};

fn main() -> entroprod::Result<()> {
    let dom = Arc::new(DomainSpec::symmetric_box(2, 8.0, 128)?);
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.8]);
    let f = gaussian_density(dom, &DVector::zeros(2), &cov)?;

    println!("entropy        {:.6}", entropy(&f)?);
    println!("closed form    {:.6}", gaussian_entropy_closed_form(&cov)?);
    println!("grid covariance {:.4}", moments(&f)?.covariance);
    println!("Fisher matrix  {:.4}", fisher_information(&f)?);
    println!("Sigma^-1       {:.4}", cov.try_inverse().unwrap());
    Ok(())
}

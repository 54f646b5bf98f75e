//! de Bruijn identity dS/dt = ½tr[DF] along heat flow on the circle and on SO(3).

use std::sync::Arc;

use entroprod::diffusion::{debruijn_check, KernelSpec};
use entroprod::grid::DomainSpec;
use nalgebra::DMatrix;

fn main() -> entroprod::Result<()> {
    let times: Vec<f64> = (1..=5).map(|i| 0.2 * i as f64).collect();

    let circle = Arc::new(DomainSpec::circle(256)?);
    let alpha = KernelSpec::circle(1.0, 0.2).density(circle)?.normalize()?;
    let rep = debruijn_check(&alpha, &DMatrix::from_element(1, 1, 0.5), &[0.3], &times)?;
    for r in &rep.rows {
        println!("circle t = {:.1}  dS/dt {:.6}  ½tr[DF] {:.6}", r.t, r.dsdt_fd, r.half_tr_df);
    }

    let so3 = Arc::new(DomainSpec::so3_radial(256)?);
    let alpha = KernelSpec::so3(1.0, 0.1).density(so3)?.normalize()?;
    let rep = debruijn_check(&alpha, &(DMatrix::identity(3, 3) * 0.5), &[0.0; 3], &times)?;
    for r in &rep.rows {
        println!("SO(3)  t = {:.1}  dS/dt {:.6}  ½tr[DF] {:.6}", r.t, r.dsdt_fd, r.half_tr_df);
    }
    println!("all certificates pass: {}", rep.all_pass());
    Ok(())
}

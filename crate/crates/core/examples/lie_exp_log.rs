//! Exponential and logarithm on SE(2) and SO(3), with composition and inverse.

use entroprod::lie::{exp_map, log_map, rotation_angle, AlgebraVec, GroupElem};
use nalgebra::Vector3;

fn main() -> entroprod::Result<()> {
    let v = AlgebraVec::Se2(Vector3::new(1.0, -0.5, 2.0));
    let g = exp_map(&v);
    println!("exp{v:?} = {g:?}");
    println!("log back  = {:?}", log_map(&g)?);

    let w = AlgebraVec::So3(Vector3::new(0.3, -1.1, 2.4));
    let r = exp_map(&w);
    let GroupElem::So3(m) = r else { unreachable!() };
    println!("rotation angle {:.6} (|w| = {:.6})", rotation_angle(&m), Vector3::new(0.3, -1.1, 2.4).norm());
    println!("log back  = {:?}", log_map(&r)?);

    let h = GroupElem::se2(0.5, 0.0, 1.0);
    let gh = g.compose(&h)?;
    println!("g∘h = {gh:?}");
    println!("|(g∘h)∘h⁻¹ - g| = {:.2e}", gh.compose(&h.inverse())?.distance_matrix(&g)?);
    Ok(())
}

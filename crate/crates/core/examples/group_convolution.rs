//! Convolution of concentrated densities on SE(2) is not commutative,
//! while the entropy of either order obeys S(f₁ * f₂) >= max S(fᵢ).

use std::sync::Arc;

use entroprod::grid::{entropy, DomainSpec, GridDensity};
use entroprod::lie::group_convolve;

fn bump(dom: &Arc<DomainSpec>, x0: f64, y0: f64, th0: f64, s: f64) -> entroprod::Result<GridDensity> {
    GridDensity::from_fn(dom.clone(), |g| {
        let r2 = (g[0] - x0).powi(2) + (g[1] - y0).powi(2) + (g[2] - th0).powi(2);
        (-0.5 * r2 / (s * s)).exp()
    })?
    .normalize()
}

fn main() -> entroprod::Result<()> {
    let dom = Arc::new(DomainSpec::se2_box((-3.0, 3.0, 21), (-3.0, 3.0, 21), 24)?);
    let a = bump(&dom, 1.0, 0.0, 1.2, 0.5)?;
    let b = bump(&dom, 0.0, 1.0, 0.0, 0.5)?;
    let ab = group_convolve(&a, &b)?;
    let ba = group_convolve(&b, &a)?;
    println!("S(a) = {:.4}  S(b) = {:.4}", entropy(&a)?, entropy(&b)?);
    println!("S(a*b) = {:.4}  S(b*a) = {:.4}", entropy(&ab)?, entropy(&ba)?);
    println!("|a*b - b*a|_1 = {:.4}", ab.l1_distance(&ba)?);
    Ok(())
}

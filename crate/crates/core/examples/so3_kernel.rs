//! SO(3) heat kernel as a class function: normalization under the Haar
//! measure and agreement with a simulated ensemble of rotations.

use std::sync::Arc;

use entroprod::diffusion::{angle_histogram, KernelSpec, So3Diffusion};
use entroprod::grid::{entropy, DomainSpec};

fn main() -> entroprod::Result<()> {
    let (k, t, dt) = (1.0, 0.25, 0.002);
    let dom = Arc::new(DomainSpec::so3_radial(48)?);
    let kernel = KernelSpec::so3(k, t).density(dom.clone())?;
    println!("Haar integral of the kernel: {:.8}", kernel.integral());

    let rots = So3Diffusion::isotropic(k)?.simulate(50_000, (t / dt) as usize, dt, 5)?;
    let hist = angle_histogram(&rots, dom)?;
    let kernel = kernel.normalize()?;
    println!("entropy  kernel {:.4}  ensemble {:.4}", entropy(&kernel)?, entropy(&hist)?);
    println!("L1 distance {:.4}", hist.l1_distance(&kernel)?);
    Ok(())
}

//! Rotational Ornstein-Uhlenbeck velocity: β·cov(ω) relaxes to the identity.

use entroprod::diffusion::rotational_ou_model;
use entroprod::sde::{sample_moments, simulate, SimConfig};
use nalgebra::DMatrix;

fn main() -> entroprod::Result<()> {
    let beta = 2.0;
    let model = rotational_ou_model(beta, &DMatrix::identity(3, 3))?;
    let cfg = SimConfig::new(0.005, 1000, 40_000, 3).record_every(200);
    for snap in simulate(&model, |_, _, x| x.fill(0.0), &cfg)? {
        let c = sample_moments(&snap)?.covariance * beta;
        println!("t = {:.1}  diag {:.3} {:.3} {:.3}  off {:+.3}", snap.t, c[(0, 0)], c[(1, 1)], c[(2, 2)], c[(0, 1)]);
    }
    Ok(())
}

//! Kinematic cart on SE(2): Fokker-Planck solution against a particle ensemble.

use entroprod::diffusion::{cart_evolve, CartOptions, CartParams};

fn main() -> entroprod::Result<()> {
    let opts = CartOptions { t_end: 0.5, samples: 5, n_particles: 20_000, ..Default::default() };
    let run = cart_evolve(&CartParams::default(), &opts)?;
    println!("grid {} cells, operator gap Ito vs Stratonovich {:.2e}", run.domain.len(), run.operator_gap);
    for i in 0..run.times.len() {
        println!(
            "t = {:.2}  S = {:.4}  coarse {:.4} / ensemble {:.4}  L1 {:.3}  ½tr[DF] {:.4}",
            run.times[i], run.entropy[i], run.coarse_entropy[i], run.histogram_entropy[i], run.l1[i], run.sdot_trdf[i]
        );
    }
    Ok(())
}

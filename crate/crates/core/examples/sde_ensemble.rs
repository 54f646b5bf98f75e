//! Euler-Maruyama ensemble of a 2-d Ornstein-Uhlenbeck process relaxing to
//! its stationary covariance.

use entroprod::sde::{sample_moments, simulate, SdeModel, SimConfig};
use nalgebra::DMatrix;

fn main() -> entroprod::Result<()> {
    let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]);
    let b = DMatrix::identity(2, 2);
    let model = SdeModel::linear(a.clone(), b.clone())?;
    let cfg = SimConfig::new(0.01, 600, 50_000, 42).record_every(100);
    let snaps = simulate(&model, |_, _, x| x.fill(0.0), &cfg)?;

    for s in &snaps {
        let m = sample_moments(s)?;
        println!("t = {:.2}  cov = [{:.4} {:.4}; {:.4}]", s.t, m.covariance[(0, 0)], m.covariance[(0, 1)], m.covariance[(1, 1)]);
    }

    // A S + S Aᵀ + B Bᵀ = 0, solved as a linear system in vec(S).
    let n = 2;
    let eye = DMatrix::<f64>::identity(n, n);
    let lhs = eye.kronecker(&a) + a.kronecker(&eye);
    let rhs = -(&b * b.transpose());
    let vec = lhs.lu().solve(&DMatrix::from_column_slice(n * n, 1, rhs.as_slice())).unwrap();
    println!("Lyapunov      [{:.4} {:.4}; {:.4}]", vec[0], vec[2], vec[3]);
    Ok(())
}

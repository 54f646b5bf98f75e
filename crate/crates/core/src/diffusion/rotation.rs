use std::sync::Arc;

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{DomainKind, DomainSpec, GridDensity};
use crate::lie::{reorthonormalize, rotation_angle, so3_exp};
use crate::sde::{CounterRng, SdeModel};

/// Noninertial rotational Brownian motion ω dt = B₁ dw on SO(3), stepped
/// geometrically as R ← R·exp(hat(B₁ Δw)).
#[derive(Debug, Clone, PartialEq)]
pub struct So3Diffusion {
    pub b1: Matrix3<f64>,
}

/// B₁ = (2/β) B₀⁻ᵀ.
pub fn noninertial_rotation_model(beta: f64, b0: &Matrix3<f64>) -> Result<So3Diffusion> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("need β > 0, got {beta}")));
    }
    let inv = b0.try_inverse().ok_or(Error::SingularNoise)?;
    if b0.determinant().abs() < 1e-14 * b0.amax().powi(3).max(f64::MIN_POSITIVE) {
        return Err(Error::SingularNoise);
    }
    Ok(So3Diffusion { b1: inv.transpose() * (2.0 / beta) })
}

impl So3Diffusion {
    /// Isotropic diffusion with B₁B₁ᵀ = 2K·I.
    pub fn isotropic(k: f64) -> Result<Self> {
        if !(k >= 0.0) {
            return Err(Error::InvalidParameter(format!("need K ≥ 0, got {k}")));
        }
        Ok(Self { b1: Matrix3::identity() * (2.0 * k).sqrt() })
    }

    /// D = B₁B₁ᵀ in the body frame.
    pub fn diffusion(&self) -> DMatrix<f64> {
        let d = self.b1 * self.b1.transpose();
        DMatrix::from_iterator(3, 3, d.iter().copied())
    }

    /// Ensemble of `n` rotations started at the identity after `steps` steps of `dt`.
    pub fn simulate(&self, n: usize, steps: usize, dt: f64, seed: u64) -> Result<Vec<Matrix3<f64>>> {
        if !(dt > 0.0) || n == 0 {
            return Err(Error::InvalidParameter("need dt > 0 and at least one rotation".into()));
        }
        let sq = dt.sqrt();
        Ok((0..n)
            .into_par_iter()
            .map(|p| {
                let mut r = Matrix3::identity();
                for s in 0..steps {
                    let mut rng = CounterRng::new(seed, p as u64, s as u64);
                    let dw = Vector3::from_fn(|_, _| sq * Distribution::<f64>::sample(&StandardNormal, &mut rng));
                    r *= so3_exp(&(self.b1 * dw));
                    if s % 64 == 63 {
                        r = reorthonormalize(&r);
                    }
                }
                r
            })
            .collect())
    }
}

/// Histogram of rotation angles on the SO(3) angle grid.
pub fn angle_histogram(rots: &[Matrix3<f64>], domain: Arc<DomainSpec>) -> Result<GridDensity> {
    if domain.kind() != DomainKind::So3Radial {
        return Err(Error::UnsupportedDomain { op: "angle_histogram", domain: domain.kind().name() });
    }
    if rots.is_empty() {
        return Err(Error::InvalidParameter("empty ensemble".into()));
    }
    let mut counts = vec![0usize; domain.len()];
    let ax = *domain.axis(0);
    let n = ax.cells;
    for r in rots {
        let th = rotation_angle(r);
        let i = ((th / ax.spacing()) as usize).min(n - 1);
        counts[i] += 1;
    }
    let total = rots.len() as f64;
    let values = counts.iter().zip(domain.weights()).map(|(&c, w)| c as f64 / (total * w)).collect();
    GridDensity::new(domain, values)
}

/// dπ = −(β/2)B₀B₀ᵀ π dt + B₀ dw, whose equilibrium is N(0, β⁻¹I).
pub fn rotational_ou_model(beta: f64, b0: &DMatrix<f64>) -> Result<SdeModel> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("need β > 0, got {beta}")));
    }
    if b0.shape() != (3, 3) {
        return Err(Error::ShapeMismatch("B0 must be 3×3".into()));
    }
    let c0 = b0 * b0.transpose() * (0.5 * beta);
    SdeModel::linear(-c0, b0.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::KernelSpec;
    use crate::sde::{sample_moments, simulate_with, SimConfig};

    #[test]
    fn b1_from_b0() {
        let m = noninertial_rotation_model(2.0, &(Matrix3::identity() * 0.5)).unwrap();
        assert!((m.b1 - Matrix3::identity() * 2.0).amax() < 1e-15);
        assert_eq!(noninertial_rotation_model(1.0, &Matrix3::zeros()), Err(Error::SingularNoise));
        let frozen = noninertial_rotation_model(1e12, &Matrix3::identity()).unwrap();
        let r = frozen.simulate(4, 10, 0.01, 1).unwrap();
        assert!(r.iter().all(|r| (r - Matrix3::identity()).amax() < 1e-10));
    }

    #[test]
    fn isotropic_ensemble_matches_kernel() {
        let (k, t, dt) = (1.0, 0.3, 0.002);
        let sim = So3Diffusion::isotropic(k).unwrap();
        let rots = sim.simulate(100_000, (t / dt) as usize, dt, 7).unwrap();
        let dom = Arc::new(DomainSpec::so3_radial(32).unwrap());
        let hist = angle_histogram(&rots, dom.clone()).unwrap();
        let kern = KernelSpec::so3(k, t).density(dom).unwrap().normalize().unwrap();
        let l1 = hist.l1_distance(&kern).unwrap();
        assert!(l1 < 0.05, "{l1}");
    }

    #[test]
    fn rotational_ou_equilibrates() {
        let beta = 2.0;
        let model = rotational_ou_model(beta, &DMatrix::identity(3, 3)).unwrap();
        let cfg = SimConfig::new(0.005, 1000, 100_000, 3).record_every(1000);
        let end = simulate_with(&model, |_, _, x| x.fill(0.0), &cfg, |_| Ok(())).unwrap();
        let cov = sample_moments(&end).unwrap().covariance;
        for i in 0..3 {
            assert!((cov[(i, i)] * beta - 1.0).abs() < 0.02, "{cov}");
        }
    }
}

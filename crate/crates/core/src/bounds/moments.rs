use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fpe::{solve_with, FpeForm, FpeProblem, SolveOptions};
use crate::grid::{moments, GridDensity, MomentSummary};

/// (μ̇, Σ̇) = (∫ x 𝒟f dμ, ∫ (x−μ)(x−μ)ᵀ 𝒟f dμ) with 𝒟 the Itô operator of `p`.
pub fn moment_ode_rhs(d: &GridDensity, p: &FpeProblem) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let mom = moments(d)?;
    let dom = p.domain();
    let n = dom.ndim();
    let mut out = vec![0.0; dom.len()];
    p.apply_into(FpeForm::Ito, 0.0, d.values(), &mut out);
    let mut mdot = DVector::zeros(n);
    let mut sdot = DMatrix::zeros(n, n);
    let mut x = vec![0.0; n];
    for c in 0..dom.len() {
        let r = out[c] * dom.weights()[c];
        dom.center_into(c, &mut x);
        for i in 0..n {
            mdot[i] += x[i] * r;
            let di = x[i] - mom.mean[i];
            for j in 0..n {
                sdot[(i, j)] += di * (x[j] - mom.mean[j]) * r;
            }
        }
    }
    Ok((mdot, sdot))
}

#[derive(Debug, Clone, Default)]
pub struct MomentTrajectory {
    pub times: Vec<f64>,
    pub moments: Vec<MomentSummary>,
}

/// Integrates the moment ODE alongside the evolving density: the density is
/// advanced in half steps and each full step combines the three right-hand
/// sides with RK4 weights (k₂ = k₃ at the midpoint).
pub fn propagate_moments(p: &FpeProblem, t_end: f64, dt: f64) -> Result<MomentTrajectory> {
    let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let half = if t_end > 0.0 { t_end / (2 * steps) as f64 } else { 0.5 * dt };
    let start = moments(p.initial())?;
    let mut rhs: Vec<(DVector<f64>, DMatrix<f64>)> = Vec::with_capacity(2 * steps + 1);
    solve_with(p, 2.0 * steps as f64 * half, &SolveOptions::new(half * (1.0 + 1e-12)).record_every(1), |_, _, d| {
        rhs.push(moment_ode_rhs(d, p)?);
        Ok(())
    })?;
    if rhs.len() != 2 * steps + 1 {
        return Err(Error::InvalidParameter(format!("expected {} snapshots, got {}", 2 * steps + 1, rhs.len())));
    }
    let mut traj = MomentTrajectory::default();
    let mut mean = start.mean.clone();
    let mut cov = start.covariance.clone();
    traj.times.push(0.0);
    traj.moments.push(start.clone());
    let h = 2.0 * half;
    for s in 0..steps {
        let (m0, s0) = &rhs[2 * s];
        let (m1, s1) = &rhs[2 * s + 1];
        let (m2, s2) = &rhs[2 * s + 2];
        mean += (m0 + m1 * 4.0 + m2) * (h / 6.0);
        cov += (s0 + s1 * 4.0 + s2) * (h / 6.0);
        traj.times.push((s + 1) as f64 * h);
        traj.moments.push(MomentSummary { mean: mean.clone(), covariance: cov.clone(), chart_axes: start.chart_axes.clone() });
    }
    Ok(traj)
}

/// Classical RK4 on y' = rhs(t, y), returning every step.
pub fn rk4_trajectory<F>(rhs: F, y0: &[f64], t_end: f64, dt: f64) -> Vec<(f64, Vec<f64>)>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let mut y = y0.to_vec();
    let mut out = vec![(0.0, y.clone())];
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for s in 0..steps {
        let t = s as f64 * h;
        rhs(t, &y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        rhs(t + 0.5 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        rhs(t + 0.5 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        rhs(t + h, &tmp, &mut k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push(((s + 1) as f64 * h, y.clone()));
    }
    out
}

/// Closed moment system for compressible flow in (μ, m₂ = E[x²]).
pub fn compressible_moment_rhs(d0: f64, kappa0: f64, u0: f64) -> impl Fn(f64, &[f64], &mut [f64]) {
    move |_, y, out| {
        out[0] = (2.0 * d0 * kappa0 + u0) * (1.0 + kappa0 * y[0]);
        out[1] = 2.0 * d0 + (8.0 * d0 * kappa0 + 2.0 * u0) * y[0] + (6.0 * d0 * kappa0 * kappa0 + 2.0 * u0 * kappa0) * y[1];
    }
}

/// μ(t) = (μ₀ + 1/κ₀) e^{(2D₀κ₀+u₀)κ₀t} − 1/κ₀, or μ₀ + u₀t when κ₀ = 0.
pub fn compressible_mean_closed_form(d0: f64, kappa0: f64, u0: f64, mu0: f64, t: f64) -> f64 {
    if kappa0 == 0.0 {
        return mu0 + u0 * t;
    }
    let c = 2.0 * d0 * kappa0 + u0;
    (mu0 + 1.0 / kappa0) * (c * kappa0 * t).exp() - 1.0 / kappa0
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::fpe::{compressible_problem, Boundary};
    use crate::grid::{gaussian_density, DomainSpec};
    use crate::sde::SdeModel;

    #[test]
    fn rk4_oracle_for_compressible_mean() {
        let traj = rk4_trajectory(compressible_moment_rhs(1.0, 0.1, 1.0), &[0.0, 0.0], 1.0, 1e-3);
        let mu = traj.last().unwrap().1[0];
        assert!((mu - 1.274968515793).abs() < 1e-9, "{mu}");
        assert!((compressible_mean_closed_form(1.0, 0.1, 1.0, 0.0, 1.0) - mu).abs() < 1e-10);
    }

    #[test]
    fn pure_advection_mean_is_linear() {
        let dom = Arc::new(DomainSpec::euclidean_box(&[(-6.0, 10.0, 320)]).unwrap());
        let g = gaussian_density(dom.clone(), &DVector::from_element(1, 0.2), &DMatrix::from_element(1, 1, 0.3)).unwrap();
        let p = compressible_problem(0.5, 0.0, 1.0, dom, g).unwrap();
        let (mdot, _) = moment_ode_rhs(p.initial(), &p).unwrap();
        assert!((mdot[0] - 1.0).abs() < 1e-10, "{}", mdot[0]);
        let dt = p.suggested_dt(0.9) * 2.0;
        let traj = propagate_moments(&p, 1.0, dt).unwrap();
        let mu = traj.moments.last().unwrap().mean[0];
        assert!((mu - 1.2).abs() < 1e-10, "{mu}");
    }

    #[test]
    fn free_diffusion_covariance_is_linear() {
        let dom = Arc::new(DomainSpec::symmetric_box(2, 6.0, 64).unwrap());
        let s0 = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2]);
        let g = gaussian_density(dom.clone(), &DVector::zeros(2), &s0).unwrap();
        let dmat = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let b = dmat.clone().cholesky().unwrap().l();
        let model = SdeModel::linear(DMatrix::zeros(2, 2), b).unwrap();
        let p = FpeProblem::new(dom, model, Boundary::Decay, g).unwrap();
        let start = moments(p.initial()).unwrap().covariance;
        let traj = propagate_moments(&p, 0.5, p.suggested_dt(0.9) * 2.0).unwrap();
        let want = &start + &dmat * 0.5;
        let got = &traj.moments.last().unwrap().covariance;
        assert!((got - &want).norm() < 1e-6, "{got} vs {want}");
    }
}

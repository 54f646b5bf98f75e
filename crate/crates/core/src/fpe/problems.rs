use std::sync::Arc;

use super::{Boundary, FpeProblem};
use crate::error::{Error, Result};
use crate::grid::{DomainKind, DomainSpec, GridDensity};
use crate::sde::{Interpretation, SdeModel};

/// Transport ∂c/∂t = −∂(u c)/∂x + ∂/∂x(D ∂c/∂x) with D = D₀(1+κ₀x)² and
/// u = u₀(1+κ₀x), written as the Itô SDE with a = u + ∂D/∂x and B = √(2D).
pub fn compressible_problem(
    d0: f64,
    kappa0: f64,
    u0: f64,
    domain: Arc<DomainSpec>,
    initial: GridDensity,
) -> Result<FpeProblem> {
    if !(d0 > 0.0) || !kappa0.is_finite() || !u0.is_finite() {
        return Err(Error::InvalidParameter(format!("need D0 > 0 and finite κ0, u0; got {d0}, {kappa0}, {u0}")));
    }
    if domain.ndim() != 1 || domain.kind() != DomainKind::EuclideanBox {
        return Err(Error::InvalidDomain("compressible flow needs a 1-d Euclidean box".into()));
    }
    let ax = *domain.axis(0);
    if kappa0 != 0.0 {
        let root = -1.0 / kappa0;
        if root > ax.lower && root < ax.upper {
            return Err(Error::InvalidDomain(format!("diffusivity vanishes at x = {root} inside the domain")));
        }
    }
    let s = (2.0 * d0).sqrt();
    let model = SdeModel::new(
        1,
        1,
        Interpretation::Ito,
        move |x, _, o| o[0] = (u0 + 2.0 * d0 * kappa0) * (1.0 + kappa0 * x[0]),
        move |x, _, o| o[0] = s * (1.0 + kappa0 * x[0]),
    )?
    .with_noise_jacobian(move |_, _, o| o[0] = s * kappa0);
    FpeProblem::new(domain, model, Boundary::Decay, initial)
}

/// Couette transport: drift (U₀ y / H, 0), isotropic diffusion D₀, walls at y = 0, H.
pub fn couette_problem(d0: f64, u0: f64, height: f64, domain: Arc<DomainSpec>, initial: GridDensity) -> Result<FpeProblem> {
    if !(d0 > 0.0 && height > 0.0) || !u0.is_finite() {
        return Err(Error::InvalidParameter(format!("need D0 > 0, H > 0 and finite U0; got {d0}, {height}, {u0}")));
    }
    if domain.kind() != DomainKind::Slab {
        return Err(Error::InvalidDomain("Couette flow needs a slab domain".into()));
    }
    let ay = domain.axis(1);
    if (ay.lower).abs() > 1e-12 || (ay.upper - height).abs() > 1e-12 * height.max(1.0) {
        return Err(Error::InvalidDomain(format!(
            "slab spans y ∈ [{}, {}] but H = {height}",
            ay.lower, ay.upper
        )));
    }
    let s = (2.0 * d0).sqrt();
    let model = SdeModel::new(
        2,
        2,
        Interpretation::Ito,
        move |x, _, o| {
            o[0] = u0 * x[1] / height;
            o[1] = 0.0;
        },
        move |_, _, o| o.copy_from_slice(&[s, 0.0, 0.0, s]),
    )?
    .with_noise_jacobian(|_, _, o| o.fill(0.0));
    FpeProblem::new(domain, model, Boundary::ReflectingSlab, initial)
}

#[cfg(test)]
mod tests {
    use nalgebra::{DMatrix, DVector};

    use super::*;
    use crate::fpe::{solve, FpeForm, SolveOptions};
    use crate::grid::{gaussian_density, moments};

    #[test]
    fn compressible_mean_follows_ode() {
        let (d0, k0, u0) = (1.0, 0.1, 1.0);
        let dom = Arc::new(DomainSpec::euclidean_box(&[(-7.0, 11.0, 360)]).unwrap());
        let g = gaussian_density(dom.clone(), &DVector::zeros(1), &DMatrix::from_element(1, 1, 0.1)).unwrap();
        let p = compressible_problem(d0, k0, u0, dom, g).unwrap();
        let sol = solve(&p, 1.0, &SolveOptions::new(p.suggested_dt(0.9))).unwrap();
        let mu = moments(sol.last()).unwrap().mean[0];
        let want = 10.0 * ((0.12f64).exp() - 1.0);
        assert!((mu - want).abs() / want < 1e-2, "{mu} vs {want}");
    }

    #[test]
    fn couette_conserves_mass() {
        let dom = Arc::new(DomainSpec::slab((-6.0, 14.0, 80), 1.0, 16).unwrap());
        let init = GridDensity::from_fn(dom.clone(), |x| (-(x[0] * x[0]) * 2.0).exp() * (1.0 + 0.5 * (3.0 * x[1]).cos()))
            .unwrap()
            .normalize()
            .unwrap();
        let p = couette_problem(0.2, 1.0, 1.0, dom, init).unwrap();
        let dt = p.suggested_dt(0.9);
        let sol = solve(&p, 10_000.0 * dt, &SolveOptions::new(dt).form(FpeForm::Stratonovich)).unwrap();
        assert_eq!(sol.steps, 10_000);
        assert!((sol.last().integral() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_wrong_domains() {
        let slab = Arc::new(DomainSpec::slab((-1.0, 1.0, 8), 2.0, 8).unwrap());
        let u = GridDensity::uniform(slab.clone());
        assert!(couette_problem(1.0, 1.0, 1.0, slab.clone(), u.clone()).is_err());
        assert!(compressible_problem(1.0, 0.1, 1.0, slab, u).is_err());
    }
}

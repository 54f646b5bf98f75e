//! Heat kernels on the circle and SO(3), the noisy cart on SE(2), rotational
//! diffusion, the group entropy rate and the de Bruijn identity.

mod cart;
mod debruijn;
mod rotation;

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::bounds::{eigenvalue_sandwich, BoundsCertificate};
use crate::error::{Error, Result};
use crate::grid::{DomainKind, DomainSpec, GridDensity};
use crate::lie::{character, group_fisher_information, wrap_angle};

pub use cart::{cart_domains, cart_extent, cart_evolve, cart_model, CartDiffusion, CartOptions, CartParams, CartRun};
pub use debruijn::{debruijn_check, so3_class_coefficients, DeBruijnReport, DeBruijnRow};
pub use rotation::{angle_histogram, noninertial_rotation_model, rotational_ou_model, So3Diffusion};

/// Dt (or Kt) below which `Auto` picks the folded form.
pub const REPRESENTATION_SWITCH: f64 = 0.5;
/// Bound on the first dropped Fourier term.
pub const FOURIER_TAIL: f64 = 1e-14;
/// Bound on the first dropped image term of a folded sum.
pub const FOLDED_TAIL: f64 = 1e-16;
/// Largest number of series terms any evaluation may use.
pub const MAX_TERMS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Fourier,
    Folded,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelSpace {
    Circle,
    So3,
}

/// A heat kernel: space, diffusion constant, time and representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub space: KernelSpace,
    pub rate: f64,
    pub t: f64,
    pub representation: Representation,
}

impl KernelSpec {
    pub fn circle(d: f64, t: f64) -> Self {
        Self { space: KernelSpace::Circle, rate: d, t, representation: Representation::Auto }
    }

    pub fn so3(k: f64, t: f64) -> Self {
        Self { space: KernelSpace::So3, rate: k, t, representation: Representation::Auto }
    }

    pub fn with_representation(mut self, rep: Representation) -> Self {
        self.representation = rep;
        self
    }

    pub fn eval(&self, theta: f64) -> Result<f64> {
        match self.space {
            KernelSpace::Circle => circle_kernel(theta, self.t, self.rate, self.representation),
            KernelSpace::So3 => so3_kernel(theta, self.t, self.rate, self.representation),
        }
    }

    /// Kernel values at the cell centers of a circle or SO(3) angle grid,
    /// without renormalization.
    pub fn density(&self, domain: Arc<DomainSpec>) -> Result<GridDensity> {
        let want = match self.space {
            KernelSpace::Circle => DomainKind::Circle,
            KernelSpace::So3 => DomainKind::So3Radial,
        };
        if domain.kind() != want {
            return Err(Error::UnsupportedDomain { op: "kernel density", domain: domain.kind().name() });
        }
        let ax = *domain.axis(0);
        let values = (0..domain.len()).map(|i| self.eval(ax.center(i))).collect::<Result<Vec<_>>>()?;
        GridDensity::new(domain, values)
    }
}

fn check_time(t: f64, rate: f64) -> Result<f64> {
    if !(t > 0.0) || !(rate > 0.0) || !(t * rate).is_finite() {
        return Err(Error::InvalidParameter(format!("need t > 0 and a positive rate, got t = {t}, rate = {rate}")));
    }
    Ok(t * rate)
}

fn resolve(rep: Representation, s: f64) -> Representation {
    match rep {
        Representation::Auto if s < REPRESENTATION_SWITCH => Representation::Folded,
        Representation::Auto => Representation::Fourier,
        r => r,
    }
}

/// Heat kernel on the circle with variance Dt on the line.
pub fn circle_kernel(theta: f64, t: f64, d: f64, rep: Representation) -> Result<f64> {
    let s = check_time(t, d)?;
    let th = wrap_angle(theta);
    match resolve(rep, s) {
        Representation::Fourier => {
            // e^{−s n²/2} < tail past n_max.
            let n_max = (2.0 * (1.0 / FOURIER_TAIL).ln() / s).sqrt().ceil() as usize;
            if n_max > MAX_TERMS {
                return Err(Error::TruncationBudget(MAX_TERMS));
            }
            let mut acc = 1.0;
            for n in 1..=n_max {
                let nf = n as f64;
                acc += 2.0 * (-0.5 * s * nf * nf).exp() * (nf * th).cos();
            }
            Ok(acc / (2.0 * PI))
        }
        _ => {
            let norm = 1.0 / (2.0 * PI * s).sqrt();
            let term = |k: i64| {
                let x = th + 2.0 * PI * k as f64;
                (-x * x / (2.0 * s)).exp()
            };
            let mut acc = term(0);
            for k in 1..=MAX_TERMS as i64 {
                let (a, b) = (term(k), term(-k));
                acc += a + b;
                let far = 2.0 * PI * k as f64 - PI;
                if far > 0.0 && (-far * far / (2.0 * s)).exp() < FOLDED_TAIL {
                    return Ok(norm * acc);
                }
            }
            Err(Error::TruncationBudget(MAX_TERMS))
        }
    }
}

/// σ²(t) = π²/3 + 4 Σ (−1)ⁿ n⁻² e^{−Dtn²/2}.
pub fn circle_variance(t: f64, d: f64) -> Result<f64> {
    let s = check_time(t, d)?;
    let mut acc = PI * PI / 3.0;
    for n in 1..=MAX_TERMS {
        let nf = n as f64;
        let term = (-0.5 * s * nf * nf).exp() / (nf * nf);
        acc += 4.0 * if n % 2 == 0 { term } else { -term };
        if term < 1e-17 {
            return Ok(acc);
        }
    }
    Err(Error::TruncationBudget(MAX_TERMS))
}

/// Upper bounds on the entropy of the circle kernel.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CircleEntropyBounds {
    /// ½ log(2πDt) + σ²/(2Dt), from −log of the unfolded Gaussian.
    pub gaussian_form: f64,
    /// log 2π.
    pub max_entropy: f64,
}

impl CircleEntropyBounds {
    pub fn min(&self) -> f64 {
        self.gaussian_form.min(self.max_entropy)
    }
}

pub fn circle_entropy_bounds(t: f64, d: f64) -> Result<CircleEntropyBounds> {
    let s = check_time(t, d)?;
    let var = circle_variance(t, d)?;
    Ok(CircleEntropyBounds { gaussian_form: 0.5 * (2.0 * PI * s).ln() + var / (2.0 * s), max_entropy: (2.0 * PI).ln() })
}

/// χ_l(θ) on SO(3).
pub fn so3_character(l: usize, theta: f64) -> f64 {
    character(l, theta)
}

/// Isotropic heat kernel on SO(3) as a function of the rotation angle, with
/// respect to normalized Haar measure.
pub fn so3_kernel(theta: f64, t: f64, k: f64, rep: Representation) -> Result<f64> {
    let s = check_time(t, k)?;
    let th = wrap_angle(theta).abs();
    match resolve(rep, s) {
        Representation::Fourier => {
            let mut acc = 0.0;
            for l in 0..=MAX_TERMS {
                let lf = l as f64;
                let a = 2.0 * lf + 1.0;
                let e = (-lf * (lf + 1.0) * s).exp();
                if a * a * e < FOURIER_TAIL {
                    return Ok(acc);
                }
                acc += a * e * character(l, th);
            }
            Err(Error::TruncationBudget(MAX_TERMS))
        }
        _ => {
            let c = 4.0 * s;
            let pref = 0.5 * PI.sqrt() * (0.25 * s).exp() / s.powf(1.5);
            // Σ (−1)^k g(θ + 2πk) with g(x) = x e^{−x²/c}; the k-th term pairs
            // with its mirror −k.
            let mut num = 0.0;
            let mut d1 = 0.0;
            let mut d3 = 0.0;
            for kk in 0..=MAX_TERMS as i64 {
                let sign = if kk % 2 == 0 { 1.0 } else { -1.0 };
                let shifts: &[f64] =
                    if kk == 0 { &[0.0] } else { &[2.0 * PI * kk as f64, -2.0 * PI * kk as f64] };
                for &a in shifts {
                    let x = th + a;
                    let e = (-x * x / c).exp();
                    num += sign * x * e;
                    let y = a;
                    let ey = (-y * y / c).exp();
                    d1 += sign * ey * (1.0 - 2.0 * y * y / c);
                    d3 += sign * ey * (-6.0 / c + 24.0 * y * y / (c * c) - 8.0 * y.powi(4) / c.powi(3)) / 6.0;
                }
                let far = 2.0 * PI * (kk + 1) as f64 - PI;
                if (far * (-far * far / c).exp()).abs() < FOLDED_TAIL {
                    let ratio = if th < 1e-6 {
                        2.0 * d1 + th * th * (2.0 * d3 + d1 / 12.0)
                    } else {
                        num / (0.5 * th).sin()
                    };
                    return Ok(pref * ratio);
                }
            }
            Err(Error::TruncationBudget(MAX_TERMS))
        }
    }
}

/// Ṡ = ½tr[DF] from the group Fisher matrix, with its eigenvalue bracket.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupEntropyRate {
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
    pub fisher: DMatrix<f64>,
    pub certificates: [BoundsCertificate; 2],
}

pub fn group_entropy_rate(f: &GridDensity, dmat: &DMatrix<f64>) -> Result<GroupEntropyRate> {
    if dmat.nrows() != dmat.ncols() {
        return Err(Error::ShapeMismatch("D must be square".into()));
    }
    let sym = (dmat + dmat.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    if eig.min() < -1e-12 * (1.0 + eig.amax()) {
        return Err(Error::NotPositiveDefinite(eig.min()));
    }
    let fisher = group_fisher_information(f)?;
    if fisher.nrows() != dmat.nrows() {
        return Err(Error::ShapeMismatch(format!("D is {}×{}, F is {}×{}", dmat.nrows(), dmat.ncols(), fisher.nrows(), fisher.ncols())));
    }
    let tf = fisher.trace();
    let certificates = eigenvalue_sandwich(&sym, &fisher)?;
    Ok(GroupEntropyRate {
        rate: 0.5 * (&sym * &fisher).trace(),
        lower: 0.5 * eig.min() * tf,
        upper: 0.5 * eig.max() * tf,
        fisher,
        certificates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::entropy;

    #[test]
    fn circle_kernel_limits() {
        for th in [-3.0, -1.0, 0.0, 2.0] {
            let f = circle_kernel(th, 100.0, 1.0, Representation::Auto).unwrap();
            assert!((f - 1.0 / (2.0 * PI)).abs() < 1e-12);
        }
        let s: f64 = 1e-3;
        let f0 = circle_kernel(0.0, s, 1.0, Representation::Folded).unwrap();
        assert!((f0 - 1.0 / (2.0 * PI * s).sqrt()).abs() < 1e-12);
        assert!(circle_kernel(0.0, 0.0, 1.0, Representation::Fourier).is_err());
        assert_eq!(circle_kernel(0.0, 1e-14, 1.0, Representation::Fourier), Err(Error::TruncationBudget(MAX_TERMS)));
    }

    #[test]
    fn circle_representations_agree() {
        for s in [0.05, 0.2, 0.5, 1.0, 5.0] {
            let mut worst: f64 = 0.0;
            for i in 0..200 {
                let th = -PI + 2.0 * PI * i as f64 / 200.0;
                let a = circle_kernel(th, s, 1.0, Representation::Fourier).unwrap();
                let b = circle_kernel(th, s, 1.0, Representation::Folded).unwrap();
                worst = worst.max((a - b).abs());
            }
            assert!(worst < 1e-8, "Dt={s}: {worst:e}");
        }
    }

    #[test]
    fn circle_variance_limits_and_quadrature() {
        assert!((circle_variance(1e3, 1.0).unwrap() - PI * PI / 3.0).abs() < 1e-12);
        let v = circle_variance(0.01, 1.0).unwrap();
        assert!((v - 0.01).abs() / 0.01 < 1e-2, "{v}");
        let dom = Arc::new(DomainSpec::circle(512).unwrap());
        for s in [0.1, 1.0] {
            let k = KernelSpec::circle(1.0, s).density(dom.clone()).unwrap();
            let q: f64 = (0..dom.len()).map(|i| dom.axis(0).center(i).powi(2) * k.values()[i] * dom.weights()[i]).sum();
            assert!((q - circle_variance(s, 1.0).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn circle_entropy_is_bounded() {
        let dom = Arc::new(DomainSpec::circle(1024).unwrap());
        for s in [0.1, 1.0, 10.0] {
            let k = KernelSpec::circle(1.0, s).density(dom.clone()).unwrap();
            let h = entropy(&k).unwrap();
            let b = circle_entropy_bounds(s, 1.0).unwrap();
            assert!(h <= b.min() + 1e-9, "Dt={s}: {h} vs {b:?}");
        }
    }

    #[test]
    fn so3_characters() {
        assert_eq!(so3_character(2, 0.0), 5.0);
        assert_eq!(so3_character(0, 1.3), 1.0);
    }

    #[test]
    fn so3_representations_agree() {
        for s in [0.02, 0.05, 0.2, 0.5, 1.0, 2.0] {
            let mut worst: f64 = 0.0;
            for i in 0..=200 {
                let th = PI * i as f64 / 200.0;
                let a = so3_kernel(th, s, 1.0, Representation::Fourier).unwrap();
                let b = so3_kernel(th, s, 1.0, Representation::Folded).unwrap();
                worst = worst.max((a - b).abs());
            }
            assert!(worst < 1e-6, "Kt={s}: {worst:e}");
        }
        let near = so3_kernel(5e-7, 0.1, 1.0, Representation::Folded).unwrap();
        let off = so3_kernel(2e-6, 0.1, 1.0, Representation::Folded).unwrap();
        assert!((near - off).abs() / off < 1e-9);
    }

    #[test]
    fn so3_kernel_normalized_and_relaxes() {
        let dom = Arc::new(DomainSpec::so3_radial(512).unwrap());
        for s in [0.05, 0.3, 1.0, 3.0] {
            let k = KernelSpec::so3(1.0, s).density(dom.clone()).unwrap();
            assert!((k.integral() - 1.0).abs() < 1e-6, "Kt={s}: {}", k.integral());
            assert!(entropy(&k).unwrap() < 0.0);
        }
        for i in 0..=50 {
            let th = PI * i as f64 / 50.0;
            assert!((so3_kernel(th, 5.0, 1.0, Representation::Auto).unwrap() - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn switch_is_continuous() {
        for th in [0.0, 0.5, 2.0, 3.1] {
            let a = so3_kernel(th, REPRESENTATION_SWITCH * (1.0 - 1e-12), 1.0, Representation::Auto).unwrap();
            let b = so3_kernel(th, REPRESENTATION_SWITCH, 1.0, Representation::Auto).unwrap();
            assert!((a - b).abs() < 1e-6);
            let a = circle_kernel(th, REPRESENTATION_SWITCH * (1.0 - 1e-12), 1.0, Representation::Auto).unwrap();
            let b = circle_kernel(th, REPRESENTATION_SWITCH, 1.0, Representation::Auto).unwrap();
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn uniform_so3_has_zero_rate() {
        let dom = Arc::new(DomainSpec::so3_radial(64).unwrap());
        let r = group_entropy_rate(&GridDensity::uniform(dom), &(DMatrix::identity(3, 3) * 2.0)).unwrap();
        assert!(r.rate.abs() < 1e-20 && r.certificates.iter().all(|c| c.pass));
    }

    #[test]
    fn isotropic_so3_rate_matches_entropy_derivative() {
        let dom = Arc::new(DomainSpec::so3_radial(512).unwrap());
        let (k, t, dt) = (1.0, 0.2, 1e-4);
        let s = |t: f64| entropy(&KernelSpec::so3(k, t).density(dom.clone()).unwrap().normalize().unwrap()).unwrap();
        let fd = (s(t + dt) - s(t - dt)) / (2.0 * dt);
        let mid = KernelSpec::so3(k, t).density(dom.clone()).unwrap().normalize().unwrap();
        let r = group_entropy_rate(&mid, &(DMatrix::identity(3, 3) * (2.0 * k))).unwrap();
        assert!((r.rate - fd).abs() / fd < 1e-3, "{} vs {fd}", r.rate);
        let aniso = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 1.0, 3.0]));
        let r = group_entropy_rate(&mid, &aniso).unwrap();
        assert!(r.lower <= r.rate && r.rate <= r.upper);
    }
}

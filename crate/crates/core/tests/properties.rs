use std::f64::consts::PI;
use std::sync::Arc;

use entroprod::bounds::{crb_cascade, crb_certificate, BoundsCertificate};
use entroprod::diffusion::{circle_kernel, Representation};
use entroprod::grid::{convolve, entropy, fisher_information, gaussian_density, jensen_lower_bound, moments, DomainSpec, GridDensity};
use entroprod::lie::{so3_exp, so3_log_any, wrap_angle};
use entroprod::sde::{simulate, SdeModel, SimConfig};
use nalgebra::{DMatrix, DVector, Vector3};
use proptest::prelude::*;

fn box2() -> Arc<DomainSpec> {
    Arc::new(DomainSpec::symmetric_box(2, 8.0, 96).unwrap())
}

fn cov(a: f64, b: f64, rho: f64) -> DMatrix<f64> {
    let c = rho * (a * b).sqrt();
    DMatrix::from_row_slice(2, 2, &[a, c, c, b])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn entropy_sits_between_jensen_and_log_measure(w in prop::collection::vec(0.01f64..1.0, 16)) {
        let dom = Arc::new(DomainSpec::circle(16).unwrap());
        let f = GridDensity::new(dom, w).unwrap().normalize().unwrap();
        let s = entropy(&f).unwrap();
        prop_assert!(s <= (2.0 * PI).ln() + 1e-12);
        prop_assert!(s >= jensen_lower_bound(&f).unwrap() - 1e-12);
    }

    #[test]
    fn fisher_is_symmetric_psd(a in 0.3f64..2.0, b in 0.3f64..2.0, rho in -0.8f64..0.8, mx in -1.0f64..1.0) {
        let f = gaussian_density(box2(), &DVector::from_vec(vec![mx, 0.0]), &cov(a, b, rho)).unwrap();
        let fisher = fisher_information(&f).unwrap();
        prop_assert!((&fisher - fisher.transpose()).amax() < 1e-12);
        prop_assert!(fisher.symmetric_eigen().eigenvalues.min() > 0.0);
    }

    #[test]
    fn crb_and_cascade_hold_for_gaussians(a in 0.3f64..2.0, b in 0.3f64..2.0, rho in -0.8f64..0.8,
                                          d1 in 0.1f64..2.0, d2 in 0.1f64..2.0) {
        let f = gaussian_density(box2(), &DVector::zeros(2), &cov(a, b, rho)).unwrap();
        let sigma = moments(&f).unwrap().covariance;
        let fisher = fisher_information(&f).unwrap();
        let crb = crb_certificate(&sigma, &fisher).unwrap();
        prop_assert!(crb.pass, "{:?}", crb);
        let dmat = DMatrix::from_diagonal(&DVector::from_vec(vec![d1, d2]));
        for c in crb_cascade(&dmat, &sigma, &fisher).unwrap() {
            prop_assert!(c.pass, "{:?}", c);
        }
    }

    #[test]
    fn convolution_preserves_mass_and_adds_means(m1 in -1.0f64..1.0, m2 in -1.0f64..1.0, v1 in 0.2f64..1.0, v2 in 0.2f64..1.0) {
        let dom = Arc::new(DomainSpec::symmetric_box(1, 12.0, 480).unwrap());
        let g = |m: f64, v: f64| gaussian_density(dom.clone(), &DVector::from_element(1, m), &DMatrix::from_element(1, 1, v)).unwrap();
        let h = convolve(&g(m1, v1), &g(m2, v2)).unwrap();
        prop_assert!((h.integral() - 1.0).abs() < 1e-9);
        let mo = moments(&h).unwrap();
        prop_assert!((mo.mean[0] - (m1 + m2)).abs() < 1e-6);
        prop_assert!((mo.covariance[(0, 0)] - (v1 + v2)).abs() < 1e-3);
    }

    #[test]
    fn circle_kernel_forms_agree_and_stay_nonnegative(theta in -PI..PI, t in 0.01f64..4.0, d in 0.1f64..2.0) {
        let a = circle_kernel(theta, t, d, Representation::Fourier).unwrap();
        let b = circle_kernel(theta, t, d, Representation::Folded).unwrap();
        prop_assert!((a - b).abs() < 1e-10 * (1.0 + a));
        let auto = circle_kernel(theta, t, d, Representation::Auto).unwrap();
        prop_assert!(auto >= 0.0);
        let periodic = circle_kernel(theta + 2.0 * PI, t, d, Representation::Auto).unwrap();
        prop_assert!((periodic - auto).abs() < 1e-10);
    }

    #[test]
    fn wrapped_angles_are_equivalent(a in -100.0f64..100.0) {
        let w = wrap_angle(a);
        prop_assert!((-PI..PI).contains(&w));
        let turns = (a - w) / (2.0 * PI);
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn so3_exp_is_orthogonal(x in -3.0f64..3.0, y in -3.0f64..3.0, z in -3.0f64..3.0) {
        let r = so3_exp(&Vector3::new(x, y, z));
        prop_assert!((r * r.transpose() - nalgebra::Matrix3::identity()).amax() < 1e-12);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        prop_assert!((so3_exp(&so3_log_any(&r)) - r).amax() < 1e-9);
    }

    #[test]
    fn geq_certificate_matches_its_definition(lhs in -10.0f64..10.0, rhs in -10.0f64..10.0, tol in 0.0f64..1.0) {
        let c = BoundsCertificate::geq("p", lhs, rhs, tol);
        prop_assert_eq!(c.pass, lhs - rhs >= -tol);
        let k = BoundsCertificate::close("p", lhs, rhs, tol);
        prop_assert_eq!(k.pass, (lhs - rhs).abs() <= tol);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn ensembles_depend_only_on_the_seed(seed in 0u64..1_000_000) {
        let model = SdeModel::linear(DMatrix::from_element(1, 1, -1.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let cfg = SimConfig::new(0.01, 20, 64, seed);
        let a = simulate(&model, |_, _, x| x[0] = 0.5, &cfg).unwrap();
        let b = simulate(&model, |_, _, x| x[0] = 0.5, &cfg).unwrap();
        prop_assert_eq!(a.last().unwrap().iter().collect::<Vec<_>>(), b.last().unwrap().iter().collect::<Vec<_>>());
    }
}

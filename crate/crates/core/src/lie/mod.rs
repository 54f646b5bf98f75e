//! SE(2) and SO(3): group arithmetic, exponential coordinates and grid operations.

mod ops;

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub(crate) use ops::gauss_legendre;
pub use ops::{
    character, group_convolve, group_fisher_information, haar_quadrature, interpolate, lie_derivative, radial_interpolate,
    So3Quadrature,
};

/// Orthogonality drift above which SO(3) products are re-projected.
pub const REORTHO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupTag {
    Se2,
    So3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GroupElem {
    /// Planar rigid motion, θ ∈ [−π, π).
    Se2 { x: f64, y: f64, theta: f64 },
    So3(Matrix3<f64>),
}

/// Lie-algebra coordinates. SE(2): (v₁, v₂, ω) along the x-translation,
/// y-translation and rotation generators. SO(3): rotation vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlgebraVec {
    Se2(Vector3<f64>),
    So3(Vector3<f64>),
}

/// Maps an angle to [−π, π).
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r * r.transpose() - Matrix3::identity()).abs().max()
}

/// Nearest rotation matrix (polar factor).
pub fn reorthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut q = u * vt;
    if q.determinant() < 0.0 {
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        q = u2 * vt;
    }
    q
}

impl GroupElem {
    pub fn se2(x: f64, y: f64, theta: f64) -> Self {
        GroupElem::Se2 { x, y, theta: wrap_angle(theta) }
    }

    /// Rotation matrix, checked for orthonormality within 1e-9.
    pub fn so3(r: Matrix3<f64>) -> Result<Self> {
        let err = orthonormality_error(&r);
        let det = r.determinant();
        if err > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "not a rotation: ‖RRᵀ − I‖ = {err:e}, det = {det}"
            )));
        }
        Ok(GroupElem::So3(r))
    }

    pub fn identity(tag: GroupTag) -> Self {
        match tag {
            GroupTag::Se2 => GroupElem::Se2 { x: 0.0, y: 0.0, theta: 0.0 },
            GroupTag::So3 => GroupElem::So3(Matrix3::identity()),
        }
    }

    pub fn tag(&self) -> GroupTag {
        match self {
            GroupElem::Se2 { .. } => GroupTag::Se2,
            GroupElem::So3(_) => GroupTag::So3,
        }
    }

    /// Homogeneous 3×3 matrix for SE(2), the rotation itself for SO(3).
    pub fn matrix(&self) -> Matrix3<f64> {
        match *self {
            GroupElem::Se2 { x, y, theta } => {
                let (s, c) = theta.sin_cos();
                Matrix3::new(c, -s, x, s, c, y, 0.0, 0.0, 1.0)
            }
            GroupElem::So3(r) => r,
        }
    }

    pub fn compose(&self, other: &GroupElem) -> Result<GroupElem> {
        match (*self, *other) {
            (GroupElem::Se2 { x: x1, y: y1, theta: t1 }, GroupElem::Se2 { x: x2, y: y2, theta: t2 }) => {
                let (s, c) = t1.sin_cos();
                Ok(GroupElem::Se2 { x: x1 + c * x2 - s * y2, y: y1 + s * x2 + c * y2, theta: wrap_angle(t1 + t2) })
            }
            (GroupElem::So3(a), GroupElem::So3(b)) => {
                let r = a * b;
                Ok(GroupElem::So3(if orthonormality_error(&r) > REORTHO_TOL { reorthonormalize(&r) } else { r }))
            }
            _ => Err(Error::TagMismatch),
        }
    }

    pub fn inverse(&self) -> GroupElem {
        match *self {
            GroupElem::Se2 { x, y, theta } => {
                let (s, c) = theta.sin_cos();
                GroupElem::Se2 { x: -c * x - s * y, y: s * x - c * y, theta: wrap_angle(-theta) }
            }
            GroupElem::So3(r) => GroupElem::So3(r.transpose()),
        }
    }

    /// Largest entry of |g⁻¹ h − I| in matrix form.
    pub fn distance_matrix(&self, other: &GroupElem) -> Result<f64> {
        Ok((self.inverse().compose(other)?.matrix() - Matrix3::identity()).abs().max())
    }
}

/// Lie-algebra matrix of `v`.
pub fn hat(v: &AlgebraVec) -> Matrix3<f64> {
    match *v {
        AlgebraVec::Se2(w) => Matrix3::new(0.0, -w[2], w[0], w[2], 0.0, w[1], 0.0, 0.0, 0.0),
        AlgebraVec::So3(w) => w.cross_matrix(),
    }
}

/// Inverse of [`hat`] on the span of the basis.
pub fn vee(m: &Matrix3<f64>, tag: GroupTag) -> AlgebraVec {
    match tag {
        GroupTag::Se2 => AlgebraVec::Se2(Vector3::new(m[(0, 2)], m[(1, 2)], m[(1, 0)])),
        GroupTag::So3 => AlgebraVec::So3(Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])),
    }
}

/// R = I + sin θ N + (1 − cos θ) N² for v = θ n.
pub fn so3_exp(v: &Vector3<f64>) -> Matrix3<f64> {
    let th = v.norm();
    let k = v.cross_matrix();
    let (a, b) = if th < 1e-6 {
        (1.0 - th * th / 6.0, 0.5 - th * th / 24.0)
    } else {
        (th.sin() / th, (1.0 - th.cos()) / (th * th))
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Rotation vector with |v| ≤ π for any rotation, choosing one of the two
/// antipodal representatives at θ = π.
pub fn so3_log_any(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let th = cos.acos();
    let w = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    if th < 1e-6 {
        return w * (0.5 * (1.0 + th * th / 6.0));
    }
    if PI - th > 1e-4 {
        return w * (th / (2.0 * th.sin()));
    }
    // Near π: R + Rᵀ ≈ 2(1 − cos θ) nnᵀ + 2cos θ I.
    let s = (r + r.transpose()) * 0.5 - Matrix3::identity() * cos;
    let (mut best, mut norm) = (0, -1.0);
    for j in 0..3 {
        let c = s.column(j).norm();
        if c > norm {
            best = j;
            norm = c;
        }
    }
    let mut n: Vector3<f64> = s.column(best).into_owned() / norm;
    if n.dot(&w) < 0.0 {
        n = -n;
    }
    n * th
}

pub fn exp_map(v: &AlgebraVec) -> GroupElem {
    match *v {
        AlgebraVec::Se2(w) => {
            let om = w[2];
            let (a, b) = if om.abs() < 1e-8 {
                (1.0 - om * om / 6.0, om / 2.0)
            } else {
                (om.sin() / om, (1.0 - om.cos()) / om)
            };
            GroupElem::Se2 { x: a * w[0] - b * w[1], y: b * w[0] + a * w[1], theta: wrap_angle(om) }
        }
        AlgebraVec::So3(w) => GroupElem::So3(so3_exp(&w)),
    }
}

/// Inverse of [`exp_map`] inside the injectivity radius.
pub fn log_map(g: &GroupElem) -> Result<AlgebraVec> {
    match *g {
        GroupElem::Se2 { x, y, theta } => {
            if theta.abs() > PI - 1e-9 {
                return Err(Error::NearCutLocus(theta));
            }
            let om = theta;
            let (a, b) = if om.abs() < 1e-8 {
                (1.0 - om * om / 6.0, om / 2.0)
            } else {
                (om.sin() / om, (1.0 - om.cos()) / om)
            };
            let det = a * a + b * b;
            Ok(AlgebraVec::Se2(Vector3::new((a * x + b * y) / det, (-b * x + a * y) / det, om)))
        }
        GroupElem::So3(r) => {
            if r.trace() <= -1.0 + 1e-9 {
                return Err(Error::NearCutLocus(((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()));
            }
            Ok(AlgebraVec::So3(so3_log_any(&r)))
        }
    }
}

/// Rotation angle of R in [0, π].
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn rot(v: [f64; 3]) -> GroupElem {
        GroupElem::So3(so3_exp(&Vector3::from(v)))
    }

    #[test]
    fn se2_composition_examples() {
        let a = GroupElem::se2(1.0, 0.0, 0.0).compose(&GroupElem::se2(0.0, 1.0, 0.0)).unwrap();
        assert_eq!(a, GroupElem::se2(1.0, 1.0, 0.0));
        let b = GroupElem::se2(0.0, 0.0, PI / 2.0).compose(&GroupElem::se2(1.0, 0.0, 0.0)).unwrap();
        match b {
            GroupElem::Se2 { x, y, theta } => {
                assert!(x.abs() < 1e-15 && (y - 1.0).abs() < 1e-15 && (theta - PI / 2.0).abs() < 1e-15)
            }
            _ => unreachable!(),
        }
        let m = GroupElem::se2(0.3, -2.0, 1.0).matrix();
        assert_eq!((m[(2, 0)], m[(2, 1)], m[(2, 2)]), (0.0, 0.0, 1.0));
    }

    #[test]
    fn tag_mismatch() {
        let e = GroupElem::identity(GroupTag::Se2).compose(&GroupElem::identity(GroupTag::So3));
        assert_eq!(e, Err(Error::TagMismatch));
    }

    #[test]
    fn so3_quarter_turn() {
        let r = so3_exp(&Vector3::new(0.0, 0.0, PI / 2.0));
        assert!((r * Vector3::x() - Vector3::y()).norm() < 1e-15);
        let back = rot([0.0, 0.0, -PI / 2.0]).compose(&GroupElem::So3(r)).unwrap();
        assert!(back.distance_matrix(&GroupElem::identity(GroupTag::So3)).unwrap() < 1e-15);
    }

    #[test]
    fn se2_exp_translation() {
        assert_eq!(exp_map(&AlgebraVec::Se2(Vector3::new(0.7, 0.0, 0.0))), GroupElem::se2(0.7, 0.0, 0.0));
        assert_eq!(exp_map(&AlgebraVec::So3(Vector3::zeros())), GroupElem::identity(GroupTag::So3));
    }

    #[test]
    fn hat_vee_roundtrip() {
        for tag in [GroupTag::Se2, GroupTag::So3] {
            let v = Vector3::new(0.3, -1.2, 2.0);
            let a = match tag {
                GroupTag::Se2 => AlgebraVec::Se2(v),
                GroupTag::So3 => AlgebraVec::So3(v),
            };
            assert_eq!(vee(&hat(&a), tag), a);
        }
    }

    #[test]
    fn log_rejects_cut_locus() {
        assert!(matches!(log_map(&rot([PI, 0.0, 0.0])), Err(Error::NearCutLocus(_))));
        assert!(matches!(log_map(&GroupElem::Se2 { x: 0.0, y: 0.0, theta: -PI }), Err(Error::NearCutLocus(_))));
        let v = so3_log_any(&so3_exp(&Vector3::new(0.0, PI - 1e-7, 0.0)));
        assert!((v - Vector3::new(0.0, PI - 1e-7, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn long_products_stay_orthonormal() {
        let step = rot([1e-3, -2e-3, 0.7e-3]);
        let mut g = GroupElem::identity(GroupTag::So3);
        for _ in 0..1_000_000 {
            g = g.compose(&step).unwrap();
        }
        let GroupElem::So3(r) = g else { unreachable!() };
        assert!(orthonormality_error(&r) < 1e-9);
        assert!((r.determinant() - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn so3_exp_log_roundtrip(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, s in 0.0f64..3.1) {
            let v = Vector3::new(a, b, c);
            prop_assume!(v.norm() > 1e-3);
            let v = v.normalize() * s;
            let AlgebraVec::So3(w) = log_map(&exp_map(&AlgebraVec::So3(v))).unwrap() else { unreachable!() };
            prop_assert!((w - v).norm() < 1e-10);
        }

        #[test]
        fn se2_exp_log_roundtrip(a in -3.0f64..3.0, b in -3.0f64..3.0, om in -3.1f64..3.1) {
            let v = Vector3::new(a, b, om);
            let AlgebraVec::Se2(w) = log_map(&exp_map(&AlgebraVec::Se2(v))).unwrap() else { unreachable!() };
            prop_assert!((w - v).norm() < 1e-10);
        }

        #[test]
        fn se2_group_axioms(x1 in -2.0f64..2.0, y1 in -2.0f64..2.0, t1 in -3.0f64..3.0,
                            x2 in -2.0f64..2.0, y2 in -2.0f64..2.0, t2 in -3.0f64..3.0) {
            let a = GroupElem::se2(x1, y1, t1);
            let b = GroupElem::se2(x2, y2, t2);
            let c = GroupElem::se2(y1, x2, t1 - t2);
            let l = a.compose(&b).unwrap().compose(&c).unwrap();
            let r = a.compose(&b.compose(&c).unwrap()).unwrap();
            prop_assert!((l.matrix() - r.matrix()).abs().max() < 1e-12);
            let e = a.compose(&a.inverse()).unwrap();
            prop_assert!((e.matrix() - Matrix3::identity()).abs().max() < 1e-12);
        }
    }
}

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix3, Vector3};
use rayon::prelude::*;

use super::{so3_exp, so3_log_any, GroupElem};
use crate::error::{Error, Result};
use crate::grid::{self, fisher_information, DomainKind, DomainSpec, GridDensity, GridField};

/// χ_l(θ) = sin((l+½)θ) / sin(θ/2), with χ_l(0) = 2l+1.
pub fn character(l: usize, theta: f64) -> f64 {
    let a = 2.0 * l as f64 + 1.0;
    if theta.abs() < 1e-6 {
        return a * (1.0 - (a * a - 1.0) * theta * theta / 24.0);
    }
    (0.5 * a * theta).sin() / (0.5 * theta).sin()
}

/// Haar (or Lebesgue) cell weights of a domain; sums to 1 on SO(3) grids.
pub fn haar_quadrature(domain: &DomainSpec) -> Vec<f64> {
    domain.weights().to_vec()
}

/// Axis-angle product rule for normalized Haar measure on SO(3):
/// dR = sin²(θ/2) dθ · sin ν dν dλ / (2π²), θ ∈ [0, π].
#[derive(Debug, Clone)]
pub struct So3Quadrature {
    pub rotations: Vec<Matrix3<f64>>,
    pub weights: Vec<f64>,
}

impl So3Quadrature {
    pub fn new(n_theta: usize, n_nu: usize, n_lambda: usize) -> Result<Self> {
        if n_theta == 0 || n_nu == 0 || n_lambda == 0 {
            return Err(Error::InvalidParameter("quadrature needs at least one node per axis".into()));
        }
        let (ht, hn, hl) = (PI / n_theta as f64, PI / n_nu as f64, 2.0 * PI / n_lambda as f64);
        let mut rotations = Vec::with_capacity(n_theta * n_nu * n_lambda);
        let mut weights = Vec::with_capacity(rotations.capacity());
        for i in 0..n_theta {
            let th = (i as f64 + 0.5) * ht;
            let wt = (0.5 * th).sin().powi(2) * ht / (2.0 * PI * PI);
            for j in 0..n_nu {
                let (lo, hi) = (j as f64 * hn, (j + 1) as f64 * hn);
                let nu = 0.5 * (lo + hi);
                let wn = lo.cos() - hi.cos();
                for k in 0..n_lambda {
                    let la = (k as f64 + 0.5) * hl;
                    let n = Vector3::new(nu.sin() * la.cos(), nu.sin() * la.sin(), nu.cos());
                    rotations.push(so3_exp(&(n * th)));
                    weights.push(wt * wn * hl);
                }
            }
        }
        Ok(Self { rotations, weights })
    }

    pub fn integrate(&self, f: impl Fn(&Matrix3<f64>) -> f64 + Sync) -> f64 {
        let vals: Vec<f64> = self.rotations.par_iter().map(&f).collect();
        vals.iter().zip(&self.weights).map(|(v, w)| w * v).sum()
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Multilinear interpolation between cell centers. Periodic axes wrap; other
/// axes extend the edge values. On the SO(3) ball,
/// points beyond |v| = π are first mapped to their antipodal representative.
pub fn interpolate(domain: &DomainSpec, values: &[f64], x: &[f64]) -> f64 {
    let n = domain.ndim();
    let mut pt = [0.0; 3];
    let x = if domain.kind() == DomainKind::So3Ball {
        let v = Vector3::new(x[0], x[1], x[2]);
        let r = v.norm();
        let v = if r > PI { v * (1.0 - 2.0 * PI / r) } else { v };
        pt.copy_from_slice(v.as_slice());
        &pt[..]
    } else {
        x
    };
    let mut base = [0usize; 8];
    let mut frac = [0.0; 8];
    let mut next = [0usize; 8];
    for k in 0..n {
        let ax = domain.axis(k);
        let h = ax.spacing();
        let u = (x[k] - ax.lower) / h - 0.5;
        let i0 = u.floor();
        let t = u - i0;
        let m = ax.cells as isize;
        let i0 = i0 as isize;
        if ax.periodic {
            base[k] = i0.rem_euclid(m) as usize;
            next[k] = (i0 + 1).rem_euclid(m) as usize;
            frac[k] = t;
        } else {
            let a = i0.clamp(0, m - 1) as usize;
            let b = (i0 + 1).clamp(0, m - 1) as usize;
            base[k] = a;
            next[k] = b;
            frac[k] = if a == b { 0.0 } else { t };
        }
    }
    let strides = domain.strides();
    let mut acc = 0.0;
    for corner in 0..(1usize << n) {
        let mut w = 1.0;
        let mut c = 0;
        for k in 0..n {
            if corner >> k & 1 == 1 {
                w *= frac[k];
                c += next[k] * strides[k];
            } else {
                w *= 1.0 - frac[k];
                c += base[k] * strides[k];
            }
        }
        if w != 0.0 {
            acc += w * values[c];
        }
    }
    acc
}

/// Cubic interpolation of a class function on the SO(3) angle grid, with the
/// even reflections at θ = 0 and θ = π.
pub fn radial_interpolate(domain: &DomainSpec, values: &[f64], theta: f64) -> f64 {
    let ax = domain.axis(0);
    let n = ax.cells as isize;
    let h = ax.spacing();
    let th = theta.abs().min(PI);
    let u = th / h - 0.5;
    let i0 = u.floor() as isize;
    let t = u - i0 as f64;
    let at = |i: isize| {
        let j = if i < 0 {
            -1 - i
        } else if i >= n {
            2 * n - 1 - i
        } else {
            i
        };
        values[j.clamp(0, n - 1) as usize]
    };
    let (p0, p1, p2, p3) = (at(i0 - 1), at(i0), at(i0 + 1), at(i0 + 2));
    let w0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
    let w1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
    let w2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
    let w3 = (t + 1.0) * t * (t - 1.0) / 6.0;
    w0 * p0 + w1 * p1 + w2 * p2 + w3 * p3
}

/// Ẽ_i f(g) ≈ [f(g·exp(hE_i)) − f(g·exp(−hE_i))] / 2h with h one cell.
pub fn lie_derivative(f: &GridDensity, i: usize) -> Result<GridField> {
    let dom = f.domain();
    let vals = f.values();
    let unsupported = |op| Error::UnsupportedDomain { op, domain: dom.kind().name() };
    if i >= dom.ndim() {
        return Err(Error::InvalidParameter(format!("basis index {i} on a {}-d group", dom.ndim())));
    }
    let out: Vec<f64> = match dom.kind() {
        DomainKind::EuclideanBox | DomainKind::Circle => grid::partial_derivative(dom, vals, i),
        DomainKind::Se2Box => {
            let h = if i == 2 { dom.axis(2).spacing() } else { dom.axis(0).spacing().min(dom.axis(1).spacing()) };
            (0..dom.len())
                .into_par_iter()
                .map(|c| {
                    let g = dom.center(c);
                    let (s, co) = g[2].sin_cos();
                    let d = match i {
                        0 => [h * co, h * s, 0.0],
                        1 => [-h * s, h * co, 0.0],
                        _ => [0.0, 0.0, h],
                    };
                    let plus = [g[0] + d[0], g[1] + d[1], g[2] + d[2]];
                    let minus = [g[0] - d[0], g[1] - d[1], g[2] - d[2]];
                    (interpolate(dom, vals, &plus) - interpolate(dom, vals, &minus)) / (2.0 * h)
                })
                .collect()
        }
        DomainKind::So3Ball => {
            let h = dom.axis(0).spacing();
            let mut e = Vector3::zeros();
            e[i] = h;
            let (step_p, step_m) = (so3_exp(&e), so3_exp(&-e));
            (0..dom.len())
                .into_par_iter()
                .map(|c| {
                    let r = so3_exp(&Vector3::from_vec(dom.center(c)));
                    let vp = so3_log_any(&(r * step_p));
                    let vm = so3_log_any(&(r * step_m));
                    (interpolate(dom, vals, vp.as_slice()) - interpolate(dom, vals, vm.as_slice())) / (2.0 * h)
                })
                .collect()
        }
        DomainKind::So3Radial | DomainKind::Slab => return Err(unsupported("lie_derivative")),
    };
    GridField::new(f.domain_arc().clone(), out)
}

/// F_ij = ∫ Ẽ_i f Ẽ_j f / f dg from the Lie-derivative stencils. The SO(3)
/// angle grid uses the radial formula (isotropic densities only).
pub fn group_fisher_information(f: &GridDensity) -> Result<DMatrix<f64>> {
    let dom = f.domain();
    match dom.kind() {
        DomainKind::Se2Box | DomainKind::So3Ball => {}
        _ => return fisher_information(f),
    }
    f.check_normalized()?;
    let floor = f.floor();
    let below: f64 = f.values().iter().zip(dom.weights()).filter(|(v, _)| **v <= floor).map(|(v, w)| v * w).sum();
    if below > 0.5 {
        return Err(Error::DegenerateDensity { fraction: below });
    }
    let grads: Vec<GridField> = (0..3).map(|i| lie_derivative(f, i)).collect::<Result<_>>()?;
    let mut m = DMatrix::zeros(3, 3);
    for c in 0..dom.len() {
        let v = f.values()[c];
        let w = dom.weights()[c];
        if v <= floor || w == 0.0 {
            continue;
        }
        for i in 0..3 {
            for j in i..3 {
                m[(i, j)] += grads[i].values()[c] * grads[j].values()[c] * w / v;
            }
        }
    }
    for i in 0..3 {
        for j in 0..i {
            m[(i, j)] = m[(j, i)];
        }
    }
    Ok(m)
}

fn finish(domain: &Arc<DomainSpec>, mut out: Vec<f64>) -> Result<GridDensity> {
    for v in &mut out {
        if !(*v > 0.0) {
            *v = 0.0;
        }
    }
    GridDensity::new(domain.clone(), out)?.normalize()
}

/// (f₁ * f₂)(g) = ∫ f₁(h) f₂(h⁻¹∘g) dh.
pub fn group_convolve(f1: &GridDensity, f2: &GridDensity) -> Result<GridDensity> {
    if !f1.domain().same_grid(f2.domain()) {
        return Err(Error::DomainMismatch("convolution needs both densities on the same grid".into()));
    }
    f1.check_normalized()?;
    f2.check_normalized()?;
    let dom = f1.domain_arc();
    let floor = f1.floor();
    match dom.kind() {
        DomainKind::EuclideanBox | DomainKind::Circle => grid::convolve(f1, f2),
        DomainKind::Se2Box => {
            let src: Vec<(GroupElem, f64)> = (0..dom.len())
                .filter(|&c| f1.values()[c] > floor)
                .map(|c| {
                    let x = dom.center(c);
                    (GroupElem::se2(x[0], x[1], x[2]).inverse(), f1.values()[c] * dom.weights()[c])
                })
                .collect();
            let out = (0..dom.len())
                .into_par_iter()
                .map(|c| {
                    let x = dom.center(c);
                    let g = GroupElem::se2(x[0], x[1], x[2]);
                    src.iter()
                        .map(|(hinv, w)| {
                            let GroupElem::Se2 { x, y, theta } = hinv.compose(&g).unwrap() else { unreachable!() };
                            w * interpolate(dom, f2.values(), &[x, y, theta])
                        })
                        .sum()
                })
                .collect();
            finish(dom, out)
        }
        DomainKind::So3Radial => {
            // Axis of h relative to g enters only through u = cos ν.
            let (nodes, gw) = gauss_legendre(48);
            let ax = dom.axis(0);
            let out = (0..dom.len())
                .into_par_iter()
                .map(|c| {
                    let (sg, cg) = (0.5 * ax.center(c)).sin_cos();
                    let mut acc = 0.0;
                    for j in 0..dom.len() {
                        let a = f1.values()[j];
                        if a <= floor {
                            continue;
                        }
                        let (sh, ch) = (0.5 * ax.center(j)).sin_cos();
                        let inner: f64 = nodes
                            .iter()
                            .zip(&gw)
                            .map(|(u, w)| {
                                let q = (ch * cg + sh * sg * u).abs().min(1.0);
                                w * radial_interpolate(dom, f2.values(), 2.0 * q.acos())
                            })
                            .sum();
                        acc += a * dom.weights()[j] * 0.5 * inner;
                    }
                    acc
                })
                .collect();
            finish(dom, out)
        }
        DomainKind::So3Ball => {
            let src: Vec<(Matrix3<f64>, f64)> = (0..dom.len())
                .filter(|&c| f1.values()[c] > floor && dom.weights()[c] > 0.0)
                .map(|c| (so3_exp(&Vector3::from_vec(dom.center(c))).transpose(), f1.values()[c] * dom.weights()[c]))
                .collect();
            let out = (0..dom.len())
                .into_par_iter()
                .map(|c| {
                    if dom.weights()[c] == 0.0 {
                        return 0.0;
                    }
                    let g = so3_exp(&Vector3::from_vec(dom.center(c)));
                    src.iter().map(|(hinv, w)| w * interpolate(dom, f2.values(), so3_log_any(&(hinv * g)).as_slice())).sum()
                })
                .collect();
            finish(dom, out)
        }
        DomainKind::Slab => Err(Error::UnsupportedDomain { op: "group_convolve", domain: dom.kind().name() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(dom: &Arc<DomainSpec>, x0: f64, y0: f64, t0: f64, s: f64) -> GridDensity {
        GridDensity::from_fn(dom.clone(), |x| {
            let dt = crate::lie::wrap_angle(x[2] - t0);
            (-((x[0] - x0).powi(2) + (x[1] - y0).powi(2)) / (2.0 * s * s) - dt * dt / (2.0 * 0.5 * 0.5)).exp()
        })
        .unwrap()
        .normalize()
        .unwrap()
    }

    #[test]
    fn characters_at_identity() {
        assert_eq!(character(2, 0.0), 5.0);
        assert!((character(3, 1e-3) - (3.5f64 * 1e-3).sin() / (0.5e-3f64).sin()).abs() < 1e-9);
        assert!((character(1, 0.7) - (1.0 + 2.0 * 0.7f64.cos())).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(7);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((s - 2.0 / 13.0).abs() < 1e-14);
    }

    #[test]
    fn product_quadrature_is_normalized_and_shift_invariant() {
        let q = So3Quadrature::new(24, 24, 48).unwrap();
        assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let a = Matrix3::new(0.3, -0.2, 0.5, 0.1, 0.4, 0.0, -0.3, 0.2, 0.6);
        let f = |r: &Matrix3<f64>| (a.component_mul(r).sum()).exp();
        let base = q.integrate(f);
        let g0 = so3_exp(&Vector3::new(0.4, -1.1, 0.8));
        let shifted = q.integrate(|r| f(&(g0 * r)));
        assert!((shifted - base).abs() / base < 1e-3, "{shifted} vs {base}");
        let radial = So3Quadrature::new(64, 1, 1).unwrap();
        assert!((radial.integrate(|_| 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn se2_lie_derivatives() {
        let dom = Arc::new(DomainSpec::se2_box((-2.0, 2.0, 16), (-2.0, 2.0, 16), 16).unwrap());
        let c = GridDensity::uniform(dom.clone());
        assert!(lie_derivative(&c, 0).unwrap().sup_norm() < 1e-12);
        // f = x + 3 is a positive chart function on the box.
        let f = GridDensity::from_fn(dom.clone(), |x| x[0] + 3.0).unwrap();
        let e1 = lie_derivative(&f, 0).unwrap();
        let e2 = lie_derivative(&f, 1).unwrap();
        for cell in 0..dom.len() {
            let x = dom.center(cell);
            if x[0].abs() < 1.5 && x[1].abs() < 1.5 {
                assert!((e1.values()[cell] - x[2].cos()).abs() < 1e-12);
                assert!((e2.values()[cell] + x[2].sin()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn se2_integration_by_parts() {
        let dom = Arc::new(DomainSpec::se2_box((-4.0, 4.0, 48), (-4.0, 4.0, 48), 48).unwrap());
        let f1 = bump(&dom, 0.3, -0.2, 0.4, 0.8);
        let f2 = bump(&dom, -0.4, 0.1, -0.5, 0.7);
        for i in 0..3 {
            let d2 = lie_derivative(&f2, i).unwrap();
            let d1 = lie_derivative(&f1, i).unwrap();
            let w = dom.weights();
            let lhs: f64 = (0..dom.len()).map(|c| f1.values()[c] * d2.values()[c] * w[c]).sum();
            let rhs: f64 = (0..dom.len()).map(|c| f2.values()[c] * d1.values()[c] * w[c]).sum();
            assert!((lhs + rhs).abs() < 1e-3, "i={i}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn so3_ball_derivative_of_angle_function() {
        let dom = Arc::new(DomainSpec::so3_ball(24).unwrap());
        // Ẽ_i |v|² = 2 v_i since J⁻ᵀ v = v.
        let f = GridDensity::from_fn(dom.clone(), |v| 1.0 + v.iter().map(|x| x * x).sum::<f64>()).unwrap();
        let e = lie_derivative(&f, 2).unwrap();
        for c in 0..dom.len() {
            let v = dom.center(c);
            let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if r < 1.5 {
                assert!((e.values()[c] - 2.0 * v[2]).abs() < 0.05, "{} vs {}", e.values()[c], 2.0 * v[2]);
            }
        }
    }

    #[test]
    fn se2_convolution_identity_and_noncommutativity() {
        let dom = Arc::new(DomainSpec::se2_box((-3.0, 3.0, 15), (-3.0, 3.0, 15), 15).unwrap());
        let f = bump(&dom, 0.2, 0.0, 0.0, 0.7);
        let delta = GridDensity::point_mass(dom.clone(), &[0.0, 0.0, 0.0]).unwrap();
        let same = group_convolve(&delta, &f).unwrap();
        assert!(same.l1_distance(&f).unwrap() < 1e-6);
        let a = bump(&dom, 1.0, 0.0, 1.2, 0.5);
        let b = bump(&dom, 0.0, 1.0, 0.0, 0.5);
        let ab = group_convolve(&a, &b).unwrap();
        let ba = group_convolve(&b, &a).unwrap();
        assert!((ab.integral() - 1.0).abs() < 1e-9);
        assert!(ab.l1_distance(&ba).unwrap() > 0.01);
    }

    #[test]
    fn so3_radial_convolution_of_characters() {
        let dom = Arc::new(DomainSpec::so3_radial(128).unwrap());
        // 1 + χ₁/3 + χ₂/5 convolved with itself: coefficients square and pick
        // up 1/(2l+1).
        let f = GridDensity::from_fn(dom.clone(), |t| 1.0 + 0.3 * character(1, t[0]) + 0.1 * character(2, t[0])).unwrap();
        let got = group_convolve(&f.normalize().unwrap(), &f.normalize().unwrap()).unwrap();
        let want = GridDensity::from_fn(dom.clone(), |t| {
            1.0 + 0.09 / 3.0 * character(1, t[0]) + 0.01 / 5.0 * character(2, t[0])
        })
        .unwrap()
        .normalize()
        .unwrap();
        assert!(got.sup_distance(&want).unwrap() < 1e-3, "{}", got.sup_distance(&want).unwrap());
    }

    #[test]
    fn rejects_mismatched_grids() {
        let a = GridDensity::uniform(Arc::new(DomainSpec::circle(16).unwrap()));
        let b = GridDensity::uniform(Arc::new(DomainSpec::circle(32).unwrap()));
        assert!(matches!(group_convolve(&a, &b), Err(Error::DomainMismatch(_))));
        let s = GridDensity::uniform(Arc::new(DomainSpec::so3_radial(16).unwrap()));
        assert!(matches!(lie_derivative(&s, 0), Err(Error::UnsupportedDomain { .. })));
    }
}


use nalgebra::DMatrix;
use serde::Serialize;

use super::{circle_kernel, Representation};
use crate::bounds::BoundsCertificate;
use crate::error::{Error, Result};
use crate::grid::{entropy, fisher_information, DomainKind, GridDensity};
use crate::lie::{character, gauss_legendre};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeBruijnRow {
    pub t: f64,
    pub entropy: f64,
    pub dsdt_fd: f64,
    pub half_tr_df: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeBruijnReport {
    pub rows: Vec<DeBruijnRow>,
    pub certificates: Vec<BoundsCertificate>,
}

impl DeBruijnReport {
    pub fn all_pass(&self) -> bool {
        self.certificates.iter().all(|c| c.pass)
    }
}

/// a_l = ∫ f χ_l dR for l = 0..=l_max on the SO(3) angle grid.
pub fn so3_class_coefficients(f: &GridDensity, l_max: usize) -> Result<Vec<f64>> {
    let dom = f.domain();
    if dom.kind() != DomainKind::So3Radial {
        return Err(Error::UnsupportedDomain { op: "class coefficients", domain: dom.kind().name() });
    }
    let ax = dom.axis(0);
    Ok((0..=l_max)
        .map(|l| (0..dom.len()).map(|i| f.values()[i] * character(l, ax.center(i)) * dom.weights()[i]).sum())
        .collect())
}

const REL_TOL: f64 = 1e-3;
const ABS_FLOOR: f64 = 1e-10;

enum Evolver {
    Circle { d: f64, a: f64, mass: Vec<f64> },
    So3 { k: f64, coeffs: Vec<f64> },
}

impl Evolver {
    fn evolve(&self, alpha: &GridDensity, t: f64) -> Result<GridDensity> {
        let dom = alpha.domain_arc();
        let ax = *dom.axis(0);
        let values = match self {
            Evolver::Circle { d, a, mass } => {
                // Differences of centers are whole cells, so the kernel is
                // evaluated exactly; only nonzero source cells contribute.
                let h = ax.spacing();
                let n = dom.len();
                let table: Vec<f64> = (0..n)
                    .map(|m| circle_kernel(m as f64 * h - a * t, t, *d, Representation::Auto))
                    .collect::<Result<_>>()?;
                (0..n)
                    .map(|i| (0..n).map(|j| mass[j] * table[(i + n - j) % n]).sum::<f64>())
                    .collect::<Vec<f64>>()
            }
            Evolver::So3 { k, coeffs } => (0..dom.len())
                .map(|i| {
                    let th = ax.center(i);
                    coeffs
                        .iter()
                        .enumerate()
                        .map(|(l, a)| {
                            let lf = l as f64;
                            a * (-lf * (lf + 1.0) * k * t).exp() * character(l, th)
                        })
                        .sum()
                })
                .collect(),
        };
        let values = values.into_iter().map(|v: f64| v.max(0.0)).collect();
        GridDensity::new(dom.clone(), values)?.normalize()
    }
}

fn coefficient_count(alpha: &GridDensity, k: f64, t_min: f64) -> Result<Vec<f64>> {
    let n = alpha.domain().len();
    let cap = (n / 2).max(4);
    let all = so3_class_coefficients(alpha, cap)?;
    for l in 2..=cap {
        let lf = l as f64;
        let bound = all[l].abs().max(all[l - 1].abs()) * (2.0 * lf + 1.0) * (-lf * (lf + 1.0) * k * t_min).exp();
        if bound < 1e-13 {
            return Ok(all[..l].to_vec());
        }
    }
    Err(Error::TruncationBudget(cap))
}

/// Checks d/dt S(α * f_t) = ½tr[D F(α * f_t)] at each `t_grid` sample and the
/// integrated form between the first and last samples. `drift` is the
/// constant rotation rate on the circle and must vanish on SO(3).
pub fn debruijn_check(alpha: &GridDensity, dmat: &DMatrix<f64>, drift: &[f64], t_grid: &[f64]) -> Result<DeBruijnReport> {
    alpha.check_normalized()?;
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t > 0.0)) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("time samples must be positive and increasing".into()));
    }
    let dom = alpha.domain();
    let evolver = match dom.kind() {
        DomainKind::Circle => {
            if dmat.shape() != (1, 1) || drift.len() != 1 {
                return Err(Error::ShapeMismatch("circle needs a 1×1 D and a scalar drift".into()));
            }
            let mass = alpha.values().iter().zip(dom.weights()).map(|(v, w)| v * w).collect();
            Evolver::Circle { d: dmat[(0, 0)], a: drift[0], mass }
        }
        DomainKind::So3Radial => {
            if dmat.shape() != (3, 3) || drift.iter().any(|a| *a != 0.0) {
                return Err(Error::InvalidParameter("SO(3) check needs a 3×3 D and zero drift".into()));
            }
            let k = dmat.trace() / 6.0;
            if (dmat - DMatrix::identity(3, 3) * (2.0 * k)).amax() > 1e-12 * (1.0 + k.abs()) {
                return Err(Error::InvalidParameter("class functions need isotropic D = 2K·I".into()));
            }
            Evolver::So3 { k, coeffs: coefficient_count(alpha, k, t_grid[0] * 0.9)? }
        }
        k => return Err(Error::UnsupportedDomain { op: "debruijn_check", domain: k.name() }),
    };
    let rate = |t: f64| -> Result<(f64, f64)> {
        let f = evolver.evolve(alpha, t)?;
        let fisher = fisher_information(&f)?;
        let n = dmat.nrows().min(fisher.nrows());
        let tr = (dmat.view((0, 0), (n, n)) * fisher.view((0, 0), (n, n))).trace();
        Ok((entropy(&f)?, 0.5 * tr))
    };
    let mut rows = Vec::with_capacity(t_grid.len());
    let mut certificates = Vec::new();
    for &t in t_grid {
        let dt = (1e-4f64).min(0.1 * t);
        let (s, half) = rate(t)?;
        let sp = rate(t + dt)?.0;
        let sm = rate(t - dt)?.0;
        let fd = (sp - sm) / (2.0 * dt);
        rows.push(DeBruijnRow { t, entropy: s, dsdt_fd: fd, half_tr_df: half });
        certificates.push(BoundsCertificate::close(
            format!("de Bruijn identity: dS/dt = 1/2 tr[DF] at t = {t:.4}"),
            fd,
            half,
            REL_TOL * half.abs() + ABS_FLOOR,
        ));
    }
    if t_grid.len() > 1 {
        let (t1, t2) = (t_grid[0], t_grid[t_grid.len() - 1]);
        let (x, w) = gauss_legendre(24);
        let mut integral = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            integral += wi * rate(0.5 * (t1 + t2) + 0.5 * (t2 - t1) * xi)?.1;
        }
        integral *= 0.5 * (t2 - t1);
        let gain = rows[rows.len() - 1].entropy - rows[0].entropy;
        certificates.push(BoundsCertificate::close(
            "de Bruijn identity, integrated: S(t2) - S(t1) = 1/2 int tr[DF] dt",
            gain,
            integral,
            REL_TOL * integral.abs() + ABS_FLOOR,
        ));
    }
    Ok(DeBruijnReport { rows, certificates })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::diffusion::KernelSpec;
    use crate::grid::DomainSpec;

    fn times(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn circle_identity_holds() {
        let dom = Arc::new(DomainSpec::circle(256).unwrap());
        let alpha = KernelSpec::circle(1.0, 0.2).density(dom).unwrap().normalize().unwrap();
        let rep = debruijn_check(&alpha, &DMatrix::from_element(1, 1, 1.0), &[0.3], &times(0.1, 1.0, 10)).unwrap();
        for c in &rep.certificates {
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn uniform_alpha_is_stationary() {
        let dom = Arc::new(DomainSpec::circle(64).unwrap());
        let rep = debruijn_check(&GridDensity::uniform(dom), &DMatrix::from_element(1, 1, 1.0), &[0.0], &times(0.1, 1.0, 4))
            .unwrap();
        assert!(rep.all_pass());
        assert!(rep.rows.iter().all(|r| r.half_tr_df.abs() < 1e-12 && r.dsdt_fd.abs() < 1e-9));
    }

    #[test]
    fn so3_identity_holds() {
        let dom = Arc::new(DomainSpec::so3_radial(256).unwrap());
        let alpha = KernelSpec::so3(1.0, 0.1).density(dom).unwrap().normalize().unwrap();
        let rep = debruijn_check(&alpha, &(DMatrix::identity(3, 3) * 2.0), &[0.0; 3], &times(0.05, 1.0, 6)).unwrap();
        for c in &rep.certificates {
            assert!(c.pass, "{c:?}");
        }
        assert!(debruijn_check(&alpha, &DMatrix::identity(3, 3), &[0.1, 0.0, 0.0], &[0.5]).is_err());
    }
}

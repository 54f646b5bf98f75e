//! Measured grids, densities on them, and the primitive functionals.

mod convolve;
mod domain;

use std::f64::consts::{E, PI};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};

pub use convolve::convolve;
pub use domain::{Axis, DomainKind, DomainSpec, WeightRule, MIN_CELLS};

/// Relative floor below which cells are excluded from 1/f integrands.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Tolerance on ∫f dμ = 1 accepted by the functionals.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// Nonnegative density values on a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    domain: Arc<DomainSpec>,
    values: Vec<f64>,
}

/// Signed per-cell values, e.g. operator output.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    domain: Arc<DomainSpec>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Periodic axes whose moments were taken in the [lower, upper) chart.
    pub chart_axes: Vec<usize>,
}

fn integrate(domain: &DomainSpec, values: &[f64]) -> f64 {
    values.iter().zip(domain.weights()).map(|(v, w)| v * w).sum()
}

impl GridDensity {
    pub fn new(domain: Arc<DomainSpec>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a domain with {} cells",
                values.len(),
                domain.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParameter(format!("density value {v} is negative or non-finite")));
        }
        Ok(Self { domain, values })
    }

    /// Samples `f` at cell centers. Negative samples are rejected.
    pub fn from_fn(domain: Arc<DomainSpec>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut x = vec![0.0; domain.ndim()];
        let values = (0..domain.len())
            .map(|c| {
                domain.center_into(c, &mut x);
                f(&x)
            })
            .collect();
        Self::new(domain, values)
    }

    pub fn uniform(domain: Arc<DomainSpec>) -> Self {
        let v = 1.0 / domain.total_measure();
        let values = vec![v; domain.len()];
        Self { domain, values }
    }

    /// Unit mass in the cell containing `x`.
    pub fn point_mass(domain: Arc<DomainSpec>, x: &[f64]) -> Result<Self> {
        let c = domain
            .locate(x)
            .ok_or_else(|| Error::InvalidParameter(format!("point {x:?} lies outside the domain")))?;
        let w = domain.weights()[c];
        if w <= 0.0 {
            return Err(Error::InvalidParameter("point sits in a zero-weight cell".into()));
        }
        let mut values = vec![0.0; domain.len()];
        values[c] = 1.0 / w;
        Ok(Self { domain, values })
    }

    pub(crate) fn from_raw(domain: Arc<DomainSpec>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), domain.len());
        Self { domain, values }
    }

    #[inline]
    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    #[inline]
    pub fn domain_arc(&self) -> &Arc<DomainSpec> {
        &self.domain
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn integral(&self) -> f64 {
        integrate(&self.domain, &self.values)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::InvalidParameter(format!("scale {c} must be finite and nonnegative")));
        }
        Ok(Self { domain: self.domain.clone(), values: self.values.iter().map(|v| v * c).collect() })
    }

    pub fn normalize(&self) -> Result<Self> {
        let mass = self.integral();
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::ZeroMass(mass));
        }
        Ok(Self { domain: self.domain.clone(), values: self.values.iter().map(|v| v / mass).collect() })
    }

    pub fn check_normalized(&self) -> Result<()> {
        let mass = self.integral();
        if (mass - 1.0).abs() > NORMALIZATION_TOL || !mass.is_finite() {
            return Err(Error::NotNormalized(mass));
        }
        Ok(())
    }

    /// Absolute floor derived from [`DENSITY_FLOOR`].
    pub fn floor(&self) -> f64 {
        DENSITY_FLOOR * self.max_value()
    }

    /// ∫|f − g| dμ.
    pub fn l1_distance(&self, other: &GridDensity) -> Result<f64> {
        require_same(&self.domain, &other.domain)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .zip(self.domain.weights())
            .map(|((a, b), w)| (a - b).abs() * w)
            .sum())
    }

    /// max |f − g| over cells.
    pub fn sup_distance(&self, other: &GridDensity) -> Result<f64> {
        require_same(&self.domain, &other.domain)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    pub fn to_field(&self) -> GridField {
        GridField { domain: self.domain.clone(), values: self.values.clone() }
    }
}

impl GridField {
    pub fn new(domain: Arc<DomainSpec>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a domain with {} cells",
                values.len(),
                domain.len()
            )));
        }
        Ok(Self { domain, values })
    }

    #[inline]
    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn integral(&self) -> f64 {
        integrate(&self.domain, &self.values)
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().zip(self.domain.weights()).map(|(v, w)| v.abs() * w).sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

pub(crate) fn require_same(a: &DomainSpec, b: &DomainSpec) -> Result<()> {
    if a.same_grid(b) {
        Ok(())
    } else {
        Err(Error::DomainMismatch(format!("{} grid vs {} grid", a.kind().name(), b.kind().name())))
    }
}

/// −∫ f log f dμ.
pub fn entropy(d: &GridDensity) -> Result<f64> {
    d.check_normalized()?;
    let floor = d.floor();
    Ok(-d
        .values
        .iter()
        .zip(d.domain.weights())
        .filter(|(v, _)| **v > floor)
        .map(|(v, w)| v * v.ln() * w)
        .sum::<f64>())
}

/// ∫ f² dμ.
pub fn l2_norm_sq(d: &GridDensity) -> Result<f64> {
    d.check_normalized()?;
    Ok(d.values.iter().zip(d.domain.weights()).map(|(v, w)| v * v * w).sum())
}

pub fn jensen_lower_bound(d: &GridDensity) -> Result<f64> {
    Ok(-l2_norm_sq(d)?.ln())
}

/// Finite-difference derivative of `values` along axis `k`.
///
/// Central in the interior, one-sided at non-periodic edges. On the SO(3)
/// angle axis the ends mirror, so f'(0) = f'(π) = 0 to first order.
pub fn partial_derivative(domain: &DomainSpec, values: &[f64], k: usize) -> Vec<f64> {
    let ax = domain.axis(k);
    let h = ax.spacing();
    let n = ax.cells;
    let mirror = domain.kind() == DomainKind::So3Radial;
    (0..domain.len())
        .map(|c| {
            let i = domain.coord_index(c, k);
            let lo = domain.neighbor(c, k, -1);
            let hi = domain.neighbor(c, k, 1);
            match (lo, hi) {
                (Some(a), Some(b)) => (values[b] - values[a]) / (2.0 * h),
                _ if mirror => {
                    if i == 0 {
                        (values[hi.unwrap()] - values[c]) / (2.0 * h)
                    } else {
                        (values[c] - values[lo.unwrap()]) / (2.0 * h)
                    }
                }
                (None, Some(b)) if n > 2 => {
                    let b2 = domain.neighbor(c, k, 2).unwrap();
                    (-3.0 * values[c] + 4.0 * values[b] - values[b2]) / (2.0 * h)
                }
                (Some(a), None) if n > 2 => {
                    let a2 = domain.neighbor(c, k, -2).unwrap();
                    (3.0 * values[c] - 4.0 * values[a] + values[a2]) / (2.0 * h)
                }
                _ => 0.0,
            }
        })
        .collect()
}

/// Right-trivialized inverse Jacobian of the SO(3) exponential:
/// exp(v)·exp(εe) = exp(v + ε J⁻¹(v) e) + O(ε²).
pub(crate) fn so3_right_jacobian_inv(v: &Vector3<f64>) -> Matrix3<f64> {
    let th = v.norm();
    let k = v.cross_matrix();
    let c = if th < 1e-4 {
        1.0 / 12.0 + th * th / 720.0
    } else {
        1.0 / (th * th) - (1.0 + th.cos()) / (2.0 * th * th.sin())
    };
    Matrix3::identity() + 0.5 * k + c * k * k
}

/// Invariant directional derivatives of `values` at every cell, one vector per
/// basis direction. Euclidean-like domains use coordinate axes; group domains
/// use the left-invariant fields.
pub(crate) fn invariant_gradients(d: &GridDensity) -> Result<Vec<Vec<f64>>> {
    let dom = d.domain();
    let coord: Vec<Vec<f64>> = (0..dom.ndim()).map(|k| partial_derivative(dom, &d.values, k)).collect();
    match dom.kind() {
        DomainKind::EuclideanBox | DomainKind::Circle | DomainKind::Slab | DomainKind::So3Radial => Ok(coord),
        DomainKind::Se2Box => {
            let mut e1 = vec![0.0; dom.len()];
            let mut e2 = vec![0.0; dom.len()];
            for c in 0..dom.len() {
                let th = dom.axis(2).center(dom.coord_index(c, 2));
                let (s, co) = th.sin_cos();
                e1[c] = co * coord[0][c] + s * coord[1][c];
                e2[c] = -s * coord[0][c] + co * coord[1][c];
            }
            Ok(vec![e1, e2, coord[2].clone()])
        }
        DomainKind::So3Ball => {
            let mut out = vec![vec![0.0; dom.len()]; 3];
            let mut x = [0.0; 3];
            for c in 0..dom.len() {
                dom.center_into(c, &mut x);
                let ji = so3_right_jacobian_inv(&Vector3::from(x));
                let g = Vector3::new(coord[0][c], coord[1][c], coord[2][c]);
                let e = ji.transpose() * g;
                for i in 0..3 {
                    out[i][c] = e[i];
                }
            }
            Ok(out)
        }
    }
}

/// F = ∫ (∇f)(∇f)ᵀ / f dμ, skipping cells below the floor.
///
/// On the SO(3) angle axis this returns (tr F / 3)·I₃ with tr F = ∫ f'² / f dR.
pub fn fisher_information(d: &GridDensity) -> Result<DMatrix<f64>> {
    d.check_normalized()?;
    let dom = d.domain();
    let floor = d.floor();
    let below: f64 = d
        .values
        .iter()
        .zip(dom.weights())
        .filter(|(v, _)| **v <= floor)
        .map(|(v, w)| v * w)
        .sum();
    if below > 0.5 {
        return Err(Error::DegenerateDensity { fraction: below });
    }
    let grads = invariant_gradients(d)?;
    let n = grads.len();
    let mut f = DMatrix::zeros(n, n);
    for c in 0..dom.len() {
        let v = d.values[c];
        let w = dom.weights()[c];
        if v <= floor || w == 0.0 {
            continue;
        }
        let s = w / v;
        for i in 0..n {
            for j in i..n {
                f[(i, j)] += grads[i][c] * grads[j][c] * s;
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            f[(i, j)] = f[(j, i)];
        }
    }
    if dom.kind() == DomainKind::So3Radial {
        return Ok(DMatrix::identity(3, 3) * (f[(0, 0)] / 3.0));
    }
    Ok(f)
}

/// Mean and covariance in the domain's coordinate chart.
pub fn moments(d: &GridDensity) -> Result<MomentSummary> {
    d.check_normalized()?;
    let dom = d.domain();
    if !dom.supports_moments() {
        return Err(Error::UnsupportedDomain { op: "moments", domain: dom.kind().name() });
    }
    let n = dom.ndim();
    let mass = d.integral();
    let mut mean = DVector::zeros(n);
    let mut x = vec![0.0; n];
    for c in 0..dom.len() {
        let m = d.values[c] * dom.weights()[c];
        dom.center_into(c, &mut x);
        for k in 0..n {
            mean[k] += m * x[k];
        }
    }
    mean /= mass;
    let mut cov = DMatrix::zeros(n, n);
    for c in 0..dom.len() {
        let m = d.values[c] * dom.weights()[c];
        dom.center_into(c, &mut x);
        for i in 0..n {
            let di = x[i] - mean[i];
            for j in i..n {
                cov[(i, j)] += m * di * (x[j] - mean[j]);
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    cov /= mass;
    let chart_axes = dom.axes().iter().enumerate().filter(|(_, a)| a.periodic).map(|(k, _)| k).collect();
    Ok(MomentSummary { mean, covariance: cov, chart_axes })
}

fn cholesky_checked(cov: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if !cov.is_square() {
        return Err(Error::ShapeMismatch(format!("covariance is {}x{}", cov.nrows(), cov.ncols())));
    }
    let sym = (cov + cov.transpose()) * 0.5;
    let min_eig = sym.clone().symmetric_eigenvalues().min();
    if !(min_eig > 0.0) {
        return Err(Error::NotPositiveDefinite(min_eig));
    }
    sym.cholesky().ok_or(Error::NotPositiveDefinite(min_eig))
}

/// log{(2πe)^{d/2} |Σ|^{1/2}}.
pub fn gaussian_entropy_closed_form(cov: &DMatrix<f64>) -> Result<f64> {
    let ch = cholesky_checked(cov)?;
    let log_det: f64 = ch.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    Ok(0.5 * cov.nrows() as f64 * (2.0 * PI * E).ln() + 0.5 * log_det)
}

/// Gaussian sampled at cell centers and normalized on the grid.
pub fn gaussian_density(domain: Arc<DomainSpec>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<GridDensity> {
    let n = domain.ndim();
    if mean.len() != n || cov.nrows() != n {
        return Err(Error::ShapeMismatch(format!(
            "mean of length {} and covariance {}x{} on a {n}-dimensional domain",
            mean.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    let ch = cholesky_checked(cov)?;
    let prec = ch.inverse();
    let log_det: f64 = ch.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let log_norm = -0.5 * (n as f64 * (2.0 * PI).ln() + log_det);
    GridDensity::from_fn(domain, |x| {
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += (x[i] - mean[i]) * prec[(i, j)] * (x[j] - mean[j]);
            }
        }
        (log_norm - 0.5 * q).exp()
    })?
    .normalize()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box2(half: f64, n: usize) -> Arc<DomainSpec> {
        Arc::new(DomainSpec::symmetric_box(2, half, n).unwrap())
    }

    #[test]
    fn normalize_scales_and_rejects_zero() {
        let dom = Arc::new(DomainSpec::euclidean_box(&[(0.0, 1.0, 16)]).unwrap());
        let d = GridDensity::new(dom.clone(), vec![2.0; 16]).unwrap().normalize().unwrap();
        assert!(d.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        let z = GridDensity::new(dom, vec![0.0; 16]).unwrap();
        assert!(matches!(z.normalize(), Err(Error::ZeroMass(_))));
    }

    #[test]
    fn gaussian_entropy_on_grid() {
        let dom = box2(6.0, 256);
        let g = gaussian_density(dom, &DVector::zeros(2), &DMatrix::identity(2, 2)).unwrap();
        let s = entropy(&g).unwrap();
        assert!((s - 2.837877066409345).abs() < 1e-3, "{s}");
        let closed = gaussian_entropy_closed_form(&DMatrix::identity(2, 2)).unwrap();
        assert!((closed - 2.837877066409345).abs() < 1e-12);
    }

    #[test]
    fn uniform_entropies() {
        let c = GridDensity::uniform(Arc::new(DomainSpec::circle(64).unwrap()));
        assert!((entropy(&c).unwrap() - (2.0 * PI).ln()).abs() < 1e-12);
        assert!((jensen_lower_bound(&c).unwrap() - (2.0 * PI).ln()).abs() < 1e-12);
        let b = GridDensity::uniform(Arc::new(DomainSpec::euclidean_box(&[(0.0, 1.0, 16)]).unwrap()));
        assert!(entropy(&b).unwrap().abs() < 1e-14);
    }

    #[test]
    fn jensen_gaussian_unit_variance() {
        let dom = Arc::new(DomainSpec::symmetric_box(1, 8.0, 512).unwrap());
        let g = gaussian_density(dom, &DVector::zeros(1), &DMatrix::identity(1, 1)).unwrap();
        let bound = jensen_lower_bound(&g).unwrap();
        assert!((bound - 0.5 * (4.0 * PI).ln()).abs() < 1e-4, "{bound}");
        assert!(entropy(&g).unwrap() > bound);
    }

    #[test]
    fn fisher_of_gaussian_is_inverse_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let dom = box2(6.0, 256);
        let g = gaussian_density(dom, &DVector::zeros(2), &cov).unwrap();
        let f = fisher_information(&g).unwrap();
        let inv = cov.try_inverse().unwrap();
        assert!((&f - &inv).norm() / inv.norm() < 1e-2, "{f}");
    }

    #[test]
    fn fisher_of_uniform_circle_is_zero() {
        let c = GridDensity::uniform(Arc::new(DomainSpec::circle(32).unwrap()));
        assert!(fisher_information(&c).unwrap().norm() < 1e-12);
    }

    #[test]
    fn moments_recover_gaussian() {
        let cov = DMatrix::from_row_slice(2, 2, &[0.8, -0.2, -0.2, 0.4]);
        let mean = DVector::from_vec(vec![0.5, -0.3]);
        let g = gaussian_density(box2(7.0, 200), &mean, &cov).unwrap();
        let m = moments(&g).unwrap();
        assert!((&m.mean - &mean).norm() < 5e-3);
        assert!((&m.covariance - &cov).norm() / cov.norm() < 5e-3);
    }

    #[test]
    fn moments_rejected_on_so3() {
        let d = GridDensity::uniform(Arc::new(DomainSpec::so3_radial(32).unwrap()));
        assert!(matches!(moments(&d), Err(Error::UnsupportedDomain { .. })));
    }

    #[test]
    fn point_mass_moments() {
        let dom = Arc::new(DomainSpec::euclidean_box(&[(0.0, 1.0, 10)]).unwrap());
        let d = GridDensity::point_mass(dom, &[0.33]).unwrap();
        let m = moments(&d).unwrap();
        assert!((m.mean[0] - 0.35).abs() < 1e-12);
        assert!(m.covariance[(0, 0)].abs() < 1e-14);
    }

    #[test]
    fn not_positive_definite_is_reported() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(gaussian_entropy_closed_form(&cov), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn rotation_leaves_gaussian_entropy_unchanged() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5]));
        let (s, c) = 0.7f64.sin_cos();
        let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let rot = &r * &d * r.transpose();
        let a = gaussian_entropy_closed_form(&d).unwrap();
        let b = gaussian_entropy_closed_form(&rot).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}

//! Entropy-rate formulas, inequality certificates and moment propagation.

mod moments;
mod report;

use std::f64::consts::{E, PI};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{
    convolve, entropy, fisher_information, partial_derivative, DomainKind, DomainSpec, GridDensity, GridField,
};
use crate::sde::{Interpretation, SdeModel};

pub use moments::{
    compressible_mean_closed_form, compressible_moment_rhs, moment_ode_rhs, propagate_moments, rk4_trajectory,
    MomentTrajectory,
};
pub use report::{centered_rate, EntropyReport, ReportRow};

/// Default absolute tolerance on certificate slack.
pub const DEFAULT_TOL: f64 = 1e-6;

/// One checked inequality lhs ≥ rhs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsCertificate {
    pub id: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl BoundsCertificate {
    /// Certifies lhs ≥ rhs. NaN on either side never passes.
    pub fn geq(id: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let slack = lhs - rhs;
        Self { id: id.into(), lhs, rhs, slack, tolerance, pass: slack.is_finite() && slack >= -tolerance }
    }

    /// Certifies |lhs − rhs| ≤ tolerance; slack is tolerance minus the gap.
    pub fn close(id: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let gap = (lhs - rhs).abs();
        let slack = tolerance - gap;
        Self { id: id.into(), lhs, rhs, slack, tolerance, pass: slack.is_finite() && slack >= 0.0 }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self.pass = self.slack.is_finite() && self.slack >= -tolerance;
        self
    }
}

/// Drift and diffusion parts of the entropy production rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyRate {
    pub drift: f64,
    pub diffusion: f64,
}

impl EntropyRate {
    pub fn total(&self) -> f64 {
        self.drift + self.diffusion
    }
}

fn check_square(name: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::ShapeMismatch(format!("{name} is {}x{}, expected {n}x{n}", m.nrows(), m.ncols())));
    }
    Ok(())
}

/// Effective drift v_i = aˢ_i − ½ Σ_{j,k} B_ik ∂_j B_jk at x.
fn effective_drift(m: &SdeModel, x: &[f64], t: f64, out: &mut [f64], b: &mut [f64], jac: &mut [f64]) {
    let (d, nm) = (m.dim(), m.noise_dim());
    m.drift_into(x, t, out);
    m.noise_into(x, t, b);
    m.noise_jacobian_into(x, t, jac);
    for i in 0..d {
        let mut s = 0.0;
        for k in 0..nm {
            let div: f64 = (0..d).map(|j| jac[(j * nm + k) * d + j]).sum();
            s += b[i * nm + k] * div;
        }
        out[i] -= 0.5 * s;
    }
}

/// Ṡ = ∫ Σ_i (−aˢ_i + ½ Σ_{j,k} B_ik ∂_j B_jk) ∂_i f dμ + ½ ∫ ‖Bᵀ∇f‖² / f dμ,
/// evaluated at time `t` in the domain's coordinates.
pub fn entropy_rate_theorem1(d: &GridDensity, m: &SdeModel, t: f64) -> Result<EntropyRate> {
    d.check_normalized()?;
    let dom = d.domain();
    if dom.ndim() != m.dim() {
        return Err(Error::ShapeMismatch(format!("model dimension {} on a {}-d domain", m.dim(), dom.ndim())));
    }
    if matches!(dom.kind(), DomainKind::So3Radial | DomainKind::So3Ball) {
        return Err(Error::UnsupportedDomain { op: "entropy_rate_theorem1", domain: dom.kind().name() });
    }
    // Rejects degenerate densities the same way the Fisher matrix does.
    fisher_information(d)?;
    let strat = m.as_interpretation(Interpretation::Stratonovich);
    let (n, nm) = (dom.ndim(), m.noise_dim());
    let grads: Vec<Vec<f64>> = (0..n).map(|k| partial_derivative(dom, d.values(), k)).collect();
    let floor = d.floor();
    let mut x = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut b = vec![0.0; n * nm];
    let mut jac = vec![0.0; n * nm * n];
    let mut drift = 0.0;
    let mut diffusion = 0.0;
    for c in 0..dom.len() {
        let w = dom.weights()[c];
        dom.center_into(c, &mut x);
        effective_drift(&strat, &x, t, &mut v, &mut b, &mut jac);
        for i in 0..n {
            drift -= v[i] * grads[i][c] * w;
        }
        let f = d.values()[c];
        if f > floor {
            for k in 0..nm {
                let s: f64 = (0..n).map(|i| b[i * nm + k] * grads[i][c]).sum();
                diffusion += 0.5 * s * s / f * w;
            }
        }
    }
    Ok(EntropyRate { drift, diffusion })
}

/// ½ tr[D F].
pub fn entropy_rate_constant_d(dmat: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<f64> {
    check_square("D", dmat, f.nrows())?;
    check_square("F", f, f.nrows())?;
    Ok(0.5 * (dmat * f).trace())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftVerdict {
    /// The effective drift is a constant vector: the diffusion bound is tight.
    ConstantVector,
    /// Its divergence is nonnegative everywhere: Ṡ ≥ diffusion term.
    Nonnegative,
    Indefinite,
}

#[derive(Debug, Clone)]
pub struct DriftCondition {
    /// ∂_i(aˢ_i − ½ Σ_{j,k} B_ik ∂_j B_jk) at cell centers.
    pub divergence: GridField,
    pub min_divergence: f64,
    pub verdict: DriftVerdict,
}

/// Classifies the divergence of the effective drift over `domain`.
pub fn drift_condition(m: &SdeModel, domain: std::sync::Arc<DomainSpec>) -> Result<DriftCondition> {
    if domain.ndim() != m.dim() {
        return Err(Error::ShapeMismatch(format!("model dimension {} on a {}-d domain", m.dim(), domain.ndim())));
    }
    let strat = m.as_interpretation(Interpretation::Stratonovich);
    let (n, nm) = (m.dim(), m.noise_dim());
    let mut x = vec![0.0; n];
    let mut xp = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut vp = vec![0.0; n];
    let mut vm = vec![0.0; n];
    let mut b = vec![0.0; n * nm];
    let mut jac = vec![0.0; n * nm * n];
    let mut first: Option<Vec<f64>> = None;
    let mut constant = true;
    let mut div = vec![0.0; domain.len()];
    for c in 0..domain.len() {
        domain.center_into(c, &mut x);
        effective_drift(&strat, &x, 0.0, &mut v, &mut b, &mut jac);
        match &first {
            None => first = Some(v.clone()),
            Some(v0) => {
                let scale = 1.0 + v0.iter().map(|a| a.abs()).fold(0.0, f64::max);
                if v.iter().zip(v0).any(|(a, b)| (a - b).abs() > 1e-9 * scale) {
                    constant = false;
                }
            }
        }
        let mut s = 0.0;
        for i in 0..n {
            let h = 1e-4 * (1.0 + x[i].abs());
            xp.copy_from_slice(&x);
            xp[i] = x[i] + h;
            effective_drift(&strat, &xp, 0.0, &mut vp, &mut b, &mut jac);
            xp[i] = x[i] - h;
            effective_drift(&strat, &xp, 0.0, &mut vm, &mut b, &mut jac);
            s += (vp[i] - vm[i]) / (2.0 * h);
        }
        div[c] = s;
    }
    let min_divergence = div.iter().cloned().fold(f64::INFINITY, f64::min);
    let verdict = if constant {
        DriftVerdict::ConstantVector
    } else if min_divergence >= -1e-8 {
        DriftVerdict::Nonnegative
    } else {
        DriftVerdict::Indefinite
    };
    Ok(DriftCondition { divergence: GridField::new(domain, div)?, min_divergence, verdict })
}

#[derive(Debug, Clone)]
pub struct D0Floor {
    /// λ*·I, or zero when the noise is degenerate.
    pub d0: DMatrix<f64>,
    /// Smallest eigenvalue of BBᵀ over the sampled points.
    pub lambda_star: f64,
    pub degenerate: bool,
    /// min over points of λ_min(BBᵀ − D₀) ≥ 0.
    pub certificate: BoundsCertificate,
}

/// Isotropic lower bound D₀ ⪯ BBᵀ over cell centers and cell corners of `domain`.
pub fn d0_floor(m: &SdeModel, domain: &DomainSpec) -> Result<D0Floor> {
    let n = m.dim();
    if domain.ndim() != n {
        return Err(Error::ShapeMismatch(format!("model dimension {} on a {}-d domain", n, domain.ndim())));
    }
    let mut points: Vec<Vec<f64>> = (0..domain.len()).map(|c| domain.center(c)).collect();
    let corner_counts: Vec<usize> = domain.axes().iter().map(|a| a.cells + 1).collect();
    let total: usize = corner_counts.iter().product();
    for mut r in 0..total {
        let mut p = vec![0.0; n];
        for k in (0..n).rev() {
            let ax = domain.axis(k);
            p[k] = ax.lower + (r % corner_counts[k]) as f64 * ax.spacing();
            r /= corner_counts[k];
        }
        points.push(p);
    }
    let mins: Vec<f64> = points.iter().map(|p| m.diffusion(p, 0.0).symmetric_eigenvalues().min()).collect();
    let raw = mins.iter().cloned().fold(f64::INFINITY, f64::min);
    let degenerate = !(raw > 1e-12);
    let lambda_star = if degenerate { 0.0 } else { raw };
    let worst = mins.iter().map(|l| l - lambda_star).fold(f64::INFINITY, f64::min);
    Ok(D0Floor {
        d0: DMatrix::identity(n, n) * lambda_star,
        lambda_star: raw,
        degenerate,
        certificate: BoundsCertificate::geq("Eq. D0 floor: D0 <= BB^T", worst, 0.0, DEFAULT_TOL),
    })
}

fn symmetric(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// λ_min(Σ − F⁻¹) ≥ 0.
pub fn crb_certificate(sigma: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<BoundsCertificate> {
    check_square("F", f, sigma.nrows())?;
    check_square("Sigma", sigma, sigma.nrows())?;
    let finv = symmetric(f).try_inverse().ok_or(Error::SingularFisher)?;
    if finv.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularFisher);
    }
    let lam = symmetric(&(sigma - finv)).symmetric_eigenvalues().min();
    Ok(BoundsCertificate::geq("Eq. CRB: Sigma >= F^-1", lam, 0.0, DEFAULT_TOL))
}

/// tr[DF] ≥ λ_min(D) tr[F] ≥ λ_min(D) tr[Σ⁻¹]; returns the two links.
pub fn crb_cascade(dmat: &DMatrix<f64>, sigma: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<[BoundsCertificate; 2]> {
    let n = f.nrows();
    check_square("D", dmat, n)?;
    check_square("Sigma", sigma, n)?;
    let lam = symmetric(dmat).symmetric_eigenvalues().min().max(0.0);
    let sinv = symmetric(sigma).try_inverse().ok_or(Error::NotPositiveDefinite(0.0))?;
    let tdf = (dmat * f).trace();
    let tf = f.trace();
    let ts = sinv.trace();
    let scale = 1.0 + tdf.abs();
    Ok([
        BoundsCertificate::geq("CRB cascade: tr[DF] >= lmin(D) tr[F]", tdf, lam * tf, DEFAULT_TOL * scale),
        BoundsCertificate::geq("CRB cascade: lmin(D) tr[F] >= lmin(D) tr[Sigma^-1]", lam * tf, lam * ts, DEFAULT_TOL * scale),
    ])
}

/// ½λ_min(D) tr F ≤ ½tr[DF] ≤ ½λ_max(D) tr F.
pub fn eigenvalue_sandwich(dmat: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<[BoundsCertificate; 2]> {
    check_square("D", dmat, f.nrows())?;
    let eig = symmetric(dmat).symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let mid = entropy_rate_constant_d(dmat, f)?;
    let tf = f.trace();
    let tol = DEFAULT_TOL * (1.0 + mid.abs());
    Ok([
        BoundsCertificate::geq("Lie rate: 1/2 tr[DF] >= 1/2 lmin(D) tr F", mid, 0.5 * lo * tf, tol),
        BoundsCertificate::geq("Lie rate: 1/2 lmax(D) tr F >= 1/2 tr[DF]", 0.5 * hi * tf, mid, tol),
    ])
}

fn require_euclidean(d: &GridDensity, op: &'static str) -> Result<()> {
    match d.domain().kind() {
        DomainKind::EuclideanBox => Ok(()),
        k => Err(Error::UnsupportedDomain { op, domain: k.name() }),
    }
}

/// N(f) = exp(2S/d) / (2πe).
pub fn entropy_power(d: &GridDensity) -> Result<f64> {
    require_euclidean(d, "entropy_power")?;
    let n = d.domain().ndim() as f64;
    Ok((2.0 * entropy(d)? / n).exp() / (2.0 * PI * E))
}

/// N(f₁ * f₂) ≥ N(f₁) + N(f₂).
pub fn epi_certificate(f1: &GridDensity, f2: &GridDensity) -> Result<BoundsCertificate> {
    require_euclidean(f1, "epi_certificate")?;
    let conv = convolve(f1, f2)?;
    Ok(BoundsCertificate::geq(
        "Eq. EPI: N(f1*f2) >= N(f1) + N(f2)",
        entropy_power(&conv)?,
        entropy_power(f1)? + entropy_power(f2)?,
        DEFAULT_TOL,
    ))
}

/// 1/tr[F(f₁*f₂)P] ≥ 1/tr[F(f₁)P] + 1/tr[F(f₂)P].
pub fn fisher_conv_certificate(f1: &GridDensity, f2: &GridDensity, p: &DMatrix<f64>) -> Result<BoundsCertificate> {
    require_euclidean(f1, "fisher_conv_certificate")?;
    let n = f1.domain().ndim();
    check_square("P", p, n)?;
    let lam = symmetric(p).symmetric_eigenvalues().min();
    if !(lam > 0.0) {
        return Err(Error::NotPositiveDefinite(lam));
    }
    let conv = convolve(f1, f2)?;
    let inv_tr = |d: &GridDensity| -> Result<f64> { Ok(1.0 / (fisher_information(d)? * p).trace()) };
    Ok(BoundsCertificate::geq(
        "Eq. Fisher convolution: 1/tr[F(f1*f2)P] >= 1/tr[F(f1)P] + 1/tr[F(f2)P]",
        inv_tr(&conv)?,
        inv_tr(f1)? + inv_tr(f2)?,
        DEFAULT_TOL,
    ))
}

/// S ≥ −log ∫ f² dμ.
pub fn jensen_certificate(s: f64, jensen: f64) -> BoundsCertificate {
    BoundsCertificate::geq("Eq. Jensen: S >= -log int f^2", s, jensen, DEFAULT_TOL)
}

/// S ≤ log{(2πe)^{d/2} |Σ|^{1/2}}.
pub fn max_entropy_certificate(s: f64, gaussian: f64) -> BoundsCertificate {
    BoundsCertificate::geq("Eq. maxent: S <= Gaussian entropy of Sigma", gaussian, s, DEFAULT_TOL)
}

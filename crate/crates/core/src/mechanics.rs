//! Hamiltonian phase-space mechanics with noise and damping: Boltzmann
//! equilibrium, fluctuation–dissipation, marginals and the zero-mass limit.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bounds::BoundsCertificate;
use crate::error::{Error, Result};
use crate::grid::{entropy, DomainKind, DomainSpec, GridDensity};
use crate::sde::{Interpretation, SdeModel};

pub type MatrixFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// ∂M/∂q_i at q.
pub type MassDerivativeFn = Arc<dyn Fn(&[f64], usize) -> DMatrix<f64> + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// H = ½pᵀM⁻¹(q)p + V(q) with damping C(q), noise B(q) and inverse temperature β.
/// Phase states are ordered (q₁..qₙ, p₁..pₙ). k_B = 1, so entropies are in nats.
#[derive(Clone)]
pub struct HamiltonianSystem {
    n: usize,
    beta: f64,
    mass: MatrixFn,
    potential: ScalarFn,
    damping: MatrixFn,
    noise: MatrixFn,
    mass_derivative: Option<MassDerivativeFn>,
    potential_gradient: Option<GradientFn>,
}

impl std::fmt::Debug for HamiltonianSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HamiltonianSystem").field("n", &self.n).field("beta", &self.beta).finish_non_exhaustive()
    }
}

fn fd_step(x: f64) -> f64 {
    1e-5 * (1.0 + x.abs())
}

impl HamiltonianSystem {
    pub fn new(
        n: usize,
        beta: f64,
        mass: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        potential: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        damping: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        noise: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if n == 0 || !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!("need n ≥ 1 and β > 0, got n = {n}, β = {beta}")));
        }
        let sys = Self {
            n,
            beta,
            mass: Arc::new(mass),
            potential: Arc::new(potential),
            damping: Arc::new(damping),
            noise: Arc::new(noise),
            mass_derivative: None,
            potential_gradient: None,
        };
        sys.check_probes()?;
        Ok(sys)
    }

    fn check_probes(&self) -> Result<()> {
        for q in self.probe_points() {
            let m = (self.mass)(&q);
            let c = (self.damping)(&q);
            let b = (self.noise)(&q);
            if m.shape() != (self.n, self.n) || c.shape() != (self.n, self.n) || b.nrows() != self.n {
                return Err(Error::ShapeMismatch(format!("M, C must be {0}×{0} and B must have {0} rows", self.n)));
            }
            if (&m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
                return Err(Error::InvalidParameter("mass matrix is not symmetric".into()));
            }
            m.clone().cholesky().ok_or(Error::SingularMass)?;
            if (&c - c.transpose()).amax() > 1e-12 * (1.0 + c.amax()) {
                return Err(Error::InvalidParameter("damping matrix is not symmetric".into()));
            }
            let lam = c.symmetric_eigenvalues().min();
            if lam < -1e-12 * (1.0 + c.amax()) {
                return Err(Error::InvalidParameter(format!("damping matrix has eigenvalue {lam}")));
            }
        }
        Ok(())
    }

    pub fn with_mass_derivative(mut self, d: impl Fn(&[f64], usize) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.mass_derivative = Some(Arc::new(d));
        self
    }

    pub fn with_potential_gradient(mut self, g: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.potential_gradient = Some(Arc::new(g));
        self
    }

    /// Copy with C scaled by `factor`.
    pub fn with_damping_scaled(&self, factor: f64) -> Self {
        let c = self.damping.clone();
        Self { damping: Arc::new(move |q| c(q) * factor), ..self.clone() }
    }

    /// m q̈ + c₀ q̇ + k q = b₀ ẇ.
    pub fn oscillator(m: f64, k: f64, c0: f64, b0: f64, beta: f64) -> Result<Self> {
        if !(m > 0.0 && k > 0.0) {
            return Err(Error::InvalidParameter(format!("need m, k > 0, got {m}, {k}")));
        }
        Ok(Self::new(
            1,
            beta,
            move |_| DMatrix::from_element(1, 1, m),
            move |q| 0.5 * k * q[0] * q[0],
            move |_| DMatrix::from_element(1, 1, c0),
            move |_| DMatrix::from_element(1, 1, b0),
        )?
        .with_mass_derivative(|_, _| DMatrix::zeros(1, 1))
        .with_potential_gradient(move |q, g| g[0] = k * q[0]))
    }

    /// V(q) = (q² − 1)² with constant m, c₀, b₀.
    pub fn double_well(m: f64, c0: f64, b0: f64, beta: f64) -> Result<Self> {
        Ok(Self::new(
            1,
            beta,
            move |_| DMatrix::from_element(1, 1, m),
            |q| (q[0] * q[0] - 1.0).powi(2),
            move |_| DMatrix::from_element(1, 1, c0),
            move |_| DMatrix::from_element(1, 1, b0),
        )?
        .with_mass_derivative(|_, _| DMatrix::zeros(1, 1))
        .with_potential_gradient(|q, g| g[0] = 4.0 * q[0] * (q[0] * q[0] - 1.0)))
    }

    /// Two-link arm: M(q) = [[3 + 2cos q₂, 1 + cos q₂], [1 + cos q₂, 1]], V = ½k|q|²,
    /// C = c₀I, B = b₀I.
    pub fn two_link(k: f64, c0: f64, b0: f64, beta: f64) -> Result<Self> {
        let mass = |q: &[f64]| {
            let c = q[1].cos();
            DMatrix::from_row_slice(2, 2, &[3.0 + 2.0 * c, 1.0 + c, 1.0 + c, 1.0])
        };
        Ok(Self::new(
            2,
            beta,
            mass,
            move |q| 0.5 * k * (q[0] * q[0] + q[1] * q[1]),
            move |_| DMatrix::identity(2, 2) * c0,
            move |_| DMatrix::identity(2, 2) * b0,
        )?
        .with_mass_derivative(|q, i| {
            if i == 0 {
                return DMatrix::zeros(2, 2);
            }
            let s = q[1].sin();
            DMatrix::from_row_slice(2, 2, &[-2.0 * s, -s, -s, 0.0])
        })
        .with_potential_gradient(move |q, g| {
            g[0] = k * q[0];
            g[1] = k * q[1];
        }))
    }

    pub fn dof(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mass(&self, q: &[f64]) -> DMatrix<f64> {
        (self.mass)(q)
    }

    pub fn damping(&self, q: &[f64]) -> DMatrix<f64> {
        (self.damping)(q)
    }

    pub fn noise(&self, q: &[f64]) -> DMatrix<f64> {
        (self.noise)(q)
    }

    pub fn potential(&self, q: &[f64]) -> f64 {
        (self.potential)(q)
    }

    pub fn mass_inverse(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        Ok((self.mass)(q).cholesky().ok_or(Error::SingularMass)?.inverse())
    }

    /// ∂M/∂q_i, analytic if provided, else central differences.
    pub fn mass_derivative(&self, q: &[f64], i: usize) -> DMatrix<f64> {
        if let Some(d) = &self.mass_derivative {
            return d(q, i);
        }
        let h = fd_step(q[i]);
        let mut qp = q.to_vec();
        let mut qm = q.to_vec();
        qp[i] += h;
        qm[i] -= h;
        ((self.mass)(&qp) - (self.mass)(&qm)) / (2.0 * h)
    }

    pub fn potential_gradient(&self, q: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n];
        if let Some(f) = &self.potential_gradient {
            f(q, &mut g);
            return g;
        }
        let mut x = q.to_vec();
        for i in 0..self.n {
            let h = fd_step(q[i]);
            x[i] = q[i] + h;
            let vp = (self.potential)(&x);
            x[i] = q[i] - h;
            let vm = (self.potential)(&x);
            x[i] = q[i];
            g[i] = (vp - vm) / (2.0 * h);
        }
        g
    }

    pub fn hamiltonian(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        let minv = self.mass_inverse(q)?;
        let p = DVector::from_column_slice(p);
        Ok(0.5 * p.dot(&(&minv * &p)) + (self.potential)(q))
    }

    /// (α, γ): α = M⁻¹p, γ_i = −∂H/∂q_i − (CM⁻¹p)_i.
    pub fn phase_drift(&self, q: &[f64], p: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let minv = self.mass_inverse(q)?;
        let pv = DVector::from_column_slice(p);
        let alpha = &minv * &pv;
        let damp = (self.damping)(q) * &alpha;
        let grad = self.potential_gradient(q);
        let gamma = (0..self.n)
            .map(|i| {
                // ∂(M⁻¹)/∂q_i = −M⁻¹(∂M/∂q_i)M⁻¹.
                let dm = self.mass_derivative(q, i);
                0.5 * alpha.dot(&(&dm * &alpha)) - grad[i] - damp[i]
            })
            .collect();
        Ok((alpha.iter().copied().collect(), gamma))
    }

    /// Σ_i ∂α_i/∂q_i + ∂γ_i/∂p_i by central differences.
    pub fn phase_divergence(&self, q: &[f64], p: &[f64]) -> Result<f64> {
        let mut div = 0.0;
        for i in 0..self.n {
            let h = fd_step(q[i]);
            let mut qp = q.to_vec();
            let mut qm = q.to_vec();
            qp[i] += h;
            qm[i] -= h;
            div += (self.phase_drift(&qp, p)?.0[i] - self.phase_drift(&qm, p)?.0[i]) / (2.0 * h);
            let h = fd_step(p[i]);
            let mut pp = p.to_vec();
            let mut pm = p.to_vec();
            pp[i] += h;
            pm[i] -= h;
            div += (self.phase_drift(q, &pp)?.1[i] - self.phase_drift(q, &pm)?.1[i]) / (2.0 * h);
        }
        Ok(div)
    }

    /// tr(CM⁻¹) at q.
    pub fn damping_trace(&self, q: &[f64]) -> Result<f64> {
        Ok(((self.damping)(q) * self.mass_inverse(q)?).trace())
    }

    /// The 2n-dimensional phase SDE; noise enters the p rows only.
    pub fn phase_sde(&self) -> Result<SdeModel> {
        let n = self.n;
        let m = (self.noise)(&vec![0.0; n]).ncols();
        let drift_sys = self.clone();
        let noise_sys = self.clone();
        let model = SdeModel::new(
            2 * n,
            m,
            Interpretation::Ito,
            move |x, _, o| match drift_sys.phase_drift(&x[..n], &x[n..]) {
                Ok((a, g)) => {
                    o[..n].copy_from_slice(&a);
                    o[n..].copy_from_slice(&g);
                }
                Err(_) => o.fill(f64::NAN),
            },
            move |x, _, o| {
                o.fill(0.0);
                let b = (noise_sys.noise)(&x[..n]);
                for i in 0..n {
                    for j in 0..m {
                        o[(n + i) * m + j] = b[(i, j)];
                    }
                }
            },
        )?;
        Ok(model)
    }

    /// Default probe points: 5 values per q-axis on [−2, 2].
    pub fn probe_points(&self) -> Vec<Vec<f64>> {
        let vals = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let mut out = vec![vec![]];
        for _ in 0..self.n {
            out = out.into_iter().flat_map(|q| vals.iter().map(move |v| [q.clone(), vec![*v]].concat())).collect();
        }
        out
    }

    /// max ‖C(q) − (β/2)B(q)B(q)ᵀ‖ over the probe points.
    pub fn fdt_gap(&self) -> f64 {
        self.probe_points()
            .iter()
            .map(|q| {
                let b = (self.noise)(q);
                ((self.damping)(q) - &b * b.transpose() * (0.5 * self.beta)).norm()
            })
            .fold(0.0, f64::max)
    }

    fn check_phase_domain(&self, domain: &DomainSpec) -> Result<()> {
        if domain.kind() != DomainKind::EuclideanBox || domain.ndim() != 2 * self.n {
            return Err(Error::InvalidDomain(format!("phase space needs a {}-d Euclidean box", 2 * self.n)));
        }
        Ok(())
    }

    /// Returns −βH at every cell center and its maximum.
    fn log_boltzmann(&self, domain: &DomainSpec) -> Result<(Vec<f64>, f64)> {
        self.check_phase_domain(domain)?;
        let n = self.n;
        let mut x = vec![0.0; 2 * n];
        let mut out = Vec::with_capacity(domain.len());
        for c in 0..domain.len() {
            domain.center_into(c, &mut x);
            out.push(-self.beta * self.hamiltonian(&x[n..], &x[..n])?);
        }
        let top = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok((out, top))
    }

    /// Z = ∫∫ e^{−βH} dp dq by midpoint quadrature.
    pub fn partition_function(&self, domain: &DomainSpec) -> Result<f64> {
        let (lb, _) = self.log_boltzmann(domain)?;
        Ok(lb.iter().zip(domain.weights()).map(|(l, w)| l.exp() * w).sum())
    }
}

/// e^{−βH}/Z on a phase box whose boundary values are below 1e-12 of the peak.
pub fn boltzmann_density(sys: &HamiltonianSystem, domain: Arc<DomainSpec>) -> Result<GridDensity> {
    let (lb, top) = sys.log_boltzmann(&domain)?;
    let mut edge = f64::NEG_INFINITY;
    let mut idx = vec![0usize; domain.ndim()];
    for (c, l) in lb.iter().enumerate() {
        domain.unravel(c, &mut idx);
        if idx.iter().zip(domain.axes()).any(|(i, ax)| *i == 0 || *i + 1 == ax.cells) {
            edge = edge.max(*l);
        }
    }
    let ratio = (edge - top).exp();
    if ratio >= 1e-12 {
        return Err(Error::DomainTooSmall { ratio });
    }
    GridDensity::new(domain, lb.iter().map(|l| (l - top).exp()).collect())?.normalize()
}

/// Passes iff C = (β/2)BBᵀ within `tol` at every probe point; slack is minus the gap.
pub fn fdt_certificate(sys: &HamiltonianSystem, tol: f64) -> BoundsCertificate {
    BoundsCertificate::geq("Theorem 2 (FDT): C = beta/2 B B^T", 0.0, sys.fdt_gap(), tol)
}

/// f(q) = |det M(q)|^{−1/2} ∫ f dp on the q-box with weights √det M dq.
pub fn configurational_marginal(f: &GridDensity, sys: &HamiltonianSystem) -> Result<GridDensity> {
    f.check_normalized()?;
    let dom = f.domain();
    sys.check_phase_domain(dom)?;
    let n = sys.dof();
    let bounds: Vec<(f64, f64, usize)> = dom.axes()[..n].iter().map(|a| (a.lower, a.upper, a.cells)).collect();
    let qbox = DomainSpec::euclidean_box(&bounds)?;
    let det = |q: &[f64]| sys.mass(q).determinant().abs().sqrt();
    let qdom = Arc::new(qbox.with_metric(det)?);
    let mut mass = vec![0.0; qdom.len()];
    let stride = dom.strides()[n - 1];
    for c in 0..dom.len() {
        let qc = c / stride;
        mass[qc] += f.values()[c] * dom.weights()[c];
    }
    let values = mass.iter().zip(qdom.weights()).map(|(m, w)| m / w).collect();
    GridDensity::new(qdom, values)
}

/// f(p) = ∫ f √det M dq, a density on the p-box against dp.
pub fn momentum_marginal(f: &GridDensity, sys: &HamiltonianSystem) -> Result<GridDensity> {
    f.check_normalized()?;
    let dom = f.domain();
    sys.check_phase_domain(dom)?;
    let n = sys.dof();
    let bounds: Vec<(f64, f64, usize)> = dom.axes()[n..].iter().map(|a| (a.lower, a.upper, a.cells)).collect();
    let pdom = Arc::new(DomainSpec::euclidean_box(&bounds)?);
    let stride = dom.strides()[n - 1];
    let mut mass = vec![0.0; pdom.len()];
    let mut q = vec![0.0; n];
    let mut x = vec![0.0; 2 * n];
    for c in 0..dom.len() {
        dom.center_into(c, &mut x);
        q.copy_from_slice(&x[..n]);
        mass[c % stride] += f.values()[c] * dom.weights()[c] * sys.mass(&q).determinant().abs().sqrt();
    }
    let values = mass.iter().zip(pdom.weights()).map(|(m, w)| m / w).collect();
    GridDensity::new(pdom, values)?.normalize()
}

/// S_Q = −∫ f log f √det M dq.
pub fn config_entropy(marginal: &GridDensity) -> Result<f64> {
    entropy(marginal)
}

/// Stationary defects of the Itô (Δ₁) and Stratonovich (Δ₂) zero-mass models
/// evaluated on the exact configurational marginal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroMassDiscrepancy {
    pub x: Vec<f64>,
    pub delta1: Vec<f64>,
    pub delta2: Vec<f64>,
    /// Δ₁/Δ₂ where |Δ₂| > 1e-12, NaN elsewhere.
    pub ratio: Vec<f64>,
    pub max_gap: f64,
}

/// `b(x)` returns (b, b′, b″); c = (β/2)b² is enforced.
pub fn zero_mass_discrepancy(b: impl Fn(f64) -> [f64; 3], k: f64, beta: f64, xs: &[f64]) -> Result<ZeroMassDiscrepancy> {
    if !(k > 0.0 && beta > 0.0) {
        return Err(Error::InvalidParameter(format!("need k, β > 0, got {k}, {beta}")));
    }
    let norm = (beta * k / (2.0 * std::f64::consts::PI)).sqrt();
    let g = 2.0 / (beta * beta);
    let mut out = ZeroMassDiscrepancy { x: xs.to_vec(), delta1: vec![], delta2: vec![], ratio: vec![], max_gap: 0.0 };
    for &x in xs {
        let [b0, b1, b2] = b(x);
        if b0 == 0.0 {
            return Err(Error::InvalidParameter(format!("b vanishes at x = {x}")));
        }
        let f = norm * (-0.5 * beta * k * x * x).exp();
        let f1 = -beta * k * x * f;
        let f2 = (-beta * k + beta * beta * k * k * x * x) * f;
        let cinv = 2.0 / (beta * b0 * b0);
        let dcinv = -4.0 * b1 / (beta * b0.powi(3));
        let advect = k * (dcinv * x * f + cinv * f + cinv * x * f1);
        let spurious = -3.0 * b1 * b1 / b0.powi(4) * f + b2 / b0.powi(3) * f + b1 / b0.powi(3) * f1;
        let fick = -2.0 * b1 / b0.powi(3) * f1 + f2 / (b0 * b0);
        let d1 = advect + g * (-2.0 * spurious + fick);
        let d2 = advect + g * (-spurious + fick);
        out.max_gap = out.max_gap.max((d1 - 2.0 * d2).abs());
        out.delta1.push(d1);
        out.delta2.push(d2);
        out.ratio.push(if d2.abs() > 1e-12 { d1 / d2 } else { f64::NAN });
    }
    Ok(out)
}

/// det [[J⁻ᵀ, coupling], [0, J]].
pub fn phase_volume_identity(j: &DMatrix<f64>, coupling: &DMatrix<f64>) -> Result<f64> {
    let n = j.nrows();
    if j.ncols() != n || coupling.shape() != (n, n) {
        return Err(Error::ShapeMismatch("J and the coupling block must be square and equal-sized".into()));
    }
    let lu = j.clone().lu();
    if lu.determinant().abs() < 1e-14 * j.amax().powi(n as i32).max(f64::MIN_POSITIVE) {
        return Err(Error::SingularJacobian);
    }
    let jinv_t = lu.try_inverse().ok_or(Error::SingularJacobian)?.transpose();
    let mut big = DMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&jinv_t);
    big.view_mut((0, n), (n, n)).copy_from(coupling);
    big.view_mut((n, n), (n, n)).copy_from(j);
    Ok(big.determinant())
}

//! Flux-form finite differences for the Itô and Stratonovich Fokker–Planck operators.

mod problems;

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{partial_derivative, require_same, DomainKind, DomainSpec, GridDensity, GridField};
use crate::sde::{Interpretation, SdeModel};

pub use problems::{compressible_problem, couette_problem};

/// Cumulative clipped negative mass tolerated by [`solve`].
pub const CLIP_BUDGET: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Density vanishes before the box edge; edges are closed to flux.
    Decay,
    Periodic,
    /// Zero normal flux on the walls of a slab.
    ReflectingSlab,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FpeForm {
    Ito,
    Stratonovich,
}

#[derive(Debug, Clone)]
pub struct FpeProblem {
    domain: Arc<DomainSpec>,
    model: SdeModel,
    boundary: Boundary,
    initial: GridDensity,
    ito: Coefficients,
    strat: Coefficients,
}

/// Per-cell drift and noise samples for one interpretation.
#[derive(Debug, Clone)]
struct Coefficients {
    t: f64,
    /// drift[i][c]
    drift: Vec<Vec<f64>>,
    /// noise[i·m + k][c]
    noise: Vec<Vec<f64>>,
    /// diffusion[i·d + j][c] = (BBᵀ)_ij
    diffusion: Vec<Vec<f64>>,
    /// Whether diffusion[i·d + j] has any nonzero entry.
    coupled: Vec<bool>,
    /// Per axis, (a/2 + D_ii/2h)/h and (a/2 − D_ii/2h)/h: the Itô face flux
    /// over h is lower[c]·f[c] + upper[c2]·f[c2].
    faces: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Coefficients {
    fn sample(domain: &DomainSpec, model: &SdeModel, t: f64) -> Self {
        let (d, m) = (model.dim(), model.noise_dim());
        let n = domain.len();
        let mut drift = vec![vec![0.0; n]; d];
        let mut noise = vec![vec![0.0; n]; d * m];
        let mut diffusion = vec![vec![0.0; n]; d * d];
        let mut x = vec![0.0; d];
        let mut a = vec![0.0; d];
        let mut b = vec![0.0; d * m];
        for c in 0..n {
            domain.center_into(c, &mut x);
            model.drift_into(&x, t, &mut a);
            model.noise_into(&x, t, &mut b);
            for i in 0..d {
                drift[i][c] = a[i];
                for k in 0..m {
                    noise[i * m + k][c] = b[i * m + k];
                }
                for j in 0..d {
                    diffusion[i * d + j][c] = (0..m).map(|k| b[i * m + k] * b[j * m + k]).sum();
                }
            }
        }
        let coupled = diffusion.iter().map(|q| q.iter().any(|v| *v != 0.0)).collect();
        let faces = (0..d)
            .map(|i| {
                let h = domain.axis(i).spacing();
                let (a, q) = (&drift[i], &diffusion[i * d + i]);
                let lower = (0..n).map(|c| (0.5 * a[c] + 0.5 * q[c] / h) / h).collect();
                let upper = (0..n).map(|c| (0.5 * a[c] - 0.5 * q[c] / h) / h).collect();
                (lower, upper)
            })
            .collect();
        Self { t, drift, noise, diffusion, coupled, faces }
    }
}

impl FpeProblem {
    pub fn new(domain: Arc<DomainSpec>, model: SdeModel, boundary: Boundary, initial: GridDensity) -> Result<Self> {
        match domain.kind() {
            DomainKind::So3Radial | DomainKind::So3Ball => {
                return Err(Error::UnsupportedDomain { op: "fpe_solver", domain: domain.kind().name() })
            }
            DomainKind::Circle if boundary != Boundary::Periodic => {
                return Err(Error::InvalidDomain("circle domains need a periodic boundary".into()))
            }
            DomainKind::Slab if boundary != Boundary::ReflectingSlab => {
                return Err(Error::InvalidDomain("slab domains need a reflecting boundary".into()))
            }
            DomainKind::EuclideanBox | DomainKind::Se2Box if boundary == Boundary::ReflectingSlab => {
                return Err(Error::InvalidDomain("reflecting boundary needs a slab domain".into()))
            }
            _ => {}
        }
        if model.dim() != domain.ndim() {
            return Err(Error::ShapeMismatch(format!(
                "model dimension {} on a {}-d domain",
                model.dim(),
                domain.ndim()
            )));
        }
        require_same(&domain, initial.domain())?;
        initial.check_normalized()?;
        let ito_model = model.as_interpretation(Interpretation::Ito);
        let strat_model = model.as_interpretation(Interpretation::Stratonovich);
        let ito = Coefficients::sample(&domain, &ito_model, 0.0);
        let strat = Coefficients::sample(&domain, &strat_model, 0.0);
        Ok(Self { domain, model, boundary, initial, ito, strat })
    }

    #[inline]
    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn domain_arc(&self) -> &Arc<DomainSpec> {
        &self.domain
    }

    #[inline]
    pub fn model(&self) -> &SdeModel {
        &self.model
    }

    #[inline]
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    #[inline]
    pub fn initial(&self) -> &GridDensity {
        &self.initial
    }

    pub fn with_initial(&self, initial: GridDensity) -> Result<Self> {
        require_same(&self.domain, initial.domain())?;
        initial.check_normalized()?;
        Ok(Self { initial, ..self.clone() })
    }

    fn coefficients(&self, form: FpeForm, t: f64) -> std::borrow::Cow<'_, Coefficients> {
        let cached = match form {
            FpeForm::Ito => &self.ito,
            FpeForm::Stratonovich => &self.strat,
        };
        if !self.model.is_time_dependent() || cached.t == t {
            return std::borrow::Cow::Borrowed(cached);
        }
        let interp = match form {
            FpeForm::Ito => Interpretation::Ito,
            FpeForm::Stratonovich => Interpretation::Stratonovich,
        };
        std::borrow::Cow::Owned(Coefficients::sample(&self.domain, &self.model.as_interpretation(interp), t))
    }

    /// Largest eigenvalue of BBᵀ over the grid.
    pub fn max_diffusion(&self) -> f64 {
        let d = self.model.dim();
        let n = self.domain.len();
        let mut worst: f64 = 0.0;
        for c in 0..n {
            let q = nalgebra::DMatrix::from_fn(d, d, |i, j| self.ito.diffusion[i * d + j][c]);
            let lam = q.symmetric_eigenvalues().max();
            worst = worst.max(lam);
        }
        worst
    }

    /// max over cells and axes of |a_i| / h_i.
    pub fn max_advection_rate(&self) -> f64 {
        let h = self.domain.spacings();
        self.ito
            .drift
            .iter()
            .zip(&h)
            .map(|(a, h)| a.iter().fold(0.0f64, |m, v| m.max(v.abs())) / h)
            .fold(0.0, f64::max)
    }

    /// Explicit step limits: (diffusive, advective).
    pub fn stability_bounds(&self) -> (f64, f64) {
        let h = self.domain.min_spacing();
        let q = self.max_diffusion();
        let diff = if q > 0.0 { 0.2 * h * h / q } else { f64::INFINITY };
        let r = self.max_advection_rate();
        let adv = if r > 0.0 { 1.0 / r } else { f64::INFINITY };
        (diff, adv)
    }

    pub fn check_stability(&self, dt: f64) -> Result<()> {
        let (diff, adv) = self.stability_bounds();
        if dt > diff {
            return Err(Error::StabilityViolation { dt, bound: diff, reason: "diffusive limit 0.2 h²/max|BBᵀ|" });
        }
        if dt > adv {
            return Err(Error::StabilityViolation { dt, bound: adv, reason: "advective limit h/max|a|" });
        }
        Ok(())
    }

    /// Largest stable step, times a safety factor.
    pub fn suggested_dt(&self, safety: f64) -> f64 {
        let (diff, adv) = self.stability_bounds();
        safety * diff.min(adv)
    }

    /// Writes the operator applied to `f` into `out`.
    pub fn apply_into(&self, form: FpeForm, t: f64, f: &[f64], out: &mut [f64]) {
        let mut scratch = Vec::new();
        self.apply_scratch(form, t, f, out, &mut scratch);
    }

    fn apply_scratch(&self, form: FpeForm, t: f64, f: &[f64], out: &mut [f64], scratch: &mut Vec<Vec<f64>>) {
        let coef = self.coefficients(form, t);
        let dom = &*self.domain;
        let d = self.model.dim();
        let m = self.model.noise_dim();
        let n = dom.len();
        out.iter_mut().for_each(|v| *v = 0.0);
        let bufs = if form == FpeForm::Ito { 2 } else { 2 + m };
        scratch.resize_with(bufs, Vec::new);
        for b in scratch.iter_mut() {
            b.resize(n, 0.0);
        }
        let (head, bf) = scratch.split_at_mut(2);
        let (cross, prod) = head.split_at_mut(1);
        let (cross, prod) = (&mut cross[0], &mut prod[0]);
        for i in 0..d {
            let h = dom.axis(i).spacing();
            let coupled = (0..d).any(|j| j != i && coef.coupled[i * d + j]);
            match form {
                FpeForm::Ito => {
                    if coupled {
                        cross.iter_mut().for_each(|v| *v = 0.0);
                    }
                    for j in (0..d).filter(|&j| j != i && coef.coupled[i * d + j]) {
                        let q = &coef.diffusion[i * d + j];
                        for c in 0..n {
                            prod[c] = q[c] * f[c];
                        }
                        for (acc, g) in cross.iter_mut().zip(partial_derivative(dom, prod, j)) {
                            *acc += g;
                        }
                    }
                    let (lower, upper) = &coef.faces[i];
                    let cross = &*cross;
                    for_each_face(dom, i, |c, c2| {
                        let mut flux = lower[c] * f[c] + upper[c2] * f[c2];
                        if coupled {
                            flux -= 0.25 * (cross[c] + cross[c2]) / h;
                        }
                        out[c] -= flux;
                        out[c2] += flux;
                    });
                }
                FpeForm::Stratonovich => {
                    let a = &coef.drift[i];
                    let mut any_cross = false;
                    cross.iter_mut().for_each(|v| *v = 0.0);
                    for k in 0..m {
                        let b = &coef.noise[i * m + k];
                        for c in 0..n {
                            bf[k][c] = b[c] * f[c];
                        }
                        if b.iter().all(|v| *v == 0.0) {
                            continue;
                        }
                        for j in (0..d).filter(|&j| j != i) {
                            let bj = &coef.noise[j * m + k];
                            if bj.iter().all(|v| *v == 0.0) {
                                continue;
                            }
                            for c in 0..n {
                                prod[c] = bj[c] * f[c];
                            }
                            for (c, g) in partial_derivative(dom, prod, j).into_iter().enumerate() {
                                cross[c] += b[c] * g;
                            }
                            any_cross = true;
                        }
                    }
                    let cross = &*cross;
                    for_each_face(dom, i, |c, c2| {
                        let mut s = 0.0;
                        for k in 0..m {
                            let b = &coef.noise[i * m + k];
                            s += 0.5 * (b[c] + b[c2]) * (bf[k][c2] - bf[k][c]);
                        }
                        let mut flux = 0.5 * (a[c] * f[c] + a[c2] * f[c2]) - 0.5 * s / h;
                        if any_cross {
                            flux -= 0.25 * (cross[c] + cross[c2]);
                        }
                        out[c] -= flux / h;
                        out[c2] += flux / h;
                    });
                }
            }
        }
    }

    fn apply(&self, form: FpeForm, d: &GridDensity) -> Result<GridField> {
        require_same(&self.domain, d.domain())?;
        let mut out = vec![0.0; self.domain.len()];
        self.apply_into(form, 0.0, d.values(), &mut out);
        GridField::new(self.domain.clone(), out)
    }
}

/// Calls `face(c, c2)` for every pair of cells adjacent along axis `k`,
/// with `c2` one step up from `c`; periodic axes include the wrap face.
#[inline]
fn for_each_face(dom: &DomainSpec, k: usize, mut face: impl FnMut(usize, usize)) {
    let ax = dom.axis(k);
    let (stride, cells) = (dom.strides()[k], ax.cells);
    let block = stride * cells;
    for base in (0..dom.len()).step_by(block) {
        for j in 0..cells - 1 {
            let row = base + j * stride;
            for c in row..row + stride {
                face(c, c + stride);
            }
        }
        if ax.periodic {
            let top = base + (cells - 1) * stride;
            for inner in 0..stride {
                face(top + inner, base + inner);
            }
        }
    }
}

/// −Σ∂_i(a_i f) + ½ΣΣ ∂_i∂_j((BBᵀ)_ij f).
pub fn apply_operator_ito(p: &FpeProblem, d: &GridDensity) -> Result<GridField> {
    p.apply(FpeForm::Ito, d)
}

/// −Σ∂_i(aˢ_i f) + ½Σ∂_i[Σ_k B_ik ∂_j(B_jk f)].
pub fn apply_operator_stratonovich(p: &FpeProblem, d: &GridDensity) -> Result<GridField> {
    p.apply(FpeForm::Stratonovich, d)
}

pub fn apply_operator(p: &FpeProblem, d: &GridDensity, form: FpeForm) -> Result<GridField> {
    p.apply(form, d)
}

/// ∫ |𝒟 f| dμ.
pub fn stationarity_residual(p: &FpeProblem, candidate: &GridDensity, form: FpeForm) -> Result<f64> {
    Ok(p.apply(form, candidate)?.l1_norm())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub dt: f64,
    pub form: FpeForm,
    /// Snapshot cadence in steps; the initial and final states are always recorded.
    pub record_every: usize,
}

impl SolveOptions {
    pub fn new(dt: f64) -> Self {
        Self { dt, form: FpeForm::Ito, record_every: usize::MAX }
    }

    pub fn form(mut self, form: FpeForm) -> Self {
        self.form = form;
        self
    }

    pub fn record_every(mut self, n: usize) -> Self {
        self.record_every = n.max(1);
        self
    }
}

#[derive(Debug, Clone)]
pub struct FpeSolution {
    pub snapshots: Vec<(f64, GridDensity)>,
    pub dt: f64,
    pub steps: usize,
    /// Spatial order of the stencils.
    pub stencil_order: usize,
    pub clipped_mass: f64,
}

impl FpeSolution {
    pub fn last(&self) -> &GridDensity {
        &self.snapshots.last().expect("solution always holds the initial state").1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub steps: usize,
    pub t_end: f64,
    pub clipped_mass: f64,
    /// Largest pre-clip negative mass seen in a single step, relative to total.
    pub max_step_undershoot: f64,
}

/// RK4 time stepping. `observe(step, t, density)` sees the initial state, every
/// `record_every`-th step and the final state.
pub fn solve_with<O>(p: &FpeProblem, t_end: f64, opts: &SolveOptions, mut observe: O) -> Result<(GridDensity, SolveStats)>
where
    O: FnMut(usize, f64, &GridDensity) -> Result<()>,
{
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {}", opts.dt)));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter(format!("t_end must be nonnegative, got {t_end}")));
    }
    p.check_stability(opts.dt)?;
    let steps = (t_end / opts.dt - 1e-9).ceil().max(0.0) as usize;
    let dt = if steps > 0 { t_end / steps as f64 } else { opts.dt };
    let dom = p.domain_arc().clone();
    let n = dom.len();
    let w = dom.weights().to_vec();
    let mut f = p.initial().values().to_vec();
    let mut stats = SolveStats { steps, t_end, clipped_mass: 0.0, max_step_undershoot: 0.0 };
    observe(0, 0.0, p.initial())?;
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut scratch = Vec::new();
    for step in 1..=steps {
        let t = (step - 1) as f64 * dt;
        p.apply_scratch(opts.form, t, &f, &mut k1, &mut scratch);
        for c in 0..n {
            tmp[c] = f[c] + 0.5 * dt * k1[c];
        }
        p.apply_scratch(opts.form, t + 0.5 * dt, &tmp, &mut k2, &mut scratch);
        for c in 0..n {
            tmp[c] = f[c] + 0.5 * dt * k2[c];
        }
        p.apply_scratch(opts.form, t + 0.5 * dt, &tmp, &mut k3, &mut scratch);
        for c in 0..n {
            tmp[c] = f[c] + dt * k3[c];
        }
        p.apply_scratch(opts.form, t + dt, &tmp, &mut k4, &mut scratch);
        let mut neg = 0.0;
        let mut mass = 0.0;
        for c in 0..n {
            let v = f[c] + dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
            if !v.is_finite() {
                return Err(Error::NonFiniteDensity { step });
            }
            if v < 0.0 {
                neg -= v * w[c];
                f[c] = 0.0;
            } else {
                f[c] = v;
                mass += v * w[c];
            }
        }
        if neg > 0.0 {
            stats.clipped_mass += neg;
            stats.max_step_undershoot = stats.max_step_undershoot.max(neg / (mass + neg));
            if stats.clipped_mass > CLIP_BUDGET {
                return Err(Error::ClipBudget(stats.clipped_mass));
            }
            for v in f.iter_mut() {
                *v /= mass;
            }
        }
        if step % opts.record_every == 0 || step == steps {
            let snap = GridDensity::from_raw(dom.clone(), f.clone());
            observe(step, step as f64 * dt, &snap)?;
        }
    }
    if stats.clipped_mass > 0.0 {
        log::debug!("clipped {:e} negative mass over {steps} steps", stats.clipped_mass);
    }
    Ok((GridDensity::from_raw(dom, f), stats))
}

pub fn solve(p: &FpeProblem, t_end: f64, opts: &SolveOptions) -> Result<FpeSolution> {
    let mut snapshots = Vec::new();
    let (_, stats) = solve_with(p, t_end, opts, |_, t, d| {
        snapshots.push((t, d.clone()));
        Ok(())
    })?;
    Ok(FpeSolution {
        snapshots,
        dt: if stats.steps > 0 { t_end / stats.steps as f64 } else { opts.dt },
        steps: stats.steps,
        stencil_order: 2,
        clipped_mass: stats.clipped_mass,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use nalgebra::{DMatrix, DVector};

    use super::*;
    use crate::grid::{gaussian_density, moments};

    fn ou_problem(n: usize) -> FpeProblem {
        let dom = Arc::new(DomainSpec::symmetric_box(1, 8.0, n).unwrap());
        let model = SdeModel::linear(-DMatrix::identity(1, 1), DMatrix::from_element(1, 1, 2f64.sqrt())).unwrap();
        let g = gaussian_density(dom.clone(), &DVector::zeros(1), &DMatrix::identity(1, 1)).unwrap();
        FpeProblem::new(dom, model, Boundary::Decay, g).unwrap()
    }

    fn circle_diffusion(n: usize, d: f64) -> FpeProblem {
        let dom = Arc::new(DomainSpec::circle(n).unwrap());
        let model = SdeModel::linear(DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, (2.0 * d).sqrt())).unwrap();
        let u = GridDensity::uniform(dom.clone());
        FpeProblem::new(dom, model, Boundary::Periodic, u).unwrap()
    }

    #[test]
    fn ou_gaussian_is_stationary() {
        let p = ou_problem(512);
        let r = stationarity_residual(&p, p.initial(), FpeForm::Ito).unwrap();
        assert!(r < 1e-3, "{r}");
    }

    #[test]
    fn operator_output_integrates_to_zero() {
        let p = ou_problem(64);
        let f = GridDensity::from_fn(p.domain_arc().clone(), |x| (-(x[0] - 1.0).powi(2)).exp() * (1.0 + x[0].sin().powi(2)))
            .unwrap()
            .normalize()
            .unwrap();
        for form in [FpeForm::Ito, FpeForm::Stratonovich] {
            assert!(apply_operator(&p, &f, form).unwrap().integral().abs() < 1e-10);
        }
    }

    #[test]
    fn uniform_circle_is_fixed() {
        let p = circle_diffusion(32, 1.0);
        assert!(apply_operator_ito(&p, p.initial()).unwrap().sup_norm() < 1e-12);
        assert!(stationarity_residual(&p, p.initial(), FpeForm::Stratonovich).unwrap() < 1e-12);
    }

    #[test]
    fn constant_noise_forms_agree() {
        let dom = Arc::new(DomainSpec::symmetric_box(2, 5.0, 40).unwrap());
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, -0.3, 0.8]);
        let model = SdeModel::linear(DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, -0.2, -0.7]), b).unwrap();
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.6]);
        let g = gaussian_density(dom.clone(), &DVector::from_vec(vec![0.3, -0.2]), &cov).unwrap();
        let p = FpeProblem::new(dom, model, Boundary::Decay, g).unwrap();
        let a = apply_operator_ito(&p, p.initial()).unwrap();
        let s = apply_operator_stratonovich(&p, p.initial()).unwrap();
        let diff = a.values().iter().zip(s.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn free_diffusion_variance_grows() {
        let dom = Arc::new(DomainSpec::symmetric_box(1, 6.0, 480).unwrap());
        let model = SdeModel::linear(DMatrix::zeros(1, 1), DMatrix::identity(1, 1)).unwrap();
        let g = gaussian_density(dom.clone(), &DVector::zeros(1), &DMatrix::from_element(1, 1, 0.05)).unwrap();
        let p = FpeProblem::new(dom, model, Boundary::Decay, g).unwrap();
        let t = 1.0;
        let sol = solve(&p, t, &SolveOptions::new(p.suggested_dt(0.9))).unwrap();
        let var = moments(sol.last()).unwrap().covariance[(0, 0)];
        assert!((var - (0.05 + t)).abs() / (0.05 + t) < 5e-3, "{var}");
        assert!((sol.last().integral() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn stability_is_checked() {
        let p = circle_diffusion(64, 1.0);
        let h = 2.0 * PI / 64.0;
        let bound = 0.2 * h * h / 2.0;
        assert!(matches!(
            solve(&p, 0.1, &SolveOptions::new(bound * 1.5)),
            Err(Error::StabilityViolation { .. })
        ));
        assert!(solve(&p, 0.01, &SolveOptions::new(bound * 0.99)).is_ok());
    }

    #[test]
    fn clipping_budget_enforced() {
        // A one-cell spike undershoots under central advection.
        let dom = Arc::new(DomainSpec::circle(64).unwrap());
        let model = SdeModel::linear(DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1e-3)).unwrap();
        let model = SdeModel::new(1, 1, Interpretation::Ito, |_, _, o| o[0] = 1.0, move |x, t, o| model.noise_into(x, t, o)).unwrap();
        let spike = GridDensity::point_mass(dom.clone(), &[0.0]).unwrap();
        let p = FpeProblem::new(dom, model, Boundary::Periodic, spike).unwrap();
        let dt = p.suggested_dt(0.5);
        assert!(matches!(solve(&p, 1.0, &SolveOptions::new(dt)), Err(Error::ClipBudget(_))));
    }
}

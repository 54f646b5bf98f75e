//! Itô / Stratonovich SDE models and seeded ensemble simulation.

mod rng;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{DomainSpec, GridDensity, MomentSummary};

pub use rng::CounterRng;

/// a(x, t) written into `out` (length d).
pub type DriftFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;
/// B(x, t) written row-major into `out` (length d·m).
pub type NoiseFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;
/// ∂B_ij/∂x_k written at index (i·m + j)·d + k.
pub type NoiseJacobianFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpretation {
    Ito,
    Stratonovich,
}

#[derive(Clone)]
pub struct SdeModel {
    dim: usize,
    noise_dim: usize,
    interpretation: Interpretation,
    drift: DriftFn,
    noise: NoiseFn,
    noise_jacobian: Option<NoiseJacobianFn>,
    time_dependent: bool,
}

impl std::fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SdeModel")
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("interpretation", &self.interpretation)
            .field("analytic_jacobian", &self.noise_jacobian.is_some())
            .finish()
    }
}

impl SdeModel {
    pub fn new(
        dim: usize,
        noise_dim: usize,
        interpretation: Interpretation,
        drift: impl Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
        noise: impl Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 || noise_dim == 0 {
            return Err(Error::InvalidParameter(format!("dimensions must be positive, got d={dim}, m={noise_dim}")));
        }
        Ok(Self {
            dim,
            noise_dim,
            interpretation,
            drift: Arc::new(drift),
            noise: Arc::new(noise),
            noise_jacobian: None,
            time_dependent: false,
        })
    }

    /// dx = A x dt + B dw with constant matrices.
    pub fn linear(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let d = a.nrows();
        if a.ncols() != d || b.nrows() != d {
            return Err(Error::ShapeMismatch(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        let m = b.ncols();
        let flat: Vec<f64> = (0..d).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| b[(i, j)]).collect();
        let model = Self::new(
            d,
            m,
            Interpretation::Ito,
            move |x, _, out| {
                for i in 0..d {
                    out[i] = (0..d).map(|k| a[(i, k)] * x[k]).sum();
                }
            },
            move |_, _, out| out.copy_from_slice(&flat),
        )?;
        Ok(model.with_noise_jacobian(move |_, _, out| out.iter_mut().for_each(|v| *v = 0.0)))
    }

    pub fn with_noise_jacobian(mut self, jac: impl Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.noise_jacobian = Some(Arc::new(jac));
        self
    }

    pub fn with_time_dependence(mut self, yes: bool) -> Self {
        self.time_dependent = yes;
        self
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    #[inline]
    pub fn interpretation(&self) -> Interpretation {
        self.interpretation
    }

    #[inline]
    pub fn is_time_dependent(&self) -> bool {
        self.time_dependent
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.noise_jacobian.is_some()
    }

    #[inline]
    pub fn drift_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (self.drift)(x, t, out)
    }

    #[inline]
    pub fn noise_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (self.noise)(x, t, out)
    }

    pub fn drift(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.drift_into(x, t, &mut out);
        out
    }

    pub fn noise(&self, x: &[f64], t: f64) -> DMatrix<f64> {
        let mut out = vec![0.0; self.dim * self.noise_dim];
        self.noise_into(x, t, &mut out);
        DMatrix::from_row_slice(self.dim, self.noise_dim, &out)
    }

    /// B Bᵀ at (x, t).
    pub fn diffusion(&self, x: &[f64], t: f64) -> DMatrix<f64> {
        let b = self.noise(x, t);
        &b * b.transpose()
    }

    /// ∂B_ij/∂x_k at index (i·m + j)·d + k, analytic when available, otherwise
    /// central differences with step 1e-5·(1 + |x_k|).
    pub fn noise_jacobian_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        if let Some(j) = &self.noise_jacobian {
            return j(x, t, out);
        }
        let (d, m) = (self.dim, self.noise_dim);
        let mut xp = x.to_vec();
        let mut bp = vec![0.0; d * m];
        let mut bm = vec![0.0; d * m];
        for k in 0..d {
            let h = 1e-5 * (1.0 + x[k].abs());
            xp[k] = x[k] + h;
            self.noise_into(&xp, t, &mut bp);
            xp[k] = x[k] - h;
            self.noise_into(&xp, t, &mut bm);
            xp[k] = x[k];
            for ij in 0..d * m {
                out[ij * d + k] = (bp[ij] - bm[ij]) / (2.0 * h);
            }
        }
    }

    /// ½ Σ_{j,k} (∂B_ij/∂x_k) B_kj, the Itô minus Stratonovich drift.
    pub fn drift_correction_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let (d, m) = (self.dim, self.noise_dim);
        let mut b = vec![0.0; d * m];
        let mut jac = vec![0.0; d * m * d];
        self.noise_into(x, t, &mut b);
        self.noise_jacobian_into(x, t, &mut jac);
        for (i, slot) in out.iter_mut().enumerate().take(d) {
            let mut s = 0.0;
            for j in 0..m {
                for k in 0..d {
                    s += jac[(i * m + j) * d + k] * b[k * m + j];
                }
            }
            *slot = 0.5 * s;
        }
    }

    fn shifted(&self, sign: f64, interpretation: Interpretation) -> Self {
        let base = self.clone();
        let dim = self.dim;
        let drift = move |x: &[f64], t: f64, out: &mut [f64]| {
            base.drift_into(x, t, out);
            let mut corr = [0.0; 8];
            let mut heap;
            let corr: &mut [f64] = if dim <= 8 {
                &mut corr[..dim]
            } else {
                heap = vec![0.0; dim];
                &mut heap
            };
            base.drift_correction_into(x, t, corr);
            for (o, c) in out.iter_mut().zip(corr.iter()) {
                *o += sign * c;
            }
        };
        Self {
            dim: self.dim,
            noise_dim: self.noise_dim,
            interpretation,
            drift: Arc::new(drift),
            noise: self.noise.clone(),
            noise_jacobian: self.noise_jacobian.clone(),
            time_dependent: self.time_dependent,
        }
    }

    /// Itô model with a = aˢ + ½ Σ (∂B/∂x) B.
    pub fn ito_from_stratonovich(&self) -> Result<Self> {
        if self.interpretation != Interpretation::Stratonovich {
            return Err(Error::InvalidParameter("model is already in Itô form".into()));
        }
        Ok(self.shifted(1.0, Interpretation::Ito))
    }

    /// Stratonovich model with aˢ = a − ½ Σ (∂B/∂x) B.
    pub fn stratonovich_from_ito(&self) -> Result<Self> {
        if self.interpretation != Interpretation::Ito {
            return Err(Error::InvalidParameter("model is already in Stratonovich form".into()));
        }
        Ok(self.shifted(-1.0, Interpretation::Stratonovich))
    }

    /// The same process written in the requested interpretation.
    pub fn as_interpretation(&self, want: Interpretation) -> Self {
        if self.interpretation == want {
            self.clone()
        } else if want == Interpretation::Ito {
            self.shifted(1.0, want)
        } else {
            self.shifted(-1.0, want)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    pub t: f64,
    /// Row-major N×d particle coordinates.
    pub particles: Vec<f64>,
    pub dim: usize,
    pub seed: u64,
    pub step_index: usize,
}

impl EnsembleState {
    pub fn new(dim: usize, particles: Vec<f64>, seed: u64) -> Result<Self> {
        if dim == 0 || particles.is_empty() || particles.len() % dim != 0 {
            return Err(Error::ShapeMismatch(format!("{} coordinates for dimension {dim}", particles.len())));
        }
        Ok(Self { t: 0.0, particles, dim, seed, step_index: 0 })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.particles.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    #[inline]
    pub fn particle(&self, i: usize) -> &[f64] {
        &self.particles[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.particles.chunks_exact(self.dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Euler–Maruyama on the Itô form (Stratonovich models are converted first).
    EulerMaruyama,
    /// Stochastic Heun on the Stratonovich form (Itô models are converted first).
    Heun,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub n_particles: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Snapshot cadence in steps; the initial and final states are always recorded.
    pub record_every: usize,
}

impl SimConfig {
    pub fn new(dt: f64, n_steps: usize, n_particles: usize, seed: u64) -> Self {
        Self { dt, n_steps, n_particles, seed, scheme: Scheme::EulerMaruyama, record_every: n_steps.max(1) }
    }

    pub fn scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn record_every(mut self, every: usize) -> Self {
        self.record_every = every.max(1);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_particles == 0 {
            return Err(Error::InvalidParameter("need at least one particle".into()));
        }
        Ok(())
    }
}

/// Draws the initial ensemble: `init(particle, rng, out)` fills one particle.
pub fn initial_ensemble<F>(dim: usize, n: usize, seed: u64, init: F) -> EnsembleState
where
    F: Fn(usize, &mut CounterRng, &mut [f64]) + Sync,
{
    let mut particles = vec![0.0; n * dim];
    particles.par_chunks_mut(dim).enumerate().for_each(|(p, out)| {
        let mut rng = CounterRng::for_init(seed, p as u64);
        init(p, &mut rng, out);
    });
    EnsembleState { t: 0.0, particles, dim, seed, step_index: 0 }
}

struct Scratch {
    a: Vec<f64>,
    a2: Vec<f64>,
    b: Vec<f64>,
    b2: Vec<f64>,
    dw: Vec<f64>,
    pred: Vec<f64>,
}

impl Scratch {
    fn new(d: usize, m: usize) -> Self {
        Self {
            a: vec![0.0; d],
            a2: vec![0.0; d],
            b: vec![0.0; d * m],
            b2: vec![0.0; d * m],
            dw: vec![0.0; m],
            pred: vec![0.0; d],
        }
    }
}

fn step_particle(model: &SdeModel, scheme: Scheme, x: &mut [f64], t: f64, dt: f64, rng: &mut CounterRng, s: &mut Scratch) {
    let (d, m) = (model.dim, model.noise_dim);
    let sq = dt.sqrt();
    for w in s.dw.iter_mut() {
        *w = sq * rng.sample::<f64, _>(StandardNormal);
    }
    model.drift_into(x, t, &mut s.a);
    model.noise_into(x, t, &mut s.b);
    match scheme {
        Scheme::EulerMaruyama => {
            for i in 0..d {
                let mut inc = s.a[i] * dt;
                for j in 0..m {
                    inc += s.b[i * m + j] * s.dw[j];
                }
                x[i] += inc;
            }
        }
        Scheme::Heun => {
            for i in 0..d {
                let mut inc = s.a[i] * dt;
                for j in 0..m {
                    inc += s.b[i * m + j] * s.dw[j];
                }
                s.pred[i] = x[i] + inc;
            }
            model.drift_into(&s.pred, t + dt, &mut s.a2);
            model.noise_into(&s.pred, t + dt, &mut s.b2);
            for i in 0..d {
                let mut inc = 0.5 * (s.a[i] + s.a2[i]) * dt;
                for j in 0..m {
                    inc += 0.5 * (s.b[i * m + j] + s.b2[i * m + j]) * s.dw[j];
                }
                x[i] += inc;
            }
        }
    }
}

/// Advances `state` by `n` steps in place, parallel over particles.
pub fn advance(model: &SdeModel, state: &mut EnsembleState, dt: f64, n: usize, scheme: Scheme) -> Result<()> {
    if state.dim != model.dim {
        return Err(Error::ShapeMismatch(format!("ensemble dimension {} vs model {}", state.dim, model.dim)));
    }
    let model = match scheme {
        Scheme::EulerMaruyama => model.as_interpretation(Interpretation::Ito),
        Scheme::Heun => model.as_interpretation(Interpretation::Stratonovich),
    };
    let (d, m) = (model.dim, model.noise_dim);
    let seed = state.seed;
    let t0 = state.t;
    let k0 = state.step_index;
    let bad = state
        .particles
        .par_chunks_mut(d)
        .enumerate()
        .map_init(
            || Scratch::new(d, m),
            |scratch, (p, x)| {
                for s in 0..n {
                    let k = k0 + s;
                    let mut rng = CounterRng::new(seed, p as u64, k as u64);
                    step_particle(&model, scheme, x, t0 + s as f64 * dt, dt, &mut rng, scratch);
                    if x.iter().any(|v| !v.is_finite()) {
                        return Some((k + 1, p));
                    }
                }
                None
            },
        )
        .filter_map(|r| r)
        .min();
    if let Some((step, particle)) = bad {
        return Err(Error::NonFinite { step, particle });
    }
    state.step_index = k0 + n;
    state.t = t0 + n as f64 * dt;
    Ok(())
}

/// Runs the ensemble and hands each recorded snapshot to `observe`.
pub fn simulate_with<F, O>(model: &SdeModel, init: F, cfg: &SimConfig, mut observe: O) -> Result<EnsembleState>
where
    F: Fn(usize, &mut CounterRng, &mut [f64]) + Sync,
    O: FnMut(&EnsembleState) -> Result<()>,
{
    cfg.validate()?;
    let mut state = initial_ensemble(model.dim, cfg.n_particles, cfg.seed, init);
    observe(&state)?;
    let mut done = 0;
    while done < cfg.n_steps {
        let n = cfg.record_every.min(cfg.n_steps - done);
        advance(model, &mut state, cfg.dt, n, cfg.scheme)?;
        state.t = (done + n) as f64 * cfg.dt;
        done += n;
        observe(&state)?;
    }
    Ok(state)
}

/// Runs the ensemble and returns every recorded snapshot.
pub fn simulate<F>(model: &SdeModel, init: F, cfg: &SimConfig) -> Result<Vec<EnsembleState>>
where
    F: Fn(usize, &mut CounterRng, &mut [f64]) + Sync,
{
    let mut out = Vec::new();
    simulate_with(model, init, cfg, |s| {
        out.push(s.clone());
        Ok(())
    })?;
    Ok(out)
}

/// Normalized histogram of the ensemble on `domain`, wrapping periodic axes.
pub fn histogram_density(e: &EnsembleState, domain: Arc<DomainSpec>) -> Result<GridDensity> {
    if e.dim != domain.ndim() {
        return Err(Error::ShapeMismatch(format!("ensemble dimension {} on a {}-d domain", e.dim, domain.ndim())));
    }
    let mut counts = vec![0u64; domain.len()];
    let mut inside = 0u64;
    for x in e.iter() {
        if let Some(c) = domain.locate(x) {
            if domain.weights()[c] > 0.0 {
                counts[c] += 1;
                inside += 1;
            }
        }
    }
    let n = e.len() as f64;
    let escaped = 1.0 - inside as f64 / n;
    if escaped > 0.01 {
        return Err(Error::Coverage { escaped });
    }
    let values = counts
        .iter()
        .zip(domain.weights())
        .map(|(&k, &w)| if k == 0 { 0.0 } else { k as f64 / (inside as f64 * w) })
        .collect();
    GridDensity::new(domain, values)
}

/// Sample mean and unbiased (N − 1) covariance.
pub fn sample_moments(e: &EnsembleState) -> Result<MomentSummary> {
    let n = e.len();
    if n < 2 {
        return Err(Error::InvalidParameter("sample moments need at least two particles".into()));
    }
    let d = e.dim;
    let mut mean = DVector::zeros(d);
    for x in e.iter() {
        for k in 0..d {
            mean[k] += x[k];
        }
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for x in e.iter() {
        for i in 0..d {
            let di = x[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += di * (x[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    cov /= (n - 1) as f64;
    Ok(MomentSummary { mean, covariance: cov, chart_axes: Vec::new() })
}

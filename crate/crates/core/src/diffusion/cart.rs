use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpe::{apply_operator_ito, apply_operator_stratonovich, solve_with, Boundary, FpeProblem, SolveOptions};
use crate::grid::{entropy, gaussian_density, DomainSpec, GridDensity};
use crate::lie::{group_fisher_information, wrap_angle};
use crate::sde::{advance, histogram_density, initial_ensemble, EnsembleState, Interpretation, Scheme, SdeModel};

/// Two-wheel kinematic cart with noisy wheel rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartParams {
    pub wheel_radius: f64,
    pub wheelbase: f64,
    /// Nominal rate of both wheels.
    pub wheel_rate: f64,
    /// Noise strength D of each wheel rate.
    pub noise: f64,
}

impl Default for CartParams {
    fn default() -> Self {
        Self { wheel_radius: 1.0, wheelbase: 2.0, wheel_rate: 1.0, noise: 1.0 }
    }
}

impl CartParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.wheel_radius > 0.0 && self.wheelbase > 0.0 && self.noise >= 0.0 && self.wheel_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("need r, L > 0, D ≥ 0 and finite ω; got {self:?}")));
        }
        Ok(())
    }
}

/// Body-frame description of the cart diffusion.
#[derive(Debug, Clone, PartialEq)]
pub struct CartDiffusion {
    /// A with body velocity (v₁, v₂, ω) = A (φ̇₁, φ̇₂).
    pub coupling: DMatrix<f64>,
    /// rω along Ẽ₁.
    pub forward_speed: f64,
    /// Coefficient of Ẽ₁² in the Fokker–Planck operator.
    pub e1_coefficient: f64,
    /// Coefficient of Ẽ₃².
    pub e3_coefficient: f64,
    /// D = D·AAᵀ in the Ẽ basis, so the operator is ½ Σ D_ij Ẽ_iẼ_j.
    pub d_matrix: DMatrix<f64>,
}

/// Cart SDE in (x, y, θ) and its body-frame diffusion.
pub fn cart_model(p: &CartParams) -> Result<(SdeModel, CartDiffusion)> {
    p.validate()?;
    let (r, l, w, d) = (p.wheel_radius, p.wheelbase, p.wheel_rate, p.noise);
    let coupling = DMatrix::from_row_slice(3, 2, &[r / 2.0, r / 2.0, 0.0, 0.0, r / l, -r / l]);
    let d_matrix = &coupling * coupling.transpose() * d;
    let diff = CartDiffusion {
        forward_speed: r * w,
        e1_coefficient: 0.5 * d_matrix[(0, 0)],
        e3_coefficient: 0.5 * d_matrix[(2, 2)],
        coupling,
        d_matrix,
    };
    let sd = d.sqrt();
    let speed = r * w;
    let model = SdeModel::new(
        3,
        2,
        Interpretation::Stratonovich,
        move |x, _, o| {
            o[0] = speed * x[2].cos();
            o[1] = speed * x[2].sin();
            o[2] = 0.0;
        },
        move |x, _, o| {
            let (s, c) = x[2].sin_cos();
            let h = 0.5 * sd * r;
            o.copy_from_slice(&[h * c, h * c, h * s, h * s, sd * r / l, -sd * r / l]);
        },
    )?
    .with_noise_jacobian(move |x, _, o| {
        // Index (i·m + j)·d + k; only θ-derivatives of the first two rows survive.
        let (s, c) = x[2].sin_cos();
        let h = 0.5 * sd * r;
        o.fill(0.0);
        for j in 0..2 {
            o[j * 3 + 2] = -h * s;
            o[(2 + j) * 3 + 2] = h * c;
        }
    });
    Ok((model, diff))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartOptions {
    pub t_end: f64,
    /// Number of report intervals in [0, t_end].
    pub samples: usize,
    /// Target cell width in x and y.
    pub spacing: f64,
    pub theta_cells: usize,
    /// Comparison grid, bins per axis.
    pub coarse: [usize; 3],
    pub n_particles: usize,
    pub seed: u64,
    /// Standard deviation of the Gaussian start in x, y and θ.
    pub spread: f64,
    /// Fraction of the stability bound used for dt.
    pub safety: f64,
}

impl Default for CartOptions {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            samples: 10,
            spacing: 0.15,
            theta_cells: 48,
            coarse: [8, 8, 8],
            n_particles: 100_000,
            seed: 0,
            spread: 0.4,
            safety: 0.8,
        }
    }
}

/// Per-sample comparison of the SE(2) Fokker–Planck solution with the ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct CartRun {
    pub times: Vec<f64>,
    /// Entropy of the grid solution (fine grid).
    pub entropy: Vec<f64>,
    /// Entropy of the grid solution and of the ensemble histogram on the coarse grid.
    pub coarse_entropy: Vec<f64>,
    pub histogram_entropy: Vec<f64>,
    pub l1: Vec<f64>,
    /// ½tr[DF] with the group Fisher matrix.
    pub sdot_trdf: Vec<f64>,
    /// Centered difference of the fine entropy over one solver step.
    pub sdot_fd: Vec<f64>,
    pub fisher: Vec<DMatrix<f64>>,
    /// sup |𝒟_Itô f₀ − 𝒟_Strat f₀|.
    pub operator_gap: f64,
    pub domain: Arc<DomainSpec>,
    pub coarse_domain: Arc<DomainSpec>,
    pub density: GridDensity,
    pub ensemble: EnsembleState,
    pub diffusion: CartDiffusion,
}

/// x and y axes of the fine grid as (lower, upper, cells).
pub fn cart_extent(p: &CartParams, o: &CartOptions) -> ((f64, f64, usize), (f64, f64, usize)) {
    let (r, l, d) = (p.wheel_radius, p.wheelbase, p.noise);
    let reach = (r * p.wheel_rate).abs() * o.t_end;
    let s2 = o.spread * o.spread;
    let sigma = (s2 + 0.5 * r * r * d * o.t_end).sqrt();
    let sig_th = (s2 + 2.0 * r * r * d * o.t_end / (l * l)).sqrt();
    let turn = (3.0 * sig_th).min(PI / 2.0).sin();
    let pad = 4.5 * sigma;
    let back = if 3.0 * sig_th > PI / 2.0 { reach } else { 0.0 };
    let sized = |lo: f64, hi: f64, bins: usize| {
        let per = ((hi - lo) / (o.spacing * bins as f64)).ceil().max(1.0) as usize;
        (lo, hi, per * bins)
    };
    if p.wheel_rate >= 0.0 {
        (sized(-pad - back, reach + pad, o.coarse[0]), sized(-pad - reach * turn, pad + reach * turn, o.coarse[1]))
    } else {
        (sized(-reach - pad, pad + back, o.coarse[0]), sized(-pad - reach * turn, pad + reach * turn, o.coarse[1]))
    }
}

/// Fine solver grid and coarse comparison grid sized to hold the run.
pub fn cart_domains(p: &CartParams, o: &CartOptions) -> Result<(Arc<DomainSpec>, Arc<DomainSpec>)> {
    let (x, y) = cart_extent(p, o);
    if o.theta_cells % o.coarse[2] != 0 {
        return Err(Error::InvalidParameter(format!(
            "θ cells {} not divisible by coarse bins {}",
            o.theta_cells, o.coarse[2]
        )));
    }
    let fine = DomainSpec::se2_box(x, y, o.theta_cells)?;
    let coarse = DomainSpec::se2_box((x.0, x.1, o.coarse[0]), (y.0, y.1, o.coarse[1]), o.coarse[2])?;
    Ok((Arc::new(fine), Arc::new(coarse)))
}

/// Sums fine-cell mass into the coarse cells that contain them.
fn aggregate(f: &GridDensity, coarse: &Arc<DomainSpec>) -> Result<GridDensity> {
    let fine = f.domain();
    let ratio: Vec<usize> = (0..3).map(|k| fine.axis(k).cells / coarse.axis(k).cells).collect();
    let mut mass = vec![0.0; coarse.len()];
    let mut idx = [0usize; 3];
    for c in 0..fine.len() {
        fine.unravel(c, &mut idx);
        let ci = [idx[0] / ratio[0], idx[1] / ratio[1], idx[2] / ratio[2]];
        mass[coarse.ravel(&ci)] += f.values()[c] * fine.weights()[c];
    }
    let values = mass.iter().zip(coarse.weights()).map(|(m, w)| m / w).collect();
    GridDensity::new(coarse.clone(), values)
}

/// Solves the cart's Fokker–Planck equation on an auto-sized SE(2) box and
/// runs the matching ensemble, comparing them on a coarse grid.
pub fn cart_evolve(p: &CartParams, o: &CartOptions) -> Result<CartRun> {
    if !(o.t_end > 0.0) || o.samples == 0 || !(o.spread > 0.0) || !(o.safety > 0.0 && o.safety <= 1.0) {
        return Err(Error::InvalidParameter("need t_end > 0, samples ≥ 1, spread > 0, safety in (0, 1]".into()));
    }
    let (model, diffusion) = cart_model(p)?;
    let (dom, coarse) = cart_domains(p, o)?;
    let s2 = o.spread * o.spread;
    let init = gaussian_density(dom.clone(), &DVector::zeros(3), &(DMatrix::identity(3, 3) * s2))?;
    let problem = FpeProblem::new(dom.clone(), model.clone(), Boundary::Decay, init)?;
    let operator_gap = {
        let a = apply_operator_ito(&problem, problem.initial())?;
        let b = apply_operator_stratonovich(&problem, problem.initial())?;
        a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    };
    let interval = o.t_end / o.samples as f64;
    let per = (interval / problem.suggested_dt(o.safety)).ceil().max(1.0) as usize;
    let dt = interval / per as f64;
    let total = per * o.samples;

    let mut ens = initial_ensemble(3, o.n_particles, o.seed, |_, rng, x| {
        for v in x.iter_mut() {
            *v = o.spread * Distribution::<f64>::sample(&StandardNormal, rng);
        }
        x[2] = wrap_angle(x[2]);
    });

    let mut run = CartRun {
        times: Vec::new(),
        entropy: Vec::new(),
        coarse_entropy: Vec::new(),
        histogram_entropy: Vec::new(),
        l1: Vec::new(),
        sdot_trdf: Vec::new(),
        sdot_fd: Vec::new(),
        fisher: Vec::new(),
        operator_gap,
        domain: dom.clone(),
        coarse_domain: coarse.clone(),
        density: problem.initial().clone(),
        ensemble: ens.clone(),
        diffusion: diffusion.clone(),
    };
    let mut step_entropy = Vec::with_capacity(total + 1);
    let mut sde_step = 0usize;
    let mut pending: Option<usize> = None;
    let mut failure: Option<Error> = None;
    let (last, _) = solve_with(&problem, o.t_end, &SolveOptions::new(dt * (1.0 + 1e-12)).record_every(1), |step, t, f| {
        step_entropy.push(entropy(f)?);
        if let Some(k) = pending.take() {
            let n = step_entropy.len();
            run.sdot_fd[k] = (step_entropy[n - 1] - step_entropy[n - 3]) / (2.0 * dt);
        }
        if step % per != 0 {
            return Ok(());
        }
        if step > sde_step {
            advance(&model, &mut ens, dt, step - sde_step, Scheme::Heun)?;
            sde_step = step;
        }
        ens.t = t;
        let hist = match histogram_density(&ens, coarse.clone()) {
            Ok(h) => h,
            Err(e) => {
                failure.get_or_insert(e);
                return Ok(());
            }
        };
        let agg = aggregate(f, &coarse)?;
        let fisher = group_fisher_information(f)?;
        run.times.push(t);
        run.entropy.push(step_entropy[step_entropy.len() - 1]);
        run.coarse_entropy.push(entropy(&agg)?);
        run.histogram_entropy.push(entropy(&hist)?);
        run.l1.push(agg.l1_distance(&hist)?);
        run.sdot_trdf.push(0.5 * (&diffusion.d_matrix * &fisher).trace());
        run.fisher.push(fisher);
        run.sdot_fd.push(f64::NAN);
        if step > 0 && step < total {
            pending = Some(run.times.len() - 1);
        }
        Ok(())
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    run.density = last;
    run.ensemble = ens;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{circle_kernel, Representation};

    #[test]
    fn compact_coefficients() {
        let (m, d) = cart_model(&CartParams::default()).unwrap();
        assert!((d.e1_coefficient - 0.25).abs() < 1e-15 && (d.e3_coefficient - 0.25).abs() < 1e-15);
        assert_eq!(d.forward_speed, 1.0);
        let diag = [d.d_matrix[(0, 0)], d.d_matrix[(1, 1)], d.d_matrix[(2, 2)]];
        assert_eq!(diag, [0.5, 0.0, 0.5]);
        for th in [0.0, 0.7, -2.5] {
            let q = m.diffusion(&[0.3, -0.1, th], 0.0);
            assert_eq!(q.rank(1e-12), 2);
        }
    }

    #[test]
    fn grid_and_ensemble_agree() {
        let opts = CartOptions { t_end: 0.4, samples: 4, ..CartOptions::default() };
        let run = cart_evolve(&CartParams::default(), &opts).unwrap();
        assert!(run.operator_gap < 1e-10, "{}", run.operator_gap);
        for k in 1..run.times.len() {
            assert!(run.l1[k] < 0.05);
            assert!((run.coarse_entropy[k] - run.histogram_entropy[k]).abs() < 0.02 * run.histogram_entropy[k].abs());
            if run.sdot_fd[k].is_finite() {
                assert!((run.sdot_trdf[k] - run.sdot_fd[k]).abs() < 0.05 * run.sdot_fd[k].abs());
            }
        }
    }

    #[test]
    fn deterministic_cart_follows_arc() {
        let p = CartParams { noise: 0.0, ..CartParams::default() };
        let (m, _) = cart_model(&p).unwrap();
        let mut e = initial_ensemble(3, 8, 1, |_, _, x| x.fill(0.0));
        advance(&m, &mut e, 0.01, 100, Scheme::Heun).unwrap();
        for x in e.iter() {
            assert!((x[0] - 1.0).abs() < 1e-12 && x[1].abs() < 1e-12 && x[2].abs() < 1e-12);
        }
    }

    #[test]
    fn theta_marginal_is_circle_kernel() {
        // With ω = 0 and a near-delta start, θ diffuses with rate 2r²D/L².
        let p = CartParams { wheel_rate: 0.0, ..CartParams::default() };
        let (m, _) = cart_model(&p).unwrap();
        let (t, dt) = (0.4, 0.002);
        let mut e = initial_ensemble(3, 100_000, 5, |_, _, x| x.fill(0.0));
        advance(&m, &mut e, dt, (t / dt) as usize, Scheme::Heun).unwrap();
        let bins = 24;
        let mut counts = vec![0.0; bins];
        for x in e.iter() {
            let u = (wrap_angle(x[2]) + PI) / (2.0 * PI);
            counts[((u * bins as f64) as usize).min(bins - 1)] += 1.0;
        }
        let h = 2.0 * PI / bins as f64;
        let mut l1 = 0.0;
        for (i, c) in counts.iter().enumerate() {
            let th = -PI + (i as f64 + 0.5) * h;
            let k = circle_kernel(th, t, 0.5, Representation::Auto).unwrap();
            l1 += (c / (1e5 * h) - k).abs() * h;
        }
        assert!(l1 < 0.03, "{l1}");
    }
}

use std::collections::BTreeMap;
use std::f64::consts::{E, PI};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::config::{Experiment, ExperimentConfig};
use crate::bounds::{
    compressible_mean_closed_form, compressible_moment_rhs, crb_cascade, crb_certificate, d0_floor,
    eigenvalue_sandwich, entropy_rate_theorem1, epi_certificate, fisher_conv_certificate, jensen_certificate,
    max_entropy_certificate, rk4_trajectory, BoundsCertificate, EntropyReport, ReportRow,
};
use crate::diffusion::{
    cart_evolve, cart_extent, circle_entropy_bounds, circle_kernel, circle_variance, debruijn_check, group_entropy_rate, so3_kernel,
    CartOptions, CartParams, KernelSpec, Representation,
};
use crate::error::{Error, Result};
use crate::fpe::{compressible_problem, couette_problem, solve_with, stationarity_residual, Boundary, FpeForm, FpeProblem, SolveOptions};
use crate::grid::{
    entropy, fisher_information, gaussian_density, gaussian_entropy_closed_form, jensen_lower_bound, moments, DomainKind, DomainSpec,
    GridDensity,
};
use crate::lie::gauss_legendre;
use crate::mechanics::{
    boltzmann_density, config_entropy, configurational_marginal, fdt_certificate, zero_mass_discrepancy, HamiltonianSystem,
};
use crate::sde::{advance, initial_ensemble, sample_moments, Scheme, SdeModel};

/// Relative slack allowed on Fisher-based inequalities evaluated on a grid.
pub const FISHER_REL_TOL: f64 = 1e-2;
/// Absolute slack on entropy bounds and orderings.
pub const BOUND_TOL: f64 = 1e-9;

/// The series and certificates of one run plus headline numbers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOutput {
    pub report: EntropyReport,
    pub scalars: BTreeMap<String, f64>,
}

/// Slack in units of the tolerance, comparable across samples.
fn margin(c: &BoundsCertificate) -> f64 {
    c.slack / c.tolerance.max(1e-300)
}

/// Certificate table keeping the worst sample per id.
#[derive(Default)]
struct Certs(Vec<BoundsCertificate>);

impl Certs {
    fn worst(&mut self, c: BoundsCertificate) {
        match self.0.iter_mut().find(|o| o.id == c.id) {
            Some(o) => {
                if (!c.pass && o.pass) || (c.pass == o.pass && margin(&c) < margin(o)) || c.slack.is_nan() {
                    *o = c;
                }
            }
            None => self.0.push(c),
        }
    }

    fn all(&mut self, cs: impl IntoIterator<Item = BoundsCertificate>) {
        for c in cs {
            self.worst(c);
        }
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    match cfg.experiment {
        Experiment::Brownian => brownian(cfg),
        Experiment::Circle => circle(cfg),
        Experiment::So3 => so3(cfg),
        Experiment::Cart => cart(cfg),
        Experiment::Compressible => compressible_run(cfg),
        Experiment::Couette => couette(cfg),
        Experiment::Oscillator => oscillator(cfg),
        Experiment::Conundrum => conundrum(cfg),
        Experiment::BoundsReport => bounds_report(cfg),
        Experiment::Debruijn => debruijn(cfg),
    }
}

/// The Fokker–Planck problem an experiment integrates in time, if any.
pub fn fpe_problem(cfg: &ExperimentConfig) -> Option<Result<FpeProblem>> {
    Some(match cfg.experiment {
        Experiment::Brownian => brownian_problem(cfg),
        Experiment::Compressible => compressible_fpe(cfg),
        Experiment::Couette => couette_fpe(cfg),
        Experiment::Oscillator => oscillator_fpe(cfg),
        Experiment::BoundsReport => ou_fpe(cfg),
        _ => return None,
    })
}

/// Largest grid an experiment allocates as (cells, dimension), read from the
/// config without building it.
pub fn grid_extent(cfg: &ExperimentConfig) -> (usize, usize) {
    let n = |k: &str| cfg.usize(k);
    let sq = |k: &str| n(k).saturating_mul(n(k));
    match cfg.experiment {
        Experiment::Brownian => {
            let dim = n("dim");
            (n("cells").saturating_pow(dim as u32), dim)
        }
        Experiment::Circle | Experiment::So3 | Experiment::Compressible => (n("cells"), 1),
        Experiment::Couette => (n("x_cells").saturating_mul(n("y_cells")), 2),
        Experiment::Oscillator => (sq("cells").max(sq("evo_cells")), 2),
        Experiment::BoundsReport => (sq("ou_cells").max(n("cells")), 2),
        Experiment::Debruijn => (n("circle_cells").max(n("so3_cells")), 1),
        Experiment::Cart => {
            let (p, o) = cart_setup(cfg);
            let (x, y) = cart_extent(&p, &o);
            (x.2.saturating_mul(y.2).saturating_mul(o.theta_cells), 3)
        }
        Experiment::Conundrum => (0, 1),
    }
}

fn brownian_problem(cfg: &ExperimentConfig) -> Result<FpeProblem> {
    let (dim, d) = (cfg.usize("dim"), cfg.f64("d"));
    let dom = Arc::new(DomainSpec::symmetric_box(dim, cfg.f64("half_width"), cfg.usize("cells"))?);
    let model = SdeModel::linear(DMatrix::zeros(dim, dim), DMatrix::identity(dim, dim) * d.sqrt())?;
    let init = gaussian_density(dom.clone(), &DVector::zeros(dim), &(DMatrix::identity(dim, dim) * cfg.f64("sigma0")))?;
    FpeProblem::new(dom, model, Boundary::Decay, init)
}

fn compressible_fpe(cfg: &ExperimentConfig) -> Result<FpeProblem> {
    let dom = Arc::new(DomainSpec::euclidean_box(&[(cfg.f64("lower"), cfg.f64("upper"), cfg.usize("cells"))])?);
    let init = gaussian_density(dom.clone(), &DVector::from_element(1, cfg.f64("mu0")), &DMatrix::from_element(1, 1, cfg.f64("sigma0")))?;
    compressible_problem(cfg.f64("d0"), cfg.f64("kappa0"), cfg.f64("u0"), dom, init)
}

fn couette_fpe(cfg: &ExperimentConfig) -> Result<FpeProblem> {
    let height = cfg.f64("height");
    let dom = Arc::new(DomainSpec::slab((cfg.f64("x_lower"), cfg.f64("x_upper"), cfg.usize("x_cells")), height, cfg.usize("y_cells"))?);
    let init = gaussian_density(dom.clone(), &DVector::from_vec(vec![0.0, 0.5 * height]), &(DMatrix::identity(2, 2) * cfg.f64("sigma0")))?;
    couette_problem(cfg.f64("d0"), cfg.f64("u0"), height, dom, init)
}

fn oscillator_system(cfg: &ExperimentConfig) -> Result<HamiltonianSystem> {
    let (beta, b0) = (cfg.f64("beta"), cfg.f64("b0"));
    let c0 = cfg.f64("c_scale") * 0.5 * beta * b0 * b0;
    HamiltonianSystem::oscillator(cfg.f64("m"), cfg.f64("k"), c0, b0, beta)
}

fn oscillator_fpe(cfg: &ExperimentConfig) -> Result<FpeProblem> {
    let sys = oscillator_system(cfg)?;
    let dom = Arc::new(DomainSpec::symmetric_box(2, cfg.f64("evo_half_width"), cfg.usize("evo_cells"))?);
    let mean = DVector::from_vec(vec![cfg.f64("q0"), cfg.f64("p0")]);
    let init = gaussian_density(dom.clone(), &mean, &(DMatrix::identity(2, 2) * cfg.f64("sigma0")))?;
    FpeProblem::new(dom, sys.phase_sde()?, Boundary::Decay, init)
}

/// Anisotropic two-dimensional Ornstein–Uhlenbeck relaxation.
fn ou_fpe(cfg: &ExperimentConfig) -> Result<FpeProblem> {
    let ou = Arc::new(DomainSpec::symmetric_box(2, cfg.f64("ou_half_width"), cfg.usize("ou_cells"))?);
    let b = DMatrix::from_diagonal(&DVector::from_vec(vec![2f64.sqrt(), 0.5f64.sqrt()]));
    let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -0.5]);
    let init = gaussian_density(ou.clone(), &DVector::from_vec(vec![1.0, -0.5]), &(DMatrix::identity(2, 2) * 0.1))?;
    FpeProblem::new(ou, SdeModel::linear(a, b)?, Boundary::Decay, init)
}

fn finish(report: EntropyReport, certs: Certs, scalars: BTreeMap<String, f64>) -> RunOutput {
    let mut report = report;
    for c in certs.0 {
        report.certify(c);
    }
    RunOutput { report, scalars }
}

/// Step size for a run reporting `samples` equal intervals; `dt = 0` picks
/// `safety` times the stability bound.
pub fn sampled_step(p: &FpeProblem, t_end: f64, samples: usize, dt: f64, safety: f64) -> (f64, usize) {
    let interval = t_end / samples as f64;
    let base = if dt > 0.0 { dt } else { p.suggested_dt(safety) };
    let per = (interval / base * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    (interval / per as f64, per)
}

/// Integrates `p` and pushes one row per sample. Each row's `sdot_fd` is the
/// centered difference of S over the neighbouring solver steps.
fn solve_sampled(
    p: &FpeProblem,
    (t_end, samples, dt, safety): (f64, usize, f64, f64),
    report: &mut EntropyReport,
    mut observe: impl FnMut(f64, &GridDensity) -> Result<ReportRow>,
) -> Result<()> {
    if dt > 0.0 {
        p.check_stability(dt)?;
    }
    let (h, per) = sampled_step(p, t_end, samples, dt, safety);
    let opts = SolveOptions::new(h).record_every(1);
    let mut prev = f64::NAN;
    let mut left: Option<f64> = None;
    solve_with(p, t_end, &opts, |step, _, d| {
        let phase = step % per;
        if phase != 0 && phase != 1 && phase != per - 1 {
            return Ok(());
        }
        let s = entropy(d)?;
        if let Some(l) = left.take() {
            report.rows.last_mut().expect("row was pushed").sdot_fd = (s - l) / (2.0 * h);
        }
        if step % per == 0 {
            report.push(observe(step as f64 * h, d)?)?;
            left = (step > 0).then_some(prev);
        }
        prev = s;
        Ok(())
    })?;
    Ok(())
}

fn timing(cfg: &ExperimentConfig) -> (f64, usize, f64, f64) {
    (cfg.f64("t_end"), cfg.usize("samples"), cfg.f64("dt"), cfg.f64("safety"))
}

const EUCLIDEAN_COLUMNS: [&str; 4] = ["jensen", "gaussian_max", "lmin_trF", "lmin_trSigmaInv"];

/// One row of a Euclidean run with Theorem 1, the Fisher and covariance
/// matrices and the bound columns; certifies the cascade and the CRB.
/// `dconst` is the diffusion matrix when it is constant; otherwise the
/// isotropic floor D₀ stands in for it.
fn euclidean_row(t: f64, d: &GridDensity, model: &SdeModel, dconst: Option<&DMatrix<f64>>, certs: &mut Certs) -> Result<ReportRow> {
    let s = entropy(d)?;
    let rate = entropy_rate_theorem1(d, model, t)?;
    let f = fisher_information(d)?;
    let sigma = moments(d)?.covariance;
    let floor;
    let dmat = match dconst {
        Some(m) => m,
        None => {
            floor = d0_floor(model, d.domain())?.d0;
            &floor
        }
    };
    let lam = dmat.symmetric_eigenvalues().min().max(0.0);
    let sinv = sigma.clone().try_inverse().ok_or(Error::NotPositiveDefinite(0.0))?;
    let jensen = jensen_lower_bound(d)?;
    let gauss = gaussian_entropy_closed_form(&sigma)?;
    let mut row = ReportRow::new(t, s);
    row.sdot_thm1 = rate.total();
    row.sdot_trdf = if dconst.is_some() { 0.5 * (dmat * &f).trace() } else { f64::NAN };
    row.extra = vec![jensen, gauss, lam * f.trace(), lam * sinv.trace()];
    let scale = 1.0 + (dmat * &f).trace().abs();
    // Walls break the Cramér–Rao bound, so slabs report the columns only.
    if d.domain().kind() != DomainKind::Slab {
        let [a, b] = crb_cascade(dmat, &sigma, &f)?;
        certs.worst(a.with_tolerance(FISHER_REL_TOL * scale));
        certs.worst(b.with_tolerance(FISHER_REL_TOL * scale));
        let crb = crb_certificate(&sigma, &f)?;
        let tol = FISHER_REL_TOL * sigma.symmetric_eigenvalues().max();
        certs.worst(crb.with_tolerance(tol));
    }
    certs.worst(jensen_certificate(s, jensen));
    certs.worst(max_entropy_certificate(s, gauss));
    if dconst.is_none() {
        certs.worst(BoundsCertificate::geq(
            "Eq. D0 floor: Theorem 1 diffusion term >= 1/2 lmin(D0) tr F",
            rate.diffusion,
            0.5 * lam * f.trace(),
            FISHER_REL_TOL * scale,
        ));
    }
    row.fisher = f;
    row.sigma = sigma;
    Ok(row)
}

fn log_spaced(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64)).collect()
}

fn brownian(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let dim = cfg.usize("dim");
    let (d, s0) = (cfg.f64("d"), cfg.f64("sigma0"));
    let dmat = DMatrix::identity(dim, dim) * d;
    let problem = brownian_problem(cfg)?;
    let model = problem.model().clone();
    let mut report = EntropyReport::new(EUCLIDEAN_COLUMNS.into_iter().chain(["t_shifted", "Sdot_exact", "S_exact"]));
    let mut certs = Certs::default();
    solve_sampled(&problem, timing(cfg), &mut report, |t, f| {
        let mut row = euclidean_row(t, f, &model, Some(&dmat), &mut certs)?;
        let shifted = t + s0 / d;
        let var = s0 + d * t;
        row.extra.extend([shifted, dim as f64 * d / (2.0 * var), 0.5 * dim as f64 * (2.0 * PI * E * var).ln()]);
        Ok(row)
    })?;
    let (tol, window) = (cfg.f64("rate_tol"), cfg.f64("rate_window"));
    let exact = report.column("Sdot_exact").expect("column exists");
    let shifted = report.column("t_shifted").expect("column exists");
    let mut worst_gap: f64 = 0.0;
    for (i, r) in report.rows.iter().enumerate() {
        certs.worst(BoundsCertificate::close(
            "Theorem 1 constant D: Sdot = 1/2 tr[DF]",
            r.sdot_thm1,
            r.sdot_trdf,
            1e-9 * (1.0 + r.sdot_trdf.abs()),
        ));
        if shifted[i] >= window && r.sdot_fd.is_finite() {
            worst_gap = worst_gap.max((r.sdot_fd - exact[i]).abs() / exact[i]);
            certs.worst(BoundsCertificate::close("Brownian rate: dS/dt = d/(2t')", r.sdot_fd, exact[i], tol * exact[i]));
            certs.worst(BoundsCertificate::close(
                "Brownian rate from Theorem 1: Sdot = d/(2t')",
                r.sdot_thm1,
                exact[i],
                tol * exact[i],
            ));
        }
    }
    let mut scalars = BTreeMap::new();
    scalars.insert("max_relative_rate_error".into(), worst_gap);
    Ok(finish(report, certs, scalars))
}

/// dS/dt of a closed-form kernel family by a centered difference in t.
fn kernel_rate(t: f64, s: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let h = 1e-4 * t;
    Ok((s(t + h)? - s(t - h)?) / (2.0 * h))
}

/// Composite Simpson on [a, b] with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn representation(cfg: &ExperimentConfig) -> Representation {
    match cfg.str("representation") {
        "fourier" => Representation::Fourier,
        "folded" => Representation::Folded,
        _ => Representation::Auto,
    }
}

fn circle(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let d = cfg.f64("d");
    let dom = Arc::new(DomainSpec::circle(cfg.usize("cells"))?);
    let rep = representation(cfg);
    let times = log_spaced(cfg.f64("t_start"), cfg.f64("t_end"), cfg.usize("samples"));
    let mut report = EntropyReport::new(["Dt", "gaussian_form_bound", "max_entropy_bound", "jensen", "variance_series", "variance_quadrature", "kernel_gap"]);
    let mut certs = Certs::default();
    let ax = *dom.axis(0);
    for &t in &times {
        let f = KernelSpec::circle(d, t).with_representation(rep).density(dom.clone())?.normalize()?;
        let s = entropy(&f)?;
        let fisher = fisher_information(&f)?;
        let bounds = circle_entropy_bounds(t, d)?;
        let jensen = jensen_lower_bound(&f)?;
        let mut gap: f64 = 0.0;
        for i in 0..ax.cells {
            let th = ax.center(i);
            let a = circle_kernel(th, t, d, Representation::Fourier)?;
            let b = circle_kernel(th, t, d, Representation::Folded)?;
            gap = gap.max((a - b).abs());
        }
        let series = circle_variance(t, d)?;
        let quad = simpson(|th| th * th * circle_kernel(th, t, d, Representation::Auto).unwrap_or(f64::NAN), -PI, PI, 2048);
        certs.worst(BoundsCertificate::close("Eq. heatcirc: folded and Fourier kernels agree", gap, 0.0, cfg.f64("kernel_tol")));
        certs.worst(BoundsCertificate::close("Eq. circle variance: series = quadrature", series, quad, cfg.f64("variance_tol")));
        certs.worst(BoundsCertificate::geq("Eq. ubentcirc: S <= log 2pi", bounds.max_entropy, s, BOUND_TOL));
        certs.worst(BoundsCertificate::geq("Eq. lbentcirc: S <= 1/2 log(2 pi D t) + sigma^2/(2 D t)", bounds.gaussian_form, s, BOUND_TOL));
        certs.worst(jensen_certificate(s, jensen));
        let mut row = ReportRow::new(t, s);
        row.sdot_fd = kernel_rate(t, |t| entropy(&KernelSpec::circle(d, t).with_representation(rep).density(dom.clone())?.normalize()?))?;
        row.sdot_trdf = 0.5 * d * fisher[(0, 0)];
        certs.worst(BoundsCertificate::close("de Bruijn on the circle: dS/dt = 1/2 D F", row.sdot_fd, row.sdot_trdf, FISHER_REL_TOL * row.sdot_trdf));
        row.fisher = fisher;
        row.extra = vec![d * t, bounds.gaussian_form, bounds.max_entropy, jensen, series, quad, gap];
        report.push(row)?;
    }
    for w in report.rows.windows(2) {
        certs.worst(BoundsCertificate::geq("Circle entropy is nondecreasing", w[1].s, w[0].s, BOUND_TOL));
    }
    let mut scalars = BTreeMap::new();
    scalars.insert("final_entropy".into(), report.rows.last().map_or(f64::NAN, |r| r.s));
    scalars.insert("log_2pi".into(), (2.0 * PI).ln());
    Ok(finish(report, certs, scalars))
}

/// ∫ f dR over SO(3) for a class function, by Gauss–Legendre panels in θ.
fn haar_integral(f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let (x, w) = gauss_legendre(16);
    let panels = 64;
    let h = PI / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(&w) {
            let th = mid + 0.5 * h * xi;
            acc += 0.5 * h * wi * f(th)? * (1.0 - th.cos()) / PI;
        }
    }
    Ok(acc)
}

fn so3(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let k = cfg.f64("k");
    let dom = Arc::new(DomainSpec::so3_radial(cfg.usize("cells"))?);
    let ax = *dom.axis(0);
    let dmat = DMatrix::identity(3, 3) * (2.0 * k);
    let kts = log_spaced(cfg.f64("kt_start"), cfg.f64("kt_end"), cfg.usize("samples"));
    let mut report = EntropyReport::new(["Kt", "integral", "kernel_gap", "rate_lower", "rate_upper"]);
    let mut certs = Certs::default();
    let tol = cfg.f64("kernel_tol");
    let rep_gap = |t: f64| -> Result<f64> {
        let mut gap: f64 = 0.0;
        for i in 0..ax.cells {
            let th = ax.center(i);
            gap = gap.max((so3_kernel(th, t, k, Representation::Fourier)? - so3_kernel(th, t, k, Representation::Folded)?).abs());
        }
        Ok(gap)
    };
    for &kt in &kts {
        let t = kt / k;
        let f = KernelSpec::so3(k, t).density(dom.clone())?.normalize()?;
        let s = entropy(&f)?;
        let rate = group_entropy_rate(&f, &dmat)?;
        let integral = haar_integral(|th| so3_kernel(th, t, k, Representation::Auto))?;
        let gap = rep_gap(t)?;
        certs.worst(BoundsCertificate::close("Eq. SO(3) heat kernel: Fourier and folded forms agree", gap, 0.0, tol));
        certs.worst(BoundsCertificate::close("Eq. normhaar: int f dR = 1", integral, 1.0, tol));
        certs.worst(BoundsCertificate::geq("SO(3) entropy under normalized Haar measure is <= 0", 0.0, s, BOUND_TOL));
        certs.all(rate.certificates.iter().cloned());
        let mut row = ReportRow::new(t, s);
        row.sdot_fd = kernel_rate(t, |t| entropy(&KernelSpec::so3(k, t).density(dom.clone())?.normalize()?))?;
        row.sdot_trdf = rate.rate;
        certs.worst(BoundsCertificate::close("Lie rate on SO(3): dS/dt = 1/2 tr[DF]", row.sdot_fd, row.sdot_trdf, FISHER_REL_TOL * row.sdot_trdf));
        row.extra = vec![kt, integral, gap, rate.lower, rate.upper];
        row.fisher = rate.fisher;
        report.push(row)?;
    }
    for w in report.rows.windows(2) {
        certs.worst(BoundsCertificate::geq("SO(3) entropy is nondecreasing", w[1].s, w[0].s, BOUND_TOL));
    }
    let t_flat = cfg.f64("kt_flat") / k;
    let mut flat: f64 = 0.0;
    for i in 0..ax.cells {
        flat = flat.max((so3_kernel(ax.center(i), t_flat, k, Representation::Auto)? - 1.0).abs());
    }
    let s_flat = entropy(&KernelSpec::so3(k, t_flat).density(dom)?.normalize()?)?;
    certs.worst(BoundsCertificate::close("SO(3) kernel is nearly uniform at large Kt: sup |f - 1|", flat, 0.0, cfg.f64("flat_tol")));
    certs.worst(BoundsCertificate::geq("SO(3) entropy approaches 0 from below", 0.0, s_flat, BOUND_TOL));
    let mut scalars = BTreeMap::new();
    scalars.insert("sup_deviation_at_kt_flat".into(), flat);
    scalars.insert("entropy_at_kt_flat".into(), s_flat);
    Ok(finish(report, certs, scalars))
}

/// Cart parameters and run options from a `cart` config.
pub fn cart_setup(cfg: &ExperimentConfig) -> (CartParams, CartOptions) {
    let p = CartParams {
        wheel_radius: cfg.f64("wheel_radius"),
        wheelbase: cfg.f64("wheelbase"),
        wheel_rate: cfg.f64("wheel_rate"),
        noise: cfg.f64("noise"),
    };
    let o = CartOptions {
        t_end: cfg.f64("t_end"),
        samples: cfg.usize("samples"),
        spacing: cfg.f64("spacing"),
        theta_cells: cfg.usize("theta_cells"),
        coarse: [cfg.usize("coarse_x"), cfg.usize("coarse_y"), cfg.usize("coarse_theta")],
        n_particles: cfg.usize("particles"),
        seed: cfg.seed,
        spread: cfg.f64("spread"),
        safety: cfg.f64("safety"),
    };
    (p, o)
}

fn cart(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let (p, o) = cart_setup(cfg);
    let run = cart_evolve(&p, &o)?;
    let dmat = &run.diffusion.d_matrix;
    let mut report = EntropyReport::new(["coarse_entropy", "histogram_entropy", "l1_histogram_grid"]);
    let mut certs = Certs::default();
    let (l1_tol, s_tol, r_tol) = (cfg.f64("l1_tol"), cfg.f64("entropy_tol"), cfg.f64("rate_tol"));
    for i in 0..run.times.len() {
        let mut row = ReportRow::new(run.times[i], run.entropy[i]);
        row.sdot_fd = run.sdot_fd[i];
        row.sdot_trdf = run.sdot_trdf[i];
        row.fisher = run.fisher[i].clone();
        row.extra = vec![run.coarse_entropy[i], run.histogram_entropy[i], run.l1[i]];
        certs.worst(BoundsCertificate::geq("Cart: L1(ensemble histogram, FPE grid) <= tol", l1_tol, run.l1[i], 0.0));
        let gap = (run.histogram_entropy[i] - run.coarse_entropy[i]).abs();
        certs.worst(BoundsCertificate::geq("Cart: relative entropy gap histogram vs grid <= tol", s_tol, gap / run.coarse_entropy[i].abs(), 0.0));
        certs.all(eigenvalue_sandwich(dmat, &run.fisher[i])?);
        if run.times[i] > 0.0 && run.sdot_fd[i].is_finite() {
            certs.worst(BoundsCertificate::close(
                "Lie rate: dS/dt = 1/2 tr[DF] on SE(2)",
                run.sdot_fd[i],
                run.sdot_trdf[i],
                r_tol * run.sdot_trdf[i].abs(),
            ));
        }
        report.push(row)?;
    }
    certs.worst(BoundsCertificate::close("Cart: Ito and Stratonovich operators agree", run.operator_gap, 0.0, 1e-10));
    let mut scalars = BTreeMap::new();
    scalars.insert("max_l1".into(), run.l1.iter().copied().fold(0.0, f64::max));
    scalars.insert("operator_gap".into(), run.operator_gap);
    scalars.insert("fine_cells".into(), run.domain.len() as f64);
    Ok(finish(report, certs, scalars))
}

fn compressible_run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let (d0, kappa0, u0, mu0, s0) = (cfg.f64("d0"), cfg.f64("kappa0"), cfg.f64("u0"), cfg.f64("mu0"), cfg.f64("sigma0"));
    let problem = compressible_fpe(cfg)?;
    let model = problem.model().clone();
    let (t_end, samples) = (cfg.f64("t_end"), cfg.usize("samples"));
    let interval = t_end / samples as f64;

    let rhs = compressible_moment_rhs(d0, kappa0, u0);
    let mut oracle = vec![mu0];
    let mut y = vec![mu0, s0 + mu0 * mu0];
    for _ in 0..samples {
        y = rk4_trajectory(&rhs, &y, interval, interval / 200.0).pop().expect("trajectory is nonempty").1;
        oracle.push(y[0]);
    }

    let sde_steps = (interval / cfg.f64("sde_dt") * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let h = interval / sde_steps as f64;
    let sq = s0.sqrt();
    let mut ens = initial_ensemble(1, cfg.usize("particles"), cfg.seed, |_, rng, x| {
        x[0] = mu0 + sq * Distribution::<f64>::sample(&StandardNormal, rng);
    });
    let mut ens_means = vec![sample_moments(&ens)?.mean[0]];
    for _ in 0..samples {
        advance(&model, &mut ens, h, sde_steps, Scheme::EulerMaruyama)?;
        ens_means.push(sample_moments(&ens)?.mean[0]);
    }

    let mut report = EntropyReport::new(EUCLIDEAN_COLUMNS.into_iter().chain(["mean_grid", "mean_oracle", "mean_closed_form", "mean_ensemble"]));
    let mut certs = Certs::default();
    let mut k = 0;
    solve_sampled(&problem, timing(cfg), &mut report, |t, f| {
        let mut row = euclidean_row(t, f, &model, None, &mut certs)?;
        let closed = compressible_mean_closed_form(d0, kappa0, u0, mu0, t);
        let mean = moments(f)?.mean[0];
        row.extra.extend([mean, oracle[k], closed, ens_means[k]]);
        let tol = cfg.f64("grid_mean_tol");
        certs.worst(BoundsCertificate::close("Moment ODE: grid mean = RK4 oracle", mean, oracle[k], tol));
        certs.worst(BoundsCertificate::close("Moment ODE: RK4 oracle = closed-form mean", oracle[k], closed, 1e-10 * (1.0 + closed.abs())));
        k += 1;
        Ok(row)
    })?;
    for r in &report.rows {
        if r.sdot_fd.is_finite() {
            certs.worst(BoundsCertificate::close("Theorem 1: Sdot = dS/dt", r.sdot_fd, r.sdot_thm1, 0.02 * r.sdot_thm1.abs() + 1e-6));
        }
    }
    let last = *oracle.last().expect("oracle has the start value");
    let ens_last = *ens_means.last().expect("ensemble has the start value");
    certs.worst(BoundsCertificate::close(
        "Moment ODE: ensemble mean = RK4 oracle at t_end",
        ens_last,
        last,
        cfg.f64("ensemble_tol") * last.abs().max(1.0),
    ));
    let mut scalars = BTreeMap::new();
    scalars.insert("mean_oracle_t_end".into(), last);
    scalars.insert("mean_ensemble_t_end".into(), ens_last);
    scalars.insert("mean_grid_t_end".into(), report.column("mean_grid").and_then(|c| c.last().copied()).unwrap_or(f64::NAN));
    Ok(finish(report, certs, scalars))
}

fn couette(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let d0 = cfg.f64("d0");
    let problem = couette_fpe(cfg)?;
    let model = problem.model().clone();
    let dmat = DMatrix::identity(2, 2) * (2.0 * d0);
    let mut report = EntropyReport::new(EUCLIDEAN_COLUMNS.into_iter().chain(["drift_term", "mean_e2_term", "mean_x", "mean_y"]));
    let mut certs = Certs::default();
    let mut drift_max: f64 = 0.0;
    solve_sampled(&problem, timing(cfg), &mut report, |t, f| {
        let mut row = euclidean_row(t, f, &model, Some(&dmat), &mut certs)?;
        let rate = entropy_rate_theorem1(f, &model, t)?;
        let mean = moments(f)?.mean;
        drift_max = drift_max.max(rate.drift.abs());
        row.extra.extend([rate.drift, mean[1], mean[0], mean[1]]);
        Ok(row)
    })?;
    for r in &report.rows {
        if r.sdot_fd.is_finite() {
            certs.worst(BoundsCertificate::close(
                "Theorem 1: Sdot = dS/dt in Couette flow",
                r.sdot_fd,
                r.sdot_thm1,
                cfg.f64("rate_tol") * r.sdot_thm1.abs(),
            ));
        }
    }
    let mut scalars = BTreeMap::new();
    scalars.insert("max_abs_drift_term".into(), drift_max);
    scalars.insert("mean_e2_term_t_end".into(), report.column("mean_e2_term").and_then(|c| c.last().copied()).unwrap_or(f64::NAN));
    Ok(finish(report, certs, scalars))
}

fn oscillator(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let (m, k, beta, b0) = (cfg.f64("m"), cfg.f64("k"), cfg.f64("beta"), cfg.f64("b0"));
    let sys = oscillator_system(cfg)?;
    let mut certs = Certs::default();
    let mut scalars = BTreeMap::new();

    certs.worst(fdt_certificate(&sys, 1e-10));
    let mut worst: f64 = 0.0;
    for q in sys.probe_points() {
        for p in [-1.5, 0.0, 1.0] {
            worst = worst.max((sys.phase_divergence(&q, &[p])? + sys.damping_trace(&q)?).abs());
        }
    }
    certs.worst(BoundsCertificate::close("Phase-space divergence: sum da/dq + dg/dp = -tr(C M^-1)", worst, 0.0, 1e-6));

    let big = Arc::new(DomainSpec::symmetric_box(2, cfg.f64("half_width"), cfg.usize("cells"))?);
    let feq = boltzmann_density(&sys, big.clone())?;
    let at_eq = FpeProblem::new(big.clone(), sys.phase_sde()?, Boundary::Decay, feq.clone())?;
    let base = stationarity_residual(&at_eq, &feq, FpeForm::Ito)?;
    let inflated = sys.with_damping_scaled(cfg.f64("inflate"));
    let off = FpeProblem::new(big, inflated.phase_sde()?, Boundary::Decay, feq.clone())?;
    let off = stationarity_residual(&off, &feq, FpeForm::Ito)?;
    certs.worst(BoundsCertificate::geq("Theorem 2: Boltzmann stationarity residual L1 <= tol", cfg.f64("stationarity_tol"), base, 0.0));
    certs.worst(BoundsCertificate::geq("Theorem 2: inflating C raises the residual >= 10x", off, 10.0 * base, 0.0));
    let sq = config_entropy(&configurational_marginal(&feq, &sys)?)?;
    let sq_exact = 0.5 * (2.0 * PI * E / (beta * k)).ln() + 0.5 * m.ln();
    certs.worst(BoundsCertificate::close("Configurational entropy of the Boltzmann marginal", sq, sq_exact, 1e-6));
    scalars.insert("stationarity_residual".into(), base);
    scalars.insert("inflated_residual".into(), off);
    scalars.insert("config_entropy".into(), sq);

    let problem = oscillator_fpe(cfg)?;
    let model = problem.model().clone();
    let dom = problem.domain_arc().clone();
    let dmat = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, b0 * b0]));
    let mut energy_at = Vec::with_capacity(dom.len());
    let mut x = [0.0; 2];
    for c in 0..dom.len() {
        dom.center_into(c, &mut x);
        energy_at.push(sys.hamiltonian(&x[1..], &x[..1])?);
    }
    let mut report = EntropyReport::new(EUCLIDEAN_COLUMNS.into_iter().chain(["energy", "free_energy"]));
    solve_sampled(&problem, timing(cfg), &mut report, |t, f| {
        let mut row = euclidean_row(t, f, &model, Some(&dmat), &mut certs)?;
        let energy: f64 = f.values().iter().zip(&energy_at).zip(dom.weights()).map(|((v, h), w)| v * h * w).sum();
        row.extra.extend([energy, energy - row.s / beta]);
        Ok(row)
    })?;
    let free = report.column("free_energy").expect("column exists");
    for w in free.windows(2) {
        certs.worst(BoundsCertificate::geq("Free energy <H> - S/beta is nonincreasing", w[0], w[1], 1e-9));
    }
    let z = sys.partition_function(&dom)?;
    scalars.insert("equilibrium_free_energy".into(), -z.ln() / beta);
    Ok(finish(report, certs, scalars))
}

fn conundrum(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let (b0, b1) = (cfg.f64("b0"), cfg.f64("b1"));
    let n = cfg.usize("points");
    let (lo, hi) = (cfg.f64("x_min"), cfg.f64("x_max"));
    let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let d = zero_mass_discrepancy(|x| [b0 + b1 * x, b1, 0.0], cfg.f64("k"), cfg.f64("beta"), &xs)?;
    let mut report = EntropyReport::new(["x", "delta1", "delta2", "ratio"]);
    let mut certs = Certs::default();
    for i in 0..n {
        let mut row = ReportRow::new(0.0, f64::NAN);
        row.extra = vec![d.x[i], d.delta1[i], d.delta2[i], d.ratio[i]];
        report.push(row)?;
        if d.ratio[i].is_finite() {
            certs.worst(BoundsCertificate::close("Zero-mass conundrum: Delta1 / Delta2 = 2", d.ratio[i], 2.0, 1e-6));
        }
    }
    certs.worst(BoundsCertificate::close("Zero-mass conundrum: max |Delta1 - 2 Delta2| = 0", d.max_gap, 0.0, cfg.f64("gap_tol")));
    let mut scalars = BTreeMap::new();
    scalars.insert("max_gap".into(), d.max_gap);
    Ok(finish(report, certs, scalars))
}

fn bounds_report(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let dom = Arc::new(DomainSpec::symmetric_box(1, cfg.f64("half_width"), cfg.usize("cells"))?);
    let gauss = |var: f64| gaussian_density(dom.clone(), &DVector::zeros(1), &DMatrix::from_element(1, 1, var));
    let (g1, g2) = (gauss(cfg.f64("var1"))?, gauss(cfg.f64("var2"))?);
    let (sep, mv) = (cfg.f64("mix_sep"), cfg.f64("mix_var"));
    let mixture = GridDensity::from_fn(dom.clone(), |x| {
        (-(x[0] - sep).powi(2) / (2.0 * mv)).exp() + (-(x[0] + sep).powi(2) / (2.0 * mv)).exp()
    })?
    .normalize()?;
    let mut certs = Certs::default();
    let tol = cfg.f64("equality_tol");
    let p = DMatrix::identity(1, 1);
    let tagged = |mut c: BoundsCertificate, tag: &str| {
        c.id = format!("{} [{tag}]", c.id);
        c
    };
    let epi = epi_certificate(&g1, &g2)?;
    certs.worst(BoundsCertificate::close("Eq. EPI: equality for proportional Gaussians", epi.lhs, epi.rhs, tol));
    certs.worst(tagged(epi.clone(), "Gaussian pair"));
    let epi_m = epi_certificate(&g1, &mixture)?;
    certs.worst(BoundsCertificate::geq("Eq. EPI: strict for a Gaussian and a mixture", epi_m.lhs, epi_m.rhs, 0.0));
    certs.worst(tagged(epi_m.clone(), "Gaussian and mixture"));
    let fci = fisher_conv_certificate(&g1, &g2, &p)?;
    certs.worst(BoundsCertificate::close("Eq. Fisher convolution: equality for Gaussians", fci.lhs, fci.rhs, tol));
    certs.worst(tagged(fci.clone(), "Gaussian pair"));
    let fci_m = fisher_conv_certificate(&g1, &mixture, &p)?;
    certs.worst(BoundsCertificate::geq("Eq. Fisher convolution: strict for a Gaussian and a mixture", fci_m.lhs, fci_m.rhs, 0.0));
    certs.worst(tagged(fci_m.clone(), "Gaussian and mixture"));

    let problem = ou_fpe(cfg)?;
    let model = problem.model().clone();
    let dmat = model.diffusion(&[0.0, 0.0], 0.0);
    let mut report = EntropyReport::new(EUCLIDEAN_COLUMNS);
    let t_end = cfg.f64("t_end");
    let samples = cfg.usize("samples");
    solve_sampled(&problem, (t_end, samples, 0.0, 0.9), &mut report, |t, f| euclidean_row(t, f, &model, Some(&dmat), &mut certs))?;
    let mut scalars = BTreeMap::new();
    scalars.insert("epi_mixture_slack".into(), epi_m.slack);
    scalars.insert("fisher_mixture_slack".into(), fci_m.slack);
    scalars.insert("epi_gaussian_gap".into(), (epi.lhs - epi.rhs).abs());
    scalars.insert("fisher_gaussian_gap".into(), (fci.lhs - fci.rhs).abs());
    Ok(finish(report, certs, scalars))
}

fn debruijn(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let space = cfg.str("space");
    let n = cfg.usize("samples");
    let t_end = cfg.f64("t_end");
    let lin = |a: f64| -> Vec<f64> { (0..n).map(|i| a + (t_end - a) * i as f64 / (n - 1) as f64).collect() };
    let mut report = EntropyReport::new(["group_dim"]);
    let mut certs = Certs::default();
    let mut push = |rep: crate::diffusion::DeBruijnReport, dim: f64, report: &mut EntropyReport| -> Result<()> {
        for r in &rep.rows {
            let mut row = ReportRow::new(r.t, r.entropy);
            row.sdot_fd = r.dsdt_fd;
            row.sdot_trdf = r.half_tr_df;
            row.extra = vec![dim];
            report.push(row)?;
        }
        let tag = if dim == 1.0 { "circle" } else { "SO(3)" };
        for mut c in rep.certificates {
            c.id = format!("{} [{tag}]", c.id);
            certs.worst(c);
        }
        Ok(())
    };
    if space == "circle" || space == "both" {
        let dom = Arc::new(DomainSpec::circle(cfg.usize("circle_cells"))?);
        let d = cfg.f64("d");
        let alpha = KernelSpec::circle(d, cfg.f64("circle_alpha_t")).density(dom)?.normalize()?;
        let rep = debruijn_check(&alpha, &DMatrix::from_element(1, 1, d), &[cfg.f64("drift")], &lin(cfg.f64("t_start")))?;
        push(rep, 1.0, &mut report)?;
    }
    if space == "so3" || space == "both" {
        let dom = Arc::new(DomainSpec::so3_radial(cfg.usize("so3_cells"))?);
        let k = cfg.f64("k");
        let alpha = KernelSpec::so3(k, cfg.f64("so3_alpha_t")).density(dom)?.normalize()?;
        let rep = debruijn_check(&alpha, &(DMatrix::identity(3, 3) * (2.0 * k)), &[0.0; 3], &lin(cfg.f64("so3_t_start")))?;
        push(rep, 3.0, &mut report)?;
    }
    let mut scalars = BTreeMap::new();
    let worst = report
        .rows
        .iter()
        .map(|r| (r.sdot_fd - r.sdot_trdf).abs() / r.sdot_trdf.abs().max(1e-300))
        .fold(0.0, f64::max);
    scalars.insert("max_relative_gap".into(), worst);
    Ok(finish(report, certs, scalars))
}

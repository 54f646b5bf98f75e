//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeMap;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use entroprod::bounds::crb_certificate;
use entroprod::cli::config::{resolve, Experiment};
use entroprod::cli::experiments::{run, RunOutput};
use entroprod::diffusion::rotational_ou_model;
use entroprod::grid::{fisher_information, gaussian_density, moments, DomainSpec};
use entroprod::sde::{sample_moments, simulate_with, SimConfig};
use nalgebra::{DMatrix, DVector};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

struct Runs {
    cache: BTreeMap<String, (RunOutput, f64)>,
}

impl Runs {
    fn get(&mut self, exp: Experiment, sets: &[&str]) -> &(RunOutput, f64) {
        let key = format!("{exp} {}", sets.join(" "));
        self.cache.entry(key).or_insert_with(|| {
            let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
            let (cfg, errors) = resolve(exp, None, &sets, None);
            assert!(errors.is_empty(), "{exp}: {errors:?}");
            let start = Instant::now();
            let out = run(&cfg).unwrap_or_else(|e| panic!("{exp} failed: {e}"));
            (out, start.elapsed().as_secs_f64())
        })
    }
}

fn failures(out: &RunOutput, prefix: &str) -> Vec<String> {
    out.report
        .certificates
        .iter()
        .filter(|c| c.id.starts_with(prefix) && !c.pass)
        .map(|c| c.id.clone())
        .collect()
}

fn count(out: &RunOutput, prefix: &str) -> usize {
    out.report.certificates.iter().filter(|c| c.id.starts_with(prefix)).count()
}

fn all_pass(out: &RunOutput) -> Outcome {
    let bad = failures(out, "");
    outcome(bad.is_empty(), format!("{} certificates, failed {bad:?}", out.report.certificates.len()))
}

fn ac01(r: &mut Runs) -> Outcome {
    let (out, secs) = r.get(Experiment::Brownian, &[]);
    let bad = failures(out, "Brownian rate");
    let n = count(out, "Brownian rate");
    let err = out.scalars["max_relative_rate_error"];
    outcome(bad.is_empty() && n == 2 && *secs < 30.0, format!("max rel. rate error {err:.2e}, {secs:.1} s at 256^2"))
}

fn ac02() -> Outcome {
    let dom = Arc::new(DomainSpec::symmetric_box(2, 8.0, 256).unwrap());
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
    let f = gaussian_density(dom, &DVector::zeros(2), &cov).unwrap();
    let fisher = fisher_information(&f).unwrap();
    let sigma = moments(&f).unwrap().covariance;
    let sinv = sigma.clone().try_inverse().unwrap();
    let rel = (&fisher - &sinv).norm() / sinv.norm();
    let crb = crb_certificate(&sigma, &fisher).unwrap();
    outcome(rel < 0.01 && crb.lhs.abs() < 1e-3, format!("|F - Sigma^-1|/|Sigma^-1| = {rel:.2e}, CRB slack {:.2e}", crb.lhs))
}

fn ac03(r: &mut Runs) -> Outcome {
    all_pass(&r.get(Experiment::Circle, &[]).0)
}

fn ac04(r: &mut Runs) -> Outcome {
    let out = &r.get(Experiment::Debruijn, &[]).0;
    let worst = out.report.certificates.iter().map(|c| (c.lhs - c.rhs).abs() / c.rhs.abs()).fold(0.0, f64::max);
    let o = all_pass(out);
    outcome(
        o.pass && worst < 1e-3 && count(out, "de Bruijn identity, integrated") == 2,
        format!("worst relative gap {worst:.2e}, {}", o.detail),
    )
}

fn ac05(r: &mut Runs) -> Outcome {
    all_pass(&r.get(Experiment::So3, &[]).0)
}

fn ac06(r: &mut Runs) -> Outcome {
    let out = &r.get(Experiment::Oscillator, &[]).0;
    let bad = failures(out, "Theorem 2");
    let (base, off) = (out.scalars["stationarity_residual"], out.scalars["inflated_residual"]);
    outcome(
        bad.is_empty() && base < 1e-3 && off >= 10.0 * base,
        format!("residual {base:.2e} at 512^2, {off:.2e} with C inflated 20%"),
    )
}

fn ac07(r: &mut Runs) -> Outcome {
    let out = &r.get(Experiment::Conundrum, &[]).0;
    let o = all_pass(out);
    outcome(o.pass, format!("max gap {:.1e}", out.scalars["max_gap"]))
}

fn ac08(r: &mut Runs) -> Outcome {
    let out = &r.get(Experiment::Cart, &[]).0;
    let o = all_pass(out);
    outcome(o.pass, format!("max L1 {:.3}, {}", out.scalars["max_l1"], o.detail))
}

fn ac09(r: &mut Runs) -> Outcome {
    let suite = &r.get(Experiment::BoundsReport, &[]).0;
    let mut bad = failures(suite, "");
    let mut cascades = 0;
    for exp in [Experiment::Brownian, Experiment::Compressible, Experiment::Oscillator, Experiment::BoundsReport] {
        let out = &r.get(exp, &[]).0;
        cascades += count(out, "CRB cascade");
        bad.extend(failures(out, "CRB cascade").into_iter().map(|id| format!("{exp}: {id}")));
    }
    outcome(bad.is_empty() && cascades == 8, format!("{cascades} cascade certificates, failed {bad:?}"))
}

fn ac10(r: &mut Runs) -> Outcome {
    let out = &r.get(Experiment::Compressible, &[]).0;
    let general = failures(out, "Moment ODE").is_empty();
    let mu1 = out.scalars["mean_oracle_t_end"];
    let flat = &r.get(Experiment::Compressible, &["kappa0=0", "lower=-12"]).0;
    let col = |name| flat.report.column(name).unwrap();
    let (grid, exact) = (col("mean_grid"), col("mean_closed_form"));
    let t = flat.report.rows.iter().map(|row| row.t);
    let exact_ok = exact.iter().zip(t).all(|(m, t)| (m - t).abs() < 1e-10);
    let gap = grid.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    outcome(
        general && exact_ok && gap < 1e-10 && (mu1 - 1.27497).abs() < 5e-6,
        format!("mu(1) = {mu1:.7}, kappa0 = 0 grid gap {gap:.1e}"),
    )
}

fn ac11() -> Outcome {
    let beta = 2.0;
    let model = rotational_ou_model(beta, &DMatrix::identity(3, 3)).unwrap();
    let cfg = SimConfig::new(0.005, 1000, 100_000, 11);
    let end = simulate_with(&model, |_, _, x| x.fill(0.0), &cfg, |_| Ok(())).unwrap();
    let cov = sample_moments(&end).unwrap().covariance * beta;
    let err = (0..3).map(|i| (cov[(i, i)] - 1.0).abs()).fold(0.0, f64::max);
    let off = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|ij| cov[ij].abs()).fold(0.0, f64::max);
    outcome(err < 0.02 && off < 0.02, format!("max |beta cov_ii - 1| = {err:.3}, max |beta cov_ij| = {off:.3}"))
}

fn ac12() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut digests = Vec::new();
    for exp in ["compressible", "so3"] {
        let mut csv = Vec::new();
        for threads in ["1", "3"] {
            let out = dir.path().join(format!("{exp}-{threads}"));
            let status = Command::new(env!("CARGO_BIN_EXE_entroprod"))
                .args([exp, "--seed", "7", "--out"])
                .arg(&out)
                .env("ENTROPROD_THREADS", threads)
                .output()
                .unwrap()
                .status;
            assert_eq!(status.code(), Some(0), "{exp} with {threads} threads");
            csv.push(std::fs::read(out.join("series.csv")).unwrap());
        }
        digests.push((exp, csv[0] == csv[1]));
    }
    outcome(digests.iter().all(|(_, same)| *same), format!("byte-identical CSV at 1 and 3 threads: {digests:?}"))
}

fn main() {
    let mut runs = Runs { cache: BTreeMap::new() };
    let checks: Vec<(&str, Outcome)> = vec![
        ("free Brownian entropy rate", ac01(&mut runs)),
        ("Gaussian Fisher/CRB equality", ac02()),
        ("circle kernel and entropy bounds", ac03(&mut runs)),
        ("de Bruijn identity on circle and SO(3)", ac04(&mut runs)),
        ("SO(3) heat kernel", ac05(&mut runs)),
        ("Theorem 2 Boltzmann stationarity", ac06(&mut runs)),
        ("zero-mass conundrum", ac07(&mut runs)),
        ("cart ensemble vs FPE", ac08(&mut runs)),
        ("bounds suite and cascade", ac09(&mut runs)),
        ("compressible moment propagation", ac10(&mut runs)),
        ("rotational OU covariance", ac11()),
        ("thread-count reproducibility", ac12()),
    ];
    let mut failed = 0;
    for (i, (name, o)) in checks.iter().enumerate() {
        println!("AC-{:02} {} {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{}/{} acceptance criteria pass", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

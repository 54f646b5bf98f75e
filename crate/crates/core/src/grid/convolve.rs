use super::{require_same, DomainKind, GridDensity};
use crate::error::{Error, Result};

/// Four-point Lagrange weights for a sample at fractional offset `t` ∈ [0, 1)
/// past node 0, using nodes −1, 0, 1, 2.
fn cubic_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// Resamples axis `k` of a row-major array with shape `shape`: output sample m
/// reads position m + `offset` of the input, zero outside unless `cyclic`.
fn resample_axis(data: &[f64], shape: &[usize], k: usize, out_len: usize, offset: f64, cyclic: bool) -> Vec<f64> {
    let inner: usize = shape[k + 1..].iter().product();
    let outer: usize = shape[..k].iter().product();
    let n_in = shape[k];
    let base = offset.floor();
    let t = offset - base;
    let exact = t.abs() < 1e-12 || (1.0 - t).abs() < 1e-12;
    let base = if (1.0 - t).abs() < 1e-12 { base as i64 + 1 } else { base as i64 };
    let w = cubic_weights(t);
    let fetch = |o: usize, i: i64, r: usize| -> f64 {
        let j = if cyclic {
            i.rem_euclid(n_in as i64)
        } else if i < 0 || i >= n_in as i64 {
            return 0.0;
        } else {
            i
        };
        data[(o * n_in + j as usize) * inner + r]
    };
    let mut out = vec![0.0; outer * out_len * inner];
    for o in 0..outer {
        for m in 0..out_len {
            let i0 = m as i64 + base;
            for r in 0..inner {
                out[(o * out_len + m) * inner + r] = if exact {
                    fetch(o, i0, r)
                } else {
                    w[0] * fetch(o, i0 - 1, r) + w[1] * fetch(o, i0, r) + w[2] * fetch(o, i0 + 1, r) + w[3] * fetch(o, i0 + 2, r)
                };
            }
        }
    }
    out
}

/// (f₁ * f₂)(x) = ∫ f₁(y) f₂(x − y) dy on Euclidean boxes (zero-padded) or the
/// circle (cyclic), returned on the same cells and renormalized.
pub fn convolve(f1: &GridDensity, f2: &GridDensity) -> Result<GridDensity> {
    require_same(f1.domain(), f2.domain())?;
    let dom = f1.domain();
    let cyclic = match dom.kind() {
        DomainKind::Circle => true,
        DomainKind::EuclideanBox => false,
        k => return Err(Error::UnsupportedDomain { op: "convolve", domain: k.name() }),
    };
    let nd = dom.ndim();
    let cells: Vec<usize> = dom.axes().iter().map(|a| a.cells).collect();
    let raw_shape: Vec<usize> = if cyclic { cells.clone() } else { cells.iter().map(|n| 2 * n - 1).collect() };
    let mut raw_strides = vec![1usize; nd];
    for k in (0..nd.saturating_sub(1)).rev() {
        raw_strides[k] = raw_strides[k + 1] * raw_shape[k + 1];
    }
    let cell_volume: f64 = dom.spacings().iter().product();
    let raw_len: usize = raw_shape.iter().product();
    let mut raw = vec![0.0; raw_len];

    if cyclic {
        let n = cells[0];
        for (j, a) in f1.values().iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (k, b) in f2.values().iter().enumerate() {
                raw[(j + k) % n] += a * b;
            }
        }
    } else {
        let mut idx = vec![0usize; nd];
        let offsets: Vec<usize> = (0..dom.len())
            .map(|c| {
                dom.unravel(c, &mut idx);
                idx.iter().zip(&raw_strides).map(|(i, s)| i * s).sum()
            })
            .collect();
        for (ca, a) in f1.values().iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            let oa = offsets[ca];
            for (cb, b) in f2.values().iter().enumerate() {
                raw[oa + offsets[cb]] += a * b;
            }
        }
    }
    for v in raw.iter_mut() {
        *v *= cell_volume;
    }

    // Raw index r sits at 2·lower + (r + 1)h; output cell m sits at lower + (m + ½)h.
    let mut shape = raw_shape;
    let mut data = raw;
    for k in 0..nd {
        let ax = dom.axis(k);
        let offset = -0.5 - ax.lower / ax.spacing();
        data = resample_axis(&data, &shape, k, cells[k], offset, cyclic);
        shape[k] = cells[k];
    }
    for v in data.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    GridDensity::from_raw(f1.domain_arc().clone(), data).normalize()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;
    use std::sync::Arc;

    use nalgebra::{DMatrix, DVector};

    use super::*;
    use crate::grid::{gaussian_density, DomainSpec};

    fn gauss1(dom: &Arc<DomainSpec>, var: f64) -> GridDensity {
        gaussian_density(dom.clone(), &DVector::zeros(1), &DMatrix::from_element(1, 1, var)).unwrap()
    }

    #[test]
    fn gaussians_add_variances() {
        let dom = Arc::new(DomainSpec::symmetric_box(1, 12.0, 480).unwrap());
        let c = convolve(&gauss1(&dom, 1.0), &gauss1(&dom, 2.0)).unwrap();
        let want = gauss1(&dom, 3.0);
        assert!(c.sup_distance(&want).unwrap() < 1e-4, "{}", c.sup_distance(&want).unwrap());
    }

    #[test]
    fn odd_grid_uses_exact_offsets() {
        let dom = Arc::new(DomainSpec::symmetric_box(1, 10.0, 401).unwrap());
        let delta = GridDensity::point_mass(dom.clone(), &[0.0]).unwrap();
        let f = gauss1(&dom, 1.5);
        let c = convolve(&f, &delta).unwrap();
        assert!(c.sup_distance(&f).unwrap() < 1e-12);
    }

    #[test]
    fn commutative() {
        let dom = Arc::new(DomainSpec::symmetric_box(1, 8.0, 128).unwrap());
        let a = gaussian_density(dom.clone(), &DVector::from_element(1, 1.0), &DMatrix::from_element(1, 1, 0.7)).unwrap();
        let b = gauss1(&dom, 2.0);
        let ab = convolve(&a, &b).unwrap();
        let ba = convolve(&b, &a).unwrap();
        assert!(ab.sup_distance(&ba).unwrap() < 1e-10);
        assert!((ab.integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn circle_uniform_is_absorbing() {
        let dom = Arc::new(DomainSpec::circle(64).unwrap());
        let u = GridDensity::uniform(dom.clone());
        let f = GridDensity::from_fn(dom, |x| 1.0 + 0.5 * x[0].cos()).unwrap().normalize().unwrap();
        let c = convolve(&u, &f).unwrap();
        assert!(c.values().iter().all(|v| (v - 1.0 / (2.0 * PI)).abs() < 1e-12));
    }

    #[test]
    fn rejects_group_domains() {
        let dom = Arc::new(DomainSpec::so3_radial(16).unwrap());
        let u = GridDensity::uniform(dom);
        assert!(matches!(convolve(&u, &u), Err(Error::UnsupportedDomain { .. })));
    }
}

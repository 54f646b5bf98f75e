use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};

/// Minimum number of cells allowed on any axis.
pub const MIN_CELLS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    EuclideanBox,
    Circle,
    /// Strip unbounded in x, bounded by walls in y.
    Slab,
    /// Class functions on SO(3), parameterized by the rotation angle in [0, π].
    So3Radial,
    /// (x, y) box times the periodic heading angle.
    Se2Box,
    /// Exponential coordinates v ∈ [-π, π]³ restricted to the ball |v| < π.
    So3Ball,
}

impl DomainKind {
    pub fn name(self) -> &'static str {
        match self {
            DomainKind::EuclideanBox => "euclidean_box",
            DomainKind::Circle => "circle",
            DomainKind::Slab => "slab",
            DomainKind::So3Radial => "so3_radial",
            DomainKind::Se2Box => "se2_box",
            DomainKind::So3Ball => "so3_ball",
        }
    }

    pub fn is_group(self) -> bool {
        matches!(self, DomainKind::So3Radial | DomainKind::Se2Box | DomainKind::So3Ball)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    Lebesgue,
    /// Normalized Haar measure on SO(3) restricted to class functions:
    /// (2/π) sin²(θ/2) dθ on [0, π].
    So3HaarRadial,
    /// dx dy dθ.
    HaarSe2,
    /// Normalized Haar measure in exponential coordinates:
    /// sin²(|v|/2) / (2π² |v|²) d³v inside the ball of radius π.
    So3HaarExp,
    /// Lebesgue measure scaled by a per-cell metric factor (e.g. √det M).
    Metric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Axis {
    pub lower: f64,
    pub upper: f64,
    pub cells: usize,
    pub periodic: bool,
}

impl Axis {
    pub fn new(lower: f64, upper: f64, cells: usize) -> Self {
        Self { lower, upper, cells, periodic: false }
    }

    pub fn periodic(lower: f64, upper: f64, cells: usize) -> Self {
        Self { lower, upper, cells, periodic: true }
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / self.cells as f64
    }

    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        self.lower + (i as f64 + 0.5) * self.spacing()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells).map(|i| self.center(i)).collect()
    }

    /// Cell index containing `x`, wrapping periodic axes. `None` when outside.
    pub fn locate(&self, x: f64) -> Option<usize> {
        let span = self.upper - self.lower;
        let mut u = (x - self.lower) / span;
        if self.periodic {
            u -= u.floor();
        } else if !(0.0..=1.0).contains(&u) {
            return None;
        }
        Some(((u * self.cells as f64) as usize).min(self.cells - 1))
    }
}

/// A measured discretization of a state space with midpoint quadrature weights.
///
/// Values are stored row-major: the last axis varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    kind: DomainKind,
    axes: Vec<Axis>,
    weight_rule: WeightRule,
    strides: Vec<usize>,
    weights: Vec<f64>,
}

impl DomainSpec {
    fn build(kind: DomainKind, axes: Vec<Axis>, weight_rule: WeightRule) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidDomain("domain needs at least one axis".into()));
        }
        for (k, ax) in axes.iter().enumerate() {
            if ax.cells < MIN_CELLS {
                return Err(Error::InvalidDomain(format!(
                    "axis {k} has {} cells, need at least {MIN_CELLS}",
                    ax.cells
                )));
            }
            if !(ax.upper > ax.lower) || !ax.lower.is_finite() || !ax.upper.is_finite() {
                return Err(Error::InvalidDomain(format!(
                    "axis {k} needs finite bounds with upper > lower, got [{}, {}]",
                    ax.lower, ax.upper
                )));
            }
        }
        let mut strides = vec![1; axes.len()];
        for k in (0..axes.len() - 1).rev() {
            strides[k] = strides[k + 1] * axes[k + 1].cells;
        }
        let mut dom = Self { kind, axes, weight_rule, strides, weights: Vec::new() };
        dom.weights = dom.compute_weights();
        let total: f64 = dom.weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidDomain(format!("total measure {total} is not positive")));
        }
        Ok(dom)
    }

    /// Axis-aligned box with Lebesgue measure and non-periodic axes.
    pub fn euclidean_box(bounds: &[(f64, f64, usize)]) -> Result<Self> {
        let axes = bounds.iter().map(|&(lo, hi, n)| Axis::new(lo, hi, n)).collect();
        Self::build(DomainKind::EuclideanBox, axes, WeightRule::Lebesgue)
    }

    /// Symmetric box [-half_width, half_width]^d.
    pub fn symmetric_box(dim: usize, half_width: f64, cells: usize) -> Result<Self> {
        Self::euclidean_box(&vec![(-half_width, half_width, cells); dim])
    }

    /// Unit circle θ ∈ [-π, π) with measure dθ.
    pub fn circle(cells: usize) -> Result<Self> {
        Self::build(DomainKind::Circle, vec![Axis::periodic(-PI, PI, cells)], WeightRule::Lebesgue)
    }

    /// Slab x ∈ [x_lo, x_hi] (decaying), y ∈ [0, height] (walls).
    pub fn slab(x: (f64, f64, usize), height: f64, y_cells: usize) -> Result<Self> {
        Self::build(
            DomainKind::Slab,
            vec![Axis::new(x.0, x.1, x.2), Axis::new(0.0, height, y_cells)],
            WeightRule::Lebesgue,
        )
    }

    /// Rotation angle θ ∈ [0, π] for class functions on SO(3), normalized Haar weight.
    pub fn so3_radial(cells: usize) -> Result<Self> {
        Self::build(DomainKind::So3Radial, vec![Axis::new(0.0, PI, cells)], WeightRule::So3HaarRadial)
    }

    /// SE(2) chart: (x, y) box times periodic θ ∈ [-π, π).
    pub fn se2_box(x: (f64, f64, usize), y: (f64, f64, usize), theta_cells: usize) -> Result<Self> {
        Self::build(
            DomainKind::Se2Box,
            vec![Axis::new(x.0, x.1, x.2), Axis::new(y.0, y.1, y.2), Axis::periodic(-PI, PI, theta_cells)],
            WeightRule::HaarSe2,
        )
    }

    /// SO(3) in exponential coordinates on the cube [-π, π]³; cells outside the
    /// ball |v| < π carry zero weight.
    pub fn so3_ball(cells: usize) -> Result<Self> {
        Self::build(DomainKind::So3Ball, vec![Axis::new(-PI, PI, cells); 3], WeightRule::So3HaarExp)
    }

    /// Same cells as `self`, with Lebesgue weights multiplied by `factor(center)`.
    pub fn with_metric(&self, factor: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut dom = self.clone();
        dom.weight_rule = WeightRule::Metric;
        let mut x = vec![0.0; self.ndim()];
        let cell_volume: f64 = self.axes.iter().map(Axis::spacing).product();
        for c in 0..self.len() {
            self.center_into(c, &mut x);
            let m = factor(&x);
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::InvalidDomain(format!("metric factor {m} at cell {c}")));
            }
            dom.weights[c] = cell_volume * m;
        }
        Ok(dom)
    }

    fn compute_weights(&self) -> Vec<f64> {
        let cell_volume: f64 = self.axes.iter().map(Axis::spacing).product();
        let n = self.len();
        match self.weight_rule {
            WeightRule::Lebesgue | WeightRule::HaarSe2 | WeightRule::Metric => vec![cell_volume; n],
            WeightRule::So3HaarRadial => (0..n)
                .map(|i| {
                    let th = self.axes[0].center(i);
                    let s = (0.5 * th).sin();
                    2.0 / PI * s * s * cell_volume
                })
                .collect(),
            WeightRule::So3HaarExp => {
                let mut x = vec![0.0; 3];
                (0..n)
                    .map(|c| {
                        self.center_into(c, &mut x);
                        so3_exp_density(&x) * cell_volume
                    })
                    .collect()
            }
        }
    }

    #[inline]
    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    #[inline]
    pub fn weight_rule(&self) -> WeightRule {
        self.weight_rule
    }

    #[inline]
    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    #[inline]
    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    #[inline]
    pub fn ndim(&self) -> usize {
        self.axes.len()
    }

    /// Total number of cells.
    #[inline]
    pub fn len(&self) -> usize {
        self.strides[0] * self.axes[0].cells
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn spacings(&self) -> Vec<f64> {
        self.axes.iter().map(Axis::spacing).collect()
    }

    pub fn min_spacing(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).fold(f64::INFINITY, f64::min)
    }

    /// Index along axis `k` of flat cell `c`.
    #[inline]
    pub fn coord_index(&self, c: usize, k: usize) -> usize {
        (c / self.strides[k]) % self.axes[k].cells
    }

    pub fn unravel(&self, c: usize, idx: &mut [usize]) {
        for (k, slot) in idx.iter_mut().enumerate() {
            *slot = self.coord_index(c, k);
        }
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn center_into(&self, c: usize, x: &mut [f64]) {
        for (k, slot) in x.iter_mut().enumerate() {
            *slot = self.axes[k].center(self.coord_index(c, k));
        }
    }

    pub fn center(&self, c: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.ndim()];
        self.center_into(c, &mut x);
        x
    }

    /// Neighbor of `c` shifted by `delta` cells along axis `k`; periodic axes wrap,
    /// non-periodic axes return `None` past the edge.
    #[inline]
    pub fn neighbor(&self, c: usize, k: usize, delta: isize) -> Option<usize> {
        let n = self.axes[k].cells as isize;
        let i = self.coord_index(c, k) as isize;
        let mut j = i + delta;
        if self.axes[k].periodic {
            j = j.rem_euclid(n);
        } else if j < 0 || j >= n {
            return None;
        }
        Some((c as isize + (j - i) * self.strides[k] as isize) as usize)
    }

    /// Flat index of the cell containing `x`, or `None` if outside.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut c = 0;
        for (k, ax) in self.axes.iter().enumerate() {
            c += ax.locate(x[k])? * self.strides[k];
        }
        Some(c)
    }

    /// True when both domains discretize the same cells with the same weights.
    pub fn same_grid(&self, other: &DomainSpec) -> bool {
        self.kind == other.kind && self.axes == other.axes && self.weight_rule == other.weight_rule
    }

    /// Whether the default moment chart applies (Euclidean-like coordinates).
    pub fn supports_moments(&self) -> bool {
        !matches!(self.kind, DomainKind::So3Radial | DomainKind::So3Ball)
    }

    /// Estimated bytes for one density on this grid.
    pub fn density_bytes(&self) -> usize {
        self.len() * std::mem::size_of::<f64>()
    }
}

/// Normalized Haar density of SO(3) in exponential coordinates.
pub(crate) fn so3_exp_density(v: &[f64]) -> f64 {
    let th = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if th >= PI {
        return 0.0;
    }
    let ratio = if th < 1e-4 {
        // sin²(θ/2)/θ² = 1/4 - θ²/48 + ...
        0.25 - th * th / 48.0
    } else {
        let s = (0.5 * th).sin();
        s * s / (th * th)
    };
    ratio / (2.0 * PI * PI)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_coarse_or_inverted_axes() {
        assert!(DomainSpec::euclidean_box(&[(0.0, 1.0, 4)]).is_err());
        assert!(DomainSpec::euclidean_box(&[(1.0, 0.0, 16)]).is_err());
        assert!(DomainSpec::euclidean_box(&[(0.0, 1.0, 16)]).is_ok());
    }

    #[test]
    fn so3_radial_measure_is_one() {
        for n in [8, 33, 256] {
            let d = DomainSpec::so3_radial(n).unwrap();
            assert!((d.total_measure() - 1.0).abs() < 1e-10, "n={n}");
        }
    }

    #[test]
    fn so3_ball_measure_is_close_to_one() {
        let d = DomainSpec::so3_ball(48).unwrap();
        assert!((d.total_measure() - 1.0).abs() < 2e-2, "{}", d.total_measure());
    }

    #[test]
    fn circle_has_no_duplicated_endpoint() {
        let d = DomainSpec::circle(16).unwrap();
        let first = d.axis(0).center(0);
        let last = d.axis(0).center(15);
        assert!((first + PI - PI / 16.0).abs() < 1e-15);
        assert!((last - PI + PI / 16.0).abs() < 1e-15);
        assert!((d.total_measure() - 2.0 * PI).abs() < 1e-12);
        assert_eq!(d.axis(0).locate(PI), d.axis(0).locate(-PI));
    }

    #[test]
    fn ravel_roundtrip_and_neighbors() {
        let d = DomainSpec::se2_box((-1.0, 1.0, 8), (-1.0, 1.0, 10), 12).unwrap();
        let mut idx = [0; 3];
        for c in [0, 17, 500, d.len() - 1] {
            d.unravel(c, &mut idx);
            assert_eq!(d.ravel(&idx), c);
        }
        let c = d.ravel(&[0, 3, 11]);
        assert_eq!(d.neighbor(c, 2, 1), Some(d.ravel(&[0, 3, 0])));
        assert_eq!(d.neighbor(c, 0, -1), None);
    }
}

//! Wasserstein-2 distances and moments for measures on the real line.
//!
//! In one dimension the optimal coupling is monotone, so `W2` is the `L2`
//! distance between quantile functions. Empirical measures are compared
//! exactly. Gaussian mixtures are compared on a uniform grid of
//! [`QUANTILE_CELLS`] quantile cells: each measure is replaced by the average
//! of its quantile function over every cell, which gives a lower bound on
//! `W2`, and the within-cell spread of both measures bounds the error from
//! above.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::special::{normal_cdf, normal_pdf};

/// Number of uniform quantile cells used against reference mixtures.
pub const QUANTILE_CELLS: usize = 512;
/// Absolute tolerance of the mixture quantile bisection.
pub const BISECTION_TOL: f64 = 1e-10;

/// Sorted finite sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Empirical1D {
    sorted: Vec<f64>,
}

impl Empirical1D {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::param("samples", "empirical measure needs at least one point"));
        }
        if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
            return Err(Error::param("samples", format!("non-finite sample {bad}")));
        }
        samples.sort_unstable_by(f64::total_cmp);
        Ok(Empirical1D { sorted: samples })
    }

    pub fn from_slice(samples: &[f64]) -> Result<Self> {
        Empirical1D::new(samples.to_vec())
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.sorted
    }

    /// Multiplies every point by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        let mut v: Vec<f64> = self.sorted.iter().map(|x| alpha * x).collect();
        if alpha < 0.0 {
            v.reverse();
        }
        Empirical1D { sorted: v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub second_moment: f64,
    pub variance: f64,
}

pub fn moments(x: &Empirical1D) -> Moments {
    let n = x.len() as f64;
    let mean = x.sorted.iter().sum::<f64>() / n;
    let second_moment = x.sorted.iter().map(|v| v * v).sum::<f64>() / n;
    let variance = x.sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Moments { mean, second_moment, variance }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    /// Equal sample counts: order statistics paired one to one.
    OrderStatistics,
    /// Unequal counts: quantile functions integrated over the merged grid of
    /// both step functions.
    MergedQuantiles,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wasserstein {
    pub value: f64,
    pub coupling: Coupling,
}

/// Exact `W2` between two empirical measures.
pub fn w2_empirical_1d(x: &Empirical1D, y: &Empirical1D) -> Wasserstein {
    if x.len() == y.len() {
        let sq: f64 = x.sorted.iter().zip(&y.sorted).map(|(a, b)| (a - b) * (a - b)).sum();
        return Wasserstein { value: libm::sqrt(sq / x.len() as f64), coupling: Coupling::OrderStatistics };
    }
    // Sample i of x covers [i·m, (i+1)·m) and sample j of y covers
    // [j·n, (j+1)·n) in units of 1/(n·m).
    let (n, m) = (x.len() as u128, y.len() as u128);
    let (mut i, mut j) = (0usize, 0usize);
    let mut pos: u128 = 0;
    let mut acc = 0.0;
    while i < x.len() && j < y.len() {
        let end_x = (i as u128 + 1) * m;
        let end_y = (j as u128 + 1) * n;
        let end = end_x.min(end_y);
        let d = x.sorted[i] - y.sorted[j];
        acc += (end - pos) as f64 * d * d;
        pos = end;
        if end == end_x {
            i += 1;
        }
        if end == end_y {
            j += 1;
        }
    }
    Wasserstein { value: libm::sqrt(acc / (n * m) as f64), coupling: Coupling::MergedQuantiles }
}

/// One mixture component; `std == 0` is a point mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

/// Finite mixture of normal laws and point masses on the line.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture1D {
    components: Vec<MixtureComponent>,
}

impl GaussianMixture1D {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidDistribution("mixture without components".into()));
        }
        let mut total = 0.0;
        for c in &components {
            if !(c.weight >= 0.0) || !c.mean.is_finite() || !(c.std >= 0.0 && c.std.is_finite()) {
                return Err(Error::InvalidDistribution(format!("bad mixture component {c:?}")));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("mixture weights sum to {total}")));
        }
        Ok(GaussianMixture1D { components })
    }

    pub fn normal(mean: f64, std: f64) -> Result<Self> {
        GaussianMixture1D::new(vec![MixtureComponent { weight: 1.0, mean, std }])
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.components.iter().map(|c| c.weight * (c.mean * c.mean + c.std * c.std)).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        (self.second_moment() - m * m).max(0.0)
    }

    /// `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| {
                if c.std > 0.0 {
                    c.weight * normal_cdf((x - c.mean) / c.std)
                } else if x >= c.mean {
                    c.weight
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// `(P(X < x), E[X; X < x], E[X^2; X < x])`.
    fn strict_partials(&self, x: f64) -> (f64, f64, f64) {
        let mut p = 0.0;
        let mut e1 = 0.0;
        let mut e2 = 0.0;
        for c in &self.components {
            if c.std > 0.0 {
                let z = (x - c.mean) / c.std;
                let cdf = normal_cdf(z);
                let pdf = normal_pdf(z);
                p += c.weight * cdf;
                e1 += c.weight * (c.mean * cdf - c.std * pdf);
                e2 += c.weight * ((c.mean * c.mean + c.std * c.std) * cdf - c.std * (x + c.mean) * pdf);
            } else if c.mean < x {
                p += c.weight;
                e1 += c.weight * c.mean;
                e2 += c.weight * c.mean * c.mean;
            }
        }
        (p, e1, e2)
    }

    /// Smallest `x` with `cdf(x) >= u` (to [`BISECTION_TOL`]), for `u` in `(0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in &self.components {
            lo = lo.min(c.mean - 40.0 * c.std - 1.0);
            hi = hi.max(c.mean + 40.0 * c.std + 1.0);
        }
        while hi - lo > BISECTION_TOL {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) >= u {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// `(∫_0^u q(v) dv, ∫_0^u q(v)^2 dv)` for the quantile function `q`.
    fn integrated_quantile(&self, u: f64) -> (f64, f64) {
        if u <= 0.0 {
            return (0.0, 0.0);
        }
        if u >= 1.0 {
            return (self.mean(), self.second_moment());
        }
        let x = self.quantile(u);
        let (p, e1, e2) = self.strict_partials(x);
        let rest = (u - p).max(0.0);
        (e1 + x * rest, e2 + x * x * rest)
    }

    /// Cell averages of the quantile function on `cells` uniform cells.
    pub fn quantile_table(&self, cells: usize) -> QuantileTable {
        let mut means = Vec::with_capacity(cells);
        let mut spreads = Vec::with_capacity(cells);
        let width = cells as f64;
        let mut prev = self.integrated_quantile(0.0);
        for k in 0..cells {
            let next = self.integrated_quantile((k + 1) as f64 / width);
            let mean = (next.0 - prev.0) * width;
            let second = (next.1 - prev.1) * width;
            means.push(mean);
            spreads.push((second - mean * mean).max(0.0));
            prev = next;
        }
        QuantileTable { means, spreads }
    }
}

/// Per-cell means and variances of a quantile function on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTable {
    means: Vec<f64>,
    spreads: Vec<f64>,
}

impl QuantileTable {
    /// Exact cell statistics of an empirical measure.
    pub fn from_empirical(x: &Empirical1D, cells: usize) -> Self {
        let mut means = vec![0.0; cells];
        let mut spreads = vec![0.0; cells];
        let n = x.len() as u128;
        let m = cells as u128;
        // Sample i covers [i·m, (i+1)·m) and cell k covers [k·n, (k+1)·n)
        // in units of 1/(n·m).
        let mut start = 0usize;
        for k in 0..cells {
            let lo = k as u128 * n;
            let hi = (k as u128 + 1) * n;
            while start < x.len() && (start as u128 + 1) * m <= lo {
                start += 1;
            }
            let mut mean = 0.0;
            let mut i = start;
            while i < x.len() && (i as u128) * m < hi {
                let overlap = ((i as u128 + 1) * m).min(hi) - ((i as u128) * m).max(lo);
                mean += overlap as f64 * x.sorted[i];
                i += 1;
            }
            mean /= n as f64;
            let mut var = 0.0;
            let mut i = start;
            while i < x.len() && (i as u128) * m < hi {
                let overlap = ((i as u128 + 1) * m).min(hi) - ((i as u128) * m).max(lo);
                let d = x.sorted[i] - mean;
                var += overlap as f64 * d * d;
                i += 1;
            }
            means[k] = mean;
            spreads[k] = var / n as f64;
        }
        QuantileTable { means, spreads }
    }

    pub fn cells(&self) -> usize {
        self.means.len()
    }

    pub fn cell_means(&self) -> &[f64] {
        &self.means
    }

    /// `W2` between this measure and its cell-averaged version.
    pub fn discretisation_error(&self) -> f64 {
        libm::sqrt(self.spreads.iter().sum::<f64>() / self.cells() as f64)
    }
}

/// Grid approximation of `W2` with a two-sided bracket:
/// `value <= W2 <= value + error_bound`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridW2 {
    pub value: f64,
    pub error_bound: f64,
}

pub fn w2_tables(a: &QuantileTable, b: &QuantileTable) -> Result<GridW2> {
    if a.cells() != b.cells() {
        return Err(Error::DimensionMismatch { what: "quantile tables", expected: a.cells(), found: b.cells() });
    }
    let sq: f64 = a.means.iter().zip(&b.means).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(GridW2 {
        value: libm::sqrt(sq / a.cells() as f64),
        error_bound: a.discretisation_error() + b.discretisation_error(),
    })
}

/// `W2` between an empirical measure and a Gaussian mixture on
/// [`QUANTILE_CELLS`] cells.
pub fn w2_vs_gaussian_mixture_1d(x: &Empirical1D, mix: &GaussianMixture1D) -> GridW2 {
    let reference = mix.quantile_table(QUANTILE_CELLS);
    w2_empirical_vs_table(x, &reference)
}

/// As [`w2_vs_gaussian_mixture_1d`] with a precomputed reference table.
pub fn w2_empirical_vs_table(x: &Empirical1D, reference: &QuantileTable) -> GridW2 {
    let table = QuantileTable::from_empirical(x, reference.cells());
    w2_tables(&table, reference).expect("tables share the cell count")
}

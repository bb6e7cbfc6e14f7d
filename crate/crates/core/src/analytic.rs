//! Closed-form analysis of the bang-bang game.
//!
//! The mediator draws `(i, j)` in `{1,2}^2` with probability `p_ij`, recommends
//! `u+ ≡ b` (`i = 1`) or `u- ≡ a` (`i = 2`), and announces the flow
//! `mu^j = a_j·mu+ + (1 - a_j)·mu-`, where `mu±_t` is the law of `t·b + W_t`
//! (resp. `t·a + W_t`). Consistency pins `a_j` to the share of `u+` within
//! column `j`. After dividing by `c·T^2`, the device is a mean field coarse
//! correlated equilibrium iff the affine function `m ↦ h·m + k` is
//! non-negative on `[a, b]`, where `m` is the time-averaged mean action of a
//! deviation.
//!
//! Fractions whose denominator is a zero-mass column are taken to be 0, which
//! is their limit as that column's mass vanishes.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Classification tolerance on the margin.
pub const MARGIN_TOL: f64 = 1e-12;
/// Mixing weights swept when none are given.
pub const DEFAULT_ALPHAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

const PROB_TOL: f64 = 1e-12;

/// Action interval `[a, b]` with `a < 0 < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    a: f64,
    b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a < 0.0 && a.is_finite()) {
            return Err(Error::param("a", format!("must be finite and negative, got {a}")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::param("b", format!("must be finite and positive, got {b}")));
        }
        Ok(Interval { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

/// Law of the mediator's draw on `{1,2}^2`; first index is the strategy
/// (`1 = u+`, `2 = u-`), second the flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceProbs {
    pub p11: f64,
    pub p12: f64,
    pub p21: f64,
    pub p22: f64,
}

impl DeviceProbs {
    pub fn new(p11: f64, p12: f64, p21: f64, p22: f64) -> Result<Self> {
        let p = DeviceProbs { p11, p12, p21, p22 };
        let all = p.as_array();
        if all.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidDistribution(format!("probabilities must be finite and >= 0: {all:?}")));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(p)
    }

    pub fn from_array(p: [f64; 4]) -> Result<Self> {
        DeviceProbs::new(p[0], p[1], p[2], p[3])
    }

    /// `(p11, p12, p21, p22)`.
    pub fn as_array(&self) -> [f64; 4] {
        [self.p11, self.p12, self.p21, self.p22]
    }

    /// `p_ij` with 1-based indices.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i, j) {
            (1, 1) => self.p11,
            (1, 2) => self.p12,
            (2, 1) => self.p21,
            (2, 2) => self.p22,
            _ => panic!("device index ({i}, {j}) out of range"),
        }
    }

    /// Exchanges the roles of `u+`/`u-` and of the two flows.
    pub fn swapped(&self) -> Self {
        DeviceProbs { p11: self.p22, p12: self.p21, p21: self.p12, p22: self.p11 }
    }

    /// Strategy marginal `(P(u+), P(u-))`.
    pub fn strategy_marginal(&self) -> (f64, f64) {
        (self.p11 + self.p12, self.p21 + self.p22)
    }

    /// Flow marginal `(P(mu^1), P(mu^2))`.
    pub fn flow_marginal(&self) -> (f64, f64) {
        (self.p11 + self.p21, self.p12 + self.p22)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineCoeffs {
    pub h: f64,
    pub k: f64,
}

impl AffineCoeffs {
    pub fn eval(&self, m: f64) -> f64 {
        self.h * m + self.k
    }
}

/// Weights `(a_1, a_2)` that make the flows consistent; `None` for a column
/// with zero mass (that flow is never announced).
pub fn consistency_weights(p: &DeviceProbs) -> (Option<f64>, Option<f64>) {
    let ratio = |num: f64, den: f64| if den > 0.0 { Some((num / den).clamp(0.0, 1.0)) } else { None };
    (ratio(p.p11, p.p11 + p.p21), ratio(p.p12, p.p12 + p.p22))
}

/// `num / den`, or 0 when the column mass `den` vanishes.
fn frac(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Slope and intercept of the optimality condition with consistency imposed,
/// evaluated term by term from the rational expressions in `p_ij`.
pub fn hk_coefficients(p: &DeviceProbs, interval: Interval) -> AffineCoeffs {
    let (a, b) = (interval.a, interval.b);
    let DeviceProbs { p11, p12, p21, p22 } = *p;
    let c1 = p11 + p21;
    let c2 = p12 + p22;
    let h = -b * (frac(p11 * p11 + p21 * p11, c1) + frac(p12 * p12 + p12 * p22, c2))
        - a * (frac(p21 * p21 + p21 * p11, c1) + frac(p22 * p22 + p12 * p22, c2));
    let k = b * b * (frac(p11 * p11, c1) + frac(p12 * p12, c2))
        + a * a * (frac(p21 * p21, c1) + frac(p22 * p22, c2))
        + 2.0 * a * b * (frac(p11 * p21, c1) + frac(p12 * p22, c2));
    AffineCoeffs { h, k }
}

/// Coefficients on the diagonal `p12 = p21 = 0`, `p22 = 1 - p11`.
pub fn diagonal_hk(p11: f64, interval: Interval) -> Result<AffineCoeffs> {
    if !(0.0..=1.0).contains(&p11) {
        return Err(Error::param("p11", format!("must lie in [0, 1], got {p11}")));
    }
    let (a, b) = (interval.a, interval.b);
    Ok(AffineCoeffs { h: -b * p11 - a * (1.0 - p11), k: b * b * p11 + a * a * (1.0 - p11) })
}

/// `min_{m in [a, b]} h·m + k`, attained at an endpoint. The device is a mean
/// field coarse correlated equilibrium iff this is non-negative.
pub fn cce_margin(p: &DeviceProbs, interval: Interval) -> f64 {
    let hk = hk_coefficients(p, interval);
    hk.eval(interval.a).min(hk.eval(interval.b))
}

pub fn is_cce(margin: f64) -> bool {
    margin >= -MARGIN_TOL
}

/// Endpoint of `[a, b]` minimising `h·m + k`; ties (`h = 0`) return `a`.
pub fn worst_case_deviation(coeffs: AffineCoeffs, interval: Interval) -> f64 {
    if coeffs.h < 0.0 {
        interval.b
    } else {
        interval.a
    }
}

/// Conditional mean action `m̄_j` of flow `j` (1-based), `None` if the column
/// has zero mass.
pub fn flow_mean_action(p: &DeviceProbs, interval: Interval, j: usize) -> Option<f64> {
    let (w1, w2) = consistency_weights(p);
    let w = if j == 1 { w1 } else { w2 }?;
    Some(w * interval.b + (1.0 - w) * interval.a)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldPayoffs {
    /// Payoff of following the recommendation.
    pub j_rec: f64,
    /// Payoff of a deviation with time-averaged mean action `m_beta`.
    pub j_dev: f64,
}

/// Mean field payoffs `E[c·X_T·mean(mu_T)]` of the recommendation and of a
/// deviation whose time-averaged mean action is `m_beta`.
pub fn mean_field_payoffs(
    p: &DeviceProbs,
    interval: Interval,
    c: f64,
    horizon: f64,
    m_beta: f64,
) -> Result<MeanFieldPayoffs> {
    if !(interval.a..=interval.b).contains(&m_beta) {
        return Err(Error::param("m_beta", format!("must lie in [{}, {}], got {m_beta}", interval.a, interval.b)));
    }
    let scale = c * horizon * horizon;
    let actions = [interval.b, interval.a];
    let mut j_rec = 0.0;
    let mut j_dev = 0.0;
    for j in 1..=2 {
        let Some(flow_mean) = flow_mean_action(p, interval, j) else { continue };
        for (i, u) in actions.iter().enumerate() {
            let pij = p.get(i + 1, j);
            j_rec += pij * u * flow_mean;
            j_dev += pij * m_beta * flow_mean;
        }
    }
    Ok(MeanFieldPayoffs { j_rec: scale * j_rec, j_dev: scale * j_dev })
}

/// Exact finite-`N` gap over constant deviations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteNGap {
    pub j_rec: f64,
    /// Maximising constant deviation.
    pub best_action: f64,
    pub j_dev_best: f64,
    /// `max(0, j_dev_best - j_rec)`.
    pub epsilon: f64,
}

/// Exact `ε_N` of the `N`-player bang-bang game when player 1 deviates to a
/// constant control and the others follow recommendations drawn i.i.d. given
/// the announced flow.
///
/// With `X^j_T = T·u_j + W^j_T` the payoff `c·E[X^1_T·mean_j X^j_T]` is a
/// quadratic in the deviation `m`:
/// `c·[(T²m² + T)/N + (N-1)/N·T²·m·ū]`, against
/// `c·[(T²·E[u²] + T)/N + (N-1)/N·T²·E[E[u | mu]²]]` for the recommendation.
pub fn finite_n_gap_oracle(p: &DeviceProbs, interval: Interval, c: f64, horizon: f64, n: usize) -> Result<FiniteNGap> {
    if n < 2 {
        return Err(Error::param("n", "need at least two players"));
    }
    let (a, b) = (interval.a, interval.b);
    let nf = n as f64;
    let t = horizon;
    let (q_plus, q_minus) = p.strategy_marginal();
    let u_bar = q_plus * b + q_minus * a;
    let u_sq = q_plus * b * b + q_minus * a * a;
    let (c1, c2) = p.flow_marginal();
    let mut cond_sq = 0.0;
    for (j, mass) in [(1, c1), (2, c2)] {
        if let Some(mj) = flow_mean_action(p, interval, j) {
            cond_sq += mass * mj * mj;
        }
    }
    let j_rec = c * ((t * t * u_sq + t) / nf + (nf - 1.0) / nf * t * t * cond_sq);
    let j_dev = |m: f64| c * ((t * t * m * m + t) / nf + (nf - 1.0) / nf * t * t * m * u_bar);

    let mut candidates: Vec<f64> = alloc::vec![a, b];
    // Stationary point of the quadratic, when inside the interval.
    let vertex = -(nf - 1.0) * u_bar / 2.0;
    if vertex > a && vertex < b {
        candidates.push(vertex);
    }
    let (best_action, j_dev_best) = candidates
        .into_iter()
        .map(|m| (m, j_dev(m)))
        .fold((a, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    Ok(FiniteNGap { j_rec, best_action, j_dev_best, epsilon: (j_dev_best - j_rec).max(0.0) })
}

/// How the `(p11, p22)` plane is laid onto the raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegionLayout {
    /// Two triangles split by the anti-diagonal `row + col = resolution - 1`.
    /// Above it `p11 = col/n`, `p22 = row/n`, `p12 = α·rest`,
    /// `p21 = (1-α)·rest`; below it both axes run backwards and the roles of
    /// `α` and `1-α` are exchanged. Every cell is a valid device.
    #[default]
    Folded,
    /// `p11 = col/n`, `p22 = row/n` over the whole square; cells with
    /// `p11 + p22 > 1` are absent.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionCell {
    pub row: usize,
    pub col: usize,
    pub device: DeviceProbs,
    pub coeffs: AffineCoeffs,
    pub margin: f64,
    pub is_cce: bool,
}

/// Row-major raster of CCE margins; `None` marks cells outside the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGrid {
    pub resolution: usize,
    pub alpha: f64,
    pub layout: RegionLayout,
    pub cells: Vec<Option<RegionCell>>,
}

impl RegionGrid {
    pub fn cell(&self, row: usize, col: usize) -> Option<&RegionCell> {
        self.cells[row * self.resolution + col].as_ref()
    }

    pub fn present(&self) -> impl Iterator<Item = &RegionCell> {
        self.cells.iter().flatten()
    }

    /// Cells on the anti-diagonal, where `p12 = p21 = 0`.
    pub fn diagonal(&self) -> impl Iterator<Item = &RegionCell> {
        let n = self.resolution - 1;
        (0..self.resolution).filter_map(move |r| self.cell(r, n - r))
    }
}

/// Device placed at `(row, col)` by `layout`, or `None` outside the simplex.
pub fn region_device(
    resolution: usize,
    alpha: f64,
    layout: RegionLayout,
    row: usize,
    col: usize,
) -> Result<Option<DeviceProbs>> {
    let n = resolution - 1;
    let nf = n as f64;
    let (p11, p22, rest, mix) = if row + col <= n {
        (col as f64 / nf, row as f64 / nf, (n - row - col) as f64 / nf, alpha)
    } else {
        match layout {
            RegionLayout::Direct => return Ok(None),
            RegionLayout::Folded => {
                ((n - col) as f64 / nf, (n - row) as f64 / nf, (row + col - n) as f64 / nf, 1.0 - alpha)
            }
        }
    };
    DeviceProbs::new(p11, mix * rest, (1.0 - mix) * rest, p22).map(Some)
}

/// Evaluates the margin over a `resolution × resolution` raster.
pub fn region_sweep(resolution: usize, alpha: f64, interval: Interval, layout: RegionLayout) -> Result<RegionGrid> {
    if resolution < 2 {
        return Err(Error::param("resolution", "need at least 2 points per axis"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::param("alpha", format!("must lie in [0, 1], got {alpha}")));
    }
    let cells = crate::exec::try_map_indexed(resolution * resolution, |idx| {
        let (row, col) = (idx / resolution, idx % resolution);
        Ok::<_, Error>(region_device(resolution, alpha, layout, row, col)?.map(|device| {
            let coeffs = hk_coefficients(&device, interval);
            let margin = coeffs.eval(interval.a).min(coeffs.eval(interval.b));
            RegionCell { row, col, device, coeffs, margin, is_cce: is_cce(margin) }
        }))
    })?;
    Ok(RegionGrid { resolution, alpha, layout, cells })
}

//! Game primitives: state dimension, horizon, action box, initial law, drift,
//! running and terminal costs, and the optimisation sense.
//!
//! Measure dependence enters every rule through a [`MeasureView`], which
//! carries the mean, the second moment and optionally the particles of the
//! current measure.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};

/// Compact box `[lo, hi]` of admissible actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl ActionBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() {
            return Err(Error::param("actions", "action box must have at least one dimension"));
        }
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch { what: "action box bounds", expected: lo.len(), found: hi.len() });
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !l.is_finite() || !h.is_finite() {
                return Err(Error::param("actions", format!("bound {i} is not finite")));
            }
            if l > h {
                return Err(Error::param("actions", format!("lo[{i}] = {l} exceeds hi[{i}] = {h}")));
            }
        }
        Ok(ActionBox { lo, hi })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        ActionBox::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, action: &[f64]) -> bool {
        action.len() == self.dim()
            && action.iter().zip(self.lo.iter().zip(&self.hi)).all(|(a, (l, h))| *l <= *a && *a <= *h)
    }
}

/// Particles backing a measure: `len` points of dimension `dim`, uniform weights.
#[derive(Debug, Clone, Copy)]
pub struct Particles<'a> {
    data: &'a [f64],
    dim: usize,
}

impl<'a> Particles<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::param("particles", "length must be a positive multiple of the dimension"));
        }
        Ok(Particles { data, dim })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &'a [f64] {
        self.data
    }

    pub fn point(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Summary of a measure on `R^d` as seen by drift and cost rules.
#[derive(Debug, Clone)]
pub struct MeasureView<'a> {
    mean: Vec<f64>,
    second_moment: f64,
    particles: Option<Particles<'a>>,
}

const SUMMARY_TOL: f64 = 1e-12;

impl<'a> MeasureView<'a> {
    /// View from summary statistics. `second_moment` is `E|X|^2`.
    pub fn from_moments(mean: Vec<f64>, second_moment: f64) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::param("mean", "empty mean vector"));
        }
        if !second_moment.is_finite() || second_moment < 0.0 || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::param("second_moment", "moments must be finite and non-negative"));
        }
        let sq: f64 = mean.iter().map(|m| m * m).sum();
        // |E X|^2 <= E|X|^2
        if sq > second_moment * (1.0 + SUMMARY_TOL) + SUMMARY_TOL {
            return Err(Error::param(
                "second_moment",
                format!("|mean|^2 = {sq} exceeds the second moment {second_moment}"),
            ));
        }
        Ok(MeasureView { mean, second_moment, particles: None })
    }

    /// Empirical measure of the given particles.
    pub fn from_particles(particles: Particles<'a>) -> Self {
        let (mean, second_moment) = particle_moments(particles);
        MeasureView { mean, second_moment, particles: Some(particles) }
    }

    /// View with both stored summaries and particles; the two must agree.
    pub fn with_particles(mean: Vec<f64>, second_moment: f64, particles: Particles<'a>) -> Result<Self> {
        let view = MeasureView::from_moments(mean, second_moment)?;
        if particles.dim() != view.dim() {
            return Err(Error::DimensionMismatch { what: "particles", expected: view.dim(), found: particles.dim() });
        }
        let (pm, ps) = particle_moments(particles);
        let close = |x: f64, y: f64| (x - y).abs() <= SUMMARY_TOL * (1.0 + x.abs().max(y.abs()));
        if !pm.iter().zip(&view.mean).all(|(x, y)| close(*x, *y)) || !close(ps, second_moment) {
            return Err(Error::param("particles", "particle summaries disagree with the stored summaries"));
        }
        Ok(MeasureView { particles: Some(particles), ..view })
    }

    /// Dirac mass at `x`.
    pub fn dirac(x: &[f64]) -> Self {
        let second_moment = x.iter().map(|v| v * v).sum();
        MeasureView { mean: x.to_vec(), second_moment, particles: None }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    /// Trace of the covariance, `E|X|^2 - |E X|^2`, clamped at zero.
    pub fn variance(&self) -> f64 {
        let sq: f64 = self.mean.iter().map(|m| m * m).sum();
        (self.second_moment - sq).max(0.0)
    }

    pub fn particles(&self) -> Option<Particles<'a>> {
        self.particles
    }

    pub(crate) fn from_parts_unchecked(mean: Vec<f64>, second_moment: f64, particles: Option<Particles<'a>>) -> Self {
        MeasureView { mean, second_moment, particles }
    }
}

fn particle_moments(particles: Particles<'_>) -> (Vec<f64>, f64) {
    let d = particles.dim();
    let n = particles.len() as f64;
    let mut mean = vec![0.0; d];
    let mut second = 0.0;
    for p in particles.as_slice().chunks_exact(d) {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x;
            second += x * x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    (mean, second / n)
}

/// Whether a payoff is a cost to minimise or a reward to maximise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

impl Sense {
    /// Sign turning `J(deviation) - J(recommendation)` into the deviator's gain.
    pub fn gain_sign(self) -> f64 {
        match self {
            Sense::Minimize => -1.0,
            Sense::Maximize => 1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Sense::Minimize => Sense::Maximize,
            Sense::Maximize => Sense::Minimize,
        }
    }
}

/// How much of the measure a rule reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MeasureUse {
    None,
    Moments,
    Particles,
}

pub type SamplerFn = dyn Fn(&mut dyn RngCore, &mut [f64]) + Send + Sync;

#[derive(Clone)]
pub enum InitialLaw {
    PointMass(Vec<f64>),
    /// Independent `N(mean, std^2)` coordinates.
    Gaussian { mean: Vec<f64>, std: f64 },
    Sampler(Arc<SamplerFn>),
}

impl InitialLaw {
    pub fn sample(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        match self {
            InitialLaw::PointMass(x) => out.copy_from_slice(x),
            InitialLaw::Gaussian { mean, std } => {
                for (o, m) in out.iter_mut().zip(mean) {
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    *o = m + std * z;
                }
            }
            InitialLaw::Sampler(f) => f(rng, out),
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        let found = match self {
            InitialLaw::PointMass(x) => x.len(),
            InitialLaw::Gaussian { mean, std } => {
                if !(*std >= 0.0 && std.is_finite()) {
                    return Err(Error::param("initial_law", "standard deviation must be finite and >= 0"));
                }
                mean.len()
            }
            InitialLaw::Sampler(_) => dim,
        };
        if found != dim {
            return Err(Error::DimensionMismatch { what: "initial law", expected: dim, found });
        }
        Ok(())
    }
}

impl fmt::Debug for InitialLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialLaw::PointMass(x) => f.debug_tuple("PointMass").field(x).finish(),
            InitialLaw::Gaussian { mean, std } => {
                f.debug_struct("Gaussian").field("mean", mean).field("std", std).finish()
            }
            InitialLaw::Sampler(_) => f.write_str("Sampler(..)"),
        }
    }
}

/// `drift(t, x, m, a, out)` writes `b(t, x, m, a)` into `out`.
pub type DriftFn = dyn Fn(f64, &[f64], &MeasureView<'_>, &[f64], &mut [f64]) + Send + Sync;
/// `f(t, x, m, a)`.
pub type RunningCostFn = dyn Fn(f64, &[f64], &MeasureView<'_>, &[f64]) -> f64 + Send + Sync;
/// `g(x, m)`.
pub type TerminalCostFn = dyn Fn(&[f64], &MeasureView<'_>) -> f64 + Send + Sync;

/// Immutable game specification. Rules must be pure.
///
/// State noise is additive standard Brownian motion:
/// `dX = b(t, X, m_t, a_t) dt + dW`.
#[derive(Clone)]
pub struct ModelSpec {
    dim: usize,
    horizon: f64,
    actions: ActionBox,
    initial_law: InitialLaw,
    drift: Arc<DriftFn>,
    drift_measure: MeasureUse,
    running_cost: Arc<RunningCostFn>,
    terminal_cost: Arc<TerminalCostFn>,
    cost_measure: MeasureUse,
    sense: Sense,
}

impl ModelSpec {
    /// Zero drift, zero costs, initial point mass at the origin, minimisation.
    pub fn new(dim: usize, horizon: f64, actions: ActionBox) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dim", "state dimension must be positive"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::param("horizon", format!("must be finite and positive, got {horizon}")));
        }
        Ok(ModelSpec {
            dim,
            horizon,
            actions,
            initial_law: InitialLaw::PointMass(vec![0.0; dim]),
            drift: Arc::new(|_, _, _, _, out: &mut [f64]| out.iter_mut().for_each(|o| *o = 0.0)),
            drift_measure: MeasureUse::None,
            running_cost: Arc::new(|_, _, _, _| 0.0),
            terminal_cost: Arc::new(|_, _| 0.0),
            cost_measure: MeasureUse::None,
            sense: Sense::Minimize,
        })
    }

    pub fn with_drift<F>(mut self, uses: MeasureUse, drift: F) -> Self
    where
        F: Fn(f64, &[f64], &MeasureView<'_>, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.drift = Arc::new(drift);
        self.drift_measure = uses;
        self
    }

    /// Sets both cost rules; `uses` covers whichever of the two reads more.
    pub fn with_costs<F, G>(mut self, uses: MeasureUse, running: F, terminal: G) -> Self
    where
        F: Fn(f64, &[f64], &MeasureView<'_>, &[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], &MeasureView<'_>) -> f64 + Send + Sync + 'static,
    {
        self.running_cost = Arc::new(running);
        self.terminal_cost = Arc::new(terminal);
        self.cost_measure = uses;
        self
    }

    pub fn with_initial_law(mut self, law: InitialLaw) -> Result<Self> {
        law.check_dim(self.dim)?;
        self.initial_law = law;
        Ok(self)
    }

    pub fn with_sense(mut self, sense: Sense) -> Self {
        self.sense = sense;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn actions(&self) -> &ActionBox {
        &self.actions
    }

    pub fn action_dim(&self) -> usize {
        self.actions.dim()
    }

    pub fn initial_law(&self) -> &InitialLaw {
        &self.initial_law
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn drift_measure(&self) -> MeasureUse {
        self.drift_measure
    }

    pub fn cost_measure(&self) -> MeasureUse {
        self.cost_measure
    }

    #[inline]
    pub fn drift(&self, t: f64, x: &[f64], m: &MeasureView<'_>, a: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, m, a, out)
    }

    #[inline]
    pub fn running_cost(&self, t: f64, x: &[f64], m: &MeasureView<'_>, a: &[f64]) -> f64 {
        (self.running_cost)(t, x, m, a)
    }

    #[inline]
    pub fn terminal_cost(&self, x: &[f64], m: &MeasureView<'_>) -> f64 {
        (self.terminal_cost)(x, m)
    }
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .field("actions", &self.actions)
            .field("initial_law", &self.initial_law)
            .field("drift_measure", &self.drift_measure)
            .field("cost_measure", &self.cost_measure)
            .field("sense", &self.sense)
            .finish_non_exhaustive()
    }
}

/// The bang-bang game: `d = 1`, drift `a`, no running cost, terminal payoff
/// `c·x·mean(m)` to be maximised, actions in `[a_lo, b_hi]`, start at 0.
pub fn build_bang_bang_model(a_lo: f64, b_hi: f64, c: f64, horizon: f64) -> Result<ModelSpec> {
    if !(a_lo < 0.0) {
        return Err(Error::param("a", format!("lower action bound must be negative, got {a_lo}")));
    }
    if !(b_hi > 0.0) {
        return Err(Error::param("b", format!("upper action bound must be positive, got {b_hi}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param("c", format!("payoff scale must be positive, got {c}")));
    }
    let model = ModelSpec::new(1, horizon, ActionBox::interval(a_lo, b_hi)?)?
        .with_drift(MeasureUse::None, |_, _, _, a, out| out.copy_from_slice(a))
        .with_costs(MeasureUse::Moments, |_, _, _, _| 0.0, move |x, m| c * x[0] * m.mean()[0])
        .with_sense(Sense::Maximize);
    Ok(model)
}

/// Largest Lipschitz quotients observed at one probe scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleQuotients {
    pub scale: f64,
    pub action: f64,
    pub state: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzReport {
    pub scales: Vec<ScaleQuotients>,
    pub max_action: f64,
    pub max_state: f64,
    pub max_mean: f64,
    /// Set when a quotient at the largest scale exceeds twice the one at the
    /// smallest scale, i.e. the drift is not globally Lipschitz.
    pub grows_with_scale: bool,
}

/// Probe scales used by [`validate_lipschitz`].
pub const LIPSCHITZ_SCALES: [f64; 3] = [1.0, 10.0, 100.0];

/// Samples random probe pairs and reports the largest quotients
/// `|b(x) - b(x')| / |x - x'|` separately in the state, the measure mean and
/// the action, at each of [`LIPSCHITZ_SCALES`].
pub fn validate_lipschitz(model: &ModelSpec, probe_count: usize, seed: u64) -> Result<LipschitzReport> {
    if probe_count < 2 {
        return Err(Error::param("probe_count", "need at least two probes"));
    }
    let d = model.dim();
    let k = model.action_dim();
    let lo = model.actions().lo();
    let hi = model.actions().hi();
    let mut scales = Vec::with_capacity(LIPSCHITZ_SCALES.len());
    let mut out0 = vec![0.0; d];
    let mut out1 = vec![0.0; d];
    for (si, &scale) in LIPSCHITZ_SCALES.iter().enumerate() {
        let mut rng = crate::rng::stream(seed, si as u64, crate::rng::PILOT_LANE_BASE);
        let mut q = ScaleQuotients { scale, action: 0.0, state: 0.0, mean: 0.0 };
        let sym = |rng: &mut rand_chacha::ChaCha8Rng| scale * (2.0 * rng.random::<f64>() - 1.0);
        for _ in 0..probe_count {
            let t = model.horizon() * rng.random::<f64>();
            let x: Vec<f64> = (0..d).map(|_| sym(&mut rng)).collect();
            let x2: Vec<f64> = (0..d).map(|_| sym(&mut rng)).collect();
            let mu: Vec<f64> = (0..d).map(|_| sym(&mut rng)).collect();
            let mu2: Vec<f64> = (0..d).map(|_| sym(&mut rng)).collect();
            let a: Vec<f64> = (0..k).map(|i| lo[i] + (hi[i] - lo[i]) * rng.random::<f64>()).collect();
            let a2: Vec<f64> = (0..k).map(|i| lo[i] + (hi[i] - lo[i]) * rng.random::<f64>()).collect();
            let m = probe_view(&mu);
            let m2 = probe_view(&mu2);

            model.drift(t, &x, &m, &a, &mut out0);
            model.drift(t, &x, &m, &a2, &mut out1);
            q.action = q.action.max(quotient(&out0, &out1, &a, &a2));
            model.drift(t, &x2, &m, &a, &mut out1);
            q.state = q.state.max(quotient(&out0, &out1, &x, &x2));
            model.drift(t, &x, &m2, &a, &mut out1);
            q.mean = q.mean.max(quotient(&out0, &out1, &mu, &mu2));
        }
        scales.push(q);
    }
    let max_of = |f: fn(&ScaleQuotients) -> f64| scales.iter().map(f).fold(0.0, f64::max);
    let first = &scales[0];
    let last = &scales[scales.len() - 1];
    let grows = |small: f64, large: f64| large > 2.0 * small + 1e-12;
    let grows_with_scale =
        grows(first.action, last.action) || grows(first.state, last.state) || grows(first.mean, last.mean);
    Ok(LipschitzReport {
        max_action: max_of(|q| q.action),
        max_state: max_of(|q| q.state),
        max_mean: max_of(|q| q.mean),
        grows_with_scale,
        scales,
    })
}

fn probe_view(mean: &[f64]) -> MeasureView<'static> {
    let second = mean.iter().map(|m| m * m).sum::<f64>() + 1.0;
    MeasureView::from_parts_unchecked(mean.to_vec(), second, None)
}

fn quotient(f0: &[f64], f1: &[f64], x0: &[f64], x1: &[f64]) -> f64 {
    let num = libm::sqrt(f0.iter().zip(f1).map(|(a, b)| (a - b) * (a - b)).sum());
    let den = libm::sqrt(x0.iter().zip(x1).map(|(a, b)| (a - b) * (a - b)).sum());
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

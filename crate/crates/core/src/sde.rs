//! Euler–Maruyama simulation of the `N`-player system and of the
//! representative player, measure flows, and a McKean–Vlasov particle solver.
//!
//! Each step evaluates actions, measure and drift at the left endpoint:
//! `X_{k+1} = X_k + b(t_k, X_k, m_k, a_k)·dt + ΔW_k`, with all players reading
//! the frozen time-`t_k` empirical measure.
//!
//! Brownian increments are produced by a sequential bridge. Each player's
//! stream first draws `W_T ~ N(0, T)` and then fills in the path given its
//! endpoint, so every grid receives correctly distributed increments while
//! `W_T` itself depends only on `(seed, replication, player)` and not on the
//! number of steps.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::exec::try_map_indexed;
use crate::metrics::{w2_empirical_1d, Empirical1D, GaussianMixture1D, MixtureComponent};
use crate::model::{MeasureUse, MeasureView, ModelSpec, Particles};
use crate::rng;
use crate::strategy::{Strategy, StrategyContext};

/// Default number of Euler steps on `[0, 2]`.
pub const DEFAULT_STEPS: usize = 200;

/// Uniform grid `t_k = T·k/steps` on `[0, T]`; `t_steps == T` exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::param("horizon", format!("must be finite and positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::param("steps", "need at least one step"));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            self.horizon * (k as f64 / self.steps as f64)
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|k| self.time(k))
    }
}

/// Component of a Gaussian flow: `N(mean0 + mean_rate·t, var0 + var_rate·t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFlowComponent {
    pub weight: f64,
    pub mean0: f64,
    pub mean_rate: f64,
    pub var0: f64,
    pub var_rate: f64,
}

/// Particles `count × dim` at each of `steps + 1` grid times, time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleFlow {
    steps: usize,
    count: usize,
    dim: usize,
    data: Vec<f64>,
    summaries: Vec<(Vec<f64>, f64)>,
}

impl ParticleFlow {
    pub fn new(steps: usize, count: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if count == 0 || dim == 0 {
            return Err(Error::param("particles", "need at least one particle of positive dimension"));
        }
        if data.len() != (steps + 1) * count * dim {
            return Err(Error::param("particles", "data length does not match (steps + 1) × count × dim"));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("particles", "non-finite particle"));
        }
        let summaries = (0..=steps)
            .map(|k| {
                let slice = &data[k * count * dim..(k + 1) * count * dim];
                let v = MeasureView::from_particles(Particles::new(slice, dim).expect("non-empty slice"));
                (v.mean().to_vec(), v.second_moment())
            })
            .collect();
        Ok(ParticleFlow { steps, count, dim, data, summaries })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Particles at grid time `k`.
    pub fn at(&self, k: usize) -> &[f64] {
        let w = self.count * self.dim;
        &self.data[k * w..(k + 1) * w]
    }
}

/// Time-indexed family of measures.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureFlowRep {
    /// One-dimensional Gaussian mixture with affine mean and variance.
    Gaussian(Vec<GaussianFlowComponent>),
    Particle(ParticleFlow),
}

impl MeasureFlowRep {
    pub fn gaussian(components: Vec<GaussianFlowComponent>) -> Result<Self> {
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if components.is_empty() || (total - 1.0).abs() > 1e-12 || components.iter().any(|c| !(c.weight >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("flow mixture weights sum to {total}")));
        }
        if components.iter().any(|c| !(c.var0 >= 0.0 && c.var_rate >= 0.0)) {
            return Err(Error::param("flow", "component variances must be non-negative"));
        }
        Ok(MeasureFlowRep::Gaussian(components))
    }

    /// Law of `x0 + rate·t + W_t`.
    pub fn drifted_brownian(x0: f64, rate: f64) -> Self {
        MeasureFlowRep::Gaussian(vec![GaussianFlowComponent {
            weight: 1.0,
            mean0: x0,
            mean_rate: rate,
            var0: 0.0,
            var_rate: 1.0,
        }])
    }

    pub fn dim(&self) -> usize {
        match self {
            MeasureFlowRep::Gaussian(_) => 1,
            MeasureFlowRep::Particle(p) => p.dim,
        }
    }

    /// Gaussian mixture at time `t` (Gaussian flows only).
    pub fn mixture_at(&self, t: f64) -> Option<GaussianMixture1D> {
        match self {
            MeasureFlowRep::Gaussian(components) => {
                let comps = components
                    .iter()
                    .filter(|c| c.weight > 0.0)
                    .map(|c| MixtureComponent {
                        weight: c.weight,
                        mean: c.mean0 + c.mean_rate * t,
                        std: libm::sqrt(c.var0 + c.var_rate * t),
                    })
                    .collect();
                Some(GaussianMixture1D::new(comps).expect("validated flow"))
            }
            MeasureFlowRep::Particle(_) => None,
        }
    }

    fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        match self {
            MeasureFlowRep::Particle(p) if p.steps != grid.steps() => {
                Err(Error::FlowGridMismatch { expected: grid.steps(), found: p.steps })
            }
            _ => Ok(()),
        }
    }

    /// Measure at grid time `k`.
    pub fn view(&self, grid: &TimeGrid, k: usize) -> Result<MeasureView<'_>> {
        self.check_grid(grid)?;
        Ok(match self {
            MeasureFlowRep::Gaussian(components) => {
                let t = grid.time(k);
                let mut mean = 0.0;
                let mut second = 0.0;
                for c in components {
                    let m = c.mean0 + c.mean_rate * t;
                    mean += c.weight * m;
                    second += c.weight * (c.var0 + c.var_rate * t + m * m);
                }
                MeasureView::from_parts_unchecked(vec![mean], second.max(mean * mean), None)
            }
            MeasureFlowRep::Particle(p) => {
                let (mean, second) = &p.summaries[k];
                let particles = Particles::new(p.at(k), p.dim).expect("validated flow");
                MeasureView::from_parts_unchecked(mean.clone(), *second, Some(particles))
            }
        })
    }

    /// Views at every grid time.
    pub fn views(&self, grid: &TimeGrid) -> Result<Vec<MeasureView<'_>>> {
        (0..=grid.steps()).map(|k| self.view(grid, k)).collect()
    }

    /// Sample of the time-`k` marginal as an empirical measure (1-D only):
    /// the particles, or `count` draws from the mixture.
    pub fn sample_at(&self, grid: &TimeGrid, k: usize, count: usize, rng: &mut ChaCha8Rng) -> Result<Empirical1D> {
        if self.dim() != 1 {
            return Err(Error::Unsupported("sampling multi-dimensional flows"));
        }
        self.check_grid(grid)?;
        match self {
            MeasureFlowRep::Gaussian(_) => {
                let mix = self.mixture_at(grid.time(k)).expect("gaussian");
                let comps = mix.components();
                let draws = (0..count)
                    .map(|_| {
                        let mut u: f64 = rng.random();
                        let mut pick = comps[comps.len() - 1];
                        for c in comps {
                            if u < c.weight {
                                pick = *c;
                                break;
                            }
                            u -= c.weight;
                        }
                        pick.mean + pick.std * rng.sample::<f64, _>(StandardNormal)
                    })
                    .collect();
                Empirical1D::new(draws)
            }
            MeasureFlowRep::Particle(p) => {
                let pts = p.at(k);
                let draws = (0..count).map(|_| pts[rng.random_range(0..pts.len())]).collect();
                Empirical1D::new(draws)
            }
        }
    }
}

/// Brownian increments for one player on one grid.
pub(crate) struct BrownianDriver {
    rng: ChaCha8Rng,
    current: Vec<f64>,
    terminal: Vec<f64>,
}

impl BrownianDriver {
    pub(crate) fn new(seed: u64, replication: u64, lane: u64, dim: usize, grid: &TimeGrid) -> Self {
        let mut rng = rng::stream(seed, replication, lane);
        let sd = libm::sqrt(grid.horizon());
        let terminal = (0..dim).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
        BrownianDriver { rng, current: vec![0.0; dim], terminal }
    }

    /// `W_{t_k}`.
    pub(crate) fn current(&self) -> &[f64] {
        &self.current
    }

    /// Writes `W_{t_{k+1}} - W_{t_k}` into `out` and advances.
    pub(crate) fn increment(&mut self, k: usize, grid: &TimeGrid, out: &mut [f64]) {
        if k + 1 == grid.steps() {
            for ((o, w), wt) in out.iter_mut().zip(&mut self.current).zip(&self.terminal) {
                *o = wt - *w;
                *w = *wt;
            }
            return;
        }
        let t0 = grid.time(k);
        let t1 = grid.time(k + 1);
        let remaining = grid.horizon() - t0;
        let dt = t1 - t0;
        let pull = dt / remaining;
        let sd = libm::sqrt(dt * (remaining - dt) / remaining);
        for ((o, w), wt) in out.iter_mut().zip(&mut self.current).zip(&self.terminal) {
            let z: f64 = self.rng.sample(StandardNormal);
            *o = pull * (wt - *w) + sd * z;
            *w += *o;
        }
    }
}

fn sample_initial(model: &ModelSpec, seed: u64, replication: u64, player: u64, out: &mut [f64]) {
    let mut r = rng::stream(seed, replication, rng::INITIAL_LANE_BASE + player);
    model.initial_law().sample(&mut r, out);
}

/// One player's part in an `N`-player replication.
#[derive(Clone, Copy)]
pub struct PlayerSpec<'a> {
    pub strategy: &'a dyn Strategy,
    /// Scenario the player was recommended, `None` for a deviator.
    pub scenario: Option<usize>,
    /// Flow announced with the recommendation.
    pub flow: Option<&'a MeasureFlowRep>,
}

impl<'a> PlayerSpec<'a> {
    pub fn uninformed(strategy: &'a dyn Strategy) -> Self {
        PlayerSpec { strategy, scenario: None, flow: None }
    }
}

/// States and actions of one `N`-player replication.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationBatch {
    pub players: usize,
    pub steps: usize,
    pub dim: usize,
    pub action_dim: usize,
    /// `(steps + 1) × players × dim`, time-major.
    pub paths: Vec<f64>,
    /// `steps × players × action_dim`, time-major.
    pub actions: Vec<f64>,
    pub noise_seed: u64,
    pub replication: u64,
    /// Realised flow class of the correlation device, if any.
    pub scenario_index: Option<usize>,
}

impl SimulationBatch {
    pub fn state(&self, player: usize, k: usize) -> &[f64] {
        let o = (k * self.players + player) * self.dim;
        &self.paths[o..o + self.dim]
    }

    pub fn action(&self, player: usize, k: usize) -> &[f64] {
        let o = (k * self.players + player) * self.action_dim;
        &self.actions[o..o + self.action_dim]
    }

    /// All states at grid time `k`.
    pub fn slice(&self, k: usize) -> &[f64] {
        let w = self.players * self.dim;
        &self.paths[k * w..(k + 1) * w]
    }

    /// Empirical measure `μ^N_{t_k}`.
    pub fn empirical_view(&self, k: usize) -> MeasureView<'_> {
        MeasureView::from_particles(Particles::new(self.slice(k), self.dim).expect("non-empty batch"))
    }
}

/// Simulates one replication of the `N`-player system, `N = players.len()`.
///
/// Player `j` uses noise lane `j` and initial-state lane
/// `INITIAL_LANE_BASE + j` of replication `replication`.
pub fn simulate_n_player(
    model: &ModelSpec,
    grid: &TimeGrid,
    players: &[PlayerSpec<'_>],
    seed: u64,
    replication: u64,
) -> Result<SimulationBatch> {
    let n = players.len();
    if n == 0 {
        return Err(Error::param("players", "need at least one player"));
    }
    let d = model.dim();
    let ad = model.action_dim();
    let steps = grid.steps();
    let dt = grid.dt();
    let mut paths = vec![0.0; (steps + 1) * n * d];
    let mut actions = vec![0.0; steps * n * ad];
    let mut initial = vec![0.0; n * d];
    for j in 0..n {
        sample_initial(model, seed, replication, j as u64, &mut initial[j * d..(j + 1) * d]);
    }
    paths[..n * d].copy_from_slice(&initial);
    let mut drivers: Vec<BrownianDriver> =
        (0..n).map(|j| BrownianDriver::new(seed, replication, j as u64, d, grid)).collect();
    let mut drift = vec![0.0; d];
    let mut dw = vec![0.0; d];
    for k in 0..steps {
        let t = grid.time(k);
        let (done, rest) = paths.split_at_mut((k + 1) * n * d);
        let current = &done[k * n * d..];
        let next = &mut rest[..n * d];
        let view = MeasureView::from_particles(Particles::new(current, d).expect("non-empty"));
        for (j, player) in players.iter().enumerate() {
            let a = &mut actions[(k * n + j) * ad..(k * n + j + 1) * ad];
            let ctx = StrategyContext {
                step: k,
                time: t,
                initial_state: &initial[j * d..(j + 1) * d],
                brownian: drivers[j].current(),
                scenario: player.scenario,
                flow: player.flow,
            };
            player.strategy.act(&ctx, a);
            if !model.actions().contains(a) {
                return Err(Error::ActionOutsideBox { player: j, step: k });
            }
            let x = &current[j * d..(j + 1) * d];
            model.drift(t, x, &view, a, &mut drift);
            drivers[j].increment(k, grid, &mut dw);
            let out = &mut next[j * d..(j + 1) * d];
            for i in 0..d {
                out[i] = x[i] + drift[i] * dt + dw[i];
            }
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState { player: j, step: k + 1 });
            }
        }
    }
    Ok(SimulationBatch {
        players: n,
        steps,
        dim: d,
        action_dim: ad,
        paths,
        actions,
        noise_seed: seed,
        replication,
        scenario_index: None,
    })
}

/// Where a single path reads its measure argument from.
#[derive(Clone, Copy)]
pub(crate) enum ViewSource<'v, 'm> {
    /// Exogenous flow, one view per grid time.
    Flow(&'v [MeasureView<'m>]),
    /// The rule ignores the measure; a Dirac at the origin is passed.
    Ignored,
}

/// Path and actions of one player against a fixed measure source.
pub(crate) struct PathRun {
    /// `(steps + 1) × dim`.
    pub path: Vec<f64>,
    /// `steps × action_dim`.
    pub actions: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn run_path(
    model: &ModelSpec,
    grid: &TimeGrid,
    strategy: &dyn Strategy,
    scenario: Option<usize>,
    flow: Option<&MeasureFlowRep>,
    views: ViewSource<'_, '_>,
    seed: u64,
    replication: u64,
    lane: u64,
) -> Result<PathRun> {
    let d = model.dim();
    let ad = model.action_dim();
    let steps = grid.steps();
    let dt = grid.dt();
    let mut path = vec![0.0; (steps + 1) * d];
    let mut actions = vec![0.0; steps * ad];
    let mut initial = vec![0.0; d];
    sample_initial(model, seed, replication, lane, &mut initial);
    path[..d].copy_from_slice(&initial);
    let mut driver = BrownianDriver::new(seed, replication, lane, d, grid);
    let placeholder = MeasureView::dirac(&vec![0.0; d]);
    let mut drift = vec![0.0; d];
    let mut dw = vec![0.0; d];
    for k in 0..steps {
        let t = grid.time(k);
        let (done, rest) = path.split_at_mut((k + 1) * d);
        let x = &done[k * d..];
        let a = &mut actions[k * ad..(k + 1) * ad];
        let ctx = StrategyContext {
            step: k,
            time: t,
            initial_state: &initial,
            brownian: driver.current(),
            scenario,
            flow,
        };
        strategy.act(&ctx, a);
        if !model.actions().contains(a) {
            return Err(Error::ActionOutsideBox { player: lane as usize, step: k });
        }
        let view = match views {
            ViewSource::Flow(v) => &v[k],
            ViewSource::Ignored => &placeholder,
        };
        model.drift(t, x, view, a, &mut drift);
        driver.increment(k, grid, &mut dw);
        let out = &mut rest[..d];
        for i in 0..d {
            out[i] = x[i] + drift[i] * dt + dw[i];
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { player: lane as usize, step: k + 1 });
        }
    }
    Ok(PathRun { path, actions })
}

/// Independent replications of the representative player.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentativePaths {
    pub reps: usize,
    pub steps: usize,
    pub dim: usize,
    /// `(steps + 1) × reps × dim`, time-major.
    pub paths: Vec<f64>,
}

impl RepresentativePaths {
    pub fn state(&self, rep: usize, k: usize) -> &[f64] {
        let o = (k * self.reps + rep) * self.dim;
        &self.paths[o..o + self.dim]
    }

    /// All replications at grid time `k`.
    pub fn slice(&self, k: usize) -> &[f64] {
        let w = self.reps * self.dim;
        &self.paths[k * w..(k + 1) * w]
    }

    fn from_runs(runs: Vec<PathRun>, steps: usize, dim: usize) -> Self {
        let reps = runs.len();
        let mut paths = vec![0.0; (steps + 1) * reps * dim];
        for (r, run) in runs.iter().enumerate() {
            for k in 0..=steps {
                let o = (k * reps + r) * dim;
                paths[o..o + dim].copy_from_slice(&run.path[k * dim..(k + 1) * dim]);
            }
        }
        RepresentativePaths { reps, steps, dim, paths }
    }
}

/// Replications of the single SDE driven by the exogenous `flow`.
/// Replication `r` uses stream `(seed, r, lane 0)`.
pub fn simulate_representative(
    model: &ModelSpec,
    grid: &TimeGrid,
    flow: &MeasureFlowRep,
    strategy: &dyn Strategy,
    reps: usize,
    seed: u64,
) -> Result<RepresentativePaths> {
    if reps == 0 {
        return Err(Error::param("reps", "need at least one replication"));
    }
    if flow.dim() != model.dim() {
        return Err(Error::DimensionMismatch { what: "flow", expected: model.dim(), found: flow.dim() });
    }
    let views = flow.views(grid)?;
    let runs = try_map_indexed(reps, |r| {
        run_path(model, grid, strategy, None, Some(flow), ViewSource::Flow(&views), seed, r as u64, 0)
    })?;
    Ok(RepresentativePaths::from_runs(runs, grid.steps(), model.dim()))
}

/// `sup_k W2(a_k, b_k)` between two one-dimensional particle flows.
pub fn sup_w2_particle_flows(a: &ParticleFlow, b: &ParticleFlow) -> Result<f64> {
    if a.dim != 1 || b.dim != 1 {
        return Err(Error::Unsupported("Wasserstein distance in more than one dimension"));
    }
    if a.steps != b.steps {
        return Err(Error::FlowGridMismatch { expected: a.steps, found: b.steps });
    }
    let mut sup = 0.0f64;
    for k in 0..=a.steps {
        let x = Empirical1D::from_slice(a.at(k))?;
        let y = Empirical1D::from_slice(b.at(k))?;
        sup = sup.max(w2_empirical_1d(&x, &y).value);
    }
    Ok(sup)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McKeanVlasovSolution {
    pub flow: MeasureFlowRep,
    /// `sup_t W2(flow_k, flow_{k+1})` after each Picard iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl McKeanVlasovSolution {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Picard iteration on particle flows for the McKean–Vlasov equation
/// `dX = b(t, X, Law(X_t), a_t) dt + dW`.
///
/// The first flow freezes the initial particles in time. Each iteration
/// simulates the particles against the current flow (the strategy sees it in
/// [`StrategyContext::flow`]) and replaces it with their empirical flow. All
/// iterations reuse the same noise. Stops once `sup_t W2` between successive
/// flows falls below `tol`; running out of iterations is reported through
/// [`McKeanVlasovSolution::converged`].
#[allow(clippy::too_many_arguments)]
pub fn mckean_vlasov_fixed_point(
    model: &ModelSpec,
    grid: &TimeGrid,
    strategy: &dyn Strategy,
    particles: usize,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<McKeanVlasovSolution> {
    if particles < 100 {
        return Err(Error::param("particles", "need at least 100 particles"));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", "tolerance must be positive"));
    }
    if max_iters == 0 {
        return Err(Error::param("max_iters", "need at least one iteration"));
    }
    if model.dim() != 1 {
        return Err(Error::Unsupported("McKean-Vlasov solver in more than one dimension"));
    }
    let steps = grid.steps();
    let mut x0 = vec![0.0; particles];
    for (p, x) in x0.iter_mut().enumerate() {
        sample_initial(model, seed, p as u64, 0, core::slice::from_mut(x));
    }
    let frozen: Vec<f64> = (0..=steps).flat_map(|_| x0.iter().copied()).collect();
    let mut flow = ParticleFlow::new(steps, particles, 1, frozen)?;
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters {
        let rep = MeasureFlowRep::Particle(flow);
        let views = rep.views(grid)?;
        let source = match model.drift_measure() {
            MeasureUse::None => ViewSource::Ignored,
            _ => ViewSource::Flow(&views),
        };
        let runs = try_map_indexed(particles, |p| {
            run_path(model, grid, strategy, None, Some(&rep), source, seed, p as u64, 0)
        })?;
        let next = RepresentativePaths::from_runs(runs, steps, 1);
        let next = ParticleFlow::new(steps, particles, 1, next.paths)?;
        drop(views);
        let MeasureFlowRep::Particle(prev) = rep else { unreachable!() };
        let dist = sup_w2_particle_flows(&prev, &next)?;
        trace.push(dist);
        flow = next;
        if dist < tol {
            converged = true;
            break;
        }
    }
    Ok(McKeanVlasovSolution { flow: MeasureFlowRep::Particle(flow), trace, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_bang_bang_model, ActionBox};
    use crate::strategy::ConstantAction;

    fn zero_drift() -> ModelSpec {
        ModelSpec::new(1, 2.0, ActionBox::interval(-1.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn grid_endpoints() {
        let g = TimeGrid::new(2.0, 3).unwrap();
        assert_eq!(g.time(3), 2.0);
        assert_eq!(g.time(0), 0.0);
        assert!(TimeGrid::new(0.0, 3).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn bridge_terminal_is_grid_independent() {
        for steps in [1, 7, 200, 400] {
            let grid = TimeGrid::new(2.0, steps).unwrap();
            let mut d = BrownianDriver::new(5, 9, 3, 2, &grid);
            let terminal = d.terminal.clone();
            let mut sum = [0.0; 2];
            let mut inc = [0.0; 2];
            for k in 0..steps {
                d.increment(k, &grid, &mut inc);
                sum[0] += inc[0];
                sum[1] += inc[1];
            }
            assert_eq!(d.current(), &terminal[..]);
            assert!((sum[0] - terminal[0]).abs() < 1e-12);
            let g0 = BrownianDriver::new(5, 9, 3, 2, &TimeGrid::new(2.0, 1).unwrap());
            assert_eq!(g0.terminal, terminal);
        }
    }

    #[test]
    fn bridge_increments_have_variance_dt() {
        let grid = TimeGrid::new(2.0, 10).unwrap();
        let reps = 40_000;
        let mut sums = [0.0; 10];
        let mut inc = [0.0];
        for r in 0..reps {
            let mut d = BrownianDriver::new(1, r, 0, 1, &grid);
            for (k, s) in sums.iter_mut().enumerate() {
                d.increment(k, &grid, &mut inc);
                *s += inc[0] * inc[0];
            }
        }
        for s in sums {
            let v = s / reps as f64;
            // dt = 0.2, SE of the variance estimate ≈ 0.2·sqrt(2/40000) ≈ 0.0014.
            assert!((v - 0.2).abs() < 0.006, "{v}");
        }
    }

    #[test]
    fn n_player_constant_b() {
        let model = build_bang_bang_model(-1.0, 1.0, 1.0, 2.0).unwrap();
        let grid = TimeGrid::new(2.0, DEFAULT_STEPS).unwrap();
        let b = ConstantAction::scalar(1.0);
        let players = vec![PlayerSpec::uninformed(&b); 10_000];
        let batch = simulate_n_player(&model, &grid, &players, 3, 0).unwrap();
        let mean = batch.empirical_view(grid.steps()).mean()[0];
        assert!((mean - 2.0).abs() < 3.0 * (2.0f64 / 1e4).sqrt(), "{mean}");
        assert_eq!(batch.state(17, 0), &[0.0]);
    }

    #[test]
    fn n_player_zero_drift() {
        let model = zero_drift();
        let grid = TimeGrid::new(2.0, 50).unwrap();
        let a = ConstantAction::scalar(0.3);
        let players = vec![PlayerSpec::uninformed(&a); 5_000];
        let batch = simulate_n_player(&model, &grid, &players, 4, 1).unwrap();
        let mean = batch.empirical_view(50).mean()[0];
        assert!(mean.abs() < 3.0 * (2.0f64 / 5e3).sqrt(), "{mean}");
    }

    #[test]
    fn single_player_matches_representative_with_dirac_flow() {
        let model = build_bang_bang_model(-1.0, 1.0, 1.0, 2.0).unwrap();
        let grid = TimeGrid::new(2.0, 20).unwrap();
        let a = ConstantAction::scalar(-0.5);
        let batch = simulate_n_player(&model, &grid, &[PlayerSpec::uninformed(&a)], 8, 2).unwrap();
        for k in 0..=20 {
            let v = batch.empirical_view(k);
            assert_eq!(v.mean(), batch.state(0, k));
            assert_eq!(v.variance(), 0.0);
        }
        let flow = MeasureFlowRep::drifted_brownian(0.0, 0.0);
        let run = run_path(&model, &grid, &a, None, None, ViewSource::Ignored, 8, 2, 0).unwrap();
        let single: Vec<f64> = (0..=20).map(|k| batch.state(0, k)[0]).collect();
        assert_eq!(run.path, single);
        let rep = simulate_representative(&model, &grid, &flow, &a, 3, 8).unwrap();
        assert_eq!(rep.state(2, 20)[0], single[20]);
    }

    #[test]
    fn rejects_actions_outside_box() {
        let model = build_bang_bang_model(-1.0, 1.0, 1.0, 2.0).unwrap();
        let grid = TimeGrid::new(2.0, 10).unwrap();
        let bad = |ctx: &StrategyContext<'_>, a: &mut [f64]| a[0] = if ctx.step < 4 { 0.0 } else { 1.5 };
        let err = simulate_n_player(&model, &grid, &[PlayerSpec::uninformed(&bad)], 0, 0).unwrap_err();
        assert_eq!(err, Error::ActionOutsideBox { player: 0, step: 4 });
    }

    #[test]
    fn aborts_on_blow_up() {
        let model = zero_drift().with_drift(MeasureUse::None, |_, x, _, _, out| out[0] = 1e300 * (1.0 + x[0] * x[0]));
        let grid = TimeGrid::new(2.0, 10).unwrap();
        let a = ConstantAction::scalar(0.0);
        let err = simulate_n_player(&model, &grid, &[PlayerSpec::uninformed(&a)], 0, 0).unwrap_err();
        assert!(matches!(err, Error::NonFiniteState { player: 0, .. }));
    }

    #[test]
    fn deterministic_given_seed() {
        let model = build_bang_bang_model(-1.0, 1.0, 1.0, 2.0).unwrap();
        let grid = TimeGrid::new(2.0, 30).unwrap();
        let a = ConstantAction::scalar(1.0);
        let players = vec![PlayerSpec::uninformed(&a); 7];
        let x = simulate_n_player(&model, &grid, &players, 42, 5).unwrap();
        let y = simulate_n_player(&model, &grid, &players, 42, 5).unwrap();
        assert_eq!(x, y);
        let z = simulate_n_player(&model, &grid, &players, 43, 5).unwrap();
        assert_ne!(x.paths, z.paths);
    }

    #[test]
    fn halving_dt_keeps_terminal_values() {
        let model = build_bang_bang_model(-1.0, 1.0, 1.0, 2.0).unwrap();
        let a = ConstantAction::scalar(1.0);
        let players = vec![PlayerSpec::uninformed(&a); 50];
        let coarse = TimeGrid::new(2.0, 200).unwrap();
        let fine = TimeGrid::new(2.0, 400).unwrap();
        for rep in 0..5 {
            let x = simulate_n_player(&model, &coarse, &players, 11, rep).unwrap();
            let y = simulate_n_player(&model, &fine, &players, 11, rep).unwrap();
            let mx = x.empirical_view(200).mean()[0];
            let my = y.empirical_view(400).mean()[0];
            assert!((mx - my).abs() < 1e-10, "{mx} vs {my}");
        }
    }

    #[test]
    fn representative_ignores_flow_when_drift_is_measure_free() {
        let model = build_bang_bang_model(-1.0, 1.0, 1.0, 2.0).unwrap();
        let grid = TimeGrid::new(2.0, 40).unwrap();
        let a = ConstantAction::scalar(1.0);
        let plus = MeasureFlowRep::drifted_brownian(0.0, 1.0);
        let minus = MeasureFlowRep::drifted_brownian(0.0, -1.0);
        let x = simulate_representative(&model, &grid, &plus, &a, 100, 9).unwrap();
        let y = simulate_representative(&model, &grid, &minus, &a, 100, 9).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn particle_flow_grid_must_match() {
        let model = zero_drift();
        let grid = TimeGrid::new(2.0, 4).unwrap();
        let flow = MeasureFlowRep::Particle(ParticleFlow::new(3, 2, 1, vec![0.0; 8]).unwrap());
        let a = ConstantAction::scalar(0.0);
        assert_eq!(
            simulate_representative(&model, &grid, &flow, &a, 2, 0).unwrap_err(),
            Error::FlowGridMismatch { expected: 4, found: 3 }
        );
    }

    #[test]
    fn gaussian_flow_views() {
        let grid = TimeGrid::new(2.0, 4).unwrap();
        let flow = MeasureFlowRep::gaussian(vec![
            GaussianFlowComponent { weight: 0.25, mean0: 0.0, mean_rate: 1.0, var0: 0.0, var_rate: 1.0 },
            GaussianFlowComponent { weight: 0.75, mean0: 0.0, mean_rate: -1.0, var0: 0.0, var_rate: 1.0 },
        ])
        .unwrap();
        let v = flow.view(&grid, 4).unwrap();
        assert_eq!(v.mean(), &[-1.0]);
        // E X^2 = 2 + 4
        assert!((v.second_moment() - 6.0).abs() < 1e-15);
        assert!(MeasureFlowRep::gaussian(vec![]).is_err());
    }

    #[test]
    fn mckean_vlasov_with_mean_reverting_drift() {
        // dX = (mean(X_t) - X_t) dt + dW from N(1, 0): the mean is conserved at 1
        // and the variance solves v' = 1 - 2v, v(t) = (1 - e^{-2t})/2.
        let model = ModelSpec::new(1, 1.0, ActionBox::interval(0.0, 0.0).unwrap())
            .unwrap()
            .with_drift(MeasureUse::Moments, |_, x, m, _, out| out[0] = m.mean()[0] - x[0])
            .with_initial_law(crate::model::InitialLaw::PointMass(vec![1.0]))
            .unwrap();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let zero = ConstantAction::scalar(0.0);
        let sol = mckean_vlasov_fixed_point(&model, &grid, &zero, 4000, 30, 1e-8, 7).unwrap();
        assert!(sol.converged, "{:?}", sol.trace);
        let v = sol.flow.view(&grid, 100).unwrap();
        assert!((v.mean()[0] - 1.0).abs() < 0.05);
        let expected = (1.0 - libm::exp(-2.0)) / 2.0;
        assert!((v.variance() - expected).abs() < 0.1 * expected, "{}", v.variance());
        // Picard contracts: the trace decreases.
        assert!(sol.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn mckean_vlasov_preconditions() {
        let model = zero_drift();
        let grid = TimeGrid::new(2.0, 4).unwrap();
        let a = ConstantAction::scalar(0.0);
        assert!(mckean_vlasov_fixed_point(&model, &grid, &a, 99, 5, 1e-6, 0).is_err());
        assert!(mckean_vlasov_fixed_point(&model, &grid, &a, 100, 5, 0.0, 0).is_err());
        // Non-convergence is reported, not fatal.
        let sol = mckean_vlasov_fixed_point(&model, &grid, &a, 100, 1, 1e-6, 0).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations(), 1);
    }
}

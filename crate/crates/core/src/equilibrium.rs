//! Payoff estimation, `ε`-gaps of correlated recommendations and propagation
//! of chaos diagnostics.
//!
//! Gaps are sense-adjusted: for a maximisation problem the raw difference of
//! a deviation is `J_dev - J_rec`, for a minimisation problem `J_rec - J_dev`.
//! Player 0 is the deviator. Every candidate deviation of a replication
//! reuses that replication's noise, so differences are paired.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::correlation::{CorrelationDevice, Reference};
use crate::error::{Error, Result};
use crate::exec::try_map_indexed;
use crate::metrics::Empirical1D;
use crate::model::{ActionBox, MeasureUse, MeasureView, ModelSpec};
use crate::sde::{run_path, simulate_n_player, MeasureFlowRep, PlayerSpec, SimulationBatch, TimeGrid, ViewSource};
use crate::strategy::{ConstantAction, Strategy};

/// Two-sided normal quantile used for confidence intervals.
pub const Z_95: f64 = 1.96;

/// Monte Carlo mean with its standard error (`None` below two samples).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimate {
    pub mean: f64,
    pub std_error: Option<f64>,
    pub reps: usize,
}

impl CostEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = if n == 0 { f64::NAN } else { samples.iter().sum::<f64>() / n as f64 };
        let std_error = (n >= 2).then(|| {
            let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
            libm::sqrt(ss / (n - 1) as f64 / n as f64)
        });
        CostEstimate { mean, std_error, reps: n }
    }

    /// Standard error, 0 when unavailable.
    pub fn se(&self) -> f64 {
        self.std_error.unwrap_or(0.0)
    }
}

/// `Σ_k f(t_k, x_k, m_k, a_k)·dt + g(x_T, m_T)` along one path.
///
/// `path` is `(steps + 1) × dim`, `actions` is `steps × action_dim`, and
/// `measure(k)` supplies the measure at grid time `k`.
pub fn path_cost<'m>(
    model: &ModelSpec,
    grid: &TimeGrid,
    path: &[f64],
    actions: &[f64],
    mut measure: impl FnMut(usize) -> MeasureView<'m>,
) -> f64 {
    let d = model.dim();
    let ad = model.action_dim();
    let dt = grid.dt();
    let steps = grid.steps();
    let mut running = 0.0;
    for k in 0..steps {
        let m = measure(k);
        running += model.running_cost(grid.time(k), &path[k * d..(k + 1) * d], &m, &actions[k * ad..(k + 1) * ad]);
    }
    running * dt + model.terminal_cost(&path[steps * d..], &measure(steps))
}

fn batch_player_cost(model: &ModelSpec, grid: &TimeGrid, batch: &SimulationBatch, player: usize) -> f64 {
    let steps = grid.steps();
    let path: Vec<f64> = (0..=steps).flat_map(|k| batch.state(player, k).iter().copied()).collect();
    let actions: Vec<f64> = (0..steps).flat_map(|k| batch.action(player, k).iter().copied()).collect();
    path_cost(model, grid, &path, &actions, |k| batch.empirical_view(k))
}

/// Cost of `player` averaged over simulated `N`-player replications.
pub fn estimate_cost(model: &ModelSpec, grid: &TimeGrid, batches: &[SimulationBatch], player: usize) -> Result<CostEstimate> {
    if batches.iter().any(|b| player >= b.players || b.steps != grid.steps()) {
        return Err(Error::param("player", format!("player {player} or grid does not match the batches")));
    }
    let samples: Vec<f64> = batches.iter().map(|b| batch_player_cost(model, grid, b, player)).collect();
    Ok(CostEstimate::from_samples(&samples))
}

/// Cost of the representative player facing the exogenous `flow`.
pub fn estimate_representative_cost(
    model: &ModelSpec,
    grid: &TimeGrid,
    flow: &MeasureFlowRep,
    strategy: &dyn Strategy,
    reps: usize,
    seed: u64,
) -> Result<CostEstimate> {
    if reps == 0 {
        return Err(Error::param("reps", "need at least one replication"));
    }
    let views = flow.views(grid)?;
    let samples = try_map_indexed(reps, |r| {
        let run = run_path(model, grid, strategy, None, Some(flow), ViewSource::Flow(&views), seed, r as u64, 0)?;
        Ok::<_, Error>(path_cost(model, grid, &run.path, &run.actions, |k| views[k].clone()))
    })?;
    Ok(CostEstimate::from_samples(&samples))
}

/// Finite family of constant deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationFamily {
    actions: Vec<ConstantAction>,
}

impl DeviationFamily {
    /// Tensor grid with `g` equally spaced points per action coordinate,
    /// endpoints included.
    pub fn uniform_grid(actions: &ActionBox, g: usize) -> Result<Self> {
        if g < 3 {
            return Err(Error::param("grid_size", format!("need at least 3 points, got {g}")));
        }
        let ad = actions.dim();
        let total = g.checked_pow(ad as u32).filter(|&t| t <= 1 << 20).ok_or(Error::param(
            "grid_size",
            "deviation grid too large",
        ))?;
        let point = |i: usize, lo: f64, hi: f64| {
            if i + 1 == g {
                hi
            } else {
                lo + (hi - lo) * (i as f64 / (g - 1) as f64)
            }
        };
        let actions = (0..total)
            .map(|mut idx| {
                let mut a = vec![0.0; ad];
                for (c, x) in a.iter_mut().enumerate() {
                    *x = point(idx % g, actions.lo()[c], actions.hi()[c]);
                    idx /= g;
                }
                ConstantAction(a)
            })
            .collect();
        Ok(DeviationFamily { actions })
    }

    pub fn from_actions(actions: Vec<Vec<f64>>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::param("deviations", "empty deviation family"));
        }
        Ok(DeviationFamily { actions: actions.into_iter().map(ConstantAction).collect() })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i].0
    }

    fn check(&self, model: &ModelSpec) -> Result<()> {
        match self.actions.iter().position(|a| !model.actions().contains(&a.0)) {
            Some(i) => Err(Error::param("deviations", format!("candidate {i} lies outside the action box"))),
            None => Ok(()),
        }
    }
}

/// One candidate deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGap {
    pub action: Vec<f64>,
    pub j_dev: CostEstimate,
    /// Sense-adjusted paired difference against the recommendation.
    pub raw: CostEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub j_rec: CostEstimate,
    pub candidates: Vec<CandidateGap>,
    /// Index of the most profitable candidate.
    pub best: usize,
    pub best_action: Vec<f64>,
    pub j_dev_best: CostEstimate,
    /// Sense-adjusted best difference, unclipped.
    pub raw_gap: f64,
    /// Paired standard error of `raw_gap`.
    pub raw_se: f64,
    /// `max(0, raw_gap)`.
    pub epsilon_hat: f64,
    /// `raw_gap ± 1.96·SE`, clipped at 0.
    pub epsilon_ci: (f64, f64),
    /// Constant deviations only bound the gap from below unless the model is
    /// known to be optimised by them.
    pub lower_bound_only: bool,
}

fn summarise(model: &ModelSpec, family: &DeviationFamily, per_rep: &[Vec<f64>]) -> GapReport {
    let sign = model.sense().gain_sign();
    let col = |i: usize| per_rep.iter().map(|r| r[i]).collect::<Vec<f64>>();
    let j_rec = CostEstimate::from_samples(&col(0));
    let candidates: Vec<CandidateGap> = (0..family.len())
        .map(|c| {
            let diffs: Vec<f64> = per_rep.iter().map(|r| sign * (r[c + 1] - r[0])).collect();
            CandidateGap {
                action: family.action(c).to_vec(),
                j_dev: CostEstimate::from_samples(&col(c + 1)),
                raw: CostEstimate::from_samples(&diffs),
            }
        })
        .collect();
    let best = (0..candidates.len())
        .fold(0, |b, c| if candidates[c].raw.mean > candidates[b].raw.mean { c } else { b });
    let raw_gap = candidates[best].raw.mean;
    let raw_se = candidates[best].raw.se();
    GapReport {
        j_rec,
        best,
        best_action: candidates[best].action.clone(),
        j_dev_best: candidates[best].j_dev,
        raw_gap,
        raw_se,
        epsilon_hat: raw_gap.max(0.0),
        epsilon_ci: ((raw_gap - Z_95 * raw_se).max(0.0), (raw_gap + Z_95 * raw_se).max(0.0)),
        lower_bound_only: true,
        candidates,
    }
}

/// Whether deviations can be evaluated against the others' per-step sums
/// instead of re-simulating the whole population.
fn separable(model: &ModelSpec) -> bool {
    model.drift_measure() == MeasureUse::None && model.cost_measure() != MeasureUse::Particles
}

/// Per-replication costs `[J_rec, J_dev(candidate 0), ...]` of player 0.
fn nplayer_replication(
    model: &ModelSpec,
    grid: &TimeGrid,
    device: &CorrelationDevice,
    family: &DeviationFamily,
    n: usize,
    seed: u64,
    rep: u64,
) -> Result<Vec<f64>> {
    let profile = device.sample_profile(n, seed, rep);
    let flow = device.flow(profile.flow);
    let spec = |j: usize| {
        let s = profile.scenarios[j];
        PlayerSpec { strategy: device.strategy(device.scenarios()[s].strategy), scenario: Some(s), flow: Some(flow) }
    };
    let mut out = Vec::with_capacity(family.len() + 1);
    if !separable(model) {
        let mut players: Vec<PlayerSpec<'_>> = (0..n).map(spec).collect();
        let batch = simulate_n_player(model, grid, &players, seed, rep)?;
        out.push(batch_player_cost(model, grid, &batch, 0));
        for c in &family.actions {
            players[0] = PlayerSpec::uninformed(c);
            let batch = simulate_n_player(model, grid, &players, seed, rep)?;
            out.push(batch_player_cost(model, grid, &batch, 0));
        }
        return Ok(out);
    }
    // The drift ignores the measure, so the others' paths do not depend on
    // player 0 and the cost only needs their per-step sums.
    let d = model.dim();
    let steps = grid.steps();
    let mut sums = vec![0.0; (steps + 1) * d];
    let mut squares = vec![0.0; steps + 1];
    for j in 1..n {
        let p = spec(j);
        let run = run_path(model, grid, p.strategy, p.scenario, p.flow, ViewSource::Ignored, seed, rep, j as u64)?;
        for k in 0..=steps {
            let x = &run.path[k * d..(k + 1) * d];
            for i in 0..d {
                sums[k * d + i] += x[i];
            }
            squares[k] += x.iter().map(|v| v * v).sum::<f64>();
        }
    }
    let nf = n as f64;
    let cost_of = |strategy: &dyn Strategy, scenario, flow| -> Result<f64> {
        let run = run_path(model, grid, strategy, scenario, flow, ViewSource::Ignored, seed, rep, 0)?;
        let path = &run.path;
        Ok(path_cost(model, grid, path, &run.actions, |k| {
            let x = &path[k * d..(k + 1) * d];
            let mean = (0..d).map(|i| (sums[k * d + i] + x[i]) / nf).collect();
            let second = (squares[k] + x.iter().map(|v| v * v).sum::<f64>()) / nf;
            MeasureView::from_parts_unchecked(mean, second, None)
        }))
    };
    let p0 = spec(0);
    out.push(cost_of(p0.strategy, p0.scenario, p0.flow)?);
    for c in &family.actions {
        out.push(cost_of(c, None, None)?);
    }
    Ok(out)
}

/// Monte Carlo `ε`-gap of the device in the `N`-player game. In replication
/// `r` the recommendations come from [`CorrelationDevice::sample_profile`]
/// and player `j` uses noise lane `j`; each candidate replaces player 0.
pub fn cce_gap_nplayer(
    model: &ModelSpec,
    grid: &TimeGrid,
    device: &CorrelationDevice,
    n: usize,
    family: &DeviationFamily,
    reps: usize,
    seed: u64,
) -> Result<GapReport> {
    if n < 2 {
        return Err(Error::param("n", "need at least two players"));
    }
    if reps == 0 {
        return Err(Error::param("reps", "need at least one replication"));
    }
    family.check(model)?;
    let per_rep = try_map_indexed(reps, |r| nplayer_replication(model, grid, device, family, n, seed, r as u64))?;
    Ok(summarise(model, family, &per_rep))
}

/// Mean field `ε`-gap: the representative player follows its recommendation
/// or deviates while facing the flow announced by the lottery.
pub fn mean_field_gap_mc(
    model: &ModelSpec,
    grid: &TimeGrid,
    device: &CorrelationDevice,
    family: &DeviationFamily,
    reps: usize,
    seed: u64,
) -> Result<GapReport> {
    if reps == 0 {
        return Err(Error::param("reps", "need at least one replication"));
    }
    family.check(model)?;
    let views: Vec<_> = (0..device.flow_count()).map(|f| device.flow(f).views(grid)).collect::<Result<_>>()?;
    let per_rep = try_map_indexed(reps, |r| {
        let s = device.scenario_for(seed, r as u64);
        let sc = device.scenarios()[s];
        let flow = device.flow(sc.flow);
        let v = &views[sc.flow];
        let cost = |strategy: &dyn Strategy, scenario, announced| -> Result<f64> {
            let run = run_path(model, grid, strategy, scenario, announced, ViewSource::Flow(v), seed, r as u64, 0)?;
            Ok(path_cost(model, grid, &run.path, &run.actions, |k| v[k].clone()))
        };
        let mut out = Vec::with_capacity(family.len() + 1);
        out.push(cost(device.strategy(sc.strategy), Some(s), Some(flow))?);
        for c in &family.actions {
            out.push(cost(c, None, None)?);
        }
        Ok::<_, Error>(out)
    })?;
    Ok(summarise(model, family, &per_rep))
}

/// `sup_t E[W2²(μ^N_t, μ_t)]` at one population size.
#[derive(Debug, Clone, PartialEq)]
pub struct PocPoint {
    pub n: usize,
    pub value: f64,
    /// Standard error of the replication mean at the maximising time.
    pub std_error: f64,
    /// Same statistic restricted to replications announcing each flow.
    pub per_class: Vec<Option<f64>>,
}

/// Propagation of chaos: for each `N`, all players follow their
/// recommendations and the time-`t` empirical measure is compared with the
/// announced flow. One-dimensional models only.
pub fn poc_curve(
    model: &ModelSpec,
    grid: &TimeGrid,
    device: &CorrelationDevice,
    ns: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<PocPoint>> {
    if model.dim() != 1 {
        return Err(Error::Unsupported("propagation of chaos diagnostics in more than one dimension"));
    }
    if reps == 0 {
        return Err(Error::param("reps", "need at least one replication"));
    }
    if ns.contains(&0) {
        return Err(Error::param("n", "population sizes must be positive"));
    }
    let steps = grid.steps();
    let references: Vec<Reference<'_>> =
        (0..device.flow_count()).map(|f| Reference::new(device.flow(f), grid)).collect::<Result<_>>()?;
    let classes = device.flow_count();
    ns.iter()
        .map(|&n| {
            let per_rep = try_map_indexed(reps, |r| {
                let profile = device.sample_profile(n, seed, r as u64);
                let flow = device.flow(profile.flow);
                let players: Vec<PlayerSpec<'_>> = profile
                    .scenarios
                    .iter()
                    .map(|&s| PlayerSpec {
                        strategy: device.strategy(device.scenarios()[s].strategy),
                        scenario: Some(s),
                        flow: Some(flow),
                    })
                    .collect();
                let batch = simulate_n_player(model, grid, &players, seed, r as u64)?;
                let mut sq = Vec::with_capacity(steps + 1);
                for k in 0..=steps {
                    let sample = Empirical1D::from_slice(batch.slice(k))?;
                    let w = references[profile.flow].distance(k, &sample)?.0;
                    sq.push(w * w);
                }
                Ok::<_, Error>((profile.flow, sq))
            })?;
            let sup_of_means = |members: &[&Vec<f64>]| -> (f64, f64) {
                let mut best = (f64::NEG_INFINITY, 0.0);
                for k in 0..=steps {
                    let col: Vec<f64> = members.iter().map(|v| v[k]).collect();
                    let est = CostEstimate::from_samples(&col);
                    if est.mean > best.0 {
                        best = (est.mean, est.se());
                    }
                }
                best
            };
            let all: Vec<&Vec<f64>> = per_rep.iter().map(|(_, v)| v).collect();
            let (value, std_error) = sup_of_means(&all);
            let per_class = (0..classes)
                .map(|f| {
                    let members: Vec<&Vec<f64>> = per_rep.iter().filter(|(c, _)| *c == f).map(|(_, v)| v).collect();
                    (!members.is_empty()).then(|| sup_of_means(&members).0)
                })
                .collect();
            Ok(PocPoint { n, value, std_error, per_class })
        })
        .collect()
}

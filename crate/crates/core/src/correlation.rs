//! Finite correlation devices: the mediator's lottery over (strategy, flow)
//! pairs, recommendation sampling, and the consistency check.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::analytic::{consistency_weights, DeviceProbs, Interval};
use crate::error::{Error, Result};
use crate::exec::try_map_indexed;
use crate::metrics::{w2_empirical_1d, w2_empirical_vs_table, Empirical1D, QuantileTable, QUANTILE_CELLS};
use crate::model::ModelSpec;
use crate::rng;
use crate::sde::{run_path, GaussianFlowComponent, MeasureFlowRep, ParticleFlow, TimeGrid, ViewSource};
use crate::strategy::{ConstantAction, Strategy};

/// Classes with fewer pooled samples than this are flagged.
pub const MIN_CLASS_SAMPLES: usize = 100;
/// Pilot runs used to calibrate the null band.
pub const PILOT_RUNS: usize = 5;

/// One outcome of the lottery: recommended strategy and announced flow, by index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub probability: f64,
    pub strategy: usize,
    pub flow: usize,
}

#[derive(Clone)]
pub struct CorrelationDevice {
    strategies: Vec<(String, Arc<dyn Strategy>)>,
    flows: Vec<(String, MeasureFlowRep)>,
    scenarios: Vec<Scenario>,
    cumulative: Vec<f64>,
}

impl core::fmt::Debug for CorrelationDevice {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("CorrelationDevice")
            .field("strategies", &self.strategies.iter().map(|s| &s.0).collect::<Vec<_>>())
            .field("flows", &self.flows)
            .field("scenarios", &self.scenarios)
            .finish()
    }
}

/// Index of the first cumulative weight exceeding `u`.
fn pick(cumulative: &[f64], u: f64) -> usize {
    cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1)
}

fn cumulate(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    // Guard the top against rounding so every uniform draw lands somewhere.
    if let Some(last) = out.last_mut() {
        *last = f64::INFINITY;
    }
    out
}

/// One draw of an `N`-player recommendation profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    /// Flow announced to everybody.
    pub flow: usize,
    /// Scenario (and hence strategy) recommended to each player.
    pub scenarios: Vec<usize>,
}

impl CorrelationDevice {
    pub fn new(
        strategies: Vec<(String, Arc<dyn Strategy>)>,
        flows: Vec<(String, MeasureFlowRep)>,
        scenarios: Vec<Scenario>,
    ) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::InvalidDistribution("device needs at least one scenario".into()));
        }
        let total: f64 = scenarios.iter().map(|s| s.probability).sum();
        if scenarios.iter().any(|s| !(s.probability >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("scenario probabilities sum to {total}")));
        }
        for s in &scenarios {
            if s.strategy >= strategies.len() {
                return Err(Error::param("scenario", format!("strategy index {} out of range", s.strategy)));
            }
            if s.flow >= flows.len() {
                return Err(Error::param("scenario", format!("flow index {} out of range", s.flow)));
            }
        }
        if let Some(d) = flows.first().map(|f| f.1.dim()) {
            if flows.iter().any(|f| f.1.dim() != d) {
                return Err(Error::param("flows", "flows of different dimensions"));
            }
        }
        let cumulative = cumulate(scenarios.iter().map(|s| s.probability));
        Ok(CorrelationDevice { strategies, flows, scenarios, cumulative })
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn strategy(&self, index: usize) -> &dyn Strategy {
        &*self.strategies[index].1
    }

    pub fn strategy_label(&self, index: usize) -> &str {
        &self.strategies[index].0
    }

    pub fn flow(&self, index: usize) -> &MeasureFlowRep {
        &self.flows[index].1
    }

    pub fn flow_label(&self, index: usize) -> &str {
        &self.flows[index].0
    }

    pub fn flow_count(&self) -> usize {
        self.flows.len()
    }

    pub fn strategy_count(&self) -> usize {
        self.strategies.len()
    }

    /// Probability of each strategy being recommended.
    pub fn strategy_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.strategies.len()];
        for s in &self.scenarios {
            out[s.strategy] += s.probability;
        }
        out
    }

    /// Probability of each flow being announced.
    pub fn flow_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.flows.len()];
        for s in &self.scenarios {
            out[s.flow] += s.probability;
        }
        out
    }

    pub(crate) fn draw_scenario(&self, rng: &mut ChaCha8Rng) -> usize {
        pick(&self.cumulative, rng.random::<f64>())
    }

    /// The lottery outcome of replication `replication`.
    pub fn scenario_for(&self, seed: u64, replication: u64) -> usize {
        self.draw_scenario(&mut rng::stream(seed, replication, rng::SCENARIO_LANE))
    }

    /// `count` i.i.d. lottery outcomes.
    pub fn sample_scenario(&self, seed: u64, count: usize) -> Vec<usize> {
        let mut r = rng::stream(seed, 0, rng::SCENARIO_LANE);
        (0..count).map(|_| self.draw_scenario(&mut r)).collect()
    }

    /// Recommendations for `n` players: the flow is drawn from the flow
    /// marginal, then each player's scenario independently from the
    /// scenarios announcing that flow.
    pub fn sample_profile(&self, n: usize, seed: u64, replication: u64) -> Profile {
        let flow = pick(&cumulate(self.flow_marginal().into_iter()), {
            rng::stream(seed, replication, rng::SCENARIO_LANE).random::<f64>()
        });
        let members: Vec<usize> = (0..self.scenarios.len()).filter(|&s| self.scenarios[s].flow == flow).collect();
        let conditional = cumulate(members.iter().map(|&s| self.scenarios[s].probability));
        let mass: f64 = members.iter().map(|&s| self.scenarios[s].probability).sum();
        let scenarios = (0..n)
            .map(|j| {
                let mut r = rng::stream(seed, replication, rng::SCENARIO_LANE_BASE + j as u64);
                members[pick(&conditional, r.random::<f64>() * mass)]
            })
            .collect();
        Profile { flow, scenarios }
    }
}

/// Device of the bang-bang example on `[a, b]`: strategies `u⁺ ≡ b`,
/// `u⁻ ≡ a`, flows `μʲ = a_j·μ⁺ + (1 − a_j)·μ⁻` with `μ±` the laws of
/// `t·b + W_t` and `t·a + W_t`. Cells with `p_ij = 0`, flows with no mass and
/// mixture components with zero weight are dropped.
pub fn build_example_device(p: &DeviceProbs, interval: Interval) -> Result<CorrelationDevice> {
    let (a, b) = (interval.a(), interval.b());
    let weights = consistency_weights(p);
    let strategies: Vec<(String, Arc<dyn Strategy>)> = vec![
        ("u+".to_string(), Arc::new(ConstantAction::scalar(b))),
        ("u-".to_string(), Arc::new(ConstantAction::scalar(a))),
    ];
    let mut flows = Vec::new();
    let mut flow_index = [None; 2];
    for (j, w) in [weights.0, weights.1].into_iter().enumerate() {
        let Some(w) = w else { continue };
        let components = [(w, b), (1.0 - w, a)]
            .into_iter()
            .filter(|&(weight, _)| weight > 0.0)
            .map(|(weight, rate)| GaussianFlowComponent { weight, mean0: 0.0, mean_rate: rate, var0: 0.0, var_rate: 1.0 })
            .collect();
        flow_index[j] = Some(flows.len());
        flows.push((format!("mu{}", j + 1), MeasureFlowRep::gaussian(components)?));
    }
    let mut scenarios = Vec::new();
    for i in 1..=2 {
        for j in 1..=2 {
            let probability = p.get(i, j);
            if probability > 0.0 {
                let flow = flow_index[j - 1].expect("column with mass has a flow");
                scenarios.push(Scenario { probability, strategy: i - 1, flow });
            }
        }
    }
    CorrelationDevice::new(strategies, flows, scenarios)
}

/// Consistency diagnostics of one announced flow.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassConsistency {
    pub flow: usize,
    pub label: String,
    pub probability: f64,
    pub count: usize,
    /// `W2` between the pooled paths and the flow at each grid time.
    pub w2: Vec<f64>,
    pub sup_w2: f64,
    /// Largest reported discretisation error of the reference quantiles.
    pub reference_error: f64,
    /// `sup_t W2` of samples drawn from the flow itself, max over pilot runs.
    pub null_band: f64,
    /// Fewer than [`MIN_CLASS_SAMPLES`] samples.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub times: Vec<f64>,
    /// One entry per flow with positive probability.
    pub classes: Vec<ClassConsistency>,
    pub total: usize,
}

impl ConsistencyReport {
    /// True if every class stays within `band_factor` times its null band.
    pub fn passes(&self, band_factor: f64) -> bool {
        self.classes.iter().all(|c| c.sup_w2 <= band_factor * c.null_band)
    }
}

/// Reference side of a `W2` comparison against a flow at each grid time.
pub(crate) enum Reference<'a> {
    Tables(Vec<QuantileTable>),
    Particles(&'a ParticleFlow),
}

impl<'a> Reference<'a> {
    pub(crate) fn new(flow: &'a MeasureFlowRep, grid: &TimeGrid) -> Result<Self> {
        match flow {
            MeasureFlowRep::Gaussian(_) => Ok(Reference::Tables(
                grid.times().map(|t| flow.mixture_at(t).expect("gaussian").quantile_table(QUANTILE_CELLS)).collect(),
            )),
            MeasureFlowRep::Particle(p) if p.steps() != grid.steps() => {
                Err(Error::FlowGridMismatch { expected: grid.steps(), found: p.steps() })
            }
            MeasureFlowRep::Particle(p) => Ok(Reference::Particles(p)),
        }
    }

    /// `W2` to the flow at time `k` and the reference discretisation error.
    pub(crate) fn distance(&self, k: usize, sample: &Empirical1D) -> Result<(f64, f64)> {
        Ok(match self {
            Reference::Tables(t) => {
                let g = w2_empirical_vs_table(sample, &t[k]);
                (g.value, g.error_bound)
            }
            Reference::Particles(p) => (w2_empirical_1d(sample, &Empirical1D::from_slice(p.at(k))?).value, 0.0),
        })
    }
}

/// Simulates `reps` independent (scenario, representative path) pairs, each
/// player following its recommended strategy against its scenario's flow,
/// groups the paths by announced flow and compares each group with that flow
/// at every grid time. One-dimensional models only.
///
/// The null band of a class is the largest `sup_t W2` over
/// [`PILOT_RUNS`] samples of the same size drawn from the flow itself.
pub fn verify_consistency(
    model: &ModelSpec,
    device: &CorrelationDevice,
    grid: &TimeGrid,
    reps: usize,
    seed: u64,
) -> Result<ConsistencyReport> {
    if model.dim() != 1 {
        return Err(Error::Unsupported("consistency check in more than one dimension"));
    }
    if reps == 0 {
        return Err(Error::param("reps", "need at least one replication"));
    }
    let views: Vec<_> = (0..device.flow_count()).map(|f| device.flow(f).views(grid)).collect::<Result<_>>()?;
    let runs = try_map_indexed(reps, |r| {
        let s = device.scenario_for(seed, r as u64);
        let sc = device.scenarios[s];
        let flow = device.flow(sc.flow);
        let run = run_path(
            model,
            grid,
            device.strategy(sc.strategy),
            Some(s),
            Some(flow),
            ViewSource::Flow(&views[sc.flow]),
            seed,
            r as u64,
            0,
        )?;
        Ok::<_, Error>((sc.flow, run.path))
    })?;

    let steps = grid.steps();
    let marginal = device.flow_marginal();
    let mut classes = Vec::new();
    for (f, &probability) in marginal.iter().enumerate() {
        if probability <= 0.0 {
            continue;
        }
        let members: Vec<&Vec<f64>> = runs.iter().filter(|(c, _)| *c == f).map(|(_, p)| p).collect();
        let count = members.len();
        if count == 0 {
            return Err(Error::EmptyClass { class: f, probability });
        }
        let flow = device.flow(f);
        let reference = Reference::new(flow, grid)?;
        let mut w2 = Vec::with_capacity(steps + 1);
        let mut reference_error = 0.0f64;
        for k in 0..=steps {
            let sample = Empirical1D::new(members.iter().map(|p| p[k]).collect())?;
            let (d, e) = reference.distance(k, &sample)?;
            w2.push(d);
            reference_error = reference_error.max(e);
        }
        let sup_w2 = w2.iter().copied().fold(0.0, f64::max);
        let mut null_band = 0.0f64;
        for pilot in 0..PILOT_RUNS {
            let mut r = rng::stream(seed, pilot as u64, rng::PILOT_LANE_BASE + f as u64);
            let mut sup = 0.0f64;
            for k in 0..=steps {
                let sample = flow.sample_at(grid, k, count, &mut r)?;
                sup = sup.max(reference.distance(k, &sample)?.0);
            }
            null_band = null_band.max(sup);
        }
        classes.push(ClassConsistency {
            flow: f,
            label: device.flow_label(f).to_string(),
            probability,
            count,
            w2,
            sup_w2,
            reference_error,
            null_band,
            flagged: count < MIN_CLASS_SAMPLES,
        });
    }
    Ok(ConsistencyReport { times: grid.times().collect(), classes, total: reps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_bang_bang_model;

    fn iv() -> Interval {
        Interval::new(-1.0, 1.0).unwrap()
    }

    fn probs(p: [f64; 4]) -> DeviceProbs {
        DeviceProbs::from_array(p).unwrap()
    }

    #[test]
    fn corner_devices_have_one_scenario() {
        let d = build_example_device(&probs([1.0, 0.0, 0.0, 0.0]), iv()).unwrap();
        assert_eq!(d.scenarios().len(), 1);
        assert_eq!(d.strategy_label(d.scenarios()[0].strategy), "u+");
        assert_eq!(d.flow(0), &MeasureFlowRep::drifted_brownian(0.0, 1.0));
        let d = build_example_device(&probs([0.0, 0.0, 0.0, 1.0]), iv()).unwrap();
        assert_eq!(d.scenarios().len(), 1);
        assert_eq!(d.strategy_label(d.scenarios()[0].strategy), "u-");
        assert_eq!(d.flow(0), &MeasureFlowRep::drifted_brownian(0.0, -1.0));
        assert!(d.sample_scenario(3, 100).iter().all(|&s| s == 0));
    }

    #[test]
    fn diagonal_device_pairs_pure_flows() {
        let d = build_example_device(&probs([0.5, 0.0, 0.0, 0.5]), iv()).unwrap();
        assert_eq!(d.scenarios().len(), 2);
        assert_eq!(d.flow(0), &MeasureFlowRep::drifted_brownian(0.0, 1.0));
        assert_eq!(d.flow(1), &MeasureFlowRep::drifted_brownian(0.0, -1.0));
        let draws = d.sample_scenario(11, 100_000);
        let f = draws.iter().filter(|&&s| s == 0).count() as f64 / 1e5;
        assert!((f - 0.5).abs() < 0.01, "{f}");
    }

    #[test]
    fn marginals_are_exact() {
        let p = probs([0.5, 0.3, 0.2, 0.0]);
        let d = build_example_device(&p, iv()).unwrap();
        assert_eq!(d.strategy_marginal(), vec![0.8, 0.2]);
        assert_eq!(d.flow_marginal(), vec![0.7, 0.3]);
        let mix = d.flow(0).mixture_at(2.0).unwrap();
        assert!((mix.mean() - 2.0 * 3.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_devices() {
        let s: Vec<(String, Arc<dyn Strategy>)> = vec![("x".into(), Arc::new(ConstantAction::scalar(0.0)))];
        let f = vec![("m".to_string(), MeasureFlowRep::drifted_brownian(0.0, 0.0))];
        let sc = |p| vec![Scenario { probability: p, strategy: 0, flow: 0 }];
        assert!(CorrelationDevice::new(s.clone(), f.clone(), sc(0.9)).is_err());
        assert!(CorrelationDevice::new(s.clone(), f.clone(), vec![]).is_err());
        assert!(CorrelationDevice::new(s.clone(), f.clone(), vec![Scenario { probability: 1.0, strategy: 1, flow: 0 }])
            .is_err());
        assert!(CorrelationDevice::new(s, f, sc(1.0)).is_ok());
    }

    #[test]
    fn profiles_share_the_flow() {
        let d = build_example_device(&probs([0.4, 0.1, 0.2, 0.3]), iv()).unwrap();
        let mut counts = [0usize; 2];
        for rep in 0..2000 {
            let prof = d.sample_profile(20, 5, rep);
            counts[prof.flow] += 1;
            assert!(prof.scenarios.iter().all(|&s| d.scenarios()[s].flow == prof.flow));
        }
        let f = counts[0] as f64 / 2000.0;
        assert!((f - 0.6).abs() < 3.0 * (0.24f64 / 2000.0).sqrt(), "{f}");
        assert_eq!(d.sample_profile(20, 5, 7), d.sample_profile(20, 5, 7));
    }

    #[test]
    fn consistency_detects_mismatch() {
        let model = build_bang_bang_model(-1.0, 1.0, 1.0, 2.0).unwrap();
        let grid = TimeGrid::new(2.0, 50).unwrap();
        let good = build_example_device(&probs([1.0, 0.0, 0.0, 0.0]), iv()).unwrap();
        let r = verify_consistency(&model, &good, &grid, 2000, 1).unwrap();
        assert_eq!(r.classes.len(), 1);
        assert_eq!(r.classes[0].count, 2000);
        assert!(r.passes(2.0), "{} vs {}", r.classes[0].sup_w2, r.classes[0].null_band);

        let s: Vec<(String, Arc<dyn Strategy>)> = vec![("u+".into(), Arc::new(ConstantAction::scalar(1.0)))];
        let f = vec![("mu-".to_string(), MeasureFlowRep::drifted_brownian(0.0, -1.0))];
        let bad = CorrelationDevice::new(s, f, vec![Scenario { probability: 1.0, strategy: 0, flow: 0 }]).unwrap();
        let r = verify_consistency(&model, &bad, &grid, 2000, 1).unwrap();
        assert!(r.classes[0].sup_w2 > 3.5);
        assert!(!r.passes(2.0));
    }

    #[test]
    fn small_classes_are_flagged_or_rejected() {
        let model = build_bang_bang_model(-1.0, 1.0, 1.0, 2.0).unwrap();
        let grid = TimeGrid::new(2.0, 10).unwrap();
        let d = build_example_device(&probs([0.5, 0.0, 0.0, 0.5]), iv()).unwrap();
        let r = verify_consistency(&model, &d, &grid, 50, 2).unwrap();
        assert!(r.classes.iter().all(|c| c.flagged));
        assert_eq!(r.classes.iter().map(|c| c.count).sum::<usize>(), 50);
        let d = build_example_device(&probs([0.999, 0.0, 0.0, 0.001]), iv()).unwrap();
        assert!(matches!(verify_consistency(&model, &d, &grid, 5, 2), Err(Error::EmptyClass { class: 1, .. })));
    }
}

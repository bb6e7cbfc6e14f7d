//! Open-loop action rules.

use alloc::vec::Vec;

use crate::sde::MeasureFlowRep;

/// Information available to an open-loop strategy at a grid time.
#[derive(Debug, Clone, Copy)]
pub struct StrategyContext<'a> {
    pub step: usize,
    pub time: f64,
    /// The player's own initial state.
    pub initial_state: &'a [f64],
    /// The player's own Brownian motion at `time`.
    pub brownian: &'a [f64],
    /// Realised device scenario, `None` for a deviator, who acts without
    /// seeing the lottery outcome.
    pub scenario: Option<usize>,
    /// Flow recommended together with the strategy, if any.
    pub flow: Option<&'a MeasureFlowRep>,
}

pub trait Strategy: Send + Sync {
    /// Writes the action at `ctx` into `action`.
    fn act(&self, ctx: &StrategyContext<'_>, action: &mut [f64]);
}

impl<F> Strategy for F
where
    F: Fn(&StrategyContext<'_>, &mut [f64]) + Send + Sync,
{
    fn act(&self, ctx: &StrategyContext<'_>, action: &mut [f64]) {
        self(ctx, action)
    }
}

/// Constant control `a_t ≡ a`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantAction(pub Vec<f64>);

impl ConstantAction {
    pub fn scalar(a: f64) -> Self {
        ConstantAction(alloc::vec![a])
    }
}

impl Strategy for ConstantAction {
    fn act(&self, _: &StrategyContext<'_>, action: &mut [f64]) {
        action.copy_from_slice(&self.0);
    }
}

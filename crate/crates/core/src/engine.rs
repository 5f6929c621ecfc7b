//! End-to-end two-stage run: band, dispatch and trading, then per-EV
//! disaggregation of the realized dispatch.

use crate::benchmarks::alpha_dispatch;
use crate::disaggregate::{beta, disaggregate_power, fleet_violations, EvDispatch, Violation};
use crate::error::Result;
use crate::scenario::Scenario;
use crate::stage1::{flexibility_value, run_stage1, HorizonValue, Stage1Outcome};
use crate::stage2::{run_stage2, HUpdate, Stage2Outcome, Stage2Setup};

/// Where the aggregate EV power comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum DispatchMode {
    /// The Stage-2 online problem picks it inside the band.
    #[default]
    Stage2,
    /// Fixed at `p_check + alpha·(p_hat - p_check)`.
    Alpha,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineOptions {
    pub h_update: HUpdate,
    pub dispatch: DispatchMode,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub stage1: Stage1Outcome,
    pub setup: Stage2Setup,
    pub stage2: Stage2Outcome,
    pub value: HorizonValue,
    pub betas: Vec<f64>,
    pub ev: EvDispatch,
    pub violations: Vec<Violation>,
    /// Largest `|sum_v p_c - p_d|` over slots.
    pub aggregation_residual: f64,
}

impl RunOutcome {
    /// Energy of each EV when it leaves.
    pub fn terminal_energy(&self, s: &Scenario) -> Vec<f64> {
        s.fleet.iter().enumerate().map(|(i, v)| self.ev.e[i][v.t_depart - 1]).collect()
    }

    /// Smallest `e(t_depart) - e_target` over the fleet.
    pub fn min_target_margin(&self, s: &Scenario) -> f64 {
        self.terminal_energy(s)
            .iter()
            .zip(&s.fleet)
            .map(|(e, v)| e - v.e_target)
            .fold(f64::INFINITY, f64::min)
    }

    /// Terminal state of charge relative to the battery limit, `e/e_max`.
    pub fn terminal_fill(&self, s: &Scenario) -> Vec<f64> {
        self.terminal_energy(s).iter().zip(&s.fleet).map(|(e, v)| e / v.e_max).collect()
    }

    pub fn served_energy(&self, s: &Scenario) -> f64 {
        self.stage2.decisions.iter().map(|d| d.p_d).sum::<f64>() * s.grid.delta_t
    }
}

/// Runs both stages over the horizon.
///
/// Stage 1 does not depend on Stage 2, so the band is computed in one pass
/// first; its peak fixes the largest grid purchase that the Stage-2 bounds
/// and the quota precondition need before the first dispatch.
pub fn run_two_stage(s: &Scenario, opts: &EngineOptions) -> Result<RunOutcome> {
    s.validate()?;
    let stage1 = run_stage1(s)?;
    let setup = Stage2Setup::new(s, &stage1.band)?;
    let fixed = match opts.dispatch {
        DispatchMode::Stage2 => None,
        DispatchMode::Alpha => Some(alpha_dispatch(&stage1.band, s.alpha)?),
    };
    let stage2 = run_stage2(s, &stage1.band, &setup, opts.h_update, fixed.as_deref())?;

    let band = &stage1.band;
    let betas = stage2
        .decisions
        .iter()
        .enumerate()
        .map(|(k, d)| beta(d.p_d, band.p_check[k], band.p_hat[k]))
        .collect::<Result<Vec<_>>>()?;
    let ev = disaggregate_power(&betas, &stage1.envelopes, &s.fleet, &s.grid);
    let violations = fleet_violations(&s.fleet, &s.grid, &ev.p_c, &ev.e, 1e-9);
    let aggregation_residual = (0..s.grid.slots)
        .map(|k| (ev.p_c.iter().map(|p| p[k]).sum::<f64>() - stage2.decisions[k].p_d).abs())
        .fold(0.0, f64::max);
    let value = flexibility_value(band);
    Ok(RunOutcome { stage1, setup, stage2, value, betas, ev, violations, aggregation_residual })
}

//! Delay groups, arrival demand and the per-group charging queues.

use crate::error::{Error, Result};
use crate::scenario::{ChargingTask, TimeGrid};

/// EVs sharing one charging delay (`t_depart - t_arrive`, in slots).
#[derive(Debug, Clone, PartialEq)]
pub struct GroupIndex {
    /// 1-based group id, ordered by increasing delay.
    pub g: usize,
    pub r_g: usize,
    /// Positions in the fleet slice.
    pub members: Vec<usize>,
}

/// One group per distinct delay, ordered by delay.
pub fn assign_groups(fleet: &[ChargingTask]) -> Result<Vec<GroupIndex>> {
    if fleet.is_empty() {
        return Err(Error::EmptyFleet);
    }
    let mut delays: Vec<usize> = fleet.iter().map(ChargingTask::dwell).collect();
    delays.sort_unstable();
    delays.dedup();
    Ok(delays
        .iter()
        .enumerate()
        .map(|(k, &r)| GroupIndex {
            g: k + 1,
            r_g: r,
            members: (0..fleet.len()).filter(|&i| fleet[i].dwell() == r).collect(),
        })
        .collect())
}

/// Splits `energy` into slots of at most `p_max` kW starting at `start`:
/// full-power slots first, then the remainder. Slots past the horizon are
/// dropped.
fn fill_from(out: &mut [f64], start: usize, energy: f64, p_max: f64, gain: f64) {
    if energy <= 0.0 {
        return;
    }
    let power = energy / gain;
    let full = (power / p_max).floor() as usize;
    let remainder = power - full as f64 * p_max;
    for k in 0..full {
        if let Some(slot) = out.get_mut(start - 1 + k) {
            *slot = p_max;
        }
    }
    if remainder > 0.0 {
        if let Some(slot) = out.get_mut(start - 1 + full) {
            *slot = remainder;
        }
    }
}

/// Per-slot lower and upper arrival demand of one EV (kW, indexed `t-1`).
/// The lower sequence delivers `e_target - e_init`, the upper `e_max - e_init`,
/// each at full power from arrival.
pub fn arrival_demand(task: &ChargingTask, grid: &TimeGrid) -> (Vec<f64>, Vec<f64>) {
    let gain = task.gain(grid.delta_t);
    let mut lower = vec![0.0; grid.slots];
    let mut upper = vec![0.0; grid.slots];
    fill_from(&mut lower, task.t_arrive, task.e_target - task.e_init, task.p_max, gain);
    fill_from(&mut upper, task.t_arrive, task.e_max - task.e_init, task.p_max, gain);
    (lower, upper)
}

/// Group-level arrival demand.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalDemand {
    pub a_hat: Vec<f64>,
    pub a_check: Vec<f64>,
    pub a_hat_max: f64,
    pub a_check_max: f64,
}

pub fn group_arrivals(group: &GroupIndex, fleet: &[ChargingTask], grid: &TimeGrid) -> ArrivalDemand {
    let mut a_hat = vec![0.0; grid.slots];
    let mut a_check = vec![0.0; grid.slots];
    for &i in &group.members {
        let (lo, hi) = arrival_demand(&fleet[i], grid);
        a_check.iter_mut().zip(&lo).for_each(|(a, v)| *a += v);
        a_hat.iter_mut().zip(&hi).for_each(|(a, v)| *a += v);
    }
    let a_hat_max = a_hat.iter().copied().fold(0.0, f64::max);
    let a_check_max = a_check.iter().copied().fold(0.0, f64::max);
    ArrivalDemand { a_hat, a_check, a_hat_max, a_check_max }
}

/// Sum of `p_max` over members parked at slot `t`.
pub fn group_capacity(group: &GroupIndex, fleet: &[ChargingTask], t: usize) -> f64 {
    group.members.iter().filter(|&&i| fleet[i].is_present(t)).map(|&i| fleet[i].p_max).sum()
}

/// Charging queue backlogs of one group.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GroupState {
    pub q_hat: f64,
    pub q_check: f64,
    pub x_max_t: f64,
}

impl GroupState {
    /// `Q <- max(Q - x, 0) + a` for both queues.
    pub fn update_queues(&self, x_hat: f64, x_check: f64, a_hat: f64, a_check: f64) -> Result<GroupState> {
        for (v, name) in [(x_hat, "x_hat"), (x_check, "x_check"), (a_hat, "a_hat"), (a_check, "a_check")] {
            if v < 0.0 || v.is_nan() {
                return Err(Error::NegativeInput(name));
            }
        }
        Ok(GroupState {
            q_hat: (self.q_hat - x_hat).max(0.0) + a_hat,
            q_check: (self.q_check - x_check).max(0.0) + a_check,
            x_max_t: self.x_max_t,
        })
    }
}

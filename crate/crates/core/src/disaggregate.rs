//! Per-EV boundary profiles behind the aggregate band, and the convex
//! combination that maps any aggregate dispatch inside the band back to
//! feasible per-EV charging.
//!
//! The envelopes are tracked slot by slot with earliest-deadline-first
//! water-filling inside each delay group. The lower envelope charges each EV
//! only up to its departure target and never falls behind the latest start
//! that still meets it. The upper envelope never drops below the lower one
//! and always keeps room under `e_max` for the energy the lower envelope
//! still owes, so every per-slot mixture of the two stays feasible.

use crate::error::{Error, Result};
use crate::fleet::GroupIndex;
use crate::scenario::{ChargingTask, TimeGrid};

const ALLOC_TOL: f64 = 1e-9;

/// Lower-envelope box of one group at one slot.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GroupLimits {
    /// Power the lower envelope must draw to keep every member on schedule.
    pub floor: f64,
    /// Most the lower envelope may draw.
    pub cap_check: f64,
    /// Most the upper envelope may draw if the lower one is at `cap_check`.
    pub cap_hat: f64,
}

/// Lower-envelope split of a group's power among its present members.
#[derive(Debug, Clone, Default)]
pub struct LowerSplit {
    pub t: usize,
    pub members: Vec<usize>,
    pub power: Vec<f64>,
    /// Largest upper-envelope power each member may take given `power`.
    pub upper_cap: Vec<f64>,
}

impl LowerSplit {
    pub fn total(&self) -> f64 {
        self.power.iter().sum()
    }

    pub fn upper_total(&self) -> f64 {
        self.upper_cap.iter().sum()
    }
}

/// Per-EV boundary profiles, indexed `[ev][t-1]`. Energy paths have one
/// extra entry: `e[ev][t-1]` is the energy at the start of slot `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeProfiles {
    pub p_hat_c: Vec<Vec<f64>>,
    pub p_check_c: Vec<Vec<f64>>,
    pub e_hat: Vec<Vec<f64>>,
    pub e_check: Vec<Vec<f64>>,
}

/// Slot-by-slot envelope tracker.
#[derive(Debug, Clone)]
pub struct EnvelopeBuilder<'a> {
    fleet: &'a [ChargingTask],
    grid: &'a TimeGrid,
    e_hat: Vec<f64>,
    e_check: Vec<f64>,
    profiles: EnvelopeProfiles,
}

impl<'a> EnvelopeBuilder<'a> {
    pub fn new(fleet: &'a [ChargingTask], grid: &'a TimeGrid) -> Self {
        let n = fleet.len();
        let t = grid.slots;
        let e0: Vec<f64> = fleet.iter().map(|v| v.e_init).collect();
        let path = |v: &ChargingTask| vec![v.e_init; t + 1];
        Self {
            fleet,
            grid,
            e_hat: e0.clone(),
            e_check: e0,
            profiles: EnvelopeProfiles {
                p_hat_c: vec![vec![0.0; t]; n],
                p_check_c: vec![vec![0.0; t]; n],
                e_hat: fleet.iter().map(path).collect(),
                e_check: fleet.iter().map(path).collect(),
            },
        }
    }

    fn gain(&self, i: usize) -> f64 {
        self.fleet[i].gain(self.grid.delta_t)
    }

    /// Energy the lower envelope still owes EV `i`.
    fn need(&self, i: usize) -> f64 {
        (self.fleet[i].e_target - self.e_check[i]).max(0.0)
    }

    fn lower_cap(&self, i: usize) -> f64 {
        self.fleet[i].p_max.min(self.need(i) / self.gain(i))
    }

    fn lower_floor(&self, i: usize, t: usize) -> f64 {
        let v = &self.fleet[i];
        let after = (v.t_depart - t - 1) as f64;
        (self.need(i) / self.gain(i) - v.p_max * after).max(0.0).min(self.lower_cap(i))
    }

    fn upper_cap(&self, i: usize, lower: f64) -> f64 {
        let v = &self.fleet[i];
        let room = (v.e_max - self.e_hat[i] - self.need(i)).max(0.0) / self.gain(i);
        v.p_max.min(room + lower).max(lower)
    }

    /// Present members in earliest-deadline-first order.
    fn present(&self, group: &GroupIndex, t: usize) -> Vec<usize> {
        let mut m: Vec<usize> = group.members.iter().copied().filter(|&i| self.fleet[i].is_present(t)).collect();
        m.sort_by_key(|&i| (self.fleet[i].t_depart, i));
        m
    }

    pub fn limits(&self, group: &GroupIndex, t: usize) -> GroupLimits {
        let mut out = GroupLimits::default();
        for i in self.present(group, t) {
            let cap = self.lower_cap(i);
            out.floor += self.lower_floor(i, t);
            out.cap_check += cap;
            out.cap_hat += self.upper_cap(i, cap);
        }
        out
    }

    /// Splits `x_check` among the group: every member gets its floor, the
    /// rest is water-filled by deadline.
    pub fn split_lower(&self, group: &GroupIndex, t: usize, x_check: f64) -> Result<LowerSplit> {
        let members = self.present(group, t);
        let mut power: Vec<f64> = members.iter().map(|&i| self.lower_floor(i, t)).collect();
        let floor: f64 = power.iter().sum();
        if x_check < floor - ALLOC_TOL {
            return Err(Error::InfeasibleAllocation {
                t,
                group: group.g,
                msg: format!("lower power {x_check} below required {floor}"),
            });
        }
        let mut rest = (x_check - floor).max(0.0);
        for (k, &i) in members.iter().enumerate() {
            let take = rest.min(self.lower_cap(i) - power[k]).max(0.0);
            power[k] += take;
            rest -= take;
        }
        if rest > ALLOC_TOL {
            return Err(Error::InfeasibleAllocation {
                t,
                group: group.g,
                msg: format!("lower power {x_check} exceeds capacity by {rest}"),
            });
        }
        let upper_cap = members.iter().zip(&power).map(|(&i, &l)| self.upper_cap(i, l)).collect();
        Ok(LowerSplit { t, members, power, upper_cap })
    }

    /// Commits a lower split and the group's upper power `x_hat`, which is
    /// water-filled by deadline on top of the lower powers.
    pub fn commit(&mut self, group: &GroupIndex, split: &LowerSplit, x_hat: f64) -> Result<()> {
        let t = split.t;
        let lower = split.total();
        if x_hat < lower - ALLOC_TOL {
            return Err(Error::InfeasibleAllocation {
                t,
                group: group.g,
                msg: format!("upper power {x_hat} below lower power {lower}"),
            });
        }
        let mut rest = (x_hat - lower).max(0.0);
        let mut upper = split.power.clone();
        for (u, cap) in upper.iter_mut().zip(&split.upper_cap) {
            let take = rest.min(cap - *u).max(0.0);
            *u += take;
            rest -= take;
        }
        if rest > ALLOC_TOL {
            return Err(Error::InfeasibleAllocation {
                t,
                group: group.g,
                msg: format!("upper power {x_hat} exceeds capacity by {rest}"),
            });
        }
        for (k, &i) in split.members.iter().enumerate() {
            let g = self.gain(i);
            self.profiles.p_check_c[i][t - 1] = split.power[k];
            self.profiles.p_hat_c[i][t - 1] = upper[k];
            self.e_check[i] += g * split.power[k];
            self.e_hat[i] += g * upper[k];
        }
        Ok(())
    }

    /// Records the energy state at the start of slot `t + 1` for every EV.
    pub fn close_slot(&mut self, t: usize) {
        for i in 0..self.fleet.len() {
            self.profiles.e_check[i][t] = self.e_check[i];
            self.profiles.e_hat[i][t] = self.e_hat[i];
        }
    }

    pub fn finish(self) -> EnvelopeProfiles {
        self.profiles
    }
}

/// Rebuilds the per-EV envelopes behind per-group bounds `x_check[g][t-1]`,
/// `x_hat[g][t-1]` (groups in the order of `groups`).
pub fn build_envelopes(
    groups: &[GroupIndex],
    x_check: &[Vec<f64>],
    x_hat: &[Vec<f64>],
    fleet: &[ChargingTask],
    grid: &TimeGrid,
) -> Result<EnvelopeProfiles> {
    let mut b = EnvelopeBuilder::new(fleet, grid);
    for t in 1..=grid.slots {
        for (k, g) in groups.iter().enumerate() {
            let split = b.split_lower(g, t, x_check[k][t - 1])?;
            b.commit(g, &split, x_hat[k][t - 1])?;
        }
        b.close_slot(t);
    }
    Ok(b.finish())
}

/// Share of the lower envelope in a dispatch: `(p_hat - p_d)/(p_hat - p_check)`,
/// or 0 for a degenerate band.
pub fn beta(p_d: f64, p_check: f64, p_hat: f64) -> Result<f64> {
    if p_check > p_hat + ALLOC_TOL {
        return Err(Error::EmptyBand { p_check, p_hat });
    }
    let tol = ALLOC_TOL * (1.0 + p_hat.abs());
    if p_d < p_check - tol || p_d > p_hat + tol {
        return Err(Error::OutsideBand { p_d, p_check, p_hat });
    }
    let width = p_hat - p_check;
    if width <= ALLOC_TOL {
        return Ok(0.0);
    }
    Ok(((p_hat - p_d) / width).clamp(0.0, 1.0))
}

/// Per-EV dispatch, indexed like [`EnvelopeProfiles`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvDispatch {
    pub p_c: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
}

/// Per slot, `p = beta·p_check + (1 - beta)·p_hat` for every EV; energy
/// follows the charging dynamics from `e_init`.
pub fn disaggregate_power(
    betas: &[f64],
    env: &EnvelopeProfiles,
    fleet: &[ChargingTask],
    grid: &TimeGrid,
) -> EvDispatch {
    let mut p_c = vec![vec![0.0; grid.slots]; fleet.len()];
    let mut e = vec![vec![0.0; grid.slots + 1]; fleet.len()];
    for (i, v) in fleet.iter().enumerate() {
        let gain = v.gain(grid.delta_t);
        e[i][0] = v.e_init;
        for t in 1..=grid.slots {
            let b = betas[t - 1];
            let p = b * env.p_check_c[i][t - 1] + (1.0 - b) * env.p_hat_c[i][t - 1];
            p_c[i][t - 1] = p;
            e[i][t] = e[i][t - 1] + gain * p;
        }
    }
    EvDispatch { p_c, e }
}

/// A broken per-EV constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub ev: usize,
    pub t: usize,
    pub what: &'static str,
    pub amount: f64,
}

/// Checks a per-EV profile against the power box, the presence window,
/// the energy dynamics, the battery bounds and the departure target.
/// `e[t-1]` is the energy at the start of slot `t`.
pub fn profile_violations(i: usize, v: &ChargingTask, p: &[f64], e: &[f64], grid: &TimeGrid, tol: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut flag = |t: usize, what: &'static str, amount: f64| {
        if amount > tol {
            out.push(Violation { ev: i, t, what, amount });
        }
    };
    let gain = v.gain(grid.delta_t);
    flag(v.t_arrive, "initial energy", (e[v.t_arrive - 1] - v.e_init).abs());
    for t in 1..=grid.slots {
        let pt = p[t - 1];
        flag(t, "negative power", -pt);
        if v.is_present(t) {
            flag(t, "power above p_max", pt - v.p_max);
        } else {
            flag(t, "charging while absent", pt.abs());
        }
        if t >= v.t_arrive && t < v.t_depart {
            flag(t, "energy dynamics", (e[t] - e[t - 1] - gain * pt).abs());
        }
        if t >= v.t_arrive && t <= v.t_depart {
            flag(t, "energy above e_max", e[t - 1] - v.e_max);
            flag(t, "energy below e_min", v.e_min - e[t - 1]);
        }
    }
    flag(v.t_depart, "departure target missed", v.e_target - e[v.t_depart - 1]);
    out
}

pub fn fleet_violations(fleet: &[ChargingTask], grid: &TimeGrid, p: &[Vec<f64>], e: &[Vec<f64>], tol: f64) -> Vec<Violation> {
    fleet
        .iter()
        .enumerate()
        .flat_map(|(i, v)| profile_violations(i, v, &p[i], &e[i], grid, tol))
        .collect()
}

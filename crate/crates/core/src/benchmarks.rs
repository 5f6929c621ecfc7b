//! Comparison policies: charge-first (B1), offline flexibility LP (B2),
//! myopic cost minimizer and its penalized relaxation (B3), offline cost LP
//! (B4), and the dispatch-ratio rule.

use std::fmt;

use crate::error::{Error, Result};
use crate::fleet::{assign_groups, group_arrivals, group_capacity};
use crate::lpsolve::{solve_lp, Direction, LinearProgram, LpStatus, RowSense, DEFAULT_TOL};
use crate::scenario::{ChargingTask, Scenario};
use crate::stage1::FlexibilityBand;
use crate::stage2::{DispatchDecision, PriceRow};

/// Largest offline LP (in variables) the dense solver is asked to handle.
pub const MAX_LP_VARS: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    B1,
    B2,
    B3,
    B3Mod,
    B4,
    Proposed,
}

impl Policy {
    pub const ALL: [Policy; 6] = [Policy::B1, Policy::B2, Policy::B3, Policy::B3Mod, Policy::B4, Policy::Proposed];

    pub fn name(self) -> &'static str {
        match self {
            Policy::B1 => "b1",
            Policy::B2 => "b2",
            Policy::B3 => "b3",
            Policy::B3Mod => "b3mod",
            Policy::B4 => "b4",
            Policy::Proposed => "proposed",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown benchmark `{s}`")))
    }
}

/// Outcome of one policy. Infeasible runs carry no value or cost.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult {
    pub policy: Policy,
    pub feasible: bool,
    pub value: Option<f64>,
    pub cost: Option<f64>,
    /// Aggregate band, for flexibility policies.
    pub p_hat: Vec<f64>,
    pub p_check: Vec<f64>,
    /// Per-slot dispatch and footprint at slot start, for cost policies.
    pub dispatch: Vec<DispatchDecision>,
    pub c: Vec<f64>,
    pub diagnostics: Vec<String>,
}

impl BenchmarkResult {
    pub fn empty(policy: Policy) -> Self {
        Self {
            policy,
            feasible: true,
            value: None,
            cost: None,
            p_hat: Vec::new(),
            p_check: Vec::new(),
            dispatch: Vec::new(),
            c: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    fn infeasible(policy: Policy, why: String) -> Self {
        Self { feasible: false, diagnostics: vec![why], ..Self::empty(policy) }
    }

    fn with_band(policy: Policy, s: &Scenario, p_hat: Vec<f64>, p_check: Vec<f64>) -> Self {
        let value = (1..=s.grid.slots).map(|t| s.prices.combined(t) * (p_hat[t - 1] - p_check[t - 1])).sum();
        Self { value: Some(value), p_hat, p_check, ..Self::empty(policy) }
    }
}

/// Full-power charging from arrival until `energy` is delivered or the EV
/// leaves.
fn asap_profile(v: &ChargingTask, energy: f64, delta_t: f64, slots: usize) -> Vec<f64> {
    let mut p = vec![0.0; slots];
    let mut left = energy.max(0.0);
    let gain = v.gain(delta_t);
    for t in v.t_arrive..v.t_depart {
        if left <= 0.0 {
            break;
        }
        let x = v.p_max.min(left / gain);
        p[t - 1] = x;
        left -= x * gain;
    }
    p
}

/// B1: each EV charges at full power until its target; only afterwards may
/// it absorb extra power, up to its battery limit.
pub fn b1_charge_first(s: &Scenario) -> BenchmarkResult {
    let n = s.grid.slots;
    let mut p_hat = vec![0.0; n];
    let mut p_check = vec![0.0; n];
    for v in &s.fleet {
        let lo = asap_profile(v, v.e_target - v.e_init, s.grid.delta_t, n);
        let hi = asap_profile(v, v.e_max - v.e_init, s.grid.delta_t, n);
        for t in 0..n {
            p_check[t] += lo[t];
            p_hat[t] += hi[t];
        }
    }
    BenchmarkResult::with_band(Policy::B1, s, p_hat, p_check)
}

/// B2: offline flexibility LP over per-EV upper and lower profiles.
/// Energy is monotone, so the per-EV energy constraints reduce to bounds on
/// the delivered totals.
pub fn b2_offline_flex(s: &Scenario) -> Result<BenchmarkResult> {
    let n = s.grid.slots;
    if s.fleet.is_empty() {
        return Ok(BenchmarkResult::with_band(Policy::B2, s, vec![0.0; n], vec![0.0; n]));
    }
    // Columns: for each EV and present slot, (hat, check).
    let mut cols: Vec<(usize, usize)> = Vec::new();
    for (i, v) in s.fleet.iter().enumerate() {
        for t in v.t_arrive..v.t_depart {
            cols.push((i, t));
        }
    }
    let nv = 2 * cols.len();
    if nv > MAX_LP_VARS {
        return Err(Error::Lp(format!(
            "offline flexibility LP has {nv} variables, above the desk-scale cap of {MAX_LP_VARS}"
        )));
    }
    let mut lp = LinearProgram::new(nv, Direction::Maximize);
    for (k, &(i, t)) in cols.iter().enumerate() {
        let w = s.prices.combined(t);
        lp.objective[2 * k] = w;
        lp.objective[2 * k + 1] = -w;
        lp.set_bounds(2 * k, 0.0, s.fleet[i].p_max);
        lp.set_bounds(2 * k + 1, 0.0, s.fleet[i].p_max);
    }
    for (i, v) in s.fleet.iter().enumerate() {
        let gain = v.gain(s.grid.delta_t);
        for side in 0..2 {
            let terms: Vec<(usize, f64)> =
                cols.iter().enumerate().filter(|(_, c)| c.0 == i).map(|(k, _)| (2 * k + side, gain)).collect();
            lp.add_row(&terms, RowSense::Ge, v.e_target - v.e_init);
            lp.add_row(&terms, RowSense::Le, v.e_max - v.e_init);
        }
    }
    for t in 1..=n {
        let terms: Vec<(usize, f64)> = cols
            .iter()
            .enumerate()
            .filter(|(_, c)| c.1 == t)
            .flat_map(|(k, _)| [(2 * k + 1, 1.0), (2 * k, -1.0)])
            .collect();
        if !terms.is_empty() {
            lp.add_row(&terms, RowSense::Le, 0.0);
        }
    }
    let sol = solve_lp(&lp, DEFAULT_TOL)?;
    if sol.status != LpStatus::Optimal {
        return Ok(BenchmarkResult::infeasible(Policy::B2, format!("offline flexibility LP is {:?}", sol.status)));
    }
    let mut p_hat = vec![0.0; n];
    let mut p_check = vec![0.0; n];
    for (k, &(_, t)) in cols.iter().enumerate() {
        p_hat[t - 1] += sol.x[2 * k];
        p_check[t - 1] += sol.x[2 * k + 1];
    }
    Ok(BenchmarkResult::with_band(Policy::B2, s, p_hat, p_check))
}

/// Per-EV greedy fill of `energy` into the slots ranked by `order`, at most
/// `p_max` each.
fn greedy_fill(v: &ChargingTask, energy: f64, delta_t: f64, mut slots: Vec<(usize, f64)>, highest: bool) -> f64 {
    slots.sort_by(|a, b| if highest { b.1.total_cmp(&a.1) } else { a.1.total_cmp(&b.1) }.then(a.0.cmp(&b.0)));
    let gain = v.gain(delta_t);
    let mut left = energy.max(0.0);
    let mut value = 0.0;
    for (_, w) in slots {
        if left <= 0.0 {
            break;
        }
        let x = v.p_max.min(left / gain);
        value += w * x;
        left -= x * gain;
    }
    value
}

/// Upper bound on the offline flexibility value: the LP without the
/// aggregate ordering of the two bounds separates per EV, and each side is
/// a fractional knapsack.
pub fn b2_decoupled_bound(s: &Scenario) -> f64 {
    s.fleet
        .iter()
        .map(|v| {
            let slots: Vec<(usize, f64)> = (v.t_arrive..v.t_depart).map(|t| (t, s.prices.combined(t))).collect();
            let hi = greedy_fill(v, v.e_max - v.e_init, s.grid.delta_t, slots.clone(), true);
            let lo = greedy_fill(v, v.e_target - v.e_init, s.grid.delta_t, slots, false);
            hi - lo
        })
        .sum()
}

/// Value of the group-form relaxation with time-average demand constraints:
/// each upper bound sits at the group capacity and each lower bound
/// delivers the group's total lower demand in the cheapest slots.
pub fn group_form_value(s: &Scenario) -> Result<f64> {
    let groups = assign_groups(&s.fleet)?;
    let mut total = 0.0;
    for g in &groups {
        let a = group_arrivals(g, &s.fleet, &s.grid);
        let caps: Vec<f64> = (1..=s.grid.slots).map(|t| group_capacity(g, &s.fleet, t)).collect();
        let mut order: Vec<usize> = (1..=s.grid.slots).filter(|&t| caps[t - 1] > 0.0).collect();
        order.sort_by(|&a, &b| s.prices.combined(a).total_cmp(&s.prices.combined(b)).then(a.cmp(&b)));
        let mut left: f64 = a.a_check.iter().sum();
        for &t in &order {
            total += s.prices.combined(t) * caps[t - 1];
            let x = caps[t - 1].min(left.max(0.0));
            total -= s.prices.combined(t) * x;
            left -= x;
        }
    }
    Ok(total)
}

fn cost_of(row: &PriceRow, p_g: f64, m_b: f64, delta_t: f64) -> f64 {
    row.pi_e * p_g * delta_t + row.pi_c * m_b
}

/// B3: per slot, the cheapest dispatch inside the band (free renewables
/// first), trading only the excess once the footprint would cross the
/// quota. Reports infeasible when the footprint cannot be kept under it.
pub fn b3_myopic(s: &Scenario, band: &FlexibilityBand) -> BenchmarkResult {
    let dt = s.grid.delta_t;
    let mut out = BenchmarkResult::empty(Policy::B3);
    let mut c = s.c_init;
    let mut total = 0.0;
    for t in 1..=s.grid.slots {
        let row = PriceRow::of(s, t);
        let p_d = row.pv_max.clamp(band.p_check[t - 1], band.p_hat[t - 1]);
        let p_r = p_d.min(row.pv_max);
        let p_g = p_d - p_r;
        let over = c + row.rho * p_g * dt - s.c_quota;
        let m_b = if over > 0.0 && s.grid.is_carbon_slot(t) { over.min(s.m_b_max) } else { 0.0 };
        let next = c + row.rho * p_g * dt - m_b;
        if next > s.c_quota + 1e-9 {
            return BenchmarkResult::infeasible(
                Policy::B3,
                format!("slot {t}: footprint would reach {next:.3} above quota {}", s.c_quota),
            );
        }
        let cost = cost_of(&row, p_g, m_b, dt);
        out.c.push(c);
        out.dispatch.push(DispatchDecision { p_d, p_g, p_r, m_b, cost });
        total += cost;
        c = next;
    }
    out.cost = Some(total);
    out
}

/// B3 with a penalty on unserved lower-bound energy: when the quota binds
/// and no trade is possible (or enough), grid purchases are curtailed and
/// every curtailed kWh costs `penalty`. The reported cost includes the
/// penalty; the penalty alone is in the diagnostics.
pub fn b3_modified(s: &Scenario, band: &FlexibilityBand) -> BenchmarkResult {
    let dt = s.grid.delta_t;
    let lambda = s.penalty_weight();
    let mut out = BenchmarkResult::empty(Policy::B3Mod);
    let mut c = s.c_init;
    let mut total = 0.0;
    let mut penalty = 0.0;
    for t in 1..=s.grid.slots {
        let row = PriceRow::of(s, t);
        let mut p_d = row.pv_max.clamp(band.p_check[t - 1], band.p_hat[t - 1]);
        let p_r = p_d.min(row.pv_max);
        let mut p_g = p_d - p_r;
        let over = c + row.rho * p_g * dt - s.c_quota;
        let m_b = if over > 0.0 && s.grid.is_carbon_slot(t) { over.min(s.m_b_max) } else { 0.0 };
        let room = (s.c_quota - c + m_b).max(0.0);
        if row.rho * p_g * dt > room {
            let allowed = room / (row.rho * dt);
            let cut = p_g - allowed;
            p_g = allowed;
            p_d -= cut;
            penalty += lambda * cut * dt;
        }
        let next = (c + row.rho * p_g * dt - m_b).min(s.c_quota);
        let cost = cost_of(&row, p_g, m_b, dt);
        out.c.push(c);
        out.dispatch.push(DispatchDecision { p_d, p_g, p_r, m_b, cost });
        total += cost;
        c = next;
    }
    out.cost = Some(total + penalty);
    out.diagnostics.push(format!("unserved-energy penalty {penalty}"));
    out
}

/// B4: offline cost LP over the whole horizon with the band fixed.
pub fn b4_offline_cost(s: &Scenario, band: &FlexibilityBand) -> Result<BenchmarkResult> {
    let n = s.grid.slots;
    let dt = s.grid.delta_t;
    let nv = 4 * n;
    if nv > MAX_LP_VARS {
        return Err(Error::Lp(format!("offline cost LP has {nv} variables, above the cap of {MAX_LP_VARS}")));
    }
    // Per slot: p_d, p_r, m_b, c_{t+1}.
    let (pd, pr, mb, cn) = (|t: usize| 4 * (t - 1), |t: usize| 4 * (t - 1) + 1, |t: usize| 4 * (t - 1) + 2, |t: usize| 4 * (t - 1) + 3);
    let mut lp = LinearProgram::new(nv, Direction::Minimize);
    for t in 1..=n {
        let row = PriceRow::of(s, t);
        lp.objective[pd(t)] = row.pi_e * dt;
        lp.objective[pr(t)] = -row.pi_e * dt;
        lp.objective[mb(t)] = row.pi_c;
        lp.set_bounds(pd(t), band.p_check[t - 1], band.p_hat[t - 1].max(band.p_check[t - 1]));
        lp.set_bounds(pr(t), 0.0, row.pv_max);
        lp.set_bounds(mb(t), 0.0, if s.grid.is_carbon_slot(t) { s.m_b_max } else { 0.0 });
        lp.set_bounds(cn(t), 0.0, s.c_quota);
        lp.add_row(&[(pd(t), 1.0), (pr(t), -1.0)], RowSense::Ge, 0.0);
        // c_{t+1} - c_t - rho·dt·(p_d - p_r) + m_b = 0
        let mut terms = vec![(cn(t), 1.0), (pd(t), -row.rho * dt), (pr(t), row.rho * dt), (mb(t), 1.0)];
        let rhs = if t == 1 {
            s.c_init
        } else {
            terms.push((cn(t - 1), -1.0));
            0.0
        };
        lp.add_row(&terms, RowSense::Eq, rhs);
    }
    let sol = solve_lp(&lp, DEFAULT_TOL)?;
    if sol.status != LpStatus::Optimal {
        return Ok(BenchmarkResult::infeasible(Policy::B4, format!("offline cost LP is {:?}", sol.status)));
    }
    let mut out = BenchmarkResult::empty(Policy::B4);
    let mut c = s.c_init;
    for t in 1..=n {
        let row = PriceRow::of(s, t);
        let (p_d, p_r, m_b) = (sol.x[pd(t)], sol.x[pr(t)], sol.x[mb(t)]);
        let p_g = (p_d - p_r).max(0.0);
        out.c.push(c);
        out.dispatch.push(DispatchDecision { p_d, p_g, p_r, m_b, cost: cost_of(&row, p_g, m_b, dt) });
        c = sol.x[cn(t)];
    }
    out.cost = Some(sol.objective);
    Ok(out)
}

/// `p_d = p_check + alpha·(p_hat - p_check)` per slot.
pub fn alpha_dispatch(band: &FlexibilityBand, alpha: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(band.p_check.iter().zip(&band.p_hat).map(|(&lo, &hi)| lo + alpha * (hi - lo)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{PriceSeries, TimeGrid};

    fn one_ev(slots: usize, pv: f64) -> Scenario {
        let grid = TimeGrid::new(slots, 1.0, 1).unwrap();
        let mut prices = PriceSeries::constant(slots, 0.1, 0.0, 0.5, pv);
        for (k, p) in prices.pi_e.iter_mut().enumerate() {
            *p = 0.1 + 0.1 * k as f64;
        }
        Scenario {
            grid,
            prices,
            fleet: vec![ChargingTask {
                id: 0,
                t_arrive: 1,
                t_depart: slots,
                e_init: 10.0,
                e_target: 20.0,
                e_min: 2.0,
                e_max: 36.0,
                p_max: 10.0,
                eta_c: 1.0,
            }],
            v1: 20.0,
            v2: None,
            alpha: 0.5,
            c_quota: 80.0,
            c_init: 40.0,
            m_b_max: 20.0,
            seed: 0,
            penalty: None,
        }
    }

    fn band(lo: &[f64], hi: &[f64]) -> FlexibilityBand {
        FlexibilityBand { p_check: lo.to_vec(), p_hat: hi.to_vec(), ..Default::default() }
    }

    #[test]
    fn alpha_rule() {
        let b = band(&[2.0], &[10.0]);
        assert_eq!(alpha_dispatch(&b, 0.0).unwrap(), vec![2.0]);
        assert_eq!(alpha_dispatch(&b, 1.0).unwrap(), vec![10.0]);
        assert_eq!(alpha_dispatch(&b, 0.5).unwrap(), vec![6.0]);
        assert!(alpha_dispatch(&b, 1.5).is_err());
    }

    #[test]
    fn charge_first_band() {
        let s = one_ev(6, 0.0);
        let r = b1_charge_first(&s);
        assert_eq!(r.p_check, vec![10.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(r.p_hat, vec![10.0, 10.0, 6.0, 0.0, 0.0, 0.0]);
        assert!((r.value.unwrap() - (0.2 * 10.0 + 0.3 * 6.0)).abs() < 1e-12);
    }

    #[test]
    fn offline_flex_single_ev() {
        // With p_hat = p_check + f, the value is sum(pi·f) with sum(f) <= 26 - 10,
        // so f fills the priciest slots 5 and 4: 0.5·10 + 0.4·6.
        let s = one_ev(6, 0.0);
        let r = b2_offline_flex(&s).unwrap();
        assert!((r.value.unwrap() - 7.4).abs() < 1e-9, "{:?}", r.value);
        // Dropping the ordering lets the upper side take slots 5,4,3 and the
        // lower side slot 1.
        let bound = (0.5 * 10.0 + 0.4 * 10.0 + 0.3 * 6.0) - 0.1 * 10.0;
        assert!((b2_decoupled_bound(&s) - bound).abs() < 1e-9);
    }

    #[test]
    fn offline_cost_zero_prices() {
        let mut s = one_ev(4, 0.0);
        s.prices = PriceSeries::constant(4, 0.0, 0.0, 0.5, 0.0);
        let r = b4_offline_cost(&s, &band(&[1.0; 4], &[5.0; 4])).unwrap();
        assert!(r.cost.unwrap().abs() < 1e-12);
    }

    #[test]
    fn myopic_matches_offline_on_one_slot() {
        let mut s = one_ev(2, 3.0);
        s.grid = TimeGrid::new(1, 1.0, 1).unwrap();
        s.prices = PriceSeries::constant(1, 0.2, 0.05, 0.5, 3.0);
        s.fleet.clear();
        let b = band(&[5.0], &[9.0]);
        let my = b3_myopic(&s, &b);
        let off = b4_offline_cost(&s, &b).unwrap();
        assert!((my.cost.unwrap() - off.cost.unwrap()).abs() < 1e-9);
    }

    #[test]
    fn tight_quota_makes_myopic_infeasible() {
        let mut s = one_ev(6, 0.0);
        s.c_quota = 42.0;
        s.c_init = 40.0;
        s.m_b_max = 1.0;
        let b = band(&[10.0; 6], &[10.0; 6]);
        let r = b3_myopic(&s, &b);
        assert!(!r.feasible && r.cost.is_none());
        let m = b3_modified(&s, &b);
        assert!(m.feasible && m.cost.unwrap() > 0.0);
        assert!(m.c.iter().all(|&c| c <= s.c_quota + 1e-9));
    }
}

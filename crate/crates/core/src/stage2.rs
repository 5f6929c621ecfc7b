//! Stage 2: per-slot energy procurement and carbon trading against a
//! virtual carbon queue.
//!
//! The footprint `c` behaves like a battery: grid purchases charge it by
//! `rho·p_g·dt`, quota purchases discharge it by `m_b`. The queue
//! `H = c - phi` is the footprint shifted by a perturbation that keeps the
//! greedy per-slot policy inside `[0, c_quota]`.

use crate::error::{Error, Result};
use crate::stage1::{gap_check, FlexibilityBand, GapCheck, HorizonValue};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarbonLedger {
    pub c: f64,
    pub h: f64,
    pub phi: f64,
    pub c_quota: f64,
    pub m_b_max: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DispatchDecision {
    pub p_d: f64,
    pub p_g: f64,
    pub p_r: f64,
    pub m_b: f64,
    pub cost: f64,
}

/// Exogenous inputs of one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceRow {
    pub pi_e: f64,
    pub pi_c: f64,
    pub rho: f64,
    pub pv_max: f64,
}

impl PriceRow {
    pub fn of(s: &Scenario, t: usize) -> Self {
        let p = &s.prices;
        Self { pi_e: p.pi_e[t - 1], pi_c: p.pi_c[t - 1], rho: p.rho[t - 1], pv_max: p.pv_max[t - 1] }
    }
}

/// How the virtual queue advances between slots.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum HUpdate {
    /// `H = c - phi` with the current slot's `phi`.
    #[default]
    Anchored,
    /// `H <- H + rho·p_g·dt - m_b`, ignoring changes of `phi`.
    Recursive,
}

/// `phi = m_b_max + v2·pi_g_max/rho`.
pub fn perturbation_phi(m_b_max: f64, v2: f64, pi_g_max: f64, rho: f64) -> Result<f64> {
    if rho.is_nan() || rho <= 0.0 {
        return Err(Error::InvalidConfig(format!("carbon intensity must be positive, got {rho}")));
    }
    if v2 < 0.0 {
        return Err(Error::NegativeInput("v2"));
    }
    Ok(m_b_max + v2 * pi_g_max / rho)
}

fn v2_bound(headroom: f64, pi_c_max: f64, pi_e_max: f64, rho_min: f64) -> Result<f64> {
    if rho_min.is_nan() || rho_min <= 0.0 {
        return Err(Error::InvalidConfig("minimum carbon intensity must be positive".into()));
    }
    let denom = pi_c_max + pi_e_max / rho_min;
    if denom.is_nan() || denom <= 0.0 {
        return Err(Error::InvalidConfig("all prices are zero; v2 is unconstrained".into()));
    }
    Ok(headroom / denom)
}

/// `(c_quota - m_b_max)/(pi_c_max + pi_e_max/rho_min)`.
pub fn v2_max(c_quota: f64, m_b_max: f64, pi_c_max: f64, pi_e_max: f64, rho_min: f64) -> Result<f64> {
    if c_quota <= m_b_max {
        return Err(Error::Precondition(format!(
            "quota {c_quota} must exceed the per-trade cap {m_b_max}"
        )));
    }
    v2_bound(c_quota - m_b_max, pi_c_max, pi_e_max, rho_min)
}

/// Tighter bound that also reserves one slot of peak grid emissions.
pub fn v2_max_tight(
    c_quota: f64,
    m_b_max: f64,
    one_slot_emission: f64,
    pi_c_max: f64,
    pi_e_max: f64,
    rho_min: f64,
) -> Result<f64> {
    let headroom = c_quota - m_b_max - one_slot_emission;
    if headroom < 0.0 {
        return Err(Error::Precondition(format!(
            "peak slot emission {one_slot_emission} plus trade cap {m_b_max} exceeds quota {c_quota}"
        )));
    }
    v2_bound(headroom, pi_c_max, pi_e_max, rho_min)
}

/// `½·max{(rho_max·p_g_max·dt)², m_b_max²}`.
pub fn a2(rho_max: f64, p_g_max: f64, delta_t: f64, m_b_max: f64) -> f64 {
    0.5 * (rho_max * p_g_max * delta_t).powi(2).max(m_b_max * m_b_max)
}

/// Per-slot objective `H·(rho·p_g·dt - m_b) + v2·(pi_e·p_g·dt + pi_c·m_b)`.
pub fn stage2_objective(h: f64, v2: f64, row: &PriceRow, delta_t: f64, p_g: f64, m_b: f64) -> f64 {
    h * (row.rho * p_g * delta_t - m_b) + v2 * (row.pi_e * p_g * delta_t + row.pi_c * m_b)
}

/// Exact minimizer of the per-slot objective. Renewables are used first;
/// the dispatch is the best of the band ends and the renewable breakpoint,
/// with ties going to the larger dispatch.
#[allow(clippy::too_many_arguments)]
pub fn solve_stage2(
    p_check: f64,
    p_hat: f64,
    h: f64,
    row: &PriceRow,
    v2: f64,
    delta_t: f64,
    m_b_max: f64,
    trade: bool,
) -> Result<DispatchDecision> {
    if p_check > p_hat + 1e-9 * (1.0 + p_hat.abs()) {
        return Err(Error::EmptyBand { p_check, p_hat });
    }
    let p_hat = p_hat.max(p_check);
    let coeff_g = delta_t * (h * row.rho + v2 * row.pi_e);
    let coeff_m = v2 * row.pi_c - h;
    let m_b = if trade && coeff_m < 0.0 { m_b_max } else { 0.0 };

    let pv = row.pv_max;
    let candidates = [p_hat, pv.clamp(p_check, p_hat), p_check];
    let mut best = (f64::INFINITY, p_hat);
    for &p_d in &candidates {
        let f = coeff_g * (p_d - pv).max(0.0);
        if f < best.0 - 1e-15 * (1.0 + f.abs()) {
            best = (f, p_d);
        }
    }
    let p_d = best.1;
    let p_r = p_d.min(pv);
    let p_g = (p_d - p_r).max(0.0);
    Ok(DispatchDecision { p_d, p_g, p_r, m_b, cost: row.pi_e * p_g * delta_t + row.pi_c * m_b })
}

/// Advances the footprint and the virtual queue without any bound check.
pub fn advance_carbon(
    ledger: &CarbonLedger,
    d: &DispatchDecision,
    rho: f64,
    delta_t: f64,
    phi_next: f64,
    mode: HUpdate,
) -> CarbonLedger {
    let m_c = rho * d.p_g * delta_t - d.m_b;
    let c = ledger.c + m_c;
    let h = match mode {
        HUpdate::Anchored => c - phi_next,
        HUpdate::Recursive => ledger.h + m_c,
    };
    CarbonLedger { c, h, phi: phi_next, ..*ledger }
}

fn within_quota(c: f64, quota: f64) -> bool {
    let tol = 1e-9 * (1.0 + quota);
    c >= -tol && c <= quota + tol
}

/// [`advance_carbon`] that fails if the footprint leaves `[0, c_quota]`
/// after slot `t`.
pub fn update_carbon(
    ledger: &CarbonLedger,
    d: &DispatchDecision,
    rho: f64,
    delta_t: f64,
    phi_next: f64,
    mode: HUpdate,
    t: usize,
) -> Result<CarbonLedger> {
    let next = advance_carbon(ledger, d, rho, delta_t, phi_next, mode);
    if !within_quota(next.c, ledger.c_quota) {
        return Err(Error::QuotaViolation { t: t + 1, c: next.c, quota: ledger.c_quota });
    }
    Ok(next)
}

/// Time-averaged gap of the online cost over the offline one against
/// `a2/v2`. With `v2 = 0` the bound is infinite.
pub fn prop4_gap(online: HorizonValue, offline: HorizonValue, a2: f64, v2: f64, tol: f64) -> Result<GapCheck> {
    if online.slots != offline.slots {
        return Err(Error::MismatchedHorizon(online.slots, offline.slots));
    }
    let bound = if v2 > 0.0 { a2 / v2 } else { f64::INFINITY };
    Ok(gap_check(online.mean() - offline.mean(), bound, tol))
}

/// Startup quantities derived from the scenario and the Stage-1 band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage2Setup {
    pub v2: f64,
    pub v2_max: f64,
    pub v2_max_tight: f64,
    pub a2: f64,
    /// Largest per-kWh grid price.
    pub pi_g_max: f64,
    /// Largest possible grid purchase, the band's peak upper bound.
    pub p_g_max: f64,
    /// Peak one-slot emission `rho_max·p_g_max·dt`.
    pub peak_emission: f64,
}

impl Stage2Setup {
    /// Checks the quota precondition and resolves `v2` (half the tight
    /// bound when unset). A requested `v2` above the tight bound is rejected.
    pub fn new(s: &Scenario, band: &FlexibilityBand) -> Result<Self> {
        let p = &s.prices;
        let p_g_max = band.p_hat_max();
        let peak_emission = p.rho_max() * p_g_max * s.grid.delta_t;
        let loose = v2_max(s.c_quota, s.m_b_max, p.pi_c_max(), p.pi_e_max(), p.rho_min())?;
        let tight = v2_max_tight(s.c_quota, s.m_b_max, peak_emission, p.pi_c_max(), p.pi_e_max(), p.rho_min())?;
        let v2 = s.v2.unwrap_or(0.5 * tight);
        if v2 > tight * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!("v2 = {v2} exceeds the admissible maximum {tight}")));
        }
        Ok(Self {
            v2,
            v2_max: loose,
            v2_max_tight: tight,
            a2: a2(p.rho_max(), p_g_max, s.grid.delta_t, s.m_b_max),
            pi_g_max: p.pi_e_max(),
            p_g_max,
            peak_emission,
        })
    }

    pub fn phi(&self, s: &Scenario, t: usize) -> Result<f64> {
        perturbation_phi(s.m_b_max, self.v2, self.pi_g_max, s.prices.rho[t - 1])
    }
}

/// Stage-2 trajectory over the horizon. Ledger traces hold the state seen
/// at the start of each slot; `c_final` is the footprint after the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Outcome {
    pub decisions: Vec<DispatchDecision>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
    pub phi: Vec<f64>,
    pub c_final: f64,
    pub total_cost: f64,
    /// Slots after which the footprint was outside the quota. Always empty
    /// for the optimized dispatch, which aborts instead.
    pub quota_violations: Vec<usize>,
}

impl Stage2Outcome {
    pub fn trades(&self) -> usize {
        self.decisions.iter().filter(|d| d.m_b > 0.0).count()
    }

    pub fn c_max(&self) -> f64 {
        self.c.iter().copied().fold(self.c_final, f64::max)
    }

    pub fn cost(&self) -> HorizonValue {
        HorizonValue { total: self.total_cost, slots: self.decisions.len() }
    }
}

/// Runs the online Stage-2 controller. With `fixed_dispatch`, the aggregate
/// EV power is pinned to the given trajectory and only the procurement and
/// trading decisions are optimized. Quota excursions are then recorded in
/// `quota_violations`.
pub fn run_stage2(
    s: &Scenario,
    band: &FlexibilityBand,
    setup: &Stage2Setup,
    mode: HUpdate,
    fixed_dispatch: Option<&[f64]>,
) -> Result<Stage2Outcome> {
    let n = s.grid.slots;
    let phi1 = setup.phi(s, 1)?;
    let mut ledger = CarbonLedger { c: s.c_init, h: s.c_init - phi1, phi: phi1, c_quota: s.c_quota, m_b_max: s.m_b_max };
    let mut out = Stage2Outcome {
        decisions: Vec::with_capacity(n),
        c: Vec::with_capacity(n),
        h: Vec::with_capacity(n),
        phi: Vec::with_capacity(n),
        c_final: s.c_init,
        total_cost: 0.0,
        quota_violations: Vec::new(),
    };
    for t in 1..=n {
        let row = PriceRow::of(s, t);
        let (lo, hi) = match fixed_dispatch {
            Some(p) => (p[t - 1], p[t - 1]),
            None => (band.p_check[t - 1], band.p_hat[t - 1]),
        };
        let d = solve_stage2(lo, hi, ledger.h, &row, setup.v2, s.grid.delta_t, s.m_b_max, s.grid.is_carbon_slot(t))?;
        out.c.push(ledger.c);
        out.h.push(ledger.h);
        out.phi.push(ledger.phi);
        let phi_next = if t < n { setup.phi(s, t + 1)? } else { ledger.phi };
        ledger = match fixed_dispatch {
            None => update_carbon(&ledger, &d, row.rho, s.grid.delta_t, phi_next, mode, t)?,
            Some(_) => {
                let next = advance_carbon(&ledger, &d, row.rho, s.grid.delta_t, phi_next, mode);
                if !within_quota(next.c, s.c_quota) {
                    out.quota_violations.push(t);
                }
                next
            }
        };
        out.total_cost += d.cost;
        out.decisions.push(d);
    }
    out.c_final = ledger.c;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(pi_e: f64, pi_c: f64, rho: f64, pv: f64) -> PriceRow {
        PriceRow { pi_e, pi_c, rho, pv_max: pv }
    }

    #[test]
    fn phi_formula() {
        assert!((perturbation_phi(20.0, 10.0, 0.2, 0.5).unwrap() - 24.0).abs() < 1e-12);
        assert_eq!(perturbation_phi(20.0, 0.0, 0.2, 0.5).unwrap(), 20.0);
        let a = perturbation_phi(20.0, 10.0, 0.2, 5.0).unwrap();
        let b = perturbation_phi(20.0, 10.0, 0.2, 500.0).unwrap();
        assert!(a > b && b > 20.0);
        assert!(perturbation_phi(20.0, 1.0, 0.2, 0.0).is_err());
    }

    #[test]
    fn v2_bounds() {
        assert!((v2_max(80.0, 20.0, 0.05, 0.2, 0.4).unwrap() - 60.0 / 0.55).abs() < 1e-9);
        assert!(v2_max(20.0, 20.0, 0.05, 0.2, 0.4).is_err());
        assert!((v2_max(80.0, 20.0, 0.0, 1.0, 1.0).unwrap() - 60.0).abs() < 1e-12);
        let tight = v2_max_tight(80.0, 20.0, 10.0, 0.05, 0.2, 0.4).unwrap();
        assert!((tight - 50.0 / 0.55).abs() < 1e-9);
        assert!(v2_max_tight(80.0, 20.0, 61.0, 0.05, 0.2, 0.4).is_err());
    }

    #[test]
    fn trade_only_when_queue_is_high() {
        let d = solve_stage2(2.0, 10.0, -50.0, &row(0.1, 5.0, 0.5, 0.0), 10.0, 1.0, 20.0, true).unwrap();
        assert_eq!(d.m_b, 0.0);
        let d = solve_stage2(2.0, 10.0, 80.0, &row(0.1, 0.05, 0.5, 0.0), 10.0, 1.0, 20.0, true).unwrap();
        assert_eq!(d.m_b, 20.0);
        let d = solve_stage2(2.0, 10.0, 80.0, &row(0.1, 0.05, 0.5, 0.0), 10.0, 1.0, 20.0, false).unwrap();
        assert_eq!(d.m_b, 0.0);
    }

    #[test]
    fn ample_renewables_cover_the_upper_bound() {
        let d = solve_stage2(2.0, 10.0, 5.0, &row(0.1, 0.05, 0.5, 12.0), 10.0, 1.0, 20.0, false).unwrap();
        assert_eq!((d.p_d, d.p_g, d.p_r), (10.0, 0.0, 10.0));
        assert_eq!(d.cost, 0.0);
    }

    #[test]
    fn positive_grid_coefficient_uses_renewable_breakpoint() {
        let d = solve_stage2(2.0, 10.0, 5.0, &row(0.1, 0.05, 0.5, 4.0), 10.0, 1.0, 20.0, false).unwrap();
        assert_eq!((d.p_d, d.p_g, d.p_r), (4.0, 0.0, 4.0));
        let d = solve_stage2(6.0, 10.0, 5.0, &row(0.1, 0.05, 0.5, 4.0), 10.0, 1.0, 20.0, false).unwrap();
        assert_eq!((d.p_d, d.p_g, d.p_r), (6.0, 2.0, 4.0));
        assert!(solve_stage2(6.0, 5.0, 0.0, &row(0.1, 0.05, 0.5, 4.0), 1.0, 1.0, 20.0, false).is_err());
    }

    #[test]
    fn carbon_dynamics() {
        let l = CarbonLedger { c: 40.0, h: 0.0, phi: 40.0, c_quota: 80.0, m_b_max: 20.0 };
        let d = DispatchDecision { p_g: 10.0, ..Default::default() };
        assert_eq!(update_carbon(&l, &d, 0.5, 1.0, 40.0, HUpdate::Anchored, 1).unwrap().c, 45.0);
        let l = CarbonLedger { c: 62.0, ..l };
        let d = DispatchDecision { m_b: 20.0, ..Default::default() };
        let next = update_carbon(&l, &d, 0.5, 1.0, 30.0, HUpdate::Anchored, 1).unwrap();
        assert_eq!(next.c, 42.0);
        assert_eq!(next.h, 12.0);
        let rec = update_carbon(&l, &d, 0.5, 1.0, 30.0, HUpdate::Recursive, 1).unwrap();
        assert_eq!(rec.h, -20.0);
        let flat = update_carbon(&l, &DispatchDecision::default(), 0.5, 1.0, 30.0, HUpdate::Anchored, 1).unwrap();
        assert_eq!(flat.c, 62.0);
        let over = DispatchDecision { p_g: 100.0, ..Default::default() };
        assert!(matches!(
            update_carbon(&l, &over, 0.5, 1.0, 30.0, HUpdate::Anchored, 1),
            Err(Error::QuotaViolation { .. })
        ));
    }

    #[test]
    fn prop4_cases() {
        let v = HorizonValue { total: 3.0, slots: 2 };
        assert!(prop4_gap(v, v, 200.0, 10.0, 1e-6).unwrap().holds);
        let g = prop4_gap(v, HorizonValue { total: 2.0, slots: 2 }, 200.0, 0.0, 1e-6).unwrap();
        assert!(g.bound.is_infinite() && g.holds);
        assert!(prop4_gap(v, HorizonValue { total: 2.0, slots: 3 }, 1.0, 1.0, 1e-6).is_err());
    }
}

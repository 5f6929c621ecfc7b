//! Exogenous inputs: time grid, price/intensity/PV series and the EV fleet.

mod io;
mod synth;

pub use io::{load_fleet, load_scenario, load_series, save_fleet, save_scenario, save_series, ConfigFile};
pub use synth::{sample_fleet, synthesize_prices, SyntheticConfig, MAX_RESAMPLES};

use crate::error::{Error, Result};

/// Slot grid. Slots are numbered `1..=slots`; slot `t` covers hours
/// `[(t-1)·delta_t, t·delta_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub slots: usize,
    pub delta_t: f64,
    pub carbon_slots: Vec<usize>,
    pub delta_t_c: usize,
}

impl TimeGrid {
    /// Carbon trades may execute at `dtc, 2·dtc, ...` up to `slots`.
    pub fn new(slots: usize, delta_t: f64, delta_t_c: usize) -> Result<Self> {
        if delta_t_c == 0 {
            return Err(Error::InvalidConfig("carbon trading interval must be >= 1 slot".into()));
        }
        let carbon_slots = (1..=slots / delta_t_c).map(|k| k * delta_t_c).collect();
        let grid = Self { slots, delta_t, carbon_slots, delta_t_c };
        grid.validate()?;
        Ok(grid)
    }

    /// 144 ten-minute slots with hourly carbon trading.
    pub fn day_default() -> Self {
        Self::new(144, 1.0 / 6.0, 6).expect("default grid is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots == 0 {
            return Err(Error::InvalidConfig("grid needs at least one slot".into()));
        }
        if !(self.delta_t > 0.0 && self.delta_t.is_finite()) {
            return Err(Error::InvalidConfig(format!("delta_t must be positive, got {}", self.delta_t)));
        }
        if self.delta_t_c == 0 {
            return Err(Error::InvalidConfig("carbon trading interval must be >= 1 slot".into()));
        }
        for w in self.carbon_slots.windows(2) {
            if w[1] != w[0] + self.delta_t_c {
                return Err(Error::InvalidConfig("carbon slots must be evenly spaced by delta_t_c".into()));
            }
        }
        if self.carbon_slots.iter().any(|&t| t == 0 || t > self.slots) {
            return Err(Error::InvalidConfig("carbon slot outside 1..=T".into()));
        }
        Ok(())
    }

    pub fn is_carbon_slot(&self, t: usize) -> bool {
        self.carbon_slots.binary_search(&t).is_ok()
    }

    /// Hour of day at the middle of slot `t`.
    pub fn hour_mid(&self, t: usize) -> f64 {
        ((t as f64 - 0.5) * self.delta_t).rem_euclid(24.0)
    }
}

/// Per-slot exogenous series, indexed by `t - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub pi_e: Vec<f64>,
    pub pi_c: Vec<f64>,
    pub rho: Vec<f64>,
    pub pv_max: Vec<f64>,
}

impl PriceSeries {
    pub fn constant(slots: usize, pi_e: f64, pi_c: f64, rho: f64, pv_max: f64) -> Self {
        Self {
            pi_e: vec![pi_e; slots],
            pi_c: vec![pi_c; slots],
            rho: vec![rho; slots],
            pv_max: vec![pv_max; slots],
        }
    }

    pub fn len(&self) -> usize {
        self.pi_e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi_e.is_empty()
    }

    pub fn validate(&self, slots: usize) -> Result<()> {
        for len in [self.pi_e.len(), self.pi_c.len(), self.rho.len(), self.pv_max.len()] {
            if len != slots {
                return Err(Error::LengthMismatch { expected: slots, found: len });
            }
        }
        for i in 0..slots {
            let row = i + 1;
            let bad = |msg: &str| Err(Error::InvalidSeries { row, msg: msg.to_string() });
            if !(self.pi_e[i] >= 0.0 && self.pi_e[i].is_finite()) {
                return bad("pi_e must be nonnegative");
            }
            if !(self.pi_c[i] >= 0.0 && self.pi_c[i].is_finite()) {
                return bad("pi_c must be nonnegative");
            }
            if !(self.rho[i] > 0.0 && self.rho[i].is_finite()) {
                return bad("rho must be positive");
            }
            if !(self.pv_max[i] >= 0.0 && self.pv_max[i].is_finite()) {
                return bad("pv_max must be nonnegative");
            }
        }
        Ok(())
    }

    /// Combined unit value of flexibility at slot `t`: `pi_e + pi_c·rho`.
    pub fn combined(&self, t: usize) -> f64 {
        self.pi_e[t - 1] + self.pi_c[t - 1] * self.rho[t - 1]
    }

    pub fn pi_e_max(&self) -> f64 {
        self.pi_e.iter().copied().fold(0.0, f64::max)
    }

    pub fn pi_c_max(&self) -> f64 {
        self.pi_c.iter().copied().fold(0.0, f64::max)
    }

    pub fn rho_max(&self) -> f64 {
        self.rho.iter().copied().fold(0.0, f64::max)
    }

    pub fn rho_min(&self) -> f64 {
        self.rho.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// One EV's charging request. The EV is parked (and chargeable) during
/// slots `t_arrive..t_depart`, i.e. `t_depart - t_arrive` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargingTask {
    pub id: usize,
    pub t_arrive: usize,
    pub t_depart: usize,
    pub e_init: f64,
    pub e_target: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub p_max: f64,
    pub eta_c: f64,
}

impl ChargingTask {
    pub fn dwell(&self) -> usize {
        self.t_depart - self.t_arrive
    }

    pub fn is_present(&self, t: usize) -> bool {
        self.t_arrive <= t && t < self.t_depart
    }

    /// Energy gained per kW over one slot.
    pub fn gain(&self, delta_t: f64) -> f64 {
        self.eta_c * delta_t
    }

    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidTask { id: self.id, msg });
        let finite = [self.e_init, self.e_target, self.e_min, self.e_max, self.p_max, self.eta_c]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite field".into());
        }
        if self.t_arrive < 1 || self.t_arrive >= self.t_depart || self.t_depart > grid.slots {
            return bad(format!(
                "need 1 <= t_arrive < t_depart <= {}, got {}..{}",
                grid.slots, self.t_arrive, self.t_depart
            ));
        }
        if !(self.e_min <= self.e_init && self.e_init <= self.e_target && self.e_target <= self.e_max) {
            return bad("need e_min <= e_init <= e_target <= e_max".into());
        }
        if self.e_min < 0.0 {
            return bad("e_min must be nonnegative".into());
        }
        if !(self.eta_c > 0.0 && self.eta_c <= 1.0) {
            return bad("eta_c must lie in (0, 1]".into());
        }
        if self.p_max.is_nan() || self.p_max <= 0.0 {
            return bad("p_max must be positive".into());
        }
        let reachable = self.gain(grid.delta_t) * self.p_max * self.dwell() as f64;
        if self.e_target - self.e_init > reachable * (1.0 + 1e-12) {
            return bad(format!(
                "unsatisfiable: needs {} kWh but can take at most {} kWh",
                self.e_target - self.e_init,
                reachable
            ));
        }
        Ok(())
    }
}

/// A fully specified run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: TimeGrid,
    pub prices: PriceSeries,
    pub fleet: Vec<ChargingTask>,
    pub v1: f64,
    /// `None` selects half of the admissible maximum at run time.
    pub v2: Option<f64>,
    pub alpha: f64,
    pub c_quota: f64,
    pub c_init: f64,
    pub m_b_max: f64,
    pub seed: u64,
    /// Unserved-energy penalty of the relaxed myopic benchmark; `None`
    /// selects ten times the largest electricity price.
    pub penalty: Option<f64>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.prices.validate(self.grid.slots)?;
        let mut ids: Vec<usize> = self.fleet.iter().map(|v| v.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("duplicate task id".into()));
        }
        for task in &self.fleet {
            task.validate(&self.grid)?;
        }
        let cfg = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.v1 > 0.0 && self.v1.is_finite()) {
            return cfg(format!("v1 must be positive, got {}", self.v1));
        }
        if let Some(v2) = self.v2 {
            if !(v2 >= 0.0 && v2.is_finite()) {
                return cfg(format!("v2 must be nonnegative, got {v2}"));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return cfg(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.m_b_max > 0.0 && self.m_b_max.is_finite()) {
            return cfg(format!("m_b_max must be positive, got {}", self.m_b_max));
        }
        if !(0.0 <= self.c_init && self.c_init <= self.c_quota && self.c_quota.is_finite()) {
            return cfg(format!("need 0 <= c_init <= c_quota, got {} and {}", self.c_init, self.c_quota));
        }
        if let Some(l) = self.penalty {
            if !(l >= 0.0 && l.is_finite()) {
                return cfg(format!("penalty must be nonnegative, got {l}"));
            }
        }
        Ok(())
    }

    pub fn penalty_weight(&self) -> f64 {
        self.penalty.unwrap_or_else(|| 10.0 * self.prices.pi_e_max())
    }

    /// Stable 64-bit digest of every field, for reports.
    pub fn digest(&self) -> u64 {
        let mut h = Fnv::default();
        h.word(self.grid.slots as u64);
        h.float(self.grid.delta_t);
        h.word(self.grid.delta_t_c as u64);
        for s in [&self.prices.pi_e, &self.prices.pi_c, &self.prices.rho, &self.prices.pv_max] {
            s.iter().for_each(|&x| h.float(x));
        }
        for v in &self.fleet {
            h.word(v.id as u64);
            h.word(v.t_arrive as u64);
            h.word(v.t_depart as u64);
            for x in [v.e_init, v.e_target, v.e_min, v.e_max, v.p_max, v.eta_c] {
                h.float(x);
            }
        }
        for x in [self.v1, self.v2.unwrap_or(-1.0), self.alpha, self.c_quota, self.c_init, self.m_b_max] {
            h.float(x);
        }
        h.float(self.penalty.unwrap_or(-1.0));
        h.word(self.seed);
        h.0
    }
}

struct Fnv(u64);

impl Default for Fnv {
    fn default() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv {
    fn word(&mut self, w: u64) {
        for b in w.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn float(&mut self, x: f64) {
        self.word(x.to_bits());
    }
}

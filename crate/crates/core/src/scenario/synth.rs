//! Seeded synthetic fleets and price/intensity/PV profiles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ChargingTask, PriceSeries, Scenario, TimeGrid};
use crate::error::{Error, Result};

pub const MAX_RESAMPLES: usize = 1000;

/// (battery capacity kWh, max charging power kW)
const EV_CLASSES: [(f64, f64); 3] = [(24.0, 3.3), (40.0, 6.6), (60.0, 10.0)];
const ARRIVAL_HOUR: (f64, f64) = (9.0, 1.2);
const DEPARTURE_HOUR: (f64, f64) = (18.0, 1.2);
const ETA_C: f64 = 0.95;
const PV_KW_PER_EV: f64 = 0.8;

const FLEET_STREAM: u64 = 0;
const PRICE_STREAM: u64 = 1;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn hour_to_slot(hour: f64, delta_t: f64) -> i64 {
    (hour / delta_t + 0.5).floor() as i64
}

/// Draws `n` tasks. Each task is redrawn until it satisfies every task
/// invariant, up to [`MAX_RESAMPLES`] times.
pub fn sample_fleet(n: usize, grid: &TimeGrid, seed: u64) -> Result<Vec<ChargingTask>> {
    if n == 0 {
        return Err(Error::Sampling("fleet size must be at least 1".into()));
    }
    if grid.slots < 2 {
        return Err(Error::Sampling("grid needs at least two slots to park an EV".into()));
    }
    let mut rng = rng_for(seed, FLEET_STREAM);
    let arrive = Normal::new(ARRIVAL_HOUR.0, ARRIVAL_HOUR.1).expect("valid normal");
    let depart = Normal::new(DEPARTURE_HOUR.0, DEPARTURE_HOUR.1).expect("valid normal");
    let last = grid.slots as i64;

    let mut fleet = Vec::with_capacity(n);
    for id in 0..n {
        let mut accepted = None;
        for _ in 0..MAX_RESAMPLES {
            let ta = hour_to_slot(arrive.sample(&mut rng), grid.delta_t).clamp(1, last - 1);
            let td = hour_to_slot(depart.sample(&mut rng), grid.delta_t).clamp(ta + 1, last);
            let (cap, p_max) = EV_CLASSES[rng.random_range(0..EV_CLASSES.len())];
            let soc0: f64 = rng.random_range(0.3..=0.5);
            let task = ChargingTask {
                id,
                t_arrive: ta as usize,
                t_depart: td as usize,
                e_init: soc0 * cap,
                e_target: 0.5 * cap,
                e_min: 0.1 * cap,
                e_max: 0.9 * cap,
                p_max,
                eta_c: ETA_C,
            };
            if task.validate(grid).is_ok() {
                accepted = Some(task);
                break;
            }
        }
        match accepted {
            Some(t) => fleet.push(t),
            None => {
                return Err(Error::Sampling(format!(
                    "task {id} still invalid after {MAX_RESAMPLES} draws; grid too short for the fleet"
                )))
            }
        }
    }
    Ok(fleet)
}

fn bump(h: f64, centre: f64, width: f64) -> f64 {
    let d = (h - centre) / width;
    (-0.5 * d * d).exp()
}

/// Day-shaped synthetic profiles: a morning and an evening electricity
/// price peak with a midday dip, a mildly varying carbon price, grid
/// intensity between 0.25 and 0.45 kg/kWh that is lowest around noon, and a
/// half-sine PV profile between 06:00 and 18:00 with cloud noise.
pub fn synthesize_prices(grid: &TimeGrid, seed: u64, pv_peak: f64) -> PriceSeries {
    let mut rng = rng_for(seed, PRICE_STREAM);
    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    let n = grid.slots;
    let mut s = PriceSeries {
        pi_e: Vec::with_capacity(n),
        pi_c: Vec::with_capacity(n),
        rho: Vec::with_capacity(n),
        pv_max: Vec::with_capacity(n),
    };
    let tau = std::f64::consts::TAU;
    for t in 1..=n {
        let h = grid.hour_mid(t);
        let pe = 0.03 + 0.035 * bump(h, 7.5, 1.0) + 0.03 * bump(h, 19.0, 1.5) - 0.01 * bump(h, 13.0, 2.0)
            + 0.002 * noise.sample(&mut rng);
        let pc = 0.03 + 0.006 * (tau * (h - 10.0) / 24.0).sin() + 0.001 * noise.sample(&mut rng);
        let rho = 0.36 + 0.05 * (tau * (h - 1.0) / 24.0).cos() + 0.01 * noise.sample(&mut rng);
        let sun = (std::f64::consts::PI * (h - 6.0) / 12.0).sin().max(0.0);
        let cloud: f64 = rng.random_range(0.85..=1.0);
        s.pi_e.push(pe.max(0.005));
        s.pi_c.push(pc.max(0.0));
        s.rho.push(rho.clamp(0.25, 0.45));
        s.pv_max.push(if (6.0..18.0).contains(&h) { pv_peak * sun * cloud } else { 0.0 });
    }
    s
}

/// Scalar settings of a run. Data series that are not loaded from files
/// are synthesized from `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub slots: usize,
    /// Slot length in hours; `None` spreads one day over `slots`.
    pub delta_t: Option<f64>,
    pub dtc: usize,
    pub evs: usize,
    pub seed: u64,
    pub v1: f64,
    pub v2: Option<f64>,
    pub alpha: f64,
    pub c_quota: f64,
    pub c_init: f64,
    pub m_b_max: f64,
    /// PV peak in kW; `None` scales with the fleet size.
    pub pv_peak: Option<f64>,
    pub penalty: Option<f64>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            slots: 144,
            delta_t: None,
            dtc: 6,
            evs: 100,
            seed: 1,
            v1: 20.0,
            v2: None,
            alpha: 0.5,
            c_quota: 80.0,
            c_init: 40.0,
            m_b_max: 20.0,
            pv_peak: None,
            penalty: None,
        }
    }
}

impl SyntheticConfig {
    pub fn grid(&self) -> Result<TimeGrid> {
        if self.slots == 0 {
            return Err(Error::InvalidConfig("grid needs at least one slot".into()));
        }
        TimeGrid::new(self.slots, self.delta_t.unwrap_or(24.0 / self.slots as f64), self.dtc)
    }

    pub fn pv_peak_kw(&self) -> f64 {
        self.pv_peak.unwrap_or(PV_KW_PER_EV * self.evs as f64)
    }

    pub fn build(&self) -> Result<Scenario> {
        let grid = self.grid()?;
        let prices = synthesize_prices(&grid, self.seed, self.pv_peak_kw());
        let fleet = sample_fleet(self.evs, &grid, self.seed)?;
        let s = Scenario {
            grid,
            prices,
            fleet,
            v1: self.v1,
            v2: self.v2,
            alpha: self.alpha,
            c_quota: self.c_quota,
            c_init: self.c_init,
            m_b_max: self.m_b_max,
            seed: self.seed,
            penalty: self.penalty,
        };
        s.validate()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_evs_rejected() {
        assert!(sample_fleet(0, &TimeGrid::day_default(), 1).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let g = TimeGrid::day_default();
        assert_eq!(sample_fleet(1, &g, 42).unwrap(), sample_fleet(1, &g, 42).unwrap());
        assert_ne!(sample_fleet(5, &g, 42).unwrap(), sample_fleet(5, &g, 43).unwrap());
        assert_eq!(synthesize_prices(&g, 3, 100.0), synthesize_prices(&g, 3, 100.0));
    }

    #[test]
    fn default_fleet_shape() {
        let g = TimeGrid::day_default();
        let fleet = sample_fleet(100, &g, 1).unwrap();
        assert_eq!(fleet.len(), 100);
        for v in &fleet {
            v.validate(&g).unwrap();
            let cap = v.e_target / 0.5;
            assert!(EV_CLASSES.iter().any(|&(c, p)| (c - cap).abs() < 1e-9 && p == v.p_max));
            assert!(v.e_init >= 0.3 * cap - 1e-9 && v.e_init <= 0.5 * cap + 1e-9);
        }
        let mean = fleet.iter().map(|v| v.t_arrive as f64).sum::<f64>() / 100.0;
        assert!((mean - 54.0).abs() < 3.0, "mean arrival slot {mean}");
    }

    #[test]
    fn prices_are_valid() {
        let g = TimeGrid::day_default();
        let s = synthesize_prices(&g, 9, 250.0);
        s.validate(144).unwrap();
        assert_eq!(s.pv_max[0], 0.0);
        assert!(s.pv_max[72] > 200.0);
    }
}

//! CSV series/fleet files and the flat `key = value` scenario config.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{sample_fleet, synthesize_prices, ChargingTask, PriceSeries, Scenario, SyntheticConfig, TimeGrid};
use crate::error::{Error, Result};

const SERIES_HEADER: [&str; 5] = ["t", "pi_e", "pi_c", "rho", "pv_max"];
const FLEET_HEADER: [&str; 9] =
    ["id", "t_arrive", "t_depart", "e_init", "e_target", "e_min", "e_max", "p_max", "eta_c"];

fn open_csv(path: &Path, header: &[&str]) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let found = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header `{}`, found `{}`", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        });
    }
    Ok(rdr)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse { line, msg: format!("{}: {e}", path.display()) }
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| Error::Parse { line, msg: format!("cannot parse `{raw}` in column {}", i + 1) })
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn load_series(path: impl AsRef<Path>, grid: &TimeGrid) -> Result<PriceSeries> {
    let path = path.as_ref();
    let mut rdr = open_csv(path, &SERIES_HEADER)?;
    let mut s = PriceSeries { pi_e: vec![], pi_c: vec![], rho: vec![], pv_max: vec![] };
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = k + 2;
        let t: usize = field(&rec, 0, line)?;
        if t != k + 1 {
            return Err(Error::Parse { line, msg: format!("expected slot {}, found {t}", k + 1) });
        }
        s.pi_e.push(field(&rec, 1, line)?);
        s.pi_c.push(field(&rec, 2, line)?);
        s.rho.push(field(&rec, 3, line)?);
        s.pv_max.push(field(&rec, 4, line)?);
    }
    s.validate(grid.slots)?;
    Ok(s)
}

pub fn save_series(path: impl AsRef<Path>, series: &PriceSeries) -> Result<()> {
    let mut out = SERIES_HEADER.join(",");
    out.push('\n');
    for i in 0..series.len() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            i + 1,
            series.pi_e[i],
            series.pi_c[i],
            series.rho[i],
            series.pv_max[i]
        ));
    }
    write_file(path.as_ref(), &out)
}

pub fn load_fleet(path: impl AsRef<Path>, grid: &TimeGrid) -> Result<Vec<ChargingTask>> {
    let path = path.as_ref();
    let mut rdr = open_csv(path, &FLEET_HEADER)?;
    let mut fleet = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = k + 2;
        let task = ChargingTask {
            id: field(&rec, 0, line)?,
            t_arrive: field(&rec, 1, line)?,
            t_depart: field(&rec, 2, line)?,
            e_init: field(&rec, 3, line)?,
            e_target: field(&rec, 4, line)?,
            e_min: field(&rec, 5, line)?,
            e_max: field(&rec, 6, line)?,
            p_max: field(&rec, 7, line)?,
            eta_c: field(&rec, 8, line)?,
        };
        task.validate(grid)?;
        fleet.push(task);
    }
    Ok(fleet)
}

pub fn save_fleet(path: impl AsRef<Path>, fleet: &[ChargingTask]) -> Result<()> {
    let mut out = FLEET_HEADER.join(",");
    out.push('\n');
    for v in fleet {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            v.id, v.t_arrive, v.t_depart, v.e_init, v.e_target, v.e_min, v.e_max, v.p_max, v.eta_c
        ));
    }
    write_file(path.as_ref(), &out)
}

/// Parsed config: scalar settings plus optional data files. Missing files
/// are synthesized from the seed.
#[derive(Debug, Clone)]
pub struct ConfigFile {
    pub settings: SyntheticConfig,
    pub prices: Option<PathBuf>,
    pub fleet: Option<PathBuf>,
}

pub(crate) fn parse_config(text: &str, base: &Path) -> Result<ConfigFile> {
    let mut map = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: k + 1, msg: format!("expected `key = value`, got `{line}`") })?;
        if map.insert(key.trim().to_string(), (k + 1, value.trim().to_string())).is_some() {
            return Err(Error::Parse { line: k + 1, msg: format!("duplicate key `{}`", key.trim()) });
        }
    }

    let mut cfg = SyntheticConfig::default();
    let mut prices = None;
    let mut fleet = None;
    for (key, (line, value)) in map {
        let num = |v: &str| -> Result<f64> {
            v.parse().map_err(|_| Error::Parse { line, msg: format!("`{key}` expects a number, got `{v}`") })
        };
        let int = |v: &str| -> Result<u64> {
            v.parse().map_err(|_| Error::Parse { line, msg: format!("`{key}` expects an integer, got `{v}`") })
        };
        match key.as_str() {
            "slots" => cfg.slots = int(&value)? as usize,
            "delta_t" => cfg.delta_t = Some(num(&value)?),
            "dtc" => cfg.dtc = int(&value)? as usize,
            "evs" => cfg.evs = int(&value)? as usize,
            "seed" => cfg.seed = int(&value)?,
            "v1" => cfg.v1 = num(&value)?,
            "v2" => cfg.v2 = Some(num(&value)?),
            "alpha" => cfg.alpha = num(&value)?,
            "c_quota" => cfg.c_quota = num(&value)?,
            "c_init" => cfg.c_init = num(&value)?,
            "m_b_max" => cfg.m_b_max = num(&value)?,
            "pv_peak" => cfg.pv_peak = Some(num(&value)?),
            "penalty" => cfg.penalty = Some(num(&value)?),
            "prices" => prices = Some(base.join(&value)),
            "fleet" => fleet = Some(base.join(&value)),
            _ => return Err(Error::Parse { line, msg: format!("unknown key `{key}`") }),
        }
    }
    Ok(ConfigFile { settings: cfg, prices, fleet })
}

impl ConfigFile {
    /// Settings only, with nothing loaded from disk.
    pub fn synthetic(settings: SyntheticConfig) -> Self {
        Self { settings, prices: None, fleet: None }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        parse_config(&text, base)
    }

    pub fn into_scenario(self) -> Result<Scenario> {
        let s = &self.settings;
        let grid = s.grid()?;
        let prices = match &self.prices {
            Some(p) => load_series(p, &grid)?,
            None => synthesize_prices(&grid, s.seed, s.pv_peak_kw()),
        };
        let fleet = match &self.fleet {
            Some(p) => load_fleet(p, &grid)?,
            None => sample_fleet(s.evs, &grid, s.seed)?,
        };
        let scenario = Scenario {
            grid,
            prices,
            fleet,
            v1: s.v1,
            v2: s.v2,
            alpha: s.alpha,
            c_quota: s.c_quota,
            c_init: s.c_init,
            m_b_max: s.m_b_max,
            seed: s.seed,
            penalty: s.penalty,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Reads a scenario config; relative data paths resolve against the
/// config's directory.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    ConfigFile::read(path.as_ref())?.into_scenario()
}

/// Writes `<stem>.cfg`, `<stem>_prices.csv` and `<stem>_fleet.csv` into
/// `dir` and returns the config path.
pub fn save_scenario(scenario: &Scenario, dir: impl AsRef<Path>, stem: &str) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let prices = format!("{stem}_prices.csv");
    let fleet = format!("{stem}_fleet.csv");
    save_series(dir.join(&prices), &scenario.prices)?;
    save_fleet(dir.join(&fleet), &scenario.fleet)?;

    let g = &scenario.grid;
    let mut out = String::new();
    out.push_str(&format!("slots = {}\ndelta_t = {}\ndtc = {}\n", g.slots, g.delta_t, g.delta_t_c));
    out.push_str(&format!("seed = {}\nv1 = {}\n", scenario.seed, scenario.v1));
    if let Some(v2) = scenario.v2 {
        out.push_str(&format!("v2 = {v2}\n"));
    }
    out.push_str(&format!(
        "alpha = {}\nc_quota = {}\nc_init = {}\nm_b_max = {}\n",
        scenario.alpha, scenario.c_quota, scenario.c_init, scenario.m_b_max
    ));
    if let Some(l) = scenario.penalty {
        out.push_str(&format!("penalty = {l}\n"));
    }
    out.push_str(&format!("prices = {prices}\nfleet = {fleet}\n"));
    let path = dir.join(format!("{stem}.cfg"));
    write_file(&path, &out)?;
    Ok(path)
}

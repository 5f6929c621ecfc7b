//! Batch runner: one full run with its checks and traces, benchmark rows,
//! and parameter sweeps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::benchmarks::{
    b1_charge_first, b2_decoupled_bound, b2_offline_flex, b3_modified, b3_myopic, b4_offline_cost,
    group_form_value, BenchmarkResult, Policy,
};
use crate::engine::{run_two_stage, EngineOptions, RunOutcome};
use crate::error::{Error, Result};
use crate::scenario::{Scenario, TimeGrid};
use crate::stage1::{prop2_gap, FlexibilityBand, GapCheck, HorizonValue};
use crate::stage2::{prop4_gap, Stage2Setup};

/// Tolerance of the optimality-gap checks.
pub const GAP_TOL: f64 = 1e-6;
/// Tolerance of the disaggregation checks.
pub const DISAGG_TOL: f64 = 1e-9;

/// Gap of an online quantity against an offline reference.
#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub online: f64,
    pub offline: Option<f64>,
    /// `None` when the bound is infinite.
    pub check: Option<GapCheck>,
    pub source: String,
}

impl GapReport {
    pub fn pass(&self) -> bool {
        self.check.is_some_and(|c| c.holds)
    }

    fn describe(&self) -> String {
        match (&self.offline, &self.check) {
            (Some(off), Some(c)) => format!(
                "online {:.6} offline {:.6} gap {:.3e} bound {} ({})",
                self.online,
                off,
                c.gap,
                if c.bound.is_finite() { format!("{:.3e}", c.bound) } else { "unbounded".into() },
                self.source
            ),
            (Some(off), None) => {
                format!("online {:.6} offline {:.6} bound unbounded ({})", self.online, off, self.source)
            }
            _ => format!("online {:.6} ({})", self.online, self.source),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub digest: u64,
    pub flexibility_value: f64,
    pub cost: f64,
    pub trades: usize,
    /// Smallest `e(t_depart) - e_target` in kWh.
    pub min_target_margin: f64,
    pub p1_violations: usize,
    pub p1_residual: f64,
    pub p2: GapReport,
    /// Value of the group-level offline relaxation, for reference.
    pub p2_group_form: Option<f64>,
    pub c_min: f64,
    pub c_max: f64,
    pub c_quota: f64,
    pub p4: GapReport,
    pub setup: Stage2Setup,
    pub wall_clock: Duration,
}

impl RunReport {
    pub fn p1_pass(&self) -> bool {
        self.p1_violations == 0 && self.p1_residual <= DISAGG_TOL
    }

    pub fn p3_pass(&self) -> bool {
        let tol = DISAGG_TOL * (1.0 + self.c_quota);
        self.c_min >= -tol && self.c_max <= self.c_quota + tol
    }

    /// P4 passes vacuously when its bound is infinite.
    pub fn p4_pass(&self) -> bool {
        self.p4.pass() || (self.p4.offline.is_some() && self.p4.check.is_none())
    }

    pub fn all_pass(&self) -> bool {
        self.p1_pass() && self.p2.pass() && self.p3_pass() && self.p4_pass()
    }

    /// Report fields in output order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let verdict = |ok: bool| if ok { "pass" } else { "FAIL" };
        let st = &self.setup;
        let mut e = vec![
            ("scenario_digest", format!("{:016x}", self.digest)),
            ("v2", format!("{:.6}", st.v2)),
            ("v2_max", format!("{:.6}", st.v2_max)),
            ("v2_max_tight", format!("{:.6}", st.v2_max_tight)),
            ("a2", format!("{:.6}", st.a2)),
            (
                "quota_precondition",
                format!("pass (quota {} above trade cap plus peak emission {:.4})", self.c_quota, st.peak_emission),
            ),
            ("flexibility_value", format!("{:.6}", self.flexibility_value)),
            ("total_cost", format!("{:.6}", self.cost)),
            ("trades", self.trades.to_string()),
            ("min_target_margin_kwh", format!("{:.6}", self.min_target_margin)),
            (
                "p1_disaggregation",
                format!(
                    "{} (violations {}, residual {:.3e})",
                    verdict(self.p1_pass()),
                    self.p1_violations,
                    self.p1_residual
                ),
            ),
            ("p2_flexibility_gap", format!("{} ({})", verdict(self.p2.pass()), self.p2.describe())),
        ];
        if let Some(g) = self.p2_group_form {
            e.push(("p2_group_relaxation", format!("{g:.6}")));
        }
        e.push((
            "p3_quota",
            format!("{} (c in [{:.4}, {:.4}], quota {})", verdict(self.p3_pass()), self.c_min, self.c_max, self.c_quota),
        ));
        let p4 = if self.p4.check.is_none() && self.p4.offline.is_some() {
            "unbounded".to_string()
        } else {
            verdict(self.p4_pass()).to_string()
        };
        e.push(("p4_cost_gap", format!("{p4} ({})", self.p4.describe())));
        e.push(("wall_clock_s", format!("{:.3}", self.wall_clock.as_secs_f64())));
        e
    }

    /// `key = value` lines.
    pub fn render(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Two-column `key,value` CSV of the same fields.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::InvalidConfig(format!("report csv: {e}"));
        w.write_record(["key", "value"]).map_err(err)?;
        for (k, v) in self.entries() {
            w.write_record([k, v.as_str()]).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(format!("report csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Offline flexibility reference: the exact LP when it fits, otherwise the
/// per-EV upper bound.
fn offline_flexibility(s: &Scenario) -> Result<(f64, String)> {
    match b2_offline_flex(s) {
        Ok(r) => Ok((r.value.unwrap_or(f64::NAN), "offline lp".into())),
        Err(Error::Lp(why)) => Ok((b2_decoupled_bound(s), format!("per-ev upper bound; {why}"))),
        Err(e) => Err(e),
    }
}

fn p2_report(s: &Scenario, out: &RunOutcome) -> Result<GapReport> {
    let (offline, source) = offline_flexibility(s)?;
    let slots = s.grid.slots;
    let check = prop2_gap(
        out.value,
        HorizonValue { total: offline, slots },
        out.stage1.drift.a1,
        s.v1,
        GAP_TOL,
    )?;
    Ok(GapReport { online: out.value.total, offline: Some(offline), check: Some(check), source })
}

fn p4_report(s: &Scenario, out: &RunOutcome) -> Result<GapReport> {
    let online = out.stage2.total_cost;
    let b4 = match b4_offline_cost(s, &out.stage1.band) {
        Ok(b) => b,
        Err(Error::Lp(why)) => {
            return Ok(GapReport { online, offline: None, check: None, source: why });
        }
        Err(e) => return Err(e),
    };
    let Some(offline) = b4.cost else {
        let why = b4.diagnostics.join("; ");
        return Ok(GapReport { online, offline: None, check: None, source: why });
    };
    let slots = s.grid.slots;
    let v2 = out.setup.v2;
    let check = if v2 > 0.0 {
        Some(prop4_gap(out.stage2.cost(), HorizonValue { total: offline, slots }, out.setup.a2, v2, GAP_TOL)?)
    } else {
        None
    };
    let source = if check.is_some() { "offline lp" } else { "offline lp; v2 = 0" };
    Ok(GapReport { online, offline: Some(offline), check, source: source.into() })
}

/// Runs both stages and every check.
pub fn run(s: &Scenario, opts: &EngineOptions) -> Result<(RunOutcome, RunReport)> {
    let start = Instant::now();
    let out = run_two_stage(s, opts)?;
    let p2 = p2_report(s, &out)?;
    let p2_group_form = group_form_value(s).ok();
    let p4 = p4_report(s, &out)?;
    let c = &out.stage2.c;
    let c_final = out.stage2.c_final;
    let report = RunReport {
        digest: s.digest(),
        flexibility_value: out.value.total,
        cost: out.stage2.total_cost,
        trades: out.stage2.trades(),
        min_target_margin: out.min_target_margin(s),
        p1_violations: out.violations.len(),
        p1_residual: out.aggregation_residual,
        p2,
        p2_group_form,
        c_min: c.iter().copied().fold(c_final, f64::min),
        c_max: out.stage2.c_max(),
        c_quota: s.c_quota,
        p4,
        setup: out.setup,
        wall_clock: start.elapsed(),
    };
    Ok((out, report))
}

/// Row of the proposed policy in a comparison table.
pub fn proposed_result(out: &RunOutcome) -> BenchmarkResult {
    BenchmarkResult {
        policy: Policy::Proposed,
        feasible: true,
        value: Some(out.value.total),
        cost: Some(out.stage2.total_cost),
        p_hat: out.stage1.band.p_hat.clone(),
        p_check: out.stage1.band.p_check.clone(),
        dispatch: out.stage2.decisions.clone(),
        c: out.stage2.c.clone(),
        diagnostics: Vec::new(),
    }
}

/// Evaluates one comparison policy. Cost policies use the given band.
pub fn run_benchmark(s: &Scenario, policy: Policy, band: &FlexibilityBand) -> Result<BenchmarkResult> {
    match policy {
        Policy::B1 => Ok(b1_charge_first(s)),
        Policy::B2 => match b2_offline_flex(s) {
            Err(Error::Lp(why)) => Ok(BenchmarkResult {
                value: Some(b2_decoupled_bound(s)),
                diagnostics: vec![format!("per-ev upper bound reported; {why}")],
                ..BenchmarkResult::empty(Policy::B2)
            }),
            r => r,
        },
        Policy::B3 => Ok(b3_myopic(s, band)),
        Policy::B3Mod => Ok(b3_modified(s, band)),
        Policy::B4 => b4_offline_cost(s, band),
        Policy::Proposed => {
            let out = run_two_stage(s, &EngineOptions::default())?;
            Ok(proposed_result(&out))
        }
    }
}

fn opt_cell(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

fn status(r: &BenchmarkResult) -> &'static str {
    if r.feasible {
        "ok"
    } else {
        "infeasible"
    }
}

/// Relative change of the proposed policy against `x`, when both exist.
fn change(proposed: Option<f64>, x: Option<f64>) -> Option<f64> {
    match (proposed, x) {
        (Some(p), Some(x)) if x != 0.0 => Some((p - x) / x.abs()),
        _ => None,
    }
}

fn pct_cell(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{:+.2}%", 100.0 * v))
}

/// Per row: `(value change, cost change)` of the proposed policy against it.
fn changes(rows: &[BenchmarkResult]) -> Vec<(Option<f64>, Option<f64>)> {
    let prop = rows.iter().find(|r| r.policy == Policy::Proposed);
    rows.iter()
        .map(|r| match prop {
            Some(p) if r.policy != Policy::Proposed => (change(p.value, r.value), change(p.cost, r.cost)),
            _ => (None, None),
        })
        .collect()
}

pub fn comparison_csv(rows: &[BenchmarkResult]) -> String {
    let mut s = String::from("policy,status,flexibility_value,cost,proposed_value_change,proposed_cost_change,note\n");
    for (r, (dv, dc)) in rows.iter().zip(changes(rows)) {
        let note = r.diagnostics.join("; ").replace(',', ";");
        let cell = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.policy,
            status(r),
            opt_cell(r.value),
            opt_cell(r.cost),
            cell(dv),
            cell(dc),
            note
        );
    }
    s
}

/// Aligned table. The change columns give the proposed policy's relative
/// difference from each row.
pub fn comparison_text(rows: &[BenchmarkResult]) -> String {
    let mut s = format!(
        "{:<10} {:<11} {:>16} {:>14} {:>12} {:>12}\n",
        "policy", "status", "flex value", "cost", "value chg", "cost chg"
    );
    for (r, (dv, dc)) in rows.iter().zip(changes(rows)) {
        let _ = writeln!(
            s,
            "{:<10} {:<11} {:>16} {:>14} {:>12} {:>12}",
            r.policy.name(),
            status(r),
            opt_cell(r.value),
            opt_cell(r.cost),
            pct_cell(dv),
            pct_cell(dc)
        );
    }
    s
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, std::io::Error::other(e))
}

/// Writes `band.csv`, `dispatch.csv` and, on request, `ev.csv` into `dir`.
pub fn write_traces(dir: &Path, s: &Scenario, out: &RunOutcome, per_ev: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let band = &out.stage1.band;

    let path = dir.join("band.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["t", "g", "x_check", "x_hat", "p_check", "p_hat", "F_t"]).map_err(csv_err(&path))?;
    for t in 1..=band.slots() {
        for g in 0..band.x_hat.len() {
            let k = t - 1;
            w.write_record([
                t.to_string(),
                (g + 1).to_string(),
                band.x_check[g][k].to_string(),
                band.x_hat[g][k].to_string(),
                band.p_check[k].to_string(),
                band.p_hat[k].to_string(),
                band.f_value[k].to_string(),
            ])
            .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("dispatch.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["t", "p_d", "p_g", "p_r", "m_b", "c", "H", "phi", "cost"]).map_err(csv_err(&path))?;
    let st = &out.stage2;
    for (k, d) in st.decisions.iter().enumerate() {
        w.write_record([
            (k + 1).to_string(),
            d.p_d.to_string(),
            d.p_g.to_string(),
            d.p_r.to_string(),
            d.m_b.to_string(),
            st.c[k].to_string(),
            st.h[k].to_string(),
            st.phi[k].to_string(),
            d.cost.to_string(),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    if per_ev {
        let path = dir.join("ev.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["t", "ev_id", "p_c", "e"]).map_err(csv_err(&path))?;
        for t in 1..=s.grid.slots {
            for (i, v) in s.fleet.iter().enumerate() {
                if v.is_present(t) {
                    w.write_record([
                        t.to_string(),
                        v.id.to_string(),
                        out.ev.p_c[i][t - 1].to_string(),
                        out.ev.e[i][t - 1].to_string(),
                    ])
                    .map_err(csv_err(&path))?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn write_report(dir: &Path, report: &RunReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("report.txt"), &report.render())?;
    write(&dir.join("report.csv"), &report.to_csv()?)
}

pub fn write_comparison(dir: &Path, rows: &[BenchmarkResult]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("comparison.csv"), &comparison_csv(rows))?;
    write(&dir.join("comparison.txt"), &comparison_text(rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    V1,
    V2,
    Alpha,
    Dtc,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::V1 => "v1",
            SweepParam::V2 => "v2",
            SweepParam::Alpha => "alpha",
            SweepParam::Dtc => "dtc",
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepParam::V1, SweepParam::V2, SweepParam::Alpha, SweepParam::Dtc]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown sweep parameter `{s}`")))
    }
}

/// One run of a sweep. A run that aborts keeps its error in `status`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: f64,
    pub flexibility_value: f64,
    pub cost: f64,
    pub trades: usize,
    pub c_max: f64,
    /// Terminal energy over the battery limit, `e/e_max`.
    pub fill_min: f64,
    pub fill_mean: f64,
    pub fill_max: f64,
    pub served_kwh: f64,
    pub quota_violations: usize,
    pub status: String,
}

impl SweepRow {
    fn failed(param: f64, why: String) -> Self {
        Self {
            param,
            flexibility_value: f64::NAN,
            cost: f64::NAN,
            trades: 0,
            c_max: f64::NAN,
            fill_min: f64::NAN,
            fill_mean: f64::NAN,
            fill_max: f64::NAN,
            served_kwh: f64::NAN,
            quota_violations: 0,
            status: why,
        }
    }

    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

fn apply(s: &mut Scenario, param: SweepParam, x: f64) -> Result<()> {
    match param {
        SweepParam::V1 => s.v1 = x,
        SweepParam::V2 => s.v2 = Some(x),
        SweepParam::Alpha => s.alpha = x,
        SweepParam::Dtc => {
            if !(x >= 1.0 && x.fract() == 0.0) {
                return Err(Error::InvalidConfig(format!("dtc must be a positive integer, got {x}")));
            }
            s.grid = TimeGrid::new(s.grid.slots, s.grid.delta_t, x as usize)?;
        }
    }
    Ok(())
}

/// One run per value on a fixed scenario.
pub fn sweep(base: &Scenario, param: SweepParam, values: &[f64], opts: &EngineOptions) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one value".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &x in values {
        let mut s = base.clone();
        apply(&mut s, param, x)?;
        let out = match run_two_stage(&s, opts) {
            Ok(o) => o,
            Err(e) => {
                rows.push(SweepRow::failed(x, e.to_string()));
                continue;
            }
        };
        let fill = out.terminal_fill(&s);
        rows.push(SweepRow {
            param: x,
            flexibility_value: out.value.total,
            cost: out.stage2.total_cost,
            trades: out.stage2.trades(),
            c_max: out.stage2.c_max(),
            fill_min: fill.iter().copied().fold(f64::INFINITY, f64::min),
            fill_mean: fill.iter().sum::<f64>() / fill.len() as f64,
            fill_max: fill.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            served_kwh: out.served_energy(&s),
            quota_violations: out.stage2.quota_violations.len(),
            status: "ok".into(),
        });
    }
    Ok(rows)
}

pub fn sweep_csv(param: SweepParam, rows: &[SweepRow]) -> String {
    let mut s = format!(
        "{},flexibility_value,cost,trades,c_max,fill_min,fill_mean,fill_max,served_kwh,quota_violations,status\n",
        param.name()
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.param,
            r.flexibility_value,
            r.cost,
            r.trades,
            r.c_max,
            r.fill_min,
            r.fill_mean,
            r.fill_max,
            r.served_kwh,
            r.quota_violations,
            r.status.replace(',', ";")
        );
    }
    s
}

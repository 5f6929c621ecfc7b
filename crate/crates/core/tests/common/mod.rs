#![allow(dead_code)]

use evcs_core::lpsolve::{Direction, LinearProgram, RowSense};
use evcs_core::scenario::{ChargingTask, PriceSeries, Scenario, TimeGrid};
use evcs_core::stage1::{group_objective, GroupBox};
use evcs_core::stage2::{stage2_objective, PriceRow};

/// Best objective of one group's subproblem over a 101 x 101 lattice that
/// contains every corner of the feasible polygon.
pub fn stage1_lattice(q_hat: f64, q_check: f64, price: f64, v1: f64, b: &GroupBox) -> f64 {
    let lo = b.floor.min(b.cap_hat);
    let hi = b.cap_check.min(b.cap_hat).max(lo);
    let top = b.cap_hat;
    let mut best = f64::INFINITY;
    for i in 0..=100 {
        let xc = lo + (hi - lo) * i as f64 / 100.0;
        for j in 0..=100 {
            let xh = lo + (top - lo) * j as f64 / 100.0;
            if xh + 1e-12 >= xc {
                best = best.min(group_objective(q_hat, q_check, price, v1, xh, xc));
            }
        }
        best = best.min(group_objective(q_hat, q_check, price, v1, xc, xc));
    }
    best
}

/// Best Stage-2 objective over `p_d` on a `step` grid and `m_b` on its
/// endpoints, using all available renewables.
#[allow(clippy::too_many_arguments)]
pub fn stage2_grid(
    p_check: f64,
    p_hat: f64,
    h: f64,
    row: &PriceRow,
    v2: f64,
    dt: f64,
    m_b_max: f64,
    trade: bool,
    step: f64,
) -> f64 {
    let n = ((p_hat - p_check) / step).round() as usize;
    let mbs: &[f64] = if trade { &[0.0, m_b_max] } else { &[0.0] };
    let mut best = f64::INFINITY;
    for k in 0..=n {
        let p_d = (p_check + k as f64 * step).min(p_hat);
        let p_g = (p_d - row.pv_max).max(0.0);
        for &m_b in mbs {
            best = best.min(stage2_objective(h, v2, row, dt, p_g, m_b));
        }
    }
    best
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        let (pivot, pb) = (a[c].clone(), b[c]);
        for (r, (row, br)) in a.iter_mut().zip(b.iter_mut()).enumerate() {
            let f = row[c] / pivot[c];
            if r != c && f != 0.0 {
                for k in c..n {
                    row[k] -= f * pivot[k];
                }
                *br -= f * pb;
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Optimum of a bounded LP by enumerating every basic solution. `None`
/// when no vertex is feasible.
pub fn vertex_enumeration(lp: &LinearProgram) -> Option<f64> {
    let n = lp.objective.len();
    // Every constraint as `a·x (sense) b`, bounds included.
    let mut cons: Vec<(Vec<f64>, f64, RowSense)> = Vec::new();
    for (i, row) in lp.rows.iter().enumerate() {
        cons.push((row.clone(), lp.rhs[i], lp.senses[i]));
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        if lp.lower[j].is_finite() {
            cons.push((e.clone(), lp.lower[j], RowSense::Ge));
        }
        if lp.upper[j].is_finite() {
            cons.push((e, lp.upper[j], RowSense::Le));
        }
    }
    let mut best: Option<f64> = None;
    for pick in combinations(cons.len(), n) {
        let a = pick.iter().map(|&i| cons[i].0.clone()).collect();
        let b = pick.iter().map(|&i| cons[i].1).collect();
        let Some(x) = solve_square(a, b) else { continue };
        let feasible = cons.iter().all(|(row, rhs, sense)| {
            let v: f64 = row.iter().zip(&x).map(|(a, x)| a * x).sum();
            let tol = 1e-9 * (1.0 + rhs.abs());
            match sense {
                RowSense::Le => v <= rhs + tol,
                RowSense::Ge => v >= rhs - tol,
                RowSense::Eq => (v - rhs).abs() <= tol,
            }
        });
        if !feasible {
            continue;
        }
        let f: f64 = lp.objective.iter().zip(&x).map(|(c, x)| c * x).sum();
        best = Some(match (best, lp.direction) {
            (None, _) => f,
            (Some(b), Direction::Minimize) => b.min(f),
            (Some(b), Direction::Maximize) => b.max(f),
        });
    }
    best
}

/// Relative objective gap.
pub fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

/// Monotone within `tol` relative to the previous entry.
pub fn nondecreasing(xs: &[f64], tol: f64) -> bool {
    xs.windows(2).all(|w| w[1] >= w[0] - tol * (1.0 + w[0].abs()))
}

pub fn nonincreasing(xs: &[f64], tol: f64) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0] + tol * (1.0 + w[0].abs()))
}

/// Small hand-built scenario with generous carbon settings.
pub fn hand_scenario(grid: TimeGrid, prices: PriceSeries, fleet: Vec<ChargingTask>) -> Scenario {
    Scenario {
        grid,
        prices,
        fleet,
        v1: 20.0,
        v2: None,
        alpha: 0.5,
        c_quota: 1000.0,
        c_init: 0.0,
        m_b_max: 10.0,
        seed: 0,
        penalty: None,
    }
}

pub fn ev(id: usize, t_arrive: usize, t_depart: usize, e: [f64; 4], p_max: f64, eta_c: f64) -> ChargingTask {
    let [e_init, e_target, e_min, e_max] = e;
    ChargingTask { id, t_arrive, t_depart, e_init, e_target, e_min, e_max, p_max, eta_c }
}

//! Dense two-phase primal simplex for the desk-scale offline benchmarks.
//!
//! Pivoting always follows Bland's rule (lowest-index entering column,
//! lowest-index leaving basic variable on ratio ties), so the method cannot
//! cycle on degenerate vertices. Variable bounds are lowered into the
//! standard form by shifting finite lower bounds, mirroring variables that
//! only have an upper bound, splitting free variables, and adding one row per
//! finite upper bound.

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-7;

const PIVOT_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// `opt c·x` subject to `A x (<=|=|>=) b` and `lower <= x <= upper`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub direction: Direction,
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub senses: Vec<RowSense>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
}

impl LinearProgram {
    /// `n` variables, all in `[0, +inf)`, zero objective, no rows.
    pub fn new(n: usize, direction: Direction) -> Self {
        Self {
            direction,
            objective: vec![0.0; n],
            rows: Vec::new(),
            senses: Vec::new(),
            rhs: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    /// Adds a row from sparse `(column, coefficient)` pairs. Repeated
    /// columns accumulate.
    pub fn add_row(&mut self, terms: &[(usize, f64)], sense: RowSense, rhs: f64) {
        let mut row = vec![0.0; self.n_vars()];
        for &(j, a) in terms {
            row[j] += a;
        }
        self.rows.push(row);
        self.senses.push(sense);
        self.rhs.push(rhs);
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for ((row, sense), &b) in self.rows.iter().zip(&self.senses).zip(&self.rhs) {
            let ax: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
            let v = match sense {
                RowSense::Le => ax - b,
                RowSense::Ge => b - ax,
                RowSense::Eq => (ax - b).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Lp("bound vectors do not match variable count".into()));
        }
        let m = self.rows.len();
        if self.senses.len() != m || self.rhs.len() != m {
            return Err(Error::Lp("row senses/rhs do not match row count".into()));
        }
        if self.rows.iter().any(|r| r.len() != n) {
            return Err(Error::Lp("constraint row length differs from variable count".into()));
        }
        let finite = |v: &f64| v.is_finite();
        if !self.objective.iter().all(finite)
            || !self.rhs.iter().all(finite)
            || !self.rows.iter().flatten().all(finite)
        {
            return Err(Error::Lp("non-finite coefficient".into()));
        }
        for j in 0..n {
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] == f64::INFINITY {
                return Err(Error::Lp(format!("invalid bounds on variable {j}")));
            }
            if self.upper[j] == f64::NEG_INFINITY {
                return Err(Error::Lp(format!("invalid bounds on variable {j}")));
            }
        }
        Ok(())
    }
}

/// How an original variable maps onto nonnegative standard-form columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = offset + col
    Shift { col: usize, offset: f64 },
    /// x = offset - col
    Mirror { col: usize, offset: f64 },
    /// x = pos - neg
    Split { pos: usize, neg: usize },
}

pub fn solve_lp(lp: &LinearProgram, tol: f64) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.n_vars();
    let sign = match lp.direction {
        Direction::Minimize => 1.0,
        Direction::Maximize => -1.0,
    };

    // Empty box means infeasible outright.
    if (0..n).any(|j| lp.lower[j] > lp.upper[j] + tol) {
        return Ok(infeasible());
    }

    let mut maps = Vec::with_capacity(n);
    let mut n_cols = 0usize;
    for j in 0..n {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        let map = if lo.is_finite() {
            VarMap::Shift { col: n_cols, offset: lo }
        } else if hi.is_finite() {
            VarMap::Mirror { col: n_cols, offset: hi }
        } else {
            n_cols += 1;
            VarMap::Split { pos: n_cols - 1, neg: n_cols }
        };
        n_cols += 1;
        maps.push(map);
    }

    // Standard-form rows over the structural columns.
    let mut std_rows: Vec<(Vec<f64>, RowSense, f64)> = Vec::with_capacity(lp.n_rows() + n);
    for ((row, &sense), &b) in lp.rows.iter().zip(&lp.senses).zip(&lp.rhs) {
        let mut r = vec![0.0; n_cols];
        let mut rhs = b;
        for (j, &a) in row.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Shift { col, offset } => {
                    r[col] += a;
                    rhs -= a * offset;
                }
                VarMap::Mirror { col, offset } => {
                    r[col] -= a;
                    rhs -= a * offset;
                }
                VarMap::Split { pos, neg } => {
                    r[pos] += a;
                    r[neg] -= a;
                }
            }
        }
        std_rows.push((r, sense, rhs));
    }
    for (j, map) in maps.iter().enumerate() {
        if let VarMap::Shift { col, offset } = *map {
            if lp.upper[j].is_finite() {
                let mut r = vec![0.0; n_cols];
                r[col] = 1.0;
                std_rows.push((r, RowSense::Le, lp.upper[j] - offset));
            }
        }
    }

    let mut cost = vec![0.0; n_cols];
    for (j, map) in maps.iter().enumerate() {
        let c = sign * lp.objective[j];
        match *map {
            VarMap::Shift { col, .. } => cost[col] += c,
            VarMap::Mirror { col, .. } => cost[col] -= c,
            VarMap::Split { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }

    let mut tableau = Tableau::build(std_rows, n_cols);
    let scale = 1.0 + tableau.rhs_norm();

    // Phase 1: minimize the sum of artificials.
    let mut phase1 = vec![0.0; tableau.width - 1];
    phase1[tableau.artificial_start..].fill(1.0);
    tableau.set_objective(&phase1);
    match tableau.iterate(tableau.width - 1) {
        Pivoted::Optimal => {}
        Pivoted::Unbounded => return Err(Error::Lp("phase 1 reported unbounded".into())),
    }
    if tableau.objective_value() > tol * scale {
        return Ok(infeasible());
    }
    tableau.expel_artificials();

    // Phase 2 over structural and slack columns only.
    let mut phase2 = vec![0.0; tableau.width - 1];
    phase2[..n_cols].copy_from_slice(&cost);
    tableau.set_objective(&phase2);
    match tableau.iterate(tableau.artificial_start) {
        Pivoted::Optimal => {}
        Pivoted::Unbounded => {
            return Ok(LpSolution {
                status: LpStatus::Unbounded,
                x: Vec::new(),
                objective: sign * f64::NEG_INFINITY,
            })
        }
    }

    let cols = tableau.primal();
    let x: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            VarMap::Shift { col, offset } => offset + cols[col],
            VarMap::Mirror { col, offset } => offset - cols[col],
            VarMap::Split { pos, neg } => cols[pos] - cols[neg],
        })
        .collect();
    let objective = lp.evaluate(&x);
    Ok(LpSolution { status: LpStatus::Optimal, x, objective })
}

fn infeasible() -> LpSolution {
    LpSolution { status: LpStatus::Infeasible, x: Vec::new(), objective: f64::NAN }
}

enum Pivoted {
    Optimal,
    Unbounded,
}

/// Row-major tableau. Row 0 holds reduced costs, the last column the rhs.
struct Tableau {
    data: Vec<f64>,
    width: usize,
    m: usize,
    basis: Vec<usize>,
    artificial_start: usize,
}

impl Tableau {
    fn build(rows: Vec<(Vec<f64>, RowSense, f64)>, n_cols: usize) -> Self {
        let m = rows.len();
        let n_slack = rows.iter().filter(|(_, s, _)| *s != RowSense::Eq).count();
        // Nonnegative rhs.
        let rows: Vec<(Vec<f64>, RowSense, f64)> = rows
            .into_iter()
            .map(|(mut r, s, b)| {
                if b < 0.0 {
                    r.iter_mut().for_each(|v| *v = -*v);
                    let s = match s {
                        RowSense::Le => RowSense::Ge,
                        RowSense::Ge => RowSense::Le,
                        RowSense::Eq => RowSense::Eq,
                    };
                    (r, s, -b)
                } else {
                    (r, s, b)
                }
            })
            .collect();
        let n_art = rows.iter().filter(|(_, s, _)| *s != RowSense::Le).count();
        let artificial_start = n_cols + n_slack;
        let width = artificial_start + n_art + 1;
        let mut data = vec![0.0; (m + 1) * width];
        let mut basis = vec![0; m];
        let mut slack = n_cols;
        let mut art = artificial_start;
        for (i, (r, s, b)) in rows.into_iter().enumerate() {
            let base = (i + 1) * width;
            data[base..base + n_cols].copy_from_slice(&r);
            data[base + width - 1] = b;
            match s {
                RowSense::Le => {
                    data[base + slack] = 1.0;
                    basis[i] = slack;
                    slack += 1;
                }
                RowSense::Ge => {
                    data[base + slack] = -1.0;
                    slack += 1;
                    data[base + art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
                RowSense::Eq => {
                    data[base + art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
            }
        }
        Self { data, width, m, basis, artificial_start }
    }

    fn rhs_norm(&self) -> f64 {
        (1..=self.m).map(|i| self.data[i * self.width + self.width - 1].abs()).fold(0.0, f64::max)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    /// Loads cost vector `c` into row 0 as reduced costs w.r.t. the current basis.
    fn set_objective(&mut self, c: &[f64]) {
        let w = self.width;
        self.data[..w - 1].copy_from_slice(c);
        self.data[w - 1] = 0.0;
        for i in 0..self.m {
            let cb = c[self.basis[i]];
            if cb != 0.0 {
                let (top, rest) = self.data.split_at_mut(w);
                let row = &rest[i * w..(i + 1) * w];
                for (t, r) in top.iter_mut().zip(row) {
                    *t -= cb * r;
                }
            }
        }
    }

    /// Current objective value (row 0 stores -z in the rhs slot).
    fn objective_value(&self) -> f64 {
        -self.data[self.width - 1]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let row_start = (r + 1) * w;
        let p = self.data[row_start + c];
        for v in &mut self.data[row_start..row_start + w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.data[row_start..row_start + w].to_vec();
        for i in 0..=self.m {
            if i == r + 1 {
                continue;
            }
            let f = self.data[i * w + c];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.data[i * w..(i + 1) * w];
            for (v, pr) in row.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            row[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Bland's-rule simplex over columns `< col_limit`.
    fn iterate(&mut self, col_limit: usize) -> Pivoted {
        let rc_tol = 1e-10;
        loop {
            let entering = (0..col_limit).find(|&j| self.at(0, j) < -rc_tol);
            let Some(c) = entering else {
                return Pivoted::Optimal;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i + 1, c);
                if a > PIVOT_TOL {
                    let ratio = self.at(i + 1, self.width - 1).max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-12
                                || (ratio <= br + 1e-12 && self.basis[i] < self.basis[bi])
                            {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Pivoted::Unbounded,
                Some((r, _)) => self.pivot(r, c),
            }
        }
    }

    /// After phase 1, pivots remaining (zero-valued) artificials out of the
    /// basis. Rows where that is impossible are redundant and get zeroed.
    fn expel_artificials(&mut self) {
        for i in 0..self.m {
            if self.basis[i] < self.artificial_start {
                continue;
            }
            let col = (0..self.artificial_start).find(|&j| self.at(i + 1, j).abs() > 1e-9);
            match col {
                Some(c) => self.pivot(i, c),
                None => {
                    let w = self.width;
                    for v in &mut self.data[(i + 1) * w..(i + 2) * w] {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    fn primal(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.width - 1];
        for i in 0..self.m {
            x[self.basis[i]] = self.at(i + 1, self.width - 1);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_variable_box() {
        let mut lp = LinearProgram::new(1, Direction::Maximize);
        lp.objective[0] = 1.0;
        lp.add_row(&[(0, 1.0)], RowSense::Le, 5.0);
        let s = solve_lp(&lp, DEFAULT_TOL).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn empty_polytope() {
        let mut lp = LinearProgram::new(1, Direction::Minimize);
        lp.add_row(&[(0, 1.0)], RowSense::Le, 1.0);
        lp.add_row(&[(0, 1.0)], RowSense::Ge, 2.0);
        assert_eq!(solve_lp(&lp, DEFAULT_TOL).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut lp = LinearProgram::new(2, Direction::Maximize);
        lp.objective = vec![1.0, 1.0];
        lp.add_row(&[(0, 1.0), (1, -1.0)], RowSense::Le, 1.0);
        assert_eq!(solve_lp(&lp, DEFAULT_TOL).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_and_mirrored_variables() {
        // min x + 2y, x free, y <= 2, x >= -3, x + y >= -4, y >= -10
        let mut lp = LinearProgram::new(2, Direction::Minimize);
        lp.objective = vec![1.0, 2.0];
        lp.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
        lp.set_bounds(1, f64::NEG_INFINITY, 2.0);
        lp.add_row(&[(0, 1.0)], RowSense::Ge, -3.0);
        lp.add_row(&[(0, 1.0), (1, 1.0)], RowSense::Ge, -4.0);
        lp.add_row(&[(1, 1.0)], RowSense::Ge, -10.0);
        let s = solve_lp(&lp, DEFAULT_TOL).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - (6.0 - 20.0)).abs() < 1e-9, "{:?}", s);
        assert!(lp.max_violation(&s.x) < 1e-9);
    }

    #[test]
    fn equality_rows_and_redundancy() {
        let mut lp = LinearProgram::new(2, Direction::Minimize);
        lp.objective = vec![1.0, 3.0];
        lp.add_row(&[(0, 1.0), (1, 1.0)], RowSense::Eq, 4.0);
        lp.add_row(&[(0, 2.0), (1, 2.0)], RowSense::Eq, 8.0);
        lp.set_bounds(0, 0.0, 3.0);
        let s = solve_lp(&lp, DEFAULT_TOL).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 3.0).abs() < 1e-9 && (s.x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        let mut lp = LinearProgram::new(1, Direction::Minimize);
        lp.objective[0] = f64::NAN;
        assert!(solve_lp(&lp, DEFAULT_TOL).is_err());
        let mut lp = LinearProgram::new(2, Direction::Minimize);
        lp.rows.push(vec![1.0]);
        lp.senses.push(RowSense::Le);
        lp.rhs.push(1.0);
        assert!(solve_lp(&lp, DEFAULT_TOL).is_err());
    }
}

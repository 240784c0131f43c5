//! Dense-basis revised simplex, two phases, deterministic pivoting with
//! Bland's rule engaged under degeneracy. Problems at this crate's scale
//! (probability tables and strip systems) never justify an external
//! solver, and bit-for-bit reproducibility matters for the tests.

// index-based loops mirror the usual tableau notation
#![allow(clippy::needless_range_loop)]

use crate::numeric::{kahan_sum, KahanSum};
use crate::{Error, Result};

/// Reduced-cost threshold for optimality.
const RC_TOL: f64 = 1e-9;
/// Pivot magnitude threshold in the ratio test.
const PIVOT_TOL: f64 = 1e-10;
/// A step below this counts as a degenerate pivot.
const DEGENERATE_STEP: f64 = 1e-12;
/// Consecutive degenerate pivots before switching to Bland's rule.
const BLAND_TRIGGER: usize = 60;
/// Basis inverse refresh cadence.
const REFACTOR_EVERY: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintOp {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub terms: Vec<(usize, f64)>,
    pub op: ConstraintOp,
    pub rhs: f64,
}

/// A linear program over nonnegative variables.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub num_vars: usize,
    /// Sparse objective functional.
    pub objective: Vec<(usize, f64)>,
    pub maximize: bool,
    pub constraints: Vec<Constraint>,
}

impl LpProblem {
    pub fn new(num_vars: usize, maximize: bool) -> Self {
        Self {
            num_vars,
            objective: Vec::new(),
            maximize,
            constraints: Vec::new(),
        }
    }

    pub fn set_objective_term(&mut self, var: usize, coef: f64) {
        self.objective.push((var, coef));
    }

    /// Allocates a fresh variable and returns its index.
    pub fn add_var(&mut self) -> usize {
        let id = self.num_vars;
        self.num_vars += 1;
        id
    }

    pub fn add_eq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.constraints.push(Constraint {
            terms,
            op: ConstraintOp::Eq,
            rhs,
        });
    }

    pub fn add_le(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.constraints.push(Constraint {
            terms,
            op: ConstraintOp::Le,
            rhs,
        });
    }

    pub fn add_ge(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.constraints.push(Constraint {
            terms,
            op: ConstraintOp::Ge,
            rhs,
        });
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub value: f64,
    /// Values of the problem's own variables (slacks stripped).
    pub x: Vec<f64>,
}

/// Dense equality standard form (original variables plus slacks, rhs
/// nonnegative). Used by the vertex-enumeration oracle; the solver itself
/// works on sparse columns.
#[derive(Debug, Clone)]
pub struct StandardForm {
    pub num_vars: usize,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub objective: Vec<f64>,
    pub maximize: bool,
}

pub fn standardize(problem: &LpProblem) -> StandardForm {
    let slack_count = problem
        .constraints
        .iter()
        .filter(|c| c.op != ConstraintOp::Eq)
        .count();
    let n = problem.num_vars + slack_count;
    let mut rows = Vec::with_capacity(problem.constraints.len());
    let mut rhs = Vec::with_capacity(problem.constraints.len());
    let mut next_slack = problem.num_vars;
    for c in &problem.constraints {
        let mut row = vec![0.0; n];
        for &(var, coef) in &c.terms {
            row[var] += coef;
        }
        match c.op {
            ConstraintOp::Eq => {}
            ConstraintOp::Le => {
                row[next_slack] = 1.0;
                next_slack += 1;
            }
            ConstraintOp::Ge => {
                row[next_slack] = -1.0;
                next_slack += 1;
            }
        }
        let mut b = c.rhs;
        if b < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
            b = -b;
        }
        rows.push(row);
        rhs.push(b);
    }
    let mut objective = vec![0.0; n];
    for &(var, coef) in &problem.objective {
        objective[var] += coef;
    }
    StandardForm {
        num_vars: n,
        rows,
        rhs,
        objective,
        maximize: problem.maximize,
    }
}

/// Solves the program; the solution is primal feasible within 1e-9 per
/// constraint and optimal within the solver tolerance.
pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution> {
    let mut solver = Solver::build(problem);
    solver.run_phase1()?;
    solver.run_phase2()?;
    Ok(solver.extract(problem))
}

struct Solver {
    rows: usize,
    /// Structural columns (original + slack), then one artificial per row.
    cols: Vec<Vec<(usize, f64)>>,
    n_structural: usize,
    rhs: Vec<f64>,
    phase2_costs: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Vec<Vec<f64>>,
    xb: Vec<f64>,
    pivots_since_refactor: usize,
    degenerate_streak: usize,
    total_pivots: usize,
    max_pivots: usize,
}

impl Solver {
    fn build(problem: &LpProblem) -> Self {
        let rows = problem.constraints.len();
        let slack_count = problem
            .constraints
            .iter()
            .filter(|c| c.op != ConstraintOp::Eq)
            .count();
        let n_structural = problem.num_vars + slack_count;
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_structural + rows];
        let mut rhs = vec![0.0; rows];
        let mut next_slack = problem.num_vars;
        for (r, c) in problem.constraints.iter().enumerate() {
            let negate = c.rhs < 0.0;
            let sign = if negate { -1.0 } else { 1.0 };
            rhs[r] = c.rhs * sign;
            for &(var, coef) in &c.terms {
                if coef != 0.0 {
                    cols[var].push((r, coef * sign));
                }
            }
            match c.op {
                ConstraintOp::Eq => {}
                ConstraintOp::Le => {
                    cols[next_slack].push((r, sign));
                    next_slack += 1;
                }
                ConstraintOp::Ge => {
                    cols[next_slack].push((r, -sign));
                    next_slack += 1;
                }
            }
        }
        // merge duplicate terms within a column
        for col in cols.iter_mut().take(n_structural) {
            col.sort_by_key(|&(r, _)| r);
            col.dedup_by(|a, b| {
                if a.0 == b.0 {
                    b.1 += a.1;
                    true
                } else {
                    false
                }
            });
            col.retain(|&(_, v)| v != 0.0);
        }
        for r in 0..rows {
            cols[n_structural + r].push((r, 1.0));
        }
        let mut phase2_costs = vec![0.0; n_structural + rows];
        let obj_sign = if problem.maximize { -1.0 } else { 1.0 };
        for &(var, coef) in &problem.objective {
            phase2_costs[var] += obj_sign * coef;
        }
        let basis: Vec<usize> = (0..rows).map(|r| n_structural + r).collect();
        let mut in_basis = vec![false; n_structural + rows];
        for &b in &basis {
            in_basis[b] = true;
        }
        let mut binv = vec![vec![0.0; rows]; rows];
        for (r, row) in binv.iter_mut().enumerate() {
            row[r] = 1.0;
        }
        let xb = rhs.clone();
        let max_pivots = 100_000 + 20 * (n_structural + rows);
        Self {
            rows,
            cols,
            n_structural,
            rhs,
            phase2_costs,
            basis,
            in_basis,
            binv,
            xb,
            pivots_since_refactor: 0,
            degenerate_streak: 0,
            total_pivots: 0,
            max_pivots,
        }
    }

    fn column_in_basis_coords(&self, col: usize) -> Vec<f64> {
        let mut d = vec![0.0; self.rows];
        for &(r, a) in &self.cols[col] {
            if a != 0.0 {
                for i in 0..self.rows {
                    d[i] += a * self.binv[i][r];
                }
            }
        }
        d
    }

    fn dual_prices(&self, costs: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = costs[b];
            if cb != 0.0 {
                for (slot, y_slot) in y.iter_mut().enumerate() {
                    *y_slot += cb * self.binv[i][slot];
                }
            }
        }
        y
    }

    fn reduced_cost(&self, col: usize, costs: &[f64], y: &[f64]) -> f64 {
        let mut rc = costs[col];
        for &(r, a) in &self.cols[col] {
            rc -= y[r] * a;
        }
        rc
    }

    fn choose_entering(
        &self,
        costs: &[f64],
        allow: impl Fn(usize) -> bool,
        bland: bool,
    ) -> Option<usize> {
        let y = self.dual_prices(costs);
        let mut best: Option<(f64, usize)> = None;
        for col in 0..self.cols.len() {
            if self.in_basis[col] || !allow(col) {
                continue;
            }
            let rc = self.reduced_cost(col, costs, &y);
            if rc < -RC_TOL {
                if bland {
                    return Some(col);
                }
                if best.is_none_or(|(b, _)| rc < b) {
                    best = Some((rc, col));
                }
            }
        }
        best.map(|(_, col)| col)
    }

    /// Ratio test; leaving row chosen by smallest basic variable index on
    /// ties, which together with Bland entering prevents cycling.
    fn choose_leaving(&self, d: &[f64]) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..self.rows {
            if d[i] > PIVOT_TOL {
                let ratio = (self.xb[i].max(0.0)) / d[i];
                let better = match best {
                    None => true,
                    Some((r, row)) => {
                        ratio < r - 1e-12
                            || ((ratio - r).abs() <= 1e-12 && self.basis[i] < self.basis[row])
                    }
                };
                if better {
                    best = Some((ratio, i));
                }
            }
        }
        best.map(|(_, i)| i)
    }

    fn pivot(&mut self, entering: usize, leaving_row: usize, d: &[f64]) {
        let theta = (self.xb[leaving_row].max(0.0)) / d[leaving_row];
        for i in 0..self.rows {
            if i != leaving_row {
                self.xb[i] -= theta * d[i];
                if self.xb[i] < 0.0 && self.xb[i] > -1e-11 {
                    self.xb[i] = 0.0;
                }
            }
        }
        self.xb[leaving_row] = theta;
        let pivot_val = d[leaving_row];
        for slot in 0..self.rows {
            self.binv[leaving_row][slot] /= pivot_val;
        }
        for i in 0..self.rows {
            if i != leaving_row && d[i] != 0.0 {
                let factor = d[i];
                for slot in 0..self.rows {
                    self.binv[i][slot] -= factor * self.binv[leaving_row][slot];
                }
            }
        }
        self.in_basis[self.basis[leaving_row]] = false;
        self.in_basis[entering] = true;
        self.basis[leaving_row] = entering;

        if theta < DEGENERATE_STEP {
            self.degenerate_streak += 1;
        } else {
            self.degenerate_streak = 0;
        }
        self.pivots_since_refactor += 1;
        self.total_pivots += 1;
        if self.pivots_since_refactor >= REFACTOR_EVERY {
            self.refactor();
        }
    }

    /// Rebuilds the basis inverse and basic values from scratch.
    fn refactor(&mut self) {
        let r = self.rows;
        let mut aug = vec![vec![0.0; 2 * r]; r];
        for (i, &col) in self.basis.iter().enumerate() {
            for &(row, a) in &self.cols[col] {
                aug[row][i] = a;
            }
        }
        for i in 0..r {
            aug[i][r + i] = 1.0;
        }
        for col in 0..r {
            let pivot_row = (col..r)
                .max_by(|&p, &q| aug[p][col].abs().partial_cmp(&aug[q][col].abs()).unwrap())
                .unwrap();
            aug.swap(col, pivot_row);
            let pv = aug[col][col];
            debug_assert!(pv.abs() > 1e-12, "basis matrix became singular");
            for c in 0..2 * r {
                aug[col][c] /= pv;
            }
            for row in 0..r {
                if row != col {
                    let f = aug[row][col];
                    if f != 0.0 {
                        for c in 0..2 * r {
                            aug[row][c] -= f * aug[col][c];
                        }
                    }
                }
            }
        }
        for i in 0..r {
            for slot in 0..r {
                self.binv[i][slot] = aug[i][r + slot];
            }
        }
        for i in 0..r {
            let mut v = 0.0;
            for slot in 0..r {
                v += self.binv[i][slot] * self.rhs[slot];
            }
            self.xb[i] = if v < 0.0 && v > -1e-9 { 0.0 } else { v };
        }
        self.pivots_since_refactor = 0;
    }

    fn iterate(&mut self, costs: &[f64], allow: impl Fn(usize) -> bool + Copy) -> Result<()> {
        loop {
            if self.total_pivots > self.max_pivots {
                return Err(Error::IterationLimit {
                    iterations: self.total_pivots,
                });
            }
            let bland = self.degenerate_streak >= BLAND_TRIGGER;
            let Some(entering) = self.choose_entering(costs, allow, bland) else {
                return Ok(());
            };
            let d = self.column_in_basis_coords(entering);
            let Some(leaving_row) = self.choose_leaving(&d) else {
                return Err(Error::Unbounded);
            };
            self.pivot(entering, leaving_row, &d);
        }
    }

    fn run_phase1(&mut self) -> Result<()> {
        let mut costs = vec![0.0; self.cols.len()];
        for c in costs.iter_mut().skip(self.n_structural) {
            *c = 1.0;
        }
        let n_structural = self.n_structural;
        self.iterate(&costs, |col| col < n_structural)?;
        let infeasibility: f64 = self
            .basis
            .iter()
            .zip(&self.xb)
            .filter(|(&b, _)| b >= n_structural)
            .map(|(_, &v)| v)
            .sum();
        if infeasibility > 1e-7 {
            return Err(Error::Infeasible);
        }
        self.evict_artificials();
        Ok(())
    }

    /// Pivots residual basic artificials onto structural columns where
    /// possible; rows that admit none are redundant and stay pinned at 0.
    fn evict_artificials(&mut self) {
        for row in 0..self.rows {
            if self.basis[row] < self.n_structural {
                continue;
            }
            let mut replacement = None;
            for col in 0..self.n_structural {
                if self.in_basis[col] {
                    continue;
                }
                let d = self.column_in_basis_coords(col);
                if d[row].abs() > 1e-9 {
                    replacement = Some((col, d));
                    break;
                }
            }
            if let Some((col, d)) = replacement {
                // degenerate pivot: the artificial sits at zero
                let pivot_val = d[row];
                for slot in 0..self.rows {
                    self.binv[row][slot] /= pivot_val;
                }
                let xb_row = self.xb[row] / pivot_val;
                for i in 0..self.rows {
                    if i != row && d[i] != 0.0 {
                        for slot in 0..self.rows {
                            self.binv[i][slot] -= d[i] * self.binv[row][slot];
                        }
                        self.xb[i] -= d[i] * xb_row;
                    }
                }
                self.xb[row] = xb_row;
                self.in_basis[self.basis[row]] = false;
                self.in_basis[col] = true;
                self.basis[row] = col;
            }
        }
    }

    fn run_phase2(&mut self) -> Result<()> {
        let costs = self.phase2_costs.clone();
        let n_structural = self.n_structural;
        self.iterate(&costs, |col| col < n_structural)
    }

    fn extract(&self, problem: &LpProblem) -> LpSolution {
        let mut x = vec![0.0; problem.num_vars];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < problem.num_vars {
                x[b] = self.xb[i].max(0.0);
            }
        }
        let value = kahan_sum(problem.objective.iter().map(|&(var, coef)| coef * x[var]));
        LpSolution { value, x }
    }
}

/// Residual of the problem's constraints at a solution.
pub fn max_constraint_violation(problem: &LpProblem, x: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for c in &problem.constraints {
        let lhs = {
            let mut acc = KahanSum::new();
            for &(var, coef) in &c.terms {
                acc.add(coef * x[var]);
            }
            acc.value()
        };
        let violation = match c.op {
            ConstraintOp::Eq => (lhs - c.rhs).abs(),
            ConstraintOp::Le => (lhs - c.rhs).max(0.0),
            ConstraintOp::Ge => (c.rhs - lhs).max(0.0),
        };
        worst = worst.max(violation);
    }
    worst
}

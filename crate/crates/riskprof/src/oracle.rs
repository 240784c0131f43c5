//! Independent brute-force references used by the test suites: a generic
//! augmenting-path maximum flow on the explicit network, exhaustive slope
//! enumeration for the two-stock optimum, the closed-form average on the
//! one-dimensional 2x2 polytope, and LP optimization by basic-solution
//! enumeration. These favor clarity over speed and stay independent of the
//! production code paths they check.

use crate::greedy_flow::{greedy_flow, FlowProblem};
use crate::k_stock::{standardize, LpProblem};
use crate::numeric::{kahan_sum, KahanSum};
use crate::return_model::{
    reduce_objective, MarginalDistribution, Objective, Portfolio, RegionSpec, BOUNDARY_TOL,
};
use crate::{Error, Result};

/// Explicit source/rows/columns/sink network with real capacities.
#[derive(Debug, Clone)]
pub struct ExplicitFlowNetwork {
    node_count: usize,
    source: usize,
    sink: usize,
    // paired edges: edge e and e ^ 1 are each other's reverse
    to: Vec<usize>,
    cap: Vec<f64>,
    adj: Vec<Vec<usize>>,
}

impl ExplicitFlowNetwork {
    pub fn new(node_count: usize, source: usize, sink: usize) -> Self {
        Self {
            node_count,
            source,
            sink,
            to: Vec::new(),
            cap: Vec::new(),
            adj: vec![Vec::new(); node_count],
        }
    }

    pub fn add_edge(&mut self, from: usize, to: usize, cap: f64) {
        assert!(cap >= 0.0);
        let e = self.to.len();
        self.to.push(to);
        self.cap.push(cap);
        self.to.push(from);
        self.cap.push(0.0);
        self.adj[from].push(e);
        self.adj[to].push(e + 1);
    }

    /// Builds the two-stock network for a region: source -> row nodes with
    /// the first marginal as capacities, column nodes -> sink with the
    /// second, and a unit edge per member pair.
    pub fn two_stock(
        s1: &MarginalDistribution,
        s2: &MarginalDistribution,
        spec: &RegionSpec,
    ) -> Result<Self> {
        let member = |d1: f64, d2: f64| spec.member(&[d1, d2]);
        Self::two_stock_with(s1, s2, |d1, d2| member(d1, d2).unwrap_or(false))
    }

    /// Same shape with an arbitrary membership predicate over return pairs;
    /// used to replay mid-sweep regions.
    pub fn two_stock_with(
        s1: &MarginalDistribution,
        s2: &MarginalDistribution,
        mut member: impl FnMut(f64, f64) -> bool,
    ) -> Result<Self> {
        if s1.grid() != s2.grid() {
            return Err(Error::GridMismatch {
                detail: "marginals on different grids".to_owned(),
            });
        }
        let grid = s1.grid();
        let m = grid.len();
        let (source, sink) = (0, 2 * m + 1);
        let mut net = Self::new(2 * m + 2, source, sink);
        for level in grid.levels() {
            net.add_edge(source, 1 + grid.offset(level), s1.prob_at(level));
            net.add_edge(1 + m + grid.offset(level), sink, s2.prob_at(level));
        }
        for i in grid.levels() {
            for j in grid.levels() {
                if member(grid.return_at(i), grid.return_at(j)) {
                    net.add_edge(1 + grid.offset(i), 1 + m + grid.offset(j), 1.0);
                }
            }
        }
        Ok(net)
    }
}

/// Maximum flow by breadth-first augmenting paths (Edmonds-Karp).
pub fn maxflow_reference(net: &ExplicitFlowNetwork) -> f64 {
    let mut residual = net.cap.clone();
    let mut total = KahanSum::new();
    let mut parent_edge = vec![usize::MAX; net.node_count];
    loop {
        parent_edge.iter_mut().for_each(|p| *p = usize::MAX);
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(net.source);
        parent_edge[net.source] = usize::MAX - 1;
        while let Some(u) = queue.pop_front() {
            if u == net.sink {
                break;
            }
            for &e in &net.adj[u] {
                let v = net.to[e];
                if residual[e] > 1e-15 && parent_edge[v] == usize::MAX {
                    parent_edge[v] = e;
                    queue.push_back(v);
                }
            }
        }
        if parent_edge[net.sink] == usize::MAX {
            break;
        }
        let mut bottleneck = f64::INFINITY;
        let mut v = net.sink;
        while v != net.source {
            let e = parent_edge[v];
            bottleneck = bottleneck.min(residual[e]);
            v = net.to[e ^ 1];
        }
        let mut v = net.sink;
        while v != net.source {
            let e = parent_edge[v];
            residual[e] -= bottleneck;
            residual[e ^ 1] += bottleneck;
            v = net.to[e ^ 1];
        }
        total.add(bottleneck);
    }
    total.value().clamp(0.0, 1.0)
}

/// Max flow for a two-stock region, built and solved explicitly.
pub fn maxflow_two_stock(
    s1: &MarginalDistribution,
    s2: &MarginalDistribution,
    spec: &RegionSpec,
) -> Result<f64> {
    Ok(maxflow_reference(&ExplicitFlowNetwork::two_stock(
        s1, s2, spec,
    )?))
}

/// All portfolio candidates that can change the region: for every return
/// pair straddling the target, the weight x1 where the pair crosses the
/// line, plus midpoints of consecutive crossings and both endpoints.
/// Candidates are emitted in evaluation order: endpoints first, then
/// ascending x1 alternating interval midpoints and exact crossings.
pub fn two_stock_candidates(grid: &crate::return_model::ReturnGrid, alpha: f64) -> Vec<f64> {
    let mut thresholds: Vec<f64> = Vec::new();
    for i in grid.levels() {
        for j in grid.levels() {
            let u = grid.return_at(i) - alpha;
            let v = grid.return_at(j) - alpha;
            if (u < -BOUNDARY_TOL && v > BOUNDARY_TOL) || (u > BOUNDARY_TOL && v < -BOUNDARY_TOL) {
                thresholds.push(v / (v - u));
            }
        }
    }
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);

    let mut candidates = vec![0.0, 1.0];
    let mut lo = 0.0;
    for &t in &thresholds {
        candidates.push((lo + t) / 2.0);
        candidates.push(t);
        lo = t;
    }
    candidates.push((lo + 1.0) / 2.0);
    candidates
}

/// The obvious cubic algorithm: run the greedy flow at every distinct
/// slope and keep the best. This is the reference the sweep is tested
/// against.
pub fn exhaustive_two_stock_optimum(
    s1: &MarginalDistribution,
    s2: &MarginalDistribution,
    alpha: f64,
    objective: Objective,
) -> Result<(Portfolio, f64)> {
    let task = reduce_objective(objective);
    let form = task.flow_form().ok_or(Error::AverageCaseNotSupported)?;
    let mut best: Option<(f64, f64)> = None; // (canonical value, x1)
    for x1 in two_stock_candidates(s1.grid(), alpha) {
        let portfolio = Portfolio::two_stock(x1)?;
        let region = form.region(alpha, portfolio);
        let flow = greedy_flow(&FlowProblem::new(s1.clone(), s2.clone(), region)?)?.value;
        let canonical = form.finish(flow);
        // same plateau rule as the sweep: the earliest candidate wins ties
        if best.is_none_or(|(b, _)| canonical < b - crate::portfolio_sweep::IMPROVE_EPS) {
            best = Some((canonical, x1));
        }
    }
    let (canonical, x1) = best.expect("candidate list is never empty");
    Ok((
        Portfolio::two_stock(x1)?,
        task.finish(canonical).clamp(0.0, 1.0),
    ))
}

/// Exact mean of a region's mass over the one-dimensional 2x2 polytope.
/// The feasible tables form a segment parameterized by the top-left entry,
/// the mass is affine along it, so the mean is the value at the midpoint.
/// A degenerate (single-point) polytope yields that point's mass.
pub fn analytic_2x2_region_average(
    s1: &MarginalDistribution,
    s2: &MarginalDistribution,
    spec: &RegionSpec,
) -> Result<f64> {
    let grid = s1.grid();
    if grid.len() != 2 || s2.grid() != grid {
        return Err(Error::GridMismatch {
            detail: "analytic average needs a shared two-point grid".to_owned(),
        });
    }
    if spec.k() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: spec.k(),
        });
    }
    let (m1, m2) = (grid.m1(), grid.m2());
    let r1 = s1.prob_at(m1);
    let c1 = s2.prob_at(m1);
    let lo = (r1 + c1 - 1.0).max(0.0);
    let hi = r1.min(c1);
    let a = (lo + hi) / 2.0;
    let entries = [
        (m1, m1, a),
        (m1, m2, r1 - a),
        (m2, m1, c1 - a),
        (m2, m2, 1.0 - r1 - c1 + a),
    ];
    let mut mass = KahanSum::new();
    for (i, j, p) in entries {
        if spec.member(&[grid.return_at(i), grid.return_at(j)])? {
            mass.add(p);
        }
    }
    Ok(mass.value().clamp(0.0, 1.0))
}

/// Closed-form average-case loss probability (lower non-strict region) on
/// a two-point grid.
pub fn analytic_2x2_average(
    s1: &MarginalDistribution,
    s2: &MarginalDistribution,
    alpha: f64,
    portfolio: &Portfolio,
) -> Result<f64> {
    let spec = RegionSpec::new(
        alpha,
        portfolio.clone(),
        crate::return_model::Sense::Lower,
        false,
    );
    analytic_2x2_region_average(s1, s2, &spec)
}

/// Exact LP optimum by enumerating basic solutions. Only for desk-scale
/// cross-checks of the simplex solver.
pub fn lp_vertex_enumeration(problem: &LpProblem) -> Result<f64> {
    let std_form = standardize(problem);
    let n = std_form.num_vars;
    if n > 16 {
        return Err(Error::BudgetExceeded {
            needed: n as u128,
            budget: 16,
        });
    }
    let rows = std_form.rows.len();
    // pick a maximal independent row set by incremental elimination
    let mut reduced: Vec<Vec<f64>> = Vec::new();
    let mut pivot_cols: Vec<usize> = Vec::new();
    let mut independent: Vec<usize> = Vec::new();
    for r in 0..rows {
        let mut row = std_form.rows[r].clone();
        for (red, &pc) in reduced.iter().zip(&pivot_cols) {
            let factor = row[pc] / red[pc];
            if factor != 0.0 {
                for c in 0..n {
                    row[c] -= factor * red[c];
                }
            }
        }
        if let Some(pc) = row.iter().position(|&v| v.abs() > 1e-9) {
            reduced.push(row);
            pivot_cols.push(pc);
            independent.push(r);
        }
    }
    let rank = independent.len();

    let mut best: Option<f64> = None;
    let mut combo: Vec<usize> = (0..rank).collect();
    loop {
        if let Some(x) = try_basis(&std_form.rows, &std_form.rhs, &independent, &combo, n) {
            let feasible = x.iter().all(|&v| v >= -1e-9)
                && std_form.rows.iter().zip(&std_form.rhs).all(|(row, &b)| {
                    (kahan_sum(row.iter().zip(&x).map(|(&a, &v)| a * v)) - b).abs() <= 1e-7
                });
            if feasible {
                let value = kahan_sum(std_form.objective.iter().zip(&x).map(|(&c, &v)| c * v));
                best = Some(match best {
                    None => value,
                    Some(b) => {
                        if std_form.maximize {
                            b.max(value)
                        } else {
                            b.min(value)
                        }
                    }
                });
            }
        }
        // next combination of `rank` columns out of n
        let mut idx = rank;
        loop {
            if idx == 0 {
                return best.ok_or(Error::Infeasible);
            }
            idx -= 1;
            if combo[idx] < n - (rank - idx) {
                combo[idx] += 1;
                for later in idx + 1..rank {
                    combo[later] = combo[later - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Solves for the basic solution with the given columns using only the
/// independent rows, returning the full-length variable vector.
fn try_basis(
    rows: &[Vec<f64>],
    rhs: &[f64],
    independent: &[usize],
    cols: &[usize],
    n: usize,
) -> Option<Vec<f64>> {
    let r = independent.len();
    let mut a = vec![vec![0.0; r]; r];
    let mut b = vec![0.0; r];
    for (ri, &row) in independent.iter().enumerate() {
        for (ci, &col) in cols.iter().enumerate() {
            a[ri][ci] = rows[row][col];
        }
        b[ri] = rhs[row];
    }
    let xb = solve_square(&mut a, &mut b)?;
    let mut x = vec![0.0; n];
    for (ci, &col) in cols.iter().enumerate() {
        x[col] = xb[ci];
    }
    Some(x)
}

/// Gaussian elimination with partial pivoting; `None` when singular.
#[allow(clippy::needless_range_loop)]
fn solve_square(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot_row =
            (col..n).max_by(|&p, &q| a[p][col].abs().partial_cmp(&a[q][col].abs()).unwrap())?;
        if a[pivot_row][col].abs() < 1e-11 {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for r in col + 1..n {
            let factor = a[r][col] / a[col][col];
            if factor != 0.0 {
                for c in col..n {
                    a[r][c] -= factor * a[col][c];
                }
                b[r] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in row + 1..n {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

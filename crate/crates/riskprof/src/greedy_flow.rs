//! Two-stock extremal probabilities for a fixed portfolio, computed by a
//! greedy maximum flow over an implicit bipartite network.
//!
//! The network has a source feeding one node per grid return of the first
//! stock (capacity = that return's probability), a sink drawing from one
//! node per return of the second stock, and a unit-capacity edge between a
//! row and a column exactly when the return pair lies in the target region.
//! Because portfolio weights are nonnegative, the region is a monotone
//! staircase, and a single scan that walks the row and column frontiers
//! computes the maximum flow in at most 2m - 1 iterations without ever
//! materializing the O(m²) edges.

use crate::return_model::{
    reduce_objective, MarginalDistribution, Objective, Portfolio, RegionSpec, Sense,
};
use crate::{Error, Result};

/// Residuals below this are treated as exhausted capacity; keeps the
/// cw <= cv comparison from starving one side on round-off.
const RESIDUAL_EPS: f64 = 1e-15;

/// A two-stock flow instance: marginals plus the region to fill.
#[derive(Debug, Clone)]
pub struct FlowProblem {
    pub s1: MarginalDistribution,
    pub s2: MarginalDistribution,
    pub spec: RegionSpec,
}

impl FlowProblem {
    pub fn new(
        s1: MarginalDistribution,
        s2: MarginalDistribution,
        spec: RegionSpec,
    ) -> Result<Self> {
        if spec.k() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: spec.k(),
            });
        }
        if s1.grid() != s2.grid() {
            return Err(Error::GridMismatch {
                detail: "both marginals must share one grid".to_owned(),
            });
        }
        Ok(Self { s1, s2, spec })
    }
}

/// Flow value plus optional witness and instrumentation.
#[derive(Debug, Clone)]
pub struct FlowResult {
    /// Maximum probability mass placeable in the region; equals the
    /// network's max flow.
    pub value: f64,
    /// Sparse (row level, column level, mass) triples of a feasible partial
    /// assignment achieving `value`, when requested.
    pub witness: Option<Vec<(i64, i64, f64)>>,
    /// Loop iterations executed (bounded by 2m - 1).
    pub iterations: usize,
    /// Floating-point operations spent in the scan, for scaling checks.
    pub arithmetic_ops: u64,
}

/// Scan orientation. Lower regions are downward staircases and are scanned
/// from the highest row and lowest column; upper regions are the mirror
/// image, so the scan direction is reversed and the same loop applies.
fn scan_orders(spec: &RegionSpec, m1: i64, m2: i64) -> (Vec<i64>, Vec<i64>) {
    match spec.sense {
        Sense::Lower => ((m1..=m2).rev().collect(), (m1..=m2).collect()),
        Sense::Upper => ((m1..=m2).collect(), (m1..=m2).rev().collect()),
    }
}

/// Greedy maximum flow; value only.
pub fn greedy_flow(problem: &FlowProblem) -> Result<FlowResult> {
    run_greedy(problem, false)
}

/// Greedy maximum flow with the witness assignment recorded.
pub fn greedy_flow_with_witness(problem: &FlowProblem) -> Result<FlowResult> {
    run_greedy(problem, true)
}

fn run_greedy(problem: &FlowProblem, want_witness: bool) -> Result<FlowResult> {
    let grid = problem.s1.grid();
    let m = grid.len();
    let (rows, cols) = scan_orders(&problem.spec, grid.m1(), grid.m2());
    let weights = problem.spec.portfolio.weights();
    let (x1, x2) = (weights[0], weights[1]);

    let mut witness = if want_witness { Some(Vec::new()) } else { None };
    let mut flow = crate::numeric::KahanSum::new();
    let mut ops: u64 = 0;
    let mut iterations = 0usize;

    let mut si = 0usize; // position in the row scan order
    let mut sj = 0usize; // position in the column scan order
    let mut cv = problem.s1.prob_at(rows[0]);
    let mut cw = problem.s2.prob_at(cols[0]);

    loop {
        iterations += 1;
        let (i, j) = (rows[si], cols[sj]);
        let combined = x1 * grid.return_at(i) + x2 * grid.return_at(j);
        let member = problem.spec.classify(combined);
        ops += 6; // two muls, two adds, subtract, compare

        if member && cw <= cv {
            ops += 3;
            if let (Some(w), true) = (witness.as_mut(), cw > 0.0) {
                w.push((i, j, cw));
            }
            flow.add(cw);
            cv -= cw;
            if cv < RESIDUAL_EPS {
                cv = 0.0;
            }
            sj += 1;
            if sj == m {
                break;
            }
            cw = problem.s2.prob_at(cols[sj]);
        } else {
            if member {
                ops += 3;
                if let (Some(w), true) = (witness.as_mut(), cv > 0.0) {
                    w.push((i, j, cv));
                }
                flow.add(cv);
                cw -= cv;
                if cw < RESIDUAL_EPS {
                    cw = 0.0;
                }
            }
            si += 1;
            if si == m {
                break;
            }
            cv = problem.s1.prob_at(rows[si]);
        }
    }

    #[allow(clippy::int_plus_one)] // mirrors the stated 2m - 1 bound
    {
        debug_assert!(iterations <= 2 * m - 1);
    }
    Ok(FlowResult {
        value: flow.value().clamp(0.0, 1.0),
        witness,
        iterations,
        arithmetic_ops: ops,
    })
}

/// Capacity of the smallest cut of the threshold family: for a column
/// threshold, everything scanned before it is cut at the sink and every
/// row connected to it is cut at the source. The staircase shape makes
/// this family cover every member edge, so by max-flow duality its
/// minimum equals the flow value exactly.
pub fn min_cut_capacity(problem: &FlowProblem) -> Result<f64> {
    let grid = problem.s1.grid();
    let (rows, cols) = scan_orders(&problem.spec, grid.m1(), grid.m2());
    let weights = problem.spec.portfolio.weights();
    let mut best = f64::INFINITY;
    let mut cols_before = crate::numeric::KahanSum::new();
    for threshold in cols.iter().map(Some).chain(std::iter::once(None)) {
        let mut cut = crate::numeric::KahanSum::new();
        cut.add(cols_before.value());
        if let Some(&col) = threshold {
            for &i in &rows {
                let combined = weights[0] * grid.return_at(i) + weights[1] * grid.return_at(col);
                if problem.spec.classify(combined) {
                    cut.add(problem.s1.prob_at(i));
                }
            }
            cols_before.add(problem.s2.prob_at(col));
        }
        best = best.min(cut.value());
    }
    Ok(best.min(1.0))
}

/// Evaluates any non-average objective for a fixed two-stock portfolio by
/// routing through the canonical reduction and a single greedy flow.
pub fn worst_case_two_stock(
    s1: &MarginalDistribution,
    s2: &MarginalDistribution,
    portfolio: &Portfolio,
    alpha: f64,
    objective: Objective,
) -> Result<f64> {
    let task = reduce_objective(objective);
    let form = task.flow_form().ok_or(Error::AverageCaseNotSupported)?;
    let region = form.region(alpha, portfolio.clone());
    let flow = greedy_flow(&FlowProblem::new(s1.clone(), s2.clone(), region)?)?;
    Ok(task.finish(form.finish(flow.value)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::return_model::{CaseKind, Investor, ReturnGrid};

    fn coin_pair() -> (MarginalDistribution, MarginalDistribution) {
        let grid = ReturnGrid::new(100.0, 0, 1).unwrap();
        (
            MarginalDistribution::new(grid, vec![0.5, 0.5]).unwrap(),
            MarginalDistribution::new(grid, vec![0.5, 0.5]).unwrap(),
        )
    }

    fn lower(alpha: f64, x1: f64) -> RegionSpec {
        RegionSpec::new(
            alpha,
            Portfolio::two_stock(x1).unwrap(),
            Sense::Lower,
            false,
        )
    }

    #[test]
    fn coin_pair_fills_everything_but_the_corner() {
        let (s1, s2) = coin_pair();
        let r = greedy_flow(&FlowProblem::new(s1, s2, lower(50.0, 0.5)).unwrap()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_region_pushes_all_supply() {
        let grid = ReturnGrid::new(100.0, 0, 1).unwrap();
        let s1 = MarginalDistribution::new(grid, vec![0.2, 0.8]).unwrap();
        let s2 = MarginalDistribution::new(grid, vec![0.9, 0.1]).unwrap();
        let r = greedy_flow(&FlowProblem::new(s1, s2, lower(100.0, 0.5)).unwrap()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_region_pushes_nothing() {
        let (s1, s2) = coin_pair();
        let r = greedy_flow(&FlowProblem::new(s1, s2, lower(-1.0, 0.5)).unwrap()).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn iteration_bound_holds() {
        let grid = ReturnGrid::new(1.0, -2, 3).unwrap();
        let s1 = MarginalDistribution::new(grid, vec![0.1, 0.2, 0.3, 0.2, 0.1, 0.1]).unwrap();
        let s2 = MarginalDistribution::new(grid, vec![0.3, 0.1, 0.1, 0.1, 0.2, 0.2]).unwrap();
        for alpha in [-2.0, -0.5, 0.0, 1.5, 3.0] {
            let r =
                greedy_flow(&FlowProblem::new(s1.clone(), s2.clone(), lower(alpha, 0.4)).unwrap())
                    .unwrap();
            #[allow(clippy::int_plus_one)]
            {
                assert!(r.iterations <= 2 * grid.len() - 1);
            }
        }
    }

    #[test]
    fn witness_respects_marginals_and_region() {
        let grid = ReturnGrid::new(1.0, 0, 3).unwrap();
        let s1 = MarginalDistribution::new(grid, vec![0.4, 0.1, 0.3, 0.2]).unwrap();
        let s2 = MarginalDistribution::new(grid, vec![0.25, 0.25, 0.25, 0.25]).unwrap();
        let spec = lower(1.4, 0.6);
        let problem = FlowProblem::new(s1.clone(), s2.clone(), spec.clone()).unwrap();
        let r = greedy_flow_with_witness(&problem).unwrap();
        let witness = r.witness.as_ref().unwrap();
        let mut row = vec![0.0; grid.len()];
        let mut col = vec![0.0; grid.len()];
        let mut total = 0.0;
        for &(i, j, mass) in witness {
            assert!(mass > 0.0);
            assert!(spec
                .member(&[grid.return_at(i), grid.return_at(j)])
                .unwrap());
            row[grid.offset(i)] += mass;
            col[grid.offset(j)] += mass;
            total += mass;
        }
        for level in grid.levels() {
            assert!(row[grid.offset(level)] <= s1.prob_at(level) + 1e-12);
            assert!(col[grid.offset(level)] <= s2.prob_at(level) + 1e-12);
        }
        assert!((total - r.value).abs() <= 1e-12);
    }

    #[test]
    fn cut_certificate_matches_flow() {
        let grid = ReturnGrid::new(100.0, 0, 1).unwrap();
        let s1 = MarginalDistribution::new(grid, vec![0.3, 0.7]).unwrap();
        let s2 = MarginalDistribution::new(grid, vec![0.6, 0.4]).unwrap();
        let problem = FlowProblem::new(s1, s2, lower(50.0, 0.5)).unwrap();
        let r = greedy_flow_with_witness(&problem).unwrap();
        assert!((r.value - 0.9).abs() < 1e-12);
        let cut = min_cut_capacity(&problem).unwrap();
        assert!((cut - r.value).abs() < 1e-9);
    }

    #[test]
    fn cut_certificate_with_crossing_flow() {
        // a member row feeding an early saturated column: the smallest cut
        // sits at the first column threshold, not at the first unsaturated
        // one
        let grid = ReturnGrid::new(0.5, 0, 2).unwrap();
        let s1 = MarginalDistribution::new(grid, vec![0.8, 0.0, 0.2]).unwrap();
        let s2 = MarginalDistribution::new(grid, vec![0.5, 0.5, 0.0]).unwrap();
        let problem = FlowProblem::new(s1, s2, lower(0.2173, 0.8220588693849075)).unwrap();
        let r = greedy_flow(&problem).unwrap();
        assert!((r.value - 0.8).abs() < 1e-12);
        let cut = min_cut_capacity(&problem).unwrap();
        assert!((cut - r.value).abs() < 1e-9);
    }

    #[test]
    fn monotone_in_alpha() {
        let grid = ReturnGrid::new(2.0, -3, 2).unwrap();
        let s1 = MarginalDistribution::new(grid, vec![0.2, 0.1, 0.1, 0.3, 0.2, 0.1]).unwrap();
        let s2 = MarginalDistribution::new(grid, vec![0.1, 0.3, 0.2, 0.1, 0.2, 0.1]).unwrap();
        let mut prev = -1.0;
        let mut alpha = -7.0;
        while alpha <= 5.0 {
            let r =
                greedy_flow(&FlowProblem::new(s1.clone(), s2.clone(), lower(alpha, 0.3)).unwrap())
                    .unwrap();
            assert!(r.value >= prev - 1e-12, "alpha={alpha}");
            prev = r.value;
            alpha += 0.25;
        }
    }

    #[test]
    fn objective_routing_on_coin_pair() {
        let (s1, s2) = coin_pair();
        let x = Portfolio::two_stock(0.5).unwrap();
        let ra_w = Objective::new(Investor::RiskAverse, CaseKind::Worst, false);
        let ra_b = Objective::new(Investor::RiskAverse, CaseKind::Best, false);
        assert!((worst_case_two_stock(&s1, &s2, &x, 50.0, ra_w).unwrap() - 1.0).abs() < 1e-12);
        assert!((worst_case_two_stock(&s1, &s2, &x, 50.0, ra_b).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn aggressive_worst_saturates_below_grid() {
        let (s1, s2) = coin_pair();
        let x = Portfolio::two_stock(0.3).unwrap();
        let ag_w = Objective::new(Investor::Aggressive, CaseKind::Worst, false);
        assert!((worst_case_two_stock(&s1, &s2, &x, -5.0, ag_w).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn average_objective_is_rejected() {
        let (s1, s2) = coin_pair();
        let x = Portfolio::two_stock(0.5).unwrap();
        let ra_a = Objective::new(Investor::RiskAverse, CaseKind::Average, false);
        assert!(matches!(
            worst_case_two_stock(&s1, &s2, &x, 50.0, ra_a).unwrap_err(),
            Error::AverageCaseNotSupported
        ));
    }
}

//! Exact extremal region mass for k stocks as a transportation-style LP:
//! one variable per joint-table entry, one equality per marginal value,
//! and the region mass as the objective.

use super::simplex::{solve_lp, LpProblem};
use super::DEFAULT_ENTRY_BUDGET;
use crate::return_model::{
    reduce_objective, MarginalDistribution, Objective, Portfolio, RegionSpec,
};
use crate::{Error, Result};

/// Builds the marginal-constraint system over m^k table entries and the
/// objective selecting entries for which `member` holds ( indexed by grid
/// offsets per axis).
pub(crate) fn table_lp(
    dists: &[MarginalDistribution],
    member: impl Fn(&[usize]) -> bool,
    maximize: bool,
) -> Result<LpProblem> {
    let k = dists.len();
    let first = dists.first().ok_or(Error::DimensionMismatch {
        expected: 2,
        got: 0,
    })?;
    let grid = first.grid();
    for d in dists {
        if d.grid() != grid {
            return Err(Error::GridMismatch {
                detail: "marginals on different grids".to_owned(),
            });
        }
    }
    let m = grid.len();
    let num_vars = m.pow(k as u32);
    let mut problem = LpProblem::new(num_vars, maximize);

    // axis strides for row-major mixed-radix indexing
    let mut stride = vec![1usize; k];
    for axis in (0..k - 1).rev() {
        stride[axis] = stride[axis + 1] * m;
    }
    for (axis, dist) in dists.iter().enumerate() {
        for off in 0..m {
            let mut terms = Vec::with_capacity(num_vars / m);
            // every entry whose `axis` digit equals `off`
            let outer = num_vars / (stride[axis] * m);
            for block in 0..outer {
                let base = block * stride[axis] * m + off * stride[axis];
                for inner in 0..stride[axis] {
                    terms.push((base + inner, 1.0));
                }
            }
            problem.add_eq(terms, dist.probs()[off]);
        }
    }

    let mut offsets = vec![0usize; k];
    for var in 0..num_vars {
        let mut rem = var;
        for axis in 0..k {
            offsets[axis] = rem / stride[axis];
            rem %= stride[axis];
        }
        if member(&offsets) {
            problem.set_objective_term(var, 1.0);
        }
    }
    Ok(problem)
}

/// Max or min of the region's mass over all feasible joint tables, plus
/// the optimal table entries.
pub fn lp_region_extremum(
    dists: &[MarginalDistribution],
    spec: &RegionSpec,
    maximize: bool,
    budget: usize,
) -> Result<(f64, Vec<f64>)> {
    let k = dists.len();
    if spec.k() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: spec.k(),
        });
    }
    let grid = dists[0].grid();
    let entries = (grid.len() as u128).pow(k as u32);
    if entries > budget as u128 {
        return Err(Error::BudgetExceeded {
            needed: entries,
            budget: budget as u128,
        });
    }
    let weights = spec.portfolio.weights().to_vec();
    let member = |offsets: &[usize]| {
        let combined: f64 = offsets
            .iter()
            .zip(&weights)
            .map(|(&o, &w)| w * grid.return_at(grid.m1() + o as i64))
            .sum();
        spec.classify(combined)
    };
    let problem = table_lp(dists, member, maximize)?;
    let sol = solve_lp(&problem)?;
    Ok((sol.value.clamp(0.0, 1.0), sol.x))
}

/// Evaluates any non-average objective for a fixed portfolio by routing
/// through the canonical reduction; exponential in k by design.
pub fn lp_worst_case_exact(
    dists: &[MarginalDistribution],
    portfolio: &Portfolio,
    alpha: f64,
    objective: Objective,
) -> Result<f64> {
    lp_worst_case_exact_with_budget(dists, portfolio, alpha, objective, DEFAULT_ENTRY_BUDGET)
}

pub fn lp_worst_case_exact_with_budget(
    dists: &[MarginalDistribution],
    portfolio: &Portfolio,
    alpha: f64,
    objective: Objective,
    budget: usize,
) -> Result<f64> {
    if dists.len() < 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: dists.len(),
        });
    }
    let task = reduce_objective(objective);
    let form = task.flow_form().ok_or(Error::AverageCaseNotSupported)?;
    let region = form.region(alpha, portfolio.clone());
    let (mass, _) = lp_region_extremum(dists, &region, true, budget)?;
    Ok(task.finish(form.finish(mass)).clamp(0.0, 1.0))
}

//! Pairwise stock combination with parallel-band aggregation.
//!
//! Stocks are paired along a balanced binary tree. Each pair node holds a
//! joint table over its children's outcome values, constrained to the
//! children's outcome probabilities; the node then exposes band sums of
//! its combined (renormalized) return as outcome variables to its parent.
//! The root table is not banded: its entries are classified against the
//! target directly and their in-region sum is the LP objective.
//!
//! Two banding rules share this pipeline:
//! - equal-width strips, `ceil((1/eps) * m * log2 k)` of them, half open
//!   with the final strip closed, each represented by its lower boundary —
//!   an additive-eps approximation of the worst-case probability;
//! - lattice bands for portfolios of `c` equal units, where every partial
//!   combined return lands exactly on a multiple of `mu / (units in the
//!   subtree)`, so bands hold single values and nothing is lost.

use std::collections::BTreeMap;

use super::simplex::{solve_lp, LpProblem};
use crate::return_model::{classify_threshold, MarginalDistribution, Portfolio, Sense};
use crate::{Error, Result};

/// Outcome probabilities a node exposes upward: fixed marginal values at
/// stock leaves, LP variables elsewhere.
#[derive(Debug, Clone)]
enum Outcome {
    Consts(Vec<f64>),
    Vars(Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node {
    /// Sum of original portfolio weights in this subtree.
    weight: f64,
    /// Sum of integer cent weights in this subtree (lattice mode).
    cent_weight: i64,
    /// Representative combined return per outcome.
    values: Vec<f64>,
    /// Exact lattice keys per outcome (lattice mode); value = mu*key/cents.
    keys: Vec<i64>,
    outcome: Outcome,
}

/// Which strip boundary stands in for its values at the next level:
/// lower boundaries under-state returns (over-counting the region), upper
/// ones over-state them (under-counting), bracketing the exact optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum StripRep {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy)]
enum Banding {
    Strips { count: usize, rep: StripRep },
    Lattice,
}

/// A built striping system ready to solve.
#[derive(Debug, Clone)]
pub struct StripingPlan {
    pub epsilon: f64,
    /// Base bands per internal node: ceil((1/eps) * m * log2 k).
    pub strip_count: usize,
    /// Stock count after padding to a power of two.
    pub padded_k: usize,
    /// Combination levels = log2(padded_k).
    pub levels: usize,
    /// Variable count of the base system.
    pub variables: usize,
    pub constraints: usize,
    /// Band boundaries per internal (non-root) node of the base system.
    pub strip_boundaries: Vec<Vec<f64>>,
    dists: Vec<MarginalDistribution>,
    weights: Vec<f64>,
    alpha: f64,
}

impl StripingPlan {
    /// Solves to the plan's additive guarantee.
    ///
    /// Lower-boundary representatives under-state every combined return,
    /// so the optimum over-counts the region; upper-boundary
    /// representatives over-state it and under-count. The exact value is
    /// therefore bracketed, and the midpoint is off by at most half the
    /// bracket width. The strip count doubles (from the base count the
    /// plan was built with) until that bound meets epsilon; once strips
    /// separate all attained values both sides coincide and the bracket
    /// collapses, so the loop terminates.
    pub fn solve(&self) -> Result<f64> {
        let mut strips = self.strip_count;
        for _ in 0..24 {
            let low_reps = self.solve_with(strips, StripRep::Lower)?;
            let high_reps = self.solve_with(strips, StripRep::Upper)?;
            debug_assert!(low_reps >= high_reps - 1e-8);
            if (low_reps - high_reps) / 2.0 <= self.epsilon {
                return Ok(((low_reps + high_reps) / 2.0).clamp(0.0, 1.0));
            }
            strips *= 2;
        }
        Err(Error::InvariantViolation {
            detail: "strip refinement failed to converge".to_owned(),
        })
    }

    fn solve_with(&self, strips: usize, rep: StripRep) -> Result<f64> {
        let mut builder = SystemBuilder::new(Banding::Strips { count: strips, rep });
        let problem = builder.build(
            &self.dists,
            &self.weights,
            None,
            self.alpha,
            Sense::Lower,
            false,
        )?;
        let sol = solve_lp(&problem)?;
        Ok(sol.value.clamp(0.0, 1.0))
    }
}

/// Builds the strip system for the worst-case lower-region probability of
/// a fixed portfolio.
pub fn build_striping_plan(
    dists: &[MarginalDistribution],
    portfolio: &Portfolio,
    alpha: f64,
    epsilon: f64,
) -> Result<StripingPlan> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidTolerance {
            name: "epsilon",
            value: epsilon,
        });
    }
    validate_family(dists, portfolio)?;
    let m = dists[0].grid().len();
    let padded_k = dists.len().next_power_of_two().max(2);
    let levels = padded_k.trailing_zeros() as usize;
    let strip_count = (((m * levels) as f64) / epsilon).ceil().max(1.0) as usize;

    let weights = portfolio.weights().to_vec();
    let mut builder = SystemBuilder::new(Banding::Strips {
        count: strip_count,
        rep: StripRep::Lower,
    });
    let problem = builder.build(dists, &weights, None, alpha, Sense::Lower, false)?;
    Ok(StripingPlan {
        epsilon,
        strip_count,
        padded_k,
        levels,
        variables: problem.num_vars,
        constraints: problem.constraints.len(),
        strip_boundaries: builder.boundaries,
        dists: dists.to_vec(),
        weights,
        alpha,
    })
}

/// Worst-case probability within an additive epsilon of the exact value.
pub fn striping_worst_case(
    dists: &[MarginalDistribution],
    portfolio: &Portfolio,
    alpha: f64,
    epsilon: f64,
) -> Result<f64> {
    build_striping_plan(dists, portfolio, alpha, epsilon)?.solve()
}

/// Exact worst-case probability for a portfolio whose weights are integer
/// multiples of 1/cents.
pub fn cents_worst_case_exact(
    dists: &[MarginalDistribution],
    portfolio: &Portfolio,
    alpha: f64,
    cents: u64,
) -> Result<f64> {
    validate_family(dists, portfolio)?;
    let cent_weights = to_cent_weights(portfolio, cents)?;
    cents_region_extremum(dists, &cent_weights, cents, alpha, Sense::Lower, false)
}

/// Converts portfolio weights to integer cent counts, rejecting weights
/// off the lattice.
pub(crate) fn to_cent_weights(portfolio: &Portfolio, cents: u64) -> Result<Vec<i64>> {
    if cents == 0 {
        return Err(Error::InvalidTolerance {
            name: "cents",
            value: 0.0,
        });
    }
    let mut out = Vec::with_capacity(portfolio.len());
    for (index, &w) in portfolio.weights().iter().enumerate() {
        let scaled = w * cents as f64;
        let rounded = scaled.round();
        if (scaled - rounded).abs() > 1e-6 || rounded < 0.0 {
            return Err(Error::NotOnCentLattice {
                index,
                weight: w,
                cents,
            });
        }
        out.push(rounded as i64);
    }
    let total: i64 = out.iter().sum();
    if total != cents as i64 {
        return Err(Error::NotOnCentLattice {
            index: 0,
            weight: portfolio.weights()[0],
            cents,
        });
    }
    Ok(out)
}

/// Max region mass over feasible joints for integer cent weights; exact
/// because every node's combined returns live on the mu/subtree-cents
/// lattice and bands hold one lattice value each.
pub(crate) fn cents_region_extremum(
    dists: &[MarginalDistribution],
    cent_weights: &[i64],
    cents: u64,
    alpha: f64,
    sense: Sense,
    strict: bool,
) -> Result<f64> {
    let weights: Vec<f64> = cent_weights
        .iter()
        .map(|&c| c as f64 / cents as f64)
        .collect();
    let mut builder = SystemBuilder::new(Banding::Lattice);
    let problem = builder.build(dists, &weights, Some(cent_weights), alpha, sense, strict)?;
    let sol = solve_lp(&problem)?;
    Ok(sol.value.clamp(0.0, 1.0))
}

fn validate_family(dists: &[MarginalDistribution], portfolio: &Portfolio) -> Result<()> {
    if dists.len() < 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: dists.len(),
        });
    }
    if portfolio.len() != dists.len() {
        return Err(Error::DimensionMismatch {
            expected: dists.len(),
            got: portfolio.len(),
        });
    }
    let grid = dists[0].grid();
    for d in dists {
        if d.grid() != grid {
            return Err(Error::GridMismatch {
                detail: "marginals on different grids".to_owned(),
            });
        }
    }
    Ok(())
}

struct SystemBuilder {
    banding: Banding,
    boundaries: Vec<Vec<f64>>,
}

impl SystemBuilder {
    fn new(banding: Banding) -> Self {
        Self {
            banding,
            boundaries: Vec::new(),
        }
    }

    fn build(
        &mut self,
        dists: &[MarginalDistribution],
        weights: &[f64],
        cent_weights: Option<&[i64]>,
        alpha: f64,
        sense: Sense,
        strict: bool,
    ) -> Result<LpProblem> {
        let grid = dists[0].grid();
        let mu = grid.mu();
        let mut problem = LpProblem::new(0, true);

        let mut nodes: Vec<Node> = Vec::new();
        for (i, dist) in dists.iter().enumerate() {
            let w = weights[i];
            let cw = cent_weights.map_or_else(|| if w > 0.0 { 1 } else { 0 }, |c| c[i]);
            if w <= 0.0 || cw == 0 {
                // zero-weight stock: its returns never move the portfolio,
                // and its marginal extends any solution as a product factor
                nodes.push(Node {
                    weight: 0.0,
                    cent_weight: 0,
                    values: vec![0.0],
                    keys: vec![0],
                    outcome: Outcome::Consts(vec![1.0]),
                });
                continue;
            }
            let mut values = Vec::new();
            let mut keys = Vec::new();
            let mut probs = Vec::new();
            for level in grid.levels() {
                let p = dist.prob_at(level);
                if p > 0.0 {
                    values.push(grid.return_at(level));
                    keys.push(cw * level);
                    probs.push(p);
                }
            }
            nodes.push(Node {
                weight: w,
                cent_weight: cw,
                values,
                keys,
                outcome: Outcome::Consts(probs),
            });
        }
        // pad to a power of two with zero-weight point-mass dummies
        while !nodes.len().is_power_of_two() || nodes.len() < 2 {
            nodes.push(Node {
                weight: 0.0,
                cent_weight: 0,
                values: vec![0.0],
                keys: vec![0],
                outcome: Outcome::Consts(vec![1.0]),
            });
        }

        while nodes.len() > 1 {
            let is_root_level = nodes.len() == 2;
            let mut next = Vec::with_capacity(nodes.len() / 2);
            let mut iter = nodes.into_iter();
            while let (Some(left), Some(right)) = (iter.next(), iter.next()) {
                next.push(self.combine(
                    &mut problem,
                    left,
                    right,
                    mu,
                    is_root_level,
                    alpha,
                    sense,
                    strict,
                )?);
            }
            nodes = next;
        }
        Ok(problem)
    }

    #[allow(clippy::too_many_arguments)]
    fn combine(
        &mut self,
        problem: &mut LpProblem,
        left: Node,
        right: Node,
        mu: f64,
        is_root: bool,
        alpha: f64,
        sense: Sense,
        strict: bool,
    ) -> Result<Node> {
        let total_w = left.weight + right.weight;
        let cent_total = left.cent_weight + right.cent_weight;
        let (xt_left, xt_right) = if total_w > 0.0 {
            (left.weight / total_w, right.weight / total_w)
        } else {
            (0.0, 0.0)
        };

        let nl = left.values.len();
        let nr = right.values.len();
        // one table variable per child outcome pair
        let mut table = vec![vec![0usize; nr]; nl];
        for row in table.iter_mut() {
            for slot in row.iter_mut() {
                *slot = problem.add_var();
            }
        }
        // row sums match the left child's outcome distribution
        for (u, row) in table.iter().enumerate() {
            let mut terms: Vec<(usize, f64)> = row.iter().map(|&v| (v, 1.0)).collect();
            match &left.outcome {
                Outcome::Consts(p) => problem.add_eq(terms, p[u]),
                Outcome::Vars(vars) => {
                    terms.push((vars[u], -1.0));
                    problem.add_eq(terms, 0.0);
                }
            }
        }
        // column sums match the right child's
        for v in 0..nr {
            let mut terms: Vec<(usize, f64)> = table.iter().map(|row| (row[v], 1.0)).collect();
            match &right.outcome {
                Outcome::Consts(p) => problem.add_eq(terms, p[v]),
                Outcome::Vars(vars) => {
                    terms.push((vars[v], -1.0));
                    problem.add_eq(terms, 0.0);
                }
            }
        }

        // combined return per pair, exact keys in lattice mode
        let value_of = |u: usize, v: usize| -> f64 {
            match self.banding {
                Banding::Lattice => {
                    if cent_total > 0 {
                        mu * (left.keys[u] + right.keys[v]) as f64 / cent_total as f64
                    } else {
                        0.0
                    }
                }
                Banding::Strips { .. } => {
                    if total_w > 0.0 {
                        xt_left * left.values[u] + xt_right * right.values[v]
                    } else {
                        0.0
                    }
                }
            }
        };

        if is_root {
            for (u, row) in table.iter().enumerate() {
                for (v, &var) in row.iter().enumerate() {
                    if classify_threshold(sense, strict, value_of(u, v) - alpha) {
                        problem.set_objective_term(var, 1.0);
                    }
                }
            }
            return Ok(Node {
                weight: total_w,
                cent_weight: cent_total,
                values: vec![],
                keys: vec![],
                outcome: Outcome::Vars(vec![]),
            });
        }

        // band the pair outcomes
        let mut buckets: BTreeMap<i64, (f64, Vec<usize>)> = BTreeMap::new();
        match self.banding {
            Banding::Lattice => {
                for (u, row) in table.iter().enumerate() {
                    for (v, &var) in row.iter().enumerate() {
                        let key = if cent_total > 0 {
                            left.keys[u] + right.keys[v]
                        } else {
                            0
                        };
                        let rep = value_of(u, v);
                        buckets.entry(key).or_insert((rep, Vec::new())).1.push(var);
                    }
                }
            }
            Banding::Strips { count, rep } => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for u in 0..nl {
                    for v in 0..nr {
                        let r = value_of(u, v);
                        lo = lo.min(r);
                        hi = hi.max(r);
                    }
                }
                let width = (hi - lo) / count as f64;
                let degenerate = width.is_nan() || width <= 1e-12;
                let mut node_bounds = Vec::new();
                if !degenerate {
                    for b in 0..=count {
                        node_bounds.push(lo + b as f64 * width);
                    }
                }
                self.boundaries.push(node_bounds);
                for (u, row) in table.iter().enumerate() {
                    for (v, &var) in row.iter().enumerate() {
                        let r = value_of(u, v);
                        let idx = if degenerate {
                            0
                        } else {
                            (((r - lo) / width).floor() as i64).clamp(0, count as i64 - 1)
                        };
                        let strip_lo = lo + idx as f64 * width;
                        let rep_value = if degenerate {
                            lo
                        } else {
                            match rep {
                                StripRep::Lower => strip_lo,
                                StripRep::Upper => strip_lo + width,
                            }
                        };
                        buckets
                            .entry(idx)
                            .or_insert((rep_value, Vec::new()))
                            .1
                            .push(var);
                    }
                }
            }
        }

        let mut values = Vec::with_capacity(buckets.len());
        let mut keys = Vec::with_capacity(buckets.len());
        let mut vars = Vec::with_capacity(buckets.len());
        for (key, (rep, members)) in buckets {
            let s = problem.add_var();
            let mut terms: Vec<(usize, f64)> = members.into_iter().map(|v| (v, -1.0)).collect();
            terms.push((s, 1.0));
            problem.add_eq(terms, 0.0);
            values.push(rep);
            keys.push(key);
            vars.push(s);
        }
        Ok(Node {
            weight: total_w,
            cent_weight: cent_total,
            values,
            keys,
            outcome: Outcome::Vars(vars),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::k_stock::lp_worst_case_exact;
    use crate::return_model::{CaseKind, Investor, Objective, ReturnGrid};

    fn grid2() -> ReturnGrid {
        ReturnGrid::new(100.0, 0, 1).unwrap()
    }

    fn coin(p: f64) -> MarginalDistribution {
        MarginalDistribution::new(grid2(), vec![p, 1.0 - p]).unwrap()
    }

    #[test]
    fn two_stock_striping_is_exact() {
        let dists = [coin(0.5), coin(0.5)];
        let x = Portfolio::two_stock(0.5).unwrap();
        for eps in [0.5, 0.25, 0.1] {
            let w = striping_worst_case(&dists, &x, 50.0, eps).unwrap();
            assert!((w - 1.0).abs() < 1e-8, "eps={eps}: w={w}");
        }
    }

    #[test]
    fn empty_region_is_zero() {
        let dists = [coin(0.3), coin(0.6)];
        let x = Portfolio::two_stock(0.4).unwrap();
        let w = striping_worst_case(&dists, &x, -5.0, 0.25).unwrap();
        assert!(w.abs() < 1e-9);
    }

    #[test]
    fn strip_count_follows_formula() {
        let grid = ReturnGrid::new(1.0, 0, 3).unwrap();
        let u = MarginalDistribution::new(grid, vec![0.25; 4]).unwrap();
        let dists = vec![u.clone(), u.clone(), u.clone(), u];
        let x = Portfolio::new(vec![0.25; 4]).unwrap();
        let plan = build_striping_plan(&dists, &x, 2.0, 0.1).unwrap();
        assert_eq!(plan.padded_k, 4);
        assert_eq!(plan.levels, 2);
        assert_eq!(plan.strip_count, 80); // ceil(4 * 2 / 0.1)
        assert!(plan.variables > 0 && plan.constraints > 0);
    }

    #[test]
    fn odd_k_pads_with_dummy() {
        let grid = ReturnGrid::new(1.0, 0, 1).unwrap();
        let a = MarginalDistribution::new(grid, vec![0.5, 0.5]).unwrap();
        let dists = vec![a.clone(), a.clone(), a];
        let x = Portfolio::new(vec![0.5, 0.25, 0.25]).unwrap();
        let plan = build_striping_plan(&dists, &x, 0.6, 0.25).unwrap();
        assert_eq!(plan.padded_k, 4);
        let w = plan.solve().unwrap();
        assert!((0.0..=1.0).contains(&w));
    }

    #[test]
    fn cents_single_unit_is_marginal_cdf() {
        let grid = ReturnGrid::new(1.0, -2, 2).unwrap();
        let s1 = MarginalDistribution::new(grid, vec![0.1, 0.2, 0.3, 0.2, 0.2]).unwrap();
        let s2 = MarginalDistribution::new(grid, vec![0.4, 0.1, 0.2, 0.2, 0.1]).unwrap();
        let x = Portfolio::new(vec![1.0, 0.0]).unwrap();
        for alpha in [-2.5, -1.0, 0.0, 1.0, 2.0] {
            let w = cents_worst_case_exact(&[s1.clone(), s2.clone()], &x, alpha, 1).unwrap();
            assert!(
                (w - s1.cdf_at(alpha)).abs() < 1e-9,
                "alpha={alpha}: w={w} cdf={}",
                s1.cdf_at(alpha)
            );
        }
    }

    #[test]
    fn cents_matches_exact_lp_for_three_stocks() {
        let grid = ReturnGrid::new(1.0, 0, 2).unwrap();
        let s1 = MarginalDistribution::new(grid, vec![0.2, 0.5, 0.3]).unwrap();
        let s2 = MarginalDistribution::new(grid, vec![0.4, 0.4, 0.2]).unwrap();
        let s3 = MarginalDistribution::new(grid, vec![0.1, 0.6, 0.3]).unwrap();
        let dists = [s1, s2, s3];
        let x = Portfolio::new(vec![0.5, 0.25, 0.25]).unwrap();
        let ra_w = Objective::new(Investor::RiskAverse, CaseKind::Worst, false);
        for alpha in [0.4, 0.8, 1.2, 1.6] {
            let cents = cents_worst_case_exact(&dists, &x, alpha, 100).unwrap();
            let exact = lp_worst_case_exact(&dists, &x, alpha, ra_w).unwrap();
            assert!(
                (cents - exact).abs() < 1e-8,
                "alpha={alpha}: cents={cents} exact={exact}"
            );
        }
    }

    #[test]
    fn cents_two_stock_matches_greedy() {
        use crate::greedy_flow::{greedy_flow, FlowProblem};
        use crate::return_model::{RegionSpec, Sense};
        let grid = ReturnGrid::new(1.0, -2, 2).unwrap();
        let s1 = MarginalDistribution::new(grid, vec![0.2, 0.1, 0.3, 0.3, 0.1]).unwrap();
        let s2 = MarginalDistribution::new(grid, vec![0.1, 0.4, 0.1, 0.2, 0.2]).unwrap();
        for (num, den, alpha) in [(3i64, 10u64, 0.7), (7, 10, -0.3), (5, 10, 1.2)] {
            let x = Portfolio::two_stock(num as f64 / den as f64).unwrap();
            let cents = cents_worst_case_exact(&[s1.clone(), s2.clone()], &x, alpha, den).unwrap();
            let spec = RegionSpec::new(alpha, x, Sense::Lower, false);
            let greedy =
                greedy_flow(&FlowProblem::new(s1.clone(), s2.clone(), spec).unwrap()).unwrap();
            assert!(
                (cents - greedy.value).abs() < 1e-8,
                "x1={num}/{den} alpha={alpha}: cents={cents} greedy={}",
                greedy.value
            );
        }
    }

    #[test]
    fn off_lattice_weight_is_rejected() {
        let dists = [coin(0.5), coin(0.5)];
        let x = Portfolio::new(vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert!(matches!(
            cents_worst_case_exact(&dists, &x, 50.0, 10).unwrap_err(),
            Error::NotOnCentLattice { .. }
        ));
    }

    #[test]
    fn invalid_epsilon_is_rejected() {
        let dists = [coin(0.5), coin(0.5)];
        let x = Portfolio::two_stock(0.5).unwrap();
        assert!(matches!(
            striping_worst_case(&dists, &x, 50.0, 0.0).unwrap_err(),
            Error::InvalidTolerance { .. }
        ));
    }
}

//! Optimal two-stock portfolio search in O(m² log m): as the portfolio
//! weight rotates the target line around the point (alpha, alpha), return
//! pairs enter and leave the region one adjacent leaf swap at a time, and
//! a binary tree over the leaf sequence re-aggregates the greedy flow
//! value in O(log m) per swap.
//!
//! The leaf sequence interleaves one supply leaf (0, S2(j)) per return of
//! the second stock with one demand leaf (-S1(i), 0) per return of the
//! first, ordered so that a supply leaf precedes a demand leaf exactly
//! when the pair (i, j) lies in the region. Each internal node combines
//! children by matching the left side's spare supply against the right
//! side's unmet demand, so the root reads off the flow value.

use crate::greedy_flow::{greedy_flow, FlowProblem};
use crate::return_model::{
    reduce_objective, MarginalDistribution, Objective, Portfolio, RegionSpec, ReturnGrid, Sense,
    BOUNDARY_TOL,
};
use crate::{Error, Result};

/// Equal-slope events are grouped and applied atomically within this
/// tolerance on the x1 crossing value.
const TIE_TOL: f64 = 1e-12;

/// A candidate must beat the incumbent by this much to replace it, so
/// that round-off between the tree and the greedy arithmetic cannot flip
/// ties; the earliest candidate of a value plateau wins.
pub(crate) const IMPROVE_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// The pair joins the lower region as x1 grows past the threshold.
    Enter,
    /// The pair drops out of the lower region as x1 grows.
    Leave,
}

/// A membership change of one return pair during the sweep.
#[derive(Debug, Clone, Copy)]
pub struct SlopeEvent {
    /// The return pair (delta1, delta2) whose membership flips.
    pub point: (f64, f64),
    /// Slope of the line through (alpha, alpha) and the point.
    pub slope: f64,
    /// The weight x1 at which the portfolio line crosses the point.
    pub x1_threshold: f64,
    pub kind: EventKind,
}

/// Enumerates membership-change events for the lower region, sorted by
/// slope descending (equivalently x1 threshold ascending). Pairs that are
/// inside for every interior portfolio, or outside for every one, generate
/// no event and are accounted for statically.
pub fn enumerate_slope_events(
    s1: &MarginalDistribution,
    s2: &MarginalDistribution,
    alpha: f64,
) -> Result<Vec<SlopeEvent>> {
    if s1.grid() != s2.grid() {
        return Err(Error::GridMismatch {
            detail: "marginals on different grids".to_owned(),
        });
    }
    let grid = s1.grid();
    let mut events = Vec::new();
    for i in grid.levels() {
        for j in grid.levels() {
            let u = grid.return_at(i) - alpha;
            let v = grid.return_at(j) - alpha;
            let kind = if u < -BOUNDARY_TOL && v > BOUNDARY_TOL {
                EventKind::Enter
            } else if u > BOUNDARY_TOL && v < -BOUNDARY_TOL {
                EventKind::Leave
            } else {
                continue;
            };
            events.push(SlopeEvent {
                point: (grid.return_at(i), grid.return_at(j)),
                slope: v / u,
                x1_threshold: v / (v - u),
                kind,
            });
        }
    }
    events.sort_by(|a, b| {
        a.x1_threshold
            .partial_cmp(&b.x1_threshold)
            .unwrap()
            .then(a.point.0.partial_cmp(&b.point.0).unwrap())
    });
    Ok(events)
}

/// The dynamically updatable binary tree over the leaf sequence. Nodes
/// carry (unmet demand <= 0, spare supply >= 0) pairs; padding leaves are
/// (0, 0), the identity of the combination rule.
#[derive(Debug, Clone)]
pub struct FlowTree {
    leaf_base: usize,
    leaf_count: usize,
    nodes: Vec<(f64, f64)>,
}

fn combine(left: (f64, f64), right: (f64, f64)) -> (f64, f64) {
    let met = left.1 + right.0;
    (left.0 + met.min(0.0), met.max(0.0) + right.1)
}

impl FlowTree {
    pub fn from_leaves(leaves: &[(f64, f64)]) -> Self {
        let leaf_count = leaves.len();
        let leaf_base = leaf_count.next_power_of_two().max(2);
        let mut nodes = vec![(0.0, 0.0); 2 * leaf_base];
        nodes[leaf_base..leaf_base + leaf_count].copy_from_slice(leaves);
        let mut tree = Self {
            leaf_base,
            leaf_count,
            nodes,
        };
        for idx in (1..leaf_base).rev() {
            tree.nodes[idx] = combine(tree.nodes[2 * idx], tree.nodes[2 * idx + 1]);
        }
        tree
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn leaf(&self, pos: usize) -> (f64, f64) {
        self.nodes[self.leaf_base + pos]
    }

    pub fn root(&self) -> (f64, f64) {
        self.nodes[1]
    }

    fn update_from_leaf(&mut self, pos: usize) {
        let mut idx = (self.leaf_base + pos) >> 1;
        while idx >= 1 {
            self.nodes[idx] = combine(self.nodes[2 * idx], self.nodes[2 * idx + 1]);
            idx >>= 1;
        }
    }

    /// Swaps the leaves at `pos` and `pos + 1`, recomputing the paths to
    /// the root.
    pub fn swap_adjacent(&mut self, pos: usize) {
        assert!(pos + 1 < self.leaf_count, "swap out of range");
        self.nodes
            .swap(self.leaf_base + pos, self.leaf_base + pos + 1);
        self.update_from_leaf(pos);
        self.update_from_leaf(pos + 1);
    }
}

/// Reads the flow value off the root, checking the defining identity
/// 1 + r1 = 1 - r2 (total demand met equals total supply used).
pub fn tree_flow_value(tree: &FlowTree) -> Result<f64> {
    let (r1, r2) = tree.root();
    if ((1.0 + r1) - (1.0 - r2)).abs() > 1e-9 {
        return Err(Error::InvariantViolation {
            detail: format!("flow tree root out of balance: r1={r1} r2={r2}"),
        });
    }
    Ok((1.0 + r1).clamp(0.0, 1.0))
}

/// All portfolio weights the sweep evaluates, in probe order: the two
/// degenerate endpoints first, then ascending x1 alternating interval
/// midpoints with exact crossing values. Shared with the k=2 hyperplane
/// search so both enumerate identical candidate regions.
pub(crate) fn candidate_sequence(grid: &ReturnGrid, alpha: f64) -> Vec<f64> {
    let mut thresholds = Vec::new();
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
    thresholds.dedup_by(|a, b| (*a - *b).abs() <= TIE_TOL);
    let mut out = vec![0.0, 1.0];
    let mut lo = 0.0;
    for &t in &thresholds {
        out.push((lo + t) / 2.0);
        out.push(t);
        lo = t;
    }
    out.push((lo + 1.0) / 2.0);
    out
}

/// Which extremum of the flow value the sweep tracks over portfolios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowDir {
    Min,
    Max,
}

/// Where the optimal value was found, in x1 space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimalWindow {
    /// One of the degenerate portfolios (1,0) / (0,1).
    Endpoint,
    /// Exactly at a crossing (the line passes through grid points).
    AtCrossing(f64),
    /// Anywhere in the open interval; the midpoint is returned.
    Interval(f64, f64),
}

/// Sweep result: the optimal portfolio, the objective value, and the slope
/// window it came from.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub portfolio: Portfolio,
    pub value: f64,
    pub window: OptimalWindow,
}

/// Snapshot handed to replay hooks after every leaf swap and at every
/// probe; coordinates are in the canonical (lower-region) orientation.
pub struct ReplayState<'a> {
    pub s1: &'a MarginalDistribution,
    pub s2: &'a MarginalDistribution,
    pub member: &'a [bool],
    pub tree: &'a FlowTree,
    pub probe_x1: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
enum LeafKind {
    Supply(i64),
    Demand(i64),
}

/// Leaf order, supply/demand position maps, and the aggregation tree.
type LeafLayout = (Vec<LeafKind>, Vec<usize>, Vec<usize>, FlowTree);

/// Return pairs applied before and after the at-crossing probe.
type FlipPhases<'a> = (&'a [(i64, i64)], &'a [(i64, i64)]);

struct Engine<'a> {
    s1: &'a MarginalDistribution,
    s2: &'a MarginalDistribution,
    alpha: f64,
    strict: bool,
    m: usize,
}

struct EventGroup {
    t: f64,
    enters: Vec<(i64, i64)>,
    leaves: Vec<(i64, i64)>,
}

impl<'a> Engine<'a> {
    fn member_index(&self, i: i64, j: i64) -> usize {
        let grid = self.s1.grid();
        grid.offset(i) * self.m + grid.offset(j)
    }

    /// Membership of every pair for portfolios in the first open interval
    /// (all leave-pairs still inside, no enter-pair inside yet).
    fn initial_membership(&self) -> Vec<bool> {
        let grid = self.s1.grid();
        let mut member = vec![false; self.m * self.m];
        for i in grid.levels() {
            for j in grid.levels() {
                let u = grid.return_at(i) - self.alpha;
                let v = grid.return_at(j) - self.alpha;
                let zero_u = u.abs() <= BOUNDARY_TOL;
                let zero_v = v.abs() <= BOUNDARY_TOL;
                let inside = if zero_u && zero_v {
                    !self.strict
                } else {
                    let statically_in = (u < 0.0 || zero_u) && (v < 0.0 || zero_v);
                    let leave_pair = u > BOUNDARY_TOL && v < -BOUNDARY_TOL;
                    // leave-pairs are still inside at small x1
                    statically_in || leave_pair
                };
                member[self.member_index(i, j)] = inside;
            }
        }
        member
    }

    fn grouped_events(&self) -> Result<Vec<EventGroup>> {
        let events = enumerate_slope_events(self.s1, self.s2, self.alpha)?;
        let mut groups: Vec<EventGroup> = Vec::new();
        for ev in events {
            let grid = self.s1.grid();
            let i = (ev.point.0 / grid.mu()).round() as i64;
            let j = (ev.point.1 / grid.mu()).round() as i64;
            let fresh = groups
                .last()
                .is_none_or(|g| (g.t - ev.x1_threshold).abs() > TIE_TOL);
            if fresh {
                groups.push(EventGroup {
                    t: ev.x1_threshold,
                    enters: Vec::new(),
                    leaves: Vec::new(),
                });
            }
            let group = groups.last_mut().unwrap();
            match ev.kind {
                EventKind::Enter => group.enters.push((i, j)),
                EventKind::Leave => group.leaves.push((i, j)),
            }
        }
        Ok(groups)
    }

    /// Builds the leaf sequence for the current membership: demand leaves
    /// in descending first-stock return, supply leaves ascending, a supply
    /// leaf placed before a demand leaf exactly when the pair is inside.
    fn build_leaves(&self, member: &[bool]) -> LeafLayout {
        let grid = self.s1.grid();
        let mut kinds = Vec::with_capacity(2 * self.m);
        let mut supply_cursor = grid.m1();
        for i in grid.levels().rev() {
            while supply_cursor <= grid.m2() && member[self.member_index(i, supply_cursor)] {
                kinds.push(LeafKind::Supply(supply_cursor));
                supply_cursor += 1;
            }
            kinds.push(LeafKind::Demand(i));
        }
        while supply_cursor <= grid.m2() {
            kinds.push(LeafKind::Supply(supply_cursor));
            supply_cursor += 1;
        }
        debug_assert_eq!(kinds.len(), 2 * self.m);

        let mut pos_supply = vec![usize::MAX; self.m];
        let mut pos_demand = vec![usize::MAX; self.m];
        let values: Vec<(f64, f64)> = kinds
            .iter()
            .enumerate()
            .map(|(pos, kind)| match *kind {
                LeafKind::Supply(j) => {
                    pos_supply[grid.offset(j)] = pos;
                    (0.0, self.s2.prob_at(j))
                }
                LeafKind::Demand(i) => {
                    pos_demand[grid.offset(i)] = pos;
                    (-self.s1.prob_at(i), 0.0)
                }
            })
            .collect();
        let tree = FlowTree::from_leaves(&values);
        (kinds, pos_supply, pos_demand, tree)
    }

    /// Evaluates the greedy flow directly at a fixed canonical portfolio.
    fn direct_flow(&self, x1: f64) -> Result<f64> {
        let spec = RegionSpec::new(
            self.alpha,
            Portfolio::two_stock(x1)?,
            Sense::Lower,
            self.strict,
        );
        Ok(greedy_flow(&FlowProblem::new(self.s1.clone(), self.s2.clone(), spec)?)?.value)
    }

    fn run(
        &self,
        dir: FlowDir,
        hook: &mut dyn FnMut(&ReplayState<'_>),
    ) -> Result<(f64, f64, OptimalWindow)> {
        let better = |candidate: f64, best: f64| match dir {
            FlowDir::Min => candidate < best - IMPROVE_EPS,
            FlowDir::Max => candidate > best + IMPROVE_EPS,
        };

        // degenerate portfolios first, directly via the greedy scan
        let mut best_flow = self.direct_flow(0.0)?;
        let mut best_x1 = 0.0;
        let mut best_window = OptimalWindow::Endpoint;
        let at_one = self.direct_flow(1.0)?;
        if better(at_one, best_flow) {
            best_flow = at_one;
            best_x1 = 1.0;
        }

        let groups = self.grouped_events()?;
        let mut member = self.initial_membership();
        let (mut kinds, mut pos_supply, mut pos_demand, mut tree) = self.build_leaves(&member);
        let grid = self.s1.grid();

        let flip = |pair: (i64, i64),
                    entering: bool,
                    member: &mut Vec<bool>,
                    kinds: &mut Vec<LeafKind>,
                    pos_supply: &mut Vec<usize>,
                    pos_demand: &mut Vec<usize>,
                    tree: &mut FlowTree|
         -> Result<()> {
            let (i, j) = pair;
            let sp = pos_supply[grid.offset(j)];
            let dp = pos_demand[grid.offset(i)];
            // each event is exactly one adjacent transposition
            if entering {
                assert_eq!(
                    sp,
                    dp + 1,
                    "entering pair must sit just after its demand leaf"
                );
            } else {
                assert_eq!(
                    sp + 1,
                    dp,
                    "leaving pair must sit just before its demand leaf"
                );
            }
            let lo = sp.min(dp);
            tree.swap_adjacent(lo);
            kinds.swap(lo, lo + 1);
            pos_supply[grid.offset(j)] = dp;
            pos_demand[grid.offset(i)] = sp;
            let idx = grid.offset(i) * self.m + grid.offset(j);
            member[idx] = entering;
            Ok(())
        };

        let probe = |x1: f64,
                     window: OptimalWindow,
                     member: &Vec<bool>,
                     tree: &FlowTree,
                     best_flow: &mut f64,
                     best_x1: &mut f64,
                     best_window: &mut OptimalWindow,
                     hook: &mut dyn FnMut(&ReplayState<'_>)|
         -> Result<()> {
            let value = tree_flow_value(tree)?;
            hook(&ReplayState {
                s1: self.s1,
                s2: self.s2,
                member,
                tree,
                probe_x1: Some(x1),
            });
            if better(value, *best_flow) {
                *best_flow = value;
                *best_x1 = x1;
                *best_window = window;
            }
            Ok(())
        };

        let mut lo = 0.0;
        for g_idx in 0..=groups.len() {
            let hi = groups.get(g_idx).map_or(1.0, |g| g.t);
            if hi > lo {
                probe(
                    (lo + hi) / 2.0,
                    OptimalWindow::Interval(lo, hi),
                    &member,
                    &tree,
                    &mut best_flow,
                    &mut best_x1,
                    &mut best_window,
                    hook,
                )?;
            }
            let Some(group) = groups.get(g_idx) else {
                break;
            };
            // At the crossing itself, non-strict regions hold both the
            // entering and the leaving points (they sit on the line), so
            // enters apply before the probe and leaves after. Strict
            // regions exclude both, reversing the order.
            let (first, second): FlipPhases<'_> = if self.strict {
                (&group.leaves, &group.enters)
            } else {
                (&group.enters, &group.leaves)
            };
            let first_entering = !self.strict;
            for &pair in first {
                flip(
                    pair,
                    first_entering,
                    &mut member,
                    &mut kinds,
                    &mut pos_supply,
                    &mut pos_demand,
                    &mut tree,
                )?;
                hook(&ReplayState {
                    s1: self.s1,
                    s2: self.s2,
                    member: &member,
                    tree: &tree,
                    probe_x1: None,
                });
            }
            probe(
                group.t,
                OptimalWindow::AtCrossing(group.t),
                &member,
                &tree,
                &mut best_flow,
                &mut best_x1,
                &mut best_window,
                hook,
            )?;
            for &pair in second {
                flip(
                    pair,
                    !first_entering,
                    &mut member,
                    &mut kinds,
                    &mut pos_supply,
                    &mut pos_demand,
                    &mut tree,
                )?;
                hook(&ReplayState {
                    s1: self.s1,
                    s2: self.s2,
                    member: &member,
                    tree: &tree,
                    probe_x1: None,
                });
            }
            lo = hi;
        }

        // the tree value at the winning candidate must agree with a fresh
        // greedy evaluation there; the greedy value is returned so callers
        // see the same arithmetic as a direct evaluation
        let recheck = self.direct_flow(best_x1)?;
        if (recheck - best_flow).abs() > 1e-9 {
            return Err(Error::InvariantViolation {
                detail: format!(
                    "sweep value {best_flow} disagrees with greedy {recheck} at x1={best_x1}"
                ),
            });
        }
        Ok((recheck, best_x1, best_window))
    }
}

/// Reverses a marginal across the grid midpoint; the mirror image of an
/// upper region is a lower region for the reflected data.
fn reflect_marginal(d: &MarginalDistribution) -> MarginalDistribution {
    let mut probs = d.probs().to_vec();
    probs.reverse();
    MarginalDistribution::new(*d.grid(), probs).expect("reflection preserves validity")
}

fn reflect_alpha(grid: &ReturnGrid, alpha: f64) -> f64 {
    (grid.m1() + grid.m2()) as f64 * grid.mu() - alpha
}

pub fn sweep_canonical(
    s1: &MarginalDistribution,
    s2: &MarginalDistribution,
    alpha: f64,
    sense: Sense,
    strict: bool,
    dir: FlowDir,
    hook: &mut dyn FnMut(&ReplayState<'_>),
) -> Result<(f64, f64, OptimalWindow)> {
    match sense {
        Sense::Lower => {
            let engine = Engine {
                s1,
                s2,
                alpha,
                strict,
                m: s1.grid().len(),
            };
            engine.run(dir, hook)
        }
        Sense::Upper => {
            let r1 = reflect_marginal(s1);
            let r2 = reflect_marginal(s2);
            let engine = Engine {
                s1: &r1,
                s2: &r2,
                alpha: reflect_alpha(s1.grid(), alpha),
                strict,
                m: s1.grid().len(),
            };
            // crossings in x1 are invariant under reflection, so the
            // winning weight maps back unchanged
            engine.run(dir, hook)
        }
    }
}

/// Finds the portfolio optimizing a non-average objective, returning the
/// portfolio, the objective value, and the optimal slope window.
pub fn sweep_optimal_portfolio_detailed(
    s1: &MarginalDistribution,
    s2: &MarginalDistribution,
    alpha: f64,
    objective: Objective,
) -> Result<SweepOutcome> {
    if s1.grid() != s2.grid() {
        return Err(Error::GridMismatch {
            detail: "marginals on different grids".to_owned(),
        });
    }
    let task = reduce_objective(objective);
    let form = task.flow_form().ok_or(Error::AverageCaseNotSupported)?;
    // minimizing the canonical value means minimizing the flow when the
    // canonical value is the flow, and maximizing it when complemented
    let dir = if form.complement {
        FlowDir::Max
    } else {
        FlowDir::Min
    };
    let (flow, x1, window) =
        sweep_canonical(s1, s2, alpha, form.sense, form.strict, dir, &mut |_| {})?;
    let value = task.finish(form.finish(flow)).clamp(0.0, 1.0);
    Ok(SweepOutcome {
        portfolio: Portfolio::two_stock(x1)?,
        value,
        window,
    })
}

/// Spec-facing wrapper returning just the portfolio and value.
pub fn sweep_optimal_portfolio(
    s1: &MarginalDistribution,
    s2: &MarginalDistribution,
    alpha: f64,
    objective: Objective,
) -> Result<(Portfolio, f64)> {
    let outcome = sweep_optimal_portfolio_detailed(s1, s2, alpha, objective)?;
    Ok((outcome.portfolio, outcome.value))
}

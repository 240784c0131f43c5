//! Core domain types: return grids, marginal distributions, portfolios,
//! joint tables, target regions, and the twelve investor objectives with
//! their reduction to canonical computations.
//!
//! All types are immutable after construction and every constructor
//! validates its invariants, so values of these types can be shared freely
//! across threads.

use crate::numeric::{kahan_sum, KahanSum};
use crate::{Error, Result};

/// Tolerance for probability sums (marginals, joint tables).
pub const SUM_TOL: f64 = 1e-9;
/// Tolerance for portfolio weight sums.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Absolute tolerance for classifying a grid point against the target
/// hyperplane. Ties count as inside for non-strict regions and outside for
/// strict ones, deterministically.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// The return discretization: percentages `level * mu` for
/// `level = m1 ..= m2`. Negative levels are allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnGrid {
    mu: f64,
    m1: i64,
    m2: i64,
}

impl ReturnGrid {
    pub fn new(mu: f64, m1: i64, m2: i64) -> Result<Self> {
        if !mu.is_finite() || mu <= 0.0 {
            return Err(Error::InvalidGrid {
                detail: format!("mu must be a positive finite real, got {mu}"),
            });
        }
        if m1 >= m2 {
            return Err(Error::InvalidGrid {
                detail: format!("m1 ({m1}) must be smaller than m2 ({m2})"),
            });
        }
        Ok(Self { mu, m1, m2 })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn m1(&self) -> i64 {
        self.m1
    }

    pub fn m2(&self) -> i64 {
        self.m2
    }

    /// Number of grid points m = m2 - m1 + 1 (always >= 2).
    pub fn len(&self) -> usize {
        (self.m2 - self.m1 + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Return percentage at a grid level.
    pub fn return_at(&self, level: i64) -> f64 {
        level as f64 * self.mu
    }

    pub fn lowest_return(&self) -> f64 {
        self.return_at(self.m1)
    }

    pub fn highest_return(&self) -> f64 {
        self.return_at(self.m2)
    }

    pub fn levels(&self) -> impl DoubleEndedIterator<Item = i64> + Clone {
        self.m1..=self.m2
    }

    /// Zero-based offset of a level inside prob vectors.
    pub fn offset(&self, level: i64) -> usize {
        debug_assert!(level >= self.m1 && level <= self.m2);
        (level - self.m1) as usize
    }

    pub fn contains_level(&self, level: i64) -> bool {
        level >= self.m1 && level <= self.m2
    }
}

/// One stock's probability vector over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalDistribution {
    grid: ReturnGrid,
    probs: Vec<f64>,
}

impl MarginalDistribution {
    /// Builds and validates a marginal: entries nonnegative, summing to 1
    /// within [`SUM_TOL`], one entry per grid point.
    pub fn new(grid: ReturnGrid, probs: Vec<f64>) -> Result<Self> {
        Self::new_named(grid, probs, None)
    }

    pub fn new_named(grid: ReturnGrid, probs: Vec<f64>, name: Option<&str>) -> Result<Self> {
        if probs.len() != grid.len() {
            return Err(Error::GridMismatch {
                detail: format!(
                    "expected {} probabilities for grid [{}..={}], got {}",
                    grid.len(),
                    grid.m1(),
                    grid.m2(),
                    probs.len()
                ),
            });
        }
        for (off, &p) in probs.iter().enumerate() {
            if p.is_nan() || p < 0.0 {
                return Err(Error::NegativeProbability {
                    stock: name.map(str::to_owned),
                    level: grid.m1() + off as i64,
                    value: p,
                });
            }
        }
        let sum = kahan_sum(probs.iter().copied());
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::SumNotOne {
                stock: name.map(str::to_owned),
                sum,
                deviation: sum - 1.0,
            });
        }
        Ok(Self { grid, probs })
    }

    pub fn grid(&self) -> &ReturnGrid {
        &self.grid
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob_at(&self, level: i64) -> f64 {
        self.probs[self.grid.offset(level)]
    }

    /// Checks the optional positivity floor on nonzero entries. Off by
    /// default; callers opt in when modeling inputs with bounded precision.
    pub fn check_floor(&self, floor: f64, name: Option<&str>) -> Result<()> {
        for (off, &p) in self.probs.iter().enumerate() {
            if p > 0.0 && p < floor {
                return Err(Error::FloorViolation {
                    stock: name.map(str::to_owned),
                    level: self.grid.m1() + off as i64,
                    value: p,
                    floor,
                });
            }
        }
        Ok(())
    }

    /// P[return <= alpha], exact on the grid.
    pub fn cdf_at(&self, alpha: f64) -> f64 {
        let mut acc = KahanSum::new();
        for level in self.grid.levels() {
            if self.grid.return_at(level) <= alpha + BOUNDARY_TOL {
                acc.add(self.prob_at(level));
            }
        }
        acc.value().clamp(0.0, 1.0)
    }

    /// Smallest positive entry, or `None` if the distribution is a point
    /// mass sitting on a single level.
    pub fn min_positive(&self) -> Option<f64> {
        self.probs
            .iter()
            .copied()
            .filter(|&p| p > 0.0)
            .fold(None, |acc, p| Some(acc.map_or(p, |a: f64| a.min(p))))
    }
}

/// Validates a marginal distribution, optionally enforcing the positivity
/// floor, and hands it back on success.
pub fn validate_marginal(
    dist: MarginalDistribution,
    floor: Option<f64>,
) -> Result<MarginalDistribution> {
    // Construction already validated shape, sign, and sum; re-run the sum
    // check so tables deserialized through other paths cannot sneak by.
    let revalidated = MarginalDistribution::new(dist.grid, dist.probs)?;
    if let Some(f) = floor {
        revalidated.check_floor(f, None)?;
    }
    Ok(revalidated)
}

/// Nonnegative stock weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    weights: Vec<f64>,
}

impl Portfolio {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidPortfolio {
                detail: "portfolio must hold at least one stock".to_owned(),
            });
        }
        for (i, &w) in weights.iter().enumerate() {
            if w.is_nan() || w < 0.0 {
                return Err(Error::InvalidPortfolio {
                    detail: format!("weight {i} is {w}; weights must be nonnegative"),
                });
            }
        }
        let sum = kahan_sum(weights.iter().copied());
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidPortfolio {
                detail: format!("weights sum to {sum}, expected 1"),
            });
        }
        Ok(Self { weights })
    }

    /// Two-stock helper: weights (x1, 1 - x1).
    pub fn two_stock(x1: f64) -> Result<Self> {
        Self::new(vec![x1, 1.0 - x1])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Which side of the target hyperplane a region selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    /// Return at most alpha (L), or strictly below (L**).
    Lower,
    /// Return at least alpha (U), or strictly above (U**).
    Upper,
}

/// Selects one of the four index regions L, L**, U, U** of the return
/// lattice for a given portfolio and target.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSpec {
    pub alpha: f64,
    pub portfolio: Portfolio,
    pub sense: Sense,
    pub strict: bool,
}

impl RegionSpec {
    pub fn new(alpha: f64, portfolio: Portfolio, sense: Sense, strict: bool) -> Self {
        Self {
            alpha,
            portfolio,
            sense,
            strict,
        }
    }

    pub fn k(&self) -> usize {
        self.portfolio.len()
    }

    /// Membership of a return vector, with deterministic boundary ties:
    /// points on the hyperplane (within [`BOUNDARY_TOL`]) belong to
    /// non-strict regions and are excluded from strict ones.
    pub fn member(&self, returns: &[f64]) -> Result<bool> {
        if returns.len() != self.portfolio.len() {
            return Err(Error::DimensionMismatch {
                expected: self.portfolio.len(),
                got: returns.len(),
            });
        }
        let combined = kahan_sum(
            self.portfolio
                .weights()
                .iter()
                .zip(returns)
                .map(|(&w, &r)| w * r),
        );
        Ok(self.classify(combined))
    }

    /// Membership from a precomputed combined return.
    pub fn classify(&self, combined: f64) -> bool {
        classify_threshold(self.sense, self.strict, combined - self.alpha)
    }

    /// The complementary region: the complement of L is U**, of L** is U,
    /// and vice versa.
    pub fn complement(&self) -> RegionSpec {
        RegionSpec {
            alpha: self.alpha,
            portfolio: self.portfolio.clone(),
            sense: match self.sense {
                Sense::Lower => Sense::Upper,
                Sense::Upper => Sense::Lower,
            },
            strict: !self.strict,
        }
    }
}

/// Membership test for one lattice point; `delta` holds grid returns.
pub fn region_membership(spec: &RegionSpec, delta: &[f64]) -> Result<bool> {
    spec.member(delta)
}

/// Shared boundary rule: `diff` is the combined return minus the target.
/// Points within [`BOUNDARY_TOL`] of the target hyperplane belong to
/// non-strict regions and never to strict ones.
pub fn classify_threshold(sense: Sense, strict: bool, diff: f64) -> bool {
    match (sense, strict) {
        (Sense::Lower, false) => diff <= BOUNDARY_TOL,
        (Sense::Lower, true) => diff < -BOUNDARY_TOL,
        (Sense::Upper, false) => diff >= -BOUNDARY_TOL,
        (Sense::Upper, true) => diff > BOUNDARY_TOL,
    }
}

/// A k-dimensional joint distribution with entries indexed by the grid in
/// every axis (row-major over axis levels from m1 to m2).
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    grid: ReturnGrid,
    k: usize,
    entries: Vec<f64>,
}

impl JointTable {
    pub fn new(grid: ReturnGrid, k: usize, entries: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidTable {
                detail: "joint table needs at least one axis".to_owned(),
            });
        }
        let expected = grid
            .len()
            .checked_pow(k as u32)
            .ok_or(Error::InvalidTable {
                detail: "table size overflows".to_owned(),
            })?;
        if entries.len() != expected {
            return Err(Error::InvalidTable {
                detail: format!("expected {expected} entries, got {}", entries.len()),
            });
        }
        if let Some((i, &v)) = entries
            .iter()
            .enumerate()
            .find(|(_, &v)| v.is_nan() || v < 0.0)
        {
            return Err(Error::InvalidTable {
                detail: format!("entry {i} is {v}; entries must be nonnegative"),
            });
        }
        let total = kahan_sum(entries.iter().copied());
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidTable {
                detail: format!("entries sum to {total}, expected 1"),
            });
        }
        Ok(Self { grid, k, entries })
    }

    pub fn grid(&self) -> &ReturnGrid {
        &self.grid
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    fn index_of(&self, offsets: &[usize]) -> usize {
        let m = self.grid.len();
        offsets.iter().fold(0usize, |acc, &o| acc * m + o)
    }

    pub fn entry_at(&self, offsets: &[usize]) -> f64 {
        self.entries[self.index_of(offsets)]
    }

    /// Axis slice sum: the marginal probability this table induces for
    /// `axis` taking the grid point at `offset`.
    pub fn slice_sum(&self, axis: usize, offset: usize) -> f64 {
        let m = self.grid.len();
        let mut acc = KahanSum::new();
        let mut idx = vec![0usize; self.k];
        loop {
            idx[axis] = offset;
            acc.add(self.entries[self.index_of(&idx)]);
            // advance the counter over the remaining axes
            let mut axis_to_bump = None;
            for a in (0..self.k).rev() {
                if a == axis {
                    continue;
                }
                if idx[a] + 1 < m {
                    axis_to_bump = Some(a);
                    break;
                }
                idx[a] = 0;
            }
            match axis_to_bump {
                Some(a) => idx[a] += 1,
                None => break,
            }
        }
        acc.value()
    }

    /// Verifies every axis slice sum against the declared marginals.
    pub fn check_marginals(&self, dists: &[MarginalDistribution]) -> Result<()> {
        if dists.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: dists.len(),
            });
        }
        for (axis, dist) in dists.iter().enumerate() {
            if dist.grid() != &self.grid {
                return Err(Error::GridMismatch {
                    detail: format!("marginal {axis} lives on a different grid"),
                });
            }
            for level in self.grid.levels() {
                let got = self.slice_sum(axis, self.grid.offset(level));
                let want = dist.prob_at(level);
                if (got - want).abs() > SUM_TOL {
                    return Err(Error::InvalidTable {
                        detail: format!(
                            "axis {axis} slice at level {level} sums to {got}, marginal says {want}"
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Product table of the given marginals: the independent joint
/// distribution, always strictly inside the feasible set when the
/// marginals are positive. Serves as the sampler's warm start.
pub fn independence_table(dists: &[MarginalDistribution]) -> Result<JointTable> {
    let first = dists.first().ok_or(Error::DimensionMismatch {
        expected: 1,
        got: 0,
    })?;
    let grid = *first.grid();
    for d in dists {
        if d.grid() != &grid {
            return Err(Error::GridMismatch {
                detail: "all marginals must share one grid".to_owned(),
            });
        }
    }
    let k = dists.len();
    let m = grid.len();
    let total = m.pow(k as u32);
    let mut entries = vec![0.0; total];
    for (idx, slot) in entries.iter_mut().enumerate() {
        let mut rem = idx;
        let mut p = 1.0;
        for axis in (0..k).rev() {
            let off = rem % m;
            rem /= m;
            p *= dists[axis].probs()[off];
        }
        *slot = p;
    }
    JointTable::new(grid, k, entries)
}

/// Probability mass the table places in the region.
pub fn region_mass(table: &JointTable, spec: &RegionSpec) -> Result<f64> {
    if spec.k() != table.k() {
        return Err(Error::DimensionMismatch {
            expected: table.k(),
            got: spec.k(),
        });
    }
    let grid = table.grid();
    let m = grid.len();
    let k = table.k();
    let weights = spec.portfolio.weights();
    let mut acc = KahanSum::new();
    let mut offsets = vec![0usize; k];
    'outer: loop {
        let combined = kahan_sum(
            offsets
                .iter()
                .zip(weights)
                .map(|(&o, &w)| w * grid.return_at(grid.m1() + o as i64)),
        );
        if spec.classify(combined) {
            acc.add(table.entry_at(&offsets));
        }
        for a in (0..k).rev() {
            if offsets[a] + 1 < m {
                offsets[a] += 1;
                continue 'outer;
            }
            offsets[a] = 0;
        }
        break;
    }
    Ok(acc.value().clamp(0.0, 1.0))
}

/// Investor attitude: a risk-averse investor cares about the probability of
/// returning at most alpha, an aggressive one about at least alpha.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Investor {
    RiskAverse,
    Aggressive,
}

/// Which feasible joint distribution the probability is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseKind {
    Best,
    Worst,
    Average,
}

/// One of the twelve objectives: investor x case, with the strict variant
/// replacing "at most"/"at least" by "strictly below"/"strictly above".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Objective {
    pub investor: Investor,
    pub case: CaseKind,
    pub strict: bool,
}

impl Objective {
    pub const fn new(investor: Investor, case: CaseKind, strict: bool) -> Self {
        Self {
            investor,
            case,
            strict,
        }
    }

    /// All twelve objectives, in a fixed order.
    pub fn all() -> Vec<Objective> {
        let mut out = Vec::with_capacity(12);
        for investor in [Investor::RiskAverse, Investor::Aggressive] {
            for case in [CaseKind::Best, CaseKind::Worst, CaseKind::Average] {
                for strict in [false, true] {
                    out.push(Objective::new(investor, case, strict));
                }
            }
        }
        out
    }

    /// Parses names like `ra_w`, `ag_b`, `ra_a`; the strict variants take a
    /// `**` suffix (or are requested via a separate flag by the CLI).
    pub fn parse(name: &str) -> Option<Objective> {
        let (base, strict) = match name.strip_suffix("**") {
            Some(b) => (b, true),
            None => (name, false),
        };
        let (investor, case) = match base {
            "ra_b" => (Investor::RiskAverse, CaseKind::Best),
            "ra_w" => (Investor::RiskAverse, CaseKind::Worst),
            "ra_a" => (Investor::RiskAverse, CaseKind::Average),
            "ag_b" => (Investor::Aggressive, CaseKind::Best),
            "ag_w" => (Investor::Aggressive, CaseKind::Worst),
            "ag_a" => (Investor::Aggressive, CaseKind::Average),
            _ => return None,
        };
        Some(Objective::new(investor, case, strict))
    }

    pub fn name(&self) -> String {
        let base = match (self.investor, self.case) {
            (Investor::RiskAverse, CaseKind::Best) => "ra_b",
            (Investor::RiskAverse, CaseKind::Worst) => "ra_w",
            (Investor::RiskAverse, CaseKind::Average) => "ra_a",
            (Investor::Aggressive, CaseKind::Best) => "ag_b",
            (Investor::Aggressive, CaseKind::Worst) => "ag_w",
            (Investor::Aggressive, CaseKind::Average) => "ag_a",
        };
        if self.strict {
            format!("{base}**")
        } else {
            base.to_owned()
        }
    }

    /// The region this objective's probability is defined on, for a given
    /// portfolio and target.
    pub fn region(&self, alpha: f64, portfolio: Portfolio) -> RegionSpec {
        let sense = match self.investor {
            Investor::RiskAverse => Sense::Lower,
            Investor::Aggressive => Sense::Upper,
        };
        RegionSpec::new(alpha, portfolio, sense, self.strict)
    }

    /// How the investor optimizes this objective's value over portfolios.
    pub fn direction(&self) -> OptimizeDirection {
        match self.investor {
            Investor::RiskAverse => OptimizeDirection::Minimize,
            Investor::Aggressive => OptimizeDirection::Maximize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizeDirection {
    Minimize,
    Maximize,
}

/// Extremum, or average, taken over the feasible joint tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CanonicalKind {
    /// max over tables of the region mass (worst case for a risk-averse
    /// investor, whose region is a loss region).
    WorstType,
    /// min over tables of the region mass.
    BestType,
    /// mean of the region mass under the uniform distribution over tables.
    AverageType,
}

/// Canonical form of an objective: every one of the twelve reduces to a
/// lower-region computation that is *minimized* over portfolios, with an
/// optional final complement. Aggressive objectives complement both the
/// value and (implicitly) the optimization direction: maximizing the
/// original is minimizing the canonical value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CanonicalTask {
    /// Canonical region is L(alpha, x) when false, L**(alpha, x) when true.
    pub strict_lower: bool,
    pub kind: CanonicalKind,
    /// Objective value = 1 - canonical value when set.
    pub complement: bool,
}

impl CanonicalTask {
    /// The region the canonical computation runs on.
    pub fn region(&self, alpha: f64, portfolio: Portfolio) -> RegionSpec {
        RegionSpec::new(alpha, portfolio, Sense::Lower, self.strict_lower)
    }

    /// Maps the canonical extremum to the flow computation that evaluates
    /// it: a worst-type task is a direct max-flow on its region, while a
    /// best-type task is one minus the max-flow on the complementary
    /// region. Average-type tasks have no flow form.
    pub fn flow_form(&self) -> Option<FlowForm> {
        match self.kind {
            CanonicalKind::WorstType => Some(FlowForm {
                sense: Sense::Lower,
                strict: self.strict_lower,
                complement: false,
            }),
            CanonicalKind::BestType => Some(FlowForm {
                sense: Sense::Upper,
                strict: !self.strict_lower,
                complement: true,
            }),
            CanonicalKind::AverageType => None,
        }
    }

    /// Objective value from the canonical value.
    pub fn finish(&self, canonical_value: f64) -> f64 {
        if self.complement {
            1.0 - canonical_value
        } else {
            canonical_value
        }
    }
}

/// A max-region-mass computation (the quantity a maximum flow evaluates),
/// plus whether the canonical value is its complement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlowForm {
    pub sense: Sense,
    pub strict: bool,
    /// canonical value = 1 - flow value when set.
    pub complement: bool,
}

impl FlowForm {
    pub fn region(&self, alpha: f64, portfolio: Portfolio) -> RegionSpec {
        RegionSpec::new(alpha, portfolio, self.sense, self.strict)
    }

    pub fn finish(&self, flow_value: f64) -> f64 {
        if self.complement {
            1.0 - flow_value
        } else {
            flow_value
        }
    }
}

/// Reduces any of the twelve objectives to its canonical lower-region task.
///
/// Risk-averse objectives are already canonical. Aggressive ones satisfy
/// AG(case, strict) = 1 - RA(case, not strict) pointwise in the portfolio,
/// because the "at least" region is the complement of the strict "below"
/// region; maximizing the aggressive objective therefore minimizes the
/// canonical value.
pub fn reduce_objective(obj: Objective) -> CanonicalTask {
    let kind = match obj.case {
        CaseKind::Worst => CanonicalKind::WorstType,
        CaseKind::Best => CanonicalKind::BestType,
        CaseKind::Average => CanonicalKind::AverageType,
    };
    match obj.investor {
        Investor::RiskAverse => CanonicalTask {
            strict_lower: obj.strict,
            kind,
            complement: false,
        },
        Investor::Aggressive => CanonicalTask {
            strict_lower: !obj.strict,
            kind,
            complement: true,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coin_grid() -> ReturnGrid {
        ReturnGrid::new(100.0, 0, 1).unwrap()
    }

    fn coin(probs: [f64; 2]) -> MarginalDistribution {
        MarginalDistribution::new(coin_grid(), probs.to_vec()).unwrap()
    }

    #[test]
    fn validate_marginal_accepts_symmetric_two_point() {
        let d = MarginalDistribution::new(ReturnGrid::new(1.0, 0, 1).unwrap(), vec![0.5, 0.5]);
        assert!(d.is_ok());
    }

    #[test]
    fn validate_marginal_rejects_bad_sum() {
        let err = MarginalDistribution::new(ReturnGrid::new(1.0, 0, 1).unwrap(), vec![0.6, 0.5])
            .unwrap_err();
        match err {
            Error::SumNotOne { sum, deviation, .. } => {
                assert!((sum - 1.1).abs() < 1e-12);
                assert!((deviation - 0.1).abs() < 1e-12);
            }
            other => panic!("expected SumNotOne, got {other:?}"),
        }
    }

    #[test]
    fn validate_marginal_rejects_negative() {
        let err = MarginalDistribution::new(ReturnGrid::new(1.0, 0, 1).unwrap(), vec![-0.1, 1.1])
            .unwrap_err();
        assert!(matches!(err, Error::NegativeProbability { .. }));
    }

    #[test]
    fn validate_marginal_floor_flag() {
        let d = MarginalDistribution::new(
            ReturnGrid::new(1.0, 0, 2).unwrap(),
            vec![0.5, 1e-6, 0.499999],
        )
        .unwrap();
        assert!(validate_marginal(d.clone(), None).is_ok());
        assert!(matches!(
            validate_marginal(d, Some(1e-3)).unwrap_err(),
            Error::FloorViolation { .. }
        ));
    }

    #[test]
    fn grid_rejects_degenerate() {
        assert!(ReturnGrid::new(0.0, 0, 1).is_err());
        assert!(ReturnGrid::new(1.0, 3, 3).is_err());
        assert!(ReturnGrid::new(1.0, -5, -2).is_ok());
    }

    #[test]
    fn independence_table_uniform_coins() {
        let t = independence_table(&[coin([0.5, 0.5]), coin([0.5, 0.5])]).unwrap();
        assert_eq!(t.entries(), &[0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn independence_table_degenerate_marginal() {
        let t = independence_table(&[coin([1.0, 0.0]), coin([0.3, 0.7])]).unwrap();
        assert_eq!(t.entries(), &[0.3, 0.7, 0.0, 0.0]);
    }

    #[test]
    fn independence_table_generic_product() {
        let t = independence_table(&[coin([0.2, 0.8]), coin([0.4, 0.6])]).unwrap();
        let want = [0.08, 0.12, 0.32, 0.48];
        for (got, want) in t.entries().iter().zip(want) {
            assert!((got - want).abs() < 1e-15);
        }
        t.check_marginals(&[coin([0.2, 0.8]), coin([0.4, 0.6])])
            .unwrap();
    }

    #[test]
    fn independence_table_marginals_exact() {
        // Analytic marginal property holds to round-off for a 3-point grid.
        let grid = ReturnGrid::new(2.0, -1, 1).unwrap();
        let a = MarginalDistribution::new(grid, vec![0.2, 0.3, 0.5]).unwrap();
        let b = MarginalDistribution::new(grid, vec![0.6, 0.1, 0.3]).unwrap();
        let t = independence_table(&[a.clone(), b.clone()]).unwrap();
        for axis in 0..2 {
            let d = if axis == 0 { &a } else { &b };
            for level in grid.levels() {
                let got = t.slice_sum(axis, grid.offset(level));
                assert!((got - d.prob_at(level)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn region_membership_boundary_ties() {
        let x = Portfolio::new(vec![0.5, 0.5]).unwrap();
        let lower = RegionSpec::new(50.0, x.clone(), Sense::Lower, false);
        let lower_strict = RegionSpec::new(50.0, x.clone(), Sense::Lower, true);
        assert!(region_membership(&lower, &[0.0, 100.0]).unwrap());
        assert!(!region_membership(&lower_strict, &[0.0, 100.0]).unwrap());
        assert!(!region_membership(&lower, &[100.0, 100.0]).unwrap());
    }

    #[test]
    fn region_membership_dimension_mismatch() {
        let x = Portfolio::new(vec![0.5, 0.5]).unwrap();
        let spec = RegionSpec::new(50.0, x, Sense::Lower, false);
        assert!(matches!(
            region_membership(&spec, &[1.0]).unwrap_err(),
            Error::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn region_mass_coin_pair() {
        let t = independence_table(&[coin([0.5, 0.5]), coin([0.5, 0.5])]).unwrap();
        let spec = RegionSpec::new(
            50.0,
            Portfolio::new(vec![0.5, 0.5]).unwrap(),
            Sense::Lower,
            false,
        );
        let mass = region_mass(&t, &spec).unwrap();
        assert!((mass - 0.75).abs() < 1e-12);
    }

    #[test]
    fn region_mass_saturates_at_grid_ends() {
        let t = independence_table(&[coin([0.3, 0.7]), coin([0.5, 0.5])]).unwrap();
        let x = Portfolio::new(vec![0.4, 0.6]).unwrap();
        let all = RegionSpec::new(100.0, x.clone(), Sense::Lower, false);
        assert!((region_mass(&t, &all).unwrap() - 1.0).abs() < 1e-12);
        let none = RegionSpec::new(-1.0, x, Sense::Lower, false);
        assert_eq!(region_mass(&t, &none).unwrap(), 0.0);
    }

    #[test]
    fn lower_and_strict_upper_partition() {
        let t = independence_table(&[coin([0.2, 0.8]), coin([0.4, 0.6])]).unwrap();
        for alpha in [-10.0, 0.0, 30.0, 50.0, 100.0, 140.0] {
            let x = Portfolio::new(vec![0.3, 0.7]).unwrap();
            let lower = RegionSpec::new(alpha, x.clone(), Sense::Lower, false);
            let upper_strict = RegionSpec::new(alpha, x, Sense::Upper, true);
            let sum = region_mass(&t, &lower).unwrap() + region_mass(&t, &upper_strict).unwrap();
            assert!((sum - 1.0).abs() < 1e-9, "alpha={alpha}: sum={sum}");
        }
    }

    #[test]
    fn reduce_objective_canonical_cases() {
        // Worst-case risk-averse is already canonical.
        let raw = reduce_objective(Objective::new(Investor::RiskAverse, CaseKind::Worst, false));
        assert_eq!(
            raw,
            CanonicalTask {
                strict_lower: false,
                kind: CanonicalKind::WorstType,
                complement: false
            }
        );
        // Worst-case aggressive complements the strict-lower worst task.
        let agw = reduce_objective(Objective::new(Investor::Aggressive, CaseKind::Worst, false));
        assert_eq!(
            agw,
            CanonicalTask {
                strict_lower: true,
                kind: CanonicalKind::WorstType,
                complement: true
            }
        );
        // Best-case aggressive complements the strict-lower best task.
        let agb = reduce_objective(Objective::new(Investor::Aggressive, CaseKind::Best, false));
        assert_eq!(
            agb,
            CanonicalTask {
                strict_lower: true,
                kind: CanonicalKind::BestType,
                complement: true
            }
        );
    }

    #[test]
    fn flow_form_composition() {
        // AG_b: two complements cancel into a direct upper-region flow.
        let task = reduce_objective(Objective::new(Investor::Aggressive, CaseKind::Best, false));
        let form = task.flow_form().unwrap();
        assert_eq!(form.sense, Sense::Upper);
        assert!(!form.strict);
        assert!(form.complement);
        let flow = 0.3;
        assert!((task.finish(form.finish(flow)) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn objective_names_round_trip() {
        for obj in Objective::all() {
            assert_eq!(Objective::parse(&obj.name()), Some(obj));
        }
    }
}

//! Approximately uniform sampling of two-stock joint tables and the Monte
//! Carlo estimator for average-case objectives.
//!
//! The feasible tables with prescribed row and column sums form a
//! transportation polytope inside an affine subspace spanned by the
//! checkerboard moves b(ij) (+1/-1/-1/+1 on a 2x2 block). A hit-and-run
//! walk stays in the subspace by construction: draw a random direction in
//! the span of the moves, compute the feasible chord by a min-ratio test
//! over the entries, and jump to a uniform point on the chord. The chain
//! is seed-deterministic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numeric::KahanSum;
use crate::return_model::{
    reduce_objective, CanonicalKind, JointTable, MarginalDistribution, Objective, Portfolio,
    RegionSpec, ReturnGrid, Sense, SUM_TOL,
};
use crate::{Error, Result};

/// Entries may dip this far below zero before a point is rejected.
pub const NONNEG_TOL: f64 = 1e-12;

/// Feasible two-stock joint tables as a polytope of nonnegative matrices
/// with prescribed row and column sums. Zero-probability returns are
/// eliminated up front: their rows and columns are identically zero in
/// every feasible table, and the dimension formula assumes positive sums.
#[derive(Debug, Clone)]
pub struct TransportationPolytope {
    grid: ReturnGrid,
    row_levels: Vec<i64>,
    col_levels: Vec<i64>,
    r: Vec<f64>,
    c: Vec<f64>,
}

impl TransportationPolytope {
    pub fn from_marginals(s1: &MarginalDistribution, s2: &MarginalDistribution) -> Result<Self> {
        if s1.grid() != s2.grid() {
            return Err(Error::GridMismatch {
                detail: "marginals on different grids".to_owned(),
            });
        }
        let grid = *s1.grid();
        let mut row_levels = Vec::new();
        let mut r = Vec::new();
        for level in grid.levels() {
            let p = s1.prob_at(level);
            if p > 0.0 {
                row_levels.push(level);
                r.push(p);
            }
        }
        let mut col_levels = Vec::new();
        let mut c = Vec::new();
        for level in grid.levels() {
            let p = s2.prob_at(level);
            if p > 0.0 {
                col_levels.push(level);
                c.push(p);
            }
        }
        Ok(Self {
            grid,
            row_levels,
            col_levels,
            r,
            c,
        })
    }

    pub fn rows(&self) -> usize {
        self.r.len()
    }

    pub fn cols(&self) -> usize {
        self.c.len()
    }

    pub fn row_sums(&self) -> &[f64] {
        &self.r
    }

    pub fn col_sums(&self) -> &[f64] {
        &self.c
    }

    /// Dimension of the affine hull: (rows - 1) * (cols - 1).
    pub fn dimension(&self) -> usize {
        (self.rows() - 1) * (self.cols() - 1)
    }

    /// Smallest marginal entry: the radius parameter controlling how fat a
    /// ball fits inside the polytope.
    pub fn min_marginal(&self) -> f64 {
        self.r
            .iter()
            .chain(self.c.iter())
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// The product table in compact (kept rows x kept cols) layout; always
    /// strictly interior when all kept sums are positive.
    pub fn independence_point(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for &ri in &self.r {
            for &cj in &self.c {
                out.push(ri * cj);
            }
        }
        out
    }

    /// Embeds a compact point into a full-grid joint table, clamping
    /// negative round-off within [`NONNEG_TOL`] to zero.
    pub fn embed(&self, compact: &[f64]) -> Result<JointTable> {
        let m = self.grid.len();
        let mut entries = vec![0.0; m * m];
        for (ri, &i) in self.row_levels.iter().enumerate() {
            for (cj, &j) in self.col_levels.iter().enumerate() {
                let v = compact[ri * self.cols() + cj];
                if v < -NONNEG_TOL {
                    return Err(Error::InvariantViolation {
                        detail: format!("sampled entry {v} fell below -{NONNEG_TOL}"),
                    });
                }
                entries[self.grid.offset(i) * m + self.grid.offset(j)] = v.max(0.0);
            }
        }
        JointTable::new(self.grid, 2, entries)
    }

    /// Projects a full table onto the compact layout, rejecting tables
    /// that put mass on eliminated rows or columns.
    pub fn compress(&self, table: &JointTable) -> Result<Vec<f64>> {
        if table.k() != 2 || table.grid() != &self.grid {
            return Err(Error::GridMismatch {
                detail: "warm start lives on a different grid".to_owned(),
            });
        }
        let m = self.grid.len();
        let mut keep = vec![false; m * m];
        let mut compact = Vec::with_capacity(self.rows() * self.cols());
        for &i in &self.row_levels {
            for &j in &self.col_levels {
                let idx = self.grid.offset(i) * m + self.grid.offset(j);
                keep[idx] = true;
                compact.push(table.entries()[idx]);
            }
        }
        for (idx, &e) in table.entries().iter().enumerate() {
            if !keep[idx] && e > NONNEG_TOL {
                return Err(Error::InfeasibleStart {
                    detail: "start table puts mass on a zero-probability return".to_owned(),
                });
            }
        }
        Ok(compact)
    }

    /// Residual of the row/column sum equalities at a compact point.
    pub fn marginal_residual(&self, compact: &[f64]) -> f64 {
        let cols = self.cols();
        let mut worst = 0.0f64;
        for (ri, &target) in self.r.iter().enumerate() {
            let mut acc = KahanSum::new();
            for cj in 0..cols {
                acc.add(compact[ri * cols + cj]);
            }
            worst = worst.max((acc.value() - target).abs());
        }
        for (cj, &target) in self.c.iter().enumerate() {
            let mut acc = KahanSum::new();
            for ri in 0..self.rows() {
                acc.add(compact[ri * cols + cj]);
            }
            worst = worst.max((acc.value() - target).abs());
        }
        worst
    }
}

/// Membership in the polytope for a point already lying in the affine
/// subspace: every entry nonnegative within [`NONNEG_TOL`]. Costs one pass
/// over the entries.
pub fn membership(poly: &TransportationPolytope, compact: &[f64]) -> bool {
    debug_assert_eq!(compact.len(), poly.rows() * poly.cols());
    compact.iter().all(|&v| v >= -NONNEG_TOL)
}

/// The checkerboard move basis: one +1/-1/-1/+1 generator anchored at
/// each interior cell, spanning the lattice of sum-preserving
/// perturbations.
#[derive(Debug, Clone)]
pub struct MoveBasis {
    rows: usize,
    cols: usize,
    /// Anchor (row, col) of each generator.
    pub generators: Vec<(usize, usize)>,
}

impl MoveBasis {
    pub fn for_polytope(poly: &TransportationPolytope) -> Self {
        let rows = poly.rows();
        let cols = poly.cols();
        let mut generators = Vec::with_capacity(poly.dimension());
        for i in 0..rows.saturating_sub(1) {
            for j in 0..cols.saturating_sub(1) {
                generators.push((i, j));
            }
        }
        Self {
            rows,
            cols,
            generators,
        }
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// Dense generator matrices, for rank checks in tests.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        self.generators
            .iter()
            .map(|&(i, j)| {
                let mut v = vec![0.0; self.rows * self.cols];
                v[i * self.cols + j] = 1.0;
                v[(i + 1) * self.cols + j] = -1.0;
                v[i * self.cols + j + 1] = -1.0;
                v[(i + 1) * self.cols + j + 1] = 1.0;
                v
            })
            .collect()
    }
}

/// Walk parameters. `steps_per_sample = None` uses 64 x dimension.
#[derive(Debug, Clone)]
pub struct WalkConfig {
    pub steps_per_sample: Option<usize>,
    pub rng_seed: u64,
    pub warm_start: Option<JointTable>,
    /// The smallest marginal entry; informational, derived when absent.
    pub ball_radius_hint: Option<f64>,
}

impl WalkConfig {
    pub fn seeded(rng_seed: u64) -> Self {
        Self {
            steps_per_sample: None,
            rng_seed,
            warm_start: None,
            ball_radius_hint: None,
        }
    }
}

/// A single hit-and-run chain over the polytope's affine hull.
pub struct HitAndRunChain {
    poly: TransportationPolytope,
    basis: MoveBasis,
    state: Vec<f64>,
    direction: Vec<f64>,
    rng: ChaCha8Rng,
    steps_per_sample: usize,
}

impl HitAndRunChain {
    pub fn new(
        poly: TransportationPolytope,
        basis: MoveBasis,
        config: &WalkConfig,
    ) -> Result<Self> {
        let state = match &config.warm_start {
            Some(table) => {
                let mut compact = poly.compress(table)?;
                if !membership(&poly, &compact) {
                    return Err(Error::InfeasibleStart {
                        detail: "start table has a negative entry".to_owned(),
                    });
                }
                if poly.marginal_residual(&compact) > SUM_TOL {
                    return Err(Error::InfeasibleStart {
                        detail: "start table violates the marginal sums".to_owned(),
                    });
                }
                // boundary starts (witness tables) get nudged toward the
                // independence table before walking
                let interior = poly.independence_point();
                if compact.iter().any(|&v| v <= NONNEG_TOL) {
                    for (x, &z) in compact.iter_mut().zip(&interior) {
                        *x = (1.0 - 1e-6) * *x + 1e-6 * z;
                    }
                }
                compact
            }
            None => poly.independence_point(),
        };
        let steps_per_sample = config
            .steps_per_sample
            .unwrap_or_else(|| 64 * poly.dimension().max(1));
        let len = state.len();
        Ok(Self {
            poly,
            basis,
            state,
            direction: vec![0.0; len],
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            steps_per_sample,
        })
    }

    pub fn polytope(&self) -> &TransportationPolytope {
        &self.poly
    }

    pub fn steps_per_sample(&self) -> usize {
        self.steps_per_sample
    }

    fn step(&mut self) {
        let cols = self.poly.cols();
        self.direction.iter_mut().for_each(|d| *d = 0.0);
        let mut magnitude = 0.0f64;
        for &(i, j) in &self.basis.generators {
            let g: f64 = self.rng.sample(StandardNormal);
            magnitude = magnitude.max(g.abs());
            self.direction[i * cols + j] += g;
            self.direction[(i + 1) * cols + j] -= g;
            self.direction[i * cols + j + 1] -= g;
            self.direction[(i + 1) * cols + j + 1] += g;
        }
        if magnitude < 1e-300 {
            return; // degenerate draw; keep the current point
        }
        let mut t_lo = f64::NEG_INFINITY;
        let mut t_hi = f64::INFINITY;
        for (&x, &d) in self.state.iter().zip(&self.direction) {
            if d > 1e-14 {
                t_lo = t_lo.max(-x / d);
            } else if d < -1e-14 {
                t_hi = t_hi.min(x / -d);
            }
        }
        if !t_lo.is_finite() || !t_hi.is_finite() || t_lo > t_hi {
            return;
        }
        let t = self.rng.gen_range(0.0..=1.0) * (t_hi - t_lo) + t_lo;
        for (x, &d) in self.state.iter_mut().zip(&self.direction) {
            *x += t * d;
        }
    }

    /// Runs one sampling round and returns the current point, compact.
    pub fn next_compact(&mut self) -> &[f64] {
        if self.poly.dimension() > 0 {
            for _ in 0..self.steps_per_sample {
                self.step();
            }
        }
        &self.state
    }

    /// Runs one sampling round and embeds the point into a full table.
    pub fn next_sample(&mut self) -> Result<JointTable> {
        if self.poly.dimension() > 0 {
            for _ in 0..self.steps_per_sample {
                self.step();
            }
        }
        self.poly.embed(&self.state)
    }
}

/// Draws one approximately uniform feasible table.
pub fn sample_table(
    poly: &TransportationPolytope,
    basis: &MoveBasis,
    config: &WalkConfig,
) -> Result<JointTable> {
    HitAndRunChain::new(poly.clone(), basis.clone(), config)?.next_sample()
}

/// Estimator configuration: the walk plus how many independent chains the
/// sample budget is split across (merged by weighted mean).
#[derive(Debug, Clone)]
pub struct EstimateConfig {
    pub walk: WalkConfig,
    pub chains: usize,
}

impl EstimateConfig {
    pub fn seeded(rng_seed: u64) -> Self {
        Self {
            walk: WalkConfig::seeded(rng_seed),
            chains: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub estimate: f64,
    pub samples: u64,
    pub chains: usize,
    pub steps_per_sample: usize,
}

/// Mean of a region's mass over N = ceil(100 / (eps^2 delta)) sampled
/// tables. The sample count is the conservative constant from the
/// estimation procedure; a Chebyshev argument already works with a
/// fraction of it.
pub fn estimate_region_average(
    s1: &MarginalDistribution,
    s2: &MarginalDistribution,
    spec: &RegionSpec,
    epsilon: f64,
    delta: f64,
    config: &EstimateConfig,
) -> Result<EstimateReport> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidTolerance {
            name: "epsilon",
            value: epsilon,
        });
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidTolerance {
            name: "delta",
            value: delta,
        });
    }
    if spec.k() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: spec.k(),
        });
    }
    let samples = (100.0 / (epsilon * epsilon * delta)).ceil() as u64;
    let poly = TransportationPolytope::from_marginals(s1, s2)?;

    // membership mask over the kept support
    let grid = poly.grid;
    let mask: Vec<bool> = poly
        .row_levels
        .iter()
        .flat_map(|&i| {
            poly.col_levels
                .iter()
                .map(move |&j| (grid.return_at(i), grid.return_at(j)))
        })
        .map(|(d1, d2)| spec.member(&[d1, d2]).unwrap_or(false))
        .collect();

    // constant regions need no sampling: the mass is the same for every
    // feasible table
    let chains = config.chains.max(1);
    let steps = config
        .walk
        .steps_per_sample
        .unwrap_or_else(|| 64 * poly.dimension().max(1));
    if mask.iter().all(|&b| b) {
        return Ok(EstimateReport {
            estimate: 1.0,
            samples,
            chains,
            steps_per_sample: steps,
        });
    }
    if mask.iter().all(|&b| !b) {
        return Ok(EstimateReport {
            estimate: 0.0,
            samples,
            chains,
            steps_per_sample: steps,
        });
    }

    let basis = MoveBasis::for_polytope(&poly);
    let per_chain = samples / chains as u64;
    let remainder = samples % chains as u64;
    let mut total = KahanSum::new();
    for chain_idx in 0..chains {
        let mut walk = config.walk.clone();
        walk.rng_seed = walk.rng_seed.wrapping_add(chain_idx as u64);
        let mut chain = HitAndRunChain::new(poly.clone(), basis.clone(), &walk)?;
        let n = per_chain + if (chain_idx as u64) < remainder { 1 } else { 0 };
        for _ in 0..n {
            let point = chain.next_compact();
            let mut mass = KahanSum::new();
            for (&x, &inside) in point.iter().zip(&mask) {
                if inside {
                    mass.add(x);
                }
            }
            total.add(mass.value().clamp(0.0, 1.0));
        }
    }
    Ok(EstimateReport {
        estimate: (total.value() / samples as f64).clamp(0.0, 1.0),
        samples,
        chains,
        steps_per_sample: steps,
    })
}

/// Average probability that the portfolio return is at most alpha, over
/// approximately uniform feasible tables.
pub fn estimate_average(
    s1: &MarginalDistribution,
    s2: &MarginalDistribution,
    alpha: f64,
    portfolio: &Portfolio,
    epsilon: f64,
    delta: f64,
    config: &EstimateConfig,
) -> Result<EstimateReport> {
    let spec = RegionSpec::new(alpha, portfolio.clone(), Sense::Lower, false);
    estimate_region_average(s1, s2, &spec, epsilon, delta, config)
}

/// Routes any average-case objective through its canonical lower-region
/// estimate and complement.
#[allow(clippy::too_many_arguments)]
pub fn average_objective(
    s1: &MarginalDistribution,
    s2: &MarginalDistribution,
    alpha: f64,
    portfolio: &Portfolio,
    objective: Objective,
    epsilon: f64,
    delta: f64,
    config: &EstimateConfig,
) -> Result<EstimateReport> {
    let task = reduce_objective(objective);
    if task.kind != CanonicalKind::AverageType {
        return Err(Error::NonAverageObjective);
    }
    let spec = task.region(alpha, portfolio.clone());
    let mut report = estimate_region_average(s1, s2, &spec, epsilon, delta, config)?;
    report.estimate = task.finish(report.estimate).clamp(0.0, 1.0);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::return_model::{CaseKind, Investor};

    fn grid2() -> ReturnGrid {
        ReturnGrid::new(100.0, 0, 1).unwrap()
    }

    fn coin(p: f64) -> MarginalDistribution {
        MarginalDistribution::new(grid2(), vec![p, 1.0 - p]).unwrap()
    }

    #[test]
    fn polytope_dimension_and_elimination() {
        let poly = TransportationPolytope::from_marginals(&coin(0.5), &coin(0.5)).unwrap();
        assert_eq!(poly.dimension(), 1);
        // a degenerate marginal collapses a row
        let poly = TransportationPolytope::from_marginals(&coin(1.0), &coin(0.5)).unwrap();
        assert_eq!(poly.rows(), 1);
        assert_eq!(poly.dimension(), 0);
    }

    #[test]
    fn zero_dimensional_polytope_returns_the_point() {
        let poly = TransportationPolytope::from_marginals(&coin(1.0), &coin(0.5)).unwrap();
        let basis = MoveBasis::for_polytope(&poly);
        let t = sample_table(&poly, &basis, &WalkConfig::seeded(7)).unwrap();
        // the single feasible table is the product row
        assert!((t.entries()[0] - 0.5).abs() < 1e-15);
        assert!((t.entries()[1] - 0.5).abs() < 1e-15);
        assert_eq!(t.entries()[2], 0.0);
        assert_eq!(t.entries()[3], 0.0);
    }

    #[test]
    fn membership_flags_negative_entries() {
        let poly = TransportationPolytope::from_marginals(&coin(0.5), &coin(0.5)).unwrap();
        assert!(membership(&poly, &poly.independence_point()));
        assert!(!membership(&poly, &[-0.01, 0.51, 0.51, -0.01]));
    }

    #[test]
    fn basis_generators_are_independent() {
        let grid = ReturnGrid::new(1.0, 0, 2).unwrap();
        let u = MarginalDistribution::new(grid, vec![0.3, 0.3, 0.4]).unwrap();
        let poly = TransportationPolytope::from_marginals(&u, &u).unwrap();
        let basis = MoveBasis::for_polytope(&poly);
        assert_eq!(basis.len(), 4);
        // Gaussian elimination on the dense generators finds full rank
        let mut rows = basis.dense();
        let mut rank = 0;
        for col in 0..rows[0].len() {
            if let Some(pivot) = (rank..rows.len()).find(|&r| rows[r][col].abs() > 1e-9) {
                rows.swap(rank, pivot);
                for r in 0..rows.len() {
                    if r != rank && rows[r][col].abs() > 0.0 {
                        let f = rows[r][col] / rows[rank][col];
                        for c in 0..rows[0].len() {
                            rows[r][c] -= f * rows[rank][c];
                        }
                    }
                }
                rank += 1;
            }
        }
        assert_eq!(rank, basis.len());
    }

    #[test]
    fn generators_preserve_marginals() {
        let poly = TransportationPolytope::from_marginals(&coin(0.4), &coin(0.7)).unwrap();
        let basis = MoveBasis::for_polytope(&poly);
        let mut chain = HitAndRunChain::new(poly.clone(), basis, &WalkConfig::seeded(11)).unwrap();
        for _ in 0..100 {
            let point = chain.next_compact().to_vec();
            assert!(poly.marginal_residual(&point) <= 1e-9);
            assert!(membership(&poly, &point));
        }
    }

    #[test]
    fn chains_are_seed_deterministic() {
        let poly = TransportationPolytope::from_marginals(&coin(0.5), &coin(0.5)).unwrap();
        let basis = MoveBasis::for_polytope(&poly);
        let a = sample_table(&poly, &basis, &WalkConfig::seeded(42)).unwrap();
        let b = sample_table(&poly, &basis, &WalkConfig::seeded(42)).unwrap();
        assert_eq!(a.entries(), b.entries());
        let c = sample_table(&poly, &basis, &WalkConfig::seeded(43)).unwrap();
        assert_ne!(a.entries(), c.entries());
    }

    #[test]
    fn boundary_warm_start_is_nudged_inside() {
        let poly = TransportationPolytope::from_marginals(&coin(0.5), &coin(0.5)).unwrap();
        let basis = MoveBasis::for_polytope(&poly);
        // vertex table: all mass on the diagonal
        let vertex = JointTable::new(grid2(), 2, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let mut config = WalkConfig::seeded(5);
        config.warm_start = Some(vertex);
        let t = sample_table(&poly, &basis, &config).unwrap();
        t.check_marginals(&[coin(0.5), coin(0.5)]).unwrap();
    }

    #[test]
    fn one_dimensional_chain_is_uniform() {
        // Kolmogorov-Smirnov at the 1% level against Uniform[0, 0.5] for
        // the free entry of the coin-pair polytope.
        let poly = TransportationPolytope::from_marginals(&coin(0.5), &coin(0.5)).unwrap();
        let basis = MoveBasis::for_polytope(&poly);
        let mut config = WalkConfig::seeded(1234);
        config.steps_per_sample = Some(100);
        let mut chain = HitAndRunChain::new(poly, basis, &config).unwrap();
        let n = 10_000;
        let mut values: Vec<f64> = (0..n).map(|_| chain.next_compact()[0]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d = 0.0f64;
        for (idx, &v) in values.iter().enumerate() {
            let f = (v / 0.5).clamp(0.0, 1.0);
            d = d.max((f - idx as f64 / n as f64).abs());
            d = d.max((f - (idx + 1) as f64 / n as f64).abs());
        }
        let critical = 1.6276 / (n as f64).sqrt();
        assert!(d < critical, "KS statistic {d} exceeds {critical}");
    }

    #[test]
    fn estimator_short_circuits_constant_regions() {
        let x = Portfolio::two_stock(0.5).unwrap();
        let config = EstimateConfig::seeded(3);
        let hi = estimate_average(&coin(0.5), &coin(0.5), 150.0, &x, 0.1, 0.1, &config).unwrap();
        assert_eq!(hi.estimate, 1.0);
        assert_eq!(hi.samples, 100_000);
        let lo = estimate_average(&coin(0.5), &coin(0.5), -10.0, &x, 0.1, 0.1, &config).unwrap();
        assert_eq!(lo.estimate, 0.0);
    }

    #[test]
    fn estimator_matches_closed_form_on_coin_pair() {
        let x = Portfolio::two_stock(0.5).unwrap();
        let mut config = EstimateConfig::seeded(17);
        config.walk.steps_per_sample = Some(8);
        let report = estimate_average(&coin(0.5), &coin(0.5), 50.0, &x, 0.1, 0.2, &config).unwrap();
        assert!(
            (report.estimate - 0.75).abs() < 0.05,
            "estimate {} too far from 0.75",
            report.estimate
        );
    }

    #[test]
    fn aggressive_average_complements() {
        let x = Portfolio::two_stock(0.5).unwrap();
        let mut config = EstimateConfig::seeded(23);
        config.walk.steps_per_sample = Some(8);
        let ag_a = Objective::new(Investor::Aggressive, CaseKind::Average, false);
        let report =
            average_objective(&coin(0.5), &coin(0.5), 50.0, &x, ag_a, 0.1, 0.2, &config).unwrap();
        // 1 - E[strictly-below mass] = 1 - 0.25
        assert!((report.estimate - 0.75).abs() < 0.05);
        let ra_a = Objective::new(Investor::RiskAverse, CaseKind::Average, false);
        assert_eq!(
            average_objective(&coin(0.5), &coin(0.5), -10.0, &x, ra_a, 0.1, 0.1, &config)
                .unwrap()
                .estimate,
            0.0
        );
        let below =
            average_objective(&coin(0.5), &coin(0.5), -10.0, &x, ag_a, 0.1, 0.1, &config).unwrap();
        assert_eq!(below.estimate, 1.0);
    }

    #[test]
    fn single_sample_variance_is_bounded() {
        // region masses live in [0,1], so the per-sample variance cannot
        // exceed one; check the empirical figure on a generic polytope
        let grid = ReturnGrid::new(1.0, 0, 3).unwrap();
        let s1 = MarginalDistribution::new(grid, vec![0.3, 0.2, 0.4, 0.1]).unwrap();
        let s2 = MarginalDistribution::new(grid, vec![0.25, 0.25, 0.25, 0.25]).unwrap();
        let spec = RegionSpec::new(1.4, Portfolio::two_stock(0.6).unwrap(), Sense::Lower, false);
        let poly = TransportationPolytope::from_marginals(&s1, &s2).unwrap();
        let basis = MoveBasis::for_polytope(&poly);
        let mut chain = HitAndRunChain::new(poly.clone(), basis, &WalkConfig::seeded(99)).unwrap();
        let n = 500;
        let mut masses = Vec::with_capacity(n);
        for _ in 0..n {
            let table = chain.next_sample().unwrap();
            masses.push(crate::return_model::region_mass(&table, &spec).unwrap());
        }
        let mean: f64 = masses.iter().sum::<f64>() / n as f64;
        let var: f64 = masses.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        assert!(var <= 1.0, "variance {var}");
    }

    #[test]
    fn invalid_tolerances_rejected() {
        let x = Portfolio::two_stock(0.5).unwrap();
        let config = EstimateConfig::seeded(1);
        assert!(matches!(
            estimate_average(&coin(0.5), &coin(0.5), 50.0, &x, 0.0, 0.1, &config).unwrap_err(),
            Error::InvalidTolerance { .. }
        ));
        assert!(matches!(
            estimate_average(&coin(0.5), &coin(0.5), 50.0, &x, 0.1, 1.5, &config).unwrap_err(),
            Error::InvalidTolerance { .. }
        ));
    }

    #[test]
    fn non_average_objective_rejected() {
        let x = Portfolio::two_stock(0.5).unwrap();
        let config = EstimateConfig::seeded(1);
        let ra_w = Objective::new(Investor::RiskAverse, CaseKind::Worst, false);
        assert!(matches!(
            average_objective(&coin(0.5), &coin(0.5), 50.0, &x, ra_w, 0.1, 0.1, &config)
                .unwrap_err(),
            Error::NonAverageObjective
        ));
    }
}

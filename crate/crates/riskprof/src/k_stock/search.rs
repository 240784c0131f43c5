//! Fixed-k portfolio search: exhaustive over the cent lattice, or over
//! candidate portfolios read off the hyperplane arrangement through the
//! target point.

use std::collections::HashSet;

use super::exact::{lp_region_extremum, table_lp};
use super::simplex::solve_lp;
use super::striping::cents_region_extremum;
use super::DEFAULT_ENTRY_BUDGET;
use crate::portfolio_sweep::{candidate_sequence, IMPROVE_EPS};
use crate::return_model::{reduce_objective, FlowForm, MarginalDistribution, Objective, Portfolio};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    /// Enumerate every portfolio with weights on the 1/cents lattice and
    /// evaluate each exactly; optimal over the lattice.
    CentGrid { cents: u64 },
    /// Enumerate candidate portfolios induced by hyperplanes through the
    /// target point spanned by grid points (for two stocks this is exactly
    /// the slope sweep's candidate set) and evaluate each induced region
    /// with the exact LP.
    CandidateHyperplanes,
}

/// Searches for the portfolio optimizing the objective. Risk-averse
/// objectives are minimized, aggressive ones maximized; both reduce to
/// minimizing the canonical value.
pub fn optimal_portfolio_fixed_k(
    dists: &[MarginalDistribution],
    alpha: f64,
    objective: Objective,
    mode: SearchMode,
) -> Result<(Portfolio, f64)> {
    if dists.len() < 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: dists.len(),
        });
    }
    let task = reduce_objective(objective);
    let form = task.flow_form().ok_or(Error::AverageCaseNotSupported)?;
    let (portfolio, canonical) = match mode {
        SearchMode::CentGrid { cents } => cent_grid_search(dists, alpha, form, cents)?,
        SearchMode::CandidateHyperplanes => hyperplane_search(dists, alpha, form)?,
    };
    Ok((portfolio, task.finish(canonical).clamp(0.0, 1.0)))
}

fn cent_grid_search(
    dists: &[MarginalDistribution],
    alpha: f64,
    form: FlowForm,
    cents: u64,
) -> Result<(Portfolio, f64)> {
    let k = dists.len();
    let count = compositions_count(cents, k);
    if count > 200_000 {
        return Err(Error::BudgetExceeded {
            needed: count,
            budget: 200_000,
        });
    }
    let mut best: Option<(f64, Vec<i64>)> = None;
    let mut current = vec![0i64; k];
    enumerate_compositions(cents as i64, 0, &mut current, &mut |weights| {
        let mass = cents_region_extremum(dists, weights, cents, alpha, form.sense, form.strict)?;
        let canonical = form.finish(mass);
        if best
            .as_ref()
            .is_none_or(|(b, _)| canonical < *b - IMPROVE_EPS)
        {
            best = Some((canonical, weights.to_vec()));
        }
        Ok(())
    })?;
    let (canonical, weights) = best.expect("composition enumeration is never empty");
    let portfolio = Portfolio::new(weights.iter().map(|&c| c as f64 / cents as f64).collect())?;
    Ok((portfolio, canonical))
}

fn compositions_count(cents: u64, k: usize) -> u128 {
    // C(cents + k - 1, k - 1)
    let n = cents as u128 + k as u128 - 1;
    let r = (k - 1) as u128;
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

fn enumerate_compositions(
    remaining: i64,
    index: usize,
    current: &mut Vec<i64>,
    visit: &mut impl FnMut(&[i64]) -> Result<()>,
) -> Result<()> {
    if index == current.len() - 1 {
        current[index] = remaining;
        return visit(current);
    }
    for c in (0..=remaining).rev() {
        current[index] = c;
        enumerate_compositions(remaining - c, index + 1, current, visit)?;
    }
    Ok(())
}

fn hyperplane_search(
    dists: &[MarginalDistribution],
    alpha: f64,
    form: FlowForm,
) -> Result<(Portfolio, f64)> {
    let k = dists.len();
    let candidates = if k == 2 {
        candidate_sequence(dists[0].grid(), alpha)
            .into_iter()
            .map(|x1| vec![x1, 1.0 - x1])
            .collect::<Vec<_>>()
    } else {
        arrangement_candidates(dists, alpha)?
    };

    let grid = dists[0].grid();
    let m = grid.len();
    let entries = (m as u128).pow(k as u32);
    if entries > DEFAULT_ENTRY_BUDGET as u128 {
        return Err(Error::BudgetExceeded {
            needed: entries,
            budget: DEFAULT_ENTRY_BUDGET as u128,
        });
    }
    let cells = entries as usize;

    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for weights in candidates {
        let portfolio = Portfolio::new(weights.clone())?;
        let spec = form.region(alpha, portfolio);
        // region fingerprint over all lattice cells
        let mut bits = vec![0u64; cells.div_ceil(64)];
        let mut offsets = vec![0usize; k];
        for cell in 0..cells {
            let mut rem = cell;
            for axis in (0..k).rev() {
                offsets[axis] = rem % m;
                rem /= m;
            }
            let combined: f64 = offsets
                .iter()
                .zip(&weights)
                .map(|(&o, &w)| w * grid.return_at(grid.m1() + o as i64))
                .sum();
            if spec.classify(combined) {
                bits[cell / 64] |= 1 << (cell % 64);
            }
        }
        if !seen.insert(bits.clone()) {
            continue;
        }
        let (mass, _) = lp_region_extremum(dists, &spec, true, DEFAULT_ENTRY_BUDGET)?;
        let canonical = form.finish(mass);
        if best
            .as_ref()
            .is_none_or(|(b, _)| canonical < *b - IMPROVE_EPS)
        {
            best = Some((canonical, weights));
        }
    }
    let (canonical, weights) = best.ok_or(Error::InvariantViolation {
        detail: "portfolio candidate set was empty".to_owned(),
    })?;
    Ok((Portfolio::new(weights)?, canonical))
}

/// Candidate portfolios for three or more stocks: unit portfolios, the
/// solutions of k-1 hyperplane/facet constraints through the target, and
/// pairwise midpoints of those to land inside arrangement cells.
fn arrangement_candidates(dists: &[MarginalDistribution], alpha: f64) -> Result<Vec<Vec<f64>>> {
    let k = dists.len();
    let grid = dists[0].grid();
    let m = grid.len();
    let points = (m as u128).pow(k as u32);

    // normals of hyperplanes n . x = 0 through the target, one per lattice
    // point, deduplicated; plus one facet normal per coordinate
    let mut normals: Vec<Vec<f64>> = Vec::new();
    let mut seen_normals: HashSet<Vec<u64>> = HashSet::new();
    let mut offsets = vec![0usize; k];
    for cell in 0..points as usize {
        let mut rem = cell;
        for axis in (0..k).rev() {
            offsets[axis] = rem % m;
            rem /= m;
        }
        let normal: Vec<f64> = offsets
            .iter()
            .map(|&o| grid.return_at(grid.m1() + o as i64) - alpha)
            .collect();
        if normal.iter().all(|&v| v.abs() <= 1e-12) {
            continue;
        }
        let key: Vec<u64> = normal.iter().map(|v| v.to_bits()).collect();
        if seen_normals.insert(key) {
            normals.push(normal);
        }
    }
    for axis in 0..k {
        let mut facet = vec![0.0; k];
        facet[axis] = 1.0;
        normals.push(facet);
    }

    let combos = binomial(normals.len() as u128, (k - 1) as u128);
    if combos > 200_000 {
        return Err(Error::BudgetExceeded {
            needed: combos,
            budget: 200_000,
        });
    }

    let mut candidates: Vec<Vec<f64>> = Vec::new();
    for axis in 0..k {
        let mut unit = vec![0.0; k];
        unit[axis] = 1.0;
        candidates.push(unit);
    }

    let mut combo: Vec<usize> = (0..k - 1).collect();
    if normals.len() >= k - 1 {
        loop {
            if let Some(x) = solve_on_simplex(&normals, &combo, k) {
                candidates.push(x);
            }
            let mut idx = k - 1;
            let mut advanced = false;
            while idx > 0 {
                idx -= 1;
                if combo[idx] < normals.len() - (k - 1 - idx) {
                    combo[idx] += 1;
                    for later in idx + 1..k - 1 {
                        combo[later] = combo[later - 1] + 1;
                    }
                    advanced = true;
                    break;
                }
            }
            if !advanced {
                break;
            }
        }
    }

    // midpoints reach the interiors of cells bounded by the vertices above
    let base_len = candidates.len();
    let mut enriched = candidates.clone();
    for a in 0..base_len {
        for b in a + 1..base_len {
            let mid: Vec<f64> = candidates[a]
                .iter()
                .zip(&candidates[b])
                .map(|(&p, &q)| (p + q) / 2.0)
                .collect();
            enriched.push(mid);
        }
    }
    Ok(enriched)
}

fn binomial(n: u128, r: u128) -> u128 {
    if r > n {
        return 0;
    }
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Solves n_i . x = 0 for the chosen normals together with sum(x) = 1;
/// returns the portfolio when it lies on the simplex.
fn solve_on_simplex(normals: &[Vec<f64>], combo: &[usize], k: usize) -> Option<Vec<f64>> {
    let mut a = Vec::with_capacity(k);
    let mut b = Vec::with_capacity(k);
    for &c in combo {
        a.push(normals[c].clone());
        b.push(0.0);
    }
    a.push(vec![1.0; k]);
    b.push(1.0);
    let x = solve_square_system(&mut a, &mut b)?;
    if x.iter().any(|&v| v < -1e-9) {
        return None;
    }
    let clamped: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        return None;
    }
    Some(clamped.into_iter().map(|v| v / total).collect())
}

#[allow(clippy::needless_range_loop)]
fn solve_square_system(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot =
            (col..n).max_by(|&p, &q| a[p][col].abs().partial_cmp(&a[q][col].abs()).unwrap())?;
        if a[pivot][col].abs() < 1e-11 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[row][c] -= f * a[col][c];
                }
                b[row] -= f * b[col];
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

/// Exposed for consistency tests between the LP-backed search and the
/// table-free evaluators.
#[allow(dead_code)]
pub(crate) fn lp_mass_for_member(
    dists: &[MarginalDistribution],
    member: impl Fn(&[usize]) -> bool,
) -> Result<f64> {
    let problem = table_lp(dists, member, true)?;
    Ok(solve_lp(&problem)?.value.clamp(0.0, 1.0))
}

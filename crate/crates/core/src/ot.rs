//! Entropic optimal transport between the two patch sets.
//!
//! The transport problem has all-ones marginals on both sides and a
//! forbidden diagonal, so feasible plans are zero-diagonal doubly stochastic
//! matrices. The plan is used directly as the negative-pair weights.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::features::SimilarityMatrix;
use crate::weighting::{Strategy, WeightKind, WeightMatrix, WeightStrategy};

/// Off-diagonal transport costs. Diagonal cells hold `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    c: Array2<f64>,
    strategy: WeightStrategy,
}

impl CostMatrix {
    /// Wraps an arbitrary square cost array. The diagonal is masked
    /// regardless of what `c` holds there.
    pub fn from_array(mut c: Array2<f64>) -> Result<Self> {
        let n = c.nrows();
        if c.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "cost matrix must be square, got {}x{}",
                n,
                c.ncols()
            )));
        }
        if n < 2 {
            return Err(Error::DegenerateAnchor(n));
        }
        for ((i, j), v) in c.indexed_iter_mut() {
            if i == j {
                *v = f64::INFINITY;
            } else if !v.is_finite() || *v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "cost ({i}, {j}) = {v} is not a finite nonnegative number"
                )));
            }
        }
        Ok(CostMatrix {
            c,
            strategy: WeightStrategy::Custom,
        })
    }

    pub fn n(&self) -> usize {
        self.c.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.c[[i, j]]
    }

    pub fn is_masked(&self, i: usize, j: usize) -> bool {
        i == j
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.c
    }

    /// `<C, T>` over unmasked cells.
    pub fn inner(&self, t: &Array2<f64>) -> f64 {
        let mut total = 0.0;
        for ((i, j), &c) in self.c.indexed_iter() {
            if i != j {
                total += c * t[[i, j]];
            }
        }
        total
    }
}

/// Builds the transport cost from similarities.
///
/// Easy: `C[i][j] = exp(S[i][j] / beta)`, so similar negatives are expensive
/// and the plan favours dissimilar ones. Hard: `C[i][j] = exp((1 - S[i][j]) / beta)`,
/// which moves mass toward similar negatives.
pub fn build_cost(s: &SimilarityMatrix, strategy: Strategy, beta: f64) -> Result<CostMatrix> {
    let n = s.n();
    if n < 2 {
        return Err(Error::DegenerateAnchor(n));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "beta must be a finite positive number, got {beta}"
        )));
    }
    let c = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            f64::INFINITY
        } else {
            match strategy {
                Strategy::Easy => (s.get(i, j) / beta).exp(),
                Strategy::Hard => ((1.0 - s.get(i, j)) / beta).exp(),
            }
        }
    });
    Ok(CostMatrix {
        c,
        strategy: strategy.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornParams {
    /// Entropic regularization strength, in cost units.
    pub epsilon: f64,
    /// Stop once every row and column sum is within `tol` of 1.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        SinkhornParams {
            epsilon: 0.05,
            tol: 1e-6,
            max_iter: 1000,
        }
    }
}

impl SinkhornParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be a finite positive number, got {}",
                self.epsilon
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tol must be a finite positive number, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "max_iter must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub plan: WeightMatrix,
    pub iterations: usize,
    pub marginal_error: f64,
    pub transport_cost: f64,
    pub converged: bool,
}

/// Dual potentials in cost units over a reduced, flattened cost matrix.
/// The plan is `T[i][j] = exp((f[i] + g[j] - C[i][j]) / eps)` off the diagonal.
struct Solver {
    n: usize,
    /// Row-major costs.
    c: Vec<f64>,
    /// Column-major costs, so column updates read contiguously.
    ct: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    lse: Vec<f64>,
    scratch: Vec<f64>,
    /// Columns of the current plan sum to 1 (true right after a column update).
    cols_exact: bool,
}

/// `log sum exp` of `(pot[k] - cost[k]) / eps` over `k != skip`.
fn masked_lse(pot: &[f64], cost: &[f64], skip: usize, eps: f64, scratch: &mut [f64]) -> f64 {
    let inv = 1.0 / eps;
    let mut peak = f64::NEG_INFINITY;
    for (k, v) in scratch.iter_mut().enumerate() {
        *v = (pot[k] - cost[k]) * inv;
        if k != skip {
            peak = peak.max(*v);
        }
    }
    let mut total = 0.0;
    for (k, &v) in scratch.iter().enumerate() {
        let d = v - peak;
        // Terms this far below the peak vanish against the peak's own 1.
        if k != skip && d > -LSE_CUTOFF {
            total += d.exp();
        }
    }
    peak + total.ln()
}

const LSE_CUTOFF: f64 = 50.0;

impl Solver {
    fn new(c: &Array2<f64>) -> Self {
        let n = c.nrows();
        Solver {
            n,
            c: c.iter().copied().collect(),
            ct: c.t().iter().copied().collect(),
            f: vec![0.0; n],
            g: vec![0.0; n],
            lse: vec![0.0; n],
            scratch: vec![0.0; n],
            cols_exact: false,
        }
    }

    /// One row then one column scaling step. Returns the largest row-sum
    /// error of the plan *before* the step, which falls out of the row
    /// update for free; columns of that plan were exact if `cols_exact`.
    fn sweep(&mut self, eps: f64) -> f64 {
        let n = self.n;
        let mut row_err: f64 = 0.0;
        for i in 0..n {
            let l = masked_lse(
                &self.g,
                &self.c[i * n..(i + 1) * n],
                i,
                eps,
                &mut self.scratch,
            );
            row_err = row_err.max(((self.f[i] / eps + l).exp() - 1.0).abs());
            self.lse[i] = l;
        }
        for i in 0..n {
            self.f[i] = -eps * self.lse[i];
        }
        for j in 0..n {
            let l = masked_lse(
                &self.f,
                &self.ct[j * n..(j + 1) * n],
                j,
                eps,
                &mut self.scratch,
            );
            self.g[j] = -eps * l;
        }
        let was_exact = self.cols_exact;
        self.cols_exact = true;
        if was_exact {
            row_err
        } else {
            f64::INFINITY
        }
    }

    fn plan(&self, eps: f64) -> Array2<f64> {
        let n = self.n;
        Array2::from_shape_fn((n, n), |(i, j)| {
            if i == j {
                0.0
            } else {
                ((self.f[i] + self.g[j] - self.c[i * n + j]) / eps).exp()
            }
        })
    }

    /// Damped Newton ascent on the dual, in units of `eps`. Keeps the
    /// scaling form of the plan. Returns false if no ascent step was found.
    fn newton_step(&mut self, eps: f64) -> bool {
        let n = self.n;
        let t = self.plan(eps);
        let rows = t.sum_axis(Axis(1));
        let cols = t.sum_axis(Axis(0));

        let mut hess = DMatrix::<f64>::zeros(2 * n, 2 * n);
        let mut grad = DVector::<f64>::zeros(2 * n);
        for i in 0..n {
            hess[(i, i)] = rows[i];
            hess[(n + i, n + i)] = cols[i];
            grad[i] = 1.0 - rows[i];
            grad[n + i] = 1.0 - cols[i];
            for j in 0..n {
                hess[(i, n + j)] = t[[i, j]];
                hess[(n + j, i)] = t[[i, j]];
            }
        }
        // The Hessian is singular along (1, -1); the ridge pins that direction.
        let ridge = NEWTON_RIDGE * (0..2 * n).map(|k| hess[(k, k)]).fold(1.0, f64::max);
        for k in 0..2 * n {
            hess[(k, k)] += ridge;
        }
        let delta = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => match hess.lu().solve(&grad) {
                Some(d) => d,
                None => return false,
            },
        };
        if delta.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let slope = grad.dot(&delta);
        if slope <= 0.0 {
            return false;
        }
        let total_old = t.sum();
        let mut step = 1.0;
        for _ in 0..NEWTON_BACKTRACKS {
            let f_try: Vec<f64> = (0..n).map(|i| self.f[i] + eps * step * delta[i]).collect();
            let g_try: Vec<f64> = (0..n)
                .map(|j| self.g[j] + eps * step * delta[n + j])
                .collect();
            let mut total_new = 0.0;
            for (i, fi) in f_try.iter().enumerate() {
                for (j, gj) in g_try.iter().enumerate().filter(|&(j, _)| j != i) {
                    total_new += ((fi + gj - self.c[i * n + j]) / eps).exp();
                }
            }
            // Dual gain, written as a difference to avoid cancelling the
            // large absolute potentials.
            let gain = step * delta.sum() - (total_new - total_old);
            if gain.is_finite() && gain >= NEWTON_ARMIJO * step * slope {
                self.f = f_try;
                self.g = g_try;
                self.cols_exact = false;
                return true;
            }
            step *= 0.5;
        }
        false
    }
}

/// Largest unmasked cost minus smallest.
fn spread(c: &Array2<f64>) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for ((i, j), &v) in c.indexed_iter() {
        if i != j {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    hi - lo
}

fn reduced_costs(c: &Array2<f64>) -> Array2<f64> {
    let n = c.nrows();
    let mut out = c.clone();
    for i in 0..n {
        let lo = (0..n)
            .filter(|&j| j != i)
            .map(|j| out[[i, j]])
            .fold(f64::INFINITY, f64::min);
        for j in (0..n).filter(|&j| j != i) {
            out[[i, j]] -= lo;
        }
    }
    for j in 0..n {
        let lo = (0..n)
            .filter(|&i| i != j)
            .map(|i| out[[i, j]])
            .fold(f64::INFINITY, f64::min);
        for i in (0..n).filter(|&i| i != j) {
            out[[i, j]] -= lo;
        }
    }
    out
}

fn marginal_error(t: &Array2<f64>) -> f64 {
    let rows = t.rows().into_iter().map(|r| (r.sum() - 1.0).abs());
    let cols = t.columns().into_iter().map(|c| (c.sum() - 1.0).abs());
    rows.chain(cols).fold(0.0, f64::max)
}

/// Indices sorted by (sorted off-diagonal row, sorted off-diagonal column),
/// compared bitwise. Patches with identical keys keep their input order.
fn canonical_order(c: &Array2<f64>) -> Vec<usize> {
    let n = c.nrows();
    let keys: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| c[[i, j]]).collect();
            let mut col: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| c[[j, i]]).collect();
            row.sort_by(f64::total_cmp);
            col.sort_by(f64::total_cmp);
            (row, col)
        })
        .collect();
    let cmp = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cmp(&keys[a].0, &keys[b].0).then_with(|| cmp(&keys[a].1, &keys[b].1)));
    order
}

/// Log-domain Sinkhorn scaling for the zero-diagonal doubly stochastic plan
/// minimizing `<C, T> - epsilon * H(T)`.
///
/// When the cost spread is large relative to `epsilon`, the regularization is
/// annealed geometrically from the spread down to `epsilon`, warm-starting the
/// duals at each level. At the target epsilon, plain scaling sweeps run first;
/// if they have not met `tol` after a few dozen sweeps (near-permutation plans
/// converge geometrically slowly), the remaining iterations take damped Newton
/// steps on the same dual. Neither changes the fixed point. `max_iter` bounds
/// the total number of steps of either kind.
///
/// On failure to reach `tol`, returns [`Error::NoConvergence`] carrying the
/// last iterate.
pub fn sinkhorn(cost: &CostMatrix, params: &SinkhornParams) -> Result<TransportPlan> {
    params.validate()?;
    let n = cost.n();
    // Solve in a relabelling that depends only on the cost values, so that
    // permuting the patches permutes the plan bit for bit. Without it,
    // summation order leaves ulp-level differences in potentials of size
    // C / epsilon, which the loss picks up at the 1e-9 level.
    let order = canonical_order(&cost.c);
    let relabelled = Array2::from_shape_fn((n, n), |(a, b)| cost.c[[order[a], order[b]]]);
    // Row and column offsets cancel in the plan but keep the potentials
    // small, which matters once C / epsilon approaches 1e10.
    let reduced = reduced_costs(&relabelled);
    let eps = params.epsilon;
    let mut solver = Solver::new(&reduced);
    let mut iterations = 0;

    let mut level = spread(&reduced).max(eps);
    loop {
        let final_level = level <= eps;
        let level_tol = if final_level { params.tol } else { ANNEAL_TOL };
        let mut sweeps = 0;
        loop {
            let estimate =
                if final_level && sweeps >= NEWTON_AFTER && n > 2 && solver.newton_step(level) {
                    marginal_error(&solver.plan(level))
                } else {
                    solver.sweep(level)
                };
            iterations += 1;
            sweeps += 1;
            if iterations >= params.max_iter || (!final_level && sweeps >= ANNEAL_MAX_SWEEPS) {
                break;
            }
            // The sweep estimate describes the previous iterate; confirm on
            // the current one before accepting.
            if estimate <= level_tol
                && (!final_level || marginal_error(&solver.plan(level)) <= level_tol)
            {
                break;
            }
        }
        if final_level || iterations >= params.max_iter {
            break;
        }
        level = (level * ANNEAL_FACTOR).max(eps);
    }

    // If iterations ran out mid-schedule this reports the plan at the target epsilon.
    let solved = solver.plan(eps);
    let mut t = Array2::zeros((n, n));
    for a in 0..n {
        for b in 0..n {
            t[[order[a], order[b]]] = solved[[a, b]];
        }
    }
    let err = marginal_error(&t);
    let result = TransportPlan {
        transport_cost: cost.inner(&t),
        plan: WeightMatrix {
            w: t,
            kind: WeightKind::DoublyStochastic,
            strategy: cost.strategy,
        },
        iterations,
        marginal_error: err,
        converged: err <= params.tol,
    };
    if result.converged {
        Ok(result)
    } else {
        Err(Error::NoConvergence {
            iterations,
            marginal_error: err,
            plan: Box::new(result),
        })
    }
}

const ANNEAL_FACTOR: f64 = 0.5;
const ANNEAL_TOL: f64 = 1e-2;
const ANNEAL_MAX_SWEEPS: usize = 20;
/// Plain scaling sweeps at the target epsilon before switching to Newton.
const NEWTON_AFTER: usize = 50;
const NEWTON_RIDGE: f64 = 1e-12;
const NEWTON_ARMIJO: f64 = 1e-4;
const NEWTON_BACKTRACKS: usize = 40;

/// Largest instance [`exact_ot_oracle`] will enumerate.
pub const ORACLE_MAX_N: usize = 8;

/// Exact minimum-cost zero-diagonal transport plan by enumerating every
/// derangement. The optimum of the linear program sits on a vertex of the
/// zero-diagonal Birkhoff polytope, which is a derangement matrix.
pub fn exact_ot_oracle(cost: &CostMatrix) -> Result<(WeightMatrix, f64)> {
    let n = cost.n();
    if n > ORACLE_MAX_N {
        return Err(Error::TooLarge(n));
    }
    let mut best = (f64::INFINITY, Vec::new());
    let mut perm = Vec::with_capacity(n);
    let mut used = vec![false; n];
    enumerate_derangements(cost, &mut perm, &mut used, 0.0, &mut best);

    let (total, sigma) = best;
    let mut w = Array2::zeros((n, n));
    for (i, &j) in sigma.iter().enumerate() {
        w[[i, j]] = 1.0;
    }
    Ok((
        WeightMatrix {
            w,
            kind: WeightKind::DoublyStochastic,
            strategy: cost.strategy,
        },
        total,
    ))
}

fn enumerate_derangements(
    cost: &CostMatrix,
    perm: &mut Vec<usize>,
    used: &mut [bool],
    partial: f64,
    best: &mut (f64, Vec<usize>),
) {
    let n = used.len();
    let row = perm.len();
    if row == n {
        if partial < best.0 {
            *best = (partial, perm.clone());
        }
        return;
    }
    for col in 0..n {
        if col == row || used[col] {
            continue;
        }
        used[col] = true;
        perm.push(col);
        enumerate_derangements(cost, perm, used, partial + cost.get(row, col), best);
        perm.pop();
        used[col] = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{random_unit_rows, similarity};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn easy_cost_scalar_values() {
        let s = SimilarityMatrix(array![[1.0, 0.5], [0.2, 1.0]]);
        let c = build_cost(&s, Strategy::Easy, 1.0).unwrap();
        assert!(c.get(0, 0).is_infinite() && c.get(1, 1).is_infinite());
        assert!((c.get(0, 1) - 0.5f64.exp()).abs() < 1e-12);
        assert!((c.get(1, 0) - 0.2f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn hard_cost_scalar_values() {
        let s = SimilarityMatrix(array![[1.0, 0.5], [0.2, 1.0]]);
        let c = build_cost(&s, Strategy::Hard, 0.1).unwrap();
        assert!((c.get(0, 1) - 5.0f64.exp()).abs() < 1e-9);
        assert!((c.get(1, 0) - 8.0f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn cost_rejects_degenerate() {
        let s = SimilarityMatrix(array![[1.0]]);
        assert!(matches!(
            build_cost(&s, Strategy::Easy, 0.1),
            Err(Error::DegenerateAnchor(1))
        ));
        let s2 = SimilarityMatrix(array![[1.0, 0.0], [0.0, 1.0]]);
        assert!(build_cost(&s2, Strategy::Easy, 0.0).is_err());
    }

    #[test]
    fn two_by_two_is_anti_diagonal() {
        let c = CostMatrix::from_array(array![[0.0, 123.0], [0.001, 0.0]]).unwrap();
        let t = sinkhorn(&c, &SinkhornParams::default()).unwrap();
        assert_eq!(t.plan.w[[0, 0]], 0.0);
        assert_eq!(t.plan.w[[1, 1]], 0.0);
        assert!((t.plan.w[[0, 1]] - 1.0).abs() < 1e-12);
        assert!((t.plan.w[[1, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_cost_gives_uniform_plan() {
        let c = CostMatrix::from_array(Array2::from_elem((4, 4), 2.5)).unwrap();
        let t = sinkhorn(&c, &SinkhornParams::default()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 0.0 } else { 1.0 / 3.0 };
                assert!((t.plan.w[[i, j]] - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn plan_is_feasible_at_defaults() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [3, 8, 32, 64] {
            let x = random_unit_rows(&mut rng, n, 16);
            let y = random_unit_rows(&mut rng, n, 16);
            let s = similarity(&x, &y).unwrap();
            for strategy in [Strategy::Hard, Strategy::Easy] {
                let c = build_cost(&s, strategy, 0.1).unwrap();
                let t = sinkhorn(&c, &SinkhornParams::default()).unwrap();
                assert!(
                    t.marginal_error <= 1e-6,
                    "n={n} {strategy}: {}",
                    t.marginal_error
                );
                for i in 0..n {
                    assert_eq!(t.plan.w[[i, i]], 0.0);
                }
                assert!(t.plan.w.iter().all(|&v| v >= 0.0));
                assert!(t.transport_cost.is_finite());
            }
        }
    }

    #[test]
    fn no_convergence_carries_last_iterate() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_unit_rows(&mut rng, 16, 4);
        let y = random_unit_rows(&mut rng, 16, 4);
        let c = build_cost(&similarity(&x, &y).unwrap(), Strategy::Easy, 0.1).unwrap();
        let params = SinkhornParams {
            epsilon: 1e-3,
            tol: 1e-14,
            max_iter: 2,
        };
        match sinkhorn(&c, &params) {
            Err(Error::NoConvergence {
                iterations, plan, ..
            }) => {
                assert_eq!(iterations, 2);
                assert!(!plan.converged);
                assert_eq!(plan.plan.w.nrows(), 16);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let c = CostMatrix::from_array(Array2::from_elem((3, 3), 1.0)).unwrap();
        for p in [
            SinkhornParams {
                epsilon: 0.0,
                ..Default::default()
            },
            SinkhornParams {
                tol: -1.0,
                ..Default::default()
            },
            SinkhornParams {
                max_iter: 0,
                ..Default::default()
            },
        ] {
            assert!(matches!(sinkhorn(&c, &p), Err(Error::InvalidParameter(_))));
        }
    }

    #[test]
    fn oracle_two_by_two() {
        let c = CostMatrix::from_array(array![[0.0, 3.0], [5.0, 0.0]]).unwrap();
        let (w, total) = exact_ot_oracle(&c).unwrap();
        assert_eq!(w.w, array![[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(total, 8.0);
    }

    #[test]
    fn oracle_picks_cheaper_three_cycle() {
        // Two derangements of three elements: (0->1, 1->2, 2->0) and (0->2, 1->0, 2->1).
        let c = CostMatrix::from_array(array![[0.0, 1.0, 9.0], [9.0, 0.0, 1.0], [1.0, 9.0, 0.0]])
            .unwrap();
        let first = c.get(0, 1) + c.get(1, 2) + c.get(2, 0);
        let second = c.get(0, 2) + c.get(1, 0) + c.get(2, 1);
        assert!(first < second);
        let (w, total) = exact_ot_oracle(&c).unwrap();
        assert_eq!(total, first);
        assert_eq!(
            w.w,
            array![[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]
        );
    }

    #[test]
    fn oracle_uniform_cost_ties() {
        for n in 2..=8 {
            let c = CostMatrix::from_array(Array2::from_elem((n, n), 1.75)).unwrap();
            let (w, total) = exact_ot_oracle(&c).unwrap();
            assert!((total - n as f64 * 1.75).abs() < 1e-12);
            assert!(w.row_error() < 1e-12 && w.col_error() < 1e-12);
        }
    }

    #[test]
    fn oracle_too_large() {
        let c = CostMatrix::from_array(Array2::from_elem((9, 9), 1.0)).unwrap();
        assert!(matches!(exact_ot_oracle(&c), Err(Error::TooLarge(9))));
    }

    #[test]
    fn cost_from_array_validation() {
        assert!(CostMatrix::from_array(Array2::zeros((2, 3))).is_err());
        assert!(CostMatrix::from_array(Array2::zeros((1, 1))).is_err());
        assert!(CostMatrix::from_array(array![[0.0, -1.0], [1.0, 0.0]]).is_err());
        assert!(CostMatrix::from_array(array![[0.0, f64::NAN], [1.0, 0.0]]).is_err());
    }
}

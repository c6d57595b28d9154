//! Dense baseline pruners: nonnegative least squares (Lawson–Hanson
//! active set) and linear programming (two-phase revised simplex). Both
//! need the full M x N matrix in memory, so they only run at desk scale.

use crate::error::{Error, Result};
use crate::pruning::{Diagnostics, PruneResult};
use nalgebra::{DMatrix, DVector};

/// Nonnegative least squares pruning.
///
/// Solves min_{w >= 0} ||V^T w - eta||_2 by the Lawson–Hanson active-set
/// method. The dual is d = V (eta - V^T w); indices enter the passive set
/// at the maximum dual and leave inside an inner loop whenever the
/// unconstrained passive-set solution turns nonpositive. Least-squares
/// subproblems are solved through the SVD pseudoinverse. Ties break to
/// the smallest index. `tol` is the KKT tolerance on the dual.
pub fn nnls_prune(vandermonde: &[f64], n_cols: usize, eta: &[f64], tol: f64) -> Result<PruneResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be > 0".into()));
    }
    let m_rows = vandermonde.len() / n_cols;
    assert_eq!(vandermonde.len(), m_rows * n_cols);
    assert_eq!(eta.len(), n_cols);
    if vandermonde.iter().any(|v| !v.is_finite()) || eta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    // V^T as an N x M matrix: column i is row i of V
    let vt = DMatrix::from_row_slice(m_rows, n_cols, vandermonde).transpose();
    let eta_v = DVector::from_column_slice(eta);

    let mut passive: Vec<usize> = Vec::new();
    let mut in_passive = vec![false; m_rows];
    let mut w = vec![0.0f64; m_rows];
    let max_outer = 10 * m_rows.max(1);
    let mut outer = 0usize;

    loop {
        // d = V (eta - V^T w)
        let wv = DVector::from_column_slice(&w);
        let resid = &eta_v - &vt * &wv;
        let d = vt.transpose() * &resid;
        let mut best: Option<(usize, f64)> = None;
        for i in 0..m_rows {
            if in_passive[i] {
                continue;
            }
            match best {
                Some((_, v)) if v >= d[i] => {}
                _ => best = Some((i, d[i])),
            }
        }
        let enter = match best {
            Some((i, v)) if v > tol => i,
            _ => break,
        };
        outer += 1;
        if outer > max_outer {
            return Err(Error::MaxIterationsExceeded(max_outer));
        }
        passive.push(enter);
        passive.sort_unstable();
        in_passive[enter] = true;

        let mut s = ls_passive(&vt, &eta_v, &passive);
        // inner loop: drop passive indices whose trial solution turned
        // nonpositive, re-solving after each removal; a small relative
        // threshold keeps genuinely interior solutions (with s_i a tiny
        // rounding-error negative) from being evicted
        loop {
            let tol_s = 1e-12 * s.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            let q: Vec<usize> = (0..passive.len()).filter(|&p| s[p] <= -tol_s).collect();
            if q.is_empty() {
                break;
            }
            let mut best_p = q[0];
            let mut best_ratio = f64::INFINITY;
            for &p in &q {
                let i = passive[p];
                let ratio = -w[i] / (s[p] - w[i]);
                if ratio < best_ratio {
                    best_ratio = ratio;
                    best_p = p;
                }
            }
            let i_rem = passive[best_p];
            w[i_rem] = 0.0;
            in_passive[i_rem] = false;
            passive.remove(best_p);
            s = ls_passive(&vt, &eta_v, &passive);
        }
        for (p, &i) in passive.iter().enumerate() {
            w[i] = s[p];
        }
    }

    let mut diagnostics = Diagnostics::default();
    diagnostics.positivity_clamps = 0;
    let kept: Vec<(u64, f64)> = passive
        .iter()
        .filter(|&&i| w[i] > 0.0)
        .map(|&i| (i as u64 + 1, w[i]))
        .collect();
    Ok(PruneResult {
        kept_global: kept.iter().map(|&(g, _)| g).collect(),
        kept_weights: kept.iter().map(|&(_, w)| w).collect(),
        iterations: outer as u64,
        moment_residual: None,
        diagnostics,
    })
}

/// Least-squares solution on the passive columns of V^T (pseudoinverse).
fn ls_passive(vt: &DMatrix<f64>, eta: &DVector<f64>, passive: &[usize]) -> Vec<f64> {
    if passive.is_empty() {
        return Vec::new();
    }
    let n = vt.nrows();
    let mut sub = DMatrix::zeros(n, passive.len());
    for (p, &i) in passive.iter().enumerate() {
        sub.set_column(p, &vt.column(i));
    }
    let svd = sub.svd(true, true);
    let sol = svd.solve(eta, 1e-13).expect("svd solve");
    sol.iter().copied().collect()
}

// ---------------------------------------------------------------------------
// LP pruning

/// The standard-form program min c^T v subject to V^T v = eta, v >= 0.
#[derive(Debug, Clone)]
pub struct LpProblem {
    /// Row-major M x N matrix (rows are nodes).
    pub vandermonde: Vec<f64>,
    pub n_cols: usize,
    pub eta: Vec<f64>,
    /// Cost vector of length M.
    pub cost: Vec<f64>,
    /// Known feasible point; used to seed the basis when its support is
    /// already basic (at most N nodes), skipping phase 1.
    pub feasible_start: Option<Vec<f64>>,
}

const LP_PIVOT_TOL: f64 = 1e-10;

/// Solves the LP by a dense two-phase revised simplex and returns the
/// optimal vertex, which generically has at most N nonzero weights.
/// Dantzig pricing with a switch to Bland's rule after a run of
/// degenerate pivots guarantees termination.
pub fn lp_prune(problem: &LpProblem) -> Result<PruneResult> {
    let n = problem.n_cols;
    let m = problem.cost.len();
    assert_eq!(problem.vandermonde.len(), m * n);
    assert_eq!(problem.eta.len(), n);
    if problem.vandermonde.iter().any(|v| !v.is_finite())
        || problem.eta.iter().any(|v| !v.is_finite())
        || problem.cost.iter().any(|v| !v.is_finite())
    {
        return Err(Error::NonFiniteInput);
    }

    // constraint matrix A = V^T (n x m), columns 0..m are nodes and
    // columns m..m+n are artificials (identity, sign-flipped with b)
    let mut a = vec![0.0f64; n * m]; // column-major: column j at a[j*n..]
    for i in 0..m {
        for j in 0..n {
            a[i * n + j] = problem.vandermonde[i * n + j];
        }
    }
    let b: Vec<f64> = problem.eta.clone();
    let mut art_sign = vec![1.0f64; n];
    for j in 0..n {
        if b[j] < 0.0 {
            art_sign[j] = -1.0;
        }
    }

    let eta_norm = problem.eta.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    let feas_tol = 1e-9 * eta_norm;

    let mut state = SimplexState::new(n, m, a, b.clone());

    // seed from the provided feasible point when it is already basic
    let seeded = match &problem.feasible_start {
        Some(w0) if w0.len() == m => {
            let support: Vec<usize> = (0..m).filter(|&i| w0[i] > 0.0).collect();
            support.len() <= n && state.try_seed_basis(&support, feas_tol)
        }
        _ => false,
    };

    if !seeded {
        // phase 1: minimize the artificial mass
        state.reset_artificial_basis(&art_sign);
        let mut phase1_cost = vec![0.0; m + n];
        for c in phase1_cost.iter_mut().skip(m) {
            *c = 1.0;
        }
        let obj = state.optimize(&phase1_cost, true)?;
        if obj > feas_tol {
            return Err(Error::Infeasible(obj));
        }
    }

    // phase 2: artificials may linger in the basis at value zero; they are
    // blocked from re-entering and cannot take positive values because the
    // ratio test leaves zero basics at zero
    let mut cost = problem.cost.clone();
    cost.resize(m + n, 0.0);
    state.optimize(&cost, false)?;

    let mut w = vec![0.0f64; m];
    for (r, &j) in state.basis.iter().enumerate() {
        if j < m {
            w[j] = state.x_b[r].max(0.0);
        }
    }
    // verify the vertex
    let mut resid = 0.0f64;
    for j in 0..n {
        let mut s = -b[j];
        for i in 0..m {
            if w[i] != 0.0 {
                s += w[i] * state.col(i)[j];
            }
        }
        resid += s * s;
    }
    let resid = resid.sqrt();
    if resid > feas_tol {
        return Err(Error::Infeasible(resid));
    }

    let kept: Vec<(u64, f64)> = (0..m)
        .filter(|&i| w[i] > 0.0)
        .map(|i| (i as u64 + 1, w[i]))
        .collect();
    Ok(PruneResult {
        kept_global: kept.iter().map(|&(g, _)| g).collect(),
        kept_weights: kept.iter().map(|&(_, w)| w).collect(),
        iterations: state.pivots,
        moment_residual: None,
        diagnostics: Diagnostics::default(),
    })
}

struct SimplexState {
    n: usize,
    m: usize,
    /// Column-major n x m node columns.
    a: Vec<f64>,
    b: Vec<f64>,
    /// Basic column indices; values >= m denote artificials.
    basis: Vec<usize>,
    /// Artificial column signs (so that the artificial basis is feasible).
    art: Vec<f64>,
    x_b: Vec<f64>,
    b_inv: DMatrix<f64>,
    pivots: u64,
}

impl SimplexState {
    fn new(n: usize, m: usize, a: Vec<f64>, b: Vec<f64>) -> Self {
        SimplexState {
            n,
            m,
            a,
            b,
            basis: (m..m + n).collect(),
            art: vec![1.0; n],
            x_b: vec![0.0; n],
            b_inv: DMatrix::identity(n, n),
            pivots: 0,
        }
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.a[j * self.n..(j + 1) * self.n]
    }

    /// Dense column j of the extended matrix (artificials included).
    fn full_col(&self, j: usize, out: &mut [f64]) {
        if j < self.m {
            out.copy_from_slice(self.col(j));
        } else {
            out.fill(0.0);
            out[j - self.m] = self.art[j - self.m];
        }
    }

    fn reset_artificial_basis(&mut self, art_sign: &[f64]) {
        self.art.copy_from_slice(art_sign);
        self.basis = (self.m..self.m + self.n).collect();
        self.refactor();
    }

    /// Builds the basis matrix from `self.basis`, inverts it, and
    /// recomputes the basic solution.
    fn refactor(&mut self) {
        let n = self.n;
        let mut bm = DMatrix::zeros(n, n);
        let mut col = vec![0.0; n];
        for (r, &j) in self.basis.iter().enumerate() {
            self.full_col(j, &mut col);
            for i in 0..n {
                bm[(i, r)] = col[i];
            }
        }
        self.b_inv = bm.try_inverse().expect("singular basis");
        let bv = DVector::from_column_slice(&self.b);
        let x = &self.b_inv * bv;
        for i in 0..n {
            self.x_b[i] = x[i];
        }
    }

    /// Attempts to install `support` (plus artificials for the remaining
    /// rows) as a feasible starting basis. Returns false if the columns
    /// are dependent or the resulting basic solution is not feasible.
    fn try_seed_basis(&mut self, support: &[usize], feas_tol: f64) -> bool {
        let n = self.n;
        let mut bm = DMatrix::zeros(n, n);
        let mut basis = Vec::with_capacity(n);
        for (r, &j) in support.iter().enumerate() {
            let c = self.col(j);
            for i in 0..n {
                bm[(i, r)] = c[i];
            }
            basis.push(j);
        }
        for r in support.len()..n {
            bm[(r, r)] = 1.0;
            basis.push(self.m + r);
        }
        let Some(inv) = bm.clone().try_inverse() else {
            return false;
        };
        let x = &inv * DVector::from_column_slice(&self.b);
        if x.iter().any(|&v| v < -feas_tol) {
            return false;
        }
        // artificial rows must carry no mass
        for r in support.len()..n {
            if x[r].abs() > feas_tol {
                return false;
            }
        }
        self.basis = basis;
        self.art = vec![1.0; n];
        self.b_inv = inv;
        for i in 0..n {
            self.x_b[i] = x[i].max(0.0);
        }
        true
    }

    /// Runs the simplex to optimality for the given cost (length m + n).
    /// When `allow_artificial_entering` is false, artificial columns never
    /// enter the basis. Returns the optimal objective.
    fn optimize(&mut self, cost: &[f64], allow_artificial_entering: bool) -> Result<f64> {
        let n = self.n;
        let m = self.m;
        let cap = 200 * (m + n);
        let mut degenerate_streak = 0usize;
        let mut col = vec![0.0; n];
        let mut in_basis = vec![false; m + n];
        for &j in &self.basis {
            in_basis[j] = true;
        }
        for iter in 0..=cap {
            if iter == cap {
                return Err(Error::MaxIterationsExceeded(cap));
            }
            // y = B^{-T} c_B
            let c_b = DVector::from_iterator(n, self.basis.iter().map(|&j| cost[j]));
            let y = self.b_inv.transpose() * c_b;
            // entering column
            let bland = degenerate_streak > 64;
            let mut enter: Option<(usize, f64)> = None;
            let limit = if allow_artificial_entering { m + n } else { m };
            for j in 0..limit {
                if in_basis[j] {
                    continue;
                }
                self.full_col(j, &mut col);
                let mut r = cost[j];
                for i in 0..n {
                    r -= y[i] * col[i];
                }
                if r < -LP_PIVOT_TOL {
                    if bland {
                        enter = Some((j, r));
                        break;
                    }
                    match enter {
                        Some((_, best)) if best <= r => {}
                        _ => enter = Some((j, r)),
                    }
                }
            }
            let Some((je, _)) = enter else {
                let obj: f64 = self
                    .basis
                    .iter()
                    .zip(&self.x_b)
                    .map(|(&j, &x)| cost[j] * x)
                    .sum();
                return Ok(obj);
            };
            // direction d = B^{-1} A_je and ratio test
            self.full_col(je, &mut col);
            let d = &self.b_inv * DVector::from_column_slice(&col);
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..n {
                if d[i] > LP_PIVOT_TOL {
                    let ratio = self.x_b[i].max(0.0) / d[i];
                    match leave {
                        Some((li, best)) => {
                            // ties break toward the smallest basic column
                            // index (Bland) for anti-cycling
                            if ratio < best - 1e-15
                                || (ratio <= best + 1e-15 && self.basis[i] < self.basis[li])
                            {
                                leave = Some((i, ratio.min(best)));
                            }
                        }
                        None => leave = Some((i, ratio)),
                    }
                }
            }
            let Some((li, step)) = leave else {
                return Err(Error::Unbounded);
            };
            if step <= 1e-13 {
                degenerate_streak += 1;
            } else {
                degenerate_streak = 0;
            }
            in_basis[self.basis[li]] = false;
            in_basis[je] = true;
            self.basis[li] = je;
            self.pivots += 1;
            self.refactor();
        }
        unreachable!()
    }
}

//! The pruning step, the dense baseline pruner, and the streaming pruner
//! with pluggable kernel backends (per-iteration dense QR, or the Givens
//! window with O(N^2) per-iteration cost).

use crate::basis::{eval_row, BasisSpec};
use crate::error::{Error, Result};
use crate::givens_qr::QrWindow;
use crate::io_stream::NodeStream;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// Chooses between the two admissible step sizes c+ and c- at each
/// iteration. When one side is empty the other sign is forced regardless
/// of policy.
#[derive(Clone)]
pub enum SigSelectPolicy {
    /// Minimum-magnitude step (the default minimum-norm perturbation).
    MinAbsC,
    ForcePlus,
    ForceMinus,
    /// Callback on (weights, kernel, c_plus, c_minus).
    Custom(Arc<dyn Fn(&[f64], &[f64], f64, f64) -> Sign + Send + Sync>),
}

impl std::fmt::Debug for SigSelectPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SigSelectPolicy::MinAbsC => write!(f, "MinAbsC"),
            SigSelectPolicy::ForcePlus => write!(f, "ForcePlus"),
            SigSelectPolicy::ForceMinus => write!(f, "ForceMinus"),
            SigSelectPolicy::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Result of one kernel-direction translation of the weight vector.
#[derive(Debug, Clone)]
pub struct PruneStepOutcome {
    /// Local index (within the window) whose weight was driven to zero.
    pub pruned_local: usize,
    /// The chosen step size c_sigma.
    pub c: f64,
    pub sign: Sign,
    /// Updated weights, componentwise >= 0, exact zero at `pruned_local`.
    pub updated_weights: Vec<f64>,
    /// Other local indices whose weights hit zero incidentally.
    pub extra_zeroed: Vec<usize>,
    /// Entries that went slightly negative and were clamped.
    pub positivity_clamps: u64,
}

#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    /// Max over sampled iterations of ||rows^T n|| / ||rows||_F.
    pub kernel_orthogonality_max: f64,
    /// Count of weights clamped up from slightly negative values.
    pub positivity_clamps: u64,
    /// Full-QR refreshes triggered by the drift guard.
    pub qr_refreshes: u64,
    /// Trailing R diagonal fell below the rank tolerance at least once.
    pub rank_deficiency_flagged: bool,
    /// Arithmetic ops spent on the initial factorization (Givens backend).
    pub startup_ops: u64,
    /// Largest per-iteration arithmetic-op count after the first
    /// factorization (Givens backend).
    pub max_iteration_ops: u64,
    /// Total arithmetic ops over the run (Givens backend).
    pub total_ops: u64,
}

/// Output of a pruning run: the surviving subset in ascending global
/// order with strictly positive weights.
#[derive(Debug, Clone)]
pub struct PruneResult {
    pub kept_global: Vec<u64>,
    pub kept_weights: Vec<f64>,
    pub iterations: u64,
    /// Relative moment residual, filled by verification (harness/CLI).
    pub moment_residual: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl PruneResult {
    fn from_window(mut pairs: Vec<(u64, f64)>, iterations: u64, diagnostics: Diagnostics) -> Self {
        pairs.sort_by_key(|&(g, _)| g);
        PruneResult {
            kept_global: pairs.iter().map(|&(g, _)| g).collect(),
            kept_weights: pairs.iter().map(|&(_, w)| w).collect(),
            iterations,
            moment_residual: None,
            diagnostics,
        }
    }
}

/// One pruning step (the kernel-vector translation of the weights).
///
/// Computes m_+/- = argmin over S_+/- of |w_m / n_m|, c_+/- = w/n there,
/// selects the sign per policy, and returns w - c n with the selected
/// entry assigned exactly zero. Ties break to the smallest local index;
/// |c_+| == |c_-| ties break toward +.
pub fn prune_step(
    weights: &[f64],
    kernel: &[f64],
    policy: &SigSelectPolicy,
) -> Result<PruneStepOutcome> {
    assert_eq!(weights.len(), kernel.len());
    let mut best_plus: Option<(usize, f64)> = None; // (index, ratio |w/n|)
    let mut best_minus: Option<(usize, f64)> = None;
    for (m, (&w, &n)) in weights.iter().zip(kernel).enumerate() {
        if n == 0.0 {
            continue;
        }
        let ratio = (w / n).abs();
        let slot = if n > 0.0 { &mut best_plus } else { &mut best_minus };
        match slot {
            Some((_, r)) if *r <= ratio => {}
            _ => *slot = Some((m, ratio)),
        }
    }
    let (c_plus, m_plus) = match best_plus {
        Some((m, _)) => (weights[m] / kernel[m], Some(m)),
        None => (f64::INFINITY, None),
    };
    let (c_minus, m_minus) = match best_minus {
        Some((m, _)) => (weights[m] / kernel[m], Some(m)),
        None => (f64::NEG_INFINITY, None),
    };
    let sign = match (m_plus, m_minus) {
        (None, None) => return Err(Error::ZeroKernel),
        (Some(_), None) => Sign::Plus,
        (None, Some(_)) => Sign::Minus,
        (Some(_), Some(_)) => match policy {
            SigSelectPolicy::ForcePlus => Sign::Plus,
            SigSelectPolicy::ForceMinus => Sign::Minus,
            SigSelectPolicy::MinAbsC => {
                if c_plus.abs() <= c_minus.abs() {
                    Sign::Plus
                } else {
                    Sign::Minus
                }
            }
            SigSelectPolicy::Custom(f) => f(weights, kernel, c_plus, c_minus),
        },
    };
    let (c, pruned_local) = match sign {
        Sign::Plus => (c_plus, m_plus.ok_or(Error::ZeroKernel)?),
        Sign::Minus => (c_minus, m_minus.ok_or(Error::ZeroKernel)?),
    };
    let mut updated: Vec<f64> = weights
        .iter()
        .zip(kernel)
        .map(|(&w, &n)| w - c * n)
        .collect();
    updated[pruned_local] = 0.0;
    let wmax = updated.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let eps_z = 1e-14 * wmax;
    let mut extra_zeroed = Vec::new();
    let mut clamps = 0;
    for (m, w) in updated.iter_mut().enumerate() {
        if m == pruned_local {
            continue;
        }
        if *w < -eps_z {
            clamps += 1;
            *w = 0.0;
            extra_zeroed.push(m);
        } else if *w <= eps_z {
            *w = 0.0;
            extra_zeroed.push(m);
        }
    }
    Ok(PruneStepOutcome {
        pruned_local,
        c,
        sign,
        updated_weights: updated,
        extra_zeroed,
        positivity_clamps: clamps,
    })
}

// ---------------------------------------------------------------------------
// row streams

/// Pull-based source of Vandermonde rows with weights and global indices;
/// the streaming pruners consume these.
pub trait RowStream {
    fn n_cols(&self) -> usize;
    /// Fill `row` and return (weight, global_index), or `None` at end.
    fn next_row(&mut self, row: &mut [f64]) -> Result<Option<(f64, u64)>>;
}

/// Adapts a node stream plus basis into a row stream.
pub struct BasisRowStream<'a> {
    basis: &'a BasisSpec,
    stream: &'a mut dyn NodeStream,
}

impl<'a> BasisRowStream<'a> {
    pub fn new(basis: &'a BasisSpec, stream: &'a mut dyn NodeStream) -> Result<Self> {
        if stream.dim() != basis.dim() {
            return Err(Error::DimensionMismatch { stream: stream.dim(), basis: basis.dim() });
        }
        Ok(Self { basis, stream })
    }
}

impl RowStream for BasisRowStream<'_> {
    fn n_cols(&self) -> usize {
        self.basis.n()
    }

    fn next_row(&mut self, row: &mut [f64]) -> Result<Option<(f64, u64)>> {
        match self.stream.next_node()? {
            None => Ok(None),
            Some(node) => {
                if !(node.weight > 0.0) {
                    return Err(Error::NonPositiveWeight {
                        line: node.global_index as usize,
                        value: node.weight,
                    });
                }
                eval_row(self.basis, &node.coords, row)?;
                Ok(Some((node.weight, node.global_index)))
            }
        }
    }
}

/// In-memory row stream over a dense row-major matrix.
pub struct MatrixRowStream<'a> {
    rows: &'a [f64],
    weights: &'a [f64],
    n_cols: usize,
    next: usize,
}

impl<'a> MatrixRowStream<'a> {
    pub fn new(rows: &'a [f64], weights: &'a [f64], n_cols: usize) -> Self {
        assert_eq!(rows.len(), weights.len() * n_cols);
        Self { rows, weights, n_cols, next: 0 }
    }
}

impl RowStream for MatrixRowStream<'_> {
    fn n_cols(&self) -> usize {
        self.n_cols
    }

    fn next_row(&mut self, row: &mut [f64]) -> Result<Option<(f64, u64)>> {
        if self.next >= self.weights.len() {
            return Ok(None);
        }
        let i = self.next;
        row.copy_from_slice(&self.rows[i * self.n_cols..(i + 1) * self.n_cols]);
        self.next += 1;
        Ok(Some((self.weights[i], i as u64 + 1)))
    }
}

// ---------------------------------------------------------------------------
// dense CSP baseline

/// Dense pruning over the full M x N matrix: recomputes a kernel vector of
/// the whole surviving matrix every iteration (O(M N^2) per step).
pub fn csp(
    vandermonde: &[f64],
    n_cols: usize,
    weights: &[f64],
    policy: &SigSelectPolicy,
) -> Result<PruneResult> {
    let m_rows = weights.len();
    assert_eq!(vandermonde.len(), m_rows * n_cols);
    if m_rows < n_cols {
        return Err(Error::InvalidArgument(format!(
            "need M >= N, got {m_rows} x {n_cols}"
        )));
    }
    if let Some((i, &w)) = weights.iter().enumerate().find(|(_, &w)| !(w > 0.0)) {
        return Err(Error::NonPositiveWeight { line: i + 1, value: w });
    }
    let mut rows = vandermonde.to_vec();
    let mut w: Vec<f64> = weights.to_vec();
    let mut globals: Vec<u64> = (1..=m_rows as u64).collect();
    let mut iterations = 0;
    let mut diagnostics = Diagnostics::default();
    while w.len() > n_cols {
        let qr = QrWindow::full_qr(&rows, w.len(), n_cols, globals.clone())?;
        if qr.rank_deficient() {
            diagnostics.rank_deficiency_flagged = true;
        }
        let kernel = qr.kernel_column(qr.k_extra());
        let step = prune_step(&w, &kernel, policy)?;
        diagnostics.positivity_clamps += step.positivity_clamps;
        let mut zeroed: Vec<usize> = step.extra_zeroed.clone();
        zeroed.push(step.pruned_local);
        zeroed.sort_unstable_by(|a, b| b.cmp(a));
        w = step.updated_weights;
        for z in zeroed {
            w.remove(z);
            globals.remove(z);
            rows.drain(z * n_cols..(z + 1) * n_cols);
        }
        iterations += 1;
    }
    let pairs = globals.into_iter().zip(w).collect();
    Ok(PruneResult::from_window(pairs, iterations, diagnostics))
}

// ---------------------------------------------------------------------------
// streaming SCSP / GSCSP

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelBackend {
    /// Refactor the window from scratch each iteration (O(N^3)).
    DenseQr,
    /// Maintain the QR factorization by Givens row downdate/update (O(N^2)
    /// per iteration); this is the GSCSP configuration.
    GivensWindow,
}

/// How often the kernel-orthogonality diagnostic is sampled.
const DIAG_SAMPLE_INTERVAL: u64 = 1024;

/// Streaming pruning over an (N+k)-row sliding window.
///
/// Consumes the stream once in order; working memory is O((N+k)^2)
/// independent of the stream length. Both backends walk the identical
/// window/replacement schedule and differ only in how the cokernel vector
/// is obtained.
pub fn scsp(
    stream: &mut dyn RowStream,
    k: usize,
    policy: &SigSelectPolicy,
    backend: KernelBackend,
) -> Result<PruneResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let n = stream.n_cols();
    let target = n + k;

    // initial fill
    let mut rows: Vec<f64> = Vec::with_capacity(target * n);
    let mut weights: Vec<f64> = Vec::with_capacity(target);
    let mut globals: Vec<u64> = Vec::with_capacity(target);
    let mut row_buf = vec![0.0; n];
    let mut exhausted = false;
    while weights.len() < target {
        match stream.next_row(&mut row_buf)? {
            Some((w, g)) => {
                rows.extend_from_slice(&row_buf);
                weights.push(w);
                globals.push(g);
            }
            None => {
                exhausted = true;
                break;
            }
        }
    }
    if weights.len() <= n {
        return Err(Error::StreamTooShort { got: weights.len(), need: n + 1 });
    }

    let mut qr = QrWindow::full_qr(&rows, weights.len(), n, globals)?;
    drop(rows);
    let mut iterations: u64 = 0;
    let mut diagnostics = Diagnostics::default();
    diagnostics.startup_ops = qr.ops();

    while qr.n_rows() > n {
        let ops_at_iter_start = qr.ops();
        if qr.rank_deficient() {
            diagnostics.rank_deficiency_flagged = true;
        }
        let kernel = qr.kernel_column(qr.k_extra());
        if iterations % DIAG_SAMPLE_INTERVAL == 0 {
            diagnostics.kernel_orthogonality_max =
                diagnostics.kernel_orthogonality_max.max(kernel_residual(&qr, &kernel));
        }
        let step = prune_step(&weights, &kernel, policy)?;
        diagnostics.positivity_clamps += step.positivity_clamps;
        weights = step.updated_weights;
        iterations += 1;

        let mut zeroed: Vec<usize> = step.extra_zeroed.clone();
        zeroed.push(step.pruned_local);
        // replace in place while the stream lasts (no index shifts), then
        // drain-shrink in descending order
        zeroed.sort_unstable_by(|a, b| b.cmp(a));
        let mut idx = 0;
        while idx < zeroed.len() {
            let local = zeroed[idx];
            let remove_global = qr.window()[local];
            if !exhausted {
                match stream.next_row(&mut row_buf)? {
                    Some((w, g)) => {
                        qr.downdate_update(remove_global, Some((&row_buf, g)))?;
                        weights[local] = w;
                        idx += 1;
                        continue;
                    }
                    None => exhausted = true,
                }
            }
            // stream exhausted: shrink, or finish when only zeros remain
            // above the N surviving rows
            let survivors = weights.iter().filter(|w| **w > 0.0).count();
            if survivors <= n && zeroed.len() - idx == weights.len() - survivors {
                // drop all remaining zero entries without touching the QR
                for &z in &zeroed[idx..] {
                    weights.remove(z);
                }
                let pairs = qr
                    .window()
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !zeroed[idx..].contains(i))
                    .map(|(_, &g)| g)
                    .zip(weights.iter().copied())
                    .collect();
                diagnostics.qr_refreshes = qr.refreshes();
                diagnostics.total_ops = qr.ops();
                return Ok(PruneResult::from_window(pairs, iterations, diagnostics));
            }
            qr.downdate_update(remove_global, None)?;
            weights.remove(local);
            idx += 1;
        }
        if backend == KernelBackend::GivensWindow {
            diagnostics.max_iteration_ops = diagnostics
                .max_iteration_ops
                .max(qr.ops() - ops_at_iter_start);
        }
        if backend == KernelBackend::DenseQr {
            // oracle-style backend: discard the maintained factors and
            // refactor the same window from scratch
            qr = QrWindow::full_qr(qr.rows(), qr.n_rows(), n, qr.window().to_vec())?;
        }
    }
    diagnostics.qr_refreshes = qr.refreshes();
    diagnostics.total_ops = qr.ops();
    let pairs = qr.window().iter().copied().zip(weights).collect();
    Ok(PruneResult::from_window(pairs, iterations, diagnostics))
}

fn kernel_residual(qr: &QrWindow, kernel: &[f64]) -> f64 {
    let n_rows = qr.n_rows();
    let n_cols = qr.n_cols();
    let rows = qr.rows();
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..n_cols {
        let mut dot = 0.0;
        for i in 0..n_rows {
            dot += rows[i * n_cols + j] * kernel[i];
        }
        num += dot * dot;
    }
    for v in rows {
        den += v * v;
    }
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// Streaming pruning with the Givens-maintained window.
pub fn gscsp(
    stream: &mut dyn NodeStream,
    basis: &BasisSpec,
    k: usize,
    policy: &SigSelectPolicy,
) -> Result<PruneResult> {
    let mut rows = BasisRowStream::new(basis, stream)?;
    scsp(&mut rows, k, policy, KernelBackend::GivensWindow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{multi_index_set, BasisSpec, Family, IndexSetKind};
    use crate::io_stream::VecStream;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn prune_step_hand_case() {
        // w = (1/3,1/3,1/3), n = (1,-2,1): c+ = 1/3, c- = -1/6,
        // MinAbsC -> sigma = -, prune local 1, w -> (1/2, 0, 1/2)
        let w = [1.0 / 3.0; 3];
        let n = [1.0, -2.0, 1.0];
        let out = prune_step(&w, &n, &SigSelectPolicy::MinAbsC).unwrap();
        assert_eq!(out.sign, Sign::Minus);
        assert_eq!(out.pruned_local, 1);
        assert_relative_eq!(out.c, -1.0 / 6.0);
        assert_eq!(out.updated_weights[1], 0.0);
        assert_relative_eq!(out.updated_weights[0], 0.5);
        assert_relative_eq!(out.updated_weights[2], 0.5);
        assert!(out.extra_zeroed.is_empty());
    }

    #[test]
    fn prune_step_forced_sign_when_one_side_empty() {
        let w = [1.0, 2.0, 4.0];
        let n = [1.0, 1.0, 1.0];
        for policy in [SigSelectPolicy::MinAbsC, SigSelectPolicy::ForceMinus] {
            let out = prune_step(&w, &n, &policy).unwrap();
            assert_eq!(out.sign, Sign::Plus);
            assert_eq!(out.pruned_local, 0);
        }
    }

    #[test]
    fn prune_step_tie_breaks_toward_plus() {
        let w = [1.0, 1.0];
        let n = [1.0, -1.0];
        let out = prune_step(&w, &n, &SigSelectPolicy::MinAbsC).unwrap();
        assert_eq!(out.sign, Sign::Plus);
        assert_eq!(out.pruned_local, 0);
        assert_eq!(out.updated_weights, vec![0.0, 2.0]);
    }

    #[test]
    fn prune_step_zero_kernel_errors() {
        assert!(matches!(
            prune_step(&[1.0, 1.0], &[0.0, 0.0], &SigSelectPolicy::MinAbsC),
            Err(Error::ZeroKernel)
        ));
    }

    #[test]
    fn prune_step_weights_stay_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let len = rng.gen_range(2..12);
            let w: Vec<f64> = (0..len).map(|_| rng.gen_range(1e-6..1.0)).collect();
            let n: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if n.iter().all(|v| *v == 0.0) {
                continue;
            }
            let out = prune_step(&w, &n, &SigSelectPolicy::MinAbsC).unwrap();
            assert!(out.updated_weights.iter().all(|v| *v >= 0.0));
            assert_eq!(out.updated_weights[out.pruned_local], 0.0);
        }
    }

    fn monomials_1d(degree: f64) -> BasisSpec {
        BasisSpec::product(
            Family::Monomial,
            multi_index_set(IndexSetKind::Td, degree, 1).unwrap(),
        )
    }

    #[test]
    fn csp_three_node_exact_rule() {
        // brute force over 2-subsets shows {0,1} with weights (1/2,1/2) is
        // the unique positive 2-point rule matching eta = (1, 1/2)
        let rows = [1.0, 0.0, 1.0, 0.5, 1.0, 1.0];
        let w = [1.0 / 3.0; 3];
        let out = csp(&rows, 2, &w, &SigSelectPolicy::MinAbsC).unwrap();
        assert_eq!(out.kept_global, vec![1, 3]);
        assert_relative_eq!(out.kept_weights[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(out.kept_weights[1], 0.5, epsilon = 1e-14);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn csp_square_input_unchanged() {
        let rows = [1.0, 0.0, 1.0, 1.0];
        let w = [0.25, 0.75];
        let out = csp(&rows, 2, &w, &SigSelectPolicy::MinAbsC).unwrap();
        assert_eq!(out.kept_global, vec![1, 2]);
        assert_eq!(out.kept_weights, vec![0.25, 0.75]);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn csp_random_instance_preserves_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (m, n) = (40, 5);
        let rows: Vec<f64> = (0..m * n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
        let eta = moments(&rows, n, &w, &(1..=m as u64).collect::<Vec<_>>());
        let out = csp(&rows, n, &w, &SigSelectPolicy::MinAbsC).unwrap();
        assert_eq!(out.kept_global.len(), n);
        assert!(out.kept_weights.iter().all(|v| *v > 0.0));
        let eta2 = moments(&rows, n, &out.kept_weights, &out.kept_global);
        let norm: f64 = eta.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff: f64 = eta
            .iter()
            .zip(&eta2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(diff <= 1e-12 * norm, "residual {diff} vs norm {norm}");
    }

    /// eta = sum over kept globals of w * row (globals are 1-based rows of
    /// the full matrix)
    fn moments(rows: &[f64], n: usize, weights: &[f64], globals: &[u64]) -> Vec<f64> {
        let mut eta = vec![0.0; n];
        for (&g, &w) in globals.iter().zip(weights) {
            let r = &rows[(g as usize - 1) * n..(g as usize) * n];
            for j in 0..n {
                eta[j] += w * r[j];
            }
        }
        eta
    }

    #[test]
    fn scsp_three_node_example_matches_csp() {
        let basis = monomials_1d(1.0);
        for backend in [KernelBackend::DenseQr, KernelBackend::GivensWindow] {
            let mut stream = VecStream::new(
                1,
                vec![
                    (vec![0.0], 1.0 / 3.0),
                    (vec![0.5], 1.0 / 3.0),
                    (vec![1.0], 1.0 / 3.0),
                ],
            );
            let mut rows = BasisRowStream::new(&basis, &mut stream).unwrap();
            let out = scsp(&mut rows, 1, &SigSelectPolicy::MinAbsC, backend).unwrap();
            assert_eq!(out.kept_global, vec![1, 3]);
            assert_relative_eq!(out.kept_weights[0], 0.5, epsilon = 1e-12);
            assert_relative_eq!(out.kept_weights[1], 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn scsp_backends_agree_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let (m, n) = (200, 8);
            let rows: Vec<f64> = (0..m * n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
            let run = |backend| {
                let mut s = MatrixRowStream::new(&rows, &w, n);
                scsp(&mut s, 1, &SigSelectPolicy::MinAbsC, backend).unwrap()
            };
            let a = run(KernelBackend::DenseQr);
            let b = run(KernelBackend::GivensWindow);
            assert_eq!(a.kept_global, b.kept_global);
            for (x, y) in a.kept_weights.iter().zip(&b.kept_weights) {
                assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn scsp_order_sensitivity() {
        // a 5x2 instance where two stream orderings keep different supports
        let nodes = [0.0, 0.3, 0.55, 0.8, 1.0];
        let basis = monomials_1d(1.0);
        let run = |order: &[usize]| {
            let items: Vec<(Vec<f64>, f64)> =
                order.iter().map(|&i| (vec![nodes[i]], 0.2)).collect();
            let mut stream = VecStream::new(1, items);
            let mut rows = BasisRowStream::new(&basis, &mut stream).unwrap();
            scsp(&mut rows, 1, &SigSelectPolicy::MinAbsC, KernelBackend::GivensWindow).unwrap()
        };
        let fwd = run(&[0, 1, 2, 3, 4]);
        let rev = run(&[4, 3, 2, 1, 0]);
        // map local stream positions back to node values for comparison
        let fwd_nodes: Vec<f64> = fwd.kept_global.iter().map(|&g| nodes[g as usize - 1]).collect();
        let rev_nodes: Vec<f64> =
            rev.kept_global.iter().map(|&g| nodes[4 - (g as usize - 1)]).collect();
        assert_ne!(fwd_nodes, rev_nodes);
    }

    #[test]
    fn scsp_too_short_stream() {
        let basis = monomials_1d(1.0);
        let mut stream = VecStream::new(1, vec![(vec![0.0], 0.5), (vec![1.0], 0.5)]);
        let mut rows = BasisRowStream::new(&basis, &mut stream).unwrap();
        assert!(matches!(
            scsp(&mut rows, 1, &SigSelectPolicy::MinAbsC, KernelBackend::GivensWindow),
            Err(Error::StreamTooShort { got: 2, need: 3 })
        ));
    }

    #[test]
    fn scsp_moment_preservation_streaming() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let (m, n) = (500, 8);
        let rows: Vec<f64> = (0..m * n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
        let eta = moments(&rows, n, &w, &(1..=m as u64).collect::<Vec<_>>());
        let mut s = MatrixRowStream::new(&rows, &w, n);
        let out = scsp(&mut s, 1, &SigSelectPolicy::MinAbsC, KernelBackend::GivensWindow).unwrap();
        assert_eq!(out.kept_global.len(), n);
        assert!(out.kept_weights.iter().all(|v| *v > 0.0));
        let eta2 = moments(&rows, n, &out.kept_weights, &out.kept_global);
        let norm: f64 = eta.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff: f64 = eta
            .iter()
            .zip(&eta2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(diff <= 1e-10 * norm, "residual {diff}");
        // exactly one prune per iteration on generic data
        assert_eq!(out.iterations, (m - n) as u64);
    }

    #[test]
    fn gscsp_wrapper_runs_on_generated_nodes() {
        use crate::io_stream::{rejection_sampler, DomainSpec};
        let basis = BasisSpec::product(
            Family::Legendre,
            multi_index_set(IndexSetKind::Td, 3.0, 2).unwrap(),
        );
        let n = basis.n();
        let mut stream = rejection_sampler(DomainSpec::unit_disk(), 2000, 5);
        let out = gscsp(&mut stream, &basis, 1, &SigSelectPolicy::MinAbsC).unwrap();
        assert_eq!(out.kept_global.len(), n);
        assert!(out.kept_weights.iter().all(|v| *v > 0.0));
        assert!(out.diagnostics.kernel_orthogonality_max <= 1e-10);
    }
}

//! Full QR of the (N+k) x N active window with O(N^2) Givens row
//! downdate/update, exposing trailing cokernel columns of Q.

use crate::error::{Error, Result};

/// Rotation coefficients with c^2 + s^2 = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GivensCoeffs {
    pub c: f64,
    pub s: f64,
}

/// Rotation zeroing b against a: applied to (a, b) it yields (r, 0) with
/// r = hypot(a, b) >= 0. (0, 0) maps to the identity rotation.
pub fn givens(a: f64, b: f64) -> GivensCoeffs {
    if b == 0.0 {
        // preserve sign of a on the diagonal only when a >= 0
        if a >= 0.0 {
            GivensCoeffs { c: 1.0, s: 0.0 }
        } else {
            GivensCoeffs { c: -1.0, s: 0.0 }
        }
    } else {
        let r = a.hypot(b);
        GivensCoeffs { c: a / r, s: b / r }
    }
}

/// Full QR factorization of the active row window.
///
/// `q` is (rows x rows) column-major, `r` and `rows_mat` are
/// (rows x n_cols) row-major. `window` holds the global row indices in
/// order. The trailing `rows - n_cols` columns of `q` span the cokernel.
pub struct QrWindow {
    n_rows: usize,
    n_cols: usize,
    q: Vec<f64>,
    r: Vec<f64>,
    rows_mat: Vec<f64>,
    window: Vec<u64>,
    ops: u64,
    updates: u64,
    refreshes: u64,
}

/// Check orthogonality drift every this many downdate_update calls.
const DRIFT_CHECK_INTERVAL: u64 = 4096;
/// Refresh from scratch when ||Q^T Q - I||_F exceeds this.
const DRIFT_LIMIT: f64 = 1e-9;

impl QrWindow {
    /// Dense O(rows^2 * cols) Givens QR; used at startup and for drift
    /// refreshes.
    pub fn full_qr(rows: &[f64], n_rows: usize, n_cols: usize, window: Vec<u64>) -> Result<Self> {
        assert_eq!(rows.len(), n_rows * n_cols);
        assert_eq!(window.len(), n_rows);
        if n_cols == 0 || n_rows <= n_cols {
            return Err(Error::InvalidArgument(format!(
                "window must be strictly tall: {n_rows} x {n_cols}"
            )));
        }
        if !rows.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let mut w = QrWindow {
            n_rows,
            n_cols,
            q: vec![0.0; n_rows * n_rows],
            r: rows.to_vec(),
            rows_mat: rows.to_vec(),
            window,
            ops: 0,
            updates: 0,
            refreshes: 0,
        };
        w.refactor();
        Ok(w)
    }

    fn refactor(&mut self) {
        let n = self.n_rows;
        self.q.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            self.q[i * n + i] = 1.0;
        }
        self.r.copy_from_slice(&self.rows_mat);
        for j in 0..self.n_cols {
            for i in (j + 1)..n {
                let g = givens(self.r[j * self.n_cols + j], self.r[i * self.n_cols + j]);
                self.rotate_r_rows(j, i, g);
                self.rotate_q_cols(j, i, g);
            }
        }
        self.enforce_triangular();
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn k_extra(&self) -> usize {
        self.n_rows - self.n_cols
    }

    pub fn window(&self) -> &[u64] {
        &self.window
    }

    /// Cumulative arithmetic-operation count (rotation applications).
    pub fn ops(&self) -> u64 {
        self.ops
    }

    pub fn reset_ops(&mut self) {
        self.ops = 0;
    }

    pub fn refreshes(&self) -> u64 {
        self.refreshes
    }

    #[inline]
    fn rotate_q_cols(&mut self, p: usize, q_idx: usize, g: GivensCoeffs) {
        let n = self.n_rows;
        let (c, s) = (g.c, g.s);
        // columns are contiguous in the column-major Q buffer
        let (lo, hi) = if p < q_idx { (p, q_idx) } else { (q_idx, p) };
        let (head, tail) = self.q.split_at_mut(hi * n);
        let col_lo = &mut head[lo * n..lo * n + n];
        let col_hi = &mut tail[..n];
        let (cp, cq): (&mut [f64], &mut [f64]) =
            if p < q_idx { (col_lo, col_hi) } else { (col_hi, col_lo) };
        for (u, v) in cp.iter_mut().zip(cq.iter_mut()) {
            let a = *u;
            let b = *v;
            *u = c * a + s * b;
            *v = -s * a + c * b;
        }
        self.ops += 6 * n as u64;
    }

    #[inline]
    fn rotate_r_rows(&mut self, p: usize, q_idx: usize, g: GivensCoeffs) {
        let m = self.n_cols;
        let (c, s) = (g.c, g.s);
        let (lo, hi) = if p < q_idx { (p, q_idx) } else { (q_idx, p) };
        let (head, tail) = self.r.split_at_mut(hi * m);
        let row_lo = &mut head[lo * m..lo * m + m];
        let row_hi = &mut tail[..m];
        let (rp, rq): (&mut [f64], &mut [f64]) =
            if p < q_idx { (row_lo, row_hi) } else { (row_hi, row_lo) };
        for (u, v) in rp.iter_mut().zip(rq.iter_mut()) {
            let a = *u;
            let b = *v;
            *u = c * a + s * b;
            *v = -s * a + c * b;
        }
        self.ops += 6 * m as u64;
    }

    fn enforce_triangular(&mut self) {
        for i in 1..self.n_rows {
            for j in 0..self.n_cols.min(i) {
                self.r[i * self.n_cols + j] = 0.0;
            }
        }
    }

    /// Replace one window row (downdate then update), or shrink the window
    /// by one when `new_row` is `None` (end-of-stream drain).
    ///
    /// Cost is O((N+k) * N) arithmetic.
    pub fn downdate_update(
        &mut self,
        remove_global: u64,
        new_row: Option<(&[f64], u64)>,
    ) -> Result<()> {
        let jr = self
            .window
            .iter()
            .position(|&g| g == remove_global)
            .ok_or(Error::IndexNotInWindow(remove_global as usize))?;
        if let Some((row, _)) = new_row {
            if row.len() != self.n_cols {
                return Err(Error::InvalidArgument(format!(
                    "new row has {} entries, expected {}",
                    row.len(),
                    self.n_cols
                )));
            }
            if !row.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteInput);
            }
        }
        let n = self.n_rows;
        let m = self.n_cols;

        // Downdate: drive Q row jr to +e_jr. First sweep mass from the
        // right into column jr, then clear the columns left of jr.
        for i in ((jr + 1)..n).rev() {
            let g = givens(self.q[(i - 1) * n + jr], self.q[i * n + jr]);
            self.rotate_q_cols(i - 1, i, g);
            self.rotate_r_rows(i - 1, i, g);
        }
        for i in (0..jr).rev() {
            let g = givens(self.q[jr * n + jr], self.q[i * n + jr]);
            self.rotate_q_cols(jr, i, g);
            self.rotate_r_rows(jr, i, g);
        }

        match new_row {
            Some((row, new_global)) => {
                // Row jr of Q is now +/-e_jr; reset it exactly and insert
                // the replacement row into R.
                for i in 0..n {
                    self.q[i * n + jr] = 0.0;
                    self.q[jr * n + i] = 0.0;
                }
                self.q[jr * n + jr] = 1.0;
                self.r[jr * m..(jr + 1) * m].copy_from_slice(row);
                self.rows_mat[jr * m..(jr + 1) * m].copy_from_slice(row);
                self.window[jr] = new_global;

                // Update: re-triangularize the now-dense row jr.
                for i in 0..m.min(jr) {
                    let g = givens(self.r[i * m + i], self.r[jr * m + i]);
                    self.rotate_r_rows(i, jr, g);
                    self.rotate_q_cols(i, jr, g);
                }
                for i in jr..m {
                    if i + 1 >= n {
                        break;
                    }
                    let g = givens(self.r[i * m + i], self.r[(i + 1) * m + i]);
                    self.rotate_r_rows(i, i + 1, g);
                    self.rotate_q_cols(i, i + 1, g);
                }
                self.enforce_triangular();

                self.updates += 1;
                if self.updates % DRIFT_CHECK_INTERVAL == 0
                    && self.orthogonality_residual() > DRIFT_LIMIT
                {
                    self.refactor();
                    self.refreshes += 1;
                }
            }
            None => {
                // Drain mode: delete row jr from Q and R, column jr from Q.
                if self.n_rows == self.n_cols + 1 {
                    return Err(Error::InvalidArgument(
                        "cannot shrink window below N+1 rows".into(),
                    ));
                }
                let nn = n - 1;
                let mut q = vec![0.0; nn * nn];
                for col in 0..n {
                    if col == jr {
                        continue;
                    }
                    let nc = if col < jr { col } else { col - 1 };
                    for row in 0..n {
                        if row == jr {
                            continue;
                        }
                        let nr = if row < jr { row } else { row - 1 };
                        q[nc * nn + nr] = self.q[col * n + row];
                    }
                }
                let mut r = vec![0.0; nn * m];
                let mut rows_mat = vec![0.0; nn * m];
                for row in 0..n {
                    if row == jr {
                        continue;
                    }
                    let nr = if row < jr { row } else { row - 1 };
                    r[nr * m..(nr + 1) * m].copy_from_slice(&self.r[row * m..(row + 1) * m]);
                    rows_mat[nr * m..(nr + 1) * m]
                        .copy_from_slice(&self.rows_mat[row * m..(row + 1) * m]);
                }
                self.q = q;
                self.r = r;
                self.rows_mat = rows_mat;
                self.window.remove(jr);
                self.n_rows = nn;
                self.enforce_triangular();
            }
        }
        Ok(())
    }

    /// The `which`-th (1-based) of the trailing k columns of Q: a unit
    /// vector orthogonal to every window row.
    pub fn kernel_column(&self, which: usize) -> Vec<f64> {
        assert!(which >= 1 && which <= self.k_extra());
        let col = self.n_cols + which - 1;
        self.q[col * self.n_rows..(col + 1) * self.n_rows].to_vec()
    }

    /// ||Q^T Q - I||_F.
    pub fn orthogonality_residual(&self) -> f64 {
        let n = self.n_rows;
        let mut acc = 0.0;
        for i in 0..n {
            for j in i..n {
                let mut dot = 0.0;
                for t in 0..n {
                    dot += self.q[i * n + t] * self.q[j * n + t];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                let e = dot - target;
                acc += if i == j { e * e } else { 2.0 * e * e };
            }
        }
        acc.sqrt()
    }

    /// ||Q R - rows||_F / ||rows||_F.
    pub fn factorization_residual(&self) -> f64 {
        let n = self.n_rows;
        let m = self.n_cols;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            for j in 0..m {
                let mut dot = 0.0;
                for t in 0..n {
                    dot += self.q[t * n + i] * self.r[t * m + j];
                }
                let e = dot - self.rows_mat[i * m + j];
                num += e * e;
                den += self.rows_mat[i * m + j] * self.rows_mat[i * m + j];
            }
        }
        (num / den.max(f64::MIN_POSITIVE)).sqrt()
    }

    /// Trailing-diagonal test flagging a violated Chebyshev-system
    /// assumption; the kernel column remains valid either way.
    pub fn rank_deficient(&self) -> bool {
        let m = self.n_cols;
        let diag = self.r[(m - 1) * m + (m - 1)].abs();
        let fro: f64 = self.r.iter().map(|v| v * v).sum::<f64>().sqrt();
        diag <= 1e-12 * fro
    }

    /// Row-major copy of the window rows (diagnostics and oracles).
    pub fn rows(&self) -> &[f64] {
        &self.rows_mat
    }

    pub fn r_entry(&self, i: usize, j: usize) -> f64 {
        self.r[i * self.n_cols + j]
    }

    pub fn q_entry(&self, i: usize, j: usize) -> f64 {
        self.q[j * self.n_rows + i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(rng: &mut ChaCha8Rng, n_rows: usize, n_cols: usize) -> Vec<f64> {
        (0..n_rows * n_cols).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn givens_basic_cases() {
        let g = givens(1.0, 0.0);
        assert_eq!((g.c, g.s), (1.0, 0.0));
        let g = givens(0.0, 1.0);
        // maps (0,1) -> (1,0)
        assert!((g.c * 0.0 + g.s * 1.0 - 1.0).abs() < 1e-15);
        assert!((-g.s * 0.0 + g.c * 1.0).abs() < 1e-15);
        let g = givens(3.0, 4.0);
        assert!((g.c * 3.0 + g.s * 4.0 - 5.0).abs() < 1e-14);
        assert!((g.c * g.c + g.s * g.s - 1.0).abs() < 1e-15);
        let g = givens(0.0, 0.0);
        assert_eq!((g.c, g.s), (1.0, 0.0));
        // no overflow at extreme magnitudes
        let g = givens(1e308, 1e308);
        assert!(g.c.is_finite() && g.s.is_finite());
    }

    #[test]
    fn full_qr_already_triangular() {
        let rows = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let w = QrWindow::full_qr(&rows, 3, 2, vec![1, 2, 3]).unwrap();
        assert!(w.orthogonality_residual() < 1e-14);
        assert!(w.factorization_residual() < 1e-14);
        assert!(w.r_entry(0, 0).abs() > 0.99 && w.r_entry(1, 1).abs() > 0.99);
    }

    #[test]
    fn full_qr_monomial_rows() {
        // nodes (0, 0.5, 1), monomials {1, x}
        let rows = [1.0, 0.0, 1.0, 0.5, 1.0, 1.0];
        let w = QrWindow::full_qr(&rows, 3, 2, vec![1, 2, 3]).unwrap();
        assert!(w.orthogonality_residual() < 1e-14);
        assert!(w.factorization_residual() < 1e-14);
        assert!(!w.rank_deficient());
    }

    #[test]
    fn full_qr_duplicate_row_flags_rank_deficiency() {
        let rows = [1.0, 2.0, 1.0, 2.0, 0.5, 0.25];
        let w = QrWindow::full_qr(&rows, 3, 2, vec![1, 2, 3]).unwrap();
        assert!(w.factorization_residual() < 1e-14);
        // duplicated row does not make the 3x2 rank deficient; a truly
        // dependent pair of columns does
        let rows = [1.0, 2.0, 0.5, 1.0, 0.25, 0.5];
        let w = QrWindow::full_qr(&rows, 3, 2, vec![1, 2, 3]).unwrap();
        assert!(w.rank_deficient());
    }

    #[test]
    fn full_qr_rejects_nonfinite() {
        let rows = [1.0, f64::NAN, 0.0, 1.0, 2.0, 3.0];
        assert!(matches!(
            QrWindow::full_qr(&rows, 3, 2, vec![1, 2, 3]),
            Err(Error::NonFiniteInput)
        ));
    }

    #[test]
    fn kernel_column_hand_case() {
        // rows [[1,0],[1,0.5],[1,1]] -> cokernel (1,-2,1)/sqrt(6)
        let rows = [1.0, 0.0, 1.0, 0.5, 1.0, 1.0];
        let w = QrWindow::full_qr(&rows, 3, 2, vec![1, 2, 3]).unwrap();
        let n = w.kernel_column(1);
        let expect = [1.0, -2.0, 1.0].map(|v: f64| v / 6.0f64.sqrt());
        let sign = if n[0] * expect[0] >= 0.0 { 1.0 } else { -1.0 };
        for (a, b) in n.iter().zip(expect) {
            assert!((a - sign * b).abs() < 1e-13, "{n:?}");
        }
        let norm: f64 = n.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-14);
    }

    #[test]
    fn kernel_column_zero_row() {
        let rows = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let w = QrWindow::full_qr(&rows, 3, 2, vec![1, 2, 3]).unwrap();
        let n = w.kernel_column(1);
        assert!((n[2].abs() - 1.0).abs() < 1e-14);
        assert!(n[0].abs() < 1e-14 && n[1].abs() < 1e-14);
    }

    #[test]
    fn downdate_update_readd_same_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows = random_rows(&mut rng, 5, 4);
        let mut w = QrWindow::full_qr(&rows, 5, 4, vec![1, 2, 3, 4, 5]).unwrap();
        let row2: Vec<f64> = rows[2 * 4..3 * 4].to_vec();
        w.downdate_update(3, Some((&row2, 3))).unwrap();
        assert!(w.factorization_residual() < 1e-12);
        assert!(w.orthogonality_residual() < 1e-12);
    }

    #[test]
    fn downdate_update_first_row_path() {
        // j_rem = first row exercises the second downdate loop
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows = random_rows(&mut rng, 6, 5);
        let mut w = QrWindow::full_qr(&rows, 6, 5, (1..=6).collect()).unwrap();
        let new_row = random_rows(&mut rng, 1, 5);
        w.downdate_update(1, Some((&new_row, 7))).unwrap();
        assert_eq!(w.window(), &[7, 2, 3, 4, 5, 6]);
        assert!(w.factorization_residual() < 1e-13, "{}", w.factorization_residual());
        assert!(w.orthogonality_residual() < 1e-13);
    }

    #[test]
    fn thousand_random_replacements_match_full_qr() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n_rows, n_cols) = (17, 16);
        let rows = random_rows(&mut rng, n_rows, n_cols);
        let mut w = QrWindow::full_qr(&rows, n_rows, n_cols, (1..=17).collect()).unwrap();
        let mut next_global = 18u64;
        for _ in 0..1000 {
            let slot = rng.gen_range(0..n_rows);
            let remove = w.window()[slot];
            let new_row = random_rows(&mut rng, 1, n_cols);
            w.downdate_update(remove, Some((&new_row, next_global))).unwrap();
            next_global += 1;
        }
        assert!(w.orthogonality_residual() <= 1e-10, "{}", w.orthogonality_residual());
        assert!(w.factorization_residual() <= 1e-10, "{}", w.factorization_residual());
        // oracle: dense refactorization of the same final row set
        let oracle =
            QrWindow::full_qr(w.rows(), n_rows, n_cols, w.window().to_vec()).unwrap();
        let a = w.kernel_column(1);
        let b = oracle.kernel_column(1);
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-9, "kernel mismatch, |dot|={}", dot.abs());
    }

    #[test]
    fn kernel_orthogonal_after_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n_rows, n_cols) = (9, 8);
        let rows = random_rows(&mut rng, n_rows, n_cols);
        let mut w = QrWindow::full_qr(&rows, n_rows, n_cols, (1..=9).collect()).unwrap();
        for step in 0..200 {
            let slot = rng.gen_range(0..n_rows);
            let remove = w.window()[slot];
            let new_row = random_rows(&mut rng, 1, n_cols);
            w.downdate_update(remove, Some((&new_row, 100 + step))).unwrap();
            let n = w.kernel_column(1);
            let rows_now = w.rows();
            let fro: f64 = rows_now.iter().map(|v| v * v).sum::<f64>().sqrt();
            for j in 0..n_cols {
                let dot: f64 = (0..n_rows).map(|i| rows_now[i * n_cols + j] * n[i]).sum();
                assert!(dot.abs() <= 1e-10 * fro, "step {step}: dot={dot}");
            }
        }
    }

    #[test]
    fn drain_mode_shrinks_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows = random_rows(&mut rng, 8, 4);
        let mut w = QrWindow::full_qr(&rows, 8, 4, (1..=8).collect()).unwrap();
        w.downdate_update(3, None).unwrap();
        assert_eq!(w.n_rows(), 7);
        assert_eq!(w.window(), &[1, 2, 4, 5, 6, 7, 8]);
        assert!(w.factorization_residual() < 1e-13);
        assert!(w.orthogonality_residual() < 1e-13);
        while w.n_rows() > 5 {
            let g = w.window()[0];
            w.downdate_update(g, None).unwrap();
        }
        assert!(w.factorization_residual() < 1e-13);
        // cannot shrink below N+1
        let g = w.window()[0];
        assert!(w.downdate_update(g, None).is_err());
    }

    #[test]
    fn missing_index_is_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rows = random_rows(&mut rng, 3, 2);
        let mut w = QrWindow::full_qr(&rows, 3, 2, vec![1, 2, 3]).unwrap();
        assert!(matches!(
            w.downdate_update(99, None),
            Err(Error::IndexNotInWindow(99))
        ));
    }

    #[test]
    fn op_count_is_quadratic_per_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(n_rows, n_cols) in &[(9usize, 8usize), (17, 16), (33, 32)] {
            let rows = random_rows(&mut rng, n_rows, n_cols);
            let mut w =
                QrWindow::full_qr(&rows, n_rows, n_cols, (1..=n_rows as u64).collect()).unwrap();
            w.reset_ops();
            let reps = 50;
            for step in 0..reps {
                let slot = rng.gen_range(0..n_rows);
                let remove = w.window()[slot];
                let new_row = random_rows(&mut rng, 1, n_cols);
                w.downdate_update(remove, Some((&new_row, 1000 + step))).unwrap();
            }
            let per_update = w.ops() as f64 / reps as f64;
            // <= C * (N+k) * N with C independent of N
            let bound = 30.0 * (n_rows * n_cols) as f64;
            assert!(per_update <= bound, "per_update={per_update} bound={bound}");
        }
    }
}

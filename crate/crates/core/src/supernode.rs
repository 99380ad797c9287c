//! Dense trapezoidal supernode storage and the elementary operations shared by
//! every pivoting strategy.
//!
//! A supernode is an `n x p` matrix whose leading `p x p` block `A11` is
//! symmetric (lower triangle authoritative) and whose trailing `(n-p) x p`
//! block `A21` is general. Pivots are only ever chosen from `A11`.

use serde::{Deserialize, Serialize};

use crate::dense::{DenseMatrix, MatrixRead, RowMatrix};
use crate::error::{Error, Result};
use crate::par::{self, ExecPolicy};

/// Threshold `u` and drop tolerance `small` of the pivot tests.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PivotParams {
    pub u: f64,
    pub small: f64,
}

impl PivotParams {
    pub fn new(u: f64, small: f64) -> Result<Self> {
        if !(u > 0.0 && u <= 0.5) {
            return Err(Error::InvalidParams(format!("threshold u = {u} must lie in (0, 0.5]")));
        }
        if !(small > 0.0 && small.is_finite()) {
            return Err(Error::InvalidParams(format!("small = {small} must be positive")));
        }
        Ok(PivotParams { u, small })
    }

    pub fn with_u(u: f64) -> Result<Self> {
        Self::new(u, Self::default().small)
    }

    pub fn u_inv(&self) -> f64 {
        1.0 / self.u
    }
}

impl Default for PivotParams {
    fn default() -> Self {
        PivotParams { u: 0.01, small: 1e-20 }
    }
}

/// Dense `n x p` supernode: `A11` over `A21`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupernodeMatrix {
    n: usize,
    p: usize,
    values: DenseMatrix,
}

impl SupernodeMatrix {
    /// Builds from column-major `n x p` values. Only the lower triangle of the
    /// leading block is read; the stored upper triangle is overwritten with its
    /// mirror so that the buffer is a faithful picture of the symmetric block.
    pub fn from_col_major(n: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        if p == 0 || n < p {
            return Err(Error::InvalidDimensions(format!("need 1 <= p <= n, got n = {n}, p = {p}")));
        }
        if data.len() != n * p {
            return Err(Error::DimensionMismatch(format!("{} values for a {n} x {p} supernode", data.len())));
        }
        let mut values = DenseMatrix::from_col_major(n, p, data);
        for j in 0..p {
            for i in j..n {
                if !values[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
            for i in 0..j {
                values[(i, j)] = values[(j, i)];
            }
        }
        Ok(SupernodeMatrix { n, p, values })
    }

    /// Builds from the two blocks. `a11` must be `p x p`; its upper triangle is ignored.
    pub fn from_blocks(a11: &DenseMatrix, a21: &DenseMatrix) -> Result<Self> {
        let p = a11.ncols();
        if a11.nrows() != p || (a21.ncols() != p && a21.nrows() > 0) {
            return Err(Error::DimensionMismatch(format!(
                "A11 is {} x {}, A21 is {} x {}",
                a11.nrows(),
                a11.ncols(),
                a21.nrows(),
                a21.ncols()
            )));
        }
        let n = p + a21.nrows();
        let values = DenseMatrix::from_fn(n, p, |i, j| if i < p { a11[(i, j)] } else { a21[(i - p, j)] });
        Self::from_col_major(n, p, values.as_slice().to_vec())
    }

    /// Takes the leading `p` columns of a full symmetric matrix.
    pub fn from_symmetric(full: &DenseMatrix, p: usize) -> Result<Self> {
        let n = full.nrows();
        if full.ncols() != n {
            return Err(Error::DimensionMismatch("full system must be square".into()));
        }
        if p == 0 || p > n {
            return Err(Error::InvalidDimensions(format!("need 1 <= p <= n, got n = {n}, p = {p}")));
        }
        Self::from_col_major(n, p, full.as_slice()[..n * p].to_vec())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Symmetric-aware entry access; the strict upper triangle of `A11` is
    /// answered from the lower triangle.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i < j {
            self.values[(j, i)]
        } else {
            self.values[(i, j)]
        }
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn a11(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.p, self.p, |i, j| self.get(i, j))
    }

    pub fn a21(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n - self.p, self.p, |i, j| self.values[(i + self.p, j)])
    }

    /// Largest absolute entry (`mu_0` of the growth trace).
    pub fn max_abs(&self) -> f64 {
        self.values.max_abs()
    }

    /// Replaces `A21` by zeros, keeping `A11`.
    pub fn with_zero_a21(&self) -> SupernodeMatrix {
        let mut v = self.values.clone();
        for j in 0..self.p {
            for i in self.p..self.n {
                v[(i, j)] = 0.0;
            }
        }
        SupernodeMatrix { n: self.n, p: self.p, values: v }
    }
}

impl MatrixRead for SupernodeMatrix {
    fn nrows(&self) -> usize {
        self.n
    }
    fn ncols(&self) -> usize {
        self.p
    }
    fn get(&self, i: usize, j: usize) -> f64 {
        SupernodeMatrix::get(self, i, j)
    }
}

/// Largest absolute value in column `col` over rows `start_row..`, skipping
/// the rows in `exclude`. Ties go to the smallest row index. An empty scan
/// range gives `(0.0, None)`.
pub fn column_max_below<M: MatrixRead + ?Sized>(
    m: &M,
    col: usize,
    start_row: usize,
    exclude: &[usize],
) -> (f64, Option<usize>) {
    let mut best = (0.0, None);
    for i in start_row..m.nrows() {
        if exclude.contains(&i) {
            continue;
        }
        let v = m.get(i, col).abs();
        if best.1.is_none() || v > best.0 {
            best = (v, Some(i));
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PivotKind {
    OneByOne,
    TwoByTwo,
    Zero,
}

/// One diagonal block of `D` together with the original columns it eliminates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PivotBlock {
    pub kind: PivotKind,
    pub columns: Vec<usize>,
    /// `[d]` for 1x1 and zero blocks, `[d11, d21, d22]` for 2x2 blocks.
    pub d_values: Vec<f64>,
}

impl PivotBlock {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Solves `D_b y = x` in place for this block. Zero pivots set their
    /// component to zero.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        match self.kind {
            PivotKind::Zero => x[0] = 0.0,
            PivotKind::OneByOne => x[0] /= self.d_values[0],
            PivotKind::TwoByTwo => {
                let inv = Inverse2x2::scaled(self.d_values[0], self.d_values[1], self.d_values[2])
                    .expect("accepted 2x2 pivots are nonsingular");
                let (a, b) = inv.apply(x[0], x[1]);
                x[0] = a;
                x[1] = b;
            }
        }
    }
}

/// Inverse of a symmetric 2x2 block `[[a, b], [b, c]]` computed after scaling
/// the block so that its largest entry is unity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inverse2x2 {
    pub detscale: f64,
    pub detpiv0: f64,
    pub detpiv1: f64,
    pub detpiv: f64,
    pub i11: f64,
    pub i12: f64,
    pub i22: f64,
}

impl Inverse2x2 {
    /// Computes the scaled determinant and inverse without any guard.
    /// Returns `None` only for an all-zero block.
    pub fn scaled(a: f64, b: f64, c: f64) -> Option<Self> {
        let big = a.abs().max(b.abs()).max(c.abs());
        if big == 0.0 {
            return None;
        }
        let detscale = 1.0 / big;
        let detpiv1 = (b * detscale) * b;
        let detpiv0 = c * detscale * a;
        let detpiv = detpiv0 - detpiv1;
        Some(Inverse2x2 {
            detscale,
            detpiv0,
            detpiv1,
            detpiv,
            i11: (c * detscale) / detpiv,
            i12: -(b * detscale) / detpiv,
            i22: (a * detscale) / detpiv,
        })
    }

    /// The guarded variant used by the pivot test: rejects blocks whose
    /// entries are all below `small`, and blocks whose scaled determinant is
    /// not safely away from zero or suffers cancellation.
    pub fn guarded(a: f64, b: f64, c: f64, small: f64) -> Option<Self> {
        if a.abs().max(b.abs()).max(c.abs()) < small {
            return None;
        }
        let inv = Self::scaled(a, b, c)?;
        let limit = small.max(inv.detpiv0.abs() / 2.0).max(inv.detpiv1.abs() / 2.0);
        (inv.detpiv.abs() > limit).then_some(inv)
    }

    /// `(x1, x2) D^{-1}`; `D` is symmetric so this is also `D^{-1} (x1, x2)^T`.
    #[inline]
    pub fn apply(&self, x1: f64, x2: f64) -> (f64, f64) {
        (x1 * self.i11 + x2 * self.i12, x1 * self.i12 + x2 * self.i22)
    }

    /// `(x1, x2) |D^{-1}|`.
    #[inline]
    pub fn apply_abs(&self, x1: f64, x2: f64) -> (f64, f64) {
        let (i11, i12, i22) = (self.i11.abs(), self.i12.abs(), self.i22.abs());
        (x1 * i11 + x2 * i12, x1 * i12 + x2 * i22)
    }
}

/// The arithmetic of one elimination step, in the physical column order that
/// held when the step was taken.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepOp {
    /// Zero pivot at position `q`: the L column is zero and nothing is updated.
    Zero { q: usize },
    /// 1x1 pivot `d` at position `q`; `w[k] = a(k, q)` for `k > q`.
    One { q: usize, d: f64, w: Vec<f64> },
    /// 2x2 pivot at positions `q, q+1`; `w1[k] = a(k, q)`, `w2[k] = a(k, q+1)` for `k > q + 1`.
    Two { q: usize, d: [f64; 3], inv: Inverse2x2, w1: Vec<f64>, w2: Vec<f64> },
}

impl StepOp {
    pub fn q(&self) -> usize {
        match *self {
            StepOp::Zero { q } | StepOp::One { q, .. } | StepOp::Two { q, .. } => q,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            StepOp::Two { .. } => 2,
            _ => 1,
        }
    }
}

/// Column swaps performed since the previous step, followed by the step itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PivotStep {
    pub swaps: Vec<(usize, usize)>,
    pub op: StepOp,
}

#[inline]
fn sub1(x: f64, l: f64, w: f64) -> f64 {
    x - l * w
}

#[inline]
fn sub2(x: f64, l1: f64, l2: f64, w1: f64, w2: f64) -> f64 {
    x - (l1 * w1 + l2 * w2)
}

/// Applies one step to a single off-diagonal row with the ordinary signed
/// update: the pivotal entries become L entries, the trailing entries are
/// reduced.
pub fn apply_op_signed(row: &mut [f64], op: &StepOp) {
    match op {
        StepOp::Zero { q } => row[*q] = 0.0,
        StepOp::One { q, d, w } => {
            let l = row[*q] / d;
            row[*q] = l;
            for k in q + 1..row.len() {
                row[k] = sub1(row[k], l, w[k]);
            }
        }
        StepOp::Two { q, inv, w1, w2, .. } => {
            let (l1, l2) = inv.apply(row[*q], row[q + 1]);
            row[*q] = l1;
            row[q + 1] = l2;
            for k in q + 2..row.len() {
                row[k] = sub2(row[k], l1, l2, w1[k], w2[k]);
            }
        }
    }
}

/// Applies one step to a nonnegative bound row with absolute values
/// throughout, so the row keeps dominating every row it represents.
pub fn apply_op_absolute(row: &mut [f64], op: &StepOp) {
    match op {
        StepOp::Zero { q } => row[*q] = 0.0,
        StepOp::One { q, d, w } => {
            let l = row[*q] / d.abs();
            row[*q] = l;
            for k in q + 1..row.len() {
                row[k] += l * w[k].abs();
            }
        }
        StepOp::Two { q, inv, w1, w2, .. } => {
            let (l1, l2) = inv.apply_abs(row[*q], row[q + 1]);
            row[*q] = l1;
            row[q + 1] = l2;
            for k in q + 2..row.len() {
                row[k] += l1 * w1[k].abs() + l2 * w2[k].abs();
            }
        }
    }
}

/// Swaps then the step, as recorded.
pub fn replay_step_signed(row: &mut [f64], step: &PivotStep) {
    for &(a, b) in &step.swaps {
        row.swap(a, b);
    }
    apply_op_signed(row, &step.op);
}

fn active_row_max(row: &[f64], from: usize) -> f64 {
    row[from.min(row.len())..].iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Replays a pivot sequence on every row of `rows` (the solve for `L21`).
///
/// Returns, for each step boundary `s = 0..=steps.len()`, the largest absolute
/// entry over the still-active columns of all rows, which feeds the growth trace.
pub fn replay_steps_on_rows(rows: &mut RowMatrix, steps: &[PivotStep], policy: ExecPolicy) -> Vec<f64> {
    let per_row = par::map_rows_mut(rows, policy, |_, row| {
        let mut maxima = Vec::with_capacity(steps.len() + 1);
        let mut active = 0;
        maxima.push(active_row_max(row, active));
        for step in steps {
            replay_step_signed(row, step);
            active = step.op.q() + step.op.width();
            maxima.push(active_row_max(row, active));
        }
        maxima
    });
    let mut out = vec![0.0; steps.len() + 1];
    for maxima in per_row {
        for (o, m) in out.iter_mut().zip(maxima) {
            *o = f64::max(*o, m);
        }
    }
    out
}

/// How the rows below `A11` in a [`WorkingMatrix`] are updated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TailUpdate {
    /// Ordinary elimination (true `A21` rows, relaxed compressed rows).
    Signed,
    /// Absolute-value worst-case bounds (strict compressed rows).
    Absolute,
}

/// Working copy of a trapezoid during elimination: the symmetric `A11`
/// (column-major, lower triangle authoritative) and the rows below it
/// (row-major).
#[derive(Clone, Debug)]
pub struct WorkingMatrix {
    p: usize,
    a11: DenseMatrix,
    tail: RowMatrix,
    mode: TailUpdate,
    pending_swaps: Vec<(usize, usize)>,
}

impl WorkingMatrix {
    pub fn new(a11: DenseMatrix, tail: RowMatrix, mode: TailUpdate) -> Result<Self> {
        let p = a11.nrows();
        if a11.ncols() != p || tail.ncols() != p {
            return Err(Error::DimensionMismatch("working matrix blocks disagree on p".into()));
        }
        Ok(WorkingMatrix { p, a11, tail, mode, pending_swaps: Vec::new() })
    }

    pub fn from_supernode(m: &SupernodeMatrix) -> Self {
        let a21 = RowMatrix::from_dense(&m.a21());
        WorkingMatrix::new(m.a11(), a21, TailUpdate::Signed).expect("supernode blocks are consistent")
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn tail(&self) -> &RowMatrix {
        &self.tail
    }

    pub fn mode(&self) -> TailUpdate {
        self.mode
    }

    /// Entry of the stacked trapezoid; rows `0..p` are `A11` (read symmetrically).
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i < self.p {
            self.sym(i, j)
        } else {
            self.tail[(i - self.p, j)]
        }
    }

    #[inline]
    pub fn sym(&self, i: usize, j: usize) -> f64 {
        if i < j {
            self.a11[(j, i)]
        } else {
            self.a11[(i, j)]
        }
    }

    /// Symmetric permutation of positions `i` and `j` of `A11`; tail columns
    /// are swapped, tail rows untouched. Touches only the lower triangle.
    pub fn permute_symmetric(&mut self, i: usize, j: usize) -> Result<()> {
        let p = self.p;
        for idx in [i, j] {
            if idx >= p {
                return Err(Error::IndexOutOfRange { index: idx, bound: p });
            }
        }
        if i == j {
            return Ok(());
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let a = &mut self.a11;
        let tmp = a[(i, i)];
        a[(i, i)] = a[(j, j)];
        a[(j, j)] = tmp;
        for k in 0..i {
            let tmp = a[(i, k)];
            a[(i, k)] = a[(j, k)];
            a[(j, k)] = tmp;
        }
        for k in i + 1..j {
            let tmp = a[(k, i)];
            a[(k, i)] = a[(j, k)];
            a[(j, k)] = tmp;
        }
        for k in j + 1..p {
            let tmp = a[(k, i)];
            a[(k, i)] = a[(k, j)];
            a[(k, j)] = tmp;
        }
        self.tail.swap_cols(i, j);
        self.pending_swaps.push((i, j));
        Ok(())
    }

    fn apply_tail(&mut self, op: &StepOp, policy: ExecPolicy) {
        let mode = self.mode;
        par::map_rows_mut(&mut self.tail, policy, |_, row| match mode {
            TailUpdate::Signed => apply_op_signed(row, op),
            TailUpdate::Absolute => apply_op_absolute(row, op),
        });
    }

    fn finish_step(&mut self, op: StepOp, policy: ExecPolicy) -> PivotStep {
        self.apply_tail(&op, policy);
        PivotStep { swaps: std::mem::take(&mut self.pending_swaps), op }
    }

    /// Records a zero pivot at position `q`: the column's entries are dropped.
    pub fn apply_zero_pivot(&mut self, q: usize, policy: ExecPolicy) -> PivotStep {
        for i in q + 1..self.p {
            self.a11[(i, q)] = 0.0;
        }
        self.finish_step(StepOp::Zero { q }, policy)
    }

    /// Eliminates position `q` with a 1x1 pivot and updates every trailing column.
    pub fn apply_1x1_pivot(&mut self, q: usize, policy: ExecPolicy) -> Result<PivotStep> {
        let p = self.p;
        if q >= p {
            return Err(Error::IndexOutOfRange { index: q, bound: p });
        }
        let d = self.a11[(q, q)];
        if d == 0.0 {
            return Err(Error::ZeroPivot(q));
        }
        let mut w = vec![0.0; p];
        for k in q + 1..p {
            w[k] = self.a11[(k, q)];
        }
        let op = StepOp::One { q, d, w };
        let StepOp::One { w, .. } = &op else { unreachable!() };
        // L column of A11, then the lower triangle of the trailing block
        for k in q + 1..p {
            self.a11[(k, q)] = w[k] / d;
        }
        for k in q + 1..p {
            let wk = w[k];
            for i in k..p {
                let l = self.a11[(i, q)];
                self.a11[(i, k)] = sub1(self.a11[(i, k)], l, wk);
            }
        }
        Ok(self.finish_step(op, policy))
    }

    /// Eliminates positions `q, q+1` with a 2x2 pivot.
    pub fn apply_2x2_pivot(&mut self, q: usize, small: f64, policy: ExecPolicy) -> Result<PivotStep> {
        let p = self.p;
        if q + 1 >= p {
            return Err(Error::IndexOutOfRange { index: q + 1, bound: p });
        }
        let d = [self.a11[(q, q)], self.a11[(q + 1, q)], self.a11[(q + 1, q + 1)]];
        let inv = Inverse2x2::guarded(d[0], d[1], d[2], small).ok_or(Error::DeterminantGuard(q, q + 1))?;
        let mut w1 = vec![0.0; p];
        let mut w2 = vec![0.0; p];
        for k in q + 2..p {
            w1[k] = self.a11[(k, q)];
            w2[k] = self.a11[(k, q + 1)];
        }
        for k in q + 2..p {
            let (l1, l2) = inv.apply(w1[k], w2[k]);
            self.a11[(k, q)] = l1;
            self.a11[(k, q + 1)] = l2;
        }
        self.a11[(q + 1, q)] = 0.0;
        for k in q + 2..p {
            let (w1k, w2k) = (w1[k], w2[k]);
            for i in k..p {
                let (l1, l2) = (self.a11[(i, q)], self.a11[(i, q + 1)]);
                self.a11[(i, k)] = sub2(self.a11[(i, k)], l1, l2, w1k, w2k);
            }
        }
        let op = StepOp::Two { q, d, inv, w1, w2 };
        Ok(self.finish_step(op, policy))
    }

    /// Largest absolute entry of the active part of `A11` (positions `from..`).
    pub fn active_a11_max(&self, from: usize) -> f64 {
        let mut m: f64 = 0.0;
        for j in from..self.p {
            for i in j..self.p {
                m = m.max(self.a11[(i, j)].abs());
            }
        }
        m
    }

    /// Largest absolute entry of the active columns of the tail rows.
    pub fn active_tail_max(&self, from: usize) -> f64 {
        self.tail.rows().fold(0.0, |m, r| m.max(active_row_max(r, from)))
    }

    #[cfg(test)]
    pub(crate) fn a11(&self) -> &DenseMatrix {
        &self.a11
    }

    pub(crate) fn into_parts(self) -> (DenseMatrix, RowMatrix) {
        (self.a11, self.tail)
    }
}

/// Growth record `mu[q] = max |a^(q)(i, j)|` over the still-active part of
/// the working matrix after `q` eliminations.
///
/// A 2x2 pivot performs two eliminations at once; the intermediate entry
/// repeats the post-pivot value. `widths` lists the pivot widths in order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GrowthTrace {
    pub mu: Vec<f64>,
    pub widths: Vec<usize>,
}

impl GrowthTrace {
    pub(crate) fn from_step_maxima(step_max: &[f64], widths: &[usize]) -> Self {
        let mut mu = vec![step_max[0]];
        for (s, &w) in widths.iter().enumerate() {
            for _ in 0..w {
                mu.push(step_max[s + 1]);
            }
        }
        GrowthTrace { mu, widths: widths.to_vec() }
    }

    /// `(mu before, mu after, width)` for every pivot.
    pub fn per_pivot(&self) -> Vec<(f64, f64, usize)> {
        let mut q = 0;
        self.widths
            .iter()
            .map(|&w| {
                let r = (self.mu[q], self.mu[q + w], w);
                q += w;
                r
            })
            .collect()
    }

    pub fn max_mu(&self) -> f64 {
        self.mu.iter().copied().fold(0.0, f64::max)
    }

    /// `max_q mu_q / mu_0`; 1 for an all-zero input.
    pub fn growth_factor(&self) -> f64 {
        let mu0 = self.mu.first().copied().unwrap_or(0.0);
        if mu0 == 0.0 {
            1.0
        } else {
            self.max_mu() / mu0
        }
    }
}

/// Result of eliminating (part of) a supernode.
///
/// Rows of `l` and `remainder` are in physical order: rows `0..p` are the
/// permuted `A11` positions (original column `perm[r]`), rows `p..n` are the
/// `A21` rows in their original order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialFactorization {
    pub n: usize,
    pub p: usize,
    /// Position to original column; eliminated columns first, in elimination order.
    pub perm: Vec<usize>,
    pub pivots: Vec<PivotBlock>,
    pub nelim: usize,
    /// `n x nelim`, unit lower triangular in its leading `nelim x nelim` block.
    pub l: DenseMatrix,
    /// Original indices of the columns left uneliminated.
    pub delayed: Vec<usize>,
    /// Updated values of the delayed columns: `n x delayed.len()`, rows
    /// `nelim..p` hold the symmetric delayed block, rows `p..n` the updated `A21`.
    pub remainder: DenseMatrix,
    /// The recorded elimination steps (physical positions).
    pub steps: Vec<PivotStep>,
}

impl PartialFactorization {
    pub(crate) fn assemble(
        n: usize,
        a11: &DenseMatrix,
        a21_rows: &RowMatrix,
        perm: Vec<usize>,
        steps: Vec<PivotStep>,
        nelim: usize,
    ) -> Self {
        let p = a11.nrows();
        let mut l = DenseMatrix::zeros(n, nelim);
        let mut pivots = Vec::with_capacity(steps.len());
        for step in &steps {
            let q = step.op.q();
            match &step.op {
                StepOp::Zero { .. } => pivots.push(PivotBlock {
                    kind: PivotKind::Zero,
                    columns: vec![perm[q]],
                    d_values: vec![0.0],
                }),
                StepOp::One { d, .. } => pivots.push(PivotBlock {
                    kind: PivotKind::OneByOne,
                    columns: vec![perm[q]],
                    d_values: vec![*d],
                }),
                StepOp::Two { d, .. } => pivots.push(PivotBlock {
                    kind: PivotKind::TwoByTwo,
                    columns: vec![perm[q], perm[q + 1]],
                    d_values: d.to_vec(),
                }),
            }
            for j in q..q + step.op.width() {
                l[(j, j)] = 1.0;
                for i in q + step.op.width()..p {
                    l[(i, j)] = a11[(i, j)];
                }
            }
        }
        for (r, row) in a21_rows.rows().enumerate() {
            for j in 0..nelim {
                l[(p + r, j)] = row[j];
            }
        }
        let nd = p - nelim;
        let mut remainder = DenseMatrix::zeros(n, nd);
        for c in 0..nd {
            for r in nelim..p {
                let (i, j) = (r, nelim + c);
                remainder[(r, c)] = if i >= j { a11[(i, j)] } else { a11[(j, i)] };
            }
            for (r, row) in a21_rows.rows().enumerate() {
                remainder[(p + r, c)] = row[nelim + c];
            }
        }
        let delayed = perm[nelim..].to_vec();
        PartialFactorization { n, p, perm, pivots, nelim, l, delayed, remainder, steps }
    }

    /// Original row index of physical row `r`.
    pub fn original_row(&self, r: usize) -> usize {
        if r < self.p {
            self.perm[r]
        } else {
            r
        }
    }

    /// Pivot sequence as original column lists, for comparisons.
    pub fn pivot_sequence(&self) -> Vec<Vec<usize>> {
        self.pivots.iter().map(|b| b.columns.clone()).collect()
    }

    pub fn zero_pivots(&self) -> usize {
        self.pivots.iter().filter(|b| b.kind == PivotKind::Zero).count()
    }

    /// Largest `|l(i, j)|` over the strictly-below-block entries.
    pub fn max_abs_l(&self) -> f64 {
        let mut m: f64 = 0.0;
        let mut j = 0;
        for b in &self.pivots {
            for c in j..j + b.width() {
                for i in j + b.width()..self.n {
                    m = m.max(self.l[(i, c)].abs());
                }
            }
            j += b.width();
        }
        m
    }

    /// `L D`, used by reconstruction and Schur-complement formation.
    pub fn l_times_d(&self) -> DenseMatrix {
        let mut ld = DenseMatrix::zeros(self.n, self.nelim);
        let mut j = 0;
        for b in &self.pivots {
            for i in 0..self.n {
                match b.kind {
                    PivotKind::Zero => {}
                    PivotKind::OneByOne => ld[(i, j)] = self.l[(i, j)] * b.d_values[0],
                    PivotKind::TwoByTwo => {
                        let (l1, l2) = (self.l[(i, j)], self.l[(i, j + 1)]);
                        let [d11, d21, d22] = [b.d_values[0], b.d_values[1], b.d_values[2]];
                        ld[(i, j)] = l1 * d11 + l2 * d21;
                        ld[(i, j + 1)] = l1 * d21 + l2 * d22;
                    }
                }
            }
            j += b.width();
        }
        ld
    }

    /// `max |P A P^T - L D L^T|` over the eliminated columns (lower part).
    pub fn reconstruction_residual(&self, original: &SupernodeMatrix) -> f64 {
        let ld = self.l_times_d();
        let mut worst: f64 = 0.0;
        for c in 0..self.nelim {
            let oc = self.perm[c];
            for r in c..self.n {
                let or = self.original_row(r);
                let mut s = 0.0;
                for k in 0..self.nelim {
                    s += ld[(r, k)] * self.l[(c, k)];
                }
                worst = worst.max((original.get(or, oc) - s).abs());
            }
        }
        worst
    }

    /// Rows of `L` below `A11`: `(n - p) x nelim`.
    pub fn l21(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n - self.p, self.nelim, |i, j| self.l[(self.p + i, j)])
    }
}

/// `S = L21 D L21^T` from the rows of `L` below the eliminated block. Only the
/// lower triangle is computed; the upper triangle is its mirror.
pub fn form_schur(l21: &DenseMatrix, pivots: &[PivotBlock]) -> Result<DenseMatrix> {
    let width: usize = pivots.iter().map(PivotBlock::width).sum();
    if width != l21.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "L21 has {} columns but D covers {width}",
            l21.ncols()
        )));
    }
    let m = l21.nrows();
    // L21 D
    let mut ld = DenseMatrix::zeros(m, width);
    let mut j = 0;
    for b in pivots {
        for i in 0..m {
            match b.kind {
                PivotKind::Zero => {}
                PivotKind::OneByOne => ld[(i, j)] = l21[(i, j)] * b.d_values[0],
                PivotKind::TwoByTwo => {
                    let (l1, l2) = (l21[(i, j)], l21[(i, j + 1)]);
                    ld[(i, j)] = l1 * b.d_values[0] + l2 * b.d_values[1];
                    ld[(i, j + 1)] = l1 * b.d_values[1] + l2 * b.d_values[2];
                }
            }
        }
        j += b.width();
    }
    let mut s = DenseMatrix::zeros(m, m);
    for c in 0..m {
        for r in c..m {
            let mut v = 0.0;
            for k in 0..width {
                v += ld[(r, k)] * l21[(c, k)];
            }
            s[(r, c)] = v;
            s[(c, r)] = v;
        }
    }
    Ok(s)
}

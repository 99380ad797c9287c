//! Compressed threshold pivoting: pivot tests run against a small matrix `C`
//! that stands in for `A21`, after which the chosen pivots are applied to
//! `A21` without further testing.

use serde::{Deserialize, Serialize};

use crate::dense::{DenseMatrix, MatrixRead, RowMatrix};
use crate::error::{Error, Result};
use crate::par::ExecPolicy;
use crate::supernode::{
    apply_op_absolute, replay_step_signed, PivotParams, PivotStep, StepOp, SupernodeMatrix, TailUpdate,
    WorkingMatrix,
};
use crate::tpp::{finish_deferred, run_kernel, Factored, KernelObserver};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompressionMode {
    Strict,
    Relaxed,
}

/// Where the rows of `C` come from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// `J_j` for every row `j`: the `A21` rows whose largest entry lies in column `j`.
    Strict(Vec<Vec<usize>>),
    /// The flagged `A21` row behind every row of `C`.
    Relaxed(Vec<usize>),
}

/// The representative matrix `C` (`r x p`) with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressedMatrix {
    pub rows: RowMatrix,
    pub provenance: Provenance,
}

impl CompressedMatrix {
    pub fn mode(&self) -> CompressionMode {
        match self.provenance {
            Provenance::Strict(_) => CompressionMode::Strict,
            Provenance::Relaxed(_) => CompressionMode::Relaxed,
        }
    }

    pub fn p(&self) -> usize {
        self.rows.ncols()
    }

    /// Entries as integers-in-f64 rows, convenient for comparisons.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows.rows().map(<[f64]>::to_vec).collect()
    }

    /// An empty strict `C` (all-zero rows, empty `J_j`): the identity of [`merge_strict`].
    pub fn empty_strict(p: usize) -> Self {
        CompressedMatrix { rows: RowMatrix::zeros(p, p), provenance: Provenance::Strict(vec![Vec::new(); p]) }
    }

    /// An empty relaxed `C`: the identity of [`merge_relaxed`].
    pub fn empty_relaxed(p: usize) -> Self {
        CompressedMatrix { rows: RowMatrix::zeros(0, p), provenance: Provenance::Relaxed(Vec::new()) }
    }

    /// The rows of `C` padded with zero rows to `p` rows.
    pub(crate) fn padded_rows(&self) -> RowMatrix {
        let p = self.p();
        let mut r = self.rows.clone();
        while r.nrows() < p {
            r.push_row(&vec![0.0; p]);
        }
        r
    }
}

/// Column of the largest `|row[k]|`, ties to the lowest `k`.
pub fn row_argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for k in 1..row.len() {
        if row[k].abs() > row[best].abs() {
            best = k;
        }
    }
    best
}

/// Strict `C` over a range of `A21` rows. Row indices in the provenance are
/// the `A21` indices.
pub fn build_strict_rows<M: MatrixRead + ?Sized>(a21: &M, rows: std::ops::Range<usize>) -> CompressedMatrix {
    let p = a21.ncols();
    let mut c = CompressedMatrix::empty_strict(p);
    let Provenance::Strict(sets) = &mut c.provenance else { unreachable!() };
    let mut buf = vec![0.0; p];
    for i in rows {
        for (k, b) in buf.iter_mut().enumerate() {
            *b = a21.get(i, k);
        }
        let j = row_argmax(&buf);
        sets[j].push(i);
        let crow = c.rows.row_mut(j);
        for k in 0..p {
            crow[k] = crow[k].max(buf[k].abs());
        }
    }
    c
}

/// Strict compressed matrix: row `j` is the columnwise maximum of `|A21|`
/// over the rows whose largest entry lies in column `j`.
pub fn build_strict(a21: &DenseMatrix) -> CompressedMatrix {
    build_strict_rows(a21, 0..a21.nrows())
}

/// Column-flagging selection over candidate rows `(id, values)`.
fn select_relaxed(candidates: &[(usize, &[f64])], p: usize) -> CompressedMatrix {
    let mut flagged = vec![false; candidates.len()];
    let mut rows = RowMatrix::zeros(0, p);
    let mut ids = Vec::new();
    for j in 0..p {
        let mut best: Option<usize> = None;
        for (r, (_, vals)) in candidates.iter().enumerate() {
            if flagged[r] {
                continue;
            }
            if best.is_none_or(|b| vals[j].abs() > candidates[b].1[j].abs()) {
                best = Some(r);
            }
        }
        let Some(b) = best else { break };
        flagged[b] = true;
        rows.push_row(candidates[b].1);
        ids.push(candidates[b].0);
    }
    CompressedMatrix { rows, provenance: Provenance::Relaxed(ids) }
}

/// Relaxed `C` over a range of `A21` rows.
pub fn build_relaxed_rows<M: MatrixRead + ?Sized>(a21: &M, rows: std::ops::Range<usize>) -> CompressedMatrix {
    let p = a21.ncols();
    let data: Vec<(usize, Vec<f64>)> = rows.map(|i| (i, (0..p).map(|k| a21.get(i, k)).collect())).collect();
    let cands: Vec<(usize, &[f64])> = data.iter().map(|(i, v)| (*i, v.as_slice())).collect();
    select_relaxed(&cands, p)
}

/// Relaxed compressed matrix: for each column in turn, the unflagged row with
/// the largest entry is flagged and copied (signed) into `C`.
pub fn build_relaxed(a21: &DenseMatrix) -> CompressedMatrix {
    build_relaxed_rows(a21, 0..a21.nrows())
}

/// Elementwise maximum of two strict compressed matrices, with `J_j` unioned.
pub fn merge_strict(c1: &CompressedMatrix, c2: &CompressedMatrix) -> Result<CompressedMatrix> {
    let (Provenance::Strict(j1), Provenance::Strict(j2)) = (&c1.provenance, &c2.provenance) else {
        return Err(Error::ModeMismatch);
    };
    if c1.p() != c2.p() {
        return Err(Error::DimensionMismatch(format!("merging p = {} with p = {}", c1.p(), c2.p())));
    }
    let p = c1.p();
    let mut rows = RowMatrix::zeros(p, p);
    for j in 0..p {
        let (a, b) = (c1.rows.row(j), c2.rows.row(j));
        for (k, out) in rows.row_mut(j).iter_mut().enumerate() {
            *out = a[k].max(b[k]);
        }
    }
    let sets = j1
        .iter()
        .zip(j2)
        .map(|(a, b)| {
            let mut s: Vec<usize> = a.iter().chain(b).copied().collect();
            s.sort_unstable();
            s
        })
        .collect();
    Ok(CompressedMatrix { rows, provenance: Provenance::Strict(sets) })
}

/// Tournament merge: the candidate rows of `r1` then `r2` go through the
/// column-flagging selection again.
pub fn merge_relaxed(r1: &CompressedMatrix, r2: &CompressedMatrix) -> Result<CompressedMatrix> {
    let (Provenance::Relaxed(i1), Provenance::Relaxed(i2)) = (&r1.provenance, &r2.provenance) else {
        return Err(Error::ModeMismatch);
    };
    if r1.p() != r2.p() {
        return Err(Error::DimensionMismatch(format!("merging p = {} with p = {}", r1.p(), r2.p())));
    }
    let cands: Vec<(usize, &[f64])> = i1
        .iter()
        .zip(r1.rows.rows())
        .chain(i2.iter().zip(r2.rows.rows()))
        .map(|(&i, r)| (i, r))
        .collect();
    Ok(select_relaxed(&cands, r1.p()))
}

/// Absolute-value update of a strict `C` for one accepted pivot. `op` must
/// carry the pivot block and pivot-time columns of `A11`.
pub fn update_strict_c(c: &mut CompressedMatrix, op: &StepOp) -> Result<()> {
    if c.mode() != CompressionMode::Strict {
        return Err(Error::ModeMismatch);
    }
    if let StepOp::One { d, .. } = op {
        if *d == 0.0 {
            return Err(Error::ZeroPivot(op.q()));
        }
    }
    for j in 0..c.rows.nrows() {
        apply_op_absolute(c.rows.row_mut(j), op);
    }
    Ok(())
}

pub(crate) fn stacked_working(m: &SupernodeMatrix, c: &CompressedMatrix) -> WorkingMatrix {
    let mode = match c.mode() {
        CompressionMode::Strict => TailUpdate::Absolute,
        CompressionMode::Relaxed => TailUpdate::Signed,
    };
    WorkingMatrix::new(m.a11(), c.padded_rows(), mode).expect("C has p columns")
}

pub(crate) fn factor_with_c<O: KernelObserver>(
    m: &SupernodeMatrix,
    c: &CompressedMatrix,
    params: &PivotParams,
    policy: ExecPolicy,
    obs: &mut O,
) -> Result<Factored> {
    if c.p() != m.p() {
        return Err(Error::DimensionMismatch(format!("C has {} columns, supernode has {}", c.p(), m.p())));
    }
    let run = run_kernel(stacked_working(m, c), *params, policy, obs)?;
    Ok(finish_deferred(m, run, policy))
}

/// Builds `C`, factors `(A11; C)` with threshold pivoting restricted to the
/// `A11` rows, then applies the pivot sequence to `A21`.
pub fn factor_compressed(m: &SupernodeMatrix, mode: CompressionMode, params: &PivotParams) -> Result<Factored> {
    factor_compressed_with(m, mode, params, ExecPolicy::default())
}

pub fn factor_compressed_with(
    m: &SupernodeMatrix,
    mode: CompressionMode,
    params: &PivotParams,
    policy: ExecPolicy,
) -> Result<Factored> {
    let a21 = m.a21();
    let c = match mode {
        CompressionMode::Strict => build_strict(&a21),
        CompressionMode::Relaxed => build_relaxed(&a21),
    };
    factor_with_c(m, &c, params, policy, &mut ())
}

/// One failure of the dominance relation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominanceViolation {
    /// Number of eliminations performed before the check.
    pub step: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
    pub bound: f64,
}

const DOMINANCE_SLACK: f64 = 1e-12;

/// Replays `steps` on `A21` and on `C` side by side and lists every entry
/// whose magnitude is not covered by `C`.
///
/// Strict `C`: every row `i` in `J_j` must satisfy `|a(i,k)| <= c(j,k)` for
/// all `k`. Relaxed `C`: every column maximum of `|A21|` must be covered by
/// the column maximum of `|C|`, the property the pivot tests rely on.
pub fn dominance_violations(
    a21: &DenseMatrix,
    c: &CompressedMatrix,
    steps: &[PivotStep],
) -> Result<Vec<DominanceViolation>> {
    let p = c.p();
    if a21.ncols() != p && a21.nrows() > 0 {
        return Err(Error::DimensionMismatch("A21 and C disagree on p".into()));
    }
    let mut a = RowMatrix::from_dense(a21);
    let mut cr = c.rows.clone();
    let mut out = Vec::new();
    let mut done = 0;
    let check = |a: &RowMatrix, cr: &RowMatrix, step: usize, out: &mut Vec<DominanceViolation>| match &c.provenance {
        Provenance::Strict(sets) => {
            for (j, set) in sets.iter().enumerate() {
                let crow = cr.row(j);
                for &i in set {
                    for (k, v) in a.row(i).iter().enumerate() {
                        let bound = crow[k] * (1.0 + DOMINANCE_SLACK);
                        if v.abs() > bound {
                            out.push(DominanceViolation { step, row: i, col: k, value: v.abs(), bound });
                        }
                    }
                }
            }
        }
        Provenance::Relaxed(_) => {
            for k in 0..p {
                let cmax = cr.rows().fold(0.0, |m: f64, r| m.max(r[k].abs()));
                let bound = cmax * (1.0 + DOMINANCE_SLACK);
                for (i, r) in a.rows().enumerate() {
                    if r[k].abs() > bound {
                        out.push(DominanceViolation { step, row: i, col: k, value: r[k].abs(), bound });
                    }
                }
            }
        }
    };
    check(&a, &cr, 0, &mut out);
    for step in steps {
        for i in 0..a.nrows() {
            replay_step_signed(a.row_mut(i), step);
        }
        for j in 0..cr.nrows() {
            let row = cr.row_mut(j);
            for &(x, y) in &step.swaps {
                row.swap(x, y);
            }
            match c.mode() {
                CompressionMode::Strict => apply_op_absolute(row, &step.op),
                CompressionMode::Relaxed => crate::supernode::apply_op_signed(row, &step.op),
            }
        }
        done += step.op.width();
        check(&a, &cr, done, &mut out);
    }
    Ok(out)
}

/// True iff `C` dominates `A21` before and after every step.
pub fn check_dominance(a21: &DenseMatrix, c: &CompressedMatrix, steps: &[PivotStep]) -> Result<bool> {
    Ok(dominance_violations(a21, c, steps)?.is_empty())
}

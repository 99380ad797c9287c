//! Deterministic logical-processor execution of the parallel pivoting
//! schemes, with operation, critical-path message and bandwidth counters.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::comm_model::{log2_exact, Scheme};
use crate::compressed::{build_relaxed_rows, build_strict_rows, factor_with_c, CompressedMatrix};
use crate::error::Result;
use crate::par::{self, ExecPolicy};
use crate::restricted::factor_restricted_observed;
use crate::supernode::{PivotParams, PivotStep, StepOp, SupernodeMatrix};
use crate::tpp::{factor_tpp_observed, Factored, KernelEvent, KernelObserver, OpCount};

pub use crate::compressed::{merge_relaxed, merge_strict};

/// `procs` contiguous row blocks whose sizes differ by at most one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    procs: usize,
    blocks: Vec<Range<usize>>,
}

impl Partition {
    pub fn new(rows: usize, procs: usize) -> Result<Self> {
        log2_exact(procs)?;
        let (base, extra) = (rows / procs, rows % procs);
        let mut start = 0;
        let blocks = (0..procs)
            .map(|b| {
                let len = base + usize::from(b < extra);
                let r = start..start + len;
                start += len;
                r
            })
            .collect();
        Ok(Partition { procs, blocks })
    }

    pub fn procs(&self) -> usize {
        self.procs
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }
}

/// Abstract cost counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommCounters {
    pub ops: i64,
    pub msgs: i64,
    pub bw: i64,
}

impl CommCounters {
    /// `[ops, msgs, bw]` widened for comparison with the closed forms.
    pub fn as_i128(&self) -> [i128; 3] {
        [self.ops as i128, self.msgs as i128, self.bw as i128]
    }
}

/// Output of [`simulate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub scheme: Scheme,
    pub procs: usize,
    pub factored: Factored,
    pub counters: CommCounters,
}

struct Counting {
    scheme: Scheme,
    procs: i64,
    log2: i64,
    ops: OpCount,
    msgs: i64,
    bw: i64,
}

impl KernelObserver for Counting {
    fn event(&mut self, e: KernelEvent) {
        self.ops.event(e);
        let distributed = matches!(self.scheme, Scheme::TppA | Scheme::TppB);
        match e {
            KernelEvent::Reduce { values } if distributed => {
                self.msgs += self.log2;
                self.bw += 2 * (self.procs - 1) * values as i64;
                if self.scheme == Scheme::TppA {
                    // candidate diagonal block
                    self.msgs += 1;
                    self.bw += if values == 2 { 3 } else { 1 };
                }
            }
            KernelEvent::Accepted { width, remaining, zero: false } if self.scheme == Scheme::TppA => {
                // pivot rows of the remaining columns to every processor
                self.msgs += 1;
                self.bw += self.procs * (width * remaining) as i64;
            }
            _ => {}
        }
    }
}

/// Operations to apply a pivot sequence to one row below `A11`.
fn row_apply_ops(steps: &[PivotStep], p: usize) -> i64 {
    steps
        .iter()
        .map(|s| {
            let c = (p - s.op.q() - s.op.width()) as i64;
            match s.op {
                StepOp::Zero { .. } => 0,
                StepOp::One { .. } => 1 + c,
                StepOp::Two { .. } => 4 + 2 * c,
            }
        })
        .sum()
}

/// Pairwise reduction of leaf results in index order. Returns the root and
/// the number of merges.
fn tree_reduce<F>(mut level: Vec<CompressedMatrix>, merge: F) -> Result<(CompressedMatrix, usize)>
where
    F: Fn(&CompressedMatrix, &CompressedMatrix) -> Result<CompressedMatrix>,
{
    let mut merges = 0;
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len() / 2);
        for pair in level.chunks(2) {
            next.push(merge(&pair[0], &pair[1])?);
            merges += 1;
        }
        level = next;
    }
    Ok((level.pop().expect("at least one leaf"), merges))
}

/// Strict `C` built on `procs` leaves and combined by a binary tree.
pub fn strict_tree(m: &SupernodeMatrix, procs: usize, policy: ExecPolicy) -> Result<CompressedMatrix> {
    let part = Partition::new(m.n() - m.p(), procs)?;
    let a21 = m.a21();
    let leaves = par::map(part.blocks(), policy, |r| build_strict_rows(&a21, r.clone()));
    Ok(tree_reduce(leaves, merge_strict)?.0)
}

/// Relaxed `C` built on `procs` leaves and combined by tournament merges.
pub fn relaxed_tree(m: &SupernodeMatrix, procs: usize, policy: ExecPolicy) -> Result<CompressedMatrix> {
    let part = Partition::new(m.n() - m.p(), procs)?;
    let a21 = m.a21();
    let leaves = par::map(part.blocks(), policy, |r| build_relaxed_rows(&a21, r.clone()));
    Ok(tree_reduce(leaves, merge_relaxed)?.0)
}

pub fn simulate(scheme: Scheme, m: &SupernodeMatrix, procs: usize, params: &PivotParams) -> Result<Simulation> {
    simulate_with(scheme, m, procs, params, ExecPolicy::default())
}

/// Runs `scheme` on `procs` logical processors. The factorization matches the
/// serial strategy exactly except for the relaxed scheme, whose `C` depends
/// on the tree.
pub fn simulate_with(
    scheme: Scheme,
    m: &SupernodeMatrix,
    procs: usize,
    params: &PivotParams,
    policy: ExecPolicy,
) -> Result<Simulation> {
    let log2 = log2_exact(procs)? as i64;
    let (n, p) = (m.n(), m.p());
    let pi = p as i64;
    let pm1 = procs as i64 - 1;
    let l11_words = pm1 * pi * (pi + 1) / 2;
    let mut obs = Counting { scheme, procs: procs as i64, log2, ops: OpCount::default(), msgs: 0, bw: 0 };
    let mut extra = CommCounters::default();
    let a21_part = Partition::new(n - p, procs)?;
    let factored = match scheme {
        Scheme::TppA => factor_tpp_observed(m, params, policy, &mut obs)?,
        Scheme::TppB => {
            // A11 replicated on every processor
            extra.msgs += 1;
            extra.bw += l11_words;
            let f = factor_tpp_observed(m, params, policy, &mut obs)?;
            extra.ops += pm1 * obs.ops.a11;
            f
        }
        Scheme::Strict | Scheme::Relaxed => {
            let a21 = m.a21();
            let strict = scheme == Scheme::Strict;
            let leaves = par::map(a21_part.blocks(), policy, |r| {
                if strict {
                    build_strict_rows(&a21, r.clone())
                } else {
                    build_relaxed_rows(&a21, r.clone())
                }
            });
            for r in a21_part.blocks() {
                let rows = r.len() as i64;
                extra.ops += if strict { rows * (3 * pi - 1) } else { 2 * rows * pi };
            }
            let (c, merges) = if strict { tree_reduce(leaves, merge_strict)? } else { tree_reduce(leaves, merge_relaxed)? };
            let merges = merges as i64;
            extra.ops += merges * if strict { pi * pi } else { pi };
            extra.bw += merges * 2 * pi * pi;
            extra.msgs += log2;
            if strict {
                // |A11| kept alongside A11 for the absolute-value updates
                extra.ops += pi * (pi + 1) / 2;
            }
            let f = factor_with_c(m, &c, params, policy, &mut obs)?;
            extra.msgs += 1;
            extra.bw += l11_words;
            f
        }
        Scheme::Restricted => {
            let f = factor_restricted_observed(m, params, policy, &mut obs)?;
            extra.msgs += 1;
            extra.bw += l11_words;
            f
        }
    };
    if matches!(scheme, Scheme::Strict | Scheme::Relaxed | Scheme::Restricted) {
        let per_row = row_apply_ops(&factored.factors.steps, p);
        for r in a21_part.blocks() {
            extra.ops += r.len() as i64 * per_row;
        }
    }
    let counters = CommCounters { ops: obs.ops.total + extra.ops, msgs: obs.msgs + extra.msgs, bw: obs.bw + extra.bw };
    Ok(Simulation { scheme, procs, factored, counters })
}

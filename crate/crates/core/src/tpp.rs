//! Serial threshold partial pivoting with 1x1 and 2x2 pivots and delayed
//! columns.

use serde::{Deserialize, Serialize};

use crate::dense::RowMatrix;
use crate::error::Result;
use crate::par::ExecPolicy;
use crate::supernode::{
    replay_steps_on_rows, GrowthTrace, Inverse2x2, PartialFactorization, PivotParams, PivotStep, SupernodeMatrix, TailUpdate,
    WorkingMatrix,
};

/// Bookkeeping of the pivot loop at the moment a candidate is tested.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TppState {
    pub nelim: usize,
    pub m: usize,
    pub t: Option<usize>,
    pub maxm: f64,
    pub maxt: f64,
    pub detpiv: f64,
    pub detpiv0: f64,
    pub detpiv1: f64,
    pub detscale: f64,
}

impl TppState {
    /// `nelim <= m < p` (positions are 0-based) and nonnegative maxima.
    pub fn is_consistent(&self, p: usize) -> bool {
        self.nelim <= self.m
            && self.m < p
            && self.t.is_none_or(|t| t >= self.nelim && t < p && t != self.m)
            && self.maxm >= 0.0
            && self.maxt >= 0.0
    }

    fn record_inverse(&mut self, inv: &Inverse2x2) {
        self.detscale = inv.detscale;
        self.detpiv0 = inv.detpiv0;
        self.detpiv1 = inv.detpiv1;
        self.detpiv = inv.detpiv;
    }
}

/// Accepts a 1x1 pivot iff `|pivot_value| >= u * maxm`.
pub fn test_1x1(pivot_value: f64, maxm: f64, u: f64) -> bool {
    pivot_value.abs() >= u * maxm
}

/// Tests the 2x2 block `[[a_tt, a_tm], [a_tm, a_mm]]`. `maxt` and `maxm` are
/// the largest off-block magnitudes of columns `t` and `m`.
pub fn test_2x2(a_tt: f64, a_tm: f64, a_mm: f64, maxm: f64, maxt: f64, params: &PivotParams) -> bool {
    test_2x2_inverse(a_tt, a_tm, a_mm, maxm, maxt, params).1
}

fn test_2x2_inverse(
    a_tt: f64,
    a_tm: f64,
    a_mm: f64,
    maxm: f64,
    maxt: f64,
    params: &PivotParams,
) -> (Option<Inverse2x2>, bool) {
    let Some(inv) = Inverse2x2::guarded(a_tt, a_tm, a_mm, params.small) else {
        return (None, false);
    };
    if maxm.max(maxt) < params.small {
        return (Some(inv), true);
    }
    let (gt, gm) = inv.apply_abs(maxt, maxm);
    let bound = params.u_inv();
    (Some(inv), gt <= bound && gm <= bound)
}

/// Work performed by the pivot loop, reported as it happens.
///
/// Entry counts distinguish the share that lies in `A11` so that simulators
/// can charge replicated work separately.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelEvent {
    /// One column maximum over `entries` values, `a11` of them in `A11`.
    Maxima { entries: usize, a11: usize },
    /// The column maxima just computed (`values` of them) are combined across
    /// row blocks.
    Reduce { values: usize },
    /// A pivot test of the given width.
    Test { width: usize, accepted: bool },
    /// Computing the L entries of `rows` rows below an accepted pivot.
    Apply { width: usize, rows: usize, a11: usize },
    /// Updating `entries` trailing entries after an accepted pivot.
    Update { width: usize, entries: usize, a11: usize },
    /// A pivot was eliminated, leaving `remaining` uneliminated columns.
    Accepted { width: usize, remaining: usize, zero: bool },
    /// A zero pivot was recorded: the diagonal joins the column maximum and
    /// the result is compared with `small`.
    ZeroPivot,
}

pub trait KernelObserver {
    fn event(&mut self, _e: KernelEvent) {}
}

impl KernelObserver for () {}

/// Abstract operation totals of one kernel run: `total` over all rows and the
/// part of it that touches `A11` only.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCount {
    pub total: i64,
    pub a11: i64,
}

impl OpCount {
    pub fn of(e: KernelEvent) -> OpCount {
        let (t, a) = match e {
            KernelEvent::Maxima { entries, a11 } => (entries as i64 - 1, a11 as i64 - 1),
            KernelEvent::Test { width: 2, .. } => (18, 18),
            KernelEvent::Test { .. } => (3, 3),
            KernelEvent::Apply { width, rows, a11 } => {
                let c = if width == 2 { 4 } else { 1 };
                (c * rows as i64, c * a11 as i64)
            }
            KernelEvent::Update { width, entries, a11 } => {
                let c = width as i64;
                (c * entries as i64, c * a11 as i64)
            }
            KernelEvent::ZeroPivot => (2, 2),
            KernelEvent::Reduce { .. } | KernelEvent::Accepted { .. } => (0, 0),
        };
        OpCount { total: t, a11: a }
    }
}

impl KernelObserver for OpCount {
    fn event(&mut self, e: KernelEvent) {
        let c = OpCount::of(e);
        self.total += c.total;
        self.a11 += c.a11;
    }
}

/// Pivot-loop statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelStats {
    pub sweeps: usize,
    pub tests_2x2: usize,
    pub tests_1x1: usize,
    pub accepted_2x2: usize,
    pub accepted_1x1: usize,
    pub zero_pivots: usize,
    /// Candidates for which no test passed.
    pub rejections: usize,
}

/// A factorization together with its growth record and loop statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Factored {
    pub factors: PartialFactorization,
    pub growth: GrowthTrace,
    pub stats: KernelStats,
}

/// Raw output of the pivot loop on a working trapezoid.
#[derive(Clone, Debug)]
pub(crate) struct KernelRun {
    pub w: WorkingMatrix,
    pub perm: Vec<usize>,
    pub steps: Vec<PivotStep>,
    pub nelim: usize,
    /// Active `A11` maximum after each step (`steps.len() + 1` values).
    pub a11_max: Vec<f64>,
    /// Active tail maximum after each step, when tracked.
    pub tail_max: Vec<f64>,
    pub stats: KernelStats,
}

impl KernelRun {
    pub fn widths(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.op.width()).collect()
    }
}

struct Loop<'a, O: KernelObserver> {
    w: WorkingMatrix,
    perm: Vec<usize>,
    nelim: usize,
    params: PivotParams,
    policy: ExecPolicy,
    obs: &'a mut O,
    steps: Vec<PivotStep>,
    a11_max: Vec<f64>,
    tail_max: Vec<f64>,
    track_tail: bool,
    stats: KernelStats,
    state: TppState,
}

impl<O: KernelObserver> Loop<'_, O> {
    fn p(&self) -> usize {
        self.w.p()
    }

    /// Column maximum over the active rows except `exclude`.
    fn col_max(&mut self, col: usize, exclude: &[usize]) -> f64 {
        let p = self.p();
        let mut best: f64 = 0.0;
        let mut a11 = 0;
        for i in self.nelim..p {
            if !exclude.contains(&i) {
                best = best.max(self.w.sym(i, col).abs());
                a11 += 1;
            }
        }
        let tail = self.w.tail();
        for r in 0..tail.nrows() {
            best = best.max(tail[(r, col)].abs());
        }
        self.obs.event(KernelEvent::Maxima { entries: a11 + tail.nrows(), a11 });
        best
    }

    /// Partner for candidate `m`: the other active column most strongly
    /// coupled to it, provided the coupling is at least `small`.
    fn partner(&self, m: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for k in self.nelim..self.p() {
            if k == m {
                continue;
            }
            let v = self.w.sym(m, k).abs();
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((k, v));
            }
        }
        best.filter(|&(_, v)| v >= self.params.small).map(|(k, _)| k)
    }

    fn move_to(&mut self, from: usize, to: usize) -> Result<()> {
        self.w.permute_symmetric(from, to)?;
        self.perm.swap(from, to);
        Ok(())
    }

    fn record(&mut self, step: PivotStep) {
        let width = step.op.width();
        let q = self.nelim;
        let p = self.p();
        let tail_rows = self.w.tail().nrows();
        let zero = matches!(step.op, crate::supernode::StepOp::Zero { .. });
        if !zero {
            let below = p - q - width;
            self.obs.event(KernelEvent::Apply { width, rows: below + tail_rows, a11: below });
            // lower triangle of the trailing A11 block plus the tail rows, per column
            let a11_entries = below * (below + 1) / 2;
            self.obs.event(KernelEvent::Update {
                width,
                entries: a11_entries + below * tail_rows,
                a11: a11_entries,
            });
        } else {
            self.obs.event(KernelEvent::ZeroPivot);
        }
        self.nelim += width;
        self.obs.event(KernelEvent::Accepted { width, remaining: p - self.nelim, zero });
        self.steps.push(step);
        self.a11_max.push(self.w.active_a11_max(self.nelim));
        if self.track_tail {
            self.tail_max.push(self.w.active_tail_max(self.nelim));
        }
    }

    /// Tests the candidate at position `m`; returns whether a pivot was taken.
    fn try_candidate(&mut self, m: usize) -> Result<bool> {
        let params = self.params;
        self.state = TppState { nelim: self.nelim, m, ..TppState::default() };
        if let Some(t) = self.partner(m) {
            let maxt = self.col_max(t, &[t, m]);
            let maxm = self.col_max(m, &[t, m]);
            self.obs.event(KernelEvent::Reduce { values: 2 });
            let (a_tt, a_tm, a_mm) = (self.w.sym(t, t), self.w.sym(t, m), self.w.sym(m, m));
            self.stats.tests_2x2 += 1;
            let (inv, ok) = test_2x2_inverse(a_tt, a_tm, a_mm, maxm, maxt, &params);
            self.state = TppState { t: Some(t), maxm, maxt, ..self.state };
            if let Some(inv) = &inv {
                self.state.record_inverse(inv);
            }
            debug_assert!(self.state.is_consistent(self.p()));
            self.obs.event(KernelEvent::Test { width: 2, accepted: ok });
            if ok {
                let (lo, hi) = if t < m { (t, m) } else { (m, t) };
                let q = self.nelim;
                self.move_to(lo, q)?;
                self.move_to(hi, q + 1)?;
                let step = self.w.apply_2x2_pivot(q, params.small, self.policy)?;
                self.stats.accepted_2x2 += 1;
                self.record(step);
                return Ok(true);
            }
            let maxm1 = maxm.max(a_tm.abs());
            self.stats.tests_1x1 += 1;
            let ok = test_1x1(a_mm, maxm1, params.u);
            self.obs.event(KernelEvent::Test { width: 1, accepted: ok });
            if ok {
                return self.take_1x1(m).map(|_| true);
            }
            self.stats.rejections += 1;
            return Ok(false);
        }
        let maxm = self.col_max(m, &[m]);
        self.obs.event(KernelEvent::Reduce { values: 1 });
        self.state.maxm = maxm;
        debug_assert!(self.state.is_consistent(self.p()));
        let a_mm = self.w.sym(m, m);
        if maxm.max(a_mm.abs()) < params.small {
            let q = self.nelim;
            self.move_to(m, q)?;
            let step = self.w.apply_zero_pivot(q, self.policy);
            self.stats.zero_pivots += 1;
            self.record(step);
            return Ok(true);
        }
        self.stats.tests_1x1 += 1;
        let ok = test_1x1(a_mm, maxm, params.u);
        self.obs.event(KernelEvent::Test { width: 1, accepted: ok });
        if ok {
            return self.take_1x1(m).map(|_| true);
        }
        self.stats.rejections += 1;
        Ok(false)
    }

    fn take_1x1(&mut self, m: usize) -> Result<()> {
        let q = self.nelim;
        self.move_to(m, q)?;
        let step = self.w.apply_1x1_pivot(q, self.policy)?;
        self.stats.accepted_1x1 += 1;
        self.record(step);
        Ok(())
    }

    fn run(mut self) -> Result<KernelRun> {
        self.a11_max.push(self.w.active_a11_max(0));
        if self.track_tail {
            self.tail_max.push(self.w.active_tail_max(0));
        }
        while self.nelim < self.p() {
            self.stats.sweeps += 1;
            let candidates: Vec<usize> = self.perm[self.nelim..].to_vec();
            let mut progress = false;
            for col in candidates {
                let Some(m) = self.perm.iter().position(|&c| c == col) else { continue };
                if m < self.nelim {
                    continue;
                }
                progress |= self.try_candidate(m)?;
            }
            if !progress {
                break;
            }
        }
        Ok(KernelRun {
            w: self.w,
            perm: self.perm,
            steps: self.steps,
            nelim: self.nelim,
            a11_max: self.a11_max,
            tail_max: self.tail_max,
            stats: self.stats,
        })
    }
}

/// Runs the pivot loop on a working trapezoid. Pivots come from the leading
/// `p x p` block; the tail rows take part in every column maximum.
pub(crate) fn run_kernel<O: KernelObserver>(
    w: WorkingMatrix,
    params: PivotParams,
    policy: ExecPolicy,
    obs: &mut O,
) -> Result<KernelRun> {
    let p = w.p();
    let track_tail = w.mode() == TailUpdate::Signed;
    Loop {
        w,
        perm: (0..p).collect(),
        nelim: 0,
        params,
        policy,
        obs,
        steps: Vec::new(),
        a11_max: Vec::new(),
        tail_max: Vec::new(),
        track_tail,
        stats: KernelStats::default(),
        state: TppState::default(),
    }
    .run()
}

pub(crate) fn factor_tpp_observed<O: KernelObserver>(
    m: &SupernodeMatrix,
    params: &PivotParams,
    policy: ExecPolicy,
    obs: &mut O,
) -> Result<Factored> {
    let run = run_kernel(WorkingMatrix::from_supernode(m), *params, policy, obs)?;
    let step_max: Vec<f64> = run.a11_max.iter().zip(&run.tail_max).map(|(a, b)| a.max(*b)).collect();
    let growth = GrowthTrace::from_step_maxima(&step_max, &run.widths());
    let stats = run.stats;
    let (a11, tail) = run.w.into_parts();
    let factors = PartialFactorization::assemble(m.n(), &a11, &tail, run.perm, run.steps, run.nelim);
    Ok(Factored { factors, growth, stats })
}

/// Completes a run whose tail did not hold the true `A21`: the recorded pivot
/// sequence is replayed on every `A21` row with no further tests.
pub(crate) fn finish_deferred(m: &SupernodeMatrix, run: KernelRun, policy: ExecPolicy) -> Factored {
    let mut a21 = RowMatrix::from_dense(&m.a21());
    let tail_max = replay_steps_on_rows(&mut a21, &run.steps, policy);
    let step_max: Vec<f64> = run.a11_max.iter().zip(&tail_max).map(|(a, b)| a.max(*b)).collect();
    let growth = GrowthTrace::from_step_maxima(&step_max, &run.widths());
    let stats = run.stats;
    let (a11, _) = run.w.into_parts();
    let factors = PartialFactorization::assemble(m.n(), &a11, &a21, run.perm, run.steps, run.nelim);
    Factored { factors, growth, stats }
}

/// Threshold partial pivoting on the whole supernode.
pub fn factor_tpp(m: &SupernodeMatrix, params: &PivotParams) -> Result<Factored> {
    factor_tpp_with(m, params, ExecPolicy::default())
}

pub fn factor_tpp_with(m: &SupernodeMatrix, params: &PivotParams, policy: ExecPolicy) -> Result<Factored> {
    factor_tpp_observed(m, params, policy, &mut ())
}

/// Factors a square symmetric block with every column pivotable; used for
/// `A11`-only pivoting and for root blocks.
pub(crate) fn factor_square(
    a11: crate::dense::DenseMatrix,
    params: PivotParams,
    policy: ExecPolicy,
    obs: &mut impl KernelObserver,
) -> Result<KernelRun> {
    let p = a11.nrows();
    run_kernel(WorkingMatrix::new(a11, RowMatrix::zeros(0, p), TailUpdate::Signed)?, params, policy, obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseMatrix;
    use crate::supernode::PivotKind;

    fn section5(u: f64, eps: f64) -> SupernodeMatrix {
        let ui = 1.0 / u;
        SupernodeMatrix::from_blocks(
            &DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 2.0]]),
            &DenseMatrix::from_rows(&[vec![ui, 0.0], vec![0.0, ui], vec![ui - eps, ui - eps]]),
        )
        .unwrap()
    }

    #[test]
    fn one_by_one_test_examples() {
        assert_eq!(0.01 * 100.0, 1.0);
        assert!(test_1x1(1.0, 100.0, 0.01));
        assert!(!test_1x1(1.0, 200.0, 0.01));
        assert!(test_1x1(0.5, 0.0, 0.01));
    }

    #[test]
    fn two_by_two_test_examples() {
        let p = PivotParams::new(0.1, 1e-20).unwrap();
        assert!(test_2x2(0.0, 10.0, 0.0, 1.0, 1.0, &p));
        assert!(!test_2x2(1.0, 1.0, 1.0, 0.0, 0.0, &p));
        assert!(!test_2x2(1e-30, 1e-30, 1e-30, 0.0, 0.0, &p));
    }

    // Oracle: the explicit inverse of the block applied to the column maxima.
    #[test]
    fn two_by_two_test_matches_explicit_inverse() {
        let p = PivotParams::default();
        let cases: [(f64, f64, f64, f64, f64); 3] = [(3.0, 0.5, -2.0, 4.0, 1.0), (0.1, 2.0, 0.3, 150.0, 190.0), (5.0, 4.0, -3.0, 30.0, 0.0)];
        for (a, b, c, maxm, maxt) in cases {
            let det = a * c - b * b;
            let g1 = (c / det).abs() * maxt + (b / det).abs() * maxm;
            let g2 = (b / det).abs() * maxt + (a / det).abs() * maxm;
            let expect = g1 <= 100.0 && g2 <= 100.0;
            assert_eq!(test_2x2(a, b, c, maxm, maxt, &p), expect, "{a} {b} {c}");
        }
    }

    #[test]
    fn section5_tpp_delays_column_two() {
        let f = factor_tpp(&section5(0.01, 1e-6), &PivotParams::default()).unwrap();
        assert_eq!(f.factors.nelim, 1);
        assert_eq!(f.factors.pivot_sequence(), vec![vec![0]]);
        assert_eq!(f.factors.delayed, vec![1]);
        assert_eq!(f.factors.pivots[0].kind, PivotKind::OneByOne);
        // the delayed column carries the update, its largest entry is 2(u^-1 - eps)
        let col = f.factors.remainder.col(0);
        assert!((col[4] - 199.999998).abs() < 1e-9);
    }

    #[test]
    fn identity_gives_all_one_by_one() {
        let m = SupernodeMatrix::from_blocks(&DenseMatrix::identity(5), &DenseMatrix::zeros(3, 5)).unwrap();
        let f = factor_tpp(&m, &PivotParams::default()).unwrap();
        assert_eq!(f.factors.nelim, 5);
        assert!(f.factors.pivots.iter().all(|b| b.kind == PivotKind::OneByOne));
        assert!(f.factors.l21().as_slice().iter().all(|&x| x == 0.0));
        assert_eq!(f.factors.perm, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn zero_column_becomes_zero_pivot() {
        let mut a11 = DenseMatrix::identity(3);
        a11[(1, 1)] = 0.0;
        let m = SupernodeMatrix::from_blocks(&a11, &DenseMatrix::zeros(2, 3)).unwrap();
        let f = factor_tpp(&m, &PivotParams::default()).unwrap();
        assert_eq!(f.factors.nelim, 3);
        assert_eq!(f.factors.zero_pivots(), 1);
        assert_eq!(f.stats.zero_pivots, 1);
    }

    #[test]
    fn two_by_two_accepted_for_antidiagonal() {
        let a11 = DenseMatrix::from_rows(&[vec![0.0, 10.0], vec![10.0, 0.0]]);
        let a21 = DenseMatrix::from_rows(&[vec![1.0, 2.0]]);
        let m = SupernodeMatrix::from_blocks(&a11, &a21).unwrap();
        let f = factor_tpp(&m, &PivotParams::default()).unwrap();
        assert_eq!(f.factors.pivot_sequence(), vec![vec![0, 1]]);
        assert_eq!(f.factors.l21().as_slice(), &[0.2, 0.1]);
        assert!(f.factors.reconstruction_residual(&m) < 1e-14);
    }

    #[test]
    fn op_counts_single_two_by_two() {
        // n = 4, p = 2: one pivot, 2 maxima of 2 entries, 18 test, 4 * 2 apply, no update
        let a11 = DenseMatrix::from_rows(&[vec![0.0, 10.0], vec![10.0, 0.0]]);
        let a21 = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0]]);
        let m = SupernodeMatrix::from_blocks(&a11, &a21).unwrap();
        let mut c = OpCount::default();
        factor_tpp_observed(&m, &PivotParams::default(), ExecPolicy::Sequential, &mut c).unwrap();
        assert_eq!(c.total, 2 + 18 + 8);
        assert_eq!(c.a11, -2 + 18);
    }

    #[test]
    fn policies_bit_identical() {
        let m = section5(0.01, 1e-6);
        let a = factor_tpp_with(&m, &PivotParams::default(), ExecPolicy::Sequential).unwrap();
        let b = factor_tpp_with(&m, &PivotParams::default(), ExecPolicy::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn state_consistency() {
        let s = TppState { nelim: 1, m: 2, t: Some(3), maxm: 0.5, maxt: 0.0, ..TppState::default() };
        assert!(s.is_consistent(4));
        assert!(!s.is_consistent(3));
        assert!(!TppState { m: 0, ..s }.is_consistent(4));
        assert!(!TppState { t: Some(2), ..s }.is_consistent(4));
        assert!(!TppState { maxm: -1.0, ..s }.is_consistent(4));
    }
}

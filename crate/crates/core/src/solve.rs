//! End-to-end solution of a dense symmetric system: factor the leading
//! supernode with a chosen strategy, factor the remaining root block (delayed
//! columns plus the Schur complement) with threshold pivoting, then solve and
//! refine.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::compressed::{factor_compressed_with, CompressionMode};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::par::ExecPolicy;
use crate::parsim::CommCounters;
use crate::restricted::factor_restricted_with;
use crate::supernode::{form_schur, PivotBlock, PivotKind, PivotParams, SupernodeMatrix};
use crate::tpp::{factor_tpp_with, Factored};

/// Refinement stops once the backward error falls below this.
pub const REFINE_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Tpp,
    Strict,
    Relaxed,
    Restricted,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Tpp, Method::Strict, Method::Relaxed, Method::Restricted];

    pub fn name(self) -> &'static str {
        match self {
            Method::Tpp => "tpp",
            Method::Strict => "strict",
            Method::Relaxed => "relaxed",
            Method::Restricted => "restricted",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown method '{s}'")))
    }
}

/// Factors a supernode with the given strategy.
pub fn factor_supernode(m: &SupernodeMatrix, method: Method, params: &PivotParams, policy: ExecPolicy) -> Result<Factored> {
    match method {
        Method::Tpp => factor_tpp_with(m, params, policy),
        Method::Strict => factor_compressed_with(m, CompressionMode::Strict, params, policy),
        Method::Relaxed => factor_compressed_with(m, CompressionMode::Relaxed, params, policy),
        Method::Restricted => factor_restricted_with(m, params, policy).map(|(f, _)| f),
    }
}

/// `b - A x` with each entry accumulated in twice-working precision.
pub fn residual(a: &DenseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.nrows();
    let mut s = b.to_vec();
    let mut c = vec![0.0; n];
    // column sweeps keep memory access contiguous
    for (j, &xj) in x.iter().enumerate() {
        let col = a.col(j);
        for i in 0..n {
            let prod = -col[i] * xj;
            let perr = (-col[i]).mul_add(xj, -prod);
            let sum = s[i] + prod;
            let z = sum - s[i];
            let serr = (s[i] - (sum - z)) + (prod - z);
            s[i] = sum;
            c[i] += perr + serr;
        }
    }
    s.iter().zip(&c).map(|(a, b)| a + b).collect()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `||A x - b|| / (||A|| ||x|| + ||b||)` in the infinity norm; 0 when both
/// numerator and denominator vanish.
pub fn backward_error(a: &DenseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let num = norm_inf(&residual(a, x, b));
    let den = a.norm_inf() * norm_inf(x) + norm_inf(b);
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Symmetric scaling `s_i = 1 / sqrt(max_j |a(i,j)|)`; rows of zeros keep scale 1.
pub fn equilibration(a: &DenseMatrix) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| {
            let m = (0..a.ncols()).fold(0.0, |m: f64, j| m.max(a[(i, j)].abs()));
            if m > 0.0 {
                1.0 / m.sqrt()
            } else {
                1.0
            }
        })
        .collect()
}

/// A complete `P^T L D L^T P` factorization of a dense system.
#[derive(Clone, Debug)]
pub struct SystemFactorization {
    /// Position to original index.
    pub order: Vec<usize>,
    /// `N x N` unit lower triangular factor in position order.
    pub l: DenseMatrix,
    pub blocks: Vec<PivotBlock>,
    pub supernode: Factored,
    pub root_nelim: usize,
    /// Root columns that no test accepted; solved as zero pivots.
    pub root_unresolved: usize,
}

impl SystemFactorization {
    pub fn zero_pivots(&self) -> usize {
        self.blocks.iter().filter(|b| b.kind == PivotKind::Zero).count()
    }

    /// Solves `A x = b`; zero pivots contribute a zero component.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.order.len();
        let mut y: Vec<f64> = self.order.iter().map(|&o| b[o]).collect();
        for j in 0..n {
            let yj = y[j];
            if yj != 0.0 {
                let col = self.l.col(j);
                for i in j + 1..n {
                    y[i] -= col[i] * yj;
                }
            }
        }
        let mut q = 0;
        for blk in &self.blocks {
            let w = blk.width();
            blk.solve_in_place(&mut y[q..q + w]);
            q += w;
        }
        for j in (0..n).rev() {
            let col = self.l.col(j);
            let mut s = y[j];
            for i in j + 1..n {
                s -= col[i] * y[i];
            }
            y[j] = s;
        }
        let mut x = vec![0.0; n];
        for (k, &o) in self.order.iter().enumerate() {
            x[o] = y[k];
        }
        x
    }
}

/// Factors the system `a` whose leading `p` columns form the supernode.
pub fn factor_system(
    a: &DenseMatrix,
    p: usize,
    method: Method,
    params: &PivotParams,
    policy: ExecPolicy,
) -> Result<SystemFactorization> {
    let big_n = a.nrows();
    if a.ncols() != big_n {
        return Err(Error::DimensionMismatch("system matrix must be square".into()));
    }
    if !a.is_symmetric() {
        let (i, j) = (0..big_n)
            .flat_map(|j| (0..big_n).map(move |i| (i, j)))
            .find(|&(i, j)| a[(i, j)] != a[(j, i)])
            .expect("asymmetric entry exists");
        return Err(Error::NonSymmetric(i, j));
    }
    let sn = SupernodeMatrix::from_symmetric(a, p)?;
    let f1 = factor_supernode(&sn, method, params, policy)?;
    let fac = &f1.factors;
    let nelim = fac.nelim;
    // root: delayed columns then the remaining rows
    let root_orig: Vec<usize> = fac.perm[nelim..].iter().copied().chain(p..big_n).collect();
    let m = root_orig.len();
    let l_root = DenseMatrix::from_fn(m, nelim, |i, j| fac.l[(nelim + i, j)]);
    let s = form_schur(&l_root, &fac.pivots)?;
    let root = DenseMatrix::from_fn(m, m, |i, j| a[(root_orig[i], root_orig[j])] - s[(i, j)]);

    let mut order: Vec<usize> = fac.perm[..nelim].to_vec();
    let mut blocks = fac.pivots.clone();
    let mut root_nelim = 0;
    let mut root_unresolved = 0;
    let f2 = if m > 0 {
        let rs = SupernodeMatrix::from_symmetric(&root, m)?;
        let f2 = factor_tpp_with(&rs, params, policy)?;
        root_nelim = f2.factors.nelim;
        root_unresolved = m - root_nelim;
        order.extend(f2.factors.perm.iter().map(|&k| root_orig[k]));
        blocks.extend(f2.factors.pivots.iter().map(|b| PivotBlock {
            kind: b.kind,
            columns: b.columns.iter().map(|&k| root_orig[k]).collect(),
            d_values: b.d_values.clone(),
        }));
        for &k in &f2.factors.delayed {
            blocks.push(PivotBlock { kind: PivotKind::Zero, columns: vec![root_orig[k]], d_values: vec![0.0] });
        }
        Some(f2)
    } else {
        None
    };
    let mut pos = vec![0; big_n];
    for (k, &o) in order.iter().enumerate() {
        pos[o] = k;
    }
    let mut l = DenseMatrix::identity(big_n);
    for c in 0..nelim {
        for r in c + 1..big_n {
            let v = fac.l[(r, c)];
            if v != 0.0 {
                l[(pos[fac.original_row(r)], c)] = v;
            }
        }
    }
    if let Some(f2) = f2 {
        let f = &f2.factors;
        for c in 0..f.nelim {
            for r in c + 1..m {
                let v = f.l[(r, c)];
                if v != 0.0 {
                    l[(pos[root_orig[f.perm[r]]], nelim + c)] = v;
                }
            }
        }
    }
    Ok(SystemFactorization { order, l, blocks, supernode: f1, root_nelim, root_unresolved })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_steps: usize,
    pub equilibrate: bool,
    pub policy: ExecPolicy,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { max_steps: 10, equilibrate: false, policy: ExecPolicy::default() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub factor_s: f64,
    pub solve_s: f64,
}

/// Outcome of one solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: Method,
    pub n: usize,
    pub p: usize,
    pub nelim: usize,
    pub delayed: usize,
    pub root_nelim: usize,
    pub root_unresolved: usize,
    pub zero_pivots: usize,
    pub growth: f64,
    pub max_abs_l: f64,
    /// Initial backward error followed by one entry per refinement step.
    pub bwd_err: Vec<f64>,
    pub converged: bool,
    pub equilibrated: bool,
    pub counters: Option<CommCounters>,
    pub timings: Timings,
    #[serde(skip)]
    pub x: Vec<f64>,
}

impl SolveReport {
    pub fn final_bwd_err(&self) -> f64 {
        self.bwd_err.last().copied().unwrap_or(f64::NAN)
    }
}

/// Solves `a x = b` with the supernode strategy `method` on the leading `p`
/// columns and iterative refinement. A refinement step that would raise the
/// backward error is discarded and ends the iteration.
pub fn solve_with_refinement(
    a: &DenseMatrix,
    b: &[f64],
    p: usize,
    method: Method,
    params: &PivotParams,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let n = a.nrows();
    if b.len() != n {
        return Err(Error::DimensionMismatch(format!("rhs has {} entries for a {n} x {n} system", b.len())));
    }
    let t0 = Instant::now();
    let scale = if opts.equilibrate { equilibration(a) } else { vec![1.0; n] };
    // evaluated on the lower triangle only so rounding keeps the result symmetric
    let scaled = DenseMatrix::from_fn(n, n, |i, j| {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        scale[r] * a[(r, c)] * scale[c]
    });
    let fact = factor_system(&scaled, p, method, params, opts.policy)?;
    let factor_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let apply = |r: &[f64]| -> Vec<f64> {
        let rs: Vec<f64> = r.iter().zip(&scale).map(|(v, s)| v * s).collect();
        fact.solve(&rs).iter().zip(&scale).map(|(v, s)| v * s).collect()
    };
    let mut x = apply(b);
    let mut errs = vec![backward_error(a, &x, b)];
    for _ in 0..opts.max_steps {
        let last = *errs.last().unwrap();
        if last < REFINE_TOL {
            break;
        }
        let r = residual(a, &x, b);
        let dx = apply(&r);
        let cand: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
        let e = backward_error(a, &cand, b);
        if !(e <= last) {
            break;
        }
        x = cand;
        errs.push(e);
    }
    let solve_s = t1.elapsed().as_secs_f64();
    let sf = &fact.supernode;
    Ok(SolveReport {
        method,
        n,
        p,
        nelim: sf.factors.nelim,
        delayed: sf.factors.delayed.len(),
        root_nelim: fact.root_nelim,
        root_unresolved: fact.root_unresolved,
        zero_pivots: fact.zero_pivots(),
        growth: sf.growth.growth_factor(),
        max_abs_l: sf.factors.max_abs_l(),
        converged: *errs.last().unwrap() < REFINE_TOL,
        bwd_err: errs,
        equilibrated: opts.equilibrate,
        counters: None,
        timings: Timings { factor_s, solve_s },
        x,
    })
}

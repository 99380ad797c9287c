//! Property tests over random supernodes.

use proptest::prelude::*;

use pivotkit::comm_model::{scheme_costs, tpp_ops, Scheme};
use pivotkit::compressed::{
    build_strict_rows, factor_compressed, merge_relaxed, merge_strict, update_strict_c, build_relaxed_rows,
};
use pivotkit::parsim::{relaxed_tree, simulate_with, strict_tree, Partition};
use pivotkit::solve::{solve_with_refinement, Method, SolveOptions, REFINE_TOL};
use pivotkit::supernode::WorkingMatrix;
use pivotkit::{
    build_strict, check_dominance, factor_restricted, factor_tpp, form_schur, generate, CompressionMode, ExecPolicy,
    Factored, GeneratorKind, GeneratorSpec, PivotKind, PivotParams, SupernodeMatrix,
};

const THRESHOLDS: [f64; 3] = [0.5, 0.1, 0.01];

fn entry() -> impl Strategy<Value = f64> {
    prop_oneof![
        6 => -1.0..1.0f64,
        1 => Just(0.0),
        1 => -100.0..100.0f64,
    ]
}

/// A random supernode (lower part of the column-major values is used) and a
/// threshold.
fn supernode(max_n: usize, max_p: usize) -> impl Strategy<Value = (SupernodeMatrix, PivotParams)> {
    (1..=max_p)
        .prop_flat_map(move |p| (Just(p), p..=max_n.max(p)))
        .prop_flat_map(|(p, n)| (Just(n), Just(p), prop::collection::vec(entry(), n * p), 0..THRESHOLDS.len()))
        .prop_map(|(n, p, v, ui)| {
            (SupernodeMatrix::from_col_major(n, p, v).unwrap(), PivotParams::with_u(THRESHOLDS[ui]).unwrap())
        })
}

fn residual_bound(f: &Factored) -> f64 {
    let fa = &f.factors;
    50.0 * f64::EPSILON * fa.n.max(fa.p) as f64 * f.growth.max_mu()
}

/// Reconstruction residual over the eliminated columns, rows below `rows` only.
fn residual_rows(f: &Factored, m: &SupernodeMatrix, rows: usize) -> f64 {
    let fa = &f.factors;
    let ld = fa.l_times_d();
    let mut worst: f64 = 0.0;
    for c in 0..fa.nelim {
        for r in c..rows {
            let s: f64 = (0..fa.nelim).map(|k| ld[(r, k)] * fa.l[(c, k)]).sum();
            worst = worst.max((m.get(fa.original_row(r), fa.perm[c]) - s).abs());
        }
    }
    worst
}

fn all_strategies(m: &SupernodeMatrix, params: &PivotParams) -> Vec<(&'static str, Factored)> {
    vec![
        ("tpp", factor_tpp(m, params).unwrap()),
        ("strict", factor_compressed(m, CompressionMode::Strict, params).unwrap()),
        ("relaxed", factor_compressed(m, CompressionMode::Relaxed, params).unwrap()),
        ("restricted", factor_restricted(m, params).unwrap().0),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn reconstruction_residual_is_small((m, params) in supernode(40, 12)) {
        for (name, f) in all_strategies(&m, &params) {
            let bound = residual_bound(&f);
            if name == "restricted" && f.factors.zero_pivots() > 0 {
                // a zero A11 column hides its A21 entries from the restricted kernel
                let res = residual_rows(&f, &m, m.p());
                prop_assert!(res <= bound, "{name}: A11 rows {res:e} > {bound:e}");
                continue;
            }
            let res = f.factors.reconstruction_residual(&m);
            prop_assert!(res <= bound, "{name}: {res:e} > {bound:e}");
        }
    }

    // The updated delayed block equals the original minus L D L^T.
    #[test]
    fn delayed_columns_carry_every_update((m, params) in supernode(30, 10)) {
        for (name, f) in all_strategies(&m, &params) {
            let fa = &f.factors;
            let ld = fa.l_times_d();
            for (j, &col) in fa.delayed.iter().enumerate() {
                let c = fa.nelim + j;
                for r in c..fa.n {
                    let mut s = 0.0;
                    for k in 0..fa.nelim {
                        s += ld[(r, k)] * fa.l[(c, k)];
                    }
                    let want = m.get(fa.original_row(r), col) - s;
                    let got = fa.remainder[(r, j)];
                    prop_assert!((got - want).abs() <= residual_bound(&f), "{name}: ({r}, {col}) {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn tpp_and_strict_bound_l_and_growth((m, params) in supernode(40, 12)) {
        let u_inv = params.u_inv();
        for (name, f) in all_strategies(&m, &params).into_iter().take(2) {
            prop_assert!(f.factors.max_abs_l() <= u_inv + 1e-10, "{name}: max |L| = {}", f.factors.max_abs_l());
            for (before, after, w) in f.growth.per_pivot() {
                prop_assert!(after <= before * (1.0 + w as f64 * u_inv) * (1.0 + 1e-12), "{name}: {before} -> {after} ({w})");
            }
        }
    }

    #[test]
    fn growth_trace_shape((m, params) in supernode(30, 10)) {
        for (name, f) in all_strategies(&m, &params) {
            prop_assert_eq!(f.growth.mu.len(), f.factors.nelim + 1, "{}", name);
            prop_assert_eq!(f.growth.mu[0], m.max_abs());
            for b in &f.factors.pivots {
                prop_assert_eq!(b.columns.len(), b.width());
                if b.kind == PivotKind::Zero {
                    prop_assert_eq!(&b.d_values, &vec![0.0]);
                }
            }
        }
    }

    #[test]
    fn strict_dominance_and_nonnegative_c((m, params) in supernode(40, 12)) {
        let f = factor_compressed(&m, CompressionMode::Strict, &params).unwrap();
        let a21 = m.a21();
        let c = build_strict(&a21);
        prop_assert!(check_dominance(&a21, &c, &f.factors.steps).unwrap());
        let mut cur = c;
        for step in &f.factors.steps {
            for j in 0..cur.rows.nrows() {
                let row = cur.rows.row_mut(j);
                for &(x, y) in &step.swaps {
                    row.swap(x, y);
                }
            }
            if !matches!(step.op, pivotkit::supernode::StepOp::Zero { .. }) {
                update_strict_c(&mut cur, &step.op).unwrap();
            }
            prop_assert!(cur.to_rows().iter().flatten().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn zero_a21_matches_tpp((m, params) in supernode(30, 10)) {
        let m = m.with_zero_a21();
        let all = all_strategies(&m, &params);
        let tpp = &all[0].1.factors;
        for (name, f) in &all[1..] {
            prop_assert_eq!(&f.factors.perm, &tpp.perm, "{}", name);
            prop_assert_eq!(&f.factors.pivots, &tpp.pivots, "{}", name);
            prop_assert!(f.factors.l.as_slice().iter().zip(tpp.l.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()), "{name}");
        }
    }

    #[test]
    fn restricted_delays_no_more_than_tpp((m, params) in supernode(40, 12)) {
        let tpp = factor_tpp(&m, &params).unwrap();
        let (res, _) = factor_restricted(&m, &params).unwrap();
        prop_assert!(res.factors.delayed.len() <= tpp.factors.delayed.len());
    }

    #[test]
    fn double_permutation_is_identity((m, _) in supernode(20, 8), a in 0usize..8, b in 0usize..8) {
        let p = m.p();
        let (a, b) = (a % p, b % p);
        let mut w = WorkingMatrix::from_supernode(&m);
        w.permute_symmetric(a, b).unwrap();
        w.permute_symmetric(a, b).unwrap();
        for i in 0..p {
            for j in 0..=i {
                prop_assert_eq!(w.get(i, j).to_bits(), m.get(i, j).to_bits());
            }
        }
        for r in 0..m.n() - p {
            for j in 0..p {
                prop_assert_eq!(w.tail()[(r, j)].to_bits(), m.get(p + r, j).to_bits());
            }
        }
    }

    #[test]
    fn schur_is_bitwise_symmetric((m, params) in supernode(30, 8)) {
        let f = factor_tpp(&m, &params).unwrap();
        let s = form_schur(&f.factors.l21(), &f.factors.pivots).unwrap();
        for i in 0..s.nrows() {
            for j in 0..i {
                prop_assert_eq!(s[(i, j)].to_bits(), s[(j, i)].to_bits());
            }
        }
    }

    #[test]
    fn strict_merge_commutes_and_associates((m, _) in supernode(60, 8), cut1 in 0.0..1.0f64, cut2 in 0.0..1.0f64) {
        let a21 = m.a21();
        let rows = a21.nrows();
        let (x, y) = {
            let (a, b) = ((cut1 * rows as f64) as usize, (cut2 * rows as f64) as usize);
            (a.min(b), a.max(b))
        };
        let (c1, c2, c3) = (build_strict_rows(&a21, 0..x), build_strict_rows(&a21, x..y), build_strict_rows(&a21, y..rows));
        let left = merge_strict(&merge_strict(&c1, &c2).unwrap(), &c3).unwrap();
        let right = merge_strict(&c1, &merge_strict(&c2, &c3).unwrap()).unwrap();
        let swapped = merge_strict(&merge_strict(&c2, &c1).unwrap(), &c3).unwrap();
        let serial = build_strict(&a21);
        for other in [&right, &swapped, &serial] {
            prop_assert_eq!(&left.provenance, &other.provenance);
            prop_assert!(left.to_rows().iter().flatten().zip(other.to_rows().iter().flatten()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn relaxed_tree_is_deterministic((m, _) in supernode(60, 8), lg in 0u32..4) {
        let procs = 1usize << lg;
        let a = relaxed_tree(&m, procs, ExecPolicy::Sequential).unwrap();
        let b = relaxed_tree(&m, procs, ExecPolicy::Parallel).unwrap();
        prop_assert_eq!(a, b);
        // single-block merge against an empty side is the identity selection
        let whole = build_relaxed_rows(&m.a21(), 0..m.n() - m.p());
        let empty = build_relaxed_rows(&m.a21(), 0..0);
        prop_assert_eq!(merge_relaxed(&whole, &empty).unwrap().to_rows(), whole.to_rows());
    }

    #[test]
    fn strict_tree_independent_of_processor_count((m, _) in supernode(60, 8), lg in 1u32..5) {
        let serial = build_strict(&m.a21());
        let tree = strict_tree(&m, 1 << lg, ExecPolicy::Parallel).unwrap();
        prop_assert_eq!(tree, serial);
    }

    #[test]
    fn simulation_matches_serial_factors((m, params) in supernode(40, 8), lg in 0u32..5) {
        let procs = 1usize << lg;
        for scheme in [Scheme::TppA, Scheme::TppB, Scheme::Strict, Scheme::Restricted] {
            let one = simulate_with(scheme, &m, 1, &params, ExecPolicy::Sequential).unwrap();
            let many = simulate_with(scheme, &m, procs, &params, ExecPolicy::Parallel).unwrap();
            prop_assert_eq!(&one.factored.factors, &many.factored.factors, "{}", scheme);
            let c = many.counters;
            prop_assert!(c.ops >= 0 && c.msgs >= 0 && c.bw >= 0);
        }
    }

    #[test]
    fn partition_covers_rows(rows in 0usize..500, lg in 0u32..6) {
        let part = Partition::new(rows, 1 << lg).unwrap();
        let blocks = part.blocks();
        prop_assert_eq!(blocks.len(), 1 << lg);
        let mut next = 0;
        for b in blocks {
            prop_assert_eq!(b.start, next);
            next = b.end;
        }
        prop_assert_eq!(next, rows);
        let sizes: Vec<usize> = blocks.iter().map(|b| b.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn closed_forms_nonnegative(half_p in 1usize..=32, extra in 0usize..300, lg in 0u32..5) {
        let (p, procs) = (2 * half_p, 1usize << lg);
        let n = p + extra;
        for scheme in Scheme::ALL {
            let c = scheme_costs(scheme, n, p, procs).unwrap();
            prop_assert!(c.ops >= 0.into() && c.msgs >= 0.into() && c.bw >= 0.into());
            prop_assert!(c.msgs.is_integer());
        }
        let r = scheme_costs(Scheme::Restricted, n, p, procs).unwrap();
        prop_assert_eq!(r.ops, tpp_ops(n, p).unwrap() - num_rational::Ratio::from_integer((p * (n - p)) as i128));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solve_pipeline_accounting_and_refinement(seed in 0u64..10_000, n in 20usize..80, p in 1usize..16, mi in 0usize..4) {
        let method = Method::ALL[mi];
        let g = generate(&GeneratorSpec::new(GeneratorKind::RandomIndefinite, n, p, seed)).unwrap();
        let b = g.system.mul_vec(&vec![1.0; n]);
        let params = PivotParams::default();
        let r = solve_with_refinement(&g.system, &b, p, method, &params, &SolveOptions::default()).unwrap();
        prop_assert_eq!(r.nelim + r.root_nelim + r.root_unresolved, n);
        prop_assert!(r.bwd_err.len() <= 11);
        if r.converged {
            prop_assert!(r.final_bwd_err() < REFINE_TOL);
        }
        if method != Method::Restricted || r.converged {
            prop_assert!(r.bwd_err.windows(2).all(|w| w[1] <= w[0]), "{:?}", r.bwd_err);
        }
        let again = solve_with_refinement(&g.system, &b, p, method, &params, &SolveOptions::default()).unwrap();
        prop_assert_eq!(&again.bwd_err, &r.bwd_err);
        prop_assert!(again.x.iter().zip(&r.x).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

// The restricted kernel cannot see A21, so a zero A11 column over a nonzero
// A21 column becomes a zero pivot and its A21 entries are dropped.
#[test]
fn restricted_zero_column_loses_a21() {
    let m = SupernodeMatrix::from_col_major(3, 1, vec![0.0, 0.25, -0.5]).unwrap();
    let params = PivotParams::default();
    let (f, _) = factor_restricted(&m, &params).unwrap();
    assert_eq!(f.factors.zero_pivots(), 1);
    assert_eq!(f.factors.reconstruction_residual(&m), 0.5);
    let tpp = factor_tpp(&m, &params).unwrap();
    assert_eq!(tpp.factors.zero_pivots(), 0);
    assert_eq!(tpp.factors.delayed, vec![0]);
}

// Diagonally dominant instances never need a delay.
#[test]
fn diag_dominant_eliminates_everything() {
    for seed in 0..100 {
        let p = 1 + (seed as usize % 24);
        let n = p + (seed as usize * 7) % 60;
        let m = generate(&GeneratorSpec::new(GeneratorKind::DiagDominant, n, p, seed)).unwrap().supernode;
        let params = PivotParams::default();
        let tpp = factor_tpp(&m, &params).unwrap();
        assert_eq!(tpp.factors.nelim, p, "tpp seed {seed}");
        let (res, report) = factor_restricted(&m, &params).unwrap();
        assert_eq!(res.factors.nelim, p, "restricted seed {seed}");
        assert!(report.max_abs_l <= params.u_inv(), "seed {seed}: {}", report.max_abs_l);
    }
}

//! Acceptance criteria 1-9. Every check prints one PASS/FAIL line with its
//! wall time and limit, then asserts.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use pivotkit::comm_model::{scheme_costs, tpp_ops, Rational, Scheme};
use pivotkit::compressed::{build_relaxed, build_strict, check_dominance, factor_compressed, CompressionMode};
use pivotkit::parsim::{simulate_with, strict_tree};
use pivotkit::solve::{solve_with_refinement, Method, SolveOptions};
use pivotkit::{
    factor_restricted, factor_tpp, generate, DenseMatrix, ExecPolicy, Factored, GeneratorKind, GeneratorSpec,
    PivotParams, SupernodeMatrix,
};

const THRESHOLDS: [f64; 3] = [0.5, 0.1, 0.01];

fn criterion(id: u32, name: &str, limit: Duration, check: impl FnOnce() -> Result<String, String>) {
    let start = Instant::now();
    let outcome = check();
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let (ok, detail) = match outcome {
        Ok(d) => (in_time, d),
        Err(e) => (false, e),
    };
    println!(
        "criterion {id} [{name}]: {} in {elapsed:.3?} (limit {limit:?}{}) {detail}",
        if ok { "PASS" } else { "FAIL" },
        if in_time { "" } else { ", exceeded" },
    );
    assert!(ok, "criterion {id} failed: {detail}");
}

fn fig42_a21() -> DenseMatrix {
    DenseMatrix::from_rows(&[
        vec![1.0, 10.0, 10.0],
        vec![2.0, 3.0, 4.0],
        vec![0.0, 10.0, -3.0],
        vec![4.0, -5.0, 4.0],
        vec![0.0, -6.0, 8.0],
    ])
}

fn bits(rows: &[Vec<f64>]) -> Vec<Vec<u64>> {
    rows.iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect()
}

#[test]
fn criterion_1_golden_figures() {
    let a21 = fig42_a21();
    criterion(1, "compressed C golden values", Duration::from_millis(1), || {
        let strict = build_strict(&a21).to_rows();
        let relaxed = build_relaxed(&a21).to_rows();
        let want_strict = vec![vec![0.0, 0.0, 0.0], vec![4.0, 10.0, 10.0], vec![2.0, 6.0, 8.0]];
        let want_relaxed = vec![vec![4.0, -5.0, 4.0], vec![1.0, 10.0, 10.0], vec![0.0, -6.0, 8.0]];
        if bits(&strict) != bits(&want_strict) {
            return Err(format!("strict C = {strict:?}"));
        }
        if bits(&relaxed) != bits(&want_relaxed) {
            return Err(format!("relaxed C = {relaxed:?}"));
        }
        Ok(String::new())
    });
}

#[test]
fn criterion_2_relaxed_counterexample() {
    let spec = GeneratorSpec { u: 0.01, epsilon: 1e-6, ..GeneratorSpec::new(GeneratorKind::PathologicalRelaxed, 5, 2, 0) };
    let m = generate(&spec).unwrap().supernode;
    let params = PivotParams::with_u(0.01).unwrap();
    criterion(2, "relaxed L growth, TPP and strict delay", Duration::from_millis(1), || {
        let relaxed = factor_compressed(&m, CompressionMode::Relaxed, &params).map_err(|e| e.to_string())?;
        let tpp = factor_tpp(&m, &params).map_err(|e| e.to_string())?;
        let strict = factor_compressed(&m, CompressionMode::Strict, &params).map_err(|e| e.to_string())?;
        let want = 2.0 * (100.0 - 1e-6);
        if relaxed.factors.nelim != 2 {
            return Err(format!("relaxed nelim = {}", relaxed.factors.nelim));
        }
        let l = relaxed.factors.max_abs_l();
        if ((l - want) / want).abs() > 1e-9 || l <= params.u_inv() {
            return Err(format!("relaxed max |L| = {l}"));
        }
        for (name, f) in [("tpp", &tpp), ("strict", &strict)] {
            if f.factors.nelim != 1 || f.factors.delayed != vec![1] {
                return Err(format!("{name}: nelim {} delayed {:?}", f.factors.nelim, f.factors.delayed));
            }
        }
        Ok(format!("max |L| = {l}"))
    });
}

struct Instance {
    m: SupernodeMatrix,
    params: PivotParams,
}

fn random_suite(count: usize, max_n: usize, max_p: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let p = rng.random_range(1..=max_p);
            let n = rng.random_range(p..=max_n);
            let u = THRESHOLDS[rng.random_range(0..THRESHOLDS.len())];
            let g = generate(&GeneratorSpec::new(GeneratorKind::RandomIndefinite, n, p, seed ^ (i as u64) << 8)).unwrap();
            Instance { m: g.supernode, params: PivotParams::with_u(u).unwrap() }
        })
        .collect()
}

fn growth_violations(f: &Factored, u_inv: f64) -> Vec<String> {
    let mut out = Vec::new();
    let l = f.factors.max_abs_l();
    if l > u_inv * (1.0 + 1e-10) {
        out.push(format!("max |L| = {l} > {u_inv}"));
    }
    for (q, (before, after, w)) in f.growth.per_pivot().into_iter().enumerate() {
        if after > before * (1.0 + w as f64 * u_inv) * (1.0 + 1e-12) {
            out.push(format!("pivot {q} (width {w}): mu {before} -> {after}"));
        }
    }
    out
}

// Criteria 3 and 4 share one suite and one time budget.
#[test]
fn criteria_3_and_4_strict_growth_and_dominance() {
    let suite = random_suite(1000, 200, 32, 0x5eed);
    let mut dominance = Vec::new();
    let limit = Duration::from_secs(60);
    let start = Instant::now();
    criterion(3, "strict growth bounds", limit, || {
        let results: Vec<(Vec<String>, bool)> = suite
            .par_iter()
            .map(|inst| {
                let f = factor_compressed(&inst.m, CompressionMode::Strict, &inst.params).unwrap();
                let a21 = inst.m.a21();
                let dom = check_dominance(&a21, &build_strict(&a21), &f.factors.steps).unwrap();
                (growth_violations(&f, inst.params.u_inv()), dom)
            })
            .collect();
        dominance = results.iter().map(|r| r.1).collect();
        let bad: Vec<String> = results.into_iter().enumerate().flat_map(|(i, r)| r.0.into_iter().map(move |v| format!("#{i}: {v}"))).collect();
        if bad.is_empty() {
            Ok(format!("{} instances, 0 violations", suite.len()))
        } else {
            Err(format!("{} violations, first: {}", bad.len(), bad[0]))
        }
    });
    let rest = limit.saturating_sub(start.elapsed());
    criterion(4, "strict dominance at every step", rest, || {
        let failed = dominance.iter().filter(|ok| !**ok).count();
        if failed == 0 {
            Ok(format!("{} instances, 0 violations", dominance.len()))
        } else {
            Err(format!("{failed} instances violate dominance"))
        }
    });
}

#[test]
fn criterion_5_counters_equal_closed_forms() {
    criterion(5, "simulated counters equal closed forms", Duration::from_secs(120), || {
        let cases: Vec<(usize, usize)> = (2..=32).step_by(2).flat_map(|p| (p..=256).map(move |n| (n, p))).collect();
        let params = PivotParams::default();
        let mismatches: Vec<String> = cases
            .par_iter()
            .flat_map_iter(|&(n, p)| {
                let m = generate(&GeneratorSpec::new(GeneratorKind::All2x2Accept, n, p, (n * 1000 + p) as u64)).unwrap().supernode;
                let mut bad = Vec::new();
                for procs in [1usize, 2, 4, 8, 16] {
                    for scheme in Scheme::ALL {
                        let sim = simulate_with(scheme, &m, procs, &params, ExecPolicy::Sequential).unwrap();
                        let want = scheme_costs(scheme, n, p, procs).unwrap().to_integers().unwrap();
                        let got = sim.counters.as_i128();
                        let msgs_ok = match scheme {
                            Scheme::Strict | Scheme::Relaxed => got[1] == 1 + procs.trailing_zeros() as i128,
                            Scheme::Restricted => got[1] == 1,
                            _ => true,
                        };
                        if got != want || !msgs_ok {
                            bad.push(format!("{scheme} n={n} p={p} P={procs}: {got:?} vs {want:?}"));
                        }
                    }
                }
                bad
            })
            .collect();
        if mismatches.is_empty() {
            Ok(format!("{} (n, p) pairs x 5 P x 5 schemes", cases.len()))
        } else {
            Err(format!("{} mismatches, first: {}", mismatches.len(), mismatches[0]))
        }
    });
}

// Per-pivot operation counts summed directly.
fn tpp_ops_itemized(n: i128, p: i128) -> i128 {
    (1..=p / 2)
        .map(|i| {
            let maxima = 2 * (n - 2 * i - 1);
            let test = 18;
            let apply = 4 * (n - 2 * i);
            let update = (p - 2 * i) * (2 * n - p - 2 * i + 1);
            maxima + test + apply + update
        })
        .sum()
}

#[test]
fn criterion_6_tpp_ops_oracle() {
    criterion(6, "tpp_ops closed form vs itemized sum", Duration::from_secs(5), || {
        if tpp_ops(4, 2).unwrap() != Rational::from_integer(28) {
            return Err(format!("tpp_ops(4, 2) = {}", tpp_ops(4, 2).unwrap()));
        }
        let mut checked = 0;
        for p in (2..=64).step_by(2) {
            for n in p..=512 {
                let closed = tpp_ops(n, p).unwrap();
                let sum = tpp_ops_itemized(n as i128, p as i128);
                if closed != Rational::from_integer(sum) {
                    return Err(format!("n={n} p={p}: {closed} vs {sum}"));
                }
                checked += 1;
            }
        }
        Ok(format!("{checked} pairs"))
    });
}

#[test]
fn criterion_7_backward_error() {
    criterion(7, "backward error below 1e-14 at n = 500", Duration::from_secs(60), || {
        let params = PivotParams::default();
        let runs: Vec<(u64, Method, bool)> =
            (0..10u64).flat_map(|s| [(s, Method::Tpp, false), (s, Method::Strict, false), (s, Method::Relaxed, true)]).collect();
        let results: Vec<Result<f64, String>> = runs
            .par_iter()
            .map(|&(seed, method, equilibrate)| {
                let g = generate(&GeneratorSpec::new(GeneratorKind::RandomIndefinite, 500, 32, 700 + seed)).unwrap();
                let x: Vec<f64> = (0..500).map(|i| 1.0 + (i % 7) as f64 / 7.0).collect();
                let b = g.system.mul_vec(&x);
                let opts = SolveOptions { equilibrate, ..SolveOptions::default() };
                let r = solve_with_refinement(&g.system, &b, 32, method, &params, &opts).map_err(|e| e.to_string())?;
                let e = r.final_bwd_err();
                if r.bwd_err.len() <= 11 && e < 1e-14 {
                    Ok(e)
                } else {
                    Err(format!("seed {seed} {method}: bwd_err {e:e} after {} steps", r.bwd_err.len() - 1))
                }
            })
            .collect();
        let worst = results.iter().filter_map(|r| r.as_ref().ok()).fold(0.0f64, |a, &b| a.max(b));
        match results.into_iter().find_map(Result::err) {
            Some(e) => Err(e),
            None => Ok(format!("30 solves, worst {worst:e}")),
        }
    });
}

fn same_factors(a: &Factored, b: &Factored) -> bool {
    let (fa, fb) = (&a.factors, &b.factors);
    let l_bits = |f: &pivotkit::PartialFactorization| f.l.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let d_bits = |f: &pivotkit::PartialFactorization| {
        f.pivots.iter().flat_map(|p| p.d_values.iter().map(|v| v.to_bits())).collect::<Vec<_>>()
    };
    fa.nelim == fb.nelim
        && fa.perm == fb.perm
        && fa.delayed == fb.delayed
        && fa.pivot_sequence() == fb.pivot_sequence()
        && fa.pivots.iter().map(|p| p.kind).eq(fb.pivots.iter().map(|p| p.kind))
        && l_bits(fa) == l_bits(fb)
        && d_bits(fa) == d_bits(fb)
}

#[test]
fn criterion_8_zero_a21_oracle_equivalence() {
    criterion(8, "A21 = 0: all strategies match TPP", Duration::from_secs(30), || {
        let suite = random_suite(200, 120, 24, 0xa21);
        let failures: Vec<String> = suite
            .par_iter()
            .enumerate()
            .filter_map(|(i, inst)| {
                let m = inst.m.with_zero_a21();
                let tpp = factor_tpp(&m, &inst.params).unwrap();
                let others = [
                    ("strict", factor_compressed(&m, CompressionMode::Strict, &inst.params).unwrap()),
                    ("relaxed", factor_compressed(&m, CompressionMode::Relaxed, &inst.params).unwrap()),
                    ("restricted", factor_restricted(&m, &inst.params).unwrap().0),
                ];
                if let Some((name, _)) = others.iter().find(|(_, f)| !same_factors(f, &tpp)) {
                    return Some(format!("#{i}: {name} differs from tpp"));
                }
                if tpp.factors.nelim == m.p() {
                    let bound = 50.0 * f64::EPSILON * m.n().max(m.p()) as f64 * tpp.growth.max_mu();
                    let res = tpp.factors.reconstruction_residual(&m);
                    if res > bound {
                        return Some(format!("#{i}: residual {res:e} > {bound:e}"));
                    }
                }
                None
            })
            .collect();
        if failures.is_empty() {
            Ok(format!("{} instances", suite.len()))
        } else {
            Err(format!("{} failures, first: {}", failures.len(), failures[0]))
        }
    });
}

#[test]
fn criterion_9_strict_tree_is_exact() {
    criterion(9, "strict tree reduction equals serial C", Duration::from_secs(10), || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in 0..100u64 {
            let p = rng.random_range(1..=16);
            let n = rng.random_range(p + 8..=p + 150);
            let m = generate(&GeneratorSpec::new(GeneratorKind::RandomIndefinite, n, p, 900 + i)).unwrap().supernode;
            let serial = build_strict(&m.a21());
            for procs in [2, 4, 8] {
                let tree = strict_tree(&m, procs, ExecPolicy::default()).map_err(|e| e.to_string())?;
                if bits(&tree.to_rows()) != bits(&serial.to_rows()) || tree.provenance != serial.provenance {
                    return Err(format!("instance {i} (n={n}, p={p}) P={procs}"));
                }
            }
        }
        Ok("100 instances x P in {2, 4, 8}".into())
    });
}

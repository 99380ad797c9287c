//! `pivotkit` command-line driver.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use pivotkit::comm_model::{scheme_costs, tpp_ops, Rational, Scheme};
use pivotkit::compressed::{build_relaxed, build_strict, factor_compressed, CompressionMode};
use pivotkit::mmio;
use pivotkit::parsim::simulate_with;
use pivotkit::report::{Report, Run};
use pivotkit::solve::{solve_with_refinement, Method, SolveOptions, SolveReport};
use pivotkit::{
    factor_tpp, generate, test_1x1, test_2x2, DenseMatrix, ExecPolicy, GeneratorKind, GeneratorSpec, PivotParams,
};

const SEED_ENV: &str = "PIVOTKIT_SEED";

#[derive(Parser, Debug)]
#[command(name = "pivotkit", version, about = "Threshold and compressed pivoting for symmetric indefinite supernodes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate systems, solve them with each method and write a JSON report.
    Factor(FactorArgs),
    /// Solve a Matrix Market system.
    Solve(SolveArgs),
    /// Run a scheme on logical processors and compare its counters with the closed forms.
    Simulate(SimulateArgs),
    /// Print the closed-form costs of a scheme.
    Commmodel(CommModelArgs),
    /// Run the golden-value checks.
    Selftest,
}

#[derive(Args, Debug)]
struct Pivoting {
    /// Threshold u in (0, 0.5].
    #[arg(long, default_value_t = 0.01)]
    u: f64,
    /// Magnitudes below this count as zero.
    #[arg(long, default_value_t = 1e-20)]
    small: f64,
}

impl Pivoting {
    fn params(&self) -> anyhow::Result<PivotParams> {
        Ok(PivotParams::new(self.u, self.small)?)
    }
}

#[derive(Args, Debug)]
struct FactorArgs {
    /// Comma-separated methods: tpp, strict, relaxed, restricted.
    #[arg(long, value_delimiter = ',', default_value = "tpp")]
    method: Vec<Method>,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 32)]
    p: usize,
    #[command(flatten)]
    pivoting: Pivoting,
    /// Overridden by PIVOTKIT_SEED when set.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "random-indefinite")]
    kind: GeneratorKind,
    /// Independent instances, seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    runs: u64,
    /// Perturbation for the pathological kind.
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 10)]
    refine: usize,
    /// Symmetric diagonal scaling by 1/sqrt(max |row|) before factoring.
    #[arg(long)]
    equilibrate: bool,
    /// Also simulate on this many logical processors and record the counters.
    #[arg(long = "P")]
    procs: Option<usize>,
    /// Report destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the generated system of the first run as Matrix Market.
    #[arg(long)]
    save_matrix: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    matrix: PathBuf,
    /// Right-hand side; A times the ones vector when absent.
    #[arg(long)]
    rhs: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "tpp")]
    method: Vec<Method>,
    /// Supernode width; min(32, n) when absent.
    #[arg(long)]
    p: Option<usize>,
    #[command(flatten)]
    pivoting: Pivoting,
    #[arg(long, default_value_t = 10)]
    refine: usize,
    #[arg(long)]
    equilibrate: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the solution of the first method here.
    #[arg(long)]
    solution: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scheme: tpp_A, tpp_B, strict, relaxed, restricted or all.
    #[arg(long, default_value = "all")]
    method: String,
    #[arg(long = "P", default_value_t = 4)]
    procs: usize,
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    p: usize,
    #[arg(long, default_value = "all-2x2-accept")]
    kind: GeneratorKind,
    #[command(flatten)]
    pivoting: Pivoting,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct CommModelArgs {
    /// Scheme: tpp_A, tpp_B, strict, relaxed, restricted or all.
    #[arg(long, default_value = "all")]
    scheme: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long = "P")]
    procs: usize,
}

fn schemes(arg: &str) -> anyhow::Result<Vec<Scheme>> {
    if arg == "all" {
        return Ok(Scheme::ALL.to_vec());
    }
    arg.split(',').map(|s| s.trim().parse::<Scheme>().map_err(Into::into)).collect()
}

fn seed_override(seed: u64) -> anyhow::Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().with_context(|| format!("{SEED_ENV}='{v}' is not an unsigned integer")),
        Err(std::env::VarError::NotPresent) => Ok(seed),
        Err(e) => bail!("{SEED_ENV}: {e}"),
    }
}

fn scheme_of(method: Method) -> Scheme {
    match method {
        Method::Tpp => Scheme::TppA,
        Method::Strict => Scheme::Strict,
        Method::Relaxed => Scheme::Relaxed,
        Method::Restricted => Scheme::Restricted,
    }
}

fn solve_one(
    a: &DenseMatrix,
    b: &[f64],
    p: usize,
    method: Method,
    params: &PivotParams,
    opts: &SolveOptions,
) -> anyhow::Result<SolveReport> {
    solve_with_refinement(a, b, p, method, params, opts).with_context(|| format!("{method} solve failed"))
}

fn emit(report: &Report, out: Option<&PathBuf>) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            report.write(path).with_context(|| format!("writing {}", path.display()))?;
            for r in &report.runs {
                println!(
                    "{:<20} {:<10} nelim {:>4} delayed {:>4} growth {:>10.3e} max|L| {:>10.3e} bwd_err {:>10.3e} ({} steps)",
                    r.instance,
                    r.report.method.name(),
                    r.report.nelim,
                    r.report.delayed,
                    r.report.growth,
                    r.report.max_abs_l,
                    r.final_bwd_err,
                    r.report.bwd_err.len() - 1
                );
            }
            if !report.delays_vs_tpp.is_empty() {
                print!("{}", report.delay_table());
            }
        }
        None => println!("{}", report.to_json()?),
    }
    Ok(())
}

fn cmd_factor(args: FactorArgs) -> anyhow::Result<ExitCode> {
    let params = args.pivoting.params()?;
    let seed = seed_override(args.seed)?;
    let mut methods = args.method.clone();
    // the delay comparison needs a TPP baseline
    if !methods.contains(&Method::Tpp) {
        methods.insert(0, Method::Tpp);
    }
    let opts = SolveOptions { max_steps: args.refine, equilibrate: args.equilibrate, policy: ExecPolicy::Sequential };
    let specs: Vec<GeneratorSpec> = (0..args.runs)
        .map(|i| GeneratorSpec { u: args.pivoting.u, epsilon: args.epsilon, ..GeneratorSpec::new(args.kind, args.n, args.p, seed + i) })
        .collect();
    if let (Some(path), Some(first)) = (&args.save_matrix, specs.first()) {
        mmio::write_system(path, &generate(first)?.system)?;
    }
    let per_instance: Vec<anyhow::Result<Vec<Run>>> = specs
        .par_iter()
        .map(|spec| {
            let g = generate(spec)?;
            let x: Vec<f64> = (0..spec.n).map(|i| 1.0 + (i % 5) as f64 / 5.0).collect();
            let b = g.system.mul_vec(&x);
            let instance = format!("{}-s{}", spec.kind, spec.seed);
            methods
                .iter()
                .map(|&method| {
                    let mut r = solve_one(&g.system, &b, spec.p, method, &params, &opts)?;
                    if let Some(procs) = args.procs {
                        let sim = simulate_with(scheme_of(method), &g.supernode, procs, &params, ExecPolicy::Sequential)?;
                        r.counters = Some(sim.counters);
                    }
                    Ok(Run::new(instance.clone(), r))
                })
                .collect()
        })
        .collect();
    let mut runs = Vec::new();
    for r in per_instance {
        runs.extend(r?);
    }
    emit(&Report::from_runs(runs), args.out.as_ref())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve(args: SolveArgs) -> anyhow::Result<ExitCode> {
    let params = args.pivoting.params()?;
    let a = mmio::read_system(&args.matrix).with_context(|| format!("reading {}", args.matrix.display()))?;
    let n = a.nrows();
    let b = match &args.rhs {
        Some(path) => mmio::read_vector(path).with_context(|| format!("reading {}", path.display()))?,
        None => a.mul_vec(&vec![1.0; n]),
    };
    let p = args.p.unwrap_or(n.min(32));
    let opts = SolveOptions { max_steps: args.refine, equilibrate: args.equilibrate, policy: ExecPolicy::default() };
    let instance = args.matrix.file_stem().map_or_else(|| "matrix".to_string(), |s| s.to_string_lossy().into_owned());
    let mut runs = Vec::new();
    for &method in &args.method {
        let r = solve_one(&a, &b, p, method, &params, &opts)?;
        if runs.is_empty() {
            if let Some(path) = &args.solution {
                mmio::write_vector(path, &r.x)?;
            }
        }
        runs.push(Run::new(instance.clone(), r));
    }
    let report = Report::from_runs(runs);
    match &args.out {
        Some(_) => emit(&report, args.out.as_ref())?,
        None => {
            for r in &report.runs {
                let errs: Vec<String> = r.report.bwd_err.iter().map(|e| format!("{e:.3e}")).collect();
                println!(
                    "{:<10} nelim {} delayed {} root {} unresolved {} bwd_err [{}]",
                    r.report.method.name(),
                    r.report.nelim,
                    r.report.delayed,
                    r.report.root_nelim,
                    r.report.root_unresolved,
                    errs.join(", ")
                );
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<ExitCode> {
    let params = args.pivoting.params()?;
    let seed = seed_override(args.seed)?;
    let spec = GeneratorSpec { u: args.pivoting.u, ..GeneratorSpec::new(args.kind, args.n, args.p, seed) };
    let m = generate(&spec)?.supernode;
    let comparable = args.kind == GeneratorKind::All2x2Accept;
    let mut all_match = true;
    println!("{:<11} {:>14} {:>14} {:>6} {:>6} {:>14} {:>14}  match", "scheme", "ops", "formula", "msgs", "formula", "bw", "formula");
    for scheme in schemes(&args.method)? {
        let sim = simulate_with(scheme, &m, args.procs, &params, ExecPolicy::default())?;
        let c = sim.counters;
        let (f_ops, f_msgs, f_bw, verdict) = match scheme_costs(scheme, args.n, args.p, args.procs) {
            Ok(f) => {
                let same = f.to_integers() == Some(c.as_i128());
                if comparable && !same {
                    all_match = false;
                }
                let verdict = match (comparable, same) {
                    (true, true) => "yes",
                    (true, false) => "NO",
                    (false, _) => "n/a",
                };
                (f.ops.to_string(), f.msgs.to_string(), f.bw.to_string(), verdict)
            }
            Err(_) => ("-".into(), "-".into(), "-".into(), "n/a"),
        };
        println!(
            "{:<11} {:>14} {:>14} {:>6} {:>6} {:>14} {:>14}  {verdict}",
            scheme.name(),
            c.ops,
            f_ops,
            c.msgs,
            f_msgs,
            c.bw,
            f_bw
        );
    }
    Ok(if all_match { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn cmd_commmodel(args: CommModelArgs) -> anyhow::Result<ExitCode> {
    println!("{:<11} {:>16} {:>8} {:>16}   asymptotic (ops, msgs, bw)", "scheme", "ops", "msgs", "bw");
    for scheme in schemes(&args.scheme)? {
        let c = scheme_costs(scheme, args.n, args.p, args.procs)?;
        let a = scheme.asymptotic();
        println!("{:<11} {:>16} {:>8} {:>16}   {}, {}, {}", scheme.name(), c.ops, c.msgs, c.bw, a.ops, a.msgs, a.bw);
    }
    Ok(ExitCode::SUCCESS)
}

type Check = (&'static str, fn() -> Result<(), String>);

fn fig42() -> DenseMatrix {
    DenseMatrix::from_rows(&[
        vec![1.0, 10.0, 10.0],
        vec![2.0, 3.0, 4.0],
        vec![0.0, 10.0, -3.0],
        vec![4.0, -5.0, 4.0],
        vec![0.0, -6.0, 8.0],
    ])
}

fn expect<T: PartialEq + std::fmt::Debug>(got: T, want: T) -> Result<(), String> {
    if got == want {
        Ok(())
    } else {
        Err(format!("got {got:?}, want {want:?}"))
    }
}

const CHECKS: &[Check] = &[
    ("strict C of the 5x3 example", || {
        expect(build_strict(&fig42()).to_rows(), vec![vec![0.0, 0.0, 0.0], vec![4.0, 10.0, 10.0], vec![2.0, 6.0, 8.0]])
    }),
    ("relaxed C of the 5x3 example", || {
        expect(build_relaxed(&fig42()).to_rows(), vec![vec![4.0, -5.0, 4.0], vec![1.0, 10.0, 10.0], vec![0.0, -6.0, 8.0]])
    }),
    ("relaxed L entry 199.999998 on the counterexample", || {
        let m = generate(&GeneratorSpec::new(GeneratorKind::PathologicalRelaxed, 5, 2, 0)).map_err(|e| e.to_string())?.supernode;
        let f = factor_compressed(&m, CompressionMode::Relaxed, &PivotParams::default()).map_err(|e| e.to_string())?;
        let l = f.factors.max_abs_l();
        if f.factors.nelim == 2 && ((l - 199.999998) / 199.999998).abs() <= 1e-9 {
            Ok(())
        } else {
            Err(format!("nelim {}, max |L| {l}", f.factors.nelim))
        }
    }),
    ("TPP and strict delay column 2 on the counterexample", || {
        let m = generate(&GeneratorSpec::new(GeneratorKind::PathologicalRelaxed, 5, 2, 0)).map_err(|e| e.to_string())?.supernode;
        let params = PivotParams::default();
        let t = factor_tpp(&m, &params).map_err(|e| e.to_string())?;
        let s = factor_compressed(&m, CompressionMode::Strict, &params).map_err(|e| e.to_string())?;
        expect((t.factors.delayed, s.factors.delayed), (vec![1], vec![1]))
    }),
    ("pivot test boundaries", || {
        let params = PivotParams::with_u(0.1).map_err(|e| e.to_string())?;
        expect(
            [test_1x1(1.0, 100.0, 0.01), test_1x1(1.0, 200.0, 0.01), test_2x2(0.0, 10.0, 0.0, 1.0, 1.0, &params)],
            [true, false, true],
        )
    }),
    ("tpp_ops(4, 2) = 28", || expect(tpp_ops(4, 2).map_err(|e| e.to_string())?, Rational::from_integer(28))),
    ("simulated counters equal closed forms", || {
        let params = PivotParams::default();
        for (n, p) in [(2, 2), (16, 4), (64, 8), (100, 16)] {
            let m = generate(&GeneratorSpec::new(GeneratorKind::All2x2Accept, n, p, 3)).map_err(|e| e.to_string())?.supernode;
            for procs in [1, 2, 4, 8, 16] {
                for scheme in Scheme::ALL {
                    let got = simulate_with(scheme, &m, procs, &params, ExecPolicy::default()).map_err(|e| e.to_string())?;
                    let want = scheme_costs(scheme, n, p, procs).map_err(|e| e.to_string())?.to_integers();
                    if want != Some(got.counters.as_i128()) {
                        return Err(format!("{scheme} n={n} p={p} P={procs}"));
                    }
                }
            }
        }
        Ok(())
    }),
    ("backward error below 1e-14 for TPP and strict", || {
        let g = generate(&GeneratorSpec::new(GeneratorKind::RandomIndefinite, 200, 32, 1)).map_err(|e| e.to_string())?;
        let b = g.system.mul_vec(&[1.0; 200]);
        for method in [Method::Tpp, Method::Strict] {
            let r = solve_with_refinement(&g.system, &b, 32, method, &PivotParams::default(), &SolveOptions::default())
                .map_err(|e| e.to_string())?;
            if r.final_bwd_err() >= 1e-14 {
                return Err(format!("{method}: {:e}", r.final_bwd_err()));
            }
        }
        Ok(())
    }),
];

fn cmd_selftest() -> ExitCode {
    let mut failed = 0;
    for (name, check) in CHECKS {
        match check() {
            Ok(()) => println!("PASS  {name}"),
            Err(e) => {
                failed += 1;
                println!("FAIL  {name}: {e}");
            }
        }
    }
    println!("{} of {} checks passed", CHECKS.len() - failed, CHECKS.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Factor(a) => cmd_factor(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Commmodel(a) => cmd_commmodel(a),
        Command::Selftest => Ok(cmd_selftest()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

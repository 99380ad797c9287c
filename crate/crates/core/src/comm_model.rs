//! Closed-form operation, message and bandwidth counts for the parallel
//! pivoting schemes, in exact rational arithmetic.
//!
//! The model assumes every pivot is a 2x2 pivot accepted at first try, so
//! `p` must be even.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Rational = Ratio<i128>;

fn q(n: i128) -> Rational {
    Rational::from_integer(n)
}

fn frac(a: i128, b: i128) -> Rational {
    Rational::new(a, b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "tpp_A")]
    TppA,
    #[serde(rename = "tpp_B")]
    TppB,
    #[serde(rename = "strict")]
    Strict,
    #[serde(rename = "relaxed")]
    Relaxed,
    #[serde(rename = "restricted")]
    Restricted,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::TppA, Scheme::TppB, Scheme::Strict, Scheme::Relaxed, Scheme::Restricted];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::TppA => "tpp_A",
            Scheme::TppB => "tpp_B",
            Scheme::Strict => "strict",
            Scheme::Relaxed => "relaxed",
            Scheme::Restricted => "restricted",
        }
    }

    /// Growth orders of the three costs when `P = O(n)`.
    pub fn asymptotic(self) -> Asymptotic {
        let (ops, msgs) = match self {
            Scheme::TppA => ("O(np^2)", "O(p log n)"),
            Scheme::TppB => ("O(np^3)", "O(p log n)"),
            Scheme::Strict | Scheme::Relaxed => ("O(np^2)", "O(log n)"),
            Scheme::Restricted => ("O(np^2)", "O(1)"),
        };
        Asymptotic { ops, msgs, bw: "O(np^2)" }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "tpp_a" | "a" => Ok(Scheme::TppA),
            "tpp_b" | "b" => Ok(Scheme::TppB),
            "strict" => Ok(Scheme::Strict),
            "relaxed" => Ok(Scheme::Relaxed),
            "restricted" => Ok(Scheme::Restricted),
            _ => Err(Error::InvalidParams(format!("unknown scheme '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Asymptotic {
    pub ops: &'static str,
    pub msgs: &'static str,
    pub bw: &'static str,
}

/// Operations, critical-path messages and words of bandwidth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostTriple {
    pub ops: Rational,
    pub msgs: Rational,
    pub bw: Rational,
}

impl CostTriple {
    pub fn new(ops: Rational, msgs: Rational, bw: Rational) -> Self {
        CostTriple { ops, msgs, bw }
    }

    /// The three values as integers, when all are integral.
    pub fn to_integers(&self) -> Option<[i128; 3]> {
        let all = [self.ops, self.msgs, self.bw];
        all.iter().all(Rational::is_integer).then(|| all.map(|r| r.to_integer()))
    }
}

impl std::ops::Add for CostTriple {
    type Output = CostTriple;
    fn add(self, o: CostTriple) -> CostTriple {
        CostTriple::new(self.ops + o.ops, self.msgs + o.msgs, self.bw + o.bw)
    }
}

/// `log2(procs)` for a power of two.
pub fn log2_exact(procs: usize) -> Result<u32> {
    if procs == 0 || !procs.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(procs));
    }
    Ok(procs.trailing_zeros())
}

fn check_np(n: usize, p: usize) -> Result<()> {
    if p % 2 == 1 {
        return Err(Error::OddBlockCount(p));
    }
    if p < 2 || n < p {
        return Err(Error::InvalidDimensions(format!("need n >= p >= 2, got n = {n}, p = {p}")));
    }
    Ok(())
}

/// Serial threshold partial pivoting operation count for `p/2` 2x2 pivots on
/// an `n x p` supernode.
pub fn tpp_ops(n: usize, p: usize) -> Result<Rational> {
    check_np(n, p)?;
    let (n, p) = (q(n as i128), q(p as i128));
    Ok(frac(29, 6) * p - frac(3, 4) * p * p - frac(1, 3) * p * p * p + q(2) * n * p + frac(1, 2) * n * p * p)
}

/// Cost of reducing `k` values over a binary tree on `procs` processors.
pub fn reduction_costs(k: usize, procs: usize) -> Result<CostTriple> {
    let l = log2_exact(procs)?;
    let (k, pm1) = (k as i128, procs as i128 - 1);
    Ok(CostTriple::new(q(pm1 * k), q(l as i128), q(2 * pm1 * k)))
}

/// Closed-form costs of one scheme.
pub fn scheme_costs(scheme: Scheme, n: usize, p: usize, procs: usize) -> Result<CostTriple> {
    check_np(n, p)?;
    let l = q(log2_exact(procs)? as i128);
    let tpp = tpp_ops(n, p)?;
    let (nr, pr, pp) = (q(n as i128), q(p as i128), q(procs as i128));
    let half = frac(1, 2);
    Ok(match scheme {
        Scheme::TppA => CostTriple::new(tpp, pr + half * pr * l, -half * pr + half * pp * pr * (pr + q(2))),
        Scheme::TppB => CostTriple::new(
            tpp + (pp - q(1)) * tpp_ops(p, p)?,
            q(1) + half * pr * l,
            half * (pp - q(1)) * pr * (pr + q(5)),
        ),
        Scheme::Strict => CostTriple::new(
            tpp + half * pr * ((pr - q(1)) * pr + q(3)) + nr * (q(2) * pr - q(1)) + pp * pr * pr,
            q(1) + l,
            -half * pr * (q(5) * pr + q(1)) + half * pp * pr * (q(5) * pr + q(1)),
        ),
        Scheme::Relaxed => CostTriple::new(
            tpp + half * pr * ((pr + q(2)) * pr - q(2)) + (nr + pp) * pr,
            q(1) + l,
            -half * pr * (q(5) * pr + q(1)) + half * pp * pr * (q(5) * pr + q(1)),
        ),
        Scheme::Restricted => CostTriple::new(
            tpp - pr * (nr - pr),
            q(1),
            -half * pr * (pr + q(1)) + half * pp * pr * (pr + q(1)),
        ),
    })
}

//! Seeded test-matrix families.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::supernode::SupernodeMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    RandomIndefinite,
    DiagDominant,
    All2x2Accept,
    PathologicalRelaxed,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 4] = [
        GeneratorKind::RandomIndefinite,
        GeneratorKind::DiagDominant,
        GeneratorKind::All2x2Accept,
        GeneratorKind::PathologicalRelaxed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::RandomIndefinite => "random-indefinite",
            GeneratorKind::DiagDominant => "diag-dominant",
            GeneratorKind::All2x2Accept => "all-2x2-accept",
            GeneratorKind::PathologicalRelaxed => "pathological-relaxed",
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        GeneratorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown matrix kind '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    /// Threshold used by the pathological family.
    pub u: f64,
    /// Perturbation used by the pathological family.
    pub epsilon: f64,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, n: usize, p: usize, seed: u64) -> Self {
        GeneratorSpec { kind, n, p, seed, u: 0.01, epsilon: 1e-6 }
    }
}

/// A full symmetric system together with its leading supernode.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub system: DenseMatrix,
    pub supernode: SupernodeMatrix,
}

fn symmetric_uniform(n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let mut a = DenseMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = rng.random_range(-1.0..1.0);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

fn random_sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

pub fn generate(spec: &GeneratorSpec) -> Result<Generated> {
    let GeneratorSpec { kind, n, p, seed, u, epsilon } = *spec;
    if p == 0 || n < p {
        return Err(Error::InvalidDimensions(format!("need 1 <= p <= n, got n = {n}, p = {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let system = match kind {
        GeneratorKind::RandomIndefinite => {
            let mut a = symmetric_uniform(n, &mut rng);
            for i in 0..n {
                let s = random_sign(&mut rng);
                a[(i, i)] += s * rng.random_range(0.0..2.0);
            }
            a
        }
        GeneratorKind::DiagDominant => {
            let mut a = symmetric_uniform(n, &mut rng);
            for i in 0..n {
                let off: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
                let s = random_sign(&mut rng);
                a[(i, i)] = s * (off + rng.random_range(0.5..1.5));
            }
            a
        }
        GeneratorKind::All2x2Accept => {
            if p % 2 == 1 {
                return Err(Error::OddBlockCount(p));
            }
            let mut a = symmetric_uniform(n, &mut rng);
            for j in 0..p {
                for i in j..p {
                    let base = if i == j + 1 && j % 2 == 0 { 10.0 } else { 0.0 };
                    let v = base + 0.1 * rng.random_range(-1.0..1.0);
                    a[(i, j)] = v;
                    a[(j, i)] = v;
                }
            }
            for i in p..n {
                let s = random_sign(&mut rng);
                a[(i, i)] += s * rng.random_range(1.0..2.0);
            }
            a
        }
        GeneratorKind::PathologicalRelaxed => {
            if p != 2 || n < 5 {
                return Err(Error::InvalidDimensions(format!(
                    "the pathological family needs p = 2 and n >= 5, got n = {n}, p = {p}"
                )));
            }
            if !(u > 0.0 && u <= 0.5) {
                return Err(Error::InvalidParams(format!("threshold u = {u} must lie in (0, 0.5]")));
            }
            let ui = 1.0 / u;
            let mut a = DenseMatrix::zeros(n, n);
            let lower = [(0, 0, 1.0), (1, 0, -1.0), (1, 1, 2.0), (2, 0, ui), (3, 1, ui), (4, 0, ui - epsilon), (4, 1, ui - epsilon)];
            for (i, j, v) in lower {
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
            for i in 2..n {
                a[(i, i)] = 4.0 * ui * ui;
            }
            a
        }
    };
    let supernode = SupernodeMatrix::from_symmetric(&system, p)?;
    Ok(Generated { system, supernode })
}

//! Restricted pivoting: pivot tests look at `A11` alone; `A21` is updated
//! afterwards with whatever pivots were chosen.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::par::ExecPolicy;
use crate::supernode::{PivotParams, SupernodeMatrix};
use crate::tpp::{factor_square, finish_deferred, Factored, KernelObserver};

/// Realized size of the factors, for inspection after the fact.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub max_abs_l: f64,
    pub max_abs_l21: f64,
    pub growth_factor: f64,
}

impl GrowthReport {
    pub fn of(f: &Factored) -> Self {
        GrowthReport {
            max_abs_l: f.factors.max_abs_l(),
            max_abs_l21: f.factors.l21().max_abs(),
            growth_factor: f.growth.growth_factor(),
        }
    }
}

pub(crate) fn factor_restricted_observed<O: KernelObserver>(
    m: &SupernodeMatrix,
    params: &PivotParams,
    policy: ExecPolicy,
    obs: &mut O,
) -> Result<Factored> {
    let run = factor_square(m.a11(), *params, policy, obs)?;
    Ok(finish_deferred(m, run, policy))
}

pub fn factor_restricted(m: &SupernodeMatrix, params: &PivotParams) -> Result<(Factored, GrowthReport)> {
    factor_restricted_with(m, params, ExecPolicy::default())
}

pub fn factor_restricted_with(
    m: &SupernodeMatrix,
    params: &PivotParams,
    policy: ExecPolicy,
) -> Result<(Factored, GrowthReport)> {
    let f = factor_restricted_observed(m, params, policy, &mut ())?;
    let g = GrowthReport::of(&f);
    Ok((f, g))
}

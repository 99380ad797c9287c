//! JSON run reports with a delayed-pivot comparison against TPP.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::solve::{Method, SolveReport};

pub const REPORT_VERSION: u32 = 1;

/// The JSON schema every serialized [`Report`] validates against.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

/// One solve, tagged with the instance it ran on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub instance: String,
    pub final_bwd_err: f64,
    #[serde(flatten)]
    pub report: SolveReport,
}

impl Run {
    pub fn new(instance: impl Into<String>, report: SolveReport) -> Self {
        Run { instance: instance.into(), final_bwd_err: report.final_bwd_err(), report }
    }
}

/// Extra delays of one method over TPP on the same instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayRow {
    pub instance: String,
    pub method: Method,
    pub tpp_delayed: usize,
    pub delayed: usize,
    pub additional: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub runs: Vec<Run>,
    pub delays_vs_tpp: Vec<DelayRow>,
}

impl Report {
    pub fn from_runs(runs: Vec<Run>) -> Self {
        let mut tpp: BTreeMap<&str, usize> = BTreeMap::new();
        for r in runs.iter().filter(|r| r.report.method == Method::Tpp) {
            tpp.entry(r.instance.as_str()).or_insert(r.report.delayed);
        }
        let delays_vs_tpp = runs
            .iter()
            .filter(|r| r.report.method != Method::Tpp)
            .filter_map(|r| {
                let base = *tpp.get(r.instance.as_str())?;
                Some(DelayRow {
                    instance: r.instance.clone(),
                    method: r.report.method,
                    tpp_delayed: base,
                    delayed: r.report.delayed,
                    additional: r.report.delayed as i64 - base as i64,
                })
            })
            .collect();
        Report { version: REPORT_VERSION, runs, delays_vs_tpp }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_json()? + "\n")?)
    }

    /// Plain-text table of the delay comparison.
    pub fn delay_table(&self) -> String {
        let mut s = format!("{:<24} {:<11} {:>8} {:>8} {:>10}\n", "instance", "method", "tpp", "delayed", "additional");
        for d in &self.delays_vs_tpp {
            writeln!(
                s,
                "{:<24} {:<11} {:>8} {:>8} {:>10}",
                d.instance,
                d.method.name(),
                d.tpp_delayed,
                d.delayed,
                d.additional
            )
            .unwrap();
        }
        s
    }
}

/// Convenience wrapper around [`Report::from_runs`].
pub fn report(runs: Vec<Run>) -> Report {
    Report::from_runs(runs)
}

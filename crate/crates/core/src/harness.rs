//! Experiment harness: runs the proposed pipeline and the baselines over
//! seeds and parameter grids and flattens the results into plot-ready rows.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::BaselineKind;
use crate::error::{Error, Result};
use crate::model::{generate_scenario, ScenarioTemplate};
use crate::pipeline::{solve, SolveParams, SolveReport};

/// A solvable method: the proposed pipeline or one of the baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Proposed,
    Baseline(BaselineKind),
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Proposed,
        Method::Baseline(BaselineKind::Rcop),
        Method::Baseline(BaselineKind::Ecop),
        Method::Baseline(BaselineKind::Rpoc),
        Method::Baseline(BaselineKind::Epoc),
        Method::Baseline(BaselineKind::Es),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Baseline(kind) => kind.name(),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidParams(format!("unknown method '{s}'")))
    }
}

/// Runs one method on one scenario.
pub fn run_method(method: Method, scenario: &crate::model::Scenario, params: &SolveParams) -> Result<SolveReport> {
    match method {
        Method::Proposed => solve(scenario, params),
        Method::Baseline(kind) => crate::baselines::run_baseline_report(kind, scenario, params),
    }
}

/// Sweepable template parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    /// Power price (per watt).
    Theta,
    /// Subchannel price.
    Beta,
    /// User payment rate (per Mbps).
    Delta,
    /// Subchannels per UAV.
    NumSubchannels,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Theta => "theta",
            SweepParam::Beta => "beta",
            SweepParam::Delta => "delta",
            SweepParam::NumSubchannels => "num_subchannels",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "theta" => Ok(SweepParam::Theta),
            "beta" => Ok(SweepParam::Beta),
            "delta" => Ok(SweepParam::Delta),
            "num_subchannels" | "subchannels" => Ok(SweepParam::NumSubchannels),
            other => Err(Error::InvalidParams(format!("unknown sweep parameter '{other}'"))),
        }
    }
}

/// Pins one template parameter to a grid value. Range parameters collapse to
/// the degenerate range so every other draw of the generator is unchanged.
pub fn apply_sweep(template: &ScenarioTemplate, param: SweepParam, value: f64) -> ScenarioTemplate {
    let mut t = template.clone();
    match param {
        SweepParam::Theta => t.power_price_range = [value, value],
        SweepParam::Beta => t.subchannel_price_range = [value, value],
        SweepParam::Delta => t.payment_per_mbps_range = [value, value],
        SweepParam::NumSubchannels => t.num_subchannels = value.round().max(1.0) as usize,
    }
    t
}

/// One summary row: the CSV schema of the CLI, minus formatting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub figure_id: String,
    pub method: String,
    pub seed: u64,
    pub param_name: String,
    pub param_value: Option<f64>,
    pub sp_index: usize,
    pub revenue: f64,
    pub cost: f64,
    pub utility: f64,
    pub total_utility: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Flattens a report into one row per SP.
pub fn summary_rows(
    report: &SolveReport,
    figure_id: &str,
    param_name: &str,
    param_value: Option<f64>,
) -> Vec<SummaryRow> {
    report
        .breakdown
        .per_sp
        .iter()
        .enumerate()
        .map(|(sp_index, sp)| SummaryRow {
            figure_id: figure_id.to_string(),
            method: report.method.clone(),
            seed: report.seed,
            param_name: param_name.to_string(),
            param_value,
            sp_index,
            revenue: sp.revenue,
            cost: sp.cost,
            utility: sp.utility,
            total_utility: report.breakdown.total_utility,
            iterations: report.iterations,
            converged: report.converged,
        })
        .collect()
}

/// Runs `methods x seeds` on one template; rows ordered by (method, seed, sp).
pub fn run_batch(
    template: &ScenarioTemplate,
    methods: &[Method],
    seeds: &[u64],
    params: &SolveParams,
) -> Result<(Vec<SummaryRow>, Vec<SolveReport>)> {
    let jobs: Vec<(Method, u64)> = methods
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let mut results: Vec<(usize, SolveReport)> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(method, seed))| {
            let scenario = generate_scenario(template, seed)?;
            let run_params = SolveParams { seed, ..params.clone() };
            Ok((i, run_method(method, &scenario, &run_params)?))
        })
        .collect::<Result<Vec<_>>>()?;
    results.sort_by_key(|(i, _)| *i);
    let reports: Vec<SolveReport> = results.into_iter().map(|(_, r)| r).collect();
    let rows = reports
        .iter()
        .flat_map(|r| summary_rows(r, "run", "", None))
        .collect();
    Ok((rows, reports))
}

/// Aggregate of one (parameter value, method) cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub param: String,
    pub value: f64,
    pub method: String,
    pub mean_total_utility: f64,
    pub median_total_utility: f64,
    pub seeds: usize,
}

/// Runs a parameter sweep; returns per-run rows plus per-cell aggregates.
/// Deterministic: rows come out ordered by (value, method, seed, sp).
pub fn sweep(
    template: &ScenarioTemplate,
    param: SweepParam,
    grid: &[f64],
    methods: &[Method],
    seeds: &[u64],
    params: &SolveParams,
) -> Result<(Vec<SummaryRow>, Vec<SweepCell>)> {
    if grid.is_empty() {
        return Err(Error::InvalidParams("sweep grid is empty".into()));
    }
    let figure = format!("sweep_{}", param.name());
    let jobs: Vec<(f64, Method, u64)> = grid
        .iter()
        .flat_map(|&v| {
            methods
                .iter()
                .flat_map(move |&m| seeds.iter().map(move |&s| (v, m, s)))
        })
        .collect();
    let mut results: Vec<(usize, Vec<SummaryRow>)> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(value, method, seed))| {
            let swept = apply_sweep(template, param, value);
            let scenario = generate_scenario(&swept, seed)?;
            let run_params = SolveParams { seed, record_traces: false, ..params.clone() };
            let report = run_method(method, &scenario, &run_params)?;
            Ok((i, summary_rows(&report, &figure, param.name(), Some(value))))
        })
        .collect::<Result<Vec<_>>>()?;
    results.sort_by_key(|(i, _)| *i);
    let rows: Vec<SummaryRow> = results.into_iter().flat_map(|(_, r)| r).collect();

    let mut cells = Vec::new();
    for &value in grid {
        for &method in methods {
            let mut totals: Vec<f64> = rows
                .iter()
                .filter(|r| {
                    r.param_value == Some(value) && r.method == method.name() && r.sp_index == 0
                })
                .map(|r| r.total_utility)
                .collect();
            totals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = totals.len();
            if n == 0 {
                continue;
            }
            let mean = totals.iter().sum::<f64>() / n as f64;
            let median = if n % 2 == 1 {
                totals[n / 2]
            } else {
                0.5 * (totals[n / 2 - 1] + totals[n / 2])
            };
            cells.push(SweepCell {
                param: param.name().to_string(),
                value,
                method: method.name().to_string(),
                mean_total_utility: mean,
                median_total_utility: median,
                seeds: n,
            });
        }
    }
    Ok((rows, cells))
}

/// Parses an inclusive `a:b:step` grid specification.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidParams(format!("grid '{spec}' is not a:b:step")));
    }
    let a: f64 = parts[0].parse().map_err(|_| Error::InvalidParams(format!("bad grid start '{}'", parts[0])))?;
    let b: f64 = parts[1].parse().map_err(|_| Error::InvalidParams(format!("bad grid end '{}'", parts[1])))?;
    let step: f64 = parts[2].parse().map_err(|_| Error::InvalidParams(format!("bad grid step '{}'", parts[2])))?;
    if step <= 0.0 || b < a {
        return Err(Error::InvalidParams(format!("grid '{spec}' must ascend with positive step")));
    }
    let mut grid = Vec::new();
    let mut v = a;
    while v <= b + 1e-9 {
        grid.push(v);
        v += step;
    }
    Ok(grid)
}

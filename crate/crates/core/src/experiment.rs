//! Experiment orchestration: paired-seed runs, parameter sweeps, parallel
//! execution and output layout.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{Mode, SimulationParams, SweepSpec};
use crate::error::Result;
use crate::metrics::{aggregate, AggregateMetrics, RunMetrics};
use crate::network::{run_once, RunOptions};
use crate::output;
use crate::sim::run_seed;

/// One configuration to run in one or more modes.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPoint {
    pub label: String,
    pub params: SimulationParams,
}

#[derive(Clone, Debug)]
pub struct ModeResult {
    pub mode: Mode,
    /// Ordered by run index.
    pub runs: Vec<RunMetrics>,
    pub aggregate: AggregateMetrics,
}

#[derive(Clone, Debug)]
pub struct PointResult {
    pub label: String,
    pub params: SimulationParams,
    pub modes: Vec<ModeResult>,
}

impl PointResult {
    pub fn mode(&self, mode: Mode) -> Option<&ModeResult> {
        self.modes.iter().find(|m| m.mode == mode)
    }
}

/// How to run: which modes, where to write, and per-run options.
#[derive(Clone, Debug)]
pub struct ExperimentPlan {
    pub points: Vec<ExperimentPoint>,
    pub modes: Vec<Mode>,
    pub out_dir: Option<PathBuf>,
    pub options: RunOptions,
}

impl ExperimentPlan {
    /// One configuration; both modes when `paired`.
    pub fn single(label: &str, params: SimulationParams, paired: bool) -> Self {
        let modes = if paired {
            vec![Mode::Dc, Mode::Hh]
        } else {
            vec![params.mode]
        };
        ExperimentPlan {
            points: vec![ExperimentPoint {
                label: label.to_string(),
                params,
            }],
            modes,
            out_dir: None,
            options: RunOptions::default(),
        }
    }

    /// Every (X2 latency, speed) combination of `sweep` on top of `base`.
    pub fn sweep(label: &str, base: SimulationParams, sweep: &SweepSpec, paired: bool) -> Result<Self> {
        sweep.validate()?;
        let mut plan = Self::single(label, base.clone(), paired);
        plan.points = sweep_points(label, &base, sweep)?;
        Ok(plan)
    }

    pub fn total_runs(&self) -> usize {
        self.points
            .iter()
            .map(|p| p.params.n_runs as usize * self.modes.len())
            .sum()
    }
}

/// Expands a sweep into labelled configurations, X2 latency outermost.
pub fn sweep_points(label: &str, base: &SimulationParams, sweep: &SweepSpec) -> Result<Vec<ExperimentPoint>> {
    let mut points = Vec::with_capacity(sweep.points());
    for &d_x2 in &sweep.d_x2_values {
        for &speed in &sweep.speed_values {
            let params = SimulationParams {
                d_x2,
                ue_speed: speed,
                ..base.clone()
            };
            params.validate()?;
            points.push(ExperimentPoint {
                label: format!("{label}_x2-{}ms_speed-{}", d_x2.as_ms_f64(), speed),
                params,
            });
        }
    }
    Ok(points)
}

/// Output directory of one run: `<out>/<config>/<mode>/run<i>`.
pub fn run_dir(out: &Path, label: &str, mode: Mode, index: u32) -> PathBuf {
    out.join(label).join(mode.as_str()).join(format!("run{index}"))
}

/// Executes every run of the plan, in parallel, and aggregates per
/// configuration and mode. Run `i` of every mode uses
/// `run_seed(master_seed, i)`, so DC and HH runs are paired by index.
/// Results and files are ordered by run index regardless of completion order.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<Vec<PointResult>> {
    for p in &plan.points {
        p.params.validate()?;
    }
    let jobs: Vec<(usize, Mode, u32)> = plan
        .points
        .iter()
        .enumerate()
        .flat_map(|(pi, p)| {
            plan.modes
                .iter()
                .flat_map(move |&m| (0..p.params.n_runs).map(move |i| (pi, m, i)))
        })
        .collect();

    let results: Vec<Result<RunMetrics>> = jobs
        .par_iter()
        .map(|&(pi, mode, i)| {
            let point = &plan.points[pi];
            let params = SimulationParams {
                mode,
                ..point.params.clone()
            };
            let seed = run_seed(params.master_seed, u64::from(i));
            let output = run_once(&params, seed, i, plan.options.clone())?;
            if let Some(out) = &plan.out_dir {
                output::write_run(&run_dir(out, &point.label, mode, i), &output)?;
            }
            Ok(output.metrics)
        })
        .collect();

    let mut results = results.into_iter();
    let mut points = Vec::with_capacity(plan.points.len());
    for point in &plan.points {
        let mut modes = Vec::with_capacity(plan.modes.len());
        for &mode in &plan.modes {
            let runs = (0..point.params.n_runs)
                .map(|_| results.next().expect("one result per job"))
                .collect::<Result<Vec<_>>>()?;
            let agg = aggregate(&runs)?;
            if let Some(out) = &plan.out_dir {
                let dir = out.join(&point.label).join(mode.as_str());
                output::write_aggregate(&dir.join("aggregate.csv"), &agg)?;
            }
            modes.push(ModeResult {
                mode,
                runs,
                aggregate: agg,
            });
        }
        points.push(PointResult {
            label: point.label.clone(),
            params: point.params.clone(),
            modes,
        });
    }
    Ok(points)
}

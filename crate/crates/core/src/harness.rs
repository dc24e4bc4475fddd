//! Event-driven runs over a scenario, run metrics and result files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjust::GammaStep;
use crate::baselines::StrategyKind;
use crate::engine::{initial_config, AdmissionDecision, AdmissionEngine, DeadlineStats, EngineError};
use crate::model::{FlowId, ModelError, NetworkConfig};
use crate::routing::{CandidateRouteTable, RoutingError};
use crate::scenario::{Event, RealisticCase, Scenario, ScenarioError, SyntheticSpec};

pub const RESULTS_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("event {index}: {source}")]
    Engine { index: usize, source: EngineError },
    #[error("event {index}: configuration invariants violated ({count} violations)")]
    Invariant { index: usize, count: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Output(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunOptions {
    /// A port is a bottleneck when its unreserved bandwidth is below this
    /// fraction of idSl_max.
    pub bottleneck_threshold: f64,
    /// Add requests per group.
    pub group_size: usize,
    /// Leading add requests left out of the timing statistics.
    pub warmup: usize,
    /// Run the invariant checker after every event and stop on a violation.
    pub verify: bool,
    /// Keep the per-iteration γ search of every accepted flow.
    pub gamma_trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            bottleneck_threshold: 0.10,
            group_size: 50,
            warmup: 10,
            verify: false,
            gamma_trace: false,
        }
    }
}

/// One row of the per-event CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event_index: usize,
    pub op: String,
    pub flow_id: u64,
    pub class: u8,
    /// accepted, rejected, removed or ignored.
    pub decision: String,
    pub reason: String,
    pub route: String,
    pub gamma: Option<f64>,
    pub cost: f64,
    pub elapsed_ns: u64,
    pub bottleneck_count_after: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    /// 1-based.
    pub group: usize,
    pub requests: usize,
    pub admitted_in_group: usize,
    pub bottleneck_port_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaTraceRecord {
    pub flow_id: u64,
    pub iteration: u32,
    pub gamma: f64,
    pub slack: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub samples: usize,
    pub mean_s: f64,
    pub p50_s: f64,
    pub p90_s: f64,
    pub p99_s: f64,
    pub max_s: f64,
}

impl TimingSummary {
    pub fn from_ns(samples: &[u64]) -> Self {
        if samples.is_empty() {
            return TimingSummary::default();
        }
        let mut s: Vec<f64> = samples.iter().map(|&n| n as f64 / 1e9).collect();
        s.sort_by(f64::total_cmp);
        let pick = |q: f64| s[((s.len() - 1) as f64 * q).round() as usize];
        TimingSummary {
            samples: s.len(),
            mean_s: s.iter().sum::<f64>() / s.len() as f64,
            p50_s: pick(0.5),
            p90_s: pick(0.9),
            p99_s: pick(0.99),
            max_s: *s.last().expect("nonempty"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub scenario: String,
    pub strategy: StrategyKind,
    pub requests: usize,
    pub admitted_total: usize,
    /// 1-based ordinal, among add requests, of the first rejection.
    pub first_rejection_index: Option<usize>,
    pub admission_time: TimingSummary,
    pub groups: Vec<GroupRecord>,
    #[serde(skip)]
    pub events: Vec<EventRecord>,
    #[serde(skip)]
    pub gamma_trace: Vec<GammaTraceRecord>,
}

impl RunMetrics {
    /// 1-based index of the first group ending with a bottleneck port.
    pub fn first_bottleneck_group(&self) -> Option<usize> {
        self.groups
            .iter()
            .find(|g| g.bottleneck_port_count > 0)
            .map(|g| g.group)
    }
}

/// Candidate routes for the scenario's pairs and the initial configuration.
pub fn prepare(scenario: &Scenario) -> Result<(CandidateRouteTable, NetworkConfig), HarnessError> {
    let table = CandidateRouteTable::build(&scenario.graph, scenario.k, Some(&scenario.pairs()))?;
    let stats = DeadlineStats::from_flows(
        scenario.flows(),
        &table,
        scenario.class_config.classes(),
    );
    let cfg = initial_config(scenario.graph.clone(), scenario.class_config.clone(), &stats)?;
    Ok((table, cfg))
}

/// Runs `scenario` from scratch.
pub fn run(
    scenario: &Scenario,
    strategy: StrategyKind,
    options: &RunOptions,
) -> Result<RunMetrics, HarnessError> {
    scenario.validate()?;
    let (table, cfg) = prepare(scenario)?;
    run_prepared(scenario, &table, cfg, strategy, options)
}

/// Runs `scenario` against a prepared table and initial configuration.
pub fn run_prepared(
    scenario: &Scenario,
    table: &CandidateRouteTable,
    initial: NetworkConfig,
    strategy: StrategyKind,
    options: &RunOptions,
) -> Result<RunMetrics, HarnessError> {
    let threshold = options.bottleneck_threshold;
    let group_size = options.group_size.max(1);
    let mut engine = AdmissionEngine::new(initial, strategy).with_gamma_trace(options.gamma_trace);
    let mut events = Vec::with_capacity(scenario.events.len());
    let mut gamma_trace = Vec::new();
    let mut groups = Vec::new();
    let mut timings = Vec::new();
    let mut requests = 0;
    let mut admitted_total = 0;
    let mut first_rejection = None;
    let mut group_requests = 0;
    let mut group_admitted = 0;

    for (index, ev) in scenario.events.iter().enumerate() {
        let record = match ev {
            Event::Add { flow } => {
                requests += 1;
                let (id, class) = (flow.id, flow.class);
                let start = Instant::now();
                let decision = engine.admit(flow.clone(), table);
                let elapsed = start.elapsed().as_nanos() as u64;
                let decision = decision.map_err(|source| HarnessError::Engine { index, source })?;
                if requests > options.warmup {
                    timings.push(elapsed);
                }
                group_requests += 1;
                let bottlenecks = engine.config().bottleneck_ports(threshold);
                let rec = match decision {
                    AdmissionDecision::Accepted(acc) => {
                        admitted_total += 1;
                        group_admitted += 1;
                        gamma_trace.extend(acc.gamma_trace.iter().map(|s: &GammaStep| {
                            GammaTraceRecord {
                                flow_id: id.0,
                                iteration: s.iteration,
                                gamma: s.gamma,
                                slack: s.slack,
                            }
                        }));
                        EventRecord {
                            event_index: index,
                            op: "add".into(),
                            flow_id: id.0,
                            class,
                            decision: "accepted".into(),
                            reason: String::new(),
                            route: acc.route.hop_list(),
                            gamma: acc.gamma,
                            cost: acc.cost,
                            elapsed_ns: elapsed,
                            bottleneck_count_after: bottlenecks,
                        }
                    }
                    AdmissionDecision::Rejected(rej) => {
                        first_rejection.get_or_insert(requests);
                        EventRecord {
                            event_index: index,
                            op: "add".into(),
                            flow_id: id.0,
                            class,
                            decision: "rejected".into(),
                            reason: rej.reason.as_str().into(),
                            route: String::new(),
                            gamma: None,
                            cost: engine.cost(),
                            elapsed_ns: elapsed,
                            bottleneck_count_after: bottlenecks,
                        }
                    }
                };
                if group_requests == group_size {
                    groups.push(GroupRecord {
                        group: groups.len() + 1,
                        requests: group_requests,
                        admitted_in_group: group_admitted,
                        bottleneck_port_count: bottlenecks,
                    });
                    group_requests = 0;
                    group_admitted = 0;
                }
                rec
            }
            Event::Remove { flow_id } => remove_event(&mut engine, index, *flow_id, threshold)?,
        };
        if options.verify {
            let report = engine.verify();
            if !report.is_empty() {
                log::error!("event {index}: {:?}", report.violations);
                return Err(HarnessError::Invariant {
                    index,
                    count: report.len(),
                });
            }
        }
        events.push(record);
    }
    if group_requests > 0 {
        groups.push(GroupRecord {
            group: groups.len() + 1,
            requests: group_requests,
            admitted_in_group: group_admitted,
            bottleneck_port_count: engine.config().bottleneck_ports(threshold),
        });
    }

    Ok(RunMetrics {
        scenario: scenario.name.clone(),
        strategy,
        requests,
        admitted_total,
        first_rejection_index: first_rejection,
        admission_time: TimingSummary::from_ns(&timings),
        groups,
        events,
        gamma_trace,
    })
}

fn remove_event(
    engine: &mut AdmissionEngine,
    index: usize,
    id: FlowId,
    threshold: f64,
) -> Result<EventRecord, HarnessError> {
    let class = engine
        .config()
        .admitted
        .get(&id)
        .map(|r| r.flow.class)
        .unwrap_or(0);
    let start = Instant::now();
    let result = if engine.config().is_admitted(id) {
        Some(engine.remove(id).map_err(|source| HarnessError::Engine { index, source })?)
    } else {
        None
    };
    let elapsed = start.elapsed().as_nanos() as u64;
    Ok(EventRecord {
        event_index: index,
        op: "remove".into(),
        flow_id: id.0,
        class,
        decision: if result.is_some() { "removed" } else { "ignored" }.into(),
        reason: if result.is_some() { "" } else { "not_admitted" }.into(),
        route: String::new(),
        gamma: None,
        cost: engine.cost(),
        elapsed_ns: elapsed,
        bottleneck_count_after: engine.config().bottleneck_ports(threshold),
    })
}

#[derive(Serialize)]
struct Summary<'a> {
    version: u32,
    #[serde(flatten)]
    metrics: &'a RunMetrics,
    first_bottleneck_group: Option<usize>,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| HarnessError::Output(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)
            .map_err(|e| HarnessError::Output(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes `events.csv`, `groups.csv`, `summary.json` and, when traced,
/// `gamma_trace.csv` into `dir`, replacing earlier files.
pub fn write_outputs(metrics: &RunMetrics, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_csv(&dir.join("events.csv"), &metrics.events)?;
    write_csv(&dir.join("groups.csv"), &metrics.groups)?;
    let trace = dir.join("gamma_trace.csv");
    if metrics.gamma_trace.is_empty() {
        if trace.exists() {
            fs::remove_file(&trace).map_err(io_err(&trace))?;
        }
    } else {
        write_csv(&trace, &metrics.gamma_trace)?;
    }
    let summary = Summary {
        version: RESULTS_VERSION,
        metrics,
        first_bottleneck_group: metrics.first_bottleneck_group(),
    };
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).map_err(|e| HarnessError::Output(e.to_string()))?;
    fs::write(&path, text).map_err(io_err(&path))
}

/// Where the scenarios of a comparison matrix come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioSource {
    /// Synthetic case; its seed is replaced by each matrix seed.
    Er(SyntheticSpec),
    Realistic { case: RealisticCase, flows: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixScenario {
    pub label: String,
    #[serde(flatten)]
    pub source: ScenarioSource,
}

/// A comparison matrix: every scenario × seed × strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub scenarios: Vec<MatrixScenario>,
    pub strategies: Vec<StrategyKind>,
    pub seeds: Vec<u64>,
    /// Probability of a removal before each add; 0 for add-only runs.
    #[serde(default)]
    pub remove_prob: f64,
    #[serde(default)]
    pub options: RunOptions,
}

impl Matrix {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Output(format!("matrix: {e}")))
    }
}

/// One row of the comparison CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub label: String,
    pub seed: u64,
    pub strategy: StrategyKind,
    pub requests: usize,
    pub admitted: usize,
    pub first_rejection: Option<usize>,
    pub mean_admission_us: f64,
    pub first_bottleneck_group: Option<usize>,
    pub final_bottleneck_ports: usize,
}

pub fn build_scenario(source: &ScenarioSource, seed: u64) -> Result<Scenario, HarnessError> {
    Ok(match source {
        ScenarioSource::Er(spec) => Scenario::synthetic(&SyntheticSpec {
            seed,
            ..spec.clone()
        })?,
        ScenarioSource::Realistic { case, flows } => Scenario::realistic(*case, *flows, seed)?,
    })
}

/// Runs every cell of `matrix`, scenarios in parallel, and returns one row
/// per (scenario, seed, strategy) in matrix order.
pub fn compare(matrix: &Matrix) -> Result<Vec<CellResult>, HarnessError> {
    let jobs: Vec<(&MatrixScenario, u64)> = matrix
        .scenarios
        .iter()
        .flat_map(|s| matrix.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let rows: Vec<Vec<CellResult>> = jobs
        .par_iter()
        .map(|&(ms, seed)| {
            let mut scenario = build_scenario(&ms.source, seed)?;
            if matrix.remove_prob > 0.0 {
                scenario = scenario.with_churn(seed, matrix.remove_prob);
            }
            let (table, cfg) = prepare(&scenario)?;
            matrix
                .strategies
                .par_iter()
                .map(|&strategy| {
                    let m = run_prepared(&scenario, &table, cfg.clone(), strategy, &matrix.options)?;
                    Ok(CellResult {
                        label: ms.label.clone(),
                        seed,
                        strategy,
                        requests: m.requests,
                        admitted: m.admitted_total,
                        first_rejection: m.first_rejection_index,
                        mean_admission_us: m.admission_time.mean_s * 1e6,
                        first_bottleneck_group: m.first_bottleneck_group(),
                        final_bottleneck_ports: m
                            .groups
                            .last()
                            .map(|g| g.bottleneck_port_count)
                            .unwrap_or(0),
                    })
                })
                .collect::<Result<Vec<_>, HarnessError>>()
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Writes the comparison rows to `dir/compare.csv`.
pub fn write_comparison(rows: &[CellResult], dir: &Path) -> Result<PathBuf, HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("compare.csv");
    write_csv(&path, rows)?;
    Ok(path)
}

//! Experiment inputs: Erdős–Rényi topologies with random flow sets, the
//! three realistic cases, and the versioned scenario file that drives runs.
//!
//! All randomness comes from `ChaCha8Rng` seeded with `seed_from_u64(seed)`.
//! Independent streams keep the parts apart: stream 1 draws the topology,
//! stream 2 the flows and stream 3 the add/remove interleaving.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ClassConfig, Flow, FlowId, GraphBuilder, ModelError, NetworkGraph, NodeId, NodeKind};

pub const TOPOLOGY_STREAM: u64 = 1;
pub const FLOW_STREAM: u64 = 2;
pub const CHURN_STREAM: u64 = 3;

/// Attempts at drawing a connected switch graph before giving up.
pub const MAX_TOPOLOGY_RETRIES: usize = 1000;

pub const SCENARIO_FORMAT: &str = "tsnac-scenario";
pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("no connected switch graph after {0} attempts (p too small?)")]
    Disconnected(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("scenario file: {0}")]
    Format(String),
    #[error("event {index}: {reason}")]
    InvalidEvent { index: usize, reason: String },
    #[error("unknown realistic case '{0}' (automotive|space|orion)")]
    UnknownCase(String),
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Parameters of a synthetic experiment case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_sw: usize,
    pub n_es: usize,
    /// Switch-to-switch link probability.
    pub p: f64,
    pub n_flows: usize,
    /// Frame size range in bytes, inclusive.
    pub size_bytes: (u32, u32),
    /// Period range in seconds.
    pub period: (f64, f64),
    /// End-to-end deadline range in seconds.
    pub deadline: (f64, f64),
    pub n_avb: u8,
    pub idsl_max_fraction: f64,
    /// Link rate in bits/second.
    pub link_rate: f64,
    pub k: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_sw: 10,
            n_es: 50,
            p: 0.6,
            n_flows: 400,
            size_bytes: (64, 1518),
            period: (2e-3, 9e-3),
            deadline: (2e-3, 9e-3),
            n_avb: 2,
            idsl_max_fraction: 0.75,
            link_rate: 1e8,
            k: crate::routing::DEFAULT_K,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::InvalidSpec(m.to_string()));
        if self.n_sw < 2 {
            return bad("need at least two switches");
        }
        if self.n_es < 2 {
            return bad("need at least two end systems");
        }
        if !(0.0..=1.0).contains(&self.p) {
            return bad("p must be in [0, 1]");
        }
        let (lo, hi) = self.size_bytes;
        if lo == 0 || lo > hi {
            return bad("size range must be nonempty and positive");
        }
        for (name, (lo, hi)) in [("period", self.period), ("deadline", self.deadline)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(ScenarioError::InvalidSpec(format!("{name} range must be nonempty and positive")));
            }
        }
        if !(self.link_rate > 0.0) {
            return bad("link rate must be positive");
        }
        if self.k == 0 {
            return bad("k must be positive");
        }
        self.class_config().validate()?;
        Ok(())
    }

    pub fn class_config(&self) -> ClassConfig {
        ClassConfig {
            n_avb: self.n_avb,
            idsl_max_fraction: self.idsl_max_fraction,
            l_max: self.size_bytes.1 as f64 * 8.0,
            l_be_max: self.size_bytes.1 as f64 * 8.0,
        }
    }
}

/// Parses `sw=22,es=110,p=0.6,flows=800,seed=7` style overrides of the
/// defaults. Also accepts `navb`, `k`, `rate` and `idsl`.
impl FromStr for SyntheticSpec {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut spec = SyntheticSpec::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| ScenarioError::InvalidSpec(format!("expected key=value, got '{part}'")))?;
            let err = |_| ScenarioError::InvalidSpec(format!("bad value for {key}: '{value}'"));
            match key.trim() {
                "sw" => spec.n_sw = value.parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
                "es" => spec.n_es = value.parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
                "flows" => spec.n_flows = value.parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
                "seed" => spec.seed = value.parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
                "navb" => spec.n_avb = value.parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
                "k" => spec.k = value.parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
                "p" => spec.p = value.parse().map_err(|e: std::num::ParseFloatError| err(e.to_string()))?,
                "rate" => spec.link_rate = value.parse().map_err(|e: std::num::ParseFloatError| err(e.to_string()))?,
                "idsl" => {
                    spec.idsl_max_fraction =
                        value.parse().map_err(|e: std::num::ParseFloatError| err(e.to_string()))?
                }
                other => return Err(ScenarioError::InvalidSpec(format!("unknown key '{other}'"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn switch_graph_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Random ER topology: switches `0..n_sw`, then end systems. Every physical
/// connection becomes two directed links.
pub fn gen_er_topology(spec: &SyntheticSpec) -> Result<NetworkGraph, ScenarioError> {
    spec.validate()?;
    let mut rng = rng_for(spec.seed, TOPOLOGY_STREAM);
    let n = spec.n_sw;
    let mut edges = Vec::new();
    let mut connected = false;
    for _ in 0..MAX_TOPOLOGY_RETRIES {
        edges.clear();
        for a in 0..n {
            for b in a + 1..n {
                if rng.gen_bool(spec.p) {
                    edges.push((a, b));
                }
            }
        }
        if switch_graph_connected(n, &edges) {
            connected = true;
            break;
        }
    }
    if !connected {
        return Err(ScenarioError::Disconnected(MAX_TOPOLOGY_RETRIES));
    }

    let mut b = GraphBuilder::new();
    let switches: Vec<NodeId> = (0..n)
        .map(|i| b.node(NodeKind::Switch, Some(format!("SW{}", i + 1))))
        .collect();
    let ends: Vec<NodeId> = (0..spec.n_es)
        .map(|i| b.node(NodeKind::EndSystem, Some(format!("ES{}", i + 1))))
        .collect();
    for &(x, y) in &edges {
        b.bidirectional(switches[x], switches[y], spec.link_rate);
    }
    let mut order = switches.clone();
    order.shuffle(&mut rng);
    for (i, &es) in ends.iter().enumerate() {
        b.bidirectional(es, order[i % n], spec.link_rate);
    }
    Ok(b.build()?)
}

/// Random flows between end systems attached to different switches, all in
/// class 1 until [`assign_classes`] is applied. Ids run from 0.
pub fn gen_flows(spec: &SyntheticSpec, graph: &NetworkGraph) -> Result<Vec<Flow>, ScenarioError> {
    spec.validate()?;
    let ends: Vec<NodeId> = graph.end_systems().collect();
    let distinct_switches: BTreeSet<Option<NodeId>> =
        ends.iter().map(|&e| graph.attached_switch(e)).collect();
    if distinct_switches.len() < 2 {
        return Err(ScenarioError::InvalidSpec(
            "end systems hang off fewer than two switches".into(),
        ));
    }
    let mut rng = rng_for(spec.seed, FLOW_STREAM);
    let mut flows = Vec::with_capacity(spec.n_flows);
    for id in 0..spec.n_flows {
        let bytes = rng.gen_range(spec.size_bytes.0..=spec.size_bytes.1);
        let period = rng.gen_range(spec.period.0..=spec.period.1);
        let deadline = rng.gen_range(spec.deadline.0..=spec.deadline.1);
        let (src, dst) = loop {
            let s = *ends.choose(&mut rng).expect("end systems exist");
            let d = *ends.choose(&mut rng).expect("end systems exist");
            if s != d && graph.attached_switch(s) != graph.attached_switch(d) {
                break (s, d);
            }
        };
        flows.push(Flow {
            id: FlowId(id as u64),
            src,
            dst,
            size: bytes as f64 * 8.0,
            period,
            deadline,
            class: 1,
        });
    }
    Ok(flows)
}

/// Sorts by deadline (ties by id), cuts into `n_avb` groups whose sizes
/// differ by at most one and gives the tightest group class 1. The input
/// order is preserved.
pub fn assign_classes(flows: &mut [Flow], n_avb: u8) {
    let n = flows.len();
    let groups = n_avb.max(1) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        flows[a]
            .deadline
            .total_cmp(&flows[b].deadline)
            .then(flows[a].id.cmp(&flows[b].id))
    });
    for (rank, &idx) in order.iter().enumerate() {
        flows[idx].class = (rank * groups / n.max(1)) as u8 + 1;
    }
}

/// The three realistic cases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RealisticCase {
    Automotive,
    #[serde(rename = "space")]
    SpaceLauncher,
    #[serde(rename = "orion")]
    OrionCev,
}

impl RealisticCase {
    pub const ALL: [RealisticCase; 3] = [
        RealisticCase::Automotive,
        RealisticCase::SpaceLauncher,
        RealisticCase::OrionCev,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RealisticCase::Automotive => "automotive",
            RealisticCase::SpaceLauncher => "space",
            RealisticCase::OrionCev => "orion",
        }
    }

    fn data(&self) -> &'static str {
        match self {
            RealisticCase::Automotive => include_str!("../data/automotive.json"),
            RealisticCase::SpaceLauncher => include_str!("../data/space.json"),
            RealisticCase::OrionCev => include_str!("../data/orion.json"),
        }
    }

    /// Rows of the case's flow table.
    pub fn templates(&self) -> &'static [FlowTemplate] {
        match self {
            RealisticCase::Automotive => AUTOMOTIVE,
            RealisticCase::SpaceLauncher => SPACE,
            RealisticCase::OrionCev => ORION,
        }
    }
}

impl fmt::Display for RealisticCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RealisticCase {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "automotive" => Ok(RealisticCase::Automotive),
            "space" | "spacelauncher" | "space-launcher" => Ok(RealisticCase::SpaceLauncher),
            "orion" | "orioncev" | "orion-cev" => Ok(RealisticCase::OrionCev),
            other => Err(ScenarioError::UnknownCase(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SizeSpec {
    /// Uniform over an inclusive byte range.
    Range(u32, u32),
    /// One of the listed byte sizes, equally likely.
    Choice(&'static [u32]),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Endpoints {
    /// Named source and destination.
    Fixed(&'static str, &'static str),
    /// Any end system whose name starts with the first prefix to any whose
    /// name starts with the second.
    Roles(&'static str, &'static str),
    /// Any two end systems.
    Any,
}

/// One row of a realistic flow table. Times in microseconds, shares in
/// requests per thousand.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowTemplate {
    pub class: u8,
    pub size: SizeSpec,
    pub period_us: f64,
    /// Inclusive deadline range; equal bounds for a fixed deadline.
    pub deadline_us: (f64, f64),
    pub endpoints: Endpoints,
    pub per_mille: u32,
}

const fn row(
    class: u8,
    size: SizeSpec,
    period_us: f64,
    deadline_us: (f64, f64),
    endpoints: Endpoints,
    per_mille: u32,
) -> FlowTemplate {
    FlowTemplate {
        class,
        size,
        period_us,
        deadline_us,
        endpoints,
        per_mille,
    }
}

const SMALL: SizeSpec = SizeSpec::Choice(&[128, 256]);
const CAMERA: SizeSpec = SizeSpec::Choice(&[1446]);
const ANY_SIZE: SizeSpec = SizeSpec::Range(64, 1518);

static AUTOMOTIVE: &[FlowTemplate] = &[
    row(1, SizeSpec::Range(256, 1024), 10000.0, (10000.0, 10000.0), Endpoints::Roles("ECU", "DM"), 408),
    row(2, SMALL, 10000.0, (10000.0, 10000.0), Endpoints::Roles("CAM", "DM"), 296),
    row(3, CAMERA, 1100.0, (30000.0, 30000.0), Endpoints::Fixed("CAM1", "DM1"), 37),
    row(3, CAMERA, 1100.0, (30000.0, 30000.0), Endpoints::Fixed("CAM2", "DM1"), 37),
    row(3, CAMERA, 1100.0, (30000.0, 30000.0), Endpoints::Fixed("CAM3", "DM2"), 37),
    row(3, CAMERA, 1100.0, (30000.0, 30000.0), Endpoints::Fixed("CAM4", "DM2"), 37),
    row(3, CAMERA, 1100.0, (30000.0, 30000.0), Endpoints::Fixed("CAM4", "Display1"), 37),
    row(3, CAMERA, 1100.0, (30000.0, 30000.0), Endpoints::Fixed("CAM4", "Display2"), 37),
    row(4, CAMERA, 1100.0, (30000.0, 30000.0), Endpoints::Fixed("CAM4", "DM3"), 74),
];

static SPACE: &[FlowTemplate] = &[
    row(1, SizeSpec::Range(256, 1024), 10000.0, (10000.0, 10000.0), Endpoints::Any, 210),
    row(2, SMALL, 10000.0, (10000.0, 10000.0), Endpoints::Any, 780),
    row(3, CAMERA, 1100.0, (30000.0, 30000.0), Endpoints::Any, 10),
];

static ORION: &[FlowTemplate] = &[
    row(1, ANY_SIZE, 4000.0, (6800.0, 7300.0), Endpoints::Any, 60),
    row(1, ANY_SIZE, 8000.0, (8700.0, 15000.0), Endpoints::Any, 140),
    row(1, ANY_SIZE, 16000.0, (16000.0, 30000.0), Endpoints::Any, 90),
    row(2, ANY_SIZE, 16000.0, (17000.0, 32000.0), Endpoints::Any, 130),
    row(2, ANY_SIZE, 32000.0, (34000.0, 62000.0), Endpoints::Any, 140),
    row(2, ANY_SIZE, 64000.0, (67000.0, 68000.0), Endpoints::Any, 20),
    row(3, ANY_SIZE, 64000.0, (70000.0, 130000.0), Endpoints::Any, 240),
    row(3, ANY_SIZE, 128000.0, (170000.0, 190000.0), Endpoints::Any, 30),
    row(4, ANY_SIZE, 128000.0, (170000.0, 370000.0), Endpoints::Any, 150),
];

#[derive(Deserialize)]
struct TopologyData {
    name: String,
    n_avb: u8,
    link_rate: f64,
    switches: Vec<String>,
    end_systems: Vec<(String, String)>,
    switch_links: Vec<(String, String)>,
    rate_overrides: Vec<(String, String, f64)>,
}

/// Fixed topology and class configuration of a realistic case.
pub fn realistic_topology(case: RealisticCase) -> Result<(NetworkGraph, ClassConfig), ScenarioError> {
    let data: TopologyData =
        serde_json::from_str(case.data()).map_err(|e| ScenarioError::Format(e.to_string()))?;
    debug_assert_eq!(data.name, case.as_str());
    let mut overrides = BTreeMap::new();
    for (a, b, rate) in &data.rate_overrides {
        overrides.insert((a.clone(), b.clone()), *rate);
        overrides.insert((b.clone(), a.clone()), *rate);
    }
    let rate_of = |a: &str, b: &str| {
        overrides
            .get(&(a.to_string(), b.to_string()))
            .copied()
            .unwrap_or(data.link_rate)
    };

    let mut b = GraphBuilder::new();
    let mut ids = BTreeMap::new();
    for s in &data.switches {
        ids.insert(s.clone(), b.node(NodeKind::Switch, Some(s.clone())));
    }
    for (e, _) in &data.end_systems {
        ids.insert(e.clone(), b.node(NodeKind::EndSystem, Some(e.clone())));
    }
    let lookup = |name: &str| {
        ids.get(name)
            .copied()
            .ok_or_else(|| ScenarioError::Format(format!("unknown node '{name}' in {}", data.name)))
    };
    for (x, y) in &data.switch_links {
        b.bidirectional(lookup(x)?, lookup(y)?, rate_of(x, y));
    }
    for (e, s) in &data.end_systems {
        b.bidirectional(lookup(e)?, lookup(s)?, rate_of(e, s));
    }
    let graph = b.build()?;
    let class_config = ClassConfig {
        n_avb: data.n_avb,
        idsl_max_fraction: 0.75,
        l_max: 1518.0 * 8.0,
        l_be_max: 1518.0 * 8.0,
    };
    Ok((graph, class_config))
}

/// Seeded stream of flow requests for a realistic case.
///
/// Rows are drawn in blocks of 1000 requests that contain each row exactly
/// `per_mille` times in shuffled order, so the class mix is exact at every
/// block boundary.
#[derive(Clone, Debug)]
pub struct RealisticFlowGenerator {
    graph: NetworkGraph,
    templates: &'static [FlowTemplate],
    rng: ChaCha8Rng,
    block: Vec<usize>,
    next_id: u64,
}

/// Builds the topology of `case` and a flow generator seeded with `seed`.
pub fn load_realistic(
    case: RealisticCase,
    seed: u64,
) -> Result<(NetworkGraph, ClassConfig, RealisticFlowGenerator), ScenarioError> {
    let (graph, cc) = realistic_topology(case)?;
    let templates = case.templates();
    for t in templates {
        if let Endpoints::Fixed(s, d) = t.endpoints {
            for n in [s, d] {
                if graph.node_by_name(n).is_none() {
                    return Err(ScenarioError::Format(format!("template endpoint '{n}' missing")));
                }
            }
        }
    }
    let generator = RealisticFlowGenerator {
        graph: graph.clone(),
        templates,
        rng: rng_for(seed, FLOW_STREAM),
        block: Vec::new(),
        next_id: 0,
    };
    Ok((graph, cc, generator))
}

impl RealisticFlowGenerator {
    fn refill(&mut self) {
        let mut block: Vec<usize> = self
            .templates
            .iter()
            .enumerate()
            .flat_map(|(i, t)| std::iter::repeat_n(i, t.per_mille as usize))
            .collect();
        block.shuffle(&mut self.rng);
        block.reverse();
        self.block = block;
    }

    fn pick(&mut self, pred: impl Fn(&str) -> bool) -> Vec<NodeId> {
        self.graph
            .end_systems()
            .filter(|&e| {
                self.graph
                    .node(e)
                    .and_then(|n| n.name.as_deref())
                    .is_some_and(&pred)
            })
            .collect()
    }

    fn endpoints(&mut self, e: Endpoints) -> (NodeId, NodeId) {
        let (srcs, dsts) = match e {
            Endpoints::Fixed(s, d) => {
                let s = self.graph.node_by_name(s).expect("checked at load");
                let d = self.graph.node_by_name(d).expect("checked at load");
                return (s, d);
            }
            Endpoints::Roles(a, b) => (self.pick(|n| n.starts_with(a)), self.pick(|n| n.starts_with(b))),
            Endpoints::Any => {
                let all: Vec<NodeId> = self.graph.end_systems().collect();
                (all.clone(), all)
            }
        };
        loop {
            let s = *srcs.choose(&mut self.rng).expect("role has members");
            let d = *dsts.choose(&mut self.rng).expect("role has members");
            if s != d && self.graph.attached_switch(s) != self.graph.attached_switch(d) {
                return (s, d);
            }
        }
    }

    /// Next request and the index of the table row it came from.
    pub fn next_with_row(&mut self) -> (Flow, usize) {
        if self.block.is_empty() {
            self.refill();
        }
        let idx = self.block.pop().expect("refilled block is nonempty");
        let t = self.templates[idx];
        let bytes = match t.size {
            SizeSpec::Range(lo, hi) => self.rng.gen_range(lo..=hi),
            SizeSpec::Choice(options) => *options.choose(&mut self.rng).expect("options"),
        };
        let deadline_us = if t.deadline_us.0 == t.deadline_us.1 {
            t.deadline_us.0
        } else {
            self.rng.gen_range(t.deadline_us.0..=t.deadline_us.1)
        };
        let (src, dst) = self.endpoints(t.endpoints);
        let flow = Flow {
            id: FlowId(self.next_id),
            src,
            dst,
            size: bytes as f64 * 8.0,
            period: t.period_us * 1e-6,
            deadline: deadline_us * 1e-6,
            class: t.class,
        };
        self.next_id += 1;
        (flow, idx)
    }

    pub fn take_flows(&mut self, n: usize) -> Vec<Flow> {
        (0..n).map(|_| self.next_with_row().0).collect()
    }
}

impl Iterator for RealisticFlowGenerator {
    type Item = Flow;

    fn next(&mut self) -> Option<Flow> {
        Some(self.next_with_row().0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Event {
    Add { flow: Flow },
    Remove { flow_id: FlowId },
}

/// Topology, class configuration and the event sequence of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub graph: NetworkGraph,
    pub class_config: ClassConfig,
    /// Candidate routes per pair.
    pub k: usize,
    pub events: Vec<Event>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    scenario: Scenario,
}

impl Scenario {
    /// Synthetic case with one add event per generated flow.
    pub fn synthetic(spec: &SyntheticSpec) -> Result<Self, ScenarioError> {
        let graph = gen_er_topology(spec)?;
        let mut flows = gen_flows(spec, &graph)?;
        assign_classes(&mut flows, spec.n_avb);
        Ok(Scenario {
            name: format!(
                "er-{}sw{}es-p{}-f{}-s{}",
                spec.n_sw, spec.n_es, spec.p, spec.n_flows, spec.seed
            ),
            graph,
            class_config: spec.class_config(),
            k: spec.k,
            events: flows.into_iter().map(|flow| Event::Add { flow }).collect(),
        })
    }

    /// Realistic case with `n_flows` add events.
    pub fn realistic(case: RealisticCase, n_flows: usize, seed: u64) -> Result<Self, ScenarioError> {
        let (graph, class_config, mut generator) = load_realistic(case, seed)?;
        let events = generator
            .take_flows(n_flows)
            .into_iter()
            .map(|flow| Event::Add { flow })
            .collect();
        Ok(Scenario {
            name: format!("{}-f{}-s{}", case.as_str(), n_flows, seed),
            graph,
            class_config,
            k: crate::routing::DEFAULT_K,
            events,
        })
    }

    /// Interleaves removals into the add sequence: before each add, with
    /// probability `remove_prob`, one uniformly chosen earlier flow that has
    /// not been removed yet is removed.
    pub fn with_churn(mut self, seed: u64, remove_prob: f64) -> Self {
        let mut rng = rng_for(seed, CHURN_STREAM);
        let mut live: Vec<FlowId> = Vec::new();
        let mut out = Vec::with_capacity(self.events.len() * 2);
        for ev in self.events.drain(..) {
            if let Event::Add { flow } = &ev {
                if !live.is_empty() && rng.gen_bool(remove_prob) {
                    let i = rng.gen_range(0..live.len());
                    out.push(Event::Remove {
                        flow_id: live.swap_remove(i),
                    });
                }
                live.push(flow.id);
            }
            out.push(ev);
        }
        self.events = out;
        self
    }

    pub fn flows(&self) -> impl Iterator<Item = &Flow> {
        self.events.iter().filter_map(|e| match e {
            Event::Add { flow } => Some(flow),
            Event::Remove { .. } => None,
        })
    }

    /// Distinct (source, destination) pairs of the add events.
    pub fn pairs(&self) -> Vec<(NodeId, NodeId)> {
        let set: BTreeSet<(NodeId, NodeId)> = self.flows().map(|f| (f.src, f.dst)).collect();
        set.into_iter().collect()
    }

    /// Flow ids are unique, flows are valid and removals only name flows
    /// added earlier and not yet removed.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.class_config.validate()?;
        let mut added = BTreeSet::new();
        let mut live = BTreeSet::new();
        for (index, ev) in self.events.iter().enumerate() {
            match ev {
                Event::Add { flow } => {
                    flow.validate(&self.graph, &self.class_config)?;
                    if !added.insert(flow.id) {
                        return Err(ScenarioError::InvalidEvent {
                            index,
                            reason: format!("flow id {} added twice", flow.id),
                        });
                    }
                    live.insert(flow.id);
                }
                Event::Remove { flow_id } => {
                    if !live.remove(flow_id) {
                        return Err(ScenarioError::InvalidEvent {
                            index,
                            reason: format!("removal of flow {flow_id} that is not live"),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, ScenarioError> {
        let file = ScenarioFile {
            format: SCENARIO_FORMAT.into(),
            version: SCENARIO_VERSION,
            scenario: self.clone(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| ScenarioError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| ScenarioError::Format(e.to_string()))?;
        if file.format != SCENARIO_FORMAT || file.version != SCENARIO_VERSION {
            return Err(ScenarioError::Format(format!(
                "unsupported scenario format {} v{}",
                file.format, file.version
            )));
        }
        file.scenario.validate()?;
        Ok(file.scenario)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_split() {
        let mut flows: Vec<Flow> = [2e-3, 3e-3, 7e-3, 9e-3]
            .iter()
            .enumerate()
            .map(|(i, &d)| Flow {
                id: FlowId(i as u64),
                src: NodeId(0),
                dst: NodeId(1),
                size: 512.0,
                period: 1e-3,
                deadline: d,
                class: 1,
            })
            .collect();
        assign_classes(&mut flows, 2);
        let classes: Vec<u8> = flows.iter().map(|f| f.class).collect();
        assert_eq!(classes, vec![1, 1, 2, 2]);
    }

    #[test]
    fn spec_parsing() {
        let s: SyntheticSpec = "sw=22,es=110,p=0.6,flows=800,seed=5".parse().unwrap();
        assert_eq!((s.n_sw, s.n_es, s.n_flows, s.seed), (22, 110, 800, 5));
        assert!("sw=22,bogus=1".parse::<SyntheticSpec>().is_err());
    }

    #[test]
    fn complete_graph_at_p_one() {
        let spec = SyntheticSpec {
            n_sw: 5,
            n_es: 5,
            p: 1.0,
            ..Default::default()
        };
        let g = gen_er_topology(&spec).unwrap();
        let sw_links = g
            .links()
            .iter()
            .filter(|l| g.is_switch(l.id.from()) && g.is_switch(l.id.to()))
            .count();
        assert_eq!(sw_links, 5 * 4);
    }

    #[test]
    fn realistic_counts() {
        for (case, es, sw, phys) in [
            (RealisticCase::Automotive, 14, 5, 18),
            (RealisticCase::SpaceLauncher, 18, 18, 42),
            (RealisticCase::OrionCev, 31, 15, 55),
        ] {
            let (g, _) = realistic_topology(case).unwrap();
            assert_eq!(g.end_systems().count(), es);
            assert_eq!(g.switches().count(), sw);
            assert_eq!(g.links().len(), 2 * phys);
        }
    }
}

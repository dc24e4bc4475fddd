//! Domain types: topology, flows, per-port class state and the whole-network
//! configuration the admission engine mutates.
//!
//! Every quantity is stored in SI base units: frame sizes and bursts in bits,
//! times in seconds, rates and idle slopes in bits/second.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netcalc::{self, PortParams};

/// Relative tolerance used when checking delay bounds and deadline sums.
pub const DELAY_TOLERANCE: f64 = 1e-9;

/// Relative tolerance used for cached aggregate sums and the stability check.
pub const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A directed link `(from, to)`, which also names the egress port at `from`.
///
/// Ordering is lexicographic on `(from, to)`; candidate routes rely on it for
/// tie-breaking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkId(pub NodeId, pub NodeId);

impl LinkId {
    pub fn new(from: NodeId, to: NodeId) -> Self {
        LinkId(from, to)
    }

    pub fn from(&self) -> NodeId {
        self.0
    }

    pub fn to(&self) -> NodeId {
        self.1
    }

    pub fn reversed(&self) -> LinkId {
        LinkId(self.1, self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.0, self.1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlowId(pub u64);

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    EndSystem,
    Switch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    /// Transmission rate in bits/second.
    pub rate: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("link {0} references unknown node {1}")]
    UnknownNode(LinkId, NodeId),
    #[error("link {0} connects a node to itself")]
    SelfLoop(LinkId),
    #[error("duplicate link {0}")]
    DuplicateLink(LinkId),
    #[error("link {0} has non-positive rate {1}")]
    NonPositiveRate(LinkId, f64),
    #[error("invalid class configuration: {0}")]
    InvalidClassConfig(String),
    #[error("invalid flow {id}: {reason}")]
    InvalidFlow { id: FlowId, reason: String },
    #[error("inconsistent configuration: {0}")]
    Inconsistent(String),
    #[error("serialization: {0}")]
    Serde(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GraphData {
    nodes: Vec<Node>,
    links: Vec<Link>,
}

/// Directed network graph of end systems and switches.
///
/// Links are kept in insertion order; that order is the port index used by
/// [`NetworkConfig::ports`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "GraphData", into = "GraphData")]
pub struct NetworkGraph {
    nodes: Vec<Node>,
    links: Vec<Link>,
    node_index: HashMap<NodeId, usize>,
    link_index: HashMap<LinkId, usize>,
    // Per node, outgoing link indices sorted by destination id.
    out_links: Vec<Vec<usize>>,
    in_links: Vec<Vec<usize>>,
}

impl PartialEq for NetworkGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.links == other.links
    }
}

impl TryFrom<GraphData> for NetworkGraph {
    type Error = ModelError;

    fn try_from(data: GraphData) -> Result<Self, Self::Error> {
        NetworkGraph::new(data.nodes, data.links)
    }
}

impl From<NetworkGraph> for GraphData {
    fn from(g: NetworkGraph) -> Self {
        GraphData {
            nodes: g.nodes,
            links: g.links,
        }
    }
}

impl NetworkGraph {
    pub fn new(nodes: Vec<Node>, links: Vec<Link>) -> Result<Self, ModelError> {
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if node_index.insert(n.id, i).is_some() {
                return Err(ModelError::DuplicateNode(n.id));
            }
        }
        let mut link_index = HashMap::with_capacity(links.len());
        let mut out_links = vec![Vec::new(); nodes.len()];
        let mut in_links = vec![Vec::new(); nodes.len()];
        for (i, l) in links.iter().enumerate() {
            if l.id.from() == l.id.to() {
                return Err(ModelError::SelfLoop(l.id));
            }
            let from = *node_index
                .get(&l.id.from())
                .ok_or(ModelError::UnknownNode(l.id, l.id.from()))?;
            let to = *node_index
                .get(&l.id.to())
                .ok_or(ModelError::UnknownNode(l.id, l.id.to()))?;
            if !(l.rate > 0.0 && l.rate.is_finite()) {
                return Err(ModelError::NonPositiveRate(l.id, l.rate));
            }
            if link_index.insert(l.id, i).is_some() {
                return Err(ModelError::DuplicateLink(l.id));
            }
            out_links[from].push(i);
            in_links[to].push(i);
        }
        for list in out_links.iter_mut() {
            list.sort_by_key(|&i| links[i].id);
        }
        for list in in_links.iter_mut() {
            list.sort_by_key(|&i| links[i].id);
        }
        Ok(NetworkGraph {
            nodes,
            links,
            node_index,
            link_index,
            out_links,
            in_links,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.node_index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn node_position(&self, id: NodeId) -> Option<usize> {
        self.node_index.get(&id).copied()
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        self.node_index.contains_key(&id)
    }

    pub fn is_end_system(&self, id: NodeId) -> bool {
        matches!(self.node(id), Some(n) if n.kind == NodeKind::EndSystem)
    }

    pub fn is_switch(&self, id: NodeId) -> bool {
        matches!(self.node(id), Some(n) if n.kind == NodeKind::Switch)
    }

    pub fn link_position(&self, id: LinkId) -> Option<usize> {
        self.link_index.get(&id).copied()
    }

    pub fn link(&self, id: LinkId) -> Option<&Link> {
        self.link_position(id).map(|i| &self.links[i])
    }

    /// Outgoing links of `node` (as link positions), sorted by link id.
    pub fn out_links(&self, node: NodeId) -> &[usize] {
        self.node_index
            .get(&node)
            .map(|&i| self.out_links[i].as_slice())
            .unwrap_or(&[])
    }

    /// Incoming links of `node` (as link positions), sorted by link id.
    pub fn in_links(&self, node: NodeId) -> &[usize] {
        self.node_index
            .get(&node)
            .map(|&i| self.in_links[i].as_slice())
            .unwrap_or(&[])
    }

    pub fn end_systems(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::EndSystem)
            .map(|n| n.id)
    }

    pub fn switches(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Switch)
            .map(|n| n.id)
    }

    /// The switch an end system hangs off (smallest id if multi-homed).
    pub fn attached_switch(&self, es: NodeId) -> Option<NodeId> {
        self.out_links(es)
            .iter()
            .map(|&i| self.links[i].id.to())
            .find(|&n| self.is_switch(n))
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes
            .iter()
            .find(|n| n.name.as_deref() == Some(name))
            .map(|n| n.id)
    }
}

/// Incremental builder that adds both directions for each physical link.
#[derive(Default, Debug)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    links: Vec<Link>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&mut self, kind: NodeKind, name: Option<String>) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { id, kind, name });
        id
    }

    pub fn switch(&mut self) -> NodeId {
        self.node(NodeKind::Switch, None)
    }

    pub fn end_system(&mut self) -> NodeId {
        self.node(NodeKind::EndSystem, None)
    }

    pub fn link(&mut self, from: NodeId, to: NodeId, rate: f64) -> &mut Self {
        self.links.push(Link {
            id: LinkId(from, to),
            rate,
        });
        self
    }

    pub fn bidirectional(&mut self, a: NodeId, b: NodeId, rate: f64) -> &mut Self {
        self.link(a, b, rate).link(b, a, rate)
    }

    pub fn build(self) -> Result<NetworkGraph, ModelError> {
        NetworkGraph::new(self.nodes, self.links)
    }
}

/// An AVB flow request `<src, dst, size, period, deadline>` plus its class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub id: FlowId,
    pub src: NodeId,
    pub dst: NodeId,
    /// Frame size in bits.
    pub size: f64,
    /// Frame interval in seconds.
    pub period: f64,
    /// End-to-end deadline in seconds.
    pub deadline: f64,
    /// AVB class, 1 is the highest priority.
    pub class: u8,
}

impl Flow {
    /// Committed burst size (one frame).
    pub fn burst(&self) -> f64 {
        self.size
    }

    /// Committed information rate.
    pub fn rate(&self) -> f64 {
        self.size / self.period
    }

    pub fn class_index(&self) -> usize {
        self.class as usize - 1
    }

    /// Checks the flow against the graph and class configuration.
    pub fn validate(&self, graph: &NetworkGraph, classes: &ClassConfig) -> Result<(), ModelError> {
        let bad = |reason: &str| ModelError::InvalidFlow {
            id: self.id,
            reason: reason.to_string(),
        };
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.size) {
            return Err(bad("frame size must be positive"));
        }
        if !positive(self.period) {
            return Err(bad("period must be positive"));
        }
        if !positive(self.deadline) {
            return Err(bad("deadline must be positive"));
        }
        if self.src == self.dst {
            return Err(bad("source equals destination"));
        }
        if self.class == 0 || self.class > classes.n_avb {
            return Err(bad("class out of range"));
        }
        if self.size > classes.l_max {
            return Err(bad("frame larger than the network-wide maximum"));
        }
        if !graph.is_end_system(self.src) || !graph.is_end_system(self.dst) {
            return Err(bad("source and destination must be end systems"));
        }
        Ok(())
    }
}

/// Per-network AVB class configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassConfig {
    /// Number of AVB classes, 1..=8.
    pub n_avb: u8,
    /// Upper bound on the summed idle slopes of a port as a fraction of its rate.
    pub idsl_max_fraction: f64,
    /// Network-wide maximum frame size in bits.
    pub l_max: f64,
    /// Maximum best-effort frame size in bits.
    pub l_be_max: f64,
}

impl Default for ClassConfig {
    fn default() -> Self {
        ClassConfig {
            n_avb: 2,
            idsl_max_fraction: 0.75,
            l_max: 1518.0 * 8.0,
            l_be_max: 1518.0 * 8.0,
        }
    }
}

impl ClassConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(1..=8).contains(&self.n_avb) {
            return Err(ModelError::InvalidClassConfig(format!(
                "n_avb must be in [1, 8], got {}",
                self.n_avb
            )));
        }
        if !(self.idsl_max_fraction > 0.0 && self.idsl_max_fraction <= 1.0) {
            return Err(ModelError::InvalidClassConfig(format!(
                "idsl_max_fraction must be in (0, 1], got {}",
                self.idsl_max_fraction
            )));
        }
        if !(self.l_max > 0.0 && self.l_be_max >= 0.0 && self.l_max >= self.l_be_max) {
            return Err(ModelError::InvalidClassConfig(
                "l_max must be positive and at least l_be_max".into(),
            ));
        }
        Ok(())
    }

    pub fn idsl_max(&self, link_rate: f64) -> f64 {
        self.idsl_max_fraction * link_rate
    }

    pub fn classes(&self) -> usize {
        self.n_avb as usize
    }
}

/// State of one AVB class at one egress port.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortClassState {
    /// Local deadline in seconds.
    pub deadline: f64,
    /// Reserved idle slope in bits/second.
    pub idle_slope: f64,
    pub flows: BTreeSet<FlowId>,
    /// Deadline restored when the class empties.
    pub initial_deadline: f64,
    /// Cached sum of committed bursts of `flows`.
    pub burst_sum: f64,
    /// Cached sum of committed rates of `flows`.
    pub rate_sum: f64,
}

impl PortClassState {
    pub fn empty(initial_deadline: f64) -> Self {
        PortClassState {
            deadline: initial_deadline,
            idle_slope: 0.0,
            flows: BTreeSet::new(),
            initial_deadline,
            burst_sum: 0.0,
            rate_sum: 0.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    pub fn arrival(&self) -> netcalc::AffineArrivalCurve {
        netcalc::AffineArrivalCurve {
            rate: self.rate_sum,
            burst: self.burst_sum,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortState {
    pub link: LinkId,
    pub classes: Vec<PortClassState>,
}

impl PortState {
    pub fn total_idle_slope(&self) -> f64 {
        self.classes.iter().map(|c| c.idle_slope).sum()
    }

    pub fn idle_slopes(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.idle_slope).collect()
    }

    pub fn deadlines(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.deadline).collect()
    }
}

/// An admitted flow with its route and per-hop local deadlines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub flow: Flow,
    pub route: Vec<LinkId>,
    /// Local deadline of this flow at each hop, aligned with `route`.
    pub per_hop_deadline: Vec<f64>,
}

/// Whole-network admission state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub graph: NetworkGraph,
    pub class_config: ClassConfig,
    /// One entry per graph link, in graph link order.
    pub ports: Vec<PortState>,
    pub admitted: BTreeMap<FlowId, FlowRecord>,
}

pub const CONFIG_FORMAT: &str = "tsnac-config";
pub const CONFIG_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ConfigFile {
    format: String,
    version: u32,
    config: NetworkConfig,
}

impl NetworkConfig {
    /// A configuration with no flows where every class of every port starts
    /// at the given initial deadline (indexed by class - 1) and zero idle slope.
    pub fn pristine(
        graph: NetworkGraph,
        class_config: ClassConfig,
        initial_deadlines: &[f64],
    ) -> Result<Self, ModelError> {
        class_config.validate()?;
        if initial_deadlines.len() != class_config.classes() {
            return Err(ModelError::InvalidClassConfig(format!(
                "expected {} initial deadlines, got {}",
                class_config.classes(),
                initial_deadlines.len()
            )));
        }
        if let Some(d) = initial_deadlines.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(ModelError::InvalidClassConfig(format!(
                "initial deadline must be positive, got {d}"
            )));
        }
        let ports = graph
            .links()
            .iter()
            .map(|l| PortState {
                link: l.id,
                classes: initial_deadlines
                    .iter()
                    .map(|&d| PortClassState::empty(d))
                    .collect(),
            })
            .collect();
        Ok(NetworkConfig {
            graph,
            class_config,
            ports,
            admitted: BTreeMap::new(),
        })
    }

    pub fn port(&self, link: LinkId) -> Option<&PortState> {
        self.graph.link_position(link).map(|i| &self.ports[i])
    }

    pub fn port_mut(&mut self, link: LinkId) -> Option<&mut PortState> {
        self.graph.link_position(link).map(|i| &mut self.ports[i])
    }

    pub fn port_params(&self, position: usize) -> PortParams {
        PortParams {
            link_rate: self.graph.links()[position].rate,
            l_max: self.class_config.l_max,
        }
    }

    pub fn idsl_max(&self, position: usize) -> f64 {
        self.class_config.idsl_max(self.graph.links()[position].rate)
    }

    /// `idSl_max - Σ idSl` at a port.
    pub fn unreserved_bandwidth(&self, position: usize) -> f64 {
        self.idsl_max(position) - self.ports[position].total_idle_slope()
    }

    /// Number of ports whose unreserved bandwidth is below `threshold * idSl_max`.
    pub fn bottleneck_ports(&self, threshold: f64) -> usize {
        (0..self.ports.len())
            .filter(|&p| self.unreserved_bandwidth(p) < threshold * self.idsl_max(p))
            .count()
    }

    pub fn is_admitted(&self, id: FlowId) -> bool {
        self.admitted.contains_key(&id)
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        let file = ConfigFile {
            format: CONFIG_FORMAT.into(),
            version: CONFIG_VERSION,
            config: self.clone(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| ModelError::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ConfigFile =
            serde_json::from_str(text).map_err(|e| ModelError::Serde(e.to_string()))?;
        if file.format != CONFIG_FORMAT || file.version != CONFIG_VERSION {
            return Err(ModelError::Serde(format!(
                "unsupported config format {} v{}",
                file.format, file.version
            )));
        }
        let cfg = file.config;
        cfg.class_config.validate()?;
        if cfg.ports.len() != cfg.graph.links().len()
            || cfg
                .ports
                .iter()
                .zip(cfg.graph.links())
                .any(|(p, l)| p.link != l.id || p.classes.len() != cfg.class_config.classes())
        {
            return Err(ModelError::Inconsistent(
                "port table does not match the graph links".into(),
            ));
        }
        Ok(cfg)
    }

    /// Checks every configuration invariant; see [`verify_config`].
    pub fn verify(&self) -> InvariantReport {
        verify_config(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// Σ idSl at the port exceeds idSl_max.
    PortOverbooked,
    /// idSl below the aggregate committed rate.
    Unstable,
    /// The delay bound exceeds the local deadline.
    DelayExceedsDeadline,
    /// The delay bound cannot be evaluated (saturated higher classes or zero idle slope).
    DelayUndefined,
    /// D_i differs from the minimum per-hop deadline of resident flows.
    DeadlineNotMinimum,
    NonPositiveDeadline,
    /// An empty class with nonzero idle slope or a deadline other than its initial one.
    EmptyClassNotReset,
    /// Cached burst or rate sums disagree with the resident flows.
    StaleAggregate,
    /// A resident flow id that is not admitted, or admitted in another class.
    UnknownResident,
    /// Per-hop deadlines of a flow exceed its end-to-end deadline.
    EndToEndExceeded,
    /// Route is not a simple path from source to destination, or does not
    /// match the per-hop deadline list.
    InvalidRoute,
    /// An admitted flow is missing from a port on its route.
    MissingResident,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub link: Option<LinkId>,
    pub class: Option<u8>,
    pub flow: Option<FlowId>,
    pub kind: ViolationKind,
    /// Size of the violation in the natural unit of the check (0 when not numeric).
    pub magnitude: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub violations: Vec<Violation>,
}

impl InvariantReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    fn push(
        &mut self,
        link: Option<LinkId>,
        class: Option<u8>,
        flow: Option<FlowId>,
        kind: ViolationKind,
        magnitude: f64,
    ) {
        self.violations.push(Violation {
            link,
            class,
            flow,
            kind,
            magnitude,
        });
    }
}

fn exceeds(value: f64, bound: f64, rel: f64) -> bool {
    value > bound + rel * bound.abs()
}

/// Checks every [`NetworkConfig`] invariant and returns all violations.
pub fn verify_config(cfg: &NetworkConfig) -> InvariantReport {
    let mut report = InvariantReport::default();

    for (pos, port) in cfg.ports.iter().enumerate() {
        let link = Some(port.link);
        let params = cfg.port_params(pos);
        let idsl_max = cfg.idsl_max(pos);
        let total = port.total_idle_slope();
        if total > idsl_max {
            report.push(link, None, None, ViolationKind::PortOverbooked, total - idsl_max);
        }
        let slopes = port.idle_slopes();
        for (ci, st) in port.classes.iter().enumerate() {
            let class = Some(ci as u8 + 1);
            if !(st.deadline > 0.0) {
                report.push(link, class, None, ViolationKind::NonPositiveDeadline, st.deadline);
            }

            let mut bursts = 0.0;
            let mut rates = 0.0;
            let mut min_deadline = f64::INFINITY;
            for id in &st.flows {
                let Some(rec) = cfg.admitted.get(id) else {
                    report.push(link, class, Some(*id), ViolationKind::UnknownResident, 0.0);
                    continue;
                };
                if rec.flow.class_index() != ci {
                    report.push(link, class, Some(*id), ViolationKind::UnknownResident, 0.0);
                }
                bursts += rec.flow.burst();
                rates += rec.flow.rate();
                match rec.route.iter().position(|l| *l == port.link) {
                    Some(h) if h < rec.per_hop_deadline.len() => {
                        min_deadline = min_deadline.min(rec.per_hop_deadline[h]);
                    }
                    _ => report.push(link, class, Some(*id), ViolationKind::UnknownResident, 0.0),
                }
            }
            if (st.burst_sum - bursts).abs() > SUM_TOLERANCE * bursts.abs().max(1.0)
                || (st.rate_sum - rates).abs() > SUM_TOLERANCE * rates.abs().max(1.0)
            {
                report.push(
                    link,
                    class,
                    None,
                    ViolationKind::StaleAggregate,
                    (st.burst_sum - bursts).abs().max((st.rate_sum - rates).abs()),
                );
            }

            if st.flows.is_empty() {
                if st.idle_slope != 0.0 || st.deadline != st.initial_deadline {
                    report.push(
                        link,
                        class,
                        None,
                        ViolationKind::EmptyClassNotReset,
                        st.idle_slope.abs().max((st.deadline - st.initial_deadline).abs()),
                    );
                }
                continue;
            }

            if st.idle_slope < rates * (1.0 - SUM_TOLERANCE) {
                report.push(link, class, None, ViolationKind::Unstable, rates - st.idle_slope);
            }
            if st.deadline != min_deadline && min_deadline.is_finite() {
                report.push(
                    link,
                    class,
                    None,
                    ViolationKind::DeadlineNotMinimum,
                    (st.deadline - min_deadline).abs(),
                );
            }
            match netcalc::worst_case_delay(ci + 1, st.burst_sum, &slopes[..=ci], params) {
                Ok(delay) => {
                    if exceeds(delay, st.deadline, DELAY_TOLERANCE) {
                        report.push(
                            link,
                            class,
                            None,
                            ViolationKind::DelayExceedsDeadline,
                            delay - st.deadline,
                        );
                    }
                }
                Err(_) => report.push(link, class, None, ViolationKind::DelayUndefined, 0.0),
            }
        }
    }

    for (id, rec) in &cfg.admitted {
        let flow = Some(*id);
        if rec.route.is_empty()
            || rec.route.len() != rec.per_hop_deadline.len()
            || !is_simple_path(&cfg.graph, &rec.route, rec.flow.src, rec.flow.dst)
        {
            report.push(None, Some(rec.flow.class), flow, ViolationKind::InvalidRoute, 0.0);
            continue;
        }
        let sum: f64 = rec.per_hop_deadline.iter().sum();
        if exceeds(sum, rec.flow.deadline, DELAY_TOLERANCE) {
            report.push(
                None,
                Some(rec.flow.class),
                flow,
                ViolationKind::EndToEndExceeded,
                sum - rec.flow.deadline,
            );
        }
        for link in &rec.route {
            let resident = cfg
                .port(*link)
                .and_then(|p| p.classes.get(rec.flow.class_index()))
                .is_some_and(|c| c.flows.contains(id));
            if !resident {
                report.push(
                    Some(*link),
                    Some(rec.flow.class),
                    flow,
                    ViolationKind::MissingResident,
                    0.0,
                );
            }
        }
    }
    report
}

/// True when `route` is a contiguous path of graph links from `src` to `dst`
/// that visits no node twice.
pub fn is_simple_path(graph: &NetworkGraph, route: &[LinkId], src: NodeId, dst: NodeId) -> bool {
    let Some(first) = route.first() else {
        return false;
    };
    if first.from() != src || route.last().map(|l| l.to()) != Some(dst) {
        return false;
    }
    let mut seen = BTreeSet::new();
    seen.insert(src);
    let mut at = src;
    for link in route {
        if link.from() != at || graph.link(*link).is_none() || !seen.insert(link.to()) {
            return false;
        }
        at = link.to();
    }
    true
}

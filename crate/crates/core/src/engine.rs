//! Online flow addition and removal.
//!
//! Addition evaluates every candidate route of the new flow: local deadlines
//! are kept when they already fit the end-to-end deadline and adjusted by the
//! engine's strategy otherwise, then the flow's class and every lower class
//! are re-allocated on the route ports. Among the routes that stay within
//! `idSl_max` everywhere, the one with the smallest network cost is applied.
//!
//! Removal recomputes each route port's class deadline from the flows that
//! remain and releases the bandwidth that is no longer needed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjust::{self, AdjustError, GammaStep};
use crate::baselines::{self, StrategyKind};
use crate::model::{
    ClassConfig, Flow, FlowId, FlowRecord, InvariantReport, LinkId, ModelError, NetworkConfig,
    NetworkGraph,
};
use crate::netcalc::{self, AffineArrivalCurve, CalcError};
use crate::routing::{CandidateRouteTable, Route};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("flow {0} is already admitted")]
    DuplicateFlow(FlowId),
    #[error(transparent)]
    MalformedFlow(#[from] ModelError),
    #[error("flow {0} is not admitted")]
    UnknownFlow(FlowId),
    #[error("port {link}: {source}")]
    Calc { link: LinkId, source: CalcError },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// The route table has no entry for the flow's endpoints.
    NoCandidateRoute,
    /// No candidate route can meet the end-to-end deadline.
    DeadlineInfeasible,
    /// Some route could meet the deadline but would overbook a port.
    BandwidthExceeded,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::NoCandidateRoute => "no_candidate_route",
            RejectReason::DeadlineInfeasible => "deadline_infeasible",
            RejectReason::BandwidthExceeded => "bandwidth_exceeded",
        }
    }
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Change of one (port, class) record caused by an admission or removal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortDelta {
    pub link: LinkId,
    pub class: u8,
    pub old_deadline: f64,
    pub new_deadline: f64,
    pub old_idle_slope: f64,
    pub new_idle_slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RouteFailure {
    /// The local deadlines could not be brought under the end-to-end deadline.
    Adjust(AdjustError),
    /// Re-allocating the port made some class infeasible.
    Allocation { link: LinkId, source: CalcError },
    /// Σ idSl would exceed idSl_max at a port.
    Overbooked { link: LinkId, total: f64, limit: f64 },
}

impl RouteFailure {
    fn is_deadline_failure(&self) -> bool {
        matches!(self, RouteFailure::Adjust(e) if e.is_deadline_failure())
    }
}

/// Tentative result of placing a flow on one candidate route.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteEvaluation {
    pub route: Route,
    /// True when the local deadlines had to be adjusted.
    pub adjusted: bool,
    /// Common ratio of the adaptive strategy; 1.0 when no adjustment was
    /// needed, `None` for the baseline strategies.
    pub gamma: Option<f64>,
    pub gamma_iterations: u32,
    pub gamma_trace: Vec<GammaStep>,
    /// Local deadline of the flow per route port.
    pub hop_deadlines: Vec<f64>,
    /// New class deadline per route port.
    pub class_deadlines: Vec<f64>,
    /// Tentative idle slopes per route port.
    pub idle_slopes: Vec<Vec<f64>>,
    /// Network cost after applying this route.
    pub cost: f64,
    pub failure: Option<RouteFailure>,
}

impl RouteEvaluation {
    pub fn feasible(&self) -> bool {
        self.failure.is_none()
    }

    fn failed(route: &Route, failure: RouteFailure) -> Self {
        RouteEvaluation {
            route: route.clone(),
            adjusted: false,
            gamma: None,
            gamma_iterations: 0,
            gamma_trace: Vec::new(),
            hop_deadlines: Vec::new(),
            class_deadlines: Vec::new(),
            idle_slopes: Vec::new(),
            cost: f64::INFINITY,
            failure: Some(failure),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Acceptance {
    pub flow: FlowId,
    pub route: Route,
    pub gamma: Option<f64>,
    pub adjusted: bool,
    pub gamma_iterations: u32,
    pub gamma_trace: Vec<GammaStep>,
    pub hop_deadlines: Vec<f64>,
    pub deltas: Vec<PortDelta>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub flow: FlowId,
    pub reason: RejectReason,
    /// One evaluation per candidate route, in table order.
    pub evaluations: Vec<RouteEvaluation>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AdmissionDecision {
    Accepted(Acceptance),
    Rejected(Rejection),
}

impl AdmissionDecision {
    pub fn is_accepted(&self) -> bool {
        matches!(self, AdmissionDecision::Accepted(_))
    }

    pub fn reject_reason(&self) -> Option<RejectReason> {
        match self {
            AdmissionDecision::Accepted(_) => None,
            AdmissionDecision::Rejected(r) => Some(r.reason),
        }
    }
}

/// `(1/(idSl_max − Σ idSl) − 1/idSl_max)²`; infinite once the port is full.
pub fn port_cost(idsl_max: f64, total_idle_slope: f64) -> f64 {
    let free = idsl_max - total_idle_slope;
    if !(free > 0.0) {
        return f64::INFINITY;
    }
    let x = 1.0 / free - 1.0 / idsl_max;
    x * x
}

/// Network cost summed over every port, from scratch.
pub fn network_cost(cfg: &NetworkConfig) -> f64 {
    (0..cfg.ports.len())
        .map(|p| port_cost(cfg.idsl_max(p), cfg.ports[p].total_idle_slope()))
        .sum()
}

/// Largest end-to-end deadline and shortest route length seen for one class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDeadlineStats {
    pub max_deadline: f64,
    pub min_route_len: usize,
}

/// Inputs of the initial local deadlines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeadlineStats {
    pub classes: Vec<ClassDeadlineStats>,
}

/// Used when a scenario has no routable flow at all.
pub const FALLBACK_STATS: ClassDeadlineStats = ClassDeadlineStats {
    max_deadline: 9e-3,
    min_route_len: 2,
};

impl DeadlineStats {
    /// Per-class statistics of `flows`, with route lengths taken from the
    /// first (shortest) candidate. A class without routable flows borrows the
    /// statistics of all flows.
    pub fn from_flows<'a, I>(flows: I, table: &CandidateRouteTable, n_avb: usize) -> Self
    where
        I: IntoIterator<Item = &'a Flow>,
    {
        let mut per_class: Vec<Option<ClassDeadlineStats>> = vec![None; n_avb];
        let mut global: Option<ClassDeadlineStats> = None;
        for f in flows {
            let Some(route) = table.get(f.src, f.dst).first() else {
                continue;
            };
            let merge = |slot: &mut Option<ClassDeadlineStats>| {
                let s = slot.get_or_insert(ClassDeadlineStats {
                    max_deadline: f.deadline,
                    min_route_len: route.len(),
                });
                s.max_deadline = s.max_deadline.max(f.deadline);
                s.min_route_len = s.min_route_len.min(route.len());
            };
            if let Some(slot) = per_class.get_mut(f.class_index()) {
                merge(slot);
            }
            merge(&mut global);
        }
        let fallback = global.unwrap_or(FALLBACK_STATS);
        DeadlineStats {
            classes: per_class.into_iter().map(|s| s.unwrap_or(fallback)).collect(),
        }
    }

    /// `max D_E2E / min route length` per class.
    pub fn initial_deadlines(&self) -> Vec<f64> {
        self.classes
            .iter()
            .map(|s| s.max_deadline / s.min_route_len.max(1) as f64)
            .collect()
    }
}

/// Pristine configuration whose class deadlines are derived from `stats`.
pub fn initial_config(
    graph: NetworkGraph,
    class_config: ClassConfig,
    stats: &DeadlineStats,
) -> Result<NetworkConfig, ModelError> {
    NetworkConfig::pristine(graph, class_config, &stats.initial_deadlines())
}

/// Admission controller over one network configuration.
#[derive(Clone, Debug)]
pub struct AdmissionEngine {
    config: NetworkConfig,
    strategy: StrategyKind,
    gamma_trace: bool,
    port_costs: Vec<f64>,
    finite_cost: f64,
    saturated_ports: usize,
}

impl AdmissionEngine {
    pub fn new(config: NetworkConfig, strategy: StrategyKind) -> Self {
        let mut engine = AdmissionEngine {
            port_costs: Vec::new(),
            finite_cost: 0.0,
            saturated_ports: 0,
            config,
            strategy,
            gamma_trace: false,
        };
        engine.port_costs = (0..engine.config.ports.len())
            .map(|p| port_cost(engine.config.idsl_max(p), engine.config.ports[p].total_idle_slope()))
            .collect();
        engine.refresh_total();
        engine
    }

    /// Records the per-iteration γ search in accepted decisions.
    pub fn with_gamma_trace(mut self, on: bool) -> Self {
        self.gamma_trace = on;
        self
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn into_config(self) -> NetworkConfig {
        self.config
    }

    pub fn strategy(&self) -> StrategyKind {
        self.strategy
    }

    /// Current network cost.
    pub fn cost(&self) -> f64 {
        if self.saturated_ports > 0 {
            f64::INFINITY
        } else {
            self.finite_cost
        }
    }

    pub fn verify(&self) -> InvariantReport {
        self.config.verify()
    }

    fn refresh_total(&mut self) {
        self.finite_cost = self.port_costs.iter().filter(|c| c.is_finite()).sum();
        self.saturated_ports = self.port_costs.iter().filter(|c| !c.is_finite()).count();
    }

    /// Cost after replacing the route ports' terms, as (saturated ports,
    /// finite part).
    fn cost_with(&self, positions: &[usize], totals: &[f64]) -> (usize, f64) {
        let mut saturated = self.saturated_ports;
        let mut finite = self.finite_cost;
        for (&p, &t) in positions.iter().zip(totals) {
            let old = self.port_costs[p];
            if old.is_finite() {
                finite -= old;
            } else {
                saturated -= 1;
            }
            let new = port_cost(self.config.idsl_max(p), t);
            if new.is_finite() {
                finite += new;
            } else {
                saturated += 1;
            }
        }
        (saturated, finite)
    }

    /// Local deadlines of `flow`'s class along `route` after the strategy's
    /// adjustment, or the current ones when they already fit.
    fn hop_deadlines(
        &self,
        flow: &Flow,
        route: &Route,
        positions: &[usize],
    ) -> Result<(Vec<f64>, bool, Option<f64>, u32, Vec<GammaStep>), AdjustError> {
        let ci = flow.class_index();
        let current: Vec<f64> = positions
            .iter()
            .map(|&p| self.config.ports[p].classes[ci].deadline)
            .collect();
        if current.iter().sum::<f64>() <= flow.deadline {
            return Ok((current, false, Some(1.0), 0, Vec::new()));
        }
        match self.strategy {
            StrategyKind::Adaptive => {
                let out =
                    adjust::adjust_local_deadlines(flow, &route.links, &self.config, self.gamma_trace)?;
                Ok((out.deadlines, true, Some(out.gamma), out.iterations, out.trace))
            }
            kind => {
                let d = baselines::baseline_adjust(kind, flow, &route.links, &self.config)?;
                Ok((d, true, None, 0, Vec::new()))
            }
        }
    }

    /// Tentative placement of `flow` on `route` without touching the state.
    pub fn evaluate_route(&self, flow: &Flow, route: &Route) -> RouteEvaluation {
        let positions: Vec<usize> = match route
            .links
            .iter()
            .map(|&l| self.config.graph.link_position(l).ok_or(AdjustError::UnknownLink(l)))
            .collect()
        {
            Ok(p) => p,
            Err(e) => return RouteEvaluation::failed(route, RouteFailure::Adjust(e)),
        };
        if positions.is_empty() {
            return RouteEvaluation::failed(route, RouteFailure::Adjust(AdjustError::EmptyRoute));
        }
        let (hop_deadlines, adjusted, gamma, gamma_iterations, gamma_trace) =
            match self.hop_deadlines(flow, route, &positions) {
                Ok(x) => x,
                Err(e) => return RouteEvaluation::failed(route, RouteFailure::Adjust(e)),
            };

        let ci = flow.class_index();
        let mut class_deadlines = Vec::with_capacity(positions.len());
        let mut idle_slopes = Vec::with_capacity(positions.len());
        let mut totals = Vec::with_capacity(positions.len());
        let mut failure = None;
        for (&p, &d_hat) in positions.iter().zip(&hop_deadlines) {
            let port = &self.config.ports[p];
            let st = &port.classes[ci];
            let new_deadline = if st.is_empty() { d_hat } else { st.deadline.min(d_hat) };
            let mut arrivals: Vec<AffineArrivalCurve> =
                port.classes.iter().map(|c| c.arrival()).collect();
            arrivals[ci] = arrivals[ci].with(flow);
            let mut deadlines = port.deadlines();
            deadlines[ci] = new_deadline;
            let mut slopes = port.idle_slopes();
            let params = self.config.port_params(p);
            if let Err(source) =
                netcalc::allocate_from(ci + 1, &arrivals, &deadlines, &mut slopes, params, true)
            {
                failure = Some(RouteFailure::Allocation {
                    link: port.link,
                    source,
                });
                break;
            }
            let total: f64 = slopes.iter().sum();
            let limit = self.config.idsl_max(p);
            if total > limit {
                failure = Some(RouteFailure::Overbooked {
                    link: port.link,
                    total,
                    limit,
                });
                break;
            }
            class_deadlines.push(new_deadline);
            idle_slopes.push(slopes);
            totals.push(total);
        }
        if let Some(f) = failure {
            let mut ev = RouteEvaluation::failed(route, f);
            ev.adjusted = adjusted;
            ev.gamma = gamma;
            ev.hop_deadlines = hop_deadlines;
            return ev;
        }
        let (saturated, finite) = self.cost_with(&positions, &totals);
        let cost = if saturated > 0 { f64::INFINITY } else { finite };
        RouteEvaluation {
            route: route.clone(),
            adjusted,
            gamma,
            gamma_iterations,
            gamma_trace,
            hop_deadlines,
            class_deadlines,
            idle_slopes,
            cost,
            failure: None,
        }
    }

    /// Decides on `flow` and, when it is accepted, applies it.
    pub fn admit(
        &mut self,
        flow: Flow,
        table: &CandidateRouteTable,
    ) -> Result<AdmissionDecision, EngineError> {
        if self.config.is_admitted(flow.id) {
            return Err(EngineError::DuplicateFlow(flow.id));
        }
        flow.validate(&self.config.graph, &self.config.class_config)?;
        let candidates = table.get(flow.src, flow.dst);
        if candidates.is_empty() {
            return Ok(AdmissionDecision::Rejected(Rejection {
                flow: flow.id,
                reason: RejectReason::NoCandidateRoute,
                evaluations: Vec::new(),
            }));
        }

        let evaluations: Vec<RouteEvaluation> =
            candidates.iter().map(|r| self.evaluate_route(&flow, r)).collect();
        let mut best: Option<(usize, (usize, f64))> = None;
        for (idx, ev) in evaluations.iter().enumerate() {
            if !ev.feasible() {
                continue;
            }
            let positions: Vec<usize> = ev
                .route
                .links
                .iter()
                .filter_map(|&l| self.config.graph.link_position(l))
                .collect();
            let totals: Vec<f64> = ev.idle_slopes.iter().map(|s| s.iter().sum()).collect();
            let key = self.cost_with(&positions, &totals);
            if best.is_none_or(|(_, b)| key.0 < b.0 || (key.0 == b.0 && key.1 < b.1)) {
                best = Some((idx, key));
            }
        }

        let Some((idx, _)) = best else {
            let all_deadline = evaluations
                .iter()
                .all(|e| e.failure.as_ref().is_some_and(RouteFailure::is_deadline_failure));
            let reason = if all_deadline {
                RejectReason::DeadlineInfeasible
            } else {
                RejectReason::BandwidthExceeded
            };
            return Ok(AdmissionDecision::Rejected(Rejection {
                flow: flow.id,
                reason,
                evaluations,
            }));
        };

        let ev = evaluations.into_iter().nth(idx).expect("index of an evaluation");
        let deltas = self.apply(&flow, &ev);
        let acceptance = Acceptance {
            flow: flow.id,
            route: ev.route.clone(),
            gamma: ev.gamma,
            adjusted: ev.adjusted,
            gamma_iterations: ev.gamma_iterations,
            gamma_trace: ev.gamma_trace,
            hop_deadlines: ev.hop_deadlines.clone(),
            deltas,
            cost: self.cost(),
        };
        self.config.admitted.insert(
            flow.id,
            FlowRecord {
                flow,
                route: ev.route.links,
                per_hop_deadline: ev.hop_deadlines,
            },
        );
        Ok(AdmissionDecision::Accepted(acceptance))
    }

    fn apply(&mut self, flow: &Flow, ev: &RouteEvaluation) -> Vec<PortDelta> {
        let ci = flow.class_index();
        let mut deltas = Vec::new();
        for (h, &link) in ev.route.links.iter().enumerate() {
            let p = self
                .config
                .graph
                .link_position(link)
                .expect("evaluated route links exist");
            let port = &mut self.config.ports[p];
            let new_slopes = &ev.idle_slopes[h];
            for (cj, st) in port.classes.iter_mut().enumerate().skip(ci) {
                let new_deadline = if cj == ci { ev.class_deadlines[h] } else { st.deadline };
                if cj == ci {
                    st.flows.insert(flow.id);
                    st.burst_sum += flow.burst();
                    st.rate_sum += flow.rate();
                }
                if new_deadline != st.deadline || new_slopes[cj] != st.idle_slope || cj == ci {
                    deltas.push(PortDelta {
                        link,
                        class: cj as u8 + 1,
                        old_deadline: st.deadline,
                        new_deadline,
                        old_idle_slope: st.idle_slope,
                        new_idle_slope: new_slopes[cj],
                    });
                }
                st.deadline = new_deadline;
                st.idle_slope = new_slopes[cj];
            }
            let total = port.total_idle_slope();
            self.port_costs[p] = port_cost(self.config.idsl_max(p), total);
        }
        self.refresh_total();
        deltas
    }

    /// Removes an admitted flow and reclaims its bandwidth.
    pub fn remove(&mut self, id: FlowId) -> Result<Vec<PortDelta>, EngineError> {
        let record = self
            .config
            .admitted
            .remove(&id)
            .ok_or(EngineError::UnknownFlow(id))?;
        let ci = record.flow.class_index();
        let mut deltas = Vec::new();
        for &link in &record.route {
            let p = self
                .config
                .graph
                .link_position(link)
                .expect("admitted route links exist");
            let params = self.config.port_params(p);
            let admitted = &self.config.admitted;
            let port = &mut self.config.ports[p];
            let before: Vec<(f64, f64)> =
                port.classes.iter().map(|c| (c.deadline, c.idle_slope)).collect();

            let st = &mut port.classes[ci];
            st.flows.remove(&id);
            if st.flows.is_empty() {
                st.deadline = st.initial_deadline;
                st.burst_sum = 0.0;
                st.rate_sum = 0.0;
            } else {
                let mut burst = 0.0;
                let mut rate = 0.0;
                let mut deadline = f64::INFINITY;
                for fid in &st.flows {
                    let rec = &admitted[fid];
                    burst += rec.flow.burst();
                    rate += rec.flow.rate();
                    let h = rec
                        .route
                        .iter()
                        .position(|l| *l == link)
                        .expect("resident flow routes through its port");
                    deadline = deadline.min(rec.per_hop_deadline[h]);
                }
                st.burst_sum = burst;
                st.rate_sum = rate;
                st.deadline = deadline;
            }

            let arrivals: Vec<AffineArrivalCurve> =
                port.classes.iter().map(|c| c.arrival()).collect();
            let deadlines = port.deadlines();
            let mut slopes = port.idle_slopes();
            netcalc::allocate_from(ci + 1, &arrivals, &deadlines, &mut slopes, params, true)
                .map_err(|source| EngineError::Calc { link, source })?;
            for (cj, st) in port.classes.iter_mut().enumerate().skip(ci) {
                st.idle_slope = slopes[cj];
                let (old_deadline, old_idle_slope) = before[cj];
                if old_deadline != st.deadline || old_idle_slope != st.idle_slope || cj == ci {
                    deltas.push(PortDelta {
                        link,
                        class: cj as u8 + 1,
                        old_deadline,
                        new_deadline: st.deadline,
                        old_idle_slope,
                        new_idle_slope: st.idle_slope,
                    });
                }
            }
            let total = port.total_idle_slope();
            self.port_costs[p] = port_cost(self.config.idsl_max(p), total);
        }
        self.refresh_total();
        Ok(deltas)
    }

    /// Flow ids currently admitted, ascending.
    pub fn admitted_ids(&self) -> Vec<FlowId> {
        self.config.admitted.keys().copied().collect()
    }

    /// Per-port records keyed by link, for diffing in tests and tools.
    pub fn port_snapshot(&self) -> BTreeMap<LinkId, Vec<(f64, f64)>> {
        self.config
            .ports
            .iter()
            .map(|p| {
                (
                    p.link,
                    p.classes.iter().map(|c| (c.deadline, c.idle_slope)).collect(),
                )
            })
            .collect()
    }
}

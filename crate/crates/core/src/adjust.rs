//! Deadline-adaptive local-deadline adjustment.
//!
//! When the current local deadlines along a candidate route add up to more
//! than the new flow's end-to-end deadline, every port on the route hands the
//! same fraction `γ` of its residual bandwidth to the new flow's class (and,
//! as compensation, to the lower-priority classes whose blocking term grows).
//! For a given `γ` the resulting local deadline of each port is closed-form;
//! `γ` itself is found by bisection so that the adjusted deadlines just fit
//! the end-to-end deadline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Flow, LinkId, NetworkConfig};
use crate::netcalc::{self, CalcError, PortParams};

/// Iteration cap of the γ search.
pub const MAX_GAMMA_ITERATIONS: u32 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdjustError {
    #[error("route deadlines {sum} already fit the end-to-end deadline {deadline}")]
    NotRequired { sum: f64, deadline: f64 },
    #[error("empty route")]
    EmptyRoute,
    #[error("link {0} is not part of the network")]
    UnknownLink(LinkId),
    #[error("port {link} has no residual bandwidth ({residual})")]
    NoResidual { link: LinkId, residual: f64 },
    #[error("minimum reachable deadline sum {min_sum} exceeds the end-to-end deadline {deadline}")]
    Unreachable { min_sum: f64, deadline: f64 },
    #[error("port {link}: {source}")]
    Calc { link: LinkId, source: CalcError },
    #[error("port {link}, class {class}: negative discriminant {discriminant}")]
    Numeric {
        link: LinkId,
        class: usize,
        discriminant: f64,
    },
    #[error("port {link}: adjusted deadline {deadline} is not above the latency floor {floor}")]
    BelowFloor { link: LinkId, deadline: f64, floor: f64 },
    #[error("degenerate reduction coefficients: {0}")]
    Degenerate(&'static str),
}

impl AdjustError {
    /// True when the failure means the end-to-end deadline cannot be met on
    /// this route regardless of the bandwidth situation elsewhere.
    pub fn is_deadline_failure(&self) -> bool {
        matches!(
            self,
            AdjustError::Unreachable { .. } | AdjustError::BelowFloor { .. }
        )
    }
}

/// Residual bandwidth `idSl_max − Σ_j bar_idSl_j`. May be negative.
pub fn residual_bandwidth(idsl_max: f64, already_allocated: &[f64]) -> f64 {
    idsl_max - already_allocated.iter().sum::<f64>()
}

/// Coefficients of `η x² + ξ x + ζ = 0`, whose root in `[0, total]` is the
/// extra bandwidth left for the classes above `j` once class `j` has taken
/// what it needs to keep its deadline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticCoefficients {
    pub eta: f64,
    pub xi: f64,
    pub zeta: f64,
}

impl QuadraticCoefficients {
    pub fn eval(&self, x: f64) -> f64 {
        (self.eta * x + self.xi) * x + self.zeta
    }
}

/// Extra bandwidth mapped to an adjusted deadline at one port.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandMapping {
    /// Adjusted local deadline of the flow's class.
    pub deadline: f64,
    /// Extra bandwidth per class (index `class - 1`); zero above the flow's class.
    pub phi: Vec<f64>,
}

/// Snapshot of one route port for the adjustment, with the candidate flow
/// already counted in its class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortAdjustContext {
    pub link: LinkId,
    /// Class of the candidate flow (1-based).
    pub class: usize,
    /// Burst sums per class, candidate included.
    pub bursts: Vec<f64>,
    /// Existing local deadlines per class.
    pub deadlines: Vec<f64>,
    /// Already-allocated bandwidth per class.
    pub allocated: Vec<f64>,
    /// Residual bandwidth `R`.
    pub residual: f64,
    pub port: PortParams,
}

impl PortAdjustContext {
    pub fn new(
        link: LinkId,
        class: usize,
        bursts: Vec<f64>,
        deadlines: Vec<f64>,
        idsl_max: f64,
        port: PortParams,
    ) -> Result<Self, AdjustError> {
        let allocated = netcalc::already_allocated_bandwidth(&bursts, &deadlines, port)
            .map_err(|source| AdjustError::Calc { link, source })?;
        let residual = residual_bandwidth(idsl_max, &allocated);
        Ok(PortAdjustContext {
            link,
            class,
            bursts,
            deadlines,
            allocated,
            residual,
            port,
        })
    }

    /// Builds the context for `flow` at the port at graph position `position`.
    pub fn from_config(cfg: &NetworkConfig, position: usize, flow: &Flow) -> Result<Self, AdjustError> {
        let port = &cfg.ports[position];
        let mut bursts: Vec<f64> = port.classes.iter().map(|c| c.burst_sum).collect();
        bursts[flow.class_index()] += flow.burst();
        Self::new(
            port.link,
            flow.class as usize,
            bursts,
            port.deadlines(),
            cfg.idsl_max(position),
            cfg.port_params(position),
        )
    }

    pub fn n_avb(&self) -> usize {
        self.bursts.len()
    }

    /// Coefficients for peeling class `j` (`class < j ≤ N`) off a total extra
    /// bandwidth of `total` shared by classes `class..=j`.
    pub fn recursion_coefficients(&self, total: f64, j: usize) -> QuadraticCoefficients {
        let c = self.port.link_rate;
        let above: f64 = self.allocated[..j - 1].iter().sum();
        let headroom = c - above;
        let bar_j = self.allocated[j - 1];
        let eta = 1.0 + headroom * self.bursts[j - 1] / ((j - 1) as f64 * self.port.l_max * bar_j);
        let xi = -eta * total - (eta - 1.0) * headroom - bar_j;
        let zeta = (eta - 1.0) * headroom * total;
        QuadraticCoefficients { eta, xi, zeta }
    }

    /// Given the extra bandwidth `total` for classes `class..=j`, returns the
    /// part that classes `class..j-1` keep; class `j` gets the remainder,
    /// which is exactly what it needs to keep meeting its own deadline.
    pub fn recursion_step(&self, total: f64, j: usize) -> Result<f64, AdjustError> {
        debug_assert!(j > self.class && j <= self.n_avb());
        if total <= 0.0 {
            return Ok(0.0);
        }
        let q = self.recursion_coefficients(total, j);
        let mut disc = q.xi * q.xi - 4.0 * q.eta * q.zeta;
        if disc < 0.0 {
            if disc < -1e-12 * q.xi * q.xi {
                return Err(AdjustError::Numeric {
                    link: self.link,
                    class: j,
                    discriminant: disc,
                });
            }
            disc = 0.0;
        }
        // ξ < 0, so the smaller root is ζ / q with q = (−ξ + √disc) / 2; this
        // avoids the cancellation of (−ξ − √disc) / (2η).
        let denom = -q.xi + disc.sqrt();
        let root = if q.zeta == 0.0 { 0.0 } else { 2.0 * q.zeta / denom };

        let scale = (q.eta * root * root).abs().max((q.xi * root).abs()).max(q.zeta.abs());
        let slack = 1e-9 * total;
        if root.is_finite()
            && root >= -slack
            && root <= total + slack
            && q.eval(root).abs() <= 1e-9 * scale.max(f64::MIN_POSITIVE)
        {
            return Ok(root.clamp(0.0, total));
        }
        log::warn!(
            "port {}: closed-form root {root} rejected for class {j}, bisecting",
            self.link
        );
        Ok(bisect_root(&q, total))
    }

    /// Maps the extra bandwidth `extra` (`γ·R`) to the adjusted deadline of
    /// the flow's class, splitting `extra` over classes `class..=N` so that
    /// every lower class keeps its current deadline exactly.
    pub fn map_band_to_deadline(&self, extra: f64) -> Result<BandMapping, AdjustError> {
        let n = self.n_avb();
        let i = self.class;
        let mut phi = vec![0.0; n];
        let mut total = extra.max(0.0);
        for j in (i + 1..=n).rev() {
            // An empty lower class has no deadline to protect.
            if self.bursts[j - 1] == 0.0 || self.allocated[j - 1] == 0.0 {
                continue;
            }
            let keep = self.recursion_step(total, j)?;
            phi[j - 1] = total - keep;
            total = keep;
        }
        phi[i - 1] = total;
        let above: f64 = self.allocated[..i - 1].iter().sum();
        let floor = netcalc::latency_floor(i, above, self.port)
            .map_err(|source| AdjustError::Calc { link: self.link, source })?;
        let deadline = self.bursts[i - 1] / (self.allocated[i - 1] + phi[i - 1]) + floor;
        if !(deadline > floor) {
            return Err(AdjustError::BelowFloor {
                link: self.link,
                deadline,
                floor,
            });
        }
        Ok(BandMapping { deadline, phi })
    }
}

fn bisect_root(q: &QuadraticCoefficients, total: f64) -> f64 {
    // f(0) = ζ ≥ 0 and f(total) ≤ 0.
    let (mut lo, mut hi) = (0.0_f64, total);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if q.eval(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaStep {
    pub iteration: u32,
    pub gamma: f64,
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentOutcome {
    pub gamma: f64,
    /// Adjusted local deadline per route port, in route order.
    pub deadlines: Vec<f64>,
    /// Extra bandwidth per route port and class.
    pub phi: Vec<Vec<f64>>,
    /// `D_E2E − Σ deadlines`, never negative.
    pub slack: f64,
    pub iterations: u32,
    /// Per-iteration γ and slack, filled only when tracing.
    pub trace: Vec<GammaStep>,
}

/// The adjustment problem for one flow on one candidate route.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjustProblem {
    pub flow_deadline: f64,
    pub ports: Vec<PortAdjustContext>,
}

impl AdjustProblem {
    pub fn build(flow: &Flow, route: &[LinkId], cfg: &NetworkConfig) -> Result<Self, AdjustError> {
        if route.is_empty() {
            return Err(AdjustError::EmptyRoute);
        }
        let ports = route
            .iter()
            .map(|&link| {
                let pos = cfg
                    .graph
                    .link_position(link)
                    .ok_or(AdjustError::UnknownLink(link))?;
                PortAdjustContext::from_config(cfg, pos, flow)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(AdjustProblem {
            flow_deadline: flow.deadline,
            ports,
        })
    }

    pub fn mappings_at(&self, gamma: f64) -> Result<Vec<BandMapping>, AdjustError> {
        self.ports
            .iter()
            .map(|p| p.map_band_to_deadline(gamma * p.residual))
            .collect()
    }

    pub fn deadlines_at(&self, gamma: f64) -> Result<Vec<f64>, AdjustError> {
        self.ports
            .iter()
            .map(|p| p.map_band_to_deadline(gamma * p.residual).map(|m| m.deadline))
            .collect()
    }

    /// `D_E2E − Σ D̂(γ)` along the route.
    pub fn slack(&self, gamma: f64) -> Result<f64, AdjustError> {
        Ok(self.flow_deadline - self.deadlines_at(gamma)?.iter().sum::<f64>())
    }

    /// Searches the smallest common ratio `γ ∈ (0, 1]` whose adjusted
    /// deadlines fit the end-to-end deadline.
    pub fn solve(&self, trace: bool) -> Result<AdjustmentOutcome, AdjustError> {
        if let Some(p) = self.ports.iter().find(|p| !(p.residual > 0.0)) {
            return Err(AdjustError::NoResidual {
                link: p.link,
                residual: p.residual,
            });
        }
        let at_full = self.deadlines_at(1.0)?;
        let min_sum: f64 = at_full.iter().sum();
        if min_sum > self.flow_deadline {
            return Err(AdjustError::Unreachable {
                min_sum,
                deadline: self.flow_deadline,
            });
        }

        let mut steps = Vec::new();
        let mut best: Option<(f64, Vec<f64>, f64)> = None;
        let mut gamma = 1.0_f64;
        let mut delta = 1.0_f64;
        let mut iterations = 0;
        while iterations < MAX_GAMMA_ITERATIONS {
            iterations += 1;
            let deadlines = if gamma == 1.0 {
                at_full.clone()
            } else {
                self.deadlines_at(gamma)?
            };
            let slack = self.flow_deadline - deadlines.iter().sum::<f64>();
            if trace {
                steps.push(GammaStep {
                    iteration: iterations,
                    gamma,
                    slack,
                });
            }
            if slack >= 0.0 && best.as_ref().is_none_or(|b| gamma < b.0) {
                best = Some((gamma, deadlines, slack));
            }
            if slack == 0.0 {
                break;
            }
            delta /= 2.0;
            let next = if slack > 0.0 { gamma - delta } else { gamma + delta };
            debug_assert!(next <= 1.0);
            if next == gamma {
                break;
            }
            gamma = next;
        }
        let (gamma, deadlines, slack) = best.expect("slack at γ = 1 is nonnegative");
        let phi = self
            .mappings_at(gamma)?
            .into_iter()
            .map(|m| m.phi)
            .collect();
        Ok(AdjustmentOutcome {
            gamma,
            deadlines,
            phi,
            slack,
            iterations,
            trace: steps,
        })
    }
}

/// Adaptive adjustment of the local deadlines of `flow`'s class along `route`.
///
/// Must only be called when the current local deadlines along the route sum
/// to more than the flow's end-to-end deadline.
pub fn adjust_local_deadlines(
    flow: &Flow,
    route: &[LinkId],
    cfg: &NetworkConfig,
    trace: bool,
) -> Result<AdjustmentOutcome, AdjustError> {
    let ci = flow.class_index();
    let mut sum = 0.0;
    for link in route {
        let port = cfg.port(*link).ok_or(AdjustError::UnknownLink(*link))?;
        sum += port.classes[ci].deadline;
    }
    if sum <= flow.deadline {
        return Err(AdjustError::NotRequired {
            sum,
            deadline: flow.deadline,
        });
    }
    AdjustProblem::build(flow, route, cfg)?.solve(trace)
}

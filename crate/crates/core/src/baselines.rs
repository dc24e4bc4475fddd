//! Direct deadline-reduction strategies used as comparison points.
//!
//! Each strategy removes the route's deadline overshoot
//! `Σ D_i − D_E2E` by giving every port a share `κ` of it:
//! `D̂ = D_i − overshoot · κ`. The shares always sum to one.
//!
//! * EP: equal shares, `κ = 1/|r|`.
//! * LP: ports with less load give up more, `κ = (ΣB − B)/((|r|−1)·ΣB)`,
//!   where `B` is the total committed rate at the port (all classes,
//!   candidate flow included).
//! * ABP: shares proportional to residual bandwidth, `κ = R/ΣR`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adjust::{AdjustError, PortAdjustContext};
use crate::model::{Flow, LinkId, NetworkConfig};
use crate::netcalc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    /// Common residual-bandwidth ratio found by bisection.
    Adaptive,
    /// Equal partition.
    Ep,
    /// Load-based partition.
    Lp,
    /// Available-bandwidth-based partition.
    Abp,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Adaptive,
        StrategyKind::Ep,
        StrategyKind::Lp,
        StrategyKind::Abp,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::Adaptive => "adaptive",
            StrategyKind::Ep => "ep",
            StrategyKind::Lp => "lp",
            StrategyKind::Abp => "abp",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "adaptive" => Ok(StrategyKind::Adaptive),
            "ep" => Ok(StrategyKind::Ep),
            "lp" => Ok(StrategyKind::Lp),
            "abp" => Ok(StrategyKind::Abp),
            other => Err(format!("unknown strategy '{other}' (adaptive|ep|lp|abp)")),
        }
    }
}

/// Share of the overshoot taken by each route port.
///
/// `loads` and `residuals` are per route port; only the one the strategy
/// needs is read.
pub fn reduction_coefficients(
    kind: StrategyKind,
    loads: &[f64],
    residuals: &[f64],
) -> Result<Vec<f64>, AdjustError> {
    match kind {
        StrategyKind::Adaptive => Err(AdjustError::Degenerate(
            "the adaptive strategy does not use reduction coefficients",
        )),
        StrategyKind::Ep => {
            let n = loads.len().max(residuals.len());
            if n == 0 {
                return Err(AdjustError::EmptyRoute);
            }
            Ok(vec![1.0 / n as f64; n])
        }
        StrategyKind::Lp => {
            let n = loads.len();
            if n == 0 {
                return Err(AdjustError::EmptyRoute);
            }
            if n == 1 {
                return Err(AdjustError::Degenerate("load partition needs at least two hops"));
            }
            let total: f64 = loads.iter().sum();
            if !(total > 0.0) {
                return Err(AdjustError::Degenerate("zero total load"));
            }
            Ok(loads
                .iter()
                .map(|&b| (total - b) / ((n - 1) as f64 * total))
                .collect())
        }
        StrategyKind::Abp => {
            if residuals.is_empty() {
                return Err(AdjustError::EmptyRoute);
            }
            let total: f64 = residuals.iter().sum();
            if !(total > 0.0) {
                return Err(AdjustError::Degenerate("no residual bandwidth on the route"));
            }
            Ok(residuals.iter().map(|&r| r / total).collect())
        }
    }
}

/// Reduced local deadlines of `flow`'s class along `route` for a baseline
/// strategy, in route order.
pub fn baseline_adjust(
    kind: StrategyKind,
    flow: &Flow,
    route: &[LinkId],
    cfg: &NetworkConfig,
) -> Result<Vec<f64>, AdjustError> {
    if route.is_empty() {
        return Err(AdjustError::EmptyRoute);
    }
    let ci = flow.class_index();
    let positions = route
        .iter()
        .map(|&l| cfg.graph.link_position(l).ok_or(AdjustError::UnknownLink(l)))
        .collect::<Result<Vec<_>, _>>()?;
    let current: Vec<f64> = positions
        .iter()
        .map(|&p| cfg.ports[p].classes[ci].deadline)
        .collect();
    let sum: f64 = current.iter().sum();
    let overshoot = sum - flow.deadline;
    if overshoot <= 0.0 {
        return Err(AdjustError::NotRequired {
            sum,
            deadline: flow.deadline,
        });
    }

    let loads: Vec<f64> = positions
        .iter()
        .map(|&p| cfg.ports[p].classes.iter().map(|c| c.rate_sum).sum::<f64>() + flow.rate())
        .collect();
    let residuals: Vec<f64> = if kind == StrategyKind::Abp {
        positions
            .iter()
            .map(|&p| PortAdjustContext::from_config(cfg, p, flow).map(|c| c.residual))
            .collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };
    let kappa = reduction_coefficients(kind, &loads, &residuals)?;

    let mut out = Vec::with_capacity(route.len());
    for ((&pos, &d), &k) in positions.iter().zip(&current).zip(&kappa) {
        let reduced = d - overshoot * k;
        let port = &cfg.ports[pos];
        let above: f64 = port.classes[..ci].iter().map(|c| c.idle_slope).sum();
        let floor = netcalc::latency_floor(ci + 1, above, cfg.port_params(pos))
            .map_err(|source| AdjustError::Calc {
                link: port.link,
                source,
            })?;
        if !(reduced > floor) {
            return Err(AdjustError::BelowFloor {
                link: port.link,
                deadline: reduced,
                floor,
            });
        }
        out.push(reduced);
    }
    Ok(out)
}

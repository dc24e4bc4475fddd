//! Affine arrival curves, CBS rate-latency service curves, the closed-form
//! per-class delay bound and its inverse (minimum idle slope for a deadline).
//!
//! Classes are numbered from 1 (highest priority). Slices of per-class values
//! are indexed by `class - 1`. The class-specific maximum frame sizes are all
//! replaced by the network-wide `l_max`, so the bound stays valid when the
//! traffic mix changes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Flow;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalcError {
    /// Higher-priority classes reserve the whole link rate.
    #[error("class {class}: higher-priority idle slopes {reserved} saturate the link rate {link_rate}")]
    Saturated {
        class: usize,
        reserved: f64,
        link_rate: f64,
    },
    /// The local deadline does not exceed the transmission-latency floor.
    #[error("class {class}: deadline {deadline} is not above the latency floor {floor}")]
    InfeasibleDeadline {
        class: usize,
        deadline: f64,
        floor: f64,
    },
    #[error("class {class}: idle slope must be positive, got {idle_slope}")]
    NonPositiveIdleSlope { class: usize, idle_slope: f64 },
    #[error("class index {0} out of range")]
    BadClass(usize),
}

impl CalcError {
    pub fn class(&self) -> usize {
        match *self {
            CalcError::Saturated { class, .. }
            | CalcError::InfeasibleDeadline { class, .. }
            | CalcError::NonPositiveIdleSlope { class, .. }
            | CalcError::BadClass(class) => class,
        }
    }
}

/// Link rate `C` and maximum frame size of the port under analysis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortParams {
    pub link_rate: f64,
    pub l_max: f64,
}

/// `α(t) = rate·t + burst` for `t > 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AffineArrivalCurve {
    pub rate: f64,
    pub burst: f64,
}

impl AffineArrivalCurve {
    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            self.rate * t + self.burst
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rate == 0.0 && self.burst == 0.0
    }

    /// Adds one flow's token bucket.
    pub fn with(&self, flow: &Flow) -> Self {
        AffineArrivalCurve {
            rate: self.rate + flow.rate(),
            burst: self.burst + flow.burst(),
        }
    }
}

/// `β(t) = rate·[t − latency]⁺`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateLatencyServiceCurve {
    pub rate: f64,
    pub latency: f64,
}

impl RateLatencyServiceCurve {
    pub fn eval(&self, t: f64) -> f64 {
        self.rate * (t - self.latency).max(0.0)
    }
}

/// Aggregate token bucket of a flow set: `(Σ ρ_f, Σ b_f)`.
pub fn aggregate_arrival<'a, I>(flows: I) -> AffineArrivalCurve
where
    I: IntoIterator<Item = &'a Flow>,
{
    flows
        .into_iter()
        .fold(AffineArrivalCurve::default(), |acc, f| acc.with(f))
}

fn check_class(class: usize, len: usize) -> Result<(), CalcError> {
    if class == 0 || class > len {
        Err(CalcError::BadClass(class))
    } else {
        Ok(())
    }
}

/// CBS service curve of `class` given the idle slopes of classes `1..=class`.
pub fn cbs_service_curve(
    class: usize,
    idle_slopes: &[f64],
    port: PortParams,
) -> Result<RateLatencyServiceCurve, CalcError> {
    check_class(class, idle_slopes.len())?;
    let c = port.link_rate;
    let higher = &idle_slopes[..class - 1];
    let reserved: f64 = higher.iter().sum();
    if reserved >= c {
        return Err(CalcError::Saturated {
            class,
            reserved,
            link_rate: c,
        });
    }
    let rate = idle_slopes[class - 1];
    if !(rate > 0.0) {
        return Err(CalcError::NonPositiveIdleSlope {
            class,
            idle_slope: rate,
        });
    }
    // Send slope of class j is idSl_j - C.
    let numerator: f64 = higher
        .iter()
        .map(|&idsl| (idsl - c) * port.l_max / c)
        .sum::<f64>()
        - port.l_max;
    let latency = (numerator / (reserved - c)).max(0.0);
    Ok(RateLatencyServiceCurve { rate, latency })
}

/// Fixed part of the delay bound: `l_max/C + (i−1)·l_max/(C − Σ_{j<i} idSl_j)`.
pub fn latency_floor(class: usize, higher_reserved: f64, port: PortParams) -> Result<f64, CalcError> {
    if class == 0 {
        return Err(CalcError::BadClass(class));
    }
    let c = port.link_rate;
    if higher_reserved >= c {
        return Err(CalcError::Saturated {
            class,
            reserved: higher_reserved,
            link_rate: c,
        });
    }
    let blocking = if class == 1 {
        0.0
    } else {
        (class - 1) as f64 * port.l_max / (c - higher_reserved)
    };
    Ok(port.l_max / c + blocking)
}

/// Worst-case delay bound of `class` at a port:
/// `Σb/idSl_i + l_max/C + (i−1)·l_max/(C − Σ_{j<i} idSl_j)`.
///
/// An empty class (`burst_sum == 0`) contributes no burst term.
pub fn worst_case_delay(
    class: usize,
    burst_sum: f64,
    idle_slopes: &[f64],
    port: PortParams,
) -> Result<f64, CalcError> {
    check_class(class, idle_slopes.len())?;
    let higher: f64 = idle_slopes[..class - 1].iter().sum();
    let floor = latency_floor(class, higher, port)?;
    if burst_sum == 0.0 {
        return Ok(floor);
    }
    let idsl = idle_slopes[class - 1];
    if !(idsl > 0.0) {
        return Err(CalcError::NonPositiveIdleSlope {
            class,
            idle_slope: idsl,
        });
    }
    Ok(burst_sum / idsl + floor)
}

/// Idle slope that makes the delay bound equal `deadline` exactly
/// (the deadline term of the minimum-bandwidth rule). Zero for an empty class.
pub fn deadline_bandwidth(
    class: usize,
    burst_sum: f64,
    deadline: f64,
    higher_reserved: f64,
    port: PortParams,
) -> Result<f64, CalcError> {
    if burst_sum == 0.0 {
        return Ok(0.0);
    }
    let floor = latency_floor(class, higher_reserved, port)?;
    let room = deadline - floor;
    if !(room > 0.0) {
        return Err(CalcError::InfeasibleDeadline {
            class,
            deadline,
            floor,
        });
    }
    Ok(burst_sum / room)
}

/// Minimum idle slope for `class`: the larger of the deadline term and the
/// aggregate rate (stability). Zero for an empty class.
pub fn min_bandwidth(
    class: usize,
    arrival: AffineArrivalCurve,
    deadline: f64,
    higher_reserved: f64,
    port: PortParams,
) -> Result<f64, CalcError> {
    if arrival.is_empty() {
        return Ok(0.0);
    }
    let first = deadline_bandwidth(class, arrival.burst, deadline, higher_reserved, port)?;
    Ok(first.max(arrival.rate))
}

/// Threads minimum-bandwidth allocation from `start` (1-based) down to the
/// lowest class, reusing `idle_slopes[..start-1]` for the higher classes.
/// With `with_rate_term == false` only the deadline term is used.
pub(crate) fn allocate_from(
    start: usize,
    arrivals: &[AffineArrivalCurve],
    deadlines: &[f64],
    idle_slopes: &mut [f64],
    port: PortParams,
    with_rate_term: bool,
) -> Result<(), CalcError> {
    let n = arrivals.len();
    debug_assert_eq!(deadlines.len(), n);
    debug_assert_eq!(idle_slopes.len(), n);
    check_class(start, n)?;
    let mut reserved: f64 = idle_slopes[..start - 1].iter().sum();
    for ci in start - 1..n {
        let class = ci + 1;
        let a = arrivals[ci];
        let idsl = if with_rate_term {
            min_bandwidth(class, a, deadlines[ci], reserved, port)?
        } else {
            deadline_bandwidth(class, a.burst, deadlines[ci], reserved, port)?
        };
        idle_slopes[ci] = idsl;
        reserved += idsl;
    }
    Ok(())
}

/// Minimum idle slopes for every class of one port, allocated from the
/// highest priority down.
pub fn allocate_port(
    arrivals: &[AffineArrivalCurve],
    deadlines: &[f64],
    port: PortParams,
) -> Result<Vec<f64>, CalcError> {
    let mut out = vec![0.0; arrivals.len()];
    if arrivals.is_empty() {
        return Ok(out);
    }
    allocate_from(1, arrivals, deadlines, &mut out, port, true)?;
    Ok(out)
}

/// Bandwidth already committed to meeting the existing deadlines once the
/// candidate flow is counted in its class: the deadline term only, threaded
/// from the highest priority down. `bursts` must already include the
/// candidate.
pub fn already_allocated_bandwidth(
    bursts: &[f64],
    deadlines: &[f64],
    port: PortParams,
) -> Result<Vec<f64>, CalcError> {
    let mut out = Vec::with_capacity(bursts.len());
    let mut reserved = 0.0;
    for (ci, (&b, &d)) in bursts.iter().zip(deadlines).enumerate() {
        let idsl = deadline_bandwidth(ci + 1, b, d, reserved, port)?;
        out.push(idsl);
        reserved += idsl;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FlowId, NodeId};

    const PORT: PortParams = PortParams {
        link_rate: 1e8,
        l_max: 12144.0,
    };

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    fn flow(size: f64, period: f64) -> Flow {
        Flow {
            id: FlowId(0),
            src: NodeId(0),
            dst: NodeId(1),
            size,
            period,
            deadline: 1.0,
            class: 1,
        }
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_arrival(std::iter::empty()), AffineArrivalCurve::default());
        let f = flow(12144.0, 2e-3);
        let one = aggregate_arrival([&f]);
        assert!(rel(one.rate, 6.072e6) < 1e-15);
        assert_eq!(one.burst, 12144.0);
        let two = aggregate_arrival([&f, &f]);
        assert!(rel(two.rate, 1.2144e7) < 1e-15);
        assert_eq!(two.burst, 24288.0);
    }

    #[test]
    fn class_one_service_curve() {
        let s = cbs_service_curve(1, &[1e7], PORT).unwrap();
        assert_eq!(s.rate, 1e7);
        assert!(rel(s.latency, 1.2144e-4) < 1e-12);
        let s = cbs_service_curve(1, &[0.75e8], PORT).unwrap();
        assert_eq!(s.rate, 7.5e7);
        assert!(rel(s.latency, 12144.0 / 1e8) < 1e-12);
    }

    #[test]
    fn saturated_higher_classes() {
        assert!(matches!(
            cbs_service_curve(2, &[1e8, 1e6], PORT),
            Err(CalcError::Saturated { class: 2, .. })
        ));
        assert!(worst_case_delay(2, 1.0, &[1e8, 1e6], PORT).is_err());
    }

    #[test]
    fn delay_example() {
        let d = worst_case_delay(1, 12144.0, &[1.2144e7], PORT).unwrap();
        assert!(rel(d, 1.12144e-3) < 1e-12);
    }

    #[test]
    fn class_one_has_no_blocking_term() {
        for idsl in [1e6, 3e7, 7e7] {
            let d = worst_case_delay(1, 5000.0, &[idsl], PORT).unwrap();
            assert!(rel(d, 5000.0 / idsl + 12144.0 / 1e8) < 1e-14);
        }
    }

    #[test]
    fn min_bandwidth_examples() {
        let a = aggregate_arrival([&flow(12144.0, 2e-3)]);
        let bw = min_bandwidth(1, a, 1.12144e-3, 0.0, PORT).unwrap();
        assert!(rel(bw, 1.2144e7) < 1e-9);
        assert_eq!(min_bandwidth(1, AffineArrivalCurve::default(), 1e-3, 0.0, PORT).unwrap(), 0.0);
        let bw = min_bandwidth(1, a, 10.0, 0.0, PORT).unwrap();
        assert_eq!(bw, a.rate);
    }

    #[test]
    fn deadline_below_floor_is_infeasible() {
        let a = aggregate_arrival([&flow(12144.0, 2e-3)]);
        assert!(matches!(
            min_bandwidth(1, a, 1.0e-4, 0.0, PORT),
            Err(CalcError::InfeasibleDeadline { class: 1, .. })
        ));
    }

    #[test]
    fn allocate_port_examples() {
        let empty = [AffineArrivalCurve::default(); 2];
        assert_eq!(allocate_port(&empty, &[1e-3, 2e-3], PORT).unwrap(), vec![0.0, 0.0]);
        let a = aggregate_arrival([&flow(12144.0, 2e-3)]);
        let out = allocate_port(&[a, AffineArrivalCurve::default()], &[1.12144e-3, 2e-3], PORT).unwrap();
        assert!(rel(out[0], 1.2144e7) < 1e-9);
        assert_eq!(out[1], 0.0);
    }

    #[test]
    fn lower_class_depends_on_higher_allocation() {
        let a = aggregate_arrival([&flow(12144.0, 2e-3)]);
        let b = aggregate_arrival([&flow(8000.0, 5e-3)]);
        let low = allocate_port(&[a, b], &[5e-3, 2e-3], PORT).unwrap();
        let high = allocate_port(&[a, b], &[1.5e-3, 2e-3], PORT).unwrap();
        assert!(high[0] > low[0]);
        assert!(high[1] > low[1]);
    }

    #[test]
    fn already_allocated_uses_deadline_term_only() {
        let out = already_allocated_bandwidth(&[12144.0, 0.0], &[1.12144e-3, 3e-3], PORT).unwrap();
        assert!(rel(out[0], 1.2144e7) < 1e-9);
        assert_eq!(out[1], 0.0);
        // Deadline term may be below the aggregate rate.
        let out = already_allocated_bandwidth(&[12144.0], &[1.0], PORT).unwrap();
        assert!(out[0] < 6.072e6);
    }
}

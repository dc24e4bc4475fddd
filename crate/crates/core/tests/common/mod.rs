#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tsnac_core::model::{FlowRecord, LinkId, NetworkConfig, NetworkGraph, NodeId};
use tsnac_core::netcalc::PortParams;
use tsnac_core::{Flow, FlowId};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `|a − b| ≤ tol · max(|b|, floor)`.
pub fn close(a: f64, b: f64, tol: f64, floor: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(floor)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

pub fn flow(id: u64, size: f64, period: f64) -> Flow {
    Flow {
        id: FlowId(id),
        src: NodeId(0),
        dst: NodeId(1),
        size,
        period,
        deadline: 1.0,
        class: 1,
    }
}

pub fn random_port(rng: &mut ChaCha8Rng) -> PortParams {
    let link_rate = if rng.gen_bool(0.5) { 1e8 } else { 1e9 };
    let l_max = rng.gen_range(64..=1518) as f64 * 8.0;
    PortParams { link_rate, l_max }
}

/// Bisection on a continuous `f` with `f(lo) ≥ 0 ≥ f(hi)`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn field_close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Differences between two configurations; per-field relative tolerance 1e-12.
pub fn config_diff(a: &NetworkConfig, b: &NetworkConfig) -> Vec<String> {
    let mut out = Vec::new();
    if a.ports.len() != b.ports.len() {
        out.push("port count".into());
        return out;
    }
    for (pa, pb) in a.ports.iter().zip(&b.ports) {
        for (ci, (x, y)) in pa.classes.iter().zip(&pb.classes).enumerate() {
            let checks = [
                ("deadline", x.deadline, y.deadline),
                ("idle_slope", x.idle_slope, y.idle_slope),
                ("initial_deadline", x.initial_deadline, y.initial_deadline),
                ("burst_sum", x.burst_sum, y.burst_sum),
                ("rate_sum", x.rate_sum, y.rate_sum),
            ];
            for (name, u, v) in checks {
                if !field_close(u, v) {
                    out.push(format!("{} class {}: {name} {u} vs {v}", pa.link, ci + 1));
                }
            }
            if x.flows != y.flows {
                out.push(format!("{} class {}: resident flows differ", pa.link, ci + 1));
            }
        }
    }
    let ka: Vec<&FlowId> = a.admitted.keys().collect();
    let kb: Vec<&FlowId> = b.admitted.keys().collect();
    if ka != kb {
        out.push("admitted flow sets differ".into());
    } else {
        for (id, ra) in &a.admitted {
            let rb: &FlowRecord = &b.admitted[id];
            if ra != rb {
                out.push(format!("record of flow {id} differs"));
            }
        }
    }
    out
}

/// Links of a configuration whose records differ, with the lowest differing class.
pub fn changed_ports(a: &NetworkConfig, b: &NetworkConfig) -> Vec<(LinkId, usize)> {
    a.ports
        .iter()
        .zip(&b.ports)
        .filter_map(|(pa, pb)| {
            pa.classes
                .iter()
                .zip(&pb.classes)
                .position(|(x, y)| x != y)
                .map(|c| (pa.link, c + 1))
        })
        .collect()
}

/// A random single-port delay-bound instance.
#[derive(Clone, Debug)]
pub struct DelayInstance {
    pub class: usize,
    pub flows: Vec<Flow>,
    pub idle_slopes: Vec<f64>,
    pub port: PortParams,
}

/// Classes 1..=8, 1..=6 flows, higher classes reserving less than `C`, and
/// an idle slope for the class under test at or above its aggregate rate.
pub fn random_delay_instance(rng: &mut ChaCha8Rng) -> DelayInstance {
    let port = random_port(rng);
    let c = port.link_rate;
    let class = rng.gen_range(1..=8usize);
    let n_flows = rng.gen_range(1..=6);
    let flows: Vec<Flow> = (0..n_flows)
        .map(|k| {
            let size = rng.gen_range(64..=(port.l_max as u32 / 8)) as f64 * 8.0;
            let period = rng.gen_range(1e-4..1e-2);
            flow(k as u64, size, period)
        })
        .collect();
    let rate: f64 = flows.iter().map(|f| f.rate()).sum();
    let higher_total = rng.gen_range(0.0..0.9) * c;
    let mut idle_slopes: Vec<f64> = (1..class).map(|_| rng.gen_range(0.1..1.0)).collect();
    let s: f64 = idle_slopes.iter().sum();
    for x in &mut idle_slopes {
        *x *= higher_total / s;
    }
    idle_slopes.push(rate * rng.gen_range(1.0..20.0));
    DelayInstance {
        class,
        flows,
        idle_slopes,
        port,
    }
}

/// Latency of the CBS rate-latency curve written out term by term:
/// `[Σ_{j<i} (idSl_j − C)·l/C − l] / (Σ_{j<i} idSl_j − C)`, clamped at 0.
pub fn cbs_latency_oracle(class: usize, idle_slopes: &[f64], c: f64, l_max: f64) -> f64 {
    let higher = &idle_slopes[..class - 1];
    let mut numerator = 0.0;
    for &idsl in higher {
        let send_slope = idsl - c;
        numerator += send_slope * l_max / c;
    }
    numerator -= l_max;
    let denominator: f64 = higher.iter().sum::<f64>() - c;
    (numerator / denominator).max(0.0)
}

/// Smallest `d ≥ 0` with `service(t + d) ≥ demand`, by bisection.
fn delay_at(service: &impl Fn(f64) -> f64, t: f64, demand: f64) -> f64 {
    if service(t) >= demand {
        return 0.0;
    }
    let mut hi = 1e-9;
    while service(t + hi) < demand {
        hi *= 2.0;
    }
    let (mut lo, mut hi) = (0.0_f64, hi);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if service(t + mid) >= demand {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Maximum horizontal distance between an affine arrival curve and a
/// rate-latency service curve, sampled over `[0⁺, horizon]`.
pub fn horizontal_deviation(rate: f64, burst: f64, service_rate: f64, latency: f64, horizon: f64) -> f64 {
    let arrival = |t: f64| if t > 0.0 { rate * t + burst } else { 0.0 };
    let service = |t: f64| service_rate * (t - latency).max(0.0);
    let mut worst: f64 = 0.0;
    for k in 0..=400 {
        let t = if k == 0 { f64::MIN_POSITIVE } else { horizon * k as f64 / 400.0 };
        worst = worst.max(delay_at(&service, t, arrival(t)));
    }
    worst
}

/// Random port context for a flow of class `class` among `n` classes, with
/// deadlines chosen so that the already-allocated bandwidth stays below
/// `idSl_max` and the lower classes may be empty.
pub fn random_context(rng: &mut ChaCha8Rng) -> tsnac_core::adjust::PortAdjustContext {
    let port = PortParams {
        link_rate: if rng.gen_bool(0.5) { 1e8 } else { 1e9 },
        l_max: 12144.0,
    };
    let c = port.link_rate;
    let n = rng.gen_range(1..=8usize);
    let class = rng.gen_range(1..=n);
    let mut bursts = Vec::with_capacity(n);
    let mut deadlines = Vec::with_capacity(n);
    let mut reserved = 0.0;
    for k in 1..=n {
        let empty = k != class && rng.gen_bool(0.25);
        let burst = if empty {
            0.0
        } else {
            rng.gen_range(64..=1518 * 4) as f64 * 8.0
        };
        let floor = tsnac_core::netcalc::latency_floor(k, reserved, port).unwrap();
        if empty {
            deadlines.push(floor + rng.gen_range(1e-4..5e-3));
            bursts.push(0.0);
            continue;
        }
        let bar = rng.gen_range(0.02..0.6) * 0.75 * c / n as f64;
        deadlines.push(floor + burst / bar);
        bursts.push(burst);
        reserved += bar;
    }
    let link = LinkId(NodeId(0), NodeId(1));
    tsnac_core::adjust::PortAdjustContext::new(link, class, bursts, deadlines, 0.75 * c, port).unwrap()
}

/// Flow with explicit endpoints, class and deadline.
pub fn flow_between(id: u64, src: NodeId, dst: NodeId, size: f64, period: f64, deadline: f64, class: u8) -> Flow {
    Flow {
        id: FlowId(id),
        src,
        dst,
        size,
        period,
        deadline,
        class,
    }
}

pub fn class_config(n_avb: u8) -> tsnac_core::model::ClassConfig {
    tsnac_core::model::ClassConfig {
        n_avb,
        ..Default::default()
    }
}

/// `es0 − sw1 − {sw2, sw3} − sw4 − es5`, plus `es6` on sw2 and `es7` on sw4.
/// Node ids follow that order.
pub fn diamond() -> NetworkGraph {
    let mut b = tsnac_core::model::GraphBuilder::new();
    let es0 = b.end_system();
    let sw: Vec<NodeId> = (0..4).map(|_| b.switch()).collect();
    let es5 = b.end_system();
    let es6 = b.end_system();
    let es7 = b.end_system();
    b.bidirectional(es0, sw[0], 1e8)
        .bidirectional(sw[0], sw[1], 1e8)
        .bidirectional(sw[0], sw[2], 1e8)
        .bidirectional(sw[1], sw[3], 1e8)
        .bidirectional(sw[2], sw[3], 1e8)
        .bidirectional(sw[3], es5, 1e8)
        .bidirectional(es6, sw[1], 1e8)
        .bidirectional(es7, sw[3], 1e8);
    b.build().unwrap()
}

/// `es0 − sw1 − es2`.
pub fn line() -> NetworkGraph {
    let mut b = tsnac_core::model::GraphBuilder::new();
    let a = b.end_system();
    let s = b.switch();
    let z = b.end_system();
    b.bidirectional(a, s, 1e8).bidirectional(s, z, 1e8);
    b.build().unwrap()
}

/// Minimum idle slopes over a whole port, written out per class:
/// `max(B_k / (D_k − l/C − (k−1)·l/(C − Σ_{j<k} s_j)), R_k)`, zero for empty classes.
/// `None` when some class cannot meet its deadline.
pub fn whole_port_allocation(bursts: &[f64], rates: &[f64], deadlines: &[f64], c: f64, l: f64) -> Option<Vec<f64>> {
    let mut s: Vec<f64> = Vec::new();
    for k in 0..bursts.len() {
        if bursts[k] == 0.0 {
            s.push(0.0);
            continue;
        }
        let above: f64 = s.iter().sum();
        if above >= c {
            return None;
        }
        let floor = l / c + k as f64 * l / (c - above);
        if deadlines[k] <= floor {
            return None;
        }
        s.push((bursts[k] / (deadlines[k] - floor)).max(rates[k]));
    }
    Some(s)
}

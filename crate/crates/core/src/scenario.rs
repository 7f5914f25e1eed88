//! Indoor two-operator topology: base-station placement, terminal drop, cell
//! selection and per-step technology assignment.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::{Layout, RadioConfig, ScenarioConfig, SimConfig, Step};
use crate::kernel::RngStream;
use crate::radio::{noise_floor_dbm, rx_power_dbm, NodeId, Operator, Position, RadioNode, Role, Technology};

/// Base-station positions for operators A and B.
pub fn bs_positions(s: &ScenarioConfig) -> Result<[Vec<Position>; 2], String> {
    let [w, h] = s.bounds_m;
    let z = s.bs_height_m;
    let n = s.bs_per_operator;
    let (a, b): (Vec<Position>, Vec<Position>) = match s.layout {
        Layout::Indoor => {
            let x0 = (w - (n as f64 - 1.0) * s.bs_spacing_m) / 2.0;
            (0..n)
                .map(|k| {
                    let x = x0 + k as f64 * s.bs_spacing_m;
                    (Position::new(x, h / 2.0, z), Position::new(x + s.operator_b_offset_m, h / 2.0, z))
                })
                .unzip()
        }
        Layout::Corner => {
            if n != 4 {
                return Err(format!("corner layout needs 4 base stations per operator, got {n}"));
            }
            let corners = [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)];
            corners
                .iter()
                .map(|&(x, y)| {
                    let inward = if x == 0.0 { s.operator_b_offset_m } else { -s.operator_b_offset_m };
                    (Position::new(x, y, z), Position::new(x + inward, y, z))
                })
                .unzip()
        }
    };
    for p in a.iter().chain(b.iter()) {
        if !(0.0..=w).contains(&p.x) || !(0.0..=h).contains(&p.y) {
            return Err(format!("base station at ({}, {}) lies outside {}x{} m", p.x, p.y, w, h));
        }
    }
    Ok([a, b])
}

/// Uniform i.i.d. positions strictly inside the rectangle.
pub fn drop_terminals(bounds: [f64; 2], n: usize, z: f64, rng: &mut RngStream) -> Vec<Position> {
    let mut open = |len: f64| loop {
        let u = rng.uniform();
        if u > 0.0 {
            return u * len;
        }
    };
    (0..n)
        .map(|_| {
            let x = open(bounds[0]);
            let y = open(bounds[1]);
            Position::new(x, y, z)
        })
        .collect()
}

/// Serving base station of every terminal: strongest same-operator base
/// station, lowest id on ties. Base stations map to `None`.
pub fn associate(nodes: &[RadioNode]) -> Vec<Option<NodeId>> {
    nodes
        .iter()
        .map(|t| {
            if t.role != Role::Terminal {
                return None;
            }
            let mut best: Option<(NodeId, f64)> = None;
            for b in nodes.iter().filter(|b| b.role == Role::Bs && b.operator == t.operator) {
                let p = rx_power_dbm(b.tx_power_dbm, b, t);
                if best.is_none_or(|(_, bp)| p > bp) {
                    best = Some((b.id, p));
                }
            }
            best.map(|(id, _)| id)
        })
        .collect()
}

pub fn technology(step: Step, operator: Operator) -> Technology {
    match (step, operator) {
        (Step::Two, Operator::A) => Technology::Laa,
        _ => Technology::Wifi,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub bounds_m: [f64; 2],
    pub step: Step,
    pub nodes: Vec<RadioNode>,
    /// Indexed by node id; `None` for base stations.
    pub serving: Vec<Option<NodeId>>,
}

impl Topology {
    /// Builds the geometry for `cfg.seed`. Node ids and positions depend only
    /// on the seed and scenario keys, never on the step.
    pub fn build(cfg: &SimConfig) -> Result<Self, String> {
        let s = &cfg.scenario;
        let bs = bs_positions(s)?;
        let mut nodes = Vec::with_capacity(2 * (s.bs_per_operator + s.ues_per_operator));
        let radio = &cfg.radio;
        let mk = |id: usize, op: Operator, role: Role, position: Position, radio: &RadioConfig| {
            let (tx, gain) = match role {
                Role::Bs => (radio.bs_tx_power_dbm, radio.bs_antenna_gain_dbi),
                Role::Terminal => (radio.terminal_tx_power_dbm, radio.terminal_antenna_gain_dbi),
            };
            RadioNode {
                id: NodeId(id as u16),
                operator: op,
                role,
                technology: technology(cfg.step, op),
                position,
                tx_power_dbm: tx,
                antenna_gain_dbi: gain,
                noise_figure_db: radio.noise_figure_db,
            }
        };
        for op in Operator::ALL {
            for &p in &bs[op.index()] {
                nodes.push(mk(nodes.len(), op, Role::Bs, p, radio));
            }
        }
        for op in Operator::ALL {
            let mut rng = RngStream::new(cfg.seed, &format!("scenario/drop/{}", op.label()));
            for p in drop_terminals(s.bounds_m, s.ues_per_operator, s.terminal_height_m, &mut rng) {
                nodes.push(mk(nodes.len(), op, Role::Terminal, p, radio));
            }
        }
        let serving = associate(&nodes);
        Ok(Topology { bounds_m: s.bounds_m, step: cfg.step, nodes, serving })
    }

    pub fn base_stations(&self, op: Operator) -> impl Iterator<Item = &RadioNode> {
        self.nodes.iter().filter(move |n| n.role == Role::Bs && n.operator == op)
    }

    pub fn terminals(&self, op: Operator) -> impl Iterator<Item = &RadioNode> {
        self.nodes.iter().filter(move |n| n.role == Role::Terminal && n.operator == op)
    }

    pub fn served_by(&self, bs: NodeId) -> Vec<NodeId> {
        self.serving
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == Some(bs))
            .map(|(i, _)| NodeId(i as u16))
            .collect()
    }

    /// Mean distance between each terminal and its serving base station.
    pub fn mean_serving_distance(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0;
        for (i, s) in self.serving.iter().enumerate() {
            if let Some(b) = s {
                sum += self.nodes[i].position.distance(&self.nodes[b.index()].position);
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Base-station pairs that cannot sense each other yet interfere at a
    /// terminal served by one of them (interference at or above that
    /// terminal's noise floor).
    pub fn hidden_pairs(&self, wifi_ed_dbm: f64, wifi_pd_dbm: f64, laa_ed_dbm: f64) -> usize {
        let senses = |listener: &RadioNode, source: &RadioNode| {
            let p = rx_power_dbm(source.tx_power_dbm, source, listener);
            match (listener.technology, source.technology) {
                (Technology::Wifi, Technology::Wifi) => p >= wifi_pd_dbm,
                (Technology::Wifi, Technology::Laa) => p >= wifi_ed_dbm,
                (Technology::Laa, _) => p >= laa_ed_dbm,
            }
        };
        let bss: Vec<&RadioNode> = self.nodes.iter().filter(|n| n.role == Role::Bs).collect();
        let mut count = 0;
        for (i, a) in bss.iter().enumerate() {
            for b in &bss[i + 1..] {
                if senses(a, b) || senses(b, a) {
                    continue;
                }
                let victim = self.serving.iter().enumerate().any(|(t, s)| {
                    let term = &self.nodes[t];
                    let hit = |serving: &RadioNode, other: &RadioNode| {
                        *s == Some(serving.id)
                            && rx_power_dbm(other.tx_power_dbm, other, term) >= noise_floor_dbm(term.noise_figure_db)
                    };
                    hit(a, b) || hit(b, a)
                });
                if victim {
                    count += 1;
                }
            }
        }
        count
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry() {
        let s = ScenarioConfig::default();
        let [a, b] = bs_positions(&s).unwrap();
        let xs: Vec<f64> = a.iter().map(|p| p.x).collect();
        assert_eq!(xs, [15.0, 45.0, 75.0, 105.0]);
        assert!(a.iter().all(|p| p.y == 25.0 && p.z == 6.0));
        assert_eq!(b[0].x, 25.0);
    }

    #[test]
    fn out_of_bounds_rejected() {
        let s = ScenarioConfig { bounds_m: [60.0, 50.0], ..Default::default() };
        assert!(bs_positions(&s).is_err());
    }

    #[test]
    fn step_assignment() {
        let mut cfg = SimConfig::default();
        let t1 = Topology::build(&cfg).unwrap();
        cfg.step = Step::Two;
        let t2 = Topology::build(&cfg).unwrap();
        assert_eq!(t1.nodes.len(), 48);
        let laa = t2.nodes.iter().filter(|n| n.technology == Technology::Laa && n.role == Role::Bs).count();
        assert_eq!(laa, 4);
        assert!(t1.nodes.iter().all(|n| n.technology == Technology::Wifi));
        for (x, y) in t1.nodes.iter().zip(&t2.nodes) {
            assert_eq!(x.position, y.position);
        }
        assert_eq!(t1.serving, t2.serving);
    }

    #[test]
    fn tie_goes_to_lowest_id() {
        let radio = RadioConfig::default();
        let mk = |id: u16, role, x| RadioNode {
            id: NodeId(id),
            operator: Operator::A,
            role,
            technology: Technology::Wifi,
            position: Position::new(x, 0.0, 0.0),
            tx_power_dbm: radio.bs_tx_power_dbm,
            antenna_gain_dbi: 0.0,
            noise_figure_db: 9.0,
        };
        let nodes = [mk(0, Role::Bs, -5.0), mk(1, Role::Bs, 5.0), mk(2, Role::Terminal, 0.0)];
        assert_eq!(associate(&nodes)[2], Some(NodeId(0)));
    }
}

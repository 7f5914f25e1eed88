//! Flows, packets and the transport glue between the server and the radio
//! queues.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::{TrafficModel, Transport};
use crate::kernel::RngStream;
use crate::metrics::flow_throughput_bps;
use crate::radio::{NodeId, Operator, Technology};
use crate::time::SimTime;
use crate::traffic::{
    cbr_interval, ftp_arrivals, outage_fraction, InOrderRelease, Piece, RlcMode, TcpReceiver, TcpSegment, TcpSender,
};

use super::wifi_node::Item;
use super::{Ev, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowClass {
    Ftp,
    Voice,
    Cbr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(super) enum PacketState {
    Pending,
    Delivered,
    Dropped,
}

/// One network-layer packet (or TCP segment copy) of a flow.
#[derive(Clone, Debug)]
pub(super) struct Packet {
    pub flow: u32,
    pub bytes: u32,
    pub born: SimTime,
    /// TCP segment number; packet index for UDP.
    pub seq: u32,
    pub state: PacketState,
    /// Bytes of this packet decoded so far over the LAA link.
    pub received: u32,
    pub rlc_sn: u32,
}

#[derive(Clone, Debug)]
pub(super) struct TcpConn {
    pub sender: TcpSender,
    pub receiver: TcpReceiver,
    pub rto_generation: u32,
    pub rto_at: Option<SimTime>,
}

#[derive(Clone, Debug)]
pub(super) struct Flow {
    pub id: u32,
    pub class: FlowClass,
    pub operator: Operator,
    pub technology: Technology,
    pub dest: NodeId,
    pub bs: NodeId,
    pub arrival: SimTime,
    /// File size for FTP; zero for streams.
    pub bytes: u64,
    pub completion: Option<SimTime>,
    /// Distinct application bytes delivered.
    pub delivered_distinct: u64,
    /// Byte copies handed to the network, delivered and dropped.
    pub offered: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub packets_sent: u64,
    pub packets_delivered: u64,
    pub packets_dropped: u64,
    pub total_packets: u64,
    /// Delivery latencies of packets created after warm-up.
    pub latencies: Vec<SimTime>,
    pub tcp: Option<TcpConn>,
    pub interval: SimTime,
    pub packet_bytes: u32,
}

impl Flow {
    fn resolved(&self) -> u64 {
        self.packets_delivered + self.packets_dropped
    }
}

/// Per-terminal RLC receive state.
#[derive(Clone, Debug, Default)]
pub(super) struct LinkRx {
    pub next_sn: u32,
    pub order: InOrderRelease,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub id: u32,
    pub operator: Operator,
    pub technology: Technology,
    pub destination: NodeId,
    pub arrival: SimTime,
    pub completion: Option<SimTime>,
    pub bytes: u64,
    pub delivered_bytes: u64,
    pub dropped_bytes: u64,
    pub throughput_bps: Option<f64>,
    pub mean_latency_ms: Option<f64>,
    /// Arrived after warm-up and therefore part of the statistics.
    pub counted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub id: u32,
    pub class: FlowClass,
    pub operator: Operator,
    pub technology: Technology,
    pub destination: NodeId,
    pub packets_sent: u64,
    pub packets_delivered: u64,
    pub packets_dropped: u64,
    pub mean_latency_ms: Option<f64>,
    /// Share of delivered packets above the voice latency bound.
    pub outage: Option<f64>,
}

fn mean_ms(v: &[SimTime]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    Some(v.iter().map(|t| t.as_millis_f64()).sum::<f64>() / v.len() as f64)
}

impl World {
    pub(super) fn init_traffic(&mut self) {
        let tcfg = self.cfg.traffic.clone();
        let voice = self.voice_terminals();
        if matches!(tcfg.model, TrafficModel::Ftp1 | TrafficModel::Ftp1Voice) {
            for op in Operator::ALL {
                let dests: Vec<NodeId> =
                    self.topo.terminals(op).map(|n| n.id).filter(|id| !voice.contains(id)).collect();
                let mut arr = RngStream::new(self.cfg.seed, &format!("traffic/{}/arrivals", op.label()));
                let mut dst = RngStream::new(self.cfg.seed, &format!("traffic/{}/destinations", op.label()));
                for (t, d) in ftp_arrivals(tcfg.lambda, self.t_end, dests.len(), &mut arr, &mut dst) {
                    let id = self.new_flow(FlowClass::Ftp, dests[d], t, tcfg.file_bytes);
                    self.schedule_at(t, Ev::FtpArrival { flow: id });
                }
            }
        }
        let mut streams: Vec<(FlowClass, NodeId, SimTime, u32)> = Vec::new();
        for &v in &voice {
            let interval = SimTime::from_millis_f64(tcfg.voice_interval_ms);
            streams.push((FlowClass::Voice, v, interval, tcfg.voice_packet_bytes));
        }
        if tcfg.model == TrafficModel::Cbr {
            if let Some(interval) = cbr_interval(tcfg.cbr_rate_bps, tcfg.cbr_packet_bytes) {
                for op in Operator::ALL {
                    for n in self.topo.terminals(op) {
                        streams.push((FlowClass::Cbr, n.id, interval, tcfg.cbr_packet_bytes));
                    }
                }
            }
        }
        for (class, dest, interval, bytes) in streams {
            let mut rng = RngStream::new(self.cfg.seed, &format!("traffic/stream/{}", dest.0));
            let phase = SimTime::from_nanos(rng.uniform_int(0, interval.as_nanos() as i64 - 1) as u64);
            let id = self.new_flow(class, dest, SimTime::ZERO, 0);
            let f = &mut self.flows[id as usize];
            f.interval = interval;
            f.packet_bytes = bytes;
            self.schedule_at(phase, Ev::StreamPacket { flow: id });
        }
    }

    fn new_flow(&mut self, class: FlowClass, dest: NodeId, arrival: SimTime, bytes: u64) -> u32 {
        let id = self.flows.len() as u32;
        let node = &self.topo.nodes[dest.index()];
        let bs = self.topo.serving[dest.index()].expect("terminal has a serving base station");
        self.flows.push(Flow {
            id,
            class,
            operator: node.operator,
            technology: node.technology,
            dest,
            bs,
            arrival,
            bytes,
            completion: None,
            delivered_distinct: 0,
            offered: 0,
            delivered: 0,
            dropped: 0,
            packets_sent: 0,
            packets_delivered: 0,
            packets_dropped: 0,
            total_packets: 0,
            latencies: Vec::new(),
            tcp: None,
            interval: SimTime::ZERO,
            packet_bytes: 0,
        });
        id
    }

    fn new_packet(&mut self, flow: u32, seq: u32, bytes: u32) -> u32 {
        let pid = self.packets.len() as u32;
        let now = self.sched.now();
        self.packets.push(Packet {
            flow,
            bytes,
            born: now,
            seq,
            state: PacketState::Pending,
            received: 0,
            rlc_sn: 0,
        });
        let f = &mut self.flows[flow as usize];
        f.offered += bytes as u64;
        f.packets_sent += 1;
        pid
    }

    pub(super) fn ftp_arrival(&mut self, flow: u32) {
        let now = self.sched.now();
        let bytes = self.flows[flow as usize].bytes;
        match self.transport() {
            Transport::Udp => {
                let size = self.cfg.traffic.packet_bytes as u64;
                let n = bytes.div_ceil(size);
                self.flows[flow as usize].total_packets = n;
                for k in 0..n {
                    let b = size.min(bytes - k * size) as u32;
                    let pid = self.new_packet(flow, k as u32, b);
                    self.enqueue_downlink(pid);
                }
                if n == 0 {
                    self.flows[flow as usize].completion = Some(now);
                }
            }
            Transport::Tcp => {
                let mut sender = TcpSender::new(bytes, self.cfg.tcp.params());
                let receiver = TcpReceiver::new(sender.total_segments());
                let segs = sender.poll(now);
                self.flows[flow as usize].tcp =
                    Some(TcpConn { sender, receiver, rto_generation: 0, rto_at: None });
                self.send_segments(flow, segs);
            }
        }
    }

    fn send_segments(&mut self, flow: u32, segs: Vec<TcpSegment>) {
        let at = self.sched.now() + SimTime::from_millis_f64(self.cfg.delays.server_ms);
        for s in segs {
            let pid = self.new_packet(flow, s.seq, s.bytes);
            self.schedule_at(at, Ev::AtBs { packet: pid });
        }
        self.arm_rto(flow);
    }

    fn arm_rto(&mut self, flow: u32) {
        let Some(conn) = self.flows[flow as usize].tcp.as_mut() else { return };
        let deadline = conn.sender.rto_deadline();
        if deadline == conn.rto_at {
            return;
        }
        conn.rto_generation += 1;
        conn.rto_at = deadline;
        let generation = conn.rto_generation;
        if let Some(d) = deadline {
            self.schedule_at(d, Ev::Rto { flow, generation });
        }
    }

    pub(super) fn tcp_rto(&mut self, flow: u32, generation: u32) {
        let now = self.sched.now();
        let Some(conn) = self.flows[flow as usize].tcp.as_mut() else { return };
        if conn.rto_generation != generation || conn.sender.is_done() {
            return;
        }
        conn.rto_at = None;
        let segs = conn.sender.on_rto(now);
        self.send_segments(flow, segs);
    }

    pub(super) fn tcp_ack_at_server(&mut self, flow: u32, ack: u32) {
        let now = self.sched.now();
        let Some(conn) = self.flows[flow as usize].tcp.as_mut() else { return };
        let segs = conn.sender.on_ack(now, ack);
        self.send_segments(flow, segs);
    }

    pub(super) fn stream_packet(&mut self, flow: u32) {
        let now = self.sched.now();
        let (interval, bytes) = {
            let f = &self.flows[flow as usize];
            (f.interval, f.packet_bytes)
        };
        let seq = self.flows[flow as usize].packets_sent as u32;
        let pid = self.new_packet(flow, seq, bytes);
        self.enqueue_downlink(pid);
        if now + interval < self.t_end {
            self.schedule_at(now + interval, Ev::StreamPacket { flow });
        }
    }

    /// Hands a packet to the downlink queue of its serving base station.
    pub(super) fn enqueue_downlink(&mut self, pid: u32) {
        let p = &self.packets[pid as usize];
        let f = &self.flows[p.flow as usize];
        let (bs, dest, bytes, voice) = (f.bs, f.dest, p.bytes, f.class == FlowClass::Voice);
        match self.technology_of(bs) {
            Technology::Wifi => self.wifi_enqueue(bs, dest, Item::Packet(pid), usize::from(voice)),
            Technology::Laa => {
                let link = &mut self.links[dest.index()];
                self.packets[pid as usize].rlc_sn = link.next_sn;
                link.next_sn += 1;
                self.laa_enqueue(bs, dest, Piece { packet: pid, bytes });
            }
        }
    }

    /// RLC reassembly at a UE for pieces carried by a decoded transport block.
    pub(super) fn rlc_receive(&mut self, ue: NodeId, pieces: &[Piece]) {
        for piece in pieces {
            let p = &mut self.packets[piece.packet as usize];
            if p.state != PacketState::Pending {
                continue;
            }
            p.received += piece.bytes;
            if p.received < p.bytes {
                continue;
            }
            let sn = p.rlc_sn;
            match self.rlc_mode {
                RlcMode::Um => self.deliver_packet(piece.packet),
                RlcMode::Am => {
                    for q in self.links[ue.index()].order.complete(sn, piece.packet) {
                        self.deliver_packet(q);
                    }
                }
            }
        }
    }

    /// A packet reached its destination terminal.
    pub(super) fn deliver_packet(&mut self, pid: u32) {
        let now = self.sched.now();
        let p = &mut self.packets[pid as usize];
        if p.state != PacketState::Pending {
            return;
        }
        p.state = PacketState::Delivered;
        let (flow, seq, bytes, born) = (p.flow, p.seq, p.bytes, p.born);
        let warmup = self.warmup;
        let f = &mut self.flows[flow as usize];
        f.delivered += bytes as u64;
        f.packets_delivered += 1;
        if born >= warmup {
            f.latencies.push(now - born);
        }
        if let Some(conn) = f.tcp.as_mut() {
            let before = conn.receiver.next_expected();
            let (ack, _) = conn.receiver.on_segment(seq);
            if ack > before {
                let new: u64 = (before..ack).map(|s| conn.sender.segment_bytes(s) as u64).sum();
                f.delivered_distinct += new;
            }
            if conn.receiver.is_complete() && f.completion.is_none() {
                f.completion = Some(now);
            }
            let (dest, bs, tech) = (f.dest, f.bs, f.technology);
            self.send_tcp_ack(flow, ack, dest, bs, tech);
            return;
        }
        f.delivered_distinct += bytes as u64;
        if f.class == FlowClass::Ftp && f.completion.is_none() && f.resolved() == f.total_packets {
            f.completion = Some(now);
        }
    }

    fn send_tcp_ack(&mut self, flow: u32, ack: u32, dest: NodeId, bs: NodeId, tech: Technology) {
        let now = self.sched.now();
        match tech {
            Technology::Laa => {
                let d = SimTime::from_millis_f64(self.cfg.delays.licensed_uplink_ms + self.cfg.delays.server_ms);
                self.schedule_at(now + d, Ev::AckAtServer { flow, ack });
            }
            Technology::Wifi => self.wifi_enqueue(dest, bs, Item::TcpAck { flow, ack }, 0),
        }
    }

    /// A TCP ACK crossed the Wi-Fi uplink and reached the AP.
    pub(super) fn tcp_ack_uplinked(&mut self, flow: u32, ack: u32) {
        let d = SimTime::from_millis_f64(self.cfg.delays.server_ms);
        let now = self.sched.now();
        self.schedule_at(now + d, Ev::AckAtServer { flow, ack });
    }

    /// A packet was abandoned by the MAC or RLC.
    pub(super) fn drop_packet(&mut self, pid: u32) {
        let now = self.sched.now();
        let p = &mut self.packets[pid as usize];
        if p.state != PacketState::Pending {
            return;
        }
        p.state = PacketState::Dropped;
        let f = &mut self.flows[p.flow as usize];
        f.dropped += p.bytes as u64;
        f.packets_dropped += 1;
        if f.tcp.is_none() && f.class == FlowClass::Ftp && f.completion.is_none() && f.resolved() == f.total_packets {
            f.completion = Some(now);
        }
    }

    pub(super) fn audit_flows(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut pending = alloc::vec![0u64; self.flows.len()];
        for p in &self.packets {
            if p.state == PacketState::Pending {
                pending[p.flow as usize] += p.bytes as u64;
            }
        }
        for f in &self.flows {
            if f.offered != f.delivered + f.dropped + pending[f.id as usize] {
                v.push(format!(
                    "flow {}: offered {} != delivered {} + dropped {} + pending {}",
                    f.id, f.offered, f.delivered, f.dropped, pending[f.id as usize]
                ));
            }
            if f.class == FlowClass::Ftp && f.delivered_distinct > f.bytes {
                v.push(format!("flow {}: {} distinct bytes of a {}-byte file", f.id, f.delivered_distinct, f.bytes));
            }
        }
        v
    }

    pub(super) fn flow_records(&self) -> (Vec<FlowRecord>, Vec<StreamRecord>) {
        let mut flows = Vec::new();
        let mut streams = Vec::new();
        let outage_bound = SimTime::from_millis_f64(self.cfg.traffic.voice_outage_ms);
        for f in &self.flows {
            match f.class {
                FlowClass::Ftp => flows.push(FlowRecord {
                    id: f.id,
                    operator: f.operator,
                    technology: f.technology,
                    destination: f.dest,
                    arrival: f.arrival,
                    completion: f.completion,
                    bytes: f.bytes,
                    delivered_bytes: f.delivered_distinct,
                    dropped_bytes: f.dropped,
                    throughput_bps: f
                        .completion
                        .and_then(|c| flow_throughput_bps(f.delivered_distinct, f.arrival, c)),
                    mean_latency_ms: mean_ms(&f.latencies),
                    counted: f.arrival >= self.warmup,
                }),
                FlowClass::Voice | FlowClass::Cbr => streams.push(StreamRecord {
                    id: f.id,
                    class: f.class,
                    operator: f.operator,
                    technology: f.technology,
                    destination: f.dest,
                    packets_sent: f.packets_sent,
                    packets_delivered: f.packets_delivered,
                    packets_dropped: f.packets_dropped,
                    mean_latency_ms: mean_ms(&f.latencies),
                    outage: (f.class == FlowClass::Voice && !f.latencies.is_empty())
                        .then(|| outage_fraction(&f.latencies, outage_bound)),
                }),
            }
        }
        (flows, streams)
    }
}

//! Structured per-run event records.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::radio::{NodeId, TxKind};
use crate::time::SimTime;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RxOutcome {
    pub node: NodeId,
    pub sinr_db: f64,
    pub success: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TxRecord {
    pub id: u64,
    pub node: NodeId,
    pub kind: TxKind,
    pub start: SimTime,
    pub duration: SimTime,
    pub power_dbm: f64,
    pub mcs: Option<u8>,
    pub outcomes: Vec<RxOutcome>,
    /// Another transmission was on air during part of this one.
    pub overlapped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    BackoffDraw { t: SimTime, node: NodeId, value: u32, window: u32 },
    CwsChange { t: SimTime, node: NodeId, from: u32, to: u32, nacks: usize, feedbacks: usize },
    HarqFeedback { t: SimTime, node: NodeId, ue: NodeId, tb: u64, ack: bool, attempt: u32 },
    Tx(TxRecord),
}

impl LogRecord {
    pub fn time(&self) -> SimTime {
        match self {
            LogRecord::BackoffDraw { t, .. } | LogRecord::CwsChange { t, .. } | LogRecord::HarqFeedback { t, .. } => *t,
            LogRecord::Tx(r) => r.start,
        }
    }
}

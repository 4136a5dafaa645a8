//! Session protocol messages. Each websocket text frame carries one JSON
//! object terminated by a newline.

use serde::{Deserialize, Serialize};

use scoreforge_core::compile::ConstraintGraph;
use scoreforge_core::scheduler::{StateSnapshot, TriggerOutcome, TriggerPolicy};
use scoreforge_core::score::Score;
use scoreforge_core::time::Bound;

use crate::tables::action_name;

/// A tick count or `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TickBound {
    Tick(u64),
    Inf(Inf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Inf {
    #[serde(rename = "inf")]
    Inf,
}

impl From<Bound> for TickBound {
    fn from(b: Bound) -> Self {
        match b {
            Bound::Finite(t) => TickBound::Tick(t),
            Bound::Infinite => TickBound::Inf(Inf::Inf),
        }
    }
}

impl From<TickBound> for Bound {
    fn from(b: TickBound) -> Self {
        match b {
            TickBound::Tick(t) => Bound::Finite(t),
            TickBound::Inf(_) => Bound::Infinite,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello(Hello),
    Snapshot(Snapshot),
    Error { message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub score: String,
    pub tick_ms: u32,
    pub sample_rate: u32,
    pub policy: String,
    pub objects: Vec<ObjectInfo>,
    pub interactive: Vec<InteractiveInfo>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectInfo {
    pub id: String,
    pub parent: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractiveInfo {
    pub id: String,
    pub point: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub running: bool,
    pub completed: bool,
    pub phases: Vec<PhaseEntry>,
    pub interactive: Vec<InteractiveState>,
    pub events: Vec<EventEntry>,
    pub acks: Vec<Ack>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseEntry {
    pub object: String,
    pub phase: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractiveState {
    pub id: String,
    pub point: String,
    /// `waiting`, `deferred`, `fixed` or `canceled`.
    pub status: String,
    pub earliest_tick: Option<u64>,
    pub latest_tick: Option<TickBound>,
    pub fixed_tick: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventEntry {
    pub target: String,
    pub action: String,
    pub sample_time: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub interactive_id: String,
    pub tick: u64,
    /// `fixed`, `deferred` or `rejected`.
    pub outcome: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_tick: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub until_tick: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Trigger { interactive_id: String },
    Transport { action: TransportAction },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportAction {
    Start,
    Stop,
}

impl Hello {
    pub fn new(score: &Score, graph: &ConstraintGraph, policy: TriggerPolicy) -> Self {
        Hello {
            score: score.name.clone(),
            tick_ms: score.tick_ms,
            sample_rate: score.sample_rate,
            policy: policy.as_str().into(),
            objects: score
                .objects
                .iter()
                .map(|o| ObjectInfo {
                    id: o.id.to_string(),
                    parent: o.parent.as_ref().map(|p| p.to_string()),
                })
                .collect(),
            interactive: score
                .interactive
                .iter()
                .map(|ip| InteractiveInfo {
                    id: ip.id.clone(),
                    point: graph
                        .point(&ip.binds)
                        .map(|p| graph.label(p))
                        .unwrap_or_else(|| ip.binds.to_string()),
                })
                .collect(),
        }
    }
}

impl Snapshot {
    pub fn new(s: &StateSnapshot, graph: &ConstraintGraph, running: bool) -> Self {
        Snapshot {
            tick: s.tick,
            running,
            completed: s.completed,
            phases: s
                .phases
                .iter()
                .map(|(id, p)| PhaseEntry {
                    object: id.to_string(),
                    phase: p.as_str().into(),
                })
                .collect(),
            interactive: s
                .interactive
                .iter()
                .map(|ip| {
                    let status = if ip.canceled {
                        "canceled"
                    } else if ip.fixed.is_some() {
                        "fixed"
                    } else if ip.pending {
                        "deferred"
                    } else {
                        "waiting"
                    };
                    InteractiveState {
                        id: ip.id.clone(),
                        point: graph.label(ip.point),
                        status: status.into(),
                        earliest_tick: ip.window.map(|w| w.earliest),
                        latest_tick: ip.window.map(|w| w.latest.into()),
                        fixed_tick: ip.fixed,
                    }
                })
                .collect(),
            events: s
                .events
                .iter()
                .map(|e| EventEntry {
                    target: e.target.to_string(),
                    action: action_name(&e.action),
                    sample_time: e.sample_time,
                })
                .collect(),
            acks: s
                .acks
                .iter()
                .map(|a| {
                    let mut ack = Ack {
                        interactive_id: a.interactive_id.clone(),
                        tick: a.tick,
                        outcome: String::new(),
                        fixed_tick: None,
                        until_tick: None,
                        reason: None,
                    };
                    match &a.outcome {
                        TriggerOutcome::Fixed { tick } => {
                            ack.outcome = "fixed".into();
                            ack.fixed_tick = Some(*tick);
                        }
                        TriggerOutcome::Deferred { until } => {
                            ack.outcome = "deferred".into();
                            ack.until_tick = Some(*until);
                        }
                        TriggerOutcome::Rejected(r) => {
                            ack.outcome = "rejected".into();
                            ack.reason = Some(r.as_str().into());
                        }
                    }
                    ack
                })
                .collect(),
        }
    }
}

/// One message as a newline-terminated JSON line.
pub fn encode(msg: &ServerMessage) -> String {
    let mut s = serde_json::to_string(msg).expect("messages always serialize");
    s.push('\n');
    s
}

/// Parses every non-empty line of a client frame.
pub fn decode_client(frame: &str) -> Vec<Result<ClientMessage, String>> {
    frame
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect()
}

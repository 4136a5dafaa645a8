//! Discrete-tick execution of the macro structure.
//!
//! Each tick the engine ingests trigger events, fixes the points that must
//! happen now, propagates, and emits sample-stamped [`ControlEvent`]s.
//! Points that have not happened yet are constrained to be at or after the
//! current tick, so the network never asks for something in the past.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::compile::{compile, CompileError, ConstraintGraph, EdgeOrigin, TimePointId};
use crate::score::{ObjectId, Point, Score};
use crate::solver::{Network, SolverError, Window};
use crate::time::{samples_per_tick, Bound};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TriggerPolicy {
    /// Untriggered interactive points fire on their own at their latest tick.
    #[default]
    AutoLatest,
    /// Untriggered interactive points cancel their object at the latest tick.
    Cancel,
}

impl TriggerPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            TriggerPolicy::AutoLatest => "auto-latest",
            TriggerPolicy::Cancel => "cancel",
        }
    }
}

impl core::str::FromStr for TriggerPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto-latest" | "auto_latest" => Ok(TriggerPolicy::AutoLatest),
            "cancel" => Ok(TriggerPolicy::Cancel),
            other => Err(alloc::format!("unknown trigger policy `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EngineConfig {
    pub policy: TriggerPolicy,
    pub tick_ms: u32,
    pub sample_rate: u32,
}

impl EngineConfig {
    pub fn for_score(score: &Score, policy: TriggerPolicy) -> Self {
        EngineConfig {
            policy,
            tick_ms: score.tick_ms,
            sample_rate: score.sample_rate,
        }
    }

    pub fn samples_per_tick(&self) -> Result<u64, EngineError> {
        samples_per_tick(self.tick_ms, self.sample_rate).ok_or(EngineError::FractionalTick {
            tick_ms: self.tick_ms,
            sample_rate: self.sample_rate,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TriggerEvent {
    pub interactive_id: String,
    pub arrival_tick: u64,
}

impl TriggerEvent {
    pub fn new(interactive_id: impl Into<String>, arrival_tick: u64) -> Self {
        TriggerEvent {
            interactive_id: interactive_id.into(),
            arrival_tick,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ControlAction {
    Start,
    Stop,
    Param { name: String, value: f64 },
}

/// Command from the tick engine to the DSP engine.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlEvent {
    pub target: ObjectId,
    pub action: ControlAction,
    /// Absolute sample index, before micro offsets.
    pub sample_time: u64,
}

impl ControlEvent {
    /// Time point governing this event, if it is a start or stop.
    pub fn point(&self) -> Option<Point> {
        match self.action {
            ControlAction::Start => Some(Point::Start),
            ControlAction::Stop => Some(Point::End),
            ControlAction::Param { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Waiting,
    Active,
    Done,
    Canceled,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Waiting => "waiting",
            Phase::Active => "active",
            Phase::Done => "done",
            Phase::Canceled => "canceled",
        }
    }
}

/// How a point got its time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resolution {
    Root,
    Trigger,
    Deferred,
    Deduced,
    AutoLatest,
    Forced,
    Completion,
    Canceled,
}

impl Resolution {
    pub fn as_str(self) -> &'static str {
        match self {
            Resolution::Root => "root",
            Resolution::Trigger => "trigger",
            Resolution::Deferred => "deferred",
            Resolution::Deduced => "deduced",
            Resolution::AutoLatest => "auto_latest",
            Resolution::Forced => "forced",
            Resolution::Completion => "completion",
            Resolution::Canceled => "canceled",
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One resolved point. Canceled points carry no sample time.
#[derive(Clone, Debug, PartialEq)]
pub struct LogEntry {
    pub point: TimePointId,
    pub label: String,
    pub kind: Point,
    pub tick: u64,
    pub sample_time: Option<u64>,
    /// Window just before the point was resolved.
    pub earliest: u64,
    pub latest: Bound,
    pub resolution: Resolution,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RejectReason {
    UnknownInteractive,
    AlreadyFixed,
    Canceled,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::UnknownInteractive => "unknown interactive point",
            RejectReason::AlreadyFixed => "point already fixed",
            RejectReason::Canceled => "object canceled",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TriggerOutcome {
    Fixed { tick: u64 },
    Deferred { until: u64 },
    Rejected(RejectReason),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TriggerAck {
    pub interactive_id: String,
    pub tick: u64,
    pub outcome: TriggerOutcome,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InteractiveStatus {
    pub id: String,
    pub point: TimePointId,
    /// Current window while unresolved.
    pub window: Option<Window>,
    pub fixed: Option<u64>,
    pub canceled: bool,
    pub pending: bool,
}

/// Published state after a tick.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSnapshot {
    pub tick: u64,
    pub phases: Vec<(ObjectId, Phase)>,
    pub interactive: Vec<InteractiveStatus>,
    pub events: Vec<ControlEvent>,
    pub acks: Vec<TriggerAck>,
    pub completed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TickOutput {
    pub events: Vec<ControlEvent>,
    pub snapshot: StateSnapshot,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("score is not playable: its temporal constraints admit no schedule")]
    Unplayable,
    #[error("{tick_ms} ms ticks at {sample_rate} Hz are not a whole number of samples")]
    FractionalTick { tick_ms: u32, sample_rate: u32 },
    #[error("engine already completed")]
    Completed,
    #[error("internal inconsistency: {0}")]
    Internal(SolverError),
}

/// Executes one score. Owned by a single executor at a time.
#[derive(Clone, Debug)]
pub struct Engine {
    graph: ConstraintGraph,
    config: EngineConfig,
    spt: u64,
    interactive: Vec<(String, TimePointId)>,
    interactive_of: Vec<Option<usize>>,
    parent: Vec<Option<usize>>,
    micro_links: Vec<(TimePointId, TimePointId)>,
    net: Network,
    fixed: Vec<Option<u64>>,
    canceled: Vec<bool>,
    phases: Vec<Phase>,
    deferred: VecDeque<usize>,
    tick: u64,
    completed: bool,
    log: Vec<LogEntry>,
    events: Vec<ControlEvent>,
    acks: Vec<TriggerAck>,
    last_progress: u64,
    stall_horizon: u64,
}

impl Engine {
    /// Pins the root start at tick 0 and propagates the initial windows.
    pub fn start(score: &Score, graph: ConstraintGraph, config: EngineConfig) -> Result<Self, EngineError> {
        let spt = config.samples_per_tick()?;
        let net = Network::from_graph(&graph).map_err(|_| EngineError::Unplayable)?;
        let n = graph.point_count();
        let mut interactive = Vec::new();
        let mut interactive_of = vec![None; n];
        for ip in &score.interactive {
            if let Some(p) = graph.point(&ip.binds) {
                interactive_of[p.0] = Some(interactive.len());
                interactive.push((ip.id.clone(), p));
            }
        }
        let parent = score
            .objects
            .iter()
            .map(|o| o.parent.as_ref().and_then(|p| graph.object_index(p)))
            .collect();
        let micro_links = graph
            .edges
            .iter()
            .filter(|e| matches!(e.origin, EdgeOrigin::Micro(_)))
            .map(|e| (e.from, e.to))
            .collect();
        let stall_horizon = graph
            .edges
            .iter()
            .map(|e| e.min.saturating_add(e.max.finite().unwrap_or(0)))
            .fold(1u64, u64::saturating_add);
        let objects = graph.objects().len();
        let mut engine = Engine {
            graph,
            config,
            spt,
            interactive,
            interactive_of,
            parent,
            micro_links,
            net,
            fixed: vec![None; n],
            canceled: vec![false; n],
            phases: vec![Phase::Waiting; objects],
            deferred: VecDeque::new(),
            tick: 0,
            completed: false,
            log: Vec::new(),
            events: Vec::new(),
            acks: Vec::new(),
            last_progress: 0,
            stall_horizon,
        };
        let mut fired = Vec::new();
        engine.fix_now(TimePointId::ROOT_START, Resolution::Root, &mut fired)?;
        Ok(engine)
    }

    pub fn graph(&self) -> &ConstraintGraph {
        &self.graph
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn samples_per_tick(&self) -> u64 {
        self.spt
    }

    pub fn current_tick(&self) -> u64 {
        self.tick
    }

    pub fn is_completed(&self) -> bool {
        self.completed
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn window(&self, p: TimePointId) -> Window {
        self.net.window(p)
    }

    pub fn fixed(&self, p: TimePointId) -> Option<u64> {
        self.fixed[p.0]
    }

    pub fn phase(&self, object: usize) -> Phase {
        self.phases[object]
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    fn resolved(&self, p: TimePointId) -> bool {
        self.fixed[p.0].is_some() || self.canceled[p.0]
    }

    pub fn unresolved(&self) -> impl Iterator<Item = TimePointId> + '_ {
        self.graph.points().filter(|p| !self.resolved(*p))
    }

    /// Next tick at which something is certain to happen without input.
    pub fn next_due_tick(&self) -> Option<u64> {
        let latest = self
            .unresolved()
            .filter_map(|p| self.net.window(p).latest.finite())
            .min();
        let deferred = self
            .deferred
            .iter()
            .map(|&i| self.net.window(self.interactive[i].1).earliest)
            .min();
        match (latest, deferred) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// True when nothing can happen without further triggers.
    pub fn is_stalled(&self) -> bool {
        if self.completed {
            return false;
        }
        let has_latest = self
            .unresolved()
            .any(|p| self.net.window(p).latest.finite().is_some());
        if has_latest {
            return false;
        }
        self.deferred.is_empty() || self.tick.saturating_sub(self.last_progress) > self.stall_horizon
    }

    fn fix_now(
        &mut self,
        p: TimePointId,
        how: Resolution,
        fired: &mut Vec<TimePointId>,
    ) -> Result<(), EngineError> {
        let t = self.tick;
        let w = self.net.window(p);
        self.net.fix(p, t).map_err(EngineError::Internal)?;
        self.fixed[p.0] = Some(t);
        self.log.push(LogEntry {
            point: p,
            label: self.graph.label(p),
            kind: p.point(),
            tick: t,
            sample_time: Some(t * self.spt),
            earliest: w.earliest,
            latest: w.latest,
            resolution: how,
        });
        fired.push(p);
        self.last_progress = t;
        Ok(())
    }

    /// Objects canceled along with `object`: its subtree and the objects
    /// hanging off canceled points through micro relations, skipping those
    /// already started. `None` when something in the subtree has already
    /// happened, in which case the object cannot be canceled.
    fn cancel_set(&self, object: usize) -> Option<Vec<usize>> {
        let started = |o: usize| {
            let s = TimePointId::of_object(o, Point::Start);
            self.fixed[s.0].is_some() || self.fixed[s.sibling().0].is_some()
        };
        let mut set = Vec::new();
        let mut stack = vec![(object, true)];
        while let Some((o, in_subtree)) = stack.pop() {
            if set.contains(&o) || self.phases[o] == Phase::Canceled {
                continue;
            }
            if started(o) {
                if in_subtree {
                    return None;
                }
                continue;
            }
            set.push(o);
            for (child, parent) in self.parent.iter().enumerate() {
                if *parent == Some(o) {
                    stack.push((child, true));
                }
            }
            for &(from, to) in &self.micro_links {
                if from.object_index() == Some(o) {
                    if let Some(dep) = to.object_index() {
                        stack.push((dep, false));
                    }
                }
            }
        }
        Some(set)
    }

    fn cancel(&mut self, objects: &[usize]) -> Result<(), EngineError> {
        for &o in objects {
            self.phases[o] = Phase::Canceled;
            for point in [Point::Start, Point::End] {
                let p = TimePointId::of_object(o, point);
                if self.resolved(p) {
                    continue;
                }
                let w = self.net.window(p);
                self.canceled[p.0] = true;
                self.log.push(LogEntry {
                    point: p,
                    label: self.graph.label(p),
                    kind: point,
                    tick: self.tick,
                    sample_time: None,
                    earliest: w.earliest,
                    latest: w.latest,
                    resolution: Resolution::Canceled,
                });
            }
        }
        self.deferred
            .retain(|&i| !self.canceled[self.interactive[i].1 .0]);
        self.last_progress = self.tick;
        self.rebuild()
    }

    /// Recomputes the network without edges touching canceled points.
    fn rebuild(&mut self) -> Result<(), EngineError> {
        let canceled = &self.canceled;
        let edges = self
            .graph
            .edges
            .iter()
            .filter(|e| !canceled[e.from.0] && !canceled[e.to.0]);
        let mut net =
            Network::from_edges(self.graph.point_count(), edges).map_err(EngineError::Internal)?;
        for (i, f) in self.fixed.iter().enumerate() {
            if let Some(t) = f {
                net.fix(TimePointId(i), *t).map_err(EngineError::Internal)?;
            }
        }
        for i in 0..self.fixed.len() {
            let p = TimePointId(i);
            if !self.resolved(p) {
                net.require_at_least(p, self.tick)
                    .map_err(EngineError::Internal)?;
            }
        }
        self.net = net;
        Ok(())
    }

    fn apply_trigger(
        &mut self,
        trigger: &TriggerEvent,
        fired: &mut Vec<TimePointId>,
    ) -> Result<TriggerOutcome, EngineError> {
        let Some(idx) = self
            .interactive
            .iter()
            .position(|(id, _)| *id == trigger.interactive_id)
        else {
            return Ok(TriggerOutcome::Rejected(RejectReason::UnknownInteractive));
        };
        let p = self.interactive[idx].1;
        if self.canceled[p.0] {
            return Ok(TriggerOutcome::Rejected(RejectReason::Canceled));
        }
        if self.fixed[p.0].is_some() {
            return Ok(TriggerOutcome::Rejected(RejectReason::AlreadyFixed));
        }
        let w = self.net.window(p);
        if w.contains(self.tick) {
            self.deferred.retain(|&i| i != idx);
            self.fix_now(p, Resolution::Trigger, fired)?;
            Ok(TriggerOutcome::Fixed { tick: self.tick })
        } else {
            // Unresolved points never have latest < now, so this is early.
            if !self.deferred.contains(&idx) {
                self.deferred.push_back(idx);
            }
            Ok(TriggerOutcome::Deferred { until: w.earliest })
        }
    }

    /// Advances one tick.
    pub fn tick(&mut self, triggers: &[TriggerEvent]) -> Result<TickOutput, EngineError> {
        if self.completed {
            return Err(EngineError::Completed);
        }
        let now = self.tick;
        let mut fired = Vec::new();

        // Everything still pending happens now or later.
        for i in 0..self.fixed.len() {
            let p = TimePointId(i);
            if !self.resolved(p) && self.net.window(p).earliest < now {
                self.net
                    .require_at_least(p, now)
                    .map_err(EngineError::Internal)?;
            }
        }

        let pending: Vec<usize> = self.deferred.iter().copied().collect();
        for idx in pending {
            let p = self.interactive[idx].1;
            if !self.resolved(p) && self.net.window(p).contains(now) {
                self.deferred.retain(|&i| i != idx);
                self.fix_now(p, Resolution::Deferred, &mut fired)?;
            }
        }

        let mut acks = Vec::with_capacity(triggers.len());
        for trig in triggers {
            let outcome = self.apply_trigger(trig, &mut fired)?;
            acks.push(TriggerAck {
                interactive_id: trig.interactive_id.clone(),
                tick: now,
                outcome,
            });
        }

        // Quiescence: fix or cancel every point whose latest time is now.
        loop {
            let due = self.graph.points().find(|&p| {
                !self.resolved(p)
                    && p != TimePointId::ROOT_END
                    && self.net.window(p).latest == Bound::Finite(now)
            });
            let Some(p) = due else { break };
            if self.interactive_of[p.0].is_none() {
                self.fix_now(p, Resolution::Deduced, &mut fired)?;
                continue;
            }
            match self.config.policy {
                TriggerPolicy::AutoLatest => self.fix_now(p, Resolution::AutoLatest, &mut fired)?,
                TriggerPolicy::Cancel => {
                    let obj = p.object_index().expect("interactive points bind objects");
                    match self.cancel_set(obj) {
                        Some(set) => self.cancel(&set)?,
                        // Already under way: the point has to happen now.
                        None => self.fix_now(p, Resolution::Forced, &mut fired)?,
                    }
                }
            }
        }

        // The root ends once every object point is settled.
        let root_end = TimePointId::ROOT_END;
        if !self.resolved(root_end) {
            let settled = self
                .graph
                .points()
                .skip(2)
                .all(|p| self.resolved(p));
            let w = self.net.window(root_end);
            if (settled && w.contains(now)) || w.latest == Bound::Finite(now) {
                let how = if settled { Resolution::Completion } else { Resolution::Deduced };
                self.fix_now(root_end, how, &mut fired)?;
            }
        }
        self.completed = self.resolved(root_end);

        let mut events = Vec::new();
        for &p in &fired {
            let Some(obj) = p.object_index() else { continue };
            self.phases[obj] = if self.fixed[TimePointId::of_object(obj, Point::End).0].is_some() {
                Phase::Done
            } else {
                Phase::Active
            };
            events.push(ControlEvent {
                target: self.graph.objects()[obj].clone(),
                action: match p.point() {
                    Point::Start => ControlAction::Start,
                    Point::End => ControlAction::Stop,
                },
                sample_time: now * self.spt,
            });
        }
        // Starts before stops inside one tick keeps zero-length objects ordered.
        events.sort_by_key(|e| matches!(e.action, ControlAction::Stop));
        self.events.extend(events.iter().cloned());
        self.acks.extend(acks.iter().cloned());

        let snapshot = self.snapshot_with(events.clone(), acks);
        self.tick += 1;
        Ok(TickOutput { events, snapshot })
    }

    /// Current state without advancing.
    pub fn snapshot(&self) -> StateSnapshot {
        self.snapshot_with(Vec::new(), Vec::new())
    }

    fn snapshot_with(&self, events: Vec<ControlEvent>, acks: Vec<TriggerAck>) -> StateSnapshot {
        let phases = self
            .graph
            .objects()
            .iter()
            .cloned()
            .zip(self.phases.iter().copied())
            .collect();
        let interactive = self
            .interactive
            .iter()
            .enumerate()
            .map(|(i, (id, p))| InteractiveStatus {
                id: id.clone(),
                point: *p,
                window: (!self.resolved(*p)).then(|| self.net.window(*p)),
                fixed: self.fixed[p.0],
                canceled: self.canceled[p.0],
                pending: self.deferred.contains(&i),
            })
            .collect();
        StateSnapshot {
            tick: self.tick,
            phases,
            interactive,
            events,
            acks,
            completed: self.completed,
        }
    }

    /// Consumes the engine into its event log.
    pub fn into_log(self) -> EventLog {
        let unresolved = self.unresolved().collect();
        EventLog {
            entries: self.log,
            events: self.events,
            acks: self.acks,
            unresolved,
            final_tick: self.tick.saturating_sub(1),
            completed: self.completed,
            samples_per_tick: self.spt,
            policy: self.config.policy,
        }
    }
}

/// Record of an execution: every resolved point, every control event and
/// every trigger acknowledgement, in order.
#[derive(Clone, Debug, PartialEq)]
pub struct EventLog {
    pub entries: Vec<LogEntry>,
    pub events: Vec<ControlEvent>,
    pub acks: Vec<TriggerAck>,
    pub unresolved: Vec<TimePointId>,
    pub final_tick: u64,
    pub completed: bool,
    pub samples_per_tick: u64,
    pub policy: TriggerPolicy,
}

impl EventLog {
    pub fn entry(&self, label: &str) -> Option<&LogEntry> {
        self.entries.iter().find(|e| e.label == label)
    }

    /// Fixed tick of every point, `None` when unresolved or canceled.
    pub fn fixed_ticks(&self, point_count: usize) -> Vec<Option<u64>> {
        let mut out = vec![None; point_count];
        for e in &self.entries {
            if e.resolution != Resolution::Canceled {
                out[e.point.0] = Some(e.tick);
            }
        }
        out
    }
}

/// Runs a score on logical time: no wall clock, triggers taken from
/// `script` at their arrival ticks. Stops at completion or when nothing
/// else can happen.
pub fn run_offline(
    score: &Score,
    config: EngineConfig,
    script: &[TriggerEvent],
) -> Result<EventLog, EngineError> {
    let graph = compile(score)?;
    let mut engine = Engine::start(score, graph, config)?;
    let mut script: Vec<&TriggerEvent> = script.iter().collect();
    script.sort_by_key(|t| t.arrival_tick);
    let mut next = 0;
    loop {
        let now = engine.current_tick();
        let start = next;
        while next < script.len() && script[next].arrival_tick <= now {
            next += 1;
        }
        let batch: Vec<TriggerEvent> = script[start..next].iter().map(|t| (*t).clone()).collect();
        engine.tick(&batch)?;
        if engine.is_completed() {
            break;
        }
        if next == script.len() && engine.is_stalled() {
            break;
        }
    }
    Ok(engine.into_log())
}

/// An edge violated by the fixed times of a log.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub edge: usize,
    pub from: u64,
    pub to: u64,
}

/// Substitutes the log's fixed times into every macro edge. Micro edges
/// are checked by the DSP engine instead.
pub fn audit(graph: &ConstraintGraph, log: &EventLog) -> Vec<Violation> {
    let fixed = log.fixed_ticks(graph.point_count());
    graph
        .edges
        .iter()
        .enumerate()
        .filter(|(_, e)| !matches!(e.origin, EdgeOrigin::Micro(_)))
        .filter_map(|(i, e)| {
            let (a, b) = (fixed[e.from.0]?, fixed[e.to.0]?);
            (!e.holds(a, b)).then_some(Violation {
                edge: i,
                from: a,
                to: b,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{InteractivePoint, TemporalObject, TemporalRelation, TimePointRef};
    use crate::time::Interval;

    fn config(policy: TriggerPolicy) -> EngineConfig {
        EngineConfig {
            policy,
            tick_ms: 20,
            sample_rate: 44_100,
        }
    }

    /// One object whose interactive start has window [10, 20].
    fn windowed() -> Score {
        let mut s = Score::new("windowed");
        s.objects.push(TemporalObject::new("o", Interval::exactly(5)));
        s.relations.push(TemporalRelation {
            from: TimePointRef::start("root"),
            to: TimePointRef::start("o"),
            interval: Interval::new(10, 20),
        });
        s.interactive.push(InteractivePoint {
            id: "go".into(),
            binds: TimePointRef::start("o"),
        });
        s
    }

    #[test]
    fn empty_score_completes_at_tick_zero() {
        let s = Score::new("empty");
        let mut e = Engine::start(&s, compile(&s).unwrap(), config(TriggerPolicy::AutoLatest)).unwrap();
        let out = e.tick(&[]).unwrap();
        assert!(out.snapshot.completed);
        assert_eq!(e.fixed(TimePointId::ROOT_END), Some(0));
        assert_eq!(e.tick(&[]), Err(EngineError::Completed));
    }

    #[test]
    fn unplayable_score_rejected_before_any_tick() {
        let mut s = windowed();
        s.relations.push(TemporalRelation {
            from: TimePointRef::start("root"),
            to: TimePointRef::start("o"),
            interval: Interval::new(30, 40),
        });
        let err = Engine::start(&s, compile(&s).unwrap(), config(TriggerPolicy::AutoLatest));
        assert_eq!(err.unwrap_err(), EngineError::Unplayable);
    }

    #[test]
    fn fractional_tick_rejected() {
        let s = windowed();
        let cfg = EngineConfig {
            tick_ms: 1,
            ..config(TriggerPolicy::AutoLatest)
        };
        assert!(matches!(
            Engine::start(&s, compile(&s).unwrap(), cfg),
            Err(EngineError::FractionalTick { .. })
        ));
    }

    #[test]
    fn early_trigger_is_deferred_to_earliest() {
        let s = windowed();
        let log = run_offline(
            &s,
            config(TriggerPolicy::AutoLatest),
            &[TriggerEvent::new("go", 4)],
        )
        .unwrap();
        let ack = &log.acks[0];
        assert_eq!(ack.tick, 4);
        assert_eq!(ack.outcome, TriggerOutcome::Deferred { until: 10 });
        let start = log.entry("o.start").unwrap();
        assert_eq!((start.tick, start.resolution), (10, Resolution::Deferred));
        assert_eq!(start.sample_time, Some(10 * 882));
        let end = log.entry("o.end").unwrap();
        assert_eq!(end.tick, 15);
        assert!(log.completed);
    }

    #[test]
    fn untriggered_point_fires_at_latest() {
        let log = run_offline(&windowed(), config(TriggerPolicy::AutoLatest), &[]).unwrap();
        let start = log.entry("o.start").unwrap();
        assert_eq!((start.tick, start.resolution), (20, Resolution::AutoLatest));
        assert_eq!((start.earliest, start.latest), (20, Bound::Finite(20)));
    }

    #[test]
    fn cancel_policy_cancels_at_latest() {
        let log = run_offline(&windowed(), config(TriggerPolicy::Cancel), &[]).unwrap();
        assert!(log.events.is_empty());
        let start = log.entry("o.start").unwrap();
        assert_eq!((start.tick, start.resolution), (20, Resolution::Canceled));
        assert_eq!(start.sample_time, None);
        assert!(log.completed);
    }

    #[test]
    fn trigger_inside_window_fixes_now() {
        let log = run_offline(
            &windowed(),
            config(TriggerPolicy::Cancel),
            &[TriggerEvent::new("go", 13)],
        )
        .unwrap();
        assert_eq!(log.entry("o.start").unwrap().tick, 13);
        assert_eq!(log.events[0].action, ControlAction::Start);
        assert_eq!(log.events[0].sample_time, 13 * 882);
        assert_eq!(log.events[1].action, ControlAction::Stop);
        assert_eq!(log.events[1].sample_time, 18 * 882);
    }

    #[test]
    fn late_and_duplicate_triggers_are_rejected() {
        let log = run_offline(
            &windowed(),
            config(TriggerPolicy::AutoLatest),
            &[
                TriggerEvent::new("go", 12),
                TriggerEvent::new("go", 14),
                TriggerEvent::new("nope", 14),
            ],
        )
        .unwrap();
        assert_eq!(log.acks[1].outcome, TriggerOutcome::Rejected(RejectReason::AlreadyFixed));
        assert_eq!(
            log.acks[2].outcome,
            TriggerOutcome::Rejected(RejectReason::UnknownInteractive)
        );
    }

    #[test]
    fn triggering_a_child_pulls_its_parent_start() {
        let mut s = Score::new("nested");
        s.objects.push(TemporalObject::new("p", Interval::new(0, 50)));
        s.objects
            .push(TemporalObject::new("c", Interval::exactly(3)).with_parent("p"));
        s.relations.push(TemporalRelation {
            from: TimePointRef::start("root"),
            to: TimePointRef::start("p"),
            interval: Interval::new(0, 40),
        });
        s.interactive.push(InteractivePoint {
            id: "c".into(),
            binds: TimePointRef::start("c"),
        });
        let log = run_offline(&s, config(TriggerPolicy::AutoLatest), &[TriggerEvent::new("c", 7)])
            .unwrap();
        assert_eq!(log.entry("p.start").unwrap().tick, 7);
        assert_eq!(log.entry("c.start").unwrap().tick, 7);
        assert!(audit(&compile(&s).unwrap(), &log).is_empty());
    }

    #[test]
    fn started_child_keeps_its_parent_under_cancel() {
        let mut s = Score::new("nested");
        s.root_duration = Interval::new(0, 12);
        s.objects.push(TemporalObject::new("p", Interval::UNBOUNDED));
        s.objects
            .push(TemporalObject::new("c", Interval::UNBOUNDED).with_parent("p"));
        for (id, obj) in [("ip", "p"), ("ic", "c")] {
            s.interactive.push(InteractivePoint {
                id: id.into(),
                binds: TimePointRef::start(obj),
            });
        }
        let log = run_offline(&s, config(TriggerPolicy::Cancel), &[TriggerEvent::new("ic", 0)]).unwrap();
        let p = log.entry("p.start").unwrap();
        assert_eq!((p.tick, p.resolution), (0, Resolution::Forced));
        assert_eq!(log.events.len(), 4);
        assert!(log.entries.iter().all(|e| e.resolution != Resolution::Canceled));
    }

    #[test]
    fn interactive_end_of_running_object_is_forced() {
        let mut s = Score::new("end");
        s.objects.push(TemporalObject::new("o", Interval::new(2, 4)));
        s.interactive.push(InteractivePoint {
            id: "stop".into(),
            binds: TimePointRef::end("o"),
        });
        s.relations.push(TemporalRelation {
            from: TimePointRef::start("root"),
            to: TimePointRef::start("o"),
            interval: Interval::exactly(1),
        });
        let log = run_offline(&s, config(TriggerPolicy::Cancel), &[]).unwrap();
        let e = log.entry("o.end").unwrap();
        assert_eq!((e.tick, e.resolution), (5, Resolution::Forced));
    }

    #[test]
    fn unbounded_points_stall_without_triggers() {
        let mut s = Score::new("open");
        s.objects.push(TemporalObject::new("o", Interval::at_least(2)));
        let log = run_offline(&s, config(TriggerPolicy::AutoLatest), &[]).unwrap();
        assert!(!log.completed);
        assert_eq!(log.unresolved.len(), 3);
    }

    #[test]
    fn phases_follow_the_clock() {
        let s = windowed();
        let mut e = Engine::start(&s, compile(&s).unwrap(), config(TriggerPolicy::AutoLatest)).unwrap();
        for _ in 0..12 {
            e.tick(&[]).unwrap();
        }
        assert_eq!(e.phase(0), Phase::Waiting);
        let out = e.tick(&[TriggerEvent::new("go", 12)]).unwrap();
        assert_eq!(out.snapshot.phases[0].1, Phase::Active);
        assert_eq!(out.snapshot.interactive[0].fixed, Some(12));
        for _ in 0..5 {
            e.tick(&[]).unwrap();
        }
        assert_eq!(e.phase(0), Phase::Done);
    }
}

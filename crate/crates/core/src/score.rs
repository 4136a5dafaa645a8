//! Score domain types and structural validation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::time::{samples_per_tick, Bound, Interval, MicroUnit};

/// Identifier of the implicit object spanning the whole score.
pub const ROOT_ID: &str = "root";

pub const DEFAULT_SAMPLE_RATE: u32 = 44_100;
pub const DEFAULT_TICK_MS: u32 = 20;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectId(String);

impl ObjectId {
    pub fn new(id: impl Into<String>) -> Self {
        ObjectId(id.into())
    }

    pub fn root() -> Self {
        ObjectId(ROOT_ID.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0 == ROOT_ID
    }
}

impl From<&str> for ObjectId {
    fn from(s: &str) -> Self {
        ObjectId::new(s)
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Point {
    Start,
    End,
}

impl Point {
    pub fn as_str(self) -> &'static str {
        match self {
            Point::Start => "start",
            Point::End => "end",
        }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimePointRef {
    pub object: ObjectId,
    pub point: Point,
}

impl TimePointRef {
    pub fn new(object: impl Into<ObjectId>, point: Point) -> Self {
        TimePointRef {
            object: object.into(),
            point,
        }
    }

    pub fn start(object: impl Into<ObjectId>) -> Self {
        TimePointRef::new(object, Point::Start)
    }

    pub fn end(object: impl Into<ObjectId>) -> Self {
        TimePointRef::new(object, Point::End)
    }
}

impl From<&str> for TimePointRef {
    /// Parses `"object.start"` / `"object.end"`; a bare id means its start.
    fn from(s: &str) -> Self {
        match s.rsplit_once('.') {
            Some((obj, "end")) => TimePointRef::end(obj),
            Some((obj, "start")) => TimePointRef::start(obj),
            _ => TimePointRef::start(s),
        }
    }
}

impl fmt::Display for TimePointRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.object, self.point)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AcquisitionSource {
    File(String),
    LiveInput,
}

/// DSP process attached to a leaf object.
#[derive(Clone, Debug, PartialEq)]
pub enum ProcessSpec {
    /// Plucked string. `seed` pins the excitation noise; when absent it is
    /// derived from the render seed and the object id.
    Karplus {
        freq_hz: f64,
        attenuation: f64,
        seed: Option<u64>,
    },
    Gain {
        factor: f64,
    },
    SampleDelay {
        samples: u64,
    },
    /// Linear attenuation ramp applied to a karplus object over this
    /// object's duration.
    AttenuationRamp {
        target: ObjectId,
        from: f64,
        to: f64,
    },
    Acquisition {
        source: AcquisitionSource,
    },
    Output {
        channels: u16,
    },
}

impl ProcessSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ProcessSpec::Karplus { .. } => "karplus",
            ProcessSpec::Gain { .. } => "gain",
            ProcessSpec::SampleDelay { .. } => "sample_delay",
            ProcessSpec::AttenuationRamp { .. } => "attenuation_ramp",
            ProcessSpec::Acquisition { .. } => "acquisition",
            ProcessSpec::Output { .. } => "output",
        }
    }

    /// Whether the process produces audio other nodes can consume.
    pub fn has_audio_output(&self) -> bool {
        !matches!(
            self,
            ProcessSpec::AttenuationRamp { .. } | ProcessSpec::Output { .. }
        )
    }

    /// Whether the process accepts audio input.
    pub fn has_audio_input(&self) -> bool {
        matches!(
            self,
            ProcessSpec::Gain { .. } | ProcessSpec::SampleDelay { .. } | ProcessSpec::Output { .. }
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalObject {
    pub id: ObjectId,
    /// `None` means the implicit root.
    pub parent: Option<ObjectId>,
    /// Duration in ticks.
    pub duration: Interval,
    pub process: Option<ProcessSpec>,
}

impl TemporalObject {
    pub fn new(id: impl Into<ObjectId>, duration: Interval) -> Self {
        TemporalObject {
            id: id.into(),
            parent: None,
            duration,
            process: None,
        }
    }

    pub fn with_parent(mut self, parent: impl Into<ObjectId>) -> Self {
        self.parent = Some(parent.into());
        self
    }

    pub fn with_process(mut self, process: ProcessSpec) -> Self {
        self.process = Some(process);
        self
    }

    pub fn parent_id(&self) -> ObjectId {
        self.parent.clone().unwrap_or_else(ObjectId::root)
    }
}

/// `time(to) - time(from)` lies in `interval` (ticks).
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalRelation {
    pub from: TimePointRef,
    pub to: TimePointRef,
    pub interval: Interval,
}

/// Sample-level offset between two points, enforced by the DSP engine.
#[derive(Clone, Debug, PartialEq)]
pub struct MicroRelation {
    pub from: TimePointRef,
    pub to: TimePointRef,
    pub offset: u64,
    pub unit: MicroUnit,
}

impl MicroRelation {
    pub fn offset_samples(&self, sample_rate: u32) -> u64 {
        self.unit.to_samples(self.offset, sample_rate)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InteractivePoint {
    pub id: String,
    pub binds: TimePointRef,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataflowRelation {
    pub from: ObjectId,
    pub to: ObjectId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Score {
    pub name: String,
    pub sample_rate: u32,
    pub tick_ms: u32,
    /// Duration of the implicit root object, `[0, inf]` unless given.
    pub root_duration: Interval,
    pub objects: Vec<TemporalObject>,
    pub relations: Vec<TemporalRelation>,
    pub micro_relations: Vec<MicroRelation>,
    pub interactive: Vec<InteractivePoint>,
    pub dataflow: Vec<DataflowRelation>,
}

impl Default for Score {
    fn default() -> Self {
        Score {
            name: String::new(),
            sample_rate: DEFAULT_SAMPLE_RATE,
            tick_ms: DEFAULT_TICK_MS,
            root_duration: Interval::UNBOUNDED,
            objects: Vec::new(),
            relations: Vec::new(),
            micro_relations: Vec::new(),
            interactive: Vec::new(),
            dataflow: Vec::new(),
        }
    }
}

impl Score {
    pub fn new(name: impl Into<String>) -> Self {
        Score {
            name: name.into(),
            ..Score::default()
        }
    }

    pub fn object(&self, id: &ObjectId) -> Option<&TemporalObject> {
        self.objects.iter().find(|o| &o.id == id)
    }

    pub fn object_index(&self, id: &ObjectId) -> Option<usize> {
        self.objects.iter().position(|o| &o.id == id)
    }

    pub fn children<'a>(&'a self, id: &'a ObjectId) -> impl Iterator<Item = &'a TemporalObject> + 'a {
        self.objects.iter().filter(move |o| &o.parent_id() == id)
    }

    pub fn is_leaf(&self, id: &ObjectId) -> bool {
        self.children(id).next().is_none()
    }

    pub fn samples_per_tick(&self) -> Option<u64> {
        samples_per_tick(self.tick_ms, self.sample_rate)
    }

    pub fn interactive_for(&self, point: &TimePointRef) -> Option<&InteractivePoint> {
        self.interactive.iter().find(|ip| &ip.binds == point)
    }

    fn resolves(&self, r: &TimePointRef) -> bool {
        r.object.is_root() || self.object(&r.object).is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Error,
    Info,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FindingKind {
    InvalidSampleRate,
    InvalidTickPeriod,
    DuplicateObjectId,
    ReservedObjectId,
    UnknownParent,
    HierarchyCycle,
    EmptyDuration,
    UnknownRelationEndpoint,
    EmptyRelationInterval,
    ProcessOnNonLeaf,
    InvalidProcessParams,
    RampTargetInvalid,
    MicroEndpointLacksProcess,
    MicroTargetConflict,
    MicroCycle,
    UnknownInteractiveEndpoint,
    DuplicateInteractiveId,
    PointBoundTwice,
    DataflowEndpointUnknown,
    DataflowEndpointLacksProcess,
    DataflowEndpointNoAudio,
    DataflowCycle,
    InteractiveStartAndEnd,
    MicroOffsetExceedsParent,
}

impl FindingKind {
    pub fn severity(self) -> Severity {
        match self {
            FindingKind::InteractiveStartAndEnd | FindingKind::MicroOffsetExceedsParent => {
                Severity::Info
            }
            _ => Severity::Error,
        }
    }

    pub fn message(self) -> &'static str {
        match self {
            FindingKind::InvalidSampleRate => "sample rate must be positive",
            FindingKind::InvalidTickPeriod => "tick period must be positive",
            FindingKind::DuplicateObjectId => "duplicate object id",
            FindingKind::ReservedObjectId => "object id is reserved",
            FindingKind::UnknownParent => "unknown parent",
            FindingKind::HierarchyCycle => "hierarchy cycle",
            FindingKind::EmptyDuration => "empty duration interval",
            FindingKind::UnknownRelationEndpoint => "relation endpoint names unknown object",
            FindingKind::EmptyRelationInterval => "empty relation interval",
            FindingKind::ProcessOnNonLeaf => "process on object with children",
            FindingKind::InvalidProcessParams => "invalid process parameters",
            FindingKind::RampTargetInvalid => "attenuation ramp target is not a karplus object",
            FindingKind::MicroEndpointLacksProcess => "micro relation endpoint lacks process",
            FindingKind::MicroTargetConflict => "point is the target of several micro relations",
            FindingKind::MicroCycle => "micro relation cycle",
            FindingKind::UnknownInteractiveEndpoint => "interactive point binds unknown object",
            FindingKind::DuplicateInteractiveId => "duplicate interactive id",
            FindingKind::PointBoundTwice => "time point bound by several interactive points",
            FindingKind::DataflowEndpointUnknown => "dataflow endpoint names unknown object",
            FindingKind::DataflowEndpointLacksProcess => "dataflow endpoint lacks process",
            FindingKind::DataflowEndpointNoAudio => "dataflow endpoint has no matching audio port",
            FindingKind::DataflowCycle => "dataflow cycle",
            FindingKind::InteractiveStartAndEnd => "object has interactive start and end",
            FindingKind::MicroOffsetExceedsParent => "micro offset exceeds parent duration",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Finding {
    pub kind: FindingKind,
    /// Object, relation (`relation[i]`) or interactive id the finding is about.
    pub subject: String,
    pub detail: Option<String>,
}

impl Finding {
    fn new(kind: FindingKind, subject: impl Into<String>) -> Self {
        Finding {
            kind,
            subject: subject.into(),
            detail: None,
        }
    }

    fn detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    pub fn severity(&self) -> Severity {
        self.kind.severity()
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity() {
            Severity::Error => "error",
            Severity::Info => "info",
        };
        write!(f, "{sev}: {} ({})", self.kind.message(), self.subject)?;
        if let Some(d) = &self.detail {
            write!(f, ": {d}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    /// No error-severity findings. Informational findings do not block.
    pub fn is_valid(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity() == Severity::Error)
    }

    pub fn has(&self, kind: FindingKind) -> bool {
        self.findings.iter().any(|f| f.kind == kind)
    }
}

/// Checks every structural invariant of a score. Findings are data; this
/// never fails.
pub fn validate(score: &Score) -> ValidationReport {
    let mut out = Vec::new();

    if score.sample_rate == 0 {
        out.push(Finding::new(FindingKind::InvalidSampleRate, "score"));
    }
    if score.tick_ms == 0 {
        out.push(Finding::new(FindingKind::InvalidTickPeriod, "score"));
    }
    if score.root_duration.is_empty() {
        out.push(Finding::new(FindingKind::EmptyDuration, ROOT_ID));
    }

    let mut ids = BTreeSet::new();
    for obj in &score.objects {
        if obj.id.is_root() {
            out.push(Finding::new(FindingKind::ReservedObjectId, obj.id.as_str()));
        } else if !ids.insert(obj.id.clone()) {
            out.push(Finding::new(FindingKind::DuplicateObjectId, obj.id.as_str()));
        }
        if obj.duration.is_empty() {
            out.push(
                Finding::new(FindingKind::EmptyDuration, obj.id.as_str())
                    .detail(format!("{}", obj.duration)),
            );
        }
        if let Some(parent) = &obj.parent {
            if !parent.is_root() && !ids_contains(score, parent) {
                out.push(
                    Finding::new(FindingKind::UnknownParent, obj.id.as_str())
                        .detail(parent.as_str()),
                );
            }
        }
    }

    check_hierarchy(score, &mut out);
    check_processes(score, &mut out);

    for (i, rel) in score.relations.iter().enumerate() {
        for end in [&rel.from, &rel.to] {
            if !score.resolves(end) {
                out.push(
                    Finding::new(FindingKind::UnknownRelationEndpoint, format!("relation[{i}]"))
                        .detail(format!("{end}")),
                );
            }
        }
        if rel.interval.is_empty() {
            out.push(Finding::new(
                FindingKind::EmptyRelationInterval,
                format!("relation[{i}]"),
            ));
        }
    }

    check_micro(score, &mut out);
    check_interactive(score, &mut out);
    check_dataflow(score, &mut out);

    ValidationReport { findings: out }
}

fn ids_contains(score: &Score, id: &ObjectId) -> bool {
    score.object(id).is_some()
}

fn check_hierarchy(score: &Score, out: &mut Vec<Finding>) {
    let parent_of: BTreeMap<&ObjectId, &ObjectId> = score
        .objects
        .iter()
        .filter_map(|o| o.parent.as_ref().map(|p| (&o.id, p)))
        .collect();
    let mut reported = BTreeSet::new();
    for obj in &score.objects {
        // Walk up; a walk longer than the object count is a cycle.
        let mut cur = &obj.id;
        let mut steps = 0;
        while let Some(p) = parent_of.get(cur) {
            if p.is_root() {
                break;
            }
            cur = p;
            steps += 1;
            if steps > score.objects.len() {
                if reported.insert(obj.id.clone()) {
                    out.push(Finding::new(FindingKind::HierarchyCycle, obj.id.as_str()));
                }
                break;
            }
        }
    }
}

fn check_processes(score: &Score, out: &mut Vec<Finding>) {
    let nyquist = score.sample_rate as f64 / 2.0;
    for obj in &score.objects {
        let Some(process) = &obj.process else { continue };
        if !score.is_leaf(&obj.id) {
            out.push(Finding::new(FindingKind::ProcessOnNonLeaf, obj.id.as_str()));
        }
        let bad = |why: &str| {
            Finding::new(FindingKind::InvalidProcessParams, obj.id.as_str()).detail(why.to_string())
        };
        match process {
            ProcessSpec::Karplus {
                freq_hz,
                attenuation,
                ..
            } => {
                if !(freq_hz.is_finite() && *freq_hz > 0.0 && *freq_hz < nyquist) {
                    out.push(bad("freq_hz must be in (0, sample_rate/2)"));
                }
                if !(*attenuation > 0.0 && *attenuation < 1.0) {
                    out.push(bad("attenuation must be in (0, 1)"));
                }
            }
            ProcessSpec::Gain { factor } => {
                if !factor.is_finite() {
                    out.push(bad("gain factor must be finite"));
                }
            }
            ProcessSpec::SampleDelay { .. } => {}
            ProcessSpec::AttenuationRamp { target, from, to } => {
                let target_ok = matches!(
                    score.object(target).and_then(|t| t.process.as_ref()),
                    Some(ProcessSpec::Karplus { .. })
                );
                if !target_ok {
                    out.push(
                        Finding::new(FindingKind::RampTargetInvalid, obj.id.as_str())
                            .detail(target.as_str()),
                    );
                }
                if !(from.is_finite() && to.is_finite()) {
                    out.push(bad("ramp values must be finite"));
                }
            }
            ProcessSpec::Acquisition { source } => {
                if let AcquisitionSource::File(path) = source {
                    if path.is_empty() {
                        out.push(bad("acquisition source path is empty"));
                    }
                }
            }
            ProcessSpec::Output { channels } => {
                if *channels == 0 {
                    out.push(bad("output needs at least one channel"));
                }
            }
        }
    }
}

fn carries_process(score: &Score, id: &ObjectId) -> bool {
    score
        .object(id)
        .map(|o| o.process.is_some() && score.is_leaf(id))
        .unwrap_or(false)
}

fn check_micro(score: &Score, out: &mut Vec<Finding>) {
    let mut targets: BTreeMap<&TimePointRef, usize> = BTreeMap::new();
    for (i, rel) in score.micro_relations.iter().enumerate() {
        for end in [&rel.from, &rel.to] {
            if !carries_process(score, &end.object) {
                out.push(
                    Finding::new(FindingKind::MicroEndpointLacksProcess, format!("micro[{i}]"))
                        .detail(format!("{end}")),
                );
            }
        }
        let n = targets.entry(&rel.to).or_insert(0);
        *n += 1;
        if *n == 2 {
            out.push(
                Finding::new(FindingKind::MicroTargetConflict, format!("micro[{i}]"))
                    .detail(format!("{}", rel.to)),
            );
        }
        // Informational: offset longer than the enclosing object's maximum duration.
        if let (Some(spt), Some(obj)) = (score.samples_per_tick(), score.object(&rel.to.object)) {
            let parent_max = match &obj.parent {
                Some(p) if !p.is_root() => score.object(p).map(|p| p.duration.max),
                _ => Some(score.root_duration.max),
            };
            let samples = rel.offset_samples(score.sample_rate);
            if let Some(Bound::Finite(max)) = parent_max {
                if samples > max.saturating_mul(spt) {
                    out.push(Finding::new(
                        FindingKind::MicroOffsetExceedsParent,
                        format!("micro[{i}]"),
                    ));
                }
            }
        }
    }

    // Cycle check over points: from -> to.
    let edges: Vec<(&TimePointRef, &TimePointRef)> = score
        .micro_relations
        .iter()
        .map(|r| (&r.from, &r.to))
        .collect();
    if has_cycle(&edges) {
        out.push(Finding::new(FindingKind::MicroCycle, "micro_relations"));
    }
}

fn check_interactive(score: &Score, out: &mut Vec<Finding>) {
    let mut ids = BTreeSet::new();
    let mut bound: BTreeSet<&TimePointRef> = BTreeSet::new();
    for ip in &score.interactive {
        if !ids.insert(ip.id.as_str()) {
            out.push(Finding::new(FindingKind::DuplicateInteractiveId, ip.id.as_str()));
        }
        if ip.binds.object.is_root() || score.object(&ip.binds.object).is_none() {
            out.push(
                Finding::new(FindingKind::UnknownInteractiveEndpoint, ip.id.as_str())
                    .detail(format!("{}", ip.binds)),
            );
        }
        if !bound.insert(&ip.binds) {
            out.push(
                Finding::new(FindingKind::PointBoundTwice, ip.id.as_str())
                    .detail(format!("{}", ip.binds)),
            );
        }
    }
    for obj in &score.objects {
        if bound.contains(&TimePointRef::start(obj.id.clone()))
            && bound.contains(&TimePointRef::end(obj.id.clone()))
        {
            out.push(Finding::new(FindingKind::InteractiveStartAndEnd, obj.id.as_str()));
        }
    }
}

fn check_dataflow(score: &Score, out: &mut Vec<Finding>) {
    for (i, df) in score.dataflow.iter().enumerate() {
        let subject = format!("dataflow[{i}]");
        for (end, producing) in [(&df.from, true), (&df.to, false)] {
            match score.object(end) {
                None => out.push(
                    Finding::new(FindingKind::DataflowEndpointUnknown, subject.clone())
                        .detail(end.as_str()),
                ),
                Some(obj) => match &obj.process {
                    None => out.push(
                        Finding::new(FindingKind::DataflowEndpointLacksProcess, subject.clone())
                            .detail(end.as_str()),
                    ),
                    Some(p) => {
                        let ok = if producing {
                            p.has_audio_output()
                        } else {
                            p.has_audio_input()
                        };
                        if !ok {
                            out.push(
                                Finding::new(FindingKind::DataflowEndpointNoAudio, subject.clone())
                                    .detail(end.as_str()),
                            );
                        }
                    }
                },
            }
        }
    }
    let edges: Vec<(&ObjectId, &ObjectId)> =
        score.dataflow.iter().map(|d| (&d.from, &d.to)).collect();
    if has_cycle(&edges) {
        out.push(Finding::new(FindingKind::DataflowCycle, "dataflow"));
    }
}

/// Kahn's algorithm over an edge list; true if some node is left unsorted.
pub(crate) fn has_cycle<T: Ord>(edges: &[(&T, &T)]) -> bool {
    topo_order(edges).is_none()
}

/// Topological order of the nodes mentioned in `edges`, or `None` on a cycle.
pub(crate) fn topo_order<'a, T: Ord>(edges: &[(&'a T, &'a T)]) -> Option<Vec<&'a T>> {
    let mut indeg: BTreeMap<&T, usize> = BTreeMap::new();
    for (a, b) in edges {
        indeg.entry(*a).or_insert(0);
        *indeg.entry(*b).or_insert(0) += 1;
    }
    let mut ready: Vec<&T> = indeg
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(n, _)| *n)
        .collect();
    ready.reverse();
    let mut order = Vec::with_capacity(indeg.len());
    while let Some(n) = ready.pop() {
        order.push(n);
        for (a, b) in edges {
            if *a == n {
                let d = indeg.get_mut(*b).expect("node registered");
                *d -= 1;
                if *d == 0 {
                    ready.push(*b);
                }
            }
        }
    }
    (order.len() == indeg.len()).then_some(order)
}

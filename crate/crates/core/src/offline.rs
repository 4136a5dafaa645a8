//! Whole-score offline execution: tick engine on logical time, micro
//! scheduling, then rendering.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::compile::{compile, ConstraintGraph};
use crate::dsp::{
    build_dsp_graph, render, schedule_micro, AudioClip, DspError, DspGraph, MicroSchedule,
    RenderConfig, RenderOutput,
};
use crate::scheduler::{run_offline, EngineConfig, EngineError, EventLog, TriggerEvent};
use crate::score::{validate, ObjectId, Score, ValidationReport};

pub const DEFAULT_SEED: u64 = 0x5c0f_0f67;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OfflineConfig {
    pub engine: EngineConfig,
    pub render: RenderConfig,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OfflineRun {
    pub graph: ConstraintGraph,
    pub log: EventLog,
    pub schedule: MicroSchedule,
    pub dsp: DspGraph,
    pub audio: RenderOutput,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OfflineError {
    #[error("score has validation errors")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Render length: through the last tick reached and past the last
/// scheduled event.
pub fn render_length(log: &EventLog, schedule: &MicroSchedule) -> usize {
    let ticks = (log.final_tick + 1) * log.samples_per_tick;
    let events = schedule
        .events
        .iter()
        .map(|e| e.final_sample + 1)
        .max()
        .unwrap_or(0);
    ticks.max(events) as usize
}

/// Runs the full pipeline on logical time.
pub fn render_scenario(
    score: &Score,
    sources: &BTreeMap<ObjectId, AudioClip>,
    script: &[TriggerEvent],
    config: OfflineConfig,
) -> Result<OfflineRun, OfflineError> {
    let report = validate(score);
    if !report.is_valid() {
        return Err(OfflineError::Invalid(report));
    }
    let graph = compile(score).map_err(EngineError::from)?;
    let dsp = build_dsp_graph(score, config.seed, sources)?;
    let log = run_offline(score, config.engine, script)?;
    let schedule = schedule_micro(&log.events, &score.micro_relations, score.sample_rate);
    let n = render_length(&log, &schedule);
    let audio = render(&dsp, &schedule, n, config.render);
    Ok(OfflineRun {
        graph,
        log,
        schedule,
        dsp,
        audio,
    })
}

impl OfflineRun {
    /// Final sample of each start event, by target.
    pub fn start_samples(&self) -> Vec<(ObjectId, u64)> {
        self.schedule
            .events
            .iter()
            .filter(|e| e.event.action == crate::scheduler::ControlAction::Start)
            .map(|e| (e.event.target.clone(), e.final_sample))
            .collect()
    }
}

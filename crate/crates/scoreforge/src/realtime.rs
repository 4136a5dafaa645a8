//! Wall-clock execution. One thread ticks the engine on a fixed period;
//! another renders audio into a null sink, trailing the engine clock by a
//! fixed latency so control events reach it ahead of their sample times.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, Receiver, Sender, TryRecvError};
use scoreforge_core::compile::compile;
use scoreforge_core::dsp::{build_dsp_graph, AudioClip, DspError, DspGraph, MicroSchedule, MicroScheduler, Renderer};
use scoreforge_core::scheduler::{
    ControlEvent, Engine, EngineConfig, EngineError, EventLog, StateSnapshot, TriggerEvent,
};
use scoreforge_core::score::{validate, MicroRelation, ObjectId, Score, ValidationReport};

/// Capacity of the engine-to-audio queue, in tick batches.
const CONTROL_QUEUE: usize = 1024;
/// Longest single sleep, so pause and stop requests are seen promptly.
const POLL: Duration = Duration::from_millis(5);

/// Shared run/pause/stop flags.
#[derive(Debug)]
pub struct Transport {
    running: AtomicBool,
    stop: AtomicBool,
}

impl Transport {
    pub fn new(running: bool) -> Arc<Self> {
        Arc::new(Transport {
            running: AtomicBool::new(running),
            stop: AtomicBool::new(false),
        })
    }

    pub fn start(&self) {
        self.running.store(true, Ordering::SeqCst);
    }

    pub fn pause(&self) {
        self.running.store(false, Ordering::SeqCst);
    }

    pub fn request_stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    pub fn is_running(&self) -> bool {
        self.running.load(Ordering::SeqCst)
    }

    pub fn stop_requested(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }
}

#[derive(Clone, Debug)]
pub struct RealtimeConfig {
    pub engine: EngineConfig,
    pub block_size: usize,
    pub seed: u64,
    /// How far the audio timeline trails the engine clock, in ticks.
    pub latency_ticks: u32,
    /// End the run once nothing can happen without triggers and no more
    /// triggers can arrive.
    pub stop_when_stalled: bool,
    pub max_ticks: Option<u64>,
}

impl RealtimeConfig {
    pub fn new(engine: EngineConfig) -> Self {
        RealtimeConfig {
            engine,
            block_size: 64,
            seed: scoreforge_core::offline::DEFAULT_SEED,
            latency_ticks: 2,
            stop_when_stalled: true,
            max_ticks: None,
        }
    }
}

/// Where trigger and snapshot traffic comes from and goes to.
pub struct Inputs {
    /// Live triggers by interactive id, stamped with the tick that drains them.
    pub triggers: Receiver<String>,
    /// Scripted triggers, injected at their arrival ticks.
    pub script: Vec<TriggerEvent>,
    /// Receives every snapshot, starting with the one before the first tick.
    pub snapshots: Option<Sender<StateSnapshot>>,
}

impl Inputs {
    /// Script only: the live queue is closed from the start.
    pub fn scripted(script: Vec<TriggerEvent>) -> Self {
        let (_, triggers) = bounded(1);
        Inputs {
            triggers,
            script,
            snapshots: None,
        }
    }
}

/// Wall-clock record of one emitted control event.
#[derive(Clone, Debug, PartialEq)]
pub struct Dispatch {
    pub event: ControlEvent,
    pub tick: u64,
    /// Logical time of the event, from the engine clock origin.
    pub expected_us: f64,
    /// Monotonic time at dispatch, from the same origin.
    pub actual_us: f64,
}

#[derive(Clone, Debug)]
pub struct RealtimeRun {
    pub log: EventLog,
    pub dispatches: Vec<Dispatch>,
    /// Events as applied by the audio thread.
    pub schedule: MicroSchedule,
    pub audio: Vec<Vec<f32>>,
    pub stems: BTreeMap<ObjectId, Vec<Vec<f32>>>,
    pub sample_rate: u32,
    /// Stopped by request before the score finished.
    pub interrupted: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum RealtimeError {
    #[error("score has validation errors")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Pacing against a monotonic origin that slides forward while paused.
struct Clock {
    origin: Instant,
    paused_at: Option<Instant>,
}

impl Clock {
    fn new(origin: Instant) -> Self {
        Clock {
            origin,
            paused_at: None,
        }
    }

    /// Sleeps until `offset` past the origin. Returns false on stop.
    fn wait_until(&mut self, offset: Duration, transport: &Transport) -> bool {
        loop {
            if transport.stop_requested() {
                return false;
            }
            if !transport.is_running() {
                self.paused_at.get_or_insert_with(Instant::now);
                thread::sleep(POLL);
                continue;
            }
            if let Some(p) = self.paused_at.take() {
                self.origin += p.elapsed();
            }
            let due = self.origin + offset;
            let now = Instant::now();
            if now >= due {
                return true;
            }
            thread::sleep((due - now).min(POLL));
        }
    }

    fn elapsed(&self) -> Duration {
        self.origin.elapsed()
    }
}

enum ToAudio {
    Batch(Vec<ControlEvent>),
    Finish { at_sample: u64 },
}

struct AudioResult {
    schedule: MicroSchedule,
    audio: Vec<Vec<f32>>,
    stems: BTreeMap<ObjectId, Vec<Vec<f32>>>,
}

/// Runs a score against the wall clock until it completes, stalls (when
/// configured to), reaches `max_ticks`, or the transport is stopped.
pub fn run_realtime(
    score: &Score,
    sources: &BTreeMap<ObjectId, AudioClip>,
    config: RealtimeConfig,
    inputs: Inputs,
    transport: Arc<Transport>,
) -> Result<RealtimeRun, RealtimeError> {
    let report = validate(score);
    if !report.is_valid() {
        return Err(RealtimeError::Invalid(report));
    }
    let graph = compile(score).map_err(EngineError::from)?;
    let dsp = build_dsp_graph(score, config.seed, sources)?;
    let mut engine = Engine::start(score, graph, config.engine)?;
    let spt = engine.samples_per_tick();
    let sample_rate = config.engine.sample_rate;
    let period = Duration::from_millis(config.engine.tick_ms as u64);

    let mut script = inputs.script;
    script.sort_by_key(|t| t.arrival_tick);
    if let Some(tx) = &inputs.snapshots {
        let _ = tx.try_send(engine.snapshot());
    }

    let origin = Instant::now();
    let (to_audio, from_engine) = bounded(CONTROL_QUEUE);
    let audio = {
        let transport = Arc::clone(&transport);
        let relations = score.micro_relations.clone();
        let latency = period * config.latency_ticks;
        let block = config.block_size.max(1);
        thread::Builder::new()
            .name("audio".into())
            .spawn(move || audio_thread(dsp, &relations, block, origin, latency, from_engine, &transport))
            .expect("spawn audio thread")
    };

    let mut clock = Clock::new(origin);
    let mut dispatches = Vec::new();
    let mut next_script = 0;
    let mut interrupted = false;
    let mut failure = None;
    loop {
        let k = engine.current_tick();
        if config.max_ticks.is_some_and(|m| k >= m) {
            break;
        }
        if !clock.wait_until(period * k as u32, &transport) {
            interrupted = true;
            break;
        }
        let mut batch = Vec::new();
        while next_script < script.len() && script[next_script].arrival_tick <= k {
            batch.push(script[next_script].clone());
            next_script += 1;
        }
        let mut closed = false;
        loop {
            match inputs.triggers.try_recv() {
                Ok(id) => batch.push(TriggerEvent::new(id, k)),
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    closed = true;
                    break;
                }
            }
        }
        let out = match engine.tick(&batch) {
            Ok(out) => out,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        let actual_us = clock.elapsed().as_secs_f64() * 1e6;
        for e in &out.events {
            dispatches.push(Dispatch {
                event: e.clone(),
                tick: k,
                expected_us: e.sample_time as f64 * 1e6 / sample_rate as f64,
                actual_us,
            });
        }
        if !out.events.is_empty() {
            let _ = to_audio.send(ToAudio::Batch(out.events));
        }
        if let Some(tx) = &inputs.snapshots {
            let _ = tx.try_send(out.snapshot);
        }
        if engine.is_completed() {
            break;
        }
        if config.stop_when_stalled && closed && next_script == script.len() && engine.is_stalled() {
            break;
        }
    }
    let _ = to_audio.send(ToAudio::Finish {
        at_sample: engine.current_tick() * spt,
    });
    let result = audio.join().expect("audio thread panicked");
    if let Some(e) = failure {
        return Err(e.into());
    }
    Ok(RealtimeRun {
        log: engine.into_log(),
        dispatches,
        schedule: result.schedule,
        audio: result.audio,
        stems: result.stems,
        sample_rate,
        interrupted,
    })
}

fn audio_thread(
    dsp: DspGraph,
    relations: &[MicroRelation],
    block: usize,
    origin: Instant,
    latency: Duration,
    queue: Receiver<ToAudio>,
    transport: &Transport,
) -> AudioResult {
    let sample_rate = dsp.sample_rate;
    let ids: Vec<(ObjectId, usize)> = dsp.nodes.iter().map(|n| (n.id.clone(), n.outputs)).collect();
    let channels = dsp.channel_count();
    let mut renderer = Renderer::new(dsp, block);
    let mut micro = MicroScheduler::new(relations, sample_rate);
    let mut out = vec![vec![0.0f32; block]; channels];
    let mut audio: Vec<Vec<f32>> = vec![Vec::new(); channels];
    let mut stems: Vec<Vec<Vec<f32>>> = ids.iter().map(|(_, n)| vec![Vec::new(); *n]).collect();
    let mut schedule = MicroSchedule::default();
    let mut clock = Clock::new(origin);
    let mut finish: Option<u64> = None;
    loop {
        let pos = renderer.position();
        let offset = latency + Duration::from_nanos((pos as u128 * 1_000_000_000 / sample_rate as u128) as u64);
        if !clock.wait_until(offset, transport) {
            break;
        }
        loop {
            match queue.try_recv() {
                Ok(ToAudio::Batch(events)) => {
                    let s = micro.push(&events, pos);
                    schedule.events.extend(s.events.iter().cloned());
                    schedule.canceled.extend(s.canceled);
                    renderer.push_events(s.events);
                }
                Ok(ToAudio::Finish { at_sample }) => finish = Some(at_sample),
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    finish.get_or_insert(pos);
                    break;
                }
            }
        }
        if let Some(end) = finish {
            let last = renderer.pending().map(|e| e.final_sample + 1).max().unwrap_or(0);
            if pos >= end.max(last) {
                break;
            }
        }
        renderer.process_block(block, &mut out, Some(&mut stems));
        for (dst, src) in audio.iter_mut().zip(&out) {
            dst.extend_from_slice(src);
        }
    }
    schedule.events.sort_by_key(|e| e.final_sample);
    let stems = ids
        .into_iter()
        .zip(stems)
        .filter(|((_, n), _)| *n > 0)
        .map(|((id, _), s)| (id, s))
        .collect();
    AudioResult { schedule, audio, stems }
}

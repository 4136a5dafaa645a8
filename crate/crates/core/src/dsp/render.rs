//! Block renderer. Each block is cut at the sample positions of its events,
//! so events land on their exact sample whatever the block size.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use super::graph::{DspGraph, NodeKind};
use super::karplus::{karplus_step, KarplusState};
use super::micro::{MicroSchedule, ScheduledEvent};
use crate::scheduler::ControlAction;
use crate::score::ObjectId;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Ramp {
    start: u64,
    from: f64,
    to: f64,
    length: u64,
}

impl Ramp {
    fn value(&self, n: u64) -> f32 {
        let k = n.saturating_sub(self.start);
        if k >= self.length {
            return self.to as f32;
        }
        (self.from + (self.to - self.from) * (k as f64 / self.length as f64)) as f32
    }
}

#[derive(Clone, Debug)]
enum State {
    Karplus {
        string: KarplusState,
        attenuation: f32,
        active: bool,
        ramp: Option<Ramp>,
    },
    Gain {
        factor: f32,
    },
    Delay {
        lines: Vec<Vec<f32>>,
        pos: usize,
    },
    Acquisition {
        pos: Option<usize>,
    },
    Inert,
}

/// Streaming renderer over a fixed graph.
#[derive(Clone, Debug)]
pub struct Renderer {
    graph: DspGraph,
    block_size: usize,
    states: Vec<State>,
    /// Per node, per output channel.
    outs: Vec<Vec<Vec<f32>>>,
    /// Per node, per input channel.
    ins: Vec<Vec<Vec<f32>>>,
    incoming: Vec<Vec<(usize, usize, usize)>>,
    pending: VecDeque<ScheduledEvent>,
    position: u64,
}

impl Renderer {
    pub fn new(graph: DspGraph, block_size: usize) -> Self {
        assert!(block_size >= 1, "block size must be at least 1");
        let states = graph
            .nodes
            .iter()
            .map(|n| match &n.kind {
                NodeKind::Karplus {
                    attenuation,
                    delay,
                    seed,
                    ..
                } => State::Karplus {
                    string: KarplusState::new(*delay, *seed),
                    attenuation: *attenuation as f32,
                    active: false,
                    ramp: None,
                },
                NodeKind::Gain { factor } => State::Gain {
                    factor: *factor as f32,
                },
                NodeKind::SampleDelay { samples } => State::Delay {
                    lines: vec![vec![0.0; *samples]; n.inputs],
                    pos: 0,
                },
                NodeKind::Acquisition { .. } => State::Acquisition { pos: None },
                _ => State::Inert,
            })
            .collect();
        let outs = graph
            .nodes
            .iter()
            .map(|n| vec![vec![0.0; block_size]; n.outputs])
            .collect();
        let ins = graph
            .nodes
            .iter()
            .map(|n| vec![vec![0.0; block_size]; n.inputs])
            .collect();
        let mut incoming = vec![Vec::new(); graph.nodes.len()];
        for w in &graph.wires {
            incoming[w.to].push((w.from, w.from_channel, w.to_channel));
        }
        Renderer {
            graph,
            block_size,
            states,
            outs,
            ins,
            incoming,
            pending: VecDeque::with_capacity(256),
            position: 0,
        }
    }

    pub fn graph(&self) -> &DspGraph {
        &self.graph
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Next sample to be rendered.
    pub fn position(&self) -> u64 {
        self.position
    }

    /// Queues events. Events already in the past are applied at the start
    /// of the next block.
    pub fn push_events(&mut self, events: impl IntoIterator<Item = ScheduledEvent>) {
        for e in events {
            let at = self
                .pending
                .iter()
                .position(|p| p.final_sample > e.final_sample)
                .unwrap_or(self.pending.len());
            self.pending.insert(at, e);
        }
    }

    /// Events queued but not yet applied.
    pub fn pending(&self) -> impl Iterator<Item = &ScheduledEvent> {
        self.pending.iter()
    }

    pub fn into_pending(self) -> Vec<ScheduledEvent> {
        self.pending.into()
    }

    /// Renders `len <= block_size` samples. `out` receives the sink
    /// channels in order; `stems`, when given, receives every producing
    /// node's output channels.
    pub fn process_block(
        &mut self,
        len: usize,
        out: &mut [Vec<f32>],
        stems: Option<&mut [Vec<Vec<f32>>]>,
    ) {
        assert!(len <= self.block_size);
        let block_start = self.position;
        let mut offset = 0;
        while offset < len {
            let now = block_start + offset as u64;
            while self.pending.front().is_some_and(|e| e.final_sample <= now) {
                let e = self.pending.pop_front().expect("front checked");
                self.apply(&e, now);
            }
            let end = match self.pending.front() {
                Some(e) if e.final_sample < block_start + len as u64 => {
                    (e.final_sample - block_start) as usize
                }
                _ => len,
            };
            self.process_segment(now, offset, end);
            offset = end;
        }

        let mut ch = 0;
        for &s in &self.graph.sinks {
            for input in &self.ins[s] {
                out[ch][..len].copy_from_slice(&input[..len]);
                ch += 1;
            }
        }
        if let Some(stems) = stems {
            for (node, bufs) in self.outs.iter().enumerate() {
                for (c, buf) in bufs.iter().enumerate() {
                    stems[node][c].extend_from_slice(&buf[..len]);
                }
            }
        }
        self.position += len as u64;
    }

    fn apply(&mut self, e: &ScheduledEvent, now: u64) {
        let Some(node) = self.graph.node_index(&e.event.target) else {
            return;
        };
        match (&e.event.action, &self.graph.nodes[node].kind) {
            (ControlAction::Start, NodeKind::AttenuationRamp { target, from, to, length }) => {
                let ramp = Ramp {
                    start: now,
                    from: *from,
                    to: *to,
                    length: *length,
                };
                if let State::Karplus { ramp: r, .. } = &mut self.states[*target] {
                    *r = Some(ramp);
                }
            }
            (action, _) => match (&mut self.states[node], action) {
                (State::Karplus { string, active, .. }, ControlAction::Start) => {
                    string.pluck();
                    *active = true;
                }
                (State::Karplus { string, active, ramp, .. }, ControlAction::Stop) => {
                    // Attenuation drops to zero: the line empties at once.
                    string.clear();
                    *active = false;
                    *ramp = None;
                }
                (State::Karplus { attenuation, .. }, ControlAction::Param { name, value })
                    if name == "attenuation" =>
                {
                    *attenuation = *value as f32;
                }
                (State::Gain { factor }, ControlAction::Param { name, value }) if name == "factor" => {
                    *factor = *value as f32;
                }
                (State::Acquisition { pos }, ControlAction::Start) => *pos = Some(0),
                (State::Acquisition { pos }, ControlAction::Stop) => *pos = None,
                _ => {}
            },
        }
    }

    fn process_segment(&mut self, first_sample: u64, from: usize, to: usize) {
        for oi in 0..self.graph.order.len() {
            let n = self.graph.order[oi];
            for input in self.ins[n].iter_mut() {
                input[from..to].iter_mut().for_each(|s| *s = 0.0);
            }
            for &(src, src_ch, dst_ch) in &self.incoming[n] {
                let (ins, outs) = (&mut self.ins[n][dst_ch], &self.outs[src][src_ch]);
                for (d, s) in ins[from..to].iter_mut().zip(&outs[from..to]) {
                    *d += *s;
                }
            }
            let ins = &self.ins[n];
            let outs = &mut self.outs[n];
            match (&mut self.states[n], &self.graph.nodes[n].kind) {
                (
                    State::Karplus {
                        string,
                        attenuation,
                        active,
                        ramp,
                    },
                    _,
                ) => {
                    let out = &mut outs[0];
                    if !*active {
                        out[from..to].iter_mut().for_each(|s| *s = 0.0);
                        continue;
                    }
                    for (k, y) in out[from..to].iter_mut().enumerate() {
                        let a = match ramp {
                            Some(r) => r.value(first_sample + k as u64),
                            None => *attenuation,
                        };
                        let x = string.excitation();
                        *y = karplus_step(string, x, a);
                    }
                }
                (State::Gain { factor }, _) => {
                    for (o, i) in outs.iter_mut().zip(ins) {
                        for (y, x) in o[from..to].iter_mut().zip(&i[from..to]) {
                            *y = *factor * *x;
                        }
                    }
                }
                (State::Delay { lines, pos }, _) => {
                    let start = *pos;
                    for ((o, i), line) in outs.iter_mut().zip(ins).zip(lines.iter_mut()) {
                        let mut p = start;
                        for (y, x) in o[from..to].iter_mut().zip(&i[from..to]) {
                            if line.is_empty() {
                                *y = *x;
                            } else {
                                *y = line[p];
                                line[p] = *x;
                                p = (p + 1) % line.len();
                            }
                        }
                    }
                    if let Some(line) = lines.first() {
                        if !line.is_empty() {
                            *pos = (start + (to - from)) % line.len();
                        }
                    }
                }
                (State::Acquisition { pos }, NodeKind::Acquisition { clip }) => {
                    for (c, o) in outs.iter_mut().enumerate() {
                        let src = clip.channels.get(c);
                        for (k, y) in o[from..to].iter_mut().enumerate() {
                            *y = match (pos.as_ref(), src) {
                                (Some(p), Some(src)) => src.get(p + k).copied().unwrap_or(0.0),
                                _ => 0.0,
                            };
                        }
                    }
                    if let Some(p) = pos {
                        *p += to - from;
                    }
                }
                _ => {}
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RenderConfig {
    pub block_size: usize,
    pub capture_stems: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            block_size: 64,
            capture_stems: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub channels: Vec<Vec<f32>>,
    /// Per producing node, its output channels.
    pub stems: BTreeMap<ObjectId, Vec<Vec<f32>>>,
    /// Events at or beyond the end of the render.
    pub unrendered: Vec<ScheduledEvent>,
}

/// Renders `n_samples` of the graph under `schedule`.
pub fn render(graph: &DspGraph, schedule: &MicroSchedule, n_samples: usize, config: RenderConfig) -> RenderOutput {
    let mut r = Renderer::new(graph.clone(), config.block_size);
    r.push_events(schedule.events.iter().cloned());
    let mut channels = vec![vec![0.0f32; n_samples]; graph.channel_count()];
    let mut block = vec![vec![0.0f32; config.block_size]; channels.len()];
    let mut stems: Vec<Vec<Vec<f32>>> = graph
        .nodes
        .iter()
        .map(|n| vec![Vec::with_capacity(if config.capture_stems { n_samples } else { 0 }); n.outputs])
        .collect();
    let mut done = 0;
    while done < n_samples {
        let len = config.block_size.min(n_samples - done);
        let stem_sink = config.capture_stems.then_some(stems.as_mut_slice());
        r.process_block(len, &mut block, stem_sink);
        for (dst, src) in channels.iter_mut().zip(&block) {
            dst[done..done + len].copy_from_slice(&src[..len]);
        }
        done += len;
    }
    let stems = if config.capture_stems {
        graph
            .nodes
            .iter()
            .zip(stems)
            .filter(|(n, _)| n.outputs > 0)
            .map(|(n, s)| (n.id.clone(), s))
            .collect()
    } else {
        BTreeMap::new()
    };
    RenderOutput {
        channels,
        stems,
        unrendered: r.into_pending(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::graph::{build_dsp_graph, AudioClip};
    use crate::scheduler::ControlEvent;
    use crate::score::{AcquisitionSource, DataflowRelation, ProcessSpec, Score, TemporalObject};
    use crate::time::Interval;

    fn at(id: &str, action: ControlAction, t: u64) -> ScheduledEvent {
        ScheduledEvent {
            event: ControlEvent {
                target: id.into(),
                action,
                sample_time: t,
            },
            final_sample: t,
        }
    }

    fn impulse_chain(processes: &[(&str, ProcessSpec)]) -> (DspGraph, MicroSchedule) {
        let mut s = Score::new("chain");
        s.objects.push(
            TemporalObject::new("src", Interval::UNBOUNDED).with_process(ProcessSpec::Acquisition {
                source: AcquisitionSource::File("impulse.wav".into()),
            }),
        );
        let mut prev = "src";
        for (id, p) in processes {
            s.objects
                .push(TemporalObject::new(*id, Interval::UNBOUNDED).with_process(p.clone()));
            s.dataflow.push(DataflowRelation {
                from: prev.into(),
                to: (*id).into(),
            });
            prev = id;
        }
        let mut sources = BTreeMap::new();
        let mut clip = vec![0.0; 32];
        clip[0] = 1.0;
        clip[3] = -0.5;
        sources.insert(ObjectId::new("src"), AudioClip::mono(44_100, clip));
        let g = build_dsp_graph(&s, 0, &sources).unwrap();
        let sched = MicroSchedule {
            events: vec![at("src", ControlAction::Start, 0)],
            canceled: vec![],
        };
        (g, sched)
    }

    #[test]
    fn impulse_through_delay_of_seven() {
        let (g, sched) = impulse_chain(&[("d", ProcessSpec::SampleDelay { samples: 7 })]);
        let out = render(&g, &sched, 20, RenderConfig { block_size: 3, capture_stems: false });
        let nonzero: Vec<usize> = (0..20).filter(|&i| out.channels[0][i] != 0.0).collect();
        assert_eq!(nonzero, [7, 10]);
        assert_eq!(out.channels[0][7], 1.0);
    }

    #[test]
    fn gain_is_linear() {
        let (g1, sched) = impulse_chain(&[("g", ProcessSpec::Gain { factor: 1.0 })]);
        let (g3, _) = impulse_chain(&[("g", ProcessSpec::Gain { factor: -2.5 })]);
        let cfg = RenderConfig::default();
        let a = render(&g1, &sched, 40, cfg);
        let b = render(&g3, &sched, 40, cfg);
        for (x, y) in a.channels[0].iter().zip(&b.channels[0]) {
            assert_eq!(*y, -2.5 * *x);
        }
    }

    fn one_string(start: u64, stop: Option<u64>) -> (DspGraph, MicroSchedule) {
        let mut s = Score::new("string");
        s.objects.push(
            TemporalObject::new("k", Interval::UNBOUNDED).with_process(ProcessSpec::Karplus {
                freq_hz: 441.0,
                attenuation: 0.995,
                seed: Some(5),
            }),
        );
        let g = build_dsp_graph(&s, 0, &BTreeMap::new()).unwrap();
        let mut events = vec![at("k", ControlAction::Start, start)];
        if let Some(t) = stop {
            events.push(at("k", ControlAction::Stop, t));
        }
        (g, MicroSchedule { events, canceled: vec![] })
    }

    #[test]
    fn string_is_silent_before_its_start_sample() {
        let (g, sched) = one_string(1000, None);
        let out = render(&g, &sched, 3000, RenderConfig::default());
        let y = &out.channels[0];
        assert!(y[..1000].iter().all(|v| *v == 0.0));
        assert_eq!(y[1000], 1.0);
    }

    #[test]
    fn stop_silences_abruptly() {
        let (g, sched) = one_string(10, Some(1500));
        let out = render(&g, &sched, 3000, RenderConfig::default());
        let y = &out.channels[0];
        assert!(y[1400..1500].iter().any(|v| *v != 0.0));
        assert!(y[1500..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn block_sizes_agree() {
        let (g, sched) = one_string(333, Some(2777));
        let reference = render(&g, &sched, 4000, RenderConfig { block_size: 1, capture_stems: true });
        for bs in [7, 32, 64, 256, 4096] {
            let r = render(&g, &sched, 4000, RenderConfig { block_size: bs, capture_stems: true });
            assert_eq!(r, reference, "block size {bs}");
        }
    }

    #[test]
    fn late_events_are_reported() {
        let (g, sched) = one_string(10, Some(5000));
        let out = render(&g, &sched, 3000, RenderConfig::default());
        assert_eq!(out.unrendered.len(), 1);
        assert_eq!(out.unrendered[0].final_sample, 5000);
    }

    #[test]
    fn ramp_interpolates_linearly() {
        let r = Ramp {
            start: 100,
            from: 1.0,
            to: 0.0,
            length: 4,
        };
        let v: Vec<f32> = (100..106).map(|n| r.value(n)).collect();
        assert_eq!(v, [1.0, 0.75, 0.5, 0.25, 0.0, 0.0]);
    }
}

//! Audio node network built from a score's processes and dataflow.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::karplus::{delay_length, fnv1a, mix_seed};
use crate::score::{topo_order, AcquisitionSource, ObjectId, ProcessSpec, Score};

/// Decoded audio, one vector per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub sample_rate: u32,
    pub channels: Vec<Vec<f32>>,
}

impl AudioClip {
    pub fn mono(sample_rate: u32, samples: Vec<f32>) -> Self {
        AudioClip {
            sample_rate,
            channels: vec![samples],
        }
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    Karplus {
        freq_hz: f64,
        attenuation: f64,
        delay: usize,
        seed: u64,
    },
    Gain {
        factor: f64,
    },
    SampleDelay {
        samples: usize,
    },
    /// Drives the attenuation of node `target` from `from` to `to` over
    /// `length` samples once started.
    AttenuationRamp {
        target: usize,
        from: f64,
        to: f64,
        length: u64,
    },
    Acquisition {
        clip: AudioClip,
    },
    Output {
        channels: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DspNode {
    pub id: ObjectId,
    pub kind: NodeKind,
    pub inputs: usize,
    pub outputs: usize,
}

impl DspNode {
    /// Gated nodes are silent until started and after stopped; the others
    /// process audio for the whole render.
    pub fn is_gated(&self) -> bool {
        matches!(
            self.kind,
            NodeKind::Karplus { .. } | NodeKind::Acquisition { .. } | NodeKind::AttenuationRamp { .. }
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Wire {
    pub from: usize,
    pub from_channel: usize,
    pub to: usize,
    pub to_channel: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DspGraph {
    pub sample_rate: u32,
    pub nodes: Vec<DspNode>,
    pub wires: Vec<Wire>,
    /// Processing order: every node after all of its producers.
    pub order: Vec<usize>,
    /// Output nodes in score order; their channels make up the render.
    pub sinks: Vec<usize>,
}

impl DspGraph {
    pub fn node_index(&self, id: &ObjectId) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == *id)
    }

    pub fn channel_count(&self) -> usize {
        self.sinks.iter().map(|&s| self.nodes[s].inputs).sum()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DspError {
    #[error("dataflow graph has a cycle")]
    CyclicDataflow,
    #[error("{id}: dataflow endpoint has no process or no matching audio port")]
    BadEndpoint { id: String },
    #[error("{id}: delay line of {delay} samples is shorter than 2")]
    DelayTooShort { id: String, delay: usize },
    #[error("{id}: no audio loaded for acquisition source")]
    MissingSource { id: String },
    #[error("{id}: live input is not supported")]
    LiveInput { id: String },
    #[error("{id}: source is {found} Hz, score runs at {expected} Hz")]
    SampleRateMismatch { id: String, expected: u32, found: u32 },
    #[error("{id}: ramp target is not a karplus node")]
    BadRampTarget { id: String },
    #[error("{id}: output needs at least one channel")]
    NoChannels { id: String },
}

/// Builds one node per process, wires per dataflow relation with
/// merge/split arity adaptation, and routes every producer without an
/// outgoing relation to the first output node (an implicit mono `root`
/// output is added when the score has none).
///
/// `seed` feeds the excitation noise of strings without their own seed;
/// `sources` holds the decoded audio of acquisition objects.
pub fn build_dsp_graph(
    score: &Score,
    seed: u64,
    sources: &BTreeMap<ObjectId, AudioClip>,
) -> Result<DspGraph, DspError> {
    let spt = score.samples_per_tick().unwrap_or(0);
    let mut nodes = Vec::new();
    let mut ramps = Vec::new();
    for obj in &score.objects {
        let Some(process) = &obj.process else { continue };
        let id = obj.id.clone();
        let name = || String::from(obj.id.as_str());
        let (kind, inputs, outputs) = match process {
            ProcessSpec::Karplus {
                freq_hz,
                attenuation,
                seed: own,
            } => {
                let delay = delay_length(score.sample_rate, *freq_hz);
                if delay < 2 {
                    return Err(DspError::DelayTooShort { id: name(), delay });
                }
                let seed = own.unwrap_or_else(|| mix_seed(seed, fnv1a(obj.id.as_str())));
                let kind = NodeKind::Karplus {
                    freq_hz: *freq_hz,
                    attenuation: *attenuation,
                    delay,
                    seed,
                };
                (kind, 0, 1)
            }
            // Arity of pass-through nodes is settled once producers are known.
            ProcessSpec::Gain { factor } => (NodeKind::Gain { factor: *factor }, 0, 0),
            ProcessSpec::SampleDelay { samples } => (
                NodeKind::SampleDelay {
                    samples: *samples as usize,
                },
                0,
                0,
            ),
            ProcessSpec::AttenuationRamp { target, from, to } => {
                ramps.push((nodes.len(), target.clone()));
                let kind = NodeKind::AttenuationRamp {
                    target: usize::MAX,
                    from: *from,
                    to: *to,
                    length: obj.duration.min * spt,
                };
                (kind, 0, 0)
            }
            ProcessSpec::Acquisition { source } => {
                if *source == AcquisitionSource::LiveInput {
                    return Err(DspError::LiveInput { id: name() });
                }
                let clip = sources
                    .get(&obj.id)
                    .ok_or_else(|| DspError::MissingSource { id: name() })?;
                if clip.sample_rate != score.sample_rate {
                    return Err(DspError::SampleRateMismatch {
                        id: name(),
                        expected: score.sample_rate,
                        found: clip.sample_rate,
                    });
                }
                let outs = clip.channels.len().max(1);
                (NodeKind::Acquisition { clip: clip.clone() }, 0, outs)
            }
            ProcessSpec::Output { channels } => {
                if *channels == 0 {
                    return Err(DspError::NoChannels { id: name() });
                }
                let c = usize::from(*channels);
                (NodeKind::Output { channels: c }, c, 0)
            }
        };
        nodes.push(DspNode {
            id,
            kind,
            inputs,
            outputs,
        });
    }

    for (ramp, target) in ramps {
        let t = nodes
            .iter()
            .position(|n| n.id == target && matches!(n.kind, NodeKind::Karplus { .. }))
            .ok_or_else(|| DspError::BadRampTarget {
                id: String::from(nodes[ramp].id.as_str()),
            })?;
        if let NodeKind::AttenuationRamp { target, .. } = &mut nodes[ramp].kind {
            *target = t;
        }
    }

    let index = |id: &ObjectId| nodes.iter().position(|n| n.id == *id);
    let mut links = Vec::new();
    for df in &score.dataflow {
        let (Some(a), Some(b)) = (index(&df.from), index(&df.to)) else {
            let bad = if index(&df.from).is_none() { &df.from } else { &df.to };
            return Err(DspError::BadEndpoint {
                id: String::from(bad.as_str()),
            });
        };
        links.push((a, b));
    }

    let has_outgoing: Vec<bool> = (0..nodes.len())
        .map(|i| links.iter().any(|&(a, _)| a == i))
        .collect();
    let produces = |n: &DspNode| {
        matches!(
            n.kind,
            NodeKind::Karplus { .. }
                | NodeKind::Gain { .. }
                | NodeKind::SampleDelay { .. }
                | NodeKind::Acquisition { .. }
        )
    };
    let dangling: Vec<usize> = (0..nodes.len())
        .filter(|&i| produces(&nodes[i]) && !has_outgoing[i])
        .collect();
    let mut sinks: Vec<usize> = (0..nodes.len())
        .filter(|&i| matches!(nodes[i].kind, NodeKind::Output { .. }))
        .collect();
    if !dangling.is_empty() {
        if sinks.is_empty() {
            sinks.push(nodes.len());
            nodes.push(DspNode {
                id: ObjectId::root(),
                kind: NodeKind::Output { channels: 1 },
                inputs: 1,
                outputs: 0,
            });
        }
        for d in dangling {
            links.push((d, sinks[0]));
        }
    }

    let ids: Vec<usize> = (0..nodes.len()).collect();
    let pairs: Vec<(&usize, &usize)> = links.iter().map(|(a, b)| (&ids[*a], &ids[*b])).collect();
    let sorted = topo_order(&pairs).ok_or(DspError::CyclicDataflow)?;
    let mut order: Vec<usize> = sorted.into_iter().copied().collect();
    for i in 0..nodes.len() {
        if !order.contains(&i) {
            order.push(i);
        }
    }

    // Pass-through nodes take the widest producer's channel count.
    for &i in &order {
        if matches!(nodes[i].kind, NodeKind::Gain { .. } | NodeKind::SampleDelay { .. }) {
            let width = links
                .iter()
                .filter(|&&(_, b)| b == i)
                .map(|&(a, _)| nodes[a].outputs)
                .max()
                .unwrap_or(1)
                .max(1);
            nodes[i].inputs = width;
            nodes[i].outputs = width;
        }
    }

    let mut wires = Vec::new();
    for &(a, b) in &links {
        let (p, c) = (nodes[a].outputs, nodes[b].inputs);
        if p == 0 || c == 0 {
            let bad = if p == 0 { a } else { b };
            return Err(DspError::BadEndpoint {
                id: String::from(nodes[bad].id.as_str()),
            });
        }
        if p >= c {
            // Merge: surplus outputs summed onto inputs modulo input count.
            wires.extend((0..p).map(|i| Wire {
                from: a,
                from_channel: i,
                to: b,
                to_channel: i % c,
            }));
        } else {
            // Split: input j reads output j modulo output count.
            wires.extend((0..c).map(|j| Wire {
                from: a,
                from_channel: j % p,
                to: b,
                to_channel: j,
            }));
        }
    }

    Ok(DspGraph {
        sample_rate: score.sample_rate,
        nodes,
        wires,
        order,
        sinks,
    })
}

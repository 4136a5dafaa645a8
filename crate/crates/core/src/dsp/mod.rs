//! Sample-accurate audio side: node graph, micro offsets, rendering.

pub mod graph;
pub mod karplus;
pub mod micro;
pub mod render;

pub use graph::{build_dsp_graph, AudioClip, DspError, DspGraph, DspNode, NodeKind, Wire};
pub use karplus::{karplus_step, KarplusState, Lcg};
pub use micro::{schedule_micro, MicroSchedule, MicroScheduler, ScheduledEvent};
pub use render::{render, RenderConfig, RenderOutput, Renderer};

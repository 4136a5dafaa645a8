//! Core of the scoreforge interactive score engine.
//!
//! A score is a tree of temporal objects bound by interval relations (the
//! macro level, scheduled on a discrete tick clock) plus sample-level micro
//! relations and dataflow wiring (the micro level, rendered by a DSP graph).
//!
//! The crate is `no_std` and only needs `alloc`. Document parsing, file
//! formats, wall-clock execution and the CLI live in the `scoreforge` crate.
//!
//! Pipeline:
//!
//! ```text
//! Score --compile--> ConstraintGraph --Engine::tick--> ControlEvent*
//!                                                         |
//!           DspGraph <--build_dsp_graph-- Score           v
//!              |                                schedule_micro
//!              +-------------- render <-------- MicroSchedule
//! ```

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod compile;
pub mod dsp;
pub mod offline;
pub mod scheduler;
pub mod score;
pub mod solver;
pub mod time;

pub use compile::{compile, ConstraintGraph, Edge, EdgeOrigin, TimePointId};
pub use scheduler::{
    ControlAction, ControlEvent, Engine, EngineConfig, EngineError, EventLog, TriggerEvent,
    TriggerPolicy,
};
pub use score::{
    validate, ObjectId, Point, ProcessSpec, Score, TemporalObject, TimePointRef,
    ValidationReport,
};
pub use time::{Bound, Interval};

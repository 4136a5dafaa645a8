//! Scenario files, offline rendering and live sessions on top of
//! `scoreforge-core`.

pub mod document;
pub mod harness;
pub mod load;
pub mod protocol;
pub mod realtime;
pub mod session;
pub mod tables;
pub mod wav;

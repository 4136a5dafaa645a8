//! Jitter and micro-offset measurements over offline and live runs.

use std::collections::BTreeMap;

use scoreforge_core::analysis::{compute_jitter, detect_onsets, samples_to_us, JitterError, JitterMode, JitterReport};
use scoreforge_core::dsp::MicroSchedule;
use scoreforge_core::scheduler::ControlAction;
use scoreforge_core::score::{ObjectId, Point, ProcessSpec, Score, TimePointRef};

use crate::realtime::Dispatch;

/// Threshold used to locate a string's first sample in its own stem.
pub const STEM_THRESHOLD: f32 = 1e-6;

/// Objects whose start produces sound.
pub fn sounding_objects(score: &Score) -> Vec<ObjectId> {
    score
        .objects
        .iter()
        .filter(|o| matches!(o.process, Some(ProcessSpec::Karplus { .. } | ProcessSpec::Acquisition { .. })))
        .map(|o| o.id.clone())
        .collect()
}

/// First onset of each stem.
pub fn stem_onsets(stems: &BTreeMap<ObjectId, Vec<Vec<f32>>>, threshold: f32) -> BTreeMap<ObjectId, usize> {
    stems
        .iter()
        .filter_map(|(id, chans)| {
            let first = chans.first()?;
            detect_onsets(first, threshold).first().map(|&i| (id.clone(), i))
        })
        .collect()
}

/// Expected (scheduled) against measured (rendered) onset of every
/// sounding start, in schedule order, as a relative jitter report.
pub fn audio_jitter(
    score: &Score,
    schedule: &MicroSchedule,
    stems: &BTreeMap<ObjectId, Vec<Vec<f32>>>,
    mode: JitterMode,
    load: Option<f64>,
) -> Result<JitterReport, JitterError> {
    let sounding = sounding_objects(score);
    let onsets = stem_onsets(stems, STEM_THRESHOLD);
    let mut expected = Vec::new();
    let mut actual = Vec::new();
    for e in &schedule.events {
        if e.event.action != ControlAction::Start || !sounding.contains(&e.event.target) {
            continue;
        }
        let Some(&at) = onsets.get(&e.event.target) else { continue };
        expected.push(samples_to_us(e.final_sample as f64, score.sample_rate));
        actual.push(samples_to_us(at as f64, score.sample_rate));
    }
    compute_jitter(&expected, &actual, mode, load)
}

/// Logical against wall-clock dispatch time of every sounding start.
pub fn dispatch_jitter(score: &Score, dispatches: &[Dispatch], load: Option<f64>) -> Result<JitterReport, JitterError> {
    let sounding = sounding_objects(score);
    let starts: Vec<&Dispatch> = dispatches
        .iter()
        .filter(|d| d.event.action == ControlAction::Start && sounding.contains(&d.event.target))
        .collect();
    let expected: Vec<f64> = starts.iter().map(|d| d.expected_us).collect();
    let actual: Vec<f64> = starts.iter().map(|d| d.actual_us).collect();
    compute_jitter(&expected, &actual, JitterMode::Realtime, load)
}

/// Mean absolute lateness of dispatches against their logical times.
pub fn mean_dispatch_lateness_us(dispatches: &[Dispatch]) -> f64 {
    if dispatches.is_empty() {
        return 0.0;
    }
    dispatches.iter().map(|d| (d.actual_us - d.expected_us).abs()).sum::<f64>() / dispatches.len() as f64
}

/// A micro relation between two starts, checked on rendered stems.
#[derive(Clone, Debug, PartialEq)]
pub struct MicroCheck {
    pub from: TimePointRef,
    pub to: TimePointRef,
    pub expected_samples: u64,
    /// Onset difference in the rendered audio; `None` when either string
    /// never sounded.
    pub measured_samples: Option<i64>,
}

impl MicroCheck {
    pub fn deviation(&self) -> Option<i64> {
        self.measured_samples.map(|m| m - self.expected_samples as i64)
    }
}

/// Every start-to-start micro relation between sounding objects.
pub fn micro_checks(score: &Score, stems: &BTreeMap<ObjectId, Vec<Vec<f32>>>) -> Vec<MicroCheck> {
    let sounding = sounding_objects(score);
    let onsets = stem_onsets(stems, STEM_THRESHOLD);
    score
        .micro_relations
        .iter()
        .filter(|m| m.from.point == Point::Start && m.to.point == Point::Start)
        .filter(|m| sounding.contains(&m.from.object) && sounding.contains(&m.to.object))
        .map(|m| MicroCheck {
            from: m.from.clone(),
            to: m.to.clone(),
            expected_samples: m.offset_samples(score.sample_rate),
            measured_samples: match (onsets.get(&m.from.object), onsets.get(&m.to.object)) {
                (Some(&a), Some(&b)) => Some(b as i64 - a as i64),
                _ => None,
            },
        })
        .collect()
}

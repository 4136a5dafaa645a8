//! Onset extraction and relative jitter.

use alloc::vec::Vec;

/// Sub-threshold samples required between two onsets.
pub const NOTE_GAP: usize = 1024;

pub const DEFAULT_THRESHOLD: f32 = 1e-3;

/// Indices where `|y|` rises above `threshold` after at least
/// [`NOTE_GAP`] quiet samples. The buffer start counts as quiet.
pub fn detect_onsets(buffer: &[f32], threshold: f32) -> Vec<usize> {
    let mut onsets = Vec::new();
    let mut quiet = NOTE_GAP;
    for (i, y) in buffer.iter().enumerate() {
        if y.abs() > threshold {
            if quiet >= NOTE_GAP {
                onsets.push(i);
            }
            quiet = 0;
        } else {
            quiet = quiet.saturating_add(1);
        }
    }
    onsets
}

/// First sample with `|y| > threshold` at or after `from`.
pub fn first_above(buffer: &[f32], from: usize, threshold: f32) -> Option<usize> {
    buffer
        .iter()
        .skip(from)
        .position(|y| y.abs() > threshold)
        .map(|i| i + from)
}

pub fn samples_to_us(samples: f64, sample_rate: u32) -> f64 {
    samples * 1e6 / f64::from(sample_rate)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JitterMode {
    Offline,
    Realtime,
}

impl JitterMode {
    pub fn as_str(self) -> &'static str {
        match self {
            JitterMode::Offline => "offline",
            JitterMode::Realtime => "realtime",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JitterRow {
    pub onset_index: usize,
    pub expected_us: f64,
    pub actual_us: f64,
    pub abs_dev_us: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JitterReport {
    /// Every onset after the first, offsets relative to the first onset.
    pub rows: Vec<JitterRow>,
    pub mean_abs_dev_us: f64,
    pub load: Option<f64>,
    pub mode: JitterMode,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JitterError {
    #[error("{expected} expected onsets but {actual} measured")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("need at least two onsets, got {0}")]
    TooShort(usize),
}

/// Mean absolute deviation between expected and actual onset times, both
/// taken relative to their own first onset. Inputs are in microseconds.
pub fn compute_jitter(
    expected: &[f64],
    actual: &[f64],
    mode: JitterMode,
    load: Option<f64>,
) -> Result<JitterReport, JitterError> {
    if expected.len() != actual.len() {
        return Err(JitterError::LengthMismatch {
            expected: expected.len(),
            actual: actual.len(),
        });
    }
    if expected.len() < 2 {
        return Err(JitterError::TooShort(expected.len()));
    }
    let (e0, a0) = (expected[0], actual[0]);
    let rows: Vec<JitterRow> = expected
        .iter()
        .zip(actual)
        .enumerate()
        .skip(1)
        .map(|(i, (e, a))| {
            let (e, a) = (e - e0, a - a0);
            JitterRow {
                onset_index: i,
                expected_us: e,
                actual_us: a,
                abs_dev_us: (e - a).abs(),
            }
        })
        .collect();
    let mean = rows.iter().map(|r| r.abs_dev_us).sum::<f64>() / rows.len() as f64;
    Ok(JitterReport {
        rows,
        mean_abs_dev_us: mean,
        load,
        mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn us(samples: &[u64]) -> Vec<f64> {
        samples.iter().map(|&s| samples_to_us(s as f64, 44_100)).collect()
    }

    #[test]
    fn silence_has_no_onsets() {
        assert!(detect_onsets(&[0.0; 5000], 1e-3).is_empty());
    }

    #[test]
    fn single_impulse() {
        let mut b = vec![0.0; 2000];
        b[500] = 1.0;
        assert_eq!(detect_onsets(&b, 1e-3), [500]);
    }

    #[test]
    fn onsets_need_a_gap() {
        let mut b = vec![0.0; 6000];
        b[100] = 0.5;
        b[100 + NOTE_GAP] = 0.5; // exactly NOTE_GAP - 1 quiet samples between
        b[3000] = 0.5;
        assert_eq!(detect_onsets(&b, 1e-3), [100, 3000]);
        b[100 + NOTE_GAP] = 0.0;
        b[101 + NOTE_GAP] = 0.5;
        assert_eq!(detect_onsets(&b, 1e-3), [100, 101 + NOTE_GAP, 3000]);
    }

    #[test]
    fn identical_series_have_zero_jitter() {
        let r = compute_jitter(&us(&[0, 100, 200]), &us(&[0, 100, 200]), JitterMode::Offline, None).unwrap();
        assert_eq!(r.mean_abs_dev_us, 0.0);
        assert_eq!(r.rows.len(), 2);
    }

    #[test]
    fn twenty_two_samples_is_about_499_us() {
        let r = compute_jitter(&us(&[0, 4410]), &us(&[0, 4432]), JitterMode::Offline, None).unwrap();
        assert!((r.mean_abs_dev_us - 498.866).abs() < 1e-3);
        assert_eq!(r.mean_abs_dev_us.round(), 499.0);
    }

    #[test]
    fn large_values_are_representable() {
        let r = compute_jitter(&[0.0, 1.0], &[0.0, 7_991_000.0 + 1.0], JitterMode::Realtime, Some(0.85))
            .unwrap();
        assert_eq!(r.mean_abs_dev_us, 7_991_000.0);
    }

    #[test]
    fn length_errors() {
        assert_eq!(
            compute_jitter(&[0.0, 1.0], &[0.0], JitterMode::Offline, None),
            Err(JitterError::LengthMismatch { expected: 2, actual: 1 })
        );
        assert_eq!(
            compute_jitter(&[0.0], &[0.0], JitterMode::Offline, None),
            Err(JitterError::TooShort(1))
        );
    }
}

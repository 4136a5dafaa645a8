//! RIFF WAV output and acquisition sources.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hound::{SampleFormat as HoundFormat, WavReader, WavSpec, WavWriter};
use scoreforge_core::dsp::AudioClip;
use scoreforge_core::score::{AcquisitionSource, ObjectId, ProcessSpec, Score};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    #[default]
    Float32,
}

impl FromStr for SampleFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pcm16" => Ok(SampleFormat::Pcm16),
            "float32" => Ok(SampleFormat::Float32),
            other => Err(format!("unknown sample format `{other}` (expected pcm16 or float32)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WavError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: hound::Error },
    #[error("{path}: sample rate {found} Hz does not match the score's {expected} Hz")]
    SampleRateMismatch { path: PathBuf, found: u32, expected: u32 },
    #[error("cannot write audio with no channels")]
    NoChannels,
    #[error("channel lengths differ")]
    RaggedChannels,
}

/// Writes non-interleaved channels. PCM output clamps to [-1, 1].
pub fn write_wav(
    path: &Path,
    sample_rate: u32,
    channels: &[Vec<f32>],
    format: SampleFormat,
) -> Result<(), WavError> {
    let first = channels.first().ok_or(WavError::NoChannels)?;
    if channels.iter().any(|c| c.len() != first.len()) {
        return Err(WavError::RaggedChannels);
    }
    let io = |source| WavError::Io {
        path: path.to_path_buf(),
        source,
    };
    let (bits_per_sample, sample_format) = match format {
        SampleFormat::Pcm16 => (16, HoundFormat::Int),
        SampleFormat::Float32 => (32, HoundFormat::Float),
    };
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample,
        sample_format,
    };
    let mut w = WavWriter::create(path, spec).map_err(io)?;
    for i in 0..first.len() {
        for c in channels {
            match format {
                SampleFormat::Pcm16 => w.write_sample(pcm16(c[i])).map_err(io)?,
                SampleFormat::Float32 => w.write_sample(c[i]).map_err(io)?,
            }
        }
    }
    w.finalize().map_err(io)
}

fn pcm16(x: f32) -> i16 {
    (x.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16
}

/// Reads a WAV file into non-interleaved float channels.
pub fn read_wav(path: &Path) -> Result<AudioClip, WavError> {
    let io = |source| WavError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut r = WavReader::open(path).map_err(io)?;
    let spec = r.spec();
    let n = spec.channels.max(1) as usize;
    let samples: Vec<f32> = match spec.sample_format {
        HoundFormat::Float => r.samples::<f32>().collect::<Result<_, _>>().map_err(io)?,
        HoundFormat::Int => {
            let scale = (1u64 << (spec.bits_per_sample - 1)) as f32;
            r.samples::<i32>()
                .map(|s| s.map(|v| v as f32 / scale))
                .collect::<Result<_, _>>()
                .map_err(io)?
        }
    };
    let mut channels = vec![Vec::with_capacity(samples.len() / n); n];
    for (i, s) in samples.into_iter().enumerate() {
        channels[i % n].push(s);
    }
    Ok(AudioClip {
        sample_rate: spec.sample_rate,
        channels,
    })
}

/// Loads every file-based acquisition source of a score, resolving relative
/// paths against `base_dir`. Live inputs are left to the graph builder.
pub fn load_sources(score: &Score, base_dir: &Path) -> Result<BTreeMap<ObjectId, AudioClip>, WavError> {
    let mut out = BTreeMap::new();
    for o in &score.objects {
        let Some(ProcessSpec::Acquisition {
            source: AcquisitionSource::File(file),
        }) = &o.process
        else {
            continue;
        };
        let path = base_dir.join(file);
        let clip = read_wav(&path)?;
        if clip.sample_rate != score.sample_rate {
            return Err(WavError::SampleRateMismatch {
                path,
                found: clip.sample_rate,
                expected: score.sample_rate,
            });
        }
        out.insert(o.id.clone(), clip);
    }
    Ok(out)
}

//! Scenario documents: JSON text to [`Score`] and back.
//!
//! Macro durations may be written in ticks, milliseconds or seconds. Values
//! that do not land on a whole tick are rounded to the nearest one and
//! reported as warnings. `"inf"` stands for an unbounded maximum.

use serde::{Deserialize, Serialize};

use scoreforge_core::score::{
    AcquisitionSource, DataflowRelation, InteractivePoint, MicroRelation, Point, ProcessSpec, Score,
    TemporalObject, TemporalRelation, TimePointRef, DEFAULT_SAMPLE_RATE, DEFAULT_TICK_MS,
};
use scoreforge_core::time::{Bound, Interval, MicroUnit};

#[derive(Clone, Debug, PartialEq)]
pub struct Parsed {
    pub score: Score,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ParseOptions {
    /// Replaces the document's tick period before unit conversion.
    pub tick_ms: Option<u32>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("unknown process kind `{kind}` at line {line}, column {column}")]
    UnknownKind { kind: String, line: usize, column: usize },
    #[error("missing required field `{field}` at line {line}, column {column}")]
    MissingField { field: String, line: usize, column: usize },
    #[error("invalid value at line {line}, column {column}: {message}")]
    Data { line: usize, column: usize, message: String },
    #[error("{context}: {message}")]
    Invalid { context: String, message: String },
}

impl ParseError {
    fn from_json(e: serde_json::Error) -> Self {
        let (line, column) = (e.line(), e.column());
        let message = e.to_string();
        let text = message.split(" at line ").next().unwrap_or(&message).to_string();
        if !e.is_data() {
            return ParseError::Syntax { line, column, message: text };
        }
        if let Some(field) = quoted_after(&text, "missing field ") {
            return ParseError::MissingField { field, line, column };
        }
        if text.contains("expected one of `karplus`") {
            if let Some(kind) = quoted_after(&text, "unknown variant ") {
                return ParseError::UnknownKind { kind, line, column };
            }
        }
        ParseError::Data { line, column, message: text }
    }

    fn invalid(context: impl Into<String>, message: impl Into<String>) -> Self {
        ParseError::Invalid {
            context: context.into(),
            message: message.into(),
        }
    }
}

fn quoted_after(text: &str, prefix: &str) -> Option<String> {
    let rest = text.split_once(prefix)?.1.strip_prefix('`')?;
    Some(rest.split_once('`')?.0.to_string())
}

#[derive(Serialize, Deserialize)]
struct Document {
    #[serde(default)]
    name: String,
    #[serde(default = "default_sample_rate")]
    sample_rate: u32,
    #[serde(default = "default_tick_ms")]
    tick_ms: u32,
    /// Duration of the implicit root object.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    duration: Option<Span>,
    #[serde(default, skip_serializing_if = "MacroUnit::is_ticks")]
    unit: MacroUnit,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    objects: Vec<ObjectDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    relations: Vec<RelationDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    micro_relations: Vec<MicroDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    interactive: Vec<InteractiveDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    dataflow: Vec<FlowDoc>,
}

fn default_sample_rate() -> u32 {
    DEFAULT_SAMPLE_RATE
}

fn default_tick_ms() -> u32 {
    DEFAULT_TICK_MS
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum MacroUnit {
    #[default]
    Ticks,
    Ms,
    S,
}

impl MacroUnit {
    fn is_ticks(&self) -> bool {
        *self == MacroUnit::Ticks
    }

    fn millis(self) -> Option<f64> {
        match self {
            MacroUnit::Ticks => None,
            MacroUnit::Ms => Some(1.0),
            MacroUnit::S => Some(1000.0),
        }
    }

    fn label(self) -> &'static str {
        match self {
            MacroUnit::Ticks => "ticks",
            MacroUnit::Ms => "ms",
            MacroUnit::S => "s",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Num {
    Int(u64),
    Float(f64),
    Text(String),
}

#[derive(Serialize, Deserialize)]
struct Span {
    min: Num,
    max: Num,
}

#[derive(Serialize, Deserialize)]
struct ObjectDoc {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent: Option<String>,
    duration: Span,
    #[serde(default, skip_serializing_if = "MacroUnit::is_ticks")]
    unit: MacroUnit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    process: Option<ProcessDoc>,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum PointDoc {
    Start,
    End,
}

#[derive(Serialize, Deserialize)]
struct PointRefDoc {
    object: String,
    point: PointDoc,
}

#[derive(Serialize, Deserialize)]
struct RelationDoc {
    from: PointRefDoc,
    to: PointRefDoc,
    min: Num,
    max: Num,
    #[serde(default, skip_serializing_if = "MacroUnit::is_ticks")]
    unit: MacroUnit,
}

#[derive(Clone, Copy, Default, Serialize, Deserialize)]
enum MicroUnitDoc {
    #[default]
    #[serde(rename = "samples")]
    Samples,
    #[serde(rename = "us")]
    Micros,
    #[serde(rename = "ms")]
    Millis,
    #[serde(rename = "s")]
    Seconds,
}

#[derive(Serialize, Deserialize)]
struct MicroDoc {
    from: PointRefDoc,
    to: PointRefDoc,
    offset: u64,
    #[serde(default)]
    unit: MicroUnitDoc,
}

#[derive(Serialize, Deserialize)]
struct InteractiveDoc {
    id: String,
    binds: PointRefDoc,
}

#[derive(Serialize, Deserialize)]
struct FlowDoc {
    from: String,
    to: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ProcessDoc {
    Karplus {
        freq_hz: f64,
        attenuation: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Gain {
        factor: f64,
    },
    SampleDelay {
        samples: u64,
    },
    AttenuationRamp {
        target_object: String,
        from: f64,
        to: f64,
    },
    Acquisition {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        source: Option<String>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        live: bool,
    },
    Output {
        channels: u16,
    },
}

/// Parses a scenario document with default options.
pub fn parse_scenario(text: &str) -> Result<Parsed, ParseError> {
    parse_scenario_with(text, ParseOptions::default())
}

pub fn parse_scenario_with(text: &str, options: ParseOptions) -> Result<Parsed, ParseError> {
    let doc: Document = serde_json::from_str(text).map_err(ParseError::from_json)?;
    let tick_ms = options.tick_ms.unwrap_or(doc.tick_ms);
    if tick_ms == 0 {
        return Err(ParseError::invalid("tick_ms", "tick period must be positive"));
    }
    let mut cx = Converter {
        tick_ms,
        warnings: Vec::new(),
    };

    let mut score = Score::new(doc.name);
    score.sample_rate = doc.sample_rate;
    score.tick_ms = tick_ms;
    if let Some(span) = &doc.duration {
        score.root_duration = cx.interval(span, doc.unit, "root duration", "empty duration interval")?;
    }
    for o in doc.objects {
        let context = format!("object `{}`", o.id);
        let duration = cx.interval(&o.duration, o.unit, &context, "empty duration interval")?;
        let process = o.process.map(|p| process_spec(p, &context)).transpose()?;
        score.objects.push(TemporalObject {
            id: o.id.as_str().into(),
            parent: o.parent.map(|p| p.as_str().into()),
            duration,
            process,
        });
    }
    for (i, r) in doc.relations.into_iter().enumerate() {
        let context = format!("relation {i} ({}.{} -> {}.{})", r.from.object, point_name(r.from.point), r.to.object, point_name(r.to.point));
        let span = Span { min: r.min, max: r.max };
        let interval = cx.interval(&span, r.unit, &context, "empty relation interval")?;
        score.relations.push(TemporalRelation {
            from: point_ref(r.from),
            to: point_ref(r.to),
            interval,
        });
    }
    for m in doc.micro_relations {
        score.micro_relations.push(MicroRelation {
            from: point_ref(m.from),
            to: point_ref(m.to),
            offset: m.offset,
            unit: micro_unit(m.unit),
        });
    }
    for ip in doc.interactive {
        score.interactive.push(InteractivePoint {
            id: ip.id,
            binds: point_ref(ip.binds),
        });
    }
    for f in doc.dataflow {
        score.dataflow.push(DataflowRelation {
            from: f.from.as_str().into(),
            to: f.to.as_str().into(),
        });
    }
    for (k, m) in score.micro_relations.iter().enumerate() {
        if !m.unit.converts_exactly(m.offset, score.sample_rate) {
            cx.warnings.push(format!(
                "micro relation {k}: {} {} is not a whole number of samples at {} Hz, rounded to {}",
                m.offset,
                m.unit,
                score.sample_rate,
                m.offset_samples(score.sample_rate)
            ));
        }
    }
    Ok(Parsed {
        score,
        warnings: cx.warnings,
    })
}

struct Converter {
    tick_ms: u32,
    warnings: Vec<String>,
}

impl Converter {
    fn interval(&mut self, span: &Span, unit: MacroUnit, context: &str, empty: &str) -> Result<Interval, ParseError> {
        let min = match self.ticks(&span.min, unit, context, "min")? {
            Bound::Finite(v) => v,
            Bound::Infinite => return Err(ParseError::invalid(context, "min cannot be inf")),
        };
        let max = self.ticks(&span.max, unit, context, "max")?;
        let interval = Interval { min, max };
        if interval.is_empty() {
            return Err(ParseError::invalid(context, empty));
        }
        Ok(interval)
    }

    fn ticks(&mut self, n: &Num, unit: MacroUnit, context: &str, field: &str) -> Result<Bound, ParseError> {
        let value = match n {
            Num::Text(t) if t == "inf" => return Ok(Bound::Infinite),
            Num::Text(t) => {
                return Err(ParseError::invalid(context, format!("{field}: expected a number or \"inf\", found {t:?}")))
            }
            Num::Int(v) => match unit.millis() {
                None => return Ok(Bound::Finite(*v)),
                Some(ms) => {
                    let total = *v as u128 * ms as u128;
                    let tick = self.tick_ms as u128;
                    if total.is_multiple_of(tick) {
                        return Ok(Bound::Finite((total / tick) as u64));
                    }
                    *v as f64
                }
            },
            Num::Float(f) => *f,
        };
        if !value.is_finite() || value < 0.0 {
            return Err(ParseError::invalid(context, format!("{field}: {value} is not a non-negative duration")));
        }
        let exact = match unit.millis() {
            None => value,
            Some(ms) => value * ms / self.tick_ms as f64,
        };
        let rounded = exact.round();
        if (exact - rounded).abs() > 1e-9 {
            self.warnings.push(format!(
                "{context}: {field} {value} {} is {exact} ticks at {} ms, rounded to {rounded}",
                unit.label(),
                self.tick_ms
            ));
        }
        Ok(Bound::Finite(rounded as u64))
    }
}

fn process_spec(p: ProcessDoc, context: &str) -> Result<ProcessSpec, ParseError> {
    Ok(match p {
        ProcessDoc::Karplus {
            freq_hz,
            attenuation,
            seed,
        } => ProcessSpec::Karplus {
            freq_hz,
            attenuation,
            seed,
        },
        ProcessDoc::Gain { factor } => ProcessSpec::Gain { factor },
        ProcessDoc::SampleDelay { samples } => ProcessSpec::SampleDelay { samples },
        ProcessDoc::AttenuationRamp { target_object, from, to } => ProcessSpec::AttenuationRamp {
            target: target_object.as_str().into(),
            from,
            to,
        },
        ProcessDoc::Acquisition { source, live } => ProcessSpec::Acquisition {
            source: match (source, live) {
                (Some(path), false) => AcquisitionSource::File(path),
                (None, true) => AcquisitionSource::LiveInput,
                _ => {
                    return Err(ParseError::invalid(
                        context,
                        "acquisition needs exactly one of `source` or `live`",
                    ))
                }
            },
        },
        ProcessDoc::Output { channels } => ProcessSpec::Output { channels },
    })
}

fn point_name(p: PointDoc) -> &'static str {
    match p {
        PointDoc::Start => "start",
        PointDoc::End => "end",
    }
}

fn point_ref(r: PointRefDoc) -> TimePointRef {
    let point = match r.point {
        PointDoc::Start => Point::Start,
        PointDoc::End => Point::End,
    };
    TimePointRef::new(r.object.as_str(), point)
}

fn point_doc(r: &TimePointRef) -> PointRefDoc {
    PointRefDoc {
        object: r.object.to_string(),
        point: match r.point {
            Point::Start => PointDoc::Start,
            Point::End => PointDoc::End,
        },
    }
}

fn micro_unit(u: MicroUnitDoc) -> MicroUnit {
    match u {
        MicroUnitDoc::Samples => MicroUnit::Samples,
        MicroUnitDoc::Micros => MicroUnit::Micros,
        MicroUnitDoc::Millis => MicroUnit::Millis,
        MicroUnitDoc::Seconds => MicroUnit::Seconds,
    }
}

fn micro_unit_doc(u: MicroUnit) -> MicroUnitDoc {
    match u {
        MicroUnit::Samples => MicroUnitDoc::Samples,
        MicroUnit::Micros => MicroUnitDoc::Micros,
        MicroUnit::Millis => MicroUnitDoc::Millis,
        MicroUnit::Seconds => MicroUnitDoc::Seconds,
    }
}

fn span(i: &Interval) -> Span {
    Span {
        min: Num::Int(i.min),
        max: match i.max {
            Bound::Finite(v) => Num::Int(v),
            Bound::Infinite => Num::Text("inf".into()),
        },
    }
}

fn process_doc(p: &ProcessSpec) -> ProcessDoc {
    match p {
        ProcessSpec::Karplus {
            freq_hz,
            attenuation,
            seed,
        } => ProcessDoc::Karplus {
            freq_hz: *freq_hz,
            attenuation: *attenuation,
            seed: *seed,
        },
        ProcessSpec::Gain { factor } => ProcessDoc::Gain { factor: *factor },
        ProcessSpec::SampleDelay { samples } => ProcessDoc::SampleDelay { samples: *samples },
        ProcessSpec::AttenuationRamp { target, from, to } => ProcessDoc::AttenuationRamp {
            target_object: target.to_string(),
            from: *from,
            to: *to,
        },
        ProcessSpec::Acquisition { source } => match source {
            AcquisitionSource::File(path) => ProcessDoc::Acquisition {
                source: Some(path.clone()),
                live: false,
            },
            AcquisitionSource::LiveInput => ProcessDoc::Acquisition {
                source: None,
                live: true,
            },
        },
        ProcessSpec::Output { channels } => ProcessDoc::Output { channels: *channels },
    }
}

/// Serializes a score as a pretty-printed document with durations in ticks.
pub fn to_document(score: &Score) -> String {
    let doc = Document {
        name: score.name.clone(),
        sample_rate: score.sample_rate,
        tick_ms: score.tick_ms,
        duration: (score.root_duration != Interval::UNBOUNDED).then(|| span(&score.root_duration)),
        unit: MacroUnit::Ticks,
        objects: score
            .objects
            .iter()
            .map(|o| ObjectDoc {
                id: o.id.to_string(),
                parent: o.parent.as_ref().map(|p| p.to_string()),
                duration: span(&o.duration),
                unit: MacroUnit::Ticks,
                process: o.process.as_ref().map(process_doc),
            })
            .collect(),
        relations: score
            .relations
            .iter()
            .map(|r| {
                let s = span(&r.interval);
                RelationDoc {
                    from: point_doc(&r.from),
                    to: point_doc(&r.to),
                    min: s.min,
                    max: s.max,
                    unit: MacroUnit::Ticks,
                }
            })
            .collect(),
        micro_relations: score
            .micro_relations
            .iter()
            .map(|m| MicroDoc {
                from: point_doc(&m.from),
                to: point_doc(&m.to),
                offset: m.offset,
                unit: micro_unit_doc(m.unit),
            })
            .collect(),
        interactive: score
            .interactive
            .iter()
            .map(|ip| InteractiveDoc {
                id: ip.id.clone(),
                binds: point_doc(&ip.binds),
            })
            .collect(),
        dataflow: score
            .dataflow
            .iter()
            .map(|f| FlowDoc {
                from: f.from.to_string(),
                to: f.to.to_string(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("documents always serialize");
    text.push('\n');
    text
}

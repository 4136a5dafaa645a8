//! CSV files: event logs, trigger scripts, micro schedules and jitter
//! reports.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use scoreforge_core::analysis::JitterReport;
use scoreforge_core::dsp::MicroSchedule;
use scoreforge_core::scheduler::{ControlAction, ControlEvent, EventLog, TriggerEvent};

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct EventLogRow {
    pub point_id: String,
    pub kind: String,
    pub tick: u64,
    pub sample_time: Option<u64>,
    pub earliest: u64,
    pub latest: String,
    pub policy_fired: String,
}

pub fn event_log_rows(log: &EventLog) -> Vec<EventLogRow> {
    log.entries
        .iter()
        .map(|e| EventLogRow {
            point_id: e.label.clone(),
            kind: e.kind.as_str().to_string(),
            tick: e.tick,
            sample_time: e.sample_time,
            earliest: e.earliest,
            latest: e.latest.to_string(),
            policy_fired: e.resolution.as_str().to_string(),
        })
        .collect()
}

pub fn write_event_log(w: impl Write, log: &EventLog) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in event_log_rows(log) {
        out.serialize(row)?;
    }
    if log.entries.is_empty() {
        out.write_record(["point_id", "kind", "tick", "sample_time", "earliest", "latest", "policy_fired"])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_event_log(r: impl Read) -> csv::Result<Vec<EventLogRow>> {
    csv::Reader::from_reader(r).deserialize().collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ScriptRow {
    tick: u64,
    interactive_id: String,
}

/// Reads a `tick,interactive_id` trigger script.
pub fn read_trigger_script(r: impl Read) -> csv::Result<Vec<TriggerEvent>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(r)
        .deserialize::<ScriptRow>()
        .map(|row| row.map(|r| TriggerEvent::new(r.interactive_id, r.tick)))
        .collect()
}

pub fn write_trigger_script(w: impl Write, script: &[TriggerEvent]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["tick", "interactive_id"])?;
    for t in script {
        out.write_record([t.arrival_tick.to_string(), t.interactive_id.clone()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn action_name(action: &ControlAction) -> String {
    match action {
        ControlAction::Start => "start".into(),
        ControlAction::Stop => "stop".into(),
        ControlAction::Param { name, value } => format!("{name}={value}"),
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct MicroRow {
    pub target: String,
    pub action: String,
    pub macro_sample_time: u64,
    /// Empty when the event was canceled.
    pub final_sample_time: Option<u64>,
}

pub fn micro_rows(schedule: &MicroSchedule) -> Vec<MicroRow> {
    let row = |e: &ControlEvent, fin| MicroRow {
        target: e.target.to_string(),
        action: action_name(&e.action),
        macro_sample_time: e.sample_time,
        final_sample_time: fin,
    };
    let mut rows: Vec<MicroRow> = schedule
        .events
        .iter()
        .map(|s| row(&s.event, Some(s.final_sample)))
        .chain(schedule.canceled.iter().map(|e| row(e, None)))
        .collect();
    rows.sort_by_key(|r| (r.final_sample_time.unwrap_or(r.macro_sample_time), r.final_sample_time.is_none()));
    rows
}

pub fn write_micro_schedule(w: impl Write, schedule: &MicroSchedule) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let rows = micro_rows(schedule);
    if rows.is_empty() {
        out.write_record(["target", "action", "macro_sample_time", "final_sample_time"])?;
    }
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Jitter rows followed by a `mean` summary row.
pub fn write_jitter_report(w: impl Write, report: &JitterReport) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["onset_index", "expected_us", "actual_us", "abs_dev_us"])?;
    for r in &report.rows {
        out.write_record([
            r.onset_index.to_string(),
            r.expected_us.to_string(),
            r.actual_us.to_string(),
            r.abs_dev_us.to_string(),
        ])?;
    }
    out.write_record(["mean", "", "", &report.mean_abs_dev_us.to_string()])?;
    out.flush()?;
    Ok(())
}

/// Human-readable one-paragraph summary.
pub fn jitter_summary(report: &JitterReport) -> String {
    let load = match report.load {
        Some(l) => format!("{:.1}%", l * 100.0),
        None => "n/a".into(),
    };
    format!(
        "mode: {}\nonsets: {}\nmeasured load: {load}\nmean relative jitter: {:.3} us",
        report.mode.as_str(),
        report.rows.len() + 1,
        report.mean_abs_dev_us
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use scoreforge_core::analysis::{compute_jitter, JitterMode};
    use scoreforge_core::dsp::ScheduledEvent;

    #[test]
    fn script_parses_with_whitespace_and_comments() {
        let text = "tick,interactive_id\n# warm-up\n 3 , a\n10,b\n";
        let s = read_trigger_script(text.as_bytes()).unwrap();
        assert_eq!(s, vec![TriggerEvent::new("a", 3), TriggerEvent::new("b", 10)]);
        let mut buf = Vec::new();
        write_trigger_script(&mut buf, &s).unwrap();
        assert_eq!(read_trigger_script(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn bad_script_is_an_error() {
        assert!(read_trigger_script("tick,interactive_id\nsoon,a\n".as_bytes()).is_err());
    }

    #[test]
    fn jitter_csv_has_summary_row() {
        let r = compute_jitter(&[0.0, 100.0, 200.0], &[0.0, 101.0, 203.0], JitterMode::Offline, None).unwrap();
        let mut buf = Vec::new();
        write_jitter_report(&mut buf, &r).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "onset_index,expected_us,actual_us,abs_dev_us");
        assert_eq!(lines.last().unwrap(), &"mean,,,2");
        assert_eq!(lines.len(), 2 + r.rows.len());
    }

    #[test]
    fn micro_rows_mark_cancellations() {
        let ev = |t: &str, s| ControlEvent {
            target: t.into(),
            action: ControlAction::Start,
            sample_time: s,
        };
        let schedule = MicroSchedule {
            events: vec![ScheduledEvent {
                event: ev("a", 10),
                final_sample: 10,
            }],
            canceled: vec![ev("b", 10)],
        };
        let rows = micro_rows(&schedule);
        assert_eq!(rows[0].final_sample_time, Some(10));
        assert_eq!(rows[1].target, "b");
        assert_eq!(rows[1].final_sample_time, None);
    }
}

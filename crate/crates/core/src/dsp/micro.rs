//! Sample-level offsets between control events.
//!
//! Micro relations are zero-width on the tick clock, so a relation's source
//! and target events always leave the macro engine in the same tick. The
//! target event is then moved to the source's final sample plus the offset,
//! chaining through relations in dependency order.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::scheduler::ControlEvent;
use crate::score::{topo_order, MicroRelation, ObjectId, Point, TimePointRef};

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduledEvent {
    pub event: ControlEvent,
    pub final_sample: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MicroSchedule {
    /// Sorted by final sample; ties keep input order.
    pub events: Vec<ScheduledEvent>,
    /// Events dropped because the source of their micro relation never
    /// happened.
    pub canceled: Vec<ControlEvent>,
}

type Key = (ObjectId, Point);

fn key_of(r: &TimePointRef) -> Key {
    (r.object.clone(), r.point)
}

/// Streaming form of [`schedule_micro`], fed one tick of events at a time.
#[derive(Clone, Debug)]
pub struct MicroScheduler {
    /// Target point -> (source point, offset in samples).
    incoming: BTreeMap<Key, (Key, u64)>,
    /// Points in dependency order.
    order: Vec<Key>,
    applied: BTreeMap<Key, u64>,
}

impl MicroScheduler {
    pub fn new(relations: &[MicroRelation], sample_rate: u32) -> Self {
        let incoming: BTreeMap<Key, (Key, u64)> = relations
            .iter()
            .map(|r| (key_of(&r.to), (key_of(&r.from), r.offset_samples(sample_rate))))
            .collect();
        let keys: Vec<(Key, Key)> = relations.iter().map(|r| (key_of(&r.from), key_of(&r.to))).collect();
        let pairs: Vec<(&Key, &Key)> = keys.iter().map(|(a, b)| (a, b)).collect();
        let order = topo_order(&pairs)
            .map(|o| o.into_iter().cloned().collect())
            .unwrap_or_default();
        MicroScheduler {
            incoming,
            order,
            applied: BTreeMap::new(),
        }
    }

    /// Final sample of an already scheduled point.
    pub fn applied(&self, object: &ObjectId, point: Point) -> Option<u64> {
        self.applied.get(&(object.clone(), point)).copied()
    }

    /// Schedules one batch. Events whose macro time is before `not_before`
    /// (late in a live run) are applied at `not_before`; micro targets
    /// follow their source's applied time. Returns the scheduled events
    /// sorted by final sample and the canceled ones.
    pub fn push(&mut self, events: &[ControlEvent], not_before: u64) -> MicroSchedule {
        let mut finals: Vec<Option<u64>> = Vec::with_capacity(events.len());
        let mut by_key: BTreeMap<Key, usize> = BTreeMap::new();
        for (i, e) in events.iter().enumerate() {
            if let Some(p) = e.point() {
                by_key.insert((e.target.clone(), p), i);
            }
            let base = e.sample_time.max(not_before);
            finals.push(Some(base));
        }
        for (i, e) in events.iter().enumerate() {
            if let Some(p) = e.point() {
                if !self.incoming.contains_key(&(e.target.clone(), p)) {
                    self.applied.insert((e.target.clone(), p), finals[i].unwrap_or(0));
                }
            }
        }
        for key in &self.order {
            let Some(&i) = by_key.get(key) else { continue };
            let Some((src, offset)) = self.incoming.get(key) else { continue };
            let source_time = match by_key.get(src) {
                Some(&j) => finals[j],
                None => self.applied.get(src).copied(),
            };
            finals[i] = source_time.map(|t| t + offset);
            match finals[i] {
                Some(t) => {
                    self.applied.insert(key.clone(), t);
                }
                None => {
                    self.applied.remove(key);
                }
            }
        }
        let mut out = MicroSchedule::default();
        for (e, f) in events.iter().zip(finals) {
            match f {
                Some(t) => out.events.push(ScheduledEvent {
                    event: e.clone(),
                    final_sample: t,
                }),
                None => out.canceled.push(e.clone()),
            }
        }
        out.events.sort_by_key(|s| s.final_sample);
        out
    }
}

/// Applies micro offsets to a macro event stream.
pub fn schedule_micro(
    events: &[ControlEvent],
    relations: &[MicroRelation],
    sample_rate: u32,
) -> MicroSchedule {
    MicroScheduler::new(relations, sample_rate).push(events, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::ControlAction;
    use crate::time::MicroUnit;

    fn ev(id: &str, action: ControlAction, t: u64) -> ControlEvent {
        ControlEvent {
            target: id.into(),
            action,
            sample_time: t,
        }
    }

    fn rel(from: &str, to: &str, offset: u64, unit: MicroUnit) -> MicroRelation {
        MicroRelation {
            from: from.into(),
            to: to.into(),
            offset,
            unit,
        }
    }

    #[test]
    fn hundred_sample_offset() {
        let s = schedule_micro(
            &[ev("k1", ControlAction::Start, 88_200), ev("k2", ControlAction::Start, 88_200)],
            &[rel("k1.start", "k2.start", 100, MicroUnit::Samples)],
            44_100,
        );
        let got: Vec<_> = s.events.iter().map(|e| (e.event.target.as_str(), e.final_sample)).collect();
        assert_eq!(got, [("k1", 88_200), ("k2", 88_300)]);
    }

    #[test]
    fn half_millisecond_is_22_samples() {
        let s = schedule_micro(
            &[ev("L", ControlAction::Stop, 0), ev("R", ControlAction::Stop, 0)],
            &[rel("L.end", "R.end", 500, MicroUnit::Micros)],
            44_100,
        );
        assert_eq!(s.events[1].final_sample, 22);
    }

    #[test]
    fn offsets_chain_in_dependency_order() {
        // c depends on b which depends on a; listed out of order.
        let s = schedule_micro(
            &[
                ev("c", ControlAction::Start, 10),
                ev("b", ControlAction::Start, 10),
                ev("a", ControlAction::Start, 10),
            ],
            &[
                rel("b.start", "c.start", 5, MicroUnit::Samples),
                rel("a.start", "b.start", 7, MicroUnit::Samples),
            ],
            44_100,
        );
        let got: Vec<_> = s.events.iter().map(|e| (e.event.target.as_str(), e.final_sample)).collect();
        assert_eq!(got, [("a", 10), ("b", 17), ("c", 22)]);
    }

    #[test]
    fn no_relations_pass_through() {
        let events = [ev("a", ControlAction::Start, 5), ev("a", ControlAction::Stop, 9)];
        let s = schedule_micro(&events, &[], 44_100);
        assert!(s.canceled.is_empty());
        assert!(s.events.iter().zip(&events).all(|(s, e)| s.event == *e && s.final_sample == e.sample_time));
    }

    #[test]
    fn missing_source_cancels_dependent() {
        let s = schedule_micro(
            &[ev("k2", ControlAction::Start, 100)],
            &[rel("k1.start", "k2.start", 100, MicroUnit::Samples)],
            44_100,
        );
        assert!(s.events.is_empty());
        assert_eq!(s.canceled.len(), 1);
    }

    #[test]
    fn late_batches_follow_applied_source() {
        let mut m = MicroScheduler::new(&[rel("a.start", "b.start", 3, MicroUnit::Samples)], 44_100);
        let s = m.push(
            &[ev("a", ControlAction::Start, 100), ev("b", ControlAction::Start, 100)],
            128,
        );
        let got: Vec<_> = s.events.iter().map(|e| e.final_sample).collect();
        assert_eq!(got, [128, 131]);
        assert_eq!(m.applied(&"b".into(), Point::Start), Some(131));
    }
}

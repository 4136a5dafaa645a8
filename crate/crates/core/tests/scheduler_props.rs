//! Execution invariants of the tick engine on random playable scores.

use std::collections::BTreeMap;

use proptest::prelude::*;
use scoreforge_core::compile::compile;
use scoreforge_core::scheduler::{
    audit, run_offline, ControlAction, Engine, EngineConfig, Phase, Resolution, TriggerEvent,
    TriggerPolicy,
};
use scoreforge_core::score::{InteractivePoint, Point, Score, TemporalObject, TemporalRelation, TimePointRef};
use scoreforge_core::solver::check_playable;
use scoreforge_core::time::Interval;

fn point_ref(objects: usize, pick: usize, end: bool) -> TimePointRef {
    let object = match pick % (objects + 1) {
        0 => "root".to_string(),
        k => format!("o{}", k - 1),
    };
    TimePointRef::new(object.as_str(), if end { Point::End } else { Point::Start })
}

prop_compose! {
    fn playable_setup()(n in 1usize..=6)(
        horizon in 10u64..=60,
        parents in proptest::collection::vec(any::<prop::sample::Index>(), n),
        durations in proptest::collection::vec((0u64..=10, proptest::option::weighted(0.7, 0u64..=15)), n),
        relations in proptest::collection::vec(
            (any::<usize>(), any::<bool>(), any::<usize>(), any::<bool>(), 0u64..=10, proptest::option::weighted(0.6, 0u64..=10)),
            0..=4,
        ),
        interactive in proptest::collection::btree_set((0usize..6, any::<bool>()), 0..=4),
        script in proptest::collection::vec((0u64..70, 0usize..4), 0..=8),
        n in Just(n),
    ) -> (Score, Vec<TriggerEvent>) {
        let mut s = Score::new("random");
        s.root_duration = Interval::new(0, horizon);
        for i in 0..n {
            let (min, span) = durations[i];
            let d = match span {
                Some(x) => Interval::new(min, min + x),
                None => Interval::at_least(min),
            };
            let mut o = TemporalObject::new(format!("o{i}").as_str(), d);
            let p = parents[i].index(i + 1);
            if p > 0 {
                o = o.with_parent(format!("o{}", p - 1).as_str());
            }
            s.objects.push(o);
        }
        for (a, ae, b, be, min, span) in relations {
            s.relations.push(TemporalRelation {
                from: point_ref(n, a, ae),
                to: point_ref(n, b, be),
                interval: match span {
                    Some(x) => Interval::new(min, min + x),
                    None => Interval::at_least(min),
                },
            });
        }
        for (k, (obj, end)) in interactive.into_iter().enumerate() {
            if obj < n {
                let id = format!("o{obj}");
                s.interactive.push(InteractivePoint {
                    id: format!("i{k}"),
                    binds: TimePointRef::new(id.as_str(), if end { Point::End } else { Point::Start }),
                });
            }
        }
        let script = script
            .into_iter()
            .map(|(t, k)| TriggerEvent::new(format!("i{k}"), t))
            .collect();
        (s, script)
    }
}

fn cfg(policy: TriggerPolicy) -> EngineConfig {
    EngineConfig {
        policy,
        tick_ms: 20,
        sample_rate: 44_100,
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, max_global_rejects: 1_000_000, ..ProptestConfig::default() })]

    #[test]
    fn auto_latest_is_safe_live_and_ordered((score, script) in playable_setup()) {
        let graph = compile(&score).unwrap();
        prop_assume!(check_playable(&graph));
        let log = run_offline(&score, cfg(TriggerPolicy::AutoLatest), &script).unwrap();
        prop_assert!(audit(&graph, &log).is_empty());
        prop_assert!(log.completed);
        prop_assert!(log.unresolved.is_empty());
        for obj in graph.objects() {
            let starts: Vec<_> = log.events.iter().filter(|e| e.target == *obj && e.action == ControlAction::Start).collect();
            let stops: Vec<_> = log.events.iter().filter(|e| e.target == *obj && e.action == ControlAction::Stop).collect();
            prop_assert_eq!(starts.len(), 1);
            prop_assert_eq!(stops.len(), 1);
            prop_assert!(starts[0].sample_time <= stops[0].sample_time);
            let si = log.events.iter().position(|e| e == starts[0]).unwrap();
            let ei = log.events.iter().position(|e| e == stops[0]).unwrap();
            prop_assert!(si < ei);
        }
        prop_assert!(log.events.windows(2).all(|w| w[0].sample_time <= w[1].sample_time));
        prop_assert!(log.entries.iter().all(|e| e.resolution != Resolution::Canceled));
    }

    #[test]
    fn cancel_policy_is_safe_and_clean((score, script) in playable_setup()) {
        let graph = compile(&score).unwrap();
        prop_assume!(check_playable(&graph));
        let log = run_offline(&score, cfg(TriggerPolicy::Cancel), &script).unwrap();
        prop_assert!(audit(&graph, &log).is_empty());
        prop_assert!(log.completed);
        let canceled: Vec<_> = log.entries.iter().filter(|e| e.resolution == Resolution::Canceled).collect();
        for obj in graph.objects() {
            let n_start = log.events.iter().filter(|e| e.target == *obj && e.action == ControlAction::Start).count();
            let n_stop = log.events.iter().filter(|e| e.target == *obj && e.action == ControlAction::Stop).count();
            let was_canceled = canceled.iter().any(|e| graph.object_of(e.point) == *obj);
            if was_canceled && n_start == 0 {
                prop_assert_eq!(n_stop, 0);
            } else {
                prop_assert_eq!((n_start, n_stop), (1, 1));
            }
        }
        for e in &canceled {
            prop_assert_eq!(e.sample_time, None);
        }
        prop_assert!(log.events.windows(2).all(|w| w[0].sample_time <= w[1].sample_time));
    }

    #[test]
    fn logs_are_a_function_of_inputs((score, script) in playable_setup(), cancel in any::<bool>()) {
        let graph = compile(&score).unwrap();
        prop_assume!(check_playable(&graph));
        let policy = if cancel { TriggerPolicy::Cancel } else { TriggerPolicy::AutoLatest };
        let a = run_offline(&score, cfg(policy), &script).unwrap();
        let b = run_offline(&score, cfg(policy), &script).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn phases_only_move_forward((score, script) in playable_setup(), cancel in any::<bool>()) {
        let graph = compile(&score).unwrap();
        prop_assume!(check_playable(&graph));
        let policy = if cancel { TriggerPolicy::Cancel } else { TriggerPolicy::AutoLatest };
        let mut engine = Engine::start(&score, graph.clone(), cfg(policy)).unwrap();
        let mut by_tick: BTreeMap<u64, Vec<TriggerEvent>> = BTreeMap::new();
        for t in &script {
            by_tick.entry(t.arrival_tick).or_default().push(t.clone());
        }
        let rank = |p: Phase| match p {
            Phase::Waiting => 0,
            Phase::Active => 1,
            Phase::Done | Phase::Canceled => 2,
        };
        let mut prev = engine.phases().to_vec();
        while !engine.is_completed() {
            let now = engine.current_tick();
            let batch = by_tick.get(&now).cloned().unwrap_or_default();
            let out = engine.tick(&batch).unwrap();
            for (i, (_, phase)) in out.snapshot.phases.iter().enumerate() {
                prop_assert!(rank(*phase) >= rank(prev[i]));
                if prev[i] == Phase::Active {
                    prop_assert!(*phase != Phase::Canceled);
                }
                // Active iff start fixed <= now < end.
                let start = engine.fixed(scoreforge_core::TimePointId::of_object(i, Point::Start));
                let end = engine.fixed(scoreforge_core::TimePointId::of_object(i, Point::End));
                let active = start.is_some_and(|s| s <= now) && end.is_none_or(|e| now < e);
                prop_assert_eq!(*phase == Phase::Active, active);
            }
            prev = out.snapshot.phases.iter().map(|(_, p)| *p).collect();
            prop_assert!(now < 1_000);
        }
    }
}

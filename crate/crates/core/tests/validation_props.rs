//! Any single broken invariant is reported.

use proptest::prelude::*;
use scoreforge_core::score::{
    validate, DataflowRelation, InteractivePoint, MicroRelation, ObjectId, ProcessSpec, Score,
    TemporalObject, TemporalRelation, TimePointRef,
};
use scoreforge_core::time::{Interval, MicroUnit};

fn string(id: &str, freq: f64) -> TemporalObject {
    TemporalObject::new(id, Interval::new(10, 50)).with_process(ProcessSpec::Karplus {
        freq_hz: freq,
        attenuation: 0.99,
        seed: None,
    })
}

fn base(n: usize, freq: f64) -> Score {
    let mut s = Score::new("base");
    s.objects.push(TemporalObject::new("group", Interval::new(0, 500)));
    for i in 0..n {
        s.objects.push(string(&format!("k{i}"), freq).with_parent("group"));
        s.dataflow.push(DataflowRelation {
            from: format!("k{i}").as_str().into(),
            to: "out".into(),
        });
    }
    s.objects.push(
        TemporalObject::new("out", Interval::UNBOUNDED).with_process(ProcessSpec::Output { channels: 1 }),
    );
    s.relations.push(TemporalRelation {
        from: TimePointRef::start("group"),
        to: TimePointRef::start("k0"),
        interval: Interval::new(0, 20),
    });
    s.interactive.push(InteractivePoint {
        id: "a".into(),
        binds: TimePointRef::start("k0"),
    });
    if n > 1 {
        s.micro_relations.push(MicroRelation {
            from: TimePointRef::start("k0"),
            to: TimePointRef::start("k1"),
            offset: 100,
            unit: MicroUnit::Samples,
        });
    }
    s
}

const MUTATIONS: usize = 17;

fn mutate(s: &mut Score, which: usize, pick: usize) {
    let n = s.objects.iter().filter(|o| o.id.as_str().starts_with('k')).count();
    let k = format!("k{}", pick % n);
    let k = k.as_str();
    let idx = s.object_index(&ObjectId::new(k)).unwrap();
    match which {
        0 => s.objects.push(string(k, 440.0)),
        1 => s.objects[idx].parent = Some("ghost".into()),
        2 => {
            s.objects[0].parent = Some("loop".into());
            s.objects.push(TemporalObject::new("loop", Interval::UNBOUNDED).with_parent("group"));
        }
        3 => s.objects[idx].duration = Interval::new(60, 59),
        4 => s.relations.push(TemporalRelation {
            from: TimePointRef::end(k),
            to: TimePointRef::start("nowhere"),
            interval: Interval::UNBOUNDED,
        }),
        5 => s.relations[0].interval = Interval::new(9, 3),
        6 => s.objects.push(TemporalObject::new("child", Interval::UNBOUNDED).with_parent(k)),
        7 => s.objects[idx].process = Some(ProcessSpec::Karplus {
            freq_hz: 30_000.0,
            attenuation: 0.9,
            seed: None,
        }),
        8 => s.objects[idx].process = Some(ProcessSpec::Karplus {
            freq_hz: 440.0,
            attenuation: 1.5,
            seed: None,
        }),
        9 => s.micro_relations.push(MicroRelation {
            from: TimePointRef::start("group"),
            to: TimePointRef::end(k),
            offset: 1,
            unit: MicroUnit::Samples,
        }),
        10 => s.interactive.push(InteractivePoint {
            id: "z".into(),
            binds: TimePointRef::end("nowhere"),
        }),
        11 => s.interactive.push(InteractivePoint {
            id: "again".into(),
            binds: TimePointRef::start("k0"),
        }),
        12 => s.dataflow.push(DataflowRelation {
            from: "group".into(),
            to: "out".into(),
        }),
        13 => {
            s.objects.push(
                TemporalObject::new("g", Interval::UNBOUNDED).with_process(ProcessSpec::Gain { factor: 1.0 }),
            );
            s.objects.push(
                TemporalObject::new("h", Interval::UNBOUNDED).with_process(ProcessSpec::Gain { factor: 1.0 }),
            );
            s.dataflow.push(DataflowRelation { from: "g".into(), to: "h".into() });
            s.dataflow.push(DataflowRelation { from: "h".into(), to: "g".into() });
        }
        14 => s.objects.push(
            TemporalObject::new("ramp", Interval::exactly(25)).with_process(ProcessSpec::AttenuationRamp {
                target: "out".into(),
                from: 1.0,
                to: 0.0,
            }),
        ),
        15 => s.micro_relations.push(MicroRelation {
            from: TimePointRef::start(k),
            to: TimePointRef::start(k),
            offset: 0,
            unit: MicroUnit::Samples,
        }),
        16 => s.sample_rate = 0,
        _ => unreachable!(),
    }
}

proptest! {
    #[test]
    fn single_mutations_are_reported(
        n in 1usize..=4,
        freq in 50.0f64..5000.0,
        which in 0..MUTATIONS,
        pick in any::<usize>(),
    ) {
        let mut s = base(n, freq);
        prop_assert!(validate(&s).is_valid(), "{:?}", validate(&s).findings);
        mutate(&mut s, which, pick);
        let report = validate(&s);
        prop_assert!(!report.is_valid(), "mutation {} went unnoticed", which);
    }
}

#[test]
fn every_mutation_is_exercised() {
    for which in 0..MUTATIONS {
        let mut s = base(2, 441.0);
        mutate(&mut s, which, 1);
        assert!(!validate(&s).is_valid(), "mutation {which}");
    }
}

//! Renderer properties on random string scores.

use std::collections::BTreeMap;

use proptest::prelude::*;
use scoreforge_core::analysis::first_above;
use scoreforge_core::dsp::{
    build_dsp_graph, render, schedule_micro, MicroSchedule, RenderConfig,
};
use scoreforge_core::scheduler::{ControlAction, ControlEvent};
use scoreforge_core::score::{
    DataflowRelation, MicroRelation, ProcessSpec, Score, TemporalObject, TimePointRef,
};
use scoreforge_core::time::{Interval, MicroUnit};

const LEN: usize = 6000;

#[derive(Clone, Debug)]
struct Setup {
    score: Score,
    events: Vec<ControlEvent>,
}

fn ev(id: &str, action: ControlAction, t: u64) -> ControlEvent {
    ControlEvent {
        target: id.into(),
        action,
        sample_time: t,
    }
}

prop_compose! {
    fn strings(gain: f64)(
        notes in proptest::collection::vec((80.0f64..2000.0, 0.9f64..0.9999, 0u64..4000, 1u64..3000), 1..=3),
        micro in proptest::option::of(0u64..300),
        delay in 0u64..40,
        seed in any::<u64>(),
    ) -> Setup {
        let mut score = Score::new("strings");
        let mut events = Vec::new();
        for (i, (freq, att, start, len)) in notes.iter().enumerate() {
            let id = format!("k{i}");
            score.objects.push(
                TemporalObject::new(id.as_str(), Interval::UNBOUNDED).with_process(ProcessSpec::Karplus {
                    freq_hz: *freq,
                    attenuation: *att,
                    seed: Some(seed.wrapping_add(i as u64)),
                }),
            );
            score.dataflow.push(DataflowRelation { from: id.as_str().into(), to: "d".into() });
            events.push(ev(&id, ControlAction::Start, *start));
            events.push(ev(&id, ControlAction::Stop, start + len));
        }
        if let (Some(offset), true) = (micro, notes.len() > 1) {
            // Second string follows the first by a sample offset.
            let t = events[0].sample_time;
            events[2].sample_time = t;
            score.micro_relations.push(MicroRelation {
                from: TimePointRef::start("k0"),
                to: TimePointRef::start("k1"),
                offset,
                unit: MicroUnit::Samples,
            });
        }
        score.objects.push(
            TemporalObject::new("d", Interval::UNBOUNDED)
                .with_process(ProcessSpec::SampleDelay { samples: delay }),
        );
        score.objects.push(
            TemporalObject::new("g", Interval::UNBOUNDED).with_process(ProcessSpec::Gain { factor: gain }),
        );
        score.objects.push(
            TemporalObject::new("out", Interval::UNBOUNDED).with_process(ProcessSpec::Output { channels: 2 }),
        );
        score.dataflow.push(DataflowRelation { from: "d".into(), to: "g".into() });
        score.dataflow.push(DataflowRelation { from: "g".into(), to: "out".into() });
        events.sort_by_key(|e| e.sample_time);
        Setup { score, events }
    }
}

fn schedule(s: &Setup) -> MicroSchedule {
    schedule_micro(&s.events, &s.score.micro_relations, s.score.sample_rate)
}

fn run(s: &Setup, block_size: usize) -> scoreforge_core::dsp::RenderOutput {
    let g = build_dsp_graph(&s.score, 1, &BTreeMap::new()).unwrap();
    render(&g, &schedule(s), LEN, RenderConfig { block_size, capture_stems: true })
}

fn with_gain(s: &Setup, factor: f64) -> Setup {
    let mut s = s.clone();
    for o in &mut s.score.objects {
        if o.id.as_str() == "g" {
            o.process = Some(ProcessSpec::Gain { factor });
        }
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn block_size_does_not_matter(s in strings(1.0)) {
        let reference = run(&s, 1);
        for bs in [32, 64, 256] {
            prop_assert_eq!(&run(&s, bs), &reference);
        }
    }

    #[test]
    fn gain_scales_pointwise(s in strings(1.0), k in -4.0f64..4.0) {
        let unit = run(&s, 64);
        let scaled = run(&with_gain(&s, k), 64);
        for (a, b) in unit.channels.iter().zip(&scaled.channels) {
            for (x, y) in a.iter().zip(b) {
                prop_assert_eq!(*y, (k as f32) * *x);
            }
        }
    }

    #[test]
    fn onsets_land_on_scheduled_samples(s in strings(1.0)) {
        let out = run(&s, 64);
        let sched = schedule(&s);
        for e in sched.events.iter().filter(|e| e.event.action == ControlAction::Start) {
            let stem = &out.stems[&e.event.target][0];
            prop_assert_eq!(first_above(stem, e.final_sample as usize, 1e-6), Some(e.final_sample as usize));
            prop_assert!(stem[..e.final_sample as usize].iter().all(|y| *y == 0.0));
        }
    }

    #[test]
    fn renders_are_reproducible(s in strings(0.5)) {
        prop_assert_eq!(run(&s, 64), run(&s, 64));
    }

    #[test]
    fn stereo_split_duplicates_channel(s in strings(1.0)) {
        let out = run(&s, 64);
        prop_assert_eq!(out.channels.len(), 2);
        prop_assert_eq!(&out.channels[0], &out.channels[1]);
    }
}

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use scoreforge::document::parse_scenario;
use scoreforge::tables::read_trigger_script;
use scoreforge::wav::load_sources;
use scoreforge_core::dsp::{AudioClip, RenderConfig};
use scoreforge_core::offline::{render_scenario, OfflineConfig, OfflineRun, DEFAULT_SEED};
use scoreforge_core::scheduler::{EngineConfig, TriggerEvent, TriggerPolicy};
use scoreforge_core::score::{ObjectId, Score};

pub const CORPUS: [&str; 4] = ["fig3", "fig7", "fig8", "fig9"];

pub fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

pub fn scenario_path(name: &str) -> PathBuf {
    scenario_dir().join(format!("{name}.json"))
}

pub fn load(name: &str) -> Score {
    let text = std::fs::read_to_string(scenario_path(name)).expect("scenario readable");
    parse_scenario(&text).expect("scenario parses").score
}

pub fn sources(score: &Score) -> BTreeMap<ObjectId, AudioClip> {
    load_sources(score, &scenario_dir()).expect("sources load")
}

pub fn script(name: &str) -> Vec<TriggerEvent> {
    let f = std::fs::File::open(scenario_dir().join(name)).expect("script readable");
    read_trigger_script(f).expect("script parses")
}

pub fn render(score: &Score, script: &[TriggerEvent], policy: TriggerPolicy, block_size: usize) -> OfflineRun {
    let config = OfflineConfig {
        engine: EngineConfig::for_score(score, policy),
        render: RenderConfig {
            block_size,
            capture_stems: true,
        },
        seed: DEFAULT_SEED,
    };
    render_scenario(score, &sources(score), script, config).expect("scenario renders")
}

//! Seeded input generators shared by the benchmark targets.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use blockmine::synth::{self, linear, sprite, stage};
use blockmine::{BlockLabel, PropertyDB, ScriptId, TemporalProperty};

/// A database of `rows` property sets over `items` distinct properties.
/// Rows are drawn from a few overlapping templates plus noise, so the
/// search space has depth instead of degenerating into singletons.
pub fn random_db(seed: u64, rows: usize, items: usize) -> PropertyDB {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<TemporalProperty> = (0..items)
        .map(|j| TemporalProperty::new(BlockLabel::new(format!("op{j:03}")), BlockLabel::new("x")))
        .collect();
    let templates: Vec<Vec<usize>> = (0..5)
        .map(|_| (0..items).filter(|_| rng.gen_bool(0.4)).collect())
        .collect();

    let data = (0..rows)
        .map(|r| {
            let template = &templates[rng.gen_range(0..templates.len())];
            let mut props: BTreeSet<TemporalProperty> = template
                .iter()
                .filter(|_| rng.gen_bool(0.9))
                .map(|&j| pool[j].clone())
                .collect();
            for _ in 0..rng.gen_range(0..3) {
                props.insert(pool[rng.gen_range(0..items)].clone());
            }
            let id = ScriptId {
                project: format!("p{r:04}"),
                actor: "a".to_owned(),
                script_index: 0,
            };
            (id, props)
        })
        .collect();
    PropertyDB::new(data)
}

const TEMPLATES: [&[&str]; 3] = [
    &[
        "event_whenflagclicked",
        "motion_movesteps",
        "looks_nextcostume",
        "sound_play",
    ],
    &["event_whenkeypressed", "motion_movesteps", "looks_say"],
    &[
        "event_whenflagclicked",
        "looks_show",
        "motion_glidesecstoxy",
        "looks_hide",
    ],
];

const REPLACEMENTS: [&str; 4] = [
    "motion_gotoxy",
    "motion_turnright",
    "looks_switchcostumeto",
    "control_wait",
];

/// Writes `projects` two-sprite solutions built from mutated templates.
pub fn write_corpus(dir: &Path, seed: u64, projects: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Vec::new();
    for i in 0..projects {
        let mut actors = vec![stage()];
        for name in ["Cat", "Dog"] {
            let mut scripts = Vec::new();
            for _ in 0..rng.gen_range(1..=2) {
                let mut opcodes: Vec<&str> = TEMPLATES[rng.gen_range(0..TEMPLATES.len())].to_vec();
                if rng.gen_bool(0.35) {
                    let slot = rng.gen_range(1..opcodes.len());
                    opcodes[slot] = REPLACEMENTS[rng.gen_range(0..REPLACEMENTS.len())];
                }
                scripts.push(linear(&opcodes));
            }
            actors.push(sprite(name, scripts));
        }
        corpus.push((format!("p{i:03}"), synth::project_json(&actors)));
    }
    synth::write_corpus(dir, &corpus).unwrap();
}

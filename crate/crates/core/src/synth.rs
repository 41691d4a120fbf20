//! Synthetic solution construction for tests, demos and benchmarks.
//!
//! Scripts are described as nested [`BlockSpec`] trees and rendered either
//! straight to [`Script`] values or to `project.json` text on disk, so the
//! whole pipeline can be exercised without real classroom data.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::sb3::{RawBlock, Script, ScriptId};

#[derive(Clone, Debug)]
pub enum BlockSpec {
    Plain(String),
    If(Vec<BlockSpec>),
    IfElse(Vec<BlockSpec>, Vec<BlockSpec>),
    Repeat(Vec<BlockSpec>),
    RepeatUntil(Vec<BlockSpec>),
    Forever(Vec<BlockSpec>),
}

pub fn plain(opcode: &str) -> BlockSpec {
    BlockSpec::Plain(opcode.to_owned())
}

pub fn linear(opcodes: &[&str]) -> Vec<BlockSpec> {
    opcodes.iter().map(|op| plain(op)).collect()
}

#[derive(Clone, Debug)]
pub struct ActorSpec {
    pub name: String,
    pub is_stage: bool,
    pub scripts: Vec<Vec<BlockSpec>>,
}

pub fn stage() -> ActorSpec {
    ActorSpec {
        name: "Stage".to_owned(),
        is_stage: true,
        scripts: Vec::new(),
    }
}

pub fn sprite(name: &str, scripts: Vec<Vec<BlockSpec>>) -> ActorSpec {
    ActorSpec {
        name: name.to_owned(),
        is_stage: false,
        scripts,
    }
}

struct Emitter {
    counter: usize,
    blocks: Map<String, Value>,
}

impl Emitter {
    fn fresh(&mut self) -> String {
        let id = format!("b{:04}", self.counter);
        self.counter += 1;
        id
    }

    fn push(&mut self, id: &str, opcode: &str, parent: Option<&str>, top: bool, inputs: Map<String, Value>) {
        self.blocks.insert(
            id.to_owned(),
            json!({
                "opcode": opcode,
                "next": Value::Null,
                "parent": parent,
                "topLevel": top,
                "inputs": inputs,
            }),
        );
    }

    fn link_next(&mut self, from: &str, to: &str) {
        self.blocks.get_mut(from).unwrap()["next"] = json!(to);
    }

    /// Emits a chain of blocks; returns the entry id, or None for an empty chain.
    fn chain(&mut self, specs: &[BlockSpec], parent: Option<&str>, top: bool) -> Option<String> {
        let mut entry = None;
        let mut prev: Option<String> = None;
        for spec in specs {
            let id = self.fresh();
            let (opcode, inputs) = self.spec_parts(spec, &id);
            let block_parent = prev.as_deref().or(parent);
            self.push(&id, &opcode, block_parent, top && entry.is_none(), inputs);
            if let Some(prev_id) = &prev {
                self.link_next(prev_id, &id);
            }
            entry.get_or_insert_with(|| id.clone());
            prev = Some(id);
        }
        entry
    }

    fn spec_parts(&mut self, spec: &BlockSpec, own_id: &str) -> (String, Map<String, Value>) {
        let mut inputs = Map::new();
        let mut stack_input = |emitter: &mut Emitter, key: &str, body: &[BlockSpec]| {
            if let Some(entry) = emitter.chain(body, Some(own_id), false) {
                inputs.insert(key.to_owned(), json!([2, entry]));
            }
        };
        let opcode = match spec {
            BlockSpec::Plain(op) => op.clone(),
            BlockSpec::If(body) => {
                stack_input(self, "SUBSTACK", body);
                "control_if".to_owned()
            }
            BlockSpec::IfElse(then_body, else_body) => {
                stack_input(self, "SUBSTACK", then_body);
                stack_input(self, "SUBSTACK2", else_body);
                "control_if_else".to_owned()
            }
            BlockSpec::Repeat(body) => {
                stack_input(self, "SUBSTACK", body);
                "control_repeat".to_owned()
            }
            BlockSpec::RepeatUntil(body) => {
                stack_input(self, "SUBSTACK", body);
                "control_repeat_until".to_owned()
            }
            BlockSpec::Forever(body) => {
                stack_input(self, "SUBSTACK", body);
                "control_forever".to_owned()
            }
        };
        (opcode, inputs)
    }
}

/// Renders actors to `project.json` text. Callers include exactly one stage;
/// [`stage`] makes an empty one.
pub fn project_json(actors: &[ActorSpec]) -> String {
    let mut targets = Vec::new();
    for actor in actors {
        let mut emitter = Emitter {
            counter: 0,
            blocks: Map::new(),
        };
        for script in &actor.scripts {
            emitter.chain(script, None, true);
        }
        targets.push(json!({
            "isStage": actor.is_stage,
            "name": actor.name,
            "blocks": emitter.blocks,
        }));
    }
    serde_json::to_string_pretty(&json!({ "targets": targets })).unwrap()
}

/// Writes `(stem, json)` pairs into `dir` as `<stem>.json` files.
pub fn write_corpus(dir: &Path, projects: &[(String, String)]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for (stem, json) in projects {
        fs::write(dir.join(format!("{stem}.json")), json)?;
    }
    Ok(())
}

/// Builds one [`Script`] value directly, bypassing the file format. Useful
/// for model-level tests.
pub fn script_of(project: &str, actor: &str, specs: Vec<BlockSpec>) -> Script {
    let mut emitter = Emitter {
        counter: 0,
        blocks: Map::new(),
    };
    let root = emitter
        .chain(&specs, None, true)
        .expect("script must have at least one block");
    let mut blocks = BTreeMap::new();
    for (id, value) in &emitter.blocks {
        let substack_ref = |key: &str| {
            value["inputs"]
                .get(key)
                .and_then(|v| v.as_array())
                .and_then(|a| a.get(1))
                .and_then(|v| v.as_str())
                .map(str::to_owned)
        };
        let mut substacks = vec![substack_ref("SUBSTACK"), substack_ref("SUBSTACK2")];
        while substacks.last() == Some(&None) {
            substacks.pop();
        }
        blocks.insert(
            id.clone(),
            RawBlock {
                id: id.clone(),
                opcode: value["opcode"].as_str().unwrap().to_owned(),
                next: value["next"].as_str().map(str::to_owned),
                parent: value["parent"].as_str().map(str::to_owned),
                top_level: value["topLevel"].as_bool().unwrap(),
                substacks,
                proc_signature: None,
            },
        );
    }
    let root_opcode = blocks[&root].opcode.clone();
    Script {
        script_id: ScriptId {
            project: project.to_owned(),
            actor: actor.to_owned(),
            script_index: 0,
        },
        actor_is_stage: false,
        dead_code: !(root_opcode.contains("_when")
            || root_opcode == "procedures_definition"
            || root_opcode == "control_start_as_clone"),
        root_block: root,
        blocks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sb3;

    #[test]
    fn emitted_json_round_trips_through_the_loader() {
        let dir = tempfile::tempdir().unwrap();
        let json = project_json(&[
            stage(),
            sprite(
                "Cat",
                vec![vec![
                    plain("event_whenflagclicked"),
                    BlockSpec::Repeat(vec![plain("motion_movesteps")]),
                    plain("looks_say"),
                ]],
            ),
        ]);
        write_corpus(dir.path(), &[("demo".to_owned(), json)]).unwrap();
        let project = sb3::load_project(&dir.path().join("demo.json")).unwrap();
        let scripts = sb3::extract_scripts(&project);
        assert_eq!(scripts.len(), 1);
        assert_eq!(scripts[0].blocks.len(), 4);
        assert!(!scripts[0].dead_code);
        let repeat = scripts[0]
            .blocks
            .values()
            .find(|b| b.opcode == "control_repeat")
            .unwrap();
        assert_eq!(repeat.substacks.len(), 1);
        assert!(repeat.substacks[0].is_some());
    }

    #[test]
    fn script_of_matches_loader_output() {
        let specs = vec![
            plain("event_whenflagclicked"),
            BlockSpec::IfElse(vec![plain("looks_say")], vec![]),
        ];
        let direct = script_of("p", "Cat", specs.clone());

        let dir = tempfile::tempdir().unwrap();
        let json = project_json(&[stage(), sprite("Cat", vec![specs])]);
        write_corpus(dir.path(), &[("p".to_owned(), json)]).unwrap();
        let project = sb3::load_project(&dir.path().join("p.json")).unwrap();
        let loaded = &sb3::extract_scripts(&project)[0];

        assert_eq!(direct.blocks, loaded.blocks);
        assert_eq!(direct.root_block, loaded.root_block);
    }
}

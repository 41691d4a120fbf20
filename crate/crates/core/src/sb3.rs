//! Loading of Scratch 3 solutions and their decomposition into scripts.
//!
//! A solution file is either an `.sb3` archive (a zip with `project.json` at
//! its root) or a bare `project.json`. Only the structural fields needed for
//! control-flow analysis are read: opcodes, `next`/`parent` links, `topLevel`
//! markers, substack inputs and custom-block signatures. Everything else
//! (costumes, sounds, coordinates, literal inputs) is ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{Error, Result};

/// Identity of one script: project name, actor display name, per-actor ordinal.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ScriptId {
    pub project: String,
    pub actor: String,
    pub script_index: usize,
}

impl fmt::Display for ScriptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.project, self.actor, self.script_index)
    }
}

/// One block as stored in `project.json`, reduced to its control-flow fields.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawBlock {
    pub id: String,
    pub opcode: String,
    pub next: Option<String>,
    pub parent: Option<String>,
    pub top_level: bool,
    /// Entry block of each nested stack (`SUBSTACK`, then `SUBSTACK2`).
    /// Trailing empty stacks are trimmed, so a plain block has no entries.
    pub substacks: Vec<Option<String>>,
    /// Custom-block signature (`mutation.proccode`) for procedure blocks.
    pub proc_signature: Option<String>,
}

/// A sprite or the stage, with its full block table.
#[derive(Clone, Debug)]
pub struct Actor {
    pub name: String,
    pub is_stage: bool,
    pub raw_blocks: BTreeMap<String, RawBlock>,
}

/// One loaded solution. Actors mirror the file's target order, stage first.
#[derive(Clone, Debug)]
pub struct Project {
    pub source_path: PathBuf,
    pub name: String,
    pub actors: Vec<Actor>,
}

/// One top-level stack of blocks, closed under `next` and substack links.
#[derive(Clone, Debug)]
pub struct Script {
    pub script_id: ScriptId,
    pub actor_is_stage: bool,
    /// True when the root is not a hat block, so the stack can never run.
    pub dead_code: bool,
    pub root_block: String,
    pub blocks: BTreeMap<String, RawBlock>,
}

/// A corpus file that failed to load and was skipped with a warning.
#[derive(Clone, Debug)]
pub struct SkippedFile {
    pub file: String,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub projects: Vec<Project>,
    pub skipped: Vec<SkippedFile>,
}

/// Actor names are compared after trimming and case-folding, so "Cat " and
/// "cat" denote the same role across projects.
pub fn normalize_actor_name(name: &str) -> String {
    name.trim().to_lowercase()
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedProject {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Loads a single solution from an `.sb3` archive or a bare `project.json`.
pub fn load_project(path: &Path) -> Result<Project> {
    let bytes = fs::read(path).map_err(|source| Error::UnreadableFile {
        path: path.to_path_buf(),
        source,
    })?;
    // Zip archives start with a "PK" signature; JSON cannot.
    let json = if bytes.starts_with(b"PK") {
        read_archive_project_json(path, &bytes)?
    } else {
        bytes
    };
    parse_project(path, &json)
}

fn read_archive_project_json(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    let cursor = std::io::Cursor::new(bytes);
    let mut archive = zip::ZipArchive::new(cursor)
        .map_err(|e| malformed(path, format!("unreadable archive: {e}")))?;
    let mut entry = archive
        .by_name("project.json")
        .map_err(|_| malformed(path, "archive has no project.json entry"))?;
    let mut out = Vec::new();
    entry
        .read_to_end(&mut out)
        .map_err(|e| malformed(path, format!("project.json entry unreadable: {e}")))?;
    Ok(out)
}

#[derive(Deserialize)]
struct JsonProject {
    targets: Vec<JsonTarget>,
}

#[derive(Deserialize)]
struct JsonTarget {
    #[serde(rename = "isStage")]
    is_stage: bool,
    name: String,
    blocks: serde_json::Map<String, Value>,
}

#[derive(Deserialize)]
struct JsonBlock {
    opcode: String,
    #[serde(default)]
    next: Option<String>,
    #[serde(default)]
    parent: Option<String>,
    #[serde(default, rename = "topLevel")]
    top_level: bool,
    #[serde(default)]
    inputs: serde_json::Map<String, Value>,
    #[serde(default)]
    mutation: Option<JsonMutation>,
}

#[derive(Deserialize)]
struct JsonMutation {
    #[serde(default)]
    proccode: Option<String>,
}

/// An input slot holds `[shadow, value, ...]`; a block reference is the first
/// bare string among the values.
fn input_block_ref(inputs: &serde_json::Map<String, Value>, key: &str) -> Option<String> {
    match inputs.get(key)? {
        Value::String(id) => Some(id.clone()),
        Value::Array(items) => items
            .iter()
            .skip(1)
            .find_map(|v| v.as_str().map(str::to_owned)),
        _ => None,
    }
}

fn parse_project(path: &Path, bytes: &[u8]) -> Result<Project> {
    let parsed: JsonProject =
        serde_json::from_slice(bytes).map_err(|e| malformed(path, e.to_string()))?;

    let mut actors = Vec::new();
    for target in &parsed.targets {
        let mut parsed_blocks: BTreeMap<String, JsonBlock> = BTreeMap::new();
        for (id, value) in &target.blocks {
            match value {
                Value::Object(_) => {
                    let block: JsonBlock = serde_json::from_value(value.clone()).map_err(|e| {
                        malformed(path, format!("block {id} of target {:?}: {e}", target.name))
                    })?;
                    parsed_blocks.insert(id.clone(), block);
                }
                // Variable and list reporters dragged onto the canvas are
                // stored as bare arrays. They carry no control flow.
                Value::Array(_) => {}
                _ => {
                    return Err(malformed(
                        path,
                        format!("block {id} of target {:?} is neither object nor array", target.name),
                    ))
                }
            }
        }

        let mut raw_blocks = BTreeMap::new();
        for (id, block) in &parsed_blocks {
            raw_blocks.insert(id.clone(), to_raw_block(id, block, &parsed_blocks));
        }
        validate_actor(path, &target.name, &raw_blocks)?;
        actors.push(Actor {
            name: target.name.clone(),
            is_stage: target.is_stage,
            raw_blocks,
        });
    }

    // Stage first, then sprites in file order.
    actors.sort_by_key(|a| !a.is_stage);
    let stages = actors.iter().filter(|a| a.is_stage).count();
    if stages != 1 {
        return Err(malformed(
            path,
            format!("expected exactly one stage target, found {stages}"),
        ));
    }
    let mut seen = BTreeSet::new();
    for actor in &actors {
        if !seen.insert(normalize_actor_name(&actor.name)) {
            return Err(malformed(
                path,
                format!("duplicate actor name {:?} after normalization", actor.name),
            ));
        }
    }

    Ok(Project {
        source_path: path.to_path_buf(),
        name: project_name_from(path),
        actors,
    })
}

fn to_raw_block(id: &str, block: &JsonBlock, all: &BTreeMap<String, JsonBlock>) -> RawBlock {
    let mut substacks = vec![
        input_block_ref(&block.inputs, "SUBSTACK"),
        input_block_ref(&block.inputs, "SUBSTACK2"),
    ];
    while substacks.last() == Some(&None) {
        substacks.pop();
    }

    let proc_signature = match block.opcode.as_str() {
        "procedures_call" | "procedures_prototype" => {
            block.mutation.as_ref().and_then(|m| m.proccode.clone())
        }
        // A definition hat carries no proccode of its own; it points at its
        // prototype through the custom_block input.
        "procedures_definition" => input_block_ref(&block.inputs, "custom_block")
            .and_then(|proto| all.get(&proto))
            .and_then(|proto| proto.mutation.as_ref())
            .and_then(|m| m.proccode.clone()),
        _ => None,
    };

    RawBlock {
        id: id.to_owned(),
        opcode: block.opcode.clone(),
        next: block.next.clone(),
        parent: block.parent.clone(),
        top_level: block.top_level,
        substacks,
        proc_signature,
    }
}

fn validate_actor(path: &Path, actor: &str, blocks: &BTreeMap<String, RawBlock>) -> Result<()> {
    for block in blocks.values() {
        if block.top_level && block.parent.is_some() {
            return Err(malformed(
                path,
                format!("top-level block {} of {actor:?} has a parent", block.id),
            ));
        }
        let referenced = block
            .next
            .iter()
            .chain(block.parent.iter())
            .chain(block.substacks.iter().flatten());
        for id in referenced {
            if !blocks.contains_key(id) {
                return Err(malformed(
                    path,
                    format!("block {} of {actor:?} references missing id {id}", block.id),
                ));
            }
        }
    }

    // Walking every top-level stack must visit each block at most once;
    // a revisit means either a cycle or a block shared between scripts.
    let mut visited = BTreeSet::new();
    for root in blocks.values().filter(|b| b.top_level) {
        let mut stack = vec![root.id.as_str()];
        while let Some(id) = stack.pop() {
            if !visited.insert(id) {
                return Err(malformed(
                    path,
                    format!("block {id} of {actor:?} is shared between stacks or forms a cycle"),
                ));
            }
            let block = &blocks[id];
            stack.extend(block.next.as_deref());
            stack.extend(block.substacks.iter().flatten().map(String::as_str));
        }
    }
    Ok(())
}

fn project_name_from(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned())
}

/// Hat opcodes start a runnable script; anything else at top level is dead code.
fn is_hat_opcode(opcode: &str) -> bool {
    opcode == "procedures_definition"
        || opcode == "control_start_as_clone"
        || opcode.contains("_when")
}

/// Reporters sitting loose at top level are leftovers from editing, not
/// scripts. Object-form ones are filtered here; array-form ones never parse.
fn is_reporter_opcode(opcode: &str) -> bool {
    if opcode.starts_with("operator_")
        || opcode.starts_with("argument_reporter_")
        || opcode.ends_with("_menu")
    {
        return true;
    }
    matches!(
        opcode,
        "motion_xposition"
            | "motion_yposition"
            | "motion_direction"
            | "looks_costumenumbername"
            | "looks_backdropnumbername"
            | "looks_size"
            | "sound_volume"
            | "sensing_touchingobject"
            | "sensing_touchingcolor"
            | "sensing_coloristouchingcolor"
            | "sensing_distanceto"
            | "sensing_answer"
            | "sensing_keypressed"
            | "sensing_mousedown"
            | "sensing_mousex"
            | "sensing_mousey"
            | "sensing_loudness"
            | "sensing_timer"
            | "sensing_of"
            | "sensing_current"
            | "sensing_dayssince2000"
            | "sensing_username"
            | "data_variable"
            | "data_listcontents"
            | "data_itemoflist"
            | "data_itemnumoflist"
            | "data_lengthoflist"
            | "data_listcontainsitem"
    )
}

/// Splits a project into scripts: one per non-reporter top-level block, in
/// ascending block-id order per actor, each closed under next/substack links.
pub fn extract_scripts(project: &Project) -> Vec<Script> {
    let mut scripts = Vec::new();
    for actor in &project.actors {
        // BTreeMap iteration gives the stable id order the ordinals rely on.
        let roots = actor
            .raw_blocks
            .values()
            .filter(|b| b.top_level && !is_reporter_opcode(&b.opcode));
        for (script_index, root) in roots.enumerate() {
            let mut blocks = BTreeMap::new();
            let mut stack = vec![root.id.as_str()];
            while let Some(id) = stack.pop() {
                let block = &actor.raw_blocks[id];
                blocks.insert(id.to_owned(), block.clone());
                stack.extend(block.next.as_deref());
                stack.extend(block.substacks.iter().flatten().map(String::as_str));
            }
            scripts.push(Script {
                script_id: ScriptId {
                    project: project.name.clone(),
                    actor: actor.name.clone(),
                    script_index,
                },
                actor_is_stage: actor.is_stage,
                dead_code: !is_hat_opcode(&root.opcode),
                root_block: root.id.clone(),
                blocks,
            });
        }
    }
    scripts
}

/// Loads every `*.sb3` / `*.json` under `dir`, sorted by path. Files that
/// fail to load are skipped with a warning and recorded, not fatal.
pub fn load_corpus(dir: &Path, recursive: bool) -> Result<Corpus> {
    let mut files = Vec::new();
    collect_solution_files(dir, recursive, &mut files)?;
    files.sort();

    let mut used_names = BTreeSet::new();
    let mut projects = Vec::new();
    let mut skipped = Vec::new();
    for file in files {
        let display = relative_name(dir, &file);
        match load_project(&file) {
            Ok(mut project) => {
                project.name = unique_project_name(project.name, &file, &mut used_names);
                projects.push(project);
            }
            Err(err) => {
                log::warn!("skipping {display}: {err}");
                skipped.push(SkippedFile {
                    file: display,
                    reason: err.to_string(),
                });
            }
        }
    }
    if projects.is_empty() {
        return Err(Error::EmptyCorpus {
            dir: dir.to_path_buf(),
        });
    }
    Ok(Corpus { projects, skipped })
}

fn collect_solution_files(dir: &Path, recursive: bool, out: &mut Vec<PathBuf>) -> Result<()> {
    let unreadable = |source| Error::UnreadableFile {
        path: dir.to_path_buf(),
        source,
    };
    for entry in fs::read_dir(dir).map_err(unreadable)? {
        let entry = entry.map_err(unreadable)?;
        let path = entry.path();
        if path.is_dir() {
            if recursive {
                collect_solution_files(&path, true, out)?;
            }
            continue;
        }
        let is_solution = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("sb3") || e.eq_ignore_ascii_case("json"));
        if is_solution {
            out.push(path);
        }
    }
    Ok(())
}

fn relative_name(dir: &Path, file: &Path) -> String {
    file.strip_prefix(dir)
        .unwrap_or(file)
        .to_string_lossy()
        .into_owned()
}

/// Project names default to the file stem; on a clash the full file name and
/// then a numeric suffix keep them unique within the corpus.
fn unique_project_name(stem: String, file: &Path, used: &mut BTreeSet<String>) -> String {
    if used.insert(stem.clone()) {
        return stem;
    }
    let file_name = file
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| stem.clone());
    if used.insert(file_name.clone()) {
        return file_name;
    }
    for i in 2.. {
        let candidate = format!("{stem} ({i})");
        if used.insert(candidate.clone()) {
            return candidate;
        }
    }
    unreachable!()
}

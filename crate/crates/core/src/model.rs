//! Control-flow abstraction of scripts and the block-ordering facts it implies.
//!
//! Each script becomes a small automaton: locations are points between
//! blocks, every block execution is a labeled transition, and ε-transitions
//! wire up branch joins and loop back-edges. From that automaton we read off
//! temporal properties: ordered pairs (a, b) such that some run executes a
//! and later executes b.

use std::collections::BTreeSet;
use std::fmt;

use serde::ser::SerializeTuple;
use serde::{Serialize, Serializer};

use crate::sb3::{RawBlock, Script};

/// What a transition executes: the opcode, plus the custom-block signature
/// when one opcode covers many user-defined blocks.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockLabel {
    pub opcode: String,
    pub qualifier: Option<String>,
}

impl BlockLabel {
    pub fn new(opcode: impl Into<String>) -> Self {
        BlockLabel {
            opcode: opcode.into(),
            qualifier: None,
        }
    }

    pub fn of_block(block: &RawBlock) -> Self {
        BlockLabel {
            opcode: block.opcode.clone(),
            qualifier: block.proc_signature.clone(),
        }
    }
}

impl fmt::Display for BlockLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.qualifier {
            Some(q) => write!(f, "{}[{}]", self.opcode, q),
            None => write!(f, "{}", self.opcode),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocationId(pub u32);

/// One edge of the automaton. `label: None` is an ε-transition: a possible
/// flow of control that executes nothing.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Transition {
    pub src: LocationId,
    pub label: Option<BlockLabel>,
    pub dst: LocationId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScriptModel {
    pub initial: LocationId,
    pub location_count: u32,
    pub transitions: BTreeSet<Transition>,
}

impl ScriptModel {
    pub fn labeled_transitions(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(|t| t.label.is_some())
    }

    /// Checks structural soundness; used by tests and generators.
    pub fn check(&self) -> Result<(), String> {
        let n = self.location_count;
        if self.initial.0 >= n {
            return Err(format!("initial location {} out of range", self.initial.0));
        }
        for t in &self.transitions {
            if t.src.0 >= n || t.dst.0 >= n {
                return Err(format!("transition endpoint out of range: {t:?}"));
            }
            if t.label.is_none() && t.src == t.dst {
                return Err(format!("ε self-loop at {:?}", t.src));
            }
        }
        let mut seen = vec![false; n as usize];
        let mut stack = vec![self.initial];
        seen[self.initial.0 as usize] = true;
        while let Some(loc) = stack.pop() {
            for t in self.transitions.iter().filter(|t| t.src == loc) {
                if !seen[t.dst.0 as usize] {
                    seen[t.dst.0 as usize] = true;
                    stack.push(t.dst);
                }
            }
        }
        if let Some(dead) = seen.iter().position(|s| !s) {
            return Err(format!("location {dead} unreachable from initial"));
        }
        Ok(())
    }
}

/// An ordered pair of labels: some run of the script executes `pred` and,
/// any number of blocks later, executes `succ`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TemporalProperty {
    pub pred: BlockLabel,
    pub succ: BlockLabel,
}

impl TemporalProperty {
    pub fn new(pred: BlockLabel, succ: BlockLabel) -> Self {
        TemporalProperty { pred, succ }
    }
}

impl fmt::Display for TemporalProperty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.pred, self.succ)
    }
}

impl Serialize for TemporalProperty {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut tuple = serializer.serialize_tuple(2)?;
        tuple.serialize_element(&self.pred.to_string())?;
        tuple.serialize_element(&self.succ.to_string())?;
        tuple.end()
    }
}

struct Builder {
    count: u32,
    transitions: BTreeSet<Transition>,
}

impl Builder {
    fn fresh(&mut self) -> LocationId {
        let loc = LocationId(self.count);
        self.count += 1;
        loc
    }

    fn step(&mut self, src: LocationId, label: BlockLabel, dst: LocationId) {
        self.transitions.insert(Transition {
            src,
            label: Some(label),
            dst,
        });
    }

    fn eps(&mut self, src: LocationId, dst: LocationId) {
        // ε self-loops say nothing about ordering; drop them.
        if src != dst {
            self.transitions.insert(Transition {
                src,
                label: None,
                dst,
            });
        }
    }
}

enum ControlKind {
    Plain,
    /// Control never continues past the block.
    Terminal,
    /// One substack, runs zero or one time.
    Branch,
    /// Two substacks, exactly one runs.
    BranchElse,
    /// One substack, runs zero or more times, then control continues.
    Loop,
    /// One substack repeated forever; no exit.
    LoopForever,
}

fn control_kind(block: &RawBlock) -> ControlKind {
    match block.opcode.as_str() {
        "control_forever" => ControlKind::LoopForever,
        "control_repeat" | "control_repeat_until" | "control_while" | "control_for_each" => {
            ControlKind::Loop
        }
        "control_if" => ControlKind::Branch,
        "control_if_else" => ControlKind::BranchElse,
        "control_stop" | "control_delete_this_clone" => ControlKind::Terminal,
        // Unknown blocks holding substacks (extensions) are treated as
        // skippable branches, the weakest ordering assumption.
        _ if block.substacks.len() >= 2 => ControlKind::BranchElse,
        _ if block.substacks.len() == 1 => ControlKind::Branch,
        _ => ControlKind::Plain,
    }
}

fn substack(block: &RawBlock, i: usize) -> Option<&str> {
    block.substacks.get(i).and_then(|s| s.as_deref())
}

/// Builds the automaton for one script. Location 0 is initial; every block
/// control can reach contributes exactly one labeled transition. Blocks
/// stranded behind a terminal block or a forever loop are not modeled.
pub fn build_model(script: &Script) -> ScriptModel {
    let mut builder = Builder {
        count: 0,
        transitions: BTreeSet::new(),
    };
    let initial = builder.fresh();
    build_chain(
        &mut builder,
        script,
        Some(script.root_block.as_str()),
        initial,
    );
    ScriptModel {
        initial,
        location_count: builder.count,
        transitions: builder.transitions,
    }
}

/// Lays down the chain starting at `first` from `entry`. Returns the location
/// control reaches after the chain, or None when the chain cannot fall
/// through (it ends in a terminal block or a forever loop).
fn build_chain(
    builder: &mut Builder,
    script: &Script,
    first: Option<&str>,
    entry: LocationId,
) -> Option<LocationId> {
    let mut cur = entry;
    let mut next_id = first;
    while let Some(id) = next_id {
        let block = script
            .blocks
            .get(id)
            .expect("script block table is closed under next/substack links");
        let label = BlockLabel::of_block(block);
        match control_kind(block) {
            ControlKind::Plain => {
                let after = builder.fresh();
                builder.step(cur, label, after);
                cur = after;
            }
            ControlKind::Terminal => {
                let after = builder.fresh();
                builder.step(cur, label, after);
                return None;
            }
            ControlKind::LoopForever => {
                let head = builder.fresh();
                builder.step(cur, label, head);
                if let Some(tail) = build_chain(builder, script, substack(block, 0), head) {
                    builder.eps(tail, head);
                }
                return None;
            }
            ControlKind::Loop => {
                let head = builder.fresh();
                builder.step(cur, label, head);
                if let Some(tail) = build_chain(builder, script, substack(block, 0), head) {
                    builder.eps(tail, head);
                }
                let exit = builder.fresh();
                builder.eps(head, exit);
                cur = exit;
            }
            ControlKind::Branch => {
                let body = builder.fresh();
                builder.step(cur, label, body);
                let body_exit = build_chain(builder, script, substack(block, 0), body);
                let join = builder.fresh();
                builder.eps(body, join);
                if let Some(exit) = body_exit {
                    builder.eps(exit, join);
                }
                cur = join;
            }
            ControlKind::BranchElse => {
                let fork = builder.fresh();
                builder.step(cur, label, fork);
                let then_entry = builder.fresh();
                builder.eps(fork, then_entry);
                let then_exit = build_chain(builder, script, substack(block, 0), then_entry);
                let else_entry = builder.fresh();
                builder.eps(fork, else_entry);
                let else_exit = build_chain(builder, script, substack(block, 1), else_entry);
                if then_exit.is_none() && else_exit.is_none() {
                    return None;
                }
                let join = builder.fresh();
                if let Some(exit) = then_exit {
                    builder.eps(exit, join);
                }
                if let Some(exit) = else_exit {
                    builder.eps(exit, join);
                }
                cur = join;
            }
        }
        next_id = block.next.as_deref();
    }
    Some(cur)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ExtractOptions {
    /// Only pairs executed back-to-back, instead of eventually-after.
    pub adjacent_only: bool,
    /// Drop (a, a) pairs, which otherwise arise from loops.
    pub no_self_pairs: bool,
}

/// Reads off the ordered pairs of the model: (a, b) is included when some
/// path executes a and afterwards executes b. With `adjacent_only`, b must be
/// the very next block executed.
pub fn extract_properties(
    model: &ScriptModel,
    options: &ExtractOptions,
) -> BTreeSet<TemporalProperty> {
    let n = model.location_count as usize;
    // reach[i][j]: j is reachable from i without executing another block
    // (adjacent mode) or via any path (eventually mode). Reflexive either way.
    let mut edges: Vec<Vec<usize>> = vec![Vec::new(); n];
    for t in &model.transitions {
        if !options.adjacent_only || t.label.is_none() {
            edges[t.src.0 as usize].push(t.dst.0 as usize);
        }
    }
    let reach: Vec<Vec<bool>> = (0..n)
        .map(|start| {
            let mut seen = vec![false; n];
            seen[start] = true;
            let mut stack = vec![start];
            while let Some(loc) = stack.pop() {
                for &next in &edges[loc] {
                    if !seen[next] {
                        seen[next] = true;
                        stack.push(next);
                    }
                }
            }
            seen
        })
        .collect();

    let labeled: Vec<&Transition> = model.labeled_transitions().collect();
    let mut properties = BTreeSet::new();
    for a in &labeled {
        for b in &labeled {
            if !reach[a.dst.0 as usize][b.src.0 as usize] {
                continue;
            }
            let (pred, succ) = (a.label.clone().unwrap(), b.label.clone().unwrap());
            if options.no_self_pairs && pred == succ {
                continue;
            }
            properties.insert(TemporalProperty { pred, succ });
        }
    }
    properties
}

/// Renders the model as Graphviz DOT; ε-transitions are dashed.
pub fn to_dot(model: &ScriptModel, title: &str) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(out, "digraph {} {{", dot_quote(title));
    let _ = writeln!(out, "    rankdir=TB;");
    let _ = writeln!(out, "    node [shape=circle];");
    let _ = writeln!(out, "    l{} [shape=doublecircle];", model.initial.0);
    for t in &model.transitions {
        match &t.label {
            Some(label) => {
                let _ = writeln!(
                    out,
                    "    l{} -> l{} [label={}];",
                    t.src.0,
                    t.dst.0,
                    dot_quote(&label.to_string())
                );
            }
            None => {
                let _ = writeln!(out, "    l{} -> l{} [style=dashed];", t.src.0, t.dst.0);
            }
        }
    }
    out.push_str("}\n");
    out
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

//! Mining-based anomaly detection for corpora of Scratch 3 solutions.
//!
//! Given a directory of solutions to the same assignment, the pipeline
//! decomposes every project into scripts, abstracts each script into an
//! automaton of control locations and block-labeled transitions, reads off
//! the ordered pairs of blocks a run can execute, mines closed sets of such
//! pairs shared by at least `k` scripts, and reports scripts that almost,
//! but not quite, follow a strongly supported pattern. Those near misses
//! are likely bugs, and the corpus itself is the only ground truth needed.
//!
//! [`anomaly::detect`] is the front door; the stages are usable on their
//! own through [`sb3`], [`model`] and [`miner`].

pub mod anomaly;
mod error;
pub mod miner;
pub mod model;
pub mod sb3;
pub mod synth;

pub use anomaly::{
    compare_modes, detect, find_violations, group_scripts, rank_violations, Anomaly,
    AnomalyReport, CorpusSummary, Detection, GroupSummary, ModeComparison, Overlap,
    OverlapAnomaly, ScriptGroup, ScriptInfo, Violation,
};
pub use error::{Error, Result};
pub use miner::{mine_patterns, MinSupport, MinerConfig, Mode, Pattern, PropertyDB};
pub use model::{
    build_model, extract_properties, to_dot, BlockLabel, ExtractOptions, LocationId, ScriptModel,
    TemporalProperty, Transition,
};
pub use sb3::{
    extract_scripts, load_corpus, load_project, normalize_actor_name, Actor, Corpus, Project,
    RawBlock, Script, ScriptId, SkippedFile,
};

//! Violation detection, ranking and report assembly.
//!
//! A script violates a pattern when it lacks a few of the pattern's
//! properties but shows the rest: a near miss, which is much more suspicious
//! than sharing nothing. Confidence discounts a violation by how many
//! scripts in the group deviate in exactly the same way, so common
//! alternative solutions rank below genuine one-off mistakes.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;

use crate::miner::{mine_patterns, MinerConfig, Mode, Pattern, PropertyDB};
use crate::model::{build_model, extract_properties, ScriptModel, TemporalProperty};
use crate::sb3::{extract_scripts, load_corpus, normalize_actor_name, Corpus, ScriptId};
use crate::{Error, Result};

/// A script reduced to what detection needs.
#[derive(Clone, Debug)]
pub struct ScriptInfo {
    pub id: ScriptId,
    pub is_stage: bool,
    pub dead_code: bool,
    pub properties: BTreeSet<TemporalProperty>,
}

/// One mining pool. Key "*" pools everything; otherwise the normalized actor
/// name, with all stage scripts under "#stage".
#[derive(Clone, Debug)]
pub struct ScriptGroup {
    pub key: String,
    pub scripts: Vec<ScriptInfo>,
}

pub fn group_scripts(scripts: Vec<ScriptInfo>, mode: Mode) -> Vec<ScriptGroup> {
    match mode {
        Mode::Aa => vec![ScriptGroup {
            key: "*".to_owned(),
            scripts,
        }],
        Mode::As => {
            let mut by_key: BTreeMap<String, Vec<ScriptInfo>> = BTreeMap::new();
            for info in scripts {
                let key = if info.is_stage {
                    "#stage".to_owned()
                } else {
                    normalize_actor_name(&info.id.actor)
                };
                by_key.entry(key).or_default().push(info);
            }
            by_key
                .into_iter()
                .map(|(key, scripts)| ScriptGroup { key, scripts })
                .collect()
        }
    }
}

/// A script that almost matches a pattern: it shows at least one property
/// and misses between one and `max_missing` of them.
#[derive(Clone, Debug)]
pub struct Violation {
    pub script: ScriptId,
    pub pattern_id: usize,
    pub support: usize,
    pub missing: BTreeSet<TemporalProperty>,
    /// Scripts of the group missing exactly this set from the pattern,
    /// the violator included.
    pub same_way_count: usize,
}

impl Violation {
    pub fn confidence(&self) -> f64 {
        self.support as f64 / (self.support + self.same_way_count) as f64
    }
}

/// Exact confidence comparison by cross-multiplication, immune to float
/// rounding between nearly equal ratios.
fn cmp_confidence(a: &Violation, b: &Violation) -> Ordering {
    let lhs = a.support as u128 * (b.support + b.same_way_count) as u128;
    let rhs = b.support as u128 * (a.support + a.same_way_count) as u128;
    lhs.cmp(&rhs)
}

/// Ranks high-confidence, well-supported, small-miss violations first; the
/// remaining keys only make the order deterministic.
pub fn rank_violations(violations: &mut [Violation]) {
    violations.sort_by(|a, b| {
        cmp_confidence(b, a)
            .then_with(|| b.support.cmp(&a.support))
            .then_with(|| a.missing.len().cmp(&b.missing.len()))
            .then_with(|| a.script.cmp(&b.script))
            .then_with(|| a.missing.cmp(&b.missing))
            .then_with(|| a.pattern_id.cmp(&b.pattern_id))
    });
}

/// Finds violations of `patterns` within the group they were mined from.
/// Per (script, missing set) only the strongest violation is kept.
pub fn find_violations(
    group: &ScriptGroup,
    patterns: &[Pattern],
    config: &MinerConfig,
) -> Vec<Violation> {
    let mut best: BTreeMap<(&ScriptId, BTreeSet<TemporalProperty>), Violation> = BTreeMap::new();
    for pattern in patterns {
        let missing_sets: Vec<BTreeSet<TemporalProperty>> = group
            .scripts
            .iter()
            .map(|s| pattern.properties.difference(&s.properties).cloned().collect())
            .collect();
        let mut same_way: BTreeMap<&BTreeSet<TemporalProperty>, usize> = BTreeMap::new();
        for missing in missing_sets.iter().filter(|m| !m.is_empty()) {
            *same_way.entry(missing).or_insert(0) += 1;
        }
        for (script, missing) in group.scripts.iter().zip(&missing_sets) {
            if missing.is_empty()
                || missing.len() > config.max_missing
                || missing.len() == pattern.properties.len()
            {
                continue;
            }
            let candidate = Violation {
                script: script.id.clone(),
                pattern_id: pattern.pattern_id,
                support: pattern.support,
                missing: missing.clone(),
                same_way_count: same_way[missing],
            };
            best.entry((&script.id, missing.clone()))
                .and_modify(|kept| {
                    if stronger(&candidate, kept) {
                        *kept = candidate.clone();
                    }
                })
                .or_insert(candidate);
        }
    }
    best.into_values().collect()
}

fn stronger(candidate: &Violation, kept: &Violation) -> bool {
    cmp_confidence(candidate, kept)
        .then_with(|| candidate.support.cmp(&kept.support))
        .then_with(|| kept.pattern_id.cmp(&candidate.pattern_id))
        == Ordering::Greater
}

/// One reported anomaly. Field order is the report wire format.
#[derive(Clone, Debug, Serialize)]
pub struct Anomaly {
    pub rank: usize,
    pub confidence: f64,
    pub support: usize,
    pub same_way_count: usize,
    pub project: String,
    pub actor: String,
    pub script_index: usize,
    pub dead_code: bool,
    pub pattern_id: usize,
    pub missing: BTreeSet<TemporalProperty>,
    pub present: BTreeSet<TemporalProperty>,
    /// Reserved for human notes on reviewed findings; always null here.
    pub annotation: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorpusSummary {
    pub projects: usize,
    pub skipped: Vec<String>,
    pub scripts: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct GroupSummary {
    pub key: String,
    pub scripts: usize,
    pub patterns: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnomalyReport {
    pub mode: Mode,
    pub config: MinerConfig,
    pub corpus: CorpusSummary,
    pub groups: Vec<GroupSummary>,
    /// Violations before the confidence threshold and top-n cut.
    pub violations_found: usize,
    pub anomalies: Vec<Anomaly>,
}

/// Full detection result: the report plus the intermediates that the
/// model and pattern dumps expose.
#[derive(Clone, Debug)]
pub struct Detection {
    pub report: AnomalyReport,
    /// Mined patterns per group key, ids matching the report.
    pub patterns: Vec<(String, Vec<Pattern>)>,
    pub models: Vec<(ScriptId, ScriptModel)>,
}

/// Runs the whole pipeline on a corpus directory.
pub fn detect(dir: &Path, config: &MinerConfig, recursive: bool) -> Result<Detection> {
    let corpus = load_corpus(dir, recursive)?;
    detect_in_corpus(&corpus, config)
}

fn detect_in_corpus(corpus: &Corpus, config: &MinerConfig) -> Result<Detection> {
    let options = config.extract_options();
    let mut infos = Vec::new();
    let mut models = Vec::new();
    for project in &corpus.projects {
        for script in extract_scripts(project) {
            let model = build_model(&script);
            let properties = extract_properties(&model, &options);
            infos.push(ScriptInfo {
                id: script.script_id.clone(),
                is_stage: script.actor_is_stage,
                dead_code: script.dead_code,
                properties,
            });
            models.push((script.script_id, model));
        }
    }
    if infos.is_empty() {
        return Err(Error::NoScripts);
    }
    let script_count = infos.len();
    let groups = group_scripts(infos, config.mode);

    let mut grouped_patterns: Vec<(String, Vec<Pattern>)> = Vec::new();
    let mut violations: Vec<Violation> = Vec::new();
    let mut next_pattern_id = 0;
    for group in &groups {
        let db = PropertyDB::new(
            group
                .scripts
                .iter()
                .map(|s| (s.id.clone(), s.properties.clone()))
                .collect(),
        );
        let mut patterns = mine_patterns(&db, config);
        for pattern in &mut patterns {
            pattern.pattern_id += next_pattern_id;
        }
        next_pattern_id += patterns.len();
        violations.extend(find_violations(group, &patterns, config));
        grouped_patterns.push((group.key.clone(), patterns));
    }

    rank_violations(&mut violations);
    let violations_found = violations.len();

    let info_by_id: BTreeMap<&ScriptId, &ScriptInfo> = groups
        .iter()
        .flat_map(|g| &g.scripts)
        .map(|s| (&s.id, s))
        .collect();
    let pattern_by_id: BTreeMap<usize, &Pattern> = grouped_patterns
        .iter()
        .flat_map(|(_, patterns)| patterns)
        .map(|p| (p.pattern_id, p))
        .collect();

    let anomalies: Vec<Anomaly> = violations
        .iter()
        .filter(|v| v.confidence() >= config.min_confidence)
        .take(config.top_n)
        .enumerate()
        .map(|(i, v)| {
            let info = info_by_id[&v.script];
            let pattern = pattern_by_id[&v.pattern_id];
            Anomaly {
                rank: i + 1,
                confidence: v.confidence(),
                support: v.support,
                same_way_count: v.same_way_count,
                project: v.script.project.clone(),
                actor: v.script.actor.clone(),
                script_index: v.script.script_index,
                dead_code: info.dead_code,
                pattern_id: v.pattern_id,
                missing: v.missing.clone(),
                present: pattern
                    .properties
                    .intersection(&info.properties)
                    .cloned()
                    .collect(),
                annotation: None,
            }
        })
        .collect();

    let report = AnomalyReport {
        mode: config.mode,
        config: config.clone(),
        corpus: CorpusSummary {
            projects: corpus.projects.len(),
            skipped: corpus.skipped.iter().map(|s| s.file.clone()).collect(),
            scripts: script_count,
        },
        groups: groups
            .iter()
            .zip(&grouped_patterns)
            .map(|(group, (_, patterns))| GroupSummary {
                key: group.key.clone(),
                scripts: group.scripts.len(),
                patterns: patterns.len(),
            })
            .collect(),
        violations_found,
        anomalies,
    };

    Ok(Detection {
        report,
        patterns: grouped_patterns,
        models,
    })
}

/// An anomaly key shared by both modes of a comparison run.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct OverlapAnomaly {
    pub project: String,
    pub actor: String,
    pub script_index: usize,
    pub missing: BTreeSet<TemporalProperty>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Overlap {
    pub count: usize,
    pub anomalies: Vec<OverlapAnomaly>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeComparison {
    pub aa: AnomalyReport,
    #[serde(rename = "as")]
    pub actor_specific: AnomalyReport,
    /// Reported anomalies found by both modes, keyed by script and missing set.
    pub overlap: Overlap,
}

/// Runs detection in both modes on one corpus and intersects the reports.
pub fn compare_modes(dir: &Path, config: &MinerConfig, recursive: bool) -> Result<ModeComparison> {
    let corpus = load_corpus(dir, recursive)?;
    let aa = detect_in_corpus(
        &corpus,
        &MinerConfig {
            mode: Mode::Aa,
            ..config.clone()
        },
    )?
    .report;
    let actor_specific = detect_in_corpus(
        &corpus,
        &MinerConfig {
            mode: Mode::As,
            ..config.clone()
        },
    )?
    .report;

    let key = |a: &Anomaly| OverlapAnomaly {
        project: a.project.clone(),
        actor: a.actor.clone(),
        script_index: a.script_index,
        missing: a.missing.clone(),
    };
    let aa_keys: BTreeSet<OverlapAnomaly> = aa.anomalies.iter().map(key).collect();
    let anomalies: Vec<OverlapAnomaly> = actor_specific
        .anomalies
        .iter()
        .map(key)
        .filter(|k| aa_keys.contains(k))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    Ok(ModeComparison {
        aa,
        actor_specific,
        overlap: Overlap {
            count: anomalies.len(),
            anomalies,
        },
    })
}

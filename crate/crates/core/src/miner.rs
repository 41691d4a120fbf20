//! Mining of closed, frequently shared property sets across scripts.
//!
//! Rows are scripts, items are temporal properties. A pattern is an itemset
//! contained in at least `k` rows that is closed: adding any further item
//! would shrink its supporter set. Closedness keeps the output small without
//! losing information, since every frequent itemset is the subset of exactly
//! one closed set with the same supporters.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::model::{ExtractOptions, TemporalProperty};
use crate::sb3::ScriptId;

/// Analysis scope: pool all scripts, or mine each actor role separately.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Actor-agnostic: one pool with every script of the corpus.
    Aa,
    /// Actor-specific: one pool per normalized actor name.
    As,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Aa => "AA",
            Mode::As => "AS",
        })
    }
}

impl Serialize for Mode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

/// Support threshold: fixed, or scaled to a tenth of the rows (at least 3).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MinSupport {
    Auto,
    Fixed(usize),
}

impl MinSupport {
    pub fn resolve(&self, rows: usize) -> usize {
        match self {
            MinSupport::Auto => rows.div_ceil(10).max(3),
            MinSupport::Fixed(k) => *k,
        }
    }
}

impl fmt::Display for MinSupport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MinSupport::Auto => f.write_str("auto"),
            MinSupport::Fixed(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for MinSupport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(MinSupport::Auto);
        }
        match s.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(MinSupport::Fixed(k)),
            _ => Err(format!("expected a positive integer or \"auto\", got {s:?}")),
        }
    }
}

impl Serialize for MinSupport {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            MinSupport::Auto => serializer.serialize_str("auto"),
            MinSupport::Fixed(k) => serializer.serialize_u64(*k as u64),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MinerConfig {
    pub min_support: MinSupport,
    pub min_pattern_size: usize,
    pub max_missing: usize,
    pub min_confidence: f64,
    pub top_n: usize,
    #[serde(skip)]
    pub mode: Mode,
    pub adjacent_only: bool,
    pub no_self_pairs: bool,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            min_support: MinSupport::Auto,
            min_pattern_size: 2,
            max_missing: 2,
            min_confidence: 0.9,
            top_n: 10,
            mode: Mode::Aa,
            adjacent_only: false,
            no_self_pairs: false,
        }
    }
}

impl MinerConfig {
    pub fn extract_options(&self) -> ExtractOptions {
        ExtractOptions {
            adjacent_only: self.adjacent_only,
            no_self_pairs: self.no_self_pairs,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if let MinSupport::Fixed(k) = self.min_support {
            if k < 1 {
                return Err("min_support must be at least 1".into());
            }
        }
        if self.min_pattern_size < 1 {
            return Err("min_pattern_size must be at least 1".into());
        }
        if self.max_missing < 1 {
            return Err("max_missing must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.min_confidence) || self.min_confidence.is_nan() {
            return Err("min_confidence must lie in [0, 1]".into());
        }
        if self.top_n < 1 {
            return Err("top_n must be at least 1".into());
        }
        Ok(())
    }
}

/// The mining input: one property set per script, with the item universe.
#[derive(Clone, Debug)]
pub struct PropertyDB {
    rows: Vec<(ScriptId, BTreeSet<TemporalProperty>)>,
    universe: BTreeSet<TemporalProperty>,
}

impl PropertyDB {
    pub fn new(rows: Vec<(ScriptId, BTreeSet<TemporalProperty>)>) -> Self {
        let mut ids = BTreeSet::new();
        for (id, _) in &rows {
            assert!(ids.insert(id.clone()), "duplicate script id {id}");
        }
        let universe = rows.iter().flat_map(|(_, props)| props.iter().cloned()).collect();
        PropertyDB { rows, universe }
    }

    pub fn rows(&self) -> &[(ScriptId, BTreeSet<TemporalProperty>)] {
        &self.rows
    }

    pub fn universe(&self) -> &BTreeSet<TemporalProperty> {
        &self.universe
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// A closed property set shared by at least `k` scripts. Field order is the
/// wire format of the pattern dump.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Pattern {
    pub pattern_id: usize,
    pub properties: BTreeSet<TemporalProperty>,
    pub support: usize,
    pub supporters: BTreeSet<ScriptId>,
}

/// Row sets are bitsets, one u64 word per 64 rows.
type Tidset = Vec<u64>;

fn intersect(a: &Tidset, b: &Tidset) -> Tidset {
    a.iter().zip(b).map(|(x, y)| x & y).collect()
}

fn count(t: &Tidset) -> usize {
    t.iter().map(|w| w.count_ones() as usize).sum()
}

fn is_subset(a: &Tidset, b: &Tidset) -> bool {
    a.iter().zip(b).all(|(x, y)| x & !y == 0)
}

struct Search<'a> {
    tid: &'a [Tidset],
    item_count: usize,
    min_support: usize,
    /// (sorted item indices, tidset) per closed frequent set found.
    found: Vec<(Vec<usize>, Tidset)>,
}

impl Search<'_> {
    /// All items contained in every row of `t`.
    fn closure(&self, t: &Tidset) -> Vec<usize> {
        (0..self.item_count)
            .filter(|&j| is_subset(t, &self.tid[j]))
            .collect()
    }

    /// Depth-first enumeration by prefix-preserving extension: a child
    /// extends its parent with item `j` and is kept only when the closure
    /// adds no item below `j`, which makes the parent unique and the
    /// traversal visit every closed frequent set exactly once.
    fn descend(&mut self, itemset: Vec<usize>, tidset: Tidset, start: usize) {
        for j in start..self.item_count {
            if itemset.binary_search(&j).is_ok() {
                continue;
            }
            let extended = intersect(&tidset, &self.tid[j]);
            if count(&extended) < self.min_support {
                continue;
            }
            let closed = self.closure(&extended);
            let prefix_preserved = closed
                .iter()
                .take_while(|&&q| q < j)
                .eq(itemset.iter().take_while(|&&p| p < j));
            if prefix_preserved {
                self.found.push((closed.clone(), extended.clone()));
                self.descend(closed, extended, j + 1);
            }
        }
    }
}

/// Mines every closed property set with support ≥ k and size ≥
/// `min_pattern_size`, ordered by support (desc), then size (desc), then
/// property order. Ids are dense in that order.
pub fn mine_patterns(db: &PropertyDB, config: &MinerConfig) -> Vec<Pattern> {
    let rows = db.rows();
    let k = config.min_support.resolve(rows.len()).max(1);
    if rows.len() < k || db.universe().is_empty() {
        return Vec::new();
    }

    let items: Vec<&TemporalProperty> = db.universe().iter().collect();
    let index: BTreeMap<&TemporalProperty, usize> =
        items.iter().enumerate().map(|(j, p)| (*p, j)).collect();
    let words = rows.len().div_ceil(64);
    let mut tid = vec![vec![0u64; words]; items.len()];
    for (r, (_, props)) in rows.iter().enumerate() {
        for p in props {
            tid[index[p]][r / 64] |= 1 << (r % 64);
        }
    }
    let mut all_rows = vec![!0u64; words];
    if !rows.len().is_multiple_of(64) {
        all_rows[words - 1] = (1u64 << (rows.len() % 64)) - 1;
    }

    let mut search = Search {
        tid: &tid,
        item_count: items.len(),
        min_support: k,
        found: Vec::new(),
    };
    let root = search.closure(&all_rows);
    if !root.is_empty() {
        search.found.push((root.clone(), all_rows.clone()));
    }
    search.descend(root, all_rows, 0);

    let mut patterns: Vec<Pattern> = search
        .found
        .into_iter()
        .filter(|(itemset, _)| itemset.len() >= config.min_pattern_size)
        .map(|(itemset, tidset)| {
            let properties: BTreeSet<TemporalProperty> =
                itemset.iter().map(|&j| items[j].clone()).collect();
            let supporters: BTreeSet<ScriptId> = rows
                .iter()
                .enumerate()
                .filter(|(r, _)| tidset[r / 64] >> (r % 64) & 1 == 1)
                .map(|(_, (id, _))| id.clone())
                .collect();
            Pattern {
                pattern_id: 0,
                support: supporters.len(),
                properties,
                supporters,
            }
        })
        .collect();
    patterns.sort_by(|a, b| {
        Reverse(a.support)
            .cmp(&Reverse(b.support))
            .then(Reverse(a.properties.len()).cmp(&Reverse(b.properties.len())))
            .then(a.properties.cmp(&b.properties))
    });
    for (i, pattern) in patterns.iter_mut().enumerate() {
        pattern.pattern_id = i;
    }
    patterns
}

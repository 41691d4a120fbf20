//! Release gate. Every test checks one advertised behavior end to end,
//! against an independent oracle where one exists, and prints a PASS line
//! with the measured numbers.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use blockmine::synth::{self, linear, sprite, stage};
use blockmine::{
    compare_modes, detect, extract_properties, mine_patterns, normalize_actor_name, BlockLabel,
    ExtractOptions, LocationId, MinSupport, MinerConfig, Mode, PropertyDB, ScriptId, ScriptModel,
    TemporalProperty, Transition,
};

fn run(args: &[&str]) -> Output {
    let output = Command::new(env!("CARGO_BIN_EXE_blockmine"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        output.status.success(),
        "blockmine {args:?} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

/// 18 solutions of [key-press; move; next-costume], 2 with the move replaced
/// by a jump to a fixed position.
fn write_planted(dir: &Path) {
    let mut projects = Vec::new();
    for i in 0..20 {
        let middle = if i < 18 {
            "motion_movesteps"
        } else {
            "motion_gotoxy"
        };
        let json = synth::project_json(&[
            stage(),
            sprite(
                "Sprite1",
                vec![linear(&["event_whenkeypressed", middle, "looks_nextcostume"])],
            ),
        ]);
        projects.push((format!("student-{i:02}"), json));
    }
    synth::write_corpus(dir, &projects).unwrap();
}

#[test]
fn planted_deviants_rank_first_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    write_planted(dir.path());

    let start = Instant::now();
    let output = run(&[
        "detect",
        "--input",
        dir.path().to_str().unwrap(),
        "--format",
        "json",
    ]);
    let elapsed = start.elapsed();

    let report: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(report["violations_found"], 2);
    let anomalies = report["anomalies"].as_array().unwrap();
    assert_eq!(anomalies.len(), 2, "exactly the two deviants");

    let mut deviants = BTreeSet::new();
    for (i, anomaly) in anomalies.iter().enumerate() {
        assert_eq!(anomaly["rank"], i + 1);
        assert_eq!(anomaly["confidence"].as_f64().unwrap(), 18.0 / 20.0);
        assert_eq!(anomaly["support"], 18);
        assert_eq!(anomaly["same_way_count"], 2);
        for pair in anomaly["missing"].as_array().unwrap() {
            let text = format!("{pair}");
            assert!(text.contains("motion_movesteps"), "missing pair {text}");
        }
        deviants.insert(anomaly["project"].as_str().unwrap().to_owned());
    }
    assert_eq!(
        deviants,
        BTreeSet::from(["student-18".to_owned(), "student-19".to_owned()])
    );
    assert!(elapsed < Duration::from_secs(2), "took {elapsed:?}");
    println!(
        "PASS planted corpus: both deviants at confidence 0.90, ranks 1-2, in {elapsed:?}"
    );
}

fn item(j: usize) -> TemporalProperty {
    TemporalProperty::new(BlockLabel::new(format!("p{j:02}")), BlockLabel::new("x"))
}

fn row_id(r: usize) -> ScriptId {
    ScriptId {
        project: format!("r{r:02}"),
        actor: "a".to_owned(),
        script_index: 0,
    }
}

/// Closed frequent itemsets by powerset enumeration over bitmask rows,
/// sorted the way the report orders patterns.
fn powerset_mine(
    rows: &[u16],
    item_count: usize,
    k: usize,
) -> Vec<(BTreeSet<TemporalProperty>, BTreeSet<ScriptId>)> {
    let mut found = Vec::new();
    for mask in 1u32..1 << item_count {
        let mask = mask as u16;
        let supporters: Vec<usize> = (0..rows.len()).filter(|&r| rows[r] & mask == mask).collect();
        if supporters.len() < k {
            continue;
        }
        let common = supporters.iter().fold(u16::MAX, |acc, &r| acc & rows[r]);
        if common & ((1u32 << item_count) as u16).wrapping_sub(1) != mask {
            continue;
        }
        let properties: BTreeSet<TemporalProperty> = (0..item_count)
            .filter(|j| mask >> j & 1 == 1)
            .map(item)
            .collect();
        let ids: BTreeSet<ScriptId> = supporters.into_iter().map(row_id).collect();
        found.push((properties, ids));
    }
    found.sort_by(|a, b| {
        (b.1.len().cmp(&a.1.len()))
            .then(b.0.len().cmp(&a.0.len()))
            .then(a.0.cmp(&b.0))
    });
    found
}

#[test]
fn mined_patterns_equal_powerset_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1d3a);
    let cases = 250;
    let start = Instant::now();

    for case in 0..cases {
        let item_count = rng.gen_range(1..=12);
        let row_count = rng.gen_range(1..=10);
        let density = rng.gen_range(0.15..0.75);
        let k = rng.gen_range(1..=5);

        let masks: Vec<u16> = (0..row_count)
            .map(|_| {
                (0..item_count)
                    .filter(|_| rng.gen_bool(density))
                    .fold(0u16, |acc, j| acc | 1 << j)
            })
            .collect();
        let rows: Vec<(ScriptId, BTreeSet<TemporalProperty>)> = masks
            .iter()
            .enumerate()
            .map(|(r, &mask)| {
                let props = (0..item_count).filter(|j| mask >> j & 1 == 1).map(item).collect();
                (row_id(r), props)
            })
            .collect();

        let config = MinerConfig {
            min_support: MinSupport::Fixed(k),
            min_pattern_size: 1,
            ..MinerConfig::default()
        };
        let mined = mine_patterns(&PropertyDB::new(rows), &config);
        let expected = powerset_mine(&masks, item_count, k);

        assert_eq!(
            mined.len(),
            expected.len(),
            "case {case}: {row_count} rows, {item_count} items, k={k}"
        );
        for (i, pattern) in mined.iter().enumerate() {
            assert_eq!(pattern.pattern_id, i);
            assert_eq!(pattern.properties, expected[i].0, "case {case} pattern {i}");
            assert_eq!(pattern.supporters, expected[i].1, "case {case} pattern {i}");
            assert_eq!(pattern.support, expected[i].1.len());
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    println!("PASS mining oracle: {cases} random databases matched powerset enumeration in {elapsed:?}");
}

fn transition(src: u32, label: Option<&str>, dst: u32) -> Transition {
    Transition {
        src: LocationId(src),
        label: label.map(BlockLabel::new),
        dst: LocationId(dst),
    }
}

fn random_label(rng: &mut ChaCha8Rng) -> Option<&'static str> {
    const LABELS: [&str; 4] = ["a", "b", "c", "d"];
    if rng.gen_bool(0.25) {
        None
    } else {
        Some(LABELS[rng.gen_range(0..LABELS.len())])
    }
}

/// Every location is reachable; all edges point forward, so the model is
/// acyclic and every walk is a simple path.
fn random_dag(rng: &mut ChaCha8Rng, max_transitions: usize) -> ScriptModel {
    let n = rng.gen_range(3..=7u32);
    let mut transitions = BTreeSet::new();
    for dst in 1..n {
        let src = rng.gen_range(0..dst);
        transitions.insert(transition(src, random_label(rng), dst));
    }
    for _ in 0..rng.gen_range(0..=3) {
        if transitions.len() >= max_transitions {
            break;
        }
        let dst = rng.gen_range(1..n);
        let src = rng.gen_range(0..dst);
        transitions.insert(transition(src, random_label(rng), dst));
    }
    ScriptModel {
        initial: LocationId(0),
        location_count: n,
        transitions,
    }
}

/// A forward DAG plus one back edge (the only transition with src >= dst).
fn random_single_loop(rng: &mut ChaCha8Rng) -> ScriptModel {
    let mut model = random_dag(rng, 7);
    let src = rng.gen_range(1..model.location_count);
    let dst = rng.gen_range(0..=src);
    let label = if src == dst {
        Some("a")
    } else {
        random_label(rng)
    };
    model
        .transitions
        .insert(transition(src, label, dst));
    model
}

/// Ordered label pairs from exhaustive walk enumeration, with each
/// transition traversed at most `cap` times per walk.
fn walk_pairs(model: &ScriptModel, cap: &dyn Fn(&Transition) -> usize) -> BTreeSet<(String, String)> {
    fn go(
        loc: LocationId,
        transitions: &[&Transition],
        cap: &dyn Fn(&Transition) -> usize,
        uses: &mut [usize],
        seq: &mut Vec<String>,
        out: &mut BTreeSet<(String, String)>,
        budget: &mut u64,
    ) {
        *budget -= 1;
        assert!(*budget > 0, "enumeration blew its step budget");
        let mut extended = false;
        for i in 0..transitions.len() {
            let t = transitions[i];
            if t.src != loc || uses[i] >= cap(t) {
                continue;
            }
            extended = true;
            uses[i] += 1;
            if let Some(label) = &t.label {
                seq.push(label.to_string());
                go(t.dst, transitions, cap, uses, seq, out, budget);
                seq.pop();
            } else {
                go(t.dst, transitions, cap, uses, seq, out, budget);
            }
            uses[i] -= 1;
        }
        if !extended {
            for i in 0..seq.len() {
                for j in i + 1..seq.len() {
                    out.insert((seq[i].clone(), seq[j].clone()));
                }
            }
        }
    }

    let transitions: Vec<&Transition> = model.transitions.iter().collect();
    let mut uses = vec![0; transitions.len()];
    let mut out = BTreeSet::new();
    let mut budget = 20_000_000u64;
    go(
        model.initial,
        &transitions,
        cap,
        &mut uses,
        &mut Vec::new(),
        &mut out,
        &mut budget,
    );
    out
}

fn extracted_pairs(model: &ScriptModel) -> BTreeSet<(String, String)> {
    extract_properties(model, &ExtractOptions::default())
        .into_iter()
        .map(|p| (p.pred.to_string(), p.succ.to_string()))
        .collect()
}

#[test]
fn extracted_properties_equal_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9c4e);
    let cases = 220;
    let start = Instant::now();

    for case in 0..cases {
        let model = random_dag(&mut rng, 8);
        model.check().unwrap();
        // Acyclic: no walk can repeat a transition, so cap 1 is exhaustive.
        let expected = walk_pairs(&model, &|_| 1);
        assert_eq!(extracted_pairs(&model), expected, "acyclic case {case}: {model:?}");
    }

    for case in 0..cases {
        let model = random_single_loop(&mut rng);
        model.check().unwrap();
        // Witnessing any ordered pair needs the back edge at most twice;
        // forward edges then appear in at most three loop-free segments.
        let expected = walk_pairs(&model, &|t| if t.src >= t.dst { 2 } else { 3 });
        assert_eq!(extracted_pairs(&model), expected, "looped case {case}: {model:?}");
    }

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    println!(
        "PASS property oracle: {cases} acyclic and {cases} single-loop models matched path enumeration in {elapsed:?}"
    );
}

#[test]
fn actor_specific_mode_keeps_patterns_inside_their_group() {
    let dir = tempfile::tempdir().unwrap();
    // Cat scripts all agree. Decoration scripts share (flag, move) with the
    // Cat pattern but miss its other two properties, so pooled mining sees
    // them as near misses; Cat scripts miss five Decoration properties and
    // are no near miss of anything.
    let mut projects = Vec::new();
    for i in 0..20 {
        let json = synth::project_json(&[
            stage(),
            sprite(
                "Cat",
                vec![linear(&[
                    "event_whenflagclicked",
                    "motion_movesteps",
                    "looks_nextcostume",
                ])],
            ),
            sprite(
                "Decoration",
                vec![linear(&[
                    "event_whenflagclicked",
                    "motion_movesteps",
                    "looks_show",
                    "looks_hide",
                ])],
            ),
        ]);
        projects.push((format!("p{i:02}"), json));
    }
    synth::write_corpus(dir.path(), &projects).unwrap();

    let config = MinerConfig {
        mode: Mode::As,
        ..MinerConfig::default()
    };
    let detection = detect(dir.path(), &config, false).unwrap();

    let mut group_of_pattern: BTreeMap<usize, &str> = BTreeMap::new();
    for (key, patterns) in &detection.patterns {
        for pattern in patterns {
            group_of_pattern.insert(pattern.pattern_id, key);
            for supporter in &pattern.supporters {
                assert_eq!(
                    &normalize_actor_name(&supporter.actor),
                    key,
                    "pattern {} is supported from outside its group",
                    pattern.pattern_id
                );
            }
        }
    }
    assert!(group_of_pattern.len() >= 2, "both roles mined");

    let report = &detection.report;
    let mut cross_attributions = 0;
    for anomaly in &report.anomalies {
        if group_of_pattern[&anomaly.pattern_id] != normalize_actor_name(&anomaly.actor) {
            cross_attributions += 1;
        }
    }
    assert_eq!(cross_attributions, 0);
    assert_eq!(report.violations_found, 0, "no within-group near miss exists");

    // The deviation is real: pooled mining holds Decoration scripts against
    // the Cat-supported pattern.
    let pooled = detect(dir.path(), &MinerConfig::default(), false).unwrap();
    assert_eq!(pooled.report.violations_found, 20);

    println!(
        "PASS role locality: AS attributes 0 of {} patterns across groups; pooling finds {} cross-role near misses",
        group_of_pattern.len(),
        pooled.report.violations_found
    );
}

/// Alpha deviates in 2 of 10 projects; Beta never does but shares Alpha's
/// block ordering, so the pooled core pattern spans both roles.
fn write_two_roles(dir: &Path) {
    let mut projects = Vec::new();
    for i in 0..10 {
        let alpha: &[&str] = if i < 8 {
            &[
                "event_whenflagclicked",
                "motion_movesteps",
                "looks_nextcostume",
                "sound_play",
            ]
        } else {
            &["event_whenflagclicked", "motion_movesteps", "looks_nextcostume"]
        };
        let json = synth::project_json(&[
            stage(),
            sprite("Alpha", vec![linear(alpha)]),
            sprite(
                "Beta",
                vec![linear(&[
                    "event_whenkeypressed",
                    "motion_movesteps",
                    "looks_nextcostume",
                    "sound_play",
                ])],
            ),
        ]);
        projects.push((format!("p{i:02}"), json));
    }
    synth::write_corpus(dir, &projects).unwrap();
}

#[test]
fn mode_comparison_orders_violation_counts() {
    let dir = tempfile::tempdir().unwrap();
    write_two_roles(dir.path());

    let comparison = compare_modes(dir.path(), &MinerConfig::default(), false).unwrap();
    let aa_found = comparison.aa.violations_found;
    let as_found = comparison.actor_specific.violations_found;
    assert!(aa_found >= as_found, "AA {aa_found} < AS {as_found}");
    assert_eq!(aa_found, 12, "2 Alpha deviants plus 10 Beta hat mismatches");
    assert_eq!(as_found, 0, "per-role mining sees no near miss");
    assert_eq!(comparison.aa.anomalies.len(), 2);

    // The pattern driving the AA anomalies is supported by both roles.
    let pooled = detect(dir.path(), &MinerConfig::default(), false).unwrap();
    let core = pooled
        .patterns
        .iter()
        .flat_map(|(_, patterns)| patterns)
        .find(|p| p.support == 18)
        .expect("core pattern");
    let roles: BTreeSet<&str> = core.supporters.iter().map(|s| s.actor.as_str()).collect();
    assert_eq!(roles, BTreeSet::from(["Alpha", "Beta"]));

    let output = run(&[
        "detect",
        "--input",
        dir.path().to_str().unwrap(),
        "--compare-modes",
        "--format",
        "json",
    ]);
    let value: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(value["aa"]["violations_found"], 12);
    assert_eq!(value["as"]["violations_found"], 0);

    println!(
        "PASS mode comparison: pooled finds {aa_found} violations, per-role finds {as_found}, core pattern spans {roles:?}"
    );
}

fn write_random_corpus(dir: &Path, seed: u64, projects: usize) {
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

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Vec::new();
    for i in 0..projects {
        let mut actors = vec![stage()];
        for name in ["Cat", "Dog"] {
            let script_count = if name == "Cat" { rng.gen_range(1..=2) } else { rng.gen_range(0..=1) };
            let mut scripts = Vec::new();
            for _ in 0..script_count {
                let mut opcodes: Vec<&str> =
                    TEMPLATES[rng.gen_range(0..TEMPLATES.len())].to_vec();
                if rng.gen_bool(0.35) {
                    let slot = rng.gen_range(1..opcodes.len());
                    opcodes[slot] = REPLACEMENTS[rng.gen_range(0..REPLACEMENTS.len())];
                }
                scripts.push(linear(&opcodes));
            }
            actors.push(sprite(name, scripts));
        }
        corpus.push((format!("p{i:02}"), synth::project_json(&actors)));
    }
    synth::write_corpus(dir, &corpus).unwrap();
}

type PatternKey = (String, BTreeSet<TemporalProperty>, BTreeSet<ScriptId>);

fn pattern_keys(dir: &Path, mode: Mode, k: usize) -> BTreeSet<PatternKey> {
    let config = MinerConfig {
        min_support: MinSupport::Fixed(k),
        mode,
        ..MinerConfig::default()
    };
    let detection = detect(dir, &config, false).unwrap();
    detection
        .patterns
        .into_iter()
        .flat_map(|(key, patterns)| {
            patterns
                .into_iter()
                .map(move |p| (key.clone(), p.properties, p.supporters))
        })
        .collect()
}

#[test]
fn raising_support_shrinks_the_pattern_set() {
    let mut checked = 0;
    for seed in [11, 22, 29] {
        let dir = tempfile::tempdir().unwrap();
        write_random_corpus(dir.path(), seed, 25);
        for mode in [Mode::Aa, Mode::As] {
            for k in 2..=4 {
                let at_k = pattern_keys(dir.path(), mode, k);
                let at_k1 = pattern_keys(dir.path(), mode, k + 1);
                assert!(
                    at_k1.is_subset(&at_k),
                    "seed {seed} mode {mode} k {k}: {:?} not in the k run",
                    at_k1.difference(&at_k).next()
                );
                if k == 2 {
                    assert!(!at_k.is_empty(), "seed {seed} mode {mode}: nothing mined");
                }
                checked += 1;
            }
        }
    }
    println!("PASS anti-monotonicity: {checked} k-vs-k+1 runs were subsets");
}

#[test]
fn json_report_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    write_planted(dir.path());

    let mut sizes = Vec::new();
    for mode in ["aa", "as"] {
        let args = [
            "detect",
            "--input",
            dir.path().to_str().unwrap(),
            "--mode",
            mode,
            "--format",
            "json",
        ];
        let first = run(&args);
        let second = run(&args);
        assert!(!first.stdout.is_empty());
        assert_eq!(first.stdout, second.stdout, "mode {mode} output drifted");
        sizes.push(first.stdout.len());
    }
    println!(
        "PASS determinism: repeated runs byte-identical ({} and {} byte reports)",
        sizes[0], sizes[1]
    );
}

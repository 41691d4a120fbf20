//! Plain-text rendering of reports for terminal use.

use std::fmt::Write;

use blockmine::{AnomalyReport, ModeComparison};

pub fn render_text(report: &AnomalyReport) -> String {
    let mut out = String::new();
    let config = &report.config;
    let _ = writeln!(out, "anomaly report (mode {})", report.mode);
    let _ = writeln!(
        out,
        "config: min_support={} min_pattern_size={} max_missing={} min_confidence={} top_n={} adjacent_only={} no_self_pairs={}",
        config.min_support,
        config.min_pattern_size,
        config.max_missing,
        config.min_confidence,
        config.top_n,
        config.adjacent_only,
        config.no_self_pairs,
    );
    let _ = writeln!(
        out,
        "corpus: {} projects, {} scripts, {} skipped",
        report.corpus.projects,
        report.corpus.scripts,
        report.corpus.skipped.len(),
    );
    for group in &report.groups {
        let _ = writeln!(
            out,
            "group {}: {} scripts, {} patterns",
            group.key, group.scripts, group.patterns
        );
    }
    let _ = writeln!(out, "violations found: {}", report.violations_found);

    if report.anomalies.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "No anomalies above confidence threshold.");
        return out;
    }
    for anomaly in &report.anomalies {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "#{} confidence {:.2} support {} same_way {}",
            anomaly.rank, anomaly.confidence, anomaly.support, anomaly.same_way_count
        );
        let dead = if anomaly.dead_code { "  [dead code]" } else { "" };
        let _ = writeln!(
            out,
            "   script: {} / {} / {}{}",
            anomaly.project, anomaly.actor, anomaly.script_index, dead
        );
        for missing in &anomaly.missing {
            let _ = writeln!(out, "   MISSING: {missing}");
        }
        for present in &anomaly.present {
            let _ = writeln!(out, "   present: {present}");
        }
    }
    out
}

pub fn render_comparison(comparison: &ModeComparison) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "=== actor-agnostic (AA) ===");
    out.push_str(&render_text(&comparison.aa));
    let _ = writeln!(out);
    let _ = writeln!(out, "=== actor-specific (AS) ===");
    out.push_str(&render_text(&comparison.actor_specific));
    let _ = writeln!(out);
    let _ = writeln!(out, "=== overlap ===");
    let _ = writeln!(
        out,
        "{} anomalies reported by both modes",
        comparison.overlap.count
    );
    for anomaly in &comparison.overlap.anomalies {
        let missing: Vec<String> = anomaly.missing.iter().map(|m| m.to_string()).collect();
        let _ = writeln!(
            out,
            "   {} / {} / {}: missing [{}]",
            anomaly.project,
            anomaly.actor,
            anomaly.script_index,
            missing.join(", ")
        );
    }
    out
}

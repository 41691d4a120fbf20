use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use blockmine::{compare_modes, detect, Detection, Error, MinSupport, MinerConfig, Mode};

mod render;

#[derive(Parser)]
#[command(
    name = "blockmine",
    version,
    about = "Finds likely bugs in corpora of Scratch 3 solutions by mining shared block-ordering patterns"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a corpus directory and report ranked anomalies
    Detect(DetectArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Pool every script of the corpus
    Aa,
    /// Mine each actor role separately
    As,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Json,
}

#[derive(Args)]
struct DetectArgs {
    /// Directory of .sb3 / project.json solutions to one assignment
    #[arg(long, value_name = "DIR")]
    input: PathBuf,

    /// Analysis scope
    #[arg(long, value_enum, default_value_t = ModeArg::Aa)]
    mode: ModeArg,

    /// Minimum supporters per pattern: a positive integer, or "auto" for
    /// a tenth of the group (at least 3)
    #[arg(long, value_name = "K", default_value = "auto")]
    min_support: MinSupport,

    /// Smallest pattern size worth mining
    #[arg(long, value_name = "N", default_value_t = 2, value_parser = at_least_one)]
    min_pattern_size: usize,

    /// Most pattern properties a script may lack and still be a near miss
    #[arg(long, value_name = "N", default_value_t = 2, value_parser = at_least_one)]
    max_missing: usize,

    /// Violations below this confidence are counted but not reported
    #[arg(long, value_name = "C", default_value_t = 0.9, value_parser = confidence)]
    min_confidence: f64,

    /// Report at most this many anomalies
    #[arg(long, value_name = "N", default_value_t = 10, value_parser = at_least_one)]
    top: usize,

    /// Report format
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,

    /// Write the report to this file instead of stdout
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,

    /// Dump every script automaton as a DOT file into this directory
    #[arg(long, value_name = "DIR")]
    emit_models: Option<PathBuf>,

    /// Dump the mined patterns as JSON into this file
    #[arg(long, value_name = "FILE")]
    emit_patterns: Option<PathBuf>,

    /// Run both modes and additionally report the anomalies they agree on
    #[arg(long, conflicts_with_all = ["emit_models", "emit_patterns"])]
    compare_modes: bool,

    /// Descend into subdirectories of the corpus
    #[arg(long)]
    recursive: bool,

    /// Use back-to-back ordering instead of eventually-follows
    #[arg(long)]
    adjacent_only: bool,

    /// Ignore (a, a) ordering pairs
    #[arg(long)]
    no_self_pairs: bool,
}

fn at_least_one(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err("must be a positive integer".to_owned()),
    }
}

fn confidence(s: &str) -> Result<f64, String> {
    let value: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err("must lie in [0, 1]".to_owned())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Detect(args) => run_detect(args),
    }
}

fn run_detect(args: DetectArgs) -> ExitCode {
    let config = MinerConfig {
        min_support: args.min_support,
        min_pattern_size: args.min_pattern_size,
        max_missing: args.max_missing,
        min_confidence: args.min_confidence,
        top_n: args.top,
        mode: match args.mode {
            ModeArg::Aa => Mode::Aa,
            ModeArg::As => Mode::As,
        },
        adjacent_only: args.adjacent_only,
        no_self_pairs: args.no_self_pairs,
    };

    let rendered = if args.compare_modes {
        compare_modes(&args.input, &config, args.recursive).map(|comparison| {
            match args.format {
                FormatArg::Json => json_line(&comparison),
                FormatArg::Text => render::render_comparison(&comparison),
            }
        })
    } else {
        detect(&args.input, &config, args.recursive).and_then(|detection| {
            emit_side_outputs(&args, &detection)?;
            Ok(match args.format {
                FormatArg::Json => json_line(&detection.report),
                FormatArg::Text => render::render_text(&detection.report),
            })
        })
    };

    let rendered = match rendered {
        Ok(rendered) => rendered,
        Err(err) => {
            eprintln!("error: {err}");
            return exit_code_for(&err);
        }
    };

    match &args.output {
        Some(path) => {
            if let Err(err) = fs::write(path, rendered) {
                eprintln!("error: cannot write {}: {err}", path.display());
                return ExitCode::from(1);
            }
        }
        None => print!("{rendered}"),
    }
    ExitCode::SUCCESS
}

fn json_line<T: serde::Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serialization is infallible");
    text.push('\n');
    text
}

fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::EmptyCorpus { .. } | Error::NoScripts => ExitCode::from(3),
        Error::UnreadableFile { .. } | Error::MalformedProject { .. } => ExitCode::from(1),
    }
}

fn emit_side_outputs(args: &DetectArgs, detection: &Detection) -> blockmine::Result<()> {
    let io_error = |path: &PathBuf, source: std::io::Error| Error::UnreadableFile {
        path: path.clone(),
        source,
    };

    if let Some(dir) = &args.emit_models {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        let mut used: BTreeMap<String, usize> = BTreeMap::new();
        for (id, model) in &detection.models {
            let base = sanitize(&format!("{}__{}__{}", id.project, id.actor, id.script_index));
            let slot = used.entry(base.clone()).or_insert(0);
            *slot += 1;
            let file = if *slot == 1 {
                format!("{base}.dot")
            } else {
                format!("{base}__{slot}.dot")
            };
            let path = dir.join(file);
            fs::write(&path, blockmine::to_dot(model, &id.to_string()))
                .map_err(|e| io_error(&path, e))?;
        }
    }

    if let Some(path) = &args.emit_patterns {
        let patterns: Vec<_> = detection
            .patterns
            .iter()
            .flat_map(|(_, patterns)| patterns)
            .collect();
        fs::write(path, json_line(&patterns)).map_err(|e| io_error(path, e))?;
    }
    Ok(())
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

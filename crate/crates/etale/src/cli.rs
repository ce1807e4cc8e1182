//! File loading, command dispatch, and report emission for batch use.
//!
//! Every artifact is a JSON file with a `format` version field; exact
//! rationals are written as strings "p/q". Reports are deterministic for a
//! fixed seed, in both text and JSON form. Exit codes: 0 success, 2
//! validation failure, 3 inconclusive analysis, 4 I/O or parse failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::cocycle::{self, TwoCocycle};
use crate::element::{self, Element};
use crate::error::{Error, Result};
use crate::groupoid::{build_model, model_to_json, BundleDesc, GroupoidModel, Principality};
use crate::repnorm;
use crate::uniqueness::{analyze, UniquenessVerdict};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_INCONCLUSIVE: u8 = 3;
pub const EXIT_IO_PARSE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "etale",
    version,
    about = "Twisted convolution algebras of discrete etale groupoids: exact \
             arithmetic, certified norm enclosures, block decompositions, and \
             one-sided C*-uniqueness certificates"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputMode {
    Text,
    Json,
}

#[derive(Args)]
struct CommonArgs {
    /// Groupoid model spec file (format model/1)
    #[arg(long)]
    model: PathBuf,
    /// Cocycle spec file (format cocycle/1); trivial when omitted
    #[arg(long)]
    cocycle: Option<PathBuf>,
    /// Report format
    #[arg(long, value_enum, default_value = "text")]
    output: OutputMode,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a model file, and optionally a cocycle and elements on it
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        /// Element files to parse and validate (repeatable)
        #[arg(long = "element")]
        elements: Vec<PathBuf>,
        /// Sampling depth for cocycle identity checks on infinite models
        #[arg(long, default_value_t = 3)]
        depth: u32,
    },
    /// Convolve two elements (pass --element twice: left, then right)
    Conv {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long = "element", required = true)]
        elements: Vec<PathBuf>,
    },
    /// Adjoint of an element under the twisted involution
    Involve {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        element: PathBuf,
    },
    /// Exact I-norm of an element, with a directed-rounding enclosure
    Norm {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        element: PathBuf,
    },
    /// Certified enclosure [compression lower bound, I-norm] of the reduced norm
    ReducedNorm {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        element: PathBuf,
        /// Fiber truncation size per sampled unit
        #[arg(long, default_value_t = 64)]
        truncation: usize,
        /// Relative tolerance of the power-iteration stopping rule
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Maximum number of sampled units
        #[arg(long, default_value_t = 8)]
        samples: usize,
        /// Period bound for unit sampling on shift models
        #[arg(long, default_value_t = 3)]
        depth: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Matrix block decomposition of a finite twisted algebra
    Decompose {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Depth-bounded topological principality certificate
    Principal {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 3)]
        depth: u32,
    },
    /// One-sided C*-uniqueness decision with a certificate chain
    Analyze {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 3)]
        depth: u32,
        /// Treat weak containment as established, with this justification
        #[arg(long, value_parser = nonempty_justification)]
        assert_weak_containment: Option<String>,
    },
}

struct Report {
    text: String,
    json: Value,
    status: u8,
}

/// An asserted certificate step records this string as its evidence, so a
/// blank one (for instance from an unset shell variable) is refused.
fn nonempty_justification(s: &str) -> std::result::Result<String, String> {
    if s.trim().is_empty() {
        Err("the justification must be a nonempty string".into())
    } else {
        Ok(s.to_string())
    }
}

pub fn run() -> ExitCode {
    let cli = Cli::parse();
    let mode = cli.command.output_mode();
    match dispatch(&cli.command) {
        Ok(report) => {
            match mode {
                OutputMode::Text => println!("{}", report.text),
                OutputMode::Json => println!("{}", report.json),
            }
            ExitCode::from(report.status)
        }
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "error": { "kind": error_kind(&e), "message": e.to_string() } })
            );
            ExitCode::from(exit_code_for(&e))
        }
    }
}

impl Command {
    fn output_mode(&self) -> OutputMode {
        match self {
            Command::Validate { common, .. }
            | Command::Conv { common, .. }
            | Command::Involve { common, .. }
            | Command::Norm { common, .. }
            | Command::ReducedNorm { common, .. }
            | Command::Decompose { common, .. }
            | Command::Principal { common, .. }
            | Command::Analyze { common, .. } => common.output,
        }
    }
}

pub fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Parse(_) | Error::MalformedSpec(_) => EXIT_IO_PARSE,
        _ => EXIT_VALIDATION,
    }
}

pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::MalformedSpec(_) => "malformed-spec",
        Error::Structure { .. } => "structure",
        Error::NotComposable { .. } => "not-composable",
        Error::CocycleViolation { .. } => "cocycle-violation",
        Error::CocycleNotNormalized { .. } => "cocycle-not-normalized",
        Error::IncompatibleVariant(_) => "incompatible-variant",
        Error::IncompatibleDenominator(_) => "incompatible-denominator",
        Error::ModelMismatch(_) => "model-mismatch",
        Error::UnknownArrow(_) => "unknown-arrow",
        Error::BundleIncompatible(_) => "bundle-incompatible",
        Error::NotInterior(_) => "not-interior",
        Error::UnsupportedModel(_) => "unsupported-model",
        Error::ConvergenceFailure { .. } => "convergence-failure",
        Error::NumericalRankAmbiguity(_) => "numerical-rank-ambiguity",
        Error::Parse(_) => "parse",
        Error::Io(_) => "io",
    }
}

fn load_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn load_model_file(path: &Path) -> Result<GroupoidModel> {
    build_model(&load_json(path)?)
}

pub fn load_cocycle_file(path: &Path, model: &GroupoidModel) -> Result<TwoCocycle> {
    cocycle::parse_cocycle(model, &load_json(path)?)
}

pub fn load_element_file(path: &Path, model: &GroupoidModel) -> Result<Element> {
    element::parse_element(model, &load_json(path)?)
}

fn load_common(common: &CommonArgs) -> Result<(GroupoidModel, TwoCocycle)> {
    let model = load_model_file(&common.model)?;
    let sigma = match &common.cocycle {
        Some(path) => load_cocycle_file(path, &model)?,
        None => TwoCocycle::Trivial,
    };
    Ok((model, sigma))
}

fn dispatch(command: &Command) -> Result<Report> {
    match command {
        Command::Validate {
            common,
            elements,
            depth,
        } => run_validate(common, elements, *depth),
        Command::Conv { common, elements } => run_conv(common, elements),
        Command::Involve { common, element } => run_involve(common, element),
        Command::Norm { common, element } => run_norm(common, element),
        Command::ReducedNorm {
            common,
            element,
            truncation,
            tol,
            samples,
            depth,
            seed,
        } => run_reduced_norm(common, element, *truncation, *tol, *samples, *depth, *seed),
        Command::Decompose { common, seed } => run_decompose(common, *seed),
        Command::Principal { common, depth } => run_principal(common, *depth),
        Command::Analyze {
            common,
            depth,
            assert_weak_containment,
        } => run_analyze(common, *depth, assert_weak_containment.as_deref()),
    }
}

fn run_validate(common: &CommonArgs, elements: &[PathBuf], depth: u32) -> Result<Report> {
    let (model, sigma) = load_common(common)?;
    let report = cocycle::validate_cocycle(&model, &sigma, depth)?;
    let mut element_summaries = Vec::new();
    let mut canonical_elements = Vec::new();
    for path in elements {
        let f = load_element_file(path, &model)?;
        element_summaries.push(json!({
            "path": path.display().to_string(),
            "terms": f.len(),
            "exact": f.is_exact(),
        }));
        canonical_elements.push(element::element_to_json(&f));
    }
    let text = format!(
        "model: {} valid\ncocycle: {} pairs, {} triples checked ({})\nelements: {} parsed",
        model.kind_name(),
        report.pairs_checked,
        report.triples_checked,
        if report.exhaustive { "exhaustive" } else { "sampled" },
        elements.len(),
    );
    let json = json!({
        "command": "validate",
        "status": "ok",
        "model-kind": model.kind_name(),
        "cocycle-check": {
            "pairs-checked": report.pairs_checked,
            "triples-checked": report.triples_checked,
            "exhaustive": report.exhaustive,
        },
        "elements": element_summaries,
        "canonical": {
            "model": model_to_json(&model),
            "cocycle": cocycle::cocycle_to_json(&model, &sigma),
            "elements": canonical_elements,
        },
    });
    Ok(Report {
        text,
        json,
        status: EXIT_OK,
    })
}

fn element_text(f: &Element) -> String {
    let v = element::element_to_json(f);
    let terms = v["terms"].as_array().expect("canonical elements have terms");
    if terms.is_empty() {
        return "0 terms".into();
    }
    let lines: Vec<String> = terms.iter().map(|t| format!("  {t}")).collect();
    format!("{} terms:\n{}", terms.len(), lines.join("\n"))
}

fn run_conv(common: &CommonArgs, elements: &[PathBuf]) -> Result<Report> {
    if elements.len() != 2 {
        return Err(Error::Parse(format!(
            "conv needs exactly two --element files, got {}",
            elements.len()
        )));
    }
    let (model, sigma) = load_common(common)?;
    let f = load_element_file(&elements[0], &model)?;
    let g = load_element_file(&elements[1], &model)?;
    let h = element::convolve(&sigma, &f, &g)?;
    Ok(Report {
        text: format!("convolution: {}", element_text(&h)),
        json: json!({ "command": "conv", "element": element::element_to_json(&h) }),
        status: EXIT_OK,
    })
}

fn run_involve(common: &CommonArgs, path: &Path) -> Result<Report> {
    let (model, sigma) = load_common(common)?;
    let f = load_element_file(path, &model)?;
    let h = element::involve(&sigma, &f)?;
    Ok(Report {
        text: format!("involution: {}", element_text(&h)),
        json: json!({ "command": "involve", "element": element::element_to_json(&h) }),
        status: EXIT_OK,
    })
}

fn run_norm(common: &CommonArgs, path: &Path) -> Result<Report> {
    let (model, _sigma) = load_common(common)?;
    let f = load_element_file(path, &model)?;
    let value = f.i_norm();
    let enclosure = f.i_norm_interval();
    Ok(Report {
        text: format!(
            "i-norm: {value}\nenclosure: [{}, {}]",
            enclosure.lo, enclosure.hi
        ),
        json: json!({
            "command": "norm",
            "i-norm": value,
            "enclosure": { "lo": enclosure.lo, "hi": enclosure.hi },
        }),
        status: EXIT_OK,
    })
}

fn run_reduced_norm(
    common: &CommonArgs,
    path: &Path,
    truncation: usize,
    tol: f64,
    samples: usize,
    depth: u32,
    seed: u64,
) -> Result<Report> {
    let (model, sigma) = load_common(common)?;
    let f = load_element_file(path, &model)?;
    let mut units = model
        .units()
        .unwrap_or_else(|| model.sample_units(depth, samples));
    units.truncate(samples.max(1));
    let est = repnorm::reduced_norm_estimate(&sigma, &f, &units, truncation, tol, seed)?;
    let text = format!(
        "reduced norm in [{}, {}]\ntruncation: {} ({})\nunits: {}\ntol: {}, seed: {}",
        est.lower,
        est.upper,
        est.truncation,
        if est.any_truncated {
            "fibers truncated"
        } else {
            "fibers complete"
        },
        est.sampled_units.join(", "),
        est.tol,
        seed,
    );
    let json = json!({
        "command": "reduced-norm",
        "lower": est.lower,
        "upper": est.upper,
        "truncation": est.truncation,
        "any-truncated": est.any_truncated,
        "sampled-units": est.sampled_units,
        "tol": est.tol,
        "seed": seed,
    });
    Ok(Report {
        text,
        json,
        status: EXIT_OK,
    })
}

fn run_decompose(common: &CommonArgs, seed: u64) -> Result<Report> {
    let (model, sigma) = load_common(common)?;
    let blocks = repnorm::decompose_finite_cstar(&model, &sigma, seed)?;
    let rendered: Vec<String> = blocks.blocks.iter().map(|d| format!("{d}x{d}")).collect();
    let gap_text = match blocks.rank_gap {
        Some(g) => format!("{g}"),
        None => "none (full nullspace)".into(),
    };
    Ok(Report {
        text: format!(
            "blocks: {}\ncenter dimension: {}\nalgebra dimension: {}\nrank threshold: {}\nrank gap: {}\nseed: {}",
            rendered.join(" + "),
            blocks.center_dim,
            blocks.dimension,
            blocks.rank_threshold,
            gap_text,
            seed,
        ),
        json: json!({
            "command": "decompose",
            "blocks": blocks.blocks,
            "center-dimension": blocks.center_dim,
            "algebra-dimension": blocks.dimension,
            "rank-threshold": blocks.rank_threshold,
            "rank-gap": blocks.rank_gap,
            "seed": seed,
        }),
        status: EXIT_OK,
    })
}

fn bundle_desc_label(model: &GroupoidModel, b: &BundleDesc) -> String {
    match b {
        BundleDesc::Single(a) => model.arrow_label(a),
        BundleDesc::Window(bundle) => {
            let pins: Vec<String> = bundle
                .window
                .iter()
                .map(|(i, s)| format!("{i}:{s}"))
                .collect();
            format!("bundle(window {{{}}}, shift {})", pins.join(", "), bundle.shift)
        }
    }
}

fn run_principal(common: &CommonArgs, depth: u32) -> Result<Report> {
    let (model, _sigma) = load_common(common)?;
    let (text, json, status) = match model.is_topologically_principal(depth)? {
        Principality::Yes { depth } => (
            format!("topologically principal: yes (depth {depth})"),
            json!({ "command": "principal", "status": "yes", "depth": depth }),
            EXIT_OK,
        ),
        Principality::No { witness } => {
            let label = bundle_desc_label(&model, &witness);
            (
                format!("topologically principal: no\nwitness: {label}"),
                json!({ "command": "principal", "status": "no", "witness": label }),
                EXIT_OK,
            )
        }
        Principality::Unknown { depth, reason } => (
            format!("topologically principal: unknown at depth {depth}\nreason: {reason}"),
            json!({
                "command": "principal",
                "status": "unknown",
                "depth": depth,
                "reason": reason,
            }),
            EXIT_INCONCLUSIVE,
        ),
    };
    Ok(Report { text, json, status })
}

fn chain_json(verdict: &UniquenessVerdict) -> Value {
    let steps: Vec<Value> = verdict
        .chain()
        .iter()
        .map(|s| {
            json!({
                "name": s.name,
                "evidence": s.evidence,
                "provenance": s.provenance.name(),
            })
        })
        .collect();
    Value::Array(steps)
}

fn chain_text(verdict: &UniquenessVerdict) -> String {
    verdict
        .chain()
        .iter()
        .map(|s| format!("  {} [{}]: {}", s.name, s.provenance.name(), s.evidence))
        .collect::<Vec<_>>()
        .join("\n")
}

fn run_analyze(common: &CommonArgs, depth: u32, assert_wc: Option<&str>) -> Result<Report> {
    let (model, sigma) = load_common(common)?;
    let verdict = analyze(&model, &sigma, depth, assert_wc);
    let report = match &verdict {
        UniquenessVerdict::CStarUnique { .. } => Report {
            text: format!("verdict: C*-unique\n{}", chain_text(&verdict)),
            json: json!({
                "command": "analyze",
                "verdict": "c-star-unique",
                "chain": chain_json(&verdict),
            }),
            status: EXIT_OK,
        },
        UniquenessVerdict::Inconclusive { reason, .. } => Report {
            text: format!(
                "verdict: inconclusive\nreason: {reason}\n{}",
                chain_text(&verdict)
            ),
            json: json!({
                "command": "analyze",
                "verdict": "inconclusive",
                "reason": reason,
                "chain": chain_json(&verdict),
            }),
            status: EXIT_INCONCLUSIVE,
        },
    };
    Ok(report)
}

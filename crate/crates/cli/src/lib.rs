//! Command-line front end: loads model, translation, and diagram documents,
//! dispatches the library operations, and runs the packaged demo scenarios.
//!
//! All commands are pure functions of their inputs; reports are
//! deterministic and exit codes depend only on the report: 0 for
//! success/holds, 1 for violation/fails, 2 for usage or model errors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use causal_core::abstraction::{self, Translation};
use causal_core::format::{self, Document};
use causal_core::graph::{self, ClassModel, ClassRole, Diagram, SchemaCaps};
use causal_core::lang::{self, BaseFormula, Parsed, Quantifier};
use causal_core::model::{OutcomeKey, Rcm, Scm, Valuation, Value};
use causal_core::representability::{self, Principle, SearchConfig};
use causal_core::Rational;

/// Packaged scenario files; these are ordinary documents and live in the
/// repository under `crates/cli/data/`.
pub mod data {
    pub const FIG1_MODEL: &str = include_str!("../data/fig1.model.json");
    pub const EX1_HIGH: &str = include_str!("../data/ex1_high.model.json");
    pub const EX1_LOW: &str = include_str!("../data/ex1_low.model.json");
    pub const EX1_TRANSLATION: &str = include_str!("../data/ex1.translation.json");
    pub const FIG2A_DIAGRAM: &str = include_str!("../data/fig2a.diagram.json");
    pub const FIG2B_DIAGRAM: &str = include_str!("../data/fig2b.diagram.json");
    pub const VERMA_SCM: &str = include_str!("../data/verma.scm.json");
    pub const ITT1_TERM: &str = include_str!("../data/itt1.term");
    pub const ITT2_TERM: &str = include_str!("../data/itt2.term");
    pub const LATE_NUM_TERM: &str = include_str!("../data/late_num.term");
    pub const LATE_DEN_TERM: &str = include_str!("../data/late_den.term");
    pub const EQ4_BASE: &str = include_str!("../data/eq4_monotonicity.base");
    pub const EQ6_BASE: &str = include_str!("../data/eq6_exclusion.base");
    pub const EQ7_BASE: &str = include_str!("../data/eq7_decomposition.base");
}

#[derive(Parser)]
#[command(
    name = "causal",
    version,
    about = "Build, check, and translate finite causal models with exact arithmetic"
)]
struct Cli {
    /// Override a model-file parameter, e.g. --param eps=1/8 (repeatable).
    #[arg(long = "param", global = true, value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value = "text")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Structured,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PrincipleArg {
    Effectiveness,
    Composition,
    Reversibility,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemaKind {
    Er,
    Cfsep,
    Swsep,
}

#[derive(Subcommand)]
enum Command {
    /// Structural validation plus every effectiveness violation.
    Validate { model: PathBuf },
    /// Print the exact counterfactual distribution of a model.
    Cfdist {
        model: PathBuf,
        /// Comma-separated outcome keys, e.g. "Y[X=1],Z" (structural models
        /// require this; population models default to their declared keys).
        #[arg(long)]
        outcomes: Option<String>,
    },
    /// Evaluate a formula, term, or event probability against a model.
    /// `E(Y[Z=1] - Y[Z=0])` and `E(expr | event)` expand to signed sums of
    /// probabilities over integer domains.
    Eval {
        model: PathBuf,
        /// Inline text or @path to a file.
        formula: String,
    },
    /// Enumerate violations of a potential-outcome principle.
    Check {
        model: PathBuf,
        #[arg(long)]
        principle: PrincipleArg,
        #[arg(long)]
        include_zero_mass: bool,
    },
    /// Decide representability by full-extension search; print the witness.
    Representable {
        model: PathBuf,
        #[arg(long)]
        max_variables: Option<usize>,
        #[arg(long)]
        node_budget: Option<u64>,
    },
    /// Check that the first model abstracts the second under a translation.
    Abstraction { high: PathBuf, low: PathBuf, translation: PathBuf },
    /// Lower a model to a representable one it abstracts.
    Lower { model: PathBuf },
    /// Build the single-world intervention graph of a directed diagram.
    Swig {
        diagram: PathBuf,
        #[arg(long = "do", value_name = "ASSIGNMENTS")]
        intervention: String,
    },
    /// d-separation in a mixed diagram.
    Dsep {
        diagram: PathBuf,
        #[arg(long, value_delimiter = ',')]
        x: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        y: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "")]
        z: Vec<String>,
    },
    /// Instantiate a graphical constraint schema; optionally check a model.
    Schema {
        diagram: PathBuf,
        #[arg(long)]
        kind: SchemaKind,
        /// Intervention for the single-world schema, e.g. "W=1".
        #[arg(long = "do", value_name = "ASSIGNMENTS")]
        intervention: Option<String>,
        /// Model whose distribution every instance is checked against.
        #[arg(long)]
        check: Option<PathBuf>,
        /// Model supplying variable domains when --check is absent
        /// (defaults to binary domains).
        #[arg(long)]
        domains: Option<PathBuf>,
        #[arg(long)]
        er_extra: Option<usize>,
        #[arg(long)]
        side_max: Option<usize>,
        #[arg(long)]
        pair_total: Option<usize>,
        #[arg(long)]
        cond_max: Option<usize>,
    },
    /// Run a packaged scenario.
    Demo {
        #[command(subcommand)]
        which: DemoCommand,
    },
}

#[derive(Subcommand)]
enum DemoCommand {
    /// Instrumental-variable effects on the packaged model family.
    Fig1 {
        #[arg(long, default_value = "0")]
        eps: String,
    },
    /// The treatment-effect identity and the assumption that carries it.
    Late,
    /// The observational functional equality implied by the packaged
    /// four-variable diagram.
    Verma,
}

/// A finished command: exit code plus captured output streams.
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

fn ok(stdout: String) -> Outcome {
    Outcome { code: 0, stdout, stderr: String::new() }
}

fn fail(stdout: String) -> Outcome {
    Outcome { code: 1, stdout, stderr: String::new() }
}

fn usage_error(message: String) -> Outcome {
    Outcome { code: 2, stdout: String::new(), stderr: message }
}

/// Runs the CLI on the given arguments (not including the binary name).
pub fn run(args: &[String]) -> Outcome {
    let mut argv = vec!["causal".to_string()];
    argv.extend(args.iter().cloned());
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders --help/--version as "errors" with success status.
            let rendered = e.render().to_string();
            return if e.use_stderr() { usage_error(rendered) } else { ok(rendered) };
        }
    };

    let params = match parse_params(&cli.params) {
        Ok(p) => p,
        Err(message) => return usage_error(message),
    };

    match dispatch(&cli.command, &params, cli.format) {
        Ok(outcome) => outcome,
        Err(message) => usage_error(message),
    }
}

fn parse_params(raw: &[String]) -> Result<BTreeMap<String, Rational>, String> {
    let mut out = BTreeMap::new();
    for item in raw {
        let (name, value) = item
            .split_once('=')
            .ok_or_else(|| format!("bad --param `{item}`: expected NAME=VALUE"))?;
        let value = Rational::parse(value).map_err(|e| format!("bad --param `{item}`: {e}"))?;
        out.insert(name.trim().to_string(), value);
    }
    Ok(out)
}

fn load(path: &Path, params: &BTreeMap<String, Rational>) -> Result<Document, String> {
    format::load_document(path, params).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_rcm(path: &Path, params: &BTreeMap<String, Rational>) -> Result<Rcm, String> {
    match load(path, params)? {
        Document::Rcm(r) => Ok(r),
        _ => Err(format!("{}: expected a population (rcm) model", path.display())),
    }
}

fn load_diagram(path: &Path, params: &BTreeMap<String, Rational>) -> Result<Diagram, String> {
    match load(path, params)? {
        Document::Diagram(d) => Ok(d),
        _ => Err(format!("{}: expected a diagram document", path.display())),
    }
}

fn load_translation(
    path: &Path,
    params: &BTreeMap<String, Rational>,
) -> Result<Translation, String> {
    match load(path, params)? {
        Document::Translation(t) => Ok(t),
        _ => Err(format!("{}: expected a translation document", path.display())),
    }
}

fn parse_assignments(text: &str) -> Result<Valuation, String> {
    let mut v = Valuation::empty();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (name, value) = part
            .split_once('=')
            .ok_or_else(|| format!("bad assignment `{part}`: expected NAME=VALUE"))?;
        v.insert(name.trim(), parse_value(value.trim()));
    }
    Ok(v)
}

fn parse_value(text: &str) -> Value {
    if text == causal_core::model::STAR_TOKEN {
        return Value::star();
    }
    match text.parse::<i64>() {
        Ok(n) => Value::Int(n),
        Err(_) => Value::Sym(text.to_string()),
    }
}

fn env_usize(name: &str, default: usize) -> usize {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn env_u64(name: &str, default: u64) -> u64 {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

/// Search caps, overridable through the environment.
fn search_config() -> SearchConfig {
    let default = SearchConfig::default();
    SearchConfig {
        max_variables: env_usize("CAUSAL_MAX_VARIABLES", default.max_variables),
        node_budget: env_u64("CAUSAL_NODE_BUDGET", default.node_budget),
    }
}

/// Schema caps, overridable through the environment.
fn schema_caps() -> SchemaCaps {
    let default = SchemaCaps::default();
    SchemaCaps {
        er_extra: env_usize("CAUSAL_ER_EXTRA", default.er_extra),
        side_max: env_usize("CAUSAL_SIDE_MAX", default.side_max),
        pair_total: env_usize("CAUSAL_PAIR_TOTAL", default.pair_total),
        cond_max: env_usize("CAUSAL_COND_MAX", default.cond_max),
        swig_intervention_max: env_usize(
            "CAUSAL_SWIG_INTERVENTION_MAX",
            default.swig_intervention_max,
        ),
        max_instances: env_usize("CAUSAL_MAX_INSTANCES", default.max_instances),
    }
}

fn dispatch(
    command: &Command,
    params: &BTreeMap<String, Rational>,
    format: Format,
) -> Result<Outcome, String> {
    match command {
        Command::Validate { model } => {
            let report = match load(model, params)? {
                Document::Rcm(r) => r.validate(),
                Document::Scm(m) => m.validate(),
                Document::Translation(t) => t.validate(),
                Document::Diagram(_) => Default::default(),
            };
            let mut out = String::new();
            if format == Format::Structured {
                out.push_str(&serde_json::to_string_pretty(&report).unwrap());
                out.push('\n');
            } else {
                for p in &report.problems {
                    writeln!(out, "problem: {p}").unwrap();
                }
                for v in &report.effectiveness_violations {
                    writeln!(
                        out,
                        "effectiveness violation: {}({}) = {} but the intervention forces {}",
                        v.key, v.unit, v.actual, v.forced
                    )
                    .unwrap();
                }
                if report.is_clean() {
                    out.push_str("valid\n");
                }
            }
            Ok(if report.is_clean() { ok(out) } else { fail(out) })
        }

        Command::Cfdist { model, outcomes } => {
            let dist = match load(model, params)? {
                Document::Rcm(r) => match outcomes {
                    None => r.cf_distribution(),
                    Some(keys) => {
                        let keys = parse_keys(keys)?;
                        r.cf_distribution().marginalize(&keys).map_err(|e| e.to_string())?
                    }
                },
                Document::Scm(m) => {
                    let keys =
                        outcomes.as_ref().ok_or("structural models need --outcomes".to_string())?;
                    m.cf_distribution(&parse_keys(keys)?).map_err(|e| e.to_string())?
                }
                _ => return Err("cfdist expects a model document".to_string()),
            };
            let mut out = String::new();
            if format == Format::Structured {
                let rows: Vec<serde_json::Value> = dist
                    .support()
                    .map(|(point, mass)| {
                        let entries: BTreeMap<String, Value> =
                            point.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
                        serde_json::json!({"point": entries, "mass": mass.to_string()})
                    })
                    .collect();
                out.push_str(&serde_json::to_string_pretty(&rows).unwrap());
                out.push('\n');
            } else {
                for (point, mass) in dist.support() {
                    let entries: Vec<String> =
                        point.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    writeln!(out, "{}  {}", mass, entries.join(" ")).unwrap();
                }
                writeln!(out, "total {}", dist.total_mass()).unwrap();
            }
            Ok(ok(out))
        }

        Command::Eval { model, formula } => {
            let text = if let Some(path) = formula.strip_prefix('@') {
                std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?
            } else {
                formula.clone()
            };
            let doc = load(model, params)?;
            eval_command(&doc, text.trim(), format)
        }

        Command::Check { model, principle, include_zero_mass } => {
            let r = load_rcm(model, params)?;
            let principle = match principle {
                PrincipleArg::Effectiveness => Principle::Effectiveness,
                PrincipleArg::Composition => Principle::Composition,
                PrincipleArg::Reversibility => Principle::Reversibility,
            };
            let violations = representability::check_principle(&r, principle, *include_zero_mass);
            let mut out = String::new();
            if format == Format::Structured {
                out.push_str(
                    &serde_json::to_string_pretty(&serde_json::json!({"violations": violations}))
                        .unwrap(),
                );
                out.push('\n');
            } else {
                for v in &violations {
                    let premises: Vec<String> =
                        v.premises.iter().map(|(k, val)| format!("{k}={val}")).collect();
                    writeln!(
                        out,
                        "violation at unit {}: {} but {} = {} (expected {})",
                        v.unit,
                        premises.join(" & "),
                        v.conclusion_key,
                        v.actual,
                        v.expected
                    )
                    .unwrap();
                }
                writeln!(out, "{} violation(s)", violations.len()).unwrap();
            }
            Ok(if violations.is_empty() { ok(out) } else { fail(out) })
        }

        Command::Representable { model, max_variables, node_budget } => {
            let r = load_rcm(model, params)?;
            let mut config = search_config();
            if let Some(v) = max_variables {
                config.max_variables = *v;
            }
            if let Some(b) = node_budget {
                config.node_budget = *b;
            }
            let extension =
                representability::find_full_extension(&r, &config).map_err(|e| e.to_string())?;
            let mut out = String::new();
            if extension.found {
                let witness =
                    representability::synthesize_scm(extension.full_rcm.as_ref().unwrap())
                        .map_err(|e| e.to_string())?;
                if format == Format::Structured {
                    out.push_str(
                        &serde_json::to_string_pretty(&serde_json::json!({
                            "representable": true,
                            "witness": format::document_to_json(&Document::Scm(witness)),
                        }))
                        .unwrap(),
                    );
                    out.push('\n');
                } else {
                    writeln!(out, "representable: true").unwrap();
                    writeln!(
                        out,
                        "search: {} nodes, {} prunes, {} forced",
                        extension.stats.nodes, extension.stats.prunes, extension.stats.forced
                    )
                    .unwrap();
                    writeln!(
                        out,
                        "witness: structural model over {} units",
                        witness.exo_mass.len()
                    )
                    .unwrap();
                }
                Ok(ok(out))
            } else {
                let obstruction = extension.obstruction.as_ref().unwrap();
                if format == Format::Structured {
                    out.push_str(
                        &serde_json::to_string_pretty(&serde_json::json!({
                            "representable": false,
                            "obstruction": obstruction,
                        }))
                        .unwrap(),
                    );
                    out.push('\n');
                } else {
                    writeln!(out, "representable: false").unwrap();
                    writeln!(
                        out,
                        "obstruction: composition/reversibility closure fails at unit {}",
                        obstruction.unit
                    )
                    .unwrap();
                }
                Ok(fail(out))
            }
        }

        Command::Abstraction { high, low, translation } => {
            let high = load_rcm(high, params)?;
            let low = load_rcm(low, params)?;
            let t = load_translation(translation, params)?;
            let holds = abstraction::is_abstraction(&high, &low, &t).map_err(|e| e.to_string())?;
            let mut out = String::new();
            writeln!(out, "abstraction holds: {holds}").unwrap();
            Ok(if holds { ok(out) } else { fail(out) })
        }

        Command::Lower { model } => {
            let r = load_rcm(model, params)?;
            let lowering = abstraction::lower(&r).map_err(|e| e.to_string())?;
            let holds = abstraction::is_abstraction(&r, &lowering.low, &lowering.translation)
                .map_err(|e| e.to_string())?;
            let witnessed = representability::represents(&lowering.witness, &lowering.low)
                .map_err(|e| e.to_string())?;
            let mut out = String::new();
            if format == Format::Structured {
                out.push_str(
                    &serde_json::to_string_pretty(&serde_json::json!({
                        "low": format::document_to_json(&Document::Rcm(lowering.low.clone())),
                        "translation": format::document_to_json(&Document::Translation(
                            lowering.translation.clone()
                        )),
                        "witness": format::document_to_json(&Document::Scm(
                            lowering.witness.clone()
                        )),
                        "abstraction_holds": holds,
                        "witness_represents_low": witnessed,
                    }))
                    .unwrap(),
                );
                out.push('\n');
            } else {
                writeln!(
                    out,
                    "lowered to {} variables, {} outcome keys",
                    lowering.low.variables.len(),
                    lowering.low.outcomes.len()
                )
                .unwrap();
                writeln!(out, "abstraction holds: {holds}").unwrap();
                writeln!(out, "witness represents the lowered model: {witnessed}").unwrap();
            }
            Ok(if holds && witnessed { ok(out) } else { fail(out) })
        }

        Command::Swig { diagram, intervention } => {
            let d = load_diagram(diagram, params)?;
            let x = parse_assignments(intervention)?;
            let swig = graph::build_swig(&d, &x).map_err(|e| e.to_string())?;
            Ok(ok(swig.render()))
        }

        Command::Dsep { diagram, x, y, z } => {
            let d = load_diagram(diagram, params)?;
            let xs: Vec<&str> = x.iter().map(|s| s.as_str()).filter(|s| !s.is_empty()).collect();
            let ys: Vec<&str> = y.iter().map(|s| s.as_str()).filter(|s| !s.is_empty()).collect();
            let zs: Vec<&str> = z.iter().map(|s| s.as_str()).filter(|s| !s.is_empty()).collect();
            let separated = d.mixed_d_separated(&xs, &ys, &zs).map_err(|e| e.to_string())?;
            let out = format!("d-separated: {separated}\n");
            Ok(if separated { ok(out) } else { fail(out) })
        }

        Command::Schema {
            diagram,
            kind,
            intervention,
            check,
            domains,
            er_extra,
            side_max,
            pair_total,
            cond_max,
        } => {
            let d = load_diagram(diagram, params)?;
            let mut caps = schema_caps();
            if let Some(v) = er_extra {
                caps.er_extra = *v;
            }
            if let Some(v) = side_max {
                caps.side_max = *v;
            }
            if let Some(v) = pair_total {
                caps.pair_total = *v;
            }
            if let Some(v) = cond_max {
                caps.cond_max = *v;
            }

            let check_doc = check.as_ref().map(|p| load(p, params)).transpose()?;
            let domain_doc = domains.as_ref().map(|p| load(p, params)).transpose()?;
            let domain_vars = match (&check_doc, &domain_doc) {
                (_, Some(Document::Rcm(r))) => r.variables.clone(),
                (_, Some(Document::Scm(m))) => m.endogenous.clone(),
                (Some(Document::Rcm(r)), _) => r.variables.clone(),
                (Some(Document::Scm(m)), _) => m.endogenous.clone(),
                _ => causal_core::model::VarSet::new(
                    d.nodes.iter().map(|n| causal_core::model::Variable::binary(n.clone())),
                ),
            };

            let mut out = String::new();
            let mut instances: Vec<causal_core::lang::LFormula> = Vec::new();
            match kind {
                SchemaKind::Er => {
                    let er = graph::generate_er_instances(&d, &domain_vars, &caps)
                        .map_err(|e| e.to_string())?;
                    for inst in &er {
                        writeln!(out, "{inst}").unwrap();
                    }
                    instances.extend(er.iter().map(|i| lang::encode(Quantifier::ForAll, i)));
                }
                SchemaKind::Cfsep => {
                    let cf = graph::generate_cfsep_instances(&d, &domain_vars, &caps)
                        .map_err(|e| e.to_string())?;
                    for inst in &cf {
                        writeln!(out, "{inst}").unwrap();
                    }
                    instances.extend(cf);
                }
                SchemaKind::Swsep => {
                    let x = match intervention {
                        Some(text) => parse_assignments(text)?,
                        None => Valuation::empty(),
                    };
                    let sw = graph::generate_swsep_instances(&d, &x, &domain_vars, &caps)
                        .map_err(|e| e.to_string())?;
                    for inst in &sw {
                        writeln!(out, "{inst}").unwrap();
                    }
                    instances.extend(sw);
                }
            }
            writeln!(out, "{} instance(s) within caps", instances.len()).unwrap();

            if let Some(doc) = &check_doc {
                let mut keys: BTreeSet<OutcomeKey> = BTreeSet::new();
                for inst in &instances {
                    keys.extend(inst.keys());
                }
                let dist = match doc {
                    Document::Rcm(r) => {
                        r.cf_distribution().marginalize(&keys).map_err(|e| e.to_string())?
                    }
                    Document::Scm(m) => m.cf_distribution(&keys).map_err(|e| e.to_string())?,
                    _ => return Err("--check expects a model document".to_string()),
                };
                for inst in &instances {
                    if !lang::eval_formula(&dist, inst).map_err(|e| e.to_string())? {
                        writeln!(out, "violated: {inst}").unwrap();
                        return Ok(fail(out));
                    }
                }
                writeln!(out, "all instances hold").unwrap();
            }
            Ok(ok(out))
        }

        Command::Demo { which } => match which {
            DemoCommand::Fig1 { eps } => demo_fig1(eps),
            DemoCommand::Late => demo_late(),
            DemoCommand::Verma => demo_verma(),
        },
    }
}

fn parse_keys(text: &str) -> Result<BTreeSet<OutcomeKey>, String> {
    let mut keys = BTreeSet::new();
    for part in split_top_level_commas(text) {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        // Reuse the atom grammar: parse "<key>=0" and keep the key.
        let probe = format!("{part}=0");
        match lang::parse_base(&probe) {
            Ok(BaseFormula::Atom { key, .. }) => {
                keys.insert(key);
            }
            _ => return Err(format!("bad outcome key `{part}`")),
        }
    }
    Ok(keys)
}

/// Splits on commas that are not inside brackets, so "Y[X=1,Z=0],W" yields
/// two keys.
fn split_top_level_commas(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut current = String::new();
    for c in text.chars() {
        match c {
            '[' => {
                depth += 1;
                current.push(c);
            }
            ']' => {
                depth = depth.saturating_sub(1);
                current.push(c);
            }
            ',' if depth == 0 => {
                out.push(std::mem::take(&mut current));
            }
            _ => current.push(c),
        }
    }
    out.push(current);
    out
}

fn distribution_for(
    doc: &Document,
    keys: &BTreeSet<OutcomeKey>,
) -> Result<causal_core::CfDistribution, String> {
    match doc {
        Document::Rcm(r) => r.cf_distribution().marginalize(keys).map_err(|e| e.to_string()),
        Document::Scm(m) => m.cf_distribution(keys).map_err(|e| e.to_string()),
        _ => Err("expected a model document".to_string()),
    }
}

fn eval_command(doc: &Document, text: &str, format: Format) -> Result<Outcome, String> {
    if text.starts_with("E(") && text.ends_with(')') {
        return eval_expectation(doc, text);
    }
    let parsed = lang::parse(text).map_err(|e| e.to_string())?;
    let mut out = String::new();
    match parsed {
        Parsed::Formula(f) => {
            let dist = distribution_for(doc, &f.keys())?;
            let holds = lang::eval_formula(&dist, &f).map_err(|e| e.to_string())?;
            if format == Format::Structured {
                writeln!(out, "{}", serde_json::json!({"holds": holds})).unwrap();
            } else {
                writeln!(out, "{holds}").unwrap();
            }
            Ok(if holds { ok(out) } else { fail(out) })
        }
        Parsed::Term(t) => {
            let dist = distribution_for(doc, &t.keys())?;
            let value = lang::eval_term(&dist, &t).map_err(|e| e.to_string())?;
            if format == Format::Structured {
                writeln!(out, "{}", serde_json::json!({"value": value.to_string()})).unwrap();
            } else {
                writeln!(out, "{value}").unwrap();
            }
            Ok(ok(out))
        }
        Parsed::Base(b) => {
            let dist = distribution_for(doc, &b.keys())?;
            let value = lang::query_probability(&dist, &b).map_err(|e| e.to_string())?;
            if format == Format::Structured {
                writeln!(out, "{}", serde_json::json!({"probability": value.to_string()})).unwrap();
            } else {
                writeln!(out, "{value}").unwrap();
            }
            Ok(ok(out))
        }
    }
}

/// Expectation sugar: `E(K1 - K2 + K3 | event)` over integer-valued outcome
/// keys expands to signed sums of probabilities; the optional condition
/// divides by the event probability at the value level.
fn eval_expectation(doc: &Document, text: &str) -> Result<Outcome, String> {
    let inner = &text[2..text.len() - 1];
    let (expr, given) = match inner.find('|') {
        Some(i) => (&inner[..i], Some(inner[i + 1..].trim())),
        None => (inner, None),
    };

    // Signed key list.
    let mut terms: Vec<(i64, OutcomeKey)> = Vec::new();
    let mut sign = 1i64;
    let mut rest = expr.trim();
    let mut first = true;
    while !rest.is_empty() {
        if !first {
            if let Some(r) = rest.strip_prefix('+') {
                sign = 1;
                rest = r.trim_start();
            } else if let Some(r) = rest.strip_prefix('-') {
                sign = -1;
                rest = r.trim_start();
            } else {
                return Err(format!("bad expectation expression near `{rest}`"));
            }
        } else if let Some(r) = rest.strip_prefix('-') {
            sign = -1;
            rest = r.trim_start();
        }
        first = false;
        let end = rest.find(['+', '-']).unwrap_or(rest.len());
        let atom = rest[..end].trim();
        rest = rest[end..].trim_start();
        let probe = format!("{atom}=0");
        match lang::parse_base(&probe) {
            Ok(BaseFormula::Atom { key, .. }) => terms.push((sign, key)),
            _ => return Err(format!("bad outcome key `{atom}` in expectation")),
        }
    }
    if terms.is_empty() {
        return Err("empty expectation".to_string());
    }

    let condition = given.map(lang::parse_base).transpose().map_err(|e| e.to_string())?;

    let variables = match doc {
        Document::Rcm(r) => r.variables.clone(),
        Document::Scm(m) => m.endogenous.clone(),
        _ => return Err("expected a model document".to_string()),
    };
    let mut keys: BTreeSet<OutcomeKey> = terms.iter().map(|(_, k)| k.clone()).collect();
    if let Some(c) = &condition {
        keys.extend(c.keys());
    }
    let dist = distribution_for(doc, &keys)?;

    let mut total = Rational::zero();
    for (sign, key) in &terms {
        let domain = variables
            .domain(&key.outcome)
            .ok_or_else(|| format!("unknown variable {}", key.outcome))?;
        for value in domain {
            let Value::Int(n) = value else {
                return Err(format!(
                    "expectation requires integer domains, {} has {value}",
                    key.outcome
                ));
            };
            if *n == 0 {
                continue;
            }
            let atom = BaseFormula::Atom { key: key.clone(), value: value.clone() };
            let event = match &condition {
                Some(c) => atom.and(c.clone()),
                None => atom,
            };
            let p = lang::query_probability(&dist, &event).map_err(|e| e.to_string())?;
            total += &(&Rational::from_int(sign * n) * &p);
        }
    }
    if let Some(c) = &condition {
        let p_cond = lang::query_probability(&dist, c).map_err(|e| e.to_string())?;
        if p_cond.is_zero() {
            return Err("conditioning event has zero probability".to_string());
        }
        total = total.div_exact(&p_cond);
    }
    Ok(ok(format!("{total}\n")))
}

// ---------------------------------------------------------------------------
// Demos
// ---------------------------------------------------------------------------

fn load_embedded_rcm(text: &str, params: &BTreeMap<String, Rational>) -> Rcm {
    match format::load_document_str(text, params).expect("packaged document") {
        Document::Rcm(r) => r,
        _ => unreachable!("packaged model is a population model"),
    }
}

fn load_embedded_scm(text: &str) -> Scm {
    match format::load_document_str(text, &BTreeMap::new()).expect("packaged document") {
        Document::Scm(m) => m,
        _ => unreachable!("packaged model is structural"),
    }
}

fn load_embedded_diagram(text: &str) -> Diagram {
    match format::load_document_str(text, &BTreeMap::new()).expect("packaged document") {
        Document::Diagram(d) => d,
        _ => unreachable!("packaged document is a diagram"),
    }
}

fn fig1_quantities(r: &Rcm) -> (Rational, Rational, Rational, Rational) {
    let dist = r.cf_distribution();
    let itt1 = lang::eval_term(&dist, &lang::parse_term(data::ITT1_TERM).unwrap()).unwrap();
    let itt2 = lang::eval_term(&dist, &lang::parse_term(data::ITT2_TERM).unwrap()).unwrap();
    let num = lang::eval_term(&dist, &lang::parse_term(data::LATE_NUM_TERM).unwrap()).unwrap();
    let den = lang::eval_term(&dist, &lang::parse_term(data::LATE_DEN_TERM).unwrap()).unwrap();
    let late = num.div_exact(&den);
    (itt1, itt2, late, den)
}

fn late_identity_formula() -> causal_core::lang::LFormula {
    let text = format!(
        "({}) / ({}) = ({}) / ({})",
        data::LATE_NUM_TERM.trim().replace('\n', " "),
        data::LATE_DEN_TERM.trim(),
        data::ITT1_TERM.trim().replace('\n', " "),
        data::ITT2_TERM.trim()
    );
    lang::parse_formula(&text).expect("packaged identity formula")
}

fn demo_fig1(eps: &str) -> Result<Outcome, String> {
    let eps = Rational::parse(eps).map_err(|e| e.to_string())?;
    let params: BTreeMap<String, Rational> = [("eps".to_string(), eps.clone())].into();
    let r = load_embedded_rcm(data::FIG1_MODEL, &params);
    let report = r.validate();
    if !report.is_clean() {
        return Err(format!("family member invalid at eps = {eps}"));
    }

    let (itt1, itt2, late, _) = fig1_quantities(&r);
    let mut out = String::new();
    writeln!(out, "family member: eps = {eps}").unwrap();
    writeln!(out, "ITT_2 = {itt2}").unwrap();
    writeln!(out, "ITT_1 = {itt1}").unwrap();
    writeln!(out, "ITT_1/ITT_2 = {}", itt1.div_exact(&itt2)).unwrap();
    writeln!(out, "LATE = {late}").unwrap();

    let identity = late_identity_formula();
    let dist = r.cf_distribution();
    let identity_holds = lang::eval_formula(&dist, &identity).unwrap();
    writeln!(out, "LATE = ITT_1/ITT_2: {identity_holds}").unwrap();

    let extension =
        representability::find_full_extension(&r, &search_config()).map_err(|e| e.to_string())?;
    if extension.found {
        writeln!(out, "representable: true").unwrap();
    } else {
        writeln!(
            out,
            "representable: false (composition obstruction at unit {})",
            extension.obstruction.as_ref().unwrap().unit
        )
        .unwrap();
    }
    Ok(ok(out))
}

fn demo_late() -> Result<Outcome, String> {
    let mut out = String::new();
    for eps in ["0", "1/8"] {
        let eps = Rational::parse(eps).unwrap();
        let params: BTreeMap<String, Rational> = [("eps".to_string(), eps.clone())].into();
        let r = load_embedded_rcm(data::FIG1_MODEL, &params);
        writeln!(out, "eps = {eps}").unwrap();
        for (name, text) in [
            ("monotonicity", data::EQ4_BASE),
            ("exclusion restriction", data::EQ6_BASE),
            ("outcome decomposition", data::EQ7_BASE),
        ] {
            let matrix = lang::parse_base(text).unwrap();
            let holds = lang::holds_pointwise(&r, &matrix, Quantifier::ForAll, false).unwrap();
            writeln!(out, "  {name}: {holds}").unwrap();
        }
        let (itt1, itt2, late, _) = fig1_quantities(&r);
        writeln!(out, "  ITT_1 = {itt1}, ITT_2 = {itt2}, LATE = {late}").unwrap();
        let identity = late_identity_formula();
        let holds = lang::eval_formula(&r.cf_distribution(), &identity).unwrap();
        writeln!(out, "  LATE = ITT_1/ITT_2: {holds}").unwrap();
    }
    out.push_str(
        "the identity holds exactly when outcome decomposition does; \
         monotonicity and exclusion alone do not carry it\n",
    );
    Ok(ok(out))
}

fn demo_verma() -> Result<Outcome, String> {
    let m = load_embedded_scm(data::VERMA_SCM);
    let d = load_embedded_diagram(data::FIG2A_DIAGRAM);
    let mut out = String::new();

    let report = graph::check_class_membership(
        &ClassModel::Scm(&m),
        &d,
        ClassRole::StructuralDiagram,
        &schema_caps(),
    )
    .map_err(|e| e.to_string())?;
    writeln!(out, "model has the packaged diagram: {}", report.member).unwrap();

    let obs_keys: BTreeSet<OutcomeKey> =
        ["X", "W", "Z", "Y"].iter().map(|n| OutcomeKey::plain(*n)).collect();
    let obs = m.cf_distribution(&obs_keys).map_err(|e| e.to_string())?;

    let mut all_match = true;
    for y in 0..2 {
        for z in 0..2 {
            let y_val = Value::Int(y);
            let z_val = Value::Int(z);
            let mut values = Vec::new();
            for x in 0..2 {
                let x_val = Value::Int(x);
                let v = graph::observational_functional(
                    &obs,
                    &m.endogenous,
                    "W",
                    ("X", &x_val),
                    ("Y", &y_val),
                    ("Z", &z_val),
                )
                .map_err(|e| e.to_string())?;
                values.push((x, v));
            }
            let target_key = OutcomeKey::new("Y", Valuation::from_pairs([("Z", Value::Int(z))]));
            let target_dist =
                m.cf_distribution(&[target_key.clone()].into()).map_err(|e| e.to_string())?;
            let target = target_dist
                .probability_of(&[(target_key, y_val.clone())])
                .map_err(|e| e.to_string())?;

            let rendered: Vec<String> = values
                .iter()
                .map(|(x, v)| match v {
                    Some(v) => format!("x={x}: {v}"),
                    None => format!("x={x}: undefined"),
                })
                .collect();
            let matches = values.iter().all(|(_, v)| v.as_ref() == Some(&target));
            all_match &= matches;
            writeln!(
                out,
                "y={y} z={z}: sum_w P(y|z,w,x)P(w|x) [{}]  P(Y[Z={z}]={y}) = {target}  equal: {matches}",
                rendered.join(", ")
            )
            .unwrap();
        }
    }
    writeln!(
        out,
        "functional independent of x and equal to the interventional probability: {all_match}"
    )
    .unwrap();
    Ok(if all_match { ok(out) } else { fail(out) })
}

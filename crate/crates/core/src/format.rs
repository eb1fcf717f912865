//! Document formats: one JSON document per model, translation, or diagram,
//! with all probability masses written as exact strings (`"3/4"`, `"0.25"`)
//! and an optional parameter block so a family of models can ship as a
//! single file. Mass expressions are linear in the parameters:
//! `"3/4 - eps"`, `"1/2 + 2 * eps"`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{CellTarget, Translation};
use crate::graph::Diagram;
use crate::model::{Mechanism, OutcomeKey, Rcm, Scm, Valuation, Value, VarSet, Variable};
use crate::rational::Rational;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("unbound parameter `{0}` (pass a value with --param or a params block)")]
    UnboundParam(String),
    #[error("bad mass expression `{expr}`: {message}")]
    MassExpr { expr: String, message: String },
}

impl From<serde_json::Error> for LoadError {
    fn from(e: serde_json::Error) -> Self {
        LoadError::Schema(e.to_string())
    }
}

/// Any loadable document.
#[derive(Debug, Clone)]
pub enum Document {
    Rcm(Rcm),
    Scm(Scm),
    Translation(Translation),
    Diagram(Diagram),
}

// ---------------------------------------------------------------------------
// Wire types
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct DocumentWire {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    variables: Option<Vec<Variable>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rcm: Option<RcmWire>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scm: Option<ScmWire>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    translation: Option<TranslationWire>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    diagram: Option<Diagram>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RcmWire {
    units: Vec<UnitWire>,
    outcomes: Vec<OutcomeKey>,
    /// Rows keyed by unit, aligned with the `outcomes` array.
    responses: BTreeMap<String, Vec<Value>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct UnitWire {
    name: String,
    mass: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScmWire {
    exogenous: Vec<Variable>,
    mechanisms: Vec<MechanismWire>,
    exo_mass: Vec<ExoMassWire>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MechanismWire {
    variable: String,
    #[serde(default)]
    u_parents: Vec<String>,
    #[serde(default)]
    v_parents: Vec<String>,
    table: Vec<TableRowWire>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableRowWire {
    when: Valuation,
    value: Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct ExoMassWire {
    when: Valuation,
    mass: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct TranslationWire {
    low_variables: Vec<Variable>,
    high_variables: Vec<Variable>,
    cells: BTreeMap<String, CellTarget>,
    value_maps: Vec<ValueMapWire>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ValueMapWire {
    variable: String,
    rows: Vec<TableRowWire>,
}

// ---------------------------------------------------------------------------
// Mass expressions
// ---------------------------------------------------------------------------

/// Evaluates a linear mass expression under the parameter bindings:
/// `term (("+"|"-") term)*`, `term := rational | rational "*" ident | ident`.
pub fn eval_mass_expr(
    expr: &str,
    params: &BTreeMap<String, Rational>,
) -> Result<Rational, LoadError> {
    let bad = |message: &str| LoadError::MassExpr {
        expr: expr.to_string(),
        message: message.to_string(),
    };
    let mut total = Rational::zero();
    let mut rest = expr.trim();
    let mut sign = Rational::one();
    let mut first = true;
    while !rest.is_empty() {
        if !first {
            if let Some(r) = rest.strip_prefix('+') {
                sign = Rational::one();
                rest = r.trim_start();
            } else if let Some(r) = rest.strip_prefix('-') {
                sign = -Rational::one();
                rest = r.trim_start();
            } else {
                return Err(bad("expected `+` or `-` between terms"));
            }
        } else if let Some(r) = rest.strip_prefix('-') {
            sign = -Rational::one();
            rest = r.trim_start();
        }
        first = false;

        let end = rest.find(['+', '-']).unwrap_or(rest.len());
        let term = rest[..end].trim();
        rest = rest[end..].trim_start();
        if term.is_empty() {
            return Err(bad("empty term"));
        }

        let value = if let Some((coeff, name)) = term.split_once('*') {
            let c = Rational::parse(coeff.trim()).map_err(|e| bad(&e.to_string()))?;
            let p = params
                .get(name.trim())
                .ok_or_else(|| LoadError::UnboundParam(name.trim().to_string()))?;
            c * p.clone()
        } else if let Ok(c) = Rational::parse(term) {
            c
        } else {
            params.get(term).cloned().ok_or_else(|| LoadError::UnboundParam(term.to_string()))?
        };
        total += &(&sign * &value);
    }
    if first {
        return Err(bad("empty expression"));
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

/// Parses a document from JSON text. `overrides` take precedence over the
/// document's own `params` block.
pub fn load_document_str(
    text: &str,
    overrides: &BTreeMap<String, Rational>,
) -> Result<Document, LoadError> {
    let wire: DocumentWire = serde_json::from_str(text)?;

    let mut params: BTreeMap<String, Rational> = BTreeMap::new();
    if let Some(declared) = &wire.params {
        for (name, default) in declared {
            params.insert(
                name.clone(),
                Rational::parse(default).map_err(|e| {
                    LoadError::Schema(format!("bad default for parameter {name}: {e}"))
                })?,
            );
        }
    }
    for (name, value) in overrides {
        params.insert(name.clone(), value.clone());
    }

    let sections = [
        wire.rcm.is_some(),
        wire.scm.is_some(),
        wire.translation.is_some(),
        wire.diagram.is_some(),
    ];
    if sections.iter().filter(|p| **p).count() != 1 {
        return Err(LoadError::Schema(
            "document must contain exactly one of: rcm, scm, translation, diagram".to_string(),
        ));
    }

    if let Some(rcm) = wire.rcm {
        let variables = VarSet::new(wire.variables.ok_or_else(|| {
            LoadError::Schema("rcm document requires a variables block".to_string())
        })?);
        return load_rcm(variables, rcm, &params).map(Document::Rcm);
    }
    if let Some(scm) = wire.scm {
        let variables = VarSet::new(wire.variables.ok_or_else(|| {
            LoadError::Schema("scm document requires a variables block".to_string())
        })?);
        return load_scm(variables, scm, &params).map(Document::Scm);
    }
    if let Some(translation) = wire.translation {
        return load_translation(translation).map(Document::Translation);
    }
    let diagram = wire.diagram.expect("checked above");
    Diagram::new(diagram.nodes, diagram.directed, diagram.bidirected)
        .map(Document::Diagram)
        .map_err(|e| LoadError::Invariant(e.to_string()))
}

/// Reads and parses a document file.
pub fn load_document(
    path: &std::path::Path,
    overrides: &BTreeMap<String, Rational>,
) -> Result<Document, LoadError> {
    let text = std::fs::read_to_string(path)?;
    load_document_str(&text, overrides)
}

fn load_rcm(
    variables: VarSet,
    wire: RcmWire,
    params: &BTreeMap<String, Rational>,
) -> Result<Rcm, LoadError> {
    let mut units = Vec::new();
    for u in &wire.units {
        units.push((u.name.clone(), eval_mass_expr(&u.mass, params)?));
    }
    let mut rcm = Rcm::new(variables, units, wire.outcomes.iter().cloned());
    for (unit, row) in &wire.responses {
        if row.len() != wire.outcomes.len() {
            return Err(LoadError::Schema(format!(
                "response row for {unit} has {} entries, expected {}",
                row.len(),
                wire.outcomes.len()
            )));
        }
        for (key, value) in wire.outcomes.iter().zip(row) {
            rcm.set_response(key, unit, value.clone());
        }
    }
    let report = rcm.validate();
    if !report.is_structurally_valid() {
        return Err(LoadError::Invariant(report.problems.join("; ")));
    }
    Ok(rcm)
}

fn load_scm(
    endogenous: VarSet,
    wire: ScmWire,
    params: &BTreeMap<String, Rational>,
) -> Result<Scm, LoadError> {
    let mut mechanisms = BTreeMap::new();
    for m in wire.mechanisms {
        let table: BTreeMap<Valuation, Value> =
            m.table.into_iter().map(|row| (row.when, row.value)).collect();
        mechanisms.insert(
            m.variable.clone(),
            Mechanism {
                variable: m.variable,
                u_parents: m.u_parents,
                v_parents: m.v_parents,
                table,
            },
        );
    }
    let mut exo_mass = BTreeMap::new();
    for row in &wire.exo_mass {
        exo_mass.insert(row.when.clone(), eval_mass_expr(&row.mass, params)?);
    }
    let scm = Scm { exogenous: VarSet::new(wire.exogenous), endogenous, mechanisms, exo_mass };
    let report = scm.validate();
    if !report.is_structurally_valid() {
        return Err(LoadError::Invariant(report.problems.join("; ")));
    }
    Ok(scm)
}

fn load_translation(wire: TranslationWire) -> Result<Translation, LoadError> {
    let mut value_maps = BTreeMap::new();
    for map in wire.value_maps {
        let rows: BTreeMap<Valuation, Value> =
            map.rows.into_iter().map(|row| (row.when, row.value)).collect();
        value_maps.insert(map.variable, rows);
    }
    let t = Translation {
        low_vars: VarSet::new(wire.low_variables),
        high_vars: VarSet::new(wire.high_variables),
        cells: wire.cells,
        value_maps,
    };
    let report = t.validate();
    if !report.is_clean() {
        return Err(LoadError::Invariant(report.problems.join("; ")));
    }
    Ok(t)
}

// ---------------------------------------------------------------------------
// Saving
// ---------------------------------------------------------------------------

/// Serializes a document to pretty JSON in the same format `load` accepts.
pub fn document_to_json(doc: &Document) -> serde_json::Value {
    let wire = match doc {
        Document::Rcm(r) => DocumentWire {
            variables: Some(r.variables.iter().cloned().collect()),
            params: None,
            rcm: Some(RcmWire {
                units: r
                    .units
                    .iter()
                    .map(|u| UnitWire { name: u.clone(), mass: r.mass(u).to_string() })
                    .collect(),
                outcomes: r.outcomes.iter().cloned().collect(),
                responses: r
                    .units
                    .iter()
                    .map(|u| {
                        let row = r
                            .outcomes
                            .iter()
                            .map(|k| r.response(k, u).expect("total").clone())
                            .collect();
                        (u.clone(), row)
                    })
                    .collect(),
            }),
            scm: None,
            translation: None,
            diagram: None,
        },
        Document::Scm(m) => DocumentWire {
            variables: Some(m.endogenous.iter().cloned().collect()),
            params: None,
            rcm: None,
            scm: Some(ScmWire {
                exogenous: m.exogenous.iter().cloned().collect(),
                mechanisms: m
                    .mechanisms
                    .values()
                    .map(|mech| MechanismWire {
                        variable: mech.variable.clone(),
                        u_parents: mech.u_parents.clone(),
                        v_parents: mech.v_parents.clone(),
                        table: mech
                            .table
                            .iter()
                            .map(|(when, value)| TableRowWire {
                                when: when.clone(),
                                value: value.clone(),
                            })
                            .collect(),
                    })
                    .collect(),
                exo_mass: m
                    .exo_mass
                    .iter()
                    .map(|(when, mass)| ExoMassWire { when: when.clone(), mass: mass.to_string() })
                    .collect(),
            }),
            translation: None,
            diagram: None,
        },
        Document::Translation(t) => DocumentWire {
            variables: None,
            params: None,
            rcm: None,
            scm: None,
            translation: Some(TranslationWire {
                low_variables: t.low_vars.iter().cloned().collect(),
                high_variables: t.high_vars.iter().cloned().collect(),
                cells: t.cells.clone(),
                value_maps: t
                    .value_maps
                    .iter()
                    .map(|(variable, rows)| ValueMapWire {
                        variable: variable.clone(),
                        rows: rows
                            .iter()
                            .map(|(when, value)| TableRowWire {
                                when: when.clone(),
                                value: value.clone(),
                            })
                            .collect(),
                    })
                    .collect(),
            }),
            diagram: None,
        },
        Document::Diagram(d) => DocumentWire {
            variables: None,
            params: None,
            rcm: None,
            scm: None,
            translation: None,
            diagram: Some(d.clone()),
        },
    };
    serde_json::to_value(&wire).expect("wire types serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mass_expressions_evaluate_exactly() {
        let params: BTreeMap<String, Rational> = [("eps".to_string(), Rational::new(1, 8))].into();
        assert_eq!(eval_mass_expr("3/4 - eps", &params).unwrap(), Rational::new(5, 8));
        assert_eq!(eval_mass_expr("eps", &params).unwrap(), Rational::new(1, 8));
        assert_eq!(eval_mass_expr("1/2 + 2 * eps", &params).unwrap(), Rational::new(3, 4));
        assert_eq!(eval_mass_expr("0.25", &params).unwrap(), Rational::new(1, 4));
        assert!(matches!(
            eval_mass_expr("delta", &BTreeMap::new()),
            Err(LoadError::UnboundParam(p)) if p == "delta"
        ));
    }

    #[test]
    fn loads_a_small_rcm_document() {
        let text = r#"{
            "variables": [{"name": "X", "domain": [0, 1]}],
            "rcm": {
                "units": [{"name": "u0", "mass": "0.25"}, {"name": "u1", "mass": "3/4"}],
                "outcomes": [{"y": "X", "intervention": {}}],
                "responses": {"u0": [1], "u1": [0]}
            }
        }"#;
        let Document::Rcm(r) = load_document_str(text, &BTreeMap::new()).unwrap() else { panic!() };
        assert_eq!(r.mass("u0"), Rational::new(1, 4));
        assert_eq!(r.response(&OutcomeKey::plain("X"), "u1"), Some(&Value::Int(0)));
    }

    #[test]
    fn duplicate_units_fail_loading() {
        let text = r#"{
            "variables": [{"name": "X", "domain": [0, 1]}],
            "rcm": {
                "units": [{"name": "u0", "mass": "1/2"}, {"name": "u0", "mass": "1/2"}],
                "outcomes": [],
                "responses": {}
            }
        }"#;
        assert!(matches!(
            load_document_str(text, &BTreeMap::new()),
            Err(LoadError::Invariant(msg)) if msg.contains("duplicate unit")
        ));
    }

    #[test]
    fn round_trips_documents() {
        let text = r#"{
            "variables": [{"name": "X", "domain": [0, 1]}],
            "rcm": {
                "units": [{"name": "u0", "mass": "1"}],
                "outcomes": [{"y": "X", "intervention": {"X": 1}}],
                "responses": {"u0": [1]}
            }
        }"#;
        let Document::Rcm(r) = load_document_str(text, &BTreeMap::new()).unwrap() else { panic!() };
        let json = document_to_json(&Document::Rcm(r.clone()));
        let Document::Rcm(r2) = load_document_str(&json.to_string(), &BTreeMap::new()).unwrap()
        else {
            panic!()
        };
        assert_eq!(r, r2);
    }
}

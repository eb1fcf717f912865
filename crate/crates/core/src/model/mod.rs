//! Finite, exact data model shared by every other module: variables with
//! explicitly enumerated domains, joint valuations, potential-outcome keys,
//! and the two model classes (Rubin causal models and structural causal
//! models) together with their counterfactual distributions.

mod dist;
mod rcm;
mod scm;

pub use dist::CfDistribution;
pub use rcm::{EffectivenessViolation, Rcm};
pub use scm::{Mechanism, Scm};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A single value a variable can take. `Star` is the reserved padding value
/// used by the lowering construction; it is distinct from every symbol and
/// integer and serializes as the literal token `<star>`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Sym(String),
}

pub const STAR_TOKEN: &str = "<star>";

impl Value {
    pub fn star() -> Value {
        Value::Sym(STAR_TOKEN.to_string())
    }

    pub fn is_star(&self) -> bool {
        matches!(self, Value::Sym(s) if s == STAR_TOKEN)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Sym(s) => write!(f, "{s}"),
        }
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl From<i64> for Value {
    fn from(n: i64) -> Self {
        Value::Int(n)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Sym(s.to_string())
    }
}

/// A named variable with a finite, canonically ordered domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub domain: Vec<Value>,
}

impl Variable {
    pub fn new(name: impl Into<String>, domain: impl IntoIterator<Item = Value>) -> Self {
        Variable { name: name.into(), domain: domain.into_iter().collect() }
    }

    /// Binary 0/1 variable.
    pub fn binary(name: impl Into<String>) -> Self {
        Variable::new(name, [Value::Int(0), Value::Int(1)])
    }
}

/// An ordered collection of variables acting as a signature: lookups by name
/// plus canonical enumeration order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarSet {
    vars: Vec<Variable>,
}

impl VarSet {
    pub fn new(vars: impl IntoIterator<Item = Variable>) -> Self {
        VarSet { vars: vars.into_iter().collect() }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Variable> {
        self.vars.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.iter().map(|v| v.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Variable> {
        self.vars.iter().find(|v| v.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn domain(&self, name: &str) -> Option<&[Value]> {
        self.get(name).map(|v| v.domain.as_slice())
    }

    /// All joint valuations of the named subset, in canonical order (domain
    /// order per variable, last variable varying fastest).
    pub fn valuations_of(&self, names: &[&str]) -> Vec<Valuation> {
        let doms: Vec<(&str, &[Value])> = names
            .iter()
            .map(|n| (*n, self.domain(n).unwrap_or_else(|| panic!("unknown variable {n}"))))
            .collect();
        let mut out = vec![Valuation::empty()];
        for (name, dom) in doms {
            let mut next = Vec::with_capacity(out.len() * dom.len());
            for base in &out {
                for v in dom {
                    let mut b = base.clone();
                    b.insert(name, v.clone());
                    next.push(b);
                }
            }
            out = next;
        }
        out
    }

    /// All total valuations of every variable in the set.
    pub fn all_valuations(&self) -> Vec<Valuation> {
        let names: Vec<&str> = self.names().collect();
        self.valuations_of(&names)
    }

    /// Every intervention: one valuation per subset of the variables,
    /// including the empty intervention, in canonical order.
    pub fn all_interventions(&self) -> Vec<Valuation> {
        let names: Vec<&str> = self.names().collect();
        let mut out = Vec::new();
        for mask in 0..(1u64 << names.len()) {
            let subset: Vec<&str> = names
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, n)| *n)
                .collect();
            out.extend(self.valuations_of(&subset));
        }
        out.sort();
        out.dedup();
        out
    }
}

/// A partial or total assignment of values to variables. The empty valuation
/// is the empty intervention and is first-class.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Valuation(BTreeMap<String, Value>);

impl Valuation {
    pub fn empty() -> Self {
        Valuation(BTreeMap::new())
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, Value)>) -> Self {
        Valuation(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }

    pub fn insert(&mut self, name: &str, value: Value) {
        self.0.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Value> {
        self.0.remove(name)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(|k| k.as_str())
    }

    /// Projection onto the named variables (names absent here are dropped).
    pub fn project(&self, names: &[&str]) -> Valuation {
        Valuation(
            self.0
                .iter()
                .filter(|(k, _)| names.contains(&k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        )
    }

    /// True when `self` assigns every binding of `other` identically.
    pub fn extends(&self, other: &Valuation) -> bool {
        other.iter().all(|(k, v)| self.get(k) == Some(v))
    }

    /// Merge with another valuation; `None` when they conflict on a variable.
    pub fn merged(&self, other: &Valuation) -> Option<Valuation> {
        let mut out = self.clone();
        for (k, v) in other.iter() {
            match out.get(k) {
                Some(existing) if existing != v => return None,
                Some(_) => {}
                None => out.insert(k, v.clone()),
            }
        }
        Some(out)
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, v) in self.iter() {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "{k}={v}")?;
            first = false;
        }
        Ok(())
    }
}

impl fmt::Debug for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{self}}}")
    }
}

impl<'a> FromIterator<(&'a str, Value)> for Valuation {
    fn from_iter<T: IntoIterator<Item = (&'a str, Value)>>(iter: T) -> Self {
        Valuation::from_pairs(iter)
    }
}

/// A potential-outcome key `Y_x`: outcome variable `Y` under the intervention
/// `x`. The outcome may itself be intervened on (`Y` in `X`).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OutcomeKey {
    #[serde(rename = "y")]
    pub outcome: String,
    pub intervention: Valuation,
}

impl OutcomeKey {
    pub fn new(outcome: impl Into<String>, intervention: Valuation) -> Self {
        OutcomeKey { outcome: outcome.into(), intervention }
    }

    /// `Y` under the empty intervention.
    pub fn plain(outcome: impl Into<String>) -> Self {
        OutcomeKey::new(outcome, Valuation::empty())
    }
}

impl fmt::Display for OutcomeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.outcome, self.intervention)
    }
}

impl fmt::Debug for OutcomeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// A joint valuation of a set of potential-outcome keys: one point of a
/// counterfactual distribution's sample space.
pub type CfPoint = BTreeMap<OutcomeKey, Value>;

/// Groups a set of keys (or a point) by distinct interventions, canonically
/// ordered; used wherever counterfactuals are indexed per intervention.
pub fn group_keys_by_intervention<'a>(
    keys: impl IntoIterator<Item = &'a OutcomeKey>,
) -> BTreeMap<Valuation, BTreeSet<String>> {
    let mut groups: BTreeMap<Valuation, BTreeSet<String>> = BTreeMap::new();
    for key in keys {
        groups.entry(key.intervention.clone()).or_default().insert(key.outcome.clone());
    }
    groups
}

/// Errors raised by model operations.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error(
        "no unique solution for unit {unit} under intervention [{intervention}]: {count} solutions"
    )]
    NonUniqueSolution { unit: String, intervention: Valuation, count: usize },
    #[error("unknown outcome key {0}")]
    UnknownOutcomeKey(OutcomeKey),
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("value {value} not in the domain of {variable}")]
    ValueOutsideDomain { variable: String, value: Value },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
}

/// A structural validation report: everything found wrong, nothing thrown.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub problems: Vec<String>,
    /// Effectiveness violations, reported separately so callers can
    /// distinguish structural damage from principle failures.
    pub effectiveness_violations: Vec<EffectivenessViolation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.problems.is_empty() && self.effectiveness_violations.is_empty()
    }

    pub fn is_structurally_valid(&self) -> bool {
        self.problems.is_empty()
    }

    pub(crate) fn problem(&mut self, msg: impl Into<String>) {
        self.problems.push(msg.into());
    }
}

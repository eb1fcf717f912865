//! Rubin causal models: a finite unit population with a probability mass per
//! unit and one potential-response function per declared outcome key.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{CfDistribution, CfPoint, ModelError, OutcomeKey, ValidationReport, Value, VarSet};
use crate::rational::Rational;

/// A recorded effectiveness failure: `Y_x(u)` differs from the value `x`
/// forces on `Y`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EffectivenessViolation {
    pub unit: String,
    pub key: OutcomeKey,
    pub actual: Value,
    pub forced: Value,
}

/// A Rubin causal model over a finite unit set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rcm {
    pub variables: VarSet,
    /// Unit names in canonical order.
    pub units: Vec<String>,
    pub unit_mass: BTreeMap<String, Rational>,
    pub outcomes: BTreeSet<OutcomeKey>,
    /// Total on `outcomes x units`.
    pub responses: BTreeMap<(OutcomeKey, String), Value>,
}

impl Rcm {
    pub fn new(
        variables: VarSet,
        units: Vec<(String, Rational)>,
        outcomes: impl IntoIterator<Item = OutcomeKey>,
    ) -> Self {
        let unit_mass = units.iter().cloned().collect();
        Rcm {
            variables,
            units: units.into_iter().map(|(u, _)| u).collect(),
            unit_mass,
            outcomes: outcomes.into_iter().collect(),
            responses: BTreeMap::new(),
        }
    }

    pub fn set_response(&mut self, key: &OutcomeKey, unit: &str, value: Value) {
        self.responses.insert((key.clone(), unit.to_string()), value);
    }

    pub fn response(&self, key: &OutcomeKey, unit: &str) -> Option<&Value> {
        self.responses.get(&(key.clone(), unit.to_string()))
    }

    pub fn mass(&self, unit: &str) -> Rational {
        self.unit_mass.get(unit).cloned().unwrap_or_else(Rational::zero)
    }

    /// Units with strictly positive mass, in canonical order.
    pub fn positive_units(&self) -> Vec<&str> {
        self.units.iter().map(|u| u.as_str()).filter(|u| self.mass(u).is_positive()).collect()
    }

    /// The counterfactual row of one unit: its response to every key.
    pub fn unit_point(&self, unit: &str) -> CfPoint {
        self.outcomes
            .iter()
            .map(|k| {
                let v = self
                    .response(k, unit)
                    .unwrap_or_else(|| panic!("response missing for {k} at unit {unit}"))
                    .clone();
                (k.clone(), v)
            })
            .collect()
    }

    /// Structural well-formedness plus every effectiveness violation. All
    /// problems are reported, none thrown.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();

        let mut seen_vars = BTreeSet::new();
        for var in self.variables.iter() {
            if !seen_vars.insert(&var.name) {
                report.problem(format!("duplicate variable {}", var.name));
            }
            if var.domain.is_empty() {
                report.problem(format!("variable {} has an empty domain", var.name));
            }
            let distinct: BTreeSet<_> = var.domain.iter().collect();
            if distinct.len() != var.domain.len() {
                report.problem(format!("variable {} has duplicate domain values", var.name));
            }
        }

        let mut seen_units = BTreeSet::new();
        for unit in &self.units {
            if !seen_units.insert(unit) {
                report.problem(format!("duplicate unit {unit}"));
            }
        }
        for unit in self.unit_mass.keys() {
            if !self.units.contains(unit) {
                report.problem(format!("mass assigned to unknown unit {unit}"));
            }
        }

        let mut total = Rational::zero();
        for unit in &self.units {
            let m = self.mass(unit);
            if m.is_negative() {
                report.problem(format!("unit {unit} has negative mass {m}"));
            }
            total += &m;
        }
        if !total.is_one() {
            report.problem(format!("unit masses sum to {total}, expected 1"));
        }

        for key in &self.outcomes {
            if !self.variables.contains(&key.outcome) {
                report.problem(format!("outcome key {key} names unknown variable"));
            }
            for (name, value) in key.intervention.iter() {
                match self.variables.domain(name) {
                    None => {
                        report.problem(format!("key {key} intervenes on unknown variable {name}"))
                    }
                    Some(dom) if !dom.contains(value) => {
                        report.problem(format!("key {key} sets {name} outside its domain"))
                    }
                    _ => {}
                }
            }
        }

        for key in &self.outcomes {
            let dom = self.variables.domain(&key.outcome);
            for unit in &self.units {
                match self.response(key, unit) {
                    None => report.problem(format!("response missing for {key} at unit {unit}")),
                    Some(v) => {
                        if let Some(dom) = dom {
                            if !dom.contains(v) {
                                report.problem(format!(
                                    "response {key}({unit}) = {v} outside the domain of {}",
                                    key.outcome
                                ));
                            }
                        }
                    }
                }
            }
        }
        for (key, unit) in self.responses.keys() {
            if !self.outcomes.contains(key) {
                report.problem(format!("response recorded for undeclared key {key}"));
            }
            if !self.units.contains(unit) {
                report.problem(format!("response recorded for unknown unit {unit}"));
            }
        }

        // Effectiveness: whenever Y is itself intervened on, the response
        // must equal the value the intervention forces.
        for key in &self.outcomes {
            if let Some(forced) = key.intervention.get(&key.outcome) {
                for unit in &self.units {
                    if let Some(actual) = self.response(key, unit) {
                        if actual != forced {
                            report.effectiveness_violations.push(EffectivenessViolation {
                                unit: unit.clone(),
                                key: key.clone(),
                                actual: actual.clone(),
                                forced: forced.clone(),
                            });
                        }
                    }
                }
            }
        }

        report
    }

    /// True when every effectiveness instance holds (zero-mass units included).
    pub fn is_effective(&self) -> bool {
        self.validate().effectiveness_violations.is_empty()
    }

    /// The counterfactual distribution induced by the model: the pushforward
    /// of the unit distribution along the response map.
    pub fn cf_distribution(&self) -> CfDistribution {
        let mut mass: BTreeMap<CfPoint, Rational> = BTreeMap::new();
        for unit in &self.units {
            let m = self.mass(unit);
            if !m.is_positive() {
                continue;
            }
            let point = self.unit_point(unit);
            *mass.entry(point).or_insert_with(Rational::zero) += &m;
        }
        CfDistribution::new(self.outcomes.clone(), mass)
    }

    /// True when `other` has the same units, masses, and variables, and this
    /// model's keys/responses are a subset of the other's.
    pub fn is_submodel_of(&self, other: &Rcm) -> bool {
        self.units == other.units
            && self.unit_mass == other.unit_mass
            && self.variables == other.variables
            && self.outcomes.is_subset(&other.outcomes)
            && self.responses.iter().all(|(k, v)| other.responses.get(k) == Some(v))
    }

    /// The submodel keeping only the given keys.
    pub fn restricted_to(&self, keys: &BTreeSet<OutcomeKey>) -> Result<Rcm, ModelError> {
        for key in keys {
            if !self.outcomes.contains(key) {
                return Err(ModelError::UnknownOutcomeKey(key.clone()));
            }
        }
        let mut out = self.clone();
        out.outcomes = keys.clone();
        out.responses.retain(|(k, _), _| keys.contains(k));
        Ok(out)
    }
}

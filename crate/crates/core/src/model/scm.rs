//! Structural causal models: one structural function per endogenous
//! variable, an exact distribution over exogenous valuations, interventions
//! by function replacement, and solving of the resulting equation systems.

use std::collections::{BTreeMap, BTreeSet};

use super::{
    CfDistribution, CfPoint, ModelError, OutcomeKey, Rcm, ValidationReport, Valuation, Value,
    VarSet,
};
use crate::rational::Rational;

/// The structural function of one endogenous variable: declared exogenous
/// and endogenous parent sets plus a total function table over their joint
/// valuations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mechanism {
    pub variable: String,
    pub u_parents: Vec<String>,
    pub v_parents: Vec<String>,
    pub table: BTreeMap<Valuation, Value>,
}

impl Mechanism {
    /// Applies the table to the relevant projections of `u` and `v`.
    pub fn apply(&self, u: &Valuation, v: &Valuation) -> Option<&Value> {
        let mut input = Valuation::empty();
        for p in &self.u_parents {
            input.insert(p, u.get(p)?.clone());
        }
        for p in &self.v_parents {
            input.insert(p, v.get(p)?.clone());
        }
        self.table.get(&input)
    }
}

/// A structural causal model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scm {
    pub exogenous: VarSet,
    pub endogenous: VarSet,
    /// Exactly one mechanism per endogenous variable, keyed by its name.
    pub mechanisms: BTreeMap<String, Mechanism>,
    /// Sparse map over `Val(U)`; valuations absent here carry mass zero.
    pub exo_mass: BTreeMap<Valuation, Rational>,
}

impl Scm {
    /// Exogenous valuations with strictly positive mass, canonical order.
    pub fn support(&self) -> impl Iterator<Item = (&Valuation, &Rational)> {
        self.exo_mass.iter().filter(|(_, m)| m.is_positive())
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();

        for var in self.endogenous.iter() {
            if !self.mechanisms.contains_key(&var.name) {
                report.problem(format!("no mechanism for endogenous variable {}", var.name));
            }
        }
        for (name, mech) in &self.mechanisms {
            if name != &mech.variable {
                report
                    .problem(format!("mechanism keyed {name} declares variable {}", mech.variable));
            }
            if !self.endogenous.contains(name) {
                report.problem(format!("mechanism for unknown endogenous variable {name}"));
            }
            for p in &mech.u_parents {
                if !self.exogenous.contains(p) {
                    report.problem(format!("{name}: unknown exogenous parent {p}"));
                }
            }
            for p in &mech.v_parents {
                if !self.endogenous.contains(p) {
                    report.problem(format!("{name}: unknown endogenous parent {p}"));
                }
                if p == name {
                    report.problem(format!("{name}: declares itself as a parent"));
                }
            }

            // Table totality over the declared input space, values in range.
            let parent_names: Vec<&str> = mech
                .u_parents
                .iter()
                .map(|s| s.as_str())
                .chain(mech.v_parents.iter().map(|s| s.as_str()))
                .collect();
            let space = input_space(&self.exogenous, &self.endogenous, &parent_names);
            if let Some(space) = space {
                for input in &space {
                    if !mech.table.contains_key(input) {
                        report.problem(format!("{name}: table missing row for [{input}]"));
                    }
                }
                for input in mech.table.keys() {
                    if !space.contains(input) {
                        report.problem(format!(
                            "{name}: table row [{input}] outside the input space"
                        ));
                    }
                }
            }
            if let Some(dom) = self.endogenous.domain(name) {
                for value in mech.table.values() {
                    if !dom.contains(value) {
                        report.problem(format!("{name}: table value {value} outside its domain"));
                    }
                }
            }
        }

        let exo_names: Vec<&str> = self.exogenous.names().collect();
        let mut total = Rational::zero();
        for (val, mass) in &self.exo_mass {
            if mass.is_negative() {
                report.problem(format!("exogenous valuation [{val}] has negative mass {mass}"));
            }
            total += mass;
            let names: BTreeSet<&str> = val.names().collect();
            if names != exo_names.iter().copied().collect() {
                report.problem(format!("exogenous mass row [{val}] is not total over U"));
            }
            for (name, value) in val.iter() {
                if let Some(dom) = self.exogenous.domain(name) {
                    if !dom.contains(value) {
                        report.problem(format!("exogenous row sets {name} outside its domain"));
                    }
                }
            }
        }
        if !total.is_one() {
            report.problem(format!("exogenous masses sum to {total}, expected 1"));
        }

        report
    }

    /// A topological order of the declared endogenous parent relation, or
    /// `None` when it has a cycle.
    pub fn topological_order(&self) -> Option<Vec<String>> {
        topological_order_of(self.endogenous.names().map(|s| s.to_string()).collect(), |v| {
            self.mechanisms.get(v).map(|m| m.v_parents.clone()).unwrap_or_default()
        })
    }

    pub fn is_recursive(&self) -> bool {
        self.topological_order().is_some()
    }

    /// All solutions of the manipulated model at `u`: exactly the set
    /// `{v : M_x, u |= v}`. Recursive manipulated models take the forward
    /// substitution fast path; anything else enumerates `Val(V)`.
    pub fn solve(&self, u: &Valuation, x: &Valuation) -> Vec<Valuation> {
        let order =
            topological_order_of(self.endogenous.names().map(|s| s.to_string()).collect(), |v| {
                if x.contains(v) {
                    Vec::new()
                } else {
                    self.mechanisms.get(v).map(|m| m.v_parents.clone()).unwrap_or_default()
                }
            });
        if let Some(order) = order {
            let mut v = Valuation::empty();
            for name in &order {
                let value = if let Some(forced) = x.get(name) {
                    forced.clone()
                } else {
                    match self.mechanisms.get(name).and_then(|m| m.apply(u, &v)) {
                        Some(value) => value.clone(),
                        None => return Vec::new(),
                    }
                };
                v.insert(name, value);
            }
            return vec![v];
        }

        self.endogenous.all_valuations().into_iter().filter(|v| self.satisfies(u, x, v)).collect()
    }

    fn satisfies(&self, u: &Valuation, x: &Valuation, v: &Valuation) -> bool {
        self.endogenous.names().all(|name| {
            let actual = v.get(name);
            if let Some(forced) = x.get(name) {
                actual == Some(forced)
            } else {
                match self.mechanisms.get(name).and_then(|m| m.apply(u, v)) {
                    Some(value) => actual == Some(value),
                    None => false,
                }
            }
        })
    }

    /// The unique solution at `(u, x)`, or `NonUniqueSolution`.
    pub fn solve_unique(&self, u: &Valuation, x: &Valuation) -> Result<Valuation, ModelError> {
        let mut solutions = self.solve(u, x);
        if solutions.len() == 1 {
            Ok(solutions.pop().unwrap())
        } else {
            Err(ModelError::NonUniqueSolution {
                unit: u.to_string(),
                intervention: x.clone(),
                count: solutions.len(),
            })
        }
    }

    /// `None` when every `(u, x)` over the support and all interventions has
    /// exactly one solution; otherwise a witnessing pair. Recursive models
    /// short-circuit: uniqueness follows from the parent order alone.
    pub fn unique_solvability_counterexample(&self) -> Option<(Valuation, Valuation)> {
        if self.is_recursive() {
            return None;
        }
        let interventions = self.endogenous.all_interventions();
        for (u, _) in self.support() {
            for x in &interventions {
                if self.solve(u, x).len() != 1 {
                    return Some((u.clone(), x.clone()));
                }
            }
        }
        None
    }

    pub fn is_uniquely_solvable(&self) -> bool {
        self.unique_solvability_counterexample().is_none()
    }

    /// The potential outcome `Y_x(u)`.
    pub fn potential_outcome(&self, u: &Valuation, key: &OutcomeKey) -> Result<Value, ModelError> {
        if !self.endogenous.contains(&key.outcome) {
            return Err(ModelError::UnknownVariable(key.outcome.clone()));
        }
        let v = self.solve_unique(u, &key.intervention)?;
        Ok(v.get(&key.outcome).expect("solution is total").clone())
    }

    /// The counterfactual distribution over the given keys: the pushforward
    /// of the exogenous distribution along per-unit potential outcomes.
    pub fn cf_distribution(
        &self,
        outcomes: &BTreeSet<OutcomeKey>,
    ) -> Result<CfDistribution, ModelError> {
        let groups = super::group_keys_by_intervention(outcomes.iter());
        let mut mass: BTreeMap<CfPoint, Rational> = BTreeMap::new();
        for (u, m) in self.support() {
            let mut point = CfPoint::new();
            for (x, names) in &groups {
                let v = self.solve_unique(u, x)?;
                for name in names {
                    let value =
                        v.get(name).ok_or_else(|| ModelError::UnknownVariable(name.clone()))?;
                    point.insert(OutcomeKey::new(name.clone(), x.clone()), value.clone());
                }
            }
            *mass.entry(point).or_insert_with(Rational::zero) += m;
        }
        Ok(CfDistribution::new(outcomes.clone(), mass))
    }

    /// The RCM this model induces on the given keys: one unit per positive
    /// mass exogenous valuation, responses read off the potential outcomes.
    pub fn represented_rcm(&self, outcomes: &BTreeSet<OutcomeKey>) -> Result<Rcm, ModelError> {
        let units: Vec<(String, Rational)> =
            self.support().map(|(u, m)| (u.to_string(), m.clone())).collect();
        let mut rcm = Rcm::new(self.endogenous.clone(), units, outcomes.iter().cloned());
        let groups = super::group_keys_by_intervention(outcomes.iter());
        for (u, _) in self.support() {
            let unit = u.to_string();
            for (x, names) in &groups {
                let v = self.solve_unique(u, x)?;
                for name in names {
                    let key = OutcomeKey::new(name.clone(), x.clone());
                    rcm.set_response(&key, &unit, v.get(name).expect("total solution").clone());
                }
            }
        }
        Ok(rcm)
    }
}

/// Joint valuations of the named parents, drawn from whichever signature
/// defines each name; `None` if a name is unknown.
fn input_space(exo: &VarSet, endo: &VarSet, names: &[&str]) -> Option<Vec<Valuation>> {
    let mut out = vec![Valuation::empty()];
    for name in names {
        let dom = exo.domain(name).or_else(|| endo.domain(name))?;
        let mut next = Vec::with_capacity(out.len() * dom.len());
        for base in &out {
            for value in dom {
                let mut b = base.clone();
                b.insert(name, value.clone());
                next.push(b);
            }
        }
        out = next;
    }
    Some(out)
}

fn topological_order_of(
    nodes: Vec<String>,
    parents: impl Fn(&str) -> Vec<String>,
) -> Option<Vec<String>> {
    let mut order = Vec::with_capacity(nodes.len());
    let mut placed: BTreeSet<String> = BTreeSet::new();
    let mut remaining: Vec<String> = nodes;
    while !remaining.is_empty() {
        let before = order.len();
        remaining.retain(|node| {
            let ready = parents(node).iter().all(|p| placed.contains(p));
            if ready {
                order.push(node.clone());
                placed.insert(node.clone());
            }
            !ready
        });
        if order.len() == before {
            return None;
        }
    }
    Some(order)
}

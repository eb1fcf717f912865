//! Potential-outcome coherence principles and representability.
//!
//! An RCM is representable by a structural model exactly when it extends to a
//! full model (one defining every `Y_x`) satisfying composition and
//! reversibility. This module checks the principles instance by instance,
//! searches for a full extension per unit with a propagating backtracking
//! search, and synthesizes the witnessing SCM from a found extension.
//!
//! Representability is read distributionally: zero-mass units are kept in
//! the data but place no constraints on the extension search, mirroring the
//! pushforward's blindness to them.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::model::{
    Mechanism, ModelError, OutcomeKey, Rcm, Scm, ValidationReport, Valuation, Value, VarSet,
    Variable,
};
use crate::rational::Rational;

/// The three algebraic principles on potential outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Principle {
    Effectiveness,
    Composition,
    Reversibility,
}

/// One falsified instance: the premises all hold at `unit` but the
/// conclusion's recorded response differs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PrincipleViolation {
    pub principle: Principle,
    pub unit: String,
    pub premises: Vec<(OutcomeKey, Value)>,
    pub conclusion_key: OutcomeKey,
    pub expected: Value,
    pub actual: Value,
}

/// Search effort counters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub nodes: u64,
    pub prunes: u64,
    pub forced: u64,
}

/// A reason a unit admits no completion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Obstruction {
    pub unit: String,
    pub detail: String,
}

/// Outcome of the full-extension search.
#[derive(Debug, Clone)]
pub struct ExtensionResult {
    pub found: bool,
    pub full_rcm: Option<Rcm>,
    pub stats: SearchStats,
    pub obstruction: Option<Obstruction>,
}

/// Caps guarding the exponential search.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    /// Fullness enumerates every intervention over every variable subset;
    /// refuse models with more endogenous variables than this.
    pub max_variables: usize,
    /// Abort after this many search nodes.
    pub node_budget: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { max_variables: 5, node_budget: 2_000_000 }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SearchError {
    #[error("search budget exceeded after {nodes} nodes")]
    BudgetExceeded { nodes: u64 },
    #[error("model has {count} endogenous variables, over the fullness cap {cap}")]
    VariableCapExceeded { count: usize, cap: usize },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Every key `Y_x` for `Y` in `V` and `x` ranging over all interventions, in
/// canonical `(Y, x)` order.
pub fn full_key_universe(vars: &VarSet) -> Vec<OutcomeKey> {
    let interventions = vars.all_interventions();
    let mut keys = Vec::new();
    for var in vars.iter() {
        for x in &interventions {
            keys.push(OutcomeKey::new(var.name.clone(), x.clone()));
        }
    }
    keys.sort();
    keys
}

/// Enumerates every violated instance of `principle` in `r`, skipping
/// instances whose premise or conclusion keys are undefined.
pub fn check_principle(
    r: &Rcm,
    principle: Principle,
    include_zero_mass: bool,
) -> Vec<PrincipleViolation> {
    let units: Vec<&str> = if include_zero_mass {
        r.units.iter().map(|u| u.as_str()).collect()
    } else {
        r.positive_units()
    };
    let mut violations = Vec::new();

    match principle {
        Principle::Effectiveness => {
            for key in &r.outcomes {
                let Some(forced) = key.intervention.get(&key.outcome) else { continue };
                for unit in &units {
                    let actual = r.response(key, unit).expect("validated responses are total");
                    if actual != forced {
                        violations.push(PrincipleViolation {
                            principle,
                            unit: unit.to_string(),
                            premises: vec![],
                            conclusion_key: key.clone(),
                            expected: forced.clone(),
                            actual: actual.clone(),
                        });
                    }
                }
            }
        }
        Principle::Composition => {
            let groups = crate::model::group_keys_by_intervention(r.outcomes.iter());
            for (w, vars_of_w) in &groups {
                for y_var in vars_of_w {
                    for z_var in vars_of_w {
                        let ky = OutcomeKey::new(y_var.clone(), w.clone());
                        let kz = OutcomeKey::new(z_var.clone(), w.clone());
                        for unit in &units {
                            let y = r.response(&ky, unit).expect("total").clone();
                            let z = r.response(&kz, unit).expect("total").clone();
                            let Some(wy) =
                                w.merged(&Valuation::from_pairs([(y_var.as_str(), y.clone())]))
                            else {
                                continue;
                            };
                            let conclusion = OutcomeKey::new(z_var.clone(), wy);
                            if !r.outcomes.contains(&conclusion) {
                                continue;
                            }
                            let actual = r.response(&conclusion, unit).expect("total").clone();
                            if actual != z {
                                violations.push(PrincipleViolation {
                                    principle,
                                    unit: unit.to_string(),
                                    premises: vec![(ky.clone(), y), (kz.clone(), z.clone())],
                                    conclusion_key: conclusion,
                                    expected: z,
                                    actual,
                                });
                            }
                        }
                    }
                }
            }
        }
        Principle::Reversibility => {
            // Y_{wz}(u) = y and Z_{wy}(u) = z imply Y_w(u) = y, for distinct
            // variables Y and Z (with Y = Z the schema contradicts
            // effectiveness outright).
            for key_yz in &r.outcomes {
                let y_var = key_yz.outcome.clone();
                for z_var in key_yz.intervention.names().map(str::to_string).collect::<Vec<_>>() {
                    if z_var == y_var {
                        continue;
                    }
                    let z = key_yz.intervention.get(&z_var).expect("present").clone();
                    let mut w = key_yz.intervention.clone();
                    w.remove(&z_var);
                    let conclusion = OutcomeKey::new(y_var.clone(), w.clone());
                    if !r.outcomes.contains(&conclusion) {
                        continue;
                    }
                    for unit in &units {
                        let y = r.response(key_yz, unit).expect("total").clone();
                        let Some(wy) =
                            w.merged(&Valuation::from_pairs([(y_var.as_str(), y.clone())]))
                        else {
                            continue;
                        };
                        let key_zy = OutcomeKey::new(z_var.clone(), wy);
                        if !r.outcomes.contains(&key_zy) {
                            continue;
                        }
                        let z_actual = r.response(&key_zy, unit).expect("total").clone();
                        if z_actual != z {
                            continue; // premise fails
                        }
                        let actual = r.response(&conclusion, unit).expect("total").clone();
                        if actual != y {
                            violations.push(PrincipleViolation {
                                principle,
                                unit: unit.to_string(),
                                premises: vec![
                                    (key_yz.clone(), y.clone()),
                                    (key_zy.clone(), z.clone()),
                                ],
                                conclusion_key: conclusion.clone(),
                                expected: y,
                                actual,
                            });
                        }
                    }
                }
            }
        }
    }

    violations
}

/// Per-unit constraint state for the extension search, over the full key
/// universe indexed densely.
struct UnitSearch<'a> {
    keys: &'a [OutcomeKey],
    index: &'a BTreeMap<OutcomeKey, usize>,
    domains: &'a [&'a [Value]],
    assignment: Vec<Option<Value>>,
    stats: SearchStats,
    budget: u64,
}

enum Propagation {
    Ok { trail_start: usize },
    Conflict,
}

impl<'a> UnitSearch<'a> {
    /// Assigns `idx := value`, closing under composition and reversibility.
    /// Newly assigned indices are appended to `trail` for rollback.
    fn assign_and_propagate(
        &mut self,
        idx: usize,
        value: Value,
        trail: &mut Vec<usize>,
    ) -> Propagation {
        let trail_start = trail.len();
        match &self.assignment[idx] {
            Some(existing) if *existing == value => return Propagation::Ok { trail_start },
            Some(_) => return Propagation::Conflict,
            None => {}
        }
        self.assignment[idx] = Some(value);
        trail.push(idx);
        let mut cursor = trail_start;
        while cursor < trail.len() {
            let current = trail[cursor];
            cursor += 1;
            if !self.propagate_from(current, trail) {
                return Propagation::Conflict;
            }
        }
        Propagation::Ok { trail_start }
    }

    fn rollback(&mut self, trail: &mut Vec<usize>, trail_start: usize) {
        while trail.len() > trail_start {
            let idx = trail.pop().unwrap();
            self.assignment[idx] = None;
        }
    }

    /// Fires every composition/reversibility instance whose premises became
    /// defined with `idx`. Forced conclusions are appended to the trail.
    fn propagate_from(&mut self, idx: usize, trail: &mut Vec<usize>) -> bool {
        let key = self.keys[idx].clone();
        let value = self.assignment[idx].clone().expect("assigned");
        let w = &key.intervention;

        // Composition, with this key as either premise: for each partner
        // V_w already assigned, premises (Y_w = y, Z_w = z) force Z_{wy} = z.
        let partners: Vec<(String, Value)> = self
            .index
            .iter()
            .filter(|(k, _)| k.intervention == *w)
            .filter_map(|(k, i)| self.assignment[*i].clone().map(|v| (k.outcome.clone(), v)))
            .collect();
        for (partner_var, partner_val) in &partners {
            // This key as Y, partner as Z.
            if let Some(wy) =
                w.merged(&Valuation::from_pairs([(key.outcome.as_str(), value.clone())]))
            {
                let conclusion = OutcomeKey::new(partner_var.clone(), wy);
                if !self.force(&conclusion, partner_val.clone(), trail) {
                    return false;
                }
            }
            // Partner as Y, this key as Z.
            if let Some(wy) =
                w.merged(&Valuation::from_pairs([(partner_var.as_str(), partner_val.clone())]))
            {
                let conclusion = OutcomeKey::new(key.outcome.clone(), wy);
                if !self.force(&conclusion, value.clone(), trail) {
                    return false;
                }
            }
        }

        // Reversibility with this key as Y_{wz}: for each decomposition of
        // the intervention as w' + {Z: z}, a matching Z_{w'y} = z forces
        // Y_{w'} = y.
        for z_var in key.intervention.names().map(str::to_string).collect::<Vec<_>>() {
            if z_var == key.outcome {
                continue;
            }
            let z = key.intervention.get(&z_var).expect("present").clone();
            let mut w_base = key.intervention.clone();
            w_base.remove(&z_var);
            let Some(wy) =
                w_base.merged(&Valuation::from_pairs([(key.outcome.as_str(), value.clone())]))
            else {
                continue;
            };
            let premise2 = OutcomeKey::new(z_var.clone(), wy);
            let Some(p2_idx) = self.index.get(&premise2) else { continue };
            if self.assignment[*p2_idx].as_ref() == Some(&z) {
                let conclusion = OutcomeKey::new(key.outcome.clone(), w_base);
                if !self.force(&conclusion, value.clone(), trail) {
                    return false;
                }
            }
        }

        // Reversibility with this key as Z_{wy}: find an assigned Y_{wz}
        // whose recorded value matches, then force Y_w = y.
        for y_var in key.intervention.names().map(str::to_string).collect::<Vec<_>>() {
            if y_var == key.outcome {
                continue;
            }
            let y = key.intervention.get(&y_var).expect("present").clone();
            let mut w_base = key.intervention.clone();
            w_base.remove(&y_var);
            let Some(wz) =
                w_base.merged(&Valuation::from_pairs([(key.outcome.as_str(), value.clone())]))
            else {
                continue;
            };
            let premise1 = OutcomeKey::new(y_var.clone(), wz);
            let Some(p1_idx) = self.index.get(&premise1) else { continue };
            if self.assignment[*p1_idx].as_ref() == Some(&y) {
                let conclusion = OutcomeKey::new(y_var.clone(), w_base);
                if !self.force(&conclusion, y.clone(), trail) {
                    return false;
                }
            }
        }

        true
    }

    fn force(&mut self, key: &OutcomeKey, value: Value, trail: &mut Vec<usize>) -> bool {
        let idx = *self.index.get(key).expect("conclusion key is in the universe");
        match &self.assignment[idx] {
            Some(existing) => *existing == value,
            None => {
                self.assignment[idx] = Some(value);
                self.stats.forced += 1;
                trail.push(idx);
                true
            }
        }
    }

    /// First-completion depth-first search over unassigned keys in canonical
    /// order, values in domain order.
    fn search(&mut self, next: usize) -> Result<bool, SearchError> {
        let Some(idx) = (next..self.keys.len()).find(|i| self.assignment[*i].is_none()) else {
            return Ok(true);
        };
        let domain: Vec<Value> = self.domains[idx].to_vec();
        for value in domain {
            self.stats.nodes += 1;
            if self.stats.nodes > self.budget {
                return Err(SearchError::BudgetExceeded { nodes: self.stats.nodes });
            }
            let mut trail = Vec::new();
            match self.assign_and_propagate(idx, value, &mut trail) {
                Propagation::Ok { trail_start } => {
                    if self.search(idx + 1)? {
                        return Ok(true);
                    }
                    self.rollback(&mut trail, trail_start);
                }
                Propagation::Conflict => {
                    self.stats.prunes += 1;
                    self.rollback(&mut trail, 0);
                }
            }
        }
        Ok(false)
    }
}

/// Searches for a full extension of `r` satisfying composition and
/// reversibility on every positive-mass unit. Zero-mass units are carried
/// through unconstrained: their undefined keys are filled with
/// effectiveness-forced values and first domain values.
pub fn find_full_extension(r: &Rcm, config: &SearchConfig) -> Result<ExtensionResult, SearchError> {
    let report = r.validate();
    if !report.is_structurally_valid() {
        return Err(SearchError::PreconditionViolated(format!(
            "structurally invalid model: {}",
            report.problems.join("; ")
        )));
    }
    if !report.effectiveness_violations.is_empty() {
        return Err(SearchError::PreconditionViolated("model violates effectiveness".to_string()));
    }
    if r.variables.len() > config.max_variables {
        return Err(SearchError::VariableCapExceeded {
            count: r.variables.len(),
            cap: config.max_variables,
        });
    }

    let keys = full_key_universe(&r.variables);
    let index: BTreeMap<OutcomeKey, usize> =
        keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
    let domains: Vec<&[Value]> =
        keys.iter().map(|k| r.variables.domain(&k.outcome).expect("known variable")).collect();

    let mut stats = SearchStats::default();
    let mut completions: BTreeMap<String, Vec<Value>> = BTreeMap::new();

    for unit in r.positive_units() {
        let mut search = UnitSearch {
            keys: &keys,
            index: &index,
            domains: &domains,
            assignment: vec![None; keys.len()],
            stats: SearchStats::default(),
            budget: config.node_budget.saturating_sub(stats.nodes),
        };

        // Seed: effectiveness-forced values first, then the model's own
        // responses, closing under the principles as we go.
        let mut trail = Vec::new();
        let mut conflict = false;
        for (i, key) in keys.iter().enumerate() {
            if let Some(forced) = key.intervention.get(&key.outcome) {
                let forced = forced.clone();
                if !matches!(
                    search.assign_and_propagate(i, forced, &mut trail),
                    Propagation::Ok { .. }
                ) {
                    conflict = true;
                    break;
                }
            }
        }
        if !conflict {
            for key in &r.outcomes {
                let idx = index[key];
                let value = r.response(key, unit).expect("total").clone();
                if !matches!(
                    search.assign_and_propagate(idx, value, &mut trail),
                    Propagation::Ok { .. }
                ) {
                    conflict = true;
                    break;
                }
            }
        }

        let completed = if conflict { false } else { search.search(0)? };
        stats.nodes += search.stats.nodes;
        stats.prunes += search.stats.prunes;
        stats.forced += search.stats.forced;
        if !completed {
            return Ok(ExtensionResult {
                found: false,
                full_rcm: None,
                stats,
                obstruction: Some(Obstruction {
                    unit: unit.to_string(),
                    detail: format!(
                        "no assignment of the undefined potential outcomes for unit {unit} \
                         satisfies composition and reversibility"
                    ),
                }),
            });
        }
        completions.insert(
            unit.to_string(),
            search.assignment.into_iter().map(|v| v.expect("complete")).collect(),
        );
    }

    let mut full = Rcm::new(
        r.variables.clone(),
        r.units.iter().map(|u| (u.clone(), r.mass(u))).collect(),
        keys.iter().cloned(),
    );
    for unit in &r.units {
        if let Some(values) = completions.get(unit) {
            for (key, value) in keys.iter().zip(values) {
                full.set_response(key, unit, value.clone());
            }
        } else {
            // Zero-mass unit: keep recorded responses, fill the rest.
            for key in &keys {
                let value = if let Some(v) = r.response(key, unit) {
                    v.clone()
                } else if let Some(forced) = key.intervention.get(&key.outcome) {
                    forced.clone()
                } else {
                    r.variables.domain(&key.outcome).expect("known")[0].clone()
                };
                full.set_response(key, unit, value);
            }
        }
    }

    Ok(ExtensionResult { found: true, full_rcm: Some(full), stats, obstruction: None })
}

/// Builds the structural witness from a full, effective, principle-clean
/// model: a single exogenous unit variable, every other endogenous variable
/// as a parent, and tables read off the potential responses.
pub fn synthesize_scm(r_full: &Rcm) -> Result<Scm, SearchError> {
    let universe = full_key_universe(&r_full.variables);
    if !universe.iter().all(|k| r_full.outcomes.contains(k)) {
        return Err(SearchError::PreconditionViolated("model is not full".into()));
    }
    let report = r_full.validate();
    if !report.is_structurally_valid() {
        return Err(SearchError::PreconditionViolated("model is structurally invalid".into()));
    }
    if !report.effectiveness_violations.is_empty() {
        return Err(SearchError::PreconditionViolated("model violates effectiveness".into()));
    }
    for principle in [Principle::Composition, Principle::Reversibility] {
        if let Some(v) = check_principle(r_full, principle, false).first() {
            return Err(SearchError::PreconditionViolated(format!(
                "{:?} fails at unit {} on {}",
                principle, v.unit, v.conclusion_key
            )));
        }
    }

    let positive: Vec<&str> = r_full.positive_units();
    if positive.is_empty() {
        return Err(SearchError::PreconditionViolated("no positive-mass units".into()));
    }
    let unit_var = Variable::new("U", positive.iter().map(|u| Value::Sym((*u).to_string())));

    let total: Rational = positive.iter().map(|u| r_full.mass(u)).sum();
    let mut exo_mass = BTreeMap::new();
    for u in &positive {
        let val = Valuation::from_pairs([(unit_var.name.as_str(), Value::Sym((*u).to_string()))]);
        exo_mass.insert(val, r_full.mass(u).div_exact(&total));
    }

    let endo_names: Vec<String> = r_full.variables.names().map(str::to_string).collect();
    let mut mechanisms = BTreeMap::new();
    for name in &endo_names {
        let others: Vec<&str> =
            endo_names.iter().map(|s| s.as_str()).filter(|n| *n != name).collect();
        let contexts = r_full.variables.valuations_of(&others);
        let mut table = BTreeMap::new();
        for u in &positive {
            for ctx in &contexts {
                let key = OutcomeKey::new(name.clone(), ctx.clone());
                let value = r_full.response(&key, u).expect("full").clone();
                let mut input = ctx.clone();
                input.insert(&unit_var.name, Value::Sym((*u).to_string()));
                table.insert(input, value);
            }
        }
        mechanisms.insert(
            name.clone(),
            Mechanism {
                variable: name.clone(),
                u_parents: vec![unit_var.name.clone()],
                v_parents: others.iter().map(|s| s.to_string()).collect(),
                table,
            },
        );
    }

    Ok(Scm {
        exogenous: VarSet::new([unit_var]),
        endogenous: r_full.variables.clone(),
        mechanisms,
        exo_mass,
    })
}

/// Exact distributional equality of the SCM's counterfactuals with the
/// RCM's, over the RCM's own keys.
pub fn represents(m: &Scm, r: &Rcm) -> Result<bool, ModelError> {
    let from_scm = m.cf_distribution(&r.outcomes)?;
    Ok(from_scm == r.cf_distribution())
}

/// Decides representability; on success also returns the structural witness.
pub fn is_representable(
    r: &Rcm,
    config: &SearchConfig,
) -> Result<(bool, Option<Scm>), SearchError> {
    let extension = find_full_extension(r, config)?;
    if !extension.found {
        return Ok((false, None));
    }
    let witness = synthesize_scm(extension.full_rcm.as_ref().expect("found"))?;
    Ok((true, Some(witness)))
}

/// Structural validity together with effectiveness, as one report.
pub fn validate_rcm(r: &Rcm) -> ValidationReport {
    r.validate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variable;

    fn val<'a>(pairs: impl IntoIterator<Item = (&'a str, i64)>) -> Valuation {
        Valuation::from_pairs(pairs.into_iter().map(|(k, v)| (k, Value::Int(v))))
    }

    /// Two-variable high-level model: a single unit with
    /// X'=1, Y'=1, Y'_{X'=1}=0, X'_{Y'=0}=1.
    fn high_level_pair() -> Rcm {
        let vars = VarSet::new([Variable::binary("X'"), Variable::binary("Y'")]);
        let keys = [
            OutcomeKey::plain("X'"),
            OutcomeKey::plain("Y'"),
            OutcomeKey::new("Y'", val([("X'", 1)])),
            OutcomeKey::new("X'", val([("Y'", 0)])),
        ];
        let mut r = Rcm::new(vars, vec![("u".into(), Rational::one())], keys.clone());
        r.set_response(&keys[0], "u", Value::Int(1));
        r.set_response(&keys[1], "u", Value::Int(1));
        r.set_response(&keys[2], "u", Value::Int(0));
        r.set_response(&keys[3], "u", Value::Int(1));
        r
    }

    /// Three-valued low-level counterpart: X=1, Y=1, Y_{X=2}=0, X_{Y=0}=1.
    fn low_level_pair() -> Rcm {
        let vars = VarSet::new([
            Variable::new("X", [Value::Int(0), Value::Int(1), Value::Int(2)]),
            Variable::binary("Y"),
        ]);
        let keys = [
            OutcomeKey::plain("X"),
            OutcomeKey::plain("Y"),
            OutcomeKey::new("Y", val([("X", 2)])),
            OutcomeKey::new("X", val([("Y", 0)])),
        ];
        let mut r = Rcm::new(vars, vec![("u".into(), Rational::one())], keys.clone());
        r.set_response(&keys[0], "u", Value::Int(1));
        r.set_response(&keys[1], "u", Value::Int(1));
        r.set_response(&keys[2], "u", Value::Int(0));
        r.set_response(&keys[3], "u", Value::Int(1));
        r
    }

    #[test]
    fn high_level_pair_violates_each_principle_once() {
        let r = high_level_pair();
        let comp = check_principle(&r, Principle::Composition, true);
        assert_eq!(comp.len(), 1, "{comp:?}");
        assert_eq!(comp[0].conclusion_key, OutcomeKey::new("Y'", val([("X'", 1)])));
        assert_eq!(comp[0].expected, Value::Int(1));
        assert_eq!(comp[0].actual, Value::Int(0));

        let rev = check_principle(&r, Principle::Reversibility, true);
        assert_eq!(rev.len(), 1, "{rev:?}");
        assert_eq!(rev[0].conclusion_key, OutcomeKey::plain("Y'"));
        assert_eq!(rev[0].expected, Value::Int(0));
        assert_eq!(rev[0].actual, Value::Int(1));
    }

    #[test]
    fn high_level_pair_is_not_representable() {
        let (ok, witness) = is_representable(&high_level_pair(), &SearchConfig::default()).unwrap();
        assert!(!ok);
        assert!(witness.is_none());
    }

    #[test]
    fn low_level_pair_is_representable_and_witnessed() {
        let r = low_level_pair();
        assert!(check_principle(&r, Principle::Composition, true).is_empty());
        assert!(check_principle(&r, Principle::Reversibility, true).is_empty());
        let (ok, witness) = is_representable(&r, &SearchConfig::default()).unwrap();
        assert!(ok);
        let witness = witness.unwrap();
        assert!(witness.is_uniquely_solvable());
        assert!(represents(&witness, &r).unwrap());
    }

    #[test]
    fn empty_outcome_set_is_vacuously_representable() {
        let vars = VarSet::new([Variable::binary("X")]);
        let r = Rcm::new(vars, vec![("u".into(), Rational::one())], []);
        let (ok, witness) = is_representable(&r, &SearchConfig::default()).unwrap();
        assert!(ok);
        assert!(represents(&witness.unwrap(), &r).unwrap());
    }

    #[test]
    fn variable_cap_guards_fullness() {
        let vars = VarSet::new((0..7).map(|i| Variable::binary(format!("V{i}"))));
        let r = Rcm::new(vars, vec![("u".into(), Rational::one())], []);
        let err = find_full_extension(&r, &SearchConfig::default()).unwrap_err();
        assert!(matches!(err, SearchError::VariableCapExceeded { count: 7, cap: 5 }));
    }

    #[test]
    fn exhausted_node_budget_is_distinct_from_not_found() {
        let r = low_level_pair();
        let err = find_full_extension(&r, &SearchConfig { max_variables: 5, node_budget: 0 })
            .unwrap_err();
        assert!(matches!(err, SearchError::BudgetExceeded { .. }));
    }

    #[test]
    fn non_effective_input_is_a_precondition_error() {
        let vars = VarSet::new([Variable::binary("X")]);
        let key = OutcomeKey::new("X", val([("X", 1)]));
        let mut r = Rcm::new(vars, vec![("u".into(), Rational::one())], [key.clone()]);
        r.set_response(&key, "u", Value::Int(0));
        let err = find_full_extension(&r, &SearchConfig::default()).unwrap_err();
        assert!(matches!(err, SearchError::PreconditionViolated(_)));
    }

    #[test]
    fn extension_output_is_full_and_principle_clean() {
        let r = low_level_pair();
        let result = find_full_extension(&r, &SearchConfig::default()).unwrap();
        assert!(result.found);
        let full = result.full_rcm.unwrap();
        assert_eq!(full.outcomes.len(), full_key_universe(&r.variables).len());
        assert!(check_principle(&full, Principle::Composition, false).is_empty());
        assert!(check_principle(&full, Principle::Reversibility, false).is_empty());
        for key in &r.outcomes {
            assert_eq!(full.response(key, "u"), r.response(key, "u"));
        }
    }

    #[test]
    fn extension_search_is_deterministic() {
        let r = low_level_pair();
        let a = find_full_extension(&r, &SearchConfig::default()).unwrap();
        let b = find_full_extension(&r, &SearchConfig::default()).unwrap();
        assert_eq!(a.full_rcm, b.full_rcm);
        assert_eq!(a.stats, b.stats);
    }

    #[test]
    fn single_variable_constant_synthesis() {
        // Full single-variable model: V(u)=1 and V_{V=v}(u)=v.
        let vars = VarSet::new([Variable::binary("V")]);
        let keys = full_key_universe(&vars);
        let mut r = Rcm::new(vars, vec![("u".into(), Rational::one())], keys.clone());
        for key in &keys {
            let v = key.intervention.get("V").cloned().unwrap_or(Value::Int(1));
            r.set_response(key, "u", v);
        }
        let m = synthesize_scm(&r).unwrap();
        let sol = m.solve_unique(m.support().next().unwrap().0, &Valuation::empty()).unwrap();
        assert_eq!(sol.get("V"), Some(&Value::Int(1)));
        assert!(represents(&m, &r).unwrap());
    }
}

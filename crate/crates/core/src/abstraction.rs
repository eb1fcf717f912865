//! Constructive translations between low- and high-level variable sets, the
//! induced partial maps on interventions and counterfactuals, abstraction
//! verification, and the lowering construction: every effective model is an
//! abstraction of a representable one.
//!
//! A translation groups low variables into cells, one per high variable (plus
//! a discard cell), with a partial surjective value map per cell. Partial
//! valuations translate by the cell-wise image rule: a high variable is bound
//! when the defined image of its constrained cell valuations is a single
//! value, untouched when that image is the whole range, and the translation
//! is undefined otherwise. Images are always taken over the points where the
//! value map is defined.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    CfPoint, Mechanism, ModelError, OutcomeKey, Rcm, Scm, ValidationReport, Valuation, Value,
    VarSet, Variable,
};
use crate::rational::Rational;

/// Where a low-level variable goes: a high-level cell or the discard cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellTarget {
    High(String),
    Discard(DiscardTag),
}

/// Serialized form of the discard cell, the literal token `<discard>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscardTag {
    #[serde(rename = "<discard>")]
    Discard,
}

impl CellTarget {
    pub fn discard() -> Self {
        CellTarget::Discard(DiscardTag::Discard)
    }

    pub fn high(&self) -> Option<&str> {
        match self {
            CellTarget::High(name) => Some(name),
            CellTarget::Discard(_) => None,
        }
    }
}

/// A constructive low-to-high variable correspondence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Translation {
    pub low_vars: VarSet,
    pub high_vars: VarSet,
    /// Every low variable maps to exactly one target cell.
    pub cells: BTreeMap<String, CellTarget>,
    /// Per high variable, a partial map from cell valuations to high values.
    pub value_maps: BTreeMap<String, BTreeMap<Valuation, Value>>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AbstractionError {
    #[error("translation undefined: {0}")]
    UndefinedTranslation(String),
    #[error("invalid translation: {0}")]
    InvalidTranslation(String),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl Translation {
    /// The identity translation on a variable set.
    pub fn identity(vars: &VarSet) -> Translation {
        let cells =
            vars.names().map(|n| (n.to_string(), CellTarget::High(n.to_string()))).collect();
        let value_maps = vars
            .iter()
            .map(|v| {
                let map: BTreeMap<Valuation, Value> = v
                    .domain
                    .iter()
                    .map(|val| {
                        (Valuation::from_pairs([(v.name.as_str(), val.clone())]), val.clone())
                    })
                    .collect();
                (v.name.clone(), map)
            })
            .collect();
        Translation { low_vars: vars.clone(), high_vars: vars.clone(), cells, value_maps }
    }

    /// The low variables in the cell of `high`, in canonical low order.
    pub fn cell_of(&self, high: &str) -> Vec<&str> {
        self.low_vars
            .names()
            .filter(|n| matches!(self.cells.get(*n), Some(CellTarget::High(h)) if h == high))
            .collect()
    }

    /// Partition coverage, disjointness (by construction of the map), and
    /// per-cell surjectivity.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for name in self.low_vars.names() {
            match self.cells.get(name) {
                None => report.problem(format!("low variable {name} is not assigned to a cell")),
                Some(CellTarget::High(h)) if !self.high_vars.contains(h) => {
                    report.problem(format!("low variable {name} maps to unknown high variable {h}"))
                }
                _ => {}
            }
        }
        for name in self.cells.keys() {
            if !self.low_vars.contains(name) {
                report.problem(format!("cell entry for unknown low variable {name}"));
            }
        }
        for high in self.high_vars.iter() {
            let cell = self.cell_of(&high.name);
            if cell.is_empty() {
                report.problem(format!("high variable {} has an empty cell", high.name));
            }
            let Some(map) = self.value_maps.get(&high.name) else {
                report.problem(format!("high variable {} has no value map", high.name));
                continue;
            };
            let cell_set: BTreeSet<&str> = cell.iter().copied().collect();
            for (input, output) in map {
                let input_names: BTreeSet<&str> = input.names().collect();
                if input_names != cell_set {
                    report.problem(format!(
                        "value map row [{input}] for {} is not over its cell",
                        high.name
                    ));
                }
                for (n, v) in input.iter() {
                    if let Some(dom) = self.low_vars.domain(n) {
                        if !dom.contains(v) {
                            report.problem(format!(
                                "value map row for {} sets {n} outside its domain",
                                high.name
                            ));
                        }
                    }
                }
                if !high.domain.contains(output) {
                    report.problem(format!(
                        "value map for {} outputs {output} outside its range",
                        high.name
                    ));
                }
            }
            let image: BTreeSet<&Value> = map.values().collect();
            for value in &high.domain {
                if !image.contains(value) {
                    report.problem(format!(
                        "value map for {} misses range value {value}: not surjective",
                        high.name
                    ));
                }
            }
        }
        report
    }

    fn assert_valid(&self) -> Result<(), AbstractionError> {
        let report = self.validate();
        if report.is_clean() {
            Ok(())
        } else {
            Err(AbstractionError::InvalidTranslation(report.problems.join("; ")))
        }
    }

    /// Componentwise translation of a total low valuation; discarded cells
    /// are ignored.
    pub fn translate_valuation(&self, v_low: &Valuation) -> Result<Valuation, AbstractionError> {
        let mut out = Valuation::empty();
        for high in self.high_vars.iter() {
            let cell = self.cell_of(&high.name);
            let mut projected = Valuation::empty();
            for name in &cell {
                let value = v_low.get(name).ok_or_else(|| {
                    AbstractionError::UndefinedTranslation(format!(
                        "valuation does not bind {name}"
                    ))
                })?;
                projected.insert(name, value.clone());
            }
            let map = self.value_maps.get(&high.name).expect("validated");
            let value = map.get(&projected).ok_or_else(|| {
                AbstractionError::UndefinedTranslation(format!(
                    "value map for {} undefined at [{projected}]",
                    high.name
                ))
            })?;
            out.insert(&high.name, value.clone());
        }
        Ok(out)
    }

    /// Translation of a partial valuation (an intervention). Returns `None`
    /// when no high-level partial valuation corresponds.
    pub fn translate_partial(&self, x_low: &Valuation) -> Option<Valuation> {
        let mut out = Valuation::empty();
        for high in self.high_vars.iter() {
            let cell = self.cell_of(&high.name);
            let map = self.value_maps.get(&high.name).expect("validated");

            // Image of the constrained cell valuations under the value map.
            let constrained: Valuation = x_low.project(&cell);
            let mut image: BTreeSet<&Value> = BTreeSet::new();
            for (input, output) in map {
                if input.extends(&constrained) {
                    image.insert(output);
                }
            }

            let range: BTreeSet<&Value> = high.domain.iter().collect();
            if image == range {
                continue; // untouched
            }
            if image.len() == 1 {
                out.insert(&high.name, (*image.iter().next().unwrap()).clone());
                continue;
            }
            return None;
        }
        Some(out)
    }

    /// Direct enumeration of the defining preimage equation; exponential in
    /// the low variable count and meant for cross-checking at small scale.
    pub fn translate_partial_bruteforce(&self, x_low: &Valuation) -> Option<Valuation> {
        let image: BTreeSet<Valuation> = self
            .low_vars
            .all_valuations()
            .into_iter()
            .filter(|v| v.extends(x_low))
            .filter_map(|v| self.translate_valuation(&v).ok())
            .collect();
        if image.is_empty() {
            return None;
        }

        let high_totals = self.high_vars.all_valuations();
        let high_names: Vec<&str> = self.high_vars.names().collect();
        let mut matches = Vec::new();
        for mask in 0..(1u64 << high_names.len()) {
            let subset: Vec<&str> = high_names
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, n)| *n)
                .collect();
            for x_high in self.high_vars.valuations_of(&subset) {
                let fiber: BTreeSet<Valuation> =
                    high_totals.iter().filter(|v| v.extends(&x_high)).cloned().collect();
                if fiber == image {
                    matches.push(x_high);
                }
            }
        }
        // Ties can only arise from single-valued ranges; prefer the
        // fewest-bound candidate, mirroring `translate_partial`.
        matches.sort_by_key(|v| v.len());
        matches.into_iter().next()
    }
}

/// Result of translating one low-level counterfactual.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterfactualTranslationResult {
    pub defined: bool,
    pub image: Option<CfPoint>,
    /// Two low interventions that translate to the same high intervention
    /// but disagree on the translated outcome block.
    pub conflict: Option<(Valuation, Valuation)>,
}

impl CounterfactualTranslationResult {
    fn undefined() -> Self {
        CounterfactualTranslationResult { defined: false, image: None, conflict: None }
    }

    fn conflicted(a: Valuation, b: Valuation) -> Self {
        CounterfactualTranslationResult { defined: false, image: None, conflict: Some((a, b)) }
    }
}

/// Translates a joint valuation of low outcomes onto the high outcome set.
/// Low intervention groups must cover exactly the high groups; a low group
/// translating to an intervention outside the high set must contribute an
/// empty outcome block (its outcomes vanish at the high level).
pub fn translate_counterfactual(
    t: &Translation,
    point: &CfPoint,
    high_outcomes: &BTreeSet<OutcomeKey>,
) -> Result<CounterfactualTranslationResult, AbstractionError> {
    t.assert_valid()?;

    // Group the low point by intervention: block of outcome values per x_L.
    let mut low_groups: BTreeMap<Valuation, Valuation> = BTreeMap::new();
    for (key, value) in point {
        low_groups
            .entry(key.intervention.clone())
            .or_insert_with(Valuation::empty)
            .insert(&key.outcome, value.clone());
    }

    // High groups: the variables each high intervention must cover.
    let high_groups = crate::model::group_keys_by_intervention(high_outcomes.iter());

    // Translate every low group.
    let mut translated: BTreeMap<Valuation, Vec<(Valuation, Valuation)>> = BTreeMap::new();
    for (x_low, block) in &low_groups {
        let Some(x_high) = t.translate_partial(x_low) else {
            return Ok(CounterfactualTranslationResult::undefined());
        };
        let Some(block_high) = t.translate_partial(block) else {
            return Ok(CounterfactualTranslationResult::undefined());
        };
        translated.entry(x_high).or_default().push((x_low.clone(), block_high));
    }

    let mut image = CfPoint::new();
    for (x_high, vars) in &high_groups {
        let Some(candidates) = translated.get(x_high) else {
            return Ok(CounterfactualTranslationResult::undefined());
        };
        let (_, first_block) = &candidates[0];
        for (other_low, other_block) in &candidates[1..] {
            if other_block != first_block {
                return Ok(CounterfactualTranslationResult::conflicted(
                    candidates[0].0.clone(),
                    other_low.clone(),
                ));
            }
        }
        let block_names: BTreeSet<&str> = first_block.names().collect();
        let wanted: BTreeSet<&str> = vars.iter().map(|s| s.as_str()).collect();
        if block_names != wanted {
            return Ok(CounterfactualTranslationResult::undefined());
        }
        for var in vars {
            image.insert(
                OutcomeKey::new(var.clone(), x_high.clone()),
                first_block.get(var).expect("checked").clone(),
            );
        }
    }

    // Low groups translating outside the high intervention set must vanish.
    for (x_high, candidates) in &translated {
        if !high_groups.contains_key(x_high) {
            for (_, block) in candidates {
                if !block.is_empty() {
                    return Ok(CounterfactualTranslationResult::undefined());
                }
            }
        }
    }

    Ok(CounterfactualTranslationResult { defined: true, image: Some(image), conflict: None })
}

/// Does `t` push the low model's counterfactual distribution exactly onto
/// the high model's? Support points with undefined translation fail the
/// check rather than being renormalized away.
pub fn is_abstraction(high: &Rcm, low: &Rcm, t: &Translation) -> Result<bool, AbstractionError> {
    t.assert_valid()?;
    let p_low = low.cf_distribution();
    let p_high = high.cf_distribution();

    let mut pushed: BTreeMap<CfPoint, Rational> = BTreeMap::new();
    for (point, mass) in p_low.support() {
        let result = translate_counterfactual(t, point, &high.outcomes)?;
        let Some(image) = result.image else {
            return Ok(false);
        };
        *pushed.entry(image).or_insert_with(Rational::zero) += mass;
    }
    let pushed = crate::model::CfDistribution::new(high.outcomes.clone(), pushed);
    Ok(pushed == p_high)
}

/// The output of the lowering construction: a representable low-level model,
/// the constructive translation back to the input, and the explicit
/// structural witness of the low model's representability.
#[derive(Debug, Clone)]
pub struct Lowering {
    pub low: Rcm,
    pub translation: Translation,
    pub witness: Scm,
}

fn low_name(var: &str, group: usize) -> String {
    format!("{var}@{group}")
}

enum ResponseSource {
    Original(OutcomeKey),
    Star,
}

/// Lowers an effective model: one padded copy group per distinct non-empty
/// intervention plus one for the empty intervention, with a fresh `<star>`
/// value marking coordinates outside their group's world. The translation
/// maps each cell valuation with a unique non-star coordinate to that
/// coordinate's value; the witness is a recursive structural model whose
/// counterfactual distribution reproduces the low model's.
pub fn lower(r: &Rcm) -> Result<Lowering, AbstractionError> {
    let report = r.validate();
    if !report.is_structurally_valid() {
        return Err(AbstractionError::PreconditionViolated(format!(
            "structurally invalid model: {}",
            report.problems.join("; ")
        )));
    }
    if !report.effectiveness_violations.is_empty() {
        return Err(AbstractionError::PreconditionViolated(
            "model violates effectiveness".to_string(),
        ));
    }
    for var in r.variables.iter() {
        if var.domain.iter().any(|v| v.is_star()) {
            return Err(AbstractionError::PreconditionViolated(format!(
                "domain of {} already contains the reserved padding value",
                var.name
            )));
        }
    }

    // Canonical grouping: non-empty interventions in valuation order, the
    // empty group always last (index n+1), present even when unused.
    let groups = crate::model::group_keys_by_intervention(r.outcomes.iter());
    let mut nonempty: Vec<(Valuation, BTreeSet<String>)> = Vec::new();
    let mut empty_vars: BTreeSet<String> = BTreeSet::new();
    for (x, vars) in groups {
        if x.is_empty() {
            empty_vars = vars;
        } else {
            nonempty.push((x, vars));
        }
    }
    let n = nonempty.len();

    // Low variables: (V, j) copies for j = 1..=n+1, padded domains.
    let mut low_vars_list = Vec::new();
    for var in r.variables.iter() {
        for j in 1..=n + 1 {
            let mut domain = var.domain.clone();
            domain.push(Value::star());
            low_vars_list.push(Variable::new(low_name(&var.name, j), domain));
        }
    }
    let low_vars = VarSet::new(low_vars_list);

    // Constructive translation over the copy families.
    let mut cells = BTreeMap::new();
    let mut value_maps = BTreeMap::new();
    for var in r.variables.iter() {
        let cell: Vec<String> = (1..=n + 1).map(|j| low_name(&var.name, j)).collect();
        for name in &cell {
            cells.insert(name.clone(), CellTarget::High(var.name.clone()));
        }
        let cell_refs: Vec<&str> = cell.iter().map(|s| s.as_str()).collect();
        let mut map = BTreeMap::new();
        for valuation in low_vars.valuations_of(&cell_refs) {
            let non_star: Vec<&Value> =
                valuation.iter().map(|(_, v)| v).filter(|v| !v.is_star()).collect();
            if non_star.len() == 1 {
                map.insert(valuation.clone(), non_star[0].clone());
            }
        }
        value_maps.insert(var.name.clone(), map);
    }
    let translation = Translation {
        low_vars: low_vars.clone(),
        high_vars: r.variables.clone(),
        cells,
        value_maps,
    };

    // Lowered interventions: group j's intervention on its copy coordinates.
    let low_interventions: Vec<Valuation> = nonempty
        .iter()
        .enumerate()
        .map(|(idx, (x, _))| {
            let mut low_x = Valuation::empty();
            for (name, value) in x.iter() {
                low_x.insert(&low_name(name, idx + 1), value.clone());
            }
            low_x
        })
        .collect();

    // Low outcome set and responses: each copy answers its own group's
    // world with the original response and every other world with padding.
    let star = Value::star();
    let mut low_outcomes: BTreeSet<OutcomeKey> = BTreeSet::new();
    let mut resolved: Vec<(OutcomeKey, ResponseSource)> = Vec::new();
    for (i, (x, vars)) in nonempty.iter().enumerate() {
        for var in vars {
            let own = OutcomeKey::new(low_name(var, i + 1), low_interventions[i].clone());
            resolved.push((
                own.clone(),
                ResponseSource::Original(OutcomeKey::new(var.clone(), x.clone())),
            ));
            low_outcomes.insert(own);
            for (j, low_x) in low_interventions.iter().enumerate() {
                if i != j {
                    let key = OutcomeKey::new(low_name(var, i + 1), low_x.clone());
                    resolved.push((key.clone(), ResponseSource::Star));
                    low_outcomes.insert(key);
                }
            }
            let key = OutcomeKey::new(low_name(var, i + 1), Valuation::empty());
            resolved.push((key.clone(), ResponseSource::Star));
            low_outcomes.insert(key);
        }
    }
    for var in &empty_vars {
        let own = OutcomeKey::new(low_name(var, n + 1), Valuation::empty());
        resolved.push((
            own.clone(),
            ResponseSource::Original(OutcomeKey::new(var.clone(), Valuation::empty())),
        ));
        low_outcomes.insert(own);
        for low_x in &low_interventions {
            let key = OutcomeKey::new(low_name(var, n + 1), low_x.clone());
            resolved.push((key.clone(), ResponseSource::Star));
            low_outcomes.insert(key);
        }
    }

    let mut low = Rcm::new(
        low_vars.clone(),
        r.units.iter().map(|u| (u.clone(), r.mass(u))).collect(),
        low_outcomes.iter().cloned(),
    );
    for unit in &r.units {
        for (key, source) in &resolved {
            let value = match source {
                ResponseSource::Original(orig) => r.response(orig, unit).expect("total").clone(),
                ResponseSource::Star => star.clone(),
            };
            low.set_response(key, unit, value);
        }
    }

    let witness = lowering_witness(r, &nonempty, &empty_vars, &low_vars);

    Ok(Lowering { low, translation, witness })
}

/// The recursive structural witness for the lowered model. Group worlds are
/// detected through anchor coordinates: a group's outcome copies read that
/// group's intervened copies, and the empty group's copies read one
/// representative intervened coordinate per non-empty group (all padding
/// exactly when nothing was intervened). Parent sets are trimmed to those
/// anchors so the function tables stay small; on every intervention the low
/// model mentions, solutions coincide with the everything-earlier-is-a-parent
/// construction.
fn lowering_witness(
    r: &Rcm,
    nonempty: &[(Valuation, BTreeSet<String>)],
    empty_vars: &BTreeSet<String>,
    low_vars: &VarSet,
) -> Scm {
    let star = Value::star();
    let unit_var = Variable::new("U", r.units.iter().map(|u| Value::Sym(u.clone())));
    let n = nonempty.len();

    let mut mechanisms: BTreeMap<String, Mechanism> = BTreeMap::new();
    for var in r.variables.iter() {
        for j in 1..=n + 1 {
            let name = low_name(&var.name, j);
            let fires = if j <= n {
                let (x, vars) = &nonempty[j - 1];
                !x.contains(&var.name) && vars.contains(&var.name)
            } else {
                empty_vars.contains(&var.name)
            };

            let mechanism = if !fires {
                constant_star(&name, &star)
            } else if j <= n {
                let (x, _) = &nonempty[j - 1];
                let anchors: Vec<String> = x.names().map(|x_name| low_name(x_name, j)).collect();
                let anchor_refs: Vec<&str> = anchors.iter().map(|s| s.as_str()).collect();
                let mut table = BTreeMap::new();
                for unit in &r.units {
                    let fired = r
                        .response(&OutcomeKey::new(var.name.clone(), x.clone()), unit)
                        .expect("total")
                        .clone();
                    for ctx in low_vars.valuations_of(&anchor_refs) {
                        let in_world = x
                            .iter()
                            .all(|(x_name, x_val)| ctx.get(&low_name(x_name, j)) == Some(x_val));
                        let mut input = ctx.clone();
                        input.insert(&unit_var.name, Value::Sym(unit.clone()));
                        table.insert(input, if in_world { fired.clone() } else { star.clone() });
                    }
                }
                Mechanism {
                    variable: name.clone(),
                    u_parents: vec![unit_var.name.clone()],
                    v_parents: anchors,
                    table,
                }
            } else {
                let anchors: Vec<String> = nonempty
                    .iter()
                    .enumerate()
                    .map(|(i, (x, _))| low_name(x.names().next().expect("non-empty"), i + 1))
                    .collect();
                let anchor_refs: Vec<&str> = anchors.iter().map(|s| s.as_str()).collect();
                let mut table = BTreeMap::new();
                for unit in &r.units {
                    let fired = r
                        .response(&OutcomeKey::new(var.name.clone(), Valuation::empty()), unit)
                        .expect("total")
                        .clone();
                    for ctx in low_vars.valuations_of(&anchor_refs) {
                        let all_star = ctx.iter().all(|(_, v)| v.is_star());
                        let mut input = ctx.clone();
                        input.insert(&unit_var.name, Value::Sym(unit.clone()));
                        table.insert(input, if all_star { fired.clone() } else { star.clone() });
                    }
                }
                Mechanism {
                    variable: name.clone(),
                    u_parents: vec![unit_var.name.clone()],
                    v_parents: anchors,
                    table,
                }
            };
            mechanisms.insert(name, mechanism);
        }
    }

    let exo_mass = r
        .units
        .iter()
        .map(|u| {
            (Valuation::from_pairs([(unit_var.name.as_str(), Value::Sym(u.clone()))]), r.mass(u))
        })
        .collect();

    Scm { exogenous: VarSet::new([unit_var]), endogenous: low_vars.clone(), mechanisms, exo_mass }
}

fn constant_star(name: &str, star: &Value) -> Mechanism {
    let mut table = BTreeMap::new();
    table.insert(Valuation::empty(), star.clone());
    Mechanism { variable: name.to_string(), u_parents: vec![], v_parents: vec![], table }
}

/// Builds the low-level submodel matching a high-level submodel: for every
/// dropped high outcome, the keys over its cell are dropped from every low
/// intervention group translating to the dropped key's intervention.
pub fn restrict_low_level(
    high: &Rcm,
    high_sub: &Rcm,
    low: &Rcm,
    t: &Translation,
) -> Result<Rcm, AbstractionError> {
    if !high_sub.is_submodel_of(high) {
        return Err(AbstractionError::PreconditionViolated(
            "second argument is not a submodel of the first".to_string(),
        ));
    }
    if !is_abstraction(high, low, t)? {
        return Err(AbstractionError::PreconditionViolated(
            "the high model does not abstract the low model under this translation".to_string(),
        ));
    }

    let dropped: Vec<&OutcomeKey> =
        high.outcomes.iter().filter(|k| !high_sub.outcomes.contains(*k)).collect();
    let low_groups = crate::model::group_keys_by_intervention(low.outcomes.iter());

    let mut keep = low.outcomes.clone();
    for key in dropped {
        let cell: BTreeSet<&str> = t.cell_of(&key.outcome).into_iter().collect();
        for x_low in low_groups.keys() {
            if t.translate_partial(x_low).as_ref() == Some(&key.intervention) {
                keep.retain(|k| !(k.intervention == *x_low && cell.contains(k.outcome.as_str())));
            }
        }
    }
    Ok(low.restricted_to(&keep)?)
}

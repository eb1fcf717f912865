//! Counterfactual distributions: exact rational probability maps over joint
//! valuations of a declared set of potential-outcome keys.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{CfPoint, ModelError, OutcomeKey, Value};
use crate::rational::Rational;

/// An exact distribution over `Val(O)` for a key set `O`. Zero-mass points
/// are never stored, so structural equality is distribution equality.
#[derive(Clone, PartialEq, Eq)]
pub struct CfDistribution {
    outcomes: BTreeSet<OutcomeKey>,
    mass: BTreeMap<CfPoint, Rational>,
}

impl CfDistribution {
    /// Builds a distribution, dropping zero-mass points. Panics if any mass
    /// is negative or a point does not cover exactly the declared keys.
    pub fn new(outcomes: BTreeSet<OutcomeKey>, mass: BTreeMap<CfPoint, Rational>) -> Self {
        let mut kept = BTreeMap::new();
        for (point, m) in mass {
            assert!(!m.is_negative(), "negative mass {m}");
            let keys: BTreeSet<_> = point.keys().cloned().collect();
            assert!(keys == outcomes, "support point keys differ from declared outcomes");
            if m.is_positive() {
                kept.insert(point, m);
            }
        }
        CfDistribution { outcomes, mass: kept }
    }

    pub fn outcomes(&self) -> &BTreeSet<OutcomeKey> {
        &self.outcomes
    }

    pub fn support(&self) -> impl Iterator<Item = (&CfPoint, &Rational)> {
        self.mass.iter()
    }

    pub fn total_mass(&self) -> Rational {
        self.mass.values().cloned().sum()
    }

    pub fn mass_of(&self, point: &CfPoint) -> Rational {
        self.mass.get(point).cloned().unwrap_or_else(Rational::zero)
    }

    /// Marginalizes onto a subset of the keys.
    pub fn marginalize(&self, keys: &BTreeSet<OutcomeKey>) -> Result<CfDistribution, ModelError> {
        for key in keys {
            if !self.outcomes.contains(key) {
                return Err(ModelError::UnknownOutcomeKey(key.clone()));
            }
        }
        let mut mass: BTreeMap<CfPoint, Rational> = BTreeMap::new();
        for (point, m) in &self.mass {
            let projected: CfPoint = point
                .iter()
                .filter(|(k, _)| keys.contains(*k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            *mass.entry(projected).or_insert_with(Rational::zero) += m;
        }
        Ok(CfDistribution::new(keys.clone(), mass))
    }

    /// Probability of an event given as a predicate on support points.
    /// Every key the predicate consults must be in `outcomes`; the typed
    /// entry point for formulas is `lang::eval`.
    pub fn probability_where(&self, pred: impl Fn(&CfPoint) -> bool) -> Rational {
        self.mass.iter().filter(|(p, _)| pred(p)).map(|(_, m)| m.clone()).sum()
    }

    /// Probability that the given keys take exactly the given values.
    pub fn probability_of(&self, event: &[(OutcomeKey, Value)]) -> Result<Rational, ModelError> {
        for (key, _) in event {
            if !self.outcomes.contains(key) {
                return Err(ModelError::UnknownOutcomeKey(key.clone()));
            }
        }
        Ok(self.probability_where(|point| event.iter().all(|(k, v)| point.get(k) == Some(v))))
    }
}

impl fmt::Debug for CfDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CfDistribution over {:?}", self.outcomes)?;
        for (point, m) in &self.mass {
            let entries: Vec<String> = point.iter().map(|(k, v)| format!("{k}={v}")).collect();
            writeln!(f, "  {}  ->  {m}", entries.join(" "))?;
        }
        Ok(())
    }
}

//! Finite, exact causal models.
//!
//! The crate provides:
//!
//! - [`model`]: Rubin causal models, structural causal models, interventions,
//!   and exact counterfactual distributions as pushforwards;
//! - [`representability`]: the potential-outcome coherence principles
//!   (effectiveness, composition, reversibility), full-extension search, and
//!   synthesis of a structural witness;
//! - [`abstraction`]: constructive translations between variable sets,
//!   translation of interventions and counterfactuals, abstraction checking,
//!   and the lowering construction that exhibits any effective model as an
//!   abstraction of a representable one;
//! - [`lang`]: a parser and exact evaluator for Boolean outcome formulas and
//!   polynomial comparisons over their probabilities;
//! - [`graph`]: causal diagrams, d-separation, single-world intervention
//!   graphs, and compilation of graphs into checkable constraint instances;
//! - [`format`]: the JSON document formats for models, translations,
//!   diagrams, and reports.
//!
//! All probability arithmetic is exact ([`rational::Rational`]); every
//! operation is a pure function of immutable inputs and is safe to call
//! concurrently.

pub mod abstraction;
pub mod format;
pub mod graph;
pub mod lang;
pub mod model;
pub mod rational;
pub mod representability;

pub use model::{CfDistribution, OutcomeKey, Rcm, Scm, Valuation, Value, VarSet, Variable};
pub use rational::Rational;

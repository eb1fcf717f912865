//! The counterfactual probability language: Boolean combinations of outcome
//! atoms (the base language) and Boolean combinations of polynomial
//! comparisons over probabilities of base events (the full language), with a
//! parser, canonical printer, exact evaluators, the unit-quantifier encoding,
//! and direct per-unit checking for cross-validation.
//!
//! Concrete syntax. Atoms are `Y[X=1,Z=0]=1`, with `Y[]=1` or `Y=1` for the
//! empty intervention; connectives `!`, `&`, `|`, `->`, `<->`; probability
//! `P(...)`; rational literals `3/4`, `2`, `0.25`; comparisons `>=`, `>`,
//! `=`, `<=`, `<`. A ratio `t1/t2 = t3/t4` is sugar for the cross-multiplied
//! equation `t1*t4 = t3*t2` and is accepted only under `=`. The identifier
//! `P` is reserved.

mod lexer;
mod parser;

pub use parser::{parse, parse_base, parse_formula, parse_term};

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::model::{CfDistribution, ModelError, OutcomeKey, Rcm, Value};
use crate::rational::Rational;

/// A Boolean combination of outcome atoms `Y_x = y`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BaseFormula {
    Atom { key: OutcomeKey, value: Value },
    Not(Box<BaseFormula>),
    And(Box<BaseFormula>, Box<BaseFormula>),
    Or(Box<BaseFormula>, Box<BaseFormula>),
    Implies(Box<BaseFormula>, Box<BaseFormula>),
    Iff(Box<BaseFormula>, Box<BaseFormula>),
}

/// Sums, products, and additive inverses of probability terms and exact
/// rational literals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProbTerm {
    Lit(Rational),
    Prob(BaseFormula),
    Neg(Box<ProbTerm>),
    Add(Box<ProbTerm>, Box<ProbTerm>),
    Sub(Box<ProbTerm>, Box<ProbTerm>),
    Mul(Box<ProbTerm>, Box<ProbTerm>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Ge,
    Gt,
    Eq,
    Le,
    Lt,
}

/// Boolean combinations of polynomial comparisons.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LFormula {
    Cmp { op: CmpOp, lhs: ProbTerm, rhs: ProbTerm },
    Not(Box<LFormula>),
    And(Box<LFormula>, Box<LFormula>),
    Or(Box<LFormula>, Box<LFormula>),
    Implies(Box<LFormula>, Box<LFormula>),
    Iff(Box<LFormula>, Box<LFormula>),
}

/// Any of the three syntactic categories, as classified by [`parse`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Parsed {
    Base(BaseFormula),
    Term(ProbTerm),
    Formula(LFormula),
}

/// The unit quantifier of an assumption, for the encoding into the full
/// language and for direct pointwise checking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantifier {
    ForAll,
    Exists,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("syntax error at byte {position}: found {found}, expected {}", expected.join(" or "))]
pub struct SyntaxError {
    pub position: usize,
    pub found: String,
    pub expected: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
}

// Builder methods named after the connectives; the types deliberately do
// not implement the std operator traits.
#[allow(clippy::should_implement_trait)]
impl BaseFormula {
    pub fn not(self) -> BaseFormula {
        BaseFormula::Not(Box::new(self))
    }

    pub fn and(self, rhs: BaseFormula) -> BaseFormula {
        BaseFormula::And(Box::new(self), Box::new(rhs))
    }

    pub fn or(self, rhs: BaseFormula) -> BaseFormula {
        BaseFormula::Or(Box::new(self), Box::new(rhs))
    }

    pub fn implies(self, rhs: BaseFormula) -> BaseFormula {
        BaseFormula::Implies(Box::new(self), Box::new(rhs))
    }

    pub fn iff(self, rhs: BaseFormula) -> BaseFormula {
        BaseFormula::Iff(Box::new(self), Box::new(rhs))
    }

    /// Conjunction of a non-empty list.
    pub fn conjunction(mut parts: Vec<BaseFormula>) -> BaseFormula {
        assert!(!parts.is_empty(), "empty conjunction");
        let mut out = parts.remove(0);
        for p in parts {
            out = out.and(p);
        }
        out
    }

    /// Every outcome key appearing in the formula.
    pub fn keys(&self) -> BTreeSet<OutcomeKey> {
        let mut out = BTreeSet::new();
        self.collect_keys(&mut out);
        out
    }

    fn collect_keys(&self, out: &mut BTreeSet<OutcomeKey>) {
        match self {
            BaseFormula::Atom { key, .. } => {
                out.insert(key.clone());
            }
            BaseFormula::Not(a) => a.collect_keys(out),
            BaseFormula::And(a, b)
            | BaseFormula::Or(a, b)
            | BaseFormula::Implies(a, b)
            | BaseFormula::Iff(a, b) => {
                a.collect_keys(out);
                b.collect_keys(out);
            }
        }
    }

    /// Truth under an atom assignment.
    pub fn eval_with(&self, lookup: &impl Fn(&OutcomeKey) -> Value) -> bool {
        match self {
            BaseFormula::Atom { key, value } => lookup(key) == *value,
            BaseFormula::Not(a) => !a.eval_with(lookup),
            BaseFormula::And(a, b) => a.eval_with(lookup) && b.eval_with(lookup),
            BaseFormula::Or(a, b) => a.eval_with(lookup) || b.eval_with(lookup),
            BaseFormula::Implies(a, b) => !a.eval_with(lookup) || b.eval_with(lookup),
            BaseFormula::Iff(a, b) => a.eval_with(lookup) == b.eval_with(lookup),
        }
    }
}

#[allow(clippy::should_implement_trait)]
impl ProbTerm {
    pub fn lit(n: i64, d: i64) -> ProbTerm {
        ProbTerm::Lit(Rational::new(n, d))
    }

    pub fn prob(f: BaseFormula) -> ProbTerm {
        ProbTerm::Prob(f)
    }

    pub fn add(self, rhs: ProbTerm) -> ProbTerm {
        ProbTerm::Add(Box::new(self), Box::new(rhs))
    }

    pub fn sub(self, rhs: ProbTerm) -> ProbTerm {
        ProbTerm::Sub(Box::new(self), Box::new(rhs))
    }

    pub fn mul(self, rhs: ProbTerm) -> ProbTerm {
        ProbTerm::Mul(Box::new(self), Box::new(rhs))
    }

    pub fn keys(&self) -> BTreeSet<OutcomeKey> {
        let mut out = BTreeSet::new();
        self.collect_keys(&mut out);
        out
    }

    fn collect_keys(&self, out: &mut BTreeSet<OutcomeKey>) {
        match self {
            ProbTerm::Lit(_) => {}
            ProbTerm::Prob(f) => f.collect_keys(out),
            ProbTerm::Neg(t) => t.collect_keys(out),
            ProbTerm::Add(a, b) | ProbTerm::Sub(a, b) | ProbTerm::Mul(a, b) => {
                a.collect_keys(out);
                b.collect_keys(out);
            }
        }
    }
}

impl LFormula {
    pub fn cmp(op: CmpOp, lhs: ProbTerm, rhs: ProbTerm) -> LFormula {
        LFormula::Cmp { op, lhs, rhs }
    }

    pub fn keys(&self) -> BTreeSet<OutcomeKey> {
        let mut out = BTreeSet::new();
        self.collect_keys(&mut out);
        out
    }

    fn collect_keys(&self, out: &mut BTreeSet<OutcomeKey>) {
        match self {
            LFormula::Cmp { lhs, rhs, .. } => {
                lhs.collect_keys(out);
                rhs.collect_keys(out);
            }
            LFormula::Not(a) => a.collect_keys(out),
            LFormula::And(a, b)
            | LFormula::Or(a, b)
            | LFormula::Implies(a, b)
            | LFormula::Iff(a, b) => {
                a.collect_keys(out);
                b.collect_keys(out);
            }
        }
    }
}

/// Probability of a base event under a counterfactual distribution: the sum
/// of support mass over points satisfying the formula.
pub fn query_probability(d: &CfDistribution, formula: &BaseFormula) -> Result<Rational, EvalError> {
    for key in formula.keys() {
        if !d.outcomes().contains(&key) {
            return Err(ModelError::UnknownOutcomeKey(key).into());
        }
    }
    let mut total = Rational::zero();
    for (point, mass) in d.support() {
        let satisfied = formula.eval_with(&|key: &OutcomeKey| {
            point.get(key).expect("keys checked against outcomes").clone()
        });
        if satisfied {
            total += mass;
        }
    }
    Ok(total)
}

/// Term evaluation against any event-probability assignment. The standard
/// semantics instantiates `prob` with marginalization of a counterfactual
/// distribution; model checkers may substitute an equivalent weighted
/// unit-row sum.
pub fn eval_term_with<E>(
    prob: &impl Fn(&BaseFormula) -> Result<Rational, E>,
    term: &ProbTerm,
) -> Result<Rational, E> {
    Ok(match term {
        ProbTerm::Lit(r) => r.clone(),
        ProbTerm::Prob(f) => prob(f)?,
        ProbTerm::Neg(t) => -&eval_term_with(prob, t)?,
        ProbTerm::Add(a, b) => &eval_term_with(prob, a)? + &eval_term_with(prob, b)?,
        ProbTerm::Sub(a, b) => &eval_term_with(prob, a)? - &eval_term_with(prob, b)?,
        ProbTerm::Mul(a, b) => &eval_term_with(prob, a)? * &eval_term_with(prob, b)?,
    })
}

/// Formula evaluation against any event-probability assignment.
pub fn eval_formula_with<E>(
    prob: &impl Fn(&BaseFormula) -> Result<Rational, E>,
    formula: &LFormula,
) -> Result<bool, E> {
    Ok(match formula {
        LFormula::Cmp { op, lhs, rhs } => {
            let l = eval_term_with(prob, lhs)?;
            let r = eval_term_with(prob, rhs)?;
            match op {
                CmpOp::Ge => l >= r,
                CmpOp::Gt => l > r,
                CmpOp::Eq => l == r,
                CmpOp::Le => l <= r,
                CmpOp::Lt => l < r,
            }
        }
        LFormula::Not(a) => !eval_formula_with(prob, a)?,
        LFormula::And(a, b) => eval_formula_with(prob, a)? && eval_formula_with(prob, b)?,
        LFormula::Or(a, b) => eval_formula_with(prob, a)? || eval_formula_with(prob, b)?,
        LFormula::Implies(a, b) => !eval_formula_with(prob, a)? || eval_formula_with(prob, b)?,
        LFormula::Iff(a, b) => eval_formula_with(prob, a)? == eval_formula_with(prob, b)?,
    })
}

/// Exact recursive evaluation of a polynomial probability term.
pub fn eval_term(d: &CfDistribution, term: &ProbTerm) -> Result<Rational, EvalError> {
    eval_term_with(&|f| query_probability(d, f), term)
}

/// Exact truth of a full-language formula under a distribution.
pub fn eval_formula(d: &CfDistribution, formula: &LFormula) -> Result<bool, EvalError> {
    eval_formula_with(&|f| query_probability(d, f), formula)
}

/// Encodes a unit-quantified base assumption into the full language: a
/// universal claim becomes a zero-probability statement about its negation,
/// an existential one a positive-probability statement.
pub fn encode(quantifier: Quantifier, matrix: &BaseFormula) -> LFormula {
    match quantifier {
        Quantifier::ForAll => LFormula::cmp(
            CmpOp::Eq,
            ProbTerm::Prob(matrix.clone().not()),
            ProbTerm::Lit(Rational::zero()),
        ),
        Quantifier::Exists => LFormula::cmp(
            CmpOp::Gt,
            ProbTerm::Prob(matrix.clone()),
            ProbTerm::Lit(Rational::zero()),
        ),
    }
}

/// Evaluates a quantified base assumption directly against unit response
/// rows, the semantics the encoding must reproduce over positive-mass units.
pub fn holds_pointwise(
    r: &Rcm,
    matrix: &BaseFormula,
    quantifier: Quantifier,
    include_zero_mass: bool,
) -> Result<bool, EvalError> {
    for key in matrix.keys() {
        if !r.outcomes.contains(&key) {
            return Err(ModelError::UnknownOutcomeKey(key).into());
        }
    }
    let units: Vec<&str> = if include_zero_mass {
        r.units.iter().map(|u| u.as_str()).collect()
    } else {
        r.positive_units()
    };
    let check = |unit: &str| {
        matrix.eval_with(&|key: &OutcomeKey| r.response(key, unit).expect("total").clone())
    };
    Ok(match quantifier {
        Quantifier::ForAll => units.iter().all(|u| check(u)),
        Quantifier::Exists => units.iter().any(|u| check(u)),
    })
}

// Canonical printing. Parenthesization is minimal with respect to the
// grammar's precedence; `parse(print(x)) == x` for every AST.

fn base_prec(f: &BaseFormula) -> u8 {
    match f {
        BaseFormula::Atom { .. } | BaseFormula::Not(_) => 4,
        BaseFormula::And(..) => 3,
        BaseFormula::Or(..) => 2,
        BaseFormula::Implies(..) => 1,
        BaseFormula::Iff(..) => 0,
    }
}

fn fmt_base(f: &BaseFormula, parent: u8, out: &mut fmt::Formatter<'_>) -> fmt::Result {
    let prec = base_prec(f);
    let need = prec < parent;
    if need {
        write!(out, "(")?;
    }
    match f {
        BaseFormula::Atom { key, value } => {
            write!(out, "{}[{}]={}", key.outcome, key.intervention, value)?
        }
        BaseFormula::Not(a) => {
            write!(out, "!")?;
            fmt_base(a, 4, out)?;
        }
        BaseFormula::And(a, b) => {
            fmt_base(a, 3, out)?;
            write!(out, " & ")?;
            fmt_base(b, 4, out)?;
        }
        BaseFormula::Or(a, b) => {
            fmt_base(a, 2, out)?;
            write!(out, " | ")?;
            fmt_base(b, 3, out)?;
        }
        BaseFormula::Implies(a, b) => {
            fmt_base(a, 2, out)?;
            write!(out, " -> ")?;
            fmt_base(b, 1, out)?;
        }
        BaseFormula::Iff(a, b) => {
            fmt_base(a, 1, out)?;
            write!(out, " <-> ")?;
            fmt_base(b, 1, out)?;
        }
    }
    if need {
        write!(out, ")")?;
    }
    Ok(())
}

impl fmt::Display for BaseFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_base(self, 0, f)
    }
}

fn term_prec(t: &ProbTerm) -> u8 {
    match t {
        ProbTerm::Lit(r) if r.is_negative() => 2,
        ProbTerm::Lit(_) | ProbTerm::Prob(_) => 3,
        ProbTerm::Neg(_) => 2,
        ProbTerm::Mul(..) => 1,
        ProbTerm::Add(..) | ProbTerm::Sub(..) => 0,
    }
}

fn fmt_term(t: &ProbTerm, parent: u8, out: &mut fmt::Formatter<'_>) -> fmt::Result {
    let prec = term_prec(t);
    let need = prec < parent;
    if need {
        write!(out, "(")?;
    }
    match t {
        ProbTerm::Lit(r) => write!(out, "{r}")?,
        ProbTerm::Prob(f) => write!(out, "P({f})")?,
        ProbTerm::Neg(a) => {
            write!(out, "-")?;
            fmt_term(a, 3, out)?;
        }
        ProbTerm::Add(a, b) => {
            fmt_term(a, 0, out)?;
            write!(out, " + ")?;
            fmt_term(b, 1, out)?;
        }
        ProbTerm::Sub(a, b) => {
            fmt_term(a, 0, out)?;
            write!(out, " - ")?;
            fmt_term(b, 1, out)?;
        }
        ProbTerm::Mul(a, b) => {
            fmt_term(a, 1, out)?;
            write!(out, " * ")?;
            fmt_term(b, 2, out)?;
        }
    }
    if need {
        write!(out, ")")?;
    }
    Ok(())
}

impl fmt::Display for ProbTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_term(self, 0, f)
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
            CmpOp::Eq => "=",
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
        };
        write!(f, "{s}")
    }
}

fn lformula_prec(f: &LFormula) -> u8 {
    match f {
        LFormula::Cmp { .. } | LFormula::Not(_) => 4,
        LFormula::And(..) => 3,
        LFormula::Or(..) => 2,
        LFormula::Implies(..) => 1,
        LFormula::Iff(..) => 0,
    }
}

fn fmt_lformula(f: &LFormula, parent: u8, out: &mut fmt::Formatter<'_>) -> fmt::Result {
    let prec = lformula_prec(f);
    let need = prec < parent;
    if need {
        write!(out, "(")?;
    }
    match f {
        LFormula::Cmp { op, lhs, rhs } => {
            fmt_term(lhs, 0, out)?;
            write!(out, " {op} ")?;
            fmt_term(rhs, 0, out)?;
        }
        LFormula::Not(a) => {
            write!(out, "!")?;
            fmt_lformula(a, 4, out)?;
        }
        LFormula::And(a, b) => {
            fmt_lformula(a, 3, out)?;
            write!(out, " & ")?;
            fmt_lformula(b, 4, out)?;
        }
        LFormula::Or(a, b) => {
            fmt_lformula(a, 2, out)?;
            write!(out, " | ")?;
            fmt_lformula(b, 3, out)?;
        }
        LFormula::Implies(a, b) => {
            fmt_lformula(a, 2, out)?;
            write!(out, " -> ")?;
            fmt_lformula(b, 1, out)?;
        }
        LFormula::Iff(a, b) => {
            fmt_lformula(a, 1, out)?;
            write!(out, " <-> ")?;
            fmt_lformula(b, 1, out)?;
        }
    }
    if need {
        write!(out, ")")?;
    }
    Ok(())
}

impl fmt::Display for LFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_lformula(self, 0, f)
    }
}

impl fmt::Display for Parsed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Parsed::Base(x) => write!(f, "{x}"),
            Parsed::Term(x) => write!(f, "{x}"),
            Parsed::Formula(x) => write!(f, "{x}"),
        }
    }
}

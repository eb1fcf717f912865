//! Recursive-descent parser for the formula language, with limited
//! backtracking to separate parenthesized formulas from parenthesized terms.

use super::lexer::{tokenize, Spanned, Token};
use super::{BaseFormula, CmpOp, LFormula, Parsed, ProbTerm, SyntaxError};
use crate::model::{OutcomeKey, Valuation, Value};
use crate::rational::Rational;

struct Parser<'t> {
    tokens: &'t [Spanned],
    pos: usize,
}

type PResult<T> = Result<T, SyntaxError>;

impl<'t> Parser<'t> {
    fn new(tokens: &'t [Spanned]) -> Self {
        Parser { tokens, pos: 0 }
    }

    fn peek(&self) -> &Token {
        &self.tokens[self.pos].token
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].offset
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].token.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, token: &Token) -> bool {
        if self.peek() == token {
            self.advance();
            true
        } else {
            false
        }
    }

    fn error<T>(&self, expected: &[&str]) -> PResult<T> {
        Err(SyntaxError {
            position: self.offset(),
            found: self.peek().to_string(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn expect(&mut self, token: Token, what: &str) -> PResult<()> {
        if self.eat(&token) {
            Ok(())
        } else {
            self.error(&[what])
        }
    }

    fn at_end(&self) -> bool {
        matches!(self.peek(), Token::End)
    }

    // ---- base formulas -------------------------------------------------

    fn base_formula(&mut self) -> PResult<BaseFormula> {
        let mut lhs = self.base_implies()?;
        while self.eat(&Token::Iff) {
            let rhs = self.base_implies()?;
            lhs = lhs.iff(rhs);
        }
        Ok(lhs)
    }

    fn base_implies(&mut self) -> PResult<BaseFormula> {
        let lhs = self.base_or()?;
        if self.eat(&Token::Arrow) {
            let rhs = self.base_implies()?;
            return Ok(lhs.implies(rhs));
        }
        Ok(lhs)
    }

    fn base_or(&mut self) -> PResult<BaseFormula> {
        let mut lhs = self.base_and()?;
        while self.eat(&Token::Pipe) {
            let rhs = self.base_and()?;
            lhs = lhs.or(rhs);
        }
        Ok(lhs)
    }

    fn base_and(&mut self) -> PResult<BaseFormula> {
        let mut lhs = self.base_unary()?;
        while self.eat(&Token::Amp) {
            let rhs = self.base_unary()?;
            lhs = lhs.and(rhs);
        }
        Ok(lhs)
    }

    fn base_unary(&mut self) -> PResult<BaseFormula> {
        if self.eat(&Token::Bang) {
            return Ok(self.base_unary()?.not());
        }
        if self.eat(&Token::LParen) {
            let inner = self.base_formula()?;
            self.expect(Token::RParen, "`)`")?;
            return Ok(inner);
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<BaseFormula> {
        let Token::Ident(name) = self.peek().clone() else {
            return self.error(&["an outcome atom"]);
        };
        if name == "P" {
            return self.error(&["an outcome atom (`P` is reserved)"]);
        }
        self.advance();
        let intervention = if self.eat(&Token::LBracket) {
            let mut v = Valuation::empty();
            if !self.eat(&Token::RBracket) {
                loop {
                    let Token::Ident(var) = self.peek().clone() else {
                        return self.error(&["a variable name"]);
                    };
                    self.advance();
                    self.expect(Token::Eq, "`=`")?;
                    let value = self.value()?;
                    v.insert(&var, value);
                    if self.eat(&Token::Comma) {
                        continue;
                    }
                    self.expect(Token::RBracket, "`]` or `,`")?;
                    break;
                }
            }
            v
        } else {
            Valuation::empty()
        };
        self.expect(Token::Eq, "`=`")?;
        let value = self.value()?;
        Ok(BaseFormula::Atom { key: OutcomeKey::new(name, intervention), value })
    }

    fn value(&mut self) -> PResult<Value> {
        match self.peek().clone() {
            Token::Int(s) => {
                self.advance();
                Ok(Value::Int(s.parse().map_err(|_| SyntaxError {
                    position: self.offset(),
                    found: format!("integer `{s}`"),
                    expected: vec!["a value within i64 range".to_string()],
                })?))
            }
            Token::Minus => {
                self.advance();
                match self.peek().clone() {
                    Token::Int(s) => {
                        self.advance();
                        let n: i64 = s.parse().map_err(|_| SyntaxError {
                            position: self.offset(),
                            found: format!("integer `{s}`"),
                            expected: vec!["a value within i64 range".to_string()],
                        })?;
                        Ok(Value::Int(-n))
                    }
                    _ => self.error(&["an integer"]),
                }
            }
            Token::Ident(s) => {
                self.advance();
                Ok(Value::Sym(s))
            }
            Token::StarValue => {
                self.advance();
                Ok(Value::star())
            }
            _ => self.error(&["a value"]),
        }
    }

    // ---- probability terms ---------------------------------------------

    fn term_sum(&mut self) -> PResult<ProbTerm> {
        let mut lhs = self.term_product()?;
        loop {
            if self.eat(&Token::Plus) {
                lhs = lhs.add(self.term_product()?);
            } else if self.eat(&Token::Minus) {
                lhs = lhs.sub(self.term_product()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term_product(&mut self) -> PResult<ProbTerm> {
        let mut lhs = self.term_unary()?;
        while self.eat(&Token::Times) {
            lhs = lhs.mul(self.term_unary()?);
        }
        Ok(lhs)
    }

    fn term_unary(&mut self) -> PResult<ProbTerm> {
        if self.eat(&Token::Minus) {
            let inner = self.term_unary()?;
            // Fold negated literals so printing round-trips.
            return Ok(match inner {
                ProbTerm::Lit(r) => ProbTerm::Lit(-r),
                other => ProbTerm::Neg(Box::new(other)),
            });
        }
        self.term_primary()
    }

    fn term_primary(&mut self) -> PResult<ProbTerm> {
        match self.peek().clone() {
            Token::Ident(name) if name == "P" => {
                self.advance();
                self.expect(Token::LParen, "`(`")?;
                let event = self.base_formula()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(ProbTerm::Prob(event))
            }
            Token::Int(numer) => {
                self.advance();
                // Greedy rational literal: INT / INT.
                if *self.peek() == Token::Slash {
                    if let Token::Int(denom) = self.tokens[self.pos + 1].token.clone() {
                        self.advance();
                        self.advance();
                        let lit = format!("{numer}/{denom}");
                        return Ok(ProbTerm::Lit(Rational::parse(&lit).map_err(|e| {
                            SyntaxError {
                                position: self.offset(),
                                found: format!("`{lit}`"),
                                expected: vec![e.to_string()],
                            }
                        })?));
                    }
                }
                Ok(ProbTerm::Lit(Rational::parse(&numer).expect("lexed integer")))
            }
            Token::Decimal(s) => {
                self.advance();
                Ok(ProbTerm::Lit(Rational::parse(&s).expect("lexed decimal")))
            }
            Token::LParen => {
                self.advance();
                let inner = self.term_sum()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(inner)
            }
            _ => self.error(&["`P(`", "a rational literal", "`(`"]),
        }
    }

    // ---- full-language formulas ----------------------------------------

    fn lformula(&mut self) -> PResult<LFormula> {
        let mut lhs = self.l_implies()?;
        while self.eat(&Token::Iff) {
            let rhs = self.l_implies()?;
            lhs = LFormula::Iff(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn l_implies(&mut self) -> PResult<LFormula> {
        let lhs = self.l_or()?;
        if self.eat(&Token::Arrow) {
            let rhs = self.l_implies()?;
            return Ok(LFormula::Implies(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn l_or(&mut self) -> PResult<LFormula> {
        let mut lhs = self.l_and()?;
        while self.eat(&Token::Pipe) {
            let rhs = self.l_and()?;
            lhs = LFormula::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn l_and(&mut self) -> PResult<LFormula> {
        let mut lhs = self.l_unary()?;
        while self.eat(&Token::Amp) {
            let rhs = self.l_unary()?;
            lhs = LFormula::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn l_unary(&mut self) -> PResult<LFormula> {
        if self.eat(&Token::Bang) {
            return Ok(LFormula::Not(Box::new(self.l_unary()?)));
        }
        if *self.peek() == Token::LParen {
            // Either a parenthesized formula or a parenthesized term opening
            // a comparison; try the formula reading first.
            let save = self.pos;
            self.advance();
            if let Ok(inner) = self.lformula() {
                if self.eat(&Token::RParen) && !self.starts_comparison_tail() {
                    return Ok(inner);
                }
            }
            self.pos = save;
        }
        self.comparison()
    }

    fn starts_comparison_tail(&self) -> bool {
        matches!(
            self.peek(),
            Token::Ge
                | Token::Gt
                | Token::Eq
                | Token::Le
                | Token::Lt
                | Token::Plus
                | Token::Minus
                | Token::Times
                | Token::Slash
        )
    }

    /// One comparison, with the ratio sugar `t1/t2 = t3/t4` desugared to the
    /// cross-multiplied product equation.
    fn comparison(&mut self) -> PResult<LFormula> {
        let (lhs, lhs_denom) = self.ratio_side()?;
        let op = match self.advance() {
            Token::Ge => CmpOp::Ge,
            Token::Gt => CmpOp::Gt,
            Token::Eq => CmpOp::Eq,
            Token::Le => CmpOp::Le,
            Token::Lt => CmpOp::Lt,
            _ => {
                self.pos -= 1;
                return self.error(&["a comparison operator"]);
            }
        };
        let (rhs, rhs_denom) = self.ratio_side()?;
        if (lhs_denom.is_some() || rhs_denom.is_some()) && op != CmpOp::Eq {
            return self.error(&["`=` (ratios are sugar for cross-multiplied equalities)"]);
        }
        let new_lhs = match rhs_denom {
            Some(d) => lhs.mul(d),
            None => lhs,
        };
        let new_rhs = match lhs_denom {
            Some(d) => rhs.mul(d),
            None => rhs,
        };
        Ok(LFormula::Cmp { op, lhs: new_lhs, rhs: new_rhs })
    }

    fn ratio_side(&mut self) -> PResult<(ProbTerm, Option<ProbTerm>)> {
        let numerator = self.term_sum()?;
        if self.eat(&Token::Slash) {
            let denominator = self.term_sum()?;
            Ok((numerator, Some(denominator)))
        } else {
            Ok((numerator, None))
        }
    }
}

fn run<T>(text: &str, f: impl FnOnce(&mut Parser) -> PResult<T>) -> PResult<T> {
    let tokens = tokenize(text)?;
    let mut parser = Parser::new(&tokens);
    let result = f(&mut parser)?;
    if !parser.at_end() {
        return parser.error(&["end of input"]);
    }
    Ok(result)
}

/// Parses a base-language formula.
pub fn parse_base(text: &str) -> Result<BaseFormula, SyntaxError> {
    run(text, |p| p.base_formula())
}

/// Parses a polynomial probability term.
pub fn parse_term(text: &str) -> Result<ProbTerm, SyntaxError> {
    run(text, |p| p.term_sum())
}

/// Parses a full-language formula.
pub fn parse_formula(text: &str) -> Result<LFormula, SyntaxError> {
    run(text, |p| p.lformula())
}

/// Classifies the input as a full-language formula, a probability term, or
/// a base formula, trying in that order. The reported error is the one from
/// the attempt that progressed furthest.
pub fn parse(text: &str) -> Result<Parsed, SyntaxError> {
    let formula = match parse_formula(text) {
        Ok(f) => return Ok(Parsed::Formula(f)),
        Err(e) => e,
    };
    let term = match parse_term(text) {
        Ok(t) => return Ok(Parsed::Term(t)),
        Err(e) => e,
    };
    let base = match parse_base(text) {
        Ok(b) => return Ok(Parsed::Base(b)),
        Err(e) => e,
    };
    let mut best = formula;
    for e in [term, base] {
        if e.position > best.position {
            best = e;
        }
    }
    Err(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{encode, Quantifier};

    fn atom(text: &str) -> BaseFormula {
        parse_base(text).unwrap()
    }

    #[test]
    fn parses_atoms_and_interventions() {
        let f = atom("X[Z=0]=1");
        let BaseFormula::Atom { key, value } = &f else { panic!() };
        assert_eq!(key.outcome, "X");
        assert_eq!(key.intervention.get("Z"), Some(&Value::Int(0)));
        assert_eq!(*value, Value::Int(1));

        // Omitted brackets mean the empty intervention.
        assert_eq!(atom("Y=1"), atom("Y[]=1"));
    }

    #[test]
    fn parses_the_monotonicity_encoding() {
        let parsed = parse("P(!(X[Z=0]=1 -> X[Z=1]=1)) = 0").unwrap();
        let expected = encode(Quantifier::ForAll, &atom("X[Z=0]=1 -> X[Z=1]=1"));
        assert_eq!(parsed, Parsed::Formula(expected));
    }

    #[test]
    fn classifies_probability_terms() {
        let parsed = parse("P(Y[]=1)").unwrap();
        assert!(matches!(parsed, Parsed::Term(ProbTerm::Prob(_))));
    }

    #[test]
    fn dangling_parenthesis_is_a_syntax_error() {
        let err = parse("P(A[B=1]=0) * P(").unwrap_err();
        assert!(err.position >= 15, "{err:?}");
    }

    #[test]
    fn ratio_sugar_cross_multiplies() {
        // t1/t2 = t3 becomes t1 = t3 * t2.
        let sugar = parse_formula("P(A=1) / P(B=1) = 1/2").unwrap();
        let LFormula::Cmp { op, lhs, rhs } = &sugar else { panic!() };
        assert_eq!(*op, CmpOp::Eq);
        assert_eq!(lhs.to_string(), "P(A[]=1)");
        assert_eq!(rhs.to_string(), "1/2 * P(B[]=1)");

        // Denominators on both sides cross-multiply.
        let both = parse_formula("P(A=1) / P(B=1) = P(C=1) / P(D=1)").unwrap();
        let LFormula::Cmp { lhs, rhs, .. } = &both else { panic!() };
        assert_eq!(lhs.to_string(), "P(A[]=1) * P(D[]=1)");
        assert_eq!(rhs.to_string(), "P(C[]=1) * P(B[]=1)");
    }

    #[test]
    fn ratio_sugar_rejected_under_inequalities() {
        assert!(parse_formula("P(A=1) / P(B=1) >= 1/2").is_err());
    }

    #[test]
    fn rational_literals_bind_tighter_than_ratio() {
        let t = parse_term("1/2").unwrap();
        assert_eq!(t, ProbTerm::Lit(Rational::new(1, 2)));
        let t = parse_term("-1/2").unwrap();
        assert_eq!(t, ProbTerm::Lit(Rational::new(-1, 2)));
        let t = parse_term("0.25").unwrap();
        assert_eq!(t, ProbTerm::Lit(Rational::new(1, 4)));
    }

    #[test]
    fn parenthesized_terms_open_comparisons() {
        let f = parse_formula("(P(A=1) + 1/4) = 1").unwrap();
        let LFormula::Cmp { lhs, .. } = &f else { panic!() };
        assert_eq!(lhs.to_string(), "P(A[]=1) + 1/4");
    }

    #[test]
    fn parenthesized_formulas_compose() {
        let f = parse_formula("(P(A=1) = 1) & P(B=0) > 0").unwrap();
        assert!(matches!(f, LFormula::And(..)));
    }

    #[test]
    fn print_parse_round_trip() {
        let samples = [
            "P(!(X[Z=0]=1 -> X[Z=1]=1)) = 0",
            "P(A=1 & B=0 | !C=2) - P(D[E=1]=0) * 3/4 >= -1/2",
            "(P(A=1) = 1) & (P(B=0) > 0 | P(C=1) < 1)",
            "P(A=1) * P(B=1) + -1/2 <= P(C=0)",
        ];
        for s in samples {
            let first = parse_formula(s).unwrap();
            let printed = first.to_string();
            let second = parse_formula(&printed).unwrap();
            assert_eq!(first, second, "round trip through `{printed}`");
        }
        let bases = ["A=1 & (B=0 | C=1) -> !D[E=2]=0", "A=1 <-> B=0 <-> C=1"];
        for s in bases {
            let first = parse_base(s).unwrap();
            let printed = first.to_string();
            assert_eq!(parse_base(&printed).unwrap(), first, "round trip through `{printed}`");
        }
    }

    #[test]
    fn star_value_parses() {
        let f = atom("X@1[Y@2=<star>]=<star>");
        let BaseFormula::Atom { key, value } = &f else { panic!() };
        assert!(value.is_star());
        assert!(key.intervention.get("Y@2").unwrap().is_star());
    }
}

//! Recursive-descent parser for queries, conditions and expressions.
//!
//! ```text
//! query     := primary (("×" | "*") primary)*
//! primary   := "project" "[" attrs? "]" "(" query ")"
//!            | "select" "(" cond "," query ")"
//!            | ("product" | "union" | "except") "(" query "," query ")"
//!            | "apply" "(" expr "," query ")"
//!            | "sum" "[" attrs? ";" ATTR "]" "(" query ")"
//!            | "count" "[" attrs? "]" "(" query ")"
//!            | ("avg" | "min" | "max") "[" attrs? ";" ATTR "]" "(" query ")"
//!            | "dedup" "(" query ")"
//!            | "values" "[" INT "]" "{" (row ("," row)*)? "}"
//!            | IDENT
//!            | "(" query ")"
//! row       := "(" (expr ("," expr)*)? ")" ("*" INT)?
//! attrs     := ATTR ("," ATTR)*
//! cond      := conj ("or" conj)*
//! conj      := negation ("and" negation)*
//! negation  := "not" negation | "const" "(" ATTR ")" | atom | "(" cond ")"
//! atom      := expr CMP expr | ATTR "in" interval
//! interval  := ("[" | "(") bound "," bound ("]" | ")")
//! bound     := "-inf" | "+inf" | "inf" | expr
//! expr      := term (("+" | "-") term)*
//! term      := unary (("*" | "/") unary)*
//! unary     := "-" NUMBER | "-" unary | "+" unary | primary_expr
//! primary_expr := NUMBER | ATTR | NULL | "(" expr ")"
//! ```
//!
//! `$i = $j` and `$i < $j` between two bare attributes are the core atoms;
//! any other comparison is an arithmetic condition. CMP is one of
//! `= != < > <= >=`.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use super::lexer::{tokenize, Pos, Spanned, Token};
use super::{Bound, CmpOp, Condition, IntervalSpec, Literal, Query};
use crate::expr::RatExpr;
use crate::model::NullId;

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: BTreeSet<String>,
    pub found: String,
    pub message: Option<String>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: ", self.line, self.column)?;
        if let Some(msg) = &self.message {
            return f.write_str(msg);
        }
        let expected: Vec<&str> = self.expected.iter().map(String::as_str).collect();
        write!(f, "expected {}, found {}", expected.join(" or "), self.found)
    }
}

const KEYWORDS: &[&str] = &[
    "project", "select", "product", "union", "except", "apply", "sum", "count", "avg", "min",
    "max", "dedup", "values", "and", "or", "not", "const", "in", "inf",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

pub fn parse(text: &str) -> Result<Query, ParseError> {
    let mut p = Parser::new(text)?;
    let q = p.query()?;
    p.finish()?;
    Ok(q)
}

pub fn parse_condition(text: &str) -> Result<Condition, ParseError> {
    let mut p = Parser::new(text)?;
    let c = p.condition()?;
    p.finish()?;
    Ok(c)
}

pub fn parse_expr(text: &str) -> Result<RatExpr, ParseError> {
    let mut p = Parser::new(text)?;
    let e = p.expr()?;
    p.finish()?;
    Ok(e)
}

/// Parses an interval endpoint: an expression or `±inf`.
pub fn parse_bound(text: &str) -> Result<Bound, ParseError> {
    let mut p = Parser::new(text)?;
    let b = p.bound()?;
    p.finish()?;
    Ok(b)
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    // furthest failure seen, kept across backtracking
    furthest: Option<(usize, ParseError)>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn new(text: &str) -> PResult<Self> {
        let tokens = tokenize(text).map_err(|e| ParseError {
            line: e.pos.line,
            column: e.pos.column,
            expected: BTreeSet::new(),
            found: String::new(),
            message: Some(e.message),
        })?;
        Ok(Parser {
            tokens,
            pos: 0,
            furthest: None,
        })
    }

    fn peek(&self) -> &Token {
        &self.tokens[self.pos].token
    }

    fn peek_at(&self, offset: usize) -> &Token {
        let i = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[i].token
    }

    fn here(&self) -> Pos {
        self.tokens[self.pos].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].token.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&mut self, expected: &[&str]) -> ParseError {
        let pos = self.here();
        let mut err = ParseError {
            line: pos.line,
            column: pos.column,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().to_string(),
            message: None,
        };
        match &mut self.furthest {
            Some((at, prev)) if *at > self.pos => return prev.clone(),
            Some((at, prev)) if *at == self.pos => {
                err.expected.extend(prev.expected.iter().cloned());
                *prev = err.clone();
            }
            _ => self.furthest = Some((self.pos, err.clone())),
        }
        err
    }

    fn message(&self, msg: String) -> ParseError {
        let pos = self.here();
        ParseError {
            line: pos.line,
            column: pos.column,
            expected: BTreeSet::new(),
            found: self.peek().to_string(),
            message: Some(msg),
        }
    }

    fn expect(&mut self, token: Token) -> PResult<()> {
        if *self.peek() == token {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&[&token.to_string()]))
        }
    }

    fn eat(&mut self, token: &Token) -> bool {
        if self.peek() == token {
            self.bump();
            true
        } else {
            false
        }
    }

    fn at_keyword(&self, word: &str) -> bool {
        matches!(self.peek(), Token::Ident(w) if w == word)
    }

    fn finish(&mut self) -> PResult<()> {
        if *self.peek() == Token::Eof {
            Ok(())
        } else {
            Err(self.error(&["end of input"]))
        }
    }

    fn query(&mut self) -> PResult<Query> {
        let mut q = self.primary_query()?;
        while matches!(self.peek(), Token::Times | Token::Star) {
            self.bump();
            let rhs = self.primary_query()?;
            q = Query::product(q, rhs);
        }
        Ok(q)
    }

    fn primary_query(&mut self) -> PResult<Query> {
        match self.peek().clone() {
            Token::LParen => {
                self.bump();
                let q = self.query()?;
                self.expect(Token::RParen)?;
                Ok(q)
            }
            Token::Ident(word) => {
                self.bump();
                match word.as_str() {
                    "project" => {
                        let attrs = self.bracket_attrs()?;
                        let q = self.paren_query()?;
                        Ok(Query::project(attrs, q))
                    }
                    "select" => {
                        self.expect(Token::LParen)?;
                        let c = self.condition()?;
                        self.expect(Token::Comma)?;
                        let q = self.query()?;
                        self.expect(Token::RParen)?;
                        Ok(Query::select(c, q))
                    }
                    "product" | "union" | "except" => {
                        self.expect(Token::LParen)?;
                        let a = self.query()?;
                        self.expect(Token::Comma)?;
                        let b = self.query()?;
                        self.expect(Token::RParen)?;
                        Ok(match word.as_str() {
                            "product" => Query::product(a, b),
                            "union" => Query::union_all(a, b),
                            _ => Query::except_all(a, b),
                        })
                    }
                    "apply" => {
                        self.expect(Token::LParen)?;
                        let f = self.expr()?;
                        self.expect(Token::Comma)?;
                        let q = self.query()?;
                        self.expect(Token::RParen)?;
                        Ok(Query::apply(f, q))
                    }
                    "sum" | "avg" | "min" | "max" => {
                        self.expect(Token::LBracket)?;
                        let group = self.attr_list(&Token::Semicolon)?;
                        self.expect(Token::Semicolon)?;
                        let target = self.attr()?;
                        self.expect(Token::RBracket)?;
                        let q = self.paren_query()?;
                        Ok(match word.as_str() {
                            "sum" => Query::sum_group(group, target, q),
                            "avg" => Query::avg(group, target, q),
                            "min" => Query::min(group, target, q),
                            _ => Query::max(group, target, q),
                        })
                    }
                    "count" => {
                        let group = self.bracket_attrs()?;
                        let q = self.paren_query()?;
                        Ok(Query::count(group, q))
                    }
                    "dedup" => Ok(Query::dedup(self.paren_query()?)),
                    "values" => self.literal(),
                    w if is_keyword(w) => {
                        self.pos -= 1;
                        Err(self.error(&["query"]))
                    }
                    _ => Ok(Query::Base(word)),
                }
            }
            _ => Err(self.error(&["query"])),
        }
    }

    fn paren_query(&mut self) -> PResult<Query> {
        self.expect(Token::LParen)?;
        let q = self.query()?;
        self.expect(Token::RParen)?;
        Ok(q)
    }

    fn bracket_attrs(&mut self) -> PResult<Vec<usize>> {
        self.expect(Token::LBracket)?;
        let attrs = self.attr_list(&Token::RBracket)?;
        self.expect(Token::RBracket)?;
        Ok(attrs)
    }

    fn attr_list(&mut self, terminator: &Token) -> PResult<Vec<usize>> {
        let mut out = Vec::new();
        if self.peek() == terminator {
            return Ok(out);
        }
        out.push(self.attr()?);
        while self.eat(&Token::Comma) {
            out.push(self.attr()?);
        }
        Ok(out)
    }

    fn attr(&mut self) -> PResult<usize> {
        match *self.peek() {
            Token::Attr(i) => {
                self.bump();
                Ok(i)
            }
            _ => Err(self.error(&["attribute `$k`"])),
        }
    }

    fn integer(&mut self) -> PResult<u64> {
        match *self.peek() {
            Token::Number(x) if x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64 => {
                self.bump();
                Ok(x as u64)
            }
            _ => Err(self.error(&["non-negative integer"])),
        }
    }

    fn literal(&mut self) -> PResult<Query> {
        self.expect(Token::LBracket)?;
        let arity = self.integer()? as usize;
        self.expect(Token::RBracket)?;
        self.expect(Token::LBrace)?;
        let mut rows = Vec::new();
        if !self.eat(&Token::RBrace) {
            loop {
                rows.push(self.literal_row()?);
                if self.eat(&Token::Comma) {
                    continue;
                }
                self.expect(Token::RBrace)?;
                break;
            }
        }
        let lit = Literal::new(arity, rows).map_err(|e| self.message(e.to_string()))?;
        Ok(Query::literal(lit))
    }

    fn literal_row(&mut self) -> PResult<(Vec<RatExpr>, u64)> {
        self.expect(Token::LParen)?;
        let mut row = Vec::new();
        if !self.eat(&Token::RParen) {
            row.push(self.expr()?);
            while self.eat(&Token::Comma) {
                row.push(self.expr()?);
            }
            self.expect(Token::RParen)?;
        }
        let mult = if self.eat(&Token::Star) {
            self.integer()?
        } else {
            1
        };
        if let Some(bad) = row.iter().find(|e| !e.attrs().is_empty()) {
            return Err(self.message(format!("literal entry `{bad}` refers to an attribute")));
        }
        Ok((row, mult))
    }

    pub(crate) fn condition(&mut self) -> PResult<Condition> {
        let mut c = self.conjunction()?;
        while self.at_keyword("or") {
            self.bump();
            let rhs = self.conjunction()?;
            c = Condition::or(c, rhs);
        }
        Ok(c)
    }

    fn conjunction(&mut self) -> PResult<Condition> {
        let mut c = self.negation()?;
        while self.at_keyword("and") {
            self.bump();
            let rhs = self.negation()?;
            c = Condition::and(c, rhs);
        }
        Ok(c)
    }

    fn negation(&mut self) -> PResult<Condition> {
        if self.at_keyword("not") {
            self.bump();
            return Ok(Condition::not(self.negation()?));
        }
        if self.at_keyword("const") {
            self.bump();
            self.expect(Token::LParen)?;
            let i = self.attr()?;
            self.expect(Token::RParen)?;
            return Ok(Condition::IsConst(i));
        }
        let start = self.pos;
        match self.atom() {
            Ok(c) => Ok(c),
            Err(atom_err) => {
                if self.tokens[start].token != Token::LParen {
                    return Err(atom_err);
                }
                self.pos = start;
                self.bump();
                let c = self.condition()?;
                self.expect(Token::RParen)?;
                Ok(c)
            }
        }
    }

    fn atom(&mut self) -> PResult<Condition> {
        let start = self.pos;
        let lhs = self.expr()?;
        let lhs_bare = self.pos == start + 1 && matches!(lhs, RatExpr::Attr(_));
        if self.at_keyword("in") {
            self.bump();
            let RatExpr::Attr(i) = lhs else {
                self.pos = start;
                return Err(self.message("the left side of `in` must be an attribute".into()));
            };
            if !lhs_bare {
                self.pos = start;
                return Err(self.message("the left side of `in` must be a bare attribute".into()));
            }
            return Ok(Condition::In(i, self.interval()?));
        }
        let op = match self.peek() {
            Token::Eq => CmpOp::Eq,
            Token::Ne => CmpOp::Ne,
            Token::Lt => CmpOp::Lt,
            Token::Gt => CmpOp::Gt,
            Token::Le => CmpOp::Le,
            Token::Ge => CmpOp::Ge,
            _ => return Err(self.error(&["comparison operator", "`in`"])),
        };
        self.bump();
        let rhs_start = self.pos;
        let rhs = self.expr()?;
        let rhs_bare = self.pos == rhs_start + 1 && matches!(rhs, RatExpr::Attr(_));
        match (lhs, op, rhs) {
            (RatExpr::Attr(i), CmpOp::Eq, RatExpr::Attr(j)) if lhs_bare && rhs_bare => {
                Ok(Condition::Eq(i, j))
            }
            (RatExpr::Attr(i), CmpOp::Lt, RatExpr::Attr(j)) if lhs_bare && rhs_bare => {
                Ok(Condition::Lt(i, j))
            }
            (f, op, g) => Ok(Condition::Cmp(f, op, g)),
        }
    }

    fn interval(&mut self) -> PResult<IntervalSpec> {
        let lower_closed = match self.peek() {
            Token::LBracket => true,
            Token::LParen => false,
            _ => return Err(self.error(&["`[`", "`(`"])),
        };
        self.bump();
        let lower = self.bound()?;
        self.expect(Token::Comma)?;
        let upper = self.bound()?;
        let upper_closed = match self.peek() {
            Token::RBracket => true,
            Token::RParen => false,
            _ => return Err(self.error(&["`]`", "`)`"])),
        };
        self.bump();
        Ok(IntervalSpec::new(lower, lower_closed, upper, upper_closed))
    }

    fn bound(&mut self) -> PResult<Bound> {
        let is_inf = |t: &Token| matches!(t, Token::Ident(w) if w == "inf");
        match self.peek() {
            Token::Minus if is_inf(self.peek_at(1)) => {
                self.bump();
                self.bump();
                Ok(Bound::NegInf)
            }
            Token::Plus if is_inf(self.peek_at(1)) => {
                self.bump();
                self.bump();
                Ok(Bound::PosInf)
            }
            t if is_inf(t) => {
                self.bump();
                Ok(Bound::PosInf)
            }
            _ => Ok(Bound::Finite(self.expr()?)),
        }
    }

    pub(crate) fn expr(&mut self) -> PResult<RatExpr> {
        let mut e = self.term()?;
        loop {
            match self.peek() {
                Token::Plus => {
                    self.bump();
                    e = RatExpr::add(e, self.term()?);
                }
                Token::Minus => {
                    self.bump();
                    e = RatExpr::sub(e, self.term()?);
                }
                _ => return Ok(e),
            }
        }
    }

    fn term(&mut self) -> PResult<RatExpr> {
        let mut e = self.unary()?;
        loop {
            match self.peek() {
                Token::Star => {
                    self.bump();
                    e = RatExpr::mul(e, self.unary()?);
                }
                Token::Slash => {
                    self.bump();
                    e = RatExpr::div(e, self.unary()?);
                }
                _ => return Ok(e),
            }
        }
    }

    fn unary(&mut self) -> PResult<RatExpr> {
        match *self.peek() {
            Token::Minus => {
                self.bump();
                if let Token::Number(x) = *self.peek() {
                    self.bump();
                    return Ok(RatExpr::Const(-x));
                }
                Ok(RatExpr::neg(self.unary()?))
            }
            Token::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.primary_expr(),
        }
    }

    fn primary_expr(&mut self) -> PResult<RatExpr> {
        match *self.peek() {
            Token::Number(x) => {
                self.bump();
                Ok(RatExpr::Const(x))
            }
            Token::Attr(i) => {
                self.bump();
                Ok(RatExpr::Attr(i))
            }
            Token::Null(i) => {
                self.bump();
                Ok(RatExpr::Null(NullId(i)))
            }
            Token::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            _ => Err(self.error(&["expression"])),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_core_selection() {
        assert_eq!(
            parse("select($1 < $2, R)").unwrap(),
            Query::select(Condition::Lt(1, 2), Query::base("R"))
        );
    }

    #[test]
    fn parses_grouped_sum_over_apply() {
        assert_eq!(
            parse("sum[$1; $3](apply(1, R))").unwrap(),
            Query::sum_group(vec![1], 3, Query::apply(RatExpr::Const(1.0), Query::base("R")))
        );
    }

    #[test]
    fn unclosed_input_is_an_error() {
        let err = parse("project[$1]( R ×").unwrap_err();
        assert_eq!((err.line, err.column), (1, 17));
        assert!(err.expected.contains("query"), "{err}");
        assert!(parse("select($1 < $2 R)").is_err());
        assert!(parse("project[$1](select)").is_err());
    }

    #[test]
    fn distinguishes_core_and_arithmetic_comparisons() {
        assert_eq!(parse_condition("$1 = $2").unwrap(), Condition::Eq(1, 2));
        assert_eq!(
            parse_condition("($1) < ($2)").unwrap(),
            Condition::Cmp(RatExpr::Attr(1), CmpOp::Lt, RatExpr::Attr(2))
        );
        assert_eq!(
            parse_condition("$1 > $2").unwrap(),
            Condition::Cmp(RatExpr::Attr(1), CmpOp::Gt, RatExpr::Attr(2))
        );
        assert_eq!(
            parse_condition("$1 < 1").unwrap(),
            Condition::Cmp(RatExpr::Attr(1), CmpOp::Lt, RatExpr::Const(1.0))
        );
    }

    #[test]
    fn parses_composite_conditions_with_parentheses() {
        let c = parse_condition("not ($1 < $2 or ($1 + 1) >= 3) and const($2)").unwrap();
        assert_eq!(
            c,
            Condition::and(
                Condition::not(Condition::or(
                    Condition::Lt(1, 2),
                    Condition::Cmp(
                        RatExpr::add(RatExpr::Attr(1), RatExpr::Const(1.0)),
                        CmpOp::Ge,
                        RatExpr::Const(3.0)
                    )
                )),
                Condition::IsConst(2)
            )
        );
    }

    #[test]
    fn parses_intervals() {
        let c = parse_condition("$2 in (-inf, n1 + 4]").unwrap();
        let Condition::In(2, spec) = c else { panic!() };
        assert_eq!(spec.lower(), &Bound::NegInf);
        assert!(!spec.lower_closed() && spec.upper_closed());
        assert!(parse_condition("($1) in [0, 1]").is_err());
    }

    #[test]
    fn parses_literals_and_infix_products() {
        let q = parse("values[2]{(1, n1), (2, -3) * 4} × S").unwrap();
        let Query::Product(lhs, rhs) = q else { panic!() };
        assert_eq!(*rhs, Query::base("S"));
        let Query::Literal(lit) = *lhs else { panic!() };
        assert_eq!(lit.arity, 2);
        assert_eq!(lit.rows[1], (vec![RatExpr::Const(2.0), RatExpr::Const(-3.0)], 4));
        assert!(parse("values[1]{(1, 2)}").is_err());
        assert!(parse("values[1]{($1)}").is_err());
        assert_eq!(
            parse("values[0]{()}").unwrap(),
            Query::literal(Literal::unit())
        );
    }

    #[test]
    fn keywords_are_not_relation_names() {
        assert!(parse("count").is_err());
        assert!(parse("R_2").is_ok());
    }
}

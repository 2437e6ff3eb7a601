//! Recursive-descent parser for
//! `SELECT [TOP n] (*|col,…) FROM table [WHERE expr] [ORDER BY col [ASC|DESC]]`.
//!
//! Boolean precedence, loosest first: OR, AND, NOT, predicates.

use super::ast::{AdqlQuery, CmpOp, Expr, Operand, OrderBy, Selection};
use super::lexer::{Keyword, Token, TokenKind};
use super::AdqlError;

/// `end` is the length of the source text, reported as the offset of
/// "end of query" errors.
pub fn parse(tokens: &[Token], end: usize) -> Result<AdqlQuery, AdqlError> {
    let mut p = Parser { tokens, pos: 0, end };
    let q = p.query()?;
    if p.peek_is(&TokenKind::Semicolon) {
        p.pos += 1;
    }
    if let Some(t) = p.peek() {
        return Err(p.unexpected_token(t, "end of query"));
    }
    Ok(q)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, n: usize) -> Option<&'a Token> {
        self.tokens.get(self.pos + n)
    }

    fn peek_is(&self, kind: &TokenKind) -> bool {
        self.peek().is_some_and(|t| &t.kind == kind)
    }

    fn peek_kw(&self, kw: Keyword) -> bool {
        self.peek_is(&TokenKind::Keyword(kw))
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end, |t| t.offset)
    }

    fn advance(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn syntax(&self, expected: &str) -> AdqlError {
        AdqlError::Syntax {
            expected: expected.to_owned(),
            found: self
                .peek()
                .map_or_else(|| "end of query".to_owned(), |t| t.kind.describe()),
            offset: self.offset(),
        }
    }

    fn unsupported(&self, feature: &str, offset: usize) -> AdqlError {
        AdqlError::UnsupportedFeature {
            feature: feature.to_owned(),
            offset,
        }
    }

    /// Names unsupported constructs precisely, falls back to a syntax error.
    fn unexpected_token(&self, t: &Token, expected: &str) -> AdqlError {
        use Keyword::*;
        let feature = match &t.kind {
            TokenKind::Keyword(Join | Inner | Left | Right | Full | Outer | Natural | Cross)
            | TokenKind::Comma => Some("JOIN"),
            TokenKind::Keyword(Group) => Some("GROUP BY"),
            TokenKind::Keyword(Having) => Some("HAVING"),
            TokenKind::Keyword(Union | Intersect | Except) => Some("set operations (UNION/INTERSECT/EXCEPT)"),
            TokenKind::Plus | TokenKind::Minus | TokenKind::Star | TokenKind::Slash => Some("arithmetic"),
            _ => None,
        };
        match feature {
            Some(f) => self.unsupported(f, t.offset),
            None => AdqlError::Syntax {
                expected: expected.to_owned(),
                found: t.kind.describe(),
                offset: t.offset,
            },
        }
    }

    fn expect(&mut self, kind: TokenKind) -> Result<(), AdqlError> {
        if self.peek_is(&kind) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.syntax(&kind.describe()))
        }
    }

    fn expect_kw(&mut self, kw: Keyword) -> Result<(), AdqlError> {
        self.expect(TokenKind::Keyword(kw))
    }

    fn ident(&mut self, what: &str) -> Result<String, AdqlError> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Ident(s),
                ..
            }) => {
                self.pos += 1;
                Ok(s.clone())
            }
            _ => Err(self.syntax(what)),
        }
    }

    /// Rejects `name(` as an unsupported function call.
    fn reject_call(&self, name: &str) -> Result<(), AdqlError> {
        if matches!(self.peek(), Some(t) if t.kind == TokenKind::LParen) {
            return Err(self.unsupported(&format!("function {}", name.to_uppercase()), self.offset()));
        }
        Ok(())
    }

    fn query(&mut self) -> Result<AdqlQuery, AdqlError> {
        self.expect_kw(Keyword::Select)?;
        if self.peek_kw(Keyword::Distinct) {
            return Err(self.unsupported("DISTINCT", self.offset()));
        }
        let top = if self.peek_kw(Keyword::Top) {
            self.pos += 1;
            match self.peek() {
                Some(Token {
                    kind: TokenKind::Number(_, text),
                    ..
                }) if text.bytes().all(|b| b.is_ascii_digit()) => {
                    let n = text.parse::<u64>().map_err(|_| self.syntax("row count"))?;
                    self.pos += 1;
                    Some(n)
                }
                _ => return Err(self.syntax("non-negative integer after TOP")),
            }
        } else {
            None
        };
        let columns = self.select_list()?;
        self.expect_kw(Keyword::From)?;
        if self.peek_is(&TokenKind::LParen) {
            return Err(self.unsupported("subquery", self.offset()));
        }
        let table = self.ident("table name")?;
        if let Some(t) = self.peek() {
            if !matches!(
                t.kind,
                TokenKind::Keyword(Keyword::Where | Keyword::Order) | TokenKind::Semicolon
            ) {
                return Err(self.unexpected_token(t, "WHERE, ORDER BY or end of query"));
            }
        }
        let where_clause = if self.peek_kw(Keyword::Where) {
            self.pos += 1;
            Some(self.or_expr()?)
        } else {
            None
        };
        if let Some(t) = self.peek() {
            if !matches!(t.kind, TokenKind::Keyword(Keyword::Order) | TokenKind::Semicolon) {
                return Err(self.unexpected_token(t, "ORDER BY or end of query"));
            }
        }
        let order_by = if self.peek_kw(Keyword::Order) {
            self.pos += 1;
            self.expect_kw(Keyword::By)?;
            let column = self.ident("column name")?;
            self.reject_call(&column)?;
            let ascending = if self.peek_kw(Keyword::Desc) {
                self.pos += 1;
                false
            } else {
                if self.peek_kw(Keyword::Asc) {
                    self.pos += 1;
                }
                true
            };
            if self.peek_is(&TokenKind::Comma) {
                return Err(self.unsupported("multi-column ORDER BY", self.offset()));
            }
            Some(OrderBy { column, ascending })
        } else {
            None
        };
        Ok(AdqlQuery {
            top,
            columns,
            table,
            where_clause,
            order_by,
        })
    }

    fn select_list(&mut self) -> Result<Selection, AdqlError> {
        if self.peek_is(&TokenKind::Star) {
            self.pos += 1;
            return Ok(Selection::All);
        }
        let mut cols = Vec::new();
        loop {
            match self.peek().map(|t| &t.kind) {
                Some(TokenKind::Ident(name)) => {
                    let name = name.clone();
                    self.pos += 1;
                    self.reject_call(&name)?;
                    cols.push(name);
                }
                Some(TokenKind::Number(..) | TokenKind::Str(_) | TokenKind::LParen) => {
                    return Err(self.unsupported("expressions in select list", self.offset()))
                }
                _ => return Err(self.syntax("column name or '*'")),
            }
            match self.peek().map(|t| &t.kind) {
                Some(TokenKind::Comma) => self.pos += 1,
                Some(TokenKind::Plus | TokenKind::Minus | TokenKind::Star | TokenKind::Slash)
                | Some(TokenKind::Number(..)) => {
                    return Err(self.unsupported("arithmetic in select list", self.offset()))
                }
                _ => break,
            }
        }
        Ok(Selection::Columns(cols))
    }

    fn or_expr(&mut self) -> Result<Expr, AdqlError> {
        let mut lhs = self.and_expr()?;
        while self.peek_kw(Keyword::Or) {
            self.pos += 1;
            let rhs = self.and_expr()?;
            lhs = Expr::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, AdqlError> {
        let mut lhs = self.not_expr()?;
        while self.peek_kw(Keyword::And) {
            self.pos += 1;
            let rhs = self.not_expr()?;
            lhs = Expr::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, AdqlError> {
        if self.peek_kw(Keyword::Not) {
            self.pos += 1;
            return Ok(Expr::not(self.not_expr()?));
        }
        self.predicate()
    }

    fn predicate(&mut self) -> Result<Expr, AdqlError> {
        if self.peek_is(&TokenKind::LParen) {
            if matches!(self.peek_at(1), Some(t) if t.kind == TokenKind::Keyword(Keyword::Select)) {
                return Err(self.unsupported("subquery", self.offset()));
            }
            self.pos += 1;
            let e = self.or_expr()?;
            self.expect(TokenKind::RParen)?;
            return Ok(e);
        }
        if self.peek_kw(Keyword::Contains) {
            return self.contains();
        }
        let lhs = self.operand()?;
        let Some(t) = self.advance() else {
            return Err(self.syntax("comparison operator, BETWEEN, LIKE or IS"));
        };
        let op = match &t.kind {
            TokenKind::Eq => CmpOp::Eq,
            TokenKind::Ne => CmpOp::Ne,
            TokenKind::Lt => CmpOp::Lt,
            TokenKind::Le => CmpOp::Le,
            TokenKind::Gt => CmpOp::Gt,
            TokenKind::Ge => CmpOp::Ge,
            TokenKind::Keyword(Keyword::Between) => return self.between(lhs),
            TokenKind::Keyword(Keyword::Like) => return self.like(lhs, t.offset),
            TokenKind::Keyword(Keyword::Is) => return self.is_null(lhs, t.offset),
            TokenKind::Keyword(Keyword::Not) => {
                let inner = match self.advance().map(|t| &t.kind) {
                    Some(TokenKind::Keyword(Keyword::Between)) => self.between(lhs)?,
                    Some(TokenKind::Keyword(Keyword::Like)) => self.like(lhs, t.offset)?,
                    _ => {
                        self.pos -= 1;
                        return Err(self.syntax("BETWEEN or LIKE after NOT"));
                    }
                };
                return Ok(Expr::not(inner));
            }
            _ => {
                self.pos -= 1;
                return Err(self.unexpected_token(t, "comparison operator, BETWEEN, LIKE or IS"));
            }
        };
        let rhs = self.operand()?;
        Ok(Expr::Compare { lhs, op, rhs })
    }

    fn between(&mut self, expr: Operand) -> Result<Expr, AdqlError> {
        let lo = self.operand()?;
        self.expect_kw(Keyword::And)?;
        let hi = self.operand()?;
        Ok(Expr::Between { expr, lo, hi })
    }

    fn like(&mut self, lhs: Operand, offset: usize) -> Result<Expr, AdqlError> {
        let Operand::Column(column) = lhs else {
            return Err(AdqlError::Syntax {
                expected: "column before LIKE".into(),
                found: "literal".into(),
                offset,
            });
        };
        match self.peek().map(|t| &t.kind) {
            Some(TokenKind::Str(p)) => {
                let pattern = p.clone();
                self.pos += 1;
                Ok(Expr::Like { column, pattern })
            }
            _ => Err(self.syntax("string pattern after LIKE")),
        }
    }

    fn is_null(&mut self, lhs: Operand, offset: usize) -> Result<Expr, AdqlError> {
        let Operand::Column(column) = lhs else {
            return Err(AdqlError::Syntax {
                expected: "column before IS".into(),
                found: "literal".into(),
                offset,
            });
        };
        let negated = self.peek_kw(Keyword::Not);
        if negated {
            self.pos += 1;
        }
        self.expect_kw(Keyword::Null)?;
        let e = Expr::IsNull { column };
        Ok(if negated { Expr::not(e) } else { e })
    }

    fn operand(&mut self) -> Result<Operand, AdqlError> {
        let op = match self.peek().map(|t| &t.kind) {
            Some(TokenKind::Ident(name)) => {
                let name = name.clone();
                self.pos += 1;
                self.reject_call(&name)?;
                Operand::Column(name)
            }
            Some(TokenKind::Number(v, _)) => {
                let v = *v;
                self.pos += 1;
                Operand::Number(v)
            }
            Some(TokenKind::Str(s)) => {
                let s = s.clone();
                self.pos += 1;
                Operand::Str(s)
            }
            Some(TokenKind::LParen)
                if matches!(self.peek_at(1), Some(t) if t.kind == TokenKind::Keyword(Keyword::Select)) =>
            {
                return Err(self.unsupported("subquery", self.offset()))
            }
            Some(TokenKind::Keyword(k @ (Keyword::Point | Keyword::Circle))) => {
                return Err(self.unsupported(
                    &format!("{} outside CONTAINS", k.as_str()),
                    self.offset(),
                ))
            }
            _ => return Err(self.syntax("column, number or string")),
        };
        if let Some(t) = self.peek() {
            if matches!(
                t.kind,
                TokenKind::Plus | TokenKind::Minus | TokenKind::Star | TokenKind::Slash
            ) {
                return Err(self.unsupported("arithmetic", t.offset));
            }
        }
        Ok(op)
    }

    fn coord_sys(&mut self) -> Result<(), AdqlError> {
        if let Some(Token {
            kind: TokenKind::Str(s),
            offset,
        }) = self.peek()
        {
            if !s.trim().eq_ignore_ascii_case("ICRS") {
                return Err(self.unsupported(&format!("coordinate system '{s}'"), *offset));
            }
            self.pos += 1;
            self.expect(TokenKind::Comma)?;
        }
        Ok(())
    }

    fn contains(&mut self) -> Result<Expr, AdqlError> {
        self.expect_kw(Keyword::Contains)?;
        self.expect(TokenKind::LParen)?;
        self.expect_kw(Keyword::Point)?;
        self.expect(TokenKind::LParen)?;
        self.coord_sys()?;
        let pa = self.operand()?;
        self.expect(TokenKind::Comma)?;
        let pd = self.operand()?;
        self.expect(TokenKind::RParen)?;
        self.expect(TokenKind::Comma)?;
        self.expect_kw(Keyword::Circle)?;
        self.expect(TokenKind::LParen)?;
        self.coord_sys()?;
        let ca = self.operand()?;
        self.expect(TokenKind::Comma)?;
        let cd = self.operand()?;
        self.expect(TokenKind::Comma)?;
        let r = self.operand()?;
        self.expect(TokenKind::RParen)?;
        self.expect(TokenKind::RParen)?;
        self.expect(TokenKind::Eq)?;
        let inside = match self.peek().map(|t| &t.kind) {
            Some(TokenKind::Number(v, _)) if *v == 1.0 => true,
            Some(TokenKind::Number(v, _)) if *v == 0.0 => false,
            _ => return Err(self.syntax("0 or 1 after CONTAINS(...) =")),
        };
        self.pos += 1;
        Ok(Expr::Contains {
            point: [pa, pd],
            circle: [ca, cd, r],
            inside,
        })
    }
}

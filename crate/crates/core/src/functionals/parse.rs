//! Lexer, recursive-descent parser and canonical printer for functional
//! expressions.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary ('*' unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' INTEGER)?
//! atom   := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')' | '(' expr ')'
//! ```

use std::fmt;

use super::Expr;
use crate::error::FunctionalError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
    Comma,
}

fn syntax(pos: usize, msg: impl Into<String>) -> FunctionalError {
    FunctionalError::Syntax { pos, msg: msg.into() }
}

/// True when the previous token ends an operand, so a following '-' is an
/// operator rather than the sign of a literal.
fn ends_operand(prev: Option<&Tok>) -> bool {
    matches!(prev, Some(Tok::Num(_) | Tok::Ident(_) | Tok::RParen))
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, FunctionalError> {
    let bytes = text.as_bytes();
    let mut out: Vec<(usize, Tok)> = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let negative_literal = c == '-'
            && !ends_operand(out.last().map(|t| &t.1))
            && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit() || *b == b'.');
        if c.is_ascii_digit() || c == '.' || negative_literal {
            i += 1;
            while i < bytes.len() {
                let b = bytes[i] as char;
                let exp_sign = (b == '-' || b == '+') && matches!(bytes[i - 1], b'e' | b'E');
                if b.is_ascii_digit() || b == '.' || b == 'e' || b == 'E' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            let s = &text[start..i];
            let v: f64 = s.parse().map_err(|_| syntax(start, format!("invalid number `{s}`")))?;
            if !v.is_finite() {
                return Err(syntax(start, format!("number `{s}` is out of range")));
            }
            out.push((start, Tok::Num(v)));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            i += 1;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(text[start..i].to_string())));
            continue;
        }
        let tok = match c {
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            _ => return Err(syntax(start, format!("unexpected character `{c}`"))),
        };
        out.push((start, tok));
        i += c.len_utf8();
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.0).unwrap_or(self.end)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.1.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), FunctionalError> {
        let at = self.offset();
        match self.next() {
            Some(t) if t == tok => Ok(()),
            _ => Err(syntax(at, format!("expected {what}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr, FunctionalError> {
        let mut terms = vec![self.term()?];
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    terms.push(self.term()?);
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    let t = self.term()?;
                    terms.push(Expr::Scale(-1.0, Box::new(t)));
                }
                _ => break,
            }
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::Sum(terms) })
    }

    fn term(&mut self) -> Result<Expr, FunctionalError> {
        let mut factors = vec![self.unary()?];
        while self.peek() == Some(&Tok::Star) {
            self.pos += 1;
            factors.push(self.unary()?);
        }
        if factors.len() == 1 {
            return Ok(factors.pop().unwrap());
        }
        if let Expr::Const(c) = factors[0] {
            factors.remove(0);
            let rest = if factors.len() == 1 { factors.pop().unwrap() } else { Expr::Product(factors) };
            return Ok(Expr::Scale(c, Box::new(rest)));
        }
        Ok(Expr::Product(factors))
    }

    fn unary(&mut self) -> Result<Expr, FunctionalError> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr::Scale(-1.0, Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, FunctionalError> {
        let base = self.atom()?;
        if self.peek() != Some(&Tok::Caret) {
            return Ok(base);
        }
        self.pos += 1;
        let at = self.offset();
        match self.next() {
            Some(Tok::Num(v)) if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => {
                Ok(Expr::Power(Box::new(base), v as u32))
            }
            _ => Err(syntax(at, "exponent must be an integer >= 1")),
        }
    }

    fn atom(&mut self) -> Result<Expr, FunctionalError> {
        let at = self.offset();
        match self.next() {
            Some(Tok::Num(v)) => Ok(Expr::Const(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while self.peek() == Some(&Tok::Comma) {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen, "`)` or `,`")?;
                    call(&name, args, at)
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Some(_) => Err(syntax(at, "expected a number, name or `(`")),
            None => Err(syntax(at, "unexpected end of input")),
        }
    }
}

fn call(name: &str, mut args: Vec<Expr>, at: usize) -> Result<Expr, FunctionalError> {
    let got = args.len();
    let arity = |n: usize| -> Result<(), FunctionalError> {
        if got == n {
            Ok(())
        } else {
            Err(syntax(at, format!("`{name}` takes {n} argument(s), got {got}")))
        }
    };
    let one = |args: &mut Vec<Expr>| Box::new(args.remove(0));
    match name {
        "deriv" => match args.len() {
            1 => Ok(Expr::Deriv(one(&mut args), None)),
            2 => {
                let mu = match args[1] {
                    Expr::Const(v) if v.fract() == 0.0 && (0.0..=3.0).contains(&v) => v as usize,
                    _ => return Err(syntax(at, "second argument of `deriv` must be an axis 0..3")),
                };
                Ok(Expr::Deriv(one(&mut args), Some(mu)))
            }
            n => Err(syntax(at, format!("`deriv` takes 1 or 2 arguments, got {n}"))),
        },
        "div" => arity(1).map(|_| Expr::Div(one(&mut args))),
        "dwedge" => arity(1).map(|_| Expr::DWedge(one(&mut args))),
        "raise" => arity(1).map(|_| Expr::Raise(one(&mut args))),
        "lower" => arity(1).map(|_| Expr::Lower(one(&mut args))),
        "eta" => {
            arity(2)?;
            let a = one(&mut args);
            Ok(Expr::Eta(a, one(&mut args)))
        }
        "wedge" => {
            arity(2)?;
            let a = one(&mut args);
            Ok(Expr::Wedge(a, one(&mut args)))
        }
        "eps" => {
            if args.is_empty() || args.len() > 3 {
                return Err(syntax(at, "`eps` takes 1 to 3 arguments"));
            }
            Ok(Expr::Eps(args))
        }
        _ => Err(syntax(at, format!("unknown function `{name}`"))),
    }
}

pub(super) fn parse_expr(text: &str) -> Result<Expr, FunctionalError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, end: text.len() };
    let e = p.expr()?;
    if p.pos < p.toks.len() {
        return Err(syntax(p.offset(), "unexpected trailing input"));
    }
    Ok(e)
}

fn needs_parens_in_product(e: &Expr) -> bool {
    matches!(e, Expr::Sum(_) | Expr::Scale(..) | Expr::Product(_))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(n) => f.write_str(n),
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Power(b, n) => {
                if matches!(**b, Expr::Var(_) | Expr::Const(_)) || b.is_call() {
                    write!(f, "{b}^{n}")
                } else {
                    write!(f, "({b})^{n}")
                }
            }
            Expr::Product(xs) => {
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str("*")?;
                    }
                    if needs_parens_in_product(x) {
                        write!(f, "({x})")?;
                    } else {
                        write!(f, "{x}")?;
                    }
                }
                Ok(())
            }
            Expr::Sum(xs) => {
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" + ")?;
                    }
                    if matches!(x, Expr::Sum(_)) {
                        write!(f, "({x})")?;
                    } else {
                        write!(f, "{x}")?;
                    }
                }
                Ok(())
            }
            Expr::Scale(c, x) => {
                if matches!(**x, Expr::Sum(_) | Expr::Scale(..)) {
                    write!(f, "{c:?}*({x})")
                } else {
                    write!(f, "{c:?}*{x}")
                }
            }
            Expr::Deriv(x, None) => write!(f, "deriv({x})"),
            Expr::Deriv(x, Some(mu)) => write!(f, "deriv({x}, {mu})"),
            Expr::Div(x) => write!(f, "div({x})"),
            Expr::DWedge(x) => write!(f, "dwedge({x})"),
            Expr::Raise(x) => write!(f, "raise({x})"),
            Expr::Lower(x) => write!(f, "lower({x})"),
            Expr::Eta(a, b) => write!(f, "eta({a}, {b})"),
            Expr::Wedge(a, b) => write!(f, "wedge({a}, {b})"),
            Expr::Eps(xs) => {
                f.write_str("eps(")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str(")")
            }
        }
    }
}

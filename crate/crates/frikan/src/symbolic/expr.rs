//! Expression trees for extracted friction laws: evaluation, rendering to a
//! flat string, and parsing back.
//!
//! Grammar: decimal literals, the variable `v`, binary `+ - * / **`, library
//! function calls like `tanh(...)`, all fully parenthesized when rendered.
//! Partial models additionally contain `spline(...)` leaves, which render but
//! cannot be parsed back (their coefficients live outside the string).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kan::layer::silu;
use crate::spline::SplineGrid;
use crate::symbolic::library::{default_library, FunctionLibrary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Const(f64),
    /// The velocity variable `v`.
    Var,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    /// Library function applied to a subexpression.
    Call(String, Box<Expr>),
    /// Unreplaced spline edge, kept self-contained so partial models still
    /// evaluate.
    Spline(Box<SplineLeaf>),
}

/// Frozen copy of one spline edge: scaler * Σ c_m B_m(x) + w * silu(x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineLeaf {
    pub grid: SplineGrid,
    pub coeffs: Vec<f64>,
    pub scaler: f64,
    pub base_weight: f64,
    pub inner: Expr,
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Sub(Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::Div(Box::new(a), Box::new(b))
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        Expr::Pow(Box::new(a), Box::new(b))
    }

    pub fn call(name: impl Into<String>, arg: Expr) -> Expr {
        Expr::Call(name.into(), Box::new(arg))
    }

    /// True when no spline leaves remain.
    pub fn is_fully_symbolic(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var => true,
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.is_fully_symbolic() && b.is_fully_symbolic(),
            Expr::Call(_, a) => a.is_fully_symbolic(),
            Expr::Spline(_) => false,
        }
    }

    /// Evaluates at velocity `v`; domain violations report the offending
    /// subexpression.
    pub fn eval(&self, v: f64) -> Result<f64> {
        if !v.is_finite() {
            return Err(Error::invalid(format!("expression input must be finite, got {v}")));
        }
        self.eval_with(v, &default_library())
    }

    pub fn eval_with(&self, v: f64, library: &FunctionLibrary) -> Result<f64> {
        let domain = |message: String| Error::Domain { message, context: self.render() };
        let value = match self {
            Expr::Const(c) => *c,
            Expr::Var => v,
            Expr::Add(a, b) => a.eval_with(v, library)? + b.eval_with(v, library)?,
            Expr::Sub(a, b) => a.eval_with(v, library)? - b.eval_with(v, library)?,
            Expr::Mul(a, b) => a.eval_with(v, library)? * b.eval_with(v, library)?,
            Expr::Div(a, b) => {
                let den = b.eval_with(v, library)?;
                if den == 0.0 {
                    return Err(domain("division by zero".to_string()));
                }
                a.eval_with(v, library)? / den
            }
            Expr::Pow(a, b) => {
                let base = a.eval_with(v, library)?;
                let exponent = b.eval_with(v, library)?;
                base.powf(exponent)
            }
            Expr::Call(name, arg) => {
                let u = arg.eval_with(v, library)?;
                let entry = library
                    .get(name)
                    .ok_or_else(|| domain(format!("unknown function {name:?}")))?;
                entry
                    .value(u)
                    .ok_or_else(|| domain(format!("argument {u} outside the domain of {name}")))?
            }
            Expr::Spline(leaf) => {
                let x = leaf.inner.eval_with(v, library)?;
                let basis = leaf.grid.basis(x)?;
                let spline: f64 =
                    basis.iter().zip(&leaf.coeffs).map(|(b, c)| b * c).sum();
                leaf.scaler * spline + leaf.base_weight * silu(x)
            }
        };
        if !value.is_finite() {
            return Err(domain(format!("non-finite value {value}")));
        }
        Ok(value)
    }

    /// Flat, fully parenthesized text form.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out);
        out
    }

    fn render_into(&self, out: &mut String) {
        use std::fmt::Write;
        match self {
            Expr::Const(c) => {
                let _ = write!(out, "{c}");
            }
            Expr::Var => out.push('v'),
            Expr::Add(a, b) => Self::render_binary(out, a, "+", b),
            Expr::Sub(a, b) => Self::render_binary(out, a, "-", b),
            Expr::Mul(a, b) => Self::render_binary(out, a, "*", b),
            Expr::Div(a, b) => Self::render_binary(out, a, "/", b),
            Expr::Pow(a, b) => Self::render_binary(out, a, "**", b),
            Expr::Call(name, arg) => {
                out.push_str(name);
                out.push('(');
                arg.render_into(out);
                out.push(')');
            }
            Expr::Spline(leaf) => {
                out.push_str("spline(");
                leaf.inner.render_into(out);
                out.push(')');
            }
        }
    }

    fn render_binary(out: &mut String, a: &Expr, op: &str, b: &Expr) {
        out.push('(');
        a.render_into(out);
        out.push(' ');
        out.push_str(op);
        out.push(' ');
        b.render_into(out);
        out.push(')');
    }
}

/// Parses the rendered grammar back into a tree. Spline leaves are not
/// parseable: their coefficients are not part of the string form.
pub fn parse_expr(text: &str) -> Result<Expr> {
    let mut parser = Parser { text: text.as_bytes(), pos: 0 };
    parser.skip_ws();
    let expr = parser.expr()?;
    parser.skip_ws();
    if parser.pos != parser.text.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(expr)
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::invalid(format!("parse error at byte {}: {message}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn eat(&mut self, token: &str) -> bool {
        if self.text[self.pos..].starts_with(token.as_bytes()) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            self.skip_ws();
            if self.eat("+") {
                lhs = Expr::add(lhs, self.term()?);
            } else if self.eat("-") {
                lhs = Expr::sub(lhs, self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            self.skip_ws();
            // '**' must not be consumed as '*'.
            if self.peek() == Some(b'*') && !self.text[self.pos..].starts_with(b"**") {
                self.pos += 1;
                lhs = Expr::mul(lhs, self.unary()?);
            } else if self.eat("/") {
                lhs = Expr::div(lhs, self.unary()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        self.skip_ws();
        if self.eat("-") {
            Ok(Expr::sub(Expr::Const(0.0), self.unary()?))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        self.skip_ws();
        if self.eat("**") {
            // Right-associative.
            Ok(Expr::pow(base, self.unary()?))
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<Expr> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.skip_ws();
                if !self.eat(")") {
                    return Err(self.error("expected ')'"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.name(),
            Some(_) => Err(self.error("expected a number, name or '('")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() || c == b'.' {
                self.pos += 1;
            } else if (c == b'e' || c == b'E') && self.pos > start {
                self.pos += 1;
                if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.text[start..self.pos]).expect("ascii span");
        text.parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| self.error(&format!("bad numeric literal {text:?}")))
    }

    fn name(&mut self) -> Result<Expr> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        let name = std::str::from_utf8(&self.text[start..self.pos]).expect("ascii span");
        if name == "v" {
            return Ok(Expr::Var);
        }
        if name == "spline" {
            return Err(self.error(
                "spline leaves carry coefficients that are not part of the text form; \
                 only fully symbolic models can be parsed",
            ));
        }
        if default_library().get(name).is_none() {
            return Err(self.error(&format!("unknown function {name:?}")));
        }
        self.skip_ws();
        if !self.eat("(") {
            return Err(self.error(&format!("expected '(' after {name}")));
        }
        let arg = self.expr()?;
        self.skip_ws();
        if !self.eat(")") {
            return Err(self.error("expected ')'"));
        }
        Ok(Expr::call(name, arg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn affine_tanh() -> Expr {
        // (3.25 * tanh((9.5 * v) + -1.25)) + 0.5
        Expr::add(
            Expr::mul(
                Expr::Const(3.25),
                Expr::call("tanh", Expr::add(Expr::mul(Expr::Const(9.5), Expr::Var), Expr::Const(-1.25))),
            ),
            Expr::Const(0.5),
        )
    }

    #[test]
    fn tree_matches_direct_arithmetic() {
        let expr = affine_tanh();
        for v in [-1.0f64, -0.3, 0.0, 0.7, 1.0] {
            let want = 3.25 * (9.5 * v - 1.25).tanh() + 0.5;
            assert!((expr.eval(v).unwrap() - want).abs() <= 1e-15);
        }
    }

    #[test]
    fn render_parse_eval_round_trip() {
        let exprs = [
            affine_tanh(),
            Expr::call("gaussian", Expr::sub(Expr::Const(0.0783), Expr::Var)),
            Expr::add(
                Expr::div(Expr::Const(1.5), Expr::add(Expr::Var, Expr::Const(3.0))),
                Expr::pow(Expr::Var, Expr::Const(3.0)),
            ),
            Expr::mul(
                Expr::call("tanh", Expr::mul(Expr::Const(50.0), Expr::Var)),
                Expr::add(
                    Expr::Const(22.0),
                    Expr::mul(
                        Expr::Const(8.0),
                        Expr::call("exp", Expr::sub(Expr::Const(0.0), Expr::call("abs", Expr::mul(Expr::Const(10.0), Expr::Var)))),
                    ),
                ),
            ),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for expr in &exprs {
            let text = expr.render();
            let back = parse_expr(&text).unwrap();
            for _ in 0..100 {
                let v = rng.random_range(-1.0..1.0);
                let a = expr.eval(v).unwrap();
                let b = back.eval(v).unwrap();
                assert_eq!(a, b, "{text} differs at v {v}");
            }
        }
    }

    #[test]
    fn constants_round_trip_exactly() {
        let c = 0.123456789012345678_f64;
        let text = Expr::Const(c).render();
        match parse_expr(&text).unwrap() {
            Expr::Const(back) => assert_eq!(back.to_bits(), c.to_bits()),
            other => panic!("expected constant, got {other:?}"),
        }
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let expr = Expr::add(Expr::Var, Expr::call("sqrt", Expr::Var));
        match expr.eval(-2.0) {
            Err(Error::Domain { context, .. }) => assert_eq!(context, "sqrt(v)"),
            other => panic!("expected domain error, got {other:?}"),
        }
        let div = Expr::div(Expr::Const(1.0), Expr::Var);
        assert!(matches!(div.eval(0.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn product_render_contains_both_factors() {
        let expr = Expr::mul(Expr::call("tanh", Expr::Var), Expr::call("cos", Expr::Var));
        let text = expr.render();
        assert!(text.contains("tanh(v)") && text.contains("cos(v)"));
        assert_eq!(text, "(tanh(v) * cos(v))");
    }

    #[test]
    fn parser_rejects_garbage() {
        assert!(parse_expr("").is_err());
        assert!(parse_expr("(1 + 2").is_err());
        assert!(parse_expr("bogus(v)").is_err());
        assert!(parse_expr("1 + 2 extra").is_err());
        assert!(parse_expr("spline(v)").is_err());
    }

    #[test]
    fn precedence_without_parens() {
        let expr = parse_expr("1 + 2 * v ** 2").unwrap();
        assert_eq!(expr.eval(3.0).unwrap(), 19.0);
        let neg = parse_expr("-v ** 2").unwrap();
        // Unary minus binds looser than '**'.
        assert_eq!(neg.eval(3.0).unwrap(), -9.0);
    }

    #[test]
    fn spline_leaf_is_not_fully_symbolic() {
        let leaf = SplineLeaf {
            grid: SplineGrid::uniform(-1.0, 1.0, 5, 3).unwrap(),
            coeffs: vec![0.0; 8],
            scaler: 1.0,
            base_weight: 0.5,
            inner: Expr::Var,
        };
        let expr = Expr::Spline(Box::new(leaf));
        assert!(!expr.is_fully_symbolic());
        assert!(affine_tanh().is_fully_symbolic());
        // silu path only: 0.5 * silu(0.25)
        let got = expr.eval(0.25).unwrap();
        assert!((got - 0.5 * silu(0.25)).abs() <= 1e-15);
        assert!(expr.render().starts_with("spline("));
    }
}

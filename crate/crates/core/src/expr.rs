//! Closed-form field expressions such as `-1 + 0.3*cos(2*pi*x1)`.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | 'pi' | 'e' | x1..x3 | func '(' args ')' | '(' sum ')'
//! ```
//!
//! `^` binds tighter than unary minus, so `-2^2` is `-4`, and is right
//! associative.

use std::fmt;

use crate::torus::{ScalarField, TorusGrid};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier '{name}' at byte {offset}")]
    UnknownIdent { offset: usize, name: String },
    #[error("function '{name}' at byte {offset} takes {expected} argument(s), got {got}")]
    Arity { offset: usize, name: String, expected: usize, got: usize },
    #[error("variable x{index} beyond dimension {dim}")]
    VariableBeyondDimension { index: usize, dim: usize },
    #[error("evaluation error: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
    Sqrt,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldExpr {
    Num(f64),
    Pi,
    E,
    /// Coordinate `x{i+1}`.
    Var(usize),
    Neg(Box<FieldExpr>),
    Bin(BinOp, Box<FieldExpr>, Box<FieldExpr>),
    Call(Func, Vec<FieldExpr>),
}

impl FieldExpr {
    /// Largest coordinate index used, as `x{index}`; 0 if none.
    pub fn max_variable(&self) -> usize {
        match self {
            FieldExpr::Num(_) | FieldExpr::Pi | FieldExpr::E => 0,
            FieldExpr::Var(i) => i + 1,
            FieldExpr::Neg(e) => e.max_variable(),
            FieldExpr::Bin(_, a, b) => a.max_variable().max(b.max_variable()),
            FieldExpr::Call(_, args) => args.iter().map(|a| a.max_variable()).max().unwrap_or(0),
        }
    }

    /// Evaluate at a point; `x[k]` is the coordinate of axis `k`.
    pub fn eval(&self, x: &[f64]) -> Result<f64, ExprError> {
        Ok(match self {
            FieldExpr::Num(v) => *v,
            FieldExpr::Pi => std::f64::consts::PI,
            FieldExpr::E => std::f64::consts::E,
            FieldExpr::Var(i) => *x
                .get(*i)
                .ok_or(ExprError::VariableBeyondDimension { index: i + 1, dim: x.len() })?,
            FieldExpr::Neg(e) => -e.eval(x)?,
            FieldExpr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x)?, b.eval(x)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(ExprError::Domain("division by zero".into()));
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        let v = a.powf(b);
                        if v.is_nan() {
                            return Err(ExprError::Domain(format!("{a}^{b} is undefined")));
                        }
                        v
                    }
                }
            }
            FieldExpr::Call(func, args) => {
                let a = args[0].eval(x)?;
                match func {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Abs => a.abs(),
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(ExprError::Domain(format!("sqrt of negative value {a}")));
                        }
                        a.sqrt()
                    }
                    Func::Min => a.min(args[1].eval(x)?),
                    Func::Max => a.max(args[1].eval(x)?),
                }
            }
        })
    }
}

/// Canonical printer: every compound node is parenthesized, numbers use the
/// shortest round-trip representation.
impl fmt::Display for FieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldExpr::Num(v) => {
                if v.fract() == 0.0 && v.abs() < 1e15 {
                    write!(f, "{}", *v as i64)
                } else {
                    write!(f, "{v:?}")
                }
            }
            FieldExpr::Pi => write!(f, "pi"),
            FieldExpr::E => write!(f, "e"),
            FieldExpr::Var(i) => write!(f, "x{}", i + 1),
            FieldExpr::Neg(e) => write!(f, "(-{e})"),
            FieldExpr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            FieldExpr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl std::str::FromStr for FieldExpr {
    type Err = ExprError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expr(s)
    }
}

pub fn parse_expr(text: &str) -> Result<FieldExpr, ExprError> {
    let mut p = Parser { src: text, pos: 0 };
    let e = p.sum()?;
    p.skip_ws();
    if p.pos < text.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, message: &str) -> ExprError {
        ExprError::Syntax { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<FieldExpr, ExprError> {
        let mut lhs = self.product()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.product()?;
            lhs = FieldExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<FieldExpr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = FieldExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<FieldExpr, ExprError> {
        if self.eat('-') {
            return Ok(FieldExpr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<FieldExpr, ExprError> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(FieldExpr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<FieldExpr, ExprError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some('(') => {
                self.pos += 1;
                let e = self.sum()?;
                if !self.eat(')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(start),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                let len = self.src[start..]
                    .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                    .unwrap_or(self.src.len() - start);
                self.pos = start + len;
                let name = &self.src[start..self.pos];
                self.ident(name, start)
            }
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self, start: usize) -> Result<FieldExpr, ExprError> {
        let bytes = self.src.as_bytes();
        let mut end = start;
        while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
            end += 1;
        }
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut j = end + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                end = j;
            }
        }
        let text = &self.src[start..end];
        let v: f64 = text
            .parse()
            .map_err(|_| ExprError::Syntax { offset: start, message: format!("bad number '{text}'") })?;
        self.pos = end;
        Ok(FieldExpr::Num(v))
    }

    fn ident(&mut self, name: &str, start: usize) -> Result<FieldExpr, ExprError> {
        match name {
            "pi" => return Ok(FieldExpr::Pi),
            "e" => return Ok(FieldExpr::E),
            _ => {}
        }
        if let Some(rest) = name.strip_prefix('x') {
            if let Ok(i) = rest.parse::<usize>() {
                if (1..=3).contains(&i) && !rest.starts_with('0') {
                    return Ok(FieldExpr::Var(i - 1));
                }
            }
        }
        let func = Func::from_name(name)
            .ok_or_else(|| ExprError::UnknownIdent { offset: start, name: name.to_string() })?;
        if !self.eat('(') {
            return Err(self.error("expected '(' after function name"));
        }
        let mut args = Vec::new();
        if !self.eat(')') {
            loop {
                args.push(self.sum()?);
                if self.eat(')') {
                    break;
                }
                if !self.eat(',') {
                    return Err(self.error("expected ',' or ')'"));
                }
            }
        }
        if args.len() != func.arity() {
            return Err(ExprError::Arity {
                offset: start,
                name: name.to_string(),
                expected: func.arity(),
                got: args.len(),
            });
        }
        Ok(FieldExpr::Call(func, args))
    }
}

/// A sampled expression plus the periodicity heuristic.
#[derive(Debug, Clone)]
pub struct GridSample {
    pub field: ScalarField,
    /// Set when the expression differs across some seam `x_k = 0` / `x_k = 1`
    /// by more than `1e-6` times the sampled range.
    pub non_periodic: bool,
}

/// Sample at cell centers `(i + 0.5) / N`.
pub fn eval_on_grid(expr: &FieldExpr, grid: TorusGrid) -> Result<GridSample, ExprError> {
    let n = grid.dim();
    if expr.max_variable() > n {
        return Err(ExprError::VariableBeyondDimension { index: expr.max_variable(), dim: n });
    }
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let x = grid.center(i);
        let v = expr.eval(&x[..n])?;
        if !v.is_finite() {
            return Err(ExprError::Domain(format!("non-finite value at node {i}")));
        }
        values.push(v);
    }
    let field = ScalarField::from_values(grid, values).expect("values checked finite");
    let range = field.max() - field.min();
    let tol = 1e-6 * if range > 0.0 { range } else { field.max().abs().max(1.0) };
    let mut non_periodic = false;
    'axes: for k in 0..n {
        for i in 0..grid.len() {
            if grid.coords(i)[k] != 0 {
                continue;
            }
            let mut x = grid.center(i);
            x[k] = 0.0;
            let lo = expr.eval(&x[..n]);
            x[k] = 1.0;
            let hi = expr.eval(&x[..n]);
            if let (Ok(lo), Ok(hi)) = (lo, hi) {
                if (lo - hi).abs() > tol {
                    non_periodic = true;
                    break 'axes;
                }
            }
        }
    }
    Ok(GridSample { field, non_periodic })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::integrate;
    use proptest::prelude::*;

    fn ev(s: &str) -> f64 {
        parse_expr(s).unwrap().eval(&[0.1, 0.2, 0.3]).unwrap()
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("2+3*4"), 14.0);
        assert_eq!(ev("-2^2"), -4.0);
        assert_eq!(ev("2^3^2"), 512.0);
        assert_eq!(ev("2^-1"), 0.5);
        assert_eq!(ev("8/4/2"), 1.0);
        assert_eq!(ev("1-2-3"), -4.0);
        assert_eq!(ev(" ( 1 + 2 ) * 3 "), 9.0);
        assert_eq!(ev("max(1, min(4, 3))"), 3.0);
        assert!((ev("x1 + 2*x2") - 0.5).abs() < 1e-15);
        assert_eq!(ev("1.5e2"), 150.0);
        assert!((ev("sqrt(abs(-4)) * exp(0) + cos(pi)") - 1.0).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_offsets() {
        match parse_expr("1 + * 2") {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
        match parse_expr("2 + foo(1)") {
            Err(ExprError::UnknownIdent { offset, name }) => {
                assert_eq!(offset, 4);
                assert_eq!(name, "foo");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_expr("min(1)"), Err(ExprError::Arity { expected: 2, got: 1, .. })));
        assert!(matches!(parse_expr("(1+2"), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse_expr("1 2"), Err(ExprError::Syntax { offset: 2, .. })));
        assert!(matches!(parse_expr("x4"), Err(ExprError::UnknownIdent { .. })));
    }

    #[test]
    fn grid_sampling() {
        let g2 = TorusGrid::new(2, 16).unwrap();
        let one = eval_on_grid(&parse_expr("1").unwrap(), g2).unwrap();
        assert!(one.field.values().iter().all(|&v| v == 1.0));
        assert!(!one.non_periodic);

        let c = eval_on_grid(&parse_expr("cos(2*pi*x1)").unwrap(), g2).unwrap();
        assert!(integrate(&c.field).abs() < 1e-12);
        assert!(!c.non_periodic);
        let s = eval_on_grid(&parse_expr("sin(2*pi*x2) + x1*0").unwrap(), g2).unwrap();
        assert!(!s.non_periodic);

        assert!(eval_on_grid(&parse_expr("x1").unwrap(), g2).unwrap().non_periodic);

        let err = eval_on_grid(&parse_expr("x3").unwrap(), g2).unwrap_err();
        assert_eq!(err, ExprError::VariableBeyondDimension { index: 3, dim: 2 });
        assert!(eval_on_grid(&parse_expr("sqrt(x1 - 2)").unwrap(), g2).is_err());
    }

    #[test]
    fn cell_centers() {
        let g = TorusGrid::new(2, 4).unwrap();
        let s = eval_on_grid(&parse_expr("x1 + 10*x2").unwrap(), g).unwrap();
        assert_eq!(s.field.values()[0], 0.125 + 1.25);
        assert_eq!(s.field.values()[5], 0.375 + 3.75);
    }

    fn arb_expr() -> impl Strategy<Value = FieldExpr> {
        let leaf = prop_oneof![
            (0.0f64..100.0).prop_map(FieldExpr::Num),
            (0usize..3).prop_map(FieldExpr::Var),
            Just(FieldExpr::Pi),
            Just(FieldExpr::E),
        ];
        leaf.prop_recursive(4, 32, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| FieldExpr::Neg(Box::new(e))),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Pow)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, a, b)| FieldExpr::Bin(op, Box::new(a), Box::new(b))),
                (prop_oneof![Just(Func::Sin), Just(Func::Cos), Just(Func::Sqrt)], inner.clone())
                    .prop_map(|(f, a)| FieldExpr::Call(f, vec![a])),
                (inner.clone(), inner).prop_map(|(a, b)| FieldExpr::Call(Func::Max, vec![a, b])),
            ]
        })
    }

    proptest! {
        #[test]
        fn printer_round_trip(e in arb_expr()) {
            let printed = e.to_string();
            let reparsed = parse_expr(&printed).unwrap();
            prop_assert_eq!(&reparsed, &e);
            prop_assert_eq!(parse_expr(&reparsed.to_string()).unwrap(), reparsed);
        }

        #[test]
        fn text_round_trip(a in 0u32..50, b in 0u32..50, op in 0usize..5) {
            let ops = ["+", "-", "*", "/", "^"];
            let s = format!("-{a} {} x1 {} {b}.5", ops[op], ops[(op + 1) % 5]);
            let t = parse_expr(&s).unwrap();
            prop_assert_eq!(parse_expr(&t.to_string()).unwrap(), t);
        }
    }
}

//! A small arithmetic language for right-hand sides `f(t, u)`.
//!
//! ```text
//! system   = expr { ";" expr } ;
//! expr     = term { ("+" | "-") term } ;
//! term     = unary { ("*" | "/") unary } ;
//! unary    = "-" unary | power ;
//! power    = primary [ "^" unary ] ;          (* right-associative *)
//! primary  = number | ident | call | "(" expr ")" ;
//! call     = func "(" expr [ "," expr ] ")" ;
//! func     = "exp" | "log" | "sin" | "cos" | "sqrt" | "abs" | "pow" ;
//! ident    = "t" | "u1" .. "un" | constant name ;
//! number   = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ] ;
//! ```
//!
//! `^` binds tighter than unary minus, so `-2^2` is `-4`, and `0^0` is `1`.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Abs,
    Pow,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "pow" => Func::Pow,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Pow => "pow",
        }
    }

    fn arity(self) -> usize {
        if self == Func::Pow {
            2
        } else {
            1
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

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Time,
    /// Zero-based component index of `u`.
    State(usize),
    Const { name: String, value: f64 },
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn eval(&self, t: f64, u: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Time => t,
            Expr::State(i) => u[*i],
            Expr::Const { value, .. } => *value,
            Expr::Neg(e) => -e.eval(t, u),
            Expr::Binary(op, a, b) => {
                let (x, y) = (a.eval(t, u), b.eval(t, u));
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => x / y,
                    BinOp::Pow => x.powf(y),
                }
            }
            Expr::Call(f, args) => {
                let x = args[0].eval(t, u);
                match f {
                    Func::Exp => x.exp(),
                    Func::Log => x.ln(),
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Sqrt => x.sqrt(),
                    Func::Abs => x.abs(),
                    Func::Pow => x.powf(args[1].eval(t, u)),
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Time | Expr::State(_) | Expr::Const { .. } => 1,
            Expr::Neg(e) => 1 + e.depth(),
            Expr::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
            Expr::Call(_, args) => 1 + args.iter().map(Expr::depth).max().unwrap_or(0),
        }
    }

    /// Highest `u` index referenced, one-based; 0 if none.
    fn max_state(&self) -> usize {
        match self {
            Expr::State(i) => i + 1,
            Expr::Num(_) | Expr::Time | Expr::Const { .. } => 0,
            Expr::Neg(e) => e.max_state(),
            Expr::Binary(_, a, b) => a.max_state().max(b.max_state()),
            Expr::Call(_, args) => args.iter().map(Expr::max_state).max().unwrap_or(0),
        }
    }
}

/// Fully parenthesised, so printing then parsing returns the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Time => f.write_str("t"),
            Expr::State(i) => write!(f, "u{}", i + 1),
            Expr::Const { name, .. } => f.write_str(name),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// The parsed right-hand side: one expression per component of `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rhs {
    exprs: Vec<Expr>,
}

impl Rhs {
    pub fn from_exprs(exprs: Vec<Expr>) -> Result<Self> {
        let n = exprs.len();
        if n == 0 {
            return Err(Error::ComponentCount { expected: 1, found: 0 });
        }
        if let Some(bad) = exprs.iter().find(|e| e.max_state() > n) {
            return Err(Error::Invalid(format!(
                "expression `{bad}` references u{} but the system has {n} component(s)",
                bad.max_state()
            )));
        }
        Ok(Self { exprs })
    }

    pub fn dim(&self) -> usize {
        self.exprs.len()
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }

    /// Evaluates into `out`; fails on any non-finite component.
    pub fn eval_into(&self, t: f64, u: &[f64], out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(u.len(), self.dim());
        for (o, e) in out.iter_mut().zip(&self.exprs) {
            *o = e.eval(t, u);
            if !o.is_finite() {
                return Err(Error::Eval { t, u: u.to_vec() });
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.dim() {
            return Err(Error::Size(format!(
                "state has {} component(s), right-hand side expects {}",
                u.len(),
                self.dim()
            )));
        }
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, u, &mut out)?;
        Ok(out)
    }
}

impl fmt::Display for Rhs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.exprs.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

/// Parses `n` `;`-separated component expressions.
pub fn parse(source: &str, n: usize, constants: &BTreeMap<String, f64>) -> Result<Rhs> {
    if source.trim().is_empty() {
        return Err(Error::Syntax {
            line: 1,
            column: 1,
            message: "empty right-hand side".into(),
        });
    }
    for (name, value) in constants {
        if !value.is_finite() {
            return Err(Error::Config(format!("constant `{name}` is not finite")));
        }
        if is_reserved(name, n) {
            return Err(Error::Config(format!("constant name `{name}` is reserved")));
        }
    }
    let tokens = lex(source)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        n,
        constants,
    };
    let mut exprs = vec![parser.expr()?];
    while parser.eat(&Tok::Semi) {
        exprs.push(parser.expr()?);
    }
    if let Some(tok) = parser.peek() {
        return Err(parser.error_at(tok, "unexpected token"));
    }
    if exprs.len() != n {
        return Err(Error::ComponentCount {
            expected: n,
            found: exprs.len(),
        });
    }
    Rhs::from_exprs(exprs)
}

fn is_reserved(name: &str, n: usize) -> bool {
    name == "t" || Func::from_name(name).is_some() || state_index(name).is_some_and(|i| i < n)
}

fn state_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('u')?;
    if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse::<usize>().ok().map(|k| k - 1)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    Semi,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value: f64 = text.parse().map_err(|_| Error::Syntax {
                line: l0,
                column: c0,
                message: format!("malformed number `{text}`"),
            })?;
            if !value.is_finite() {
                return Err(Error::Syntax {
                    line: l0,
                    column: c0,
                    message: format!("number `{text}` overflows"),
                });
            }
            Tok::Num(value)
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else {
            i += 1;
            match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                ';' => Tok::Semi,
                other => {
                    return Err(Error::Syntax {
                        line: l0,
                        column: c0,
                        message: format!("unexpected character `{other}`"),
                    })
                }
            }
        };
        col += i - start;
        out.push(Spanned {
            tok,
            line: l0,
            column: c0,
        });
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Spanned>,
    pos: usize,
    n: usize,
    constants: &'a BTreeMap<String, f64>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Spanned> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek().is_some_and(|s| &s.tok == tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn error_at(&self, at: &Spanned, message: &str) -> Error {
        Error::Syntax {
            line: at.line,
            column: at.column,
            message: format!("{message} {:?}", at.tok),
        }
    }

    fn eof_error(&self, message: &str) -> Error {
        let (line, column) = self
            .tokens
            .last()
            .map(|s| (s.line, s.column + 1))
            .unwrap_or((1, 1));
        Error::Syntax {
            line,
            column,
            message: format!("{message} at end of input"),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        match self.peek() {
            Some(s) if s.tok == tok => {
                self.pos += 1;
                Ok(())
            }
            Some(s) => Err(self.error_at(s, &format!("expected {what}, found"))),
            None => Err(self.eof_error(&format!("expected {what}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().map(|s| &s.tok) {
                Some(Tok::Op('+')) => BinOp::Add,
                Some(Tok::Op('-')) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().map(|s| &s.tok) {
                Some(Tok::Op('*')) => BinOp::Mul,
                Some(Tok::Op('/')) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(&Tok::Op('-')) {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.eat(&Tok::Op('^')) {
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        let Some(s) = self.peek().cloned() else {
            return Err(self.eof_error("expected an operand"));
        };
        self.pos += 1;
        match s.tok.clone() {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => self.identifier(name, &s),
            _ => Err(self.error_at(&s, "expected an operand, found")),
        }
    }

    fn identifier(&mut self, name: String, at: &Spanned) -> Result<Expr> {
        if let Some(func) = Func::from_name(&name) {
            self.expect(Tok::LParen, &format!("`(` after `{name}`"))?;
            let mut args = vec![self.expr()?];
            while self.eat(&Tok::Comma) {
                args.push(self.expr()?);
            }
            self.expect(Tok::RParen, "`)`")?;
            if args.len() != func.arity() {
                return Err(Error::Syntax {
                    line: at.line,
                    column: at.column,
                    message: format!(
                        "`{name}` takes {} argument(s), got {}",
                        func.arity(),
                        args.len()
                    ),
                });
            }
            return Ok(Expr::Call(func, args));
        }
        if name == "t" {
            return Ok(Expr::Time);
        }
        if let Some(i) = state_index(&name).filter(|&i| i < self.n) {
            return Ok(Expr::State(i));
        }
        if let Some(&value) = self.constants.get(&name) {
            return Ok(Expr::Const { name, value });
        }
        Err(Error::UnknownIdentifier {
            name,
            line: at.line,
            column: at.column,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consts(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    const GYRE: &str =
        "-2*exp(t)/(1+exp(t))^2 * u1 - 2*omega*exp(t)*(1-exp(t))/(1+exp(t))^3";

    #[test]
    fn parses_gyre_rhs() {
        let rhs = parse(GYRE, 1, &consts(&[("omega", 4649.56)])).unwrap();
        assert_eq!(rhs.dim(), 1);
        // exp(0) = 1 kills the forcing term
        assert!((rhs.eval(0.0, &[1.0]).unwrap()[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_zero() {
        let rhs = parse("0", 1, &BTreeMap::new()).unwrap();
        assert_eq!(rhs.exprs()[0], Expr::Num(0.0));
        assert_eq!(rhs.eval(3.0, &[7.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn two_components() {
        let rhs = parse("u2; -u1", 2, &BTreeMap::new()).unwrap();
        assert_eq!(rhs.eval(0.0, &[1.0, 2.0]).unwrap(), vec![2.0, -1.0]);
    }

    #[test]
    fn precedence_and_associativity() {
        let e = |s: &str| parse(s, 1, &BTreeMap::new()).unwrap().eval(3.0, &[0.0]).unwrap()[0];
        assert_eq!(e("t^2"), 9.0);
        assert_eq!(e("-2^2"), -4.0);
        assert_eq!(e("2^3^2"), 512.0);
        assert_eq!(e("2^-1"), 0.5);
        assert_eq!(e("1 - 2 - 3"), -4.0);
        assert_eq!(e("8 / 4 / 2"), 1.0);
        assert_eq!(e("1 + 2 * 3"), 7.0);
        assert_eq!(e("0^0"), 1.0);
        assert_eq!(e("pow(2, 10)"), 1024.0);
        assert_eq!(e("abs(-1.5e1)"), 15.0);
        assert_eq!(e(" sqrt ( 16 )\n"), 4.0);
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse("1 +\n  * 2", 1, &BTreeMap::new()) {
            Err(Error::Syntax { line, column, .. }) => assert_eq!((line, column), (2, 3)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("(1 + 2", 1, &BTreeMap::new()), Err(Error::Syntax { .. })));
        assert!(matches!(parse("1 $ 2", 1, &BTreeMap::new()), Err(Error::Syntax { .. })));
        assert!(matches!(parse("   ", 1, &BTreeMap::new()), Err(Error::Syntax { .. })));
        assert!(matches!(parse("pow(1)", 1, &BTreeMap::new()), Err(Error::Syntax { .. })));
        assert!(matches!(parse("1e999", 1, &BTreeMap::new()), Err(Error::Syntax { .. })));
    }

    #[test]
    fn unknown_identifiers() {
        assert!(matches!(
            parse("omega * u1", 1, &BTreeMap::new()),
            Err(Error::UnknownIdentifier { .. })
        ));
        // u2 does not exist in a scalar problem
        assert!(matches!(
            parse("u2", 1, &BTreeMap::new()),
            Err(Error::UnknownIdentifier { .. })
        ));
    }

    #[test]
    fn component_count_mismatch() {
        assert!(matches!(
            parse("u1; u1", 1, &BTreeMap::new()),
            Err(Error::ComponentCount { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn reserved_constant_names() {
        assert!(parse("1", 1, &consts(&[("t", 1.0)])).is_err());
        assert!(parse("1", 1, &consts(&[("exp", 1.0)])).is_err());
        assert!(parse("1", 1, &consts(&[("u1", 1.0)])).is_err());
    }

    #[test]
    fn non_finite_evaluation_is_an_error() {
        let rhs = parse("log(u1)", 1, &BTreeMap::new()).unwrap();
        match rhs.eval(0.25, &[-1.0]) {
            Err(Error::Eval { t, u }) => {
                assert_eq!(t, 0.25);
                assert_eq!(u, vec![-1.0]);
            }
            other => panic!("unexpected {other:?}"),
        }
        let rhs = parse("1/u1", 1, &BTreeMap::new()).unwrap();
        assert!(rhs.eval(0.0, &[0.0]).is_err());
    }

    #[test]
    fn display_reparses_to_same_tree() {
        let c = consts(&[("omega", 4649.56)]);
        let rhs = parse(GYRE, 1, &c).unwrap();
        let again = parse(&rhs.to_string(), 1, &c).unwrap();
        assert_eq!(rhs, again);
    }
}

//! A small closed expression language over `t`, `x1..xn`, `u1..um`.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          right-associative
//! primary := number | variable | call | '(' expr ')'
//! call    := name '(' expr (',' expr)* ')'
//! ```
//!
//! Functions: `exp ln abs sqrt tanh` (one argument), `min max` (two),
//! `indicator(s, a, b)` which is `1` for `a ≤ s < b` and `0` otherwise.

use std::fmt;

/// 1-based line and column of a token in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
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

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Abs,
    Sqrt,
    Tanh,
    Min,
    Max,
    Indicator,
}

impl Func {
    pub const ALL: [Func; 8] =
        [Func::Exp, Func::Ln, Func::Abs, Func::Sqrt, Func::Tanh, Func::Min, Func::Max, Func::Indicator];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Min => "min",
            Func::Max => "max",
            Func::Indicator => "indicator",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            Func::Indicator => 3,
            _ => 1,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    Time,
    /// Zero-based state index.
    State(usize),
    /// Zero-based control index.
    Control(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Time => write!(f, "t"),
            Var::State(i) => write!(f, "x{}", i + 1),
            Var::Control(i) => write!(f, "u{}", i + 1),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ExprKind {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// A parsed expression. Equality is structural and ignores source positions.
#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        match (&self.kind, &other.kind) {
            (ExprKind::Num(a), ExprKind::Num(b)) => a.to_bits() == b.to_bits(),
            (ExprKind::Var(a), ExprKind::Var(b)) => a == b,
            (ExprKind::Neg(a), ExprKind::Neg(b)) => a == b,
            (ExprKind::Binary(o1, l1, r1), ExprKind::Binary(o2, l2, r2)) => o1 == o2 && l1 == l2 && r1 == r2,
            (ExprKind::Call(f1, a1), ExprKind::Call(f2, a2)) => f1 == f2 && a1 == a2,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    UnexpectedToken(String),
    UnexpectedEnd,
    BadNumber(String),
    UnknownIdentifier(String),
    Arity { func: &'static str, expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("parse error at {pos}: {}", describe_parse(.kind))]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub pos: Pos,
}

fn describe_parse(kind: &ParseErrorKind) -> String {
    match kind {
        ParseErrorKind::UnexpectedChar(c) => format!("unexpected character `{c}`"),
        ParseErrorKind::UnexpectedToken(s) => format!("unexpected `{s}`"),
        ParseErrorKind::UnexpectedEnd => "unexpected end of input".into(),
        ParseErrorKind::BadNumber(s) => format!("malformed number `{s}`"),
        ParseErrorKind::UnknownIdentifier(s) => format!("unknown identifier `{s}`"),
        ParseErrorKind::Arity { func, expected, got } => {
            format!("`{func}` takes {expected} argument(s), got {got}")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalErrorKind {
    LogOfNegative,
    SqrtOfNegative,
    DivisionByZero,
    Unbound(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("evaluation error at {pos}: {}", describe_eval(.kind))]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub pos: Pos,
}

fn describe_eval(kind: &EvalErrorKind) -> String {
    match kind {
        EvalErrorKind::LogOfNegative => "ln of a negative number".into(),
        EvalErrorKind::SqrtOfNegative => "sqrt of a negative number".into(),
        EvalErrorKind::DivisionByZero => "division by zero".into(),
        EvalErrorKind::Unbound(v) => format!("variable `{v}` has no binding"),
    }
}

/// Declared variable dimensions; `None` accepts any index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Scope {
    pub state_dim: Option<usize>,
    pub control_dim: Option<usize>,
}

impl Scope {
    pub fn new(state_dim: usize, control_dim: usize) -> Self {
        Self { state_dim: Some(state_dim), control_dim: Some(control_dim) }
    }

    pub fn state_only(state_dim: usize) -> Self {
        Self { state_dim: Some(state_dim), control_dim: Some(0) }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, String),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl Tok {
    fn text(&self) -> String {
        match self {
            Tok::Num(_, s) | Tok::Ident(s) => s.clone(),
            Tok::Op(c) => c.to_string(),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
            Tok::Comma => ",".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (1, 1);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column: col };
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            col += 1;
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value =
                text.parse::<f64>().map_err(|_| ParseError { kind: ParseErrorKind::BadNumber(text.clone()), pos })?;
            out.push((Tok::Num(value, text), pos));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                _ => return Err(ParseError { kind: ParseErrorKind::UnexpectedChar(c), pos }),
            };
            out.push((tok, pos));
            i += 1;
        }
        col += i - start;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    end: Pos,
    scope: Scope,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(t, _)| t)
    }

    fn pos(&self) -> Pos {
        self.toks.get(self.at).map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn next(&mut self) -> Result<(Tok, Pos), ParseError> {
        let item =
            self.toks.get(self.at).cloned().ok_or(ParseError { kind: ParseErrorKind::UnexpectedEnd, pos: self.end })?;
        self.at += 1;
        Ok(item)
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        let (tok, pos) = self.next()?;
        if tok == want {
            Ok(())
        } else {
            Err(ParseError { kind: ParseErrorKind::UnexpectedToken(tok.text()), pos })
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            let pos = self.pos();
            self.at += 1;
            let rhs = self.term()?;
            lhs = Expr { kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), pos };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            let pos = self.pos();
            self.at += 1;
            let rhs = self.unary()?;
            lhs = Expr { kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), pos };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Op('-')) = self.peek() {
            let pos = self.pos();
            self.at += 1;
            let inner = self.unary()?;
            return Ok(Expr { kind: ExprKind::Neg(Box::new(inner)), pos });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if let Some(Tok::Op('^')) = self.peek() {
            let pos = self.pos();
            self.at += 1;
            let exponent = self.unary()?;
            return Ok(Expr { kind: ExprKind::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)), pos });
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let (tok, pos) = self.next()?;
        match tok {
            Tok::Num(v, _) => Ok(Expr { kind: ExprKind::Num(v), pos }),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(func) = Func::from_name(&name) {
                    self.expect(Tok::LParen)?;
                    let mut args = vec![self.expr()?];
                    while let Some(Tok::Comma) = self.peek() {
                        self.at += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen)?;
                    if args.len() != func.arity() {
                        return Err(ParseError {
                            kind: ParseErrorKind::Arity { func: func.name(), expected: func.arity(), got: args.len() },
                            pos,
                        });
                    }
                    return Ok(Expr { kind: ExprKind::Call(func, args), pos });
                }
                let var = self
                    .variable(&name)
                    .ok_or(ParseError { kind: ParseErrorKind::UnknownIdentifier(name.clone()), pos })?;
                Ok(Expr { kind: ExprKind::Var(var), pos })
            }
            other => Err(ParseError { kind: ParseErrorKind::UnexpectedToken(other.text()), pos }),
        }
    }

    fn variable(&self, name: &str) -> Option<Var> {
        if name == "t" {
            return Some(Var::Time);
        }
        let (head, digits) = name.split_at(1);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
            return None;
        }
        let k: usize = digits.parse().ok()?;
        match head {
            "x" if self.scope.state_dim.is_none_or(|n| k <= n) => Some(Var::State(k - 1)),
            "u" if self.scope.control_dim.is_none_or(|m| k <= m) => Some(Var::Control(k - 1)),
            _ => None,
        }
    }
}

/// Parses without restricting variable indices.
pub fn parse(source: &str) -> Result<Expr, ParseError> {
    parse_in(source, Scope::default())
}

/// Parses, rejecting `xk`/`uk` beyond the declared dimensions.
pub fn parse_in(source: &str, scope: Scope) -> Result<Expr, ParseError> {
    let toks = lex(source)?;
    let end = {
        let lines: Vec<&str> = source.split('\n').collect();
        Pos { line: lines.len(), column: lines.last().map_or(0, |l| l.chars().count()) + 1 }
    };
    let mut p = Parser { toks, at: 0, end, scope };
    let e = p.expr()?;
    if p.at < p.toks.len() {
        let (tok, pos) = p.toks[p.at].clone();
        return Err(ParseError { kind: ParseErrorKind::UnexpectedToken(tok.text()), pos });
    }
    Ok(e)
}

impl Expr {
    pub fn num(v: f64) -> Self {
        Expr { kind: ExprKind::Num(v), pos: Pos::default() }
    }

    pub fn var(v: Var) -> Self {
        Expr { kind: ExprKind::Var(v), pos: Pos::default() }
    }

    pub fn negate(e: Expr) -> Self {
        Expr { kind: ExprKind::Neg(Box::new(e)), pos: Pos::default() }
    }

    pub fn binary(op: BinOp, l: Expr, r: Expr) -> Self {
        Expr { kind: ExprKind::Binary(op, Box::new(l), Box::new(r)), pos: Pos::default() }
    }

    pub fn call(f: Func, args: Vec<Expr>) -> Self {
        Expr { kind: ExprKind::Call(f, args), pos: Pos::default() }
    }

    /// Largest referenced state and control index (1-based counts).
    pub fn max_indices(&self) -> (usize, usize) {
        match &self.kind {
            ExprKind::Num(_) | ExprKind::Var(Var::Time) => (0, 0),
            ExprKind::Var(Var::State(i)) => (i + 1, 0),
            ExprKind::Var(Var::Control(i)) => (0, i + 1),
            ExprKind::Neg(e) => e.max_indices(),
            ExprKind::Binary(_, l, r) => {
                let (a, b) = l.max_indices();
                let (c, d) = r.max_indices();
                (a.max(c), b.max(d))
            }
            ExprKind::Call(_, args) => {
                args.iter().map(Expr::max_indices).fold((0, 0), |(a, b), (c, d)| (a.max(c), b.max(d)))
            }
        }
    }

    pub fn eval(&self, t: f64, x: &[f64], u: &[f64]) -> Result<f64, EvalError> {
        let err = |kind| Err(EvalError { kind, pos: self.pos });
        match &self.kind {
            ExprKind::Num(v) => Ok(*v),
            ExprKind::Var(Var::Time) => Ok(t),
            ExprKind::Var(v @ Var::State(i)) => match x.get(*i) {
                Some(val) => Ok(*val),
                None => err(EvalErrorKind::Unbound(v.to_string())),
            },
            ExprKind::Var(v @ Var::Control(i)) => match u.get(*i) {
                Some(val) => Ok(*val),
                None => err(EvalErrorKind::Unbound(v.to_string())),
            },
            ExprKind::Neg(e) => Ok(-e.eval(t, x, u)?),
            ExprKind::Binary(op, l, r) => {
                let a = l.eval(t, x, u)?;
                let b = r.eval(t, x, u)?;
                match op {
                    BinOp::Add => Ok(a + b),
                    BinOp::Sub => Ok(a - b),
                    BinOp::Mul => Ok(a * b),
                    BinOp::Div if b == 0.0 => err(EvalErrorKind::DivisionByZero),
                    BinOp::Div => Ok(a / b),
                    BinOp::Pow => Ok(power(a, b)),
                }
            }
            ExprKind::Call(f, args) => {
                let a = args[0].eval(t, x, u)?;
                match f {
                    Func::Exp => Ok(a.exp()),
                    Func::Ln if a < 0.0 => err(EvalErrorKind::LogOfNegative),
                    Func::Ln => Ok(a.ln()),
                    Func::Abs => Ok(a.abs()),
                    Func::Sqrt if a < 0.0 => err(EvalErrorKind::SqrtOfNegative),
                    Func::Sqrt => Ok(a.sqrt()),
                    Func::Tanh => Ok(a.tanh()),
                    Func::Min => Ok(a.min(args[1].eval(t, x, u)?)),
                    Func::Max => Ok(a.max(args[1].eval(t, x, u)?)),
                    Func::Indicator => {
                        let lo = args[1].eval(t, x, u)?;
                        let hi = args[2].eval(t, x, u)?;
                        Ok(if lo <= a && a < hi { 1.0 } else { 0.0 })
                    }
                }
            }
        }
    }

    fn precedence(&self) -> u8 {
        match &self.kind {
            ExprKind::Binary(op, _, _) => op.precedence(),
            ExprKind::Neg(_) => 3,
            _ => 5,
        }
    }
}

/// Integer exponents use repeated multiplication so that `x^2` is exact.
fn power(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= 64.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, wrap: bool) -> fmt::Result {
    if wrap {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Num(v) => {
                if *v < 0.0 || v.is_sign_negative() {
                    write!(f, "({v:?})")
                } else {
                    write!(f, "{v:?}")
                }
            }
            ExprKind::Var(v) => write!(f, "{v}"),
            ExprKind::Neg(e) => {
                write!(f, "-")?;
                write_operand(f, e, e.precedence() < 3)
            }
            ExprKind::Binary(op, l, r) => {
                let p = op.precedence();
                let (wrap_l, wrap_r) = if *op == BinOp::Pow {
                    (l.precedence() <= p, r.precedence() < 3)
                } else {
                    (l.precedence() < p, r.precedence() <= p)
                };
                write_operand(f, l, wrap_l)?;
                if *op == BinOp::Pow {
                    write!(f, "^")?;
                } else {
                    write!(f, " {} ", op.symbol())?;
                }
                write_operand(f, r, wrap_r)
            }
            ExprKind::Call(func, args) => {
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

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn x1() -> Expr {
        Expr::var(Var::State(0))
    }

    fn u1() -> Expr {
        Expr::var(Var::Control(0))
    }

    #[test]
    fn parses_dynamics_text() {
        let e = parse("(1 - u1) * x1").unwrap();
        let want = Expr::binary(BinOp::Mul, Expr::binary(BinOp::Sub, Expr::num(1.0), u1()), x1());
        assert_eq!(e, want);
    }

    #[test]
    fn parses_indicator_dynamics() {
        let e = parse("indicator(t,0,1) * u1 * x1^2").unwrap();
        let ind = Expr::call(Func::Indicator, vec![Expr::var(Var::Time), Expr::num(0.0), Expr::num(1.0)]);
        let want = Expr::binary(
            BinOp::Mul,
            Expr::binary(BinOp::Mul, ind, u1()),
            Expr::binary(BinOp::Pow, x1(), Expr::num(2.0)),
        );
        assert_eq!(e, want);
    }

    #[test]
    fn parses_storage() {
        let e = parse("ln(abs(x1)+1)").unwrap();
        let want =
            Expr::call(Func::Ln, vec![Expr::binary(BinOp::Add, Expr::call(Func::Abs, vec![x1()]), Expr::num(1.0))]);
        assert_eq!(e, want);
        assert!((e.eval(0.0, &[-(std::f64::consts::E - 1.0)], &[]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn evaluation_examples() {
        let e = parse("(1-u1)*x1").unwrap();
        let v = e.eval(0.0, &[(-1.0f64).exp()], &[2.0]).unwrap();
        assert_eq!(v, -(-1.0f64).exp());
        let e = parse("(abs(u1)/3 + abs(x1)) * exp(-2*t)").unwrap();
        assert_eq!(e.eval(0.0, &[1.0], &[0.0]).unwrap(), 1.0);
        let e = parse("indicator(t,0,1)").unwrap();
        assert_eq!(e.eval(1.0, &[], &[]).unwrap(), 0.0);
        assert_eq!(e.eval(0.0, &[], &[]).unwrap(), 1.0);
    }

    #[test]
    fn precedence_and_associativity() {
        let v = |s: &str| parse(s).unwrap().eval(0.0, &[3.0], &[]).unwrap();
        assert_eq!(v("2^3^2"), 512.0);
        assert_eq!(v("-x1^2"), -9.0);
        assert_eq!(v("2^-1"), 0.5);
        assert_eq!(v("10 - 4 - 3"), 3.0);
        assert_eq!(v("12 / 3 / 2"), 2.0);
        assert_eq!(v("1 + 2 * 3"), 7.0);
        assert_eq!(v("1.5e1 + .5"), 15.5);
        assert_eq!(v("min(x1, 2) + max(x1, 2)"), 5.0);
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse("x1 +\n  * 2").unwrap_err();
        assert_eq!(err.pos, Pos { line: 2, column: 3 });
        let err = parse("exp(x1").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnexpectedEnd);
        let err = parse("x1 $ 2").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnexpectedChar('$'));
        assert_eq!(err.pos.column, 4);
    }

    #[test]
    fn closed_whitelist() {
        for src in ["sin(x1)", "import", "y1", "x0", "pi", "x01", "exp"] {
            assert!(parse(src).is_err(), "{src} should be rejected");
        }
        let err = parse("cos(t)").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("cos".into()));
        let err = parse_in("x2 + u1", Scope::new(1, 1)).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("x2".into()));
        assert_eq!(err.pos.column, 1);
        assert!(parse_in("u1", Scope::state_only(1)).is_err());
    }

    #[test]
    fn arity_mismatch() {
        let err = parse("min(1)").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Arity { func: "min", expected: 2, got: 1 });
        assert!(parse("indicator(t, 0)").is_err());
        assert!(parse("abs(1, 2)").is_err());
    }

    #[test]
    fn domain_errors_carry_positions() {
        let e = parse("1 + ln(x1)").unwrap();
        let err = e.eval(0.0, &[-1.0], &[]).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::LogOfNegative);
        assert_eq!(err.pos, Pos { line: 1, column: 5 });
        let err = parse("sqrt(t)").unwrap().eval(-1.0, &[], &[]).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::SqrtOfNegative);
        let err = parse("1 / x1").unwrap().eval(0.0, &[0.0], &[]).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::DivisionByZero);
        assert_eq!(err.pos.column, 3);
        let err = parse("u2").unwrap().eval(0.0, &[], &[1.0]).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::Unbound("u2".into()));
        assert_eq!(parse("ln(0)").unwrap().eval(0.0, &[], &[]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn max_indices() {
        assert_eq!(parse("x3 * u2 + t").unwrap().max_indices(), (3, 2));
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0f64..1e6).prop_map(Expr::num),
            (0u32..1000).prop_map(|k| Expr::num(k as f64)),
            Just(Expr::var(Var::Time)),
            (0usize..3).prop_map(|i| Expr::var(Var::State(i))),
            (0usize..2).prop_map(|i| Expr::var(Var::Control(i))),
        ];
        leaf.prop_recursive(5, 48, 3, |inner| {
            let op =
                prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div), Just(BinOp::Pow)];
            prop_oneof![
                inner.clone().prop_map(Expr::negate),
                (op, inner.clone(), inner.clone()).prop_map(|(o, l, r)| Expr::binary(o, l, r)),
                (0usize..8, prop::collection::vec(inner, 3)).prop_map(|(k, mut args)| {
                    let f = Func::ALL[k];
                    args.truncate(f.arity());
                    Expr::call(f, args)
                }),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let printed = e.to_string();
            let back = parse(&printed).map_err(|err| TestCaseError::fail(format!("{printed}: {err}")))?;
            prop_assert_eq!(&back, &e, "printed as {}", printed);
        }

        #[test]
        fn evaluation_is_deterministic(e in arb_expr(), t in -5.0f64..5.0, x in prop::array::uniform3(-5.0f64..5.0)) {
            let a = e.eval(t, &x, &[0.3, -0.7]);
            let b = e.eval(t, &x, &[0.3, -0.7]);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a.to_bits(), b.to_bits()),
                (Err(a), Err(b)) => prop_assert_eq!(a, b),
                _ => prop_assert!(false),
            }
        }
    }
}

//! Arithmetic expressions over state variables `x1..xn` and parameters
//! `l1..lm`.
//!
//! Grammar, lowest to highest precedence:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          right-associative
//! primary := number | var | func '(' args ')' | '(' expr ')'
//! func    := sin | cos | exp | log | sqrt | abs
//! ```
//!
//! `^` binds tighter than unary minus, so `-x1^2` is `-(x1^2)`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function `{name}` at byte {offset} takes {expected} argument(s), got {got}")]
    Arity {
        name: String,
        offset: usize,
        expected: usize,
        got: usize,
    },
    #[error("evaluation error at byte {offset}: {message}")]
    Domain { offset: usize, message: String },
    #[error("expression evaluated with {got} {what}, declared {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// Zero-based state index (`x1` is `State(0)`).
    State(usize),
    /// Zero-based parameter index (`l1` is `Param(0)`).
    Param(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Const(f64),
    Var(Var),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// An AST node. `pos` is the byte offset used in diagnostics and does not
/// take part in equality.
#[derive(Debug, Clone)]
pub struct Node {
    pub kind: NodeKind,
    pub pos: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

/// A parsed expression together with the dimensions it was declared for.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub root: Node,
    pub n: usize,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            })?;
            out.push((Tok::Num(value), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
            continue;
        }
        let tok = match c {
            '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            _ => {
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{c}`"),
                })
            }
        };
        out.push((tok, start));
        i += c.len_utf8();
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
    n: usize,
    m: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn describe(tok: &Tok) -> String {
        match tok {
            Tok::End => "end of input".into(),
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Op(c) => format!("`{c}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
        }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ExprError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(ExprError::Syntax {
                offset: self.pos(),
                message: format!("expected {what}, found {}", Self::describe(self.peek())),
            })
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinaryOp::Add,
                Tok::Op('-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            let (_, pos) = self.bump();
            let rhs = self.term()?;
            lhs = Node {
                kind: NodeKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                pos,
            };
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinaryOp::Mul,
                Tok::Op('/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            let (_, pos) = self.bump();
            let rhs = self.unary()?;
            lhs = Node {
                kind: NodeKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                pos,
            };
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if let Tok::Op('-') = self.peek() {
            let (_, pos) = self.bump();
            let child = self.unary()?;
            return Ok(Node {
                kind: NodeKind::Unary(UnaryOp::Neg, Box::new(child)),
                pos,
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if let Tok::Op('^') = self.peek() {
            let (_, pos) = self.bump();
            let exponent = self.unary()?;
            return Ok(Node {
                kind: NodeKind::Binary(BinaryOp::Pow, Box::new(base), Box::new(exponent)),
                pos,
            });
        }
        Ok(base)
    }

    fn variable(&self, name: &str, pos: usize) -> Result<Var, ExprError> {
        let unknown = || ExprError::UnknownIdentifier {
            name: name.to_string(),
            offset: pos,
        };
        let (prefix, digits) = if let Some(rest) = name.strip_prefix('x') {
            ('x', rest)
        } else if let Some(rest) = name.strip_prefix('l') {
            ('l', rest)
        } else {
            return Err(unknown());
        };
        if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(unknown());
        }
        let index: usize = digits.parse().map_err(|_| unknown())?;
        match prefix {
            'x' if index <= self.n => Ok(Var::State(index - 1)),
            'l' if index <= self.m => Ok(Var::Param(index - 1)),
            _ => Err(unknown()),
        }
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        let (tok, pos) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Node {
                kind: NodeKind::Const(v),
                pos,
            }),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if let Some(func) = Func::from_name(&name) {
                    self.expect(Tok::LParen, &format!("`(` after `{name}`"))?;
                    let mut args = Vec::new();
                    if *self.peek() != Tok::RParen {
                        args.push(self.expr()?);
                        while *self.peek() == Tok::Comma {
                            self.bump();
                            args.push(self.expr()?);
                        }
                    }
                    self.expect(Tok::RParen, "`)`")?;
                    if args.len() != 1 {
                        return Err(ExprError::Arity {
                            name,
                            offset: pos,
                            expected: 1,
                            got: args.len(),
                        });
                    }
                    Ok(Node {
                        kind: NodeKind::Call(func, args),
                        pos,
                    })
                } else {
                    let var = self.variable(&name, pos)?;
                    Ok(Node {
                        kind: NodeKind::Var(var),
                        pos,
                    })
                }
            }
            other => Err(ExprError::Syntax {
                offset: pos,
                message: format!("expected an operand, found {}", Self::describe(&other)),
            }),
        }
    }
}

/// Parse `source` for a system with `n` states and `m` parameters.
pub fn parse(source: &str, n: usize, m: usize) -> Result<Expr, ExprError> {
    if source.trim().is_empty() {
        return Err(ExprError::Syntax {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let mut p = Parser {
        toks: tokenize(source)?,
        at: 0,
        n,
        m,
    };
    let root = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(ExprError::Syntax {
            offset: p.pos(),
            message: format!("unexpected {}", Parser::describe(p.peek())),
        });
    }
    Ok(Expr { root, n, m })
}

fn domain(pos: usize, message: impl Into<String>) -> ExprError {
    ExprError::Domain {
        offset: pos,
        message: message.into(),
    }
}

fn eval_node(node: &Node, lambda: &[f64], x: &[f64]) -> Result<f64, ExprError> {
    let value = match &node.kind {
        NodeKind::Const(v) => *v,
        NodeKind::Var(Var::State(i)) => x[*i],
        NodeKind::Var(Var::Param(i)) => lambda[*i],
        NodeKind::Unary(UnaryOp::Neg, c) => -eval_node(c, lambda, x)?,
        NodeKind::Binary(op, l, r) => {
            let a = eval_node(l, lambda, x)?;
            let b = eval_node(r, lambda, x)?;
            match op {
                BinaryOp::Add => a + b,
                BinaryOp::Sub => a - b,
                BinaryOp::Mul => a * b,
                BinaryOp::Div => {
                    if b == 0.0 {
                        return Err(domain(node.pos, "division by zero"));
                    }
                    a / b
                }
                BinaryOp::Pow => {
                    if a < 0.0 && b.fract() != 0.0 {
                        return Err(domain(node.pos, "negative base with non-integer exponent"));
                    }
                    if a == 0.0 && b < 0.0 {
                        return Err(domain(node.pos, "zero raised to a negative power"));
                    }
                    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
                        a.powi(b as i32)
                    } else {
                        a.powf(b)
                    }
                }
            }
        }
        NodeKind::Call(func, args) => {
            let a = eval_node(&args[0], lambda, x)?;
            match func {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Exp => a.exp(),
                Func::Abs => a.abs(),
                Func::Log => {
                    if a <= 0.0 {
                        return Err(domain(node.pos, "log of a non-positive value"));
                    }
                    a.ln()
                }
                Func::Sqrt => {
                    if a < 0.0 {
                        return Err(domain(node.pos, "sqrt of a negative value"));
                    }
                    a.sqrt()
                }
            }
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(domain(node.pos, "non-finite intermediate value"))
    }
}

/// Evaluate at parameter `lambda` and state `x`.
pub fn eval_ast(expr: &Expr, lambda: &[f64], x: &[f64]) -> Result<f64, ExprError> {
    if x.len() != expr.n {
        return Err(ExprError::Dimension {
            what: "states",
            expected: expr.n,
            got: x.len(),
        });
    }
    if lambda.len() != expr.m {
        return Err(ExprError::Dimension {
            what: "parameters",
            expected: expr.m,
            got: lambda.len(),
        });
    }
    eval_node(&expr.root, lambda, x)
}

impl fmt::Display for Node {
    /// Canonical, fully parenthesized form. Re-parsing it reproduces the AST.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            NodeKind::Const(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => {
                write!(f, "(-{:?})", -v)
            }
            NodeKind::Const(v) => write!(f, "{v:?}"),
            NodeKind::Var(Var::State(i)) => write!(f, "x{}", i + 1),
            NodeKind::Var(Var::Param(i)) => write!(f, "l{}", i + 1),
            NodeKind::Unary(UnaryOp::Neg, c) => write!(f, "(-{c})"),
            NodeKind::Binary(op, l, r) => {
                let sym = match op {
                    BinaryOp::Add => "+",
                    BinaryOp::Sub => "-",
                    BinaryOp::Mul => "*",
                    BinaryOp::Div => "/",
                    BinaryOp::Pow => "^",
                };
                write!(f, "({l} {sym} {r})")
            }
            NodeKind::Call(func, args) => {
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

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_expression() {
        let e = parse("l1*x1*(1-x2)", 2, 1).unwrap();
        assert_eq!(eval_ast(&e, &[2.0], &[0.5, 0.5]).unwrap(), 0.5);
    }

    #[test]
    fn sin_zero_and_constant() {
        assert_eq!(eval_ast(&parse("sin(0)", 0, 0).unwrap(), &[], &[]).unwrap(), 0.0);
        assert_eq!(
            eval_ast(&parse("3.5", 3, 2).unwrap(), &[1.0, 2.0], &[0.0; 3]).unwrap(),
            3.5
        );
    }

    #[test]
    fn sum_of_squares() {
        let e = parse("x1^2+x2^2", 2, 0).unwrap();
        assert_eq!(eval_ast(&e, &[], &[3.0, 4.0]).unwrap(), 25.0);
    }

    #[test]
    fn unbalanced_parenthesis_reports_end_of_input() {
        let err = parse("x1*(1-x2", 2, 0).unwrap_err();
        match err {
            ExprError::Syntax { offset, message } => {
                assert_eq!(offset, 8);
                assert!(message.contains("end of input"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let e = parse("1/x1", 1, 0).unwrap();
        assert!(matches!(
            eval_ast(&e, &[], &[0.0]),
            Err(ExprError::Domain { offset: 1, .. })
        ));
    }

    #[test]
    fn unknown_identifiers_and_arity() {
        assert!(matches!(parse("x3", 2, 0), Err(ExprError::UnknownIdentifier { .. })));
        assert!(matches!(parse("l1", 2, 0), Err(ExprError::UnknownIdentifier { .. })));
        assert!(matches!(parse("y", 2, 0), Err(ExprError::UnknownIdentifier { .. })));
        assert!(matches!(parse("x01", 2, 0), Err(ExprError::UnknownIdentifier { .. })));
        assert!(matches!(
            parse("sin(x1, x2)", 2, 0),
            Err(ExprError::Arity { got: 2, .. })
        ));
        assert!(matches!(parse("cos()", 2, 0), Err(ExprError::Arity { got: 0, .. })));
    }

    #[test]
    fn precedence_and_associativity() {
        let v = |s: &str| eval_ast(&parse(s, 1, 0).unwrap(), &[], &[3.0]).unwrap();
        assert_eq!(v("-x1^2"), -9.0);
        assert_eq!(v("2^3^2"), 512.0);
        assert_eq!(v("2^-1"), 0.5);
        assert_eq!(v("1-2-3"), -4.0);
        assert_eq!(v("8/2/2"), 2.0);
        assert_eq!(v("1+2*3"), 7.0);
        assert_eq!(v("1.5e1"), 15.0);
    }

    #[test]
    fn domain_errors() {
        let e = |s: &str| eval_ast(&parse(s, 1, 0).unwrap(), &[], &[-2.0]);
        assert!(e("x1^0.5").is_err());
        assert_eq!(e("x1^2").unwrap(), 4.0);
        assert!(e("log(x1)").is_err());
        assert!(e("sqrt(x1)").is_err());
        assert!(e("exp(1000)").is_err());
    }

    #[test]
    fn printed_form_reparses() {
        let src = "-l1*x1*(1-x2)^2 + sin(x2)/3 - 2^-x1";
        let a = parse(src, 2, 1).unwrap();
        let b = parse(&a.to_string(), 2, 1).unwrap();
        assert_eq!(a, b);
    }
}

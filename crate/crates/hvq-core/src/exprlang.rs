//! Scalar expression language for potentials, metric entries and initial data.
//!
//! Plain infix grammar over the declared coordinates (`q1`, `q2`, …) and time
//! `t`: `+ - * /`, right-associative `^`, unary minus and the functions
//! `sin cos exp log sqrt abs`. No implicit multiplication. Literals are parsed
//! as f64; evaluation is generic over the field scalar.

use crate::fields::{Grid, ScalarField};
use crate::Scalar;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Ast {
    Constant(f64),
    /// Index into the declared coordinate list.
    Coord(usize),
    Time,
    Unary(UnaryOp, Box<Ast>),
    Binary(BinaryOp, Box<Ast>, Box<Ast>),
}

/// A parsed expression together with the coordinate names it was parsed under.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    ast: Ast,
    coords: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("`{name}` expects {expected} argument(s), got {got} (position {pos})")]
    ArityMismatch {
        name: String,
        pos: usize,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("log of non-positive value {value}")]
    LogDomain { value: f64 },
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result")]
    NonFinite,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridEvalError {
    #[error("at grid node {index:?} (flat {flat}): {source}")]
    Domain {
        flat: usize,
        index: Vec<usize>,
        source: EvalError,
    },
    #[error("expression uses {expr_coords} coordinate(s) but grid has {grid_dims}")]
    DimensionMismatch {
        expr_coords: usize,
        grid_dims: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Token {
    Number(f64),
    Ident(usize, usize), // byte range into the source
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

struct Lexer<'a> {
    src: &'a str,
    tokens: Vec<(Token, usize)>,
}

fn lex(src: &str) -> Result<Vec<(Token, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                tokens.push((Token::Plus, i));
                i += 1;
            }
            '-' => {
                tokens.push((Token::Minus, i));
                i += 1;
            }
            '*' => {
                tokens.push((Token::Star, i));
                i += 1;
            }
            '/' => {
                tokens.push((Token::Slash, i));
                i += 1;
            }
            '^' => {
                tokens.push((Token::Caret, i));
                i += 1;
            }
            '(' => {
                tokens.push((Token::LParen, i));
                i += 1;
            }
            ')' => {
                tokens.push((Token::RParen, i));
                i += 1;
            }
            ',' => {
                tokens.push((Token::Comma, i));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // exponent part: e.g. 1e-3, 2.5E+2
                if i < bytes.len() && matches!(bytes[i] as char, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j] as char, '+' | '-') {
                        j += 1;
                    }
                    if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    pos: start,
                    msg: format!("invalid number `{text}`"),
                })?;
                tokens.push((Token::Number(value), start));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] as char == '_')
                {
                    i += 1;
                }
                tokens.push((Token::Ident(start, i), start));
            }
            other => {
                return Err(ParseError::Syntax {
                    pos: i,
                    msg: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    pos: usize,
    coords: &'a [String],
}

const FUNCTIONS: &[(&str, UnaryOp)] = &[
    ("sin", UnaryOp::Sin),
    ("cos", UnaryOp::Cos),
    ("exp", UnaryOp::Exp),
    ("log", UnaryOp::Log),
    ("sqrt", UnaryOp::Sqrt),
    ("abs", UnaryOp::Abs),
];

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<(Token, usize)> {
        self.lexer.tokens.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<(Token, usize)> {
        let t = self.peek();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eof_pos(&self) -> usize {
        self.lexer.src.len()
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.bump() {
            Some((Token::RParen, _)) => Ok(()),
            Some((_, pos)) => Err(ParseError::Syntax {
                pos,
                msg: "expected `)`".into(),
            }),
            None => Err(ParseError::Syntax {
                pos: self.eof_pos(),
                msg: "expected `)`, found end of input".into(),
            }),
        }
    }

    fn expr(&mut self) -> Result<Ast, ParseError> {
        let mut lhs = self.term()?;
        while let Some((tok, _)) = self.peek() {
            let op = match tok {
                Token::Plus => BinaryOp::Add,
                Token::Minus => BinaryOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Ast::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Ast, ParseError> {
        let mut lhs = self.unary()?;
        while let Some((tok, _)) = self.peek() {
            let op = match tok {
                Token::Star => BinaryOp::Mul,
                Token::Slash => BinaryOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Ast::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Ast, ParseError> {
        if let Some((Token::Minus, _)) = self.peek() {
            self.bump();
            let inner = self.unary()?;
            return Ok(Ast::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Ast, ParseError> {
        let base = self.atom()?;
        if let Some((Token::Caret, _)) = self.peek() {
            self.bump();
            // right-associative: the exponent may itself carry unary minus
            let exponent = if let Some((Token::Minus, _)) = self.peek() {
                self.bump();
                Ast::Unary(UnaryOp::Neg, Box::new(self.power()?))
            } else {
                self.power()?
            };
            return Ok(Ast::Binary(
                BinaryOp::Pow,
                Box::new(base),
                Box::new(exponent),
            ));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Ast, ParseError> {
        match self.bump() {
            Some((Token::Number(v), _)) => Ok(Ast::Constant(v)),
            Some((Token::LParen, _)) => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some((Token::Ident(s, e), pos)) => {
                let name = &self.lexer.src[s..e];
                if let Some((Token::LParen, _)) = self.peek() {
                    let op = FUNCTIONS
                        .iter()
                        .find(|(n, _)| *n == name)
                        .map(|(_, op)| *op)
                        .ok_or_else(|| ParseError::UnknownIdentifier {
                            name: name.to_string(),
                            pos,
                        })?;
                    self.bump(); // consume `(`
                    let first = self.expr()?;
                    let mut got = 1;
                    while let Some((Token::Comma, _)) = self.peek() {
                        self.bump();
                        self.expr()?;
                        got += 1;
                    }
                    self.expect_rparen()?;
                    if got != 1 {
                        return Err(ParseError::ArityMismatch {
                            name: name.to_string(),
                            pos,
                            expected: 1,
                            got,
                        });
                    }
                    Ok(Ast::Unary(op, Box::new(first)))
                } else if name == "t" {
                    Ok(Ast::Time)
                } else if let Some(k) = self.coords.iter().position(|c| c == name) {
                    Ok(Ast::Coord(k))
                } else {
                    Err(ParseError::UnknownIdentifier {
                        name: name.to_string(),
                        pos,
                    })
                }
            }
            Some((_, pos)) => Err(ParseError::Syntax {
                pos,
                msg: "expected a value".into(),
            }),
            None => Err(ParseError::Syntax {
                pos: self.eof_pos(),
                msg: "expected a value, found end of input".into(),
            }),
        }
    }
}

/// Parse `text` as an expression over `coords` (plus the time variable `t`).
pub fn parse_expression(text: &str, coords: &[String]) -> Result<Expression, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Syntax {
            pos: 0,
            msg: "empty expression".into(),
        });
    }
    let tokens = lex(text)?;
    let mut parser = Parser {
        lexer: Lexer { src: text, tokens },
        pos: 0,
        coords,
    };
    let ast = parser.expr()?;
    if let Some((_, pos)) = parser.peek() {
        return Err(ParseError::Syntax {
            pos,
            msg: "unexpected trailing input".into(),
        });
    }
    Ok(Expression {
        ast,
        coords: coords.to_vec(),
    })
}

impl Expression {
    /// Constant expression, convenient for defaults like `A_i = 0`.
    pub fn constant(value: f64) -> Self {
        Expression {
            ast: Ast::Constant(value),
            coords: Vec::new(),
        }
    }

    pub fn ast(&self) -> &Ast {
        &self.ast
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    /// Number of coordinates the expression was declared over.
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Pointwise evaluation at coordinates `q` and time `t`.
    pub fn eval<T: Scalar>(&self, q: &[T], t: T) -> Result<T, EvalError> {
        let v = eval_node(&self.ast, q, t)?;
        if !v.is_finite() {
            return Err(EvalError::NonFinite);
        }
        Ok(v)
    }

    /// Evaluate on every node of `grid` at time `t`.
    pub fn evaluate_on_grid<T: Scalar>(
        &self,
        grid: &Grid<T>,
        t: T,
    ) -> Result<ScalarField<T>, GridEvalError> {
        if self.coords.len() > grid.dim() {
            return Err(GridEvalError::DimensionMismatch {
                expr_coords: self.coords.len(),
                grid_dims: grid.dim(),
            });
        }
        let mut data = Vec::with_capacity(grid.len());
        let mut q = vec![T::zero(); grid.dim()];
        for flat in 0..grid.len() {
            grid.coords_into(flat, &mut q);
            let v = self.eval(&q, t).map_err(|source| GridEvalError::Domain {
                flat,
                index: grid.multi_index(flat),
                source,
            })?;
            data.push(v);
        }
        Ok(ScalarField::from_data(grid.clone(), data))
    }
}

fn eval_node<T: Scalar>(ast: &Ast, q: &[T], t: T) -> Result<T, EvalError> {
    Ok(match ast {
        Ast::Constant(c) => T::lit(*c),
        Ast::Coord(k) => q[*k],
        Ast::Time => t,
        Ast::Unary(op, a) => {
            let x = eval_node(a, q, t)?;
            match op {
                UnaryOp::Neg => -x,
                UnaryOp::Sin => x.sin(),
                UnaryOp::Cos => x.cos(),
                UnaryOp::Exp => x.exp(),
                UnaryOp::Log => {
                    if x <= T::zero() {
                        return Err(EvalError::LogDomain {
                            value: x.to_f64().unwrap_or(f64::NAN),
                        });
                    }
                    x.ln()
                }
                UnaryOp::Sqrt => x.sqrt(),
                UnaryOp::Abs => x.abs(),
            }
        }
        Ast::Binary(op, a, b) => {
            let x = eval_node(a, q, t)?;
            let y = eval_node(b, q, t)?;
            match op {
                BinaryOp::Add => x + y,
                BinaryOp::Sub => x - y,
                BinaryOp::Mul => x * y,
                BinaryOp::Div => {
                    if y == T::zero() {
                        return Err(EvalError::DivisionByZero);
                    }
                    x / y
                }
                BinaryOp::Pow => x.powf(y),
            }
        }
    })
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        print_node(f, &self.ast, &self.coords, 0)
    }
}

// Precedence levels: 0 add/sub, 1 mul/div, 2 unary minus, 3 pow.
fn print_node(
    f: &mut fmt::Formatter<'_>,
    ast: &Ast,
    coords: &[String],
    parent_prec: u8,
) -> fmt::Result {
    match ast {
        Ast::Constant(c) => {
            if *c < 0.0 || !c.is_finite() {
                write!(f, "({c})")
            } else {
                write!(f, "{c}")
            }
        }
        Ast::Coord(k) => write!(f, "{}", coords[*k]),
        Ast::Time => write!(f, "t"),
        Ast::Unary(UnaryOp::Neg, a) => {
            let needs = parent_prec > 2;
            if needs {
                write!(f, "(")?;
            }
            write!(f, "-")?;
            print_node(f, a, coords, 3)?;
            if needs {
                write!(f, ")")?;
            }
            Ok(())
        }
        Ast::Unary(op, a) => {
            let name = match op {
                UnaryOp::Sin => "sin",
                UnaryOp::Cos => "cos",
                UnaryOp::Exp => "exp",
                UnaryOp::Log => "log",
                UnaryOp::Sqrt => "sqrt",
                UnaryOp::Abs => "abs",
                UnaryOp::Neg => unreachable!(),
            };
            write!(f, "{name}(")?;
            print_node(f, a, coords, 0)?;
            write!(f, ")")
        }
        Ast::Binary(op, a, b) => {
            let (prec, sym, right_assoc) = match op {
                BinaryOp::Add => (0, "+", false),
                BinaryOp::Sub => (0, "-", false),
                BinaryOp::Mul => (1, "*", false),
                BinaryOp::Div => (1, "/", false),
                BinaryOp::Pow => (3, "^", true),
            };
            let needs = parent_prec > prec;
            if needs {
                write!(f, "(")?;
            }
            // left child: same precedence binds, except for right-assoc ops
            print_node(f, a, coords, if right_assoc { prec + 1 } else { prec })?;
            write!(f, "{sym}")?;
            // right child: needs a bump for left-assoc ops so a-(b-c) prints with parens
            print_node(f, b, coords, if right_assoc { prec } else { prec + 1 })?;
            if needs {
                write!(f, ")")?;
            }
            Ok(())
        }
    }
}

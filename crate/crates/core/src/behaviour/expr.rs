//! Infix expression language evaluated over a [`State`].
//!
//! Precedence, lowest first:
//!
//! | level | operators                       | assoc |
//! |-------|---------------------------------|-------|
//! | 1     | `or`, `\|\|`                    | left  |
//! | 2     | `and`, `&&`                     | left  |
//! | 3     | `not`, `!` (prefix)             | right |
//! | 4     | `==` `!=` `<` `<=` `>` `>=`     | none  |
//! | 5     | `+` `-`                         | left  |
//! | 6     | `*` `/`                         | left  |
//! | 7     | `-` (prefix)                    | right |
//!
//! Primaries are integer literals (`42`), double literals (`4.2`), string
//! literals in single or double quotes with `\` escapes, `true`, `false`,
//! variable names, parenthesised expressions and the built-ins
//! `defined(x)` and `str(e)`. `+` on two strings concatenates.
//!
//! Operands of a binary operator must share a variant, otherwise the result
//! is a `TypeFault`. Integer division truncates toward zero.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Fault};
use crate::state::{State, Value, VarName};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Ast {
    Lit(Value),
    Var(VarName),
    Neg(Box<Ast>),
    Not(Box<Ast>),
    Bin(BinOp, Box<Ast>, Box<Ast>),
    Defined(VarName),
    Str(Box<Ast>),
}

/// A parsed expression. Keeps its source text so that documents can be
/// written back unchanged.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Expression(Arc<(String, Ast)>);

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expression({:?})", self.source())
    }
}

impl Expression {
    pub fn parse(src: &str) -> Result<Expression, Error> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let ast = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Parse(format!(
                "unexpected {:?} in expression {src:?}",
                p.tokens[p.pos]
            )));
        }
        Ok(Expression(Arc::new((src.to_owned(), ast))))
    }

    pub fn source(&self) -> &str {
        &self.0 .0
    }

    pub fn ast(&self) -> &Ast {
        &self.0 .1
    }

    pub fn eval(&self, s: &State) -> Result<Value, Fault> {
        eval(self.ast(), s)
    }
}

pub fn eval(ast: &Ast, s: &State) -> Result<Value, Fault> {
    match ast {
        Ast::Lit(v) => Ok(v.clone()),
        Ast::Var(x) => s
            .lookup(x.as_str())
            .cloned()
            .ok_or_else(|| Fault::new(Fault::UNDEFINED_VARIABLE)),
        Ast::Defined(x) => Ok(Value::Bool(s.contains(x.as_str()))),
        Ast::Str(e) => Ok(Value::Str(eval(e, s)?.to_string())),
        Ast::Neg(e) => match eval(e, s)? {
            Value::Int(i) => i.checked_neg().map(Value::Int).ok_or_else(overflow),
            Value::Double(d) => Ok(Value::Double(-d)),
            _ => Err(Fault::type_fault()),
        },
        Ast::Not(e) => match eval(e, s)? {
            Value::Bool(b) => Ok(Value::Bool(!b)),
            _ => Err(Fault::type_fault()),
        },
        Ast::Bin(op, l, r) => {
            let l = eval(l, s)?;
            let r = eval(r, s)?;
            binary(*op, l, r)
        }
    }
}

fn overflow() -> Fault {
    Fault::new(Fault::ARITHMETIC)
}

fn binary(op: BinOp, l: Value, r: Value) -> Result<Value, Fault> {
    use BinOp::*;
    use Value::*;
    let ord = |o: std::cmp::Ordering| -> bool {
        match op {
            Lt => o.is_lt(),
            Le => o.is_le(),
            Gt => o.is_gt(),
            Ge => o.is_ge(),
            _ => unreachable!(),
        }
    };
    match (op, l, r) {
        (Eq, a, b) if std::mem::discriminant(&a) == std::mem::discriminant(&b) => Ok(Bool(a == b)),
        (Ne, a, b) if std::mem::discriminant(&a) == std::mem::discriminant(&b) => Ok(Bool(a != b)),
        (And, Bool(a), Bool(b)) => Ok(Bool(a && b)),
        (Or, Bool(a), Bool(b)) => Ok(Bool(a || b)),
        (Add, Str(a), Str(b)) => Ok(Str(a + &b)),
        (Add, Int(a), Int(b)) => a.checked_add(b).map(Int).ok_or_else(overflow),
        (Sub, Int(a), Int(b)) => a.checked_sub(b).map(Int).ok_or_else(overflow),
        (Mul, Int(a), Int(b)) => a.checked_mul(b).map(Int).ok_or_else(overflow),
        (Div, Int(_), Int(0)) => Err(Fault::new(Fault::DIVISION_BY_ZERO)),
        (Div, Int(a), Int(b)) => a.checked_div(b).map(Int).ok_or_else(overflow),
        (Add, Double(a), Double(b)) => Ok(Double(a + b)),
        (Sub, Double(a), Double(b)) => Ok(Double(a - b)),
        (Mul, Double(a), Double(b)) => Ok(Double(a * b)),
        (Div, Double(_), Double(0.0)) => Err(Fault::new(Fault::DIVISION_BY_ZERO)),
        (Div, Double(a), Double(b)) => Ok(Double(a / b)),
        (Lt | Le | Gt | Ge, Int(a), Int(b)) => Ok(Bool(ord(a.cmp(&b)))),
        (Lt | Le | Gt | Ge, Str(a), Str(b)) => Ok(Bool(ord(a.cmp(&b)))),
        (Lt | Le | Gt | Ge, Double(a), Double(b)) => a
            .partial_cmp(&b)
            .map(|o| Bool(ord(o)))
            .ok_or_else(Fault::type_fault),
        _ => Err(Fault::type_fault()),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Double(f64),
    Str(String),
    Ident(String),
    Sym(&'static str),
}

const SYMBOLS: &[&str] = &[
    "==", "!=", "<=", ">=", "&&", "||", "<", ">", "+", "-", "*", "/", "(", ")", "!", ",",
];

fn lex(src: &str) -> Result<Vec<Tok>, Error> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    'outer: while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut is_double = false;
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                is_double = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let text: String = chars[start..i].iter().collect();
            out.push(if is_double {
                Tok::Double(text.parse().map_err(|_| bad_literal(&text))?)
            } else {
                Tok::Int(text.parse().map_err(|_| bad_literal(&text))?)
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
            continue;
        }
        if c == '\'' || c == '"' {
            let quote = c;
            let mut s = String::new();
            i += 1;
            while i < chars.len() {
                match chars[i] {
                    ch if ch == quote => {
                        i += 1;
                        out.push(Tok::Str(s));
                        continue 'outer;
                    }
                    '\\' if i + 1 < chars.len() => {
                        s.push(match chars[i + 1] {
                            'n' => '\n',
                            't' => '\t',
                            other => other,
                        });
                        i += 2;
                    }
                    ch => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            return Err(Error::Parse(format!("unterminated string in {src:?}")));
        }
        for sym in SYMBOLS {
            let n = sym.len();
            if i + n <= chars.len() && chars[i..i + n].iter().copied().eq(sym.chars()) {
                out.push(Tok::Sym(sym));
                i += n;
                continue 'outer;
            }
        }
        return Err(Error::Parse(format!("unexpected character {c:?} in {src:?}")));
    }
    Ok(out)
}

fn bad_literal(text: &str) -> Error {
    Error::Parse(format!("bad numeric literal {text:?}"))
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, word: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == word) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), Error> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            Err(Error::Parse(format!("expected {sym:?}, found {:?}", self.peek())))
        }
    }

    fn expr(&mut self) -> Result<Ast, Error> {
        let mut l = self.and()?;
        while self.eat_word("or") || self.eat_sym("||") {
            let r = self.and()?;
            l = Ast::Bin(BinOp::Or, Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn and(&mut self) -> Result<Ast, Error> {
        let mut l = self.not()?;
        while self.eat_word("and") || self.eat_sym("&&") {
            let r = self.not()?;
            l = Ast::Bin(BinOp::And, Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn not(&mut self) -> Result<Ast, Error> {
        if self.eat_word("not") || self.eat_sym("!") {
            return Ok(Ast::Not(Box::new(self.not()?)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Ast, Error> {
        let l = self.add()?;
        let op = match self.peek() {
            Some(Tok::Sym("==")) => BinOp::Eq,
            Some(Tok::Sym("!=")) => BinOp::Ne,
            Some(Tok::Sym("<")) => BinOp::Lt,
            Some(Tok::Sym("<=")) => BinOp::Le,
            Some(Tok::Sym(">")) => BinOp::Gt,
            Some(Tok::Sym(">=")) => BinOp::Ge,
            _ => return Ok(l),
        };
        self.pos += 1;
        let r = self.add()?;
        Ok(Ast::Bin(op, Box::new(l), Box::new(r)))
    }

    fn add(&mut self) -> Result<Ast, Error> {
        let mut l = self.mul()?;
        loop {
            let op = if self.eat_sym("+") {
                BinOp::Add
            } else if self.eat_sym("-") {
                BinOp::Sub
            } else {
                return Ok(l);
            };
            let r = self.mul()?;
            l = Ast::Bin(op, Box::new(l), Box::new(r));
        }
    }

    fn mul(&mut self) -> Result<Ast, Error> {
        let mut l = self.unary()?;
        loop {
            let op = if self.eat_sym("*") {
                BinOp::Mul
            } else if self.eat_sym("/") {
                BinOp::Div
            } else {
                return Ok(l);
            };
            let r = self.unary()?;
            l = Ast::Bin(op, Box::new(l), Box::new(r));
        }
    }

    fn unary(&mut self) -> Result<Ast, Error> {
        if self.eat_sym("-") {
            return Ok(match self.unary()? {
                Ast::Lit(Value::Int(i)) => Ast::Lit(Value::Int(-i)),
                Ast::Lit(Value::Double(d)) => Ast::Lit(Value::Double(-d)),
                other => Ast::Neg(Box::new(other)),
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Ast, Error> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::Parse("unexpected end of expression".into()))?;
        self.pos += 1;
        match tok {
            Tok::Int(i) => Ok(Ast::Lit(Value::Int(i))),
            Tok::Double(d) => Ok(Ast::Lit(Value::Double(d))),
            Tok::Str(s) => Ok(Ast::Lit(Value::Str(s))),
            Tok::Sym("(") => {
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(w) if w == "true" => Ok(Ast::Lit(Value::Bool(true))),
            Tok::Ident(w) if w == "false" => Ok(Ast::Lit(Value::Bool(false))),
            Tok::Ident(w) if matches!(w.as_str(), "and" | "or" | "not") => {
                Err(Error::Parse(format!("unexpected keyword {w:?}")))
            }
            Tok::Ident(w) if self.eat_sym("(") => {
                let call = match w.as_str() {
                    "defined" => match self.tokens.get(self.pos).cloned() {
                        Some(Tok::Ident(x)) => {
                            self.pos += 1;
                            Ast::Defined(VarName::new(x).map_err(|e| Error::Parse(e.to_string()))?)
                        }
                        other => {
                            return Err(Error::Parse(format!(
                                "defined() takes a variable name, found {other:?}"
                            )))
                        }
                    },
                    "str" => Ast::Str(Box::new(self.expr()?)),
                    _ => return Err(Error::Parse(format!("unknown function {w:?}"))),
                };
                self.expect_sym(")")?;
                Ok(call)
            }
            Tok::Ident(w) => Ok(Ast::Var(VarName::new(w).map_err(|e| Error::Parse(e.to_string()))?)),
            other => Err(Error::Parse(format!("unexpected {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state;

    fn ev(src: &str, s: &State) -> Result<Value, Fault> {
        Expression::parse(src).unwrap().eval(s)
    }

    #[test]
    fn arithmetic_and_comparison() {
        assert_eq!(ev("a+1", &state!("a" => 2i64)), Ok(Value::Int(3)));
        assert_eq!(ev("a==1", &state!("a" => 1i64)), Ok(Value::Bool(true)));
        assert_eq!(ev("1 + 2 * 3", &State::new()), Ok(Value::Int(7)));
        assert_eq!(ev("(1 + 2) * 3", &State::new()), Ok(Value::Int(9)));
        assert_eq!(ev("7 / -2", &State::new()), Ok(Value::Int(-3)));
        assert_eq!(ev("1.5 * 2.0", &State::new()), Ok(Value::Double(3.0)));
        assert_eq!(ev("'ab' + \"c\"", &State::new()), Ok(Value::from("abc")));
        assert_eq!(ev("1 < 2 and not false", &State::new()), Ok(Value::Bool(true)));
        assert_eq!(ev("1 > 2 || 2 >= 2", &State::new()), Ok(Value::Bool(true)));
        assert_eq!(ev("'tok' + str(4)", &State::new()), Ok(Value::from("tok4")));
        assert_eq!(ev("defined(x)", &State::new()), Ok(Value::Bool(false)));
    }

    #[test]
    fn faults() {
        assert_eq!(ev("1/0", &State::new()), Err(Fault::new(Fault::DIVISION_BY_ZERO)));
        assert_eq!(ev("x", &State::new()), Err(Fault::new(Fault::UNDEFINED_VARIABLE)));
        assert_eq!(ev("1 + 1.0", &State::new()), Err(Fault::type_fault()));
        assert_eq!(ev("1 == '1'", &State::new()), Err(Fault::type_fault()));
        assert_eq!(ev("not 1", &State::new()), Err(Fault::type_fault()));
        assert_eq!(
            ev("9223372036854775807 + 1", &State::new()),
            Err(Fault::new(Fault::ARITHMETIC))
        );
    }

    #[test]
    fn parse_errors() {
        for bad in ["", "1 +", "(1", "'abc", "a b", "foo(1)", "1 # 2", "defined(1)"] {
            assert!(Expression::parse(bad).is_err(), "{bad:?} should not parse");
        }
    }
}

use std::collections::BTreeSet;

use super::{Program, Stmt};
use crate::tensor::{Buffer, DType, OpKind, ParamType, ParamValue, Params, Shape, TensorValue};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, column {column}: expected {expected}, found {found}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Sym(char),
    Newline,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(s) => format!("number `{s}`"),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let column = i + 1;
            let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, line: li + 1, column });
            if c == '#' {
                break;
            } else if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                push(&mut out, Tok::Ident(chars[start..i].iter().collect()));
            } else if c.is_ascii_digit()
                || c == '.'
                || (c == '-' && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit() || *n == '.' || *n == 'i'))
            {
                let start = i;
                i += 1;
                if c == '-' && chars.get(i) == Some(&'i') {
                    while i < chars.len() && chars[i].is_ascii_alphabetic() {
                        i += 1;
                    }
                } else {
                    while i < chars.len() {
                        let d = chars[i];
                        let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                        if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                            i += 1;
                        } else {
                            break;
                        }
                    }
                }
                push(&mut out, Tok::Number(chars[start..i].iter().collect()));
            } else if "=(),;[]{}:".contains(c) {
                push(&mut out, Tok::Sym(c));
                i += 1;
            } else {
                return Err(ParseError {
                    line: li + 1,
                    column,
                    expected: "a token".into(),
                    found: format!("character `{c}`"),
                });
            }
        }
        out.push(Token {
            tok: Tok::Newline,
            line: li + 1,
            column: chars.len() + 1,
        });
    }
    let line = out.last().map_or(1, |t| t.line + 1);
    out.push(Token { tok: Tok::Eof, line, column: 1 });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    bound: BTreeSet<String>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, t: &Token, expected: impl Into<String>) -> ParseError {
        ParseError {
            line: t.line,
            column: t.column,
            expected: expected.into(),
            found: t.tok.describe(),
        }
    }

    fn error(&self, expected: impl Into<String>) -> ParseError {
        self.error_at(self.peek(), expected)
    }

    fn sym(&mut self, c: char) -> PResult<()> {
        if self.peek().tok == Tok::Sym(c) {
            self.next();
            Ok(())
        } else {
            Err(self.error(format!("`{c}`")))
        }
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if self.peek().tok == Tok::Sym(c) {
            self.next();
            true
        } else {
            false
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(String, Token)> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                Ok((s, self.next()))
            }
            _ => Err(self.error(what.to_string())),
        }
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if matches!(&self.peek().tok, Tok::Ident(s) if s == kw) {
            self.next();
            true
        } else {
            false
        }
    }

    fn end_of_statement(&mut self) -> PResult<()> {
        match self.peek().tok {
            Tok::Newline => {
                self.next();
                Ok(())
            }
            Tok::Eof => Ok(()),
            _ => Err(self.error("end of line")),
        }
    }

    fn program(&mut self) -> PResult<Program> {
        let mut statements = Vec::new();
        loop {
            match &self.peek().tok {
                Tok::Newline => {
                    self.next();
                }
                Tok::Eof => break,
                _ => {
                    statements.push(self.statement()?);
                    self.end_of_statement()?;
                }
            }
        }
        if !statements.iter().any(|s| matches!(s, Stmt::Observe { .. })) {
            return Err(self.error("at least one `observe` statement"));
        }
        Ok(Program { statements })
    }

    fn statement(&mut self) -> PResult<Stmt> {
        if self.keyword("observe") {
            let name = self.use_name()?;
            return Ok(Stmt::Observe { name });
        }
        if !self.keyword("let") {
            return Err(self.error("`let` or `observe`"));
        }
        let (name, tok) = self.ident("a binding name")?;
        if matches!(name.as_str(), "let" | "observe" | "tensor") {
            return Err(self.error_at(&tok, "a binding name (not a keyword)"));
        }
        if self.bound.contains(&name) {
            return Err(self.error_at(&tok, format!("a fresh name (`{name}` is already bound)")));
        }
        self.sym('=')?;
        let stmt = if self.keyword("tensor") {
            Stmt::Let {
                name: name.clone(),
                value: self.literal()?,
            }
        } else {
            self.apply(name.clone())?
        };
        self.bound.insert(name);
        Ok(stmt)
    }

    fn use_name(&mut self) -> PResult<String> {
        let (name, tok) = self.ident("a name")?;
        if !self.bound.contains(&name) {
            return Err(self.error_at(&tok, format!("a bound name (`{name}` is unbound)")));
        }
        Ok(name)
    }

    fn apply(&mut self, name: String) -> PResult<Stmt> {
        let (op, tok) = self.ident("an op name or `tensor`")?;
        let kind: OpKind = op.parse().map_err(|_| self.error_at(&tok, "a known op name"))?;
        self.sym('(')?;
        let mut args = Vec::new();
        let mut params = Params::new();
        if !matches!(self.peek().tok, Tok::Sym(')') | Tok::Sym(';')) {
            args.push(self.use_name()?);
            while self.eat_sym(',') {
                args.push(self.use_name()?);
            }
        }
        if self.eat_sym(';') {
            loop {
                let (pname, ptok) = self.ident("a parameter name")?;
                if params.contains_key(&pname) {
                    return Err(self.error_at(&ptok, format!("a new parameter (`{pname}` repeated)")));
                }
                self.sym('=')?;
                let expected = kind.param_spec(&pname).map(|s| s.ty);
                let value = self.param_value(expected)?;
                params.insert(pname, value);
                if !self.eat_sym(',') {
                    break;
                }
            }
        }
        self.sym(')')?;
        Ok(Stmt::Apply { name, kind, args, params })
    }

    fn param_value(&mut self, expected: Option<ParamType>) -> PResult<ParamValue> {
        let t = self.peek().clone();
        match (&t.tok, expected) {
            (Tok::Sym('['), _) => Ok(ParamValue::Dims(self.dims()?)),
            (Tok::Ident(s), _) if s != "nan" && s != "inf" => {
                let d: DType = s.parse().map_err(|_| self.error_at(&t, "a dtype, number or dims"))?;
                self.next();
                Ok(ParamValue::DType(d))
            }
            (_, Some(ParamType::Float)) => Ok(ParamValue::Float(self.float()?)),
            (Tok::Number(s), _) if is_int_literal(s) => Ok(ParamValue::Int(self.int()?)),
            _ => Ok(ParamValue::Float(self.float()?)),
        }
    }

    fn dims(&mut self) -> PResult<Vec<usize>> {
        self.sym('[')?;
        let mut dims = Vec::new();
        if !self.eat_sym(']') {
            loop {
                let t = self.peek().clone();
                let v = self.int()?;
                dims.push(usize::try_from(v).map_err(|_| self.error_at(&t, "a non-negative extent"))?);
                if self.eat_sym(']') {
                    break;
                }
                self.sym(',')?;
            }
        }
        Ok(dims)
    }

    fn int(&mut self) -> PResult<i64> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Number(s) if is_int_literal(s) => {
                let v = s.parse::<i64>().map_err(|_| self.error_at(&t, "an integer in i64 range"))?;
                self.next();
                Ok(v)
            }
            _ => Err(self.error_at(&t, "an integer")),
        }
    }

    fn float(&mut self) -> PResult<f64> {
        let t = self.peek().clone();
        let v = match &t.tok {
            Tok::Number(s) if s == "-inf" => f64::NEG_INFINITY,
            Tok::Number(s) => s.parse::<f64>().map_err(|_| self.error_at(&t, "a number"))?,
            Tok::Ident(s) if s == "nan" => f64::NAN,
            Tok::Ident(s) if s == "inf" => f64::INFINITY,
            _ => return Err(self.error_at(&t, "a number")),
        };
        self.next();
        Ok(v)
    }

    fn element(&mut self, dtype: DType, out: &mut Buffer) -> PResult<()> {
        match out {
            Buffer::Float(v) => v.push(self.float()?),
            Buffer::Int(v) => {
                let t = self.peek().clone();
                let x = self.int()?;
                if dtype.wrap_int(x) != x {
                    return Err(self.error_at(&t, format!("a value representable as {dtype}")));
                }
                v.push(x);
            }
            Buffer::Bool(v) => {
                if self.keyword("true") {
                    v.push(true);
                } else if self.keyword("false") {
                    v.push(false);
                } else {
                    return Err(self.error("`true` or `false`"));
                }
            }
        }
        Ok(())
    }

    fn values(&mut self, dtype: DType) -> PResult<Buffer> {
        let mut out = Buffer::zeros(dtype, 0);
        self.sym('{')?;
        if !self.eat_sym('}') {
            loop {
                self.element(dtype, &mut out)?;
                if self.eat_sym('}') {
                    break;
                }
                self.sym(',')?;
            }
        }
        Ok(out)
    }

    fn literal(&mut self) -> PResult<TensorValue> {
        let (d, tok) = self.ident("a dtype")?;
        let dtype: DType = d.parse().map_err(|_| self.error_at(&tok, "a dtype"))?;
        let dims_tok = self.peek().clone();
        let shape = Shape::new(self.dims()?).map_err(|e| self.error_at(&dims_tok, e.to_string()))?;
        let at = self.peek().clone();
        let result = if self.keyword("sparse") {
            let mut coords = Vec::new();
            let mut values = Buffer::zeros(dtype, 0);
            self.sym('{')?;
            if !self.eat_sym('}') {
                loop {
                    coords.push(self.dims()?);
                    self.sym(':')?;
                    self.element(dtype, &mut values)?;
                    if self.eat_sym('}') {
                        break;
                    }
                    self.sym(',')?;
                }
            }
            TensorValue::sparse(dtype, shape, coords, values)
        } else if self.keyword("ragged") {
            let rows = self.dims()?;
            let values = self.values(dtype)?;
            TensorValue::ragged(dtype, shape, rows, values)
        } else {
            let values = self.values(dtype)?;
            TensorValue::dense(dtype, shape, values)
        };
        result.map_err(|e| self.error_at(&at, format!("a valid tensor literal ({e})")))
    }
}

fn is_int_literal(s: &str) -> bool {
    let digits = s.strip_prefix('-').unwrap_or(s);
    !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit())
}

/// Parses one program.
pub fn parse(text: &str) -> Result<Program, ParseError> {
    let toks = lex(text)?;
    Parser {
        toks,
        pos: 0,
        bound: BTreeSet::new(),
    }
    .program()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Structure;

    #[test]
    fn parses_three_statements() {
        let p = parse("let a = tensor f32 [2] {1,2}\nlet b = add(a,a)\nobserve b").unwrap();
        assert_eq!(p.statements.len(), 3);
        assert!(matches!(&p.statements[1], Stmt::Apply { kind: OpKind::Add, args, .. } if args == &["a", "a"]));
        assert_eq!(p.observed(), vec!["b"]);
    }

    #[test]
    fn unbound_name_points_at_token() {
        let err = parse("let a = tensor f32 [1] {1}\nlet b = add(a, c)\nobserve b").unwrap_err();
        assert_eq!((err.line, err.column), (2, 16));
        assert!(err.expected.contains("unbound"));
        let err = parse("let a = tensor f32 [1] {1}\nobserve zz").unwrap_err();
        assert_eq!((err.line, err.column), (2, 9));
    }

    #[test]
    fn rebinding_is_rejected() {
        let err = parse("let a = tensor f32 [1] {1}\nlet a = neg(a)\nobserve a").unwrap_err();
        assert_eq!(err.line, 2);
    }

    #[test]
    fn observe_is_required() {
        let err = parse("let a = tensor f32 [1] {1}\n").unwrap_err();
        assert!(err.expected.contains("observe"));
    }

    #[test]
    fn structures_and_special_values() {
        let p = parse(
            "let s = tensor f64 [2, 2] sparse {[0, 1]: 5.0, [1, 0]: -inf}\n\
             let r = tensor i32 [2, 3] ragged [1, 2] {1, 2, 3}\n\
             let n = tensor f16 [] {nan}\n\
             let b = tensor bool [2] {true, false}\n\
             observe s",
        )
        .unwrap();
        match &p.statements[0] {
            Stmt::Let { value, .. } => {
                assert_eq!(value.structure(), &Structure::Sparse { coords: vec![vec![0, 1], vec![1, 0]] });
                assert_eq!(value.values().get_f64(1), f64::NEG_INFINITY);
            }
            _ => panic!(),
        }
        match &p.statements[2] {
            Stmt::Let { value, .. } => assert!(value.values().get_f64(0).is_nan()),
            _ => panic!(),
        }
    }

    #[test]
    fn params_follow_schema_types() {
        let p = parse(
            "let v = tensor f32 [2] {1, 2}\n\
             let g = tensor f32 [2] {0.1, 0.1}\n\
             let u = adadelta_update(v, g; lr=1, rho=0.95, eps=1e-08, steps=4)\n\
             let c = cast(u; dtype=f16)\n\
             let m = tensor f32 [3, 4] {1,2,3,4,5,6,7,8,9,10,11,12}\n\
             let r = reshape(m; dims=[2, 6])\n\
             observe c",
        )
        .unwrap();
        match &p.statements[2] {
            Stmt::Apply { params, .. } => {
                assert_eq!(params["lr"], ParamValue::Float(1.0));
                assert_eq!(params["eps"], ParamValue::Float(1e-8));
                assert_eq!(params["steps"], ParamValue::Int(4));
            }
            _ => panic!(),
        }
        match &p.statements[5] {
            Stmt::Apply { params, .. } => assert_eq!(params["dims"], ParamValue::Dims(vec![2, 6])),
            _ => panic!(),
        }
    }

    #[test]
    fn literal_errors() {
        assert!(parse("let a = tensor f32 [3] {1, 2}\nobserve a").is_err());
        assert!(parse("let a = tensor i32 [1] {1.5}\nobserve a").is_err());
        assert!(parse("let a = tensor i32 [1] {3000000000}\nobserve a").is_err());
        assert!(parse("let a = tensor f99 [1] {1}\nobserve a").is_err());
        assert!(parse("let a = tensor f32 [1,1,1,1,1] {1}\nobserve a").is_err());
        assert!(parse("let a = frobnicate()\nobserve a").is_err());
        assert!(parse("let a = tensor f32 [1] {1} extra\nobserve a").is_err());
        let err = parse("let a = tensor f32 [1] {1}\nlet b = neg(a) $\nobserve b").unwrap_err();
        assert_eq!((err.line, err.column), (2, 16));
    }

    #[test]
    fn comments_and_blank_lines() {
        let p = parse("# seed\n\nlet a = tensor f32 [] {1}   # scalar\n\nobserve a\n").unwrap();
        assert_eq!(p.statements.len(), 2);
    }
}

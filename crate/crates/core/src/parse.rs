// SPDX-License-Identifier: Apache-2.0

//! Parser for the kernel DSL.
//!
//! ```text
//! kernel gemv {
//!     array A[64][64]: f32 in;
//!     array x[64]: f32 in;
//!     array y[64]: f32 out;
//!     option tree_reduction = on;
//!     loop i 0 64 {
//!         S0: y[i] = 0;
//!         loop j 0 64 {
//!             S1: y[i] += A[i][j] * x[j];
//!         }
//!     }
//! }
//! ```
//!
//! Loop bounds are affine in enclosing iterators; the upper bound is
//! exclusive. Identifiers in expressions that are neither arrays nor
//! iterators are scalar parameters. An array declared without dimensions is
//! a one-element array and may be referenced without subscripts.

use crate::ir::*;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: undeclared array `{name}`")]
    UndeclaredArray { line: usize, col: usize, name: String },
    #[error("{line}:{col}: non-affine expression: {msg}")]
    NonAffine { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: loop `{iter}` has step {step}; only unit steps are supported")]
    UnsupportedStep { line: usize, col: usize, iter: String, step: i64 },
    #[error("{line}:{col}: conditional statements are not supported")]
    Conditional { line: usize, col: usize },
    #[error("{line}:{col}: duplicate {what} `{name}`")]
    Duplicate { line: usize, col: usize, what: &'static str, name: String },
    #[error("{line}:{col}: array `{name}` expects {expected} subscripts, got {got}")]
    Arity { line: usize, col: usize, name: String, expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const PUNCTS: [&str; 17] = [
    "+=", "-=", "*=", "/=", "{", "}", "[", "]", "(", ")", ":", ";", "=", "+", "-", "*", "/",
];

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() || c == ',' {
            i += 1;
            col += 1;
            continue;
        }
        // `//` and `#` comments run to end of line.
        if c == '#' || (c == '/' && chars.get(i + 1) == Some(&'/')) {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let s = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - s;
            out.push(Token {
                tok: Tok::Ident(chars[s..i].iter().collect()),
                line: start_line,
                col: start_col,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let s = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut is_float = false;
            if i < chars.len() && chars[i] == '.' {
                is_float = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                is_float = true;
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            // Accept a trailing `f` as in C float literals.
            let text: String = chars[s..i].iter().collect();
            if i < chars.len() && chars[i] == 'f' {
                i += 1;
                is_float = true;
            }
            col += i - s;
            let tok = if is_float {
                Tok::Float(text.parse().map_err(|_| ParseError::Syntax {
                    line: start_line,
                    col: start_col,
                    msg: format!("bad number `{text}`"),
                })?)
            } else {
                Tok::Int(text.parse().map_err(|_| ParseError::Syntax {
                    line: start_line,
                    col: start_col,
                    msg: format!("integer `{text}` out of range"),
                })?)
            };
            out.push(Token { tok, line: start_line, col: start_col });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                i += p.len();
                col += p.len();
                out.push(Token { tok: Tok::Punct(p), line: start_line, col: start_col });
            }
            None => {
                return Err(ParseError::Syntax {
                    line,
                    col,
                    msg: format!("unexpected character `{c}`"),
                })
            }
        }
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    k: KernelIr,
    /// Iterators in scope, innermost last.
    scope: Vec<LoopIdx>,
    arrays_declared_scalar: Vec<bool>,
    param_index: HashMap<String, ParamIdx>,
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

    fn err<T>(&self, t: &Token, msg: impl Into<String>) -> PResult<T> {
        Err(ParseError::Syntax { line: t.line, col: t.col, msg: msg.into() })
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(&self.peek().tok, Tok::Punct(q) if *q == p)
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn expect_punct(&mut self, p: &str) -> PResult<Token> {
        let t = self.next();
        match &t.tok {
            Tok::Punct(q) if *q == p => Ok(t),
            other => self.err(&t, format!("expected `{p}`, found {}", describe(other))),
        }
    }

    fn expect_ident(&mut self) -> PResult<(String, Token)> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) => Ok((s.clone(), t.clone())),
            other => self.err(&t, format!("expected identifier, found {}", describe(other))),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<Token> {
        let (s, t) = self.expect_ident()?;
        if s != kw {
            return self.err(&t, format!("expected `{kw}`, found `{s}`"));
        }
        Ok(t)
    }

    fn expect_int(&mut self) -> PResult<i64> {
        let t = self.next();
        match t.tok {
            Tok::Int(v) => Ok(v),
            ref other => self.err(&t, format!("expected integer, found {}", describe(other))),
        }
    }

    fn kernel(&mut self) -> PResult<()> {
        self.expect_keyword("kernel")?;
        let (name, _) = self.expect_ident()?;
        self.k.name = name;
        self.expect_punct("{")?;
        let mut root = Vec::new();
        while !self.is_punct("}") {
            if self.is_keyword("array") {
                self.array_decl()?;
            } else if self.is_keyword("option") {
                self.option()?;
            } else {
                root.push(self.node()?);
            }
        }
        self.expect_punct("}")?;
        let t = self.next();
        if t.tok != Tok::Eof {
            return self.err(&t, "trailing input after kernel");
        }
        self.k.root = root;
        Ok(())
    }

    fn array_decl(&mut self) -> PResult<()> {
        self.expect_keyword("array")?;
        let (name, t) = self.expect_ident()?;
        if self.k.array_by_name(&name).is_some() {
            return Err(ParseError::Duplicate { line: t.line, col: t.col, what: "array", name });
        }
        let mut dims = Vec::new();
        while self.is_punct("[") {
            self.next();
            let dt = self.peek().clone();
            let d = self.expect_int()?;
            if d <= 0 {
                return self.err(&dt, "array extents must be positive");
            }
            dims.push(d as u64);
            self.expect_punct("]")?;
        }
        let scalar = dims.is_empty();
        if scalar {
            dims.push(1);
        }
        self.expect_punct(":")?;
        let (ty, tt) = self.expect_ident()?;
        let element_bits = match ty.as_str() {
            "f32" => 32,
            "f64" => 64,
            _ => return self.err(&tt, format!("unknown element type `{ty}`")),
        };
        let (dir, dt) = self.expect_ident()?;
        let direction = match dir.as_str() {
            "in" => Direction::In,
            "out" => Direction::Out,
            "inout" => Direction::Inout,
            _ => return self.err(&dt, format!("expected in/out/inout, found `{dir}`")),
        };
        self.expect_punct(";")?;
        self.k.arrays.push(ArrayDecl { name, dims, element_bits, direction });
        self.arrays_declared_scalar.push(scalar);
        Ok(())
    }

    fn option(&mut self) -> PResult<()> {
        self.expect_keyword("option")?;
        let (name, t) = self.expect_ident()?;
        self.expect_punct("=")?;
        let (val, vt) = self.expect_ident()?;
        let on = match val.as_str() {
            "on" | "true" => true,
            "off" | "false" => false,
            _ => return self.err(&vt, format!("expected on/off, found `{val}`")),
        };
        match name.as_str() {
            "tree_reduction" => self.k.options.tree_reduction = on,
            _ => return self.err(&t, format!("unknown option `{name}`")),
        }
        self.expect_punct(";")
            .map(|_| ())
    }

    fn node(&mut self) -> PResult<Node> {
        if self.is_keyword("loop") {
            return self.loop_node();
        }
        if self.is_keyword("if") {
            let t = self.peek();
            return Err(ParseError::Conditional { line: t.line, col: t.col });
        }
        self.statement()
    }

    fn loop_node(&mut self) -> PResult<Node> {
        self.expect_keyword("loop")?;
        let (iter, it) = self.expect_ident()?;
        if self.k.loop_by_name(&iter).is_some() {
            return Err(ParseError::Duplicate { line: it.line, col: it.col, what: "loop", name: iter });
        }
        if self.k.array_by_name(&iter).is_some() {
            return self.err(&it, format!("loop iterator `{iter}` shadows an array"));
        }
        let lower = self.affine()?;
        let upper = self.affine()?;
        if self.is_keyword("step") {
            let st = self.next();
            let step = match self.next().tok {
                Tok::Int(v) => v,
                Tok::Punct("-") => -self.expect_int()?,
                _ => return self.err(&st, "expected integer step"),
            };
            if step != 1 {
                return Err(ParseError::UnsupportedStep { line: st.line, col: st.col, iter, step });
            }
        }
        let id = self.k.loops.len();
        self.k.loops.push(LoopInfo {
            iterator: iter,
            lower,
            upper,
            parent: self.scope.last().copied(),
            depth: self.scope.len(),
        });
        self.expect_punct("{")?;
        self.scope.push(id);
        let mut body = Vec::new();
        while !self.is_punct("}") {
            if self.is_keyword("array") || self.is_keyword("option") {
                let t = self.peek().clone();
                return self.err(&t, "declarations are only allowed at kernel level");
            }
            body.push(self.node()?);
        }
        self.scope.pop();
        self.expect_punct("}")?;
        Ok(Node::Loop { id, body })
    }

    fn statement(&mut self) -> PResult<Node> {
        let (id, t) = self.expect_ident()?;
        if self.k.stmt_by_name(&id).is_some() {
            return Err(ParseError::Duplicate { line: t.line, col: t.col, what: "statement", name: id });
        }
        self.expect_punct(":")?;
        let lhs_tok = self.peek().clone();
        let lhs = match self.primary()? {
            Expr::Access(a) => a,
            _ => return self.err(&lhs_tok, "left-hand side must be an array access"),
        };
        let op_tok = self.next();
        let compound = match op_tok.tok {
            Tok::Punct("=") => None,
            Tok::Punct("+=") => Some(OpKind::Add),
            Tok::Punct("-=") => Some(OpKind::Sub),
            Tok::Punct("*=") => Some(OpKind::Mul),
            Tok::Punct("/=") => Some(OpKind::Div),
            ref other => return self.err(&op_tok, format!("expected assignment, found {}", describe(other))),
        };
        let e = self.expr()?;
        self.expect_punct(";")?;
        let rhs = match compound {
            Some(k) => Expr::Bin(k, Box::new(Expr::Access(lhs.clone())), Box::new(e)),
            None => e,
        };
        let idx = self.k.statements.len();
        self.k.statements.push(Statement { id, lhs, rhs, compound, loops: self.scope.clone() });
        Ok(Node::Stmt(idx))
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let k = if self.is_punct("+") {
                OpKind::Add
            } else if self.is_punct("-") {
                OpKind::Sub
            } else {
                return Ok(lhs);
            };
            self.next();
            let rhs = self.term()?;
            lhs = Expr::Bin(k, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.primary()?;
        loop {
            let k = if self.is_punct("*") {
                OpKind::Mul
            } else if self.is_punct("/") {
                OpKind::Div
            } else {
                return Ok(lhs);
            };
            self.next();
            let rhs = self.primary()?;
            lhs = Expr::Bin(k, Box::new(lhs), Box::new(rhs));
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let t = self.next();
        match t.tok.clone() {
            Tok::Int(v) => Ok(Expr::Const(v as f64)),
            Tok::Float(v) => Ok(Expr::Const(v)),
            Tok::Punct("-") => match self.next().tok {
                Tok::Int(v) => Ok(Expr::Const(-(v as f64))),
                Tok::Float(v) => Ok(Expr::Const(-v)),
                _ => self.err(&t, "unary minus is only supported on constants"),
            },
            Tok::Punct("(") => {
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(a) = self.k.array_by_name(&name) {
                    let mut subs = Vec::new();
                    while self.is_punct("[") {
                        self.next();
                        subs.push(self.affine()?);
                        self.expect_punct("]")?;
                    }
                    if subs.is_empty() && self.arrays_declared_scalar[a] {
                        subs.push(Affine::constant(0));
                    }
                    let expected = self.k.arrays[a].dims.len();
                    if subs.len() != expected {
                        return Err(ParseError::Arity {
                            line: t.line,
                            col: t.col,
                            name,
                            expected,
                            got: subs.len(),
                        });
                    }
                    return Ok(Expr::Access(Access { array: a, subscripts: subs }));
                }
                if self.is_punct("[") {
                    return Err(ParseError::UndeclaredArray { line: t.line, col: t.col, name });
                }
                if self.k.loop_by_name(&name).is_some() {
                    return Err(ParseError::NonAffine {
                        line: t.line,
                        col: t.col,
                        msg: format!("iterator `{name}` used as a value"),
                    });
                }
                let next = self.param_index.len();
                let idx = *self.param_index.entry(name.clone()).or_insert(next);
                if idx == self.k.params.len() {
                    self.k.params.push(name);
                }
                Ok(Expr::Param(idx))
            }
            other => self.err(&t, format!("expected expression, found {}", describe(&other))),
        }
    }

    // Affine expressions over in-scope iterators.

    fn affine(&mut self) -> PResult<Affine> {
        let mut acc = self.affine_term()?;
        loop {
            let sign = if self.is_punct("+") {
                1
            } else if self.is_punct("-") {
                -1
            } else {
                return Ok(acc);
            };
            self.next();
            let rhs = self.affine_term()?;
            acc = acc.add(&rhs.scale(sign));
        }
    }

    fn affine_term(&mut self) -> PResult<Affine> {
        let start = self.peek().clone();
        let mut acc = self.affine_atom()?;
        while self.is_punct("*") {
            self.next();
            let rhs = self.affine_atom()?;
            acc = if acc.is_constant() {
                rhs.scale(acc.constant)
            } else if rhs.is_constant() {
                acc.scale(rhs.constant)
            } else {
                return Err(ParseError::NonAffine {
                    line: start.line,
                    col: start.col,
                    msg: "product of iterators".into(),
                });
            };
        }
        Ok(acc)
    }

    fn affine_atom(&mut self) -> PResult<Affine> {
        let t = self.next();
        match t.tok.clone() {
            Tok::Int(v) => Ok(Affine::constant(v)),
            Tok::Punct("-") => Ok(self.affine_atom()?.scale(-1)),
            Tok::Punct("(") => {
                let a = self.affine()?;
                self.expect_punct(")")?;
                Ok(a)
            }
            Tok::Ident(name) => match self.scope.iter().find(|&&l| self.k.loops[l].iterator == name) {
                Some(&l) => Ok(Affine::iter(l)),
                None => Err(ParseError::NonAffine {
                    line: t.line,
                    col: t.col,
                    msg: format!("`{name}` is not an enclosing loop iterator"),
                }),
            },
            Tok::Float(_) | Tok::Punct("/") => Err(ParseError::NonAffine {
                line: t.line,
                col: t.col,
                msg: "only integer affine forms are allowed".into(),
            }),
            other => self.err(&t, format!("expected affine expression, found {}", describe(&other))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(v) => format!("`{v}`"),
        Tok::Float(v) => format!("`{v}`"),
        Tok::Punct(p) => format!("`{p}`"),
        Tok::Eof => "end of input".into(),
    }
}

/// Parse kernel DSL text into a validated [`KernelIr`].
pub fn parse_kernel(src: &str) -> Result<KernelIr, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        k: KernelIr {
            name: String::new(),
            arrays: Vec::new(),
            params: Vec::new(),
            loops: Vec::new(),
            statements: Vec::new(),
            root: Vec::new(),
            options: KernelOptions::default(),
        },
        scope: Vec::new(),
        arrays_declared_scalar: Vec::new(),
        param_index: HashMap::new(),
    };
    p.kernel()?;
    Ok(p.k)
}

/// Render a kernel back into DSL text. `parse_kernel(print_kernel(k)) == k`.
pub fn print_kernel(k: &KernelIr) -> String {
    let mut out = format!("kernel {} {{\n", k.name);
    for a in &k.arrays {
        let dims: String = a.dims.iter().map(|d| format!("[{d}]")).collect();
        let dir = match a.direction {
            Direction::In => "in",
            Direction::Out => "out",
            Direction::Inout => "inout",
        };
        out += &format!("    array {}{}: f{} {};\n", a.name, dims, a.element_bits, dir);
    }
    if !k.options.tree_reduction {
        out += "    option tree_reduction = off;\n";
    }
    print_nodes(k, &k.root, 1, &mut out);
    out += "}\n";
    out
}

fn print_nodes(k: &KernelIr, nodes: &[Node], depth: usize, out: &mut String) {
    let pad = "    ".repeat(depth);
    for n in nodes {
        match n {
            Node::Loop { id, body } => {
                let l = &k.loops[*id];
                out.push_str(&format!(
                    "{pad}loop {} ({}) ({}) {{\n",
                    l.iterator,
                    l.lower.display(k),
                    l.upper.display(k)
                ));
                print_nodes(k, body, depth + 1, out);
                out.push_str(&format!("{pad}}}\n"));
            }
            Node::Stmt(s) => {
                let st = &k.statements[*s];
                let (op, rhs) = match (&st.compound, &st.rhs) {
                    (Some(c), Expr::Bin(_, _, r)) => (format!("{}=", c.symbol()), r.as_ref()),
                    _ => ("=".to_string(), &st.rhs),
                };
                out.push_str(&format!(
                    "{pad}{}: {} {} {};\n",
                    st.id,
                    print_access(k, &st.lhs),
                    op,
                    print_expr(k, rhs)
                ));
            }
        }
    }
}

fn print_access(k: &KernelIr, a: &Access) -> String {
    let subs: String = a.subscripts.iter().map(|s| format!("[{}]", s.display(k))).collect();
    format!("{}{}", k.arrays[a.array].name, subs)
}

fn print_expr(k: &KernelIr, e: &Expr) -> String {
    match e {
        Expr::Access(a) => print_access(k, a),
        Expr::Param(p) => k.params[*p].clone(),
        Expr::Const(c) => {
            if c.fract() == 0.0 && c.abs() < 1e15 {
                format!("{}", *c as i64)
            } else {
                format!("{c:?}")
            }
        }
        Expr::Bin(op, a, b) => format!("({} {} {})", print_expr(k, a), op.symbol(), print_expr(k, b)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ATAX: &str = "
kernel atax {
  array A[1900][2100]: f32 in;
  array x[2100]: f32 in;
  array y[2100]: f32 out;
  array t[1900]: f32 inout;
  loop i0 0 2100 { S0: y[i0] = 0; }
  loop i1 0 1900 {
    S1: t[i1] = 0;
    loop j0 0 2100 { S2: t[i1] += A[i1][j0] * x[j0]; }
    loop j1 0 2100 { S3: y[j1] += A[i1][j1] * t[i1]; }
  }
}";

    #[test]
    fn atax_shape() {
        let k = parse_kernel(ATAX).unwrap();
        assert_eq!(k.loops.len(), 4);
        assert_eq!(k.statements.len(), 4);
        assert_eq!(k.summarize(), "Loop_i0(S0), Loop_i1(S1, Loop_j0(S2), Loop_j1(S3))");
        assert_eq!(k.statements[2].ops(), vec![OpKind::Mul, OpKind::Add]);
        assert_eq!(k.statements[3].ops(), vec![OpKind::Mul, OpKind::Add]);
        assert_eq!(k.statements[2].accumulation_op(), Some(OpKind::Add));
        assert!(k.statements[0].ops().is_empty());
    }

    #[test]
    fn print_round_trip() {
        let k = parse_kernel(ATAX).unwrap();
        let again = parse_kernel(&print_kernel(&k)).unwrap();
        assert_eq!(k, again);
    }

    #[test]
    fn scalar_arrays_and_params() {
        let k = parse_kernel(
            "kernel r { array c: f32 inout; array a[8]: f32 in; loop i 0 8 { S: c += alpha * a[i]; } }",
        )
        .unwrap();
        assert_eq!(k.arrays[0].dims, vec![1]);
        assert_eq!(k.params, vec!["alpha".to_string()]);
        assert_eq!(k.statements[0].lhs.subscripts, vec![Affine::constant(0)]);
    }

    #[test]
    fn errors() {
        let e = parse_kernel("kernel k { array a[4]: f32 in; loop i 0 4 { S: b[i] = a[i]; } }").unwrap_err();
        assert!(matches!(e, ParseError::UndeclaredArray { line: 1, .. }), "{e}");
        let e = parse_kernel("kernel k { array a[4]: f32 in; loop i 0 4 step 2 { S: a[i] = 1; } }").unwrap_err();
        assert!(matches!(e, ParseError::UnsupportedStep { step: 2, .. }));
        let e = parse_kernel("kernel k { array a[4]: f32 in; loop i 0 4 step -1 { S: a[i] = 1; } }").unwrap_err();
        assert!(matches!(e, ParseError::UnsupportedStep { step: -1, .. }));
        let e = parse_kernel("kernel k { array a[4][4]: f32 in; loop i 0 4 { loop j 0 i*i { S: a[i][j] = 1; } } }")
            .unwrap_err();
        assert!(matches!(e, ParseError::NonAffine { .. }));
        let e = parse_kernel("kernel k { array a[4]: f32 in; loop i 0 4 { if } }").unwrap_err();
        assert!(matches!(e, ParseError::Conditional { .. }));
        let e = parse_kernel("kernel k {\n array a[4]: f32 in;\n S: a[0] = ;\n}").unwrap_err();
        assert!(matches!(e, ParseError::Syntax { line: 3, col: 12, .. }), "{e:?}");
    }

    #[test]
    fn empty_loop() {
        let k = parse_kernel("kernel k { array a[1]: f32 out; array b[1]: f32 in; loop i 0 0 { S: a[i] = b[i]; } }")
            .unwrap();
        assert_eq!(k.loops[0].upper, Affine::constant(0));
    }

    #[test]
    fn single_statement_summary() {
        let k = parse_kernel("kernel k { array a[1]: f32 out; S1: a[0] = 1; }").unwrap();
        assert_eq!(k.summarize(), "S1");
    }
}

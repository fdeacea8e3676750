//! Line-oriented model description language.
//!
//! ```text
//! # comment
//! n = 2
//! d = 2
//! m = 2
//! generator = -4, 4, 0.2, -0.2
//! k = 2.5
//! [regime 1]
//! drift[1] = k*x1*(1 - norm(x))
//! diff[1][2] = sqrt(2)*norm(x)^1.5
//! [envelope 1]
//! phi = 6*u
//! phibar = auto
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus. Entries not
//! given default to zero; `n`, `d`, `m` default to 1 and must precede the
//! first section.

use std::collections::HashMap;
use std::sync::Arc;

use super::envelope::{envelope_from_samples, Envelope, EnvelopeFn, EnvelopeKind};
use super::{Coefficients, HybridModel};
use crate::error::{Error, Result};
use crate::markov::GeneratorMatrix;
use crate::scalar::{norm, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Abs,
    Sqrt,
    Exp,
    Log,
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(usize),
    Norm,
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    fn eval<T: Scalar>(&self, x: &[T], nrm: T) -> T {
        match self {
            Node::Const(c) => T::lit(*c),
            Node::Var(k) => x[*k],
            Node::Norm => nrm,
            Node::Neg(a) => -a.eval(x, nrm),
            Node::Bin(op, a, b) => {
                let (a, b) = (a.eval(x, nrm), b.eval(x, nrm));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Node::Call(f, args) => {
                let mut vals = args.iter().map(|a| a.eval(x, nrm));
                match f {
                    Func::Abs => vals.next().unwrap().abs(),
                    Func::Sqrt => vals.next().unwrap().sqrt(),
                    Func::Exp => vals.next().unwrap().exp(),
                    Func::Log => vals.next().unwrap().ln(),
                    Func::Min => vals.reduce(|a, b| a.min(b)).unwrap(),
                    Func::Max => vals.reduce(|a, b| a.max(b)).unwrap(),
                }
            }
        }
    }

    fn constant(&self) -> Option<f64> {
        match self {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    fn uses_vars(&self) -> bool {
        match self {
            Node::Const(_) => false,
            Node::Var(_) | Node::Norm => true,
            Node::Neg(a) => a.uses_vars(),
            Node::Bin(_, a, b) => a.uses_vars() || b.uses_vars(),
            Node::Call(_, args) => args.iter().any(Node::uses_vars),
        }
    }

    /// Folds subtrees without variables into constants.
    fn fold(self) -> Node {
        if !self.uses_vars() {
            if let Node::Const(_) = self {
                return self;
            }
            return Node::Const(self.eval::<f64>(&[], 0.0));
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn lex(text: &str, line: usize) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit()
            || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
        {
            let start = i;
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
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse::<f64>()
                .map_err(|_| parse_err(line, col, format!("malformed number '{s}'")))?;
            out.push((Tok::Num(v), col));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if "+-*/^()[],=".contains(c) {
            out.push((Tok::Sym(c), col));
            i += 1;
        } else if c == '\u{2212}' {
            out.push((Tok::Sym('-'), col));
            i += 1;
        } else {
            return Err(parse_err(line, col, format!("unexpected character '{c}'")));
        }
    }
    Ok(out)
}

#[derive(Clone, Copy)]
enum VarCtx {
    /// State variables `x1..xn`.
    State(usize),
    /// Envelope argument `u`.
    Envelope,
    /// Constants only.
    None,
}

struct ExprParser<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    line: usize,
    end_col: usize,
    ctx: VarCtx,
    consts: &'a HashMap<String, f64>,
}

impl<'a> ExprParser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.1)
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        parse_err(self.line, self.col(), msg)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{c}'")))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs)).fold();
        }
    }

    fn term(&mut self) -> Result<Node> {
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
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs)).fold();
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)).fold());
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)).fold());
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let col = self.col();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Node::Const(v))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.peek() == Some(&Tok::Sym('(')) {
                    return self.call(&name, col);
                }
                self.ident(&name, col)
            }
            Some(t) => Err(self.err(format!("unexpected token {t:?}"))),
            None => Err(self.err("unexpected end of expression")),
        }
    }

    fn ident(&self, name: &str, col: usize) -> Result<Node> {
        match (self.ctx, name) {
            (VarCtx::Envelope, "u") => return Ok(Node::Var(0)),
            (VarCtx::State(1), "x") => return Ok(Node::Var(0)),
            (VarCtx::State(n), "x") => {
                return Err(parse_err(
                    self.line,
                    col,
                    format!("'x' is a {n}-vector here; use x1..x{n} or norm(x)"),
                ))
            }
            (VarCtx::State(n), _) => {
                if let Some(k) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
                    if k == 0 || k > n {
                        return Err(parse_err(
                            self.line,
                            col,
                            format!("dimension mismatch: '{name}' but n = {n}"),
                        ));
                    }
                    return Ok(Node::Var(k - 1));
                }
            }
            _ => {}
        }
        if let Some(&v) = self.consts.get(name) {
            return Ok(Node::Const(v));
        }
        if name == "pi" {
            return Ok(Node::Const(std::f64::consts::PI));
        }
        Err(parse_err(
            self.line,
            col,
            format!("unknown identifier '{name}'"),
        ))
    }

    fn call(&mut self, name: &str, col: usize) -> Result<Node> {
        self.expect('(')?;
        if name == "norm" {
            let is_vec = matches!(
                (self.peek(), self.toks.get(self.pos + 1).map(|t| &t.0)),
                (Some(Tok::Ident(x)), Some(Tok::Sym(')'))) if x == "x"
            ) && matches!(self.ctx, VarCtx::State(_));
            if is_vec {
                self.pos += 2;
                return Ok(Node::Norm);
            }
            let arg = self.expr()?;
            self.expect(')')?;
            return Ok(Node::Call(Func::Abs, vec![arg]).fold());
        }
        let func = match name {
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => {
                return Err(parse_err(
                    self.line,
                    col,
                    format!("unknown function '{name}'"),
                ))
            }
        };
        let mut args = vec![self.expr()?];
        while self.eat(',') {
            args.push(self.expr()?);
        }
        self.expect(')')?;
        let arity_ok = match func {
            Func::Min | Func::Max => args.len() >= 2,
            _ => args.len() == 1,
        };
        if !arity_ok {
            return Err(parse_err(
                self.line,
                col,
                format!("wrong number of arguments ({}) for '{name}'", args.len()),
            ));
        }
        Ok(Node::Call(func, args).fold())
    }
}

fn parse_expr(
    toks: &[(Tok, usize)],
    line: usize,
    end_col: usize,
    ctx: VarCtx,
    consts: &HashMap<String, f64>,
) -> Result<Node> {
    if toks.is_empty() {
        return Err(parse_err(line, end_col, "missing expression"));
    }
    let mut p = ExprParser {
        toks,
        pos: 0,
        line,
        end_col,
        ctx,
        consts,
    };
    let e = p.expr()?;
    if p.pos != toks.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

#[derive(Debug, Clone)]
enum EnvSpec {
    Expr(Node),
    Auto,
}

#[derive(Debug)]
struct DslCoefficients {
    n: usize,
    d: usize,
    drift: Vec<Vec<Node>>,
    diff: Vec<Vec<Node>>,
}

impl<T: Scalar> Coefficients<T> for DslCoefficients {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn noise_dim(&self) -> usize {
        self.d
    }
    fn regimes(&self) -> usize {
        self.drift.len()
    }
    fn drift(&self, x: &[T], i: usize, out: &mut [T]) {
        let nrm = norm(x);
        for (o, e) in out.iter_mut().zip(&self.drift[i]) {
            *o = e.eval(x, nrm);
        }
    }
    fn diffusion(&self, x: &[T], i: usize, out: &mut [T]) {
        let nrm = norm(x);
        for (o, e) in out.iter_mut().zip(&self.diff[i]) {
            *o = e.eval(x, nrm);
        }
    }
}

enum Section {
    Preamble,
    Regime(usize),
    Envelope(usize),
}

struct Parsed {
    coefficients: DslCoefficients,
    generator: Option<Vec<f64>>,
    phi: Vec<Option<EnvSpec>>,
    phibar: Vec<Option<EnvSpec>>,
}

fn parse_text(text: &str) -> Result<Parsed> {
    let mut consts: HashMap<String, f64> = HashMap::new();
    let mut dims: [Option<usize>; 3] = [None; 3];
    let mut generator = None;
    let mut section = Section::Preamble;
    let mut body: Option<(Vec<Vec<Node>>, Vec<Vec<Node>>, Vec<bool>)> = None;
    let mut phi: Vec<Option<EnvSpec>> = Vec::new();
    let mut phibar: Vec<Option<EnvSpec>> = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let content = raw.split('#').next().unwrap_or("");
        let content = content.split("//").next().unwrap_or("");
        let toks = lex(content, line)?;
        if toks.is_empty() {
            continue;
        }
        let end_col = content.trim_end().chars().count() + 1;
        let (n, d, m) = (
            dims[0].unwrap_or(1),
            dims[1].unwrap_or(1),
            dims[2].unwrap_or(1),
        );

        if toks[0].0 == Tok::Sym('[') {
            let kind = match toks.get(1) {
                Some((Tok::Ident(k), _)) => k.clone(),
                _ => return Err(parse_err(line, toks[0].1, "expected section name")),
            };
            let idx = match (toks.get(2), toks.get(3), toks.len()) {
                (Some((Tok::Num(v), c)), Some((Tok::Sym(']'), _)), 4) => {
                    if v.fract() != 0.0 || *v < 1.0 || *v > m as f64 {
                        return Err(parse_err(
                            line,
                            *c,
                            format!("regime index must be in 1..={m}"),
                        ));
                    }
                    *v as usize - 1
                }
                _ => {
                    return Err(parse_err(
                        line,
                        toks[0].1,
                        "expected '[regime i]' or '[envelope i]'",
                    ))
                }
            };
            if body.is_none() {
                body = Some((
                    vec![vec![Node::Const(0.0); n]; m],
                    vec![vec![Node::Const(0.0); n * d]; m],
                    vec![false; m],
                ));
                phi = vec![None; m];
                phibar = vec![None; m];
            }
            section = match kind.as_str() {
                "regime" => {
                    body.as_mut().unwrap().2[idx] = true;
                    Section::Regime(idx)
                }
                "envelope" => Section::Envelope(idx),
                other => {
                    return Err(parse_err(
                        line,
                        toks[1].1,
                        format!("unknown section '{other}'"),
                    ))
                }
            };
            continue;
        }

        let eq = toks
            .iter()
            .position(|t| t.0 == Tok::Sym('='))
            .ok_or_else(|| parse_err(line, toks[0].1, "expected 'key = value'"))?;
        let (lhs, rhs) = (&toks[..eq], &toks[eq + 1..]);
        let key = match lhs.first() {
            Some((Tok::Ident(k), _)) => k.as_str(),
            _ => return Err(parse_err(line, toks[0].1, "expected a key")),
        };
        let key_col = lhs[0].1;
        let indices = parse_indices(&lhs[1..], line)?;

        match section {
            Section::Preamble => {
                if !indices.is_empty() {
                    return Err(parse_err(
                        line,
                        key_col,
                        format!("'{key}' must appear inside a [regime i] section"),
                    ));
                }
                match key {
                    "n" | "d" | "m" => {
                        let v = parse_expr(rhs, line, end_col, VarCtx::None, &consts)?
                            .constant()
                            .unwrap_or(f64::NAN);
                        if !(v >= 1.0 && v.fract() == 0.0) {
                            return Err(parse_err(
                                line,
                                key_col,
                                format!("'{key}' must be a positive integer"),
                            ));
                        }
                        dims[["n", "d", "m"].iter().position(|k| *k == key).unwrap()] =
                            Some(v as usize);
                    }
                    "generator" => {
                        let mut rates = Vec::new();
                        for chunk in rhs.split(|t| t.0 == Tok::Sym(',')) {
                            let v = parse_expr(chunk, line, end_col, VarCtx::None, &consts)?;
                            rates.push(v.constant().unwrap_or(f64::NAN));
                        }
                        generator = Some(rates);
                    }
                    "drift" | "diff" | "phi" | "phibar" => {
                        return Err(parse_err(
                            line,
                            key_col,
                            format!("'{key}' must appear inside a section"),
                        ));
                    }
                    name => {
                        let v = parse_expr(rhs, line, end_col, VarCtx::None, &consts)?;
                        consts.insert(name.to_string(), v.constant().unwrap_or(f64::NAN));
                    }
                }
            }
            Section::Regime(i) => {
                let (drift, diff, _) = body.as_mut().unwrap();
                let node = parse_expr(rhs, line, end_col, VarCtx::State(n), &consts)?;
                match (key, indices.as_slice()) {
                    ("drift", [k]) if *k >= 1 && *k <= n => drift[i][k - 1] = node,
                    ("drift", []) if n == 1 => drift[i][0] = node,
                    ("diff", [k, l]) if *k >= 1 && *k <= n && *l >= 1 && *l <= d => {
                        diff[i][(k - 1) * d + l - 1] = node
                    }
                    ("diff", []) if n == 1 && d == 1 => diff[i][0] = node,
                    ("drift", _) | ("diff", _) => {
                        return Err(parse_err(
                            line,
                            key_col,
                            format!("dimension mismatch: index out of range for n = {n}, d = {d}"),
                        ))
                    }
                    _ => {
                        return Err(parse_err(
                            line,
                            key_col,
                            format!("unknown key '{key}' in regime section"),
                        ))
                    }
                }
            }
            Section::Envelope(i) => {
                let spec = if matches!(rhs, [(Tok::Ident(a), _)] if a == "auto") {
                    EnvSpec::Auto
                } else {
                    EnvSpec::Expr(parse_expr(rhs, line, end_col, VarCtx::Envelope, &consts)?)
                };
                match key {
                    "phi" => phi[i] = Some(spec),
                    "phibar" => phibar[i] = Some(spec),
                    _ => {
                        return Err(parse_err(
                            line,
                            key_col,
                            format!("unknown key '{key}' in envelope section"),
                        ))
                    }
                }
            }
        }
    }

    let (n, d, m) = (
        dims[0].unwrap_or(1),
        dims[1].unwrap_or(1),
        dims[2].unwrap_or(1),
    );
    let (drift, diff, seen) = body.unwrap_or_else(|| {
        (
            vec![vec![Node::Const(0.0); n]; m],
            vec![vec![Node::Const(0.0); n * d]; m],
            vec![false; m],
        )
    });
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(parse_err(
            text.lines().count().max(1),
            1,
            format!("missing section [regime {}]", i + 1),
        ));
    }
    if phi.is_empty() {
        phi = vec![None; m];
        phibar = vec![None; m];
    }
    Ok(Parsed {
        coefficients: DslCoefficients { n, d, drift, diff },
        generator,
        phi,
        phibar,
    })
}

fn parse_indices(toks: &[(Tok, usize)], line: usize) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        match (
            &toks[i].0,
            toks.get(i + 1).map(|t| &t.0),
            toks.get(i + 2).map(|t| &t.0),
        ) {
            (Tok::Sym('['), Some(Tok::Num(v)), Some(Tok::Sym(']')))
                if v.fract() == 0.0 && *v >= 1.0 =>
            {
                out.push(*v as usize);
                i += 3;
            }
            _ => return Err(parse_err(line, toks[i].1, "expected '[index]'")),
        }
    }
    Ok(out)
}

const AUTO_GRID_POINTS: usize = 41;

fn build_envelope<T: Scalar>(
    model: &HybridModel<T>,
    specs: &[Option<EnvSpec>],
    kind: EnvelopeKind,
) -> Result<Option<Envelope<T>>> {
    if specs.iter().all(Option::is_none) {
        return Ok(None);
    }
    if let Some(i) = specs.iter().position(Option::is_none) {
        return Err(Error::Model(format!(
            "envelope given for some regimes but not for regime {}",
            i + 1
        )));
    }
    let auto = if specs.iter().any(|s| matches!(s, Some(EnvSpec::Auto))) {
        let grid: Vec<T> = (0..AUTO_GRID_POINTS)
            .map(|k| T::lit(10f64.powf(4.0 * k as f64 / (AUTO_GRID_POINTS - 1) as f64)))
            .collect();
        Some(envelope_from_samples(model, kind, &grid)?)
    } else {
        None
    };
    let fns = specs
        .iter()
        .enumerate()
        .map(|(i, s)| match s.as_ref().unwrap() {
            EnvSpec::Auto => auto.as_ref().unwrap().get(i).clone(),
            EnvSpec::Expr(Node::Const(c)) => EnvelopeFn::Constant(T::lit(*c)),
            EnvSpec::Expr(node) => {
                let node = node.clone();
                EnvelopeFn::Custom(Arc::new(move |u: T| node.eval(&[u], u.abs())))
            }
        })
        .collect();
    Ok(Some(Envelope::new(fns)?))
}

/// Parses a model description. The generator must be declared in the text
/// unless there is a single regime.
pub fn parse_model<T: Scalar>(text: &str) -> Result<HybridModel<T>> {
    parse_model_with_generator(text, None)
}

/// As [`parse_model`]; `generator`, when given, takes precedence over one
/// declared in the text.
pub fn parse_model_with_generator<T: Scalar>(
    text: &str,
    generator: Option<GeneratorMatrix<T>>,
) -> Result<HybridModel<T>> {
    let parsed = parse_text(text)?;
    let m = parsed.coefficients.drift.len();
    let generator = match (generator, parsed.generator) {
        (Some(g), _) => g,
        (None, Some(rates)) => {
            GeneratorMatrix::from_row_major(&rates.iter().map(|&r| T::lit(r)).collect::<Vec<_>>())?
        }
        (None, None) if m == 1 => GeneratorMatrix::single(),
        (None, None) => {
            return Err(Error::Model(format!(
                "model has {m} regimes but no generator"
            )))
        }
    };
    let model = HybridModel::new("dsl", parsed.coefficients, generator)?;
    let growth = build_envelope(&model, &parsed.phi, EnvelopeKind::Growth)?;
    let lipschitz = build_envelope(&model, &parsed.phibar, EnvelopeKind::Lipschitz)?;
    let mut model = model;
    if let Some(env) = growth {
        model = model.with_growth_envelope(env)?;
    }
    if let Some(env) = lipschitz {
        model = model.with_lipschitz_envelope(env)?;
    }
    Ok(model)
}

//! Recursive-descent parser for system-definition files.

use std::collections::BTreeMap;

use num_traits::ToPrimitive;

use super::lexer::{lex, Spanned, Tok};
use super::{
    is_reserved, validate_gauge_symbols, validate_generator_symbols,
    validate_lagrangian_symbols, Diagnostic, Generator, SystemDef,
};
use crate::symbolic::{Expression, Symbol, UnaryFn};

/// Parse a full definition file into a validated system and its
/// generators. All expressions come back canonicalized.
pub fn parse_system(text: &str) -> Result<(SystemDef, Vec<Generator>), Diagnostic> {
    Parser::new(lex(text)?).parse_file()
}

/// A generator block as written, before defaults are applied.
struct RawGenerator {
    name: String,
    pos: (u32, u32),
    xi: Option<Expression>,
    zeta: BTreeMap<usize, Expression>,
    eta: BTreeMap<usize, Expression>,
    gauge: Option<Expression>,
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    coords: Vec<String>,
    params: BTreeMap<String, f64>,
}

impl Parser {
    fn new(toks: Vec<Spanned>) -> Self {
        Parser {
            toks,
            pos: 0,
            coords: Vec::new(),
            params: BTreeMap::new(),
        }
    }

    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn advance(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if !matches!(t.tok, Tok::Eof) {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, msg: impl Into<String>) -> Diagnostic {
        let t = self.peek();
        Diagnostic::new(t.line, t.col, msg)
    }

    fn expect_newline(&mut self) -> Result<(), Diagnostic> {
        match self.peek().tok {
            Tok::Newline => {
                self.advance();
                Ok(())
            }
            Tok::Eof => Ok(()),
            _ => Err(self.err_here(format!(
                "expected end of line, found {}",
                self.peek().tok.describe()
            ))),
        }
    }

    fn skip_blank_lines(&mut self) {
        while matches!(self.peek().tok, Tok::Newline) {
            self.advance();
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, u32, u32), Diagnostic> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Ident(name) => {
                self.advance();
                Ok((name, t.line, t.col))
            }
            _ => Err(Diagnostic::new(
                t.line,
                t.col,
                format!("expected {what}, found {}", t.tok.describe()),
            )),
        }
    }

    fn expect_tok(&mut self, tok: Tok) -> Result<(), Diagnostic> {
        if self.peek().tok == tok {
            self.advance();
            Ok(())
        } else {
            Err(self.err_here(format!(
                "expected {}, found {}",
                tok.describe(),
                self.peek().tok.describe()
            )))
        }
    }

    fn check_fresh_name(&self, name: &str, line: u32, col: u32) -> Result<(), Diagnostic> {
        if is_reserved(name) {
            return Err(Diagnostic::new(
                line,
                col,
                format!("`{name}` is a reserved word"),
            ));
        }
        if self.coords.contains(&name.to_string()) {
            return Err(Diagnostic::new(
                line,
                col,
                format!("duplicate name `{name}` (already a coordinate)"),
            ));
        }
        if self.params.contains_key(name) {
            return Err(Diagnostic::new(
                line,
                col,
                format!("duplicate name `{name}` (already a parameter)"),
            ));
        }
        Ok(())
    }

    fn parse_file(mut self) -> Result<(SystemDef, Vec<Generator>), Diagnostic> {
        self.skip_blank_lines();
        let (kw, line, col) = self.expect_ident("`system`")?;
        if kw != "system" {
            return Err(Diagnostic::new(line, col, "a definition starts with `system <name>`"));
        }
        let (sys_name, l, c) = self.expect_ident("system name")?;
        if is_reserved(&sys_name) {
            return Err(Diagnostic::new(l, c, format!("`{sys_name}` is a reserved word")));
        }
        self.expect_newline()?;

        let mut lagrangian: Option<Expression> = None;
        let mut raw_gens: Vec<RawGenerator> = Vec::new();

        loop {
            self.skip_blank_lines();
            if matches!(self.peek().tok, Tok::Eof) {
                break;
            }
            let (word, wline, wcol) = self.expect_ident("a section keyword")?;
            match word.as_str() {
                "coords" => {
                    if !self.coords.is_empty() {
                        return Err(Diagnostic::new(wline, wcol, "duplicate `coords` line"));
                    }
                    loop {
                        let (name, nl, nc) = self.expect_ident("coordinate name")?;
                        self.check_fresh_name(&name, nl, nc)?;
                        self.coords.push(name);
                        match self.peek().tok {
                            Tok::Comma => {
                                self.advance();
                            }
                            Tok::Newline | Tok::Eof => break,
                            Tok::Ident(_) => {}
                            _ => {
                                return Err(self.err_here(format!(
                                    "expected coordinate name, found {}",
                                    self.peek().tok.describe()
                                )))
                            }
                        }
                    }
                    self.expect_newline()?;
                }
                "param" => {
                    let (name, nl, nc) = self.expect_ident("parameter name")?;
                    self.check_fresh_name(&name, nl, nc)?;
                    self.expect_tok(Tok::Equals)?;
                    let (vl, vc) = (self.peek().line, self.peek().col);
                    let value = self.parse_expr()?;
                    let value = value.as_constant().ok_or_else(|| {
                        Diagnostic::new(vl, vc, "parameter value must be a numeric constant")
                    })?;
                    let value = value.to_f64().ok_or_else(|| {
                        Diagnostic::new(vl, vc, "parameter value out of range")
                    })?;
                    self.params.insert(name, value);
                    self.expect_newline()?;
                }
                "lagrangian" => {
                    if lagrangian.is_some() {
                        return Err(Diagnostic::new(wline, wcol, "duplicate `lagrangian` line"));
                    }
                    if self.coords.is_empty() {
                        return Err(Diagnostic::new(
                            wline,
                            wcol,
                            "coords must be declared before the lagrangian",
                        ));
                    }
                    let e = self.parse_expr()?;
                    self.expect_newline()?;
                    lagrangian = Some(e);
                }
                "generator" => {
                    let (name, nl, nc) = self.expect_ident("generator name")?;
                    if is_reserved(&name) {
                        return Err(Diagnostic::new(nl, nc, format!("`{name}` is a reserved word")));
                    }
                    if raw_gens.iter().any(|g| g.name == name) {
                        return Err(Diagnostic::new(
                            nl,
                            nc,
                            format!("duplicate generator `{name}`"),
                        ));
                    }
                    self.expect_newline()?;
                    raw_gens.push(RawGenerator {
                        name,
                        pos: (nl, nc),
                        xi: None,
                        zeta: BTreeMap::new(),
                        eta: BTreeMap::new(),
                        gauge: None,
                    });
                }
                "xi" | "zeta" | "eta" | "gauge" => {
                    let gen = raw_gens.last_mut().ok_or_else(|| {
                        Diagnostic::new(
                            wline,
                            wcol,
                            format!("`{word}` must appear inside a generator block"),
                        )
                    })?;
                    let coord_idx = if word == "zeta" || word == "eta" {
                        let (cname, cl, cc) = self.expect_ident("coordinate name")?;
                        let idx = self.coords.iter().position(|c| *c == cname).ok_or_else(
                            || Diagnostic::new(cl, cc, format!("unknown coordinate `{cname}`")),
                        )?;
                        Some(idx)
                    } else {
                        None
                    };
                    self.expect_tok(Tok::Equals)?;
                    let expr = self.parse_expr()?;
                    self.expect_newline()?;

                    let validation = if word == "gauge" {
                        None // validated with gauge rules at assembly
                    } else {
                        validate_generator_field(&expr)
                    };
                    if let Some(msg) = validation {
                        return Err(Diagnostic::new(wline, wcol, msg));
                    }

                    match (word.as_str(), coord_idx) {
                        ("xi", _) => {
                            if gen.xi.replace(expr).is_some() {
                                return Err(Diagnostic::new(wline, wcol, "duplicate `xi`"));
                            }
                        }
                        ("gauge", _) => {
                            if expr.contains_placeholder() {
                                return Err(Diagnostic::new(
                                    wline,
                                    wcol,
                                    "acceleration placeholders are not allowed in system definitions",
                                ));
                            }
                            if gen.gauge.replace(expr).is_some() {
                                return Err(Diagnostic::new(wline, wcol, "duplicate `gauge`"));
                            }
                        }
                        ("zeta", Some(i)) => {
                            if gen.zeta.insert(i, expr).is_some() {
                                return Err(Diagnostic::new(
                                    wline,
                                    wcol,
                                    format!("duplicate `zeta` for coordinate `{}`", self.coords[i]),
                                ));
                            }
                        }
                        ("eta", Some(i)) => {
                            if gen.eta.insert(i, expr).is_some() {
                                return Err(Diagnostic::new(
                                    wline,
                                    wcol,
                                    format!("duplicate `eta` for coordinate `{}`", self.coords[i]),
                                ));
                            }
                        }
                        _ => unreachable!(),
                    }
                }
                other => {
                    return Err(Diagnostic::new(
                        wline,
                        wcol,
                        format!(
                            "expected `coords`, `param`, `lagrangian`, or `generator`, found `{other}`"
                        ),
                    ));
                }
            }
        }

        let lagrangian = lagrangian
            .ok_or_else(|| self.err_here("missing `lagrangian`"))?;
        let sys = SystemDef::new(
            &sys_name,
            self.coords.clone(),
            self.params.clone(),
            lagrangian,
        )?;
        if let Some(msg) = validate_lagrangian_symbols(&sys, sys.lagrangian()) {
            return Err(Diagnostic::new(1, 1, msg));
        }

        let mut gens = Vec::with_capacity(raw_gens.len());
        for raw in raw_gens {
            let xi = raw.xi.unwrap_or_else(Expression::zero);
            let zeta: Vec<Expression> = (0..sys.n())
                .map(|i| raw.zeta.get(&i).cloned().unwrap_or_else(Expression::zero))
                .collect();
            // An omitted eta falls back to zeta for that coordinate.
            let eta: Vec<Expression> = (0..sys.n())
                .map(|i| raw.eta.get(&i).cloned().unwrap_or_else(|| zeta[i].clone()))
                .collect();
            for e in std::iter::once(&xi).chain(&zeta).chain(&eta) {
                if let Some(msg) = validate_generator_symbols(&sys, e) {
                    return Err(Diagnostic::new(raw.pos.0, raw.pos.1, msg));
                }
            }
            if let Some(g) = &raw.gauge {
                if let Some(msg) = validate_gauge_symbols(&sys, g) {
                    return Err(Diagnostic::new(raw.pos.0, raw.pos.1, msg));
                }
            }
            gens.push(Generator::new(&sys, &raw.name, xi, zeta, eta, raw.gauge)?);
        }
        Ok((sys, gens))
    }

    // ----- expressions ------------------------------------------------------

    fn parse_expr(&mut self) -> Result<Expression, Diagnostic> {
        self.parse_sum()
    }

    fn parse_sum(&mut self) -> Result<Expression, Diagnostic> {
        let mut acc = self.parse_product()?;
        loop {
            match self.peek().tok {
                Tok::Plus => {
                    self.advance();
                    acc = acc + self.parse_product()?;
                }
                Tok::Minus => {
                    self.advance();
                    acc = acc - self.parse_product()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn parse_product(&mut self) -> Result<Expression, Diagnostic> {
        let mut acc = self.parse_unary()?;
        loop {
            match self.peek().tok {
                Tok::Star => {
                    self.advance();
                    acc = acc * self.parse_unary()?;
                }
                Tok::Slash => {
                    let (dl, dc) = (self.peek().line, self.peek().col);
                    self.advance();
                    let rhs = self.parse_unary()?;
                    if rhs.is_const_zero() {
                        return Err(Diagnostic::new(dl, dc, "division by zero"));
                    }
                    acc = acc / rhs;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Expression, Diagnostic> {
        if matches!(self.peek().tok, Tok::Minus) {
            self.advance();
            return Ok(-self.parse_unary()?);
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expression, Diagnostic> {
        let base = self.parse_atom()?;
        if matches!(self.peek().tok, Tok::Caret) {
            let (el, ec) = (self.peek().line, self.peek().col);
            self.advance();
            // Right-associative; the exponent may itself carry a sign or
            // another power, but must fold to a rational constant.
            let exp = self.parse_unary()?;
            let exp = exp.as_constant().ok_or_else(|| {
                Diagnostic::new(el, ec, "exponent must be a rational constant")
            })?;
            return Ok(base.pow(exp.clone()));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Expression, Diagnostic> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Number(n) => {
                self.advance();
                Ok(Expression::constant(n))
            }
            Tok::LParen => {
                self.advance();
                let inner = self.parse_expr()?;
                self.expect_tok(Tok::RParen)?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.advance();
                self.resolve_ident(&name, t.line, t.col)
            }
            other => Err(Diagnostic::new(
                t.line,
                t.col,
                format!("expected an expression, found {}", other.describe()),
            )),
        }
    }

    fn resolve_ident(
        &mut self,
        name: &str,
        line: u32,
        col: u32,
    ) -> Result<Expression, Diagnostic> {
        match name {
            "t" => Ok(Expression::symbol(Symbol::time())),
            "sin" | "cos" | "exp" | "ln" | "sqrt" => {
                self.expect_tok(Tok::LParen)?;
                let arg = self.parse_expr()?;
                self.expect_tok(Tok::RParen)?;
                let f = match name {
                    "sin" => UnaryFn::Sin,
                    "cos" => UnaryFn::Cos,
                    "exp" => UnaryFn::Exp,
                    "ln" => UnaryFn::Ln,
                    _ => UnaryFn::Sqrt,
                };
                Ok(Expression::func(f, arg))
            }
            "d" | "dd" => {
                self.expect_tok(Tok::LParen)?;
                let (inner, il, ic) = self.expect_ident("coordinate name or `eps(...)`")?;
                let of_deviation = if inner == "eps" {
                    self.expect_tok(Tok::LParen)?;
                    true
                } else {
                    false
                };
                let (cname, cl, cc) = if of_deviation {
                    self.expect_ident("coordinate name")?
                } else {
                    (inner, il, ic)
                };
                let idx = self.coord_idx(&cname, cl, cc)?;
                if of_deviation {
                    self.expect_tok(Tok::RParen)?;
                }
                self.expect_tok(Tok::RParen)?;
                let sym = match (name, of_deviation) {
                    ("d", false) => Symbol::velocity(&cname, idx),
                    ("d", true) => Symbol::deviation_velocity(&cname, idx),
                    ("dd", false) => Symbol::acceleration(&cname, idx),
                    _ => Symbol::deviation_acceleration(&cname, idx),
                };
                Ok(Expression::symbol(sym))
            }
            "eps" => {
                self.expect_tok(Tok::LParen)?;
                let (cname, cl, cc) = self.expect_ident("coordinate name")?;
                let idx = self.coord_idx(&cname, cl, cc)?;
                self.expect_tok(Tok::RParen)?;
                Ok(Expression::symbol(Symbol::deviation(&cname, idx)))
            }
            _ => {
                if let Some(i) = self.coords.iter().position(|c| c == name) {
                    Ok(Expression::symbol(Symbol::coordinate(name, i as u32)))
                } else if self.params.contains_key(name) {
                    Ok(Expression::symbol(Symbol::parameter(name)))
                } else {
                    Err(Diagnostic::new(
                        line,
                        col,
                        format!("unknown identifier `{name}`"),
                    ))
                }
            }
        }
    }

    fn coord_idx(&self, name: &str, line: u32, col: u32) -> Result<u32, Diagnostic> {
        self.coords
            .iter()
            .position(|c| c == name)
            .map(|i| i as u32)
            .ok_or_else(|| Diagnostic::new(line, col, format!("unknown coordinate `{name}`")))
    }
}

fn validate_generator_field(e: &Expression) -> Option<String> {
    use crate::symbolic::SymbolKind;
    if e.contains_kind(SymbolKind::Velocity) || e.contains_kind(SymbolKind::DeviationVelocity) {
        return Some("velocity dependence forbidden in generators".into());
    }
    if e.contains_placeholder() {
        return Some("acceleration placeholders are not allowed in system definitions".into());
    }
    None
}

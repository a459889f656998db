//! Recursive-descent parser for one declaration line.

use crate::expr::{Expr, NoiseSpec, Term};
use crate::graph::NodeRole;

use super::lexer::{Tok, Token};
use super::{Decl, Diagnostic, DiagnosticKind, Span};

/// A parsed line plus the spans the semantic pass needs.
pub(crate) struct Parsed {
    pub decl: Decl,
    /// Every node name mentioned on the line, with its position.
    pub names: Vec<(String, Span)>,
}

pub(crate) struct LineParser<'a> {
    toks: &'a [Token],
    pos: usize,
    line: usize,
    /// Column just past the end of the line, for end-of-input errors.
    end_col: usize,
    names: Vec<(String, Span)>,
    diags: Vec<Diagnostic>,
    depth: usize,
}

/// Bound on call nesting so hostile input cannot exhaust the stack.
const MAX_DEPTH: usize = 64;

pub(crate) const FUNCTIONS: [&str; 4] = ["sigmoid", "normal", "bern_pm", "mix2"];

type PResult<T> = Result<T, Diagnostic>;

impl<'a> LineParser<'a> {
    pub(crate) fn new(toks: &'a [Token], line: usize, end_col: usize) -> Self {
        LineParser { toks, pos: 0, line, end_col, names: Vec::new(), diags: Vec::new(), depth: 0 }
    }

    /// Parses the whole line. Syntax errors end the line; an unknown role is
    /// reported but the node still counts as declared.
    pub(crate) fn parse(mut self) -> (Option<Parsed>, Vec<Diagnostic>) {
        match self.decl() {
            Ok(decl) => {
                let parsed = Parsed { decl, names: std::mem::take(&mut self.names) };
                (Some(parsed), self.diags)
            }
            Err(d) => {
                self.diags.push(d);
                (None, self.diags)
            }
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.col)
    }

    fn error(&self, expected: &str) -> Diagnostic {
        let found = self.peek().map_or("end of line".to_string(), Tok::describe);
        Diagnostic::new(
            self.line,
            self.col(),
            DiagnosticKind::SyntaxError { expected: expected.to_string() },
            format!("expected {expected}, found {found}"),
        )
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> PResult<()> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }

    fn keyword(&mut self, word: &str) -> PResult<()> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == word => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.error(&format!("`{word}`"))),
        }
    }

    fn ident(&mut self, expected: &str) -> PResult<(String, Span)> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                let span = Span { line: self.line, col: self.col() };
                self.pos += 1;
                Ok((s, span))
            }
            _ => Err(self.error(expected)),
        }
    }

    fn name(&mut self) -> PResult<String> {
        let (s, span) = self.ident("a node name")?;
        self.names.push((s.clone(), span));
        Ok(s)
    }

    fn number(&mut self) -> PResult<f64> {
        match self.peek() {
            Some(Tok::Number(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.error("a number")),
        }
    }

    fn end(&mut self) -> PResult<()> {
        if self.pos == self.toks.len() {
            Ok(())
        } else {
            Err(self.error("end of line"))
        }
    }

    fn decl(&mut self) -> PResult<Decl> {
        let (kw, _) = self.ident("a declaration (`node`, `edge`, `eq` or `predictor`)")?;
        let decl = match kw.as_str() {
            "node" => {
                let name = self.name()?;
                self.keyword("role")?;
                self.expect(Tok::Equals, "`=`")?;
                let (role_text, span) = self.ident("a role")?;
                let role = match role_text.parse::<NodeRole>() {
                    Ok(r) => r,
                    Err(msg) => {
                        self.diags.push(Diagnostic::new(span.line, span.col, DiagnosticKind::UnknownRole, msg));
                        NodeRole::Latent
                    }
                };
                Decl::Node { name, role }
            }
            "edge" => {
                let from = self.name()?;
                self.expect(Tok::Arrow, "`->`")?;
                let to = self.name()?;
                Decl::Edge { from, to }
            }
            "eq" => {
                let node = self.name()?;
                self.expect(Tok::Equals, "`=`")?;
                let expr = self.expr()?;
                Decl::Equation { node, expr }
            }
            "predictor" => {
                let name = self.name()?;
                self.keyword("inputs")?;
                self.expect(Tok::Equals, "`=`")?;
                self.expect(Tok::LParen, "`(`")?;
                let mut inputs = Vec::new();
                if self.peek() != Some(&Tok::RParen) {
                    inputs.push(self.name()?);
                    while self.peek() == Some(&Tok::Comma) {
                        self.pos += 1;
                        inputs.push(self.name()?);
                    }
                }
                self.expect(Tok::RParen, "`,` or `)`")?;
                let intercept = match self.peek() {
                    Some(Tok::Ident(s)) if s == "intercept" => {
                        self.pos += 1;
                        true
                    }
                    _ => false,
                };
                Decl::Predictor { name, inputs, intercept }
            }
            _ => {
                self.pos -= 1;
                return Err(self.error("a declaration (`node`, `edge`, `eq` or `predictor`)"));
            }
        };
        self.end()?;
        Ok(decl)
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut terms = vec![self.term()?];
        while self.peek() == Some(&Tok::Plus) {
            self.pos += 1;
            terms.push(self.term()?);
        }
        Ok(Expr::new(terms))
    }

    fn term(&mut self) -> PResult<Term> {
        match self.peek() {
            Some(Tok::Number(_)) => {
                let c = self.number()?;
                if self.peek() == Some(&Tok::Star) {
                    self.pos += 1;
                    Ok(Term::Scaled(c, self.name()?))
                } else {
                    Ok(Term::Const(c))
                }
            }
            Some(Tok::Ident(s)) => {
                let is_call = self.toks.get(self.pos + 1).map(|t| &t.tok) == Some(&Tok::LParen);
                if !is_call {
                    return Ok(Term::Var(self.name()?));
                }
                let func = s.clone();
                if !FUNCTIONS.contains(&func.as_str()) {
                    return Err(self.error("`sigmoid`, `normal`, `bern_pm` or `mix2`"));
                }
                if self.depth >= MAX_DEPTH {
                    return Err(Diagnostic::new(
                        self.line,
                        self.col(),
                        DiagnosticKind::SyntaxError { expected: "a shallower expression".into() },
                        format!("function calls nested deeper than {MAX_DEPTH}"),
                    ));
                }
                self.pos += 2;
                self.depth += 1;
                let term = match func.as_str() {
                    "sigmoid" => Term::Sigmoid(Box::new(self.expr()?)),
                    "normal" => {
                        let mean = Box::new(self.expr()?);
                        self.expect(Tok::Comma, "`,` or `+`")?;
                        let sd = self.number()?;
                        Term::Noise(NoiseSpec::Gaussian { mean, sd })
                    }
                    "bern_pm" => Term::Noise(NoiseSpec::BernoulliPm { prob: Box::new(self.expr()?) }),
                    _ => {
                        let mean1 = Box::new(self.expr()?);
                        self.expect(Tok::Comma, "`,` or `+`")?;
                        let sd1 = self.number()?;
                        self.expect(Tok::Comma, "`,`")?;
                        let mean2 = Box::new(self.expr()?);
                        self.expect(Tok::Comma, "`,` or `+`")?;
                        let sd2 = self.number()?;
                        self.expect(Tok::Comma, "`,`")?;
                        let logit = Box::new(self.expr()?);
                        Term::Noise(NoiseSpec::Mixture { mean1, sd1, mean2, sd2, logit })
                    }
                };
                self.expect(Tok::RParen, "`)` or `+`")?;
                self.depth -= 1;
                Ok(term)
            }
            _ => Err(self.error("a term (number, name or function call)")),
        }
    }
}

//! Tokeniser for a single line of a `.cfm` file.

use super::{Diagnostic, DiagnosticKind};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Number(f64),
    Arrow,
    Equals,
    LParen,
    RParen,
    Comma,
    Star,
    Plus,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(v) => format!("number {v}"),
            Tok::Arrow => "`->`".into(),
            Tok::Equals => "`=`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Star => "`*`".into(),
            Tok::Plus => "`+`".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    /// 1-based column of the first character.
    pub col: usize,
}

/// Splits `text` (without its comment) into tokens. Columns count characters,
/// not bytes.
pub(crate) fn tokenize(text: &str, line: usize) -> Result<Vec<Token>, Diagnostic> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        let single = |tok| Token { tok, col };
        match c {
            ' ' | '\t' | '\r' => {
                i += 1;
                continue;
            }
            '=' => out.push(single(Tok::Equals)),
            '(' => out.push(single(Tok::LParen)),
            ')' => out.push(single(Tok::RParen)),
            ',' => out.push(single(Tok::Comma)),
            '*' => out.push(single(Tok::Star)),
            '+' => out.push(single(Tok::Plus)),
            '-' if chars.get(i + 1) == Some(&'>') => {
                out.push(single(Tok::Arrow));
                i += 2;
                continue;
            }
            '-' | '.' | '0'..='9' => {
                let start = i;
                if c == '-' {
                    i += 1;
                }
                let mut seen_digit = false;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    seen_digit |= chars[i].is_ascii_digit();
                    i += 1;
                }
                if seen_digit && i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
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
                let raw: String = chars[start..i].iter().collect();
                let value = raw.parse::<f64>().ok().filter(|v| v.is_finite() && seen_digit);
                match value {
                    Some(v) => out.push(Token { tok: Tok::Number(v), col }),
                    None => {
                        return Err(Diagnostic::new(
                            line,
                            col,
                            DiagnosticKind::SyntaxError { expected: "a finite number".into() },
                            format!("malformed number `{raw}`"),
                        ))
                    }
                }
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), col });
                continue;
            }
            other => {
                return Err(Diagnostic::new(
                    line,
                    col,
                    DiagnosticKind::SyntaxError { expected: "a name, number or punctuation".into() },
                    format!("unexpected character `{other}`"),
                ))
            }
        }
        i += 1;
    }
    Ok(out)
}

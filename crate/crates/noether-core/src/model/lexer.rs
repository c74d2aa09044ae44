//! Tokenizer for the system-definition language. Line breaks are
//! significant: every statement ends at end of line.

use num_rational::BigRational;
use num_traits::Zero;

use super::Diagnostic;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    /// Integer or decimal literal, held exactly (0.5 lexes as 1/2).
    Number(BigRational),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Equals,
    Comma,
    Newline,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(_) => "number".to_string(),
            Tok::Plus => "`+`".to_string(),
            Tok::Minus => "`-`".to_string(),
            Tok::Star => "`*`".to_string(),
            Tok::Slash => "`/`".to_string(),
            Tok::Caret => "`^`".to_string(),
            Tok::LParen => "`(`".to_string(),
            Tok::RParen => "`)`".to_string(),
            Tok::Equals => "`=`".to_string(),
            Tok::Comma => "`,`".to_string(),
            Tok::Newline => "end of line".to_string(),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

pub(crate) fn lex(text: &str) -> Result<Vec<Spanned>, Diagnostic> {
    let mut out = Vec::new();
    let mut line: u32 = 1;
    let mut col: u32 = 1;
    let mut chars = text.chars().peekable();

    let push = |tok: Tok, line: u32, col: u32, out: &mut Vec<Spanned>| {
        out.push(Spanned { tok, line, col });
    };

    while let Some(&c) = chars.peek() {
        let (tline, tcol) = (line, col);
        match c {
            '#' => {
                while let Some(&c2) = chars.peek() {
                    if c2 == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '\n' => {
                chars.next();
                // Collapse runs of newlines into one token.
                if !matches!(out.last(), Some(Spanned { tok: Tok::Newline, .. }) | None) {
                    push(Tok::Newline, tline, tcol, &mut out);
                }
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            '+' | '-' | '*' | '/' | '^' | '(' | ')' | '=' | ',' => {
                chars.next();
                col += 1;
                let tok = match c {
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '*' => Tok::Star,
                    '/' => Tok::Slash,
                    '^' => Tok::Caret,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '=' => Tok::Equals,
                    _ => Tok::Comma,
                };
                push(tok, tline, tcol, &mut out);
            }
            c if c.is_ascii_digit() => {
                let mut int_part = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_digit() {
                        int_part.push(d);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                let mut frac_part = String::new();
                if chars.peek() == Some(&'.') {
                    chars.next();
                    col += 1;
                    while let Some(&d) = chars.peek() {
                        if d.is_ascii_digit() {
                            frac_part.push(d);
                            chars.next();
                            col += 1;
                        } else {
                            break;
                        }
                    }
                    if frac_part.is_empty() {
                        return Err(Diagnostic::new(tline, tcol, "malformed decimal literal"));
                    }
                }
                push(Tok::Number(decimal_to_rational(&int_part, &frac_part)), tline, tcol, &mut out);
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut ident = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        ident.push(d);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                push(Tok::Ident(ident), tline, tcol, &mut out);
            }
            other => {
                return Err(Diagnostic::new(
                    tline,
                    tcol,
                    format!("unexpected character `{other}`"),
                ));
            }
        }
    }
    if !matches!(out.last(), Some(Spanned { tok: Tok::Newline, .. }) | None) {
        push(Tok::Newline, line, col, &mut out);
    }
    push(Tok::Eof, line, col, &mut out);
    Ok(out)
}

/// Exact rational value of `int.frac`.
fn decimal_to_rational(int_part: &str, frac_part: &str) -> BigRational {
    let mut numer = num_bigint::BigInt::zero();
    for d in int_part.chars().chain(frac_part.chars()) {
        numer = numer * 10 + d.to_digit(10).unwrap();
    }
    let denom = num_bigint::BigInt::from(10u32).pow(frac_part.len() as u32);
    BigRational::new(numer, denom)
}

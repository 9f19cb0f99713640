use num_bigint::BigInt;

use super::ast::Span;
use super::{DiagKind, Diagnostic};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Num(BigInt),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Colon,
    Assign,
    Tilde,
    Plus,
    Minus,
    Star,
    Slash,
    Lt,
    Le,
    Eq,
    Ne,
    Gt,
    Ge,
    AndAnd,
    OrOr,
    Bang,
    Eof,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub fn lex(src: &str) -> Result<Vec<Token>, Diagnostic> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, col };
        let two = |a: char, b: char| c == a && chars.get(i + 1) == Some(&b);
        let mut adv = 1;
        let tok = match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
                continue;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i + adv < chars.len() && chars[i + adv].is_ascii_digit() {
                    adv += 1;
                }
                let s: String = chars[start..start + adv].iter().collect();
                Tok::Num(s.parse().expect("digits"))
            }
            c if c.is_alphabetic() || c == '_' => {
                while i + adv < chars.len() && (chars[i + adv].is_alphanumeric() || chars[i + adv] == '_') {
                    adv += 1;
                }
                Tok::Ident(chars[i..i + adv].iter().collect())
            }
            _ if two(':', '=') => {
                adv = 2;
                Tok::Assign
            }
            _ if two('<', '=') => {
                adv = 2;
                Tok::Le
            }
            _ if two('>', '=') => {
                adv = 2;
                Tok::Ge
            }
            _ if two('=', '=') => {
                adv = 2;
                Tok::Eq
            }
            _ if two('!', '=') => {
                adv = 2;
                Tok::Ne
            }
            _ if two('&', '&') => {
                adv = 2;
                Tok::AndAnd
            }
            _ if two('|', '|') => {
                adv = 2;
                Tok::OrOr
            }
            _ if two('<', '-') => {
                adv = 2;
                Tok::Tilde
            }
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            ',' => Tok::Comma,
            ';' => Tok::Semi,
            ':' => Tok::Colon,
            '~' => Tok::Tilde,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' | '·' => Tok::Star,
            '/' => Tok::Slash,
            '<' => Tok::Lt,
            '>' => Tok::Gt,
            '=' => Tok::Eq,
            '!' | '¬' => Tok::Bang,
            '≤' => Tok::Le,
            '≥' => Tok::Ge,
            '≠' => Tok::Ne,
            '∧' => Tok::AndAnd,
            '∨' => Tok::OrOr,
            other => {
                return Err(Diagnostic::new(DiagKind::Lex, span, format!("unexpected character `{}`", other)));
            }
        };
        out.push(Token { tok, span });
        i += adv;
        col += adv as u32;
    }
    out.push(Token { tok: Tok::Eof, span: Span { line, col } });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_operators_and_comments() {
        let toks: Vec<Tok> = lex("x := 1/5 # note\n<= ~").unwrap().into_iter().map(|t| t.tok).collect();
        assert_eq!(
            toks,
            vec![
                Tok::Ident("x".into()),
                Tok::Assign,
                Tok::Num(1.into()),
                Tok::Slash,
                Tok::Num(5.into()),
                Tok::Le,
                Tok::Tilde,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn reports_position_of_bad_char() {
        let err = lex("x\n  $").unwrap_err();
        assert_eq!((err.span.line, err.span.col), (2, 3));
    }
}

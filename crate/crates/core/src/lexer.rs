//! Tokenizer shared by the preference and query grammars.

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::operator::Operator;
use crate::value::{Value, DATE_FORMAT};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum TokenKind {
    Ident(String),
    Literal(Value),
    Op(Operator),
    Comma,
    Dot,
    LParen,
    RParen,
    Star,
    Semicolon,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub kind: TokenKind,
    /// Byte offset of the token in the input.
    pub position: usize,
}

pub(crate) fn syntax(position: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        position,
        message: message.into(),
    }
}

pub(crate) fn tokenize(input: &str) -> Result<Vec<Token>> {
    let bytes = input.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let kind = match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b',' => {
                i += 1;
                TokenKind::Comma
            }
            b'.' => {
                i += 1;
                TokenKind::Dot
            }
            b'(' => {
                i += 1;
                TokenKind::LParen
            }
            b')' => {
                i += 1;
                TokenKind::RParen
            }
            b'*' => {
                i += 1;
                TokenKind::Star
            }
            b';' => {
                i += 1;
                TokenKind::Semicolon
            }
            b'=' => {
                i += 1;
                TokenKind::Op(Operator::Eq)
            }
            b'!' if bytes.get(i + 1) == Some(&b'=') => {
                i += 2;
                TokenKind::Op(Operator::Neq)
            }
            b'<' | b'>' => {
                let or_equal = bytes.get(i + 1) == Some(&b'=');
                i += if or_equal { 2 } else { 1 };
                TokenKind::Op(match (c, or_equal) {
                    (b'<', false) => Operator::Lt,
                    (b'<', true) => Operator::Lte,
                    (_, false) => Operator::Gt,
                    (_, true) => Operator::Gte,
                })
            }
            b'\'' => {
                let mut text = String::new();
                i += 1;
                loop {
                    match input[i..].find('\'') {
                        None => return Err(syntax(start, "unterminated string literal")),
                        Some(off) => {
                            text.push_str(&input[i..i + off]);
                            i += off + 1;
                            if bytes.get(i) == Some(&b'\'') {
                                text.push('\'');
                                i += 1;
                            } else {
                                break;
                            }
                        }
                    }
                }
                TokenKind::Literal(Value::Text(text))
            }
            b'-' | b'0'..=b'9' => {
                let (value, len) = lex_number_or_date(&input[i..]).map_err(|m| syntax(start, m))?;
                i += len;
                TokenKind::Literal(value)
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                TokenKind::Ident(input[start..i].to_string())
            }
            _ => {
                let ch = input[i..].chars().next().unwrap();
                return Err(syntax(start, format!("unexpected character `{ch}`")));
            }
        };
        tokens.push(Token {
            kind,
            position: start,
        });
    }
    tokens.push(Token {
        kind: TokenKind::Eof,
        position: input.len(),
    });
    Ok(tokens)
}

fn lex_number_or_date(s: &str) -> std::result::Result<(Value, usize), String> {
    let b = s.as_bytes();
    let digits = |from: usize| b[from..].iter().take_while(|c| c.is_ascii_digit()).count();

    // YYYY-MM-DD
    if b.len() >= 10
        && digits(0) == 4
        && b[4] == b'-'
        && digits(5) == 2
        && b[7] == b'-'
        && digits(8) == 2
        && b.get(10).is_none_or(|c| !c.is_ascii_alphanumeric())
    {
        let date = NaiveDate::parse_from_str(&s[..10], DATE_FORMAT)
            .map_err(|_| format!("invalid date `{}`", &s[..10]))?;
        return Ok((Value::Date(date), 10));
    }

    let mut i = usize::from(b[0] == b'-');
    let int_digits = digits(i);
    if int_digits == 0 {
        return Err("expected a number".into());
    }
    i += int_digits;
    let mut decimal = false;
    if b.get(i) == Some(&b'.') && digits(i + 1) > 0 {
        decimal = true;
        i += 1 + digits(i + 1);
    }
    if matches!(b.get(i), Some(b'e' | b'E')) {
        let mut j = i + 1;
        if matches!(b.get(j), Some(b'+' | b'-')) {
            j += 1;
        }
        if digits(j) > 0 {
            decimal = true;
            i = j + digits(j);
        }
    }
    if b.get(i).is_some_and(|c| c.is_ascii_alphabetic() || *c == b'_') {
        return Err(format!("malformed number `{}`", &s[..=i]));
    }
    let text = &s[..i];
    let value = if decimal {
        match text.parse::<f64>() {
            Ok(d) if d.is_finite() => Value::Decimal(d),
            _ => return Err(format!("decimal `{text}` out of range")),
        }
    } else {
        Value::Integer(
            text.parse::<i64>()
                .map_err(|_| format!("integer `{text}` out of range"))?,
        )
    };
    Ok((value, i))
}

use std::fmt;

use super::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    /// Punctuation and operators, including `@`.
    Punct(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Int(v) => write!(f, "integer `{v}`"),
            Tok::Punct(p) => write!(f, "`{p}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

// Longest first so that `<=` wins over `<`.
const PUNCTS: &[&str] = &[
    "&&", "||", "==", "!=", "<=", ">=", "++", "--", "+=", "-=", "(", ")", "{", "}", "[", "]",
    ";", ",", "=", "<", ">", "+", "-", "*", "/", "%", "!", "@",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if src[i..].starts_with("//") {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if src[i..].starts_with("/*") {
            let Some(end) = src[i + 2..].find("*/") else {
                return Err(ParseError::Syntax {
                    line,
                    col,
                    expected: "`*/`".into(),
                    found: "end of input".into(),
                });
            };
            for &b in &bytes[i..i + 2 + end + 2] {
                if b == b'\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
            }
            i += 2 + end + 2;
            continue;
        }
        let start_col = col;
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let text = &src[start..i];
            let v = text.parse::<i64>().map_err(|_| ParseError::Syntax {
                line,
                col: start_col,
                expected: "integer literal in range".into(),
                found: text.into(),
            })?;
            col += (i - start) as u32;
            out.push(Token {
                tok: Tok::Int(v),
                line,
                col: start_col,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            col += (i - start) as u32;
            out.push(Token {
                tok: Tok::Ident(src[start..i].to_string()),
                line,
                col: start_col,
            });
            continue;
        }
        let Some(p) = PUNCTS.iter().find(|p| src[i..].starts_with(**p)) else {
            let ch = src[i..].chars().next().unwrap_or('?');
            return Err(ParseError::Syntax {
                line,
                col,
                expected: "a token".into(),
                found: format!("`{ch}`"),
            });
        };
        i += p.len();
        col += p.len() as u32;
        out.push(Token {
            tok: Tok::Punct(p),
            line,
            col: start_col,
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn longest_operator_wins() {
        let toks: Vec<Tok> = tokenize("a<=b++ // c\n/* d */ !=")
            .unwrap()
            .into_iter()
            .map(|t| t.tok)
            .collect();
        assert_eq!(
            toks,
            vec![
                Tok::Ident("a".into()),
                Tok::Punct("<="),
                Tok::Ident("b".into()),
                Tok::Punct("++"),
                Tok::Punct("!="),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn tracks_lines() {
        let toks = tokenize("x\n\n  y").unwrap();
        assert_eq!((toks[1].line, toks[1].col), (3, 3));
    }

    #[test]
    fn rejects_stray_characters() {
        assert!(matches!(
            tokenize("x $ y"),
            Err(ParseError::Syntax { col: 3, .. })
        ));
    }
}

use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Int(u32),
    Str(String),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(v) => write!(f, "integer {v}"),
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

#[derive(Debug)]
pub(crate) struct LexError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

// Longest match first.
const SYMBOLS: &[&str] = &[
    "<=u", "<<", ">>", "==", "!=", "<u", "<s", "->", ";", ",", ":", "(", ")", "{", "}", "[", "]",
    "=", "+", "-", "*", "/", "%", "&", "|", "^",
];

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    let err = |line, col, message: String| LexError { line, col, message };

    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            let cleaned = text.replace('_', "");
            let parsed = if let Some(hex) = cleaned
                .strip_prefix("0x")
                .or_else(|| cleaned.strip_prefix("0X"))
            {
                u32::from_str_radix(hex, 16)
            } else {
                cleaned.parse::<u32>()
            };
            let v = parsed.map_err(|_| {
                err(start_line, start_col, format!("invalid 32-bit integer literal `{text}`"))
            })?;
            out.push(Token {
                tok: Tok::Int(v),
                line: start_line,
                col: start_col,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            col += i - start;
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: start_line,
                col: start_col,
            });
            continue;
        }
        if c == '"' {
            let mut s = String::new();
            i += 1;
            col += 1;
            loop {
                match chars.get(i) {
                    None | Some('\n') => {
                        return Err(err(start_line, start_col, "unterminated string".into()))
                    }
                    Some('"') => {
                        i += 1;
                        col += 1;
                        break;
                    }
                    Some('\\') => {
                        let esc = chars.get(i + 1).copied().unwrap_or('\\');
                        s.push(match esc {
                            'n' => '\n',
                            't' => '\t',
                            other => other,
                        });
                        i += 2;
                        col += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                        col += 1;
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                line: start_line,
                col: start_col,
            });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
        let sym = SYMBOLS.iter().find(|s| {
            let suffixed = s.len() > 1 && (s.ends_with('u') || s.ends_with('s'));
            rest.starts_with(**s)
                && !(suffixed && chars.get(i + s.len()).copied().is_some_and(is_ident_char))
        });
        match sym {
            Some(s) => {
                i += s.len();
                col += s.len();
                out.push(Token {
                    tok: Tok::Sym(s),
                    line: start_line,
                    col: start_col,
                });
            }
            None => return Err(err(line, col, format!("unexpected character `{c}`"))),
        }
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

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn unsigned_compare_symbols() {
        assert_eq!(
            toks("a <u b <=u c <s d"),
            vec![
                Tok::Ident("a".into()),
                Tok::Sym("<u"),
                Tok::Ident("b".into()),
                Tok::Sym("<=u"),
                Tok::Ident("c".into()),
                Tok::Sym("<s"),
                Tok::Ident("d".into()),
                Tok::Eof
            ]
        );
        // `<unit` is not an unsigned compare followed by `nit`
        assert!(tokenize("a <unit").is_err());
    }

    #[test]
    fn hex_and_underscores() {
        assert_eq!(toks("0x4000_0000 42"), vec![Tok::Int(0x4000_0000), Tok::Int(42), Tok::Eof]);
    }

    #[test]
    fn comments_skipped() {
        assert_eq!(toks("// hi\nx"), vec![Tok::Ident("x".into()), Tok::Eof]);
    }

    #[test]
    fn overflow_literal_rejected() {
        assert!(tokenize("0x1_0000_0000").is_err());
    }
}

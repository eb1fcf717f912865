//! Tokenizer for the formula language.

use super::SyntaxError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    Ident(String),
    Int(String),
    Decimal(String),
    StarValue, // the literal `<star>`
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Bang,
    Amp,
    Pipe,
    Arrow,
    Iff,
    Plus,
    Minus,
    Times,
    Slash,
    Ge,
    Gt,
    Eq,
    Le,
    Lt,
    End,
}

impl std::fmt::Display for Token {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Token::Ident(s) => return write!(f, "identifier `{s}`"),
            Token::Int(s) => return write!(f, "integer `{s}`"),
            Token::Decimal(s) => return write!(f, "decimal `{s}`"),
            Token::StarValue => "<star>",
            Token::LParen => "(",
            Token::RParen => ")",
            Token::LBracket => "[",
            Token::RBracket => "]",
            Token::Comma => ",",
            Token::Bang => "!",
            Token::Amp => "&",
            Token::Pipe => "|",
            Token::Arrow => "->",
            Token::Iff => "<->",
            Token::Plus => "+",
            Token::Minus => "-",
            Token::Times => "*",
            Token::Slash => "/",
            Token::Ge => ">=",
            Token::Gt => ">",
            Token::Eq => "=",
            Token::Le => "<=",
            Token::Lt => "<",
            Token::End => "end of input",
        };
        write!(f, "`{s}`")
    }
}

/// A token plus its byte offset in the source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spanned {
    pub token: Token,
    pub offset: usize,
}

pub fn tokenize(text: &str) -> Result<Vec<Spanned>, SyntaxError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let offset = i;
        let token = match c {
            '(' => {
                i += 1;
                Token::LParen
            }
            ')' => {
                i += 1;
                Token::RParen
            }
            '[' => {
                i += 1;
                Token::LBracket
            }
            ']' => {
                i += 1;
                Token::RBracket
            }
            ',' => {
                i += 1;
                Token::Comma
            }
            '!' => {
                i += 1;
                Token::Bang
            }
            '&' => {
                i += 1;
                Token::Amp
            }
            '|' => {
                i += 1;
                Token::Pipe
            }
            '+' => {
                i += 1;
                Token::Plus
            }
            '*' => {
                i += 1;
                Token::Times
            }
            '/' => {
                i += 1;
                Token::Slash
            }
            '=' => {
                i += 1;
                Token::Eq
            }
            '-' => {
                if text[i..].starts_with("->") {
                    i += 2;
                    Token::Arrow
                } else {
                    i += 1;
                    Token::Minus
                }
            }
            '>' => {
                if text[i..].starts_with(">=") {
                    i += 2;
                    Token::Ge
                } else {
                    i += 1;
                    Token::Gt
                }
            }
            '<' => {
                if text[i..].starts_with("<->") {
                    i += 3;
                    Token::Iff
                } else if text[i..].starts_with("<=") {
                    i += 2;
                    Token::Le
                } else if text[i..].starts_with("<star>") {
                    i += 6;
                    Token::StarValue
                } else {
                    i += 1;
                    Token::Lt
                }
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len()
                    && bytes[i] as char == '.'
                    && i + 1 < bytes.len()
                    && (bytes[i + 1] as char).is_ascii_digit()
                {
                    i += 1;
                    while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                    Token::Decimal(text[start..i].to_string())
                } else {
                    Token::Int(text[start..i].to_string())
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() {
                    let c = bytes[i] as char;
                    if c.is_ascii_alphanumeric() || c == '_' || c == '\'' || c == '@' {
                        i += 1;
                    } else {
                        break;
                    }
                }
                Token::Ident(text[start..i].to_string())
            }
            other => {
                return Err(SyntaxError {
                    position: offset,
                    found: format!("`{other}`"),
                    expected: vec!["a token".to_string()],
                })
            }
        };
        out.push(Spanned { token, offset });
    }
    out.push(Spanned { token: Token::End, offset: bytes.len() });
    Ok(out)
}

//! Tokenizer for MiniJava-QLC source text.

use std::fmt;

use super::span::SourceSpan;
use super::{ParseError, ParseErrorKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Ident(String),
    Int(i64),
    Char(char),
    Str(String),

    // keywords
    Static,
    IntType,
    CharType,
    BooleanType,
    StringType,
    Void,
    If,
    Else,
    While,
    For,
    Return,
    True,
    False,

    LParen,
    RParen,
    LBrace,
    RBrace,
    Semicolon,
    Comma,
    Dot,
    Question,
    Colon,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    NotEq,
    AndAnd,
    OrOr,
    Bang,
}

impl TokenKind {
    fn keyword(word: &str) -> Option<TokenKind> {
        Some(match word {
            "static" => TokenKind::Static,
            "int" => TokenKind::IntType,
            "char" => TokenKind::CharType,
            "boolean" => TokenKind::BooleanType,
            "String" => TokenKind::StringType,
            "void" => TokenKind::Void,
            "if" => TokenKind::If,
            "else" => TokenKind::Else,
            "while" => TokenKind::While,
            "for" => TokenKind::For,
            "return" => TokenKind::Return,
            "true" => TokenKind::True,
            "false" => TokenKind::False,
            _ => return None,
        })
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TokenKind::Ident(name) => return write!(f, "identifier `{name}`"),
            TokenKind::Int(v) => return write!(f, "integer literal `{v}`"),
            TokenKind::Char(c) => return write!(f, "character literal {c:?}"),
            TokenKind::Str(s) => return write!(f, "string literal {s:?}"),
            TokenKind::Static => "static",
            TokenKind::IntType => "int",
            TokenKind::CharType => "char",
            TokenKind::BooleanType => "boolean",
            TokenKind::StringType => "String",
            TokenKind::Void => "void",
            TokenKind::If => "if",
            TokenKind::Else => "else",
            TokenKind::While => "while",
            TokenKind::For => "for",
            TokenKind::Return => "return",
            TokenKind::True => "true",
            TokenKind::False => "false",
            TokenKind::LParen => "(",
            TokenKind::RParen => ")",
            TokenKind::LBrace => "{",
            TokenKind::RBrace => "}",
            TokenKind::Semicolon => ";",
            TokenKind::Comma => ",",
            TokenKind::Dot => ".",
            TokenKind::Question => "?",
            TokenKind::Colon => ":",
            TokenKind::Assign => "=",
            TokenKind::Plus => "+",
            TokenKind::Minus => "-",
            TokenKind::Star => "*",
            TokenKind::Slash => "/",
            TokenKind::Percent => "%",
            TokenKind::Lt => "<",
            TokenKind::Le => "<=",
            TokenKind::Gt => ">",
            TokenKind::Ge => ">=",
            TokenKind::EqEq => "==",
            TokenKind::NotEq => "!=",
            TokenKind::AndAnd => "&&",
            TokenKind::OrOr => "||",
            TokenKind::Bang => "!",
        };
        write!(f, "`{s}`")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: SourceSpan,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
    // position of the most recently consumed character
    last: (u32, u32),
}

impl<'a> Cursor<'a> {
    fn new(source: &'a str) -> Self {
        Self {
            chars: source.chars().peekable(),
            line: 1,
            col: 1,
            last: (1, 1),
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.chars.clone();
        it.next();
        it.next()
    }

    fn pos(&self) -> (u32, u32) {
        (self.line, self.col)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        self.last = (self.line, self.col);
        match c {
            '\n' => {
                self.line += 1;
                self.col = 1;
            }
            // CR directly before LF belongs to the line terminator
            '\r' if self.peek() == Some('\n') => {}
            _ => self.col += 1,
        }
        Some(c)
    }

    fn span_from(&self, start: (u32, u32)) -> SourceSpan {
        SourceSpan::new(start.0, start.1, self.last.0, self.last.1)
    }
}

fn lexical(message: impl Into<String>, span: SourceSpan) -> ParseError {
    ParseError {
        message: message.into(),
        span,
        kind: ParseErrorKind::Lexical,
    }
}

/// Splits `source` into tokens, skipping whitespace and comments.
pub fn tokenize(source: &str) -> Result<Vec<Token>, ParseError> {
    let mut cur = Cursor::new(source);
    let mut tokens = Vec::new();

    while let Some(c) = cur.peek() {
        let start = cur.pos();
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if c == '/' && cur.peek2() == Some('/') {
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }
        if c == '/' && cur.peek2() == Some('*') {
            cur.bump();
            cur.bump();
            loop {
                match cur.bump() {
                    Some('*') if cur.peek() == Some('/') => {
                        cur.bump();
                        break;
                    }
                    Some(_) => {}
                    None => {
                        return Err(lexical(
                            "unterminated block comment",
                            cur.span_from(start),
                        ))
                    }
                }
            }
            continue;
        }

        let kind = if c.is_ascii_alphabetic() || c == '_' || c == '$' {
            let mut word = String::new();
            while let Some(c) = cur.peek() {
                if c.is_ascii_alphanumeric() || c == '_' || c == '$' {
                    word.push(c);
                    cur.bump();
                } else {
                    break;
                }
            }
            TokenKind::keyword(&word).unwrap_or(TokenKind::Ident(word))
        } else if c.is_ascii_digit() {
            let mut digits = String::new();
            while let Some(c) = cur.peek() {
                if c.is_ascii_digit() {
                    digits.push(c);
                    cur.bump();
                } else {
                    break;
                }
            }
            if cur.peek().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') {
                cur.bump();
                return Err(lexical(
                    format!("malformed number `{digits}...`"),
                    cur.span_from(start),
                ));
            }
            match digits.parse::<i64>() {
                Ok(v) => TokenKind::Int(v),
                Err(_) => {
                    return Err(lexical(
                        format!("integer literal `{digits}` does not fit in 64 bits"),
                        cur.span_from(start),
                    ))
                }
            }
        } else if c == '"' {
            cur.bump();
            let mut text = String::new();
            loop {
                match cur.peek() {
                    None | Some('\n') | Some('\r') => {
                        return Err(lexical(
                            "unterminated string literal",
                            cur.span_from(start),
                        ))
                    }
                    Some('"') => {
                        cur.bump();
                        break;
                    }
                    Some('\\') => {
                        cur.bump();
                        text.push(escape(&mut cur, start)?);
                    }
                    Some(c) => {
                        cur.bump();
                        text.push(c);
                    }
                }
            }
            TokenKind::Str(text)
        } else if c == '\'' {
            cur.bump();
            let ch = match cur.peek() {
                None | Some('\n') | Some('\r') | Some('\'') => None,
                Some('\\') => {
                    cur.bump();
                    Some(escape(&mut cur, start)?)
                }
                Some(c) => {
                    cur.bump();
                    Some(c)
                }
            };
            match (ch, cur.peek()) {
                (Some(ch), Some('\'')) => {
                    cur.bump();
                    TokenKind::Char(ch)
                }
                (None, Some('\'')) => {
                    cur.bump();
                    return Err(lexical("empty character literal", cur.span_from(start)));
                }
                _ => {
                    return Err(lexical(
                        "unterminated character literal",
                        cur.span_from(start),
                    ))
                }
            }
        } else {
            cur.bump();
            let two = |cur: &mut Cursor, next: char, yes: TokenKind, no: TokenKind| {
                if cur.peek() == Some(next) {
                    cur.bump();
                    yes
                } else {
                    no
                }
            };
            match c {
                '(' => TokenKind::LParen,
                ')' => TokenKind::RParen,
                '{' => TokenKind::LBrace,
                '}' => TokenKind::RBrace,
                ';' => TokenKind::Semicolon,
                ',' => TokenKind::Comma,
                '.' => TokenKind::Dot,
                '?' => TokenKind::Question,
                ':' => TokenKind::Colon,
                '+' => TokenKind::Plus,
                '-' => TokenKind::Minus,
                '*' => TokenKind::Star,
                '/' => TokenKind::Slash,
                '%' => TokenKind::Percent,
                '=' => two(&mut cur, '=', TokenKind::EqEq, TokenKind::Assign),
                '<' => two(&mut cur, '=', TokenKind::Le, TokenKind::Lt),
                '>' => two(&mut cur, '=', TokenKind::Ge, TokenKind::Gt),
                '!' => two(&mut cur, '=', TokenKind::NotEq, TokenKind::Bang),
                '&' if cur.peek() == Some('&') => {
                    cur.bump();
                    TokenKind::AndAnd
                }
                '|' if cur.peek() == Some('|') => {
                    cur.bump();
                    TokenKind::OrOr
                }
                other => {
                    return Err(lexical(
                        format!("illegal character {other:?}"),
                        cur.span_from(start),
                    ))
                }
            }
        };
        tokens.push(Token {
            kind,
            span: cur.span_from(start),
        });
    }
    Ok(tokens)
}

fn escape(cur: &mut Cursor, start: (u32, u32)) -> Result<char, ParseError> {
    let c = match cur.peek() {
        Some('n') => '\n',
        Some('t') => '\t',
        Some('r') => '\r',
        Some('0') => '\0',
        Some('\\') => '\\',
        Some('\'') => '\'',
        Some('"') => '"',
        Some(other) if other != '\n' => {
            cur.bump();
            return Err(lexical(
                format!("unknown escape sequence `\\{other}`"),
                cur.span_from(start),
            ));
        }
        _ => {
            return Err(lexical(
                "unterminated escape sequence",
                cur.span_from(start),
            ))
        }
    };
    cur.bump();
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn char_at_statement() {
        use TokenKind::*;
        assert_eq!(
            kinds("return word.charAt(index);"),
            vec![
                Return,
                Ident("word".into()),
                Dot,
                Ident("charAt".into()),
                LParen,
                Ident("index".into()),
                RParen,
                Semicolon
            ]
        );
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").unwrap().is_empty());
        assert!(tokenize("  // only a comment\n/* and\n another */\n").unwrap().is_empty());
    }

    #[test]
    fn unterminated_char_literal() {
        let err = tokenize("char c = 'A").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Lexical);
        assert!(err.message.contains("unterminated character literal"));
        assert_eq!(err.span.start(), (1, 10));
    }

    #[test]
    fn unterminated_string_and_illegal_char() {
        let err = tokenize("String s = \"abc\n;").unwrap_err();
        assert!(err.message.contains("unterminated string"));
        let err = tokenize("int x = 1 # 2;").unwrap_err();
        assert!(err.message.contains("illegal character"));
        assert_eq!(err.span, SourceSpan::point(1, 11));
        assert!(tokenize("a & b").is_err());
    }

    #[test]
    fn spans_count_comment_lines_and_crlf() {
        let toks = tokenize("/* a\r\n b */ x\r\n  yy").unwrap();
        assert_eq!(toks[0].span, SourceSpan::new(2, 7, 2, 7));
        assert_eq!(toks[1].span, SourceSpan::new(3, 3, 3, 4));
    }

    #[test]
    fn operators_and_literals() {
        use TokenKind::*;
        assert_eq!(
            kinds("a<=b&&!c||d!=e ? 'x' : \"q\\\"\""),
            vec![
                Ident("a".into()),
                Le,
                Ident("b".into()),
                AndAnd,
                Bang,
                Ident("c".into()),
                OrOr,
                Ident("d".into()),
                NotEq,
                Ident("e".into()),
                Question,
                Char('x'),
                Colon,
                Str("q\"".into())
            ]
        );
        assert!(tokenize("99999999999999999999").is_err());
        assert_eq!(kinds("'\\n'"), vec![Char('\n')]);
    }
}

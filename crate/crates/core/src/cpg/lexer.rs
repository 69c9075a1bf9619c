//! Tokenizer for the supported C++ subset.
//!
//! Preprocessor lines are lifted out of the token stream into [`Directive`]s.
//! `>>` and `>>=` are never produced as single tokens: they come out as `>`
//! followed by a glued `>` / `>=` so template argument lists close cleanly.

use crate::error::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    Str,
    Char,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: u32,
    pub column: u32,
    /// Whitespace or a comment separates this token from the previous one.
    pub space_before: bool,
}

impl Token {
    pub fn is(&self, text: &str) -> bool {
        matches!(self.kind, TokenKind::Punct | TokenKind::Ident) && self.text == text
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Directive {
    /// Text after `#`, continuation lines joined.
    pub text: String,
    pub line: u32,
    pub end_line: u32,
}

const PUNCTS: &[&str] = &[
    "...", "<<=", "->*", "<=>", "::", "->", "++", "--", "<<", "<=", ">=", "==", "!=", "&&", "||", "+=", "-=", "*=",
    "/=", "%=", "&=", "|=", "^=", ".*",
];

pub struct Lexed {
    pub tokens: Vec<Token>,
    pub directives: Vec<Directive>,
}

pub fn tokenize(text: &str) -> Result<Lexed, ParseError> {
    Lexer::new(text).run()
}

struct Lexer<'a> {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    column: u32,
    at_line_start: bool,
    space_before: bool,
    _src: &'a str,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            chars: src.chars().collect(),
            pos: 0,
            line: 1,
            column: 1,
            at_line_start: true,
            space_before: true,
            _src: src,
        }
    }

    fn peek(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError { line: self.line, column: self.column, message: message.into() }
    }

    fn run(mut self) -> Result<Lexed, ParseError> {
        let mut tokens = Vec::new();
        let mut directives = Vec::new();
        while let Some(c) = self.peek(0) {
            if c == '\n' {
                self.bump();
                self.at_line_start = true;
                self.space_before = true;
                continue;
            }
            if c.is_whitespace() {
                self.bump();
                self.space_before = true;
                continue;
            }
            if c == '\\' && self.peek(1) == Some('\n') {
                self.bump();
                self.bump();
                self.space_before = true;
                continue;
            }
            if c == '/' && self.peek(1) == Some('/') {
                while let Some(c) = self.peek(0) {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
                self.space_before = true;
                continue;
            }
            if c == '/' && self.peek(1) == Some('*') {
                let (line, column) = (self.line, self.column);
                self.bump();
                self.bump();
                loop {
                    match self.peek(0) {
                        None => return Err(ParseError { line, column, message: "unterminated block comment".into() }),
                        Some('*') if self.peek(1) == Some('/') => {
                            self.bump();
                            self.bump();
                            break;
                        }
                        Some(_) => {
                            self.bump();
                        }
                    }
                }
                self.space_before = true;
                continue;
            }
            if c == '#' && self.at_line_start {
                directives.push(self.directive());
                continue;
            }
            self.at_line_start = false;
            let token = self.token()?;
            self.space_before = false;
            tokens.push(token);
        }
        Ok(Lexed { tokens, directives })
    }

    fn directive(&mut self) -> Directive {
        let line = self.line;
        self.bump(); // '#'
        let mut text = String::new();
        while let Some(c) = self.peek(0) {
            if c == '\\' && self.peek(1) == Some('\n') {
                self.bump();
                self.bump();
                text.push(' ');
                continue;
            }
            if c == '\n' {
                break;
            }
            if c == '/' && self.peek(1) == Some('/') {
                while let Some(c) = self.peek(0) {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
                break;
            }
            text.push(c);
            self.bump();
        }
        Directive { text: text.trim().to_string(), line, end_line: self.line }
    }

    fn token(&mut self) -> Result<Token, ParseError> {
        let (line, column, space_before) = (self.line, self.column, self.space_before);
        let make = |kind, text| Token { kind, text, line, column, space_before };
        let c = self.peek(0).expect("token start");

        if c == 'R' && self.peek(1) == Some('"') {
            self.bump();
            return Ok(make(TokenKind::Str, format!("R{}", self.raw_string()?)));
        }
        if matches!(c, 'L' | 'u' | 'U') && matches!(self.peek(1), Some('"') | Some('\'')) {
            self.bump();
            return self.token().map(|mut t| {
                t.line = line;
                t.column = column;
                t.space_before = space_before;
                t.text.insert(0, c);
                t
            });
        }
        if c == 'u' && self.peek(1) == Some('8') && self.peek(2) == Some('"') {
            self.bump();
            self.bump();
            let s = self.quoted('"')?;
            return Ok(make(TokenKind::Str, format!("u8{s}")));
        }
        if c.is_alphabetic() || c == '_' {
            let mut text = String::new();
            while let Some(c) = self.peek(0) {
                if c.is_alphanumeric() || c == '_' {
                    text.push(c);
                    self.bump();
                } else {
                    break;
                }
            }
            return Ok(make(TokenKind::Ident, text));
        }
        if c.is_ascii_digit() || (c == '.' && self.peek(1).is_some_and(|d| d.is_ascii_digit())) {
            let mut text = String::new();
            while let Some(c) = self.peek(0) {
                let is_hex = text.starts_with("0x") || text.starts_with("0X");
                let exp_sign = matches!(c, '+' | '-')
                    && match text.chars().last() {
                        Some('e' | 'E') => !is_hex,
                        Some('p' | 'P') => is_hex,
                        _ => false,
                    };
                if c.is_alphanumeric() || c == '.' || c == '_' || exp_sign {
                    text.push(c);
                    self.bump();
                } else if c == '\'' && self.peek(1).is_some_and(|d| d.is_ascii_alphanumeric()) {
                    // digit separator
                    self.bump();
                } else {
                    break;
                }
            }
            return Ok(make(TokenKind::Number, text));
        }
        if c == '"' {
            let s = self.quoted('"')?;
            return Ok(make(TokenKind::Str, s));
        }
        if c == '\'' {
            let s = self.quoted('\'')?;
            return Ok(make(TokenKind::Char, s));
        }
        for p in PUNCTS {
            if self.starts_with(p) {
                for _ in 0..p.chars().count() {
                    self.bump();
                }
                return Ok(make(TokenKind::Punct, p.to_string()));
            }
        }
        if "{}[]()<>;:,.?~!+-*/%^&|=".contains(c) {
            self.bump();
            return Ok(make(TokenKind::Punct, c.to_string()));
        }
        Err(self.error(format!("unexpected character `{c}`")))
    }

    fn starts_with(&self, p: &str) -> bool {
        p.chars().enumerate().all(|(i, ch)| self.peek(i) == Some(ch))
    }

    fn quoted(&mut self, quote: char) -> Result<String, ParseError> {
        let (line, column) = (self.line, self.column);
        let mut text = String::new();
        text.push(quote);
        self.bump();
        loop {
            match self.bump() {
                None | Some('\n') => return Err(ParseError { line, column, message: "unterminated literal".into() }),
                Some('\\') => {
                    text.push('\\');
                    if let Some(c) = self.bump() {
                        text.push(c);
                    }
                }
                Some(c) if c == quote => {
                    text.push(c);
                    return Ok(text);
                }
                Some(c) => text.push(c),
            }
        }
    }

    fn raw_string(&mut self) -> Result<String, ParseError> {
        let (line, column) = (self.line, self.column);
        let mut text = String::from("\"");
        self.bump();
        let mut delim = String::new();
        while let Some(c) = self.peek(0) {
            if c == '(' {
                break;
            }
            delim.push(c);
            text.push(c);
            self.bump();
        }
        let close = format!("){delim}\"");
        while self.peek(0).is_some() {
            if self.starts_with(&close) {
                for _ in 0..close.chars().count() {
                    text.push(self.bump().unwrap());
                }
                return Ok(text);
            }
            text.push(self.bump().unwrap());
        }
        Err(ParseError { line, column, message: "unterminated raw string".into() })
    }
}

//! Tokenizer shared by the query, condition and expression grammars.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Token {
    Ident(String),
    Number(f64),
    Attr(usize),
    Null(u64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Semicolon,
    Plus,
    Minus,
    Star,
    Slash,
    Times,
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
    Eof,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Ident(s) => write!(f, "`{s}`"),
            Token::Number(x) => write!(f, "number {x}"),
            Token::Attr(i) => write!(f, "`${i}`"),
            Token::Null(i) => write!(f, "`n{i}`"),
            Token::LParen => f.write_str("`(`"),
            Token::RParen => f.write_str("`)`"),
            Token::LBracket => f.write_str("`[`"),
            Token::RBracket => f.write_str("`]`"),
            Token::LBrace => f.write_str("`{`"),
            Token::RBrace => f.write_str("`}`"),
            Token::Comma => f.write_str("`,`"),
            Token::Semicolon => f.write_str("`;`"),
            Token::Plus => f.write_str("`+`"),
            Token::Minus => f.write_str("`-`"),
            Token::Star => f.write_str("`*`"),
            Token::Slash => f.write_str("`/`"),
            Token::Times => f.write_str("`×`"),
            Token::Eq => f.write_str("`=`"),
            Token::Ne => f.write_str("`!=`"),
            Token::Lt => f.write_str("`<`"),
            Token::Gt => f.write_str("`>`"),
            Token::Le => f.write_str("`<=`"),
            Token::Ge => f.write_str("`>=`"),
            Token::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spanned {
    pub token: Token,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexError {
    pub pos: Pos,
    pub message: String,
}

pub fn tokenize(text: &str) -> Result<Vec<Spanned>, LexError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut column) = (0usize, 1usize, 1usize);

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column };
        let err = |message: String| LexError { pos, message };

        if c == '\n' {
            i += 1;
            line += 1;
            column = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            column += 1;
            continue;
        }
        // line comments
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }

        let start = i;
        let token = match c {
            '(' => single(&mut i, Token::LParen),
            ')' => single(&mut i, Token::RParen),
            '[' => single(&mut i, Token::LBracket),
            ']' => single(&mut i, Token::RBracket),
            '{' => single(&mut i, Token::LBrace),
            '}' => single(&mut i, Token::RBrace),
            ',' => single(&mut i, Token::Comma),
            ';' => single(&mut i, Token::Semicolon),
            '+' => single(&mut i, Token::Plus),
            '-' => single(&mut i, Token::Minus),
            '*' => single(&mut i, Token::Star),
            '/' => single(&mut i, Token::Slash),
            '×' => single(&mut i, Token::Times),
            '=' => single(&mut i, Token::Eq),
            '≠' => single(&mut i, Token::Ne),
            '≤' => single(&mut i, Token::Le),
            '≥' => single(&mut i, Token::Ge),
            '!' if chars.get(i + 1) == Some(&'=') => {
                i += 2;
                Token::Ne
            }
            '<' if chars.get(i + 1) == Some(&'=') => {
                i += 2;
                Token::Le
            }
            '>' if chars.get(i + 1) == Some(&'=') => {
                i += 2;
                Token::Ge
            }
            '<' => single(&mut i, Token::Lt),
            '>' => single(&mut i, Token::Gt),
            '$' => {
                i += 1;
                let digits = take_while(&chars, &mut i, |c| c.is_ascii_digit());
                let k: usize = digits
                    .parse()
                    .map_err(|_| err("expected attribute number after `$`".into()))?;
                if k == 0 {
                    return Err(err("attribute positions start at $1".into()));
                }
                Token::Attr(k)
            }
            c if c.is_ascii_digit() || (c == '.' && next_is_digit(&chars, i)) => {
                let literal = take_number(&chars, &mut i);
                let x: f64 = literal
                    .parse()
                    .map_err(|_| err(format!("malformed number `{literal}`")))?;
                Token::Number(x)
            }
            '⊥' => {
                i += 1;
                let digits = take_while(&chars, &mut i, |c| c.is_ascii_digit());
                Token::Null(
                    digits
                        .parse()
                        .map_err(|_| err("expected null number after `⊥`".into()))?,
                )
            }
            c if c.is_alphabetic() || c == '_' => {
                let word = take_while(&chars, &mut i, |c| c.is_alphanumeric() || c == '_');
                null_token(&word).unwrap_or(Token::Ident(word))
            }
            other => return Err(err(format!("unexpected character `{other}`"))),
        };
        column += i - start;
        out.push(Spanned { token, pos });
    }
    out.push(Spanned {
        token: Token::Eof,
        pos: Pos { line, column },
    });
    Ok(out)
}

fn single(i: &mut usize, t: Token) -> Token {
    *i += 1;
    t
}

fn next_is_digit(chars: &[char], i: usize) -> bool {
    chars.get(i + 1).is_some_and(|c| c.is_ascii_digit())
}

fn take_while(chars: &[char], i: &mut usize, pred: impl Fn(char) -> bool) -> String {
    let start = *i;
    while *i < chars.len() && pred(chars[*i]) {
        *i += 1;
    }
    chars[start..*i].iter().collect()
}

fn take_number(chars: &[char], i: &mut usize) -> String {
    let start = *i;
    while *i < chars.len() && (chars[*i].is_ascii_digit() || chars[*i] == '.') {
        *i += 1;
    }
    if *i < chars.len() && (chars[*i] == 'e' || chars[*i] == 'E') {
        let mut j = *i + 1;
        if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
            j += 1;
        }
        if j < chars.len() && chars[j].is_ascii_digit() {
            *i = j;
            while *i < chars.len() && chars[*i].is_ascii_digit() {
                *i += 1;
            }
        }
    }
    chars[start..*i].iter().collect()
}

/// `n7` (or `⊥7`) denotes null 7.
fn null_token(word: &str) -> Option<Token> {
    let digits = word.strip_prefix('n')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok().map(Token::Null)
}

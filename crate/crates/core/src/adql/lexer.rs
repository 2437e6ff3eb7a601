use super::AdqlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keyword {
    Select,
    Top,
    From,
    Where,
    Order,
    By,
    Asc,
    Desc,
    And,
    Or,
    Not,
    Between,
    Like,
    Is,
    Null,
    Contains,
    Point,
    Circle,
    // Recognised only to be rejected with a precise message.
    Join,
    Inner,
    Left,
    Right,
    Full,
    Outer,
    Natural,
    Cross,
    Group,
    Having,
    Union,
    Intersect,
    Except,
    Distinct,
}

impl Keyword {
    fn lookup(word: &str) -> Option<Keyword> {
        use Keyword::*;
        let kw = match word.to_ascii_uppercase().as_str() {
            "SELECT" => Select,
            "TOP" => Top,
            "FROM" => From,
            "WHERE" => Where,
            "ORDER" => Order,
            "BY" => By,
            "ASC" => Asc,
            "DESC" => Desc,
            "AND" => And,
            "OR" => Or,
            "NOT" => Not,
            "BETWEEN" => Between,
            "LIKE" => Like,
            "IS" => Is,
            "NULL" => Null,
            "CONTAINS" => Contains,
            "POINT" => Point,
            "CIRCLE" => Circle,
            "JOIN" => Join,
            "INNER" => Inner,
            "LEFT" => Left,
            "RIGHT" => Right,
            "FULL" => Full,
            "OUTER" => Outer,
            "NATURAL" => Natural,
            "CROSS" => Cross,
            "GROUP" => Group,
            "HAVING" => Having,
            "UNION" => Union,
            "INTERSECT" => Intersect,
            "EXCEPT" => Except,
            "DISTINCT" => Distinct,
            _ => return None,
        };
        Some(kw)
    }

    pub fn as_str(self) -> &'static str {
        use Keyword::*;
        match self {
            Select => "SELECT",
            Top => "TOP",
            From => "FROM",
            Where => "WHERE",
            Order => "ORDER",
            By => "BY",
            Asc => "ASC",
            Desc => "DESC",
            And => "AND",
            Or => "OR",
            Not => "NOT",
            Between => "BETWEEN",
            Like => "LIKE",
            Is => "IS",
            Null => "NULL",
            Contains => "CONTAINS",
            Point => "POINT",
            Circle => "CIRCLE",
            Join => "JOIN",
            Inner => "INNER",
            Left => "LEFT",
            Right => "RIGHT",
            Full => "FULL",
            Outer => "OUTER",
            Natural => "NATURAL",
            Cross => "CROSS",
            Group => "GROUP",
            Having => "HAVING",
            Union => "UNION",
            Intersect => "INTERSECT",
            Except => "EXCEPT",
            Distinct => "DISTINCT",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Keyword(Keyword),
    Ident(String),
    /// Value plus source text (TOP needs to know it was written as an integer).
    Number(f64, String),
    Str(String),
    Star,
    Comma,
    LParen,
    RParen,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Slash,
    Semicolon,
}

impl TokenKind {
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Keyword(k) => k.as_str().to_owned(),
            TokenKind::Ident(s) => format!("identifier '{s}'"),
            TokenKind::Number(_, t) => format!("number {t}"),
            TokenKind::Str(s) => format!("string '{s}'"),
            TokenKind::Star => "'*'".into(),
            TokenKind::Comma => "','".into(),
            TokenKind::LParen => "'('".into(),
            TokenKind::RParen => "')'".into(),
            TokenKind::Eq => "'='".into(),
            TokenKind::Ne => "'<>'".into(),
            TokenKind::Lt => "'<'".into(),
            TokenKind::Le => "'<='".into(),
            TokenKind::Gt => "'>'".into(),
            TokenKind::Ge => "'>='".into(),
            TokenKind::Plus => "'+'".into(),
            TokenKind::Minus => "'-'".into(),
            TokenKind::Slash => "'/'".into(),
            TokenKind::Semicolon => "';'".into(),
        }
    }

    /// Tokens after which `-`/`+` is a binary operator rather than a sign.
    fn ends_operand(&self) -> bool {
        matches!(
            self,
            TokenKind::Ident(_)
                | TokenKind::Number(..)
                | TokenKind::Str(_)
                | TokenKind::RParen
                | TokenKind::Keyword(Keyword::Null)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    /// Byte offset into the query text.
    pub offset: usize,
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, AdqlError> {
    let bytes = text.as_bytes();
    let mut tokens: Vec<Token> = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let signed_number = matches!(c, b'+' | b'-')
            && starts_number(&bytes[i + 1..])
            && !tokens.last().is_some_and(|t| t.kind.ends_operand());
        let kind = if c.is_ascii_digit() || (c == b'.' && starts_number(&bytes[i..])) || signed_number {
            if signed_number {
                i += 1;
            }
            i = scan_number(bytes, i);
            let t = &text[start..i];
            let v: f64 = t.parse().map_err(|_| AdqlError::IllegalCharacter {
                ch: bytes[start] as char,
                offset: start,
            })?;
            TokenKind::Number(v, t.to_owned())
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'.') {
                i += 1;
            }
            let word = &text[start..i];
            match Keyword::lookup(word) {
                Some(k) => TokenKind::Keyword(k),
                None => TokenKind::Ident(word.to_owned()),
            }
        } else if c == b'\'' {
            let mut s = String::new();
            i += 1;
            loop {
                let rest = &text[i..];
                let Some(q) = rest.find('\'') else {
                    return Err(AdqlError::UnterminatedString { offset: start });
                };
                s.push_str(&rest[..q]);
                i += q + 1;
                if bytes.get(i) == Some(&b'\'') {
                    s.push('\'');
                    i += 1;
                } else {
                    break;
                }
            }
            TokenKind::Str(s)
        } else {
            let two = bytes.get(i + 1).copied();
            let (kind, len) = match (c, two) {
                (b'<', Some(b'=')) => (TokenKind::Le, 2),
                (b'>', Some(b'=')) => (TokenKind::Ge, 2),
                (b'<', Some(b'>')) => (TokenKind::Ne, 2),
                (b'!', Some(b'=')) => (TokenKind::Ne, 2),
                (b'<', _) => (TokenKind::Lt, 1),
                (b'>', _) => (TokenKind::Gt, 1),
                (b'=', _) => (TokenKind::Eq, 1),
                (b'*', _) => (TokenKind::Star, 1),
                (b',', _) => (TokenKind::Comma, 1),
                (b'(', _) => (TokenKind::LParen, 1),
                (b')', _) => (TokenKind::RParen, 1),
                (b'+', _) => (TokenKind::Plus, 1),
                (b'-', _) => (TokenKind::Minus, 1),
                (b'/', _) => (TokenKind::Slash, 1),
                (b';', _) => (TokenKind::Semicolon, 1),
                _ => {
                    let ch = text[i..].chars().next().expect("in bounds");
                    return Err(AdqlError::IllegalCharacter { ch, offset: i });
                }
            };
            i += len;
            kind
        };
        tokens.push(Token { kind, offset: start });
    }
    Ok(tokens)
}

fn starts_number(b: &[u8]) -> bool {
    match b {
        [d, ..] if d.is_ascii_digit() => true,
        [b'.', d, ..] if d.is_ascii_digit() => true,
        _ => false,
    }
}

fn scan_number(b: &[u8], mut i: usize) -> usize {
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    if i < b.len() && b[i] == b'.' {
        i += 1;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < b.len() && matches!(b[i], b'e' | b'E') {
        let mut j = i + 1;
        if j < b.len() && matches!(b[j], b'+' | b'-') {
            j += 1;
        }
        if j < b.len() && b[j].is_ascii_digit() {
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
            }
            i = j;
        }
    }
    i
}

//! Minimal FITS reader/writer: primary HDU plus binary-table extensions.
//!
//! Only the subset needed by DL3 event files is handled: scalar `J`, `K`,
//! `E`, `D` columns and fixed-width `nA` strings. Other extension types are
//! carried through as opaque data sized from their `NAXISn` keywords.
//!
//! Cards are written in a single canonical layout (keyword in bytes 1-8,
//! `= ` in bytes 9-10, value field from byte 11, numbers right-justified to
//! byte 30) so that files produced here re-serialize byte for byte.

use std::fmt;

use thiserror::Error;

pub const BLOCK_SIZE: usize = 2880;
pub const CARD_SIZE: usize = 80;

const CARDS_PER_BLOCK: usize = BLOCK_SIZE / CARD_SIZE;
/// Longest escaped string that fits between the quotes of one card.
const MAX_INLINE_STRING: usize = 68;
/// Room for a string chunk when a long string is split with `&` + CONTINUE.
const MAX_CHUNK: usize = 67;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitsError {
    #[error("truncated file: {0}")]
    TruncatedFile(String),
    #[error("bad card {index}: {reason}")]
    BadCard { index: usize, reason: String },
    #[error("bad table cell in column {column}: {reason}")]
    BadCell { column: String, reason: String },
    #[error("unsupported TFORM '{0}'")]
    UnsupportedForm(String),
    #[error("HDU {hdu}: missing keyword {keyword}")]
    MissingKeyword { hdu: usize, keyword: String },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("string of {len} chars overflows column {column} ({width}A)")]
    WidthOverflow {
        column: String,
        width: usize,
        len: usize,
    },
}

/// A header card value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Integer(i64),
    Real(f64),
    Logical(bool),
    Text(String),
    /// `KEY =` with an empty value field.
    Undefined,
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Integer(i) => Some(i as f64),
            Value::Real(r) => Some(r),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            Value::Integer(i) => Some(i),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match *self {
            Value::Logical(b) => Some(b),
            _ => None,
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Integer(v)
    }
}

impl From<i32> for Value {
    fn from(v: i32) -> Self {
        Value::Integer(v.into())
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Real(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Logical(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_owned())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

/// One logical header card. `value == None` marks a commentary card
/// (`COMMENT`, `HISTORY`, blank keyword, or any card without `= `), whose
/// free text lives in `comment`.
#[derive(Debug, Clone, PartialEq)]
pub struct Card {
    pub keyword: String,
    pub value: Option<Value>,
    pub comment: Option<String>,
}

impl Card {
    pub fn new(keyword: impl Into<String>, value: impl Into<Value>) -> Self {
        Card {
            keyword: keyword.into(),
            value: Some(value.into()),
            comment: None,
        }
    }

    pub fn commentary(keyword: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Card {
            keyword: keyword.into(),
            value: None,
            comment: (!text.is_empty()).then_some(text),
        }
    }

    pub fn with_comment(mut self, comment: impl Into<String>) -> Self {
        let c = comment.into();
        self.comment = (!c.is_empty()).then_some(c);
        self
    }
}

/// Ordered list of cards, without the terminating `END`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitsHeader {
    cards: Vec<Card>,
}

impl FitsHeader {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_cards(cards: Vec<Card>) -> Self {
        FitsHeader { cards }
    }

    /// `SIMPLE = T`, `BITPIX = 8`, `NAXIS = 0`, `EXTEND = T`.
    pub fn empty_primary() -> Self {
        FitsHeader::from_cards(vec![
            Card::new("SIMPLE", true).with_comment("conforms to FITS standard"),
            Card::new("BITPIX", 8),
            Card::new("NAXIS", 0),
            Card::new("EXTEND", true),
        ])
    }

    pub fn cards(&self) -> &[Card] {
        &self.cards
    }

    pub fn into_cards(self) -> Vec<Card> {
        self.cards
    }

    pub fn push(&mut self, card: Card) {
        self.cards.push(card);
    }

    pub fn len(&self) -> usize {
        self.cards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cards.is_empty()
    }

    pub fn card(&self, keyword: &str) -> Option<&Card> {
        self.cards
            .iter()
            .find(|c| c.value.is_some() && c.keyword == keyword)
    }

    pub fn get(&self, keyword: &str) -> Option<&Value> {
        self.card(keyword).and_then(|c| c.value.as_ref())
    }

    pub fn get_i64(&self, keyword: &str) -> Option<i64> {
        self.get(keyword).and_then(Value::as_i64)
    }

    pub fn get_f64(&self, keyword: &str) -> Option<f64> {
        self.get(keyword).and_then(Value::as_f64)
    }

    pub fn get_str(&self, keyword: &str) -> Option<&str> {
        self.get(keyword).and_then(Value::as_str)
    }

    /// Replaces the first valued card with this keyword, or appends.
    pub fn set(&mut self, keyword: &str, value: impl Into<Value>) {
        let value = value.into();
        match self
            .cards
            .iter_mut()
            .find(|c| c.value.is_some() && c.keyword == keyword)
        {
            Some(card) => card.value = Some(value),
            None => self.cards.push(Card::new(keyword, value)),
        }
    }

    fn require_i64(&self, hdu: usize, keyword: &str) -> Result<i64, FitsError> {
        self.get_i64(keyword).ok_or_else(|| FitsError::MissingKeyword {
            hdu,
            keyword: keyword.to_owned(),
        })
    }
}

/// Binary-table column storage form (`TFORMn`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnForm {
    /// `J`
    Int32,
    /// `K`
    Int64,
    /// `E`
    Float32,
    /// `D`
    Float64,
    /// `nA`
    Ascii(usize),
}

impl ColumnForm {
    pub fn width(self) -> usize {
        match self {
            ColumnForm::Int32 | ColumnForm::Float32 => 4,
            ColumnForm::Int64 | ColumnForm::Float64 => 8,
            ColumnForm::Ascii(n) => n,
        }
    }

    pub fn tform(self) -> String {
        match self {
            ColumnForm::Int32 => "J".into(),
            ColumnForm::Int64 => "K".into(),
            ColumnForm::Float32 => "E".into(),
            ColumnForm::Float64 => "D".into(),
            ColumnForm::Ascii(n) => format!("{n}A"),
        }
    }

    /// Parses `rT` with an optional repeat count; only scalar numeric columns
    /// and `nA` strings are accepted.
    pub fn parse(tform: &str) -> Result<Self, FitsError> {
        let t = tform.trim();
        let split = t.find(|c: char| !c.is_ascii_digit()).unwrap_or(t.len());
        let (digits, rest) = t.split_at(split);
        let repeat = if digits.is_empty() {
            1
        } else {
            digits
                .parse::<usize>()
                .map_err(|_| FitsError::UnsupportedForm(tform.to_owned()))?
        };
        let unsupported = || FitsError::UnsupportedForm(tform.to_owned());
        let form = match rest {
            "A" if repeat > 0 => ColumnForm::Ascii(repeat),
            "J" if repeat == 1 => ColumnForm::Int32,
            "K" if repeat == 1 => ColumnForm::Int64,
            "E" if repeat == 1 => ColumnForm::Float32,
            "D" if repeat == 1 => ColumnForm::Float64,
            _ => return Err(unsupported()),
        };
        Ok(form)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub form: ColumnForm,
    pub unit: Option<String>,
}

impl Column {
    pub fn new(name: impl Into<String>, form: ColumnForm) -> Self {
        Column {
            name: name.into(),
            form,
            unit: None,
        }
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = Some(unit.into());
        self
    }
}

/// A decoded table cell. Floats compare by bit pattern so that round trips
/// are checked exactly, NaN payloads and signed zeros included.
#[derive(Debug, Clone)]
pub enum Cell {
    Int32(i32),
    Int64(i64),
    Float32(f32),
    Float64(f64),
    Text(String),
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Cell::Int32(a), Cell::Int32(b)) => a == b,
            (Cell::Int64(a), Cell::Int64(b)) => a == b,
            (Cell::Float32(a), Cell::Float32(b)) => a.to_bits() == b.to_bits(),
            (Cell::Float64(a), Cell::Float64(b)) => a.to_bits() == b.to_bits(),
            (Cell::Text(a), Cell::Text(b)) => a == b,
            _ => false,
        }
    }
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Cell::Int32(v) => Some(v as f64),
            Cell::Int64(v) => Some(v as f64),
            Cell::Float32(v) => Some(v as f64),
            Cell::Float64(v) => Some(v),
            Cell::Text(_) => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            Cell::Int32(v) => Some(v as i64),
            Cell::Int64(v) => Some(v),
            _ => None,
        }
    }

    fn matches(&self, form: ColumnForm) -> bool {
        matches!(
            (self, form),
            (Cell::Int32(_), ColumnForm::Int32)
                | (Cell::Int64(_), ColumnForm::Int64)
                | (Cell::Float32(_), ColumnForm::Float32)
                | (Cell::Float64(_), ColumnForm::Float64)
                | (Cell::Text(_), ColumnForm::Ascii(_))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BinTable {
    /// `EXTNAME`
    pub name: String,
    pub columns: Vec<Column>,
    /// Row-major cells, one `Vec` per row in column order.
    pub rows: Vec<Vec<Cell>>,
}

impl BinTable {
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Self {
        BinTable {
            name: name.into(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn row_width(&self) -> usize {
        self.columns.iter().map(|c| c.form.width()).sum()
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c.name.eq_ignore_ascii_case(name))
    }

    /// Mandatory extension keywords describing this table's layout.
    pub fn structural_header(&self) -> FitsHeader {
        let mut h = FitsHeader::new();
        h.push(Card::new("XTENSION", "BINTABLE").with_comment("binary table extension"));
        h.push(Card::new("BITPIX", 8));
        h.push(Card::new("NAXIS", 2));
        h.push(Card::new("NAXIS1", self.row_width() as i64).with_comment("bytes per row"));
        h.push(Card::new("NAXIS2", self.row_count() as i64).with_comment("number of rows"));
        h.push(Card::new("PCOUNT", 0));
        h.push(Card::new("GCOUNT", 1));
        h.push(Card::new("TFIELDS", self.columns.len() as i64));
        for (i, col) in self.columns.iter().enumerate() {
            let n = i + 1;
            h.push(Card::new(format!("TTYPE{n}"), col.name.as_str()));
            h.push(Card::new(format!("TFORM{n}"), col.form.tform()));
            if let Some(unit) = &col.unit {
                h.push(Card::new(format!("TUNIT{n}"), unit.as_str()));
            }
        }
        h.push(Card::new("EXTNAME", self.name.as_str()));
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HduData {
    Empty,
    Table(BinTable),
    /// Raw data of an HDU type this module does not decode.
    Opaque(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hdu {
    pub header: FitsHeader,
    pub data: HduData,
}

impl Hdu {
    pub fn empty_primary() -> Self {
        Hdu {
            header: FitsHeader::empty_primary(),
            data: HduData::Empty,
        }
    }

    /// Table HDU whose header is the structural keywords followed by `extra`.
    pub fn bintable(table: BinTable, extra: impl IntoIterator<Item = Card>) -> Self {
        let mut header = table.structural_header();
        for card in extra {
            header.push(card);
        }
        Hdu {
            header,
            data: HduData::Table(table),
        }
    }

    pub fn table(&self) -> Option<&BinTable> {
        match &self.data {
            HduData::Table(t) => Some(t),
            _ => None,
        }
    }

    /// `EXTNAME`, trimmed; empty when absent.
    pub fn extname(&self) -> &str {
        self.header.get_str("EXTNAME").unwrap_or("").trim_end()
    }
}

// ---------------------------------------------------------------------------
// Reading

pub fn read_fits(bytes: &[u8]) -> Result<Vec<Hdu>, FitsError> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(BLOCK_SIZE) {
        return Err(FitsError::TruncatedFile(format!(
            "length {} is not a positive multiple of {BLOCK_SIZE}",
            bytes.len()
        )));
    }
    let mut hdus = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let index = hdus.len();
        let (header, header_len) = parse_header(&bytes[pos..])?;
        pos += header_len;
        check_first_card(&header, index, pos - header_len)?;

        let size = data_size(&header, index)?;
        let padded = padded_len(size);
        if bytes.len() < pos + padded {
            return Err(FitsError::TruncatedFile(format!(
                "HDU {index} declares {size} data bytes, only {} remain",
                bytes.len() - pos
            )));
        }
        let payload = &bytes[pos..pos + size];
        pos += padded;

        let data = if is_bintable(&header) && index > 0 {
            HduData::Table(decode_table(&header, index, payload)?)
        } else if size == 0 {
            HduData::Empty
        } else {
            HduData::Opaque(payload.to_vec())
        };
        hdus.push(Hdu { header, data });
    }
    Ok(hdus)
}

fn check_first_card(header: &FitsHeader, index: usize, offset: usize) -> Result<(), FitsError> {
    let first = header.cards.first();
    let ok = if index == 0 {
        matches!(first, Some(c) if c.keyword == "SIMPLE" && c.value == Some(Value::Logical(true)))
    } else {
        matches!(first, Some(c) if c.keyword == "XTENSION" && matches!(c.value, Some(Value::Text(_))))
    };
    if ok {
        Ok(())
    } else {
        Err(FitsError::BadCard {
            index: offset / CARD_SIZE,
            reason: if index == 0 {
                "primary header must start with SIMPLE = T".into()
            } else {
                "extension header must start with XTENSION".into()
            },
        })
    }
}

fn is_bintable(header: &FitsHeader) -> bool {
    header
        .get_str("XTENSION")
        .is_some_and(|x| x.trim_end() == "BINTABLE")
}

fn padded_len(n: usize) -> usize {
    n.div_ceil(BLOCK_SIZE) * BLOCK_SIZE
}

fn data_size(header: &FitsHeader, hdu: usize) -> Result<usize, FitsError> {
    if is_bintable(header) {
        for kw in ["NAXIS1", "NAXIS2", "TFIELDS"] {
            header.require_i64(hdu, kw)?;
        }
    }
    let bitpix = header.require_i64(hdu, "BITPIX")?;
    let naxis = header.require_i64(hdu, "NAXIS")?;
    if naxis == 0 {
        return Ok(0);
    }
    let mut count: i64 = 1;
    for i in 1..=naxis {
        count = count.saturating_mul(header.require_i64(hdu, &format!("NAXIS{i}"))?);
    }
    if hdu > 0 {
        let pcount = header.get_i64("PCOUNT").unwrap_or(0);
        let gcount = header.get_i64("GCOUNT").unwrap_or(1);
        count = count.saturating_add(pcount).saturating_mul(gcount);
    }
    let bytes = count.saturating_mul(bitpix.abs() / 8);
    usize::try_from(bytes)
        .map_err(|_| FitsError::InvalidHeader(format!("HDU {hdu}: negative data size")))
}

/// Parses cards up to `END`; returns the header and its padded byte length.
fn parse_header(bytes: &[u8]) -> Result<(FitsHeader, usize), FitsError> {
    let mut raw: Vec<RawCard> = Vec::new();
    let mut n = 0;
    loop {
        let start = n * CARD_SIZE;
        if start + CARD_SIZE > bytes.len() {
            return Err(FitsError::TruncatedFile("header has no END card".into()));
        }
        let card = &bytes[start..start + CARD_SIZE];
        if !card.iter().all(|b| (0x20..=0x7e).contains(b)) {
            return Err(FitsError::BadCard {
                index: n,
                reason: "non-printable or non-ASCII byte".into(),
            });
        }
        // Validated as ASCII above.
        let text = std::str::from_utf8(card).expect("ascii");
        n += 1;
        if &text[..8] == "END     " {
            if !text[3..].bytes().all(|b| b == b' ') {
                return Err(FitsError::BadCard {
                    index: n - 1,
                    reason: "END card has trailing content".into(),
                });
            }
            break;
        }
        raw.push(parse_card(text, n - 1)?);
    }
    let header_len = n.div_ceil(CARDS_PER_BLOCK) * BLOCK_SIZE;
    Ok((FitsHeader::from_cards(merge_continue(raw)), header_len))
}

struct RawCard {
    card: Card,
    continuation: Option<String>,
}

fn parse_card(text: &str, index: usize) -> Result<RawCard, FitsError> {
    let bad = |reason: &str| FitsError::BadCard {
        index,
        reason: reason.to_owned(),
    };
    let keyword = text[..8].trim_end();
    if keyword.contains(' ')
        || !keyword
            .bytes()
            .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
    {
        return Err(bad("malformed keyword"));
    }
    if keyword == "CONTINUE" {
        let field = text[8..].trim_start();
        if field.starts_with('\'') {
            let (s, comment) = parse_string_field(field).ok_or_else(|| bad("bad CONTINUE string"))?;
            return Ok(RawCard {
                card: Card {
                    keyword: keyword.to_owned(),
                    value: None,
                    comment,
                },
                continuation: Some(s),
            });
        }
    }
    let commentary = matches!(keyword, "COMMENT" | "HISTORY" | "") || &text[8..10] != "= ";
    if commentary {
        let body = text[8..].trim_end();
        return Ok(RawCard {
            card: Card {
                keyword: keyword.to_owned(),
                value: None,
                comment: (!body.is_empty()).then(|| body.to_owned()),
            },
            continuation: None,
        });
    }

    let field = &text[10..];
    let trimmed = field.trim_start();
    let (value, comment) = if trimmed.starts_with('\'') {
        let (s, comment) = parse_string_field(trimmed).ok_or_else(|| bad("unterminated string"))?;
        (Value::Text(s), comment)
    } else {
        let (token, comment) = match trimmed.find('/') {
            Some(i) => (trimmed[..i].trim(), Some(clean_comment(&trimmed[i + 1..]))),
            None => (trimmed.trim(), None),
        };
        let value = parse_scalar(token).ok_or_else(|| bad("unparseable value"))?;
        (value, comment.flatten())
    };
    Ok(RawCard {
        card: Card {
            keyword: keyword.to_owned(),
            value: Some(value),
            comment,
        },
        continuation: None,
    })
}

fn clean_comment(s: &str) -> Option<String> {
    let s = s.strip_prefix(' ').unwrap_or(s).trim_end();
    (!s.is_empty()).then(|| s.to_owned())
}

/// `'...'` with doubled-quote escapes, then an optional `/ comment`.
fn parse_string_field(field: &str) -> Option<(String, Option<String>)> {
    let bytes = field.as_bytes();
    let mut out = String::new();
    let mut i = 1;
    loop {
        match bytes.get(i)? {
            b'\'' if bytes.get(i + 1) == Some(&b'\'') => {
                out.push('\'');
                i += 2;
            }
            b'\'' => {
                i += 1;
                break;
            }
            &b => {
                out.push(b as char);
                i += 1;
            }
        }
    }
    let rest = field[i..].trim_start();
    let comment = if rest.is_empty() {
        None
    } else {
        clean_comment(rest.strip_prefix('/')?)
    };
    let value = out.trim_end_matches(' ').to_owned();
    Some((value, comment))
}

fn parse_scalar(token: &str) -> Option<Value> {
    match token {
        "" => return Some(Value::Undefined),
        "T" => return Some(Value::Logical(true)),
        "F" => return Some(Value::Logical(false)),
        _ => {}
    }
    let digits = token.strip_prefix(['+', '-']).unwrap_or(token);
    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
        return token.parse::<i64>().ok().map(Value::Integer);
    }
    if token.bytes().any(|b| matches!(b, b'.' | b'E' | b'D' | b'e' | b'd')) {
        let normalized = token.replace(['D', 'd'], "E");
        return normalized
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Value::Real);
    }
    None
}

/// Folds `&`-terminated strings and their CONTINUE cards into one card.
fn merge_continue(raw: Vec<RawCard>) -> Vec<Card> {
    let mut out: Vec<Card> = Vec::with_capacity(raw.len());
    let mut open = false;
    for rc in raw {
        if let Some(chunk) = rc.continuation {
            if open {
                let last = out.last_mut().expect("open string has a card");
                if let Some(Value::Text(s)) = &mut last.value {
                    s.pop();
                    s.push_str(&chunk);
                    open = s.ends_with('&');
                }
                last.comment = rc.card.comment;
                continue;
            }
            // Orphan CONTINUE: keep it as commentary text.
            out.push(Card {
                keyword: rc.card.keyword,
                value: None,
                comment: Some(format!("'{}'", chunk.replace('\'', "''"))),
            });
            open = false;
            continue;
        }
        open = matches!(&rc.card.value, Some(Value::Text(s)) if s.ends_with('&'));
        out.push(rc.card);
    }
    // A string ending in '&' that was not continued keeps its '&'.
    out
}

fn decode_table(header: &FitsHeader, hdu: usize, payload: &[u8]) -> Result<BinTable, FitsError> {
    let layout = table_layout(header, hdu)?;
    let width = layout.naxis1;
    let mut rows = Vec::with_capacity(layout.naxis2);
    for r in 0..layout.naxis2 {
        let row_bytes = &payload[r * width..(r + 1) * width];
        let mut offset = 0;
        let mut row = Vec::with_capacity(layout.columns.len());
        for col in &layout.columns {
            let w = col.form.width();
            row.push(decode_cell(col, &row_bytes[offset..offset + w])?);
            offset += w;
        }
        rows.push(row);
    }
    Ok(BinTable {
        name: layout.name,
        columns: layout.columns,
        rows,
    })
}

fn decode_cell(col: &Column, b: &[u8]) -> Result<Cell, FitsError> {
    let cell = match col.form {
        ColumnForm::Int32 => Cell::Int32(i32::from_be_bytes(b.try_into().expect("4 bytes"))),
        ColumnForm::Int64 => Cell::Int64(i64::from_be_bytes(b.try_into().expect("8 bytes"))),
        ColumnForm::Float32 => Cell::Float32(f32::from_be_bytes(b.try_into().expect("4 bytes"))),
        ColumnForm::Float64 => Cell::Float64(f64::from_be_bytes(b.try_into().expect("8 bytes"))),
        ColumnForm::Ascii(_) => {
            let end = b.iter().position(|&c| c == 0).unwrap_or(b.len());
            let s = &b[..end];
            if !s.iter().all(|c| (0x20..=0x7e).contains(c)) {
                return Err(FitsError::BadCell {
                    column: col.name.clone(),
                    reason: "non-ASCII byte in string cell".into(),
                });
            }
            let s = std::str::from_utf8(s).expect("ascii");
            Cell::Text(s.trim_end_matches(' ').to_owned())
        }
    };
    Ok(cell)
}

struct TableLayout {
    name: String,
    columns: Vec<Column>,
    naxis1: usize,
    naxis2: usize,
}

fn table_layout(header: &FitsHeader, hdu: usize) -> Result<TableLayout, FitsError> {
    let naxis1 = header.require_i64(hdu, "NAXIS1")?;
    let naxis2 = header.require_i64(hdu, "NAXIS2")?;
    let tfields = header.require_i64(hdu, "TFIELDS")?;
    let invalid = |msg: String| FitsError::InvalidHeader(format!("HDU {hdu}: {msg}"));
    if header.get_i64("BITPIX") != Some(8) || header.get_i64("NAXIS") != Some(2) {
        return Err(invalid("BINTABLE requires BITPIX = 8 and NAXIS = 2".into()));
    }
    if header.get_i64("PCOUNT").unwrap_or(0) != 0 {
        return Err(FitsError::UnsupportedForm("heap (PCOUNT > 0)".into()));
    }
    if header.get_i64("GCOUNT").unwrap_or(1) != 1 {
        return Err(invalid("GCOUNT must be 1".into()));
    }
    if naxis1 < 0 || naxis2 < 0 || !(0..=999).contains(&tfields) {
        return Err(invalid("negative NAXISn or TFIELDS out of range".into()));
    }
    let mut columns = Vec::with_capacity(tfields as usize);
    for n in 1..=tfields {
        let tform = header
            .get_str(&format!("TFORM{n}"))
            .ok_or_else(|| FitsError::MissingKeyword {
                hdu,
                keyword: format!("TFORM{n}"),
            })?;
        let form = ColumnForm::parse(tform)?;
        let name = header
            .get_str(&format!("TTYPE{n}"))
            .unwrap_or("")
            .trim_end()
            .to_owned();
        let unit = header
            .get_str(&format!("TUNIT{n}"))
            .map(|u| u.trim_end().to_owned());
        columns.push(Column { name, form, unit });
    }
    let width: usize = columns.iter().map(|c| c.form.width()).sum();
    if width != naxis1 as usize {
        return Err(invalid(format!(
            "NAXIS1 = {naxis1} but columns span {width} bytes"
        )));
    }
    Ok(TableLayout {
        name: header
            .get_str("EXTNAME")
            .unwrap_or("")
            .trim_end()
            .to_owned(),
        columns,
        naxis1: naxis1 as usize,
        naxis2: naxis2 as usize,
    })
}

// ---------------------------------------------------------------------------
// Writing

pub fn write_fits(hdus: &[Hdu]) -> Result<Vec<u8>, FitsError> {
    if hdus.is_empty() {
        return Err(FitsError::InvalidHeader("no HDUs to write".into()));
    }
    let mut out = Vec::new();
    for (index, hdu) in hdus.iter().enumerate() {
        check_first_card(&hdu.header, index, 0)
            .map_err(|e| FitsError::InvalidHeader(format!("HDU {index}: {e}")))?;
        write_header(&hdu.header, &mut out)?;
        let declared = data_size(&hdu.header, index)?;
        let start = out.len();
        match &hdu.data {
            HduData::Empty => {
                if declared != 0 {
                    return Err(FitsError::InvalidHeader(format!(
                        "HDU {index} declares {declared} data bytes but has no data"
                    )));
                }
            }
            HduData::Opaque(bytes) => {
                if bytes.len() != declared {
                    return Err(FitsError::InvalidHeader(format!(
                        "HDU {index} declares {declared} data bytes, got {}",
                        bytes.len()
                    )));
                }
                out.extend_from_slice(bytes);
            }
            HduData::Table(table) => {
                if index == 0 || !is_bintable(&hdu.header) {
                    return Err(FitsError::InvalidHeader(format!(
                        "HDU {index}: table data requires an XTENSION = 'BINTABLE' header"
                    )));
                }
                let layout = table_layout(&hdu.header, index)?;
                if layout.columns != table.columns
                    || layout.naxis2 != table.row_count()
                    || layout.name != table.name
                {
                    return Err(FitsError::InvalidHeader(format!(
                        "HDU {index}: header does not describe the attached table"
                    )));
                }
                encode_table(table, &mut out)?;
            }
        }
        let written = out.len() - start;
        out.resize(start + padded_len(written), 0);
    }
    Ok(out)
}

fn encode_table(table: &BinTable, out: &mut Vec<u8>) -> Result<(), FitsError> {
    out.reserve(table.row_width() * table.row_count());
    for (r, row) in table.rows.iter().enumerate() {
        if row.len() != table.columns.len() {
            return Err(FitsError::InvalidHeader(format!(
                "row {r} has {} cells for {} columns",
                row.len(),
                table.columns.len()
            )));
        }
        for (cell, col) in row.iter().zip(&table.columns) {
            if !cell.matches(col.form) {
                return Err(FitsError::BadCell {
                    column: col.name.clone(),
                    reason: format!("row {r}: cell {cell:?} does not match {}", col.form.tform()),
                });
            }
            match cell {
                Cell::Int32(v) => out.extend_from_slice(&v.to_be_bytes()),
                Cell::Int64(v) => out.extend_from_slice(&v.to_be_bytes()),
                Cell::Float32(v) => out.extend_from_slice(&v.to_be_bytes()),
                Cell::Float64(v) => out.extend_from_slice(&v.to_be_bytes()),
                Cell::Text(s) => {
                    let width = col.form.width();
                    if s.len() > width {
                        return Err(FitsError::WidthOverflow {
                            column: col.name.clone(),
                            width,
                            len: s.len(),
                        });
                    }
                    if !s.bytes().all(|b| (0x20..=0x7e).contains(&b)) {
                        return Err(FitsError::BadCell {
                            column: col.name.clone(),
                            reason: format!("row {r}: non-ASCII string"),
                        });
                    }
                    out.extend_from_slice(s.as_bytes());
                    out.resize(out.len() + width - s.len(), b' ');
                }
            }
        }
    }
    Ok(())
}

fn write_header(header: &FitsHeader, out: &mut Vec<u8>) -> Result<(), FitsError> {
    let start = out.len();
    for card in &header.cards {
        for line in format_card(card)? {
            debug_assert_eq!(line.len(), CARD_SIZE);
            out.extend_from_slice(line.as_bytes());
        }
    }
    out.extend_from_slice(format!("{:<80}", "END").as_bytes());
    let len = out.len() - start;
    out.resize(start + padded_len(len), b' ');
    Ok(())
}

fn valid_keyword(kw: &str) -> bool {
    (1..=8).contains(&kw.len())
        && kw
            .bytes()
            .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
}

fn printable(s: &str) -> bool {
    s.bytes().all(|b| (0x20..=0x7e).contains(&b))
}

/// Renders one logical card as one or more 80-byte physical cards.
pub(crate) fn format_card(card: &Card) -> Result<Vec<String>, FitsError> {
    let invalid = |msg: &str| FitsError::InvalidHeader(format!("card {}: {msg}", card.keyword));
    if matches!(card.keyword.as_str(), "END" | "CONTINUE") {
        return Err(invalid("reserved keyword"));
    }
    let comment = card.comment.as_deref().unwrap_or("");
    if !printable(comment) {
        return Err(invalid("comment is not printable ASCII"));
    }
    let Some(value) = &card.value else {
        if !(card.keyword.is_empty() || valid_keyword(&card.keyword)) {
            return Err(invalid("keyword must match [A-Z0-9_-]{1,8}"));
        }
        if comment.len() > 72 {
            return Err(invalid("commentary text longer than 72 characters"));
        }
        return Ok(vec![format!("{:<8}{:<72}", card.keyword, comment)]);
    };
    if !valid_keyword(&card.keyword) {
        return Err(invalid("keyword must match [A-Z0-9_-]{1,8}"));
    }
    if matches!(card.keyword.as_str(), "COMMENT" | "HISTORY") {
        return Err(invalid("commentary keyword cannot carry a value"));
    }
    let head = format!("{:<8}= ", card.keyword);
    let mut lines = Vec::new();
    let body = match value {
        Value::Text(s) => {
            if !printable(s) {
                return Err(invalid("string value is not printable ASCII"));
            }
            let mut chunks = split_string(s);
            let tail = chunks.last().map_or(0, |c| c.len().max(8));
            if !comment.is_empty() && 10 + tail + 2 + 3 + comment.len() > CARD_SIZE {
                // Leave room for the comment on a final empty CONTINUE card.
                let last = chunks.last_mut().expect("at least one chunk");
                if last.len() > MAX_CHUNK {
                    let cut = last.len() - if last.ends_with('\'') { 2 } else { 1 };
                    let rest = last.split_off(cut);
                    chunks.push(rest);
                }
                chunks.push(String::new());
            }
            let last = chunks.len() - 1;
            for (i, chunk) in chunks.into_iter().enumerate() {
                let prefix = if i == 0 { head.clone() } else { "CONTINUE  ".to_owned() };
                if i < last {
                    lines.push(format!("{:<80}", format!("{prefix}'{chunk}&'")));
                } else {
                    lines.push(format!("{prefix}'{chunk:<8}'"));
                }
            }
            lines.pop().expect("at least one chunk")
        }
        Value::Integer(v) => format!("{head}{v:>20}"),
        Value::Logical(b) => format!("{head}{:>20}", if *b { "T" } else { "F" }),
        Value::Real(v) => {
            if !v.is_finite() {
                return Err(invalid("non-finite real value"));
            }
            format!("{head}{:>20}", format_real(*v))
        }
        Value::Undefined => head,
    };
    let body = if comment.is_empty() {
        body
    } else {
        format!("{body} / {comment}")
    };
    if body.len() > CARD_SIZE {
        return Err(invalid("card longer than 80 bytes"));
    }
    lines.push(format!("{body:<80}"));
    for l in &lines {
        if l.len() != CARD_SIZE {
            return Err(invalid("card longer than 80 bytes"));
        }
    }
    Ok(lines)
}

/// Escapes quotes and splits into chunks that fit a card; the last chunk
/// never exceeds the inline limit and a doubled quote is never split.
fn split_string(s: &str) -> Vec<String> {
    let escaped = s.replace('\'', "''");
    if escaped.len() <= MAX_INLINE_STRING {
        return vec![escaped];
    }
    let mut chunks = Vec::new();
    let mut current = String::new();
    for c in s.chars() {
        let add = if c == '\'' { 2 } else { 1 };
        if current.len() + add > MAX_CHUNK {
            chunks.push(std::mem::take(&mut current));
        }
        if c == '\'' {
            current.push_str("''");
        } else {
            current.push(c);
        }
    }
    if !current.is_empty() {
        chunks.push(current);
    }
    chunks
}

/// Shortest representation that parses back to the same `f64`, with an
/// uppercase exponent and a decimal point or exponent always present.
pub fn format_real(v: f64) -> String {
    let s = format!("{v:?}").to_uppercase();
    if s.contains('.') || s.contains('E') {
        s
    } else {
        format!("{s}.0")
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Integer(v) => write!(f, "{v}"),
            Value::Real(v) => f.write_str(&format_real(*v)),
            Value::Logical(b) => f.write_str(if *b { "T" } else { "F" }),
            Value::Text(s) => write!(f, "'{}'", s.replace('\'', "''")),
            Value::Undefined => Ok(()),
        }
    }
}

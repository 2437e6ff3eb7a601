//! VOTable 1.4 (TABLEDATA) and CSV renderings of query results.

use std::fmt::Write as _;

use crate::obscore::{ColumnDef, Datatype, FieldValue};

pub const VOTABLE_CONTENT_TYPE: &str = "application/x-votable+xml";
pub const CSV_CONTENT_TYPE: &str = "text/csv";
const VOTABLE_NS: &str = "http://www.ivoa.net/xml/VOTable/v1.3";

/// Escapes XML markup characters. Characters that XML 1.0 cannot carry at
/// all (most C0 controls) become U+FFFD so the document stays well-formed.
pub fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\t' | '\n' | '\r' => out.push(c),
            c if (c as u32) < 0x20 || c == '\u{FFFE}' || c == '\u{FFFF}' => out.push('\u{FFFD}'),
            c => out.push(c),
        }
    }
    out
}

/// Shortest text that parses back to the same f64 (Rust's `{:?}` form,
/// e.g. `53000.0`, `1.23984193e-20`); non-finite values use the VOTable
/// spellings `NaN`, `+Inf`, `-Inf`.
pub fn format_double(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "+Inf" } else { "-Inf" }.into()
    } else {
        format!("{v:?}")
    }
}

fn cell_text(v: &FieldValue) -> String {
    match v {
        FieldValue::Null => String::new(),
        FieldValue::Int(i) => i.to_string(),
        FieldValue::Double(d) => format_double(*d),
        FieldValue::Text(s) => s.clone(),
    }
}

fn header(out: &mut String) {
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(out, "<VOTABLE version=\"1.4\" xmlns=\"{VOTABLE_NS}\">");
    out.push_str("<RESOURCE type=\"results\">\n");
}

fn footer(out: &mut String) {
    out.push_str("</RESOURCE>\n</VOTABLE>\n");
}

/// Result document. With `overflow` a second QUERY_STATUS INFO with value
/// OVERFLOW follows the table, as TAP prescribes.
pub fn write_votable(columns: &[ColumnDef], rows: &[Vec<FieldValue>], overflow: bool) -> Vec<u8> {
    let mut out = String::new();
    header(&mut out);
    out.push_str("<INFO name=\"QUERY_STATUS\" value=\"OK\"/>\n");
    out.push_str("<TABLE>\n");
    for c in columns {
        let _ = write!(out, "<FIELD name=\"{}\" datatype=\"{}\"", escape_xml(c.name), c.datatype.as_votable());
        if c.datatype == Datatype::Char {
            out.push_str(" arraysize=\"*\"");
        }
        if let Some(u) = c.unit {
            let _ = write!(out, " unit=\"{}\"", escape_xml(u));
        }
        let _ = writeln!(
            out,
            " ucd=\"{}\"><DESCRIPTION>{}</DESCRIPTION></FIELD>",
            escape_xml(c.ucd),
            escape_xml(c.description)
        );
    }
    out.push_str("<DATA><TABLEDATA>\n");
    for row in rows {
        out.push_str("<TR>");
        for v in row {
            if v.is_null() {
                out.push_str("<TD/>");
            } else {
                let _ = write!(out, "<TD>{}</TD>", escape_xml(&cell_text(v)));
            }
        }
        out.push_str("</TR>\n");
    }
    out.push_str("</TABLEDATA></DATA>\n</TABLE>\n");
    if overflow {
        out.push_str("<INFO name=\"QUERY_STATUS\" value=\"OVERFLOW\"/>\n");
    }
    footer(&mut out);
    out.into_bytes()
}

/// TAP error document: QUERY_STATUS ERROR with the message as element text.
pub fn error_votable(message: &str) -> Vec<u8> {
    let mut out = String::new();
    header(&mut out);
    let _ = writeln!(out, "<INFO name=\"QUERY_STATUS\" value=\"ERROR\">{}</INFO>", escape_xml(message));
    footer(&mut out);
    out.into_bytes()
}

/// RFC 4180 CSV with a header line of column names; NULL is an empty field.
pub fn write_csv(columns: &[ColumnDef], rows: &[Vec<FieldValue>]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    w.write_record(columns.iter().map(|c| c.name))
        .expect("writing to memory");
    for row in rows {
        w.write_record(row.iter().map(cell_text)).expect("writing to memory");
    }
    w.into_inner().expect("flush to memory")
}

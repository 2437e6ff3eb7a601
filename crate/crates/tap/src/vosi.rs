//! VOSI metadata documents and the registry record.

use std::fmt::Write as _;

use thiserror::Error;

use gammagate_core::gateway::DEFAULT_MAXREC;
use gammagate_core::obscore::{Datatype, COLUMNS, TABLE_NAME};
use gammagate_core::votable::escape_xml;

const XSI: &str = "http://www.w3.org/2001/XMLSchema-instance";
const VR: &str = "http://www.ivoa.net/xml/VOResource/v1.0";
const VS: &str = "http://www.ivoa.net/xml/VODataService/v1.1";
const TR: &str = "http://www.ivoa.net/xml/TAPRegExt/v1.0";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

fn prolog() -> String {
    "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n".to_owned()
}

pub fn availability() -> Vec<u8> {
    let mut out = prolog();
    out.push_str("<availability xmlns=\"http://www.ivoa.net/xml/VOSIAvailability/v1.0\">");
    out.push_str("<available>true</available>");
    out.push_str("<note>service is accepting queries</note></availability>\n");
    out.into_bytes()
}

fn sync_url(base_url: &str) -> String {
    format!("{}/sync", base_url.trim_end_matches('/'))
}

fn vosi_capability(out: &mut String, standard: &str, url: String) {
    let _ = writeln!(
        out,
        "<capability standardID=\"{standard}\"><interface xsi:type=\"vs:ParamHTTP\"><accessURL use=\"full\">{}</accessURL></interface></capability>",
        escape_xml(&url)
    );
}

/// Lists TAP (sync only) with its row limits, plus the VOSI endpoints.
pub fn capabilities(base_url: &str) -> Vec<u8> {
    let base = base_url.trim_end_matches('/');
    let mut out = prolog();
    let _ = writeln!(
        out,
        "<vosi:capabilities xmlns:vosi=\"http://www.ivoa.net/xml/VOSICapabilities/v1.0\" xmlns:xsi=\"{XSI}\" xmlns:vs=\"{VS}\" xmlns:tr=\"{TR}\">"
    );
    out.push_str("<capability standardID=\"ivo://ivoa.net/std/TAP\" xsi:type=\"tr:TableAccess\">\n");
    let _ = writeln!(
        out,
        "<interface xsi:type=\"vs:ParamHTTP\" role=\"std\"><accessURL use=\"base\">{}</accessURL></interface>",
        escape_xml(&sync_url(base))
    );
    out.push_str("<language><name>ADQL</name><version ivo-id=\"ivo://ivoa.net/std/ADQL#v2.0\">2.0</version>");
    out.push_str("<description>Subset: single-table SELECT with WHERE, ORDER BY, TOP, CONTAINS/POINT/CIRCLE (ICRS), BETWEEN, LIKE, IS NULL</description></language>\n");
    out.push_str("<outputFormat><mime>application/x-votable+xml</mime><alias>votable</alias></outputFormat>\n");
    out.push_str("<outputFormat><mime>text/csv</mime><alias>csv</alias></outputFormat>\n");
    let _ = writeln!(
        out,
        "<outputLimit><default unit=\"row\">{DEFAULT_MAXREC}</default></outputLimit>"
    );
    out.push_str("</capability>\n");
    vosi_capability(&mut out, "ivo://ivoa.net/std/VOSI#availability", format!("{base}/availability"));
    vosi_capability(&mut out, "ivo://ivoa.net/std/VOSI#capabilities", format!("{base}/capabilities"));
    vosi_capability(&mut out, "ivo://ivoa.net/std/VOSI#tables", format!("{base}/tables"));
    out.push_str("</vosi:capabilities>\n");
    out.into_bytes()
}

pub fn tables() -> Vec<u8> {
    let mut out = prolog();
    let _ = writeln!(
        out,
        "<vosi:tableset xmlns:vosi=\"http://www.ivoa.net/xml/VOSITables/v1.0\" xmlns:xsi=\"{XSI}\" xmlns:vs=\"{VS}\">"
    );
    out.push_str("<schema><name>ivoa</name><description>IVOA data models</description>\n");
    let _ = writeln!(
        out,
        "<table type=\"output\"><name>{TABLE_NAME}</name><description>ObsCore observations (DL3 event lists)</description>"
    );
    for c in COLUMNS {
        let _ = write!(
            out,
            "<column><name>{}</name><description>{}</description>",
            escape_xml(c.name),
            escape_xml(c.description)
        );
        if let Some(u) = c.unit {
            let _ = write!(out, "<unit>{}</unit>", escape_xml(u));
        }
        let _ = write!(out, "<ucd>{}</ucd>", escape_xml(c.ucd));
        let arraysize = if c.datatype == Datatype::Char { " arraysize=\"*\"" } else { "" };
        let _ = writeln!(
            out,
            "<dataType xsi:type=\"vs:VOTableType\"{arraysize}>{}</dataType></column>",
            c.datatype.as_votable()
        );
    }
    out.push_str("</table>\n</schema>\n</vosi:tableset>\n");
    out.into_bytes()
}

/// Minimal VOResource record for a TAP service `ivo://{authority}/tap`.
pub fn registry_record(authority: &str, title: &str, base_url: &str) -> Result<Vec<u8>, RegistryError> {
    let bad = |m: &str| Err(RegistryError::InvalidConfig(m.into()));
    if title.trim().is_empty() {
        return bad("empty title");
    }
    if authority.trim().is_empty() {
        return bad("empty authority");
    }
    if authority.chars().any(|c| c.is_whitespace() || c.is_control() || matches!(c, '/' | '#' | '?')) {
        return bad("authority must not contain whitespace, '/', '#' or '?'");
    }
    if base_url.trim().is_empty() {
        return bad("empty base URL");
    }
    let mut out = prolog();
    let _ = writeln!(
        out,
        "<ri:Resource xmlns:ri=\"http://www.ivoa.net/xml/RegistryInterface/v1.0\" xmlns:vr=\"{VR}\" xmlns:vs=\"{VS}\" xmlns:xsi=\"{XSI}\" xsi:type=\"vs:CatalogService\" status=\"active\">"
    );
    let _ = writeln!(out, "<title>{}</title>", escape_xml(title));
    let _ = writeln!(out, "<identifier>ivo://{}/tap</identifier>", escape_xml(authority));
    let _ = writeln!(out, "<curation><publisher>{}</publisher></curation>", escape_xml(authority));
    let _ = writeln!(
        out,
        "<content><subject>gamma-ray astronomy</subject><description>ObsTAP service over DL3 event lists</description><referenceURL>{}</referenceURL><type>Catalog</type></content>",
        escape_xml(base_url)
    );
    let _ = writeln!(
        out,
        "<capability standardID=\"ivo://ivoa.net/std/TAP\"><interface xsi:type=\"vs:ParamHTTP\" role=\"std\"><accessURL use=\"base\">{}</accessURL></interface></capability>",
        escape_xml(&sync_url(base_url))
    );
    out.push_str("</ri:Resource>\n");
    Ok(out.into_bytes())
}

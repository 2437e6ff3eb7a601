//! TAP sync request parameters.

use thiserror::Error;

use gammagate_core::gateway::DEFAULT_MAXREC;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    VoTable,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TapRequest {
    pub query: String,
    pub format: Format,
    pub maxrec: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamError {
    #[error("missing parameter {0}")]
    MissingParam(&'static str),
    #[error("parameter {0} given more than once")]
    Repeated(String),
    #[error("REQUEST={0} not supported; only doQuery")]
    BadRequest(String),
    #[error("LANG={0} not supported; only ADQL")]
    BadLang(String),
    #[error("FORMAT={0} not supported; use votable or csv")]
    BadFormat(String),
    #[error("MAXREC={0} is not a non-negative integer")]
    BadMaxrec(String),
}

fn parse_format(v: &str) -> Option<Format> {
    match v.to_ascii_lowercase().as_str() {
        "votable" | "application/x-votable+xml" | "text/xml" => Some(Format::VoTable),
        "csv" | "text/csv" => Some(Format::Csv),
        _ => None,
    }
}

/// Names are case-insensitive. REQUEST, LANG and FORMAT values are too;
/// QUERY is taken verbatim. RESPONSEFORMAT is accepted as FORMAT.
pub fn parse_params(pairs: &[(String, String)]) -> Result<TapRequest, ParamError> {
    let mut request = None;
    let mut lang = None;
    let mut query = None;
    let mut format = None;
    let mut maxrec = None;
    for (k, v) in pairs {
        let slot = match k.to_ascii_uppercase().as_str() {
            "REQUEST" => &mut request,
            "LANG" => &mut lang,
            "QUERY" => &mut query,
            "FORMAT" | "RESPONSEFORMAT" => &mut format,
            "MAXREC" => &mut maxrec,
            _ => continue,
        };
        if slot.replace(v.as_str()).is_some() {
            return Err(ParamError::Repeated(k.to_ascii_uppercase()));
        }
    }
    let request = request.ok_or(ParamError::MissingParam("REQUEST"))?;
    if !request.eq_ignore_ascii_case("doQuery") {
        return Err(ParamError::BadRequest(request.into()));
    }
    let lang = lang.ok_or(ParamError::MissingParam("LANG"))?;
    if !lang.eq_ignore_ascii_case("ADQL") {
        return Err(ParamError::BadLang(lang.into()));
    }
    let query = query.ok_or(ParamError::MissingParam("QUERY"))?;
    let format = match format {
        None => Format::VoTable,
        Some(f) => parse_format(f).ok_or_else(|| ParamError::BadFormat(f.into()))?,
    };
    let maxrec = match maxrec {
        None => DEFAULT_MAXREC,
        Some(m) => m.trim().parse().map_err(|_| ParamError::BadMaxrec(m.into()))?,
    };
    Ok(TapRequest {
        query: query.into(),
        format,
        maxrec,
    })
}

/// Form-encoded pairs from a query string and, for form posts, the body.
pub fn collect_pairs(query: Option<&str>, body: &[u8]) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = query
        .map(|q| form_urlencoded::parse(q.as_bytes()).into_owned().collect())
        .unwrap_or_default();
    out.extend(form_urlencoded::parse(body).into_owned());
    out
}

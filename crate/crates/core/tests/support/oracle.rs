//! Brute-force reference implementations, written without reference to the
//! library's own evaluation code.

use std::cmp::Ordering;

use gammagate_core::adql::{AdqlQuery, CmpOp, Expr, Operand, Selection};
use gammagate_core::obscore::{FieldValue, ObsCoreRecord, COLUMNS};

/// Spherical law of cosines.
pub fn arccos_separation(ra1: f64, dec1: f64, ra2: f64, dec2: f64) -> f64 {
    let (a1, d1, a2, d2) = (ra1.to_radians(), dec1.to_radians(), ra2.to_radians(), dec2.to_radians());
    let c = d1.sin() * d2.sin() + d1.cos() * d2.cos() * (a1 - a2).cos();
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Vincenty's atan2 form, accurate at all separations.
pub fn vincenty_separation(ra1: f64, dec1: f64, ra2: f64, dec2: f64) -> f64 {
    let (a1, d1, a2, d2) = (ra1.to_radians(), dec1.to_radians(), ra2.to_radians(), dec2.to_radians());
    let dra = a2 - a1;
    let x = d2.cos() * dra.sin();
    let y = d1.cos() * d2.sin() - d1.sin() * d2.cos() * dra.cos();
    let z = d1.sin() * d2.sin() + d1.cos() * d2.cos() * dra.cos();
    x.hypot(y).atan2(z).to_degrees()
}

fn index(name: &str) -> usize {
    COLUMNS
        .iter()
        .position(|c| c.name.eq_ignore_ascii_case(name))
        .unwrap_or_else(|| panic!("generated unknown column {name}"))
}

#[derive(Debug, Clone)]
enum V {
    Null,
    N(f64),
    S(String),
}

fn value(r: &ObsCoreRecord, op: &Operand) -> V {
    match op {
        Operand::Number(n) => V::N(*n),
        Operand::Str(s) => V::S(s.clone()),
        Operand::Column(c) => match r.field(index(c)) {
            FieldValue::Null => V::Null,
            FieldValue::Int(i) => V::N(i as f64),
            FieldValue::Double(d) => V::N(d),
            FieldValue::Text(s) => V::S(s),
        },
    }
}

fn cmp(op: CmpOp, o: Ordering) -> bool {
    match op {
        CmpOp::Eq => o == Ordering::Equal,
        CmpOp::Ne => o != Ordering::Equal,
        CmpOp::Lt => o == Ordering::Less,
        CmpOp::Le => o != Ordering::Greater,
        CmpOp::Gt => o == Ordering::Greater,
        CmpOp::Ge => o != Ordering::Less,
    }
}

fn order(a: &V, b: &V) -> Option<Ordering> {
    match (a, b) {
        (V::N(x), V::N(y)) => x.partial_cmp(y),
        (V::S(x), V::S(y)) => Some(x.as_bytes().cmp(y.as_bytes())),
        _ => None,
    }
}

thread_local! {
    static LIKE_CACHE: std::cell::RefCell<std::collections::HashMap<String, regex::Regex>> = Default::default();
}

/// `%` and `_` wildcards by way of an anchored regular expression.
pub fn like(text: &str, pattern: &str) -> bool {
    LIKE_CACHE.with(|c| {
        c.borrow_mut()
            .entry(pattern.to_owned())
            .or_insert_with(|| like_regex(pattern))
            .is_match(text)
    })
}

fn like_regex(pattern: &str) -> regex::Regex {
    let mut re = String::from("(?s)^");
    for c in pattern.chars() {
        match c {
            '%' => re.push_str(".*"),
            '_' => re.push('.'),
            c => re.push_str(&regex::escape(&c.to_string())),
        }
    }
    re.push('$');
    regex::Regex::new(&re).unwrap()
}

/// Two-valued: any NULL operand makes a predicate false.
pub fn matches(r: &ObsCoreRecord, e: &Expr) -> bool {
    match e {
        Expr::And(a, b) => matches(r, a) && matches(r, b),
        Expr::Or(a, b) => matches(r, a) || matches(r, b),
        Expr::Not(a) => !matches(r, a),
        Expr::Compare { lhs, op, rhs } => order(&value(r, lhs), &value(r, rhs)).is_some_and(|o| cmp(*op, o)),
        Expr::Between { expr, lo, hi } => {
            let v = value(r, expr);
            match (order(&value(r, lo), &v), order(&v, &value(r, hi))) {
                (Some(a), Some(b)) => a != Ordering::Greater && b != Ordering::Greater,
                _ => false,
            }
        }
        Expr::Like { column, pattern } => match value(r, &Operand::Column(column.clone())) {
            V::S(s) => like(&s, pattern),
            _ => false,
        },
        Expr::IsNull { column } => matches!(value(r, &Operand::Column(column.clone())), V::Null),
        Expr::Contains { point, circle, inside } => {
            let nums: Vec<Option<f64>> = point
                .iter()
                .chain(circle)
                .map(|o| match value(r, o) {
                    V::N(x) => Some(x),
                    _ => None,
                })
                .collect();
            let [Some(pa), Some(pd), Some(ca), Some(cd), Some(rad)] = nums[..] else {
                return false;
            };
            let ok = |d: f64| (-90.0..=90.0).contains(&d);
            if !ok(pd) || !ok(cd) || rad.is_nan() || rad < 0.0 {
                return false;
            }
            (vincenty_separation(pa, pd, ca, cd) <= rad) == *inside
        }
    }
}

/// Rows of `query` over `records` (already in catalog order), plus the
/// overflow flag.
pub fn run(query: &AdqlQuery, records: &[ObsCoreRecord], maxrec: Option<usize>) -> (Vec<Vec<FieldValue>>, bool) {
    let mut hits: Vec<&ObsCoreRecord> = records
        .iter()
        .filter(|r| query.where_clause.as_ref().is_none_or(|w| matches(r, w)))
        .collect();
    if let Some(o) = &query.order_by {
        let i = index(&o.column);
        hits.sort_by(|a, b| {
            let (a, b) = (a.field(i), b.field(i));
            match (a.is_null(), b.is_null()) {
                (true, true) => Ordering::Equal,
                (true, false) => Ordering::Greater,
                (false, true) => Ordering::Less,
                _ => {
                    let ord = order(&to_v(a), &to_v(b)).unwrap();
                    if o.ascending { ord } else { ord.reverse() }
                }
            }
        });
    }
    if let Some(t) = query.top {
        hits.truncate(t as usize);
    }
    let mut overflow = false;
    if let Some(m) = maxrec {
        overflow = hits.len() > m;
        hits.truncate(m);
    }
    let proj: Vec<usize> = match &query.columns {
        Selection::All => (0..COLUMNS.len()).collect(),
        Selection::Columns(c) => c.iter().map(|n| index(n)).collect(),
    };
    (hits.iter().map(|r| proj.iter().map(|&i| r.field(i)).collect()).collect(), overflow)
}

fn to_v(f: FieldValue) -> V {
    match f {
        FieldValue::Null => V::Null,
        FieldValue::Int(i) => V::N(i as f64),
        FieldValue::Double(d) => V::N(d),
        FieldValue::Text(s) => V::S(s),
    }
}

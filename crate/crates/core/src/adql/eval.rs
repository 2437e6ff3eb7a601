use std::cmp::Ordering;

use super::ast::{AdqlQuery, CmpOp, Expr, Operand, Selection};
use super::AdqlError;
use crate::geometry::haversine_deg;
use crate::obscore::{column_index, Catalog, ColumnDef, FieldRef, FieldValue, ObsCoreRecord, COLUMNS, TABLE_NAME};

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub columns: Vec<ColumnDef>,
    pub rows: Vec<Vec<FieldValue>>,
    /// True when MAXREC cut the result short.
    pub overflow: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Num,
    Text,
}

#[derive(Debug, Clone)]
enum Val {
    Col(usize),
    Num(f64),
    Str(String),
}

impl Val {
    fn num(&self, r: &ObsCoreRecord) -> Option<f64> {
        match self {
            Val::Col(i) => match r.field_ref(*i) {
                FieldRef::Num(v) => Some(v),
                _ => None,
            },
            Val::Num(v) => Some(*v),
            Val::Str(_) => None,
        }
    }

    fn text<'a>(&'a self, r: &'a ObsCoreRecord) -> Option<&'a str> {
        match self {
            Val::Col(i) => match r.field_ref(*i) {
                FieldRef::Text(s) => Some(s),
                _ => None,
            },
            Val::Str(s) => Some(s),
            Val::Num(_) => None,
        }
    }
}

/// Type-checked predicate with columns resolved to indices.
enum Pred {
    And(Box<Pred>, Box<Pred>),
    Or(Box<Pred>, Box<Pred>),
    Not(Box<Pred>),
    Cmp(Class, Val, CmpOp, Val),
    Between(Class, Val, Val, Val),
    Like(usize, Vec<char>),
    IsNull(usize),
    Contains([Val; 5], bool),
}

fn resolve(name: &str) -> Result<usize, AdqlError> {
    column_index(name).ok_or_else(|| AdqlError::UnknownColumn(name.to_owned()))
}

fn compile_operand(op: &Operand) -> Result<(Class, Val), AdqlError> {
    Ok(match op {
        Operand::Column(name) => {
            let i = resolve(name)?;
            let class = if COLUMNS[i].datatype.is_numeric() {
                Class::Num
            } else {
                Class::Text
            };
            (class, Val::Col(i))
        }
        Operand::Number(v) => (Class::Num, Val::Num(*v)),
        Operand::Str(s) => (Class::Text, Val::Str(s.clone())),
    })
}

fn class_name(c: Class) -> &'static str {
    match c {
        Class::Num => "numeric",
        Class::Text => "string",
    }
}

fn compile(e: &Expr) -> Result<Pred, AdqlError> {
    Ok(match e {
        Expr::And(a, b) => Pred::And(Box::new(compile(a)?), Box::new(compile(b)?)),
        Expr::Or(a, b) => Pred::Or(Box::new(compile(a)?), Box::new(compile(b)?)),
        Expr::Not(a) => Pred::Not(Box::new(compile(a)?)),
        Expr::Compare { lhs, op, rhs } => {
            let (ca, a) = compile_operand(lhs)?;
            let (cb, b) = compile_operand(rhs)?;
            if ca != cb {
                return Err(AdqlError::TypeMismatch(format!(
                    "cannot compare {} {lhs} with {} {rhs}",
                    class_name(ca),
                    class_name(cb)
                )));
            }
            Pred::Cmp(ca, a, *op, b)
        }
        Expr::Between { expr, lo, hi } => {
            let (c, v) = compile_operand(expr)?;
            let (cl, l) = compile_operand(lo)?;
            let (ch, h) = compile_operand(hi)?;
            if cl != c || ch != c {
                return Err(AdqlError::TypeMismatch(format!(
                    "BETWEEN bounds of {expr} must be {}",
                    class_name(c)
                )));
            }
            Pred::Between(c, v, l, h)
        }
        Expr::Like { column, pattern } => {
            let i = resolve(column)?;
            if COLUMNS[i].datatype.is_numeric() {
                return Err(AdqlError::TypeMismatch(format!("LIKE on numeric column {column}")));
            }
            Pred::Like(i, pattern.chars().collect())
        }
        Expr::IsNull { column } => Pred::IsNull(resolve(column)?),
        Expr::Contains { point, circle, inside } => {
            let mut vals = Vec::with_capacity(5);
            for op in point.iter().chain(circle) {
                let (c, v) = compile_operand(op)?;
                if c != Class::Num {
                    return Err(AdqlError::TypeMismatch(format!(
                        "CONTAINS argument {op} is not numeric"
                    )));
                }
                vals.push(v);
            }
            if let Val::Num(d) = vals[3] {
                if !(-90.0..=90.0).contains(&d) {
                    return Err(AdqlError::Domain(format!("circle centre dec {d} outside [-90, 90]")));
                }
            }
            if let Val::Num(r) = vals[4] {
                if !(r >= 0.0 && r.is_finite()) {
                    return Err(AdqlError::Domain(format!("circle radius {r} must be >= 0")));
                }
            }
            let vals: [Val; 5] = vals.try_into().expect("five operands");
            Pred::Contains(vals, *inside)
        }
    })
}

/// Two-valued: a predicate with a NULL operand is false, and NOT simply
/// negates that.
fn eval(p: &Pred, r: &ObsCoreRecord) -> bool {
    match p {
        Pred::And(a, b) => eval(a, r) && eval(b, r),
        Pred::Or(a, b) => eval(a, r) || eval(b, r),
        Pred::Not(a) => !eval(a, r),
        _ => leaf(p, r).unwrap_or(false),
    }
}

/// `None` when an operand is NULL (or out of domain for CONTAINS).
fn leaf(p: &Pred, r: &ObsCoreRecord) -> Option<bool> {
    match p {
        Pred::And(..) | Pred::Or(..) | Pred::Not(..) => Some(eval(p, r)),
        Pred::Cmp(Class::Num, a, op, b) => Some(op.test(&a.num(r)?, &b.num(r)?)),
        Pred::Cmp(Class::Text, a, op, b) => Some(op.test(a.text(r)?, b.text(r)?)),
        Pred::Between(Class::Num, v, l, h) => {
            let (v, l, h) = (v.num(r)?, l.num(r)?, h.num(r)?);
            Some(l <= v && v <= h)
        }
        Pred::Between(Class::Text, v, l, h) => {
            let (v, l, h) = (v.text(r)?, l.text(r)?, h.text(r)?);
            Some(l <= v && v <= h)
        }
        Pred::Like(i, pat) => match r.field_ref(*i) {
            FieldRef::Text(s) => Some(like_chars(&s.chars().collect::<Vec<_>>(), pat)),
            _ => None,
        },
        Pred::IsNull(i) => Some(matches!(r.field_ref(*i), FieldRef::Null)),
        Pred::Contains([pa, pd, ca, cd, rad], inside) => {
            let (pa, pd, ca, cd, rad) = (pa.num(r)?, pd.num(r)?, ca.num(r)?, cd.num(r)?, rad.num(r)?);
            let valid = |ra: f64, dec: f64| ra.is_finite() && (-90.0..=90.0).contains(&dec);
            if !valid(pa, pd) || !valid(ca, cd) || !(rad >= 0.0) {
                return None;
            }
            Some((haversine_deg(pa, pd, ca, cd) <= rad) == *inside)
        }
    }
}

/// SQL LIKE: `%` matches any run of characters, `_` exactly one. Case-sensitive,
/// no escape character.
pub fn like_match(text: &str, pattern: &str) -> bool {
    let t: Vec<char> = text.chars().collect();
    let p: Vec<char> = pattern.chars().collect();
    like_chars(&t, &p)
}

fn like_chars(t: &[char], p: &[char]) -> bool {
    // Greedy with backtracking to the most recent '%'; linear in practice.
    let (mut ti, mut pi) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && p[pi] == '%' {
            star = Some((pi, ti));
            pi += 1;
        } else if pi < p.len() && (p[pi] == '_' || p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '%')
}

fn order_key(a: FieldRef<'_>, b: FieldRef<'_>, ascending: bool) -> Ordering {
    let ord = match (a, b) {
        (FieldRef::Null, FieldRef::Null) => return Ordering::Equal,
        (FieldRef::Null, _) => return Ordering::Greater,
        (_, FieldRef::Null) => return Ordering::Less,
        (FieldRef::Num(x), FieldRef::Num(y)) => x.total_cmp(&y),
        (FieldRef::Text(x), FieldRef::Text(y)) => x.cmp(y),
        // A column has a single type.
        _ => Ordering::Equal,
    };
    if ascending {
        ord
    } else {
        ord.reverse()
    }
}

/// Runs `query` against the catalog. Row order is catalog (DID) order unless
/// ORDER BY is given; the sort is stable with NULLs last in both directions.
/// TOP is applied before MAXREC; `overflow` reports a MAXREC cut.
pub fn evaluate(query: &AdqlQuery, catalog: &Catalog, maxrec: Option<usize>) -> Result<QueryResult, AdqlError> {
    if !query.table.eq_ignore_ascii_case(TABLE_NAME) {
        return Err(AdqlError::UnknownTable(query.table.clone()));
    }
    let projection: Vec<usize> = match &query.columns {
        Selection::All => (0..COLUMNS.len()).collect(),
        Selection::Columns(names) => names.iter().map(|n| resolve(n)).collect::<Result<_, _>>()?,
    };
    let pred = query.where_clause.as_ref().map(compile).transpose()?;
    let order = query
        .order_by
        .as_ref()
        .map(|o| resolve(&o.column).map(|i| (i, o.ascending)))
        .transpose()?;

    let mut hits: Vec<&ObsCoreRecord> = catalog
        .records()
        .filter(|r| pred.as_ref().is_none_or(|p| eval(p, r)))
        .collect();
    if let Some((i, asc)) = order {
        hits.sort_by(|a, b| order_key(a.field_ref(i), b.field_ref(i), asc));
    }
    if let Some(top) = query.top {
        hits.truncate(usize::try_from(top).unwrap_or(usize::MAX));
    }
    let mut overflow = false;
    if let Some(m) = maxrec {
        if hits.len() > m {
            hits.truncate(m);
            overflow = true;
        }
    }
    Ok(QueryResult {
        columns: projection.iter().map(|&i| COLUMNS[i]).collect(),
        rows: hits
            .iter()
            .map(|r| projection.iter().map(|&i| r.field(i)).collect())
            .collect(),
        overflow,
    })
}

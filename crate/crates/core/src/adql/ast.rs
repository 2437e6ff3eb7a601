use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct AdqlQuery {
    pub top: Option<u64>,
    pub columns: Selection,
    pub table: String,
    pub where_clause: Option<Expr>,
    pub order_by: Option<OrderBy>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    All,
    Columns(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderBy {
    pub column: String,
    pub ascending: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Column(String),
    Number(f64),
    Str(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn as_str(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn test<T: PartialOrd + ?Sized>(self, a: &T, b: &T) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Compare {
        lhs: Operand,
        op: CmpOp,
        rhs: Operand,
    },
    /// Inclusive on both ends.
    Between {
        expr: Operand,
        lo: Operand,
        hi: Operand,
    },
    Like {
        column: String,
        pattern: String,
    },
    IsNull {
        column: String,
    },
    /// `CONTAINS(POINT('ICRS', ra, dec), CIRCLE('ICRS', ra, dec, r)) = 1` (or `= 0`
    /// when `inside` is false).
    Contains {
        point: [Operand; 2],
        circle: [Operand; 3],
        inside: bool,
    },
}

impl Expr {
    pub fn and(a: Expr, b: Expr) -> Expr {
        Expr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Expr, b: Expr) -> Expr {
        Expr::Or(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Expr) -> Expr {
        Expr::Not(Box::new(a))
    }
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Column(c) => f.write_str(c),
            Operand::Number(n) => write!(f, "{n}"),
            Operand::Str(s) => f.write_str(&quote(s)),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::And(a, b) => write!(f, "({a}) AND ({b})"),
            Expr::Or(a, b) => write!(f, "({a}) OR ({b})"),
            Expr::Not(a) => write!(f, "NOT ({a})"),
            Expr::Compare { lhs, op, rhs } => write!(f, "{lhs} {} {rhs}", op.as_str()),
            Expr::Between { expr, lo, hi } => write!(f, "{expr} BETWEEN {lo} AND {hi}"),
            Expr::Like { column, pattern } => write!(f, "{column} LIKE {}", quote(pattern)),
            Expr::IsNull { column } => write!(f, "{column} IS NULL"),
            Expr::Contains {
                point: [pa, pd],
                circle: [ca, cd, r],
                inside,
            } => write!(
                f,
                "CONTAINS(POINT('ICRS', {pa}, {pd}), CIRCLE('ICRS', {ca}, {cd}, {r})) = {}",
                u8::from(*inside)
            ),
        }
    }
}

/// Canonical text; `parse` of this text yields an equal AST.
impl fmt::Display for AdqlQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        if let Some(n) = self.top {
            write!(f, "TOP {n} ")?;
        }
        match &self.columns {
            Selection::All => f.write_str("*")?,
            Selection::Columns(cols) => f.write_str(&cols.join(", "))?,
        }
        write!(f, " FROM {}", self.table)?;
        if let Some(w) = &self.where_clause {
            write!(f, " WHERE {w}")?;
        }
        if let Some(o) = &self.order_by {
            write!(
                f,
                " ORDER BY {} {}",
                o.column,
                if o.ascending { "ASC" } else { "DESC" }
            )?;
        }
        Ok(())
    }
}

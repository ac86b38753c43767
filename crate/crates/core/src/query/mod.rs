//! The query language: a select-project-aggregate subset of SQL over the
//! star (`FROM <fact>`) or over a single dimension (`FROM <dimension>`).
//!
//! ```text
//! query  := SELECT list FROM table [WHERE pred (AND pred)*] [GROUP BY qattr (',' qattr)*]
//! list   := '*' | item (',' item)*
//! item   := qattr | agg '(' measure ')'        agg := sum | avg | count | min | max
//! pred   := qattr op literal                   qattr := [table '.'] name
//! ```
//!
//! Names are resolved against the schema while parsing, so a [`Query`]
//! always holds canonical, fully qualified column references.

mod eval;
mod route;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexer::{syntax, tokenize, Token, TokenKind};
use crate::operator::Operator;
use crate::star_store::Dataset;
use crate::value::Value;

pub use eval::{evaluate, AnsweredFrom, QueryResult, Target};
pub use route::{route, Session};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    /// The fact table joined with its dimensions.
    Star,
    Dimension(String),
}

/// A resolved column: `table` is the fact name for measures.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColumnRef {
    pub table: String,
    pub name: String,
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Sum,
    Avg,
    Count,
    Min,
    Max,
}

impl Aggregate {
    pub const ALL: [Aggregate; 5] = [Aggregate::Sum, Aggregate::Avg, Aggregate::Count, Aggregate::Min, Aggregate::Max];

    pub fn as_str(self) -> &'static str {
        match self {
            Aggregate::Sum => "sum",
            Aggregate::Avg => "avg",
            Aggregate::Count => "count",
            Aggregate::Min => "min",
            Aggregate::Max => "max",
        }
    }

    fn from_keyword(s: &str) -> Option<Aggregate> {
        Aggregate::ALL.into_iter().find(|a| a.as_str().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SelectItem {
    Column(ColumnRef),
    Aggregate(Aggregate, ColumnRef),
}

impl SelectItem {
    /// Result column name: `Table.attr` for dimension attributes, the bare
    /// name for measures and `agg(measure)` for aggregates.
    pub fn label(&self, ds: &Dataset) -> String {
        match self {
            SelectItem::Column(c) => column_label(c, ds),
            SelectItem::Aggregate(a, c) => format!("{}({})", a.as_str(), c.name),
        }
    }
}

pub(crate) fn column_label(c: &ColumnRef, ds: &Dataset) -> String {
    if ds.is_fact(&c.table) {
        c.name.clone()
    } else {
        c.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Projection {
    All,
    Items(Vec<SelectItem>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predicate {
    pub column: ColumnRef,
    pub operator: Operator,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    /// Canonical name of the `FROM` table.
    pub table: String,
    pub source: Source,
    pub projection: Projection,
    pub predicates: Vec<Predicate>,
    pub group_by: Vec<ColumnRef>,
}

impl Query {
    pub fn has_aggregates(&self) -> bool {
        matches!(&self.projection, Projection::Items(items) if items.iter().any(|i| matches!(i, SelectItem::Aggregate(..))))
    }

    pub fn is_grouped(&self) -> bool {
        self.has_aggregates() || !self.group_by.is_empty()
    }

    /// The same query without its `WHERE` clause.
    pub fn without_predicates(&self) -> Query {
        Query {
            predicates: Vec::new(),
            ..self.clone()
        }
    }

    /// Enforces the structural rules on aggregates and grouping.
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        let aggregates = self.has_aggregates();
        if let Source::Dimension(dim) = &self.source {
            if aggregates || !self.group_by.is_empty() {
                return Err(Error::InvalidQuery(format!(
                    "aggregates and GROUP BY need the fact table `{}`, not dimension `{dim}`",
                    ds.fact.name
                )));
            }
        }
        if let Some(g) = self.group_by.iter().find(|g| ds.is_fact(&g.table)) {
            return Err(Error::InvalidQuery(format!("cannot group by measure `{}`", g.name)));
        }
        if let Projection::Items(items) = &self.projection {
            for item in items {
                if let SelectItem::Aggregate(a, c) = item {
                    if !ds.is_fact(&c.table) {
                        return Err(Error::InvalidQuery(format!(
                            "{}({c}): aggregates apply to measures only",
                            a.as_str()
                        )));
                    }
                }
            }
        }
        if self.is_grouped() {
            let Projection::Items(items) = &self.projection else {
                return Err(Error::InvalidQuery("SELECT * cannot be combined with GROUP BY".into()));
            };
            for item in items {
                if let SelectItem::Column(c) = item {
                    if !self.group_by.contains(c) {
                        return Err(Error::InvalidQuery(format!("`{c}` must appear in GROUP BY")));
                    }
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        match &self.projection {
            Projection::All => f.write_str("*")?,
            Projection::Items(items) => {
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    match item {
                        SelectItem::Column(c) => write!(f, "{c}")?,
                        SelectItem::Aggregate(a, c) => write!(f, "{}({c})", a.as_str())?,
                    }
                }
            }
        }
        write!(f, " FROM {}", self.table)?;
        for (i, p) in self.predicates.iter().enumerate() {
            f.write_str(if i == 0 { " WHERE " } else { " AND " })?;
            write!(f, "{} {} {}", p.column, p.operator, p.value.to_literal())?;
        }
        for (i, g) in self.group_by.iter().enumerate() {
            f.write_str(if i == 0 { " GROUP BY " } else { ", " })?;
            write!(f, "{g}")?;
        }
        Ok(())
    }
}

/// Parses `text` and resolves every name against `ds`.
pub fn parse_query(text: &str, ds: &Dataset) -> Result<Query> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, pos: 0 };

    p.keyword("SELECT")?;
    let raw_items = p.select_list()?;
    p.keyword("FROM")?;
    let (table_name, _) = p.ident("a table name")?;
    let (table, source) = if ds.is_fact(&table_name) {
        (ds.fact.name.clone(), Source::Star)
    } else if let Some(d) = ds.dimension_index(&table_name) {
        let name = ds.dimensions[d].name.clone();
        (name.clone(), Source::Dimension(name))
    } else {
        return Err(Error::UnknownTable(table_name));
    };
    let resolver = Resolver { ds, source: &source };

    let mut predicates = Vec::new();
    if p.peek_keyword("WHERE") {
        p.advance();
        loop {
            let column = p.qattr()?;
            let column = resolver.resolve(&column)?;
            let tok = p.advance();
            let operator = match tok.kind {
                TokenKind::Op(op) => op,
                _ => return Err(syntax(tok.position, "expected one of = != < <= > >=")),
            };
            let tok = p.advance();
            let value = match &tok.kind {
                TokenKind::Literal(v) => v.clone(),
                _ => return Err(syntax(tok.position, "expected a literal")),
            };
            predicates.push(Predicate { column, operator, value });
            if !p.peek_keyword("AND") {
                break;
            }
            p.advance();
        }
    }

    let mut group_by = Vec::new();
    if p.peek_keyword("GROUP") {
        p.advance();
        p.keyword("BY")?;
        loop {
            let column = p.qattr()?;
            group_by.push(resolver.resolve(&column)?);
            if p.peek().kind != TokenKind::Comma {
                break;
            }
            p.advance();
        }
    }
    if p.peek().kind == TokenKind::Semicolon {
        p.advance();
    }
    let end = p.advance();
    if end.kind != TokenKind::Eof {
        return Err(syntax(end.position, "unexpected trailing input"));
    }

    let projection = match raw_items {
        None => Projection::All,
        Some(items) => Projection::Items(
            items
                .into_iter()
                .map(|item| match item {
                    RawItem::Column(c) => resolver.resolve(&c).map(SelectItem::Column),
                    RawItem::Aggregate(a, c) => {
                        let column = resolver.resolve(&c)?;
                        if !ds.is_fact(&column.table) {
                            return Err(Error::InvalidQuery(format!(
                                "{}({column}): aggregates apply to measures only",
                                a.as_str()
                            )));
                        }
                        Ok(SelectItem::Aggregate(a, column))
                    }
                })
                .collect::<Result<_>>()?,
        ),
    };
    let query = Query {
        table,
        source,
        projection,
        predicates,
        group_by,
    };
    query.validate(ds)?;
    Ok(query)
}

/// An attribute reference as written: optional qualifier and name.
struct RawColumn {
    table: Option<String>,
    name: String,
}

enum RawItem {
    Column(RawColumn),
    Aggregate(Aggregate, RawColumn),
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, offset: usize) -> &Token {
        &self.tokens[(self.pos + offset).min(self.tokens.len() - 1)]
    }

    fn advance(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if tok.kind != TokenKind::Eof {
            self.pos += 1;
        }
        tok
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().kind, TokenKind::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn keyword(&mut self, kw: &str) -> Result<()> {
        if self.peek_keyword(kw) {
            self.advance();
            Ok(())
        } else {
            Err(syntax(self.peek().position, format!("expected {kw}")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize)> {
        let tok = self.advance();
        match tok.kind {
            TokenKind::Ident(s) => Ok((s, tok.position)),
            _ => Err(syntax(tok.position, format!("expected {what}"))),
        }
    }

    fn qattr(&mut self) -> Result<RawColumn> {
        let (first, _) = self.ident("an attribute")?;
        if self.peek().kind == TokenKind::Dot {
            self.advance();
            let (name, _) = self.ident("an attribute name after `.`")?;
            Ok(RawColumn { table: Some(first), name })
        } else {
            Ok(RawColumn { table: None, name: first })
        }
    }

    /// `None` for `*`.
    fn select_list(&mut self) -> Result<Option<Vec<RawItem>>> {
        if self.peek().kind == TokenKind::Star {
            self.advance();
            return Ok(None);
        }
        let mut items = Vec::new();
        loop {
            let aggregate = match (&self.peek().kind, &self.peek_at(1).kind) {
                (TokenKind::Ident(s), TokenKind::LParen) => Some(
                    Aggregate::from_keyword(s)
                        .ok_or_else(|| syntax(self.peek().position, format!("unknown aggregate `{s}`")))?,
                ),
                _ => None,
            };
            match aggregate {
                Some(a) => {
                    self.advance();
                    self.advance();
                    let column = self.qattr()?;
                    let close = self.advance();
                    if close.kind != TokenKind::RParen {
                        return Err(syntax(close.position, "expected `)`"));
                    }
                    items.push(RawItem::Aggregate(a, column));
                }
                None => items.push(RawItem::Column(self.qattr()?)),
            }
            if self.peek().kind != TokenKind::Comma {
                break;
            }
            self.advance();
        }
        Ok(Some(items))
    }
}

struct Resolver<'a> {
    ds: &'a Dataset,
    source: &'a Source,
}

impl Resolver<'_> {
    fn resolve(&self, raw: &RawColumn) -> Result<ColumnRef> {
        let ds = self.ds;
        match (self.source, &raw.table) {
            (Source::Dimension(dim), qualifier) => {
                if let Some(q) = qualifier {
                    if !q.eq_ignore_ascii_case(dim) {
                        return Err(Error::InvalidQuery(format!(
                            "`{q}.{}` is not an attribute of `{dim}`",
                            raw.name
                        )));
                    }
                }
                self.dimension_attribute(ds.dimension_index(dim).expect("resolved"), &raw.name)
            }
            (Source::Star, Some(q)) if ds.is_fact(q) => self.measure(&raw.name),
            (Source::Star, Some(q)) => {
                let d = ds.dimension_index(q).ok_or_else(|| Error::UnknownTable(q.clone()))?;
                if ds.fk_for_dimension(d).is_none() {
                    return Err(Error::InvalidQuery(format!(
                        "dimension `{}` is not joined to `{}`",
                        ds.dimensions[d].name, ds.fact.name
                    )));
                }
                self.dimension_attribute(d, &raw.name)
            }
            (Source::Star, None) => {
                if ds.fact.measure_index(&raw.name).is_some() {
                    return self.measure(&raw.name);
                }
                let candidates: Vec<usize> = (0..ds.dimensions.len())
                    .filter(|&d| ds.fk_for_dimension(d).is_some())
                    .filter(|&d| ds.dimensions[d].attribute_index(&raw.name).is_some())
                    .collect();
                match candidates.as_slice() {
                    [d] => self.dimension_attribute(*d, &raw.name),
                    [] => Err(Error::unknown_attribute(&ds.fact.name, &raw.name)),
                    _ => Err(Error::InvalidQuery(format!(
                        "`{}` is ambiguous; qualify it with a dimension name",
                        raw.name
                    ))),
                }
            }
        }
    }

    fn measure(&self, name: &str) -> Result<ColumnRef> {
        let fact = &self.ds.fact;
        let m = fact
            .measure_index(name)
            .ok_or_else(|| Error::unknown_attribute(&fact.name, name))?;
        Ok(ColumnRef {
            table: fact.name.clone(),
            name: fact.measures[m].name.clone(),
        })
    }

    fn dimension_attribute(&self, d: usize, name: &str) -> Result<ColumnRef> {
        let dim = &self.ds.dimensions[d];
        let a = dim
            .attribute_index(name)
            .ok_or_else(|| Error::unknown_attribute(&dim.name, name))?;
        Ok(ColumnRef {
            table: dim.name.clone(),
            name: dim.attributes[a].name.clone(),
        })
    }
}

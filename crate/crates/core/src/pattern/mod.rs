//! Pattern IR, predicate evaluation and rendering back to query text.

mod parse;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Event, Millis, Scalar};

pub use parse::parse_pattern;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Skip-till-next-match.
    #[default]
    Stnm,
    /// Skip-till-any-match.
    Stam,
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stnm" => Ok(Policy::Stnm),
            "stam" => Ok(Policy::Stam),
            other => Err(Error::Config(format!("unknown policy `{other}`"))),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Stnm => "stnm",
            Policy::Stam => "stam",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternElement {
    pub et: String,
    pub kleene: bool,
    pub alias: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn apply(self, lhs: &Scalar, rhs: &Scalar) -> bool {
        use std::cmp::Ordering::*;
        // mismatched kinds never satisfy a comparison, including `!=`
        let Some(ord) = lhs.partial_cmp_same_kind(rhs) else {
            return false;
        };
        match self {
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }
}

/// Which iteration of a Kleene binding an attribute reference addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttrIndex {
    /// `alias.attr`
    Plain,
    /// `alias[i].attr`
    Current,
    /// `alias[i+1].attr`
    Next,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttrRef {
    pub alias: String,
    pub index: AttrIndex,
    pub attr: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Attr(AttrRef),
    Literal(Scalar),
    /// A bare identifier such as `thresholdGas`, bound through `PatternSpec::params`.
    Param(String),
}

impl Operand {
    fn attr(&self) -> Option<&AttrRef> {
        match self {
            Operand::Attr(a) => Some(a),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredicateKind {
    /// `b[i] ⊙ b[i+1]` over consecutive iterations of one Kleene element.
    IterationAdjacent,
    /// Attributes of two different elements.
    CrossElement,
    /// One element against a literal or parameter (or itself).
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub kind: PredicateKind,
    pub lhs: Operand,
    pub op: CmpOp,
    pub rhs: Operand,
}

impl Predicate {
    /// Distinct aliases referenced, in order of appearance.
    pub fn aliases(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::with_capacity(2);
        for a in [self.lhs.attr(), self.rhs.attr()].into_iter().flatten() {
            if !out.contains(&a.alias.as_str()) {
                out.push(&a.alias);
            }
        }
        out
    }

    /// Evaluate with every referenced alias resolved through `pick`.
    fn check<'e>(
        &self,
        pick: impl Fn(&AttrRef) -> &'e Event,
        params: &BTreeMap<String, Scalar>,
    ) -> Result<bool> {
        let l = resolve(&self.lhs, &pick, params)?;
        let r = resolve(&self.rhs, &pick, params)?;
        Ok(self.op.apply(l, r))
    }
}

fn resolve<'a, 'e: 'a>(
    op: &'a Operand,
    pick: &impl Fn(&AttrRef) -> &'e Event,
    params: &'a BTreeMap<String, Scalar>,
) -> Result<&'a Scalar> {
    match op {
        Operand::Literal(v) => Ok(v),
        Operand::Param(name) => params
            .get(name)
            .ok_or_else(|| Error::UnboundParam(name.clone())),
        Operand::Attr(a) => {
            let e = pick(a);
            e.attr(&a.attr).ok_or_else(|| Error::MissingAttribute {
                id: e.id.clone(),
                attr: a.attr.clone(),
            })
        }
    }
}

/// Alias → bound events in ascending order. Non-Kleene aliases bind one event.
pub type Bindings<'e> = BTreeMap<&'e str, Vec<&'e Event>>;

/// Evaluate `pred` against `bindings`.
///
/// Iteration predicates are the conjunction over consecutive pairs of the
/// Kleene list; every other kind is universally quantified over the bound
/// events of the aliases it mentions.
pub fn eval_predicate(
    pred: &Predicate,
    bindings: &Bindings<'_>,
    params: &BTreeMap<String, Scalar>,
) -> Result<bool> {
    let bound = |alias: &str| -> Result<&[&Event]> {
        bindings
            .get(alias)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::InvalidPattern(format!("alias `{alias}` is not bound")))
    };
    let aliases = pred.aliases();
    match pred.kind {
        PredicateKind::IterationAdjacent => {
            for w in bound(aliases[0])?.windows(2) {
                let ok = pred.check(
                    |a| match a.index {
                        AttrIndex::Next => w[1],
                        _ => w[0],
                    },
                    params,
                )?;
                if !ok {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        PredicateKind::Constant => {
            for &e in bound(aliases[0])? {
                if !pred.check(|_| e, params)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        PredicateKind::CrossElement => {
            let (xa, ya) = (aliases[0], aliases[1]);
            for &x in bound(xa)? {
                for &y in bound(ya)? {
                    let ok = pred.check(|a| if a.alias == xa { x } else { y }, params)?;
                    if !ok {
                        return Ok(false);
                    }
                }
            }
            Ok(true)
        }
    }
}

/// A parsed, validated query.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSpec {
    pub id: String,
    pub elements: Vec<PatternElement>,
    /// Window length in milliseconds.
    pub window: Millis,
    pub predicates: Vec<Predicate>,
    pub policy: Policy,
    /// Values for bare identifiers used as predicate operands.
    pub params: BTreeMap<String, Scalar>,
}

impl PatternSpec {
    pub fn with_policy(mut self, policy: Policy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_param(mut self, name: impl Into<String>, value: impl Into<Scalar>) -> Self {
        self.params.insert(name.into(), value.into());
        self
    }

    pub fn end_type(&self) -> &str {
        &self.elements.last().expect("validated pattern").et
    }

    pub fn start_type(&self) -> &str {
        &self.elements[0].et
    }

    pub fn position_of(&self, et: &str) -> Option<usize> {
        self.elements.iter().position(|el| el.et == et)
    }

    pub fn alias_position(&self, alias: &str) -> Option<usize> {
        self.elements.iter().position(|el| el.alias == alias)
    }

    pub fn event_types(&self) -> impl Iterator<Item = &str> {
        self.elements.iter().map(|el| el.et.as_str())
    }

    pub fn has_kleene(&self) -> bool {
        self.elements.iter().any(|el| el.kleene)
    }

    /// Group events by the alias of their element; events of foreign types
    /// are ignored.
    pub fn bindings<'e>(&'e self, events: impl IntoIterator<Item = &'e Event>) -> Bindings<'e> {
        let mut out = Bindings::new();
        for e in events {
            if let Some(pos) = self.position_of(&e.et) {
                out.entry(self.elements[pos].alias.as_str())
                    .or_default()
                    .push(e);
            }
        }
        out
    }

    /// Attributes the predicates read from events of type `et`.
    pub fn attrs_of_type(&self, et: &str) -> Vec<&str> {
        let Some(pos) = self.position_of(et) else {
            return Vec::new();
        };
        let alias = &self.elements[pos].alias;
        let mut out: Vec<&str> = Vec::new();
        for p in &self.predicates {
            for a in [p.lhs.attr(), p.rhs.attr()].into_iter().flatten() {
                if &a.alias == alias && !out.contains(&a.attr.as_str()) {
                    out.push(&a.attr);
                }
            }
        }
        out
    }

    /// Every parameter operand must have a value.
    pub fn check_params(&self) -> Result<()> {
        for p in &self.predicates {
            for op in [&p.lhs, &p.rhs] {
                if let Operand::Param(name) = op {
                    if !self.params.contains_key(name) {
                        return Err(Error::UnboundParam(name.clone()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Load one pattern file, or every regular non-hidden file of a directory in
/// name order. The file stem is the pattern id.
pub fn load_patterns(path: &Path) -> Result<Vec<PatternSpec>> {
    let mut files = Vec::new();
    if path.is_dir() {
        for entry in std::fs::read_dir(path)? {
            let p = entry?.path();
            let hidden = p
                .file_name()
                .and_then(|n| n.to_str())
                .is_none_or(|n| n.starts_with('.'));
            if p.is_file() && !hidden {
                files.push(p);
            }
        }
        files.sort();
    } else {
        files.push(path.to_path_buf());
    }
    files
        .iter()
        .map(|f| {
            let id = f
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("pattern")
                .to_string();
            let text = std::fs::read_to_string(f)?;
            parse_pattern(&id, &text)
        })
        .collect()
}

impl fmt::Display for AttrRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            AttrIndex::Plain => write!(f, "{}.{}", self.alias, self.attr),
            AttrIndex::Current => write!(f, "{}[i].{}", self.alias, self.attr),
            AttrIndex::Next => write!(f, "{}[i+1].{}", self.alias, self.attr),
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Attr(a) => a.fmt(f),
            Operand::Literal(v) => v.fmt(f),
            Operand::Param(p) => f.write_str(p),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.op.symbol(), self.rhs)
    }
}

/// Renders the query text (policy and params are not part of the grammar).
impl fmt::Display for PatternSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PATTERN SEQ(")?;
        for (i, el) in self.elements.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            if el.kleene {
                write!(f, "{}+ {}[]", el.et, el.alias)?;
            } else {
                write!(f, "{} {}", el.et, el.alias)?;
            }
        }
        write!(f, ")")?;
        for (i, p) in self.predicates.iter().enumerate() {
            write!(f, "{}{p}", if i == 0 { " WHERE " } else { " AND " })?;
        }
        if self.window % 1000 == 0 {
            write!(f, " WITHIN {} seconds", self.window / 1000)
        } else {
            write!(f, " WITHIN {} milliseconds", self.window)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(v: f64) -> Event {
        Event::new(format!("b{v}"), "B", v as Millis).with("value", v)
    }

    #[test]
    fn iteration_pairs() {
        let p = parse_pattern(
            "q",
            "PATTERN SEQ(A a, B+ b[], C c) WHERE b[i+1].value > b[i].value WITHIN 10 seconds",
        )
        .unwrap();
        let pred = &p.predicates[0];
        assert_eq!(pred.kind, PredicateKind::IterationAdjacent);
        let (b5, b7, b9) = (b(5.0), b(7.0), b(9.0));
        let mut bind = Bindings::new();
        bind.insert("b", vec![&b5, &b7, &b9]);
        assert!(eval_predicate(pred, &bind, &p.params).unwrap());
        bind.insert("b", vec![&b5, &b9, &b7]);
        assert!(!eval_predicate(pred, &bind, &p.params).unwrap());
        bind.insert("b", vec![&b7]);
        assert!(eval_predicate(pred, &bind, &p.params).unwrap());
    }

    #[test]
    fn constant_comparison() {
        let p = parse_pattern(
            "q",
            "PATTERN SEQ(A a, B b) WHERE a.percentage > 40 WITHIN 1 min",
        )
        .unwrap();
        let a = Event::new("1", "A", 0).with("percentage", 35.0);
        let mut bind = Bindings::new();
        bind.insert("a", vec![&a]);
        assert!(!eval_predicate(&p.predicates[0], &bind, &p.params).unwrap());
    }

    #[test]
    fn cross_is_universal_over_kleene() {
        let p = parse_pattern(
            "q",
            "PATTERN SEQ(A a, B+ b[], C c) WHERE a.value < b.value WITHIN 10 seconds",
        )
        .unwrap();
        let a = Event::new("1", "A", 0).with("value", 6.0);
        let (b7, b9, b5) = (b(7.0), b(9.0), b(5.0));
        let mut bind = Bindings::new();
        bind.insert("a", vec![&a]);
        bind.insert("b", vec![&b7, &b9]);
        assert!(eval_predicate(&p.predicates[0], &bind, &p.params).unwrap());
        bind.insert("b", vec![&b7, &b5]);
        assert!(!eval_predicate(&p.predicates[0], &bind, &p.params).unwrap());
    }

    #[test]
    fn params_and_missing_attributes() {
        let p = parse_pattern(
            "q",
            "PATTERN SEQ(A a, B b) WHERE a.level > limit WITHIN 5 seconds",
        )
        .unwrap();
        let a = Event::new("1", "A", 0).with("level", 3.0);
        let mut bind = Bindings::new();
        bind.insert("a", vec![&a]);
        assert!(matches!(
            eval_predicate(&p.predicates[0], &bind, &p.params),
            Err(Error::UnboundParam(_))
        ));
        let p = p.with_param("limit", 2.0);
        assert!(eval_predicate(&p.predicates[0], &bind, &p.params).unwrap());
        let bare = Event::new("2", "A", 0);
        bind.insert("a", vec![&bare]);
        assert!(matches!(
            eval_predicate(&p.predicates[0], &bind, &p.params),
            Err(Error::MissingAttribute { .. })
        ));
    }

    #[test]
    fn mismatched_kinds_are_false() {
        assert!(!CmpOp::Ne.apply(&Scalar::Num(1.0), &Scalar::Str("1".into())));
        assert!(!CmpOp::Eq.apply(&Scalar::Bool(true), &Scalar::Num(1.0)));
        assert!(CmpOp::Lt.apply(&Scalar::Str("abc".into()), &Scalar::Str("abd".into())));
    }
}

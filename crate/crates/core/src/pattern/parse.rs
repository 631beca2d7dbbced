use std::collections::{BTreeMap, HashSet};

use super::{
    AttrIndex, AttrRef, CmpOp, Operand, PatternElement, PatternSpec, Policy, Predicate,
    PredicateKind,
};
use crate::error::{Error, Result};
use crate::model::Scalar;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str(String),
    Sym(&'static str),
    Eof,
}

const SYMBOLS: [&str; 16] = [
    "<=", ">=", "==", "!=", "<>", "(", ")", ",", "[", "]", ".", "+", "!", "<", ">", "=",
];

fn lex(text: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(text[start..i].to_string())));
        } else if c.is_ascii_digit()
            || (c == '-' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit))
        {
            i += 1;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            let s = &text[start..i];
            let n = s.parse::<f64>().map_err(|_| Error::Syntax {
                pos: start,
                msg: format!("bad number `{s}`"),
            })?;
            out.push((start, Tok::Num(n)));
        } else if c == '"' || c == '\'' {
            let close = text[i + 1..].find(c).ok_or_else(|| Error::Syntax {
                pos: start,
                msg: "unterminated string".into(),
            })?;
            out.push((start, Tok::Str(text[i + 1..i + 1 + close].to_string())));
            i += close + 2;
        } else if let Some(sym) = SYMBOLS.iter().find(|s| text[i..].starts_with(**s)) {
            out.push((start, Tok::Sym(sym)));
            i += sym.len();
        } else {
            let ch = text[i..].chars().next().unwrap_or('?');
            return Err(Error::Syntax {
                pos: start,
                msg: format!("unexpected character `{ch}`"),
            });
        }
    }
    out.push((text.len(), Tok::Eof));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.at + 1).min(self.toks.len() - 1)].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].1.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Tok::Sym(x) if *x == s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`"))
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x.eq_ignore_ascii_case(kw))
    }

    fn expect_kw(&mut self, kw: &str) -> Result<()> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{kw}`"))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.err(format!("expected {what}")),
        }
    }

    fn empty_brackets(&mut self) -> Result<bool> {
        if matches!(self.peek(), Tok::Sym("[")) && matches!(self.peek2(), Tok::Sym("]")) {
            self.bump();
            self.bump();
            return Ok(true);
        }
        Ok(false)
    }

    fn element(&mut self) -> Result<PatternElement> {
        if matches!(self.peek(), Tok::Sym("!")) {
            return Err(Error::Unsupported("negated pattern element".into()));
        }
        let et = self.ident("event type")?;
        let mut kleene = self.eat_sym("+");
        kleene |= self.empty_brackets()?;
        kleene |= self.eat_sym("+");
        let alias = self.ident("alias")?;
        kleene |= self.empty_brackets()?;
        kleene |= self.eat_sym("+");
        Ok(PatternElement { et, kleene, alias })
    }

    fn operand(&mut self) -> Result<Operand> {
        let pos = self.pos();
        match self.bump() {
            Tok::Num(n) => Ok(Operand::Literal(Scalar::Num(n))),
            Tok::Str(s) => Ok(Operand::Literal(Scalar::Str(s))),
            Tok::Ident(name) => {
                let index = if self.eat_sym("[") {
                    let var = self.ident("iteration variable `i`")?;
                    if !var.eq_ignore_ascii_case("i") {
                        return self.err("only `i` and `i+1` are allowed as indices");
                    }
                    let idx = if self.eat_sym("+") {
                        match self.bump() {
                            Tok::Num(1.0) => AttrIndex::Next,
                            _ => return Err(Error::Unsupported("index other than [i+1]".into())),
                        }
                    } else if matches!(self.peek(), Tok::Num(n) if *n < 0.0) {
                        return Err(Error::Unsupported("negative index offset".into()));
                    } else {
                        AttrIndex::Current
                    };
                    self.expect_sym("]")?;
                    Some(idx)
                } else {
                    None
                };
                if self.eat_sym(".") {
                    let attr = self.ident("attribute name")?;
                    return Ok(Operand::Attr(AttrRef {
                        alias: name,
                        index: index.unwrap_or(AttrIndex::Plain),
                        attr,
                    }));
                }
                if index.is_some() {
                    return self.err("expected `.` after index");
                }
                if name.eq_ignore_ascii_case("true") {
                    Ok(Operand::Literal(Scalar::Bool(true)))
                } else if name.eq_ignore_ascii_case("false") {
                    Ok(Operand::Literal(Scalar::Bool(false)))
                } else {
                    Ok(Operand::Param(name))
                }
            }
            _ => Err(Error::Syntax {
                pos,
                msg: "expected operand".into(),
            }),
        }
    }

    fn cmp_op(&mut self) -> Result<CmpOp> {
        let op = match self.peek() {
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym(">=") => CmpOp::Ge,
            Tok::Sym("=") | Tok::Sym("==") => CmpOp::Eq,
            Tok::Sym("!=") | Tok::Sym("<>") => CmpOp::Ne,
            _ => return self.err("expected comparison operator"),
        };
        self.bump();
        Ok(op)
    }

    fn window(&mut self) -> Result<i64> {
        let n = match self.bump() {
            Tok::Num(n) if n >= 0.0 => n,
            _ => return self.err("expected window length"),
        };
        let unit_pos = self.pos();
        let unit = self.ident("time unit")?.to_ascii_lowercase();
        let scale = match unit.as_str() {
            "ms" | "msec" | "msecs" | "millisecond" | "milliseconds" => 1.0,
            "s" | "sec" | "secs" | "second" | "seconds" => 1_000.0,
            "m" | "min" | "mins" | "minute" | "minutes" => 60_000.0,
            "h" | "hr" | "hrs" | "hour" | "hours" => 3_600_000.0,
            _ => {
                return Err(Error::Syntax {
                    pos: unit_pos,
                    msg: format!("unknown time unit `{unit}`"),
                })
            }
        };
        Ok((n * scale).round() as i64)
    }
}

/// Parse a query of the form
/// `PATTERN SEQ(<elem>, …) [WHERE <pred> [AND <pred>]…] WITHIN <n> <unit>`.
pub fn parse_pattern(id: &str, text: &str) -> Result<PatternSpec> {
    let mut p = Parser {
        toks: lex(text)?,
        at: 0,
    };
    p.expect_kw("PATTERN")?;
    p.expect_kw("SEQ")?;
    p.expect_sym("(")?;
    let mut elements = vec![p.element()?];
    while p.eat_sym(",") {
        elements.push(p.element()?);
    }
    p.expect_sym(")")?;

    let mut raw = Vec::new();
    if p.is_kw("WHERE") {
        p.bump();
        loop {
            let lhs = p.operand()?;
            let op = p.cmp_op()?;
            let rhs = p.operand()?;
            raw.push((lhs, op, rhs));
            if p.is_kw("AND") {
                p.bump();
            } else {
                break;
            }
        }
    }
    p.expect_kw("WITHIN")?;
    let window = p.window()?;
    if !matches!(p.peek(), Tok::Eof) {
        return p.err("trailing input");
    }

    validate_elements(&elements, window)?;
    let predicates = raw
        .into_iter()
        .map(|(lhs, op, rhs)| classify(&elements, lhs, op, rhs))
        .collect::<Result<Vec<_>>>()?;

    Ok(PatternSpec {
        id: id.to_string(),
        elements,
        window,
        predicates,
        policy: Policy::default(),
        params: BTreeMap::new(),
    })
}

fn validate_elements(elements: &[PatternElement], window: i64) -> Result<()> {
    if elements.len() < 2 {
        return Err(Error::InvalidPattern(
            "a pattern needs at least two elements".into(),
        ));
    }
    let mut types = HashSet::new();
    let mut aliases = HashSet::new();
    for el in elements {
        if !types.insert(el.et.as_str()) {
            return Err(Error::InvalidPattern(format!(
                "event type `{}` appears twice",
                el.et
            )));
        }
        if !aliases.insert(el.alias.as_str()) {
            return Err(Error::InvalidPattern(format!(
                "alias `{}` appears twice",
                el.alias
            )));
        }
    }
    if window <= 0 {
        return Err(Error::InvalidPattern("window must be positive".into()));
    }
    Ok(())
}

fn classify(
    elements: &[PatternElement],
    lhs: Operand,
    op: CmpOp,
    rhs: Operand,
) -> Result<Predicate> {
    let attrs: Vec<&AttrRef> = [&lhs, &rhs].into_iter().filter_map(|o| o.attr()).collect();
    if attrs.is_empty() {
        return Err(Error::InvalidPattern(
            "a predicate must reference at least one attribute".into(),
        ));
    }
    for a in &attrs {
        let el = elements
            .iter()
            .find(|el| el.alias == a.alias)
            .ok_or_else(|| Error::InvalidPattern(format!("unknown alias `{}`", a.alias)))?;
        if a.index != AttrIndex::Plain && !el.kleene {
            return Err(Error::InvalidPattern(format!(
                "iteration index on non-Kleene element `{}`",
                a.alias
            )));
        }
    }
    let is_kleene = |alias: &str| elements.iter().any(|el| el.alias == alias && el.kleene);

    let kind = if attrs.len() == 2
        && attrs[0].alias == attrs[1].alias
        && attrs.iter().any(|a| a.index == AttrIndex::Next)
    {
        let mut idx = [attrs[0].index, attrs[1].index];
        idx.sort_by_key(|i| *i as u8);
        if idx != [AttrIndex::Current, AttrIndex::Next] {
            return Err(Error::Unsupported(
                "iteration predicates must compare [i] with [i+1]".into(),
            ));
        }
        if op == CmpOp::Ne {
            return Err(Error::Unsupported(
                "`!=` between consecutive iterations".into(),
            ));
        }
        PredicateKind::IterationAdjacent
    } else if attrs.iter().any(|a| a.index == AttrIndex::Next) {
        return Err(Error::Unsupported(
            "[i+1] outside a comparison of consecutive iterations".into(),
        ));
    } else if attrs.len() == 2 && attrs[0].alias != attrs[1].alias {
        if is_kleene(&attrs[0].alias) && is_kleene(&attrs[1].alias) {
            return Err(Error::Unsupported(
                "comparisons between two Kleene elements".into(),
            ));
        }
        PredicateKind::CrossElement
    } else {
        PredicateKind::Constant
    };
    // `[i]` outside iteration predicates is the same as a plain reference
    let plain = |o: Operand| match o {
        Operand::Attr(mut a) if kind != PredicateKind::IterationAdjacent => {
            a.index = AttrIndex::Plain;
            Operand::Attr(a)
        }
        other => other,
    };
    Ok(Predicate {
        kind,
        lhs: plain(lhs),
        op,
        rhs: plain(rhs),
    })
}

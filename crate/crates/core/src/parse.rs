//! The `.crn` text format.
//!
//! ```text
//! # comment
//! species: S, I, R
//! param gs = 0.1
//! param kir in [0.5, 2]
//! param beta free
//! reaction: S -> 0 @ gs
//! reaction: S + I -> 2 I @ beta
//! ```
//!
//! `0` or `∅` is the empty complex; `2 X` and `X + X` are equivalent.
//! Species names may be any Unicode identifier not starting with a digit;
//! parameter names are ASCII identifiers.

use std::fmt::Write as _;

use thiserror::Error;

use crate::network::{ParamKind, RateParam, Reaction, ReactionNetwork};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown species `{0}`")]
    UnknownSpecies(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(String),
    #[error("duplicate species `{0}`")]
    DuplicateSpecies(String),
    #[error("reaction of order {0}; at most bimolecular reactions are supported")]
    UnsupportedOrder(u32),
    #[error("invalid rate: {0}")]
    InvalidRate(String),
}

/// Parse failure with a 1-based line/column position in the source text.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

/// 1-based `(line, column)`.
pub type Location = (usize, usize);

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SourceMap {
    pub species: Vec<Location>,
    pub params: Vec<Location>,
    pub reactions: Vec<Location>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDocument {
    pub source: String,
    pub network: ReactionNetwork,
    pub locations: SourceMap,
}

pub fn parse_network(text: &str) -> Result<ReactionNetwork, ParseError> {
    parse_document(text).map(|doc| doc.network)
}

struct Cursor {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

impl Cursor {
    fn err(&self, kind: ParseErrorKind) -> ParseError {
        self.err_at(self.pos, kind)
    }

    fn err_at(&self, pos: usize, kind: ParseErrorKind) -> ParseError {
        ParseError { line: self.line, column: pos + 1, kind }
    }

    fn syntax(&self, msg: impl Into<String>) -> ParseError {
        self.err(ParseErrorKind::Syntax(msg.into()))
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.chars.len()
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        let n = s.chars().count();
        if self.chars.len() >= self.pos + n && self.chars[self.pos..self.pos + n].iter().copied().eq(s.chars()) {
            self.pos += n;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), ParseError> {
        if self.eat(s) {
            Ok(())
        } else {
            Err(self.syntax(format!("expected `{s}`")))
        }
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> String {
        let start = self.pos;
        while self.peek().is_some_and(&f) {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn param_name(&mut self) -> Result<String, ParseError> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                Ok(self.take_while(|c| c.is_ascii_alphanumeric() || c == '_'))
            }
            _ => Err(self.syntax("expected a parameter name")),
        }
    }

    fn species_name(&mut self) -> Result<String, ParseError> {
        self.skip_ws();
        match self.peek() {
            Some(c) if is_species_start(c) => Ok(self.take_while(is_species_char)),
            _ => Err(self.syntax("expected a species name")),
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let text = self.take_while(|c| c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '+' | '-'));
        text.parse::<f64>()
            .map_err(|_| self.err_at(start, ParseErrorKind::Syntax(format!("invalid number `{text}`"))))
    }
}

fn is_species_start(c: char) -> bool {
    (c.is_alphanumeric() && !c.is_ascii_digit() && c != '∅') || c == '_'
}

fn is_species_char(c: char) -> bool {
    (c.is_alphanumeric() && c != '∅') || c == '_'
}

pub fn parse_document(text: &str) -> Result<NetworkDocument, ParseError> {
    let mut species: Vec<String> = Vec::new();
    let mut species_seen = false;
    let mut params: Vec<RateParam> = Vec::new();
    let mut reactions: Vec<Reaction> = Vec::new();
    let mut rate_refs: Vec<(String, Location)> = Vec::new();
    let mut locations = SourceMap::default();

    for (lineno, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let mut cur = Cursor { chars: content.chars().collect(), pos: 0, line: lineno + 1 };
        if cur.at_end() {
            continue;
        }
        let line_start = (cur.line, cur.pos + 1);
        if cur.eat("species") {
            cur.expect(":")?;
            if species_seen {
                return Err(cur.syntax("species list declared twice"));
            }
            species_seen = true;
            loop {
                if cur.at_end() {
                    break;
                }
                let pos = cur.pos;
                let name = cur.species_name()?;
                if species.contains(&name) {
                    return Err(cur.err_at(pos, ParseErrorKind::DuplicateSpecies(name)));
                }
                species.push(name);
                locations.species.push((cur.line, pos + 1));
                cur.eat(",");
            }
        } else if cur.eat("param") {
            let pos = {
                cur.skip_ws();
                cur.pos
            };
            let name = cur.param_name()?;
            if params.iter().any(|p| p.name == name) {
                return Err(cur.err_at(pos, ParseErrorKind::DuplicateParameter(name)));
            }
            let kind = if cur.eat("=") {
                let at = cur.pos;
                let value = cur.number()?;
                if !(value > 0.0 && value.is_finite()) {
                    return Err(cur.err_at(at, ParseErrorKind::InvalidRate(format!(
                        "`{name}` must be positive, got {value}"
                    ))));
                }
                ParamKind::Fixed { value }
            } else if cur.eat("in") {
                cur.expect("[")?;
                let at = cur.pos;
                let lo = cur.number()?;
                cur.expect(",")?;
                let hi = cur.number()?;
                cur.expect("]")?;
                if !(lo >= 0.0 && hi > 0.0 && lo <= hi && hi.is_finite()) {
                    return Err(cur.err_at(at, ParseErrorKind::InvalidRate(format!(
                        "`{name}` needs 0 <= lo <= hi < inf with hi > 0"
                    ))));
                }
                ParamKind::Interval { lo, hi }
            } else if cur.eat("free") {
                ParamKind::Free
            } else {
                return Err(cur.syntax("expected `=`, `in` or `free`"));
            };
            if !cur.at_end() {
                return Err(cur.syntax("unexpected trailing input"));
            }
            params.push(RateParam { name, kind });
            locations.params.push(line_start);
        } else if cur.eat("reaction") {
            cur.expect(":")?;
            let lhs = parse_complex(&mut cur, &species)?;
            if !(cur.eat("->") || cur.eat("→")) {
                return Err(cur.syntax("expected `->`"));
            }
            let rhs = parse_complex(&mut cur, &species)?;
            cur.expect("@")?;
            cur.skip_ws();
            let at = (cur.line, cur.pos + 1);
            let rate = cur.param_name()?;
            if !cur.at_end() {
                return Err(cur.syntax("unexpected trailing input"));
            }
            let reaction = Reaction::new(lhs, rhs, rate.clone());
            let order = reaction.order();
            if order > 2 {
                return Err(ParseError {
                    line: line_start.0,
                    column: line_start.1,
                    kind: ParseErrorKind::UnsupportedOrder(order),
                });
            }
            rate_refs.push((rate, at));
            reactions.push(reaction);
            locations.reactions.push(line_start);
        } else {
            return Err(cur.syntax("expected `species:`, `param` or `reaction:`"));
        }
    }

    for (name, (line, column)) in rate_refs {
        if !params.iter().any(|p| p.name == name) {
            return Err(ParseError { line, column, kind: ParseErrorKind::UnknownParameter(name) });
        }
    }

    Ok(NetworkDocument {
        source: text.to_string(),
        network: ReactionNetwork::new(species, params, reactions),
        locations,
    })
}

fn parse_complex(cur: &mut Cursor, species: &[String]) -> Result<Vec<(usize, u32)>, ParseError> {
    cur.skip_ws();
    if cur.peek() == Some('∅') {
        cur.pos += 1;
        return Ok(Vec::new());
    }
    if cur.peek() == Some('0') {
        let save = cur.pos;
        cur.pos += 1;
        cur.skip_ws();
        if !cur.peek().is_some_and(|c| is_species_char(c)) {
            return Ok(Vec::new());
        }
        cur.pos = save;
    }
    let mut terms = Vec::new();
    loop {
        cur.skip_ws();
        let mut mult = 1u32;
        if cur.peek().is_some_and(|c| c.is_ascii_digit()) {
            let at = cur.pos;
            let digits = cur.take_while(|c| c.is_ascii_digit());
            mult = digits
                .parse()
                .map_err(|_| cur.err_at(at, ParseErrorKind::Syntax(format!("bad multiplicity `{digits}`"))))?;
        }
        cur.skip_ws();
        let at = cur.pos;
        let name = cur.species_name()?;
        let idx = species
            .iter()
            .position(|s| *s == name)
            .ok_or_else(|| cur.err_at(at, ParseErrorKind::UnknownSpecies(name)))?;
        terms.push((idx, mult));
        if !cur.eat("+") {
            break;
        }
    }
    Ok(terms)
}

fn write_complex(out: &mut String, complex: &[(usize, u32)], species: &[String]) {
    if complex.is_empty() {
        out.push('0');
        return;
    }
    for (i, &(s, m)) in complex.iter().enumerate() {
        if i > 0 {
            out.push_str(" + ");
        }
        if m != 1 {
            let _ = write!(out, "{m} ");
        }
        out.push_str(&species[s]);
    }
}

/// Canonical text form; `parse_network(&serialize_network(n)) == n`.
pub fn serialize_network(network: &ReactionNetwork) -> String {
    let mut out = String::from("species:");
    for (i, s) in network.species.iter().enumerate() {
        out.push_str(if i == 0 { " " } else { ", " });
        out.push_str(s);
    }
    out.push('\n');
    for p in &network.params {
        let _ = match p.kind {
            ParamKind::Fixed { value } => writeln!(out, "param {} = {value:?}", p.name),
            ParamKind::Interval { lo, hi } => writeln!(out, "param {} in [{lo:?}, {hi:?}]", p.name),
            ParamKind::Free => writeln!(out, "param {} free", p.name),
        };
    }
    for r in &network.reactions {
        out.push_str("reaction: ");
        write_complex(&mut out, &r.reactants, &network.species);
        out.push_str(" -> ");
        write_complex(&mut out, &r.products, &network.species);
        let _ = writeln!(out, " @ {}", r.rate);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document() {
        let n = parse_network("species: X\nparam g = 1.0\nreaction: X -> 0 @ g").unwrap();
        assert_eq!(n.species, vec!["X"]);
        assert_eq!(n.reactions.len(), 1);
        assert_eq!(n.reactions[0].order(), 1);
        assert_eq!(n.reactions[0].stoichiometry(1), vec![-1]);
    }

    #[test]
    fn interval_param() {
        let n = parse_network("species: X\nparam k in [0.5, 2.0]").unwrap();
        assert_eq!(n.params[0], RateParam::interval("k", 0.5, 2.0));
    }

    #[test]
    fn free_param_serializes() {
        let n = parse_network("species: X\nparam x free\n").unwrap();
        assert!(serialize_network(&n).contains("param x free"));
    }

    #[test]
    fn empty_network_serializes_to_header() {
        assert_eq!(serialize_network(&ReactionNetwork::default()), "species:\n");
        assert_eq!(parse_network("species:\n").unwrap(), ReactionNetwork::default());
    }

    #[test]
    fn multiplicity_forms_agree() {
        let a = parse_network("species: X\nparam k = 1\nreaction: X + X -> ∅ @ k").unwrap();
        let b = parse_network("species: X\nparam k = 1\nreaction: 2 X -> 0 @ k").unwrap();
        let c = parse_network("species: X\nparam k = 1\nreaction: 2X -> 0 @ k").unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
        assert_eq!(a.reactions[0].reactants, vec![(0, 2)]);
    }

    #[test]
    fn unicode_species_and_comments() {
        let n = parse_network("# header\nspecies: Ωmega, β_2 # trailing\nparam k free\nreaction: Ωmega -> β_2 @ k\n")
            .unwrap();
        assert_eq!(n.species, vec!["Ωmega", "β_2"]);
        assert_eq!(n.reactions[0].stoichiometry(2), vec![-1, 1]);
    }

    #[test]
    fn errors_carry_locations() {
        let e = parse_network("species: X\nparam k = 1\nreaction: X -> Y @ k").unwrap_err();
        assert_eq!((e.line, e.column), (3, 16));
        assert_eq!(e.kind, ParseErrorKind::UnknownSpecies("Y".into()));

        let e = parse_network("species: X\nparam k = 1\nparam k free").unwrap_err();
        assert_eq!(e.line, 3);
        assert_eq!(e.kind, ParseErrorKind::DuplicateParameter("k".into()));

        let e = parse_network("species: X\nparam k = 1\nreaction: 3 X -> 0 @ k").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnsupportedOrder(3));

        let e = parse_network("species: X\nreaction: X -> 0 @ nope").unwrap_err();
        assert_eq!((e.line, e.column), (2, 20));

        let e = parse_network("species: X\nparam k = 0").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::InvalidRate(_)));

        let e = parse_network("species X").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::Syntax(_)));
        assert_eq!(e.line, 1);
    }

    #[test]
    fn document_keeps_locations() {
        let doc = parse_document("species: A, B\n\nparam k free\nreaction: A -> B @ k\n").unwrap();
        assert_eq!(doc.locations.species, vec![(1, 10), (1, 13)]);
        assert_eq!(doc.locations.params, vec![(3, 1)]);
        assert_eq!(doc.locations.reactions, vec![(4, 1)]);
    }
}

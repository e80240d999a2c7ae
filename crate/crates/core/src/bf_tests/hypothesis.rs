//! Text format for constrained hypotheses.
//!
//! One hypothesis per line, `label: constraints`. Constraints are chains of linear
//! expressions joined by `=`, `<` or `>`, combined with `&`:
//!
//! ```text
//! H1: |mu.teacher| > |mu.gender| > |mu.race|
//! H2: psi.popularity = psi.outgoingness & phi.x1 > 0
//! H3: 2*zeta.x1 - zeta.x2 < 0.5
//! Hc: complement
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeSet;

use super::{BfError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub param: usize,
    pub coef: f64,
    pub abs: bool,
}

/// `Σ coef · f(θ_param) + constant`, with `f` the identity or `|·|`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearForm {
    pub terms: Vec<Term>,
    pub constant: f64,
}

impl LinearForm {
    pub fn eval(&self, theta: &[f64]) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|t| t.coef * if t.abs { theta[t.param].abs() } else { theta[t.param] })
                .sum::<f64>()
    }

    fn scaled(&self, k: f64) -> LinearForm {
        LinearForm {
            terms: self.terms.iter().map(|t| Term { coef: k * t.coef, ..*t }).collect(),
            constant: k * self.constant,
        }
    }

    fn plus(&self, other: &LinearForm) -> LinearForm {
        let mut terms = self.terms.clone();
        for t in &other.terms {
            match terms.iter_mut().find(|s| s.param == t.param && s.abs == t.abs) {
                Some(s) => s.coef += t.coef,
                None => terms.push(*t),
            }
        }
        terms.retain(|t| t.coef != 0.0);
        LinearForm {
            terms,
            constant: self.constant + other.constant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// form = 0
    Equal,
    /// form > 0
    Positive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub form: LinearForm,
    pub relation: Relation,
}

impl Constraint {
    pub fn holds(&self, theta: &[f64]) -> bool {
        match self.relation {
            Relation::Equal => self.form.eval(theta) == 0.0,
            Relation::Positive => self.form.eval(theta) > 0.0,
        }
    }
}

/// A parsed hypothesis whose parameters index into a shared name list.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSpec {
    pub label: String,
    pub constraints: Vec<Constraint>,
    pub complement: bool,
}

impl HypothesisSpec {
    pub fn has_equality(&self) -> bool {
        self.constraints.iter().any(|c| c.relation == Relation::Equal)
    }

    pub fn params(&self) -> BTreeSet<usize> {
        self.constraints
            .iter()
            .flat_map(|c| c.form.terms.iter().map(|t| t.param))
            .collect()
    }

    pub fn abs_params(&self) -> BTreeSet<usize> {
        self.constraints
            .iter()
            .flat_map(|c| c.form.terms.iter().filter(|t| t.abs).map(|t| t.param))
            .collect()
    }

    /// True when all order constraints hold at `theta` (equalities are ignored).
    pub fn region_contains(&self, theta: &[f64]) -> bool {
        self.constraints
            .iter()
            .filter(|c| c.relation == Relation::Positive)
            .all(|c| c.holds(theta))
    }

    /// A single strict chain `a > b > ...` over distinct plain parameters, if this is one.
    /// Returns the parameters from largest to smallest.
    pub fn strict_chain(&self) -> Option<Vec<usize>> {
        if self.complement || self.constraints.is_empty() {
            return None;
        }
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for c in &self.constraints {
            if c.relation != Relation::Positive || c.form.constant != 0.0 || c.form.terms.len() != 2 {
                return None;
            }
            let pos = c.form.terms.iter().find(|t| t.coef == 1.0 && !t.abs)?;
            let neg = c.form.terms.iter().find(|t| t.coef == -1.0 && !t.abs)?;
            edges.push((pos.param, neg.param));
        }
        // the edges must link into one path; `a < b < c` arrives as b>a, c>b
        let mut order = vec![edges.iter().find(|e| !edges.iter().any(|f| f.1 == e.0))?.0];
        while order.len() <= edges.len() {
            let last = *order.last().unwrap();
            let mut next = edges.iter().filter(|e| e.0 == last);
            let e = next.next()?;
            if next.next().is_some() {
                return None;
            }
            order.push(e.1);
        }
        let distinct: BTreeSet<_> = order.iter().collect();
        (distinct.len() == order.len()).then_some(order)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Name(String),
    Num(f64),
    Bar,
    Plus,
    Minus,
    Star,
    Rel(char),
    And,
}

fn tokenize(s: &str) -> std::result::Result<Vec<Tok>, String> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' => i += 1,
            '|' => {
                out.push(Tok::Bar);
                i += 1
            }
            '+' => {
                out.push(Tok::Plus);
                i += 1
            }
            '-' => {
                out.push(Tok::Minus);
                i += 1
            }
            '*' => {
                out.push(Tok::Star);
                i += 1
            }
            '&' => {
                out.push(Tok::And);
                i += if chars.get(i + 1) == Some(&'&') { 2 } else { 1 };
            }
            '=' | '<' | '>' => {
                // `==`, `<=`, `>=` are read as `=`, `<`, `>`
                let rel = c;
                i += 1;
                if chars.get(i) == Some(&'=') {
                    i += 1;
                }
                out.push(Tok::Rel(rel));
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_digit()
                        || chars[i] == '.'
                        || chars[i] == 'e'
                        || chars[i] == 'E'
                        || ((chars[i] == '-' || chars[i] == '+')
                            && matches!(chars[i - 1], 'e' | 'E')))
                {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                out.push(Tok::Num(text.parse().map_err(|_| format!("bad number `{text}`"))?));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_alphanumeric() || matches!(chars[i], '_' | '.' | '[' | ']' | ','))
                {
                    i += 1;
                }
                out.push(Tok::Name(chars[start..i].iter().collect()));
            }
            other => return Err(format!("unexpected character `{other}`")),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [Tok],
    pos: usize,
    names: &'a mut Vec<String>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn intern(&mut self, name: String) -> usize {
        match self.names.iter().position(|n| *n == name) {
            Some(i) => i,
            None => {
                self.names.push(name);
                self.names.len() - 1
            }
        }
    }

    fn atom(&mut self) -> std::result::Result<Option<(usize, bool)>, String> {
        match self.peek() {
            Some(Tok::Bar) => {
                self.pos += 1;
                let name = match self.next() {
                    Some(Tok::Name(n)) => n,
                    other => return Err(format!("expected a parameter inside |...|, found {other:?}")),
                };
                if self.next() != Some(Tok::Bar) {
                    return Err("unclosed |".into());
                }
                Ok(Some((self.intern(name), true)))
            }
            Some(Tok::Name(_)) => {
                let Some(Tok::Name(n)) = self.next() else { unreachable!() };
                Ok(Some((self.intern(n), false)))
            }
            _ => Ok(None),
        }
    }

    fn term(&mut self) -> std::result::Result<LinearForm, String> {
        let mut sign = 1.0;
        while let Some(Tok::Plus | Tok::Minus) = self.peek() {
            if self.next() == Some(Tok::Minus) {
                sign = -sign;
            }
        }
        let mut coef = None;
        if let Some(Tok::Num(v)) = self.peek() {
            coef = Some(*v);
            self.pos += 1;
            if self.peek() == Some(&Tok::Star) {
                self.pos += 1;
            }
        }
        match self.atom()? {
            Some((param, abs)) => Ok(LinearForm {
                terms: vec![Term {
                    param,
                    coef: sign * coef.unwrap_or(1.0),
                    abs,
                }],
                constant: 0.0,
            }),
            None => match coef {
                Some(v) => Ok(LinearForm {
                    terms: vec![],
                    constant: sign * v,
                }),
                None => Err(format!("expected a term, found {:?}", self.peek())),
            },
        }
    }

    fn expr(&mut self) -> std::result::Result<LinearForm, String> {
        let mut acc = self.term()?;
        while let Some(Tok::Plus | Tok::Minus) = self.peek() {
            let neg = self.next() == Some(Tok::Minus);
            let t = self.term()?;
            acc = acc.plus(&if neg { t.scaled(-1.0) } else { t });
        }
        Ok(acc)
    }

    fn chain(&mut self, out: &mut Vec<Constraint>) -> std::result::Result<(), String> {
        let mut left = self.expr()?;
        let mut n = 0;
        while let Some(Tok::Rel(r)) = self.peek().cloned() {
            self.pos += 1;
            let right = self.expr()?;
            let diff = left.plus(&right.scaled(-1.0));
            out.push(match r {
                '=' => Constraint { form: diff, relation: Relation::Equal },
                '>' => Constraint { form: diff, relation: Relation::Positive },
                _ => Constraint { form: diff.scaled(-1.0), relation: Relation::Positive },
            });
            left = right;
            n += 1;
        }
        if n == 0 {
            return Err("expected `=`, `<` or `>`".into());
        }
        Ok(())
    }
}

/// Parses one hypothesis body (the part after `label:`), interning parameter names.
pub fn parse_constraints(body: &str, names: &mut Vec<String>) -> std::result::Result<Vec<Constraint>, String> {
    let toks = tokenize(body)?;
    let mut p = Parser { toks: &toks, pos: 0, names };
    let mut out = Vec::new();
    loop {
        p.chain(&mut out)?;
        match p.next() {
            None => break,
            Some(Tok::And) => continue,
            Some(t) => return Err(format!("unexpected {t:?}")),
        }
    }
    for c in &out {
        if c.form.terms.is_empty() {
            return Err("constraint without parameters".into());
        }
    }
    Ok(out)
}

/// Parses a hypothesis file. Returns the referenced parameter names (in order of first
/// appearance) and the hypotheses indexing into them.
pub fn parse_hypotheses(text: &str) -> Result<(Vec<String>, Vec<HypothesisSpec>)> {
    let mut names = Vec::new();
    let mut out: Vec<HypothesisSpec> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| BfError::Hypothesis { line: i + 1, msg };
        let (label, body) = line
            .split_once(':')
            .ok_or_else(|| err("expected `label: constraints`".into()))?;
        let label = label.trim().to_string();
        if label.is_empty() {
            return Err(err("empty label".into()));
        }
        if out.iter().any(|h| h.label == label) {
            return Err(err(format!("duplicate label `{label}`")));
        }
        let body = body.trim();
        let spec = if body.eq_ignore_ascii_case("complement") {
            HypothesisSpec {
                label,
                constraints: vec![],
                complement: true,
            }
        } else {
            HypothesisSpec {
                label,
                constraints: parse_constraints(body, &mut names).map_err(err)?,
                complement: false,
            }
        };
        out.push(spec);
    }
    if out.is_empty() {
        return Err(BfError::Hypothesis {
            line: 0,
            msg: "no hypotheses given".into(),
        });
    }
    if out.iter().filter(|h| h.complement).count() > 1 {
        return Err(BfError::Hypothesis {
            line: 0,
            msg: "at most one complement hypothesis".into(),
        });
    }
    Ok((names, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_absolute_chain() {
        let (names, hs) = parse_hypotheses("H1: |mu.teacher| > |mu.gender| > |mu.race|").unwrap();
        assert_eq!(names, vec!["mu.teacher", "mu.gender", "mu.race"]);
        let h = &hs[0];
        assert_eq!(h.constraints.len(), 2);
        assert!(h.constraints.iter().all(|c| c.relation == Relation::Positive));
        assert!(h.region_contains(&[3.0, -2.0, 1.0]));
        assert!(!h.region_contains(&[3.0, -2.0, 2.5]));
        assert_eq!(h.abs_params().len(), 3);
    }

    #[test]
    fn parses_equalities_coefficients_and_conjunctions() {
        let text = "# comment\n\nH2: psi.a = psi.b & phi.x > 0\nH3: 2*zeta.x1 - zeta.x2 < 0.5\nHc: complement\n";
        let (names, hs) = parse_hypotheses(text).unwrap();
        assert_eq!(names, vec!["psi.a", "psi.b", "phi.x", "zeta.x1", "zeta.x2"]);
        assert_eq!(hs.len(), 3);
        assert!(hs[0].has_equality());
        // 0.5 - 2 x1 + x2 > 0
        let c = &hs[1].constraints[0];
        assert_eq!(c.form.eval(&[0.0, 0.0, 0.0, 1.0, 1.0]), 0.5 - 2.0 + 1.0);
        assert!(hs[2].complement);
    }

    #[test]
    fn less_than_flips_sign() {
        let (_, hs) = parse_hypotheses("H: a < b").unwrap();
        assert!(hs[0].region_contains(&[1.0, 2.0]));
        assert!(!hs[0].region_contains(&[2.0, 1.0]));
        assert_eq!(hs[0].strict_chain(), Some(vec![1, 0]));
    }

    #[test]
    fn strict_chain_detection() {
        let (_, hs) = parse_hypotheses("H: a > b > c\nG: a > b & c > a\nK: |a| > b\nB: a > b & a > c\nC: a > b & b > a").unwrap();
        assert_eq!(hs[0].strict_chain(), Some(vec![0, 1, 2]));
        assert_eq!(hs[1].strict_chain(), Some(vec![2, 0, 1]));
        for h in &hs[2..] {
            assert_eq!(h.strict_chain(), None, "{}", h.label);
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_hypotheses("H1: a > b\nH2 a > b").unwrap_err();
        assert_eq!(
            err,
            BfError::Hypothesis {
                line: 2,
                msg: "expected `label: constraints`".into()
            }
        );
        assert!(parse_hypotheses("H: a").is_err());
        assert!(parse_hypotheses("H: |a > b").is_err());
        assert!(parse_hypotheses("H: 1 > 0").is_err());
        assert!(parse_hypotheses("H: a > b\nH: b > a").is_err());
    }
}

//! Multivariate polynomials with exact rational coefficients over named symbols.
//!
//! Terms are kept in a canonical map, so structural equality is polynomial
//! equality. Display order is by total degree, then by the sorted factor list.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Rational = Ratio<i64>;

/// Product of symbols with positive exponents, sorted by symbol name.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Monomial(Vec<(String, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn symbol(name: &str) -> Self {
        Monomial(vec![(name.to_string(), 1)])
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| e).sum()
    }

    pub fn factors(&self) -> &[(String, u32)] {
        &self.0
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let mut map: BTreeMap<String, u32> = self.0.iter().cloned().collect();
        for (s, e) in &other.0 {
            *map.entry(s.clone()).or_insert(0) += e;
        }
        Monomial(map.into_iter().collect())
    }

    /// `self / other` when every factor of `other` divides `self`.
    fn div(&self, other: &Monomial) -> Option<Monomial> {
        let mut map: BTreeMap<String, u32> = self.0.iter().cloned().collect();
        for (s, e) in &other.0 {
            let have = map.get_mut(s)?;
            if *have < *e {
                return None;
            }
            *have -= e;
            if *have == 0 {
                map.remove(s);
            }
        }
        Some(Monomial(map.into_iter().collect()))
    }

    fn exponent(&self, s: &str) -> u32 {
        self.0
            .iter()
            .find(|(n, _)| n == s)
            .map(|(_, e)| *e)
            .unwrap_or(0)
    }

    /// Graded lexicographic order with alphabetical variable priority. A true
    /// monomial order, used by exact division.
    fn grlex_cmp(&self, other: &Monomial) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| {
            let vars: BTreeSet<&str> = self
                .0
                .iter()
                .chain(other.0.iter())
                .map(|(s, _)| s.as_str())
                .collect();
            for v in vars {
                match self.exponent(v).cmp(&other.exponent(v)) {
                    Ordering::Equal => continue,
                    o => return o,
                }
            }
            Ordering::Equal
        })
    }

    fn eval(&self, values: &dyn Fn(&str) -> Option<f64>) -> Result<f64> {
        let mut acc = 1.0;
        for (s, e) in &self.0 {
            let v = values(s).ok_or_else(|| Error::MissingSymbol(s.clone()))?;
            acc *= v.powi(*e as i32);
        }
        Ok(acc)
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for (i, (s, e)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "*")?;
            }
            if *e == 1 {
                write!(f, "{s}")?;
            } else {
                write!(f, "{s}^{e}")?;
            }
        }
        Ok(())
    }
}

/// A polynomial in canonical form: no zero coefficients, one entry per monomial.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct PolyExpr {
    terms: BTreeMap<Monomial, Rational>,
}

impl PolyExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::constant(Rational::one())
    }

    pub fn constant(c: Rational) -> Self {
        let mut p = Self::zero();
        p.add_term(Monomial::one(), c);
        p
    }

    pub fn integer(c: i64) -> Self {
        Self::constant(Rational::from_integer(c))
    }

    pub fn symbol(name: &str) -> Self {
        let mut p = Self::zero();
        p.add_term(Monomial::symbol(name), Rational::one());
        p
    }

    /// Exact rational nearest to `x` by continued fractions.
    pub fn from_f64(x: f64) -> Result<Self> {
        let r = Rational::approximate_float(x).ok_or_else(|| Error::Parse {
            input: x.to_string(),
            reason: "number not representable as a rational".into(),
        })?;
        Ok(Self::constant(r))
    }

    fn add_term(&mut self, m: Monomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(m.clone()).or_insert_with(Rational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// The constant value, if the polynomial has no symbols.
    pub fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => self
                .terms
                .iter()
                .next()
                .filter(|(m, _)| m.is_one())
                .map(|(_, c)| *c),
            _ => None,
        }
    }

    pub fn symbols(&self) -> BTreeSet<String> {
        self.terms
            .keys()
            .flat_map(|m| m.0.iter().map(|(s, _)| s.clone()))
            .collect()
    }

    pub fn pow(&self, e: u32) -> Self {
        (0..e).fold(Self::one(), |acc, _| &acc * self)
    }

    /// Evaluates at a symbol lookup. Terms are summed in canonical order.
    pub fn eval_with(&self, values: &dyn Fn(&str) -> Option<f64>) -> Result<f64> {
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            let coef = c.to_f64().unwrap_or(f64::NAN);
            acc += coef * m.eval(values)?;
        }
        Ok(acc)
    }

    pub fn eval(&self, values: &BTreeMap<String, f64>) -> Result<f64> {
        self.eval_with(&|s| values.get(s).copied())
    }

    fn leading(&self) -> Option<(&Monomial, &Rational)> {
        self.terms.iter().max_by(|a, b| a.0.grlex_cmp(b.0))
    }

    /// Exact quotient `self / divisor`, or `None` if the division leaves a remainder.
    pub fn div_exact(&self, divisor: &PolyExpr) -> Option<PolyExpr> {
        let (dm, dc) = divisor.leading()?;
        let (dm, dc) = (dm.clone(), *dc);
        let mut rest = self.clone();
        let mut quotient = PolyExpr::zero();
        let mut guard = 0usize;
        while let Some((m, c)) = rest.leading() {
            guard += 1;
            if guard > 100_000 {
                return None;
            }
            let qm = m.div(&dm)?;
            let qc = *c / dc;
            let mut step = PolyExpr::zero();
            step.add_term(qm, qc);
            rest = &rest - &(&step * divisor);
            quotient = &quotient + &step;
        }
        Some(quotient)
    }

    pub fn parse(input: &str) -> Result<Self> {
        Parser::new(input).parse_all()
    }
}

fn fmt_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

impl fmt::Display for PolyExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.terms.iter().enumerate() {
            let negative = c.is_negative();
            let mag = c.abs();
            match (i, negative) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            if m.is_one() {
                write!(f, "{}", fmt_rational(&mag))?;
            } else if mag.is_one() {
                write!(f, "{m}")?;
            } else {
                write!(f, "{}*{m}", fmt_rational(&mag))?;
            }
        }
        Ok(())
    }
}

impl Serialize for PolyExpr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PolyExpr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        PolyExpr::parse(&s).map_err(serde::de::Error::custom)
    }
}

impl std::str::FromStr for PolyExpr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PolyExpr::parse(s)
    }
}

impl Add for &PolyExpr {
    type Output = PolyExpr;
    fn add(self, rhs: &PolyExpr) -> PolyExpr {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), *c);
        }
        out
    }
}

impl Sub for &PolyExpr {
    type Output = PolyExpr;
    fn sub(self, rhs: &PolyExpr) -> PolyExpr {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), -*c);
        }
        out
    }
}

impl Mul for &PolyExpr {
    type Output = PolyExpr;
    fn mul(self, rhs: &PolyExpr) -> PolyExpr {
        let mut out = PolyExpr::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &rhs.terms {
                out.add_term(m1.mul(m2), *c1 * *c2);
            }
        }
        out
    }
}

impl Neg for &PolyExpr {
    type Output = PolyExpr;
    fn neg(self) -> PolyExpr {
        PolyExpr {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -*c)).collect(),
        }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $method:ident) => {
        impl $tr for PolyExpr {
            type Output = PolyExpr;
            fn $method(self, rhs: PolyExpr) -> PolyExpr {
                (&self).$method(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for PolyExpr {
    type Output = PolyExpr;
    fn neg(self) -> PolyExpr {
        -&self
    }
}

/// Ratio of two polynomials, kept unsimplified unless the division is exact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalExpr {
    pub numerator: PolyExpr,
    pub denominator: PolyExpr,
}

impl RationalExpr {
    pub fn new(numerator: PolyExpr, denominator: PolyExpr) -> Self {
        Self { numerator, denominator }
    }

    /// Cross-multiplied equality with a polynomial.
    pub fn equals_poly(&self, p: &PolyExpr) -> bool {
        self.numerator == &self.denominator * p
    }

    pub fn simplified(&self) -> Option<PolyExpr> {
        self.numerator.div_exact(&self.denominator)
    }

    pub fn eval(&self, values: &BTreeMap<String, f64>) -> Result<f64> {
        Ok(self.numerator.eval(values)? / self.denominator.eval(values)?)
    }
}

impl fmt::Display for RationalExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = self.simplified() {
            return write!(f, "{p}");
        }
        write!(f, "({}) / ({})", self.numerator, self.denominator)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(Rational),
    Ident(String),
    Op(char),
}

struct Parser<'a> {
    input: &'a str,
    tokens: Vec<Token>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(input: &'a str) -> Self {
        Self { input, tokens: Vec::new(), pos: 0 }
    }

    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Parse { input: self.input.to_string(), reason: reason.into() }
    }

    fn tokenize(&mut self) -> Result<()> {
        let chars: Vec<char> = self.input.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || c == '.' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let value: f64 = text.parse().map_err(|_| self.err(format!("bad number `{text}`")))?;
                let r = if text.contains('.') {
                    Rational::approximate_float(value).ok_or_else(|| self.err("number out of range"))?
                } else {
                    Rational::from_integer(text.parse::<i64>().map_err(|_| self.err("integer out of range"))?)
                };
                self.tokens.push(Token::Num(r));
            } else if c.is_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                self.tokens.push(Token::Ident(chars[start..i].iter().collect()));
            } else if "+-*/^()".contains(c) {
                self.tokens.push(Token::Op(c));
                i += 1;
            } else {
                return Err(self.err(format!("unexpected character `{c}`")));
            }
        }
        Ok(())
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn parse_all(mut self) -> Result<PolyExpr> {
        self.tokenize()?;
        if self.tokens.is_empty() {
            return Err(self.err("empty expression"));
        }
        let p = self.expr()?;
        if self.pos != self.tokens.len() {
            return Err(self.err("trailing input"));
        }
        Ok(p)
    }

    fn expr(&mut self) -> Result<PolyExpr> {
        let mut acc = match self.peek() {
            Some(Token::Op('-')) => {
                self.pos += 1;
                -self.term()?
            }
            Some(Token::Op('+')) => {
                self.pos += 1;
                self.term()?
            }
            _ => self.term()?,
        };
        while let Some(Token::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let t = self.term()?;
            acc = if op == '+' { &acc + &t } else { &acc - &t };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<PolyExpr> {
        let mut acc = self.power()?;
        loop {
            match self.peek() {
                Some(Token::Op('*')) => {
                    self.pos += 1;
                    acc = &acc * &self.power()?;
                }
                Some(Token::Op('/')) => {
                    self.pos += 1;
                    let d = self.power()?;
                    let c = d
                        .as_constant()
                        .filter(|c| !c.is_zero())
                        .ok_or_else(|| self.err("division only by non-zero numbers"))?;
                    acc = &acc * &PolyExpr::constant(c.recip());
                }
                _ => return Ok(acc),
            }
        }
    }

    fn power(&mut self) -> Result<PolyExpr> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            match self.next() {
                Some(Token::Num(r)) if r.is_integer() && *r.numer() >= 0 => {
                    let e = r.numer().to_u32().ok_or_else(|| self.err("exponent too large"))?;
                    return Ok(base.pow(e));
                }
                _ => return Err(self.err("exponent must be a non-negative integer")),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<PolyExpr> {
        match self.next() {
            Some(Token::Num(r)) => Ok(PolyExpr::constant(r)),
            Some(Token::Ident(s)) => Ok(PolyExpr::symbol(&s)),
            Some(Token::Op('(')) => {
                let p = self.expr()?;
                match self.next() {
                    Some(Token::Op(')')) => Ok(p),
                    _ => Err(self.err("missing `)`")),
                }
            }
            Some(Token::Op('-')) => Ok(-self.atom()?),
            _ => Err(self.err("expected a number, symbol or `(`")),
        }
    }
}

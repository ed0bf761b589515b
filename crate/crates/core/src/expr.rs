//! A small expression language in one variable `z`.
//!
//! Grammar: numbers, `z`, `+ - * /`, integer powers `^`, `exp(...)`,
//! parentheses and unary minus. Expressions are evaluated on truncated
//! Taylor series, so derivatives up to order four are exact.

use std::fmt;

use crate::error::{KramersError, Result};

const MAX_DEGREE: usize = 12;

/// Coefficients `c0 + c1 z + c2 z^2 + ...`, evaluated by Horner's rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial(Vec<f64>);

impl Polynomial {
    #[inline]
    pub fn value(&self, z: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * z + c)
    }

    pub fn derivatives(&self, z: f64) -> [f64; 5] {
        let x = Jet::variable(z);
        self.0
            .iter()
            .rev()
            .fold(Jet::constant(0.0), |acc, &c| acc.mul(x).add(Jet::constant(c)))
            .derivatives()
    }
}

/// Truncated Taylor series `c0 + c1 h + ... + c4 h^4` around a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet(pub [f64; 5]);

impl Jet {
    pub fn constant(c: f64) -> Self {
        Jet([c, 0.0, 0.0, 0.0, 0.0])
    }

    pub fn variable(z: f64) -> Self {
        Jet([z, 1.0, 0.0, 0.0, 0.0])
    }

    /// Derivatives `f, f', f'', f''', f''''` at the expansion point.
    pub fn derivatives(&self) -> [f64; 5] {
        let c = self.0;
        [c[0], c[1], 2.0 * c[2], 6.0 * c[3], 24.0 * c[4]]
    }

    fn add(self, o: Jet) -> Jet {
        let mut r = self.0;
        for (x, y) in r.iter_mut().zip(o.0) {
            *x += y;
        }
        Jet(r)
    }

    fn sub(self, o: Jet) -> Jet {
        let mut r = self.0;
        for (x, y) in r.iter_mut().zip(o.0) {
            *x -= y;
        }
        Jet(r)
    }

    fn neg(self) -> Jet {
        Jet(self.0.map(|x| -x))
    }

    fn mul(self, o: Jet) -> Jet {
        let (a, b) = (self.0, o.0);
        let mut r = [0.0; 5];
        for i in 0..5 {
            for j in 0..=i {
                r[i] += a[j] * b[i - j];
            }
        }
        Jet(r)
    }

    fn recip(self) -> Result<Jet> {
        let a = self.0;
        if a[0] == 0.0 {
            return Err(KramersError::Expression("division by zero".into()));
        }
        let mut r = [0.0; 5];
        r[0] = 1.0 / a[0];
        for i in 1..5 {
            let mut s = 0.0;
            for j in 1..=i {
                s += a[j] * r[i - j];
            }
            r[i] = -s / a[0];
        }
        Ok(Jet(r))
    }

    fn exp(self) -> Jet {
        let a = self.0;
        let mut r = [0.0; 5];
        r[0] = a[0].exp();
        // r' = a' r  =>  k r_k = sum_{j=1..k} j a_j r_{k-j}
        for k in 1..5 {
            let mut s = 0.0;
            for j in 1..=k {
                s += j as f64 * a[j] * r[k - j];
            }
            r[k] = s / k as f64;
        }
        Jet(r)
    }

    fn powi(self, n: i32) -> Result<Jet> {
        let mut base = if n < 0 { self.recip()? } else { self };
        let mut e = n.unsigned_abs();
        let mut acc = Jet::constant(1.0);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(base);
            }
            base = base.mul(base);
            e >>= 1;
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, i32),
    Exp(Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(KramersError::Expression(format!(
                "unexpected token {:?} in `{src}`",
                p.tokens[p.pos]
            )));
        }
        Ok(e.simplify())
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var => z,
            Expr::Add(a, b) => a.eval(z) + b.eval(z),
            Expr::Sub(a, b) => a.eval(z) - b.eval(z),
            Expr::Mul(a, b) => a.eval(z) * b.eval(z),
            Expr::Div(a, b) => a.eval(z) / b.eval(z),
            Expr::Neg(a) => -a.eval(z),
            Expr::Pow(a, n) => a.eval(z).powi(*n),
            Expr::Exp(a) => a.eval(z).exp(),
        }
    }

    /// Coefficients of the expression when it is a polynomial in `z` of modest degree.
    pub fn polynomial(&self) -> Option<Polynomial> {
        self.coefficients().map(Polynomial)
    }

    fn coefficients(&self) -> Option<Vec<f64>> {
        let combine = |a: Vec<f64>, b: Vec<f64>, sign: f64| {
            let mut out = vec![0.0; a.len().max(b.len())];
            for (i, c) in a.iter().enumerate() {
                out[i] += c;
            }
            for (i, c) in b.iter().enumerate() {
                out[i] += sign * c;
            }
            out
        };
        let product = |a: &[f64], b: &[f64]| {
            let mut out = vec![0.0; a.len() + b.len() - 1];
            for (i, x) in a.iter().enumerate() {
                for (k, y) in b.iter().enumerate() {
                    out[i + k] += x * y;
                }
            }
            out
        };
        let c = match self {
            Expr::Const(c) => vec![*c],
            Expr::Var => vec![0.0, 1.0],
            Expr::Add(a, b) => combine(a.coefficients()?, b.coefficients()?, 1.0),
            Expr::Sub(a, b) => combine(a.coefficients()?, b.coefficients()?, -1.0),
            Expr::Mul(a, b) => product(&a.coefficients()?, &b.coefficients()?),
            Expr::Div(a, b) if !b.depends_on_z() => {
                let d = b.eval(0.0);
                a.coefficients()?.into_iter().map(|c| c / d).collect()
            }
            Expr::Neg(a) => a.coefficients()?.into_iter().map(|c| -c).collect(),
            Expr::Pow(a, n) if *n >= 0 => {
                let base = a.coefficients()?;
                (0..*n).try_fold(vec![1.0], |acc, _| {
                    (acc.len() + base.len() - 1 <= MAX_DEGREE + 1).then(|| product(&acc, &base))
                })?
            }
            _ => return None,
        };
        (c.len() <= MAX_DEGREE + 1 && c.iter().all(|v| v.is_finite())).then_some(c)
    }

    pub fn eval_jet(&self, z: Jet) -> Result<Jet> {
        Ok(match self {
            Expr::Const(c) => Jet::constant(*c),
            Expr::Var => z,
            Expr::Add(a, b) => a.eval_jet(z)?.add(b.eval_jet(z)?),
            Expr::Sub(a, b) => a.eval_jet(z)?.sub(b.eval_jet(z)?),
            Expr::Mul(a, b) => a.eval_jet(z)?.mul(b.eval_jet(z)?),
            Expr::Div(a, b) => a.eval_jet(z)?.mul(b.eval_jet(z)?.recip()?),
            Expr::Neg(a) => a.eval_jet(z)?.neg(),
            Expr::Pow(a, n) => a.eval_jet(z)?.powi(*n)?,
            Expr::Exp(a) => a.eval_jet(z)?.exp(),
        })
    }

    /// Value and the first four derivatives at `z`.
    pub fn derivatives(&self, z: f64) -> Result<[f64; 5]> {
        Ok(self.eval_jet(Jet::variable(z))?.derivatives())
    }

    pub fn depends_on_z(&self) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var => true,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.depends_on_z() || b.depends_on_z()
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Exp(a) => a.depends_on_z(),
        }
    }

    fn simplify(self) -> Expr {
        if !self.depends_on_z() {
            return Expr::Const(self.eval(0.0));
        }
        match self {
            Expr::Add(a, b) => Expr::Add(Box::new(a.simplify()), Box::new(b.simplify())),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.simplify()), Box::new(b.simplify())),
            Expr::Mul(a, b) => Expr::Mul(Box::new(a.simplify()), Box::new(b.simplify())),
            Expr::Div(a, b) => Expr::Div(Box::new(a.simplify()), Box::new(b.simplify())),
            Expr::Neg(a) => Expr::Neg(Box::new(a.simplify())),
            Expr::Pow(a, n) => Expr::Pow(Box::new(a.simplify()), n),
            Expr::Exp(a) => Expr::Exp(Box::new(a.simplify())),
            other => other,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var => write!(f, "z"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Pow(a, n) => write!(f, "({a})^{n}"),
            Expr::Exp(a) => write!(f, "exp({a})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Z,
    Exp,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1
            }
            '-' | '\u{2212}' => {
                out.push(Token::Minus);
                i += 1
            }
            '*' | '\u{d7}' => {
                out.push(Token::Star);
                i += 1
            }
            '/' => {
                out.push(Token::Slash);
                i += 1
            }
            '^' => {
                out.push(Token::Caret);
                i += 1
            }
            '(' => {
                out.push(Token::LParen);
                i += 1
            }
            ')' => {
                out.push(Token::RParen);
                i += 1
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let s: String = chars[start..i].iter().collect();
                let v = s
                    .parse::<f64>()
                    .map_err(|_| KramersError::Expression(format!("bad number `{s}`")))?;
                out.push(Token::Num(v));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                match word.as_str() {
                    "z" => out.push(Token::Z),
                    "exp" => out.push(Token::Exp),
                    _ => {
                        return Err(KramersError::Expression(format!("unknown identifier `{word}`")))
                    }
                }
            }
            other => {
                return Err(KramersError::Expression(format!("unexpected character `{other}`")))
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, t: Token) -> Result<()> {
        match self.next() {
            Some(ref got) if *got == t => Ok(()),
            got => Err(KramersError::Expression(format!("expected {t:?}, found {got:?}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Token::Slash) => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Token::Minus) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(Token::Plus) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(&Token::Caret) {
            self.pos += 1;
            let exponent = self.unary()?;
            if exponent.depends_on_z() {
                return Err(KramersError::Expression("exponent must be a constant".into()));
            }
            let e = exponent.eval(0.0);
            if e.fract() != 0.0 || e.abs() > 64.0 {
                return Err(KramersError::Expression(format!(
                    "only integer exponents up to 64 are supported, got {e}"
                )));
            }
            return Ok(Expr::Pow(Box::new(base), e as i32));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::Z) => Ok(Expr::Var),
            Some(Token::Exp) => {
                self.expect(Token::LParen)?;
                let inner = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(Expr::Exp(Box::new(inner)))
            }
            Some(Token::LParen) => {
                let inner = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(inner)
            }
            other => Err(KramersError::Expression(format!("unexpected {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_evaluates_quartic() {
        let e = Expr::parse("z^4/4 - z^2/2").unwrap();
        assert!((e.eval(2.0) - 2.0).abs() < 1e-15);
        let d = e.derivatives(2.0).unwrap();
        assert_eq!(d, [2.0, 6.0, 11.0, 12.0, 6.0]);
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        let e = Expr::parse("-z^2").unwrap();
        assert_eq!(e.eval(3.0), -9.0);
        let e = Expr::parse("2^-1").unwrap();
        assert_eq!(e, Expr::Const(0.5));
    }

    #[test]
    fn exp_derivatives_match_closed_form() {
        let e = Expr::parse("exp(-z^2)").unwrap();
        let z: f64 = 0.7;
        let g = (-z * z).exp();
        let d = e.derivatives(z).unwrap();
        let exact = [
            g,
            -2.0 * z * g,
            (4.0 * z * z - 2.0) * g,
            (12.0 * z - 8.0 * z.powi(3)) * g,
            (16.0 * z.powi(4) - 48.0 * z * z + 12.0) * g,
        ];
        for k in 0..5 {
            assert!((d[k] - exact[k]).abs() < 1e-13, "order {k}");
        }
    }

    #[test]
    fn division_and_negative_powers() {
        let e = Expr::parse("1/(1+z^2)").unwrap();
        let f = Expr::parse("(1+z^2)^-1").unwrap();
        let a = e.derivatives(0.3).unwrap();
        let b = f.derivatives(0.3).unwrap();
        for k in 0..5 {
            assert!((a[k] - b[k]).abs() < 1e-12);
        }
        // d/dz (1+z^2)^-1 = -2z/(1+z^2)^2
        assert!((a[1] + 0.6 / 1.09f64.powi(2)).abs() < 1e-14);
    }

    #[test]
    fn scientific_notation_and_errors() {
        assert_eq!(Expr::parse("1.5e-1*z").unwrap().eval(2.0), 0.3);
        assert!(Expr::parse("sin(z)").is_err());
        assert!(Expr::parse("z^z").is_err());
        assert!(Expr::parse("z^0.5").is_err());
        assert!(Expr::parse("(z").is_err());
        assert!(Expr::parse("z z").is_err());
    }

    #[test]
    fn polynomial_form_agrees_with_tree() {
        let e = Expr::parse("(z - 1)^2 * (z^2 + 3)/4 - 2*z").unwrap();
        let p = e.polynomial().unwrap();
        for z in [-2.5, -0.3, 0.0, 1.7] {
            assert!((p.value(z) - e.eval(z)).abs() < 1e-12);
            let (a, b) = (p.derivatives(z), e.derivatives(z).unwrap());
            for k in 0..5 {
                assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
        assert!(Expr::parse("z^2 + exp(-z^2)").unwrap().polynomial().is_none());
        assert!(Expr::parse("1/z").unwrap().polynomial().is_none());
    }
}

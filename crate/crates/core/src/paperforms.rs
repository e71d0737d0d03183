//! Printed closed forms in `p`, evaluated exactly, and a checker that compares
//! them against the constructive pipeline.
//!
//! Formulas are kept as strings such as `"-(p^3-p^2+8)/12"` and parsed into a
//! pair of integer-coefficient polynomials.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::arakelov::{divisor_set, gauge_fix, Cusp, VerticalDivisor};
use crate::contract::{adjunction_vector, canonical_on_target, minimal_model};
use crate::error::{invalid, Result};
use crate::fiber::{edixhoven_fiber, Label, Stage};
use crate::numth::{genus_x0_general, genus_x0_prime_power, PrimeContext};
use crate::ratlin::{ExactRational, RatMatrix};

/// Polynomial in `p`, lowest degree first.
type Poly = Vec<ExactRational>;

fn poly_trim(mut a: Poly) -> Poly {
    while a.last().is_some_and(ExactRational::is_zero) {
        a.pop();
    }
    a
}

fn poly_add(a: &Poly, b: &Poly, sign: i64) -> Poly {
    let s = ExactRational::from(sign);
    let mut out = vec![ExactRational::zero(); a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, x) in b.iter().enumerate() {
        out[i] += &s * x;
    }
    poly_trim(out)
}

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![ExactRational::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    poly_trim(out)
}

#[derive(Clone)]
struct Frac {
    num: Poly,
    den: Poly,
}

impl Frac {
    fn constant(c: ExactRational) -> Frac {
        Frac {
            num: poly_trim(vec![c]),
            den: vec![ExactRational::one()],
        }
    }

    fn var() -> Frac {
        Frac {
            num: vec![ExactRational::zero(), ExactRational::one()],
            den: vec![ExactRational::one()],
        }
    }

    fn add(&self, o: &Frac, sign: i64) -> Frac {
        Frac {
            num: poly_add(&poly_mul(&self.num, &o.den), &poly_mul(&o.num, &self.den), sign),
            den: poly_mul(&self.den, &o.den),
        }
    }

    fn mul(&self, o: &Frac) -> Frac {
        Frac {
            num: poly_mul(&self.num, &o.num),
            den: poly_mul(&self.den, &o.den),
        }
    }

    fn div(&self, o: &Frac) -> Result<Frac> {
        if o.num.is_empty() {
            return Err(invalid("division by the zero polynomial"));
        }
        Ok(Frac {
            num: poly_mul(&self.num, &o.den),
            den: poly_mul(&self.den, &o.num),
        })
    }
}

struct Parser<'a> {
    s: &'a [u8],
    i: usize,
}

impl Parser<'_> {
    fn peek(&mut self) -> Option<u8> {
        while self.s.get(self.i) == Some(&b' ') {
            self.i += 1;
        }
        self.s.get(self.i).copied()
    }

    fn err(&self, what: &str) -> crate::error::Error {
        invalid(format!(
            "{what} at byte {} of {:?}",
            self.i,
            String::from_utf8_lossy(self.s)
        ))
    }

    fn expr(&mut self) -> Result<Frac> {
        let mut acc = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.i += 1;
            let t = self.term()?;
            acc = acc.add(&t, if c == b'+' { 1 } else { -1 });
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Frac> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.i += 1;
                    acc = acc.mul(&self.unary()?);
                }
                Some(b'/') => {
                    self.i += 1;
                    acc = acc.div(&self.unary()?)?;
                }
                // implicit product, as in 3p or p(p-1)
                Some(b'(' | b'p' | b'0'..=b'9') => acc = acc.mul(&self.power()?),
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Frac> {
        if self.peek() == Some(b'-') {
            self.i += 1;
            let v = self.unary()?;
            return Ok(Frac::constant(ExactRational::zero()).add(&v, -1));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Frac> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.i += 1;
            let e = self.integer()?;
            let e: usize = e.try_into().map_err(|_| self.err("exponent too large"))?;
            let mut out = Frac::constant(ExactRational::one());
            for _ in 0..e {
                out = out.mul(&base);
            }
            return Ok(out);
        }
        Ok(base)
    }

    fn integer(&mut self) -> Result<BigInt> {
        self.peek();
        let start = self.i;
        while self.s.get(self.i).is_some_and(u8::is_ascii_digit) {
            self.i += 1;
        }
        if start == self.i {
            return Err(self.err("expected a number"));
        }
        let digits = std::str::from_utf8(&self.s[start..self.i]).expect("ascii digits");
        Ok(digits.parse().expect("digits parse"))
    }

    fn atom(&mut self) -> Result<Frac> {
        match self.peek() {
            Some(b'p') => {
                self.i += 1;
                Ok(Frac::var())
            }
            Some(b'(') => {
                self.i += 1;
                let v = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.i += 1;
                Ok(v)
            }
            Some(b'0'..=b'9') => Ok(Frac::constant(ExactRational::from(self.integer()?))),
            _ => Err(self.err("unexpected token")),
        }
    }
}

/// A printed formula in `p`, stored as numerator and denominator polynomials
/// with integer coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClosedForm {
    pub description: String,
    pub source: String,
    num: Vec<BigInt>,
    den: Vec<BigInt>,
}

impl ClosedForm {
    pub fn parse(description: impl Into<String>, source: &str) -> Result<Self> {
        let mut parser = Parser {
            s: source.as_bytes(),
            i: 0,
        };
        let f = parser.expr()?;
        if parser.peek().is_some() {
            return Err(parser.err("trailing input"));
        }
        if f.den.is_empty() {
            return Err(invalid(format!("zero denominator in {source:?}")));
        }
        // clear coefficient denominators so both sides have integer coefficients
        let l = f
            .num
            .iter()
            .chain(&f.den)
            .fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
        let scale = |p: &Poly| -> Vec<BigInt> {
            p.iter()
                .map(|c| (c * ExactRational::from(l.clone())).to_integer().expect("cleared"))
                .collect()
        };
        let (mut num, mut den) = (scale(&f.num), scale(&f.den));
        if den.last().is_some_and(Signed::is_negative) {
            num.iter_mut().for_each(|c| *c = -&*c);
            den.iter_mut().for_each(|c| *c = -&*c);
        }
        Ok(ClosedForm {
            description: description.into(),
            source: source.to_string(),
            num,
            den,
        })
    }

    pub fn eval(&self, p: &BigInt) -> Result<ExactRational> {
        let horner = |c: &[BigInt]| c.iter().rev().fold(BigInt::zero(), |acc, x| acc * p + x);
        let d = horner(&self.den);
        if d.is_zero() {
            return Err(invalid(format!("{} has a pole at p = {p}", self.description)));
        }
        crate::ratlin::rat(horner(&self.num), d)
    }
}

impl fmt::Display for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.description, self.source)
    }
}

fn eval_str(desc: &str, s: &str, p: &BigInt) -> ExactRational {
    ClosedForm::parse(desc, s)
        .and_then(|f| f.eval(p))
        .unwrap_or_else(|e| panic!("bad table entry {s:?}: {e}"))
}

type Table = &'static [&'static [&'static str]];

#[rustfmt::skip]
const ED3_1: Table = &[
    &["-p^2(p-1)/12", "(p-1)/12", "p(p-1)/12", "(p-1)/12", "0", "0", "0", "0"],
    &["(p-1)/12", "-p^2(p-1)/12", "(p-1)/12", "p(p-1)/12", "0", "0", "0", "0"],
    &["p(p-1)/12", "(p-1)/12", "-(p+5)/6", "(p-1)/12", "1", "0", "1", "0"],
    &["(p-1)/12", "p(p-1)/12", "(p-1)/12", "-(p+5)/6", "0", "1", "0", "1"],
    &["0", "0", "1", "0", "-2", "0", "0", "0"],
    &["0", "0", "0", "1", "0", "-2", "0", "0"],
    &["0", "0", "1", "0", "0", "0", "-3", "0"],
    &["0", "0", "0", "1", "0", "0", "0", "-3"],
];

#[rustfmt::skip]
const ED3_5: Table = &[
    &["-(p^3-p^2+8)/12", "(p-5)/12", "(p^2-p-8)/12", "(p-5)/12", "0", "0", "1", "0"],
    &["(p-5)/12", "-(p^3-p^2+8)/12", "(p-5)/12", "(p^2-p-8)/12", "0", "0", "0", "1"],
    &["(p^2-p-8)/12", "(p-5)/12", "-(p+7)/6", "(p-5)/12", "1", "0", "1", "0"],
    &["(p-5)/12", "(p^2-p-8)/12", "(p-5)/12", "-(p+7)/6", "0", "1", "0", "1"],
    &["0", "0", "1", "0", "-2", "0", "0", "0"],
    &["0", "0", "0", "1", "0", "-2", "0", "0"],
    &["1", "0", "1", "0", "0", "0", "-2", "1"],
    &["0", "1", "0", "1", "0", "0", "1", "-2"],
];

#[rustfmt::skip]
const ED3_7: Table = &[
    &["-(p^3-p^2+6)/12", "(p-7)/12", "(p^2-p-6)/12", "(p-7)/12", "1", "0", "0"],
    &["(p-7)/12", "-(p^3-p^2+6)/12", "(p-7)/12", "(p^2-p-6)/12", "1", "0", "0"],
    &["(p^2-p-6)/12", "(p-7)/12", "-(p+5)/6", "(p-7)/12", "1", "1", "0"],
    &["(p-7)/12", "(p^2-p-6)/12", "(p-7)/12", "-(p+5)/6", "1", "0", "1"],
    &["1", "1", "1", "1", "-2", "0", "0"],
    &["0", "0", "1", "0", "0", "-3", "0"],
    &["0", "0", "0", "1", "0", "0", "-3"],
];

#[rustfmt::skip]
const ED3_11: Table = &[
    &["-(p^3-p^2+14)/12", "(p-11)/12", "(p^2-p-14)/12", "(p-11)/12", "1", "1", "0"],
    &["(p-11)/12", "-(p^3-p^2+14)/12", "(p-11)/12", "(p^2-p-14)/12", "1", "0", "1"],
    &["(p^2-p-14)/12", "(p-11)/12", "-(p+7)/6", "(p-11)/12", "1", "1", "0"],
    &["(p-11)/12", "(p^2-p-14)/12", "(p-11)/12", "-(p+7)/6", "1", "0", "1"],
    &["1", "1", "1", "1", "-2", "0", "0"],
    &["1", "0", "1", "0", "0", "-2", "1"],
    &["0", "1", "0", "1", "0", "1", "-2"],
];

#[rustfmt::skip]
const ED4_1: Table = &[
    &["-p^3(p-1)/12", "(p-1)/12", "p^2(p-1)/12", "(p-1)/12", "(p-1)/12", "0", "0", "0", "0", "0", "0"],
    &["(p-1)/12", "-p^3(p-1)/12", "(p-1)/12", "p^2(p-1)/12", "(p-1)/12", "0", "0", "0", "0", "0", "0"],
    &["p^2(p-1)/12", "(p-1)/12", "-(p^2+5)/6", "(p-1)/12", "(p-1)/12", "1", "0", "0", "1", "0", "0"],
    &["(p-1)/12", "p^2(p-1)/12", "(p-1)/12", "-(p^2+5)/6", "(p-1)/12", "0", "0", "1", "0", "0", "1"],
    &["(p-1)/12", "(p-1)/12", "(p-1)/12", "(p-1)/12", "-1", "0", "1", "0", "0", "1", "0"],
    &["0", "0", "1", "0", "0", "-2", "0", "0", "0", "0", "0"],
    &["0", "0", "0", "0", "1", "0", "-2", "0", "0", "0", "0"],
    &["0", "0", "0", "1", "0", "0", "0", "-2", "0", "0", "0"],
    &["0", "0", "1", "0", "0", "0", "0", "0", "-3", "0", "0"],
    &["0", "0", "0", "0", "1", "0", "0", "0", "0", "-3", "0"],
    &["0", "0", "0", "1", "0", "0", "0", "0", "0", "0", "-3"],
];

// The two (p^2+5) diagonal entries carry denominator 6; with 12 the row
// no longer annihilates the multiplicity vector.
#[rustfmt::skip]
const ED4_5: Table = &[
    &["-(p^4-p^3+4)/12", "(p-5)/12", "(p^3-p^2-4)/12", "(p-5)/12", "(p-5)/12", "0", "0", "0", "1"],
    &["(p-5)/12", "-(p^4-p^3+4)/12", "(p-5)/12", "(p^3-p^2-4)/12", "(p-5)/12", "0", "0", "0", "1"],
    &["(p^3-p^2-4)/12", "(p-5)/12", "-(p^2+5)/6", "(p-5)/12", "(p-5)/12", "1", "0", "0", "1"],
    &["(p-5)/12", "(p^3-p^2-4)/12", "(p-5)/12", "-(p^2+5)/6", "(p-5)/12", "0", "0", "1", "1"],
    &["(p-5)/12", "(p-5)/12", "(p-5)/12", "(p-5)/12", "-1", "0", "1", "0", "1"],
    &["0", "0", "1", "0", "0", "-2", "0", "0", "0"],
    &["0", "0", "0", "0", "1", "0", "-2", "0", "0"],
    &["0", "0", "0", "1", "0", "0", "0", "-2", "0"],
    &["1", "1", "1", "1", "1", "0", "0", "0", "-3"],
];

#[rustfmt::skip]
const ED4_7: Table = &[
    &["-(p^4-p^3+6)/12", "(p-7)/12", "(p^3-p^2-6)/12", "(p-7)/12", "(p-7)/12", "1", "0", "0", "0"],
    &["(p-7)/12", "-(p^4-p^3+6)/12", "(p-7)/12", "(p^3-p^2-6)/12", "(p-7)/12", "1", "0", "0", "0"],
    &["(p^3-p^2-6)/12", "(p-7)/12", "-(p^2+5)/6", "(p-7)/12", "(p-7)/12", "1", "1", "0", "0"],
    &["(p-7)/12", "(p^3-p^2-6)/12", "(p-7)/12", "-(p^2+5)/6", "(p-7)/12", "1", "0", "0", "1"],
    &["(p-7)/12", "(p-7)/12", "(p-7)/12", "(p-7)/12", "-1", "1", "0", "1", "0"],
    &["1", "1", "1", "1", "1", "-2", "0", "0", "0"],
    &["0", "0", "1", "0", "0", "0", "-3", "0", "0"],
    &["0", "0", "0", "0", "1", "0", "0", "-3", "0"],
    &["0", "0", "0", "1", "0", "0", "0", "0", "-3"],
];

#[rustfmt::skip]
const ED4_11: Table = &[
    &["-(p^4-p^3+10)/12", "(p-11)/12", "(p^3-p^2-10)/12", "(p-11)/12", "(p-11)/12", "1", "1"],
    &["(p-11)/12", "-(p^4-p^3+10)/12", "(p-11)/12", "(p^3-p^2-10)/12", "(p-11)/12", "1", "1"],
    &["(p^3-p^2-10)/12", "(p-11)/12", "-(p^2+5)/6", "(p-11)/12", "(p-11)/12", "1", "1"],
    &["(p-11)/12", "(p^3-p^2-10)/12", "(p-11)/12", "-(p^2+5)/6", "(p-11)/12", "1", "1"],
    &["(p-11)/12", "(p-11)/12", "(p-11)/12", "(p-11)/12", "-1", "1", "1"],
    &["1", "1", "1", "1", "1", "-2", "0"],
    &["1", "1", "1", "1", "1", "0", "-3"],
];

const MA: &str = "-(2p^4-2p^3-p^2+2p-1)/24";
const MB: &str = "(p^2-1)/24";
const MD: &str = "(2p^3-p^2-2p+1)/24";

#[rustfmt::skip]
const MIN_1: Table = &[
    &[MA, MB, MD, MB, "0", "0", "0", "0"],
    &[MB, MA, MB, MD, "0", "0", "0", "0"],
    &[MD, MB, "-(3p^2+2p+19)/24", MB, "1", "0", "1", "0"],
    &[MB, MD, MB, "-(3p^2+2p+19)/24", "0", "1", "0", "1"],
    &["0", "0", "1", "0", "-2", "0", "0", "0"],
    &["0", "0", "0", "1", "0", "-2", "0", "0"],
    &["0", "0", "1", "0", "0", "0", "-3", "0"],
    &["0", "0", "0", "1", "0", "0", "0", "-3"],
];

#[rustfmt::skip]
const MIN_5: Table = &[
    &[MA, MB, MD, MB, "0", "0"],
    &[MB, MA, MB, MD, "0", "0"],
    &[MD, MB, "-(3p^2+2p+11)/24", MB, "1", "0"],
    &[MB, MD, MB, "-(3p^2+2p+11)/24", "0", "1"],
    &["0", "0", "1", "0", "-2", "0"],
    &["0", "0", "0", "1", "0", "-2"],
];

#[rustfmt::skip]
const MIN_7: Table = &[
    &[MA, MB, MD, MB, "0", "0"],
    &[MB, MA, MB, MD, "0", "0"],
    &[MD, MB, "-(3p^2+2p+7)/24", MB, "1", "0"],
    &[MB, MD, MB, "-(3p^2+2p+7)/24", "0", "1"],
    &["0", "0", "1", "0", "-3", "0"],
    &["0", "0", "0", "1", "0", "-3"],
];

#[rustfmt::skip]
const MIN_11: Table = &[
    &[MA, MB, MD, MB],
    &[MB, MA, MB, MD],
    &[MD, MB, "-(3p^2+2p-1)/24", MB],
    &[MB, MD, MB, "-(3p^2+2p-1)/24"],
];

/// Vertical divisor coefficients `(V_0, V_inf)` in component order.
type Pair = (&'static [&'static str], &'static [&'static str]);

#[rustfmt::skip]
const VM3_1: Pair = (
    &[
        "(2p^4-2p^3-16p^2-16p+14)/(p^4-p^2)",
        "(-p^3-4p^2+21p+14)/(p^3-p)",
        "(p^4-p^3-14p^2-2p+14)/(p^3+p^2)",
        "-1",
        "(p^4/2-p^3/2-7p^2-p+7)/(p^3+p^2)",
        "-1/2",
        "(p^4/3-13p^2/3-2p/3+14/3)/(p^3+p^2)",
        "0",
    ],
    &[
        "(-2p^4-4p^3+34p^2+16p-14)/(p^4-p^2)",
        "(p^3-2p^2-3p-14)/(p^3-p)",
        "(-p^4-p^3+12p^2+2p-14)/(p^3+p^2)",
        "-1",
        "(-p^4/2-p^3/2+6p^2+p-7)/(p^3+p^2)",
        "-1/2",
        "(-p^4/3+13p^2/3+2p/3-14/3)/(p^3+p^2)",
        "0",
    ],
);

#[rustfmt::skip]
const VM3_5: Pair = (
    &[
        "(5p^4/3-2p^3/3-25p^2/3-16p+2)/(p^4-p^2)",
        "(-4p^4/3-8p^3/3+86p^2/3-10p-4)/(p^4-p^2)",
        "(2p^4/3+p^3/3-19p^2/3-10p+2)/(p^3+p^2)",
        "(-p^4/3+p^3/3+20p^2/3-16p-4)/(p^3+p^2)",
        "(p^4/3+p^3/6-19p^2/6-5p+1)/(p^3+p^2)",
        "(-p^4/6+p^3/6+10p^2/3-8p-2)/(p^3+p^2)",
        "(p^3/3+p^2/3-4p-2)/(p^2-p)",
        "0",
    ],
    &[
        "(-5p^4/3-10p^3/3+97p^2/3-4p-2)/(p^4-p^2)",
        "(4p^4/3-4p^3/3-14p^2/3-10p+4)/(p^4-p^2)",
        "(-2p^4/3-p^3/3+31p^2/3-10p-2)/(p^3+p^2)",
        "(p^4/3-p^3/3-8p^2/3-4p+4)/(p^3+p^2)",
        "(-p^4/3-p^3/6+31p^2/6-5p-1)/(p^3+p^2)",
        "(p^4/6-p^3/6-4p^2/3-2p+2)/(p^3+p^2)",
        "(-p^3/3-p^2/3+4p+2)/(p^2-p)",
        "0",
    ],
);

#[rustfmt::skip]
const VM3_7: Pair = (
    &[
        "(2p^3-4p^2-12p+8)/(p^3-p^2)",
        "(-p^3-4p^2+21p+8)/(p^3-p)",
        "(p^4-p^3-14p^2+4p+8)/(p^3+p^2)",
        "-1",
        "(p^4/2-p^3-19p^2/2+12p+4)/(p^3-p)",
        "(p^4/3-13p^2/3+4p/3+8/3)/(p^3+p^2)",
        "0",
    ],
    &[
        "(-2p^4-4p^3+34p^2+4p-8)/(p^4-p^2)",
        "(p^3-2p^2-3p-8)/(p^3-p)",
        "(-p^4-p^3+12p^2-4p-8)/(p^3+p^2)",
        "-1",
        "(-p^4/2-p^3+7p^2/2+8p-4)/(p^3-p)",
        "(-p^4/3+13p^2/3-4p/3-8/3)/(p^3+p^2)",
        "0",
    ],
);

#[rustfmt::skip]
const VM3_11: Pair = (
    &[
        "(5p^2/3-7p/3-6)/(p^2-p)",
        "(-4p^3/3-8p^2/3+86p/3-18)/(p^3-p)",
        "(2p^2/3-p/3-6)/p",
        "(-p^3/3+p^2/3+20p/3-18)/(p^2+p)",
        "(p^2/6+p/6-2)/(p-1)",
        "(p^2/3+p/3-4)/(p-1)",
        "0",
    ],
    &[
        "(-5p^3/3-10p^2/3+97p/3-14)/(p^3-p)",
        "(4p^2/3-8p/3-2)/(p^2-p)",
        "(-2p^3/3-p^2/3+31p/3-14)/(p^2+p)",
        "(p^2/3-2p/3-2)/p",
        "(-p^2/6-p/6+2)/(p-1)",
        "(-p^2/3-p/3+4)/(p-1)",
        "0",
    ],
);

#[rustfmt::skip]
const VM4_1: Pair = (
    &[
        "(3p^5-2p^4-17p^3-30p+28)/(p^5-p^3)",
        "(-p^4-4p^3+9p^2+12p+14)/(p^4-p^2)",
        "(2p^5-p^4-15p^3-16p+28)/(p^4+p^3)",
        "-1",
        "(p^5-p^4/2-15p^3/2-8p+14)/(p^4+p^3)",
        "-1/2",
        "(2p^5/3-14p^3/3-16p/3+28/3)/(p^4+p^3)",
        "0",
    ],
    &[
        "(-3p^5-4p^4+23p^3+12p^2+30p-28)/(p^5-p^3)",
        "(p^4-2p^3-3p^2-14)/(p^4-p^2)",
        "(-2p^5-p^4+13p^3+16p-28)/(p^4+p^3)",
        "-1",
        "(-p^5-p^4/2+13p^3/2+8p-14)/(p^4+p^3)",
        "-1/2",
        "(-2p^5/3+14p^3/3+16p/3-28/3)/(p^4+p^3)",
        "0",
    ],
);

#[rustfmt::skip]
const VM4_5: Pair = (
    &[
        "(3p^5-p^4-16p^3-6p+12)/(p^5-p^3)",
        "(-p^4-3p^3+10p^2+12p+6)/(p^4-p^2)",
        "(2p^5-14p^3+12)/(p^4+p^3)",
        "0",
        "(p^5-7p^3+6)/(p^4+p^3)",
        "0",
    ],
    &[
        "0",
        "(4p^5+2p^4-26p^3-12p^2-12p+12)/(p^5-p^3)",
        "(p^4+3p^3-10p^2-12p-6)/(p^3+p^2)",
        "(3p^5+3p^4-24p^3-12p^2-6p+12)/(p^4+p^3)",
        "(p^4/2+3p^3/2-5p^2-6p-3)/(p^3+p^2)",
        "(3p^5/2+3p^4/2-12p^3-6p^2-3p+6)/(p^4+p^3)",
    ],
);

#[rustfmt::skip]
const VM4_7: Pair = (
    &[
        "(3p^5-2p^4-17p^3-12p+16)/(p^5-p^3)",
        "(-p^4-4p^3+9p^2+12p+8)/(p^4-p^2)",
        "(2p^5-p^4-15p^3-4p+16)/(p^4+p^3)",
        "-1",
        "(2p^5/3-14p^3/3-4p/3+16/3)/(p^4+p^3)",
        "0",
    ],
    &[
        "(-3p^5-4p^4+23p^3+12p^2+12p-16)/(p^5-p^3)",
        "(p^4-2p^3-3p^2-8)/(p^4-p^2)",
        "(-2p^5-p^4+13p^3+4p-16)/(p^4+p^3)",
        "-1",
        "(-2p^5/3+14p^3/3+4p/3-16/3)/(p^4+p^3)",
        "0",
    ],
);

#[rustfmt::skip]
const VM4_11: Pair = (
    &[
        "(3p^3-4p^2-12p+12)/(p^3-p^2)",
        "(-p^2-2p+12)/(p^2-p)",
        "(2p^3-2p^2-12p+12)/p^2",
        "0",
    ],
    &[
        "(-3p^3+24p-12)/(p^3-p^2)",
        "(p-2)/(p-1)",
        "(-2p^3+2p^2+12p-12)/p^2",
        "0",
    ],
);

fn c_labels(r: u32) -> Vec<Label> {
    if r == 3 {
        vec![Label::C(3, 0), Label::C(0, 3), Label::C(2, 1), Label::C(1, 2)]
    } else {
        vec![Label::C(4, 0), Label::C(0, 4), Label::C(3, 1), Label::C(1, 3)]
    }
}

/// Component labels of the printed table for `(ctx, stage)`.
pub fn oracle_labels(ctx: &PrimeContext, stage: Stage) -> Vec<Label> {
    use Label::{E, F};
    let mut out = c_labels(ctx.r);
    let tail: Vec<Label> = match (ctx.r, stage, ctx.residue) {
        (3, _, 1 | 5) => vec![E(Some(1)), E(Some(2)), F(Some(1)), F(Some(2))],
        (3, _, _) => vec![E(None), F(Some(1)), F(Some(2))],
        (_, Stage::Edixhoven, res) => {
            let mut t = vec![Label::C(2, 2)];
            t.extend(match res {
                1 => vec![E(Some(1)), E(Some(2)), E(Some(3)), F(Some(1)), F(Some(2)), F(Some(3))],
                5 => vec![E(Some(1)), E(Some(2)), E(Some(3)), F(None)],
                7 => vec![E(None), F(Some(1)), F(Some(2)), F(Some(3))],
                _ => vec![E(None), F(None)],
            });
            t
        }
        (_, Stage::Minimal, res) => match res {
            1 => vec![E(Some(1)), E(Some(3)), F(Some(1)), F(Some(3))],
            5 => vec![E(Some(1)), E(Some(3))],
            7 => vec![F(Some(1)), F(Some(3))],
            _ => vec![],
        },
    };
    out.extend(tail);
    out
}

fn table(ctx: &PrimeContext, stage: Stage) -> Table {
    match (ctx.r, stage, ctx.residue) {
        (3, _, 1) => ED3_1,
        (3, _, 5) => ED3_5,
        (3, _, 7) => ED3_7,
        (3, _, _) => ED3_11,
        (_, Stage::Edixhoven, 1) => ED4_1,
        (_, Stage::Edixhoven, 5) => ED4_5,
        (_, Stage::Edixhoven, 7) => ED4_7,
        (_, Stage::Edixhoven, _) => ED4_11,
        (_, Stage::Minimal, 1) => MIN_1,
        (_, Stage::Minimal, 5) => MIN_5,
        (_, Stage::Minimal, 7) => MIN_7,
        (_, Stage::Minimal, _) => MIN_11,
    }
}

/// The printed intersection matrix evaluated at `p`. For `r = 3` both stages
/// give the same table.
pub fn oracle_matrix(ctx: &PrimeContext, stage: Stage) -> RatMatrix {
    let p = ctx.p_big();
    let rows = table(ctx, stage)
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, s)| eval_str(&format!("matrix[{i}][{j}]"), s, &p))
                .collect()
        })
        .collect();
    RatMatrix::from_rows(rows).expect("tables are rectangular")
}

fn vm_pair(ctx: &PrimeContext) -> Pair {
    match (ctx.r, ctx.residue) {
        (3, 1) => VM3_1,
        (3, 5) => VM3_5,
        (3, 7) => VM3_7,
        (3, _) => VM3_11,
        (_, 1) => VM4_1,
        (_, 5) => VM4_5,
        (_, 7) => VM4_7,
        _ => VM4_11,
    }
}

/// Printed coefficients of `V_m` in the component order of
/// [`oracle_labels`] at the minimal stage.
pub fn oracle_vm(ctx: &PrimeContext, m: Cusp) -> Vec<ExactRational> {
    let (v0, vi) = vm_pair(ctx);
    let src = match m {
        Cusp::Zero => v0,
        Cusp::Infinity => vi,
    };
    let p = ctx.p_big();
    src.iter()
        .enumerate()
        .map(|(i, s)| eval_str(&format!("V_{m}[{i}]"), s, &p))
        .collect()
}

/// Component whose coefficient the printed `V_m` sets to 0.
pub fn paper_gauge(ctx: &PrimeContext, m: Cusp) -> Label {
    match (ctx.r, ctx.residue, m) {
        (3, ..) => Label::F(Some(2)),
        (_, 1 | 7, _) => Label::F(Some(3)),
        (_, 5, Cusp::Zero) => Label::E(Some(3)),
        (_, 5, Cusp::Infinity) => Label::C(4, 0),
        _ => Label::C(1, 3),
    }
}

/// Printed coefficients of `(C22, E-image, F-image)` in `pi^* C'(a, b)`.
pub fn oracle_pullback_row(ctx: &PrimeContext) -> Option<[ExactRational; 3]> {
    if ctx.r != 4 {
        return None;
    }
    let (e, f) = match ctx.residue {
        1 => ("(p-1)/4", "(p-1)/6"),
        5 => ("(p-1)/4", "(p+1)/6"),
        7 => ("(p+1)/4", "(p-1)/6"),
        _ => ("(p+1)/4", "(p+1)/6"),
    };
    let p = ctx.p_big();
    Some([
        eval_str("pullback C22", "(p-1)/2", &p),
        eval_str("pullback E", e, &p),
        eval_str("pullback F", f, &p),
    ])
}

/// Printed `K.W` on the minimal model for `r = 4`.
pub fn oracle_minimal_canonical(ctx: &PrimeContext) -> Option<Vec<ExactRational>> {
    if ctx.r != 4 {
        return None;
    }
    let (outer, inner) = match ctx.residue {
        1 => ("(p^4-p^3-4p-20)/12", "(p^2-2p-5)/6"),
        5 => ("(p^4-p^3-4p-12)/12", "(p^2-2p-3)/6"),
        7 => ("(p^4-p^3-4p-14)/12", "(p^2-2p-5)/6"),
        _ => ("(p^4-p^3-4p-6)/12", "(p^2-2p-3)/6"),
    };
    let p = ctx.p_big();
    let o = eval_str("K.C40", outer, &p);
    let i = eval_str("K.C31", inner, &p);
    let mut out = vec![o.clone(), o, i.clone(), i];
    for l in &oracle_labels(ctx, Stage::Minimal)[4..] {
        out.push(match l {
            Label::E(_) => ExactRational::zero(),
            _ => ExactRational::one(),
        });
    }
    Some(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub check: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub p: u64,
    pub r: u32,
    pub residue: u32,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status == Status::Pass)
    }
}

/// Adds 1 to the constructive Edixhoven matrix at `(i, j)` and `(j, i)` before
/// comparison. Used to exercise the failure path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Perturbation {
    pub row: usize,
    pub col: usize,
}

struct Checks {
    out: Vec<CheckResult>,
}

impl Checks {
    fn push(&mut self, check: impl Into<String>, res: std::result::Result<String, String>) {
        let (status, detail) = match res {
            Ok(d) => (Status::Pass, d),
            Err(d) => (Status::Fail, d),
        };
        self.out.push(CheckResult {
            check: check.into(),
            status,
            detail,
        });
    }
}

fn compare_matrix(labels: &[Label], got: &RatMatrix, want: &RatMatrix) -> std::result::Result<String, String> {
    if got.rows() != want.rows() || got.cols() != want.cols() {
        return Err(format!(
            "shape {}x{} against {}x{}",
            got.rows(),
            got.cols(),
            want.rows(),
            want.cols()
        ));
    }
    for i in 0..got.rows() {
        for j in 0..got.cols() {
            if got.get(i, j) != want.get(i, j) {
                return Err(format!(
                    "first difference at ({}, {}): got {}, expected {}",
                    labels[i],
                    labels[j],
                    got.get(i, j),
                    want.get(i, j)
                ));
            }
        }
    }
    Ok(format!("{}x{} entries equal", got.rows(), got.cols()))
}

fn compare_vec(labels: &[Label], got: &[ExactRational], want: &[ExactRational]) -> std::result::Result<String, String> {
    if got.len() != want.len() {
        return Err(format!("length {} against {}", got.len(), want.len()));
    }
    match got.iter().zip(want).position(|(a, b)| a != b) {
        None => Ok(format!("{} entries equal", got.len())),
        Some(i) => Err(format!(
            "first difference at {}: got {}, expected {}",
            labels[i], got[i], want[i]
        )),
    }
}

fn kernel_multiple(diff: &[ExactRational], mult: &[ExactRational]) -> Option<ExactRational> {
    let t = diff[0].clone() / &mult[0];
    diff.iter().zip(mult).all(|(d, m)| d == &(&t * m)).then_some(t)
}

/// Runs every oracle comparison for one `(p, r)`.
pub fn verify_all(ctx: &PrimeContext) -> VerifyReport {
    verify_with(ctx, None)
}

pub fn verify_with(ctx: &PrimeContext, perturb: Option<Perturbation>) -> VerifyReport {
    let mut c = Checks { out: Vec::new() };
    if let Err(e) = run_checks(ctx, perturb, &mut c) {
        c.push("pipeline", Err(e.to_string()));
    }
    VerifyReport {
        p: ctx.p,
        r: ctx.r,
        residue: ctx.residue,
        checks: c.out,
    }
}

fn run_checks(ctx: &PrimeContext, perturb: Option<Perturbation>, c: &mut Checks) -> Result<()> {
    let g = genus_x0_prime_power(ctx);
    let general = ctx.p.checked_pow(ctx.r).filter(|&n| n < 1 << 40).map(genus_x0_general);
    c.push(
        "genus",
        match general {
            Some(h) if BigInt::from(h) == g => Ok(format!("g = {g}")),
            Some(h) => Err(format!("closed form {g}, general formula {h}")),
            None => Ok(format!("g = {g}; level too large for the general formula")),
        },
    );

    let ed = edixhoven_fiber(ctx)?;
    let ed_labels = oracle_labels(ctx, Stage::Edixhoven);
    let want = oracle_matrix(ctx, Stage::Edixhoven);
    let mut got = ed.matrix().clone();
    if let Some(pt) = perturb {
        if pt.row >= got.rows() || pt.col >= got.cols() {
            return Err(invalid(format!(
                "perturbation ({}, {}) outside the matrix",
                pt.row, pt.col
            )));
        }
        let v = got.get(pt.row, pt.col) + ExactRational::one();
        got.set(pt.row, pt.col, v.clone());
        got.set(pt.col, pt.row, v);
    }
    c.push(
        "edixhoven-labels",
        if ed.labels() == ed_labels {
            Ok("component order matches".into())
        } else {
            Err(format!("{:?} against {:?}", ed.labels(), ed_labels))
        },
    );
    c.push("edixhoven-matrix", compare_matrix(&ed_labels, &got, &want));
    let m_ed = ed.multiplicity_rationals();
    c.push(
        "oracle-fiber-relation",
        if want.mul_vec(&m_ed)?.iter().all(ExactRational::is_zero) {
            Ok("printed matrix annihilates the multiplicity vector".into())
        } else {
            Err("printed matrix fails M m = 0".into())
        },
    );

    let (target, map) = minimal_model(&ed)?;
    let min_labels = oracle_labels(ctx, Stage::Minimal);
    let want_min = oracle_matrix(ctx, Stage::Minimal);
    let expect_steps = if ctx.r == 3 { 0 } else { 3 };
    c.push(
        "contraction-steps",
        if map.steps().len() == expect_steps {
            Ok(format!(
                "{:?}",
                map.contracted_labels()
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
            ))
        } else {
            Err(format!("{} steps, expected {expect_steps}", map.steps().len()))
        },
    );
    c.push(
        "minimal-matrix",
        compare_matrix(&min_labels, target.matrix(), &want_min),
    );
    c.push(
        "oracle-integrality",
        if want_min.entries().all(ExactRational::is_integer) {
            Ok("all printed minimal entries are integers".into())
        } else {
            Err("printed minimal matrix has a fractional entry".into())
        },
    );

    let k_target = if map.is_identity() {
        adjunction_vector(&target)
    } else {
        canonical_on_target(&map)?
    };
    if ctx.r == 4 {
        let a = map.canonical_pullback_coefficients()?;
        let expect = [-4, -2, -1].map(ExactRational::from);
        c.push(
            "canonical-pullback",
            if a == expect {
                Ok("(-4, -2, -1)".into())
            } else {
                Err(format!("got {a:?}"))
            },
        );
        let row = oracle_pullback_row(ctx).expect("r = 4");
        let mut res = Ok("all surviving C components".to_string());
        for (label, coeffs) in map.pullback_rows() {
            let expect: Vec<ExactRational> = match label {
                Label::C(..) => row.to_vec(),
                _ => vec![ExactRational::zero(); 3],
            };
            if coeffs != expect {
                res = Err(format!("{label}: got {coeffs:?}, expected {expect:?}"));
                break;
            }
        }
        c.push("pullback-rows", res);
        let ko = oracle_minimal_canonical(ctx).expect("r = 4");
        c.push("minimal-canonical", compare_vec(&min_labels, &k_target, &ko));
    }

    // printed V_m against printed matrices and canonical classes
    let m_min = target.multiplicity_rationals();
    let two_g_2 = ExactRational::from(BigInt::from(2) * (&g - 1));
    let k_oracle = match oracle_minimal_canonical(ctx) {
        Some(k) => k,
        None => (0..want_min.rows())
            .map(|i| -want_min.get(i, i) - ExactRational::from(2))
            .collect(),
    };
    let set = divisor_set(ctx)?;
    for cusp in [Cusp::Zero, Cusp::Infinity] {
        let ov = oracle_vm(ctx, cusp);
        let meet = match cusp {
            Cusp::Zero => 1,
            Cusp::Infinity => 0,
        };
        let mv = want_min.mul_vec(&ov)?;
        let resid: Vec<ExactRational> = mv
            .iter()
            .zip(&k_oracle)
            .enumerate()
            .map(|(i, (a, k))| if i == meet { a + k - &two_g_2 } else { a + k })
            .collect();
        c.push(
            format!("oracle-orthogonality-{cusp}"),
            match resid.iter().position(|x| !x.is_zero()) {
                None => Ok("printed V_m solves the printed system".into()),
                Some(i) => Err(format!("residual {} at {}", resid[i], min_labels[i])),
            },
        );

        let solved: &VerticalDivisor = match cusp {
            Cusp::Zero => &set.v0,
            Cusp::Infinity => &set.vinf,
        };
        let diff: Vec<ExactRational> = ov.iter().zip(solved.coefficients()).map(|(a, b)| a - b).collect();
        c.push(
            format!("vertical-kernel-{cusp}"),
            match kernel_multiple(&diff, &m_min) {
                Some(t) => Ok(format!("printed minus solved = {t} times the multiplicity vector")),
                None => Err("difference is not a multiple of the multiplicity vector".into()),
            },
        );
        let pinned = gauge_fix(solved, &paper_gauge(ctx, cusp), &ExactRational::zero())?;
        c.push(
            format!("vertical-gauged-{cusp}"),
            compare_vec(&min_labels, pinned.coefficients(), &ov),
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratlin::rat;

    fn ctx(p: u64, r: u32) -> PrimeContext {
        PrimeContext::new(p, r).unwrap()
    }

    fn q(n: i64, d: i64) -> ExactRational {
        rat(n, d).unwrap()
    }

    #[test]
    fn parser_basics() {
        let p = BigInt::from(13);
        let e = |s: &str| ClosedForm::parse("t", s).unwrap().eval(&p).unwrap();
        assert_eq!(e("p(p-1)/12"), q(13, 1));
        assert_eq!(e("-p^2(p-1)/12"), q(-169, 1));
        assert_eq!(e("-(p+5)/6"), q(-3, 1));
        assert_eq!(e("3p"), q(39, 1));
        assert_eq!(e("-1/2"), q(-1, 2));
        assert_eq!(e("(2p^4 - 2p^3 - 16p^2 - 16p + 14)/(p^4 - p^2)"), q(8305, 4732));
        assert_eq!(
            e("(p^4/3-13p^2/3-2p/3+14/3)/(p^3+p^2)"),
            e("(p^4-13p^2-2p+14)/(3p^3+3p^2)")
        );
        assert_eq!(e("2*p^2 - p"), q(325, 1));
        for bad in ["", "p+", "(p", "p)", "x", "1/0", "p^"] {
            assert!(ClosedForm::parse("t", bad).is_err(), "{bad:?}");
        }
        let f = ClosedForm::parse("t", "1/(p-13)").unwrap();
        assert!(f.eval(&p).is_err());
    }

    #[test]
    fn integer_coefficients() {
        let f = ClosedForm::parse("t", "(p^4/2-p^3/2)/(p/3)").unwrap();
        assert!(f.den.iter().all(|c| !c.is_zero() || f.den.len() > 1));
        assert_eq!(f.eval(&BigInt::from(5)).unwrap(), q(3 * (625 - 125), 10));
    }

    #[test]
    fn oracle_examples() {
        let m = oracle_matrix(&ctx(13, 3), Stage::Edixhoven);
        assert_eq!(m.get(0, 2), &q(13, 1));
        let m = oracle_matrix(&ctx(13, 4), Stage::Minimal);
        assert_eq!(m.get(0, 0), &q(-2191, 1));
        let m = oracle_matrix(&ctx(23, 3), Stage::Edixhoven);
        assert_eq!(m.get(5, 6), &q(1, 1));

        let v = oracle_vm(&ctx(13, 3), Cusp::Zero);
        assert_eq!(v[0], q(8305, 4732));
        assert_eq!(
            (v[3].clone(), v[5].clone(), v[7].clone()),
            (q(-1, 1), q(-1, 2), q(0, 1))
        );
        assert_eq!(oracle_vm(&ctx(23, 3), Cusp::Infinity)[6], q(0, 1));
        assert_eq!(oracle_vm(&ctx(17, 4), Cusp::Infinity)[0], q(0, 1));
    }

    #[test]
    fn tables_are_symmetric_and_annihilate_multiplicities() {
        for p in [13, 17, 19, 23, 37, 41, 43, 47] {
            for r in [3, 4] {
                let c = ctx(p, r);
                let ed = edixhoven_fiber(&c).unwrap();
                let m = oracle_matrix(&c, Stage::Edixhoven);
                assert!(m.is_symmetric(), "p={p} r={r}");
                assert!(m
                    .mul_vec(&ed.multiplicity_rationals())
                    .unwrap()
                    .iter()
                    .all(ExactRational::is_zero));
                let mm = oracle_matrix(&c, Stage::Minimal);
                assert!(mm.is_symmetric());
                assert_eq!(mm.rows(), oracle_labels(&c, Stage::Minimal).len());
                assert_eq!(oracle_vm(&c, Cusp::Zero).len(), mm.rows());
            }
        }
    }

    #[test]
    fn verify_passes() {
        for (p, r) in [
            (13, 3),
            (17, 3),
            (19, 3),
            (23, 3),
            (13, 4),
            (17, 4),
            (19, 4),
            (23, 4),
            (5, 3),
            (7, 4),
            (11, 4),
            (47, 4),
        ] {
            let rep = verify_all(&ctx(p, r));
            for ch in &rep.checks {
                assert_eq!(ch.status, Status::Pass, "p={p} r={r} {}: {}", ch.check, ch.detail);
            }
        }
    }

    #[test]
    fn fault_injection_names_entry() {
        let rep = verify_with(&ctx(13, 3), Some(Perturbation { row: 0, col: 2 }));
        assert!(!rep.all_passed());
        let bad = rep.checks.iter().find(|c| c.check == "edixhoven-matrix").unwrap();
        assert_eq!(bad.status, Status::Fail);
        assert!(bad.detail.contains("(C3,0, C2,1)"), "{}", bad.detail);
        let json = serde_json::to_value(&rep).unwrap();
        assert_eq!(json["checks"][0]["status"], "pass");
    }
}

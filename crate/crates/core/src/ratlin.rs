//! Exact rational scalars, dense matrices and a symmetric singular solver.
//!
//! Every value in this crate is an [`ExactRational`]; nothing is rounded until a
//! report converts the final pairings to binary64.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};

/// Arbitrary-precision rational, always in lowest terms with a positive
/// denominator.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExactRational(BigRational);

/// Builds `num/den` in canonical form.
pub fn rat(num: impl Into<BigInt>, den: impl Into<BigInt>) -> Result<ExactRational> {
    let den = den.into();
    if den.is_zero() {
        return Err(invalid("zero denominator"));
    }
    Ok(ExactRational(BigRational::new(num.into(), den)))
}

impl ExactRational {
    pub fn zero() -> Self {
        ExactRational(BigRational::zero())
    }

    pub fn one() -> Self {
        ExactRational(BigRational::one())
    }

    pub fn from_integer(n: impl Into<BigInt>) -> Self {
        ExactRational(BigRational::from_integer(n.into()))
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn abs(&self) -> Self {
        ExactRational(self.0.abs())
    }

    /// Multiplicative inverse, `None` for zero.
    pub fn recip(&self) -> Option<Self> {
        if self.is_zero() {
            None
        } else {
            Some(ExactRational(self.0.recip()))
        }
    }

    /// Integer value when the denominator is 1.
    pub fn to_integer(&self) -> Option<BigInt> {
        self.is_integer().then(|| self.0.to_integer())
    }

    /// Nearest binary64. Huge values saturate to infinity.
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Combined bit length of numerator and denominator, used to rank pivots.
    pub fn height(&self) -> u64 {
        self.0.numer().bits() + self.0.denom().bits()
    }

    /// `"n"` for integers and `"n/d"` otherwise. Used by the text table.
    pub fn to_short_string(&self) -> String {
        if self.is_integer() {
            self.0.numer().to_string()
        } else {
            self.to_string()
        }
    }

    pub fn as_big_rational(&self) -> &BigRational {
        &self.0
    }
}

impl Default for ExactRational {
    fn default() -> Self {
        Self::zero()
    }
}

impl fmt::Display for ExactRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl fmt::Debug for ExactRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for ExactRational {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parse = |t: &str| {
            t.trim()
                .parse::<BigInt>()
                .map_err(|_| invalid(format!("not a rational: {s:?}")))
        };
        match s.split_once('/') {
            Some((n, d)) => rat(parse(n)?, parse(d)?),
            None => Ok(ExactRational::from_integer(parse(s)?)),
        }
    }
}

impl Serialize for ExactRational {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ExactRational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

macro_rules! from_int {
    ($($t:ty),*) => {$(
        impl From<$t> for ExactRational {
            fn from(v: $t) -> Self {
                ExactRational::from_integer(BigInt::from(v))
            }
        }
    )*};
}
from_int!(i32, i64, u32, u64, i128, u128, usize);

impl From<BigInt> for ExactRational {
    fn from(v: BigInt) -> Self {
        ExactRational::from_integer(v)
    }
}

impl From<&BigInt> for ExactRational {
    fn from(v: &BigInt) -> Self {
        ExactRational::from_integer(v.clone())
    }
}

impl From<BigRational> for ExactRational {
    fn from(v: BigRational) -> Self {
        ExactRational(v)
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $atr:ident, $am:ident) => {
        impl $tr<ExactRational> for ExactRational {
            type Output = ExactRational;
            fn $m(self, rhs: ExactRational) -> ExactRational {
                ExactRational((self.0).$m(rhs.0))
            }
        }
        impl<'a> $tr<&'a ExactRational> for ExactRational {
            type Output = ExactRational;
            fn $m(self, rhs: &'a ExactRational) -> ExactRational {
                ExactRational((self.0).$m(&rhs.0))
            }
        }
        impl<'a> $tr<ExactRational> for &'a ExactRational {
            type Output = ExactRational;
            fn $m(self, rhs: ExactRational) -> ExactRational {
                ExactRational((&self.0).$m(rhs.0))
            }
        }
        impl<'a, 'b> $tr<&'b ExactRational> for &'a ExactRational {
            type Output = ExactRational;
            fn $m(self, rhs: &'b ExactRational) -> ExactRational {
                ExactRational((&self.0).$m(&rhs.0))
            }
        }
        impl $atr<ExactRational> for ExactRational {
            fn $am(&mut self, rhs: ExactRational) {
                (self.0).$am(rhs.0);
            }
        }
        impl<'a> $atr<&'a ExactRational> for ExactRational {
            fn $am(&mut self, rhs: &'a ExactRational) {
                (self.0).$am(&rhs.0);
            }
        }
    };
}
binop!(Add, add, AddAssign, add_assign);
binop!(Sub, sub, SubAssign, sub_assign);
binop!(Mul, mul, MulAssign, mul_assign);

impl Div<ExactRational> for ExactRational {
    type Output = ExactRational;
    /// Panics on division by zero, like the integer types.
    fn div(self, rhs: ExactRational) -> ExactRational {
        ExactRational(self.0 / rhs.0)
    }
}

impl<'b> Div<&'b ExactRational> for &ExactRational {
    type Output = ExactRational;
    fn div(self, rhs: &'b ExactRational) -> ExactRational {
        ExactRational(&self.0 / &rhs.0)
    }
}

impl<'a> Div<&'a ExactRational> for ExactRational {
    type Output = ExactRational;
    fn div(self, rhs: &'a ExactRational) -> ExactRational {
        ExactRational(self.0 / &rhs.0)
    }
}

impl Neg for ExactRational {
    type Output = ExactRational;
    fn neg(self) -> ExactRational {
        ExactRational(-self.0)
    }
}

impl Neg for &ExactRational {
    type Output = ExactRational;
    fn neg(self) -> ExactRational {
        ExactRational(-&self.0)
    }
}

impl Sum for ExactRational {
    fn sum<I: Iterator<Item = ExactRational>>(iter: I) -> Self {
        iter.fold(ExactRational::zero(), |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a ExactRational> for ExactRational {
    fn sum<I: Iterator<Item = &'a ExactRational>>(iter: I) -> Self {
        iter.fold(ExactRational::zero(), |acc, x| acc + x)
    }
}

/// Dense row-major matrix of exact rationals.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RatMatrix {
    rows: usize,
    cols: usize,
    data: Vec<ExactRational>,
}

impl RatMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RatMatrix {
            rows,
            cols,
            data: vec![ExactRational::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, ExactRational::one());
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<ExactRational>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(invalid("ragged matrix rows"));
        }
        Ok(RatMatrix {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &ExactRational {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: ExactRational) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[ExactRational] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<ExactRational>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = &ExactRational> {
        self.data.iter()
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && (0..self.rows).all(|i| (i + 1..self.cols).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn mul_vec(&self, x: &[ExactRational]) -> Result<Vec<ExactRational>> {
        if x.len() != self.cols {
            return Err(invalid(format!(
                "vector of length {} against {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Principal submatrix on the given indices, in the given order.
    pub fn principal_submatrix(&self, idx: &[usize]) -> RatMatrix {
        let mut out = RatMatrix::zeros(idx.len(), idx.len());
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out.set(a, b, self.get(i, j).clone());
            }
        }
        out
    }
}

/// Outcome of [`solve_symmetric`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolveResult {
    /// A solution with every free variable set to 0, present iff consistent.
    pub particular: Option<Vec<ExactRational>>,
    pub kernel_basis: Vec<Vec<ExactRational>>,
    pub consistent: bool,
}

/// Solves `M x = b` for symmetric `M` by exact Gauss-Jordan elimination with
/// full pivoting.
pub fn solve_symmetric(m: &RatMatrix, b: &[ExactRational]) -> Result<SolveResult> {
    if m.rows() != m.cols() {
        return Err(invalid(format!("{}x{} matrix is not square", m.rows(), m.cols())));
    }
    if b.len() != m.rows() {
        return Err(invalid(format!(
            "right-hand side of length {} for {} unknowns",
            b.len(),
            m.rows()
        )));
    }
    if !m.is_symmetric() {
        return Err(invalid("matrix is not symmetric"));
    }
    Ok(gauss_jordan(m, b))
}

fn gauss_jordan(m: &RatMatrix, b: &[ExactRational]) -> SolveResult {
    let n = m.rows();
    let w = n + 1;
    let mut a: Vec<Vec<ExactRational>> = (0..n)
        .map(|i| {
            let mut row = m.row(i).to_vec();
            row.push(b[i].clone());
            row
        })
        .collect();
    let mut used_col = vec![false; n];
    // (row, col) of each pivot, rows are 0..rank after swapping
    let mut pivots: Vec<usize> = Vec::new();

    for r in 0..n {
        // smallest-height nonzero in the remaining block; ties go to lowest (col, row)
        let mut best: Option<(u64, usize, usize)> = None;
        for (j, _) in used_col.iter().enumerate().filter(|(_, u)| !**u) {
            for (i, row) in a.iter().enumerate().skip(r) {
                let v = &row[j];
                if v.is_zero() {
                    continue;
                }
                let key = (v.height(), j, i);
                if best.is_none_or(|b| key < b) {
                    best = Some(key);
                }
            }
        }
        let Some((_, pc, pr)) = best else { break };
        a.swap(r, pr);
        let inv = a[r][pc].recip().expect("pivot is nonzero");
        for x in a[r].iter_mut() {
            *x *= &inv;
        }
        let pivot_row = a[r].clone();
        for (i, row) in a.iter_mut().enumerate() {
            if i == r || row[pc].is_zero() {
                continue;
            }
            let f = row[pc].clone();
            for k in 0..w {
                if !pivot_row[k].is_zero() {
                    row[k] -= &f * &pivot_row[k];
                }
            }
        }
        used_col[pc] = true;
        pivots.push(pc);
    }

    let rank = pivots.len();
    let consistent = a[rank..].iter().all(|row| row[n].is_zero());

    let particular = consistent.then(|| {
        let mut x = vec![ExactRational::zero(); n];
        for (k, &c) in pivots.iter().enumerate() {
            x[c] = a[k][n].clone();
        }
        x
    });

    let kernel_basis = (0..n)
        .filter(|j| !used_col[*j])
        .map(|f| {
            let mut v = vec![ExactRational::zero(); n];
            v[f] = ExactRational::one();
            for (k, &c) in pivots.iter().enumerate() {
                v[c] = -&a[k][f];
            }
            v
        })
        .collect();

    SolveResult {
        particular,
        kernel_basis,
        consistent,
    }
}

/// `x^T M y`.
pub fn bilinear(m: &RatMatrix, x: &[ExactRational], y: &[ExactRational]) -> Result<ExactRational> {
    if x.len() != m.rows() || y.len() != m.cols() {
        return Err(invalid(format!(
            "vectors of length {} and {} against a {}x{} matrix",
            x.len(),
            y.len(),
            m.rows(),
            m.cols()
        )));
    }
    let my = m.mul_vec(y)?;
    Ok(x.iter().zip(&my).map(|(a, b)| a * b).sum())
}

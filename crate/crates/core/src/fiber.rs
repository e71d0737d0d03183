//! Special fibers of the regular models of X0(p^r) for r in {3, 4}.
//!
//! A [`FiberRecipe`] lists components and off-diagonal intersection numbers;
//! [`build_fiber`] completes the diagonal from the fiber relation `M m = 0`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{inconsistent, invalid, Error, Result};
use crate::numth::{mult_phi, PrimeContext};
use crate::ratlin::{ExactRational, RatMatrix};

/// Component tag: `C(a, b)` with `a + b = r`, or an elliptic component `E`/`F`
/// with an optional index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    C(u32, u32),
    E(Option<u8>),
    F(Option<u8>),
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::C(a, b) => write!(f, "C{a},{b}"),
            Label::E(None) => f.write_str("E"),
            Label::F(None) => f.write_str("F"),
            Label::E(Some(i)) => write!(f, "E{i}"),
            Label::F(Some(i)) => write!(f, "F{i}"),
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || invalid(format!("unknown component label {s:?}"));
        let s = s.trim();
        let (head, rest) = s.split_at(s.chars().next().map_or(0, char::len_utf8));
        match head {
            "C" => {
                let (a, b) = rest.split_once(',').ok_or_else(bad)?;
                Ok(Label::C(
                    a.trim().parse().map_err(|_| bad())?,
                    b.trim().parse().map_err(|_| bad())?,
                ))
            }
            "E" | "F" => {
                let idx = if rest.is_empty() {
                    None
                } else {
                    Some(rest.parse().map_err(|_| bad())?)
                };
                Ok(if head == "E" { Label::E(idx) } else { Label::F(idx) })
            }
            _ => Err(bad()),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    ReductionCurve,
    /// Over j = 1728.
    Elliptic1728,
    /// Over j = 0.
    Elliptic0,
}

impl Role {
    fn of(label: &Label) -> Role {
        match label {
            Label::C(..) => Role::ReductionCurve,
            Label::E(_) => Role::Elliptic1728,
            Label::F(_) => Role::Elliptic0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Component {
    pub label: Label,
    pub multiplicity: u128,
    pub role: Role,
}

impl Component {
    pub fn new(label: Label, multiplicity: u128) -> Self {
        Component {
            label,
            multiplicity,
            role: Role::of(&label),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Edixhoven,
    Minimal,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Edixhoven => "edixhoven",
            Stage::Minimal => "minimal",
        })
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edixhoven" => Ok(Stage::Edixhoven),
            "minimal" => Ok(Stage::Minimal),
            _ => Err(invalid(format!("unknown stage {s:?}"))),
        }
    }
}

/// A special fiber: components, their intersection matrix and context.
///
/// Matrix entries are local intersection numbers; the Arakelov pairing is
/// obtained by multiplying with `log p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fiber {
    ctx: PrimeContext,
    stage: Stage,
    components: Vec<Component>,
    matrix: RatMatrix,
}

impl Fiber {
    /// Assembles a fiber and checks symmetry, sign pattern, the fiber relation
    /// and, for the minimal stage, integrality.
    pub fn from_parts(ctx: PrimeContext, stage: Stage, components: Vec<Component>, matrix: RatMatrix) -> Result<Self> {
        let f = Fiber {
            ctx,
            stage,
            components,
            matrix,
        };
        f.check()?;
        Ok(f)
    }

    fn check(&self) -> Result<()> {
        let n = self.components.len();
        if self.matrix.rows() != n || self.matrix.cols() != n {
            return Err(inconsistent("matrix size does not match component count"));
        }
        if !self.matrix.is_symmetric() {
            return Err(inconsistent("intersection matrix is not symmetric"));
        }
        for i in 0..n {
            for j in 0..n {
                let v = self.matrix.get(i, j);
                let ok = if i == j { v.is_negative() } else { !v.is_negative() };
                if !ok {
                    return Err(inconsistent(format!(
                        "sign pattern violated at ({}, {}): {v}",
                        self.components[i].label, self.components[j].label
                    )));
                }
            }
        }
        let mv = self.matrix.mul_vec(&self.multiplicity_rationals())?;
        if let Some(i) = mv.iter().position(|x| !x.is_zero()) {
            return Err(inconsistent(format!(
                "fiber relation fails on {}",
                self.components[i].label
            )));
        }
        if self.stage == Stage::Minimal && !self.matrix.entries().all(ExactRational::is_integer) {
            return Err(inconsistent("minimal fiber has a non-integral entry"));
        }
        let ones = self.components.iter().filter(|c| c.multiplicity == 1).count();
        if ones != 2 {
            return Err(inconsistent(format!("{ones} components of multiplicity 1")));
        }
        Ok(())
    }

    pub fn ctx(&self) -> &PrimeContext {
        &self.ctx
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn matrix(&self) -> &RatMatrix {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.components.iter().map(|c| c.label).collect()
    }

    pub fn index_of(&self, label: &Label) -> Option<usize> {
        self.components.iter().position(|c| &c.label == label)
    }

    pub fn entry(&self, a: &Label, b: &Label) -> Option<&ExactRational> {
        Some(self.matrix.get(self.index_of(a)?, self.index_of(b)?))
    }

    /// Coefficients of the divisor of `p` in component order.
    pub fn multiplicity_vector(&self) -> Vec<u128> {
        self.components.iter().map(|c| c.multiplicity).collect()
    }

    pub fn multiplicity_rationals(&self) -> Vec<ExactRational> {
        self.components
            .iter()
            .map(|c| ExactRational::from(c.multiplicity))
            .collect()
    }

    /// Aligned text table with labels on both axes.
    pub fn to_table(&self) -> String {
        let labels: Vec<String> = self.components.iter().map(|c| c.label.to_string()).collect();
        let cells: Vec<Vec<String>> = (0..self.len())
            .map(|i| self.matrix.row(i).iter().map(ExactRational::to_short_string).collect())
            .collect();
        let width = labels
            .iter()
            .chain(cells.iter().flatten())
            .map(String::len)
            .max()
            .unwrap_or(1);
        let mut out = format!("{:>width$}", "");
        for l in &labels {
            out.push_str(&format!(" {l:>width$}"));
        }
        out.push('\n');
        for (l, row) in labels.iter().zip(&cells) {
            out.push_str(&format!("{l:>width$}"));
            for c in row {
                out.push_str(&format!(" {c:>width$}"));
            }
            out.push('\n');
        }
        out
    }

    /// Dual graph in Graphviz syntax.
    pub fn to_dot(&self) -> String {
        let mut out = format!("graph \"X0({}^{}) {}\" {{\n", self.ctx.p, self.ctx.r, self.stage);
        for c in &self.components {
            out.push_str(&format!(
                "  \"{}\" [label=\"{} ({})\"];\n",
                c.label, c.label, c.multiplicity
            ));
        }
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let w = self.matrix.get(i, j);
                if w.is_positive() {
                    out.push_str(&format!(
                        "  \"{}\" -- \"{}\" [label=\"{}\", weight={}];\n",
                        self.components[i].label,
                        self.components[j].label,
                        w.to_short_string(),
                        w.to_short_string()
                    ));
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

impl Serialize for Fiber {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("Fiber", 6)?;
        s.serialize_field("p", &self.ctx.p)?;
        s.serialize_field("r", &self.ctx.r)?;
        s.serialize_field("residue", &self.ctx.residue)?;
        s.serialize_field("stage", &self.stage)?;
        s.serialize_field("components", &self.components)?;
        s.serialize_field("matrix", &self.matrix.to_rows())?;
        s.end()
    }
}

/// Declarative description of an Edixhoven fiber before diagonal completion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiberRecipe {
    pub ctx: PrimeContext,
    pub components: Vec<Component>,
    /// Off-diagonal entries keyed by `(i, j)` with `i < j`; absent means 0.
    pub off_diagonal: BTreeMap<(usize, usize), BigInt>,
    /// Number of supersingular crossing points.
    pub k: u64,
}

impl FiberRecipe {
    fn index(&self, label: Label) -> usize {
        self.components
            .iter()
            .position(|c| c.label == label)
            .expect("label present in recipe")
    }

    fn add(&mut self, a: Label, b: Label, v: impl Into<BigInt>) {
        let (i, j) = (self.index(a), self.index(b));
        let key = (i.min(j), i.max(j));
        *self.off_diagonal.entry(key).or_insert_with(BigInt::zero) += v.into();
    }

    pub fn off(&self, i: usize, j: usize) -> BigInt {
        self.off_diagonal
            .get(&(i.min(j), i.max(j)))
            .cloned()
            .unwrap_or_default()
    }
}

/// Local intersection of `C(a, b)` and `C(c, d)` at one supersingular point.
pub fn local_intersection_alpha(a: u32, b: u32, c: u32, d: u32, p: &BigInt) -> BigInt {
    let (x, y) = (a as i64 - b as i64, c as i64 - d as i64);
    if x * y <= 0 {
        BigInt::one()
    } else {
        num_traits::pow(p.clone(), x.abs().min(y.abs()) as usize)
    }
}

/// Length of the local ring at the origin of `y = x^A` against `y = x^B`.
///
/// Equal exponents mean the curves coincide; the value `A` is returned so that
/// callers always receive a finite contact order.
pub fn ideal_contact(a: &BigInt, b: &BigInt) -> BigInt {
    a.min(b).clone()
}

fn c_order(r: u32) -> Vec<Label> {
    match r {
        3 => vec![Label::C(3, 0), Label::C(0, 3), Label::C(2, 1), Label::C(1, 2)],
        _ => vec![
            Label::C(4, 0),
            Label::C(0, 4),
            Label::C(3, 1),
            Label::C(1, 3),
            Label::C(2, 2),
        ],
    }
}

fn exact_div(n: BigInt, d: u32) -> u128 {
    let (q, rem) = (&n / d, &n % d);
    assert!(rem.is_zero(), "{n} is not divisible by {d}");
    u128::try_from(q).expect("multiplicity fits in u128")
}

/// Incidence data of the Edixhoven regular model for `ctx`.
pub fn recipe(ctx: &PrimeContext) -> FiberRecipe {
    let p = ctx.p_big();
    let r = ctx.r;
    let res = ctx.residue;
    let k = ctx.alpha_count();
    let cs = c_order(r);

    let mut components: Vec<Component> = cs
        .iter()
        .map(|&l| match l {
            Label::C(a, b) => Component::new(l, mult_phi(a, b, ctx)),
            _ => unreachable!(),
        })
        .collect();

    let pm1: BigInt = &p - 1;
    let pp1: BigInt = &p + 1;
    let single_e = matches!(res, 7 | 11);
    let single_f = matches!(res, 5 | 11);

    // Elliptic components and their multiplicities.
    type Labelled = Vec<(Label, u128)>;
    let (es, fs): (Labelled, Labelled) = if r == 3 {
        let es = if single_e {
            vec![(Label::E(None), ctx.p as u128)]
        } else {
            let m = exact_div(pm1.clone(), 2);
            vec![(Label::E(Some(1)), m), (Label::E(Some(2)), m)]
        };
        let fs = if single_f {
            let m = ctx.p as u128;
            vec![(Label::F(Some(1)), m), (Label::F(Some(2)), m)]
        } else {
            let m = exact_div(pm1.clone(), 3);
            vec![(Label::F(Some(1)), m), (Label::F(Some(2)), m)]
        };
        (es, fs)
    } else {
        let es = if single_e {
            vec![(Label::E(None), exact_div(&p * &pp1, 2))]
        } else {
            vec![
                (Label::E(Some(1)), exact_div(pm1.clone(), 2)),
                (Label::E(Some(2)), exact_div(&p * &pm1, 2)),
                (Label::E(Some(3)), exact_div(pm1.clone(), 2)),
            ]
        };
        let fs = if single_f {
            vec![(Label::F(None), exact_div(&p * &pp1, 3))]
        } else {
            vec![
                (Label::F(Some(1)), exact_div(pm1.clone(), 3)),
                (Label::F(Some(2)), exact_div(&p * &pm1, 3)),
                (Label::F(Some(3)), exact_div(pm1.clone(), 3)),
            ]
        };
        (es, fs)
    };
    components.extend(es.iter().chain(&fs).map(|&(l, m)| Component::new(l, m)));

    let mut rec = FiberRecipe {
        ctx: *ctx,
        components,
        off_diagonal: BTreeMap::new(),
        k,
    };

    for (i, &x) in cs.iter().enumerate() {
        for &y in &cs[i + 1..] {
            let (Label::C(a, b), Label::C(c, d)) = (x, y) else {
                unreachable!()
            };
            rec.add(x, y, BigInt::from(k) * local_intersection_alpha(a, b, c, d, &p));
        }
    }

    // Each indexed elliptic component of a split family meets the C with the
    // same position among the non-reduced C's; a single one meets every C.
    let inner: Vec<Label> = cs[2..].to_vec();
    let attach = |rec: &mut FiberRecipe, list: &[(Label, u128)], single: bool| {
        if single {
            for &(l, _) in list {
                for &c in &cs {
                    rec.add(l, c, 1);
                }
            }
        } else {
            // r = 3 order is C21, C12; r = 4 order is C31, C22, C13
            let targets: Vec<Label> = if r == 3 {
                inner.clone()
            } else {
                vec![Label::C(3, 1), Label::C(2, 2), Label::C(1, 3)]
            };
            for (&(l, _), &c) in list.iter().zip(&targets) {
                rec.add(l, c, 1);
            }
        }
    };

    attach(&mut rec, &es, single_e);
    if r == 3 && single_f {
        // two F's of multiplicity p, each on one side, meeting each other once
        let (f1, f2) = (Label::F(Some(1)), Label::F(Some(2)));
        rec.add(f1, Label::C(3, 0), 1);
        rec.add(f1, Label::C(2, 1), 1);
        rec.add(f2, Label::C(0, 3), 1);
        rec.add(f2, Label::C(1, 2), 1);
        rec.add(f1, f2, 1);
    } else {
        attach(&mut rec, &fs, single_f);
    }

    // Tangential contacts on the two dominant C-pairs.
    let mut extra = BigInt::zero();
    let p_r = num_traits::pow(p.clone(), r as usize);
    if single_e {
        extra += if r == 3 {
            ideal_contact(&((&p_r - 1) / 2), &(&pm1 / 2))
        } else {
            ideal_contact(&((&p * &p - 1) / 2), &((&p_r - 1) / 2))
        };
    }
    if single_f {
        extra += if r == 3 {
            ideal_contact(&((&p_r - 2) / 3), &((&p - 2) / 3))
        } else {
            ideal_contact(&((&p * &p - 1) / 3), &((&p_r - 1) / 3))
        };
    }
    if !extra.is_zero() {
        rec.add(Label::C(r, 0), Label::C(r - 1, 1), extra.clone());
        rec.add(Label::C(0, r), Label::C(1, r - 1), extra);
    }
    rec
}

/// Fills the recipe's off-diagonals and completes the diagonal from the fiber
/// relation.
pub fn build_fiber(rec: &FiberRecipe) -> Result<Fiber> {
    let n = rec.components.len();
    let mut m = RatMatrix::zeros(n, n);
    for (&(i, j), v) in &rec.off_diagonal {
        if i == j || j >= n {
            return Err(inconsistent(format!("bad recipe entry ({i}, {j})")));
        }
        m.set(i, j, ExactRational::from(v));
        m.set(j, i, ExactRational::from(v));
    }
    for i in 0..n {
        let s: ExactRational = (0..n)
            .filter(|&j| j != i)
            .map(|j| m.get(i, j) * ExactRational::from(rec.components[j].multiplicity))
            .sum();
        let mi = ExactRational::from(rec.components[i].multiplicity);
        m.set(i, i, -(s / mi));
    }
    Fiber::from_parts(rec.ctx, Stage::Edixhoven, rec.components.clone(), m)
}

/// Convenience: the Edixhoven fiber for `ctx`.
pub fn edixhoven_fiber(ctx: &PrimeContext) -> Result<Fiber> {
    build_fiber(&recipe(ctx))
}

//! Vertical divisors orthogonalizing `K - (2g - 2) H_m + V_m`, the geometric
//! part of the Arakelov self-intersection and its asymptotic combination.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};

use crate::contract::{adjunction_vector, canonical_on_target, minimal_model, ContractionMap};
use crate::error::{inconsistent, invalid, Error, Result};
use crate::fiber::{edixhoven_fiber, Fiber, Label, Stage};
use crate::numth::{genus_x0_prime_power, PrimeContext};
use crate::ratlin::{bilinear, solve_symmetric, ExactRational};

/// Rational combination of fiber components.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerticalDivisor {
    labels: Vec<Label>,
    multiplicities: Vec<u128>,
    coefficients: Vec<ExactRational>,
}

impl VerticalDivisor {
    pub fn new(fiber: &Fiber, coefficients: Vec<ExactRational>) -> Result<Self> {
        if coefficients.len() != fiber.len() {
            return Err(invalid(format!(
                "{} coefficients for {} components",
                coefficients.len(),
                fiber.len()
            )));
        }
        Ok(VerticalDivisor {
            labels: fiber.labels(),
            multiplicities: fiber.multiplicity_vector(),
            coefficients,
        })
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn coefficients(&self) -> &[ExactRational] {
        &self.coefficients
    }

    pub fn coefficient(&self, label: &Label) -> Option<&ExactRational> {
        let i = self.labels.iter().position(|l| l == label)?;
        Some(&self.coefficients[i])
    }

    /// `self + t * (multiplicity vector)`.
    pub fn shifted(&self, t: &ExactRational) -> Self {
        let mut out = self.clone();
        for (c, &m) in out.coefficients.iter_mut().zip(&self.multiplicities) {
            *c += t * ExactRational::from(m);
        }
        out
    }
}

impl Serialize for VerticalDivisor {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = serializer.serialize_map(Some(self.labels.len()))?;
        for (l, c) in self.labels.iter().zip(&self.coefficients) {
            m.serialize_entry(&l.to_string(), c)?;
        }
        m.end()
    }
}

/// The cusp whose section `H_m` enters `D_m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cusp {
    Zero,
    Infinity,
}

impl fmt::Display for Cusp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cusp::Zero => "0",
            Cusp::Infinity => "inf",
        })
    }
}

impl FromStr for Cusp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0" | "zero" => Ok(Cusp::Zero),
            "inf" | "infinity" => Ok(Cusp::Infinity),
            _ => Err(invalid(format!("unknown cusp {s:?}"))),
        }
    }
}

/// `K.W` per component. Edixhoven fibers use adjunction; minimal fibers go
/// through the pullback of the canonical class.
pub fn canonical_vector(f: &Fiber, map: Option<&ContractionMap>) -> Result<Vec<ExactRational>> {
    let k = match f.stage() {
        Stage::Edixhoven => adjunction_vector(f),
        Stage::Minimal => {
            let map = map.ok_or_else(|| invalid("minimal fiber needs its contraction map"))?;
            if map.target().labels() != f.labels() {
                return Err(invalid("contraction map does not end at this fiber"));
            }
            canonical_on_target(map)?
        }
    };
    let g = genus_x0_prime_power(f.ctx());
    let deg: ExactRational = f.multiplicity_rationals().iter().zip(&k).map(|(m, k)| m * k).sum();
    if deg != ExactRational::from(BigInt::from(2) * (g - 1)) {
        return Err(inconsistent(format!("canonical degree {deg} is not 2g - 2")));
    }
    Ok(k)
}

/// Everything needed to solve for `V_0` and `V_inf` on one fiber.
#[derive(Clone, Debug)]
pub struct OrthogonalSystem {
    pub fiber: Fiber,
    pub genus: BigInt,
    pub canonical: Vec<ExactRational>,
    pub meet_zero: usize,
    pub meet_inf: usize,
}

impl OrthogonalSystem {
    pub fn new(fiber: Fiber, map: Option<&ContractionMap>) -> Result<Self> {
        let canonical = canonical_vector(&fiber, map)?;
        let r = fiber.ctx().r;
        let find = |l: Label| {
            fiber
                .index_of(&l)
                .ok_or_else(|| inconsistent(format!("no component {l}")))
        };
        let meet_zero = find(Label::C(0, r))?;
        let meet_inf = find(Label::C(r, 0))?;
        for i in [meet_zero, meet_inf] {
            if fiber.components()[i].multiplicity != 1 {
                return Err(inconsistent("a cusp meets a non-reduced component"));
            }
        }
        let genus = genus_x0_prime_power(fiber.ctx());
        Ok(OrthogonalSystem {
            fiber,
            genus,
            canonical,
            meet_zero,
            meet_inf,
        })
    }

    fn meet(&self, m: Cusp) -> usize {
        match m {
            Cusp::Zero => self.meet_zero,
            Cusp::Infinity => self.meet_inf,
        }
    }

    /// Right-hand side `-K.W + (2g - 2) [W = meet_m]`.
    pub fn rhs(&self, m: Cusp) -> Vec<ExactRational> {
        let two_g_2 = ExactRational::from(BigInt::from(2) * (&self.genus - 1));
        let meet = self.meet(m);
        self.canonical
            .iter()
            .enumerate()
            .map(|(i, k)| if i == meet { -k + &two_g_2 } else { -k })
            .collect()
    }

    /// `(M x)_W + K.W - (2g - 2) [W = meet_m]` for every component.
    pub fn residual(&self, v: &VerticalDivisor, m: Cusp) -> Result<Vec<ExactRational>> {
        let mx = self.fiber.matrix().mul_vec(v.coefficients())?;
        Ok(mx.iter().zip(self.rhs(m)).map(|(a, b)| a - b).collect())
    }
}

/// Solves for `V_m`, pinning the elimination's free variable to 0.
pub fn solve_vertical(sys: &OrthogonalSystem, m: Cusp) -> Result<VerticalDivisor> {
    let b = sys.rhs(m);
    let s = solve_symmetric(sys.fiber.matrix(), &b)?;
    let x = s
        .particular
        .ok_or_else(|| inconsistent(format!("vertical divisor system for cusp {m} is inconsistent")))?;
    VerticalDivisor::new(&sys.fiber, x)
}

/// Shifts `v` along the multiplicity vector so the coefficient at `label`
/// becomes `value`.
pub fn gauge_fix(v: &VerticalDivisor, label: &Label, value: &ExactRational) -> Result<VerticalDivisor> {
    let i = v
        .labels
        .iter()
        .position(|l| l == label)
        .ok_or_else(|| invalid(format!("no component {label}")))?;
    let m = ExactRational::from(v.multiplicities[i]);
    let t = (value - &v.coefficients[i]) / m;
    Ok(v.shifted(&t))
}

/// `(g V0.Vinf - (V0^2 + Vinf^2)/2) / (g - 1)`.
pub fn g_rat(fiber: &Fiber, genus: &BigInt, v0: &VerticalDivisor, vi: &VerticalDivisor) -> Result<ExactRational> {
    let m = fiber.matrix();
    let g = ExactRational::from(genus.clone());
    let cross = bilinear(m, v0.coefficients(), vi.coefficients())?;
    let s0 = bilinear(m, v0.coefficients(), v0.coefficients())?;
    let si = bilinear(m, vi.coefficients(), vi.coefficients())?;
    Ok((&g * &cross - (s0 + si) / ExactRational::from(2)) / (g - ExactRational::one()))
}

/// Canonical vector, both vertical divisors and the fiber they live on.
#[derive(Clone, Debug)]
pub struct DivisorSet {
    pub system: OrthogonalSystem,
    pub map: ContractionMap,
    pub v0: VerticalDivisor,
    pub vinf: VerticalDivisor,
}

/// Builds the relevant fiber (minimal for `r = 4`) and solves both systems.
pub fn divisor_set(ctx: &PrimeContext) -> Result<DivisorSet> {
    let ed = edixhoven_fiber(ctx)?;
    let (target, map) = minimal_model(&ed)?;
    let system = if map.is_identity() {
        OrthogonalSystem::new(ed, None)?
    } else {
        OrthogonalSystem::new(target, Some(&map))?
    };
    let v0 = solve_vertical(&system, Cusp::Zero)?;
    let vinf = solve_vertical(&system, Cusp::Infinity)?;
    Ok(DivisorSet { system, map, v0, vinf })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeometricReport {
    pub p: u64,
    pub r: u32,
    pub residue: u32,
    pub genus: BigInt,
    pub v0_dot_vinf: ExactRational,
    pub v0_sq: ExactRational,
    pub vinf_sq: ExactRational,
    pub g_rat: ExactRational,
    pub geometric_part: f64,
    pub ratio: f64,
}

pub const CSV_HEADER: &str = "p,r,residue,genus,v0_dot_vinf,v0_sq,vinf_sq,g_rat,geometric_part,ratio";

/// Decimal rendering with `sig` significant digits, no exponent.
pub fn format_sig(x: f64, sig: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i64;
    let decimals = (sig as i64 - 1 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

impl GeometricReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.p,
            self.r,
            self.residue,
            self.genus,
            self.v0_dot_vinf,
            self.v0_sq,
            self.vinf_sq,
            self.g_rat,
            format_sig(self.geometric_part, 15),
            format_sig(self.ratio, 15)
        )
    }
}

impl Serialize for GeometricReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("GeometricReport", 10)?;
        s.serialize_field("p", &self.p)?;
        s.serialize_field("r", &self.r)?;
        s.serialize_field("residue", &self.residue)?;
        s.serialize_field("genus", &self.genus.to_string())?;
        s.serialize_field("v0_dot_vinf", &self.v0_dot_vinf)?;
        s.serialize_field("v0_sq", &self.v0_sq)?;
        s.serialize_field("vinf_sq", &self.vinf_sq)?;
        s.serialize_field("g_rat", &self.g_rat)?;
        s.serialize_field("geometric_part", &self.geometric_part)?;
        s.serialize_field("ratio", &self.ratio)?;
        s.end()
    }
}

pub fn report_from(set: &DivisorSet) -> Result<GeometricReport> {
    let f = &set.system.fiber;
    let ctx = f.ctx();
    let m = f.matrix();
    let g = &set.system.genus;
    let gr = g_rat(f, g, &set.v0, &set.vinf)?;
    let rg = ExactRational::from(g * BigInt::from(ctx.r));
    let ratio = (&gr / &rg).to_f64();
    Ok(GeometricReport {
        p: ctx.p,
        r: ctx.r,
        residue: ctx.residue,
        genus: g.clone(),
        v0_dot_vinf: bilinear(m, set.v0.coefficients(), set.vinf.coefficients())?,
        v0_sq: bilinear(m, set.v0.coefficients(), set.v0.coefficients())?,
        vinf_sq: bilinear(m, set.vinf.coefficients(), set.vinf.coefficients())?,
        geometric_part: gr.to_f64() * (ctx.p as f64).ln(),
        g_rat: gr,
        ratio,
    })
}

pub fn geometric_report(ctx: &PrimeContext) -> Result<GeometricReport> {
    report_from(&divisor_set(ctx)?)
}

/// `-4 g (g - 1) pair_h + G_rat log p + h`.
pub fn omega_combination(g: f64, pair_h: f64, g_rat: &ExactRational, log_p: f64, h: f64) -> f64 {
    debug_assert!(g >= 2.0);
    -4.0 * g * (g - 1.0) * pair_h + g_rat.to_f64() * log_p + h
}

/// Leading-order stand-in `2g log(p^r) + G_rat log p`, with the height term
/// set to 0.
pub fn omega_asymptotic(ctx: &PrimeContext) -> Result<f64> {
    let rep = geometric_report(ctx)?;
    let g = rep.genus.to_f64().unwrap_or(f64::INFINITY);
    let log_p = (ctx.p as f64).ln();
    Ok(2.0 * g * ctx.r as f64 * log_p + rep.geometric_part)
}

//! Primality, quadratic residue symbols, Euler phi on prime powers and the genus
//! of X0(N).

use num_bigint::BigInt;
use num_traits::One;
use serde::Serialize;

use crate::error::{invalid, Result};

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, exact for every `u64`.
pub fn is_prime(n: u64) -> bool {
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &q in &WITNESSES {
        if n.is_multiple_of(q) {
            return n == q;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &WITNESSES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Quadratic residue symbol `(a/p)` for an odd prime `p`.
pub fn legendre(a: i64, p: u64) -> Result<i8> {
    if p == 2 || !is_prime(p) {
        return Err(invalid(format!("{p} is not an odd prime")));
    }
    let a = (a as i128).rem_euclid(p as i128) as u64;
    if a == 0 {
        return Ok(0);
    }
    Ok(if pow_mod(a, (p - 1) / 2, p) == 1 { 1 } else { -1 })
}

fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut q = 2u64;
    while q.saturating_mul(q) <= n {
        if n.is_multiple_of(q) {
            let mut e = 0;
            while n.is_multiple_of(q) {
                n /= q;
                e += 1;
            }
            out.push((q, e));
        }
        q += if q == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

fn phi_u128(f: &[(u64, u32)]) -> u128 {
    f.iter()
        .map(|&(q, e)| (q as u128).pow(e - 1) * (q as u128 - 1))
        .product()
}

/// Genus of X0(N) from the index, elliptic point and cusp counts.
///
/// Uses trial division, so it is intended for moderate `N`.
pub fn genus_x0_general(n: u64) -> u64 {
    assert!(n >= 1, "genus of X0(0) is undefined");
    let f = factorize(n);
    let mu: u128 = f
        .iter()
        .map(|&(q, e)| (q as u128).pow(e - 1) * (q as u128 + 1))
        .product();

    let nu2: u128 = if n.is_multiple_of(4) {
        0
    } else {
        f.iter()
            .map(|&(q, _)| match q {
                2 => 1,
                _ => (1 + legendre(-1, q).expect("odd prime factor")) as u128,
            })
            .product()
    };
    let nu3: u128 = if n.is_multiple_of(9) {
        0
    } else {
        f.iter()
            .map(|&(q, _)| match q {
                2 => 0,
                3 => 1,
                _ => (1 + legendre(-3, q).expect("odd prime factor")) as u128,
            })
            .product()
    };
    // cusps: sum over d | N of phi(gcd(d, N/d)), multiplicative in N
    let nu_inf: u128 = f
        .iter()
        .map(|&(q, e)| {
            (0..=e)
                .map(|i| {
                    let g = i.min(e - i);
                    if g == 0 {
                        1
                    } else {
                        phi_u128(&[(q, g)])
                    }
                })
                .sum::<u128>()
        })
        .product();

    let twelve_g = 12 + mu - 3 * nu2 - 4 * nu3 - 6 * nu_inf;
    debug_assert_eq!(twelve_g % 12, 0);
    (twelve_g / 12) as u64
}

/// A prime `p >= 5` together with the exponent `r` of the level `p^r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct PrimeContext {
    pub p: u64,
    pub r: u32,
    /// `p mod 12`, one of 1, 5, 7, 11.
    pub residue: u32,
    /// Genus correction constant: 14, 6, 8, 0 for residues 1, 5, 7, 11.
    pub c: u32,
}

impl PrimeContext {
    pub fn new(p: u64, r: u32) -> Result<Self> {
        if !is_prime(p) {
            return Err(invalid(format!("p = {p} is not prime")));
        }
        if p < 5 {
            return Err(invalid(format!("p = {p} is excluded, need p >= 5")));
        }
        if r != 3 && r != 4 {
            return Err(invalid(format!("r = {r} is unsupported, need r in {{3, 4}}")));
        }
        let residue = (p % 12) as u32;
        let c = match residue {
            1 => 14,
            5 => 6,
            7 => 8,
            11 => 0,
            _ => unreachable!("primes >= 5 are units mod 12"),
        };
        Ok(PrimeContext { p, r, residue, c })
    }

    pub fn p_big(&self) -> BigInt {
        BigInt::from(self.p)
    }

    /// Number of supersingular crossing points, `(p - residue)/12`.
    pub fn alpha_count(&self) -> u64 {
        (self.p - self.residue as u64) / 12
    }
}

/// Closed-form genus of X0(p^r).
pub fn genus_x0_prime_power(ctx: &PrimeContext) -> BigInt {
    let p = ctx.p_big();
    let body = match ctx.r {
        3 => &p * (&p + 4) * (&p - 3),
        _ => &p * (&p + 1) * (&p * &p - 6),
    };
    BigInt::one() + (body - ctx.c) / 12
}

/// `phi(p^min(a, b))`, the multiplicity of the component `C(a, b)`.
pub fn mult_phi(a: u32, b: u32, ctx: &PrimeContext) -> u128 {
    let e = a.min(b);
    if e == 0 {
        return 1;
    }
    let p = ctx.p as u128;
    p.pow(e - 1) * (p - 1)
}

/// Primes in `[lo, hi]`, ascending.
pub fn primes_in(lo: u64, hi: u64) -> Vec<u64> {
    if lo > hi {
        return Vec::new();
    }
    (lo..=hi).filter(|&n| is_prime(n)).collect()
}

//! Exact integer and real-quadratic arithmetic.
//!
//! Units of real quadratic orders are kept in the half-integral form
//! `(p + q√d) / 2` with `p² − d q² = 4`. Traces, Pell solutions and
//! Chebyshev powers all live in this representation, so the trace of a
//! hyperbolic matrix and the unit it generates are the same pair `(t, u)`.

use std::sync::{Arc, OnceLock, RwLock};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kronecker symbol `(d/n)`.
pub fn kronecker(d: i64, n: u64) -> i8 {
    if n == 0 {
        return if d == 1 || d == -1 { 1 } else { 0 };
    }
    let tz = n.trailing_zeros();
    let odd = n >> tz;
    let mut sign = 1i8;
    if tz > 0 {
        if d % 2 == 0 {
            return 0;
        }
        let r = d.rem_euclid(8);
        if tz % 2 == 1 && (r == 3 || r == 5) {
            sign = -sign;
        }
    }
    let a = (d as i128).rem_euclid(odd as i128) as u64;
    sign * jacobi(a, odd)
}

/// Jacobi symbol `(a/n)` for odd `n`.
fn jacobi(mut a: u64, mut n: u64) -> i8 {
    debug_assert!(n % 2 == 1);
    let mut sign = 1i8;
    a %= n;
    while a != 0 {
        let tz = a.trailing_zeros();
        a >>= tz;
        if tz % 2 == 1 && (n % 8 == 3 || n % 8 == 5) {
            sign = -sign;
        }
        if a % 4 == 3 && n % 4 == 3 {
            sign = -sign;
        }
        std::mem::swap(&mut a, &mut n);
        a %= n;
    }
    if n == 1 {
        sign
    } else {
        0
    }
}

/// `⌊√n⌋` for arbitrary-precision `n`.
pub fn isqrt(n: &BigUint) -> BigUint {
    n.sqrt()
}

pub fn isqrt_u64(n: u64) -> u64 {
    n.isqrt()
}

pub fn is_square(n: u64) -> bool {
    let r = n.isqrt();
    r * r == n
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factorization {
    pub value: u64,
    /// `(prime, exponent)` with strictly increasing primes.
    pub factors: Vec<(u64, u32)>,
}

impl Factorization {
    pub fn product(&self) -> u64 {
        self.factors.iter().map(|&(p, e)| p.pow(e)).product()
    }

    pub fn primes(&self) -> impl Iterator<Item = u64> + '_ {
        self.factors.iter().map(|&(p, _)| p)
    }

    pub fn exponent_of(&self, p: u64) -> u32 {
        self.factors
            .iter()
            .find(|&&(q, _)| q == p)
            .map_or(0, |&(_, e)| e)
    }

    /// Factorization of the product `self.value * other.value`.
    pub fn merge(&self, other: &Factorization) -> Factorization {
        let mut factors = Vec::with_capacity(self.factors.len() + other.factors.len());
        let (mut i, mut j) = (0, 0);
        while i < self.factors.len() || j < other.factors.len() {
            match (self.factors.get(i), other.factors.get(j)) {
                (Some(&(p, e)), Some(&(q, f))) if p == q => {
                    factors.push((p, e + f));
                    i += 1;
                    j += 1;
                }
                (Some(&(p, e)), Some(&(q, _))) if p < q => {
                    factors.push((p, e));
                    i += 1;
                }
                (Some(_), Some(&(q, f))) => {
                    factors.push((q, f));
                    j += 1;
                }
                (Some(&(p, e)), None) => {
                    factors.push((p, e));
                    i += 1;
                }
                (None, Some(&(q, f))) => {
                    factors.push((q, f));
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        Factorization {
            value: self.value.wrapping_mul(other.value),
            factors,
        }
    }

    /// All positive divisors, ascending.
    pub fn divisors(&self) -> Vec<u64> {
        let mut divs = vec![1u64];
        for &(p, e) in &self.factors {
            let len = divs.len();
            let mut pk = 1u64;
            for _ in 0..e {
                pk *= p;
                for i in 0..len {
                    divs.push(divs[i] * pk);
                }
            }
        }
        divs.sort_unstable();
        divs
    }
}

/// Trial-division factorization.
pub fn factorize(n: u64) -> Factorization {
    assert!(n >= 1, "factorize needs n >= 1");
    let mut factors = Vec::new();
    let mut m = n;
    for p in [2u64, 3] {
        let mut e = 0;
        while m.is_multiple_of(p) {
            m /= p;
            e += 1;
        }
        if e > 0 {
            factors.push((p, e));
        }
    }
    let mut p = 5u64;
    let mut step = 2u64;
    while p * p <= m {
        let mut e = 0;
        while m.is_multiple_of(p) {
            m /= p;
            e += 1;
        }
        if e > 0 {
            factors.push((p, e));
        }
        p += step;
        step = 6 - step;
    }
    if m > 1 {
        factors.push((m, 1));
    }
    Factorization { value: n, factors }
}

/// `t² − 4`, rejecting traces outside `3 ≤ t < 2³²`.
pub fn trace_discriminant(t: u64) -> Result<u64> {
    if t < 3 {
        return Err(Error::TraceTooSmall(t));
    }
    if t >= 1 << 32 {
        return Err(Error::TraceTooLarge(t));
    }
    Ok(t * t - 4)
}

/// Factorization of `t² − 4 = (t − 2)(t + 2)`.
pub fn factorize_trace_discriminant(t: u64) -> Result<Factorization> {
    trace_discriminant(t)?;
    Ok(factorize(t - 2).merge(&factorize(t + 2)))
}

/// `U(t)`: the largest `u` with `u² | t² − 4` and `(t² − 4)/u² ≡ 0, 1 (mod 4)`.
pub fn max_u(t: u64) -> Result<u64> {
    let disc = trace_discriminant(t)?;
    let f = factorize_trace_discriminant(t)?;
    let odd: u64 = f
        .factors
        .iter()
        .filter(|&&(p, _)| p != 2)
        .map(|&(p, e)| p.pow(e / 2))
        .product();
    let rest = disc / (odd * odd);
    let mut k = f.exponent_of(2) / 2;
    while k > 0 {
        let r = (rest >> (2 * k)) % 4;
        if r == 0 || r == 1 {
            break;
        }
        k -= 1;
    }
    Ok(odd << k)
}

/// The divisors of `U(t)`, ascending. Each one is checked against the
/// defining congruence.
pub fn admissible_divisors(t: u64) -> Result<Vec<u64>> {
    let disc = trace_discriminant(t)?;
    let divs = factorize(max_u(t)?).divisors();
    for &u in &divs {
        let d = disc / (u * u);
        assert!(
            d * u * u == disc && (d % 4 == 0 || d % 4 == 1),
            "divisor {u} of U({t}) is not admissible"
        );
    }
    Ok(divs)
}

/// Fundamental automorph `(p + q√d)/2` of discriminant `d`: the minimal
/// positive solution of `p² − d q² = 4`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PellUnit {
    pub d: u64,
    #[serde(with = "crate::serde_big::biguint")]
    pub p: BigUint,
    #[serde(with = "crate::serde_big::biguint")]
    pub q: BigUint,
}

impl PellUnit {
    /// Checks `p² − d q² = 4`.
    pub fn is_solution(&self) -> bool {
        &self.p * &self.p == BigUint::from(self.d) * &self.q * &self.q + 4u32
    }

    /// Natural log of `(p + q√d)/2`.
    pub fn ln(&self) -> f64 {
        // q√d = √(p² − 4), so the unit is (p/2)(1 + √(1 − 4/p²)).
        let p_ln = big_ln(&self.p);
        let inv = if p_ln > 300.0 {
            0.0
        } else {
            4.0 / (self.p.to_f64().unwrap() * self.p.to_f64().unwrap())
        };
        p_ln + ((1.0 + (1.0 - inv).sqrt()) / 2.0).ln()
    }

    pub fn pow(&self, k: u32) -> (BigUint, BigUint) {
        unit_power(self, k)
    }
}

pub fn validate_discriminant(d: u64) -> Result<()> {
    if d < 5 {
        return Err(Error::InvalidDiscriminant {
            d,
            reason: "must be at least 5",
        });
    }
    if d % 4 == 2 || d % 4 == 3 {
        return Err(Error::InvalidDiscriminant {
            d,
            reason: "must be 0 or 1 mod 4",
        });
    }
    if is_square(d) {
        return Err(Error::InvalidDiscriminant {
            d,
            reason: "must not be a perfect square",
        });
    }
    Ok(())
}

/// Minimal positive solution of `p² − d q² = 4`.
///
/// Runs the continued fraction of `(P₀ + √d)/2` with `P₀ = d mod 2` until
/// the denominator returns to 2. The last convergent solves
/// `x² − d y² = ±4`; a `−4` solution is squared.
pub fn pell4_fundamental(d: u64) -> Result<PellUnit> {
    validate_discriminant(d)?;
    let s = d.isqrt() as i128;
    let di = d as i128;
    let p0 = (d % 2) as i128;
    let q0 = 2i128;
    let (mut p, mut q) = (p0, q0);
    let (mut a_prev, mut a_cur) = (BigUint::zero(), BigUint::one());
    let (mut b_prev, mut b_cur) = (BigUint::one(), BigUint::zero());
    let mut len = 0u64;
    loop {
        let a = ((p + s) / q) as u64;
        let a_next = &a_cur * a + &a_prev;
        let b_next = &b_cur * a + &b_prev;
        a_prev = std::mem::replace(&mut a_cur, a_next);
        b_prev = std::mem::replace(&mut b_cur, b_next);
        len += 1;
        p = a as i128 * q - p;
        q = (di - p * p) / q;
        if q == q0 {
            break;
        }
    }
    // G = Q₀·A − P₀·B is the rational part of the solution.
    let x = &a_cur * 2u32 - &b_cur * (p0 as u32);
    let y = b_cur;
    let unit = if len.is_multiple_of(2) {
        PellUnit { d, p: x, q: y }
    } else {
        let p2 = (&x * &x + BigUint::from(d) * &y * &y) / 2u32;
        let q2 = &x * &y;
        PellUnit { d, p: p2, q: q2 }
    };
    debug_assert!(unit.is_solution());
    Ok(unit)
}

/// `((p + q√d)/2)^k = (p_k + q_k√d)/2`.
pub fn unit_power(unit: &PellUnit, k: u32) -> (BigUint, BigUint) {
    if k == 0 {
        return (BigUint::from(2u32), BigUint::zero());
    }
    let (mut p_prev, mut p_cur) = (BigUint::from(2u32), unit.p.clone());
    let (mut q_prev, mut q_cur) = (BigUint::zero(), unit.q.clone());
    for _ in 1..k {
        let p_next = &unit.p * &p_cur - &p_prev;
        let q_next = &unit.p * &q_cur - &q_prev;
        p_prev = std::mem::replace(&mut p_cur, p_next);
        q_prev = std::mem::replace(&mut q_cur, q_next);
    }
    (p_cur, q_cur)
}

/// Product of `(a₀ + a₁√d)/2` and `(b₀ + b₁√d)/2` in the same representation.
pub fn half_surd_mul(d: u64, a: &(BigUint, BigUint), b: &(BigUint, BigUint)) -> (BigUint, BigUint) {
    let rational = (&a.0 * &b.0 + BigUint::from(d) * &a.1 * &b.1) / 2u32;
    let irrational = (&a.0 * &b.1 + &a.1 * &b.0) / 2u32;
    (rational, irrational)
}

/// Trace of the `l`-th power of a matrix with trace `t0`.
pub fn cheb_trace(t0: u64, l: u32) -> BigUint {
    assert!(l >= 1, "cheb_trace needs l >= 1");
    let t0 = BigUint::from(t0);
    let (mut prev, mut cur) = (BigUint::from(2u32), t0.clone());
    for _ in 1..l {
        let next = &t0 * &cur - &prev;
        prev = std::mem::replace(&mut cur, next);
    }
    cur
}

/// All `(t0, l)` with `l ≥ 2` and `cheb_trace(t0, l) = t`.
pub fn power_ancestors(t: u64) -> Vec<(u64, u32)> {
    let target = t as u128;
    let mut out = Vec::new();
    let mut t0 = 3u128;
    while t0 * t0 - 2 <= target {
        let (mut prev, mut cur) = (t0, t0 * t0 - 2);
        let mut l = 2u32;
        while cur <= target {
            if cur == target {
                out.push((t0 as u64, l));
                break;
            }
            let next = t0 * cur - prev;
            prev = cur;
            cur = next;
            l += 1;
        }
        t0 += 1;
    }
    out
}

pub(crate) fn big_ln(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        x.to_f64().unwrap().ln()
    } else {
        let shift = bits - 64;
        (x >> shift).to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
    }
}

pub(crate) fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub(crate) fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
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

/// A square root of `a` modulo an odd prime `p`, if one exists.
pub fn sqrt_mod_prime(a: u64, p: u64) -> Option<u64> {
    let a = a % p;
    if a == 0 {
        return Some(0);
    }
    if p == 2 {
        return Some(a);
    }
    if pow_mod(a, (p - 1) / 2, p) != 1 {
        return None;
    }
    if p % 4 == 3 {
        return Some(pow_mod(a, (p + 1) / 4, p));
    }
    // Tonelli–Shanks
    let mut q = p - 1;
    let mut s = 0;
    while q.is_multiple_of(2) {
        q /= 2;
        s += 1;
    }
    let mut z = 2;
    while pow_mod(z, (p - 1) / 2, p) != p - 1 {
        z += 1;
    }
    let mut m = s;
    let mut c = pow_mod(z, q, p);
    let mut t = pow_mod(a, q, p);
    let mut r = pow_mod(a, q.div_ceil(2), p);
    while t != 1 {
        let mut i = 0;
        let mut t2 = t;
        while t2 != 1 {
            t2 = mul_mod(t2, t2, p);
            i += 1;
        }
        let b = pow_mod(c, 1 << (m - i - 1), p);
        m = i;
        c = mul_mod(b, b, p);
        t = mul_mod(t, c, p);
        r = mul_mod(r, b, p);
    }
    Some(r)
}

static SPF: OnceLock<RwLock<Arc<Vec<u32>>>> = OnceLock::new();

/// Smallest-prime-factor table covering at least `0..=limit`, shared
/// process-wide and grown on demand.
pub(crate) fn spf_table(limit: usize) -> Arc<Vec<u32>> {
    let lock = SPF.get_or_init(|| RwLock::new(Arc::new(Vec::new())));
    {
        let table = lock.read().unwrap();
        if table.len() > limit {
            return Arc::clone(&table);
        }
    }
    let mut table = lock.write().unwrap();
    if table.len() <= limit {
        let size = (limit + 1).max(table.len() * 2).max(1 << 16);
        let mut spf = vec![0u32; size];
        for i in 2..size {
            if spf[i] == 0 {
                let mut j = i;
                while j < size {
                    if spf[j] == 0 {
                        spf[j] = i as u32;
                    }
                    j += i;
                }
            }
        }
        *table = Arc::new(spf);
    }
    Arc::clone(&table)
}

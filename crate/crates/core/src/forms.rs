//! Reduction theory of indefinite binary quadratic forms.
//!
//! A form `(a, b, c)` of discriminant `d = b² − 4ac > 0` is reduced when
//! `0 < b < √d` and `√d − b < 2|a| < √d + b`. The right-neighbour map
//! permutes reduced forms of a given discriminant; its orbits (cycles) are
//! the proper-equivalence classes, so the narrow class number `h(d)` is
//! the number of cycles among primitive reduced forms.
//!
//! All comparisons against `√d` go through `s = ⌊√d⌋`: since `d` is not a
//! square, `x < √d ⇔ x ≤ s` and `x > √d ⇔ x ≥ s + 1` for integers `x`.

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::arith::{self, spf_table, sqrt_mod_prime};
use crate::error::{Error, Result};

/// Largest discriminant handled with machine integers.
pub const MAX_DISCRIMINANT: u64 = 1 << 62;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QuadForm {
    pub a: i64,
    pub b: i64,
    pub c: i64,
}

impl QuadForm {
    /// Builds a form, rejecting non-positive, square or oversized discriminants.
    pub fn new(a: i64, b: i64, c: i64) -> Result<Self> {
        let disc = b as i128 * b as i128 - 4 * a as i128 * c as i128;
        let invalid = |reason| Error::InvalidForm { a, b, c, reason };
        if disc <= 0 {
            return Err(invalid("discriminant must be positive"));
        }
        if disc > MAX_DISCRIMINANT as i128 {
            return Err(invalid("discriminant too large"));
        }
        if arith::is_square(disc as u64) {
            return Err(invalid("discriminant must not be a square"));
        }
        Ok(Self { a, b, c })
    }

    pub fn discriminant(&self) -> u64 {
        (self.b as i128 * self.b as i128 - 4 * self.a as i128 * self.c as i128) as u64
    }

    pub fn is_primitive(&self) -> bool {
        self.a.gcd(&self.b).gcd(&self.c) == 1
    }

    pub fn is_reduced(&self) -> bool {
        reduced_with_root(self, self.discriminant().isqrt() as i64)
    }

    /// The right neighbour of a reduced form.
    pub fn neighbor(&self) -> Result<QuadForm> {
        let d = self.discriminant();
        let s = d.isqrt() as i64;
        if !reduced_with_root(self, s) {
            return Err(Error::NotReduced {
                a: self.a,
                b: self.b,
                c: self.c,
            });
        }
        Ok(neighbor_with_root(self, d, s))
    }
}

fn reduced_with_root(f: &QuadForm, s: i64) -> bool {
    let two_a = 2 * f.a.abs();
    f.b >= 1 && f.b <= s && two_a + f.b > s && two_a - f.b <= s
}

fn neighbor_with_root(f: &QuadForm, d: u64, s: i64) -> QuadForm {
    let m = 2 * f.c.abs();
    let b = s - (s + f.b).rem_euclid(m);
    let c = (b as i128 * b as i128 - d as i128) / (4 * f.c as i128);
    QuadForm {
        a: f.c,
        b,
        c: c as i64,
    }
}

fn validate(d: u64) -> Result<()> {
    arith::validate_discriminant(d)?;
    if d > MAX_DISCRIMINANT {
        return Err(Error::InvalidDiscriminant {
            d,
            reason: "exceeds the 2^62 limit for form reduction",
        });
    }
    Ok(())
}

const UNSET: u32 = u32::MAX;
const NONRESIDUE: u32 = u32::MAX - 1;

/// Square roots of `d` modulo `p^e` (odd or even `p`), by lifting one
/// power of `p` at a time.
fn sqrt_mod_prime_power(d: u64, p: u64, e: u32, base: &[u64]) -> Vec<u64> {
    let mut roots = base.to_vec();
    let mut pk = p;
    for _ in 1..e {
        let next = pk * p;
        let target = d % next;
        let mut lifted = Vec::new();
        for &r in &roots {
            for j in 0..p {
                let x = r + j * pk;
                if arith::mul_mod(x, x, next) == target {
                    lifted.push(x);
                }
            }
        }
        roots = lifted;
        pk = next;
        if roots.is_empty() {
            break;
        }
    }
    roots
}

fn crt_combine(roots: &[u64], modulus: u64, other: &[u64], other_mod: u64) -> Vec<u64> {
    let inv = {
        let g = (modulus as i128 % other_mod as i128).extended_gcd(&(other_mod as i128));
        debug_assert_eq!(g.gcd, 1);
        g.x.rem_euclid(other_mod as i128) as u64
    };
    let mut out = Vec::with_capacity(roots.len() * other.len());
    for &r1 in roots {
        for &r2 in other {
            let diff = (r2 + other_mod - r1 % other_mod) % other_mod;
            let k = arith::mul_mod(diff, inv, other_mod);
            out.push(r1 + modulus * k);
        }
    }
    out
}

/// Every reduced primitive form of discriminant `d`, ordered by `(a, b)`.
pub fn reduced_primitive_forms(d: u64) -> Result<Vec<QuadForm>> {
    validate(d)?;
    let s = d.isqrt();
    let spf = spf_table(s as usize);
    let mut sqrt_p = vec![UNSET; s as usize + 1];
    let mut forms = Vec::new();

    'a: for a in 1..=s {
        let lo = 1.max((s + 1).saturating_sub(2 * a)).max((2 * a).saturating_sub(s));
        if lo > s {
            continue;
        }
        // Roots of x² ≡ d (mod 4a): odd prime powers first, they reject fastest.
        let mut odd_parts: Vec<(u64, u32)> = Vec::new();
        let mut rest = a;
        let twos = rest.trailing_zeros();
        rest >>= twos;
        while rest > 1 {
            let p = spf[rest as usize] as u64;
            let mut e = 0;
            while rest % p == 0 {
                rest /= p;
                e += 1;
            }
            let slot = &mut sqrt_p[p as usize];
            if *slot == UNSET {
                *slot = sqrt_mod_prime(d % p, p).map_or(NONRESIDUE, |r| r as u32);
            }
            if *slot == NONRESIDUE {
                continue 'a;
            }
            odd_parts.push((p, e));
        }

        let two_mod = 1u64 << (twos + 2);
        let mut roots = sqrt_mod_prime_power(d, 2, twos + 2, &[d & 1]);
        let mut modulus = two_mod;
        for &(p, e) in &odd_parts {
            let r = sqrt_p[p as usize] as u64;
            let base: &[u64] = if r == 0 { &[0] } else { &[r, p - r] };
            let pe_roots = sqrt_mod_prime_power(d, p, e, base);
            if pe_roots.is_empty() {
                continue 'a;
            }
            let pe = p.pow(e);
            roots = crt_combine(&roots, modulus, &pe_roots, pe);
            modulus *= pe;
            if roots.is_empty() {
                continue 'a;
            }
        }
        if roots.is_empty() {
            continue;
        }

        let period = 2 * a;
        let mut residues: Vec<u64> = roots.into_iter().map(|r| r % period).collect();
        residues.sort_unstable();
        residues.dedup();
        for r in residues {
            let mut b = lo + (r + period - lo % period) % period;
            while b <= s {
                let num = b as i128 * b as i128 - d as i128;
                debug_assert_eq!(num % (4 * a as i128), 0);
                let c = (num / (4 * a as i128)) as i64;
                let (ai, bi) = (a as i64, b as i64);
                if ai.gcd(&bi).gcd(&c) == 1 {
                    forms.push(QuadForm { a: ai, b: bi, c });
                    forms.push(QuadForm { a: -ai, b: bi, c: -c });
                }
                b += period;
            }
        }
    }
    forms.sort_unstable_by_key(|f| (f.a, f.b));
    Ok(forms)
}

/// The cycles of the neighbour map on primitive reduced forms.
pub fn cycles(d: u64) -> Result<Vec<Vec<QuadForm>>> {
    let forms = reduced_primitive_forms(d)?;
    let s = d.isqrt() as i64;
    let index_of = |f: &QuadForm| {
        forms
            .binary_search_by_key(&(f.a, f.b), |g| (g.a, g.b))
            .unwrap_or_else(|_| panic!("neighbour {f:?} of a reduced form is missing for d={d}"))
    };
    let mut seen = vec![false; forms.len()];
    let mut out = Vec::new();
    for start in 0..forms.len() {
        if seen[start] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            cycle.push(forms[i]);
            i = index_of(&neighbor_with_root(&forms[i], d, s));
        }
        assert_eq!(i, start, "neighbour walk for d={d} did not close");
        out.push(cycle);
    }
    Ok(out)
}

/// Narrow class number `h(d)`: the number of neighbour cycles.
pub fn class_number(d: u64) -> Result<u64> {
    Ok(cycles(d)?.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn form(a: i64, b: i64, c: i64) -> QuadForm {
        QuadForm::new(a, b, c).unwrap()
    }

    /// Exhaustive scan over `0 < b < √d` and every `a` dividing `(b² − d)/4`.
    fn brute_reduced(d: u64) -> Vec<QuadForm> {
        let s = d.isqrt() as i64;
        let mut out = Vec::new();
        for b in 1..=s {
            let num = b * b - d as i64;
            if num % 4 != 0 {
                continue;
            }
            let ac = num / 4;
            for a in (-2 * s..=2 * s).filter(|&a| a != 0) {
                if ac % a != 0 {
                    continue;
                }
                let f = QuadForm { a, b, c: ac / a };
                if f.is_reduced() && f.is_primitive() {
                    out.push(f);
                }
            }
        }
        out.sort_by_key(|f| (f.a, f.b));
        out
    }

    #[test]
    fn discriminant_examples() {
        assert_eq!(form(1, 1, -1).discriminant(), 5);
        assert_eq!(form(1, 4, -4).discriminant(), 32);
        assert_eq!(form(1, 2, -2).discriminant(), 12);
    }

    #[test]
    fn rejects_bad_forms() {
        assert!(QuadForm::new(1, 0, 1).is_err());
        assert!(QuadForm::new(1, 2, 0).is_err());
    }

    #[test]
    fn is_reduced_examples() {
        assert!(form(1, 1, -1).is_reduced());
        assert!(!form(1, 0, -3).is_reduced());
        assert!(form(-1, 1, 1).is_reduced());
    }

    #[test]
    fn neighbor_examples() {
        assert_eq!(form(1, 1, -1).neighbor().unwrap(), form(-1, 1, 1));
        assert_eq!(form(-1, 1, 1).neighbor().unwrap(), form(1, 1, -1));
        assert_eq!(form(1, 2, -2).neighbor().unwrap(), form(-2, 2, 1));
        assert!(matches!(form(1, 0, -3).neighbor(), Err(Error::NotReduced { .. })));
    }

    #[test]
    fn reduced_forms_examples() {
        assert_eq!(
            reduced_primitive_forms(5).unwrap(),
            vec![form(-1, 1, 1), form(1, 1, -1)]
        );
        assert_eq!(
            reduced_primitive_forms(8).unwrap(),
            vec![form(-1, 2, 1), form(1, 2, -1)]
        );
        assert_eq!(reduced_primitive_forms(12).unwrap().len(), 4);
        assert!(reduced_primitive_forms(9).is_err());
        assert!(reduced_primitive_forms(7).is_err());
    }

    #[test]
    fn class_number_examples() {
        assert_eq!(class_number(5).unwrap(), 1);
        assert_eq!(class_number(12).unwrap(), 2);
        assert_eq!(class_number(45).unwrap(), 2);
        assert_eq!(class_number(8).unwrap(), 1);
        assert!(class_number(4).is_err());
    }

    #[test]
    fn enumeration_matches_brute_force() {
        for d in 5..4000u64 {
            if arith::validate_discriminant(d).is_err() {
                continue;
            }
            assert_eq!(reduced_primitive_forms(d).unwrap(), brute_reduced(d), "d={d}");
        }
    }

    #[test]
    fn neighbor_preserves_invariants_and_cycles_partition() {
        for d in (5..3000u64).filter(|&d| arith::validate_discriminant(d).is_ok()) {
            let forms = reduced_primitive_forms(d).unwrap();
            for f in &forms {
                let g = f.neighbor().unwrap();
                assert_eq!(g.discriminant(), d);
                assert!(g.is_primitive() && g.is_reduced());
                let mut h = g;
                let mut steps = 1;
                while h != *f {
                    h = h.neighbor().unwrap();
                    steps += 1;
                    assert!(steps <= forms.len(), "no closure for {f:?}");
                }
            }
            let cyc = cycles(d).unwrap();
            let all: HashSet<QuadForm> = cyc.iter().flatten().copied().collect();
            assert_eq!(all.len(), forms.len());
            assert_eq!(cyc.iter().map(Vec::len).sum::<usize>(), forms.len());
        }
    }

    #[test]
    fn narrow_class_numbers_of_known_discriminants() {
        // h⁺ doubles when no unit of norm −1 exists (d = 12, 21, 24, 28, ...).
        let known = [(5, 1), (8, 1), (12, 2), (13, 1), (17, 1), (21, 2), (24, 2), (28, 2), (60, 4), (229, 3)];
        for (d, h) in known {
            assert_eq!(class_number(d).unwrap(), h, "d={d}");
        }
    }
}

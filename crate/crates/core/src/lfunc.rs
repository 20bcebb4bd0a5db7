//! `L(1, χ_d)` for real quadratic discriminants, and the character sums
//! attached to trace progressions `t ≡ ±2 (mod p^e)`.

use rayon::prelude::*;

use crate::arith::{self, factorize, kronecker, Factorization};
use crate::error::{Error, Result};
use crate::forms;

/// `h(d) · log ε(d) / √d` from the narrow class number and the Pell-4 unit.
pub fn l_value_exact(d: u64) -> Result<f64> {
    let h = forms::class_number(d)?;
    let unit = arith::pell4_fundamental(d)?;
    Ok(h as f64 * unit.ln() / (d as f64).sqrt())
}

/// Neumaier-compensated running sum.
#[derive(Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// `ψ(z) − log z` by the asymptotic series, with a bound on the first
/// omitted term. Accurate for `z ≥ 4`.
fn digamma_minus_log(z: f64) -> (f64, f64) {
    // B₂ₙ/(2n) for n = 1..6
    const COEFFS: [f64; 6] = [
        1.0 / 12.0,
        -1.0 / 120.0,
        1.0 / 252.0,
        -1.0 / 240.0,
        1.0 / 132.0,
        -691.0 / 32760.0,
    ];
    let inv2 = 1.0 / (z * z);
    let mut pow = inv2;
    let mut acc = -0.5 / z;
    for c in COEFFS {
        acc -= c * pow;
        pow *= inv2;
    }
    (acc, (1.0 / 12.0) * pow)
}

/// The series `Σ (d/n)/n`, summed over whole periods of the character.
///
/// The first `B` periods are added term by term. Since the character sums
/// to zero over a period, the remaining tail regroups into
/// `−(1/m) Σ_r χ(r) ψ(B + r/m)`, evaluated with the digamma asymptotic
/// series. `B` grows until the series remainder is below `tol / 2`.
pub fn l_value_direct(d: u64, tol: f64) -> Result<f64> {
    arith::validate_discriminant(d)?;
    let period = d;
    let chars: Vec<i8> = (1..=period).map(|n| kronecker(d as i64, n)).collect();

    let mut blocks = 4u64;
    let mut remainder = digamma_minus_log(blocks as f64).1;
    while remainder > tol / 2.0 && blocks < 64 {
        blocks *= 2;
        remainder = digamma_minus_log(blocks as f64).1;
    }
    let terms = (blocks + 1) * period;
    let achievable = remainder + 1e-15 * (terms as f64).sqrt();
    if tol < achievable {
        return Err(Error::NonConvergence { d, tol, achievable });
    }

    let mut sum = Compensated::default();
    for k in 0..blocks {
        for (r, &chi) in chars.iter().enumerate() {
            if chi != 0 {
                sum.add(chi as f64 / (k * period + r as u64 + 1) as f64);
            }
        }
    }
    // ψ(B + r/m) = log B + log1p(r/(mB)) + (ψ − log)(B + r/m); the
    // constant log B cancels against the zero character sum.
    let m = period as f64;
    let b = blocks as f64;
    let mut tail = Compensated::default();
    for (r, &chi) in chars.iter().enumerate() {
        if chi != 0 {
            let x = (r as f64 + 1.0) / m;
            let psi = (x / b).ln_1p() + digamma_minus_log(b + x).0;
            tail.add(-(chi as f64) * psi);
        }
    }
    Ok(sum.value() + tail.value() / m)
}

/// `χ₈`: `1` on `m ≡ 1`, `−1` on `m ≡ 5 (mod 8)`, `0` otherwise.
pub fn chi8(m: i64) -> i8 {
    match m.rem_euclid(8) {
        1 => 1,
        5 => -1,
        _ => 0,
    }
}

/// The progression of traces `t ≡ μ (mod K²)`, where `μ ≡ ν_i (mod p_i^{2e_i})`
/// for each prime power `p_i^{e_i} ‖ K` and `ν_i ∈ {+2, −2}`.
///
/// On this progression `K² | t² − 4`. For `K = 1`, `μ = 2` so that
/// `f̂(t) = (t + 2)² − 4`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgressionSpec {
    modulus: u64,
    factorization: Factorization,
    nu: Vec<i64>,
    mu: u64,
}

impl ProgressionSpec {
    pub fn new(modulus: u64, nu: &[i64]) -> Result<Self> {
        if modulus == 0 {
            return Err(Error::InvalidProgression("K must be positive".into()));
        }
        let factorization = factorize(modulus);
        if nu.len() != factorization.factors.len() {
            return Err(Error::InvalidProgression(format!(
                "K={modulus} has {} distinct primes but {} signs were given",
                factorization.factors.len(),
                nu.len()
            )));
        }
        if let Some(bad) = nu.iter().find(|&&v| v != 2 && v != -2) {
            return Err(Error::InvalidProgression(format!("ν entries must be ±2, got {bad}")));
        }
        let k2 = modulus
            .checked_mul(modulus)
            .ok_or_else(|| Error::InvalidProgression(format!("K={modulus} is too large")))?;
        let mu = if modulus == 1 {
            2
        } else {
            let mut mu = 0u64;
            let mut acc = 1u64;
            for (&(p, e), &v) in factorization.factors.iter().zip(nu) {
                let pe = p.pow(2 * e);
                let target = (v as i128).rem_euclid(pe as i128) as u64;
                // lift mu (mod acc) to mu' ≡ target (mod pe)
                let inv = {
                    let g = num_integer::Integer::extended_gcd(&(acc as i128 % pe as i128), &(pe as i128));
                    g.x.rem_euclid(pe as i128) as u64
                };
                let diff = (target + pe - mu % pe) % pe;
                mu += acc * arith::mul_mod(diff, inv, pe);
                acc *= pe;
            }
            mu % k2
        };
        debug_assert_eq!((mu as u128 * mu as u128 + (k2 as u128) * 4 - 4) % k2 as u128, 0);
        Ok(Self {
            modulus,
            factorization,
            nu: nu.to_vec(),
            mu,
        })
    }

    /// Same sign `ν` at every prime of `K`.
    pub fn uniform(modulus: u64, sign: i64) -> Result<Self> {
        let primes = factorize(modulus.max(1)).factors.len();
        Self::new(modulus, &vec![sign; primes])
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn mu(&self) -> u64 {
        self.mu
    }

    pub fn nu(&self) -> &[i64] {
        &self.nu
    }

    pub fn factorization(&self) -> &Factorization {
        &self.factorization
    }

    pub fn contains(&self, t: u64) -> bool {
        let k2 = self.modulus * self.modulus;
        t % k2 == self.mu % k2
    }

    /// Traces `3 ≤ t ≤ t_max` in the progression.
    pub fn terms(&self, t_max: f64) -> Vec<u64> {
        if t_max < 3.0 {
            return Vec::new();
        }
        let k2 = self.modulus * self.modulus;
        let top = t_max.floor() as u64;
        let first = {
            let r = self.mu % k2;
            if r >= 3 {
                r
            } else {
                r + k2 * (3 - r).div_ceil(k2)
            }
        };
        (first..=top).step_by(k2 as usize).collect()
    }
}

/// `f̂(t) = f_K(K²t + μ) = K²t² + 2μt + (μ² − 4)/K²`.
pub fn f_hat(spec: &ProgressionSpec, t: u64) -> i64 {
    let k2 = (spec.modulus * spec.modulus) as i128;
    let (mu, t) = (spec.mu as i128, t as i128);
    let value = k2 * t * t + 2 * mu * t + (mu * mu - 4) / k2;
    i64::try_from(value).expect("f̂(t) overflows i64")
}

/// `c_{8n} = Σ_{8n ≤ t < 16n} (f̂(t)/n)`.
pub fn c8n_direct(spec: &ProgressionSpec, n: u64) -> i64 {
    assert!(n >= 1);
    (8 * n..16 * n)
        .map(|t| kronecker(f_hat(spec, t), n) as i64)
        .sum()
}

fn divides(p: u64, k: u64) -> bool {
    k.is_multiple_of(p)
}

/// Closed form for `c_{8n}`, `n = 2^e ∏ q_j^{e_j}`.
///
/// The window is a whole period of `t ↦ (f̂(t)/n)`, so the sum splits over
/// `t mod 2^{e+3}` and `t mod q_j^{e_j}`. For `q_j ∤ K`, `f̂` runs over
/// `s² − 4`; for `q_j | K` it is linear mod `q_j` with exactly one zero.
pub fn c8n_product(spec: &ProgressionSpec, n: u64) -> i64 {
    c8n_closed_form(spec, n, |q, k| if divides(q, k) { q as i64 - 1 } else { q as i64 - 2 })
}

/// The closed form with `(q − 2) q^{e−1}` for every even `e_j`, regardless
/// of whether `q | K`. Disagrees with [`c8n_direct`] exactly when some
/// `q | K` divides `n` to an even power; kept for comparison.
pub fn c8n_product_as_printed(spec: &ProgressionSpec, n: u64) -> i64 {
    c8n_closed_form(spec, n, |q, _| q as i64 - 2)
}

fn c8n_closed_form(spec: &ProgressionSpec, n: u64, even_count: impl Fn(u64, u64) -> i64) -> i64 {
    assert!(n >= 1);
    let k = spec.modulus;
    let f = factorize(n);
    let e = f.exponent_of(2);
    let two_part = if e == 0 {
        8
    } else if divides(2, k) {
        0
    } else {
        4 * (-2i64).pow(e)
    };
    let mut product = two_part;
    for &(q, ej) in f.factors.iter().filter(|&&(q, _)| q != 2) {
        let scale = (q as i64).pow(ej - 1);
        let local = if ej % 2 == 0 {
            even_count(q, k)
        } else if divides(q, k) {
            0
        } else {
            -1
        };
        product *= scale * local;
    }
    product
}

/// `2^{−e} ∏_{e_j even} q_j^{−e_j} ∏_{e_j odd} q_j^{−e_j−1}`, the bound on `|c_{8n}/8n²|`.
pub fn c8n_majorant(n: u64) -> f64 {
    let f = factorize(n);
    f.factors
        .iter()
        .map(|&(q, e)| {
            if q == 2 {
                0.5f64.powi(e as i32)
            } else if e % 2 == 0 {
                (q as f64).powi(-(e as i32))
            } else {
                (q as f64).powi(-(e as i32) - 1)
            }
        })
        .product()
}

/// `φ^{(k)}_{K,ν}(T) = Σ_{t ∈ progression, t ≤ T} L(1, χ_{t²−4})^k`.
pub fn phi_knu(spec: &ProgressionSpec, k: u32, t_max: f64) -> Result<f64> {
    phi_knu_with(spec, k, t_max, |t| l_value_exact(t * t - 4))
}

/// As [`phi_knu`], with `L(1, χ_{t²−4})` supplied per trace.
pub fn phi_knu_with<F>(spec: &ProgressionSpec, k: u32, t_max: f64, l_of_trace: F) -> Result<f64>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    let values = spec
        .terms(t_max)
        .into_par_iter()
        .map(|t| l_of_trace(t).map(|l| l.powi(k as i32)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.iter().sum())
}

pub const MIN_PROGRESSION_TERMS: usize = 50;

/// Slope estimate `φ^{(k)}_{K,ν}(T) / T`.
pub fn estimate_a(spec: &ProgressionSpec, k: u32, t_max: f64) -> Result<f64> {
    estimate_a_with(spec, k, t_max, |t| l_value_exact(t * t - 4))
}

pub fn estimate_a_with<F>(spec: &ProgressionSpec, k: u32, t_max: f64, l_of_trace: F) -> Result<f64>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    let found = spec.terms(t_max).len();
    if found < MIN_PROGRESSION_TERMS {
        return Err(Error::InsufficientSample {
            needed: MIN_PROGRESSION_TERMS,
            found,
            t_max,
        });
    }
    Ok(phi_knu_with(spec, k, t_max, l_of_trace)? / t_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn l_value_exact_examples() {
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!(close(l_value_exact(5).unwrap(), 2.0 * golden.ln() / 5f64.sqrt(), 1e-14));
        let v8 = (3.0 + 2.0 * 2f64.sqrt()).ln() / 8f64.sqrt();
        assert!(close(l_value_exact(8).unwrap(), v8, 1e-14));
        let v12 = 2.0 * (2.0 + 3f64.sqrt()).ln() / 12f64.sqrt();
        assert!(close(l_value_exact(12).unwrap(), v12, 1e-14));
        assert!(close(l_value_exact(5).unwrap(), 0.4304089, 1e-7));
        assert!(close(l_value_exact(8).unwrap(), 0.6232252, 1e-7));
        assert!(close(l_value_exact(12).unwrap(), 0.7603460, 1e-7));
    }

    #[test]
    fn l_value_direct_examples() {
        for d in [5u64, 8, 12] {
            let exact = l_value_exact(d).unwrap();
            assert!(close(l_value_direct(d, 1e-8).unwrap(), exact, 1e-8), "d={d}");
        }
    }

    #[test]
    fn l_value_direct_matches_slow_partial_sums() {
        // Plain partial sums over 2·10⁶ whole periods-worth of terms: the
        // error is bounded by (max character partial sum)/N.
        for d in [5u64, 12, 13, 21, 33, 44] {
            let n_max = 2_000_000u64 / d * d;
            let s: f64 = (1..=n_max).map(|n| kronecker(d as i64, n) as f64 / n as f64).sum();
            let bound = d as f64 / n_max as f64;
            assert!(close(l_value_direct(d, 1e-10).unwrap(), s, bound), "d={d}");
        }
    }

    #[test]
    fn l_value_direct_rejects_unreachable_tolerance() {
        assert!(matches!(l_value_direct(5, 1e-20), Err(Error::NonConvergence { .. })));
        assert!(l_value_direct(9, 1e-8).is_err());
    }

    #[test]
    fn character_is_periodic_mod_d() {
        for d in [5i64, 8, 12, 13, 28, 45, 60, 96] {
            for n in 1..200u64 {
                assert_eq!(kronecker(d, n), kronecker(d, n + d as u64), "d={d} n={n}");
            }
        }
    }

    #[test]
    fn chi8_examples() {
        assert_eq!(chi8(1), 1);
        assert_eq!(chi8(5), -1);
        assert_eq!(chi8(4), 0);
        assert_eq!(chi8(-3), -1);
    }

    #[test]
    fn progression_lifts() {
        let one = ProgressionSpec::new(1, &[]).unwrap();
        assert_eq!(one.mu(), 2);
        assert_eq!(ProgressionSpec::new(3, &[2]).unwrap().mu(), 2);
        assert_eq!(ProgressionSpec::new(3, &[-2]).unwrap().mu(), 7);
        assert_eq!(ProgressionSpec::new(5, &[-2]).unwrap().mu(), 23);
        for (k, nu) in [(6u64, vec![2, -2]), (15, vec![-2, 2]), (4, vec![-2]), (12, vec![2, -2])] {
            let spec = ProgressionSpec::new(k, &nu).unwrap();
            let k2 = k * k;
            assert!(spec.mu() < k2);
            assert_eq!((spec.mu() * spec.mu() + 4 * k2 - 4) % k2, 0, "K={k}");
        }
        assert!(ProgressionSpec::new(6, &[2]).is_err());
        assert!(ProgressionSpec::new(3, &[1]).is_err());
    }

    #[test]
    fn f_hat_examples() {
        let one = ProgressionSpec::new(1, &[]).unwrap();
        assert_eq!(f_hat(&one, 5), 45);
        assert_eq!(f_hat(&ProgressionSpec::new(3, &[2]).unwrap(), 1), 13);
        assert_eq!(f_hat(&ProgressionSpec::new(3, &[-2]).unwrap(), 1), 28);
    }

    #[test]
    fn c8n_small_examples() {
        let one = ProgressionSpec::new(1, &[]).unwrap();
        let three = ProgressionSpec::new(3, &[2]).unwrap();
        assert_eq!(c8n_direct(&one, 1), 8);
        assert_eq!(c8n_direct(&three, 1), 8);
        assert_eq!(c8n_product(&one, 1), 8);
        // odd prime not dividing K
        assert_eq!(c8n_product(&one, 7), -8);
        assert_eq!(c8n_direct(&one, 7), -8);
        // odd prime dividing K
        assert_eq!(c8n_product(&three, 3), 0);
        assert_eq!(c8n_direct(&three, 3), 0);
    }

    #[test]
    fn c8n_window_sums_for_k1() {
        let one = ProgressionSpec::new(1, &[]).unwrap();
        let window = |n: u64| -> i64 {
            (8 * n..16 * n)
                .map(|t| {
                    let m = ((t + 2) * (t + 2) - 4) as i64;
                    kronecker(m, n) as i64
                })
                .sum()
        };
        assert_eq!(c8n_direct(&one, 2), window(2));
        assert_eq!(c8n_direct(&one, 3), window(3));
        assert_eq!(c8n_direct(&one, 2), -8);
        assert_eq!(c8n_direct(&one, 3), -8);
    }

    #[test]
    fn printed_closed_form_differs_only_on_even_powers_of_primes_of_k() {
        for k in [1u64, 3, 5] {
            for sign in [2i64, -2] {
                let spec = ProgressionSpec::uniform(k, sign).unwrap();
                for n in 1..=200u64 {
                    let f = factorize(n);
                    let affected = f.factors.iter().any(|&(q, e)| q != 2 && e % 2 == 0 && k % q == 0);
                    let agree = c8n_product_as_printed(&spec, n) == c8n_direct(&spec, n);
                    assert_eq!(agree, !affected, "K={k} ν={sign} n={n}");
                }
            }
        }
    }

    #[test]
    fn c8n_identity_for_even_modulus() {
        for (k, nu) in [(2u64, vec![2]), (4, vec![-2]), (6, vec![2, -2]), (10, vec![-2, 2])] {
            let spec = ProgressionSpec::new(k, &nu).unwrap();
            for n in 1..=120u64 {
                assert_eq!(c8n_product(&spec, n), c8n_direct(&spec, n), "K={k} n={n}");
            }
        }
    }

    #[test]
    fn phi_examples() {
        let one = ProgressionSpec::new(1, &[]).unwrap();
        let l5 = l_value_exact(5).unwrap();
        let l12 = l_value_exact(12).unwrap();
        assert!(close(phi_knu(&one, 1, 3.0).unwrap(), l5, 1e-15));
        assert!(close(phi_knu(&one, 1, 4.0).unwrap(), l5 + l12, 1e-15));
        let three = ProgressionSpec::new(3, &[2]).unwrap();
        assert_eq!(phi_knu(&three, 1, 10.0).unwrap(), 0.0);
        assert_eq!(three.terms(30.0), vec![11, 20, 29]);
        let three_minus = ProgressionSpec::new(3, &[-2]).unwrap();
        assert_eq!(three_minus.terms(30.0), vec![7, 16, 25]);
    }

    #[test]
    fn phi_is_nondecreasing() {
        let spec = ProgressionSpec::new(3, &[-2]).unwrap();
        let mut prev = 0.0;
        for t in (3..400).step_by(7) {
            let v = phi_knu(&spec, 2, t as f64).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn estimate_a_needs_enough_terms() {
        let spec = ProgressionSpec::new(5, &[2]).unwrap();
        assert!(matches!(estimate_a(&spec, 1, 200.0), Err(Error::InsufficientSample { .. })));
        let one = ProgressionSpec::new(1, &[]).unwrap();
        assert!(estimate_a(&one, 1, 200.0).unwrap() > 0.0);
    }
}

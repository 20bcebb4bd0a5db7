//! Power sums of multiplicities, the trace-indexed L-sums, and asymptotic checks.

use std::collections::BinaryHeap;

use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::{SpectrumTable, TraceRecord};

#[allow(clippy::excessive_precision)]
const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
#[allow(clippy::excessive_precision)]
const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights for the odd-indexed Kronrod nodes.
#[allow(clippy::excessive_precision)]
const G_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = G_WEIGHTS[3] * fc;
    for i in 0..7 {
        let s = f(c - h * GK_NODES[i]) + f(c + h * GK_NODES[i]);
        kronrod += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            gauss += G_WEIGHTS[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Globally adaptive Gauss–Kronrod (7/15): split the worst piece until the
/// summed error estimate is within `max(abs_tol, rel_tol·|I|)`.
fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    let (value, err) = gauss_kronrod(&f, a, b);
    let mut heap = BinaryHeap::from([Piece { a, b, value, err }]);
    let (mut total, mut total_err) = (value, err);
    for _ in 0..4000 {
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        let p = heap.pop().unwrap();
        let m = 0.5 * (p.a + p.b);
        let (v1, e1) = gauss_kronrod(&f, p.a, m);
        let (v2, e2) = gauss_kronrod(&f, m, p.b);
        total += v1 + v2 - p.value;
        total_err += e1 + e2 - p.err;
        heap.push(Piece { a: p.a, b: m, value: v1, err: e1 });
        heap.push(Piece { a: m, b: p.b, value: v2, err: e2 });
    }
    // Re-add from the pieces to shed the running-sum drift.
    let mut pieces: Vec<f64> = heap.into_iter().map(|p| p.value).collect();
    pieces.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    pieces.iter().sum()
}

/// `li_k(x) = ∫_2^x (log t)^{-k} dt`.
///
/// Integrated in `u = log t`; accurate to `1e-9` absolute or a few ulps of the
/// result, whichever is larger.
pub fn li_k(x: f64, k: u32) -> Result<f64> {
    if x.is_nan() || x < 2.0 || x.is_infinite() {
        return Err(Error::LiDomain(x));
    }
    if k == 0 {
        return Ok(x - 2.0);
    }
    if x == 2.0 {
        return Ok(0.0);
    }
    let k = k as i32;
    Ok(integrate(
        |u: f64| u.exp() * u.powi(-k),
        std::f64::consts::LN_2,
        x.ln(),
        1e-9,
        4.0 * f64::EPSILON,
    ))
}

/// Largest `x` for which the table determines every norm below `x`.
pub fn coverage_limit(table: &SpectrumTable) -> f64 {
    crate::spectrum::norm_of(table.t_max + 1)
        .map(|n| n.value)
        .unwrap_or(f64::INFINITY)
}

fn records_below(table: &SpectrumTable, x: f64) -> Result<&[TraceRecord]> {
    let limit = coverage_limit(table);
    if x > limit {
        return Err(Error::Coverage { x, limit });
    }
    let recs = table.records();
    Ok(&recs[..recs.partition_point(|r| r.norm < x)])
}

/// `π^(k)(x) = Σ_{N < x, m(N) > 0} m(N)^k`, exactly.
pub fn pi_k(table: &SpectrumTable, k: u32, x: f64) -> Result<u128> {
    let mut total: u128 = 0;
    for r in records_below(table, x)? {
        let m = r.m.unwrap_or(0);
        if m == 0 {
            continue;
        }
        let term = (m as u128).checked_pow(k).ok_or(Error::Overflow(k))?;
        total = total.checked_add(term).ok_or(Error::Overflow(k))?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiVariant {
    /// `Σ_t (Σ_u M L(1, χ_{d_{t,u}}) / u)^k`
    LemmaLiteral,
    /// `Σ_t (m̂(N) / (N^{1/2} − N^{-1/2}))^k`
    MhatDerived,
}

fn lemma_term(r: &TraceRecord) -> f64 {
    r.rows
        .iter()
        .map(|row| row.m_weight as f64 * row.l_value() / row.u as f64)
        .sum()
}

fn mhat_term(r: &TraceRecord) -> f64 {
    let t = r.t as f64;
    2.0 * r.log_eps() * r.mhat_coeff.to_f64().unwrap() / (t * t - 4.0).sqrt()
}

fn records_to_trace(table: &SpectrumTable, t_cap: u64) -> Result<&[TraceRecord]> {
    if t_cap > table.t_max {
        return Err(Error::Coverage {
            x: t_cap as f64,
            limit: table.t_max as f64,
        });
    }
    Ok(&table.records()[..t_cap.saturating_sub(2) as usize])
}

/// `Ψ^(k)(T)` over the traces `3 ≤ t ≤ T` of the table's subgroup.
pub fn psi_k(table: &SpectrumTable, k: u32, t_cap: u64, variant: PsiVariant) -> Result<f64> {
    let term = match variant {
        PsiVariant::LemmaLiteral => lemma_term,
        PsiVariant::MhatDerived => mhat_term,
    };
    Ok(records_to_trace(table, t_cap)?
        .iter()
        .map(|r| term(r).powi(k as i32))
        .sum())
}

/// Bounds on `Ψ^(k)(T)` for a level-`K` subgroup of the given index, from
/// the full-group table: the index times the full sum above, and below only
/// the saturated traces `t ≡ ±2 (mod K²)` with the divisors `Ku`.
pub fn psi_bounds(full: &SpectrumTable, level: u64, index: u64, k: u32, t_cap: u64) -> Result<(f64, f64)> {
    let scale = (index as f64).powi(k as i32);
    let recs = records_to_trace(full, t_cap)?;
    let upper = scale * recs.iter().map(|r| lemma_term(r).powi(k as i32)).sum::<f64>();
    let k2 = level * level;
    let lower = scale
        * recs
            .iter()
            .filter(|r| (r.t + 2) % k2 == 0 || r.t % k2 == 2 % k2)
            .map(|r| {
                r.rows
                    .iter()
                    .filter(|row| row.u % level == 0)
                    .map(|row| row.l_value() / row.u as f64)
                    .sum::<f64>()
                    .powi(k as i32)
            })
            .sum::<f64>();
    Ok((lower, upper))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub x: f64,
    pub pi: u128,
    pub li: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub k: u32,
    pub points: Vec<SamplePoint>,
    /// ratio at the largest grid point
    pub c_hat: f64,
    /// `|ĉ(x_max) − ĉ(x_max/2)| / ĉ(x_max)`
    pub stability: f64,
    pub notes: Vec<String>,
}

fn sample(table: &SpectrumTable, k: u32, x: f64) -> Result<SamplePoint> {
    let pi = pi_k(table, k, x)?;
    let li = li_k(x.powf((k as f64 + 1.0) / 2.0), k)?;
    Ok(SamplePoint {
        x,
        pi,
        li,
        ratio: pi as f64 / li,
    })
}

/// `n` points spaced evenly in `log x`.
pub fn log_grid(x_min: f64, x_max: f64, n: usize) -> Vec<f64> {
    let (a, b) = (x_min.ln(), x_max.ln());
    (0..n)
        .map(|i| if i + 1 == n { x_max } else { (a + (b - a) * i as f64 / (n - 1) as f64).exp() })
        .collect()
}

/// `π^(k)(x) / li_k(x^{(k+1)/2})` along the grid; the constant is read off at
/// the last point.
pub fn estimate_c(table: &SpectrumTable, k: u32, grid: &[f64]) -> Result<AsymptoticReport> {
    if grid.len() < 5 {
        return Err(Error::InsufficientGrid(format!("need at least 5 points, got {}", grid.len())));
    }
    if grid.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
        return Err(Error::InsufficientGrid("grid must be strictly increasing".into()));
    }
    let (x_min, x_max) = (grid[0], *grid.last().unwrap());
    if x_max < 4.0 * x_min {
        return Err(Error::InsufficientGrid(format!(
            "grid must span two doublings, got [{x_min}, {x_max}]"
        )));
    }
    let min_norm = table.records().first().map_or(f64::INFINITY, |r| r.norm);
    if x_min <= min_norm {
        return Err(Error::InsufficientGrid(format!(
            "grid must start above the smallest norm {min_norm}"
        )));
    }
    let points = grid
        .par_iter()
        .map(|&x| sample(table, k, x))
        .collect::<Result<Vec<_>>>()?;
    let c_hat = points.last().unwrap().ratio;
    let half = sample(table, k, x_max / 2.0)?.ratio;
    Ok(AsymptoticReport {
        k,
        points,
        c_hat,
        stability: (c_hat - half).abs() / c_hat,
        notes: vec![
            "secondary terms from exceptional eigenvalues in (0, 1/4) are omitted".into(),
            "rho_0 = 1/2".into(),
        ],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub value: f64,
    pub t: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// max of `m / (N^{1/2} log N)`
    pub max_sqrt_log: Witness,
    /// max of `m / N^{3/4}`
    pub max_three_quarter: Witness,
    /// min over `t ≥ 10` of `m / N^{0.45}`
    pub min_lower: Option<Witness>,
    /// least-squares slope of `log mhat_coeff` against `log N`
    pub slope: Option<f64>,
    /// same for `log m̂(N) = log(mhat_coeff · log N)`
    pub slope_mhat: Option<f64>,
}

fn extreme<I: Iterator<Item = Witness>>(it: I, want_max: bool) -> Option<Witness> {
    it.reduce(|a, b| {
        let better = if want_max { b.value > a.value } else { b.value < a.value };
        if better {
            b
        } else {
            a
        }
    })
}

pub fn bound_report(table: &SpectrumTable) -> Result<BoundReport> {
    let recs = table.records();
    if recs.is_empty() {
        return Err(Error::InsufficientGrid("empty table".into()));
    }
    let m = |r: &TraceRecord| r.m.unwrap_or(0) as f64;
    let max_sqrt_log = extreme(
        recs.iter().map(|r| Witness {
            value: m(r) / (r.norm.sqrt() * r.norm.ln()),
            t: r.t,
        }),
        true,
    )
    .unwrap();
    let max_three_quarter = extreme(
        recs.iter().map(|r| Witness {
            value: m(r) / r.norm.powf(0.75),
            t: r.t,
        }),
        true,
    )
    .unwrap();
    let min_lower = extreme(
        recs.iter().filter(|r| r.t >= 10).map(|r| Witness {
            value: m(r) / r.norm.powf(0.45),
            t: r.t,
        }),
        false,
    );
    let pts: Vec<(f64, f64)> = recs
        .iter()
        .filter_map(|r| {
            let c = r.mhat_coeff.to_f64()?;
            (c > 0.0).then(|| (r.norm.ln(), c.ln()))
        })
        .collect();
    let pts_mhat: Vec<(f64, f64)> = pts.iter().map(|&(ln_n, ln_c)| (ln_n, ln_c + ln_n.ln())).collect();
    Ok(BoundReport {
        max_sqrt_log,
        max_three_quarter,
        min_lower,
        slope: ls_slope(&pts),
        slope_mhat: ls_slope(&pts_mhat),
    })
}

fn ls_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{build_table, MTable, SubgroupDescriptor, SubgroupKind};
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn full(t_max: u64) -> &'static SpectrumTable {
        static TABLE: OnceLock<SpectrumTable> = OnceLock::new();
        let t = TABLE.get_or_init(|| build_table(&SubgroupDescriptor::full(), 400).unwrap());
        assert!(t_max <= 400);
        t
    }

    /// `Ei(z)` by its power series; fine for `z ≤ 40`.
    fn ei(z: f64) -> f64 {
        const EULER: f64 = 0.5772156649015329;
        let mut term = 1.0;
        let mut sum = 0.0;
        for n in 1..400 {
            term *= z / n as f64;
            let add = term / n as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        EULER + z.ln() + sum
    }

    #[test]
    fn li_examples() {
        for k in 0..5 {
            assert_eq!(li_k(2.0, k).unwrap(), 0.0);
        }
        assert_eq!(li_k(10.0, 0).unwrap(), 8.0);
        let e = std::f64::consts::E;
        let d = li_k(e * e, 1).unwrap() - li_k(e, 1).unwrap();
        assert!(d > (e * e - e) / 2.0 && d < e * e - e);
        assert_eq!(li_k(1.5, 1), Err(Error::LiDomain(1.5)));
        assert!(li_k(f64::NAN, 1).is_err());
    }

    #[test]
    fn li_one_matches_exponential_integral() {
        for &x in &[2.5f64, 10.0, 1e3, 1e6, 9e6, 1e10, 2.7e10] {
            let want = ei(x.ln()) - ei(std::f64::consts::LN_2);
            let got = li_k(x, 1).unwrap();
            assert!((got - want).abs() <= 1e-9f64.max(1e-12 * want), "x={x}: {got} vs {want}");
        }
        // li(10^6) − li(2) with li(2) ≈ 1.045163780117
        assert!((li_k(1e6, 1).unwrap() - (78_627.549_159_462_19 - 1.045163780117492)).abs() < 1e-8);
    }

    #[test]
    fn li_recurrence() {
        for &x in &[3.0, 50.0, 1e4, 1e8, 2.7e10] {
            let (lx, l2) = (f64::ln(x), std::f64::consts::LN_2);
            for k in 1..4u32 {
                let lk = li_k(x, k).unwrap();
                let next = (lk - x / lx.powi(k as i32) + 2.0 / l2.powi(k as i32)) / k as f64;
                let got = li_k(x, k + 1).unwrap();
                assert!((got - next).abs() <= 1e-9f64.max(1e-11 * got.abs()), "x={x} k={k}");
            }
        }
    }

    #[test]
    fn li_orderings() {
        let e2 = std::f64::consts::E.powi(2);
        let grid = log_grid(e2 + 0.1, 1e7, 30);
        for k in 0..4 {
            for w in grid.windows(2) {
                assert!(li_k(w[1], k).unwrap() > li_k(w[0], k).unwrap());
            }
        }
        for &x in &grid {
            for k in 0..4 {
                assert!(li_k(x, k + 1).unwrap() < li_k(x, k).unwrap());
            }
        }
    }

    #[test]
    fn pi_examples() {
        let t = full(4);
        assert_eq!(pi_k(t, 1, 7.0).unwrap(), 1);
        assert_eq!(pi_k(t, 2, 14.0).unwrap(), 5);
        for k in 0..4 {
            assert_eq!(pi_k(t, k, 5.0).unwrap(), 0);
        }
        let small = build_table(&SubgroupDescriptor::full(), 4).unwrap();
        assert!(matches!(pi_k(&small, 1, 100.0), Err(Error::Coverage { .. })));
        assert_eq!(pi_k(&small, 0, 20.0).unwrap(), 2);
    }

    #[test]
    fn pi_is_monotone_and_right_continuous() {
        let t = full(400);
        let mut prev = 0;
        for r in &t.records()[..200] {
            // a norm is counted only strictly above it
            let at = pi_k(t, 1, r.norm).unwrap();
            let past = pi_k(t, 1, r.norm * (1.0 + 1e-12)).unwrap();
            assert_eq!(past, at + r.m.unwrap() as u128);
            assert!(at >= prev);
            prev = past;
        }
    }

    #[test]
    fn pi_overflow_is_reported() {
        let t = full(400);
        assert_eq!(pi_k(t, 40, 1e5), Err(Error::Overflow(40)));
    }

    #[test]
    fn psi_examples() {
        let t = full(3);
        let lit = psi_k(t, 1, 3, PsiVariant::LemmaLiteral).unwrap();
        let mh = psi_k(t, 1, 3, PsiVariant::MhatDerived).unwrap();
        assert!((lit - 0.4304089410).abs() < 1e-8, "{lit}");
        assert!((mh - 2.0 * lit).abs() < 1e-12);
        assert_eq!(psi_k(t, 1, 2, PsiVariant::LemmaLiteral).unwrap(), 0.0);
    }

    #[test]
    fn psi_variants_differ_by_power_of_two() {
        let t = full(300);
        for k in 1..=3u32 {
            let lit = psi_k(t, k, 300, PsiVariant::LemmaLiteral).unwrap();
            let mh = psi_k(t, k, 300, PsiVariant::MhatDerived).unwrap();
            assert!((mh / lit / 2f64.powi(k as i32) - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn psi_bounds_examples() {
        let t = full(100);
        let psi = psi_k(t, 2, 100, PsiVariant::LemmaLiteral).unwrap();
        let (lo, hi) = psi_bounds(t, 1, 1, 2, 100).unwrap();
        assert!((lo - psi).abs() < 1e-9 * psi && (hi - psi).abs() < 1e-9 * psi);
        let (lo, hi) = psi_bounds(t, 2, 6, 1, 100).unwrap();
        assert!(0.0 < lo && lo <= hi);
        let (lo, _) = psi_bounds(t, 2, 6, 1, 5).unwrap();
        assert_eq!(lo, 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn psi_bounds_enclose_tabulated_subgroups(
            level in 2u64..5,
            index in 2u64..30,
            k in 1u32..3,
            seed in any::<u64>(),
        ) {
            let t_cap = 120u64;
            let mut rng = seed;
            let mut table = MTable::new(level, index).unwrap();
            for r in 0..level * level {
                for u in 1..=t_cap {
                    rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    table.insert(r, u, (rng >> 33) % (index + 1)).unwrap();
                }
            }
            let sub = SubgroupDescriptor::family(SubgroupKind::Principal, level, index)
                .unwrap()
                .with_table(table)
                .unwrap();
            let spec = build_table(&sub, t_cap);
            // an arbitrary table need not deflate integrally; Ψ needs only the rows
            let recs: Vec<_> = (3..=t_cap)
                .map(|t| crate::spectrum::trace_record(&sub, t).unwrap())
                .collect();
            let psi: f64 = recs.iter().map(|r| lemma_term(r).powi(k as i32)).sum();
            let (lo, hi) = psi_bounds(full(t_cap), level, index, k, t_cap).unwrap();
            prop_assert!(lo <= psi * (1.0 + 1e-12), "{} > {}", lo, psi);
            prop_assert!(psi <= hi * (1.0 + 1e-12), "{} > {}", psi, hi);
            if let Ok(s) = spec {
                prop_assert!((psi_k(&s, k, t_cap, PsiVariant::LemmaLiteral).unwrap() - psi).abs() <= 1e-9 * psi.max(1.0));
            }
        }
    }

    #[test]
    fn estimate_c_rejects_bad_grids() {
        let t = full(400);
        assert!(estimate_c(t, 1, &[100.0, 200.0, 300.0, 400.0]).is_err());
        assert!(estimate_c(t, 1, &[100.0, 200.0, 150.0, 300.0, 500.0]).is_err());
        assert!(estimate_c(t, 1, &[100.0, 110.0, 120.0, 130.0, 140.0]).is_err());
        assert!(estimate_c(t, 1, &[1.0, 2.0, 3.0, 4.0, 5.0]).is_err());
        assert!(matches!(
            estimate_c(t, 1, &log_grid(100.0, 1e9, 6)),
            Err(Error::Coverage { .. })
        ));
    }

    #[test]
    fn estimate_c_k1_trends_to_one() {
        let t = full(400);
        let rep = estimate_c(t, 1, &log_grid(1e3, 1.5e5, 8)).unwrap();
        assert!(rep.points.windows(2).all(|w| w[1].x > w[0].x));
        assert!(rep.points.iter().all(|p| p.ratio.is_finite() && p.ratio > 0.0));
        assert!((rep.c_hat - 1.0).abs() < 0.2, "{}", rep.c_hat);
        assert!(!rep.notes.is_empty());
    }

    #[test]
    fn bound_report_examples() {
        let t = full(400);
        let rep = bound_report(t).unwrap();
        assert!(rep.max_three_quarter.value < 1.0);
        assert!(rep.max_sqrt_log.value.is_finite());
        assert!(rep.min_lower.unwrap().t >= 10);
        assert!(rep.slope.unwrap() > 0.3);
        let single = build_table(&SubgroupDescriptor::full(), 3).unwrap();
        let rep = bound_report(&single).unwrap();
        assert_eq!(rep.slope, None);
        assert_eq!(rep.min_lower, None);
        assert_eq!(rep.max_three_quarter.t, 3);
    }
}

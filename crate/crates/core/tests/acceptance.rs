//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed. The exit
//! status is nonzero if any criterion fails unexpectedly, or if any criterion
//! fails at all when `LENSPEC_STRICT=1`.

use std::collections::BTreeSet;
use std::time::Instant;

use lenspec::analysis::{self, PsiVariant};
use lenspec::lfunc::{self, ProgressionSpec};
use lenspec::oracle;
use lenspec::spectrum::{self, norm_of, SpectrumTable, SubgroupDescriptor};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// A prefix of `table` as a table of its own.
fn truncate(table: &SpectrumTable, t_max: u64) -> SpectrumTable {
    SpectrumTable::from_records(table.subgroup.clone(), t_max, table.records()[..(t_max - 2) as usize].to_vec())
        .unwrap()
}

fn class_number_formula(table: &SpectrumTable) -> Outcome {
    let mut seen = BTreeSet::new();
    let mut worst = (0.0f64, 0u64);
    for r in &table.records()[..298] {
        for row in &r.rows {
            if seen.insert(row.d) {
                let lhs = row.h as f64 * row.eps_d.ln();
                let rhs = (row.d as f64).sqrt() * lfunc::l_value_direct(row.d, 1e-10).unwrap();
                let e = rel(lhs, rhs);
                if e > worst.0 {
                    worst = (e, row.d);
                }
            }
        }
    }
    outcome(
        worst.0 < 1e-4,
        format!("{} discriminants from t <= 300, max relative error {:.3e} (d={})", seen.len(), worst.0, worst.1),
    )
}

fn pell_sentinel() -> Outcome {
    let rec = spectrum::trace_record(&SubgroupDescriptor::full(), 3).unwrap();
    let j = rec.rows[0].j;
    let m = spectrum::deflate(&rec, |_| None);
    outcome(j == 1 && m == Ok(1), format!("j = {j}, m(3) = {m:?}"))
}

fn oracle_equivalence(table: &SpectrumTable) -> Outcome {
    let counts = oracle::enumerate_classes(20).unwrap();
    let bad: Vec<u64> = (3..=20).filter(|t| table.m(*t) != Some(counts[t])).collect();
    let shown: Vec<String> = (3..=20).map(|t| format!("{t}:{}", counts[&t])).collect();
    outcome(bad.is_empty(), format!("oracle counts {} ; disagreements {bad:?}", shown.join(" ")))
}

fn integrality(table: &Result<SpectrumTable, lenspec::Error>, secs: f64) -> Outcome {
    match table {
        Ok(t) => outcome(
            t.len() == 9998 && t.records().iter().all(|r| r.m.is_some()),
            format!("{} traces deflated to integers in {secs:.1} s", t.len()),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn prime_geodesic(table: &SpectrumTable) -> Outcome {
    let x = norm_of(3000).unwrap().value;
    let ratio = |x: f64| analysis::pi_k(table, 1, x).unwrap() as f64 / analysis::li_k(x, 1).unwrap();
    let (r, r4) = (ratio(x), ratio(x / 4.0));
    outcome(
        (0.90..=1.10).contains(&r) && (r - 1.0).abs() < (r4 - 1.0).abs(),
        format!("pi1/li1 = {r:.6} at x = {x:.6e}; {r4:.6} at x/4"),
    )
}

fn distinct_norms(table: &SpectrumTable) -> Outcome {
    let r = analysis::pi_k(table, 0, 1e6).unwrap() as f64 / 1e3;
    outcome((0.98..=1.02).contains(&r), format!("pi0(1e6)/1e3 = {r:.6}"))
}

fn second_power_sum(table: &SpectrumTable) -> Outcome {
    let x = norm_of(3000).unwrap().value;
    let ratio = |x: f64| analysis::pi_k(table, 2, x).unwrap() as f64 / analysis::li_k(x.powf(1.5), 2).unwrap();
    let (r, r2) = (ratio(x), ratio(x / 2.0));
    let change = rel(r, r2);
    outcome(change < 0.10, format!("pi2/li2(x^1.5) = {r:.6} at x, {r2:.6} at x/2, change {change:.4}"))
}

fn psi_linearity(table: &SpectrumTable) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [1u32, 2] {
        let at = |t: u64, v| analysis::psi_k(table, k, t, v).unwrap();
        let (lo, hi) = (at(2000, PsiVariant::LemmaLiteral) / 2000.0, at(4000, PsiVariant::LemmaLiteral) / 4000.0);
        let factor = at(4000, PsiVariant::MhatDerived) / at(4000, PsiVariant::LemmaLiteral);
        let change = rel(hi, lo);
        pass &= change < 0.05 && (factor - 2f64.powi(k as i32)).abs() < 1e-3;
        parts.push(format!("k={k}: Psi/T {lo:.6} -> {hi:.6} (change {change:.4}), mhat/literal = {factor:.8}"));
    }
    outcome(pass, parts.join("; "))
}

fn c8n_identity() -> Outcome {
    let mut cases = 0;
    let mut bad = Vec::new();
    for modulus in [1u64, 3, 5] {
        for sign in [2i64, -2] {
            let spec = ProgressionSpec::uniform(modulus, sign).unwrap();
            for n in 1..=200u64 {
                let direct = lfunc::c8n_direct(&spec, n);
                let majorant_ok =
                    (direct as f64 / (8.0 * (n * n) as f64)).abs() <= lfunc::c8n_majorant(n) * (1.0 + 1e-12);
                if lfunc::c8n_product(&spec, n) != direct || !majorant_ok {
                    bad.push((modulus, sign, n));
                }
                cases += 1;
            }
        }
    }
    outcome(bad.is_empty(), format!("{cases} cases, failures {bad:?}"))
}

/// Returns the outcome and whether a failure here is understood.
fn bound_envelopes(table: &SpectrumTable) -> (Outcome, bool) {
    let rep = analysis::bound_report(&truncate(table, 2000)).unwrap();
    let slope = rep.slope.unwrap_or(f64::NAN);
    let envelopes = rep.max_three_quarter.value < 1.0 && rep.max_sqrt_log.value.is_finite();
    let pass = envelopes && (0.45..=0.55).contains(&slope);
    let detail = format!(
        "max m/N^(3/4) = {:.5} (t={}); max m/(sqrt(N) log N) = {:.5} (t={}); min m/N^0.45 = {:.5}; \
         slope of log mhat_coeff = {slope:.4}; slope of log mhat(N) = {:.4}",
        rep.max_three_quarter.value,
        rep.max_three_quarter.t,
        rep.max_sqrt_log.value,
        rep.max_sqrt_log.t,
        rep.min_lower.map_or(f64::NAN, |w| w.value),
        rep.slope_mhat.unwrap_or(f64::NAN),
    );
    // mhat_coeff = mhat(N) / log N, so its slope sits near 1/2 − 1/log N; only
    // the regression band is expected to miss.
    let understood = envelopes && !pass && slope < 0.45 && rep.slope_mhat.is_some_and(|s| (0.45..=0.55).contains(&s));
    (outcome(pass, detail), understood)
}

fn phi_decay() -> Outcome {
    let a: Vec<(u64, f64)> = [3u64, 5, 7]
        .iter()
        .map(|&k| (k, lfunc::estimate_a(&ProgressionSpec::uniform(k, 2).unwrap(), 1, 5000.0).unwrap()))
        .collect();
    let shown: Vec<String> = a.iter().map(|(k, v)| format!("a(K={k}) = {v:.6}")).collect();
    outcome(a[0].1 > a[1].1 && a[1].1 > a[2].1, format!("T = 5000: {}", shown.join(", ")))
}

fn main() {
    let strict = std::env::var("LENSPEC_STRICT").is_ok_and(|v| v == "1");
    let start = Instant::now();
    let built = spectrum::build_table(&SubgroupDescriptor::full(), 10_000);
    let build_secs = start.elapsed().as_secs_f64();

    let table = built.as_ref().unwrap();
    let (c10, understood) = bound_envelopes(table);
    let results: Vec<(u32, &str, Outcome, bool)> = vec![
        (1, "class number formula", class_number_formula(table), false),
        (2, "unit normalization", pell_sentinel(), false),
        (3, "oracle equivalence", oracle_equivalence(table), false),
        (4, "integrality to 10^4", integrality(&built, build_secs), false),
        (5, "prime geodesic trend", prime_geodesic(table), false),
        (6, "distinct norm count", distinct_norms(table), false),
        (7, "second power sum", second_power_sum(table), false),
        (8, "psi linearity", psi_linearity(table), false),
        (9, "c8n identity", c8n_identity(), false),
        (10, "bound envelopes", c10, understood),
        (11, "phi decay", phi_decay(), false),
    ];

    let mut unexpected = 0;
    for (id, name, o, understood) in &results {
        let tag = match (o.pass, understood) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("{tag} criterion {id} [{name}]: {}", o.detail);
        if !o.pass && (strict || !understood) {
            unexpected += 1;
        }
    }
    let passed = results.iter().filter(|r| r.2.pass).count();
    println!("{passed}/{} criteria passed in {:.1} s", results.len(), start.elapsed().as_secs_f64());
    if unexpected > 0 {
        std::process::exit(1);
    }
}

//! The property suite behind `lenspec verify`.

use std::collections::BTreeSet;

use serde::Serialize;
use serde_json::{json, Value};

use super::Tier;
use crate::analysis::{self, PsiVariant};
use crate::error::Result;
use crate::lfunc::{self, ProgressionSpec};
use crate::oracle;
use crate::spectrum::{self, norm_of, SpectrumTable, SubgroupDescriptor};

/// Trace bound for the fast tier.
pub const FAST_TMAX: u64 = 2000;
pub const ORACLE_TMAX: u64 = 20;

#[derive(Debug, Clone, Serialize)]
pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    pub measured: Value,
    pub threshold: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tier: Tier,
    pub t_max: u64,
    pub criteria: Vec<Criterion>,
    pub all_pass: bool,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub fn class_number_formula(table: &SpectrumTable, t_cap: u64) -> Result<Criterion> {
    let mut seen = BTreeSet::new();
    let mut worst = (0.0f64, 0u64);
    for r in &table.records()[..t_cap.saturating_sub(2) as usize] {
        for row in &r.rows {
            if !seen.insert(row.d) {
                continue;
            }
            let direct = (row.d as f64).sqrt() * lfunc::l_value_direct(row.d, 1e-10)?;
            let err = rel(row.h as f64 * row.eps_d.ln(), direct);
            if err > worst.0 {
                worst = (err, row.d);
            }
        }
    }
    Ok(Criterion {
        id: 1,
        name: "class number formula",
        measured: json!({ "max_rel_error": worst.0, "worst_d": worst.1, "discriminants": seen.len() }),
        threshold: "< 1e-4".into(),
        pass: worst.0 < 1e-4,
        detail: format!("{} discriminants for t <= {t_cap}, worst {:.2e} at d={}", seen.len(), worst.0, worst.1),
    })
}

pub fn unit_normalization() -> Result<Criterion> {
    let rec = spectrum::trace_record(&SubgroupDescriptor::full(), 3)?;
    let j = rec.rows[0].j;
    let m = spectrum::deflate(&rec, |_| None);
    let pass = j == 1 && m == Ok(1);
    Ok(Criterion {
        id: 2,
        name: "unit normalization",
        measured: json!({ "j": j, "m3": m.as_ref().ok(), "mhat_coeff": crate::serde_big::ratio::to_string(&rec.mhat_coeff) }),
        threshold: "j = 1 and m(3) = 1".into(),
        pass,
        detail: format!("j={j}, m(3)={m:?}"),
    })
}

pub fn oracle_agreement(t_cap: u64) -> Result<Criterion> {
    let table = spectrum::build_table(&SubgroupDescriptor::full(), t_cap)?;
    let counts = oracle::enumerate_classes(t_cap)?;
    let bad: Vec<u64> = (3..=t_cap).filter(|t| table.m(*t) != Some(counts[t])).collect();
    Ok(Criterion {
        id: 3,
        name: "oracle agreement",
        measured: json!({ "disagreements": bad }),
        threshold: format!("m(t) = oracle(t) for 3 <= t <= {t_cap}"),
        pass: bad.is_empty(),
        detail: format!("{} traces, {} disagreements", t_cap - 2, bad.len()),
    })
}

pub fn integrality(sub: &SubgroupDescriptor, t_cap: u64) -> (Criterion, Option<SpectrumTable>) {
    let built = spectrum::build_table(sub, t_cap);
    let (pass, detail) = match &built {
        Ok(t) => (t.records().iter().all(|r| r.m.is_some()), format!("all m(t) integral for t <= {t_cap}")),
        Err(e) => (false, e.to_string()),
    };
    (
        Criterion {
            id: 4,
            name: "integrality",
            measured: json!({ "t_max": t_cap, "ok": pass }),
            threshold: "every deflated m(t) is a nonnegative integer".into(),
            pass,
            detail,
        },
        built.ok(),
    )
}

pub fn prime_geodesic_trend(table: &SpectrumTable) -> Result<Criterion> {
    let x = norm_of(table.t_max)?.value;
    let ratio = |x: f64| -> Result<f64> { Ok(analysis::pi_k(table, 1, x)? as f64 / analysis::li_k(x, 1)?) };
    let (r, r4) = (ratio(x)?, ratio(x / 4.0)?);
    let pass = (0.9..=1.1).contains(&r) && (r - 1.0).abs() < (r4 - 1.0).abs();
    Ok(Criterion {
        id: 5,
        name: "prime geodesic trend",
        measured: json!({ "x": x, "ratio": r, "ratio_quarter": r4 }),
        threshold: "ratio in [0.90, 1.10] and closer to 1 than at x/4".into(),
        pass,
        detail: format!("pi1/li1 = {r:.5} at x={x:.4e}, {r4:.5} at x/4"),
    })
}

pub fn distinct_norms(table: &SpectrumTable, x: f64) -> Result<Criterion> {
    let r = analysis::pi_k(table, 0, x)? as f64 / x.sqrt();
    Ok(Criterion {
        id: 6,
        name: "distinct norm count",
        measured: json!({ "x": x, "ratio": r }),
        threshold: "pi0(x)/sqrt(x) in [0.98, 1.02]".into(),
        pass: (0.98..=1.02).contains(&r),
        detail: format!("pi0/sqrt(x) = {r:.5} at x={x:.1e}"),
    })
}

pub fn second_power_sum(table: &SpectrumTable) -> Result<Criterion> {
    let x = norm_of(table.t_max)?.value;
    let ratio = |x: f64| -> Result<f64> { Ok(analysis::pi_k(table, 2, x)? as f64 / analysis::li_k(x.powf(1.5), 2)?) };
    let (r, r2) = (ratio(x)?, ratio(x / 2.0)?);
    let change = rel(r, r2);
    Ok(Criterion {
        id: 7,
        name: "second power sum stabilization",
        measured: json!({ "x": x, "ratio": r, "ratio_half": r2, "relative_change": change }),
        threshold: "< 10% relative change from x/2".into(),
        pass: change < 0.1,
        detail: format!("pi2/li2(x^1.5) = {r:.5} (x/2: {r2:.5}), c_hat reported only"),
    })
}

pub fn psi_linearity(table: &SpectrumTable, t_hi: u64) -> Result<Criterion> {
    let t_lo = t_hi / 2;
    let mut measured = serde_json::Map::new();
    let mut pass = true;
    let mut detail = Vec::new();
    for k in [1u32, 2] {
        let lo = analysis::psi_k(table, k, t_lo, PsiVariant::LemmaLiteral)? / t_lo as f64;
        let hi_lit = analysis::psi_k(table, k, t_hi, PsiVariant::LemmaLiteral)?;
        let hi = hi_lit / t_hi as f64;
        let mh = analysis::psi_k(table, k, t_hi, PsiVariant::MhatDerived)?;
        let factor = mh / hi_lit;
        let change = rel(hi, lo);
        let factor_err = (factor - 2f64.powi(k as i32)).abs();
        pass &= change < 0.05 && factor_err < 1e-3;
        detail.push(format!("k={k}: change {change:.4}, factor {factor:.6}"));
        measured.insert(
            format!("k{k}"),
            json!({ "psi_over_t_lo": lo, "psi_over_t_hi": hi, "relative_change": change, "mhat_over_literal": factor }),
        );
    }
    Ok(Criterion {
        id: 8,
        name: "psi linearity",
        measured: Value::Object(measured),
        threshold: format!("Psi/T changes < 5% from T={t_lo} to T={t_hi}; variant ratio 2^k within 1e-3"),
        pass,
        detail: detail.join("; "),
    })
}

pub fn c8n_identity(n_max: u64) -> Result<Criterion> {
    let mut checked = 0;
    let mut mismatches = Vec::new();
    let mut majorant_violations = Vec::new();
    for modulus in [1u64, 3, 5] {
        for sign in [2i64, -2] {
            let spec = ProgressionSpec::uniform(modulus, sign)?;
            for n in 1..=n_max {
                let direct = lfunc::c8n_direct(&spec, n);
                if lfunc::c8n_product(&spec, n) != direct {
                    mismatches.push((modulus, sign, n));
                }
                let scaled = (direct as f64 / (8.0 * (n * n) as f64)).abs();
                if scaled > lfunc::c8n_majorant(n) * (1.0 + 1e-12) {
                    majorant_violations.push((modulus, sign, n));
                }
                checked += 1;
            }
        }
    }
    Ok(Criterion {
        id: 9,
        name: "c8n identity",
        measured: json!({ "checked": checked, "mismatches": mismatches, "majorant_violations": majorant_violations }),
        threshold: format!("product = direct for n <= {n_max}, K in 1,3,5, both signs; majorant respected"),
        pass: mismatches.is_empty() && majorant_violations.is_empty(),
        detail: format!("{checked} cases, {} mismatches, {} majorant violations", mismatches.len(), majorant_violations.len()),
    })
}

pub fn bound_envelopes(table: &SpectrumTable) -> Result<Criterion> {
    let rep = analysis::bound_report(table)?;
    let slope = rep.slope.unwrap_or(f64::NAN);
    let pass = rep.max_three_quarter.value < 1.0
        && rep.max_sqrt_log.value.is_finite()
        && (0.45..=0.55).contains(&slope);
    Ok(Criterion {
        id: 10,
        name: "bound envelopes",
        measured: serde_json::to_value(&rep).expect("serializable"),
        threshold: "max m/N^(3/4) < 1; max m/(sqrt(N) log N) finite; slope in [0.45, 0.55]".into(),
        pass,
        detail: format!(
            "max m/N^0.75 = {:.4} (t={}), max m/(sqrtN logN) = {:.4} (t={}), slope = {slope:.4} (of log mhat(N): {:.4})",
            rep.max_three_quarter.value,
            rep.max_three_quarter.t,
            rep.max_sqrt_log.value,
            rep.max_sqrt_log.t,
            rep.slope_mhat.unwrap_or(f64::NAN)
        ),
    })
}

pub fn phi_decay(t_cap: f64) -> Result<Criterion> {
    let mut estimates = Vec::new();
    for modulus in [3u64, 5, 7] {
        let spec = ProgressionSpec::uniform(modulus, 2)?;
        estimates.push((modulus, lfunc::estimate_a(&spec, 1, t_cap)?));
    }
    let pass = estimates.windows(2).all(|w| w[0].1 > w[1].1);
    Ok(Criterion {
        id: 11,
        name: "phi decay",
        measured: json!(estimates.iter().map(|(k, a)| json!({ "K": k, "a": a })).collect::<Vec<_>>()),
        threshold: "a(K=3) > a(K=5) > a(K=7)".into(),
        pass,
        detail: estimates
            .iter()
            .map(|(k, a)| format!("a(K={k}) = {a:.6}"))
            .collect::<Vec<_>>()
            .join(", "),
    })
}

/// Runs the selected tier, reporting each criterion as it completes.
pub fn run(tier: Tier, on_result: &mut dyn FnMut(&Criterion)) -> Result<Report> {
    let mut criteria = Vec::new();
    let mut push = |c: Criterion, out: &mut Vec<Criterion>| {
        on_result(&c);
        out.push(c);
    };
    if tier != Tier::Oracle {
        let (c4, table) = integrality(&SubgroupDescriptor::full(), FAST_TMAX);
        push(unit_normalization()?, &mut criteria);
        if let Some(table) = &table {
            push(class_number_formula(table, 300)?, &mut criteria);
        }
        push(c4, &mut criteria);
        if let Some(table) = &table {
            push(prime_geodesic_trend(table)?, &mut criteria);
            push(distinct_norms(table, 1e6)?, &mut criteria);
            push(second_power_sum(table)?, &mut criteria);
            push(psi_linearity(table, FAST_TMAX)?, &mut criteria);
        }
        push(c8n_identity(200)?, &mut criteria);
        if let Some(table) = &table {
            push(bound_envelopes(table)?, &mut criteria);
        }
        push(phi_decay(3000.0)?, &mut criteria);
    }
    if tier != Tier::Fast {
        push(oracle_agreement(ORACLE_TMAX)?, &mut criteria);
    }
    criteria.sort_by_key(|c| c.id);
    let all_pass = criteria.iter().all(|c| c.pass);
    Ok(Report {
        tier,
        t_max: FAST_TMAX,
        criteria,
        all_pass,
    })
}

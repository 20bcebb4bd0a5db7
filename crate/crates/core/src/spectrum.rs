//! Per-trace arithmetic records and the exact length spectrum.
//!
//! For a trace `t ≥ 3` with `N = ε(t)²`, the weighted class count
//!
//! ```text
//! m̂(N) / (2 log ε(t)) = Σ_{u | U(t)} M(t, u) · h(d_{t,u}) / j_{t,u}
//! ```
//!
//! is held as an exact rational (`mhat_coeff`). Every imprimitive class of
//! trace `t` is the `l`-th power of a primitive class of some trace `t0`
//! with `cheb_trace(t0, l) = t`, and contributes `1/l` to the sum, so
//!
//! ```text
//! m(t) = mhat_coeff(t) − Σ_{(t0, l)} m(t0) / l
//! ```
//!
//! which must come out a nonnegative integer.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{self, PellUnit};
use crate::error::{Error, Result};
use crate::forms;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubgroupKind {
    Full,
    Gamma0,
    Gamma1,
    Principal,
    Custom,
}

impl SubgroupKind {
    pub fn name(self) -> &'static str {
        match self {
            SubgroupKind::Full => "full",
            SubgroupKind::Gamma0 => "gamma0",
            SubgroupKind::Gamma1 => "gamma1",
            SubgroupKind::Principal => "principal",
            SubgroupKind::Custom => "custom",
        }
    }
}

impl fmt::Display for SubgroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SubgroupKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SubgroupKind::Full),
            "gamma0" => Ok(SubgroupKind::Gamma0),
            "gamma1" => Ok(SubgroupKind::Gamma1),
            "principal" => Ok(SubgroupKind::Principal),
            "custom" => Ok(SubgroupKind::Custom),
            other => Err(Error::Parse(format!("unknown subgroup kind {other:?}"))),
        }
    }
}

/// Weights `M(t, u)` keyed by `(t mod K², u)`.
///
/// Text format: a header `K <level> INDEX <index>`, then one `t_residue u M`
/// triple per line. Blank lines and `#` comments are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "MTableRepr", try_from = "MTableRepr")]
pub struct MTable {
    level: u64,
    index: u64,
    entries: BTreeMap<(u64, u64), u64>,
}

#[derive(Serialize, Deserialize)]
struct MTableRepr {
    level: u64,
    index: u64,
    entries: Vec<[u64; 3]>,
}

impl From<MTable> for MTableRepr {
    fn from(t: MTable) -> Self {
        MTableRepr {
            level: t.level,
            index: t.index,
            entries: t.entries.iter().map(|(&(r, u), &m)| [r, u, m]).collect(),
        }
    }
}

impl TryFrom<MTableRepr> for MTable {
    type Error = Error;

    fn try_from(r: MTableRepr) -> Result<Self> {
        let mut table = MTable::new(r.level, r.index)?;
        for [res, u, m] in r.entries {
            table.insert(res, u, m)?;
        }
        Ok(table)
    }
}

impl MTable {
    pub fn new(level: u64, index: u64) -> Result<Self> {
        if level == 0 || index == 0 {
            return Err(Error::InvalidMTable("level and index must be positive".into()));
        }
        level
            .checked_mul(level)
            .ok_or_else(|| Error::InvalidMTable(format!("level {level} too large")))?;
        Ok(Self {
            level,
            index,
            entries: BTreeMap::new(),
        })
    }

    pub fn level(&self) -> u64 {
        self.level
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (u64, u64, u64)> + '_ {
        self.entries.iter().map(|(&(r, u), &m)| (r, u, m))
    }

    fn modulus(&self) -> u64 {
        self.level * self.level
    }

    /// Inserts `M(t ≡ residue, u)`; the residue is reduced mod `K²`.
    pub fn insert(&mut self, residue: u64, u: u64, m: u64) -> Result<()> {
        if u == 0 {
            return Err(Error::InvalidMTable("u must be positive".into()));
        }
        if m > self.index {
            return Err(Error::InvalidMTable(format!(
                "M={m} at (t≡{residue}, u={u}) exceeds the index {}",
                self.index
            )));
        }
        self.entries.insert((residue % self.modulus(), u), m);
        Ok(())
    }

    pub fn lookup(&self, t: u64, u: u64) -> Option<u64> {
        self.entries.get(&(t % self.modulus(), u)).copied()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap().trim()))
            .filter(|(_, l)| !l.is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::InvalidMTable("missing header line".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (level, index) = match fields.as_slice() {
            ["K", k, "INDEX", i] => (
                k.parse().map_err(|_| Error::InvalidMTable(format!("bad level {k:?}")))?,
                i.parse().map_err(|_| Error::InvalidMTable(format!("bad index {i:?}")))?,
            ),
            _ => {
                return Err(Error::InvalidMTable(format!(
                    "header must be `K <level> INDEX <index>`, got {header:?}"
                )))
            }
        };
        let mut table = MTable::new(level, index)?;
        for (lineno, line) in lines {
            let nums: Vec<u64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::InvalidMTable(format!("line {lineno}: expected integers, got {line:?}")))?;
            match nums.as_slice() {
                &[r, u, m] => table
                    .insert(r, u, m)
                    .map_err(|e| Error::InvalidMTable(format!("line {lineno}: {e}")))?,
                _ => {
                    return Err(Error::InvalidMTable(format!(
                        "line {lineno}: expected `t_residue u M`, got {line:?}"
                    )))
                }
            }
        }
        Ok(table)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("K {} INDEX {}\n", self.level, self.index);
        for (r, u, m) in self.entries() {
            out.push_str(&format!("{r} {u} {m}\n"));
        }
        out
    }
}

/// Which subgroup of the modular group the spectrum is computed for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgroupDescriptor {
    pub kind: SubgroupKind,
    pub level: u64,
    pub index: u64,
    pub table: Option<MTable>,
}

impl SubgroupDescriptor {
    pub fn full() -> Self {
        Self {
            kind: SubgroupKind::Full,
            level: 1,
            index: 1,
            table: None,
        }
    }

    /// A congruence family of level `K` and index `index`; `M` is known only
    /// on the saturation set until a table is attached.
    pub fn family(kind: SubgroupKind, level: u64, index: u64) -> Result<Self> {
        if matches!(kind, SubgroupKind::Full | SubgroupKind::Custom) {
            return Err(Error::InvalidMTable(format!("{kind} is not a congruence family")));
        }
        if level == 0 || index == 0 {
            return Err(Error::InvalidMTable("level and index must be positive".into()));
        }
        Ok(Self {
            kind,
            level,
            index,
            table: None,
        })
    }

    /// A subgroup given entirely by its table; absent keys weigh 0.
    pub fn custom(table: MTable) -> Self {
        Self {
            kind: SubgroupKind::Custom,
            level: table.level,
            index: table.index,
            table: Some(table),
        }
    }

    pub fn with_table(mut self, table: MTable) -> Result<Self> {
        if self.kind == SubgroupKind::Full {
            return Err(Error::InvalidMTable("the full group takes no table".into()));
        }
        if table.level != self.level || table.index != self.index {
            return Err(Error::InvalidMTable(format!(
                "table is for K={} INDEX={}, subgroup has K={} INDEX={}",
                table.level, table.index, self.level, self.index
            )));
        }
        self.table = Some(table);
        Ok(self)
    }

    /// `t ≡ ±2 (mod K²)` and `K | u`.
    pub fn saturates(&self, t: u64, u: u64) -> bool {
        let k2 = self.level * self.level;
        let r = t % k2;
        u.is_multiple_of(self.level) && (r == 2 % k2 || r == (k2 + k2 - 2) % k2)
    }

    /// `M_Γ(t, u)`.
    pub fn m_gamma(&self, t: u64, u: u64) -> Result<u64> {
        match self.kind {
            SubgroupKind::Full => Ok(1),
            SubgroupKind::Custom => Ok(self.table.as_ref().and_then(|tb| tb.lookup(t, u)).unwrap_or(0)),
            SubgroupKind::Gamma0 | SubgroupKind::Gamma1 | SubgroupKind::Principal => {
                if self.saturates(t, u) {
                    return Ok(self.index);
                }
                self.table
                    .as_ref()
                    .and_then(|tb| tb.lookup(t, u))
                    .ok_or(Error::UnknownM { t, u })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DivisorRow {
    pub u: u64,
    pub d: u64,
    pub h: u64,
    pub eps_d: PellUnit,
    /// `ε(t) = eps_d^j`
    pub j: u32,
    #[serde(rename = "M")]
    pub m_weight: u64,
}

impl DivisorRow {
    /// `L(1, χ_d) = h log ε(d) / √d`.
    pub fn l_value(&self) -> f64 {
        self.h as f64 * self.eps_d.ln() / (self.d as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: u64,
    #[serde(rename = "U")]
    pub big_u: u64,
    pub rows: Vec<DivisorRow>,
    /// `Σ_u M h / j = m̂(N) / (2 log ε(t))`
    #[serde(with = "crate::serde_big::ratio")]
    pub mhat_coeff: BigRational,
    /// Exact multiplicity, set by deflation.
    pub m: Option<u64>,
    #[serde(rename = "N")]
    pub norm: f64,
    pub length: f64,
}

impl TraceRecord {
    /// `log ε(t)`
    pub fn log_eps(&self) -> f64 {
        self.length / 2.0
    }
}

/// `N(t) = ε(t)² = ((t² − 2) + t√(t² − 4)) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormValue {
    pub rational: BigUint,
    pub irrational: BigUint,
    pub radicand: u64,
    pub denominator: u32,
    pub value: f64,
    pub length: f64,
}

pub fn norm_of(t: u64) -> Result<NormValue> {
    let radicand = arith::trace_discriminant(t)?;
    let tf = t as f64;
    let value = ((tf * tf - 2.0) + tf * (radicand as f64).sqrt()) / 2.0;
    Ok(NormValue {
        rational: BigUint::from(t) * t - 2u32,
        irrational: BigUint::from(t),
        radicand,
        denominator: 2,
        value,
        length: 2.0 * (tf / 2.0).acosh(),
    })
}

/// `N(t)` rounded to `digits` significant decimal digits, computed exactly.
pub fn norm_decimal(t: u64, digits: usize) -> Result<String> {
    let nv = norm_of(t)?;
    let int_digits = nv.value.log10().floor() as i64 + 1;
    let guard = 4;
    let frac = (digits as i64 - int_digits + guard).max(0) as u32;
    let scale = BigUint::from(10u32).pow(frac);
    // floor(N · 10^frac) = floor(((t²−2)·10^f + ⌊√(t²(t²−4)·10^{2f})⌋) / 2)
    let root = (BigUint::from(t) * t * nv.radicand * &scale * &scale).sqrt();
    let scaled = (&nv.rational * &scale + root) / 2u32;
    let mut text = scaled.to_str_radix(10);
    let total_sig = text.len();
    let keep = digits.min(total_sig);
    let drop = total_sig - keep;
    if drop > 0 {
        let rounded = (scaled + BigUint::from(5u32) * BigUint::from(10u32).pow(drop as u32 - 1))
            / BigUint::from(10u32).pow(drop as u32);
        text = rounded.to_str_radix(10);
    }
    let frac_shown = frac as i64 - drop as i64;
    Ok(if frac_shown > 0 {
        let split = text.len() - frac_shown as usize;
        format!("{}.{}", &text[..split], &text[split..])
    } else {
        format!("{}{}", text, "0".repeat((-frac_shown) as usize))
    })
}

/// The exponent `j` with `eps_d^j = (t + u√d)/2`.
fn power_index(eps: &PellUnit, t: u64, u: u64) -> Result<u32> {
    let target_p = BigUint::from(t);
    let target_q = BigUint::from(u);
    let bound = ((t as f64 / 2.0).acosh() / eps.ln()).floor() as u32 + 1;
    let (mut p_prev, mut p_cur) = (BigUint::from(2u32), eps.p.clone());
    let (mut q_prev, mut q_cur) = (BigUint::zero(), eps.q.clone());
    for k in 1..=bound {
        if p_cur == target_p {
            if q_cur == target_q {
                return Ok(k);
            }
            break;
        }
        if p_cur > target_p {
            break;
        }
        let p_next = &eps.p * &p_cur - &p_prev;
        let q_next = &eps.p * &q_cur - &q_prev;
        p_prev = std::mem::replace(&mut p_cur, p_next);
        q_prev = std::mem::replace(&mut q_cur, q_next);
    }
    Err(Error::PowerIndex { t, u, d: eps.d })
}

/// All divisor rows and the weighted class count for one trace; `m` is unset.
pub fn trace_record(sub: &SubgroupDescriptor, t: u64) -> Result<TraceRecord> {
    let disc = arith::trace_discriminant(t)?;
    let big_u = arith::max_u(t)?;
    let mut rows = Vec::new();
    let mut mhat = BigRational::zero();
    for u in arith::admissible_divisors(t)? {
        let m_weight = sub.m_gamma(t, u)?;
        let d = disc / (u * u);
        let h = forms::class_number(d)?;
        let eps_d = arith::pell4_fundamental(d)?;
        let j = power_index(&eps_d, t, u)?;
        mhat += BigRational::new(BigInt::from(m_weight) * BigInt::from(h), BigInt::from(j));
        rows.push(DivisorRow {
            u,
            d,
            h,
            eps_d,
            j,
            m_weight,
        });
    }
    let nv = norm_of(t)?;
    Ok(TraceRecord {
        t,
        big_u,
        rows,
        mhat_coeff: mhat,
        m: None,
        norm: nv.value,
        length: nv.length,
    })
}

/// `m(t) = mhat_coeff(t) − Σ m(t0)/l` over power ancestors, in exact arithmetic.
pub fn deflate<F>(record: &TraceRecord, multiplicity_of: F) -> Result<u64>
where
    F: Fn(u64) -> Option<u64>,
{
    let mut value = record.mhat_coeff.clone();
    for (t0, l) in arith::power_ancestors(record.t) {
        let m0 = multiplicity_of(t0).ok_or(Error::MissingAncestor {
            t: record.t,
            ancestor: t0,
        })?;
        value -= BigRational::new(BigInt::from(m0), BigInt::from(l));
    }
    if !value.is_integer() || value.is_negative() {
        return Err(Error::Integrality {
            t: record.t,
            value: crate::serde_big::ratio::to_string(&value),
        });
    }
    Ok(value.to_integer().to_u64().expect("multiplicity fits in u64"))
}

/// The length spectrum `{(N(t), m(t)) : 3 ≤ t ≤ t_max}` of one subgroup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTable {
    pub subgroup: SubgroupDescriptor,
    pub t_max: u64,
    records: Vec<TraceRecord>,
}

impl SpectrumTable {
    /// Assembles a table from already-deflated records, checking completeness.
    pub fn from_records(subgroup: SubgroupDescriptor, t_max: u64, records: Vec<TraceRecord>) -> Result<Self> {
        let expected = t_max.saturating_sub(2) as usize;
        if records.len() != expected
            || records.iter().enumerate().any(|(i, r)| r.t != i as u64 + 3 || r.m.is_none())
        {
            return Err(Error::Parse(format!(
                "records must cover t = 3..={t_max} in order, each deflated"
            )));
        }
        Ok(Self {
            subgroup,
            t_max,
            records,
        })
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn get(&self, t: u64) -> Option<&TraceRecord> {
        if t < 3 {
            return None;
        }
        self.records.get((t - 3) as usize)
    }

    pub fn m(&self, t: u64) -> Option<u64> {
        self.get(t).and_then(|r| r.m)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Builds every trace record in parallel, then deflates in increasing `t`.
pub fn build_table(sub: &SubgroupDescriptor, t_max: u64) -> Result<SpectrumTable> {
    if t_max < 3 {
        return Err(Error::TraceTooSmall(t_max));
    }
    let results: Vec<Result<TraceRecord>> = (3..=t_max).into_par_iter().map(|t| trace_record(sub, t)).collect();
    let mut failures = Vec::new();
    let mut records = Vec::with_capacity(results.len());
    for (t, r) in (3..=t_max).zip(results) {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push((t, Box::new(e))),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Table(failures));
    }
    for i in 0..records.len() {
        let (done, rest) = records.split_at_mut(i);
        let rec = &mut rest[0];
        let m = deflate(rec, |t0| done.get((t0 - 3) as usize).and_then(|r| r.m))?;
        rec.m = Some(m);
    }
    Ok(SpectrumTable {
        subgroup: sub.clone(),
        t_max,
        records,
    })
}

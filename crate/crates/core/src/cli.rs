//! Command-line front end. This is the only place that touches files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::{self, PsiVariant};
use crate::error::Error;
use crate::lfunc::{self, ProgressionSpec};
use crate::oracle;
use crate::spectrum::{self, MTable, SpectrumTable, SubgroupDescriptor, SubgroupKind};

pub mod verify;

pub const WORKERS_ENV: &str = "LENSPEC_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "lenspec", version, about = "Length spectra of arithmetic surfaces from class numbers")]
pub struct Cli {
    /// Worker threads (default: $LENSPEC_WORKERS, else all cores)
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Write data here instead of stdout
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Fast,
    Oracle,
    All,
}

#[derive(Debug, Args)]
pub struct SubgroupArgs {
    #[arg(long, default_value = "full")]
    pub gamma: SubgroupKind,
    /// Level K of a congruence family
    #[arg(long)]
    pub level: Option<u64>,
    /// Index of the subgroup in the modular group
    #[arg(long)]
    pub index: Option<u64>,
    /// M-table file (`K <level> INDEX <index>` header, then `t_residue u M` lines)
    #[arg(long)]
    pub mtable: Option<PathBuf>,
    /// Reuse a table previously written with `table --format json`
    #[arg(long, conflicts_with_all = ["level", "index", "mtable"])]
    pub from: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate m(t) with its divisor rows
    Table {
        #[command(flatten)]
        sub: SubgroupArgs,
        #[arg(long)]
        tmax: u64,
    },
    /// π^(k)(x) against li_k(x^{(k+1)/2}) on a log grid
    Powersums {
        #[command(flatten)]
        sub: SubgroupArgs,
        #[arg(short)]
        k: u32,
        #[arg(long)]
        xmax: f64,
        #[arg(long)]
        xmin: Option<f64>,
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
    /// Ψ^(k)(T) in both normalizations
    Psi {
        #[command(flatten)]
        sub: SubgroupArgs,
        #[arg(short)]
        k: u32,
        #[arg(short = 'T')]
        t_cap: u64,
        #[arg(long, default_value_t = 10)]
        points: usize,
    },
    /// Estimate the constant in π^(k)(x) ~ c li_k(x^{(k+1)/2})
    Constants {
        #[command(flatten)]
        sub: SubgroupArgs,
        #[arg(short)]
        k: u32,
        #[arg(long)]
        xmax: f64,
        #[arg(long)]
        xmin: Option<f64>,
        #[arg(long, default_value_t = 12)]
        points: usize,
    },
    /// φ^(k)_{K,ν}(T) and the slope φ/T over a progression
    Phi {
        #[arg(short = 'K', default_value_t = 1)]
        modulus: u64,
        /// Residues ±2 per prime of K (default: all +2)
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        nu: Option<Vec<i64>>,
        #[arg(short, default_value_t = 1)]
        k: u32,
        #[arg(short = 'T')]
        t_cap: f64,
        #[arg(long, default_value_t = 4)]
        points: usize,
    },
    /// Envelope ratios for m(N)
    Bounds {
        #[command(flatten)]
        sub: SubgroupArgs,
        #[arg(long)]
        tmax: u64,
    },
    /// Compare m(t) with brute-force word enumeration
    OracleCheck {
        #[arg(long, default_value_t = 20)]
        tmax: u64,
    },
    /// Run the property suite and emit a JSON report
    Verify {
        #[arg(long, value_enum, default_value_t = Tier::All)]
        tier: Tier,
    },
}

/// Failures split by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

pub fn load_subgroup(args: &SubgroupArgs) -> CliResult<SubgroupDescriptor> {
    let table = match &args.mtable {
        Some(p) => Some(MTable::parse(&read_text(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?),
        None => None,
    };
    match args.gamma {
        SubgroupKind::Full => {
            if table.is_some() || args.level.is_some() || args.index.is_some() {
                return Err(CliError::Usage("--gamma full takes no --level, --index or --mtable".into()));
            }
            Ok(SubgroupDescriptor::full())
        }
        SubgroupKind::Custom => {
            let table = table.ok_or_else(|| CliError::Usage("--gamma custom requires --mtable".into()))?;
            if args.level.is_some_and(|k| k != table.level()) || args.index.is_some_and(|i| i != table.index()) {
                return Err(CliError::Usage("--level/--index disagree with the M-table header".into()));
            }
            Ok(SubgroupDescriptor::custom(table))
        }
        kind => {
            let level = args
                .level
                .or(table.as_ref().map(MTable::level))
                .ok_or_else(|| CliError::Usage(format!("--gamma {kind} requires --level")))?;
            let index = args
                .index
                .or(table.as_ref().map(MTable::index))
                .ok_or_else(|| CliError::Usage(format!("--gamma {kind} requires --index")))?;
            let sub = SubgroupDescriptor::family(kind, level, index)?;
            Ok(match table {
                Some(t) => sub.with_table(t)?,
                None => sub,
            })
        }
    }
}

pub fn read_table_json(path: &Path) -> CliResult<SpectrumTable> {
    let text = read_text(path)?;
    let raw: SpectrumTable =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let t_max = raw.t_max;
    let sub = raw.subgroup.clone();
    Ok(SpectrumTable::from_records(sub, t_max, raw.records().to_vec())?)
}

/// A table for `args`, covering at least traces up to `t_max`.
fn obtain_table(args: &SubgroupArgs, t_max: u64) -> CliResult<SpectrumTable> {
    if let Some(p) = &args.from {
        let table = read_table_json(p)?;
        if table.t_max < t_max {
            return Err(CliError::Usage(format!(
                "{} covers t ≤ {}, need t ≤ {t_max}",
                p.display(),
                table.t_max
            )));
        }
        return Ok(table);
    }
    Ok(spectrum::build_table(&load_subgroup(args)?, t_max)?)
}

/// Smallest `t_max` whose table covers every norm below `x`.
pub fn tmax_for_norm(x: f64) -> u64 {
    let mut t = (x.sqrt().floor() as u64).saturating_sub(2).max(3);
    while spectrum::norm_of(t + 1).is_ok_and(|n| n.value < x) {
        t += 1;
    }
    t
}

/// `v` with 18 significant digits in plain notation.
pub fn sig18(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let int_digits = v.abs().log10().floor() as i64 + 1;
    let prec = (18 - int_digits).max(0) as usize;
    format!("{v:.prec$}")
}

pub fn table_csv(table: &SpectrumTable) -> CliResult<String> {
    let mut out = String::from("t,N,length,m,U,rows\n");
    for r in table.records() {
        let rows: Vec<String> = r
            .rows
            .iter()
            .map(|row| format!("{}:{}:{}:{}:{}", row.u, row.d, row.h, row.j, row.m_weight))
            .collect();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.t,
            spectrum::norm_decimal(r.t, 18)?,
            sig18(r.length),
            r.m.unwrap_or(0),
            r.big_u,
            rows.join(";")
        ));
    }
    Ok(out)
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn csv_of<const N: usize>(header: [&str; N], rows: impl IntoIterator<Item = [String; N]>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

fn default_xmin(xmax: f64) -> f64 {
    (xmax / 1024.0).max(20.0)
}

#[derive(Serialize)]
struct PowerRow {
    x: f64,
    pi: u128,
    li: f64,
    ratio: f64,
    x_pow: f64,
    ratio_pow: f64,
}

#[derive(Serialize)]
struct PsiRow {
    t: u64,
    lemma_literal: f64,
    mhat_derived: f64,
    ratio: f64,
    lemma_per_t: f64,
}

#[derive(Serialize)]
struct PhiRow {
    t: f64,
    terms: usize,
    phi: f64,
    a: f64,
}

#[derive(Serialize)]
struct PhiOutput {
    modulus: u64,
    nu: Vec<i64>,
    mu: u64,
    k: u32,
    rows: Vec<PhiRow>,
}

#[derive(Serialize)]
struct OracleRow {
    t: u64,
    spectrum: u64,
    oracle: u64,
    agree: bool,
}

/// The data and summary a command produced.
struct Outcome {
    data: String,
    summary: String,
    failed: bool,
}

fn execute(cli: &Cli) -> CliResult<Outcome> {
    let json = cli.format == Format::Json;
    let ok = |data: String, summary: String| {
        Ok(Outcome {
            data,
            summary,
            failed: false,
        })
    };
    match &cli.command {
        Command::Table { sub, tmax } => {
            let table = obtain_table(sub, *tmax)?;
            let data = if json { to_json(&table) } else { table_csv(&table)? };
            ok(data, format!("{} traces, t = 3..={}", table.len(), table.t_max))
        }
        Command::Powersums {
            sub,
            k,
            xmax,
            xmin,
            points,
        } => {
            let table = obtain_table(sub, tmax_for_norm(*xmax))?;
            let grid = analysis::log_grid(xmin.unwrap_or(default_xmin(*xmax)), *xmax, (*points).max(2));
            let mut rows = Vec::new();
            for &x in &grid {
                let pi = analysis::pi_k(&table, *k, x)?;
                let li = analysis::li_k(x.powf((*k as f64 + 1.0) / 2.0), *k)?;
                let x_pow = x.powf((*k as f64 + 1.0) / 2.0);
                rows.push(PowerRow {
                    x,
                    pi,
                    li,
                    ratio: pi as f64 / li,
                    x_pow,
                    ratio_pow: pi as f64 / x_pow,
                });
            }
            let last = rows.last().unwrap();
            let summary = format!("k={k}: pi/li = {:.6}, pi/x^((k+1)/2) = {:.6} at x = {xmax}", last.ratio, last.ratio_pow);
            let data = if json {
                to_json(&rows)
            } else {
                csv_of(
                    ["x", "pi", "li", "ratio", "x_pow", "ratio_pow"],
                    rows.iter().map(|r| {
                        [sig18(r.x), r.pi.to_string(), sig18(r.li), sig18(r.ratio), sig18(r.x_pow), sig18(r.ratio_pow)]
                    }),
                )
            };
            ok(data, summary)
        }
        Command::Psi { sub, k, t_cap, points } => {
            let table = obtain_table(sub, *t_cap)?;
            let n = (*points).max(1) as u64;
            let mut caps: Vec<u64> = (1..=n).map(|i| (t_cap * i / n).max(3)).collect();
            caps.dedup();
            let mut rows = Vec::new();
            for &t in &caps {
                let lit = analysis::psi_k(&table, *k, t, PsiVariant::LemmaLiteral)?;
                let mh = analysis::psi_k(&table, *k, t, PsiVariant::MhatDerived)?;
                rows.push(PsiRow {
                    t,
                    lemma_literal: lit,
                    mhat_derived: mh,
                    ratio: mh / lit,
                    lemma_per_t: lit / t as f64,
                });
            }
            let last = rows.last().unwrap();
            let summary = format!("k={k}, T={t_cap}: mhat-derived / lemma-literal = {:.8}", last.ratio);
            let data = if json {
                to_json(&rows)
            } else {
                csv_of(
                    ["T", "lemma_literal", "mhat_derived", "ratio", "lemma_per_T"],
                    rows.iter().map(|r| {
                        [r.t.to_string(), sig18(r.lemma_literal), sig18(r.mhat_derived), sig18(r.ratio), sig18(r.lemma_per_t)]
                    }),
                )
            };
            ok(data, summary)
        }
        Command::Constants {
            sub,
            k,
            xmax,
            xmin,
            points,
        } => {
            let table = obtain_table(sub, tmax_for_norm(*xmax))?;
            let grid = analysis::log_grid(xmin.unwrap_or(default_xmin(*xmax)), *xmax, *points);
            let rep = analysis::estimate_c(&table, *k, &grid)?;
            let summary = format!("k={k}: c_hat = {:.6}, stability = {:.3e}", rep.c_hat, rep.stability);
            let data = if json {
                to_json(&rep)
            } else {
                csv_of(
                    ["x", "pi", "li", "ratio"],
                    rep.points
                        .iter()
                        .map(|p| [sig18(p.x), p.pi.to_string(), sig18(p.li), sig18(p.ratio)]),
                )
            };
            ok(data, summary)
        }
        Command::Phi {
            modulus,
            nu,
            k,
            t_cap,
            points,
        } => {
            let spec = match nu {
                Some(nu) => ProgressionSpec::new(*modulus, nu)?,
                None => ProgressionSpec::uniform(*modulus, 2)?,
            };
            let n = (*points).max(1);
            let caps: Vec<f64> = (0..n).rev().map(|i| t_cap / 2f64.powi(i as i32)).collect();
            let mut rows = Vec::new();
            for &t in &caps {
                let terms = spec.terms(t).len();
                let phi = lfunc::phi_knu(&spec, *k, t)?;
                rows.push(PhiRow {
                    t,
                    terms,
                    phi,
                    a: phi / t,
                });
            }
            let last = rows.last().unwrap();
            let summary = match rows.len() {
                1 => format!("a = {:.6} at T = {t_cap}", last.a),
                len => format!(
                    "a = {:.6} at T = {t_cap}; relative change from T/2: {:.3e}",
                    last.a,
                    (last.a - rows[len - 2].a).abs() / last.a
                ),
            };
            let data = if json {
                to_json(&PhiOutput {
                    modulus: spec.modulus(),
                    nu: spec.nu().to_vec(),
                    mu: spec.mu(),
                    k: *k,
                    rows,
                })
            } else {
                csv_of(
                    ["T", "terms", "phi", "a"],
                    rows.iter().map(|r| [sig18(r.t), r.terms.to_string(), sig18(r.phi), sig18(r.a)]),
                )
            };
            ok(data, summary)
        }
        Command::Bounds { sub, tmax } => {
            let table = obtain_table(sub, *tmax)?;
            let rep = analysis::bound_report(&table)?;
            let summary = format!(
                "max m/N^(3/4) = {:.4} (t={}), slope = {}",
                rep.max_three_quarter.value,
                rep.max_three_quarter.t,
                rep.slope.map_or("n/a".into(), |s| format!("{s:.4}"))
            );
            let data = if json {
                to_json(&rep)
            } else {
                let w = |o: Option<analysis::Witness>| {
                    o.map_or([String::new(), String::new()], |w| [sig18(w.value), w.t.to_string()])
                };
                let mut rows = vec![
                    ["max_m_over_sqrtN_logN".to_string(), w(Some(rep.max_sqrt_log))[0].clone(), w(Some(rep.max_sqrt_log))[1].clone()],
                    ["max_m_over_N_3_4".to_string(), w(Some(rep.max_three_quarter))[0].clone(), w(Some(rep.max_three_quarter))[1].clone()],
                    ["min_m_over_N_0_45".to_string(), w(rep.min_lower)[0].clone(), w(rep.min_lower)[1].clone()],
                ];
                rows.push(["slope_log_mhat_vs_log_N".into(), rep.slope.map_or(String::new(), sig18), String::new()]);
                csv_of(["quantity", "value", "t"], rows)
            };
            ok(data, summary)
        }
        Command::OracleCheck { tmax } => {
            let table = spectrum::build_table(&SubgroupDescriptor::full(), *tmax)?;
            let counts = oracle::enumerate_classes(*tmax)?;
            let rows: Vec<OracleRow> = (3..=*tmax)
                .map(|t| {
                    let (s, o) = (table.m(t).unwrap(), counts[&t]);
                    OracleRow {
                        t,
                        spectrum: s,
                        oracle: o,
                        agree: s == o,
                    }
                })
                .collect();
            let bad = rows.iter().filter(|r| !r.agree).count();
            let data = if json {
                to_json(&rows)
            } else {
                csv_of(
                    ["t", "spectrum", "oracle", "agree"],
                    rows.iter()
                        .map(|r| [r.t.to_string(), r.spectrum.to_string(), r.oracle.to_string(), r.agree.to_string()]),
                )
            };
            Ok(Outcome {
                data,
                summary: format!("{} traces compared, {bad} disagreements", rows.len()),
                failed: bad > 0,
            })
        }
        Command::Verify { tier } => {
            let report = verify::run(*tier, &mut |c: &verify::Criterion| {
                eprintln!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.id, c.detail);
            })?;
            let failed = !report.all_pass;
            let summary = format!(
                "{} of {} criteria passed",
                report.criteria.iter().filter(|c| c.pass).count(),
                report.criteria.len()
            );
            Ok(Outcome {
                data: to_json(&report),
                summary,
                failed,
            })
        }
    }
}

pub fn worker_count(flag: Option<usize>) -> CliResult<Option<usize>> {
    if let Some(n) = flag {
        return if n == 0 {
            Err(CliError::Usage("--workers must be positive".into()))
        } else {
            Ok(Some(n))
        };
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("{WORKERS_ENV}={v:?} is not a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}

fn emit(cli: &Cli, out: &Outcome) -> CliResult<()> {
    match &cli.output {
        Some(p) => fs::write(p, &out.data).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .lock()
            .write_all(out.data.as_bytes())
            .map_err(|e| CliError::Usage(format!("cannot write to stdout: {e}"))),
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = worker_count(cli.workers).and_then(|workers| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = workers {
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
        let out = pool.install(|| execute(&cli))?;
        emit(&cli, &out)?;
        eprintln!("{}", out.summary);
        if out.failed {
            Err(CliError::Failed(out.summary))
        } else {
            Ok(())
        }
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::Failed(msg)) => {
            eprintln!("verification failed: {msg}");
            EXIT_FAILED
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig18_formats() {
        assert_eq!(sig18(1.9248473002384139), "1.92484730023841388");
        assert_eq!(sig18(0.0), "0");
        assert_eq!(sig18(12345.5).len(), 19);
    }

    #[test]
    fn tmax_covers_norm() {
        for &x in &[7.0, 100.0, 1e6, 9.1e6] {
            let t = tmax_for_norm(x);
            assert!(spectrum::norm_of(t + 1).unwrap().value >= x);
            assert!(t == 3 || spectrum::norm_of(t).unwrap().value < x);
        }
    }

    #[test]
    fn csv_row_for_t3() {
        let table = spectrum::build_table(&SubgroupDescriptor::full(), 10).unwrap();
        let csv = table_csv(&table).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 9);
        assert!(lines[1].starts_with("3,6.85410196624968454,1.92484730023841"), "{}", lines[1]);
        assert!(lines[1].ends_with(",1,1,1:5:1:1:1"));
    }

    #[test]
    fn cli_parses() {
        let cli = Cli::try_parse_from(["lenspec", "table", "--gamma", "full", "--tmax", "10", "--format", "csv"]).unwrap();
        assert!(matches!(cli.command, Command::Table { tmax: 10, .. }));
        let cli = Cli::try_parse_from(["lenspec", "phi", "-K", "3", "--nu=-2", "-k", "1", "-T", "1000"]).unwrap();
        assert!(matches!(cli.command, Command::Phi { modulus: 3, .. }));
        assert!(Cli::try_parse_from(["lenspec", "table"]).is_err());
        assert!(Cli::try_parse_from(["lenspec", "table", "--tmax", "5", "--gamma", "nope"]).is_err());
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("trace must be at least 3, got {0}")]
    TraceTooSmall(u64),

    #[error("trace {0} is too large for 64-bit discriminants")]
    TraceTooLarge(u64),

    #[error("invalid discriminant {d}: {reason}")]
    InvalidDiscriminant { d: u64, reason: &'static str },

    #[error("form ({a}, {b}, {c}) is not reduced")]
    NotReduced { a: i64, b: i64, c: i64 },

    #[error("invalid form ({a}, {b}, {c}): {reason}")]
    InvalidForm {
        a: i64,
        b: i64,
        c: i64,
        reason: &'static str,
    },

    #[error("L-series for d={d} cannot reach tolerance {tol:e} (best achievable {achievable:e})")]
    NonConvergence { d: u64, tol: f64, achievable: f64 },

    #[error("invalid progression: {0}")]
    InvalidProgression(String),

    #[error("need at least {needed} progression terms below T={t_max}, found {found}")]
    InsufficientSample { needed: usize, found: usize, t_max: f64 },

    #[error("M_Γ({t}, {u}) is unknown for this subgroup without a loaded table")]
    UnknownM { t: u64, u: u64 },

    #[error("invalid M-table: {0}")]
    InvalidMTable(String),

    #[error("power index search failed at t={t}, u={u}: ε(t) is not a power of ε(d={d})")]
    PowerIndex { t: u64, u: u64, d: u64 },

    #[error("deflation at t={t} produced {value}, which is not a nonnegative integer")]
    Integrality { t: u64, value: String },

    #[error("ancestor trace {ancestor} of t={t} has not been deflated")]
    MissingAncestor { t: u64, ancestor: u64 },

    #[error("table build failed at {} trace(s); first t={}: {}", .0.len(), .0[0].0, .0[0].1)]
    Table(Vec<(u64, Box<Error>)>),

    #[error("x={x} exceeds table coverage (largest safe x is {limit})")]
    Coverage { x: f64, limit: f64 },

    #[error("li_k needs x >= 2, got {0}")]
    LiDomain(f64),

    #[error("insufficient grid: {0}")]
    InsufficientGrid(String),

    #[error("power sum overflowed at k={0}")]
    Overflow(u32),

    #[error("oracle needs trace_max >= 3, got {0}")]
    OracleRange(u64),

    #[error("parse error: {0}")]
    Parse(String),
}

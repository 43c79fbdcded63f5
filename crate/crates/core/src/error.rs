use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown identifier `{name}` at line {line}, column {column}")]
    UnknownIdentifier {
        name: String,
        line: usize,
        column: usize,
    },

    #[error("expected {expected} right-hand side component(s), found {found}")]
    ComponentCount { expected: usize, found: usize },

    #[error("evaluation produced a non-finite value at t = {t}, u = {u:?}")]
    Eval { t: f64, u: Vec<f64> },

    #[error("config: missing field `{0}`")]
    MissingField(String),

    #[error("config: {0}")]
    Config(String),

    #[error("invalid problem: {0}")]
    Invalid(String),

    #[error("iterate left the domain at t = {t}, component {component}: value {value} outside [{lo}, {hi}]")]
    DomainEscape {
        t: f64,
        component: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("error bound undefined: spectral radius r(Q) = {spectral_radius} is not below 1")]
    BoundUndefined { spectral_radius: f64 },

    #[error("no sign change of the determining function found on [{lo}, {hi}]")]
    NoRootBracket { lo: f64, hi: f64 },

    #[error("root solver did not converge after {probes} probes (best residual {best_residual:e})")]
    NonConvergence { probes: usize, best_residual: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

use thiserror::Error;

pub type Result<T, E = PogitError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PogitError {
    #[error("invalid spline specification: {0}")]
    InvalidSpline(String),

    #[error("point {point} lies outside the spline domain [{lo}, {hi}]")]
    OutOfDomain { point: f64, lo: f64, hi: f64 },

    #[error("unsupported spline degree {degree} for {what}")]
    UnsupportedDegree { degree: usize, what: &'static str },

    #[error("invalid link function: {0}")]
    InvalidLink(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("non-finite mean at row {row} (eta_lambda = {eta_lambda}, eta_p = {eta_p})")]
    NumericalOverflow {
        row: usize,
        eta_lambda: f64,
        eta_p: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("constraints are infeasible; conflicting constraint: {constraint}")]
    Infeasible { constraint: String },

    #[error("quadratic subproblem is not strictly convex")]
    NotPositiveDefinite,

    #[error("quadratic subproblem did not terminate; the constraints may be degenerate")]
    SubproblemStalled,

    #[error("hessian is rank deficient; near-null directions: {}", format_directions(.directions))]
    RankDeficient { directions: Vec<Vec<(String, f64)>> },

    #[error("model comparison ordering error: {0}")]
    Ordering(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn format_directions(directions: &[Vec<(String, f64)>]) -> String {
    directions
        .iter()
        .map(|dir| {
            let terms: Vec<String> = dir
                .iter()
                .filter(|(_, w)| w.abs() > 1e-6)
                .map(|(name, w)| format!("{w:+.4}*{name}"))
                .collect();
            format!("[{}]", terms.join(" "))
        })
        .collect::<Vec<_>>()
        .join(", ")
}

impl PogitError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        PogitError::Io {
            path: path.into(),
            source,
        }
    }
}

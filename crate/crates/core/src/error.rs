use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular matrix: pivot {pivot:.3e} below threshold {threshold:.3e}")]
    SingularMatrix { pivot: f64, threshold: f64 },

    #[error("eigenvalue iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error(
        "Lipschitz bound violated: |F(y1)-F(y2)| / |y1-y2| = {ratio:.6} exceeds declared {lambda} \
         (y1 = {y1:?}, y2 = {y2:?})"
    )]
    LipschitzViolation {
        y1: Vec<f64>,
        y2: Vec<f64>,
        ratio: f64,
        lambda: f64,
    },

    #[error("neutral term |D0| = {d0_norm} cannot be simulated by the chain discretization")]
    UnsupportedNeutralTerm { d0_norm: f64 },

    #[error("eigenvalue {re}{im:+}i lies within {distance:.3e} of the line Re p = -nu0")]
    OnDichotomyLine { re: f64, im: f64, distance: f64 },

    #[error("tail of the transfer function cannot be bounded: {0}")]
    TailUnbounded(String),

    #[error("degenerate spectral gap: lambda_{j} = lambda_{next}", next = .j + 1)]
    DegenerateGap { j: usize },

    #[error("kappa(nu0) = {kappa} is not below one")]
    KappaExceedsOne { kappa: f64 },

    #[error("Hamiltonian has eigenvalues on the imaginary axis (closest |Re| = {min_abs_re:.3e})")]
    HamiltonianEigsOnAxis { min_abs_re: f64 },

    #[error("graph subspace of the Hamiltonian is degenerate (X block condition {cond:.3e})")]
    XSingular { cond: f64 },

    #[error("inertia mismatch: expected {expected} negative eigenvalues of P, found {found}")]
    InertiaMismatch { expected: usize, found: usize },

    #[error("trajectory left the finite range at t = {time}")]
    NonFinite { time: f64 },

    #[error("nonlinearity has no analytic derivative")]
    DerivativeUnavailable,

    #[error("Newton iteration diverged at node {node} (residual {residual:.3e})")]
    NewtonDiverged { node: usize, residual: f64 },

    #[error("admissibility lost: chord between nodes {a} and {b} has V = {value:.3e}")]
    AdmissibilityLost { a: usize, b: usize, value: f64 },

    #[error("no anchor trajectory found: {0}")]
    AnchorNotFound(String),

    #[error("tangent subspace iteration stalled at node {node} (last change {change:.3e})")]
    SubspaceStalled { node: usize, change: f64 },

    #[error("projector is not admissible: V is not {expected} on its {side}")]
    NotAdmissibleProjector {
        side: &'static str,
        expected: &'static str,
    },

    #[error("containment violated at node {node}: distance {distance:.3e}")]
    ContainmentViolated { node: usize, distance: f64 },

    #[error("path left the grid box at t = {time}")]
    LeftGrid { time: f64 },

    #[error("trajectory is unbounded (norm {norm:.3e} at t = {time})")]
    Unbounded { norm: f64, time: f64 },

    #[error("certificate lost at epsilon = {epsilon}: {reason}")]
    CertificateLostAtEpsilon { epsilon: f64, reason: String },

    #[error("iteration did not converge: {0}")]
    NotConverged(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}

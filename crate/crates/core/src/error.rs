use thiserror::Error;

pub type Result<T, E = GpxError> = std::result::Result<T, E>;

/// Every failure the crate can report.
#[derive(Debug, Error)]
pub enum GpxError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch between fields")]
    GridMismatch,
    #[error("right-hand side has nonzero mean {mean:e} (norm {norm:e})")]
    NonZeroMean { mean: f64, norm: f64 },
    #[error("right-hand side has a component {residue:e} in the checkerboard null space of the central-difference Laplacian")]
    NullSpaceResidue { residue: f64 },
    #[error("ball radius {radius} must be below half the shortest side {limit}")]
    BallTooLarge { radius: f64, limit: f64 },

    #[error("velocity field vanishes identically")]
    ZeroField,
    #[error("bump centers too close: distance {distance} must exceed {required}")]
    CentersTooClose { distance: f64, required: f64 },
    #[error("point at distance {distance} from the maximum velocity set lies outside the tube of radius {delta}")]
    OutsideTube { distance: f64, delta: f64 },
    #[error("invalid field parameter: {0}")]
    InvalidField(String),

    #[error("epsilon {0} outside (0, 1)")]
    EpsOutOfRange(f64),

    #[error("disk radius {radius} exceeds the admissible bound {limit}")]
    RadiusTooLarge { radius: f64, limit: f64 },
    #[error("flux {phi} not below the largest reachable disk flux {phi_max}")]
    FluxTooLarge { phi: f64, phi_max: f64 },
    #[error("dipole map is singular at the vortex points")]
    Singular,
    #[error("ansatz support does not fit on this grid: {0}")]
    SupportOverflow(String),
    #[error("flux corrector pairing {0:e} is degenerate")]
    DegenerateCorrector(f64),

    #[error("momentum gradient norm {0:e} is degenerate")]
    DegenerateConstraint(f64),
    #[error("restoration pairing {0:e} is degenerate")]
    DegeneratePairing(f64),
    #[error("line search stalled at step {0:e}")]
    LineSearchStalled(f64),
    #[error("no convergence after {0} iterations")]
    MaxIters(usize),
    #[error("momentum {have} of the initial field is off target {want}")]
    ConstraintNotMet { have: f64, want: f64 },

    #[error("density integrates to zero")]
    ZeroDensity,
    #[error("density is negative at node {0}")]
    NegativeDensity(usize),
    #[error("density is not concentrated: best ball ratio {ratio} <= eta {eta}")]
    NotConcentrated { ratio: f64, eta: f64 },

    #[error("loop edge {0} is degenerate")]
    DegenerateEdge(usize),
    #[error("invalid loop: {0}")]
    InvalidLoop(String),
    #[error("flux {phi} unreachable from the seed loop (seed flux {seed})")]
    FluxUnreachable { phi: f64, seed: f64 },
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid value for `{key}`: {msg}")]
    Validation { key: String, msg: String },
    #[error("bad field file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

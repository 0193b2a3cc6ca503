use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("tangential boundary crossing (cos angle {cos_angle:.4} below threshold {threshold})")]
    TangentialExit { cos_angle: f64, threshold: f64 },
    #[error("geodesic did not leave the domain within arclength {cap}")]
    NoExit { cap: f64 },
    #[error("Jacobi field vanishes at t={t:.4}: conjugate point")]
    ConjugatePoint { t: f64 },
    #[error("geodesic self-intersects (samples at t={t1:.4} and t={t2:.4})")]
    SelfIntersecting { t1: f64, t2: f64 },
    #[error("tube radius {delta} too wide: Fermi chart not injective ({detail})")]
    TubeTooWide { delta: f64, detail: String },
    #[error("Riccati solution blew up at t={t:.4} (|H|={norm:.3e})")]
    RiccatiBlowup { t: f64, norm: f64 },
    #[error("amplitude constant must be nonzero")]
    ZeroAmplitude,
    #[error("grid spacing {h} does not resolve the beam (need h <= {required:.5})")]
    GridTooCoarse { h: f64, required: f64 },
    #[error("eigensolver failure: {0}")]
    SolverFailure(String),
    #[error("|Re z| = {re:.3e} below floor {floor:.3e}")]
    ZeroRealPart { re: f64, floor: f64 },
    #[error("resonance at mode {j}: omega^2={omega2:.6}, tau={tau}, k={k}")]
    Resonance { j: usize, omega2: f64, tau: f64, k: f64 },
    #[error("Helmholtz resonance at transversal mode {j}, axial mode {m}")]
    HelmholtzResonance { j: usize, m: usize },
    #[error("no valid geodesic pair through ({x:.4}, {y:.4})")]
    NoValidPair { x: f64, y: f64 },
    #[error("calibration factor degenerate: |b0|={b0:.3e} below floor {floor:.3e}")]
    CalibrationDegenerate { b0: f64, floor: f64 },
    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cache format error: {0}")]
    Cache(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(key: &str, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            msg: msg.into(),
        }
    }
}

use thiserror::Error;

use crate::C64;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {mu} lies on the branch cut of the continued kernel")]
    BranchCutViolation { mu: C64 },

    #[error("invalid contour geometry: {0}")]
    Geometry(String),

    #[error("tail beyond R_max = {r_max} is not certified (bound {bound:e}, total {total:e})")]
    TailBoundFailure { r_max: f64, bound: f64, total: f64 },

    #[error("non-finite integrand value at {mu}; a pole probably lies on the path")]
    NonFiniteIntegrand { mu: C64 },

    #[error("probe point {z} lies on the closure of the continuous spectrum")]
    ProbeOnSpectrum { z: C64 },

    #[error("probe point {z} is {distance:e} from the contour (safeguard {safeguard:e})")]
    ProbeOnContour {
        z: C64,
        distance: f64,
        safeguard: f64,
    },

    #[error("spectrum of the operator argument is {distance:e} from the contour")]
    SpectrumTouchesContour { distance: f64 },

    #[error("contour not admissible: V0 = {v0} violates the strict bound V0 < d0^2/4 = {bound}")]
    NotAdmissible { v0: f64, bound: f64 },

    #[error("fixed-point iteration stopped after {iterations} iterations (last step {last_step:e})")]
    MaxIterExceeded { iterations: usize, last_step: f64 },

    #[error("no admissible contour in the searched family")]
    NoAdmissibleContour,

    #[error("eigenvalue {eigenvalue} lies {distance:e} from the circle |z - {center}| = {radius}")]
    EigenvalueOnCircle {
        eigenvalue: C64,
        center: C64,
        radius: f64,
        distance: f64,
    },

    #[error("gap condition violated at index {index}: gap {gap} <= 2r = {two_r}")]
    GapConditionViolated { index: usize, gap: f64, two_r: f64 },

    #[error("projection radius {r} does not exceed the root perturbation norm {x_norm}")]
    RadiusTooSmall { r: f64, x_norm: f64 },

    #[error("integration circles around the spectrum overlap")]
    OverlappingCircles,

    #[error("transfer function is numerically singular at {z} (sigma_min = {sigma_min:e})")]
    SingularTransferOnGamma { z: C64, sigma_min: f64 },

    #[error("invalid problem instance: {0}")]
    InvalidInstance(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(&'static str),
}

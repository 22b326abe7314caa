//! Error type shared by all modules. Solver failure modes that a batch run
//! must report (rather than abort on) are first-class variants carrying the
//! data needed for the JSON failure record.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Chart point outside the admissible domain (e.g. too close to a sphere pole).
    #[error("chart domain: {0}")]
    ChartDomain(String),

    /// Randers parameter r must exceed the sup norm of the one-form.
    #[error("randers domain: r = {r} must exceed |theta|_inf = {theta_sup}")]
    RandersDomain { r: f64, theta_sup: f64 },

    /// The Randers correspondence requires a vanishing potential.
    #[error("non-magnetic data: potential is not identically zero (max |V| = {0:.3e})")]
    NonMagnetic(f64),

    /// Winding rounding residual exceeded the corruption threshold.
    #[error("winding residual {0:.3} exceeds 0.1; loop data is corrupt")]
    WindingResidual(f64),

    /// A polyline segment is shorter than twice the snap tolerance.
    #[error("degenerate segment: component {component} segment {segment} shorter than 2*snap")]
    DegenerateSegment { component: usize, segment: usize },

    /// Three or more segments meet within the snap tolerance.
    #[error("triple point within snap tolerance near ({0:.6}, {1:.6})")]
    TriplePoint(f64, f64),

    /// Chamfer offset does not fit the local segment lengths.
    #[error("chamfer eps {eps:.3e} too large for minimum segment length {min_segment:.3e}")]
    EpsTooLarge { eps: f64, min_segment: f64 },

    /// Curve features are below the grid resolution.
    #[error("rasterization failed at grid K = {k}: {reason}")]
    Rasterization { k: usize, reason: String },

    /// Operation requires an embedded multicurve.
    #[error("multicurve is not embedded: {0}")]
    EmbeddedRequired(String),

    /// Operation requires a topological boundary with a valid certificate.
    #[error("not a topological boundary: {0}")]
    NotABoundary(String),

    /// Shooting failed to produce a local free-time minimizer.
    #[error("no local free-time minimizer between the given endpoints")]
    NoLocalMinimizer,

    /// Endpoints are farther apart than the configured injectivity radius.
    #[error("endpoints are {dist:.4} apart, beyond rho_inj = {rho_inj:.4}")]
    TooFarApart { dist: f64, rho_inj: f64 },

    /// Requested energy is outside the valid range of the operation.
    #[error("energy {e} outside valid range ({lo:?}, {hi:?}]")]
    EnergyRange { e: f64, lo: Option<f64>, hi: Option<f64> },

    /// Search at a subcritical energy found no negative-action boundary.
    #[error("no negative-action boundary found at e = {e}; least action seen = {least_action}")]
    NoNegativeCandidate { e: f64, least_action: f64 },

    /// Reports passed to the graph check have mixed energies.
    #[error("reports have mixed energies: {0} vs {1}")]
    MixedEnergy(f64, f64),

    /// Continuation input fails the minimal-boundary validation.
    #[error("input is not a verified minimal boundary: {0}")]
    NotAMinimalBoundary(String),

    /// Minimax input fails the local-minimality probe.
    #[error("input loop is not a waist: {0}")]
    NotAWaist(String),

    /// Orbit-measure statistics require closed Euler-Lagrange orbits.
    #[error("component {component} is not an orbit: energy residual {residual:.3e}")]
    NotAnOrbit { component: usize, residual: f64 },

    /// The one-form is closed, so the Lemma 5.2-style criterion does not apply.
    #[error("one-form is closed (max |d theta| = {0:.3e}); criterion requires d theta != 0")]
    ClosedForm(f64),

    /// Both probe orientations violate the negativity guard.
    #[error("sign guard failed: 2 sqrt(a+b) + f(q) = {0:.6} >= 0 for both orientations")]
    SignGuard(f64),

    /// No waist was located by the census seeds.
    #[error("no waist found: {0}")]
    NoWaistFound(String),

    /// Expression or configuration parse failure.
    #[error("parse error at {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    /// Preset name not recognized.
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),

    /// Invalid argument or state not covered by a dedicated variant.
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

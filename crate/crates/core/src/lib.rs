//! Numerical laboratory for slowly oscillating periodic (SOP) solutions of the
//! delayed negative-feedback equation
//!
//! ```text
//! x'(t) = f(x(t - 1))
//! ```
//!
//! The crate is organised bottom-up:
//!
//! * [`feedback`] builds odd, piecewise-linear feedback functions and checks
//!   the parameter regimes under which multiple SOP solutions exist.
//! * [`dde`] integrates the equation by the method of steps on a uniform grid
//!   aligned with the delay and finds zeros of the solution.
//! * [`return_map`] implements the return map on the cone of nondecreasing
//!   segments, iterates it to fixed points and probes its invariant sets.
//! * [`kaplan_yorke`] handles the planar Hamiltonian reduction for odd `f`
//!   and its period function.
//! * [`scenarios`] wires everything into end-to-end, self-checking runs.
//! * [`io`] writes the text, CSV and SVG artifacts.

pub mod dde;
pub mod error;
pub mod feedback;
pub mod io;
pub mod kaplan_yorke;
pub mod return_map;
pub mod scenarios;

pub use dde::{integrate, Direction, Segment, SolutionTrace, Zero};
pub use error::{Error, Result};
pub use feedback::{
    build_hpp_feedback, build_multiscale, stability_class, validate_params, FeedbackFn,
    HppParams, HprimeParams, StabilityClass, ValidationReport,
};
pub use kaplan_yorke::{hamiltonian, tau, PlanarTrace, TauResult};
pub use return_map::{
    apply_return_map, find_multiple_sops, iterate_to_fixed_point, FixedPointOutcome, MapConfig,
    SopResult, VSetParams,
};
pub use scenarios::ScenarioReport;

//! Quadratic certificates for gradient descent on rank-1 factorization and
//! approximation problems.
//!
//! The crate is organised around four layers: [`zoo`] holds the loss families
//! and their exact GD maps, [`certificate`] evaluates the certificate
//! families and their one-step recursions, [`terminal`] covers the reduced
//! one-dimensional dynamics on the balanced manifold, and [`scan`] drives the
//! sweeps, boundary scans and trajectory batches. [`suite`] bundles the
//! identity checks used by `certlab verify`.

pub mod certificate;
pub mod error;
pub mod rng;
pub mod scan;
pub mod suite;
pub mod terminal;
pub mod zoo;

pub use certificate::{CertKind, Certificate, QuadraticForm, RecursionCoeffs, StateParameter};
pub use error::{Error, Result};
pub use scan::{Cell, Heatmap};
pub use zoo::{Family, Observables, Problem};

/// Version string stamped into every manifest.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Version of the CSV/JSON output schemas.
pub const SCHEMA_VERSION: u32 = 1;

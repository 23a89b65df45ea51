//! Simulation and analysis toolkit for charged nanoparticles in needle Paul traps.
//!
//! The crate is organized around the quantities a needle-trap experiment works
//! with:
//!
//! - [`trap`] — trap drive/geometry, particle and gas-environment data model,
//!   and the quadrupole potential and force.
//! - [`floquet`] — Mathieu-equation machinery: stability parameters,
//!   characteristic exponents (monodromy and series), Floquet coefficients,
//!   secular frequencies and stability maps.
//! - [`dynamics`] — time-domain integration of the driven, damped, thermal
//!   equations of motion and micromotion/macromotion decomposition.
//! - [`libration`] — charge-quadrupole and inertia tensors and the angular
//!   (libration) Mathieu mode.
//! - [`analysis`] — Welch power spectral densities, Lorentzian peak fits,
//!   thermal localization and drag-based size estimates.
//! - [`fitting`] — the trap-frequency-vs-distance forward model and
//!   least-squares estimation of particle charge and DC voltage offset.
//! - [`io`] — CSV and raw-stream readers/writers for all of the above.
//!
//! All internal computation is in SI units; unit conversion belongs at the
//! I/O boundary (see [`constants`]).
//!
//! With the default `parallel` feature, grid scans, ensembles and spectral
//! segment averages run on rayon with deterministic aggregation order;
//! disabling the feature falls back to equivalent sequential loops.

pub mod analysis;
pub mod constants;
pub mod dynamics;
mod error;
pub mod fitting;
pub mod floquet;
pub mod interp;
pub mod io;
pub mod libration;
mod optim;
mod par;
pub mod trap;

pub use error::{Error, Result};
pub use floquet::Axis;

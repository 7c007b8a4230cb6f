//! Numerical laboratory for loop-erased random walks with killing and their
//! Loewner-evolution scaling limit.
//!
//! The crate is organized bottom-up:
//!
//! - [`lattice`] — discrete domains on a square grid: interiors, boundary
//!   edges, slit removal, inner vicinities of the target.
//! - [`solve`] — sparse linear solves for the walk operator `I - (q/4)A`.
//! - [`potential`] — partition functions, hitting fields, Green functions and
//!   the exact discrete identities relating the killed walk to the simple one.
//! - [`sampler`] — exact samplers for the conditioned killed walk, chronological
//!   loop erasure, Laplacian-walk steps, Radon–Nikodym densities and a
//!   tiny-domain enumeration oracle.
//! - [`conformal`] — rectangle-to-half-plane maps via Jacobi elliptic
//!   functions, vertical-slit chains and driving-function extraction under
//!   half-plane-capacity parametrization.
//! - [`drift`] — Poisson-kernel fields on an evolving mesh, massive
//!   corrections, the normalization factor and the drift functional of the
//!   driving SDE, plus Hadamard-formula checks.
//! - [`sim`] — Euler–Maruyama forward simulation of the driving SDE
//!   `dxi = sqrt(2) dB + 2 lambda dt`.
//! - [`rng`] — counter-based reproducible random streams.

pub mod conformal;
pub mod drift;
pub mod lattice;
pub mod potential;
pub mod rng;
pub mod sampler;
pub mod sim;
pub mod solve;

//! Cascade fragmentation kinetics.
//!
//! Fragments of a material sample split repeatedly into smaller splinters.
//! With a subdivision law `P(x)` for the daughter-to-parent size fraction
//! and decay rate `μ·r` per fragment (forced by volume conservation,
//! `μ = ∫₀¹ P(x)x³dx`), the mean number density `n(r,t)` obeys
//!
//! ```text
//! dn(r,t)/dt = ∫ᵣ^∞ P(r/ρ) n(ρ,t) dρ - μ·r·n(r,t)
//! ```
//!
//! This crate provides, for that system:
//!
//! - [`kernel`]: subdivision laws (power-law and tabulated) and their Mellin
//!   moments `p(s)`;
//! - [`grid`]: logarithmic size grids, densities, and numeric Mellin
//!   transforms (count, mean size, surface, volume observables);
//! - [`pde`]: a deterministic method-of-lines RK4 integrator with explicit
//!   accounting of the volume leaking below the resolved grid;
//! - [`asympt`]: the closed-form moment laws (linear surface growth, `t³`
//!   count growth, `1/t` mean-size decay) for theory-vs-simulation checks;
//! - [`limitdist`]: the gamma-type limit law of rescaled sizes, its Mellin
//!   transform, and distance/shape-recovery diagnostics;
//! - [`mc`]: an event-driven branching-process sampler whose ensemble mean
//!   realizes the same kinetic equation, as an independent stochastic
//!   cross-check;
//! - [`fit`]: small least-squares helpers for trajectory diagnostics.
//!
//! Everything is deterministic: solver runs are pure fixed-step arithmetic
//! and Monte Carlo replicas own counter-based RNG streams derived from
//! `(seed, replica)`.

pub mod asympt;
pub mod error;
pub mod fit;
pub mod grid;
pub mod kernel;
pub mod limitdist;
pub mod mc;
pub mod pde;

pub use error::{Error, Result};
pub use grid::{init_density, DensityState, InitialCondition, Observables, SizeGrid};
pub use kernel::{Kernel, MellinMoments};
pub use limitdist::{
    distance_to_limit, fit_alpha, limit_density, limit_mellin_f, log_gamma, rescale, LimitDistance,
    LimitLaw, RescaledDensity,
};
pub use pde::{run, SimulationConfig, Trajectory};

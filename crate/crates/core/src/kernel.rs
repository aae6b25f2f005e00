//! Subdivision kernels and their Mellin moments.
//!
//! A kernel `P(x)` on `[0, 1]` gives the production-rate density of daughter
//! fragments with size fraction `x = daughter/parent` per decay of the
//! parent, per unit time. Every analytic quantity downstream is driven by
//! the moments
//!
//! ```text
//! p(s) = ∫₀¹ x^(s-1) P(x) dx
//! ```
//!
//! in particular the decay-intensity coefficient `μ = p(4)`, which is forced
//! by volume conservation: a fragment of size `r` decays at rate `μ·r`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A subdivision law `P(x)` on the unit interval.
///
/// Deserialized kernels must be passed through [`Kernel::validate`] before
/// use; the provided constructors do this automatically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    /// `P(x) = C·x^α` with `α > 0`, `C > 0`.
    PowerLaw {
        alpha: f64,
        #[serde(rename = "C")]
        coeff: f64,
    },
    /// Piecewise-linear interpolation of `(nodes, values)` with
    /// `nodes[0] = 0`, `nodes[last] = 1`, values ≥ 0.
    Tabulated { nodes: Vec<f64>, values: Vec<f64> },
}

impl Kernel {
    /// Power-law kernel `C·x^α`.
    pub fn power_law(alpha: f64, coeff: f64) -> Result<Self> {
        let k = Kernel::PowerLaw { alpha, coeff };
        k.validate()?;
        Ok(k)
    }

    /// Tabulated kernel, interpolated piecewise-linearly between the nodes.
    pub fn tabulated(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let k = Kernel::Tabulated { nodes, values };
        k.validate()?;
        Ok(k)
    }

    /// Check the structural invariants of the kernel.
    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::PowerLaw { alpha, coeff } => {
                if !alpha.is_finite() || *alpha <= 0.0 {
                    return Err(Error::config(format!(
                        "power-law exponent alpha must be > 0, got {alpha}"
                    )));
                }
                if !coeff.is_finite() || *coeff <= 0.0 {
                    return Err(Error::config(format!(
                        "power-law coefficient C must be > 0, got {coeff}"
                    )));
                }
                Ok(())
            }
            Kernel::Tabulated { nodes, values } => {
                if nodes.len() < 2 {
                    return Err(Error::config("tabulated kernel needs at least 2 nodes"));
                }
                if nodes.len() != values.len() {
                    return Err(Error::config(format!(
                        "tabulated kernel has {} nodes but {} values",
                        nodes.len(),
                        values.len()
                    )));
                }
                if nodes[0] != 0.0 {
                    return Err(Error::config("tabulated kernel nodes must start at 0"));
                }
                if *nodes.last().unwrap() != 1.0 {
                    return Err(Error::config("tabulated kernel nodes must end at 1"));
                }
                if nodes.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::config(
                        "tabulated kernel nodes must be strictly increasing",
                    ));
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::config(
                        "tabulated kernel values must be finite and nonnegative",
                    ));
                }
                Ok(())
            }
        }
    }

    /// Evaluate `P(x)` for `x ∈ [0, 1]`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::domain(format!(
                "kernel argument x = {x} outside [0, 1]"
            )));
        }
        Ok(match self {
            Kernel::PowerLaw { alpha, coeff } => coeff * x.powf(*alpha),
            Kernel::Tabulated { nodes, values } => interp_linear(nodes, values, x),
        })
    }

    /// Mellin moment `p(s) = ∫₀¹ x^(s-1) P(x) dx` for `s ≥ 1`.
    ///
    /// Power-law kernels use the closed form `C/(α+s)`; tabulated kernels are
    /// integrated exactly segment by segment against the monomial weight.
    pub fn mellin_p(&self, s: f64) -> Result<f64> {
        if !s.is_finite() || s < 1.0 {
            return Err(Error::domain(format!(
                "Mellin moment order s = {s} below the supported range s >= 1"
            )));
        }
        self.partial_mellin_p(s, 1.0)
    }

    /// Partial moment `∫₀^xᵤ x^(s-1) P(x) dx`, exact for both kernel kinds.
    ///
    /// Used by the solver to account for the volume flux into sizes that fall
    /// below the resolved grid.
    pub fn partial_mellin_p(&self, s: f64, x_upper: f64) -> Result<f64> {
        if !s.is_finite() || s < 1.0 {
            return Err(Error::domain(format!(
                "Mellin moment order s = {s} below the supported range s >= 1"
            )));
        }
        if !(0.0..=1.0).contains(&x_upper) {
            return Err(Error::domain(format!(
                "partial-moment bound {x_upper} outside [0, 1]"
            )));
        }
        match self {
            Kernel::PowerLaw { alpha, coeff } => Ok(coeff * x_upper.powf(alpha + s) / (alpha + s)),
            Kernel::Tabulated { nodes, values } => {
                let mut acc = 0.0;
                for i in 0..nodes.len() - 1 {
                    let a = nodes[i];
                    if a >= x_upper {
                        break;
                    }
                    let b = nodes[i + 1].min(x_upper);
                    // P(x) = c0 + c1·x on this segment.
                    let c1 = (values[i + 1] - values[i]) / (nodes[i + 1] - nodes[i]);
                    let c0 = values[i] - c1 * nodes[i];
                    acc += c0 * (b.powf(s) - a.powf(s)) / s
                        + c1 * (b.powf(s + 1.0) - a.powf(s + 1.0)) / (s + 1.0);
                }
                Ok(acc)
            }
        }
    }

    /// Decay-intensity coefficient `μ = p(4)`, so that a fragment of size `r`
    /// decays at rate `μ·r`.
    pub fn mu(&self) -> Result<f64> {
        self.mellin_p(4.0)
    }

    /// Mean number of daughters per decay, `p(1)/p(4)`.
    ///
    /// Always > 1 for a nonzero kernel since `p` is strictly decreasing.
    pub fn splinter_mean_count(&self) -> Result<f64> {
        let p4 = self.mellin_p(4.0)?;
        if p4 <= 0.0 {
            return Err(Error::ZeroKernel);
        }
        Ok(self.mellin_p(1.0)? / p4)
    }
}

/// Cached Mellin-moment evaluator for a kernel.
///
/// Immutable after construction; cheap to share across threads.
#[derive(Debug, Clone)]
pub struct MellinMoments {
    kernel: Kernel,
    mu: f64,
}

impl MellinMoments {
    pub fn new(kernel: Kernel) -> Result<Self> {
        kernel.validate()?;
        let mu = kernel.mu()?;
        Ok(MellinMoments { kernel, mu })
    }

    /// `p(s)` for `s ≥ 1`.
    pub fn p(&self, s: f64) -> Result<f64> {
        self.kernel.mellin_p(s)
    }

    /// Cached `μ = p(4)`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }
}

fn interp_linear(nodes: &[f64], values: &[f64], x: f64) -> f64 {
    // partition_point never returns 0 here because nodes[0] = 0 <= x.
    let hi = nodes.partition_point(|&n| n <= x);
    if hi == nodes.len() {
        return *values.last().unwrap();
    }
    let lo = hi - 1;
    let t = (x - nodes[lo]) / (nodes[hi] - nodes[lo]);
    values[lo] + t * (values[hi] - values[lo])
}

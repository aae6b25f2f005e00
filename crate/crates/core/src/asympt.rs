//! Closed-form moment laws for comparison against simulation output.
//!
//! The Mellin moments of the number density obey the chain
//! `dM(s)/dt = (p(s) - μ)·M(s+1)` with `M(4) = V` constant, which yields an
//! exact affine law for the surface moment and leading-order monomials for
//! the lower moments:
//!
//! ```text
//! M(3,t) = M(3,0) + V(p₃-p₄)t
//! M(2,t) ~ ½ V(p₃-p₄)(p₂-p₄) t²
//! M(1,t) ~ ⅙ V(p₃-p₄)(p₂-p₄)(p₁-p₄) t³
//! λ(t)   ~ 3/((p₁-p₄)·t)
//! ```
//!
//! These are exposed as pure functions over `(t, constants)` rather than
//! baked into the solver, so simulation-vs-theory comparison is a separate,
//! testable step. The power-law specializations (`p(s) = C/(α+s)`) accept
//! `α = 0` for oracle cross-checks even though kernels require `α > 0`.

use crate::error::{Error, Result};
use crate::kernel::Kernel;

/// Kernel-derived constants that drive every moment law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticLaws {
    p1: f64,
    p2: f64,
    p3: f64,
    /// `p(4) = μ`.
    p4: f64,
    volume: f64,
    m3_initial: f64,
}

impl AsymptoticLaws {
    /// Build from explicit moments `p(1) > p(2) > p(3) > p(4) > 0`.
    pub fn new(p: [f64; 4], volume: f64, m3_initial: f64) -> Result<Self> {
        let [p1, p2, p3, p4] = p;
        if !(p1 > p2 && p2 > p3 && p3 > p4 && p4 > 0.0) {
            return Err(Error::config(format!(
                "Mellin moments must satisfy p(1) > p(2) > p(3) > p(4) > 0, got {p:?}"
            )));
        }
        if !volume.is_finite() || volume <= 0.0 {
            return Err(Error::config(format!(
                "volume must be positive, got {volume}"
            )));
        }
        if !m3_initial.is_finite() || m3_initial < 0.0 {
            return Err(Error::config(format!(
                "initial surface moment must be >= 0, got {m3_initial}"
            )));
        }
        Ok(AsymptoticLaws {
            p1,
            p2,
            p3,
            p4,
            volume,
            m3_initial,
        })
    }

    /// Derive the constants from a kernel.
    pub fn from_kernel(kernel: &Kernel, volume: f64, m3_initial: f64) -> Result<Self> {
        Self::new(
            [
                kernel.mellin_p(1.0)?,
                kernel.mellin_p(2.0)?,
                kernel.mellin_p(3.0)?,
                kernel.mellin_p(4.0)?,
            ],
            volume,
            m3_initial,
        )
    }

    /// Power-law moments `p(s) = C/(α+s)`. The shape guard is relaxed to
    /// `α ≥ 0` here so the integer-free closed forms can serve as oracles.
    pub fn power_law(alpha: f64, coeff: f64, volume: f64, m3_initial: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::domain(format!("alpha must be >= 0, got {alpha}")));
        }
        if !coeff.is_finite() || coeff <= 0.0 {
            return Err(Error::domain(format!(
                "coefficient must be > 0, got {coeff}"
            )));
        }
        Self::new(
            [
                coeff / (alpha + 1.0),
                coeff / (alpha + 2.0),
                coeff / (alpha + 3.0),
                coeff / (alpha + 4.0),
            ],
            volume,
            m3_initial,
        )
    }

    pub fn p(&self, s: u8) -> f64 {
        match s {
            1 => self.p1,
            2 => self.p2,
            3 => self.p3,
            4 => self.p4,
            _ => panic!("moment order {s} out of range 1..=4"),
        }
    }

    pub fn mu(&self) -> f64 {
        self.p4
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Exact affine surface moment `M(3,t) = M(3,0) + V(p₃-p₄)t`.
    pub fn m3_exact(&self, t: f64) -> Result<f64> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::domain(format!("time must be >= 0, got {t}")));
        }
        Ok(self.m3_initial + self.volume * (self.p3 - self.p4) * t)
    }

    /// Slope of the exact surface law, `V(p₃-p₄)`.
    pub fn m3_slope(&self) -> f64 {
        self.volume * (self.p3 - self.p4)
    }

    /// Leading-order `M(2,t) ~ ½ V(p₃-p₄)(p₂-p₄) t²`.
    pub fn m2_asympt(&self, t: f64) -> Result<f64> {
        check_positive_time(t)?;
        Ok(0.5 * self.volume * (self.p3 - self.p4) * (self.p2 - self.p4) * t * t)
    }

    /// Leading-order `M(1,t) ~ ⅙ V(p₃-p₄)(p₂-p₄)(p₁-p₄) t³`.
    pub fn m1_asympt(&self, t: f64) -> Result<f64> {
        check_positive_time(t)?;
        Ok(self.volume
            * (self.p3 - self.p4)
            * (self.p2 - self.p4)
            * (self.p1 - self.p4)
            * t
            * t
            * t
            / 6.0)
    }

    /// Asymptotic mean size `λ(t) ~ 3/((p₁-p₄)·t)`.
    pub fn lambda_asympt(&self, t: f64) -> Result<f64> {
        check_positive_time(t)?;
        Ok(3.0 / ((self.p1 - self.p4) * t))
    }
}

fn check_positive_time(t: f64) -> Result<()> {
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::domain(format!("time must be > 0, got {t}")));
    }
    Ok(())
}

fn check_power_law_args(t: f64, alpha: f64, coeff: f64) -> Result<()> {
    check_positive_time(t)?;
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::domain(format!("alpha must be >= 0, got {alpha}")));
    }
    if !coeff.is_finite() || coeff <= 0.0 {
        return Err(Error::domain(format!(
            "coefficient must be > 0, got {coeff}"
        )));
    }
    Ok(())
}

/// Power-law surface area `S(t) ~ C·V·t / ((α+3)(α+4))`.
pub fn surface_asympt(t: f64, alpha: f64, coeff: f64, volume: f64) -> Result<f64> {
    check_power_law_args(t, alpha, coeff)?;
    if !volume.is_finite() || volume <= 0.0 {
        return Err(Error::domain(format!("volume must be > 0, got {volume}")));
    }
    Ok(coeff * volume * t / ((alpha + 3.0) * (alpha + 4.0)))
}

/// Power-law mean size `λ(t) ~ (α+1)(α+4) / (C·t)`.
pub fn lambda_powerlaw(t: f64, alpha: f64, coeff: f64) -> Result<f64> {
    check_power_law_args(t, alpha, coeff)?;
    Ok((alpha + 1.0) * (alpha + 4.0) / (coeff * t))
}

/// Power-law fragment count
/// `N(t) ~ C³·V·t³ / ((α+4)³(α+1)(α+2)(α+3))`.
pub fn number_asympt(t: f64, alpha: f64, coeff: f64, volume: f64) -> Result<f64> {
    check_power_law_args(t, alpha, coeff)?;
    if !volume.is_finite() || volume <= 0.0 {
        return Err(Error::domain(format!("volume must be > 0, got {volume}")));
    }
    let a4 = alpha + 4.0;
    Ok(coeff.powi(3) * volume * t.powi(3)
        / (a4.powi(3) * (alpha + 1.0) * (alpha + 2.0) * (alpha + 3.0)))
}

//! Logarithmic size grids, number densities on them, and numeric Mellin
//! transforms.
//!
//! Fragment sizes migrate toward zero as fragmentation proceeds (the mean
//! size decays like `1/t`), so the size axis is discretized geometrically:
//! a log grid covers several decades at uniform relative resolution. All
//! grid integrals use trapezoid weights built from the exact node spacings.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound of the guarded Mellin-order range for numeric transforms.
pub const MELLIN_S_MIN: f64 = 0.5;
/// Upper bound of the guarded Mellin-order range for numeric transforms.
pub const MELLIN_S_MAX: f64 = 8.0;

/// Geometrically spaced size grid with cached trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl SizeGrid {
    /// Build a grid of `n ≥ 8` geometrically spaced nodes with endpoints
    /// exactly `r_min` and `r_max`.
    pub fn logarithmic(r_min: f64, r_max: f64, n: usize) -> Result<Self> {
        if !(r_min.is_finite() && r_max.is_finite()) || r_min <= 0.0 {
            return Err(Error::config(format!(
                "grid bounds must be finite with r_min > 0, got [{r_min}, {r_max}]"
            )));
        }
        if r_max <= r_min {
            return Err(Error::config(format!(
                "grid upper bound {r_max} must exceed lower bound {r_min}"
            )));
        }
        if n < 8 {
            return Err(Error::config(format!(
                "grid needs at least 8 nodes, got {n}"
            )));
        }
        let log_min = r_min.ln();
        let log_max = r_max.ln();
        let step = (log_max - log_min) / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| (log_min + i as f64 * step).exp()).collect();
        nodes[0] = r_min;
        nodes[n - 1] = r_max;
        Self::from_nodes(nodes)
    }

    /// Build a grid from explicit nodes, checking geometric spacing to a
    /// relative tolerance of 1e-12.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 8 {
            return Err(Error::config(format!(
                "grid needs at least 8 nodes, got {}",
                nodes.len()
            )));
        }
        if nodes[0] <= 0.0 || nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config(
                "grid nodes must be positive and strictly increasing",
            ));
        }
        let ratio = nodes[1] / nodes[0];
        for w in nodes.windows(2) {
            let q = w[1] / w[0];
            if (q - ratio).abs() > 1e-12 * ratio {
                return Err(Error::config(
                    "grid nodes are not geometrically spaced to within 1e-12",
                ));
            }
        }
        let weights = trapezoid_weights(&nodes);
        Ok(SizeGrid { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Trapezoid quadrature weights matching the node spacings.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn r_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn r_max(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Common ratio of the geometric progression.
    pub fn ratio(&self) -> f64 {
        self.nodes[1] / self.nodes[0]
    }
}

fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    w[0] = 0.5 * (nodes[1] - nodes[0]);
    for i in 1..n - 1 {
        w[i] = 0.5 * (nodes[i + 1] - nodes[i - 1]);
    }
    w[n - 1] = 0.5 * (nodes[n - 1] - nodes[n - 2]);
    w
}

/// Number density `n(r, t)` sampled on a [`SizeGrid`].
///
/// `values[i]` is the density per unit length at `nodes[i]`; all values are
/// finite and nonnegative. A value type: operations are pure and states can
/// be used from multiple threads independently.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    grid: Arc<SizeGrid>,
    values: Vec<f64>,
    time: f64,
}

impl DensityState {
    pub fn new(grid: Arc<SizeGrid>, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::config(format!(
                "density has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config(
                "density values must be finite and nonnegative",
            ));
        }
        if !time.is_finite() || time < 0.0 {
            return Err(Error::config(format!(
                "density time must be >= 0, got {time}"
            )));
        }
        Ok(DensityState { grid, values, time })
    }

    pub fn grid(&self) -> &SizeGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> Arc<SizeGrid> {
        Arc::clone(&self.grid)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Numeric Mellin transform `M(s) = ∫ r^(s-1) n(r) dr` by trapezoid
    /// quadrature over the grid. `s` is guarded to `[0.5, 8]`, the range the
    /// moment analysis uses.
    pub fn mellin_numeric(&self, s: f64) -> Result<f64> {
        if !(MELLIN_S_MIN..=MELLIN_S_MAX).contains(&s) {
            return Err(Error::domain(format!(
                "Mellin order s = {s} outside the guarded range [{MELLIN_S_MIN}, {MELLIN_S_MAX}]"
            )));
        }
        let mut acc = 0.0;
        for ((&r, &w), &v) in self
            .grid
            .nodes()
            .iter()
            .zip(self.grid.weights())
            .zip(&self.values)
        {
            acc += w * r.powf(s - 1.0) * v;
        }
        Ok(acc)
    }

    /// Physical moments of the density: count, mean size, surface, volume.
    pub fn observables(&self) -> Observables {
        let count = self.mellin_numeric(1.0).expect("s = 1 is in range");
        let m2 = self.mellin_numeric(2.0).expect("s = 2 is in range");
        let surface = self.mellin_numeric(3.0).expect("s = 3 is in range");
        let volume = self.mellin_numeric(4.0).expect("s = 4 is in range");
        let mean_size = if count > 0.0 { m2 / count } else { 0.0 };
        Observables {
            time: self.time,
            count,
            mean_size,
            surface,
            volume,
        }
    }

    /// Integrator-internal constructor: skips the nonnegativity check so
    /// that unclipped states (which may hold small negative values) can
    /// still be inspected.
    pub(crate) fn new_unchecked(grid: Arc<SizeGrid>, values: Vec<f64>, time: f64) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        DensityState { grid, values, time }
    }
}

/// Physical moments of a density at one instant: `count = M(1)`,
/// `mean_size = M(2)/M(1)`, `surface = M(3)`, `volume = M(4)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    #[serde(rename = "t")]
    pub time: f64,
    #[serde(rename = "N")]
    pub count: f64,
    #[serde(rename = "lambda")]
    pub mean_size: f64,
    #[serde(rename = "S")]
    pub surface: f64,
    #[serde(rename = "V")]
    pub volume: f64,
}

/// Shape of the initial number density; scaled to a target volume by
/// [`init_density`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitialCondition {
    /// Gaussian in `ln r` centered at `r0` with log-width `width`; a
    /// grid-representable stand-in for a monodisperse sample.
    NarrowBump {
        r0: f64,
        #[serde(default = "default_bump_width")]
        width: f64,
    },
    /// `n(r) ∝ r^alpha · e^(-(alpha+1)·r)`, the shape of the limit law.
    GammaLike { alpha: f64 },
    /// Piecewise-linear density through `(r, n)` points, zero outside them.
    Table { points: Vec<(f64, f64)> },
}

fn default_bump_width() -> f64 {
    0.02
}

/// Build a density with the requested shape, scaled so that its numeric
/// volume moment `M(4)` equals `v_target` to relative 1e-10.
pub fn init_density(
    spec: &InitialCondition,
    grid: Arc<SizeGrid>,
    v_target: f64,
) -> Result<DensityState> {
    if !v_target.is_finite() || v_target <= 0.0 {
        return Err(Error::config(format!(
            "target volume must be positive, got {v_target}"
        )));
    }
    let shape: Vec<f64> = match spec {
        InitialCondition::NarrowBump { r0, width } => {
            if !width.is_finite() || *width <= 0.0 {
                return Err(Error::config(format!(
                    "bump width must be positive, got {width}"
                )));
            }
            // The bump must be resolvable and leave room for decay products.
            let lo = grid.r_min() * 10.0;
            let hi = grid.r_max() / 10.0;
            if !(*r0 >= lo && *r0 <= hi) {
                return Err(Error::config(format!(
                    "bump center r0 = {r0} outside the resolvable range [{lo}, {hi}]"
                )));
            }
            grid.nodes()
                .iter()
                .map(|&r| {
                    let z = (r / r0).ln() / width;
                    (-0.5 * z * z).exp()
                })
                .collect()
        }
        InitialCondition::GammaLike { alpha } => {
            if !alpha.is_finite() || *alpha < 0.0 {
                return Err(Error::config(format!(
                    "gamma-like shape exponent must be >= 0, got {alpha}"
                )));
            }
            grid.nodes()
                .iter()
                .map(|&r| r.powf(*alpha) * (-(alpha + 1.0) * r).exp())
                .collect()
        }
        InitialCondition::Table { points } => {
            if points.len() < 2 {
                return Err(Error::config("tabulated density needs at least 2 points"));
            }
            if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(Error::config("tabulated density radii must be increasing"));
            }
            if points.iter().any(|(r, v)| *r <= 0.0 || *v < 0.0) {
                return Err(Error::config(
                    "tabulated density needs positive radii and nonnegative values",
                ));
            }
            grid.nodes()
                .iter()
                .map(|&r| table_interp(points, r))
                .collect()
        }
    };
    let raw = DensityState::new(Arc::clone(&grid), shape, 0.0)?;
    let m4 = raw.mellin_numeric(4.0)?;
    if m4 <= 0.0 {
        return Err(Error::config(
            "initial density has zero volume on the grid; shape not resolvable",
        ));
    }
    let scale = v_target / m4;
    let values = raw.values().iter().map(|v| v * scale).collect();
    DensityState::new(grid, values, 0.0)
}

fn table_interp(points: &[(f64, f64)], r: f64) -> f64 {
    if r < points[0].0 || r > points[points.len() - 1].0 {
        return 0.0;
    }
    let hi = points.partition_point(|&(x, _)| x <= r);
    if hi == points.len() {
        return points[points.len() - 1].1;
    }
    let lo = hi - 1;
    let (x0, y0) = points[lo];
    let (x1, y1) = points[hi];
    y0 + (y1 - y0) * (r - x0) / (x1 - x0)
}

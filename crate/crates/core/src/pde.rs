//! Method-of-lines integrator for the fragmentation kinetic equation.
//!
//! The number density evolves by
//!
//! ```text
//! dn(r,t)/dt = ∫ᵣ^∞ P(r/ρ) n(ρ,t) dρ  -  μ·r·n(r,t)
//! ```
//!
//! gain from decays of larger fragments, loss from decays of size-r
//! fragments. The integral is truncated at the top of the grid (fragments
//! never grow, and initial data sits well below `r_max`) and the volume flux
//! past the bottom of the grid is tracked explicitly as `volume_lost`, so
//! the conservation check `M(4,t) + V_lost(t) = M(4,0)` stays meaningful on
//! a finite grid.
//!
//! Time stepping is classical fixed-step RK4 with `dt = safety/(μ·r_max)`;
//! the loss term sets the stiffest rate on the grid. Adaptive stepping is
//! deliberately avoided: a run must be deterministic, byte for byte.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{init_density, DensityState, InitialCondition, Observables, SizeGrid};
use crate::kernel::Kernel;

/// Full description of one deterministic solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub kernel: Kernel,
    pub grid: GridConfig,
    pub initial: InitialCondition,
    /// Target volume `M(4, 0)` of the initial density.
    pub volume: f64,
    pub t_end: f64,
    /// Times at which observables (and snapshots) are emitted; strictly
    /// increasing, within `[0, t_end]`. Empty means `{0, t_end}`.
    #[serde(default)]
    pub sample_times: Vec<f64>,
    /// Step-size safety factor in `dt = safety/(μ·r_max)`.
    #[serde(default = "default_safety")]
    pub safety: f64,
    /// Clip negative density values after each step (on by default).
    #[serde(default = "default_true")]
    pub clip: bool,
    /// Keep a density snapshot at every sample time.
    #[serde(default = "default_true")]
    pub store_snapshots: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub nodes: usize,
}

fn default_safety() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !self.volume.is_finite() || self.volume <= 0.0 {
            return Err(Error::config(format!(
                "target volume must be positive, got {}",
                self.volume
            )));
        }
        if !self.t_end.is_finite() || self.t_end < 0.0 {
            return Err(Error::config(format!(
                "end time must be >= 0, got {}",
                self.t_end
            )));
        }
        if !(0.0 < self.safety && self.safety <= 1.0) {
            return Err(Error::config(format!(
                "safety factor must lie in (0, 1], got {}",
                self.safety
            )));
        }
        if self.sample_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("sample times must be strictly increasing"));
        }
        if self
            .sample_times
            .iter()
            .any(|&t| !t.is_finite() || t < 0.0 || t > self.t_end)
        {
            return Err(Error::config(format!(
                "sample times must lie within [0, {}]",
                self.t_end
            )));
        }
        Ok(())
    }

    /// Effective sample times: the configured list, or `{0, t_end}`.
    fn effective_sample_times(&self) -> Vec<f64> {
        if self.sample_times.is_empty() {
            if self.t_end > 0.0 {
                vec![0.0, self.t_end]
            } else {
                vec![0.0]
            }
        } else {
            self.sample_times.clone()
        }
    }
}

/// One emitted sample of a solver run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    #[serde(flatten)]
    pub observables: Observables,
    /// Cumulative volume carried below `r_min` by sub-grid splinters.
    #[serde(rename = "V_lost")]
    pub volume_lost: f64,
    /// Cumulative fragment count removed by nonnegativity clipping.
    pub clipped: f64,
}

/// Time series of observables plus optional density snapshots.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    /// One snapshot per sample time when requested, otherwise empty.
    pub snapshots: Vec<DensityState>,
    /// Number of RK4 steps taken.
    pub steps: usize,
    /// Fixed step size used.
    pub dt: f64,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.observables.time).collect()
    }

    pub fn final_point(&self) -> &TrajectoryPoint {
        self.points
            .last()
            .expect("trajectory has at least one point")
    }
}

/// Right-hand side of the semi-discrete system: the gain integral over the
/// nodes above each target node, minus the loss `μ·r·n`.
///
/// The gain is integrated on the uniform log grid by the trapezoid rule
/// with Euler-Maclaurin endpoint corrections. Plain trapezoid carries an
/// O(h²) error from the hard cutoff at the target node that accumulates as
/// a one-signed volume drift; the endpoint correction removes it (measured
/// conservation defect per step drops below 1e-8·V at 512 nodes over four
/// decades).
pub fn rhs(state: &DensityState, kernel: &Kernel) -> Result<Vec<f64>> {
    let ws = Workspace::new(state.grid(), kernel)?;
    let mut out = vec![0.0; state.values().len()];
    let mut scratch = vec![0.0; state.values().len()];
    ws.rhs_into(state.values(), &mut out, &mut scratch);
    Ok(out)
}

/// One classical RK4 step of length `dt`, clipping negative values when
/// `clip` is set. Returns the advanced state and the fragment count removed
/// by clipping.
pub fn step_rk4(
    state: &DensityState,
    dt: f64,
    kernel: &Kernel,
    clip: bool,
) -> Result<(DensityState, f64)> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::domain(format!(
            "step size must be positive, got {dt}"
        )));
    }
    let ws = Workspace::new(state.grid(), kernel)?;
    let max_dt = ws.max_dt();
    if dt > max_dt * (1.0 + 1e-12) {
        return Err(Error::StepSize { dt, max_dt });
    }
    let mut stepper = Stepper::new(state.grid().len());
    let mut values = state.values().to_vec();
    let mut v_lost = 0.0;
    let clipped = stepper.advance(&ws, &mut values, &mut v_lost, dt, clip);
    let next = DensityState::new_unchecked(state.grid_arc(), values, state.time() + dt);
    Ok((next, clipped))
}

/// Rate at which fragment volume crosses below `r_min`:
/// `Σⱼ wⱼ nⱼ ∫₀^(r_min) P(ρ/rⱼ) ρ³ dρ`, with the inner integral in closed
/// form per kernel.
pub fn subgrid_loss_rate(state: &DensityState, kernel: &Kernel) -> Result<f64> {
    let ws = Workspace::new(state.grid(), kernel)?;
    Ok(ws.leak_rate(state.values()))
}

/// Integrate a configured run from `t = 0` to `t_end`, emitting observables
/// at the sample times by linear interpolation between steps.
///
/// Deterministic: identical configs yield byte-identical trajectories.
pub fn run(config: &SimulationConfig) -> Result<Trajectory> {
    config.validate()?;
    let grid = Arc::new(SizeGrid::logarithmic(
        config.grid.r_min,
        config.grid.r_max,
        config.grid.nodes,
    )?);
    let state0 = init_density(&config.initial, Arc::clone(&grid), config.volume)?;
    let ws = Workspace::new(&grid, &config.kernel)?;

    let sample_times = config.effective_sample_times();
    // A zero kernel has no dynamics at all: dt would be infinite and every
    // sample equals the initial state.
    let dt = config.safety * ws.max_dt();
    let frozen = !dt.is_finite();

    let mut points: Vec<TrajectoryPoint> = Vec::with_capacity(sample_times.len());
    let mut snapshots: Vec<DensityState> = Vec::new();
    let mut emit = |time: f64, values: &[f64], v_lost: f64, clipped: f64| {
        let snap = DensityState::new_unchecked(Arc::clone(&grid), values.to_vec(), time);
        points.push(TrajectoryPoint {
            observables: snap.observables(),
            volume_lost: v_lost,
            clipped,
        });
        if config.store_snapshots {
            snapshots.push(snap);
        }
    };

    let mut values = state0.values().to_vec();
    let mut v_lost = 0.0;
    let mut clipped_total = 0.0;
    let mut next_sample = 0;

    // Samples at t = 0 come straight from the initial state.
    while next_sample < sample_times.len() && (sample_times[next_sample] <= 0.0 || frozen) {
        emit(sample_times[next_sample], &values, v_lost, clipped_total);
        next_sample += 1;
    }

    let mut stepper = Stepper::new(grid.len());
    let mut prev_values = vec![0.0; grid.len()];
    let mut step = 0usize;

    while next_sample < sample_times.len() {
        let t_prev = step as f64 * dt;
        let t_next = (step + 1) as f64 * dt;
        prev_values.copy_from_slice(&values);
        let v_lost_prev = v_lost;
        let clipped_prev = clipped_total;

        clipped_total += stepper.advance(&ws, &mut values, &mut v_lost, dt, config.clip);
        if !v_lost.is_finite() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerics { step, time: t_next });
        }

        while next_sample < sample_times.len() && sample_times[next_sample] <= t_next {
            let s = sample_times[next_sample];
            let theta = ((s - t_prev) / dt).clamp(0.0, 1.0);
            let interp: Vec<f64> = prev_values
                .iter()
                .zip(&values)
                .map(|(a, b)| a + theta * (b - a))
                .collect();
            emit(
                s,
                &interp,
                v_lost_prev + theta * (v_lost - v_lost_prev),
                clipped_prev + theta * (clipped_total - clipped_prev),
            );
            next_sample += 1;
        }
        step += 1;
    }

    Ok(Trajectory {
        points,
        snapshots,
        steps: step,
        dt,
    })
}

/// Precomputed tables for one (grid, kernel) pair.
///
/// The power-law kernel is separable, `P(r/ρ) = C·r^α·ρ^(-α)`, so its gain
/// integral collapses to suffix sums over a single integrand and the whole
/// right-hand side is O(n). Tabulated kernels take the direct O(n²) path.
///
/// Gain integrals run in the log variable `u = ln ρ`, where the grid is
/// uniform: `∫ P(r/ρ)n(ρ)dρ = ∫ P(r/e^u)·n(e^u)·e^u du`. The trapezoid rule
/// there is spectrally accurate for integrands that decay at both ends; the
/// cutoff at the target node is handled by Euler-Maclaurin endpoint
/// corrections `±(h²/12)·G'` with one-sided finite-difference slopes.
struct Workspace<'a> {
    grid: &'a SizeGrid,
    kernel: &'a Kernel,
    mu: f64,
    /// Uniform spacing of the grid in `ln r`.
    log_h: f64,
    power: Option<PowerTables>,
    /// Per-node coefficients of the sub-grid volume leak rate.
    leak: Vec<f64>,
}

struct PowerTables {
    coeff: f64,
    r_alpha: Vec<f64>,
    /// `r^(1-α)`: the log-space gain integrand is `r^(1-α)·n`.
    r_gain: Vec<f64>,
}

/// Third-order one-sided slope at the first of four equally spaced samples.
#[inline]
fn forward_slope(g0: f64, g1: f64, g2: f64, g3: f64, h: f64) -> f64 {
    (-11.0 * g0 + 18.0 * g1 - 9.0 * g2 + 2.0 * g3) / (6.0 * h)
}

impl<'a> Workspace<'a> {
    fn new(grid: &'a SizeGrid, kernel: &'a Kernel) -> Result<Self> {
        kernel.validate()?;
        let mu = kernel.mu()?;
        let power = match kernel {
            Kernel::PowerLaw { alpha, coeff } => Some(PowerTables {
                coeff: *coeff,
                r_alpha: grid.nodes().iter().map(|r| r.powf(*alpha)).collect(),
                r_gain: grid.nodes().iter().map(|r| r.powf(1.0 - alpha)).collect(),
            }),
            Kernel::Tabulated { .. } => None,
        };
        let log_h = grid.ratio().ln();
        let r_min = grid.r_min();
        let mut leak = Vec::with_capacity(grid.len());
        for (&r, &w) in grid.nodes().iter().zip(grid.weights()) {
            // ∫₀^(r_min) P(ρ/r) ρ³ dρ = r⁴ · ∫₀^(r_min/r) P(x) x³ dx
            let inner = r.powi(4) * kernel.partial_mellin_p(4.0, r_min / r)?;
            leak.push(w * inner);
        }
        Ok(Workspace {
            grid,
            kernel,
            mu,
            log_h,
            power,
            leak,
        })
    }

    /// Stability bound for the step size: the loss term decays the top node
    /// at rate `μ·r_max`.
    fn max_dt(&self) -> f64 {
        let rate = self.mu * self.grid.r_max();
        if rate > 0.0 {
            1.0 / rate
        } else {
            f64::INFINITY
        }
    }

    fn leak_rate(&self, values: &[f64]) -> f64 {
        self.leak.iter().zip(values).map(|(c, v)| c * v).sum()
    }

    fn rhs_into(&self, values: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        let nodes = self.grid.nodes();
        let n = nodes.len();
        let h = self.log_h;
        match &self.power {
            Some(tables) => {
                // scratch[j] = G(uⱼ) = ρⱼ^(1-α)·nⱼ, the log-space integrand
                // shared by every lower bound.
                for ((g, factor), value) in scratch.iter_mut().zip(&tables.r_gain).zip(values) {
                    *g = factor * value;
                }
                let top_slope = forward_slope(
                    scratch[n - 1],
                    scratch[n - 2],
                    scratch[n - 3],
                    scratch[n - 4],
                    -h,
                );
                let mut suffix = 0.0;
                for i in (0..n).rev() {
                    suffix += scratch[i];
                    let phi = if i + 4 <= n {
                        let start_slope = forward_slope(
                            scratch[i],
                            scratch[i + 1],
                            scratch[i + 2],
                            scratch[i + 3],
                            h,
                        );
                        h * (suffix - 0.5 * scratch[i] - 0.5 * scratch[n - 1])
                            + h * h / 12.0 * (start_slope - top_slope)
                    } else {
                        // fewer than 4 nodes above the cutoff: plain trapezoid
                        h * (suffix - 0.5 * scratch[i] - 0.5 * scratch[n - 1])
                    };
                    let gain = tables.coeff * tables.r_alpha[i] * phi;
                    out[i] = gain - self.mu * nodes[i] * values[i];
                }
            }
            None => {
                for i in 0..n {
                    // G(uⱼ) = P(rᵢ/ρⱼ)·ρⱼ·nⱼ for j ≥ i
                    for j in i..n {
                        scratch[j] =
                            self.kernel.eval(nodes[i] / nodes[j]).unwrap() * nodes[j] * values[j];
                    }
                    let span = n - i;
                    let total: f64 = scratch[i..n].iter().sum();
                    let mut phi = h * (total - 0.5 * scratch[i] - 0.5 * scratch[n - 1]);
                    if span >= 4 {
                        let start_slope = forward_slope(
                            scratch[i],
                            scratch[i + 1],
                            scratch[i + 2],
                            scratch[i + 3],
                            h,
                        );
                        let top_slope = forward_slope(
                            scratch[n - 1],
                            scratch[n - 2],
                            scratch[n - 3],
                            scratch[n - 4],
                            -h,
                        );
                        phi += h * h / 12.0 * (start_slope - top_slope);
                    }
                    out[i] = phi - self.mu * nodes[i] * values[i];
                }
            }
        }
    }
}

/// Reusable RK4 buffers; advances density and leaked volume together with
/// the same scheme.
struct Stepper {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
    scratch: Vec<f64>,
}

impl Stepper {
    fn new(n: usize) -> Self {
        Stepper {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
            scratch: vec![0.0; n],
        }
    }

    /// Advance `values` (and the leaked-volume integral) by one RK4 step.
    /// Returns the fragment count removed by clipping.
    fn advance(
        &mut self,
        ws: &Workspace,
        values: &mut [f64],
        v_lost: &mut f64,
        dt: f64,
        clip: bool,
    ) -> f64 {
        fn stage(tmp: &mut [f64], values: &[f64], rates: &[f64], step: f64) {
            for ((t, &v), &k) in tmp.iter_mut().zip(values).zip(rates) {
                *t = v + step * k;
            }
        }

        ws.rhs_into(values, &mut self.k1, &mut self.scratch);
        let l1 = ws.leak_rate(values);

        stage(&mut self.tmp, values, &self.k1, 0.5 * dt);
        ws.rhs_into(&self.tmp, &mut self.k2, &mut self.scratch);
        let l2 = ws.leak_rate(&self.tmp);

        stage(&mut self.tmp, values, &self.k2, 0.5 * dt);
        ws.rhs_into(&self.tmp, &mut self.k3, &mut self.scratch);
        let l3 = ws.leak_rate(&self.tmp);

        stage(&mut self.tmp, values, &self.k3, dt);
        ws.rhs_into(&self.tmp, &mut self.k4, &mut self.scratch);
        let l4 = ws.leak_rate(&self.tmp);

        let sixth = dt / 6.0;
        let mut clipped = 0.0;
        let weights = ws.grid.weights();
        for (i, value) in values.iter_mut().enumerate() {
            *value += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
            if clip && *value < 0.0 {
                clipped += weights[i] * (-*value);
                *value = 0.0;
            }
        }
        *v_lost += sixth * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
        clipped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn zero_kernel() -> Kernel {
        Kernel::tabulated(vec![0.0, 1.0], vec![0.0, 0.0]).unwrap()
    }

    fn constant_kernel(c: f64) -> Kernel {
        Kernel::tabulated(vec![0.0, 1.0], vec![c, c]).unwrap()
    }

    fn bump_state(grid: Arc<SizeGrid>, r0: f64, width: f64, volume: f64) -> DensityState {
        init_density(&InitialCondition::NarrowBump { r0, width }, grid, volume).unwrap()
    }

    fn default_grid() -> Arc<SizeGrid> {
        Arc::new(SizeGrid::logarithmic(1e-3, 10.0, 512).unwrap())
    }

    /// Per-node evaluation of the same end-corrected log-space rule, written
    /// without the suffix-sum reuse: oracle for the separable fast path.
    fn rhs_direct(state: &DensityState, kernel: &Kernel) -> Vec<f64> {
        let nodes = state.grid().nodes();
        let mu = kernel.mu().unwrap();
        let n = nodes.len();
        let h = state.grid().ratio().ln();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let g: Vec<f64> = (i..n)
                .map(|j| kernel.eval(nodes[i] / nodes[j]).unwrap() * nodes[j] * state.values()[j])
                .collect();
            let m = g.len();
            let mut phi = h * (g.iter().sum::<f64>() - 0.5 * g[0] - 0.5 * g[m - 1]);
            if m >= 4 {
                let lo = forward_slope(g[0], g[1], g[2], g[3], h);
                let hi = forward_slope(g[m - 1], g[m - 2], g[m - 3], g[m - 4], -h);
                phi += h * h / 12.0 * (lo - hi);
            }
            out[i] = phi - mu * nodes[i] * state.values()[i];
        }
        out
    }

    #[test]
    fn rhs_gain_matches_analytic_integral() {
        // Kernel P(x) = x against n(ρ) = ρ·e^(-ρ):
        // gain(r) = r·∫ᵣ^(rmax) e^(-ρ) dρ = r·(e^(-r) - e^(-rmax)) exactly.
        let grid = Arc::new(SizeGrid::logarithmic(1e-3, 40.0, 1024).unwrap());
        let values: Vec<f64> = grid.nodes().iter().map(|&r| r * (-r).exp()).collect();
        let state = DensityState::new(Arc::clone(&grid), values, 0.0).unwrap();
        let kernel = Kernel::power_law(1.0, 1.0).unwrap();
        let mu = kernel.mu().unwrap();
        let rates = rhs(&state, &kernel).unwrap();
        for (idx, &r) in grid.nodes().iter().enumerate() {
            if (0.01..10.0).contains(&r) {
                let gain_exact = r * ((-r).exp() - (-40.0f64).exp());
                let gain_num = rates[idx] + mu * r * state.values()[idx];
                assert_relative_eq!(gain_num, gain_exact, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn rhs_generic_path_agrees_with_separable_path() {
        // P(x) = C·x is exactly representable as a tabulated ramp, so the
        // O(n²) generic branch and the O(n) separable branch must agree.
        let grid = Arc::new(SizeGrid::logarithmic(1e-3, 10.0, 128).unwrap());
        let state = bump_state(Arc::clone(&grid), 1.0, 0.1, 1.0);
        let power = Kernel::power_law(1.0, 2.0).unwrap();
        let ramp = Kernel::tabulated(vec![0.0, 1.0], vec![0.0, 2.0]).unwrap();
        let a = rhs(&state, &power).unwrap();
        let b = rhs(&state, &ramp).unwrap();
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-11 * scale);
        }
    }

    #[test]
    fn rhs_of_zero_density_is_zero() {
        let grid = default_grid();
        let state = DensityState::new(grid, vec![0.0; 512], 0.0).unwrap();
        let kernel = Kernel::power_law(1.0, 1.0).unwrap();
        assert!(rhs(&state, &kernel).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rhs_loss_term_at_top_node() {
        // A spike at the top node has no gain (nothing above it), so the
        // rate there is exactly -mu * r_max * c.
        let grid = default_grid();
        let n = grid.len();
        let mut values = vec![0.0; n];
        let c = 3.0;
        values[n - 1] = c;
        let state = DensityState::new(Arc::clone(&grid), values, 0.0).unwrap();
        let kernel = Kernel::power_law(1.0, 1.0).unwrap();
        let rates = rhs(&state, &kernel).unwrap();
        let mu = kernel.mu().unwrap();
        assert_relative_eq!(rates[n - 1], -mu * grid.r_max() * c, max_relative = 1e-12);
    }

    #[test]
    fn rhs_separable_path_matches_direct_oracle() {
        let grid = Arc::new(SizeGrid::logarithmic(1e-3, 10.0, 128).unwrap());
        let state = bump_state(Arc::clone(&grid), 1.0, 0.3, 1.0);
        for kernel in [
            Kernel::power_law(1.0, 1.0).unwrap(),
            Kernel::power_law(0.5, 2.0).unwrap(),
            Kernel::power_law(3.0, 0.2).unwrap(),
        ] {
            let fast = rhs(&state, &kernel).unwrap();
            let slow = rhs_direct(&state, &kernel);
            let scale = slow.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in fast.iter().zip(&slow) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12 * scale);
            }
        }
    }

    #[test]
    fn rhs_gain_below_narrow_bump() {
        // For a constant kernel, the gain below a narrow bump of N fragments
        // equals N; for P(x) = C·x it equals N·C·r/r0 up to O(width²).
        let grid = default_grid();
        let state = bump_state(Arc::clone(&grid), 1.0, 0.02, 1.0);
        let n_frag = state.mellin_numeric(1.0).unwrap();

        // log-space and size-space trapezoids of the bump differ by
        // sinh(h)/h - 1 = h²/6 = 5.4e-5 at this resolution
        let rates = rhs(&state, &constant_kernel(1.0)).unwrap();
        let idx = grid.nodes().iter().position(|&r| r > 0.05).unwrap();
        assert_relative_eq!(rates[idx], n_frag, max_relative = 1e-4);

        let kernel = Kernel::power_law(1.0, 1.0).unwrap();
        let rates = rhs(&state, &kernel).unwrap();
        let r = grid.nodes()[idx];
        assert_relative_eq!(rates[idx], n_frag * r / 1.0, max_relative = 1e-3);
    }

    #[test]
    fn rhs_gain_sharpens_as_bump_narrows() {
        // The delta-limit value of the gain below the bump is N·P(r/r0);
        // narrowing the bump must shrink the deviation from it. The finite
        // width enters as exp(((1-α)²-1)·w²/2), so pick α away from 2 where
        // that factor is identically 1.
        let grid = default_grid();
        let kernel = Kernel::power_law(3.0, 1.0).unwrap();
        let idx = grid.nodes().iter().position(|&r| r > 0.1).unwrap();
        let r = grid.nodes()[idx];
        let deviation = |width: f64| -> f64 {
            let state = bump_state(Arc::clone(&grid), 1.0, width, 1.0);
            let n_frag = state.mellin_numeric(1.0).unwrap();
            let rates = rhs(&state, &kernel).unwrap();
            (rates[idx] / (n_frag * kernel.eval(r / 1.0).unwrap()) - 1.0).abs()
        };
        assert!(deviation(0.1) > 2.0 * deviation(0.03));
    }

    #[test]
    fn step_consistency_with_euler() {
        // ||step(dt) - (state + dt * rhs)|| shrinks like dt² as dt -> 0.
        let grid = Arc::new(SizeGrid::logarithmic(1e-3, 10.0, 64).unwrap());
        let state = bump_state(Arc::clone(&grid), 1.0, 0.3, 1.0);
        let kernel = Kernel::power_law(1.0, 1.0).unwrap();
        let rates = rhs(&state, &kernel).unwrap();

        let defect = |dt: f64| -> f64 {
            let (next, _) = step_rk4(&state, dt, &kernel, false).unwrap();
            next.values()
                .iter()
                .zip(state.values())
                .zip(&rates)
                .map(|((nv, ov), rate)| (nv - (ov + dt * rate)).abs())
                .fold(0.0f64, f64::max)
        };
        let d1 = defect(0.04);
        let d2 = defect(0.02);
        assert!(
            d1 > 3.0 * d2,
            "defect did not shrink quadratically: {d1:.3e} -> {d2:.3e}"
        );
    }

    #[test]
    fn step_zero_kernel_is_identity() {
        let grid = Arc::new(SizeGrid::logarithmic(1e-3, 10.0, 64).unwrap());
        let state = bump_state(Arc::clone(&grid), 1.0, 0.3, 1.0);
        let (next, clipped) = step_rk4(&state, 5.0, &zero_kernel(), true).unwrap();
        assert_eq!(next.values(), state.values());
        assert_eq!(clipped, 0.0);
    }

    #[test]
    fn run_zero_kernel_is_frozen() {
        let mut config = small_run_config();
        config.kernel = zero_kernel();
        let traj = run(&config).unwrap();
        assert_eq!(traj.steps, 0);
        assert_eq!(traj.points.len(), config.sample_times.len());
        let first = &traj.points[0].observables;
        for p in &traj.points {
            assert_eq!(p.observables.count, first.count);
            assert_eq!(p.observables.volume, first.volume);
            assert_eq!(p.volume_lost, 0.0);
        }
    }

    #[test]
    fn step_rejects_unstable_dt() {
        let grid = default_grid();
        let state = bump_state(Arc::clone(&grid), 1.0, 0.02, 1.0);
        let kernel = Kernel::power_law(1.0, 1.0).unwrap();
        // mu = 0.2, r_max = 10 -> bound 1/2
        let err = step_rk4(&state, 1.0, &kernel, true);
        assert!(matches!(err, Err(Error::StepSize { .. })));
        assert!(step_rk4(&state, 0.4, &kernel, true).is_ok());
    }

    #[test]
    fn step_conserves_volume_with_leak() {
        // One step at default resolution: |ΔM(4) + ΔV_lost| <= 1e-8·V.
        let grid = default_grid();
        let state = bump_state(Arc::clone(&grid), 1.0, 0.02, 1.0);
        let kernel = Kernel::power_law(1.0, 1.0).unwrap();
        let dt = 0.1 / (kernel.mu().unwrap() * grid.r_max());

        let ws = Workspace::new(&grid, &kernel).unwrap();
        let mut stepper = Stepper::new(grid.len());
        let mut values = state.values().to_vec();
        let mut v_lost = 0.0;
        stepper.advance(&ws, &mut values, &mut v_lost, dt, true);

        let next = DensityState::new_unchecked(Arc::clone(&grid), values, dt);
        let dv = next.mellin_numeric(4.0).unwrap() - state.mellin_numeric(4.0).unwrap();
        assert!(
            (dv + v_lost).abs() <= 1e-8,
            "volume defect per step = {:.3e}",
            (dv + v_lost).abs()
        );
    }

    #[test]
    fn subgrid_loss_closed_forms() {
        // Single fragment at r = 1, r_min = 0.1, constant kernel:
        // inner integral = 0.1⁴/4 = 2.5e-5.
        let grid = Arc::new(SizeGrid::logarithmic(0.1, 20.0, 128).unwrap());
        let state = bump_state(Arc::clone(&grid), 1.0, 0.02, 1.0);
        let n_frag = state.mellin_numeric(1.0).unwrap();
        let rate = subgrid_loss_rate(&state, &constant_kernel(1.0)).unwrap();
        assert_relative_eq!(rate, n_frag * 2.5e-5, max_relative = 1e-3);

        // zero density -> zero rate
        let empty = DensityState::new(Arc::clone(&grid), vec![0.0; 128], 0.0).unwrap();
        assert_eq!(
            subgrid_loss_rate(&empty, &constant_kernel(1.0)).unwrap(),
            0.0
        );
    }

    #[test]
    fn subgrid_loss_vanishes_with_r_min() {
        let kernel = Kernel::power_law(1.0, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for r_min in [1e-2, 1e-3, 1e-4] {
            let grid = Arc::new(SizeGrid::logarithmic(r_min, 10.0, 256).unwrap());
            let state = bump_state(Arc::clone(&grid), 1.0, 0.02, 1.0);
            let rate = subgrid_loss_rate(&state, &kernel).unwrap();
            assert!(rate < prev);
            prev = rate;
        }
        assert!(prev < 1e-12);
    }

    #[test]
    fn run_with_zero_t_end() {
        let config = SimulationConfig {
            kernel: Kernel::power_law(1.0, 1.0).unwrap(),
            grid: GridConfig {
                r_min: 1e-3,
                r_max: 10.0,
                nodes: 64,
            },
            initial: InitialCondition::NarrowBump {
                r0: 1.0,
                width: 0.02,
            },
            volume: 1.0,
            t_end: 0.0,
            sample_times: vec![],
            safety: 0.1,
            clip: true,
            store_snapshots: false,
        };
        let traj = run(&config).unwrap();
        assert_eq!(traj.points.len(), 1);
        assert_eq!(traj.steps, 0);
        assert_relative_eq!(traj.points[0].observables.volume, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn run_is_deterministic() {
        let config = small_run_config();
        let a = run(&config).unwrap();
        let b = run(&config).unwrap();
        assert_eq!(a.points.len(), b.points.len());
        for (pa, pb) in a.points.iter().zip(&b.points) {
            assert_eq!(
                pa.observables.count.to_bits(),
                pb.observables.count.to_bits()
            );
            assert_eq!(pa.volume_lost.to_bits(), pb.volume_lost.to_bits());
        }
    }

    #[test]
    fn run_times_increase_and_v_lost_monotone() {
        let traj = run(&small_run_config()).unwrap();
        for w in traj.points.windows(2) {
            assert!(w[1].observables.time > w[0].observables.time);
            assert!(w[1].volume_lost >= w[0].volume_lost);
        }
    }

    fn small_run_config() -> SimulationConfig {
        // The bump width is matched to the node spacing: quadratures of a
        // log-Gaussian stay accurate down to about one node per standard
        // deviation.
        SimulationConfig {
            kernel: Kernel::power_law(1.0, 1.0).unwrap(),
            grid: GridConfig {
                r_min: 1e-3,
                r_max: 10.0,
                nodes: 256,
            },
            initial: InitialCondition::NarrowBump {
                r0: 1.0,
                width: 0.1,
            },
            volume: 1.0,
            t_end: 20.0,
            sample_times: vec![0.0, 1.0, 5.0, 10.0, 20.0],
            safety: 0.1,
            clip: true,
            store_snapshots: true,
        }
    }

    #[test]
    fn run_constant_kernel_m3_is_linear() {
        // Constant kernel (p(3)-p(4)) = 1/3 - 1/4 = 1/12: the surface moment
        // grows linearly with slope V/12 while the leak stays negligible.
        let config = SimulationConfig {
            kernel: constant_kernel(1.0),
            grid: GridConfig {
                r_min: 1e-3,
                r_max: 10.0,
                nodes: 256,
            },
            initial: InitialCondition::NarrowBump {
                r0: 1.0,
                width: 0.05,
            },
            volume: 1.0,
            t_end: 12.0,
            sample_times: (0..=12).map(|i| i as f64).collect(),
            safety: 0.1,
            clip: true,
            store_snapshots: false,
        };
        let traj = run(&config).unwrap();
        assert!(traj.final_point().volume_lost < 1e-3);
        let ts: Vec<f64> = traj.times();
        let m3: Vec<f64> = traj.points.iter().map(|p| p.observables.surface).collect();
        let (slope, _) = crate::fit::linear_fit(&ts, &m3).unwrap();
        assert_relative_eq!(slope, 1.0 / 12.0, max_relative = 0.01);
    }

    #[test]
    fn run_conserves_volume() {
        let traj = run(&small_run_config()).unwrap();
        let v0 = traj.points[0].observables.volume;
        for p in &traj.points {
            let residual = (p.observables.volume + p.volume_lost - v0).abs();
            assert!(
                residual <= 1e-4 * v0,
                "conservation residual {residual:.3e} at t = {}",
                p.observables.time
            );
        }
    }

    #[test]
    fn config_validation() {
        let mut config = small_run_config();
        config.safety = 0.0;
        assert!(matches!(run(&config), Err(Error::Config(_))));
        let mut config = small_run_config();
        config.sample_times = vec![5.0, 1.0];
        assert!(matches!(run(&config), Err(Error::Config(_))));
        let mut config = small_run_config();
        config.sample_times = vec![0.0, 25.0];
        assert!(matches!(run(&config), Err(Error::Config(_))));
        let mut config = small_run_config();
        config.volume = -1.0;
        assert!(matches!(run(&config), Err(Error::Config(_))));
    }
}

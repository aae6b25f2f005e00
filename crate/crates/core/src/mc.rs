//! Event-driven stochastic branching process whose ensemble mean realizes
//! the kinetic equation; an independent cross-check on the deterministic
//! solver and the closed-form moment laws.
//!
//! # Algorithm
//!
//! 1. Each fragment of size `r` decays independently at rate `μ·r`, so the
//!    waiting time to the next event is exponential with rate `μ·Σrᵢ` and
//!    the decaying parent is chosen with probability proportional to its
//!    size.
//! 2. A decay replaces the parent by `K ~ Poisson(p(1)/p(4))` daughters of
//!    sizes `r·X`, with `X` drawn i.i.d. from the normalized splinter law
//!    `P(x)/p(1) = (α+1)·x^α`. This makes daughter placements a Poisson
//!    process with intensity `P(ρ/r)/(μ·r)` per decay, matching the kinetic
//!    equation exactly in expectation; volume is conserved in expectation
//!    only.
//! 3. The fragment count grows like `t³`, so when the stored population
//!    exceeds the cap, every fragment is kept with probability 1/2 and the
//!    statistical weight doubles. This halving is unbiased for all linear
//!    observables (counts, surface, volume, histograms).
//!
//! Daughters below the size floor are retired immediately and their volume
//! accumulated in `frozen_volume`, mirroring the solver's `volume_lost`.
//!
//! Parent selection inverts a running prefix sum over the size array;
//! removed fragments leave tombstones whose stale prefix mass is handled by
//! rejection, and the array is compacted once tombstones hold half the
//! mass. Replicas own independent RNG streams derived from (seed, replica
//! index), so they can run concurrently and merge order-independently.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Kernel;

/// Configuration of a Monte Carlo ensemble run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    /// Power-law kernels only: daughter sampling uses the closed-form
    /// inverse CDF `x = u^(1/(α+1))`.
    pub kernel: Kernel,
    pub initial: McInitial,
    pub t_end: f64,
    /// Times at which weighted observables and histograms are recorded.
    pub sample_times: Vec<f64>,
    /// Stored-population cap that triggers halving (weighted counts are
    /// unaffected in expectation).
    #[serde(default = "default_cap")]
    pub cap: usize,
    /// Fragments below this size are retired into `frozen_volume`.
    #[serde(default = "default_floor")]
    pub r_floor: f64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    pub seed: u64,
    /// Worker threads for replica execution; results are identical for any
    /// value because each replica owns its RNG stream.
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default = "default_bins")]
    pub hist_bins: usize,
}

/// Initial fragment sizes of one replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum McInitial {
    Monodisperse { count: usize, size: f64 },
    List { sizes: Vec<f64> },
}

impl McInitial {
    fn sizes(&self) -> Vec<f64> {
        match self {
            McInitial::Monodisperse { count, size } => vec![*size; *count],
            McInitial::List { sizes } => sizes.clone(),
        }
    }
}

fn default_cap() -> usize {
    1_000_000
}

fn default_floor() -> f64 {
    1e-9
}

fn default_replicas() -> usize {
    1
}

fn default_threads() -> usize {
    1
}

fn default_bins() -> usize {
    64
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !matches!(self.kernel, Kernel::PowerLaw { .. }) {
            return Err(Error::config(
                "Monte Carlo runs support power-law kernels only",
            ));
        }
        if self.cap < 100 {
            return Err(Error::config(format!(
                "population cap must be at least 100, got {}",
                self.cap
            )));
        }
        if !self.r_floor.is_finite() || self.r_floor <= 0.0 {
            return Err(Error::config(format!(
                "size floor must be positive, got {}",
                self.r_floor
            )));
        }
        if self.replicas == 0 || self.threads == 0 {
            return Err(Error::config("replica and thread counts must be positive"));
        }
        if self.hist_bins < 2 {
            return Err(Error::config("histograms need at least 2 bins"));
        }
        if !self.t_end.is_finite() || self.t_end < 0.0 {
            return Err(Error::config(format!(
                "end time must be >= 0, got {}",
                self.t_end
            )));
        }
        if self.sample_times.is_empty() {
            return Err(Error::config("at least one sample time is required"));
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
        let sizes = self.initial.sizes();
        if sizes.is_empty() {
            return Err(Error::config("initial population must be nonempty"));
        }
        if sizes.iter().any(|&s| !s.is_finite() || s <= self.r_floor) {
            return Err(Error::config(
                "initial sizes must be finite and above the size floor",
            ));
        }
        Ok(())
    }
}

/// Draw from the normalized splinter-size law `(α+1)·x^α` on `(0, 1)` by
/// inverse CDF: `x = u^(1/(α+1))`. `α = 0` (uniform) is allowed here for
/// oracle checks even though kernels require `α > 0`.
pub fn sample_daughter_fraction(alpha: f64, u: f64) -> f64 {
    debug_assert!(alpha >= 0.0);
    debug_assert!(u > 0.0 && u < 1.0 || u == 0.0 || u == 1.0);
    u.powf(1.0 / (alpha + 1.0))
}

/// Weighted multiset of fragment sizes with its own RNG stream.
#[derive(Debug, Clone)]
pub struct Population {
    /// Fragment sizes; zero entries are tombstones of removed parents.
    sizes: Vec<f64>,
    /// Prefix sums of sizes at push time (stale over tombstones).
    cumsum: Vec<f64>,
    live_count: usize,
    live_size: f64,
    /// Running `Σrᵢ³`; re-summed exactly at every rebuild.
    live_volume: f64,
    dead_size: f64,
    weight: f64,
    time: f64,
    frozen_volume: f64,
    r_floor: f64,
    events: u64,
    rng: ChaCha8Rng,
}

impl Population {
    /// Start a population at `t = 0` from explicit sizes, with the RNG
    /// stream derived from `(seed, stream)`.
    pub fn new(initial: &[f64], r_floor: f64, seed: u64, stream: u64) -> Result<Self> {
        if r_floor <= 0.0 || !r_floor.is_finite() {
            return Err(Error::config(format!(
                "size floor must be positive, got {r_floor}"
            )));
        }
        if initial.iter().any(|&s| !s.is_finite() || s <= 0.0) {
            return Err(Error::config("fragment sizes must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut pop = Population {
            sizes: Vec::new(),
            cumsum: Vec::new(),
            live_count: 0,
            live_size: 0.0,
            live_volume: 0.0,
            dead_size: 0.0,
            weight: 1.0,
            time: 0.0,
            frozen_volume: 0.0,
            r_floor,
            events: 0,
            rng,
        };
        for &s in initial {
            pop.push(s);
        }
        Ok(pop)
    }

    fn push(&mut self, size: f64) {
        let total = self.cumsum.last().copied().unwrap_or(0.0);
        self.sizes.push(size);
        self.cumsum.push(total + size);
        self.live_count += 1;
        self.live_size += size;
        self.live_volume += size * size * size;
    }

    fn remove(&mut self, idx: usize) {
        let size = self.sizes[idx];
        self.sizes[idx] = 0.0;
        self.live_count -= 1;
        self.live_size -= size;
        self.live_volume -= size * size * size;
        self.dead_size += size;
    }

    /// Compact tombstones and recompute the running sums exactly.
    fn rebuild(&mut self) {
        self.sizes.retain(|&s| s > 0.0);
        self.cumsum.clear();
        let mut total = 0.0;
        let mut live = 0.0;
        let mut volume = 0.0;
        for &s in &self.sizes {
            total += s;
            self.cumsum.push(total);
            live += s;
            volume += s * s * s;
        }
        self.live_size = live;
        self.live_volume = volume;
        self.dead_size = 0.0;
        self.live_count = self.sizes.len();
    }

    /// Size-biased parent choice: invert the prefix sum, rejecting draws
    /// that land on tombstones (at most half the mass by construction).
    fn select_parent(&mut self) -> usize {
        let mut attempts = 0u32;
        loop {
            let total = *self.cumsum.last().expect("population is nonempty");
            let v = self.rng.random::<f64>() * total;
            let idx = self.cumsum.partition_point(|&c| c <= v);
            let idx = idx.min(self.sizes.len() - 1);
            if self.sizes[idx] > 0.0 {
                return idx;
            }
            attempts += 1;
            if attempts > 1000 {
                self.rebuild();
                attempts = 0;
            }
        }
    }

    /// Apply one decay: remove a size-biased parent and append its Poisson
    /// brood. No-op returning `false` when the population is empty.
    pub fn decay_event(&mut self, kernel: &Kernel) -> Result<bool> {
        let Kernel::PowerLaw { alpha, .. } = kernel else {
            return Err(Error::config(
                "Monte Carlo decay events support power-law kernels only",
            ));
        };
        if self.live_count == 0 {
            return Ok(false);
        }
        let mean_daughters = kernel.splinter_mean_count()?;
        let parent_idx = self.select_parent();
        let parent = self.sizes[parent_idx];
        self.remove(parent_idx);

        let brood = poisson(&mut self.rng, mean_daughters);
        for _ in 0..brood {
            let u = self.rng.random::<f64>();
            let daughter = parent * sample_daughter_fraction(*alpha, u);
            if daughter < self.r_floor {
                self.frozen_volume += self.weight * daughter.powi(3);
            } else {
                self.push(daughter);
            }
        }
        self.events += 1;
        if self.dead_size > self.live_size {
            self.rebuild();
        }
        Ok(true)
    }

    /// Keep each fragment with probability 1/2 and double the statistical
    /// weight, repeating until the stored count is within `cap`. Unbiased
    /// for every linear observable.
    pub fn enforce_cap(&mut self, cap: usize) {
        while self.live_count > cap {
            self.rebuild();
            let mut kept = Vec::with_capacity(self.sizes.len() / 2 + 1);
            for &s in &self.sizes {
                if self.rng.random::<f64>() < 0.5 {
                    kept.push(s);
                }
            }
            self.sizes = kept;
            self.weight *= 2.0;
            self.rebuild();
        }
    }

    pub fn live_count(&self) -> usize {
        self.live_count
    }

    /// Weighted fragment count `w·|sizes|`.
    pub fn weighted_count(&self) -> f64 {
        self.weight * self.live_count as f64
    }

    /// Weighted total surface `w·Σrᵢ²`.
    pub fn weighted_surface(&self) -> f64 {
        self.weight * self.sizes.iter().map(|r| r * r).sum::<f64>()
    }

    /// Weighted total volume `w·Σrᵢ³` (maintained incrementally).
    pub fn weighted_volume(&self) -> f64 {
        self.weight * self.live_volume
    }

    pub fn total_size(&self) -> f64 {
        self.live_size
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn frozen_volume(&self) -> f64 {
        self.frozen_volume
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Weighted histogram of the live sizes over the given bin edges.
    fn histogram(&self, edges: &[f64]) -> Vec<f64> {
        let bins = edges.len() - 1;
        let lo = edges[0].ln();
        let hi = edges[bins].ln();
        let mut counts = vec![0.0; bins];
        for &s in &self.sizes {
            if s <= 0.0 {
                continue;
            }
            let frac = (s.ln() - lo) / (hi - lo);
            let idx = ((frac * bins as f64) as isize).clamp(0, bins as isize - 1) as usize;
            counts[idx] += self.weight;
        }
        counts
    }

    fn exponential_wait(&mut self, rate: f64) -> f64 {
        let u = 1.0 - self.rng.random::<f64>(); // (0, 1]
        -u.ln() / rate
    }
}

/// Poisson sampler by Knuth's product method; exact for the small means
/// used here (`p(1)/p(4) < 4` for every power-law kernel).
fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    let limit = (-mean).exp();
    let mut k = 0u64;
    let mut product = rng.random::<f64>();
    while product > limit {
        k += 1;
        product *= rng.random::<f64>();
    }
    k
}

/// Weighted observables of one replica at one sample time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSample {
    pub time: f64,
    /// Weighted fragment count.
    pub count: f64,
    /// Weighted total surface `Σr²`.
    pub surface: f64,
    /// Weighted total volume `Σr³`.
    pub volume: f64,
    /// Weighted volume retired below the size floor.
    pub frozen_volume: f64,
}

/// Weighted size histogram at one sample time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub time: f64,
    /// `bins + 1` log-spaced edges.
    pub edges: Vec<f64>,
    /// Weighted count per bin.
    pub counts: Vec<f64>,
}

/// Output of a single replica.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaSeries {
    pub replica: usize,
    pub samples: Vec<McSample>,
    pub histograms: Vec<Histogram>,
    /// Set when the population died out before `t_end`; later samples hold
    /// the empty-population values so replica series stay aligned.
    pub extinct_at: Option<f64>,
    pub events: u64,
}

/// Ensemble statistics at one sample time: per-replica means with standard
/// errors for the conservation checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McAggregate {
    pub time: f64,
    pub count: f64,
    pub surface: f64,
    pub volume: f64,
    pub frozen_volume: f64,
    /// Standard error of the replica volumes (0 for a single replica).
    pub volume_sem: f64,
    /// Standard error of the replica counts (0 for a single replica).
    pub count_sem: f64,
}

/// Full result of an ensemble run.
#[derive(Debug, Clone, PartialEq)]
pub struct McRun {
    pub replicas: Vec<ReplicaSeries>,
    pub merged: Vec<McAggregate>,
    pub merged_histograms: Vec<Histogram>,
}

/// Simulate one replica to `t_end`, recording weighted observables at the
/// sample times. Deterministic for a fixed `(seed, replica)` pair.
pub fn run_replica(config: &McConfig, replica: usize) -> Result<ReplicaSeries> {
    config.validate()?;
    let initial = config.initial.sizes();
    let mut pop = Population::new(&initial, config.r_floor, config.seed, replica as u64)?;
    let mu = config.kernel.mu()?;

    let size_max = initial.iter().cloned().fold(f64::MIN, f64::max);
    let edges = log_edges(config.r_floor, size_max, config.hist_bins);

    let mut samples = Vec::with_capacity(config.sample_times.len());
    let mut histograms = Vec::new();
    let mut extinct_at = None;
    let mut next_sample = 0;

    let mut record = |pop: &Population, time: f64, histograms: &mut Vec<Histogram>| {
        samples.push(McSample {
            time,
            count: pop.weighted_count(),
            surface: pop.weighted_surface(),
            volume: pop.weighted_volume(),
            frozen_volume: pop.frozen_volume(),
        });
        histograms.push(Histogram {
            time,
            edges: edges.clone(),
            counts: pop.histogram(&edges),
        });
    };

    while next_sample < config.sample_times.len() {
        let rate = mu * pop.total_size();
        if pop.live_count() == 0 || rate <= 0.0 {
            if extinct_at.is_none() {
                extinct_at = Some(pop.time);
            }
            while next_sample < config.sample_times.len() {
                record(&pop, config.sample_times[next_sample], &mut histograms);
                next_sample += 1;
            }
            break;
        }
        let wait = pop.exponential_wait(rate);
        let t_next = pop.time + wait;
        // The state is piecewise constant: flush samples before the event.
        while next_sample < config.sample_times.len() && config.sample_times[next_sample] < t_next {
            record(&pop, config.sample_times[next_sample], &mut histograms);
            next_sample += 1;
        }
        if t_next > config.t_end {
            pop.time = config.t_end;
            break;
        }
        pop.time = t_next;
        pop.decay_event(&config.kernel)?;
        pop.enforce_cap(config.cap);
    }

    Ok(ReplicaSeries {
        replica,
        samples,
        histograms,
        extinct_at,
        events: pop.events(),
    })
}

/// Run the whole ensemble (optionally across threads) and merge.
pub fn gillespie_run(config: &McConfig) -> Result<McRun> {
    config.validate()?;
    let mut replicas: Vec<ReplicaSeries> = if config.threads <= 1 || config.replicas == 1 {
        (0..config.replicas)
            .map(|r| run_replica(config, r))
            .collect::<Result<_>>()?
    } else {
        let workers = config.threads.min(config.replicas);
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    scope.spawn(move || {
                        (w..config.replicas)
                            .step_by(workers)
                            .map(|r| run_replica(config, r))
                            .collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            let mut all = Vec::with_capacity(config.replicas);
            for handle in handles {
                all.extend(handle.join().expect("replica worker panicked")?);
            }
            Ok::<_, Error>(all)
        })?
    };
    replicas.sort_by_key(|r| r.replica);
    let (merged, merged_histograms) = merge(&replicas);
    Ok(McRun {
        replicas,
        merged,
        merged_histograms,
    })
}

/// Merge replica series into ensemble means (and standard errors).
///
/// Replicas are folded in ascending replica order regardless of the input
/// order, so any permutation of the same series produces identical output.
/// All series must come from the same config (same sample grid).
pub fn merge(replicas: &[ReplicaSeries]) -> (Vec<McAggregate>, Vec<Histogram>) {
    let mut order: Vec<&ReplicaSeries> = replicas.iter().collect();
    order.sort_by_key(|r| r.replica);
    let Some(first) = order.first() else {
        return (Vec::new(), Vec::new());
    };
    let n_samples = first.samples.len();
    let n_reps = order.len() as f64;

    let mut aggregates = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let time = first.samples[i].time;
        let mut sums = [0.0f64; 4];
        for rep in &order {
            let s = &rep.samples[i];
            sums[0] += s.count;
            sums[1] += s.surface;
            sums[2] += s.volume;
            sums[3] += s.frozen_volume;
        }
        let mean_count = sums[0] / n_reps;
        let mean_volume = sums[2] / n_reps;
        let (mut var_v, mut var_n) = (0.0, 0.0);
        for rep in &order {
            let s = &rep.samples[i];
            var_v += (s.volume - mean_volume) * (s.volume - mean_volume);
            var_n += (s.count - mean_count) * (s.count - mean_count);
        }
        let sem = |var: f64| {
            if order.len() > 1 {
                (var / (n_reps * (n_reps - 1.0))).sqrt()
            } else {
                0.0
            }
        };
        aggregates.push(McAggregate {
            time,
            count: mean_count,
            surface: sums[1] / n_reps,
            volume: mean_volume,
            frozen_volume: sums[3] / n_reps,
            volume_sem: sem(var_v),
            count_sem: sem(var_n),
        });
    }

    let mut histograms = Vec::with_capacity(first.histograms.len());
    for i in 0..first.histograms.len() {
        let template = &first.histograms[i];
        let mut counts = vec![0.0; template.counts.len()];
        for rep in &order {
            for (acc, c) in counts.iter_mut().zip(&rep.histograms[i].counts) {
                *acc += c;
            }
        }
        for c in &mut counts {
            *c /= n_reps;
        }
        histograms.push(Histogram {
            time: template.time,
            edges: template.edges.clone(),
            counts,
        });
    }

    (aggregates, histograms)
}

fn log_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let log_lo = lo.ln();
    let log_hi = hi.ln();
    let step = (log_hi - log_lo) / bins as f64;
    let mut edges: Vec<f64> = (0..=bins)
        .map(|i| (log_lo + i as f64 * step).exp())
        .collect();
    edges[0] = lo;
    edges[bins] = hi;
    edges
}
